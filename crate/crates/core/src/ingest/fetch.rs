//! Link resolution through an injected fetcher, with a write-once page
//! cache and a replayable fixture implementation.
//!
//! The pipeline never talks to the network directly: a [`Fetcher`] answers
//! one URL at a time, [`resolve_and_fetch`] follows redirect chains, and
//! [`PageCache`] memoizes results by requested URL so reruns are pure
//! cache hits. [`ReplayFetcher`] serves recorded `pages.csv` fixtures in
//! place of the network.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// Outcome of fetching one URL, before redirect handling.
#[derive(Debug, Clone)]
pub enum FetchStep {
    /// A terminal payload served at this URL.
    Body { status: u16, body: Vec<u8> },
    /// An HTTP redirect to another location.
    Redirect { location: String },
    /// Connection-level failure.
    NetworkError,
}

/// Single-request page source. Implementations must be safe to call from
/// multiple threads.
pub trait Fetcher: Sync {
    fn fetch(&self, url: &str) -> FetchStep;
}

/// Terminal status of a resolved fetch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FetchStatus {
    Ok,
    HttpError(u16),
    Timeout,
    TooManyRedirects,
}

impl FetchStatus {
    pub fn encode(self) -> String {
        match self {
            FetchStatus::Ok => "ok".to_string(),
            FetchStatus::HttpError(code) => format!("http_error:{code}"),
            FetchStatus::Timeout => "timeout".to_string(),
            FetchStatus::TooManyRedirects => "too_many_redirects".to_string(),
        }
    }

    pub fn decode(s: &str) -> Result<Self> {
        if s == "ok" {
            Ok(FetchStatus::Ok)
        } else if s == "timeout" {
            Ok(FetchStatus::Timeout)
        } else if s == "too_many_redirects" {
            Ok(FetchStatus::TooManyRedirects)
        } else if let Some(code) = s.strip_prefix("http_error:") {
            Ok(FetchStatus::HttpError(code.parse().map_err(|_| {
                Error::Pipeline(format!("bad status code in {s:?}"))
            })?))
        } else {
            Err(Error::Pipeline(format!("unknown fetch status {s:?}")))
        }
    }
}

/// A resolved fetch: where the chain ended and what it returned.
/// `body` is present exactly when `status` is `Ok`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchResult {
    pub requested_url: String,
    pub final_url: String,
    pub status: FetchStatus,
    pub body: Option<Vec<u8>>,
}

/// Follows redirect chains up to `max_redirects` hops, detecting loops by
/// a revisited-URL set.
pub fn resolve_and_fetch(url: &str, fetcher: &dyn Fetcher, max_redirects: usize) -> FetchResult {
    let mut current = url.to_string();
    let mut visited: HashSet<String> = HashSet::new();
    let mut hops = 0usize;
    loop {
        if !visited.insert(current.clone()) {
            return FetchResult {
                requested_url: url.to_string(),
                final_url: current,
                status: FetchStatus::TooManyRedirects,
                body: None,
            };
        }
        match fetcher.fetch(&current) {
            FetchStep::Body { status, body } => {
                let ok = (200..300).contains(&status);
                return FetchResult {
                    requested_url: url.to_string(),
                    final_url: current,
                    status: if ok {
                        FetchStatus::Ok
                    } else {
                        FetchStatus::HttpError(status)
                    },
                    body: ok.then_some(body),
                };
            }
            FetchStep::Redirect { location } => {
                hops += 1;
                let target = match url::Url::parse(&current)
                    .ok()
                    .and_then(|base| base.join(&location).ok())
                {
                    Some(joined) => joined.to_string(),
                    None => location,
                };
                if hops > max_redirects {
                    return FetchResult {
                        requested_url: url.to_string(),
                        final_url: target,
                        status: FetchStatus::TooManyRedirects,
                        body: None,
                    };
                }
                current = target;
            }
            FetchStep::NetworkError => {
                return FetchResult {
                    requested_url: url.to_string(),
                    final_url: current,
                    status: FetchStatus::Timeout,
                    body: None,
                };
            }
        }
    }
}

/// Write-once cache of resolved fetches, keyed by requested URL.
#[derive(Default)]
pub struct PageCache {
    entries: Mutex<BTreeMap<String, Arc<FetchResult>>>,
}

impl PageCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, url: &str) -> Option<Arc<FetchResult>> {
        self.entries.lock().expect("cache lock").get(url).cloned()
    }

    /// Inserts a result unless one is already present; the first write
    /// wins and later writes never change a stored entry.
    pub fn insert(&self, result: FetchResult) -> Arc<FetchResult> {
        let mut entries = self.entries.lock().expect("cache lock");
        entries
            .entry(result.requested_url.clone())
            .or_insert_with(|| Arc::new(result))
            .clone()
    }

    /// Returns the cached result or resolves the URL through `fetcher`.
    pub fn get_or_fetch(
        &self,
        url: &str,
        fetcher: &dyn Fetcher,
        max_redirects: usize,
    ) -> Arc<FetchResult> {
        if let Some(hit) = self.get(url) {
            return hit;
        }
        // Fetch outside the lock; on a race the first insert wins.
        let result = resolve_and_fetch(url, fetcher, max_redirects);
        self.insert(result)
    }

    /// All entries sorted by requested URL.
    pub fn entries(&self) -> Vec<Arc<FetchResult>> {
        self.entries
            .lock()
            .expect("cache lock")
            .values()
            .cloned()
            .collect()
    }

    /// Loads a cache directory (`pages.csv` plus body files).
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let index = dir.join("pages.csv");
        let mut reader = csv::Reader::from_path(&index).map_err(|e| {
            Error::Pipeline(format!("cannot read {}: {e}", index.display()))
        })?;
        let cache = PageCache::new();
        for record in reader.records() {
            let record =
                record.map_err(|e| Error::Pipeline(format!("bad pages.csv row: {e}")))?;
            if record.len() != 4 {
                return Err(Error::Pipeline(format!(
                    "pages.csv row has {} fields, expected 4",
                    record.len()
                )));
            }
            let status = FetchStatus::decode(&record[2])?;
            let body = if status == FetchStatus::Ok {
                let body_path = dir.join(&record[3]);
                Some(fs::read(&body_path).map_err(|e| Error::io(&body_path, e))?)
            } else {
                None
            };
            cache.insert(FetchResult {
                requested_url: record[0].to_string(),
                final_url: record[1].to_string(),
                status,
                body,
            });
        }
        Ok(cache)
    }

    /// Writes `pages.csv` and one content-hash-named body file per fetched
    /// page into `dir`.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        let bodies = dir.join("bodies");
        fs::create_dir_all(&bodies).map_err(|e| Error::io(&bodies, e))?;
        let index = dir.join("pages.csv");
        let mut writer =
            csv::Writer::from_path(&index).map_err(|e| Error::Pipeline(e.to_string()))?;
        writer
            .write_record(["requested_url", "final_url", "status", "body_file"])
            .map_err(|e| Error::Pipeline(e.to_string()))?;
        for entry in self.entries() {
            let body_file = match &entry.body {
                Some(body) => {
                    let name = format!("bodies/{}", content_hash(body));
                    let path = dir.join(&name);
                    if !path.exists() {
                        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
                    }
                    name
                }
                None => String::new(),
            };
            writer
                .write_record([
                    entry.requested_url.as_str(),
                    entry.final_url.as_str(),
                    &entry.status.encode(),
                    &body_file,
                ])
                .map_err(|e| Error::Pipeline(e.to_string()))?;
        }
        writer.flush().map_err(|e| Error::io(&index, e))?;
        Ok(())
    }
}

/// Hex SHA-256 of a page body, used to name body files.
pub fn content_hash(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Resolves every URL not already cached, with bounded parallelism.
/// Results are independent of completion order. Returns the number of
/// URLs actually fetched.
pub fn fetch_batch(
    cache: &PageCache,
    urls: &[String],
    fetcher: &dyn Fetcher,
    max_redirects: usize,
    parallelism: usize,
) -> usize {
    let pending: Vec<&String> = urls.iter().filter(|u| cache.get(u).is_none()).collect();
    if pending.is_empty() {
        return 0;
    }
    let workers = parallelism.max(1).min(pending.len());
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= pending.len() {
                    break;
                }
                cache.get_or_fetch(pending[i], fetcher, max_redirects);
            });
        }
    });
    pending.len()
}

enum Route {
    Body { status: u16, body: Vec<u8> },
    Redirect(String),
    NetworkError,
}

/// Serves recorded fetch results in place of the network.
///
/// A recorded redirect (`final_url` differing from `requested_url`) is
/// replayed as one hop so resolution still exercises the redirect path;
/// recorded redirect-loop failures replay as self-redirects.
pub struct ReplayFetcher {
    routes: HashMap<String, Route>,
}

impl ReplayFetcher {
    pub fn from_cache(cache: &PageCache) -> Self {
        let mut routes: HashMap<String, Route> = HashMap::new();
        for entry in cache.entries() {
            let terminal = match entry.status {
                FetchStatus::Ok => Route::Body {
                    status: 200,
                    body: entry.body.clone().unwrap_or_default(),
                },
                FetchStatus::HttpError(code) => Route::Body {
                    status: code,
                    body: Vec::new(),
                },
                FetchStatus::Timeout => Route::NetworkError,
                FetchStatus::TooManyRedirects => {
                    routes
                        .entry(entry.requested_url.clone())
                        .or_insert(Route::Redirect(entry.requested_url.clone()));
                    continue;
                }
            };
            if entry.final_url != entry.requested_url {
                routes
                    .entry(entry.requested_url.clone())
                    .or_insert(Route::Redirect(entry.final_url.clone()));
                routes.entry(entry.final_url.clone()).or_insert(terminal);
            } else {
                routes.entry(entry.requested_url.clone()).or_insert(terminal);
            }
        }
        ReplayFetcher { routes }
    }

    pub fn load_dir(dir: &Path) -> Result<Self> {
        Ok(Self::from_cache(&PageCache::load_dir(dir)?))
    }
}

impl Fetcher for ReplayFetcher {
    fn fetch(&self, url: &str) -> FetchStep {
        match self.routes.get(url) {
            Some(Route::Body { status, body }) => FetchStep::Body {
                status: *status,
                body: body.clone(),
            },
            Some(Route::Redirect(to)) => FetchStep::Redirect {
                location: to.clone(),
            },
            Some(Route::NetworkError) | None => FetchStep::NetworkError,
        }
    }
}
