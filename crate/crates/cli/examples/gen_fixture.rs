//! Regenerates the bundled synthetic fixture under `fixtures/`.
//!
//! The fixture stands in for a real harvest: two party archives, a
//! recorded page set (articles from three distinct word pools, plus
//! shorteners, dead links, binaries and stubs), a run configuration and a
//! topic labeling derived from the fitted topics. Everything is seeded,
//! so regeneration is reproducible:
//!
//! ```text
//! cargo run -p framecount-cli --example gen_fixture
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Duration, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use framecount::config::AnalysisConfig;
use framecount::ingest::{serialize_archive, FetchResult, FetchStatus, PageCache, Party, Post};
use framecount::pipeline;

const SEED: u64 = 20_140_525;
const DEM_ACCOUNT: &str = "demparty";
const REP_ACCOUNT: &str = "gopparty";
const POSTS_PER_PARTY: usize = 150;
const STORY_COUNT: usize = 60;

const EPISODIC_POOL: [&str; 30] = [
    "campaign",
    "rally",
    "candidate",
    "announcement",
    "poll",
    "frontrunner",
    "voters",
    "crowd",
    "speech",
    "tour",
    "debate",
    "stage",
    "supporters",
    "surge",
    "momentum",
    "race",
    "battleground",
    "stump",
    "endorsement",
    "kickoff",
    "volunteers",
    "victory",
    "trail",
    "event",
    "turnout",
    "cheering",
    "barnstorm",
    "arena",
    "hometown",
    "swing",
];

const THEMATIC_POOL: [&str; 30] = [
    "insurance",
    "healthcare",
    "premiums",
    "coverage",
    "unemployment",
    "economy",
    "policy",
    "budget",
    "deficit",
    "analysis",
    "report",
    "research",
    "benefits",
    "costs",
    "reform",
    "legislation",
    "taxes",
    "spending",
    "program",
    "enrollment",
    "statistics",
    "growth",
    "wages",
    "employment",
    "study",
    "projection",
    "evidence",
    "funding",
    "medicaid",
    "exchanges",
];

const JUNK_POOL: [&str; 30] = [
    "click",
    "subscribe",
    "gallery",
    "photo",
    "slideshow",
    "loading",
    "javascript",
    "browser",
    "cookies",
    "advertisement",
    "share",
    "login",
    "signup",
    "video",
    "player",
    "embed",
    "widget",
    "copyright",
    "terms",
    "privacy",
    "newsletter",
    "sidebar",
    "download",
    "app",
    "install",
    "update",
    "popup",
    "banner",
    "sponsored",
    "trending",
];

const TWEET_WORDS: [&str; 24] = [
    "big", "news", "today", "our", "team", "keeps", "working", "hard", "for", "families",
    "across", "the", "country", "read", "this", "story", "about", "what", "comes", "next",
    "join", "us", "here", "now",
];

#[derive(Clone, Copy, PartialEq)]
enum Pool {
    Episodic,
    Thematic,
    Junk,
}

impl Pool {
    fn words(self) -> &'static [&'static str] {
        match self {
            Pool::Episodic => &EPISODIC_POOL,
            Pool::Thematic => &THEMATIC_POOL,
            Pool::Junk => &JUNK_POOL,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Pool::Episodic => "episodic",
            Pool::Thematic => "thematic",
            Pool::Junk => "unparsable",
        }
    }
}

fn article_html(rng: &mut ChaCha8Rng, title: &str, pool: Pool, words: usize) -> String {
    let body: Vec<&str> = (0..words)
        .map(|_| {
            let pool_words = pool.words();
            pool_words[rng.random_range(0..pool_words.len())]
        })
        .collect();
    format!(
        "<html><head><title>{title}</title><style>body{{margin:0}}</style></head>\
         <body><nav><a href=\"/\">Home</a> <a href=\"/politics\">Politics</a></nav>\
         <article><h1>{title}</h1><p>{}</p></article>\
         <script>window.track&&window.track();</script></body></html>",
        body.join(" ")
    )
}

struct PageSet {
    cache: PageCache,
    /// URL -> word pool of the page behind it (for count generation).
    pool_of: BTreeMap<String, Pool>,
    /// URLs used in posts: (url, weight bucket name).
    linkable: Vec<String>,
    /// URLs intentionally absent from the fixture.
    missing: Vec<String>,
}

fn build_pages(rng: &mut ChaCha8Rng) -> PageSet {
    let cache = PageCache::new();
    let mut pool_of = BTreeMap::new();
    let mut linkable = Vec::new();

    let mut story_urls = Vec::new();
    for i in 0..STORY_COUNT {
        let url = format!("http://news.example/story-{i:03}");
        let pool = match rng.random_range(0..100) {
            0..=39 => Pool::Episodic,
            40..=74 => Pool::Thematic,
            _ => Pool::Junk,
        };
        let words = 120 + rng.random_range(0..120);
        let html = article_html(rng, &format!("Story {i}"), pool, words);
        cache.insert(FetchResult {
            requested_url: url.clone(),
            final_url: url.clone(),
            status: FetchStatus::Ok,
            body: Some(html.into_bytes()),
        });
        pool_of.insert(url.clone(), pool);
        story_urls.push(url.clone());
        linkable.push(url);
    }

    // Shorteners redirecting onto stories.
    for i in 0..10 {
        let url = format!("http://t.example/{:04x}", 0x1a00 + i * 7);
        let target = story_urls[rng.random_range(0..story_urls.len())].clone();
        let body = cache
            .get(&target)
            .and_then(|r| r.body.clone())
            .expect("story body exists");
        cache.insert(FetchResult {
            requested_url: url.clone(),
            final_url: target.clone(),
            status: FetchStatus::Ok,
            body: Some(body),
        });
        pool_of.insert(url.clone(), pool_of[&target]);
        linkable.push(url);
    }

    // Thin pages below the parsable threshold.
    for i in 0..3 {
        let url = format!("http://news.example/stub-{i}");
        let html = format!(
            "<html><body><p>Photo of the day {i} courtesy of the press pool</p></body></html>"
        );
        cache.insert(FetchResult {
            requested_url: url.clone(),
            final_url: url.clone(),
            status: FetchStatus::Ok,
            body: Some(html.into_bytes()),
        });
        linkable.push(url);
    }

    // Image payloads.
    for i in 0..2 {
        let url = format!("http://img.example/pic-{i}.jpg");
        let mut bytes = vec![0xFF, 0xD8, 0xFF, 0xE0, 0x00, 0x10];
        bytes.extend((0..600).map(|j| ((j * 31 + i * 17) % 251) as u8));
        cache.insert(FetchResult {
            requested_url: url.clone(),
            final_url: url.clone(),
            status: FetchStatus::Ok,
            body: Some(bytes),
        });
        linkable.push(url);
    }

    // Dead links.
    for i in 0..4 {
        let url = format!("http://news.example/missing-{i}");
        cache.insert(FetchResult {
            requested_url: url.clone(),
            final_url: url.clone(),
            status: FetchStatus::HttpError(404),
            body: None,
        });
        linkable.push(url);
    }

    // Recorded connection failures.
    for i in 0..2 {
        let url = format!("http://slow.example/{i}");
        cache.insert(FetchResult {
            requested_url: url.clone(),
            final_url: url.clone(),
            status: FetchStatus::Timeout,
            body: None,
        });
        linkable.push(url);
    }

    // A recorded redirect loop.
    let loop_url = "http://loop.example/a".to_string();
    cache.insert(FetchResult {
        requested_url: loop_url.clone(),
        final_url: loop_url.clone(),
        status: FetchStatus::TooManyRedirects,
        body: None,
    });
    linkable.push(loop_url);

    // Links that are simply not in the fixture.
    let missing: Vec<String> = (0..2)
        .map(|i| format!("http://dead.example/{i}"))
        .collect();

    PageSet {
        cache,
        pool_of,
        linkable,
        missing,
    }
}

fn tweet_text(rng: &mut ChaCha8Rng, urls: &[String]) -> String {
    let n = 6 + rng.random_range(0..12);
    let mut words: Vec<&str> = (0..n)
        .map(|_| TWEET_WORDS[rng.random_range(0..TWEET_WORDS.len())])
        .collect();
    words[0] = "Update:";
    let mut text = words.join(" ");
    for url in urls {
        text.push(' ');
        text.push_str(url);
    }
    text
}

fn sample_negbin(rng: &mut ChaCha8Rng, mu: f64, theta: f64) -> u64 {
    use rand_distr::{Distribution, Gamma, Poisson};
    let shape = theta;
    let scale = mu / theta;
    let lambda = Gamma::new(shape, scale)
        .expect("valid gamma")
        .sample(rng)
        .max(1e-9);
    Poisson::new(lambda).expect("valid poisson").sample(rng) as u64
}

#[allow(clippy::too_many_arguments)]
fn build_posts(rng: &mut ChaCha8Rng, pages: &PageSet) -> Vec<Post> {
    let harvest = Utc.with_ymd_and_hms(2014, 5, 25, 12, 0, 0).unwrap();
    let elections = [
        Utc.with_ymd_and_hms(2013, 11, 5, 0, 0, 0).unwrap(),
        Utc.with_ymd_and_hms(2014, 11, 4, 0, 0, 0).unwrap(),
    ];
    let mut posts = Vec::new();
    for (account, party, start, followers) in [
        (
            DEM_ACCOUNT,
            Party::Dem,
            Utc.with_ymd_and_hms(2013, 2, 13, 8, 0, 0).unwrap(),
            350_000u64,
        ),
        (
            REP_ACCOUNT,
            Party::Rep,
            Utc.with_ymd_and_hms(2013, 7, 31, 8, 0, 0).unwrap(),
            510_000u64,
        ),
    ] {
        let span_minutes = (harvest - start - Duration::days(1)).num_minutes();
        let step = span_minutes / POSTS_PER_PARTY as i64;
        for i in 0..POSTS_PER_PARTY {
            let jitter = rng.random_range(0..step.max(2)) / 2;
            let created_at = start + Duration::minutes(step * i as i64 + jitter);
            let n_urls = match rng.random_range(0..100) {
                0..=21 => 0usize,
                22..=91 => 1,
                _ => 2,
            };
            let mut urls = Vec::new();
            for _ in 0..n_urls {
                // Mostly recorded pages, occasionally a link that the
                // fixture has no record of.
                let url = if rng.random_range(0..100) < 96 {
                    pages.linkable[rng.random_range(0..pages.linkable.len())].clone()
                } else {
                    pages.missing[rng.random_range(0..pages.missing.len())].clone()
                };
                if !urls.contains(&url) {
                    urls.push(url);
                }
            }
            let is_reshare = rng.random_range(0..100) < 25;
            let text = tweet_text(rng, &urls);

            // Expected count depends on party, linked-content pool, and
            // the usual controls, against a followers-times-age exposure.
            let (e_frac, t_frac) = urls
                .first()
                .and_then(|u| pages.pool_of.get(u))
                .map(|pool| match pool {
                    Pool::Episodic => (0.9, 0.05),
                    Pool::Thematic => (0.05, 0.9),
                    Pool::Junk => (0.05, 0.05),
                })
                .unwrap_or((0.0, 0.0));
            let party_ind = if party == Party::Rep { 1.0 } else { 0.0 };
            let age_days = (harvest - created_at).num_seconds() as f64 / 86_400.0;
            let offset = (followers as f64 * age_days).ln();
            let tod = created_at.time().signed_duration_since(
                chrono::NaiveTime::from_hms_opt(0, 0, 0).unwrap(),
            );
            let tod_hours = tod.num_seconds() as f64 / 3600.0;
            let sqrt_prox = elections
                .iter()
                .map(|e| ((created_at - *e).num_seconds() as f64 / 86_400.0).abs())
                .fold(f64::INFINITY, f64::min)
                .sqrt();
            let eta = -15.4 - 0.15 * party_ind - 0.8 * e_frac - 0.5 * t_frac
                + 1.2 * (is_reshare as i64 as f64)
                + 0.03 * tod_hours
                + 0.002 * text.chars().count() as f64
                + 0.12 * sqrt_prox
                + offset;
            let reshare_count = sample_negbin(rng, eta.exp(), 1.5);

            let prefix = match party {
                Party::Dem => "dem",
                Party::Rep => "gop",
            };
            posts.push(Post {
                id: format!("{prefix}-{i:04}"),
                created_at,
                account: account.to_string(),
                party,
                text,
                reshare_count,
                is_reshare,
                urls,
            });
        }
    }
    posts
}

const RUN_CONF: &str = "\
# Synthetic end-to-end fixture. All paths are relative to this file.
archive_paths=archive_dem.jsonl
archive_paths=archive_rep.jsonl
replay_fixture_dir=pages
offline=true
trim_percentile=0.01
unparsable_threshold=50
min_token_length=3
min_document_frequency=2
topic_count=3
lda_beta=0.01
lda_sweeps=400
lda_burn_in=100
seed=42
labeling_path=labeling.csv
election_dates=2013-11-05
election_dates=2014-11-04
follower_counts.demparty=350000
follower_counts.gopparty=510000
harvest_instant=2014-05-25T12:00:00Z
elimination_alpha=0.05
output_dir=out
";

/// Fits the fixture's topic model once and labels each topic by the word
/// pool its top words came from.
fn derive_labeling(fixture_dir: &Path) -> Vec<(usize, &'static str)> {
    let work = tempfile::tempdir().expect("tempdir");
    let mut cfg =
        AnalysisConfig::from_file(&fixture_dir.join("run.conf")).expect("fixture config parses");
    cfg.output_dir = work.path().join("out");
    pipeline::run_ingest(&cfg).expect("ingest");
    pipeline::run_fetch(&cfg).expect("fetch");
    pipeline::run_topics(&cfg).expect("topics");

    let topics_text =
        fs::read_to_string(cfg.output_dir.join("topics.txt")).expect("topics.txt exists");
    let mut labeling = Vec::new();
    for (k, line) in topics_text.lines().enumerate() {
        let words: Vec<&str> = line
            .split(": ")
            .nth(1)
            .expect("topic line format")
            .split(' ')
            .collect();
        let mut best = (Pool::Junk, 0usize);
        for pool in [Pool::Episodic, Pool::Thematic, Pool::Junk] {
            let overlap = words
                .iter()
                .filter(|w| pool.words().contains(&w.to_lowercase().as_str()))
                .count();
            if overlap > best.1 {
                best = (pool, overlap);
            }
        }
        labeling.push((k, best.0.label()));
    }
    labeling
}

fn main() {
    let fixture_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    fs::create_dir_all(&fixture_dir).expect("fixtures dir");

    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let pages = build_pages(&mut rng);
    let posts = build_posts(&mut rng, &pages);

    let pages_dir = fixture_dir.join("pages");
    fs::create_dir_all(&pages_dir).expect("pages dir");
    pages.cache.save_dir(&pages_dir).expect("save pages");

    let dem: Vec<Post> = posts
        .iter()
        .filter(|p| p.party == Party::Dem)
        .cloned()
        .collect();
    let rep: Vec<Post> = posts
        .iter()
        .filter(|p| p.party == Party::Rep)
        .cloned()
        .collect();
    fs::write(fixture_dir.join("archive_dem.jsonl"), serialize_archive(&dem))
        .expect("write dem archive");
    fs::write(fixture_dir.join("archive_rep.jsonl"), serialize_archive(&rep))
        .expect("write rep archive");
    fs::write(fixture_dir.join("run.conf"), RUN_CONF).expect("write run.conf");

    let labeling = derive_labeling(&fixture_dir);
    let mut labeling_text = String::new();
    for (k, label) in &labeling {
        labeling_text.push_str(&format!("{k},{label}\n"));
    }
    fs::write(fixture_dir.join("labeling.csv"), labeling_text).expect("write labeling");

    println!(
        "fixture: {} posts, {} recorded pages, labeling {:?}",
        posts.len(),
        pages.cache.len(),
        labeling
    );
}
