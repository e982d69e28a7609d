//! Run configuration: a flat `key=value` file shared by every pipeline
//! stage.
//!
//! Keys are named after the [`AnalysisConfig`] fields. Relative paths are
//! resolved against the config file's directory. `archive_paths` and
//! `election_dates` may repeat (one value per line) or hold comma lists;
//! follower counts use one `follower_counts.<account>` key per account.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};

use crate::ingest::content_hash;
use crate::{Error, Result};

/// All run parameters of the pipeline.
#[derive(Debug, Clone)]
pub struct AnalysisConfig {
    pub archive_paths: Vec<PathBuf>,
    /// Working page cache; defaults to `<output_dir>/cache`.
    pub page_cache_dir: Option<PathBuf>,
    /// Recorded pages served instead of the network when offline.
    pub replay_fixture_dir: Option<PathBuf>,
    pub offline: bool,
    pub trim_percentile: f64,
    pub unparsable_threshold: usize,
    pub stopword_path: Option<PathBuf>,
    pub min_token_length: usize,
    pub min_document_frequency: usize,
    /// Fixed topic count; ignored when candidates are given.
    pub topic_count: Option<usize>,
    pub topic_count_candidates: Vec<usize>,
    /// Document-topic prior; `None` means 50/K.
    pub lda_alpha: Option<f64>,
    pub lda_beta: f64,
    pub lda_sweeps: usize,
    pub lda_burn_in: usize,
    pub seed: u64,
    pub labeling_path: Option<PathBuf>,
    pub election_dates: Vec<NaiveDate>,
    pub follower_counts: BTreeMap<String, u64>,
    pub harvest_instant: Option<DateTime<Utc>>,
    pub elimination_alpha: f64,
    pub output_dir: PathBuf,
    pub max_redirects: usize,
    pub fetch_parallelism: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            archive_paths: Vec::new(),
            page_cache_dir: None,
            replay_fixture_dir: None,
            offline: true,
            trim_percentile: 0.01,
            unparsable_threshold: 50,
            stopword_path: None,
            min_token_length: 3,
            min_document_frequency: 2,
            topic_count: None,
            topic_count_candidates: Vec::new(),
            lda_alpha: None,
            lda_beta: crate::topics::DEFAULT_BETA,
            lda_sweeps: crate::topics::DEFAULT_SWEEPS,
            lda_burn_in: crate::topics::DEFAULT_BURN_IN,
            seed: 0,
            labeling_path: None,
            election_dates: Vec::new(),
            follower_counts: BTreeMap::new(),
            harvest_instant: None,
            elimination_alpha: 0.05,
            output_dir: PathBuf::from("out"),
            max_redirects: 10,
            fetch_parallelism: 8,
        }
    }
}

/// Default topic count when neither a fixed count nor candidates are
/// configured.
pub const DEFAULT_TOPIC_COUNT: usize = 10;

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

impl AnalysisConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_str_with_base(&text, base)
    }

    /// Parses config text; relative paths resolve against `base`.
    pub fn from_str_with_base(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = AnalysisConfig::default();
        let resolve = |value: &str| -> PathBuf {
            let p = PathBuf::from(value);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            match key {
                "archive_paths" => {
                    for part in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                        cfg.archive_paths.push(resolve(part));
                    }
                }
                "page_cache_dir" => cfg.page_cache_dir = Some(resolve(value)),
                "replay_fixture_dir" => cfg.replay_fixture_dir = Some(resolve(value)),
                "offline" => cfg.offline = parse_bool(key, value)?,
                "trim_percentile" => cfg.trim_percentile = parse_num(key, value)?,
                "unparsable_threshold" => cfg.unparsable_threshold = parse_num(key, value)?,
                "stopword_path" => cfg.stopword_path = Some(resolve(value)),
                "min_token_length" => cfg.min_token_length = parse_num(key, value)?,
                "min_document_frequency" => {
                    cfg.min_document_frequency = parse_num(key, value)?
                }
                "topic_count" => cfg.topic_count = Some(parse_num(key, value)?),
                "topic_count_candidates" => {
                    cfg.topic_count_candidates = value
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(|s| parse_num(key, s))
                        .collect::<Result<_>>()?;
                }
                "lda_alpha" => cfg.lda_alpha = Some(parse_num(key, value)?),
                "lda_beta" => cfg.lda_beta = parse_num(key, value)?,
                "lda_sweeps" => cfg.lda_sweeps = parse_num(key, value)?,
                "lda_burn_in" => cfg.lda_burn_in = parse_num(key, value)?,
                "seed" => cfg.seed = parse_num(key, value)?,
                "labeling_path" => cfg.labeling_path = Some(resolve(value)),
                "election_dates" => {
                    for part in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                        let date = NaiveDate::parse_from_str(part, "%Y-%m-%d").map_err(|_| {
                            Error::Config(format!("election_dates: bad date {part:?}"))
                        })?;
                        cfg.election_dates.push(date);
                    }
                }
                "harvest_instant" => {
                    let parsed = DateTime::parse_from_rfc3339(value).map_err(|_| {
                        Error::Config(format!("harvest_instant: bad timestamp {value:?}"))
                    })?;
                    cfg.harvest_instant = Some(parsed.with_timezone(&Utc));
                }
                "elimination_alpha" => cfg.elimination_alpha = parse_num(key, value)?,
                "output_dir" => cfg.output_dir = resolve(value),
                "max_redirects" => cfg.max_redirects = parse_num(key, value)?,
                "fetch_parallelism" => cfg.fetch_parallelism = parse_num(key, value)?,
                _ => {
                    if let Some(account) = key.strip_prefix("follower_counts.") {
                        cfg.follower_counts
                            .insert(account.trim().to_string(), parse_num(key, value)?);
                    } else {
                        return Err(Error::Config(format!(
                            "line {}: unknown key {key:?}",
                            lineno + 1
                        )));
                    }
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.trim_percentile) {
            return Err(Error::Config(format!(
                "trim_percentile must be in [0, 1), got {}",
                self.trim_percentile
            )));
        }
        if !(0.0..1.0).contains(&self.elimination_alpha) || self.elimination_alpha == 0.0 {
            return Err(Error::Config(format!(
                "elimination_alpha must be in (0, 1), got {}",
                self.elimination_alpha
            )));
        }
        if self.unparsable_threshold < 1 {
            return Err(Error::Config("unparsable_threshold must be >= 1".into()));
        }
        if self.min_token_length < 1 {
            return Err(Error::Config("min_token_length must be >= 1".into()));
        }
        if self.min_document_frequency < 1 {
            return Err(Error::Config("min_document_frequency must be >= 1".into()));
        }
        if self.lda_sweeps <= self.lda_burn_in {
            return Err(Error::Config(format!(
                "lda_sweeps ({}) must exceed lda_burn_in ({})",
                self.lda_sweeps, self.lda_burn_in
            )));
        }
        if self.topic_count == Some(0) {
            return Err(Error::Config("topic_count must be >= 1".into()));
        }
        if self.topic_count_candidates.iter().any(|&k| k == 0) {
            return Err(Error::Config("topic-count candidates must be >= 1".into()));
        }
        if self.fetch_parallelism < 1 {
            return Err(Error::Config("fetch_parallelism must be >= 1".into()));
        }
        Ok(())
    }

    /// The page cache location (defaults to `<output_dir>/cache`).
    pub fn cache_dir(&self) -> PathBuf {
        self.page_cache_dir
            .clone()
            .unwrap_or_else(|| self.output_dir.join("cache"))
    }

    /// Canonical single-string rendering used for the config hash.
    ///
    /// Output and cache locations are excluded: the hash identifies the
    /// analysis (inputs and parameters), not where results land, so runs
    /// into different directories hash identically.
    pub fn canonical_lines(&self) -> String {
        let mut lines: Vec<String> = Vec::new();
        for p in &self.archive_paths {
            lines.push(format!("archive_paths={}", p.display()));
        }
        if let Some(p) = &self.replay_fixture_dir {
            lines.push(format!("replay_fixture_dir={}", p.display()));
        }
        lines.push(format!("offline={}", self.offline));
        lines.push(format!("trim_percentile={}", self.trim_percentile));
        lines.push(format!("unparsable_threshold={}", self.unparsable_threshold));
        if let Some(p) = &self.stopword_path {
            lines.push(format!("stopword_path={}", p.display()));
        }
        lines.push(format!("min_token_length={}", self.min_token_length));
        lines.push(format!(
            "min_document_frequency={}",
            self.min_document_frequency
        ));
        if let Some(k) = self.topic_count {
            lines.push(format!("topic_count={k}"));
        }
        if !self.topic_count_candidates.is_empty() {
            let list: Vec<String> = self
                .topic_count_candidates
                .iter()
                .map(|k| k.to_string())
                .collect();
            lines.push(format!("topic_count_candidates={}", list.join(",")));
        }
        if let Some(a) = self.lda_alpha {
            lines.push(format!("lda_alpha={a}"));
        }
        lines.push(format!("lda_beta={}", self.lda_beta));
        lines.push(format!("lda_sweeps={}", self.lda_sweeps));
        lines.push(format!("lda_burn_in={}", self.lda_burn_in));
        lines.push(format!("seed={}", self.seed));
        if let Some(p) = &self.labeling_path {
            lines.push(format!("labeling_path={}", p.display()));
        }
        for d in &self.election_dates {
            lines.push(format!("election_dates={d}"));
        }
        for (account, n) in &self.follower_counts {
            lines.push(format!("follower_counts.{account}={n}"));
        }
        if let Some(t) = &self.harvest_instant {
            lines.push(format!(
                "harvest_instant={}",
                t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
            ));
        }
        lines.push(format!("elimination_alpha={}", self.elimination_alpha));
        lines.push(format!("max_redirects={}", self.max_redirects));
        lines.push(format!("fetch_parallelism={}", self.fetch_parallelism));
        lines.sort();
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }

    pub fn config_hash(&self) -> String {
        content_hash(self.canonical_lines().as_bytes())
    }
}
