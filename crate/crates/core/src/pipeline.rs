//! File-driven pipeline stages.
//!
//! Each stage reads its inputs from disk, writes its outputs under the
//! configured output directory and records content digests in
//! `manifest.json`, so any stage can be rerun from upstream artifacts and
//! identical configuration reproduces identical bytes.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::aspect::{score, ContentScores, TopicLabeling};
use crate::config::{AnalysisConfig, DEFAULT_TOPIC_COUNT};
use crate::corpus::{
    tokenize_normalize, trim_top_percentile, NormalizeRules, TrimReport, Vocabulary,
};
use crate::ingest::{
    content_hash, fetch_batch, parse_archive, Party, Post, ReplayFetcher, extract_text,
    FetchStatus, PageCache,
};
use crate::regression::{
    backward_eliminate, build_design, compute_offset, election_proximity, fit_negbin,
    fit_poisson, incidence_rate_ratios, lr_test, CovariateRow, Family, ModelSpec,
};
use crate::topics::{
    default_alpha, fit_lda, select_topic_count, top_words, LdaParams, SelectionParams,
};
use crate::{Error, Result};

const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
const TOP_WORDS_PER_TOPIC: usize = 15;

/// Per-stage record of input and output digests, plus any parameters the
/// stage resolved at run time (the chosen topic count, the model family).
#[derive(Debug, Default, Clone, Serialize, Deserialize)]
pub struct StageRecord {
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub parameters: BTreeMap<String, String>,
}

/// Reproducibility manifest written to the output directory.
///
/// Stage wall-clock timestamps are kept in memory for reporting but are
/// not serialized: the manifest on disk depends only on configuration and
/// input bytes.
#[derive(Debug, Default, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub stages: BTreeMap<String, StageRecord>,
    #[serde(skip)]
    pub stage_timestamps: BTreeMap<String, DateTime<Utc>>,
}

impl RunManifest {
    fn load_or_new(cfg: &AnalysisConfig) -> Self {
        let path = cfg.output_dir.join("manifest.json");
        let hash = cfg.config_hash();
        if let Ok(text) = fs::read_to_string(&path) {
            if let Ok(loaded) = serde_json::from_str::<RunManifest>(&text) {
                if loaded.config_hash == hash {
                    return loaded;
                }
            }
        }
        RunManifest {
            tool_version: TOOL_VERSION.to_string(),
            config_hash: hash,
            stages: BTreeMap::new(),
            stage_timestamps: BTreeMap::new(),
        }
    }

    fn record(
        &mut self,
        cfg: &AnalysisConfig,
        stage: &str,
        inputs: &[PathBuf],
        outputs: &[PathBuf],
        parameters: &[(&str, String)],
    ) -> Result<()> {
        let digest_of = |path: &PathBuf| -> Result<(String, String)> {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            let name = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string());
            Ok((name, content_hash(&bytes)))
        };
        let mut record = StageRecord::default();
        for p in inputs {
            let (name, digest) = digest_of(p)?;
            record.inputs.insert(name, digest);
        }
        for p in outputs {
            let (name, digest) = digest_of(p)?;
            record.outputs.insert(name, digest);
        }
        for (key, value) in parameters {
            record.parameters.insert(key.to_string(), value.clone());
        }
        self.stages.insert(stage.to_string(), record);
        self.stage_timestamps.insert(stage.to_string(), Utc::now());
        let path = cfg.output_dir.join("manifest.json");
        let mut text =
            serde_json::to_string_pretty(self).map_err(|e| Error::Pipeline(e.to_string()))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(())
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path)
        .map_err(|e| Error::Pipeline(format!("cannot write {}: {e}", path.display())))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    csv::Reader::from_path(path)
        .map_err(|e| Error::Pipeline(format!("cannot read {}: {e}", path.display())))
}

fn write_row(w: &mut csv::Writer<fs::File>, row: &[&str]) -> Result<()> {
    w.write_record(row)
        .map_err(|e| Error::Pipeline(e.to_string()))
}

fn fmt_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

// Twelve decimals keep serialized posterior rows summing to one within
// 1e-9 even after per-cell rounding.
fn fmt_matrix_value(v: f64) -> String {
    format!("{v:.12}")
}

// ---------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------

#[derive(Debug)]
pub struct IngestSummary {
    pub posts_parsed: usize,
    pub parse_errors: usize,
    pub trim: TrimReport,
}

/// Parses the archives, trims the top reshare percentile and writes
/// `posts.csv`, `trim_report.csv` and `parse_errors.csv`.
pub fn run_ingest(cfg: &AnalysisConfig) -> Result<IngestSummary> {
    if cfg.archive_paths.is_empty() {
        return Err(Error::Config("no archive_paths configured".into()));
    }
    ensure_dir(&cfg.output_dir)?;

    let mut posts: Vec<Post> = Vec::new();
    let mut errors: Vec<(String, usize, String)> = Vec::new();
    for path in &cfg.archive_paths {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let parsed = parse_archive(BufReader::new(file))?;
        let archive_name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        for e in parsed.errors {
            errors.push((archive_name.clone(), e.line, e.reason));
        }
        posts.extend(parsed.posts);
    }
    if posts.is_empty() {
        return Err(Error::Archive("archives contain no posts".into()));
    }
    let posts_parsed = posts.len();
    let (survivors, trim) = trim_top_percentile(posts, cfg.trim_percentile)?;

    let posts_path = cfg.output_dir.join("posts.csv");
    let mut w = csv_writer(&posts_path)?;
    write_row(
        &mut w,
        &[
            "id",
            "created_at",
            "account",
            "party",
            "text",
            "reshare_count",
            "is_reshare",
            "urls",
        ],
    )?;
    for p in &survivors {
        write_row(
            &mut w,
            &[
                &p.id,
                &fmt_timestamp(&p.created_at),
                &p.account,
                p.party.as_str(),
                &p.text,
                &p.reshare_count.to_string(),
                &p.is_reshare.to_string(),
                &p.urls.join(" "),
            ],
        )?;
    }
    w.flush().map_err(|e| Error::io(&posts_path, e))?;

    let trim_path = cfg.output_dir.join("trim_report.csv");
    let mut w = csv_writer(&trim_path)?;
    write_row(&mut w, &["n_before", "n_removed", "threshold_value"])?;
    write_row(
        &mut w,
        &[
            &trim.n_before.to_string(),
            &trim.n_removed.to_string(),
            &trim
                .threshold_value
                .map(|v| v.to_string())
                .unwrap_or_default(),
        ],
    )?;
    w.flush().map_err(|e| Error::io(&trim_path, e))?;

    let errors_path = cfg.output_dir.join("parse_errors.csv");
    let mut w = csv_writer(&errors_path)?;
    write_row(&mut w, &["archive", "line", "reason"])?;
    for (archive, line, reason) in &errors {
        write_row(&mut w, &[archive, &line.to_string(), reason])?;
    }
    w.flush().map_err(|e| Error::io(&errors_path, e))?;

    let mut manifest = RunManifest::load_or_new(cfg);
    manifest.record(
        cfg,
        "ingest",
        &cfg.archive_paths,
        &[posts_path, trim_path, errors_path],
        &[],
    )?;

    Ok(IngestSummary {
        posts_parsed,
        parse_errors: errors.len(),
        trim,
    })
}

// ---------------------------------------------------------------------
// fetch
// ---------------------------------------------------------------------

#[derive(Debug)]
pub struct FetchSummary {
    pub distinct_urls: usize,
    pub newly_fetched: usize,
    pub resolved_ok: usize,
    pub unresolved: usize,
}

fn read_posts(path: &Path) -> Result<Vec<Post>> {
    let mut reader = csv_reader(path)?;
    let mut posts = Vec::new();
    for record in reader.records() {
        let r = record.map_err(|e| Error::Pipeline(format!("bad posts.csv row: {e}")))?;
        let created_at = DateTime::parse_from_rfc3339(&r[1])
            .map_err(|e| Error::Pipeline(format!("bad timestamp {}: {e}", &r[1])))?
            .with_timezone(&Utc);
        posts.push(Post {
            id: r[0].to_string(),
            created_at,
            account: r[2].to_string(),
            party: Party::parse(&r[3])?,
            text: r[4].to_string(),
            reshare_count: r[5]
                .parse()
                .map_err(|e| Error::Pipeline(format!("bad reshare count: {e}")))?,
            is_reshare: r[6]
                .parse()
                .map_err(|e| Error::Pipeline(format!("bad is_reshare flag: {e}")))?,
            urls: if r[7].is_empty() {
                Vec::new()
            } else {
                r[7].split(' ').map(str::to_string).collect()
            },
        });
    }
    Ok(posts)
}

/// Resolves every distinct linked URL through the replay fetcher, extracts
/// page text, and writes the page cache plus `extracted.csv` and one text
/// file per fetched page.
pub fn run_fetch(cfg: &AnalysisConfig) -> Result<FetchSummary> {
    let posts_path = cfg.output_dir.join("posts.csv");
    let posts = read_posts(&posts_path)?;
    if !cfg.offline {
        return Err(Error::Config(
            "live fetching is not available; set offline=true and provide a replay fixture"
                .into(),
        ));
    }
    let fixture_dir = cfg
        .replay_fixture_dir
        .clone()
        .unwrap_or_else(|| cfg.cache_dir());
    let fetcher = ReplayFetcher::load_dir(&fixture_dir)?;

    let cache_dir = cfg.cache_dir();
    ensure_dir(&cache_dir)?;
    let cache = if cache_dir.join("pages.csv").exists() {
        PageCache::load_dir(&cache_dir)?
    } else {
        PageCache::new()
    };

    // Distinct URLs in first-appearance order.
    let mut seen = BTreeSet::new();
    let mut urls: Vec<String> = Vec::new();
    for p in &posts {
        for u in &p.urls {
            if seen.insert(u.clone()) {
                urls.push(u.clone());
            }
        }
    }
    let newly_fetched = fetch_batch(&cache, &urls, &fetcher, cfg.max_redirects, cfg.fetch_parallelism);
    cache.save_dir(&cache_dir)?;

    let texts_dir = cfg.output_dir.join("texts");
    ensure_dir(&texts_dir)?;
    let extracted_path = cfg.output_dir.join("extracted.csv");
    let mut w = csv_writer(&extracted_path)?;
    write_row(
        &mut w,
        &[
            "requested_url",
            "final_url",
            "status",
            "parsable",
            "token_estimate",
            "text_file",
        ],
    )?;
    let mut resolved_ok = 0usize;
    let mut sorted_urls: Vec<&String> = urls.iter().collect();
    sorted_urls.sort();
    for url in sorted_urls {
        let entry = cache
            .get(url)
            .ok_or_else(|| Error::Pipeline(format!("url missing from cache: {url}")))?;
        let (parsable, token_estimate, text_file) = match (&entry.status, &entry.body) {
            (FetchStatus::Ok, Some(body)) => {
                resolved_ok += 1;
                let page = extract_text(&entry.final_url, body, cfg.unparsable_threshold);
                let name = format!("texts/{}.txt", content_hash(body));
                let path = cfg.output_dir.join(&name);
                fs::write(&path, &page.text).map_err(|e| Error::io(&path, e))?;
                (page.parsable, page.token_estimate, name)
            }
            _ => (false, 0, String::new()),
        };
        write_row(
            &mut w,
            &[
                url,
                &entry.final_url,
                &entry.status.encode(),
                &parsable.to_string(),
                &token_estimate.to_string(),
                &text_file,
            ],
        )?;
    }
    w.flush().map_err(|e| Error::io(&extracted_path, e))?;

    let mut manifest = RunManifest::load_or_new(cfg);
    manifest.record(
        cfg,
        "fetch",
        &[posts_path],
        &[cache_dir.join("pages.csv"), extracted_path],
        &[],
    )?;

    Ok(FetchSummary {
        distinct_urls: urls.len(),
        newly_fetched,
        resolved_ok,
        unresolved: urls.len() - resolved_ok,
    })
}

// ---------------------------------------------------------------------
// topics
// ---------------------------------------------------------------------

#[derive(Debug)]
pub struct TopicsSummary {
    pub documents: usize,
    pub parsable_documents: usize,
    pub vocabulary_size: usize,
    pub topic_count: usize,
}

struct ExtractedRow {
    status: FetchStatus,
    token_estimate: usize,
    text_file: String,
}

fn read_extracted(path: &Path) -> Result<BTreeMap<String, ExtractedRow>> {
    let mut reader = csv_reader(path)?;
    let mut map = BTreeMap::new();
    for record in reader.records() {
        let r = record.map_err(|e| Error::Pipeline(format!("bad extracted.csv row: {e}")))?;
        map.insert(
            r[0].to_string(),
            ExtractedRow {
                status: FetchStatus::decode(&r[2])?,
                token_estimate: r[4]
                    .parse()
                    .map_err(|e| Error::Pipeline(format!("bad token estimate: {e}")))?,
                text_file: r[5].to_string(),
            },
        );
    }
    Ok(map)
}

fn normalize_rules(cfg: &AnalysisConfig) -> Result<NormalizeRules> {
    let stopwords = match &cfg.stopword_path {
        Some(path) => fs::read_to_string(path)
            .map_err(|e| Error::io(path, e))?
            .lines()
            .map(|l| l.trim().to_string())
            .filter(|l| !l.is_empty())
            .collect(),
        None => crate::corpus::default_stopwords(),
    };
    Ok(NormalizeRules {
        min_token_length: cfg.min_token_length,
        stopwords,
    })
}

/// Builds the tokenized corpus from extracted page texts, fits (or
/// selects) the topic model, and writes `corpus.csv`, `vocab.txt`,
/// `theta.csv`, `phi.csv` and `topics.txt`.
pub fn run_topics(cfg: &AnalysisConfig) -> Result<TopicsSummary> {
    let posts_path = cfg.output_dir.join("posts.csv");
    let extracted_path = cfg.output_dir.join("extracted.csv");
    let posts = read_posts(&posts_path)?;
    let extracted = read_extracted(&extracted_path)?;
    let rules = normalize_rules(cfg)?;

    // One document per post with at least one resolved page; text is the
    // concatenation of all its resolved pages in link order.
    struct RawDoc {
        post_id: String,
        raw_tokens: usize,
        tokens: Vec<String>,
    }
    let mut raw_docs: Vec<RawDoc> = Vec::new();
    for post in &posts {
        let mut text_parts: Vec<String> = Vec::new();
        let mut raw_tokens = 0usize;
        for url in &post.urls {
            let Some(row) = extracted.get(url) else { continue };
            if row.status != FetchStatus::Ok || row.text_file.is_empty() {
                continue;
            }
            let path = cfg.output_dir.join(&row.text_file);
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            raw_tokens += row.token_estimate;
            text_parts.push(text);
        }
        if text_parts.is_empty() {
            continue;
        }
        raw_docs.push(RawDoc {
            post_id: post.id.clone(),
            raw_tokens,
            tokens: tokenize_normalize(&text_parts.join(" "), &rules),
        });
    }
    if raw_docs.is_empty() {
        return Err(Error::Pipeline(
            "no documents: no post links to a resolvable page".into(),
        ));
    }

    let parsable_token_docs: Vec<&RawDoc> = raw_docs
        .iter()
        .filter(|d| d.raw_tokens >= cfg.unparsable_threshold)
        .collect();
    if parsable_token_docs.is_empty() {
        return Err(Error::Pipeline("no parsable documents".into()));
    }
    let vocab_input: Vec<&[String]> = parsable_token_docs
        .iter()
        .map(|d| d.tokens.as_slice())
        .collect();
    let vocab = Vocabulary::build(&vocab_input, cfg.min_document_frequency)?;

    // Final documents: vocabulary-encoded tokens; a document is parsable
    // when it has enough raw text and at least one in-vocabulary token.
    struct EncodedDoc {
        post_id: String,
        indices: Vec<usize>,
        parsable: bool,
    }
    let encoded: Vec<EncodedDoc> = raw_docs
        .iter()
        .map(|d| {
            let indices = vocab.encode(&d.tokens);
            let parsable = d.raw_tokens >= cfg.unparsable_threshold && !indices.is_empty();
            EncodedDoc {
                post_id: d.post_id.clone(),
                indices,
                parsable,
            }
        })
        .collect();
    let model_docs: Vec<Vec<usize>> = encoded
        .iter()
        .filter(|d| d.parsable)
        .map(|d| d.indices.clone())
        .collect();
    if model_docs.is_empty() {
        return Err(Error::Pipeline("no parsable documents".into()));
    }

    let topic_count = if !cfg.topic_count_candidates.is_empty() {
        select_topic_count(
            &model_docs,
            vocab.len(),
            &cfg.topic_count_candidates,
            &SelectionParams {
                alpha: cfg.lda_alpha,
                beta: cfg.lda_beta,
                sweeps: cfg.lda_sweeps,
                burn_in: cfg.lda_burn_in,
                seed: cfg.seed ^ 0x746f_7069_6373,
            },
        )?
    } else {
        cfg.topic_count.unwrap_or(DEFAULT_TOPIC_COUNT)
    };
    let model = fit_lda(
        &model_docs,
        vocab.len(),
        &LdaParams {
            num_topics: topic_count,
            alpha: cfg.lda_alpha.unwrap_or_else(|| default_alpha(topic_count)),
            beta: cfg.lda_beta,
            sweeps: cfg.lda_sweeps,
            burn_in: cfg.lda_burn_in,
            seed: cfg.seed,
        },
    )?;

    let corpus_path = cfg.output_dir.join("corpus.csv");
    let mut w = csv_writer(&corpus_path)?;
    write_row(&mut w, &["post_id", "parsable", "tokens"])?;
    for doc in &encoded {
        let tokens: Vec<&str> = doc.indices.iter().map(|&i| vocab.token(i)).collect();
        write_row(
            &mut w,
            &[&doc.post_id, &doc.parsable.to_string(), &tokens.join(" ")],
        )?;
    }
    w.flush().map_err(|e| Error::io(&corpus_path, e))?;

    let vocab_path = cfg.output_dir.join("vocab.txt");
    fs::write(&vocab_path, vocab.to_lines()).map_err(|e| Error::io(&vocab_path, e))?;

    let theta_path = cfg.output_dir.join("theta.csv");
    let mut theta_text = String::new();
    for row in model.doc_topic_matrix() {
        let cells: Vec<String> = row.iter().map(|&v| fmt_matrix_value(v)).collect();
        theta_text.push_str(&cells.join(","));
        theta_text.push('\n');
    }
    fs::write(&theta_path, theta_text).map_err(|e| Error::io(&theta_path, e))?;

    let phi_path = cfg.output_dir.join("phi.csv");
    let mut phi_text = String::new();
    for row in &model.phi {
        let cells: Vec<String> = row.iter().map(|&v| fmt_matrix_value(v)).collect();
        phi_text.push_str(&cells.join(","));
        phi_text.push('\n');
    }
    fs::write(&phi_path, phi_text).map_err(|e| Error::io(&phi_path, e))?;

    let topics_path = cfg.output_dir.join("topics.txt");
    let mut topics_text = String::new();
    for k in 0..model.num_topics {
        let words = top_words(&model, vocab.tokens(), k, TOP_WORDS_PER_TOPIC)?;
        topics_text.push_str(&format!("topic {k}: {}\n", words.join(" ")));
    }
    fs::write(&topics_path, topics_text).map_err(|e| Error::io(&topics_path, e))?;

    let mut manifest = RunManifest::load_or_new(cfg);
    manifest.record(
        cfg,
        "topics",
        &[posts_path, extracted_path],
        &[corpus_path, vocab_path, theta_path, phi_path, topics_path],
        &[("topic_count", topic_count.to_string())],
    )?;

    Ok(TopicsSummary {
        documents: encoded.len(),
        parsable_documents: model_docs.len(),
        vocabulary_size: vocab.len(),
        topic_count,
    })
}

// ---------------------------------------------------------------------
// score
// ---------------------------------------------------------------------

#[derive(Debug)]
pub struct ScoreSummary {
    pub rows: usize,
    pub parsable_rows: usize,
}

fn read_theta(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for line in text.lines() {
        let row: Vec<f64> = line
            .split(',')
            .map(|c| {
                c.parse()
                    .map_err(|_| Error::Pipeline(format!("bad theta cell {c:?}")))
            })
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Pipeline("theta.csv is empty".into()));
    }
    Ok(rows)
}

struct CorpusRow {
    post_id: String,
    parsable: bool,
}

fn read_corpus_rows(path: &Path) -> Result<Vec<CorpusRow>> {
    let mut reader = csv_reader(path)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let r = record.map_err(|e| Error::Pipeline(format!("bad corpus.csv row: {e}")))?;
        rows.push(CorpusRow {
            post_id: r[0].to_string(),
            parsable: r[1]
                .parse()
                .map_err(|e| Error::Pipeline(format!("bad parsable flag: {e}")))?,
        });
    }
    Ok(rows)
}

/// Applies the analyst labeling to the fitted posterior and writes
/// `scores.csv` (post_id, e, t, u).
///
/// Documents excluded from modeling as unparsable score (0, 0, 1).
pub fn run_score(cfg: &AnalysisConfig) -> Result<ScoreSummary> {
    let labeling_path = cfg
        .labeling_path
        .clone()
        .ok_or_else(|| Error::Config("labeling_path is not configured".into()))?;
    let corpus_path = cfg.output_dir.join("corpus.csv");
    let theta_path = cfg.output_dir.join("theta.csv");
    let corpus = read_corpus_rows(&corpus_path)?;
    let theta = read_theta(&theta_path)?;
    let num_topics = theta[0].len();
    let labeling_text =
        fs::read_to_string(&labeling_path).map_err(|e| Error::io(&labeling_path, e))?;
    let labeling = TopicLabeling::parse(&labeling_text, num_topics)?;

    let parsable_rows = corpus.iter().filter(|r| r.parsable).count();
    if parsable_rows != theta.len() {
        return Err(Error::Pipeline(format!(
            "corpus/theta mismatch: {parsable_rows} parsable documents vs {} posterior rows",
            theta.len()
        )));
    }

    let scores_path = cfg.output_dir.join("scores.csv");
    let mut w = csv_writer(&scores_path)?;
    write_row(&mut w, &["post_id", "e", "t", "u"])?;
    let mut theta_rows = theta.iter();
    for row in &corpus {
        let s = if row.parsable {
            let theta_row = theta_rows.next().expect("counts already checked");
            score(theta_row, &labeling)?
        } else {
            ContentScores {
                episodic: 0.0,
                thematic: 0.0,
                unparsable: 1.0,
            }
        };
        write_row(
            &mut w,
            &[
                &row.post_id,
                &fmt_matrix_value(s.episodic),
                &fmt_matrix_value(s.thematic),
                &fmt_matrix_value(s.unparsable),
            ],
        )?;
    }
    w.flush().map_err(|e| Error::io(&scores_path, e))?;

    let mut manifest = RunManifest::load_or_new(cfg);
    manifest.record(
        cfg,
        "score",
        &[corpus_path, theta_path, labeling_path],
        &[scores_path],
        &[],
    )?;

    Ok(ScoreSummary {
        rows: corpus.len(),
        parsable_rows,
    })
}

// ---------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------

#[derive(Debug)]
pub struct FitSummary {
    pub observations: usize,
    pub family: Family,
    pub dropped_terms: Vec<String>,
    pub final_term_count: usize,
}

fn read_scores(path: &Path) -> Result<Vec<(String, ContentScores)>> {
    let mut reader = csv_reader(path)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let r = record.map_err(|e| Error::Pipeline(format!("bad scores.csv row: {e}")))?;
        let parse = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Pipeline(format!("bad score {s:?}")))
        };
        rows.push((
            r[0].to_string(),
            ContentScores {
                episodic: parse(&r[1])?,
                thematic: parse(&r[2])?,
                unparsable: parse(&r[3])?,
            },
        ));
    }
    Ok(rows)
}

/// Assembles the regression data set from posts and scores.
pub fn build_covariate_rows(
    cfg: &AnalysisConfig,
    posts: &[Post],
    scores: &[(String, ContentScores)],
) -> Result<Vec<CovariateRow>> {
    let harvest = cfg
        .harvest_instant
        .ok_or_else(|| Error::Config("harvest_instant is not configured".into()))?;
    if cfg.election_dates.is_empty() {
        return Err(Error::Config("no election_dates configured".into()));
    }
    let by_id: BTreeMap<&str, &Post> = posts.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut rows = Vec::with_capacity(scores.len());
    for (post_id, s) in scores {
        let post = by_id
            .get(post_id.as_str())
            .ok_or_else(|| Error::Pipeline(format!("scored post {post_id} not in posts.csv")))?;
        let followers = *cfg.follower_counts.get(&post.account).ok_or_else(|| {
            Error::Config(format!(
                "no follower count configured for account {:?}",
                post.account
            ))
        })?;
        let age_days = (harvest - post.created_at).num_seconds() as f64 / 86_400.0;
        if age_days <= 0.0 {
            return Err(Error::Pipeline(format!(
                "post {post_id} is newer than the harvest instant"
            )));
        }
        let seconds = post.created_at.time().signed_duration_since(
            chrono::NaiveTime::from_hms_opt(0, 0, 0).expect("midnight"),
        );
        rows.push(CovariateRow {
            post_id: post_id.clone(),
            party: match post.party {
                Party::Rep => 1.0,
                Party::Dem => 0.0,
            },
            episodicity: s.episodic,
            thematicity: s.thematic,
            is_reshare: if post.is_reshare { 1.0 } else { 0.0 },
            time_of_day: seconds.num_seconds() as f64 / 3600.0,
            message_length: post.text.chars().count() as f64,
            sqrt_proximity: election_proximity(post.created_at, &cfg.election_dates)?,
            offset_log: compute_offset(followers, age_days)?,
            y: post.reshare_count,
        });
    }
    Ok(rows)
}

fn fmt_estimate(v: f64, paper_style: bool) -> String {
    if paper_style {
        format!("{v:.3}")
    } else {
        format!("{v:.6}")
    }
}

/// Fits the full interaction model, compares Poisson against the negative
/// binomial, backward-eliminates interactions, and writes
/// `coefficients.csv`, `irr.csv`, `lrtests.csv` and `family_test.csv`.
pub fn run_fit(cfg: &AnalysisConfig, paper_style: bool) -> Result<FitSummary> {
    let posts_path = cfg.output_dir.join("posts.csv");
    let scores_path = cfg.output_dir.join("scores.csv");
    let posts = read_posts(&posts_path)?;
    let scores = read_scores(&scores_path)?;
    let rows = build_covariate_rows(cfg, &posts, &scores)?;
    if rows.is_empty() {
        return Err(Error::Pipeline("no observations to fit".into()));
    }

    let full_spec = ModelSpec::full_interaction_model();
    let design = build_design(&rows, &full_spec)?;
    let poisson = fit_poisson(&design)?;
    let negbin = fit_negbin(&design)?;
    let family_test = lr_test(&poisson, &negbin, 1)?;
    // The dispersion null sits on the parameter-space boundary: the
    // chi-square(1) p-value is conservative and halving it is exact.
    let p_boundary = if family_test.statistic > 0.0 {
        family_test.p_value / 2.0
    } else {
        1.0
    };
    let family = if p_boundary < cfg.elimination_alpha && !negbin.poisson_limit {
        Family::NegativeBinomial
    } else {
        Family::Poisson
    };

    let (final_fit, trail) = backward_eliminate(&rows, &full_spec, cfg.elimination_alpha, family)?;

    let family_path = cfg.output_dir.join("family_test.csv");
    let mut w = csv_writer(&family_path)?;
    write_row(
        &mut w,
        &["comparison", "df", "statistic", "p_value", "p_value_boundary"],
    )?;
    write_row(
        &mut w,
        &[
            "poisson_vs_negative_binomial",
            "1",
            &fmt_estimate(family_test.statistic, paper_style),
            &fmt_estimate(family_test.p_value, paper_style),
            &fmt_estimate(p_boundary, paper_style),
        ],
    )?;
    w.flush().map_err(|e| Error::io(&family_path, e))?;

    let coefficients_path = cfg.output_dir.join("coefficients.csv");
    let mut w = csv_writer(&coefficients_path)?;
    write_row(&mut w, &["term", "beta", "se", "z", "p"])?;
    for (i, term) in final_fit.terms.iter().enumerate() {
        write_row(
            &mut w,
            &[
                term,
                &fmt_estimate(final_fit.coefficients[i], paper_style),
                &fmt_estimate(final_fit.standard_errors[i], paper_style),
                &fmt_estimate(final_fit.z_values[i], paper_style),
                &fmt_estimate(final_fit.p_values[i], paper_style),
            ],
        )?;
    }
    w.flush().map_err(|e| Error::io(&coefficients_path, e))?;

    let irr_path = cfg.output_dir.join("irr.csv");
    let mut w = csv_writer(&irr_path)?;
    write_row(&mut w, &["term", "irr"])?;
    for (term, irr) in incidence_rate_ratios(&final_fit) {
        write_row(&mut w, &[&term, &fmt_estimate(irr, paper_style)])?;
    }
    w.flush().map_err(|e| Error::io(&irr_path, e))?;

    let lrtests_path = cfg.output_dir.join("lrtests.csv");
    let mut w = csv_writer(&lrtests_path)?;
    write_row(&mut w, &["step", "dropped_term", "df", "statistic", "p"])?;
    for (i, step) in trail.iter().enumerate() {
        write_row(
            &mut w,
            &[
                &(i + 1).to_string(),
                &step.dropped_term,
                &step.test.df.to_string(),
                &fmt_estimate(step.test.statistic, paper_style),
                &fmt_estimate(step.test.p_value, paper_style),
            ],
        )?;
    }
    w.flush().map_err(|e| Error::io(&lrtests_path, e))?;

    let mut manifest = RunManifest::load_or_new(cfg);
    manifest.record(
        cfg,
        "fit",
        &[posts_path, scores_path],
        &[family_path, coefficients_path, irr_path, lrtests_path],
        &[("family", family.name().to_string())],
    )?;

    Ok(FitSummary {
        observations: rows.len(),
        family,
        dropped_terms: trail.iter().map(|s| s.dropped_term.clone()).collect(),
        final_term_count: final_fit.terms.len(),
    })
}

// ---------------------------------------------------------------------
// report
// ---------------------------------------------------------------------

#[derive(Debug)]
pub struct ReportSummary {
    pub retweet_rows: usize,
    pub aspect_rows: usize,
    pub topic_rows: usize,
}

/// Emits the raw figure-data series: reshare counts over time, aspect
/// scores over time, and the posterior matrix keyed by post, all sorted
/// by post date.
pub fn run_report(cfg: &AnalysisConfig) -> Result<ReportSummary> {
    let posts_path = cfg.output_dir.join("posts.csv");
    let scores_path = cfg.output_dir.join("scores.csv");
    let corpus_path = cfg.output_dir.join("corpus.csv");
    let theta_path = cfg.output_dir.join("theta.csv");
    let posts = read_posts(&posts_path)?;
    let scores = read_scores(&scores_path)?;
    let corpus = read_corpus_rows(&corpus_path)?;
    let theta = read_theta(&theta_path)?;
    let by_id: BTreeMap<&str, &Post> = posts.iter().map(|p| (p.id.as_str(), p)).collect();

    let chrono_key = |p: &Post| (p.created_at, p.id.clone());

    let retweets_path = cfg.output_dir.join("fig_retweets.csv");
    let mut ordered: Vec<&Post> = posts.iter().collect();
    ordered.sort_by_key(|p| chrono_key(p));
    let mut w = csv_writer(&retweets_path)?;
    write_row(&mut w, &["date", "party", "reshare_count"])?;
    for p in &ordered {
        write_row(
            &mut w,
            &[
                &fmt_timestamp(&p.created_at),
                p.party.as_str(),
                &p.reshare_count.to_string(),
            ],
        )?;
    }
    w.flush().map_err(|e| Error::io(&retweets_path, e))?;

    let aspect_path = cfg.output_dir.join("fig_aspect.csv");
    let mut scored: Vec<(&Post, &ContentScores)> = scores
        .iter()
        .map(|(id, s)| {
            by_id
                .get(id.as_str())
                .map(|p| (*p, s))
                .ok_or_else(|| Error::Pipeline(format!("scored post {id} not in posts.csv")))
        })
        .collect::<Result<_>>()?;
    scored.sort_by_key(|(p, _)| chrono_key(p));
    let mut w = csv_writer(&aspect_path)?;
    write_row(&mut w, &["date", "party", "e", "t"])?;
    for (p, s) in &scored {
        write_row(
            &mut w,
            &[
                &fmt_timestamp(&p.created_at),
                p.party.as_str(),
                &fmt_matrix_value(s.episodic),
                &fmt_matrix_value(s.thematic),
            ],
        )?;
    }
    w.flush().map_err(|e| Error::io(&aspect_path, e))?;

    // Posterior rows belong to parsable documents in corpus order.
    let parsable_ids: Vec<&str> = corpus
        .iter()
        .filter(|r| r.parsable)
        .map(|r| r.post_id.as_str())
        .collect();
    if parsable_ids.len() != theta.len() {
        return Err(Error::Pipeline(format!(
            "corpus/theta mismatch: {} parsable documents vs {} posterior rows",
            parsable_ids.len(),
            theta.len()
        )));
    }
    let topics_path = cfg.output_dir.join("fig_topics.csv");
    let num_topics = theta[0].len();
    let mut rows: Vec<(&Post, &Vec<f64>)> = parsable_ids
        .iter()
        .zip(&theta)
        .map(|(id, row)| {
            by_id
                .get(id)
                .map(|p| (*p, row))
                .ok_or_else(|| Error::Pipeline(format!("document {id} not in posts.csv")))
        })
        .collect::<Result<_>>()?;
    rows.sort_by_key(|(p, _)| chrono_key(p));
    let mut w = csv_writer(&topics_path)?;
    let mut header: Vec<String> = vec!["date".into(), "post_id".into()];
    header.extend((0..num_topics).map(|k| format!("topic_{k}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    write_row(&mut w, &header_refs)?;
    for (p, theta_row) in &rows {
        let mut record: Vec<String> = vec![fmt_timestamp(&p.created_at), p.id.clone()];
        record.extend(theta_row.iter().map(|&v| fmt_matrix_value(v)));
        let refs: Vec<&str> = record.iter().map(String::as_str).collect();
        write_row(&mut w, &refs)?;
    }
    w.flush().map_err(|e| Error::io(&topics_path, e))?;

    let mut manifest = RunManifest::load_or_new(cfg);
    manifest.record(
        cfg,
        "report",
        &[posts_path, scores_path, corpus_path, theta_path],
        &[retweets_path, aspect_path, topics_path],
        &[],
    )?;

    Ok(ReportSummary {
        retweet_rows: ordered.len(),
        aspect_rows: scored.len(),
        topic_rows: theta.len(),
    })
}

/// Runs all six stages in order.
pub fn run_all(cfg: &AnalysisConfig, paper_style: bool) -> Result<()> {
    run_ingest(cfg)?;
    run_fetch(cfg)?;
    run_topics(cfg)?;
    run_score(cfg)?;
    run_fit(cfg, paper_style)?;
    run_report(cfg)?;
    Ok(())
}

