//! End-to-end pipeline tests over the bundled fixture: stage contracts,
//! rerun behavior, and the emitted file formats.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use framecount::config::AnalysisConfig;
use framecount::ingest::content_hash;
use framecount::pipeline;

fn fixture_config() -> AnalysisConfig {
    let conf = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/run.conf");
    AnalysisConfig::from_file(&conf).expect("fixture config parses")
}

/// One completed pipeline run shared by the read-only tests.
fn shared_run() -> &'static Path {
    static RUN: OnceLock<PathBuf> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = tempfile::tempdir().expect("tempdir");
        let mut cfg = fixture_config();
        cfg.output_dir = dir.path().join("out");
        pipeline::run_all(&cfg, false).expect("pipeline runs");
        let path = cfg.output_dir.clone();
        std::mem::forget(dir);
        path
    })
}

fn copy_tree(from: &Path, to: &Path) {
    fs::create_dir_all(to).expect("create dir");
    for entry in fs::read_dir(from).expect("readable dir") {
        let entry = entry.expect("dir entry");
        let target = to.join(entry.file_name());
        if entry.path().is_dir() {
            copy_tree(&entry.path(), &target);
        } else {
            fs::copy(entry.path(), &target).expect("copy file");
        }
    }
}

fn file_hash(path: &Path) -> String {
    content_hash(&fs::read(path).expect("readable file"))
}

#[test]
fn fetch_rerun_is_all_cache_hits() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = fixture_config();
    cfg.output_dir = dir.path().join("out");
    pipeline::run_ingest(&cfg).unwrap();
    let first = pipeline::run_fetch(&cfg).unwrap();
    assert!(first.newly_fetched > 0);
    assert!(first.resolved_ok > 0);
    assert!(first.unresolved > 0);
    let second = pipeline::run_fetch(&cfg).unwrap();
    assert_eq!(second.newly_fetched, 0);
    assert_eq!(second.resolved_ok, first.resolved_ok);
}

#[test]
fn stage_isolation_reproduces_downstream_outputs() {
    let out = shared_run();
    let dir = tempfile::tempdir().unwrap();
    let copy = dir.path().join("out");
    copy_tree(out, &copy);

    // Data outputs of the score, fit and report stages. The manifest is
    // a cross-stage ledger: it stays in place and must converge back to
    // the same bytes after the reruns.
    let downstream = [
        "scores.csv",
        "family_test.csv",
        "coefficients.csv",
        "irr.csv",
        "lrtests.csv",
        "fig_retweets.csv",
        "fig_aspect.csv",
        "fig_topics.csv",
        "manifest.json",
    ];
    let before: Vec<String> = downstream.iter().map(|f| file_hash(&copy.join(f))).collect();
    for f in &downstream[..downstream.len() - 1] {
        fs::remove_file(copy.join(f)).unwrap();
    }

    let mut cfg = fixture_config();
    cfg.output_dir = copy.clone();
    pipeline::run_score(&cfg).unwrap();
    pipeline::run_fit(&cfg, false).unwrap();
    pipeline::run_report(&cfg).unwrap();

    let after: Vec<String> = downstream.iter().map(|f| file_hash(&copy.join(f))).collect();
    assert_eq!(before, after, "rerun from upstream artifacts must reproduce bytes");
}

#[test]
fn emitted_csvs_round_trip_byte_identically() {
    let out = shared_run();
    let csvs = [
        "posts.csv",
        "trim_report.csv",
        "parse_errors.csv",
        "extracted.csv",
        "corpus.csv",
        "scores.csv",
        "family_test.csv",
        "coefficients.csv",
        "irr.csv",
        "lrtests.csv",
        "fig_retweets.csv",
        "fig_aspect.csv",
        "fig_topics.csv",
    ];
    for name in csvs {
        let path = out.join(name);
        let original = fs::read(&path).unwrap();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(original.as_slice());
        let mut rewritten = Vec::new();
        {
            let mut writer = csv::Writer::from_writer(&mut rewritten);
            for record in reader.records() {
                writer.write_record(&record.unwrap()).unwrap();
            }
            writer.flush().unwrap();
        }
        assert_eq!(
            original, rewritten,
            "{name}: parse -> serialize changed bytes"
        );
    }
}

#[test]
fn fixture_accounting_matches_recorded_pages() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = fixture_config();
    cfg.output_dir = dir.path().join("out");
    let ingest = pipeline::run_ingest(&cfg).unwrap();
    assert_eq!(ingest.trim.n_before, 300);
    assert_eq!(ingest.trim.n_removed, 3);

    let fetch = pipeline::run_fetch(&cfg).unwrap();
    assert_eq!(fetch.distinct_urls, fetch.resolved_ok + fetch.unresolved);
    // The fixture records 404s, timeouts, a redirect loop and two URLs
    // with no record at all; none of them may abort the stage.
    assert!(fetch.unresolved >= 4);

    // Binary pages are extracted as unparsable.
    let extracted = fs::read_to_string(cfg.output_dir.join("extracted.csv")).unwrap();
    let img_rows: Vec<&str> = extracted
        .lines()
        .filter(|l| l.starts_with("http://img.example/"))
        .collect();
    assert!(!img_rows.is_empty());
    for row in img_rows {
        assert!(row.contains(",ok,false,0,"), "unexpected image row: {row}");
    }
}

#[test]
fn scores_partition_and_labeling_variants() {
    let out = shared_run();
    let scores = fs::read_to_string(out.join("scores.csv")).unwrap();
    let mut rows = 0;
    for line in scores.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        let e: f64 = cells[1].parse().unwrap();
        let t: f64 = cells[2].parse().unwrap();
        let u: f64 = cells[3].parse().unwrap();
        assert!((e + t + u - 1.0).abs() < 1e-9, "partition broken: {line}");
        rows += 1;
    }
    assert!(rows > 0);

    // An all-thematic labeling forces the episodic column to zero.
    let dir = tempfile::tempdir().unwrap();
    let copy = dir.path().join("out");
    copy_tree(out, &copy);
    let labeling = dir.path().join("all_thematic.csv");
    fs::write(&labeling, "0,thematic\n1,thematic\n2,thematic\n").unwrap();
    let mut cfg = fixture_config();
    cfg.output_dir = copy.clone();
    cfg.labeling_path = Some(labeling);
    pipeline::run_score(&cfg).unwrap();
    let scores = fs::read_to_string(copy.join("scores.csv")).unwrap();
    for line in scores.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        let e: f64 = cells[1].parse().unwrap();
        let u: f64 = cells[3].parse().unwrap();
        // Unparsable documents keep their sentinel u = 1 row.
        assert!(e == 0.0, "episodic mass {e} under all-thematic labeling");
        assert!(u == 0.0 || u == 1.0);
    }
}

#[test]
fn elimination_alpha_moves_only_the_threshold() {
    // A term is removed while its p-value exceeds alpha, so raising alpha
    // can only keep more interactions in the model.
    let out = shared_run();
    let count_drops = |path: &Path| -> usize {
        fs::read_to_string(path.join("lrtests.csv"))
            .unwrap()
            .lines()
            .count()
            - 1
    };
    let drops_at_005 = count_drops(out);

    let dir = tempfile::tempdir().unwrap();
    let copy = dir.path().join("out");
    copy_tree(out, &copy);
    let mut cfg = fixture_config();
    cfg.output_dir = copy.clone();
    cfg.elimination_alpha = 0.99;
    pipeline::run_fit(&cfg, false).unwrap();
    let drops_at_099 = count_drops(&copy);
    assert!(
        drops_at_099 <= drops_at_005,
        "alpha 0.99 dropped {drops_at_099} > alpha 0.05's {drops_at_005}"
    );
}

#[test]
fn paper_style_rounds_to_three_decimals() {
    let out = shared_run();
    let dir = tempfile::tempdir().unwrap();
    let copy = dir.path().join("out");
    copy_tree(out, &copy);
    let mut cfg = fixture_config();
    cfg.output_dir = copy.clone();
    pipeline::run_fit(&cfg, true).unwrap();
    let text = fs::read_to_string(copy.join("coefficients.csv")).unwrap();
    for line in text.lines().skip(1) {
        let beta = line.split(',').nth(1).unwrap();
        let decimals = beta.rsplit('.').next().unwrap().len();
        assert_eq!(decimals, 3, "row not paper-style: {line}");
    }
}

#[test]
fn missing_inputs_are_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = fixture_config();
    cfg.output_dir = dir.path().join("out");

    // score before topics: corpus.csv does not exist yet
    let err = pipeline::run_score(&cfg).unwrap_err();
    assert!(err.is_input_error(), "unexpected error class: {err}");

    // empty archive
    let empty = dir.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    cfg.archive_paths = vec![empty];
    let err = pipeline::run_ingest(&cfg).unwrap_err();
    assert!(err.is_input_error());

    // unreadable archive path
    cfg.archive_paths = vec![dir.path().join("nope.jsonl")];
    let err = pipeline::run_ingest(&cfg).unwrap_err();
    assert!(err.is_input_error());
}

#[test]
fn missing_follower_counts_are_config_errors() {
    let out = shared_run();
    let dir = tempfile::tempdir().unwrap();
    let copy = dir.path().join("out");
    copy_tree(out, &copy);
    let mut cfg = fixture_config();
    cfg.output_dir = copy;
    cfg.follower_counts.clear();
    let err = pipeline::run_fit(&cfg, false).unwrap_err();
    assert!(err.is_input_error());
    assert!(err.to_string().contains("follower count"));
}

#[test]
fn manifest_records_resolved_parameters() {
    let out = shared_run();
    let manifest = fs::read_to_string(out.join("manifest.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    assert_eq!(
        json["stages"]["topics"]["parameters"]["topic_count"],
        serde_json::Value::String("3".into())
    );
    assert!(json["stages"]["fit"]["parameters"]["family"].is_string());
    // Every stage carries input and output digests.
    for stage in ["ingest", "fetch", "topics", "score", "fit", "report"] {
        let record = &json["stages"][stage];
        assert!(
            record["outputs"].as_object().map(|o| !o.is_empty()).unwrap_or(false),
            "{stage} has no recorded outputs"
        );
    }
}

#[test]
fn figure_files_are_sorted_by_date() {
    let out = shared_run();
    for name in ["fig_retweets.csv", "fig_aspect.csv", "fig_topics.csv"] {
        let text = fs::read_to_string(out.join(name)).unwrap();
        let dates: Vec<&str> = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').next().unwrap())
            .collect();
        assert!(!dates.is_empty());
        // RFC 3339 UTC timestamps sort chronologically as strings.
        assert!(
            dates.windows(2).all(|w| w[0] <= w[1]),
            "{name} is not date-sorted"
        );
    }
}

#[test]
fn topic_count_flag_controls_theta_width() {
    let out = shared_run();
    let theta = fs::read_to_string(out.join("theta.csv")).unwrap();
    let first = theta.lines().next().unwrap();
    assert_eq!(first.split(',').count(), 3, "fixture runs with three topics");
    // Every theta row sums to one.
    for line in theta.lines() {
        let sum: f64 = line.split(',').map(|c| c.parse::<f64>().unwrap()).sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }
}
