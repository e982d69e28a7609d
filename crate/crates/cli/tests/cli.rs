//! Exit-code and surface behavior of the `framecount` binary.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture_conf() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/run.conf")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_framecount"))
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn full_run_succeeds_with_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let conf = fixture_conf();
    let output = run(&[
        "--config",
        conf.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--offline",
        "run",
    ]);
    assert_eq!(output.status.code(), Some(0), "{output:?}");
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("ingest: 300 posts parsed"));
    assert!(stdout.contains("fit:"));
    assert!(out.join("coefficients.csv").exists());
    assert!(out.join("fig_topics.csv").exists());
}

#[test]
fn missing_config_is_exit_two() {
    let output = run(&["--config", "/nonexistent/run.conf", "ingest"]);
    assert_eq!(output.status.code(), Some(2), "{output:?}");
}

#[test]
fn missing_upstream_artifacts_are_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let conf = fixture_conf();
    // score before any upstream stage ran
    let output = run(&[
        "--config",
        conf.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "score",
    ]);
    assert_eq!(output.status.code(), Some(2), "{output:?}");
}

#[test]
fn missing_labeling_file_is_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let conf = fixture_conf();
    for stage in ["ingest", "fetch", "topics"] {
        let output = run(&[
            "--config",
            conf.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            stage,
        ]);
        assert_eq!(output.status.code(), Some(0), "{stage}: {output:?}");
    }
    // A config whose labeling path points nowhere.
    let orig = fs::read_to_string(&conf).unwrap();
    let broken = orig.replace("labeling_path=labeling.csv", "labeling_path=missing.csv");
    assert_ne!(orig, broken);
    let broken_conf = fixture_conf().parent().unwrap().join("broken.conf");
    let broken_conf = {
        // Write next to the fixture so relative paths still resolve.
        let tmp = dir.path().join("broken.conf");
        let rebased = broken.replace(
            "archive_paths=archive_",
            &format!(
                "archive_paths={}/archive_",
                broken_conf.parent().unwrap().display()
            ),
        );
        let rebased = rebased.replace(
            "replay_fixture_dir=pages",
            &format!(
                "replay_fixture_dir={}/pages",
                fixture_conf().parent().unwrap().display()
            ),
        );
        fs::write(&tmp, rebased).unwrap();
        tmp
    };
    let output = run(&[
        "--config",
        broken_conf.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "score",
    ]);
    assert_eq!(output.status.code(), Some(2), "{output:?}");
}

#[test]
fn degenerate_design_is_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let fixtures = fixture_conf().parent().unwrap().to_path_buf();
    // Single-party archive: the party column is constant, which the
    // design builder rejects as degenerate.
    let conf_text = format!(
        "archive_paths={}/archive_dem.jsonl\n\
         replay_fixture_dir={}/pages\n\
         offline=true\n\
         topic_count=3\n\
         lda_sweeps=200\n\
         lda_burn_in=50\n\
         seed=42\n\
         labeling_path={}/labeling.csv\n\
         election_dates=2014-11-04\n\
         follower_counts.demparty=350000\n\
         harvest_instant=2014-05-25T12:00:00Z\n",
        fixtures.display(),
        fixtures.display(),
        fixtures.display()
    );
    let conf = dir.path().join("dem_only.conf");
    fs::write(&conf, conf_text).unwrap();
    for stage in ["ingest", "fetch", "topics", "score"] {
        let output = run(&[
            "--config",
            conf.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            stage,
        ]);
        assert_eq!(output.status.code(), Some(0), "{stage}: {output:?}");
    }
    let output = run(&[
        "--config",
        conf.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "fit",
    ]);
    assert_eq!(output.status.code(), Some(3), "{output:?}");
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("degenerate column party"), "{stderr}");
}

#[test]
fn seed_override_changes_the_model() {
    let dir = tempfile::tempdir().unwrap();
    let conf = fixture_conf();
    let mut thetas = Vec::new();
    for seed in ["42", "43"] {
        let out = dir.path().join(format!("out{seed}"));
        for stage in ["ingest", "fetch", "topics"] {
            let output = run(&[
                "--config",
                conf.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--seed",
                seed,
                stage,
            ]);
            assert_eq!(output.status.code(), Some(0), "{stage}: {output:?}");
        }
        thetas.push(fs::read_to_string(out.join("theta.csv")).unwrap());
    }
    assert_ne!(thetas[0], thetas[1], "different seeds must change the fit");
}
