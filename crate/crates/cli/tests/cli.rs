//! End-to-end tests of the `inkrec` binary: real process spawns, real file
//! trees, real exit codes.

use std::path::Path;
use std::process::{Command, Output};

use inkrec_core::atdr::load_catalogue;
use inkrec_core::ink::{Phase, TaskId};

fn inkrec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_inkrec"))
        .args(args)
        .output()
        .expect("binary spawns")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Recursive sorted listing of (relative path, file bytes) pairs.
fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(dir: &Path, root: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        let mut entries: Vec<_> =
            std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for path in entries {
            if path.is_dir() {
                walk(&path, root, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out
}

fn synth(root: &Path, writers: usize, seed: u64, extra: &[&str]) {
    let root_s = root.to_string_lossy().into_owned();
    let writers_s = writers.to_string();
    let seed_s = seed.to_string();
    let mut args =
        vec!["synth", "--root", &root_s, "--writers", &writers_s, "--seed", &seed_s];
    args.extend_from_slice(extra);
    assert_success(&inkrec(&args));
}

#[test]
fn synth_writes_the_full_layout_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let root_a = dir.path().join("a");
    let root_b = dir.path().join("b");
    synth(&root_a, 20, 42, &[]);
    synth(&root_b, 20, 42, &[]);

    let tree_a = tree(&root_a);
    assert_eq!(tree_a.len(), 20 * 4 * 6, "20 writers × 4 phases × 6 tasks");
    for phase in Phase::ALL {
        for task in TaskId::ALL {
            let rel = format!("w00/{}/{}.ink", phase.as_str(), task.as_str());
            assert!(tree_a.iter().any(|(p, _)| *p == rel), "missing {rel}");
        }
    }
    assert_eq!(tree_a, tree(&root_b), "same invocation twice yields identical trees");
}

#[test]
fn synth_rejects_a_single_writer() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("data").to_string_lossy().into_owned();
    let out = inkrec(&["synth", "--root", &root, "--writers", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("invalid parameters"), "stderr: {}", stderr(&out));
}

#[test]
fn train_catalogue_writes_eight_parseable_deterministic_files() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("data");
    synth(&root, 4, 7, &[]);

    let root_s = root.to_string_lossy().into_owned();
    let out_a = dir.path().join("cat_a").to_string_lossy().into_owned();
    let out_b = dir.path().join("cat_b").to_string_lossy().into_owned();
    for out_dir in [&out_a, &out_b] {
        assert_success(&inkrec(&[
            "train-catalogue",
            "--root",
            &root_s,
            "--out",
            out_dir,
            "--epochs",
            "5",
        ]));
    }

    let mut names: Vec<String> = std::fs::read_dir(&out_a)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names.len(), 8, "4 words × 2 channels");
    for name in &names {
        let catalogue = load_catalogue(&Path::new(&out_a).join(name)).unwrap();
        assert!(name.starts_with(&catalogue.word_id.to_string()), "{name}");
        assert_eq!(
            std::fs::read(Path::new(&out_a).join(name)).unwrap(),
            std::fs::read(Path::new(&out_b).join(name)).unwrap(),
            "same seed twice is bit-identical: {name}"
        );
    }
}

#[test]
fn train_catalogue_fails_without_a_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("nowhere").to_string_lossy().into_owned();
    let out = inkrec(&["train-catalogue", "--root", &root]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("data");
    synth(&root, 5, 99, &[]);

    let root_s = root.to_string_lossy().into_owned();
    let report_a = dir.path().join("a.json").to_string_lossy().into_owned();
    let report_b = dir.path().join("b.json").to_string_lossy().into_owned();
    for report in [&report_a, &report_b] {
        assert_success(&inkrec(&[
            "eval",
            "--root",
            &root_s,
            "--method",
            "msvq",
            "--phases",
            "SEIF",
            "--out",
            report,
        ]));
    }
    let bytes_a = std::fs::read(&report_a).unwrap();
    assert_eq!(bytes_a, std::fs::read(&report_b).unwrap());
    let report: serde_json::Value = serde_json::from_slice(&bytes_a).unwrap();
    assert_eq!(report["method"], "msvq");
}

#[test]
fn eval_on_a_noiseless_still_corpus_identifies_everyone() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("data");
    synth(&root, 5, 3, &["--noise", "0", "--fatigue", "0,0,0,0"]);

    let root_s = root.to_string_lossy().into_owned();
    let out = inkrec(&["eval", "--root", &root_s, "--method", "dtw"]);
    assert_success(&out);
    let report: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("stdout is the JSON report");
    let phases = report["phases"].as_array().unwrap();
    assert_eq!(phases.len(), 3, "default test phases");
    for phase in phases {
        assert_eq!(
            phase["identification"]["idr"], 100.0,
            "noiseless fatigue-0 probes are byte-identical to enrolment: {}",
            phase["phase"]
        );
    }
}

#[test]
fn eval_names_a_missing_phase_directory() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("data");
    synth(&root, 3, 5, &[]);
    std::fs::remove_dir_all(root.join("w01").join("SEIF")).unwrap();

    let root_s = root.to_string_lossy().into_owned();
    let out =
        inkrec(&["eval", "--root", &root_s, "--method", "dtw", "--phases", "SEIF"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("SEIF"), "stderr names the phase: {}", stderr(&out));
}

#[test]
fn eval_rejects_an_unknown_method() {
    let out = inkrec(&["eval", "--root", "/data", "--method", "cnn"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn eval_config_file_drives_a_run_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("data");
    synth(&root, 4, 21, &[]);

    let config_path = dir.path().join("run.conf");
    std::fs::write(
        &config_path,
        format!(
            "# nightly signature run\nroot = {}\nmethod = dtw\nphases = MEIF\nagg = mean\n",
            root.display()
        ),
    )
    .unwrap();
    let config_s = config_path.to_string_lossy().into_owned();

    let out = inkrec(&["eval", "--config", &config_s]);
    assert_success(&out);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["params"]["agg"], "mean");
    assert_eq!(report["phases"][0]["phase"], "MEIF");

    let out = inkrec(&["eval", "--config", &config_s, "--agg", "min"]);
    assert_success(&out);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["params"]["agg"], "min", "flag overrides file");
}

#[test]
fn atdr_eval_uses_catalogues_from_the_default_directory() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("data");
    synth(&root, 3, 17, &[]);
    let root_s = root.to_string_lossy().into_owned();

    // no catalogues yet → data error pointing at train-catalogue
    let out = inkrec(&["eval", "--root", &root_s, "--method", "atdr", "--phases", "SEIF"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("train-catalogue"), "{}", stderr(&out));

    assert_success(&inkrec(&["train-catalogue", "--root", &root_s, "--epochs", "5"]));
    let out = inkrec(&["eval", "--root", &root_s, "--method", "atdr", "--phases", "SEIF"]);
    assert_success(&out);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["phases"][0]["per_word"].as_array().unwrap().len(), 4);
    assert_eq!(report["params"]["w_air"], 0.5);
}

#[test]
fn stats_pairs_files_and_reports_degenerate_differences_in_band() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("MEIF.txt");
    let b = dir.path().join("SEIF.txt");
    let c = dir.path().join("POST.txt");
    std::fs::write(&a, "0.5\n0.75\n1.0\n1.5\n2.0\n").unwrap();
    std::fs::write(&b, "0.5\n0.75\n1.0\n1.5\n2.0\n").unwrap();
    std::fs::write(&c, "0.9\n1.1\n1.6\n2.2\n2.4\n").unwrap();
    let (a_s, b_s, c_s) = (
        a.to_string_lossy().into_owned(),
        b.to_string_lossy().into_owned(),
        c.to_string_lossy().into_owned(),
    );

    let out = inkrec(&["stats", &a_s, &b_s, &c_s, "--replicates", "200"]);
    assert_success(&out);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let pairs = report["pairs"].as_array().unwrap();
    assert_eq!(pairs.len(), 3, "three files form three pairs");
    assert_eq!(pairs[0]["a"], "MEIF");
    assert_eq!(pairs[0]["b"], "SEIF");
    assert!(
        pairs[0]["wilcoxon"]["error"].as_str().unwrap().contains("zero"),
        "identical files are reported, not fatal: {}",
        pairs[0]["wilcoxon"]
    );
    assert!(pairs[1]["wilcoxon"]["p_value"].is_number());
}

#[test]
fn help_exits_zero_and_shows_subcommands() {
    let out = inkrec(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for name in ["synth", "train-catalogue", "eval", "stats"] {
        assert!(text.contains(name), "help lists {name}");
    }
}
