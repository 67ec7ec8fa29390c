use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cardiotype::dsp;

fn cardiotype(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cardiotype"))
        .args(args)
        .env("CARDIOTYPE_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = cardiotype(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Every file under `root`, keyed by relative path.
fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn files_with_ext(dir: &Path, ext: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == ext))
        .collect();
    v.sort();
    v
}

/// Small dataset and window-100 store: 10 subjects, 2 clips of 20 s.
fn small_store(root: &Path) -> (PathBuf, PathBuf) {
    let data = root.join("data");
    let store = root.join("spec_a");
    ok(&["synth", "--out", p(&data), "--subjects", "10", "--clips", "2", "--duration", "20", "--seed", "3"]);
    ok(&["spectrogram", "--data", p(&data), "--config", "a", "--out", p(&store), "--format", "f32"]);
    (data, store)
}

fn quick_train<'a>(data: &'a Path, store: &'a Path, out: &'a Path) -> Vec<&'a str> {
    vec![
        "train", "--data", p(data), "--store", p(store), "--out", p(out),
        "--dimension", "ext", "--folds", "2", "--epochs", "1", "--input-size", "8",
    ]
}

#[test]
fn help_lists_defaults() {
    let help = ok(&["train", "--help"]);
    for flag in [
        "--folds <FOLDS>",
        "--epochs <EPOCHS>",
        "--batch <BATCH>",
        "--lr <LR>",
        "--momentum <MOMENTUM>",
        "--weight-decay <WEIGHT_DECAY>",
        "--input-size <N>",
        "--granularity <GRANULARITY>",
        "--dimension <DIMENSION>",
        "--category <CATEGORY>",
        "--seed <SEED>",
    ] {
        assert!(help.contains(flag), "missing {flag}:\n{help}");
    }
    for default in ["[default: 10]", "[default: 3]", "[default: 16]", "[default: 0.001]", "[default: 0.9]"] {
        assert!(help.contains(default), "missing {default}:\n{help}");
    }
    let help = ok(&["synth", "--help"]);
    for default in ["[default: 60]", "[default: 90]", "[default: 0.002]"] {
        assert!(help.contains(default), "missing {default}:\n{help}");
    }
}

#[test]
fn synth_writes_the_requested_layout() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    ok(&["synth", "--out", p(&out), "--subjects", "10", "--clips", "4", "--duration", "12"]);
    assert_eq!(files_with_ext(&out.join("signals"), "csv").len(), 40);
    let scores = fs::read_to_string(out.join("scores.csv")).unwrap();
    assert_eq!(scores.lines().count(), 11, "header plus ten rows");
    assert!(out.join("manifest.json").is_file());
}

#[test]
fn synth_is_byte_identical_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &Path, seed: &str| {
        ok(&["synth", "--out", p(out), "--subjects", "3", "--clips", "2", "--duration", "11", "--seed", seed]);
    };
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    args(&a, "9");
    args(&b, "9");
    args(&c, "10");
    assert_eq!(tree(&a), tree(&b));
    assert_ne!(tree(&a), tree(&c));
}

#[test]
fn synth_refuses_a_non_empty_directory() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("keep.txt"), "x").unwrap();
    let base = ["synth", "--out", p(dir.path()), "--subjects", "1", "--clips", "1", "--duration", "10"];
    let out = cardiotype(&base);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--force"));
    let mut forced = base.to_vec();
    forced.push("--force");
    ok(&forced);
}

#[test]
fn spectrogram_counts_and_formats() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["synth", "--out", p(&data), "--subjects", "1", "--clips", "1", "--duration", "30"]);

    let a = dir.path().join("a");
    let stdout = ok(&["spectrogram", "--data", p(&data), "--config", "a", "--out", p(&a), "--format", "f32"]);
    assert!(stdout.contains("3 spectrograms"), "{stdout}");
    let specs = files_with_ext(&a, "spec");
    assert_eq!(specs.len(), 3);
    assert!(files_with_ext(&a, "pgm").is_empty());
    for path in &specs {
        let grid = dsp::read_f32(path).unwrap();
        assert_eq!((grid.height, grid.width), (224, 224));
    }
    let names: Vec<String> = specs.iter().map(|p| p.file_name().unwrap().to_string_lossy().into()).collect();
    assert_eq!(names, ["S01_C01_O0.spec", "S01_C01_O2560.spec", "S01_C01_O5120.spec"]);

    let b = dir.path().join("b");
    let stdout = ok(&["spectrogram", "--data", p(&data), "--config", "b", "--out", p(&b), "--format", "both"]);
    assert!(stdout.contains("overlap 317"), "{stdout}");
    let specs = files_with_ext(&b, "spec");
    let pgms = files_with_ext(&b, "pgm");
    assert_eq!(specs.len(), 3);
    for (s, g) in specs.iter().zip(&pgms) {
        assert_eq!(s.file_stem(), g.file_stem());
        assert!(fs::read(g).unwrap().starts_with(b"P5\n224 224\n255\n"));
    }
}

#[test]
fn invalid_dataset_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = cardiotype(&["spectrogram", "--data", p(dir.path()), "--out", p(&dir.path().join("s"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = p(dir.path());
    for args in [
        vec!["train", "--data", d, "--store", d, "--out", d, "--folds", "1"],
        vec!["train", "--data", d, "--store", d, "--out", d, "--batch", "0"],
        vec!["train", "--data", d, "--store", d, "--out", d, "--dimension", "neu"],
        vec!["synth", "--out", d, "--hr-low", "90", "--hr-high", "60"],
        vec!["train", "--data", d],
        vec!["bogus"],
    ] {
        let out = cardiotype(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn missing_category_clips_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let store = dir.path().join("spec");
    ok(&["synth", "--out", p(&data), "--subjects", "4", "--clips", "12", "--duration", "10"]);
    ok(&["spectrogram", "--data", p(&data), "--out", p(&store), "--format", "f32"]);
    for path in files_with_ext(&store, "spec") {
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        if !["_C10_", "_C11_", "_C12_"].iter().any(|c| name.contains(c)) {
            fs::remove_file(path).unwrap();
        }
    }
    let out = dir.path().join("run");
    let args = [
        "train", "--data", p(&data), "--store", p(&store), "--out", p(&out),
        "--category", "hahv", "--folds", "2", "--input-size", "8",
    ];
    let result = cardiotype(&args);
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert_eq!(result.status.code(), Some(2), "{stderr}");
    assert!(stderr.contains("HAHV"), "{stderr}");
}

#[test]
fn settings_file_sits_between_defaults_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let (data, store) = small_store(dir.path());
    let settings = dir.path().join("run.conf");
    fs::write(&settings, "# quick run\nepochs = 2\nlr = 0.5\nseed=7\n").unwrap();
    let out = dir.path().join("run");
    let mut args = quick_train(&data, &store, &out);
    args.retain(|a| *a != "--epochs" && *a != "1");
    args.extend(["--lr", "0.01", "--settings", p(&settings)]);
    ok(&args);

    let record: serde_json::Value = serde_json::from_slice(&fs::read(out.join("run.json")).unwrap()).unwrap();
    let train = &record["experiment"]["train"];
    assert_eq!(train["epochs"], 2, "file beats default");
    assert_eq!(train["learning_rate"], 0.01, "flag beats file");
    assert_eq!(train["seed"], 7);
    assert_eq!(train["batch_size"], 16, "default survives");

    fs::write(&settings, "learning-rate = 1\n").unwrap();
    let again = cardiotype(&["report", "--out", p(&out), "--settings", p(&settings)]);
    assert_eq!(again.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&again.stderr).contains("unknown setting"));
}

#[test]
fn rerun_report_and_eval_reproduce_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let (data, store) = small_store(dir.path());
    let first = dir.path().join("first");
    let stdout = ok(&quick_train(&data, &store, &first));
    assert!(stdout.contains("window 100 / Ext / ALL"), "{stdout}");
    for file in ["run.json", "report.md", "report.csv", "metrics.json", "window_100/predictions.csv"] {
        assert!(first.join(file).is_file(), "{file}");
    }
    assert_eq!(files_with_ext(&first.join("window_100/checkpoints"), "mdlp").len(), 2);

    let second = dir.path().join("second");
    ok(&["rerun", "--run-json", p(&first.join("run.json")), "--out", p(&second)]);
    assert_eq!(tree(&first), tree(&second));

    let report_csv = fs::read(first.join("report.csv")).unwrap();
    let stdout = ok(&["report", "--out", p(&first), "--format", "csv"]);
    assert_eq!(stdout.as_bytes(), report_csv);
    assert_eq!(fs::read(first.join("report.csv")).unwrap(), report_csv);

    let predictions = fs::read(first.join("window_100/predictions.csv")).unwrap();
    let mut eval = quick_train(&data, &store, &first);
    eval[0] = "eval";
    ok(&eval);
    assert_eq!(fs::read(first.join("window_100/predictions.csv")).unwrap(), predictions);
    assert_eq!(fs::read(first.join("report.csv")).unwrap(), report_csv);
}
