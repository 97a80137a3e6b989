use std::path::Path;
use std::process::{Command, Output};

fn morphlab(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_morphlab"));
    cmd.args(args).env_remove("MORPHLAB_OUT");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

const QUICK: &[&str] = &[
    "--seeds",
    "2",
    "--epochs1",
    "3",
    "--epochs2",
    "2",
    "--jobs",
    "1",
];

#[test]
fn unknown_experiment_fails_with_valid_range() {
    let out = morphlab(&["--experiment", "9"], &[]);
    assert!(!out.status.success());
    assert!(text(&out.stderr).contains("1..5"), "{}", text(&out.stderr));
}

#[test]
fn check_gradients_reports_max_error() {
    let out = morphlab(&["--check-gradients"], &[]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    assert!(stdout.contains("max relative error"), "{stdout}");
}

#[test]
fn run_writes_curves_summary_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let mut args = vec!["--experiment", "5", "--out", out_dir.to_str().unwrap()];
    args.extend_from_slice(QUICK);
    let out = morphlab(&args, &[]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let curves = std::fs::read_to_string(out_dir.join("curves.csv")).unwrap();
    assert!(curves.starts_with("experiment,condition,phase,seed,epoch,category,split,accuracy\n"));
    assert!(curves.contains("5,fixed->harmony,2,1,2,inflection-2,test,"));
    let summary = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert!(summary.lines().count() > 1);
    let manifest = std::fs::read_to_string(out_dir.join("manifest.txt")).unwrap();
    assert!(manifest.contains("seeds=0,1"), "{manifest}");
    assert!(manifest.contains("exp5.epochs2=2"), "{manifest}");
    assert!(out_dir.join("orderings.csv").exists());
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["--experiment", "1", "--condition", "suffix1->suffix1"];
    args.extend_from_slice(QUICK);
    let out = morphlab(&args, &[("MORPHLAB_OUT", dir.path())]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let curves = std::fs::read_to_string(dir.path().join("curves.csv")).unwrap();
    assert!(curves
        .lines()
        .skip(1)
        .all(|l| l.starts_with("1,suffix1->suffix1,")));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    let out_dir = dir.path().join("out");
    std::fs::write(
        &cfg,
        format!(
            "# quick run\nexperiment = 2\nseeds = 1\nepochs1 = 2\nepochs2 = 9\njobs = 1\nout = {}\n",
            out_dir.display()
        ),
    )
    .unwrap();
    let out = morphlab(&["--config", cfg.to_str().unwrap(), "--epochs2", "1"], &[]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let manifest = std::fs::read_to_string(out_dir.join("manifest.txt")).unwrap();
    assert!(manifest.contains("exp2.epochs2=1"), "{manifest}");
    assert!(manifest.contains("exp2.epochs1=2"), "{manifest}");
    assert!(manifest.contains("experiments=2\n"), "{manifest}");
}

#[test]
fn bad_config_key_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "epochz = 3\n").unwrap();
    let out = morphlab(&["--config", cfg.to_str().unwrap()], &[]);
    assert!(!out.status.success());
    assert!(
        text(&out.stderr).contains("epochz"),
        "{}",
        text(&out.stderr)
    );
}

#[test]
fn unmatched_condition_fails() {
    let out = morphlab(
        &["--experiment", "3", "--condition", "nope", "--seeds", "1"],
        &[],
    );
    assert!(!out.status.success());
    assert!(text(&out.stderr).contains("nope"));
}
