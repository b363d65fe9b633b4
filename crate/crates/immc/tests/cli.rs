use std::path::Path;
use std::process::{Command, Output};

use immc::io::{self, ImmcModelFile, ModelBody};
use immc_core::{Alphabet, Hyperparams, ModelParams};

fn immc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_immc"))
        .args(args)
        .current_dir(dir)
        .env_remove("IMMC_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = immc(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn generate_small(dir: &Path, out: &str) {
    ok(dir, &["generate", "--testcase", "III", "--size", "small", "--seed", "7", "--out", out]);
}

#[test]
fn generate_is_deterministic_and_sized() {
    let dir = tempfile::tempdir().unwrap();
    generate_small(dir.path(), "a");
    generate_small(dir.path(), "b");
    for f in ["corpus.jsonl", "truth.jsonl"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    let corpus = io::load_corpus(&dir.path().join("a/corpus.jsonl"), io::CorpusFormat::Jsonl).unwrap();
    assert!(corpus.total_events() >= 2_500);
    let truth = io::read_labels(&dir.path().join("a/truth.jsonl")).unwrap();
    assert_eq!(truth.iter().map(|r| r.labels.len()).sum::<usize>(), corpus.total_events());
}

#[test]
fn unknown_testcase_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = immc(dir.path(), &["generate", "--testcase", "IV"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    assert!(!out.stderr.is_empty());
}

#[test]
fn fit_writes_artifacts_and_scores() {
    let dir = tempfile::tempdir().unwrap();
    generate_small(dir.path(), "data");
    let stdout = ok(
        dir.path(),
        &["fit", "--corpus", "data/corpus.jsonl", "--truth", "data/truth.jsonl", "--iters", "5", "--burn-in", "5", "--out", "run"],
    );
    assert!(stdout.contains("error_rate"), "{stdout}");
    for f in ["model.json", "segmentation.jsonl", "report.json"] {
        assert!(dir.path().join("run").join(f).exists(), "{f}");
    }
    let ModelBody::Immc(m) = io::load_model(&dir.path().join("run/model.json")).unwrap() else { panic!() };
    assert_eq!(m.iterations_run, 10);
    assert_eq!(m.hyperparams.truncation, 20);

    // same seed, same bytes
    ok(
        dir.path(),
        &["fit", "--corpus", "data/corpus.jsonl", "--iters", "5", "--burn-in", "5", "--out", "again"],
    );
    ok(dir.path(), &["fit", "--corpus", "data/corpus.jsonl", "--iters", "5", "--burn-in", "5", "--out", "again2"]);
    for f in ["model.json", "segmentation.jsonl"] {
        assert_eq!(
            std::fs::read(dir.path().join("again").join(f)).unwrap(),
            std::fs::read(dir.path().join("again2").join(f)).unwrap()
        );
    }
}

#[test]
fn fit_guards_and_degenerate_truncation() {
    let dir = tempfile::tempdir().unwrap();
    generate_small(dir.path(), "data");
    let out = immc(dir.path(), &["fit", "--corpus", "data/corpus.jsonl", "--iters", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let out = immc(dir.path(), &["fit", "--corpus", "missing.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.jsonl"));

    let json = ok(
        dir.path(),
        &["--json", "fit", "--corpus", "data/corpus.jsonl", "--L", "1", "--iters", "2", "--burn-in", "0", "--out", "one"],
    );
    let report: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(report["runs"][0]["active_states"], 1);
}

#[test]
fn multiple_seeds_write_one_model_each() {
    let dir = tempfile::tempdir().unwrap();
    generate_small(dir.path(), "data");
    let json = ok(
        dir.path(),
        &["--json", "fit", "--corpus", "data/corpus.jsonl", "--seeds", "1,2,3", "--iters", "2", "--burn-in", "1", "--out", "many"],
    );
    let report: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(report["runs"].as_array().unwrap().len(), 3);
    for s in 1..=3 {
        assert!(dir.path().join(format!("many/model-seed{s}.json")).exists());
    }
    let full: immc::cli::FitRunReport = io::read_json(&dir.path().join("many/report.json")).unwrap();
    assert_eq!(full.chains.len(), 3);
    assert!(full.chains.iter().all(|c| c.log_likelihood.len() == 3));
}

#[test]
fn config_file_sits_between_flags_and_defaults() {
    let dir = tempfile::tempdir().unwrap();
    generate_small(dir.path(), "data");
    std::fs::write(
        dir.path().join("run.toml"),
        "L = 3\nkappa = 7.0\niterations = 2\nburn_in = 1\ncorpus = \"data/corpus.jsonl\"\nout_dir = \"cfg\"\n",
    )
    .unwrap();
    ok(dir.path(), &["--config", "run.toml", "fit", "--L", "2"]);
    let ModelBody::Immc(m) = io::load_model(&dir.path().join("cfg/model.json")).unwrap() else { panic!() };
    assert_eq!(m.hyperparams.truncation, 2);
    assert_eq!(m.hyperparams.kappa, 7.0);
    assert_eq!(m.hyperparams.gamma, 1.0);
    assert_eq!(m.iterations_run, 3);
}

#[test]
fn output_directory_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_immc"))
        .args(["generate", "--testcase", "I"])
        .current_dir(dir.path())
        .env("IMMC_OUT_DIR", "from-env")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("from-env/corpus.jsonl").exists());
    ok(dir.path(), &["generate", "--testcase", "I"]);
    assert!(dir.path().join("immc-out/corpus.jsonl").exists());
}

#[test]
fn segment_and_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    generate_small(dir.path(), "data");
    ok(dir.path(), &["fit", "--corpus", "data/corpus.jsonl", "--iters", "3", "--burn-in", "3", "--out", "run"]);
    ok(dir.path(), &["segment", "--model", "run/model.json", "--corpus", "data/corpus.jsonl", "--out", "s1.jsonl"]);
    ok(dir.path(), &["segment", "--model", "run/model.json", "--corpus", "data/corpus.jsonl", "--out", "s2.jsonl"]);
    assert_eq!(std::fs::read(dir.path().join("s1.jsonl")).unwrap(), std::fs::read(dir.path().join("s2.jsonl")).unwrap());

    let same = ok(dir.path(), &["eval", "--segmentation", "data/truth.jsonl", "--truth", "data/truth.jsonl", "--out", "score.json"]);
    assert_eq!(same.trim().parse::<f64>().unwrap(), 0.0);
    let json = ok(dir.path(), &["--json", "eval", "--segmentation", "s1.jsonl", "--truth", "data/truth.jsonl", "--out", "score.json"]);
    let score: serde_json::Value = serde_json::from_str(&json).unwrap();
    let e = score["error_rate"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&e));
    assert!(dir.path().join("score.json").exists());
}

fn write_cycle_model(path: &Path) {
    // one super state cycling a -> b -> c -> a with certainty
    let a = Alphabet::new(vec!["a".into(), "b".into(), "c".into()]).unwrap();
    let mut p = ModelParams::zeros(1, 4);
    p.beta = vec![1.0];
    p.pi = vec![1.0];
    p.psi_row_mut(0).copy_from_slice(&[0.25; 4]);
    for (c, row) in [[0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [1.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]].iter().enumerate() {
        p.theta_row_mut(0, c).copy_from_slice(row);
    }
    let h = Hyperparams { truncation: 1, ..Hyperparams::default() };
    let mut m = ImmcModelFile::new(h, &a, &p, 0, 0);
    m.state_counts = Some(vec![10]);
    io::save_model(path, &ModelBody::Immc(m)).unwrap();
}

#[test]
fn predict_with_a_deterministic_model() {
    let dir = tempfile::tempdir().unwrap();
    write_cycle_model(&dir.path().join("cycle.json"));
    std::fs::write(
        dir.path().join("test.jsonl"),
        "{\"id\":\"s1\",\"events\":[\"a\",\"b\",\"c\",\"a\",\"b\"]}\n{\"id\":\"s2\",\"events\":[\"a\",\"b\"]}\n",
    )
    .unwrap();
    let acc = ok(dir.path(), &["predict", "--model", "cycle.json", "--corpus", "test.jsonl", "--seed", "3"]);
    assert_eq!(acc.trim(), "1");
    let json = ok(dir.path(), &["--json", "predict", "--model", "cycle.json", "--corpus", "test.jsonl"]);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["accuracy"], 1.0);
    assert_eq!(v["model_kind"], "immc");
}

#[test]
fn baselines_predict_through_the_same_command() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("train.csv"), "id,event\nx,a\nx,b\nx,c\nx,a\nx,b\ny,c\ny,a\ny,b\n").unwrap();
    ok(dir.path(), &["baseline", "--kind", "ngram", "--order", "2", "--corpus", "train.csv", "--out", "ngram.json"]);
    ok(dir.path(), &["baseline", "--kind", "fmmc", "--components", "1", "--corpus", "train.csv", "--out", "fmmc.json"]);
    for (m, kind) in [("ngram.json", "ngram"), ("fmmc.json", "fmmc")] {
        let json = ok(dir.path(), &["--json", "predict", "--model", m, "--corpus", "train.csv"]);
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["model_kind"], kind);
        assert_eq!(v["accuracy"], 1.0, "{m}");
    }
    let out = immc(dir.path(), &["segment", "--model", "ngram.json", "--corpus", "train.csv"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn export_dot_writes_one_graph_per_active_state() {
    let dir = tempfile::tempdir().unwrap();
    write_cycle_model(&dir.path().join("cycle.json"));
    let n = ok(dir.path(), &["export-dot", "--model", "cycle.json", "--out", "graphs"]);
    assert_eq!(n.trim(), "1");
    let g = std::fs::read_to_string(dir.path().join("graphs/state-0.dot")).unwrap();
    let edges = g.lines().filter(|l| l.contains(" -> ") && !l.trim_start().starts_with("entry")).count();
    assert_eq!(edges, 3);
}

#[test]
fn version_flag() {
    let dir = tempfile::tempdir().unwrap();
    let v = ok(dir.path(), &["--version"]);
    assert!(v.contains(env!("CARGO_PKG_VERSION")));
}
