mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use clipforge::config::RunConfig;
use clipforge::detection::{map50, merge_detections, read_detections, DetectionSet};
use clipforge::engine::Engine;

const TINY: &str = "\
seed = 3
corpus.train_videos = 6
corpus.test_videos = 4
corpus.frames = 16
corpus.size = 16
engine.widths = 4,8
engine.hidden = 8
engine.resolutions = 16,12,8,4
phase1.epochs = 2
phase1.milestones =
phase2.epochs = 2
phase3.epochs = 2
";

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn clipforge(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clipforge"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = clipforge(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("run.conf.in");
    fs::write(&path, format!("{TINY}{extra}")).unwrap();
    path.display().to_string()
}

/// Every file under `root` by relative path.
fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|r| r.unwrap().iter().map(str::to_string).collect()).collect()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(clipforge(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(clipforge(dir.path(), &["--bogus", "gen"]).status.code(), Some(1));
    assert_eq!(clipforge(dir.path(), &[]).status.code(), Some(1));
    assert_eq!(clipforge(dir.path(), &["--threads", "0", "gen"]).status.code(), Some(1));

    let bad = dir.path().join("bad.conf");
    fs::write(&bad, "seed = 2\ncorpus.colour = 3\n").unwrap();
    let out = clipforge(dir.path(), &["--config", bad.to_str().unwrap(), "gen"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("corpus.colour"));

    let out = clipforge(dir.path(), &["--out", "nothing", "train"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gen"));
}

#[test]
fn gen_is_idempotent_and_honours_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.conf");
    fs::write(&cfg, "corpus.train_videos = 30\ncorpus.frames = 8\ncorpus.size = 16\nengine.resolutions = 16,12,8,4\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    ok(dir.path(), &["--config", cfg, "--seed", "7", "--out", "a", "gen"]);
    ok(dir.path(), &["--config", cfg, "--seed", "7", "--out", "b", "gen"]);
    let manifest = |d: &str| fs::read(dir.path().join(d).join("corpus/train/manifest.csv")).unwrap();
    assert_eq!(manifest("a"), manifest("b"));
    let rows = csv_rows(&dir.path().join("a/corpus/train/manifest.csv"));
    assert_eq!(rows.len(), 30);
    assert_eq!(rows.iter().filter(|r| r[2] == "1").count(), 20);
    assert_eq!(snapshot(&dir.path().join("a/corpus")), snapshot(&dir.path().join("b/corpus")));
}

fn pipeline(dir: &Path, cfg: &str, threads: &str) {
    let base = ["--config", cfg, "--out", "run", "--threads", threads];
    let with = |extra: &[&str]| -> Vec<String> { base.iter().chain(extra).map(|s| s.to_string()).collect() };
    for extra in [
        &["gen"][..],
        &["train"],
        &["eval", "--checkpoint", "run/checkpoints/phase3.clpf"],
        &["eval", "--checkpoint", "run/checkpoints/phase3.clpf", "--mode", "baseline"],
        &["select", "--checkpoint", "run/checkpoints/phase3.clpf", "--budget", "2", "--variant", "s1"],
        &["select", "--checkpoint", "run/checkpoints/phase3.clpf", "--budget", "2", "--variant", "s2"],
        &["flops-report"],
    ] {
        let args = with(extra);
        ok(dir, &args.iter().map(String::as_str).collect::<Vec<_>>());
    }
}

#[test]
fn pipeline_outputs_are_byte_identical_and_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    pipeline(dir.path(), &cfg, "1");
    let run = dir.path().join("run");
    let first = snapshot(&run);
    fs::remove_dir_all(&run).unwrap();
    pipeline(dir.path(), &cfg, "3");
    assert_eq!(first, snapshot(&run));

    let history = csv_rows(&run.join("history.csv"));
    assert_eq!(history.len(), 6);
    for p in 1..=3 {
        assert!(run.join(format!("checkpoints/phase{p}.clpf")).exists());
    }

    let config = RunConfig::parse(&fs::read_to_string(&cfg).unwrap()).unwrap();
    let full = Engine::new(config.engine.clone()).unwrap().full_step_cost().unwrap();
    let baseline = &csv_rows(&run.join("eval_test_baseline.csv"))[0];
    assert_eq!(baseline[8].parse::<f64>().unwrap(), (16 * full) as f64);
    for stem in ["eval_test_baseline", "eval_test_policy"] {
        let row = &csv_rows(&run.join(format!("{stem}.csv")))[0];
        assert!((0.0..=1.0).contains(&row[3].parse::<f64>().unwrap()));
        let usage: f64 = csv_rows(&run.join(format!("{stem}_usage.csv")))
            .iter()
            .map(|r| r[3].parse::<f64>().unwrap())
            .sum();
        assert!((usage - 1.0).abs() < 1e-5);
    }
    let flops = csv_rows(&run.join("flops_video.csv"));
    assert_eq!(flops[0][2], (16 * full).to_string());

    let s1 = fs::read(run.join("distilled/S1/scores/synth00000.csv")).unwrap();
    let s2 = fs::read(run.join("distilled/S2/scores/synth00000.csv")).unwrap();
    assert_ne!(s1, s2);
    let kept = csv_rows(&run.join("distilled/S1/manifest.csv"));
    assert_eq!(kept.len(), 4);
}

#[test]
fn full_budget_selection_copies_videos() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let base = ["--config", cfg.as_str(), "--out", "run"];
    ok(dir.path(), &[&base[..], &["gen"]].concat());
    ok(dir.path(), &[&base[..], &["train"]].concat());
    let ckpt = ["--checkpoint", "run/checkpoints/phase3.clpf"];
    ok(dir.path(), &[&base[..], &["select", "--budget", "16"], &ckpt].concat());
    let test = dir.path().join("run/corpus/test");
    let distilled = dir.path().join("run/distilled/S1");
    for row in csv_rows(&test.join("manifest.csv")) {
        assert_eq!(fs::read(test.join(&row[1])).unwrap(), fs::read(distilled.join(&row[1])).unwrap());
    }
    let out = clipforge(dir.path(), &[&base[..], &["select", "--budget", "17"], &ckpt].concat());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn train_divergence_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "phase1.lr = 1e12\ntrain.weight_decay = 0\n");
    ok(dir.path(), &["--config", &cfg, "--out", "run", "gen"]);
    let out = clipforge(dir.path(), &["--config", &cfg, "--out", "run", "train"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("training diverged in phase"));
}

fn detect_map(dir: &Path, gt: &Path, pred: &Path) -> f64 {
    let out = dir.join("det");
    ok(
        dir,
        &["--out", out.to_str().unwrap(), "detect-eval", "--gt", gt.to_str().unwrap(), "--pred", pred.to_str().unwrap()],
    );
    let rows = csv_rows(&out.join("detect_metrics.csv"));
    let last = rows.last().unwrap();
    assert_eq!(last[0], "all");
    last[1].parse().unwrap()
}

fn load(path: &Path) -> Vec<DetectionSet> {
    read_detections(fs::File::open(path).unwrap()).unwrap()
}

#[test]
fn detect_eval_on_fixture_matches_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let (gt, pred) = (fixture("detect_gt.csv"), fixture("detect_pred.csv"));
    let map = detect_map(dir.path(), &gt, &pred);

    let sets = merge_detections(load(&gt), load(&pred));
    let report = map50(&sets).unwrap();
    let oracle: f64 = report
        .classes
        .iter()
        .map(|c| common::detect::sweep_oracle(&sets, c.class_id))
        .sum::<f64>()
        / report.classes.len() as f64;
    assert!((map - oracle).abs() < 1e-9, "{map} vs {oracle}");

    let f1 = &csv_rows(&dir.path().join("det/detect_f1.csv"))[0];
    assert_eq!(f1[0], "0.5");
    let pr = csv_rows(&dir.path().join("det/pr_curve.csv"));
    assert_eq!(pr.len(), 9);
}

#[test]
fn detect_eval_perfect_and_empty_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let gt = fixture("detect_gt.csv");
    let text = fs::read_to_string(&gt).unwrap();
    let perfect = dir.path().join("perfect.csv");
    let body: Vec<String> = text.lines().skip(1).map(|l| format!("{l}0.9")).collect();
    fs::write(&perfect, format!("{}\n{}\n", text.lines().next().unwrap(), body.join("\n"))).unwrap();
    assert_eq!(detect_map(dir.path(), &gt, &perfect), 1.0);

    let empty = dir.path().join("empty.csv");
    fs::write(&empty, format!("{}\n", text.lines().next().unwrap())).unwrap();
    assert_eq!(detect_map(dir.path(), &gt, &empty), 0.0);

    let broken = dir.path().join("broken.csv");
    fs::write(&broken, format!("{}a,0,1,1,2,2,0.5\nb,0,1,1,x,2,0.5\n", text.lines().next().unwrap().to_string() + "\n")).unwrap();
    let out = clipforge(
        dir.path(),
        &["detect-eval", "--gt", gt.to_str().unwrap(), "--pred", broken.to_str().unwrap()],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}
