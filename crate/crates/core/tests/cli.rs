use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

fn cauemo(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cauemo"))
        .args(args)
        .current_dir(cwd)
        .env("CAUEMO_OUT_DIR", cwd.join("runs"))
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn read(p: impl AsRef<Path>) -> String {
    fs::read_to_string(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

fn value(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.split_once(" = ").filter(|(k, _)| *k == key).map(|(_, v)| v.to_string()))
        .unwrap_or_else(|| panic!("{key} missing from\n{text}"))
}

fn gen(dir: &Path, name: &str, n: &str, seed: &str) -> String {
    let out = dir.join(name);
    ok(&cauemo(
        &["gen-motif", "--n", n, "--n-val", "20", "--n-test", "30", "--b", "0.9", "--seed", seed, "--out", out.to_str().unwrap()],
        dir,
    ));
    out.to_str().unwrap().to_string()
}

const SMALL: [&str; 6] = ["--set", "epochs=2", "--set", "gnn.hidden_dim=16", "--set", "sci.heads=2"];

#[test]
fn gen_motif_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen(dir.path(), "a", "40", "3");
    let b = gen(dir.path(), "b", "40", "3");
    for f in ["train.jsonl", "val.jsonl", "test.jsonl"] {
        assert_eq!(read(Path::new(&a).join(f)), read(Path::new(&b).join(f)));
    }
    assert_eq!(read(Path::new(&a).join("train.jsonl")).lines().count(), 40);
    let manifest = read(Path::new(&a).join("manifest.txt"));
    assert_eq!(value(&manifest, "command"), "gen-motif");
    assert_eq!(value(&manifest, "seed"), "3");

    let bad = cauemo(&["gen-motif", "--b", "1.5", "--out", "x"], dir.path());
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("1.5"));
}

#[test]
fn grow_modes() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("mols.jsonl");
    fs::write(
        &input,
        "{\"nodes\":[\"C\",\"C\",\"O\"],\"edges\":[[0,1,1],[1,2,1]],\"label\":0,\"meta\":{},\"features\":\"element-onehot\"}\n\
         {\"nodes\":[\"C\",\"O\",\"O\"],\"edges\":[[0,1,2],[0,2,1]],\"label\":1,\"meta\":{},\"features\":\"element-onehot\"}\n",
    )
    .unwrap();
    let out = dir.path().join("grown.jsonl");
    let stdout = ok(&cauemo(
        &["grow", "--input", input.to_str().unwrap(), "--k", "3", "--out", out.to_str().unwrap()],
        dir.path(),
    ));
    assert!(stdout.contains("0 with violations"), "{stdout}");
    assert_eq!(read(&out).lines().count(), 2 + 6);
    let manifest = read(format!("{}.manifest.txt", out.display()));
    assert_eq!(value(&manifest, "valence_violations"), "0");

    let off = dir.path().join("off.jsonl");
    ok(&cauemo(
        &["grow", "--input", input.to_str().unwrap(), "--mode", "off", "--out", off.to_str().unwrap()],
        dir.path(),
    ));
    assert_eq!(read(&off), read(&input));

    let missing = cauemo(&["grow", "--input", "nope.jsonl"], dir.path());
    assert_eq!(missing.status.code(), Some(3));
}

#[test]
fn train_eval_explain_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "data", "60", "1");
    let run = dir.path().join("runs/r1");
    let started = Instant::now();
    let mut args = vec!["train", "--data", &data, "--seed", "4", "--out", run.to_str().unwrap()];
    args.extend(SMALL);
    let stdout = ok(&cauemo(&args, dir.path()));
    assert!(started.elapsed().as_secs() < 10);
    for f in ["checkpoint.bin", "config.txt", "metrics.csv", "summary.txt", "manifest.txt"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    let summary = read(run.join("summary.txt"));
    assert!(stdout.starts_with(&summary));
    let config = read(run.join("config.txt"));
    assert_eq!(value(&config, "epochs"), "2");
    assert_eq!(value(&config, "seed"), "4");
    assert_eq!(read(run.join("metrics.csv")).lines().count(), 3);
    let manifest = read(run.join("manifest.txt"));
    assert!(manifest.ends_with(&config));

    let ck = run.join("checkpoint.bin");
    let eval_dir = dir.path().join("eval");
    let eval = ok(&cauemo(
        &["eval", "--checkpoint", ck.to_str().unwrap(), "--data", &data, "--out", eval_dir.to_str().unwrap()],
        dir.path(),
    ));
    for key in ["test_acc", "test_auc", "val_acc", "val_auc"] {
        assert_eq!(value(&eval, key), value(&summary, key), "{key}");
    }
    assert_eq!(read(eval_dir.join("eval.txt")), eval);

    let ex = dir.path().join("explain");
    let stdout = ok(&cauemo(
        &["explain", "--checkpoint", ck.to_str().unwrap(), "--data", &data, "--out", ex.to_str().unwrap()],
        dir.path(),
    ));
    assert!(stdout.contains("motif-edge recall"));
    let dot = read(ex.join("explanation.dot"));
    assert!(dot.starts_with("graph explanation {"));
    assert_eq!(dot.matches('{').count(), dot.matches('}').count());
    let scores = read(ex.join("edge_scores.csv"));
    assert_eq!(scores.lines().next(), Some("graph_id,u,v,p_uv"));
    for line in scores.lines().skip(1) {
        let p: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!((0.01..=0.99).contains(&p));
    }
    assert_eq!(
        read(ex.join("invariant_edges.csv")).lines().next(),
        Some("graph_id,rank,u,v,invariance")
    );

    let table = ok(&cauemo(&["report", "--runs-dir", dir.path().join("runs").to_str().unwrap()], dir.path()));
    assert!(table.contains("± 0.0000"), "{table}");
}

#[test]
fn explain_covers_every_part() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "data", "20", "2");
    let run = dir.path().join("run");
    let mut args = vec!["train", "--data", &data, "--out", run.to_str().unwrap()];
    args.extend(SMALL);
    ok(&cauemo(&args, dir.path()));
    let ck = run.join("checkpoint.bin");
    let edges_in = |part: &str| -> usize {
        read(Path::new(&data).join(format!("{part}.jsonl")))
            .lines()
            .map(|l| l.matches("],[").count() + 1)
            .sum()
    };
    let ex = dir.path().join("ex");
    ok(&cauemo(
        &["explain", "--checkpoint", ck.to_str().unwrap(), "--data", &data, "--part", "all", "--top-k", "2", "--out", ex.to_str().unwrap()],
        dir.path(),
    ));
    let scores = read(ex.join("edge_scores.csv"));
    assert_eq!(scores.lines().count() - 1, edges_in("train") + edges_in("val") + edges_in("test"));
    let top = read(ex.join("invariant_edges.csv"));
    assert_eq!(top.lines().count() - 1, 2 * (20 + 20 + 30));
    let bad = cauemo(
        &["explain", "--checkpoint", ck.to_str().unwrap(), "--data", &data, "--part", "dev"],
        dir.path(),
    );
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn bad_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "data", "20", "0");
    let cfg = dir.path().join("bad.conf");
    fs::write(&cfg, "epochs = 1\negib.betta = 2\n").unwrap();
    let out = cauemo(&["train", "--config", cfg.to_str().unwrap(), "--data", &data], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("egib.betta"));

    let out = cauemo(&["train", "--data", &data, "--set", "sci.heads=5"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = cauemo(&["train", "--data", &data, "--ablation", "everything"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

fn fake_run(root: &Path, name: &str, seed: u64, model: &str, acc: f64) {
    let dir = root.join(name);
    fs::create_dir_all(&dir).unwrap();
    fs::write(dir.join("summary.txt"), format!("seed = {seed}\ntest_acc = {acc}\nval_acc = nan\n")).unwrap();
    fs::write(
        dir.join("manifest.txt"),
        format!("command = train\n[config]\nseed = {seed}\nmodel = {model}\nepochs = 5\n"),
    )
    .unwrap();
}

#[test]
fn report_aggregates_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let runs = dir.path().join("runs");
    fake_run(&runs, "a", 0, "cauemo", 0.6);
    fake_run(&runs, "b", 1, "cauemo", 0.8);
    fake_run(&runs, "c", 0, "gin", 0.5);
    let out = dir.path().join("report");
    let table = ok(&cauemo(
        &["report", "--runs-dir", runs.to_str().unwrap(), "--out", out.to_str().unwrap()],
        dir.path(),
    ));
    let row = table.lines().find(|l| l.starts_with("model=cauemo")).unwrap();
    assert!(row.contains("0.7000 ± 0.1000"), "{row}");
    assert!(row.contains("n/a"));
    let gin = table.lines().find(|l| l.starts_with("model=gin")).unwrap();
    assert!(gin.contains("0.5000 ± 0.0000"), "{gin}");
    assert!(out.join("report.csv").is_file());

    let empty = dir.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    let out = cauemo(&["report", "--runs-dir", empty.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn default_output_goes_under_env_root() {
    let dir = tempfile::tempdir().unwrap();
    ok(&cauemo(&["gen-motif", "--n", "10", "--seed", "5"], dir.path()));
    let made: Vec<_> = fs::read_dir(dir.path().join("runs")).unwrap().collect();
    assert_eq!(made.len(), 1);
}
