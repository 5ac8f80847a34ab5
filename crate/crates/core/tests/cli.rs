//! The `dscnn` binary end to end: exit codes, output files, determinism.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dscnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dscnn")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_toy(path: &Path) {
    let fillers = ["the film was", "a plot that felt", "acting is", "this story seems", "overall it is"];
    let mut out = String::new();
    for i in 0..24 {
        let (label, word) = if i % 2 == 1 { ("pos", ["good", "great"][i / 2 % 2]) } else { ("neg", ["bad", "awful"][i / 2 % 2]) };
        out.push_str(&format!("{label}\t{} {word} .\n", fillers[i % 5]));
    }
    fs::write(path, out).unwrap();
}

const SMALL: [&str; 14] = [
    "--embeddings", "random", "--set", "embed_dim=20", "--hdim", "20", "--filters", "2:10,3:10", "--dropout", "0",
    "--set", "valid_fraction=0.25", "--seed", "3",
];

fn train_args<'a>(data: &'a str, out: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec!["train", data, "--out", out];
    v.extend_from_slice(&SMALL);
    v.extend_from_slice(&["--patience", "30", "--set", "max_epochs=30"]);
    v.extend_from_slice(extra);
    v
}

#[test]
fn synth_writes_balanced_reproducible_files() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.tsv"), dir.path().join("b.tsv"));
    for p in [&a, &b] {
        let o = dscnn(&["synth", "--n", "1000", "--gap", "15", "--seed", "9", "--out", p.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 1000);
    let pos = text.lines().filter(|l| l.starts_with("1\t")).count() as i64;
    assert!((2 * pos - 1000).abs() <= 1);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let bad = dscnn(&["synth", "--gap", "20", "--seq-len", "20", "--out", a.to_str().unwrap()]);
    assert!(!bad.status.success());
    assert!(stderr(&bad).contains("gap"), "{}", stderr(&bad));
}

#[test]
fn train_reports_missing_data_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere.tsv");
    let out = dir.path().join("run");
    let o = dscnn(&train_args(missing.to_str().unwrap(), out.to_str().unwrap(), &[]));
    assert!(!o.status.success());
    assert!(stderr(&o).contains("nowhere.tsv"), "{}", stderr(&o));
}

#[test]
fn train_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("toy.tsv");
    write_toy(&data);
    let (d, r1, r2) = (data.to_str().unwrap(), dir.path().join("r1"), dir.path().join("r2"));
    let overfit = format!("valid_data={d}");
    for r in [&r1, &r2] {
        let o = dscnn(&train_args(d, r.to_str().unwrap(), &["--set", &overfit]));
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["model.ckpt", "metrics.csv", "config.txt"] {
        assert!(r1.join(f).is_file(), "{f} missing");
    }
    assert_eq!(fs::read(r1.join("metrics.csv")).unwrap(), fs::read(r2.join("metrics.csv")).unwrap());
    assert!(fs::read_to_string(r1.join("config.txt")).unwrap().contains("filters=2:10,3:10"));

    let ckpt = r1.join("model.ckpt");
    let report = dir.path().join("report.json");
    let o = dscnn(&["eval", ckpt.to_str().unwrap(), d, "--report", report.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "1.0000");
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let rows = json["predictions"].as_array().unwrap();
    assert_eq!(rows.len(), 24);
    assert_eq!(rows[0]["probabilities"].as_array().unwrap().len(), 2);
    assert_eq!(rows[1]["gold"], "pos");

    let mut bytes = fs::read(&ckpt).unwrap();
    bytes[0] ^= 0xff;
    let broken = dir.path().join("broken.ckpt");
    fs::write(&broken, bytes).unwrap();
    let o = dscnn(&["eval", broken.to_str().unwrap(), d]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("magic"), "{}", stderr(&o));

    let three = dir.path().join("three.tsv");
    fs::write(&three, "pos\tgood\nneg\tbad\nmeh\tfine\n").unwrap();
    let o = dscnn(&["eval", ckpt.to_str().unwrap(), three.to_str().unwrap()]);
    assert!(!o.status.success());
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("toy.tsv");
    write_toy(&data);
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "hdim=5\ndropout=0.3\nmax_epochs=2\n").unwrap();
    let out = dir.path().join("run");
    let o = dscnn(&[
        "train", data.to_str().unwrap(), "--out", out.to_str().unwrap(), "--config", cfg.to_str().unwrap(),
        "--embeddings", "random", "--set", "embed_dim=4", "--filters", "2:2", "--dropout", "0.1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let resolved = fs::read_to_string(out.join("config.txt")).unwrap();
    assert!(resolved.contains("hdim=5\n") && resolved.contains("dropout=0.1\n") && resolved.contains("max_epochs=2\n"));
    assert_eq!(fs::read_to_string(out.join("metrics.csv")).unwrap().lines().count(), 2);
}

#[test]
fn gradcheck_lists_every_group_once() {
    let o = dscnn(&["gradcheck"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    let text = stdout(&o);
    let groups: Vec<&str> = text.lines().filter(|l| l.starts_with("PASS ")).map(|l| l.split_whitespace().nth(1).unwrap()).collect();
    // sentence: 2 channels x 12 LSTM tensors + 4 bank + 2 classifier; document doubles the LSTMs
    assert_eq!(groups.len(), 30 + 54);
    let mut unique = groups.clone();
    unique.sort_unstable();
    unique.dedup();
    assert_eq!(unique.len(), groups.len());
    assert!(!text.contains("FAIL"));
}

#[test]
fn pretrain_then_train_from_encoder() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("toy.tsv");
    write_toy(&data);
    let (d, pre, run) = (data.to_str().unwrap(), dir.path().join("pre"), dir.path().join("run"));
    let mut args = vec!["pretrain", d, "--out", pre.to_str().unwrap()];
    args.extend_from_slice(&SMALL);
    args.extend_from_slice(&["--patience", "20", "--set", "max_epochs=20"]);
    let o = dscnn(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let metrics = fs::read_to_string(pre.join("metrics_ch0.csv")).unwrap();
    let rows: Vec<Vec<f64>> = metrics
        .lines()
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert!(!rows.is_empty());
    assert!(rows.last().unwrap()[1] < rows[0][1], "train reconstruction loss did not fall: {metrics}");

    let enc = pre.join("encoder.ckpt");
    let o = dscnn(&train_args(d, run.to_str().unwrap(), &["--init-encoder", enc.to_str().unwrap()]));
    assert!(o.status.success(), "{}", stderr(&o));

    let mut mismatched = train_args(d, run.to_str().unwrap(), &["--init-encoder", enc.to_str().unwrap()]);
    let at = mismatched.iter().position(|a| *a == "--hdim").unwrap() + 1;
    mismatched[at] = "5";
    assert!(!dscnn(&mismatched).status.success());
}
