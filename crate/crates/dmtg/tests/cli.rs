use std::path::{Path, PathBuf};
use std::process::Command;

use dmtg::cli::main_with_args;
use dmtg::io::read_jsonl;

const TINY_NET: [&str; 12] = [
    "--set",
    "train.net.base=8",
    "--set",
    "train.net.depth=1",
    "--set",
    "train.net.emb_dim=8",
    "--set",
    "train.net.cond_dim=8",
    "--set",
    "train.net.groups=4",
    "--set",
    "train.batch=32",
];

fn run(args: &[&str]) -> i32 {
    main_with_args(std::iter::once("dmtg").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn bytes(p: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

fn ingest(dir: &Path, n: usize, seed: &str) -> PathBuf {
    let out = dir.join(format!("human{seed}"));
    let n = n.to_string();
    assert_eq!(run(&["ingest", "--synth", &n, "--seed", seed, "--out-dir", s(&out)]), 0);
    out.join("corpus.jsonl")
}

fn train(dir: &Path, corpus: &Path, name: &str) -> PathBuf {
    let out = dir.join(name);
    let mut args = vec!["train", "--corpus", s(corpus), "--epochs", "2", "--seed", "3", "--out-dir", s(&out)];
    args.extend(TINY_NET);
    assert_eq!(run(&args), 0);
    out
}

#[test]
fn binary_exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let exe = env!("CARGO_BIN_EXE_dmtg");
    let o =
        Command::new(exe).args(["ingest", "--input", "/no/such/file.csv", "--out-dir"]).arg(d.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/no/such/file.csv"));

    let o = Command::new(exe).args(["frobnicate"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));

    let o = Command::new(exe).args(["train", "--out-dir"]).arg(d.path().join("t")).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("corpus"));
}

#[test]
fn ingest_csv_reports_counts_and_is_repeatable() {
    let d = tempfile::tempdir().unwrap();
    let mut text = String::from("timestamp,button,state,x,y\n");
    for session in 0..2 {
        for i in 0..30 {
            text.push_str(&format!("{},NoButton,Move,{},{}\n", i * 10, 100 + i * 7 + session, 200 + i * i));
        }
    }
    let csv = d.path().join("rec.csv");
    std::fs::write(&csv, text).unwrap();
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    for out in [&a, &b] {
        assert_eq!(run(&["ingest", "--input", s(&csv), "--out-dir", s(out)]), 0);
    }
    assert_eq!(bytes(a.join("corpus.jsonl")), bytes(b.join("corpus.jsonl")));
    let corpus = read_jsonl(&a.join("corpus.jsonl")).unwrap();
    assert_eq!(corpus.len(), 2);
    assert!(corpus.iter().all(|c| c.traj.timestamps().is_some() && c.source == "rec"));
    let rep: serde_json::Value = serde_json::from_slice(&bytes(a.join("ingest_report.json"))).unwrap();
    assert_eq!(rep["per_source"]["rec"], 2);
    assert!(a.join("config.json").exists());
}

#[test]
fn train_sample_eval_pipeline() {
    let d = tempfile::tempdir().unwrap();
    let dir = d.path();
    let corpus = ingest(dir, 200, "1");

    let t1 = train(dir, &corpus, "t1");
    let t2 = train(dir, &corpus, "t2");
    assert_eq!(bytes(t1.join("checkpoint.json")), bytes(t2.join("checkpoint.json")));
    let csv = std::fs::read_to_string(t1.join("train_report.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "epoch,l_ddim,l_sim,l_style,total");
    assert_eq!(lines.len(), 3);
    let total = |l: &str| l.rsplit(',').next().unwrap().parse::<f64>().unwrap();
    assert!(total(lines[2]) < total(lines[1]), "{csv}");

    // Replaying the persisted config reproduces the checkpoint.
    let t3 = dir.join("t3");
    assert_eq!(run(&["train", "--config", s(&t1.join("config.json")), "--out-dir", s(&t3)]), 0);
    assert_eq!(bytes(t1.join("checkpoint.json")), bytes(t3.join("checkpoint.json")));

    let ck = t1.join("checkpoint.json");
    let sample = |out: &str, extra: &[&str]| {
        let out = dir.join(out);
        let mut args = vec!["sample", "--checkpoint", s(&ck), "-n", "10", "--seed", "4", "--out-dir", s(&out)];
        args.extend(extra);
        assert_eq!(run(&args), 0);
        out
    };
    let (s1, s2) = (sample("s1", &[]), sample("s2", &[]));
    assert_eq!(bytes(s1.join("samples.jsonl")), bytes(s2.join("samples.jsonl")));
    assert_eq!(bytes(s1.join("achieved.csv")), bytes(s2.join("achieved.csv")));
    let got = read_jsonl(&s1.join("samples.jsonl")).unwrap();
    assert_eq!(got.len(), 10);
    assert!(got.iter().all(|g| (0.3..=0.8).contains(&g.task.alpha_bar())));

    let fixed = sample("s3", &["--alpha", "0.5"]);
    assert!(read_jsonl(&fixed.join("samples.jsonl")).unwrap().iter().all(|g| g.task.alpha_bar() == 0.5));

    let ctl = dir.join("ctl");
    let code = run(&["diag", "control", "--corpus", s(&fixed.join("samples.jsonl")), "--assert", "--out-dir", s(&ctl)]);
    assert_eq!(code, 0);
    assert!(ctl.join("control.csv").exists());

    // A checkpoint whose values were edited no longer loads.
    let text = std::fs::read_to_string(&ck).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let x = &mut v["layers"][0]["tensors"][0]["values"][0];
    *x = serde_json::Value::from(x.as_f64().unwrap() + 1.0);
    let bad = dir.join("bad.json");
    std::fs::write(&bad, v.to_string()).unwrap();
    assert_eq!(run(&["sample", "--checkpoint", s(&bad), "-n", "2", "--out-dir", s(&dir.join("sb"))]), 2);
}

#[test]
fn baselines_need_no_checkpoint() {
    let d = tempfile::tempdir().unwrap();
    for g in ["linear", "bezier", "fitts"] {
        let out = d.path().join(g);
        assert_eq!(run(&["sample", "--generator", g, "-n", "5", "--out-dir", s(&out)]), 0);
        let got = read_jsonl(&out.join("samples.jsonl")).unwrap();
        assert_eq!(got.len(), 5);
        assert!(got.iter().all(|x| x.source == g && x.traj.is_task_bound(&x.task)));
    }
    assert_eq!(run(&["sample", "-n", "5", "--out-dir", s(&d.path().join("x"))]), 2);
}

#[test]
fn eval_of_a_copy_is_at_chance_and_repeatable() {
    let d = tempfile::tempdir().unwrap();
    let dir = d.path();
    let human = ingest(dir, 300, "2");
    let copy = dir.join("copy.jsonl");
    std::fs::copy(&human, &copy).unwrap();
    let lin = dir.join("lin");
    assert_eq!(
        run(&[
            "sample",
            "--generator",
            "linear",
            "--tasks",
            s(&human),
            "--set",
            "alpha_mode=\"task\"",
            "--set",
            "poll_ms=16",
            "--out-dir",
            s(&lin)
        ]),
        0
    );
    let eval = |out: &str| {
        let out = dir.join(out);
        let code = run(&[
            "eval",
            "--human",
            s(&human),
            "--model",
            &format!("copy={}", s(&copy)),
            "--model",
            &format!("linear={}", s(&lin.join("samples.jsonl"))),
            "--seed",
            "9",
            "--out-dir",
            s(&out),
        ]);
        assert_eq!(code, 0);
        out
    };
    let (e1, e2) = (eval("e1"), eval("e2"));
    for f in ["eval_report.json", "eval_report.csv", "embedding_unified.csv", "accel_summary.json"] {
        assert_eq!(bytes(e1.join(f)), bytes(e2.join(f)), "{f}");
    }
    let reps: serde_json::Value = serde_json::from_slice(&bytes(e1.join("eval_report.json"))).unwrap();
    let reps = reps.as_array().unwrap();
    assert_eq!(reps.len(), 4);
    for proto in ["independent", "unified"] {
        let get = |m: &str| reps.iter().find(|r| r["model"] == m && r["protocol"] == proto).unwrap();
        let (c, l) = (get("copy"), get("linear"));
        let acc = |r: &serde_json::Value| r["mean"]["accuracy"].as_f64().unwrap();
        assert!(c["jsd"].as_f64().unwrap() <= 0.05);
        assert!((0.4..=0.6).contains(&acc(c)), "{}", acc(c));
        assert!(acc(l) > acc(c) + 0.2, "{} {}", acc(l), acc(c));
        assert!(l["jsd"].as_f64().unwrap() > c["jsd"].as_f64().unwrap());
    }
    let hist = std::fs::read_to_string(e1.join("accel_hist_human.csv")).unwrap();
    assert!(hist.starts_with("bin_lo,bin_hi,count_up,count_down"));
    let emb = std::fs::read_to_string(e1.join("embedding_unified.csv")).unwrap();
    assert!(emb.starts_with("id,x,y,label"));
}

#[test]
fn diag_entropy_mst_writes_tables() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("em");
    let code = run(&[
        "diag",
        "entropy-mst",
        "--set",
        "entropy_mst.sets=20",
        "--set",
        "entropy_mst.m_values=[16]",
        "--out-dir",
        s(&out),
    ]);
    assert_eq!(code, 0);
    let fit = std::fs::read_to_string(out.join("entropy_mst_fit.csv")).unwrap();
    assert!(fit.starts_with("m,slope,intercept,r\n16,"));
    let table = std::fs::read_to_string(out.join("entropy_mst.csv")).unwrap();
    assert_eq!(table.lines().count(), 21);

    // An unreachable band turns the study into an assertion failure.
    let code = run(&[
        "diag",
        "entropy-mst",
        "--assert",
        "--set",
        "entropy_mst.sets=5",
        "--set",
        "entropy_mst.m_values=[16]",
        "--set",
        "slope_lo=50",
        "--out-dir",
        s(&out),
    ]);
    assert_eq!(code, 1);
}
