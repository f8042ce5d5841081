use std::fs;
use std::path::Path;

use glt_cli::output::Results;
use glt_cli::report::{aggregate, mean_std, read_summary, summarize};
use glt_cli::{run, RunConfig};
use serde_json::Value;

fn glt(args: &[&str]) -> i32 {
    run(std::iter::once("glt").chain(args.iter().copied()))
}

fn synth(dir: &Path) {
    let out = dir.join("ds");
    assert_eq!(
        glt(&[
            "synth",
            "--out",
            out.to_str().unwrap(),
            "--nodes-per-block",
            "15",
            "--seed",
            "3"
        ]),
        0
    );
}

fn quick_search(dir: &Path, extra: &[&str]) -> i32 {
    let ds = dir.join("ds");
    let out = dir.join("runs");
    let mut args = vec![
        "search",
        "--dataset",
        ds.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--hidden",
        "8",
        "--epochs",
        "15",
        "--refine-epochs",
        "4",
        "--sA",
        "0.1",
        "--sW",
        "0.4",
        "--delta",
        "1",
    ];
    args.extend_from_slice(extra);
    glt(&args)
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(glt(&["search", "--bogus"]), 2);
    assert_eq!(glt(&["frobnicate"]), 2);
    assert_eq!(glt(&["search", "--method", "imp"]), 2);
    assert_eq!(glt(&["search", "--dataset", "x", "--fix", "edge@0.1"]), 2);
    assert_eq!(glt(&["search", "--dataset", "x", "--sA", "1.5"]), 2);
    assert_eq!(glt(&["search", "--dataset", "x", "--preset", "ogbn"]), 2);
    assert_eq!(glt(&["search"]), 2);
}

#[test]
fn runtime_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nothing");
    assert_eq!(glt(&["search", "--dataset", missing.to_str().unwrap()]), 1);
    assert_eq!(glt(&["report", missing.to_str().unwrap()]), 1);
}

#[test]
fn search_writes_a_complete_run_directory() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path());
    assert_eq!(
        quick_search(
            tmp.path(),
            &[
                "--method",
                "ugs",
                "--fix",
                "graph@0.05",
                "--seeds",
                "1,2",
                "--jobs",
                "2"
            ]
        ),
        0
    );
    for seed in [1, 2] {
        let dir = tmp.path().join(format!("runs/ugs_seed{seed}"));
        for f in [
            "config.json",
            "results.json",
            "summary.csv",
            "traces/dense.csv",
            "traces/round_00_eval.csv",
        ] {
            assert!(dir.join(f).is_file(), "{f}");
        }
        let rows = read_summary(&dir.join("summary.csv")).unwrap();
        assert!(!rows.is_empty());
        let gs = rows[0].graph_sparsity;
        assert!(gs > 0.0 && rows.iter().all(|r| r.graph_sparsity == gs));

        // the config echo round-trips to the same RunConfig
        let results: Results = serde_json::from_str(&fs::read_to_string(dir.join("results.json")).unwrap()).unwrap();
        let echoed: RunConfig = serde_json::from_str(&fs::read_to_string(dir.join("config.json")).unwrap()).unwrap();
        assert_eq!(results.config, echoed);
        assert_eq!(results.seed, seed);
        let again: RunConfig = serde_json::from_value(serde_json::to_value(&results.config).unwrap()).unwrap();
        assert_eq!(again, results.config);
    }
}

fn without_timestamp(path: &Path) -> Value {
    let mut v: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("timestamp");
    v
}

#[test]
fn repeated_ace_search_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    synth(a.path());
    synth(b.path());
    assert_eq!(quick_search(a.path(), &["--method", "ace", "--seeds", "5"]), 0);
    assert_eq!(quick_search(b.path(), &["--method", "ace", "--seeds", "5"]), 0);
    let (ra, rb) = (
        a.path().join("runs/ace_seed5/results.json"),
        b.path().join("runs/ace_seed5/results.json"),
    );
    let (mut va, vb) = (without_timestamp(&ra), without_timestamp(&rb));
    // the echoed paths differ between the two temp dirs
    va["config"] = vb["config"].clone();
    assert_eq!(va, vb);
    assert_eq!(
        fs::read(a.path().join("runs/ace_seed5/summary.csv")).unwrap(),
        fs::read(b.path().join("runs/ace_seed5/summary.csv")).unwrap()
    );
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path());
    let cfg = tmp.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"seeds": [7], "search": {"method": "random", "train": {"lr": 0.02}}}"#,
    )
    .unwrap();
    assert_eq!(
        quick_search(tmp.path(), &["--config", cfg.to_str().unwrap(), "--lr", "0.03"]),
        0
    );
    let dir = tmp.path().join("runs/random_seed7");
    let echoed: RunConfig = serde_json::from_str(&fs::read_to_string(dir.join("config.json")).unwrap()).unwrap();
    assert_eq!(echoed.search.train.lr, 0.03);
    assert_eq!(echoed.search.method, "random");
    assert_eq!(echoed.search.hidden, 8);
}

#[test]
fn train_and_fluctuation_commands_run() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path());
    let ds = tmp.path().join("ds");
    let out = tmp.path().join("out");
    let (ds, out) = (ds.to_str().unwrap(), out.to_str().unwrap());
    assert_eq!(
        glt(&[
            "train",
            "--dataset",
            ds,
            "--out",
            out,
            "--hidden",
            "8",
            "--epochs",
            "10"
        ]),
        0
    );
    assert!(tmp.path().join("out/train_seed0/traces/dense.csv").is_file());
    let flags = [
        "--dataset",
        ds,
        "--out",
        out,
        "--hidden",
        "8",
        "--epochs",
        "10",
        "--sA",
        "0.1",
        "--sW",
        "0.5",
    ];
    assert_eq!(glt(&[&["fluctuation", "--method", "ugs"], &flags[..]].concat()), 0);
    let csv = fs::read_to_string(tmp.path().join("out/fluctuation_ugs_seed0/fluctuation.csv")).unwrap();
    let last_two: Vec<&str> = csv.lines().rev().take(2).collect();
    for line in last_two {
        assert!(line.ends_with(",0,0,0,0"), "{line}");
    }
    assert_eq!(glt(&[&["fluctuation", "--method", "random"], &flags[..]].concat()), 2);
}

#[test]
fn report_matches_hand_aggregation() {
    let tmp = tempfile::tempdir().unwrap();
    let header = glt_cli::output::SUMMARY_HEADER;
    let runs = [
        (
            1,
            "ugs,1,0,0.05,0.2,0.80,0.8,0.81,1,10\nugs,1,1,0.05,0.36,0.78,0.8,0.81,0,9\n",
        ),
        (
            2,
            "ugs,2,0,0.05,0.2,0.83,0.8,0.82,1,10\nugs,2,1,0.05,0.36,0.82,0.8,0.82,1,9\n",
        ),
        (3, "ugs,3,0,0.05,0.2,0.70,0.8,0.84,0,10\n"),
    ];
    for (seed, body) in runs {
        let dir = tmp.path().join(format!("ugs_seed{seed}"));
        fs::create_dir_all(&dir).unwrap();
        fs::write(dir.join("summary.csv"), format!("{header}\n{body}")).unwrap();
    }
    let out = tmp.path().join("report.csv");
    assert_eq!(
        glt(&["report", tmp.path().to_str().unwrap(), "--out", out.to_str().unwrap()]),
        0
    );

    let mut rows = Vec::new();
    for seed in 1..=3 {
        rows.extend(read_summary(&tmp.path().join(format!("ugs_seed{seed}/summary.csv"))).unwrap());
    }
    let table = aggregate(&summarize(&rows));
    assert_eq!(table.len(), 1);
    let r = &table[0];
    assert_eq!((r.seeds, r.glt_found), (3, 2));
    // dense: 0.81, 0.82, 0.84 -> mean 0.8233.., sample std 0.01527..
    let (m, s) = r.dense_acc.unwrap();
    assert!((m - 0.823_333_333_333_333_3).abs() < 1e-12);
    assert!((s - 0.015_275_252_316_519_5).abs() < 1e-12);
    // max-GLT model sparsity: seed 1 -> 0.2, seed 2 -> 0.36; seed 3 has none
    let (m, s) = r.model_sparsity.unwrap();
    assert!((m - 0.28).abs() < 1e-12);
    assert!((s - 0.113_137_084_989_847_6).abs() < 1e-12);
    // best accuracy over all rounds: 0.80, 0.83, 0.70
    assert!((r.best_acc_all.unwrap().0 - 0.776_666_666_666_666_7).abs() < 1e-12);
    // best accuracy over GLT rounds: 0.80, 0.83
    assert!((r.best_acc_glt.unwrap().0 - 0.815).abs() < 1e-12);
    let text = fs::read_to_string(out).unwrap();
    assert!(text.starts_with("method,seeds,glt_found,dense_acc_mean"));
    assert_eq!(mean_std(&[2.0]), Some((2.0, 0.0)));
    assert_eq!(mean_std(&[]), None);
}

#[test]
fn convert_reads_a_toy_linqs_release() {
    let tmp = tempfile::tempdir().unwrap();
    let raw = tmp.path().join("raw");
    fs::create_dir_all(&raw).unwrap();
    let mut content = String::new();
    for i in 0..8 {
        let class = if i < 4 { "A" } else { "B" };
        content.push_str(&format!("p{i}\t{}\t{}\t1\t{class}\n", i % 2, (i + 1) % 2));
    }
    fs::write(raw.join("toy.content"), content).unwrap();
    // p0<->p1 twice, one self-loop, one unknown endpoint
    fs::write(
        raw.join("toy.cites"),
        "p0\tp1\np1\tp0\np2\tp2\np3\tp9\np4\tp5\np6\tp7\np2\tp3\n",
    )
    .unwrap();
    let out = tmp.path().join("native");
    let code = glt(&[
        "convert",
        "--input",
        raw.to_str().unwrap(),
        "--name",
        "toy",
        "--out",
        out.to_str().unwrap(),
        "--train-per-class",
        "1",
        "--val",
        "2",
        "--test",
        "2",
    ]);
    assert_eq!(code, 0);
    let ds = glt_core::dataset::load_dataset(&out).unwrap();
    assert_eq!((ds.num_nodes(), ds.num_features(), ds.num_classes()), (8, 3, 2));
    assert_eq!(ds.num_edges(), 4);
    assert_eq!(
        glt(&[
            "convert",
            "--input",
            raw.to_str().unwrap(),
            "--name",
            "cora",
            "--out",
            out.to_str().unwrap()
        ]),
        1
    );
}
