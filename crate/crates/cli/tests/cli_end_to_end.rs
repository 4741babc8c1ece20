//! End-to-end runs of the binary on the bundled toy dataset, checked
//! against the committed golden metrics.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

fn workspace_root() -> PathBuf {
    // crates/cli -> workspace root
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .ancestors()
        .nth(2)
        .unwrap()
        .to_path_buf()
}

fn relpred(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relpred"))
        .current_dir(workspace_root())
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_success(out: &Output, what: &str) -> String {
    assert!(
        out.status.success(),
        "{what} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn golden() -> HashMap<String, String> {
    let text =
        std::fs::read_to_string(workspace_root().join("data/golden/toy_metrics.txt")).unwrap();
    text.lines()
        .filter(|l| !l.trim_start().starts_with('#') && l.contains('='))
        .map(|l| {
            let (k, v) = l.split_once('=').unwrap();
            (k.trim().to_string(), v.trim().to_string())
        })
        .collect()
}

fn report_field(path: &Path, key: &str) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing from {}", path.display()))
        .to_string()
}

#[test]
fn preprocess_train_eval_reproduce_golden_metrics() {
    let started = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let golden = golden();

    // preprocess: everything in the toy set must survive with non-empty
    // subgraphs and full negatives
    let pre = tmp.path().join("pre");
    let out = assert_success(
        &relpred(&[
            "preprocess",
            "--data",
            "data/toy",
            "--out",
            pre.to_str().unwrap(),
            "--hop",
            "2",
            "--seed",
            "3",
            "--max-nodes",
            "100",
        ]),
        "preprocess",
    );
    assert!(out.contains("test: kept 8 of 8"), "{out}");
    assert!(out.contains("shortfalls 0"), "{out}");

    // preprocess is idempotent byte for byte
    let pre2 = tmp.path().join("pre2");
    assert_success(
        &relpred(&[
            "preprocess",
            "--data",
            "data/toy",
            "--out",
            pre2.to_str().unwrap(),
            "--hop",
            "2",
            "--seed",
            "3",
            "--max-nodes",
            "100",
        ]),
        "preprocess again",
    );
    for name in ["test.txt", "test_neg.txt", "test_neg.idx", "valid.txt", "valid_neg.txt"] {
        assert_eq!(
            std::fs::read(pre.join(name)).unwrap(),
            std::fs::read(pre2.join(name)).unwrap(),
            "{name} differs between preprocess runs"
        );
    }

    // train
    let run = tmp.path().join("run");
    let out = assert_success(
        &relpred(&[
            "train",
            "--config",
            "data/toy/train.cfg",
            "--out",
            run.to_str().unwrap(),
        ]),
        "train",
    );
    let expect_valid = format!(
        "best_valid_auc_pr={}",
        golden["train.best_valid_auc_pr"]
    );
    assert!(out.contains(&expect_valid), "training summary drifted: {out}");
    let ckpt = run.join("checkpoint_seed7.ckpt");
    assert!(ckpt.exists());

    // eval under all three protocols against the golden numbers
    let eval_dir = tmp.path().join("eval");
    assert_success(
        &relpred(&[
            "eval",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--data",
            "data/toy",
            "--protocol",
            "auc-one-negative",
            "--seed",
            "5",
            "--out",
            eval_dir.to_str().unwrap(),
        ]),
        "eval auc",
    );
    let report = eval_dir.join("checkpoint_seed7.report.txt");
    assert_eq!(report_field(&report, "auc_pr"), golden["auc.auc_pr"]);
    assert_eq!(report_field(&report, "auc_roc"), golden["auc.auc_roc"]);

    let ex_dir = tmp.path().join("eval_ex");
    let out = assert_success(
        &relpred(&[
            "eval",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--data",
            "data/toy",
            "--protocol",
            "exchange-ht",
            "--out",
            ex_dir.to_str().unwrap(),
        ]),
        "eval exchange",
    );
    // the exchange protocol pairs every positive with exactly one negative
    assert!(out.contains("positives=8 negatives=8"), "{out}");
    let report = ex_dir.join("checkpoint_seed7.report.txt");
    assert_eq!(report_field(&report, "auc_pr"), golden["exchange.auc_pr"]);
    assert_eq!(report_field(&report, "auc_roc"), golden["exchange.auc_roc"]);

    let hits_dir = tmp.path().join("eval_hits");
    assert_success(
        &relpred(&[
            "eval",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--data",
            "data/toy",
            "--protocol",
            "hits-k",
            "--neg",
            "20",
            "--hits-k",
            "5",
            "--seed",
            "5",
            "--out",
            hits_dir.to_str().unwrap(),
        ]),
        "eval hits",
    );
    let report = hits_dir.join("checkpoint_seed7.report.txt");
    assert_eq!(report_field(&report, "hits_at_5"), golden["hits.hits_at_5"]);

    assert!(
        started.elapsed().as_secs() < 60,
        "end-to-end flow exceeded 60 seconds"
    );
}

#[test]
fn train_is_deterministic_at_the_binary_level() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        assert_success(
            &relpred(&[
                "train",
                "--config",
                "data/toy/train.cfg",
                "--out",
                out.to_str().unwrap(),
                "--epochs",
                "2",
            ]),
            "train",
        );
    }
    for name in ["checkpoint_seed7.ckpt", "train_seed7.log"] {
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(b.join(name)).unwrap(),
            "{name} differs between identical runs"
        );
    }
}

#[test]
fn score_prints_value_or_nosubgraph_marker() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    assert_success(
        &relpred(&[
            "train",
            "--config",
            "data/toy/train.cfg",
            "--out",
            run.to_str().unwrap(),
            "--epochs",
            "1",
        ]),
        "train",
    );
    let ckpt = run.join("checkpoint_seed7.ckpt");

    let out = assert_success(
        &relpred(&[
            "score",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--graph",
            "data/toy",
            "--triplet",
            "n01\trel_a\tn02",
        ]),
        "score connected pair",
    );
    assert!(out.contains("score="), "{out}");
    assert!(out.contains("subgraph route="), "{out}");

    // distant pair: no enclosing subgraph, sentinel policy printed
    let out = assert_success(
        &relpred(&[
            "score",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--graph",
            "data/toy",
            "--triplet",
            "n01 rel_c n14",
        ]),
        "score distant pair",
    );
    assert!(out.contains("NOSUBGRAPH"), "{out}");
    assert!(out.contains("-10000"), "{out}");
}

#[test]
fn bad_inputs_exit_nonzero_with_categorized_messages() {
    let out = relpred(&["eval", "--checkpoint", "/nonexistent.ckpt", "--data", "data/toy"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("checkpoint error"));

    let out = relpred(&["stats", "--data", "/nonexistent-dataset"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("data error"));

    let out = relpred(&["train", "--config", "/nonexistent.cfg"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("config error"));

    // unknown flags are rejected by the parser
    let out = relpred(&["stats", "--data", "data/toy", "--frobnicate"]);
    assert!(!out.status.success());
}

#[test]
fn stats_reports_counts() {
    let out = assert_success(
        &relpred(&["stats", "--data", "data/toy", "--hop", "2"]),
        "stats",
    );
    assert!(out.contains("entities=24"), "{out}");
    assert!(out.contains("relations=3"), "{out}");
    assert!(out.contains("empty_rate=0.000000"), "{out}");
}

#[test]
fn eval_handles_relation_order_differences_between_graph_files() {
    // A graph file whose relation first-seen order differs from the
    // training file must still evaluate: relation ids are pinned to the
    // checkpoint's vocabulary, not the file order.
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    assert_success(
        &relpred(&[
            "train",
            "--config",
            "data/toy/train.cfg",
            "--out",
            run.to_str().unwrap(),
            "--epochs",
            "1",
        ]),
        "train",
    );
    let ckpt = run.join("checkpoint_seed7.ckpt");

    let reordered = tmp.path().join("reordered");
    std::fs::create_dir_all(&reordered).unwrap();
    let train = std::fs::read_to_string(workspace_root().join("data/toy/train.txt")).unwrap();
    let mut lines: Vec<&str> = train.lines().collect();
    lines.reverse();
    std::fs::write(reordered.join("train.txt"), lines.join("\n") + "\n").unwrap();
    std::fs::copy(
        workspace_root().join("data/toy/test.txt"),
        reordered.join("test.txt"),
    )
    .unwrap();

    let out = assert_success(
        &relpred(&[
            "eval",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--data",
            reordered.to_str().unwrap(),
            "--protocol",
            "exchange-ht",
            "--out",
            tmp.path().join("eval").to_str().unwrap(),
        ]),
        "eval on reordered graph",
    );
    assert!(out.contains("positives=8 negatives=8"), "{out}");

    // a graph file naming an unknown relation is rejected with a clear error
    let bad = tmp.path().join("bad");
    std::fs::create_dir_all(&bad).unwrap();
    std::fs::write(bad.join("train.txt"), "x\tnever_seen\ty\n").unwrap();
    std::fs::write(bad.join("test.txt"), "x\trel_a\ty\n").unwrap();
    let out = relpred(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--data",
        bad.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("never_seen"));
}
