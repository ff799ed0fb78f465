use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"{
  "generate": { "n_individual": 300, "n_organization": 30, "n_external": 150, "prevalence": 0.02 },
  "grid": { "lrs": [0.1], "l2s": [1e-6], "folds": 2, "max_iter": 20, "eval_every": 10, "patience": 2 }
}"#;

fn hmpnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hmpnn")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, SMALL).unwrap();
    path
}

fn generate(dir: &Path, name: &str) -> PathBuf {
    let cfg = small_config(dir);
    let out = dir.join(name);
    let o = hmpnn(&["--config", s(&cfg), "--seed", "1", "--quiet", "generate", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn generate_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let a = generate(tmp.path(), "a");
    let b = generate(tmp.path(), "b");
    assert!(a.join("schema.json").exists());
    assert!(a.join("nodes_individual.csv").exists());
    assert!(a.join("edges_individual__txn__individual.csv").exists());
    assert_eq!(files(&a), files(&b));
}

#[test]
fn out_of_range_prevalence_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    fs::write(&cfg, r#"{ "generate": { "prevalence": 0.5 } }"#).unwrap();
    let out = tmp.path().join("g");
    let o = hmpnn(&["--config", s(&cfg), "--seed", "0", "generate", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("prevalence"));
}

#[test]
fn stochastic_commands_need_a_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let o = hmpnn(&["generate", "--out", s(&tmp.path().join("g"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn features_have_94_columns_and_rerun_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let g = generate(tmp.path(), "g");
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let o = hmpnn(&["--seed", "1", "--quiet", "features", "--graph", s(&g), "--out", s(&out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read_to_string(out.join("features_individual.csv")).unwrap()
    };
    let a = run("f1");
    let header: Vec<&str> = a.lines().next().unwrap().split(',').collect();
    assert_eq!(header[0], "id");
    assert_eq!(header.len() - 1, 94);
    assert_eq!(a.lines().count(), 301);
    assert_eq!(a, run("f2"));
}

#[test]
fn missing_graph_directory_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nowhere");
    let o = hmpnn(&["--seed", "0", "features", "--graph", s(&missing), "--out", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gradcheck_passes_for_two_layer_hmpnn_ct() {
    let o = hmpnn(&["--seed", "0", "gradcheck", "--model", "hmpnn-ct", "--layers", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("max relative error"));
}

#[test]
fn gradcheck_failure_exits_with_numeric_code() {
    // a tolerance no finite-difference check can meet
    let o = hmpnn(&["--seed", "0", "gradcheck", "--model", "logreg", "--layers", "1", "--tolerance", "0"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn tune_train_evaluate_writes_the_documented_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let g = generate(tmp.path(), "g");
    let run = tmp.path().join("run");
    let base = ["--config", s(&cfg), "--seed", "1", "--quiet"];
    let model = ["--graph", s(&g), "--model", "hmpnn-sum", "--layers", "1", "--out", s(&run)];
    let o = hmpnn(&[&base[..], &["tune"], &model[..]].concat());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cv = fs::read_to_string(run.join("cv_table.csv")).unwrap();
    assert_eq!(cv.lines().next().unwrap(), "model,layers,lr,l2,fold,val_pr_auc,stop_iter");
    assert_eq!(cv.lines().count(), 3);
    let hypers = run.join("best_hypers.json");
    let o = hmpnn(&[&base[..], &["train"], &model[..], &["--hypers", s(&hypers)]].concat());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(run.join("train_log.json").exists());
    let ck = run.join("checkpoint.json");
    let o = hmpnn(&[&base[..], &["evaluate", "--graph", s(&g), "--checkpoint", s(&ck), "--out", s(&run)]].concat());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = fs::read_to_string(run.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = m.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0].split(',').count(), 13);
    assert_eq!(lines[1].split(',').count(), 13);
    assert!(lines[1].starts_with("hmpnn-sum,1,1,"));
}

#[test]
fn report_lays_out_fifteen_rows_in_five_groups() {
    let tmp = tempfile::tempdir().unwrap();
    let mut csv = String::from(
        "model,layers,seed,pr_auc,roc_auc,prec_at_1,prec_at_5,prec_at_10,prec_at_50,lift_at_1,lift_at_5,lift_at_10,lift_at_50\n",
    );
    let variants = [
        ("logreg", 1),
        ("mlp", 2),
        ("mlp", 3),
        ("hgraphsage", 1),
        ("hgraphsage", 2),
        ("hgraphsage", 3),
        ("hgraphsage-extra", 1),
        ("hgraphsage-extra", 2),
        ("hgraphsage-extra", 3),
        ("hmpnn-sum", 1),
        ("hmpnn-sum", 2),
        ("hmpnn-sum", 3),
        ("hmpnn-ct", 1),
        ("hmpnn-ct", 2),
        ("hmpnn-ct", 3),
    ];
    for (m, k) in variants {
        csv.push_str(&format!("{m},{k},0,0.1,0.8,0.5,0.4,0.3,0.1,100,80,60,20\n"));
    }
    let path = tmp.path().join("metrics.csv");
    fs::write(&path, csv).unwrap();
    let o = hmpnn(&["report", s(&path), "--out", s(tmp.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = String::from_utf8(o.stdout).unwrap();
    assert_eq!(table.matches("PR AUC").count(), 5);
    assert_eq!(table.matches("Precision(%)").count(), 15);
    assert_eq!(table.matches("Lift").count(), 15);
    assert_eq!(fs::read_to_string(tmp.path().join("report.txt")).unwrap(), table);
}

#[test]
fn unknown_flags_are_errors() {
    let o = hmpnn(&["--seed", "0", "generate", "--bogus"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("--bogus"));
}

#[test]
fn help_lists_global_flags() {
    let o = hmpnn(&["--help"]);
    let text = String::from_utf8_lossy(&o.stdout);
    for flag in ["--config", "--seed", "--out", "--jobs", "--quiet"] {
        assert!(text.contains(flag), "{flag} missing from help");
    }
    for cmd in ["generate", "features", "train", "tune", "evaluate", "report", "gradcheck"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}
