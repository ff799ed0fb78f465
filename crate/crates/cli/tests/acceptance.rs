//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::fixtures::{block_cosine_gap, forward_mismatch, grad_check_error, MODEL_GRID};
use common::oracle::{ap_rank_walk, roc_pairwise};
use hmpnn::features::{assemble_feature_table, FeatureConfig};
use hmpnn::graph::AmlIds;
use hmpnn::harness::{
    build_input, evaluate, grid_search, kfold_stratified, pr_auc, precision_at_recall, refit,
    roc_auc, stratified_split, GridResult, HyperGrid,
};
use hmpnn::models::{count_parameters, Model, ModelConfig, ModelKind};
use hmpnn::HeteroSchema;
use hmpnn::synth::{generate, zero_amounts, GenConfig, Generated};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn gradients() -> Outcome {
    let t = Instant::now();
    let mut worst = (0.0, String::new());
    for seed in 0..3 {
        for (kind, k) in MODEL_GRID {
            let err = grad_check_error(kind, k, seed);
            if err > worst.0 {
                worst = (err, format!("{} K={k} seed {seed}", kind.as_str()));
            }
        }
    }
    let elapsed = t.elapsed();
    outcome(
        worst.0 < 1e-4 && elapsed < Duration::from_secs(120),
        format!("max relative error {:.2e} ({}), {:.1}s", worst.0, worst.1, elapsed.as_secs_f64()),
    )
}

fn metric_instance(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<u8>) {
    let n = rng.random_range(10..=500);
    let levels = rng.random_range(2..=50);
    let rate = rng.random_range(0.02..0.5);
    let mut y: Vec<u8> = (0..n).map(|_| rng.random_bool(rate) as u8).collect();
    y[0] = 1;
    y[1] = 0;
    let s = (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
    (s, y)
}

fn metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (mut roc_err, mut ap_err): (f64, f64) = (0.0, 0.0);
    for _ in 0..200 {
        let (s, y) = metric_instance(&mut rng);
        roc_err = roc_err.max((roc_auc(&s, &y).unwrap() - roc_pairwise(&s, &y)).abs());
    }
    for _ in 0..200 {
        let (s, y) = metric_instance(&mut rng);
        ap_err = ap_err.max((pr_auc(&s, &y).unwrap() - ap_rank_walk(&s, &y)).abs());
    }
    let (s, y) = ([0.9, 0.8, 0.4, 0.3], [1, 0, 1, 0]);
    let roc = roc_auc(&s, &y).unwrap();
    let (p50, _) = precision_at_recall(&s, &y, 50.0).unwrap();
    outcome(
        roc_err <= 1e-12 && ap_err <= 1e-12 && roc == 0.75 && p50 == 1.0,
        format!("roc {roc_err:.1e}, pr {ap_err:.1e} from oracles; anchors roc {roc}, precision@50% {p50}"),
    )
}

fn forward() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut max_edges, mut worst) = (0, 0.0f64);
    for g_seed in 0..20 {
        let (edges, err) = forward_mismatch(g_seed, &mut rng);
        max_edges = max_edges.max(edges);
        worst = worst.max(err);
    }
    outcome(
        worst <= 1e-12 && max_edges <= 1000,
        format!("max difference {worst:.1e} over 20 graphs (largest {max_edges} edges)"),
    )
}

fn parameter_counts() -> Outcome {
    let counts: Vec<usize> = (1..=3)
        .map(|k| {
            count_parameters(&HeteroSchema::aml(), &ModelConfig::new(ModelKind::Mlp, k), 94).unwrap()
        })
        .collect();
    outcome(counts == [95, 9025, 17955], format!("{counts:?}"))
}

fn trend(g: &Generated) -> Outcome {
    let t0 = Instant::now();
    let y = g.labels.labels();
    let ind = AmlIds::resolve(g.graph.schema()).unwrap().ind;
    let table = assemble_feature_table(&g.graph, &FeatureConfig::default()).unwrap();
    let grid = HyperGrid {
        lrs: vec![0.1],
        l2s: vec![1e-6],
        folds: 3,
        max_iter: 600,
        ..HyperGrid::default()
    };
    let mean = |kind: ModelKind, k: usize| -> f64 {
        let mut tuned: Option<GridResult> = None;
        let mut total = 0.0;
        for seed in 0..3u64 {
            let split = stratified_split(y, 0.7, seed).unwrap();
            let cfg = ModelConfig::new(kind, k).with_seed(seed);
            let input = build_input(&g.graph, ind, &cfg, Some(&table.matrix)).unwrap();
            let r = tuned
                .get_or_insert_with(|| grid_search(&cfg, &input, y, &split.train, &grid, seed).unwrap())
                .clone();
            let (m, _) = refit(&cfg, &input, y, &split.train, &grid, &r).unwrap();
            total += evaluate(&m, &input, y, &split.test, seed).unwrap().pr_auc;
        }
        total / 3.0
    };
    let lr = mean(ModelKind::Logreg, 1);
    let ct1 = mean(ModelKind::HmpnnCt, 1);
    let gs3 = mean(ModelKind::Hgraphsage, 3);
    let ct3 = mean(ModelKind::HmpnnCt, 3);
    let elapsed = t0.elapsed();
    outcome(
        ct3 - ct1 >= 0.01 && ct3 - gs3 >= 0.02 && ct3 - lr >= 0.02 && elapsed <= Duration::from_secs(1800),
        format!(
            "mean test PR AUC: hmpnn-ct K=3 {ct3:.4}, hmpnn-ct K=1 {ct1:.4}, hgraphsage K=3 {gs3:.4}, logreg {lr:.4}; {:.0}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn sensitivity(g: &Generated) -> Outcome {
    let ind = AmlIds::resolve(g.graph.schema()).unwrap().ind;
    let zeroed = zero_amounts(&g.graph).unwrap();
    let test = stratified_split(g.labels.labels(), 0.7, 0).unwrap().test;
    let scores = |graph: &hmpnn::HeteroGraph, mc: &ModelConfig| {
        let input = build_input(graph, ind, mc, None).unwrap();
        Model::new(&input, mc).unwrap().scores(&input).unwrap()
    };
    let mut sage_same = true;
    let mut min_frac: f64 = 1.0;
    for k in 1..=3 {
        let mc = ModelConfig::new(ModelKind::Hgraphsage, k);
        sage_same &= scores(&g.graph, &mc) == scores(&zeroed, &mc);
        for kind in [ModelKind::HmpnnSum, ModelKind::HmpnnCt] {
            let mc = ModelConfig::new(kind, k);
            let (a, b) = (scores(&g.graph, &mc), scores(&zeroed, &mc));
            let changed = test.iter().filter(|&&i| a[i] != b[i]).count();
            min_frac = min_frac.min(changed as f64 / test.len() as f64);
        }
    }
    outcome(
        sage_same && min_frac >= 0.99,
        format!("hgraphsage unchanged: {sage_same}; hmpnn changed on at least {:.2}% of test nodes", 100.0 * min_frac),
    )
}

fn splits(g: &Generated) -> Outcome {
    let y = g.labels.labels();
    let rate = |idx: &[usize]| idx.iter().filter(|&&i| y[i] == 1).count() as f64 / idx.len() as f64;
    let overall = rate(&(0..y.len()).collect::<Vec<_>>());
    let s = stratified_split(y, 0.7, 0).unwrap();
    let drift = (rate(&s.train) - overall).abs().max((rate(&s.test) - overall).abs()) * 100.0;
    let folds = kfold_stratified(y, 5, 0).unwrap();
    let mut spread = 0;
    for class in [0u8, 1] {
        let c: Vec<usize> = folds.iter().map(|f| f.test.iter().filter(|&&i| y[i] == class).count()).collect();
        spread = spread.max(c.iter().max().unwrap() - c.iter().min().unwrap());
    }
    outcome(
        y.len() == 20_000 && drift <= 0.05 && spread <= 1,
        format!("prevalence drift {drift:.4} pp on {} nodes; fold count spread {spread}", y.len()),
    )
}

fn run_demo(dir: &Path, config: &Path) -> bool {
    let script = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scripts/demo.sh");
    Command::new("bash")
        .arg(script)
        .arg(config)
        .arg(dir)
        .env("HMPNN", env!("CARGO_BIN_EXE_hmpnn"))
        .env("SEED", "4")
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("demo.json");
    fs::write(
        &config,
        r#"{
  "generate": { "n_individual": 400, "n_organization": 40, "n_external": 200, "prevalence": 0.02 },
  "grid": { "lrs": [0.1], "l2s": [1e-6], "folds": 2, "max_iter": 40, "eval_every": 10, "patience": 2 }
}"#,
    )
    .unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    if !run_demo(&a, &config) || !run_demo(&b, &config) {
        return outcome(false, "demo pipeline failed".into());
    }
    let same = |f: &str| match (fs::read(a.join(f)), fs::read(b.join(f))) {
        (Ok(x), Ok(y)) => !x.is_empty() && x == y,
        _ => false,
    };
    let (m, c) = (same("metrics.csv"), same("cv_table.csv"));
    outcome(m && c, format!("metrics.csv identical: {m}; cv_table.csv identical: {c}"))
}

fn embeddings() -> Outcome {
    let mut gaps: Vec<f64> = (0..3).map(block_cosine_gap).collect();
    gaps.sort_by(f64::total_cmp);
    outcome(gaps[1] >= 0.2, format!("median intra minus inter cosine {:.3} ({gaps:.3?})", gaps[1]))
}

fn main() {
    let default = generate(&GenConfig::default()).unwrap();
    let checks: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("gradient correctness", Box::new(gradients)),
        ("metric oracles", Box::new(metrics)),
        ("forward-pass oracle equivalence", Box::new(forward)),
        ("parameter counts", Box::new(parameter_counts)),
        ("qualitative trend", Box::new(|| trend(&default))),
        ("edge-feature sensitivity", Box::new(|| sensitivity(&default))),
        ("split and fold properties", Box::new(|| splits(&default))),
        ("pipeline determinism", Box::new(determinism)),
        ("metapath2vec geometry", Box::new(embeddings)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let o = check();
        failed += usize::from(!o.pass);
        println!("{} criterion {}: {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
