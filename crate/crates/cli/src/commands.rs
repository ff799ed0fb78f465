use std::fs;
use std::path::{Path, PathBuf};

use log::info;

use hmpnn::autodiff::Checkpoint;
use hmpnn::features::{assemble_feature_table, FeatureTable};
use hmpnn::graph::{read_container, write_container, AmlIds, Container};
use hmpnn::harness::{
    build_input, evaluate as eval_rows, grid_search, read_metrics_csv, render_table, stratified_split, train as fit,
    write_cv_table, write_metrics_csv, BestHypers, SplitSpec, TrainConfig,
};
use hmpnn::models::{Model, ModelConfig, ModelInput, Variant};
use hmpnn::synth::{generate as synth, signal_strength_report, GenConfig};
use hmpnn::Tensor;

use crate::config::RunConfig;
use crate::CliError;

fn create_out(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let out = cfg.out();
    fs::create_dir_all(&out).map_err(|e| CliError::Config(format!("cannot create {}: {e}", out.display())))?;
    Ok(out)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Other(e.to_string()))?;
    text.push('\n');
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, text)
        .and_then(|_| fs::rename(&tmp, path))
        .map_err(|e| CliError::Other(format!("{}: {e}", path.display())))
}

fn load_graph(cfg: &RunConfig) -> Result<Container, CliError> {
    let c = read_container(cfg.graph()?)?;
    AmlIds::resolve(c.graph.schema())?;
    Ok(c)
}

fn labels(c: &Container) -> Result<&[u8], CliError> {
    c.labels
        .as_ref()
        .map(|l| l.labels())
        .ok_or_else(|| CliError::Config("graph container has no label table".into()))
}

fn labeled_type(c: &Container) -> Result<usize, CliError> {
    Ok(AmlIds::resolve(c.graph.schema())?.ind)
}

fn model_config(cfg: &RunConfig, seed: u64) -> Result<ModelConfig, CliError> {
    let kind = cfg
        .model
        .kind
        .as_deref()
        .ok_or_else(|| CliError::Config("a model is required (--model)".into()))?;
    let layers = cfg
        .model
        .layers
        .ok_or_else(|| CliError::Config("a layer count is required (--layers)".into()))?;
    let variant: Variant = kind.parse()?;
    let mut mc = variant.config(layers, seed);
    mc.hidden_dim = cfg.model.hidden_dim;
    mc.validate()?;
    Ok(mc)
}

fn entity_table(cfg: &RunConfig, mc: &ModelConfig) -> Result<Option<Tensor>, CliError> {
    if mc.kind.is_graph() {
        return Ok(None);
    }
    let path = cfg
        .features
        .as_deref()
        .ok_or_else(|| CliError::Config(format!("{} needs an entity feature table (--features)", mc.kind.as_str())))?;
    Ok(Some(FeatureTable::read(path)?.matrix))
}

fn split(cfg: &RunConfig, labels: &[u8], seed: u64) -> Result<SplitSpec, CliError> {
    Ok(stratified_split(labels, cfg.train_fraction(), seed)?)
}

pub fn generate(cfg: &RunConfig) -> Result<(), CliError> {
    let gen = GenConfig {
        seed: cfg.seed()?,
        ..cfg.generate.clone()
    };
    gen.validate()?;
    let out = create_out(cfg)?;
    let g = synth(&gen)?;
    write_container(&out, &g.graph, Some(&g.labels))?;
    write_json(&out.join("genconfig.json"), &gen)?;
    let report = signal_strength_report(&g.graph, &g.labels, Some(&g.motifs))?;
    report.write(&out.join("signal"))?;
    info!(
        "wrote {} nodes, {} edges, {} positives to {}",
        g.graph.total_nodes(),
        g.graph.total_edges(),
        g.labels.labels().iter().filter(|&&y| y == 1).count(),
        out.display()
    );
    Ok(())
}

pub fn features(cfg: &RunConfig) -> Result<(), CliError> {
    let seed = cfg.seed()?;
    let c = load_graph(cfg)?;
    let out = create_out(cfg)?;
    let fc = hmpnn::features::FeatureConfig {
        seed,
        ..cfg.featurize.clone()
    };
    let table = assemble_feature_table(&c.graph, &fc)?;
    let path = out.join("features_individual.csv");
    table.write(&path)?;
    for (block, cov) in &table.coverage {
        info!("embedding coverage {block}: {:.1}%", 100.0 * cov);
    }
    info!("wrote {} x {} to {}", table.matrix.rows(), table.matrix.cols(), path.display());
    Ok(())
}

pub fn tune(cfg: &RunConfig) -> Result<(), CliError> {
    let seed = cfg.seed()?;
    let c = load_graph(cfg)?;
    let y = labels(&c)?;
    let mc = model_config(cfg, seed)?;
    let x = entity_table(cfg, &mc)?;
    let input = build_input(&c.graph, labeled_type(&c)?, &mc, x.as_ref())?;
    let sp = split(cfg, y, seed)?;
    let out = create_out(cfg)?;
    let result = grid_search(&mc, &input, y, &sp.train, &cfg.grid, seed)?;
    write_cv_table(&out.join("cv_table.csv"), &result.rows)?;
    let best = BestHypers::from(&result);
    write_json(&out.join("best_hypers.json"), &best)?;
    info!(
        "{} K={}: lr {} l2 {} iterations {} (mean validation PR AUC {:.4})",
        mc.variant(),
        mc.layers,
        best.lr,
        best.l2,
        best.iterations,
        best.mean_val_pr_auc
    );
    Ok(())
}

pub fn train(cfg: &RunConfig, hypers: Option<&Path>) -> Result<(), CliError> {
    let seed = cfg.seed()?;
    let c = load_graph(cfg)?;
    let y = labels(&c)?;
    let mc = model_config(cfg, seed)?;
    let x = entity_table(cfg, &mc)?;
    let input = build_input(&c.graph, labeled_type(&c)?, &mc, x.as_ref())?;
    let sp = split(cfg, y, seed)?;
    cfg.grid.validate()?;
    let tc = match hypers {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let h: BestHypers =
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            TrainConfig {
                max_iter: h.iterations,
                ..cfg.grid.train_config(h.lr, h.l2)
            }
        }
        None => cfg.grid.train_config(cfg.grid.lrs[0], cfg.grid.l2s[0]),
    };
    let mut model = Model::new(&input, &mc)?;
    let log = fit(&mut model, &input, y, &sp.train, None, &tc)?;
    let out = create_out(cfg)?;
    model
        .to_checkpoint(&c.graph.schema().hash())
        .save(&out.join("checkpoint.json"))?;
    write_json(&out.join("train_log.json"), &log)?;
    let last = log.evals.last().map(|e| e.loss).unwrap_or(f64::NAN);
    info!("{} K={}: {} steps, final loss {last:.6}", mc.variant(), mc.layers, log.steps);
    Ok(())
}

pub fn evaluate(cfg: &RunConfig, checkpoints: &[PathBuf]) -> Result<(), CliError> {
    let seed = cfg.seed()?;
    let c = load_graph(cfg)?;
    let y = labels(&c)?;
    let sp = split(cfg, y, seed)?;
    let hash = c.graph.schema().hash();
    let mut rows = Vec::with_capacity(checkpoints.len());
    for path in checkpoints {
        let ck = Checkpoint::load(path)?;
        if ck.meta.schema_hash != hash {
            return Err(CliError::Config(format!(
                "{} was trained on a different schema",
                path.display()
            )));
        }
        let variant: Variant = ck.meta.model.parse()?;
        let mc = variant.config(ck.meta.layers, ck.meta.seed);
        let x = entity_table(cfg, &mc)?;
        let input: ModelInput = build_input(&c.graph, labeled_type(&c)?, &mc, x.as_ref())?;
        let model = Model::from_checkpoint(&input, &ck)?;
        let m = eval_rows(&model, &input, y, &sp.test, seed)?;
        info!("{} K={}: test PR AUC {:.4}, ROC AUC {:.4}", m.model, m.layers, m.pr_auc, m.roc_auc);
        rows.push(m);
    }
    let out = create_out(cfg)?;
    write_metrics_csv(&out.join("metrics.csv"), &rows)?;
    Ok(())
}

pub fn report(cfg: &RunConfig, metrics: &[PathBuf]) -> Result<(), CliError> {
    let mut rows = Vec::new();
    for path in metrics {
        rows.extend(read_metrics_csv(path)?);
    }
    let table = render_table(&rows);
    print!("{table}");
    if let Some(out) = &cfg.out {
        fs::create_dir_all(out).map_err(|e| CliError::Config(format!("cannot create {}: {e}", out.display())))?;
        fs::write(out.join("report.txt"), &table).map_err(|e| CliError::Other(e.to_string()))?;
    }
    Ok(())
}

pub fn gradcheck(cfg: &RunConfig, step: f64, tolerance: f64) -> Result<(), CliError> {
    let seed = cfg.seed()?;
    let mc = model_config(cfg, seed)?;
    let g = synth(&GenConfig::tiny(seed))?;
    let ids = AmlIds::resolve(g.graph.schema())?;
    let table = if mc.kind.is_graph() {
        None
    } else {
        Some(assemble_feature_table(&g.graph, &hmpnn::features::FeatureConfig { seed, ..Default::default() })?.matrix)
    };
    let input = build_input(&g.graph, ids.ind, &mc, table.as_ref())?;
    let model = Model::new(&input, &mc)?;
    let idx: Vec<usize> = (0..g.labels.labels().len()).collect();
    let targets: Vec<f64> = g.labels.labels().iter().map(|&v| v as f64).collect();
    let report = model.gradient_check(&input, &idx, &targets, step)?;
    println!(
        "{} K={}: max relative error {:.3e} over {} tensors",
        mc.variant(),
        mc.layers,
        report.max_rel_err,
        report.per_param.len()
    );
    if report.passes(tolerance) {
        Ok(())
    } else {
        let worst = report
            .per_param
            .iter()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(n, _)| n.as_str())
            .unwrap_or("");
        Err(CliError::Numeric(format!(
            "gradient check failed: {:.3e} >= {tolerance:.1e} (worst tensor `{worst}`)",
            report.max_rel_err
        )))
    }
}
