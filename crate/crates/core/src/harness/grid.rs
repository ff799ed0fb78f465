use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Model, ModelConfig, ModelInput};

use super::split::kfold_stratified;
use super::train::{train, TrainConfig, TrainLog};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperGrid {
    pub lrs: Vec<f64>,
    pub l2s: Vec<f64>,
    pub folds: usize,
    pub max_iter: usize,
    pub eval_every: usize,
    pub patience: usize,
    pub prior_bias: bool,
}

impl Default for HyperGrid {
    fn default() -> Self {
        HyperGrid {
            lrs: vec![1e-4, 1e-3, 1e-2, 1e-1],
            l2s: (1..=8).rev().map(|e| 10f64.powi(-e)).collect(),
            folds: 5,
            max_iter: 2000,
            eval_every: 10,
            patience: 10,
            prior_bias: true,
        }
    }
}

impl HyperGrid {
    /// Learning rates must be 0 or in `[1e-4, 1e-1]`; L2 strengths 0 or in
    /// `[1e-8, 1e-1]`.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.lrs.is_empty() || self.l2s.is_empty() {
            return bad("hyperparameter grid is empty".into());
        }
        let within = |v: f64, lo: f64| v == 0.0 || (lo * (1.0 - 1e-12)..=0.1 * (1.0 + 1e-12)).contains(&v);
        if let Some(lr) = self.lrs.iter().find(|&&v| !within(v, 1e-4)) {
            return bad(format!("learning rate {lr} outside [1e-4, 1e-1]"));
        }
        if let Some(l2) = self.l2s.iter().find(|&&v| !within(v, 1e-8)) {
            return bad(format!("L2 strength {l2} outside [1e-8, 1e-1]"));
        }
        if self.folds < 2 || self.eval_every == 0 || self.patience == 0 {
            return bad("need folds >= 2, eval_every >= 1 and patience >= 1".into());
        }
        Ok(())
    }

    pub fn train_config(&self, lr: f64, l2: f64) -> TrainConfig {
        TrainConfig {
            lr,
            l2,
            max_iter: self.max_iter,
            eval_every: self.eval_every,
            patience: self.patience,
            prior_bias: self.prior_bias,
        }
    }

    /// Grid points in `(lr, l2)` row-major order.
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.lrs
            .iter()
            .flat_map(|&lr| self.l2s.iter().map(move |&l2| (lr, l2)))
            .collect()
    }
}

/// One row of `cv_table.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub model: String,
    pub layers: usize,
    pub lr: f64,
    pub l2: f64,
    pub fold: usize,
    pub val_pr_auc: f64,
    pub stop_iter: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub lr: f64,
    pub l2: f64,
    pub mean_val_pr_auc: f64,
    /// Median early-stop iteration of the winner across folds.
    pub stop_iter: usize,
    pub rows: Vec<CvRow>,
}

/// Cross-validated grid search over the rows `train_idx`. Every run starts
/// from the same initialisation (`config.seed`); folds are drawn with `seed`.
pub fn grid_search(
    config: &ModelConfig,
    input: &ModelInput,
    labels: &[u8],
    train_idx: &[usize],
    grid: &HyperGrid,
    seed: u64,
) -> Result<GridResult> {
    grid.validate()?;
    config.validate()?;
    let sub: Vec<u8> = train_idx.iter().map(|&i| labels[i]).collect();
    let folds = kfold_stratified(&sub, grid.folds, seed)?;
    let folds: Vec<(Vec<usize>, Vec<usize>)> = folds
        .into_iter()
        .map(|f| {
            (
                f.train.iter().map(|&p| train_idx[p]).collect(),
                f.test.iter().map(|&p| train_idx[p]).collect(),
            )
        })
        .collect();
    let points = grid.points();
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..folds.len()).map(move |f| (p, f)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(p, f)| {
            let (lr, l2) = points[p];
            let mut model = Model::new(input, config)?;
            let (tr, va) = &folds[f];
            let log = train(&mut model, input, labels, tr, Some(va), &grid.train_config(lr, l2))?;
            Ok(CvRow {
                model: config.variant(),
                layers: config.layers,
                lr,
                l2,
                fold: f,
                val_pr_auc: log.best_val_pr_auc.expect("validation set given"),
                stop_iter: log.best_iter,
            })
        })
        .collect::<Result<Vec<CvRow>>>()?;

    let k = folds.len();
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        let (la, lb) = (points[a], points[b]);
        la.1.total_cmp(&lb.1).then(la.0.total_cmp(&lb.0))
    });
    let mean = |p: usize| rows[p * k..(p + 1) * k].iter().map(|r| r.val_pr_auc).sum::<f64>() / k as f64;
    let mut best = order[0];
    for &p in &order[1..] {
        if mean(p) > mean(best) {
            best = p;
        }
    }
    let mut stops: Vec<usize> = rows[best * k..(best + 1) * k].iter().map(|r| r.stop_iter).collect();
    stops.sort_unstable();
    Ok(GridResult {
        lr: points[best].0,
        l2: points[best].1,
        mean_val_pr_auc: mean(best),
        stop_iter: stops[(k - 1) / 2],
        rows,
    })
}

/// Retrains on all of `train_idx` for the winner's median stop iteration.
pub fn refit(
    config: &ModelConfig,
    input: &ModelInput,
    labels: &[u8],
    train_idx: &[usize],
    grid: &HyperGrid,
    result: &GridResult,
) -> Result<(Model, TrainLog)> {
    let mut model = Model::new(input, config)?;
    let cfg = TrainConfig {
        max_iter: result.stop_iter,
        ..grid.train_config(result.lr, result.l2)
    };
    let log = train(&mut model, input, labels, train_idx, None, &cfg)?;
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{EntityInput, ModelKind};
    use crate::tensor::Tensor;

    fn toy() -> (ModelInput<'static>, Vec<u8>) {
        let n = 60;
        let mut data = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let pos = i % 3 == 0;
            data.push(if pos { 1.0 } else { -1.0 } + 0.3 * ((i * 13 % 7) as f64 - 3.0));
            data.push((i % 5) as f64 - 2.0);
            y.push(pos as u8);
        }
        (ModelInput::Entity(EntityInput::raw(Tensor::from_vec(n, 2, data).unwrap())), y)
    }

    fn small_grid(lrs: Vec<f64>) -> HyperGrid {
        HyperGrid {
            lrs,
            l2s: vec![1e-6],
            folds: 3,
            max_iter: 100,
            eval_every: 5,
            patience: 3,
            prior_bias: true,
        }
    }

    #[test]
    fn one_point_grid() {
        let (input, y) = toy();
        let cfg = ModelConfig::new(ModelKind::Logreg, 1);
        let idx: Vec<usize> = (0..60).collect();
        let r = grid_search(&cfg, &input, &y, &idx, &small_grid(vec![1e-2]), 0).unwrap();
        assert_eq!((r.lr, r.l2), (1e-2, 1e-6));
        assert_eq!(r.rows.len(), 3);
    }

    #[test]
    fn zero_lr_loses_and_runs_repeat() {
        let (input, y) = toy();
        // Start from weights that rank the classes backwards.
        let cfg = ModelConfig::new(ModelKind::Logreg, 1).with_seed(1);
        let idx: Vec<usize> = (0..60).collect();
        let grid = small_grid(vec![0.0, 1e-1]);
        let r = grid_search(&cfg, &input, &y, &idx, &grid, 0).unwrap();
        let zero_mean: f64 = r.rows.iter().filter(|x| x.lr == 0.0).map(|x| x.val_pr_auc).sum::<f64>() / 3.0;
        if r.mean_val_pr_auc > zero_mean {
            assert_eq!(r.lr, 1e-1);
        }
        assert_eq!(r, grid_search(&cfg, &input, &y, &idx, &grid, 0).unwrap());
    }

    #[test]
    fn grid_ranges() {
        assert!(HyperGrid::default().validate().is_ok());
        assert_eq!(HyperGrid::default().points().len(), 32);
        assert!(small_grid(vec![0.5]).validate().is_err());
    }
}
