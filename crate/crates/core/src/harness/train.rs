use serde::{Deserialize, Serialize};

use crate::autodiff::{Adam, AdamConfig};
use crate::error::{Error, Result};
use crate::models::{Model, ModelInput};

use super::metrics::pr_auc;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub l2: f64,
    pub max_iter: usize,
    pub eval_every: usize,
    /// Evaluations without improvement before stopping.
    pub patience: usize,
    /// Start the output bias at the log-odds of the training prevalence.
    pub prior_bias: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-2,
            l2: 1e-6,
            max_iter: 2000,
            eval_every: 10,
            patience: 10,
            prior_bias: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub iter: usize,
    pub loss: f64,
    pub val_pr_auc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub evals: Vec<EvalPoint>,
    /// Steps taken by the returned parameters.
    pub best_iter: usize,
    pub best_val_pr_auc: Option<f64>,
    pub steps: usize,
}

/// Labels of the rows `idx`, as BCE targets.
pub fn targets(labels: &[u8], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| labels[i] as f64).collect()
}

/// Full-batch Adam on the rows `train_idx`. With a validation set the
/// validation PR AUC is recorded every `eval_every` steps, training stops
/// after `patience` evaluations without improvement, and the best
/// parameters are restored. Without one, exactly `max_iter` steps are taken.
/// Under the heavy class imbalance of the task a zero output bias makes the
/// first steps push every parameter towards predicting the majority class,
/// which is what `prior_bias` avoids.
pub fn train(
    model: &mut Model,
    input: &ModelInput,
    labels: &[u8],
    train_idx: &[usize],
    val_idx: Option<&[usize]>,
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    if cfg.eval_every == 0 {
        return Err(Error::InvalidArgument("eval_every must be at least 1".into()));
    }
    let y = targets(labels, train_idx);
    if cfg.prior_bias && !y.is_empty() {
        model.set_prior_bias(y.iter().sum::<f64>() / y.len() as f64);
    }
    let val_labels: Option<Vec<u8>> = val_idx.map(|v| v.iter().map(|&i| labels[i]).collect());
    let mut adam = Adam::new(model.params(), AdamConfig::new(cfg.lr, cfg.l2));
    let mut log = TrainLog {
        evals: Vec::new(),
        best_iter: 0,
        best_val_pr_auc: None,
        steps: 0,
    };
    let mut best_params = None;
    let mut stale = 0;

    for it in 0..=cfg.max_iter {
        let eval = model.loss_and_grad(input, train_idx, &y)?;
        if !eval.loss.is_finite() {
            return Err(Error::Diverged {
                iteration: it,
                loss: eval.loss,
            });
        }
        if it % cfg.eval_every == 0 || it == cfg.max_iter {
            let val = match (val_idx, &val_labels) {
                (Some(v), Some(vy)) => {
                    let s: Vec<f64> = v.iter().map(|&i| eval.scores[i]).collect();
                    Some(pr_auc(&s, vy)?)
                }
                _ => None,
            };
            log.evals.push(EvalPoint {
                iter: it,
                loss: eval.loss,
                val_pr_auc: val,
            });
            if let Some(v) = val {
                if log.best_val_pr_auc.is_none_or(|b| v > b) {
                    log.best_val_pr_auc = Some(v);
                    log.best_iter = it;
                    best_params = Some(model.params().clone());
                    stale = 0;
                } else {
                    stale += 1;
                    if stale >= cfg.patience {
                        break;
                    }
                }
            }
        }
        if it == cfg.max_iter {
            break;
        }
        adam.step(model.params_mut(), &eval.grads)?;
        log.steps = it + 1;
    }
    match best_params {
        Some(p) => model.set_params(p)?,
        None => log.best_iter = log.steps,
    }
    Ok(log)
}
