use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Recall levels (percent) at which precision and lift are reported.
pub const RECALL_LEVELS: [f64; 4] = [1.0, 5.0, 10.0, 50.0];

fn check(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("metric input"));
    }
    let pos = labels.iter().filter(|&&y| y != 0).count();
    Ok((pos, labels.len() - pos))
}

/// Indices by descending score, ties in index order.
fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// Mann-Whitney statistic `P(s+ > s-) + P(s+ = s-) / 2`.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (p, n) = check(scores, labels)?;
    if p == 0 || n == 0 {
        return Err(Error::InvalidArgument("roc_auc needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Doubled counts keep every partial sum an integer.
    let (mut neg_below, mut twice) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut gp, mut gn) = (0u64, 0u64);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] != 0 {
                gp += 1;
            } else {
                gn += 1;
            }
            j += 1;
        }
        twice += gp * (2 * neg_below + gn);
        neg_below += gn;
        i = j;
    }
    Ok(twice as f64 / (2.0 * p as f64 * n as f64))
}

/// Average precision: mean over positives, in ranking order, of the
/// precision at each positive's rank.
pub fn pr_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (p, _) = check(scores, labels)?;
    if p == 0 {
        return Err(Error::InvalidArgument("pr_auc needs at least one positive".into()));
    }
    let mut tp = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in ranking(scores).iter().enumerate() {
        if labels[i] != 0 {
            tp += 1;
            sum += tp as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / p as f64)
}

/// Precision of the shortest ranking prefix reaching `recall_pct` percent
/// recall, and that precision over prevalence.
pub fn precision_at_recall(scores: &[f64], labels: &[u8], recall_pct: f64) -> Result<(f64, f64)> {
    let (p, _) = check(scores, labels)?;
    if p == 0 {
        return Err(Error::InvalidArgument("precision_at_recall needs at least one positive".into()));
    }
    if !(recall_pct > 0.0 && recall_pct <= 100.0) {
        return Err(Error::InvalidArgument(format!("recall {recall_pct}% outside (0, 100]")));
    }
    let prevalence = p as f64 / labels.len() as f64;
    let target = recall_pct / 100.0;
    let mut tp = 0usize;
    for (rank, &i) in ranking(scores).iter().enumerate() {
        if labels[i] != 0 {
            tp += 1;
            if tp as f64 / p as f64 >= target {
                let precision = tp as f64 / (rank + 1) as f64;
                return Ok((precision, precision / prevalence));
            }
        }
    }
    unreachable!("recall reaches 1 once every positive is ranked")
}

/// One row of `metrics.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub layers: usize,
    pub seed: u64,
    pub pr_auc: f64,
    pub roc_auc: f64,
    /// At [`RECALL_LEVELS`].
    pub precision: [f64; 4],
    pub lift: [f64; 4],
}

impl MetricsReport {
    pub fn compute(model: &str, layers: usize, seed: u64, scores: &[f64], labels: &[u8]) -> Result<Self> {
        let mut precision = [0.0; 4];
        let mut lift = [0.0; 4];
        for (k, &r) in RECALL_LEVELS.iter().enumerate() {
            (precision[k], lift[k]) = precision_at_recall(scores, labels, r)?;
        }
        Ok(MetricsReport {
            model: model.to_string(),
            layers,
            seed,
            pr_auc: pr_auc(scores, labels)?,
            roc_auc: roc_auc(scores, labels)?,
            precision,
            lift,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const Y: [u8; 4] = [1, 0, 1, 0];
    const S: [f64; 4] = [0.9, 0.8, 0.4, 0.3];

    #[test]
    fn four_point_example() {
        assert_eq!(roc_auc(&S, &Y).unwrap(), 0.75);
        assert_eq!(precision_at_recall(&S, &Y, 50.0).unwrap(), (1.0, 2.0));
        let (p, l) = precision_at_recall(&S, &Y, 100.0).unwrap();
        assert!((p - 2.0 / 3.0).abs() < 1e-15 && (l - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ties_and_extremes() {
        assert_eq!(roc_auc(&[0.5; 4], &Y).unwrap(), 0.5);
        assert_eq!(roc_auc(&[1.0, 0.0, 1.0, 0.0], &Y).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.0, 1.0, 0.0, 1.0], &Y).unwrap(), 0.0);
        assert_eq!(pr_auc(&[1.0, 0.0, 1.0, 0.0], &Y).unwrap(), 1.0);
        assert_eq!(pr_auc(&[0.1, 0.9], &[1, 0]).unwrap(), 0.5);
        // Equal scores: index order decides, so the positive at index 0 ranks first.
        assert_eq!(pr_auc(&[0.5, 0.5], &[1, 0]).unwrap(), 1.0);
    }

    #[test]
    fn single_class_errors() {
        assert!(roc_auc(&[0.1, 0.2], &[1, 1]).is_err());
        assert!(pr_auc(&[0.1, 0.2], &[0, 0]).is_err());
        assert!(precision_at_recall(&S, &Y, 0.0).is_err());
        assert!(roc_auc(&[f64::NAN, 0.2], &[1, 0]).is_err());
    }

    #[test]
    fn report_fields() {
        let m = MetricsReport::compute("logreg", 1, 0, &S, &Y).unwrap();
        assert_eq!(m.roc_auc, 0.75);
        assert_eq!(m.precision[3], 1.0);
        assert_eq!(m.lift[0], 2.0);
    }
}
