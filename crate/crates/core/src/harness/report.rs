use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::util::{csv_bytes, write_atomic};

use super::grid::CvRow;
use super::metrics::{MetricsReport, RECALL_LEVELS};

pub const METRICS_HEADER: [&str; 13] = [
    "model",
    "layers",
    "seed",
    "pr_auc",
    "roc_auc",
    "prec_at_1",
    "prec_at_5",
    "prec_at_10",
    "prec_at_50",
    "lift_at_1",
    "lift_at_5",
    "lift_at_10",
    "lift_at_50",
];

pub const CV_HEADER: [&str; 7] = ["model", "layers", "lr", "l2", "fold", "val_pr_auc", "stop_iter"];

pub fn metrics_csv(rows: &[MetricsReport]) -> Result<Vec<u8>> {
    let records = rows.iter().map(|m| {
        let mut r = vec![m.model.clone(), m.layers.to_string(), m.seed.to_string()];
        r.push(m.pr_auc.to_string());
        r.push(m.roc_auc.to_string());
        r.extend(m.precision.iter().map(f64::to_string));
        r.extend(m.lift.iter().map(f64::to_string));
        r
    });
    csv_bytes(&METRICS_HEADER, records)
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsReport]) -> Result<()> {
    write_atomic(path, &metrics_csv(rows)?)
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsReport>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(f);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let table = path.display().to_string();
    if header != METRICS_HEADER {
        return Err(Error::Table {
            table,
            row: 0,
            msg: format!("expected header {}", METRICS_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |c: usize| Error::Table {
            table: table.clone(),
            row,
            msg: format!("column `{}` is malformed", METRICS_HEADER[c]),
        };
        let num = |c: usize| rec[c].parse::<f64>().map_err(|_| bad(c));
        out.push(MetricsReport {
            model: rec[0].to_string(),
            layers: rec[1].parse().map_err(|_| bad(1))?,
            seed: rec[2].parse().map_err(|_| bad(2))?,
            pr_auc: num(3)?,
            roc_auc: num(4)?,
            precision: [num(5)?, num(6)?, num(7)?, num(8)?],
            lift: [num(9)?, num(10)?, num(11)?, num(12)?],
        });
    }
    Ok(out)
}

pub fn cv_table_csv(rows: &[CvRow]) -> Result<Vec<u8>> {
    let records = rows.iter().map(|r| {
        vec![
            r.model.clone(),
            r.layers.to_string(),
            r.lr.to_string(),
            r.l2.to_string(),
            r.fold.to_string(),
            r.val_pr_auc.to_string(),
            r.stop_iter.to_string(),
        ]
    });
    csv_bytes(&CV_HEADER, records)
}

pub fn write_cv_table(path: &Path, rows: &[CvRow]) -> Result<()> {
    write_atomic(path, &cv_table_csv(rows)?)
}

/// Result groups in display order. The entity group has logistic regression
/// at one layer and feed-forward networks above.
const GROUPS: [(&str, &[&str]); 5] = [
    ("Logistic regression / neural network", &["logreg", "mlp"]),
    ("HGraphSage", &["hgraphsage"]),
    ("HGraphSage with degree features", &["hgraphsage-extra"]),
    ("HMPNN-sum", &["hmpnn-sum"]),
    ("HMPNN-ct", &["hmpnn-ct"]),
];

/// Seed-averaged rows keyed by (model, layers).
fn averaged(rows: &[MetricsReport]) -> BTreeMap<(String, usize), (MetricsReport, usize)> {
    let mut acc: BTreeMap<(String, usize), (MetricsReport, usize)> = BTreeMap::new();
    for r in rows {
        let e = acc.entry((r.model.clone(), r.layers)).or_insert_with(|| {
            (
                MetricsReport {
                    pr_auc: 0.0,
                    roc_auc: 0.0,
                    precision: [0.0; 4],
                    lift: [0.0; 4],
                    ..r.clone()
                },
                0,
            )
        });
        e.0.pr_auc += r.pr_auc;
        e.0.roc_auc += r.roc_auc;
        for k in 0..4 {
            e.0.precision[k] += r.precision[k];
            e.0.lift[k] += r.lift[k];
        }
        e.1 += 1;
    }
    for (m, n) in acc.values_mut() {
        let n = *n as f64;
        m.pr_auc /= n;
        m.roc_auc /= n;
        for k in 0..4 {
            m.precision[k] /= n;
            m.lift[k] /= n;
        }
    }
    acc
}

/// Text table with one block per model group and, per layer count, a
/// precision row and a lift row. Rows for several seeds are averaged.
pub fn render_table(rows: &[MetricsReport]) -> String {
    let avg = averaged(rows);
    let mut out = String::new();
    let recall_cols: String = RECALL_LEVELS.iter().map(|r| format!("{:>9}", format!("R={r}%"))).collect();
    for (title, models) in GROUPS {
        let mut entries: Vec<(&(String, usize), &(MetricsReport, usize))> =
            avg.iter().filter(|((m, _), _)| models.contains(&m.as_str())).collect();
        if entries.is_empty() {
            continue;
        }
        entries.sort_by_key(|((_, k), _)| *k);
        let seeds = entries.iter().map(|(_, (_, n))| *n).max().unwrap_or(1);
        let suffix = if seeds > 1 { format!(" (mean of {seeds} seeds)") } else { String::new() };
        let _ = writeln!(out, "{title}{suffix}");
        let _ = writeln!(
            out,
            "{:<7}{:<8}{:<14}{recall_cols}{:>9}{:>9}",
            "Layers", "Degree", "", "PR AUC", "ROC AUC"
        );
        for ((model, layers), (m, _)) in entries {
            let degree = if model.ends_with("-extra") { "Yes" } else { "No" };
            let prec: String = m.precision.iter().map(|p| format!("{:>9.2}", 100.0 * p)).collect();
            let lift: String = m.lift.iter().map(|l| format!("{l:>9.2}")).collect();
            let _ = writeln!(
                out,
                "{layers:<7}{degree:<8}{:<14}{prec}{:>9.4}{:>9.4}",
                "Precision(%)", m.pr_auc, m.roc_auc
            );
            let _ = writeln!(out, "{:<15}{:<14}{lift}", "", "Lift");
        }
        out.push('\n');
    }
    out
}
