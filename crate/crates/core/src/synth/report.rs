use std::collections::BTreeMap;
use std::path::Path;

use crate::error::Result;
use crate::features::{weighted_summary, AMOUNT};
use crate::graph::{AmlIds, HeteroGraph, LabelTable};
use crate::util::{csv_bytes, write_atomic};

use super::{MotifInstance, MotifKind};

/// Class-conditional statistics of a labeled graph.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalReport {
    /// `(metric, value)`; `None` where the statistic is undefined, such as
    /// class-1 means when there are no positives.
    pub rows: Vec<(String, Option<f64>)>,
    /// Per node type name, `(total degree, node count)` for every degree seen.
    pub degree_hist: Vec<(String, Vec<(usize, usize)>)>,
}

impl SignalReport {
    pub fn get(&self, metric: &str) -> Option<f64> {
        self.rows.iter().find(|(m, _)| m == metric).and_then(|(_, v)| *v)
    }

    /// Writes `report.csv` and one `degree_hist_<type>.csv` per node type.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let rows = self
            .rows
            .iter()
            .map(|(m, v)| vec![m.clone(), v.map_or(String::new(), |x| x.to_string())]);
        write_atomic(&dir.join("report.csv"), &csv_bytes(&["metric", "value"], rows)?)?;
        for (ty, hist) in &self.degree_hist {
            let rows = hist.iter().map(|(d, c)| vec![d.to_string(), c.to_string()]);
            write_atomic(
                &dir.join(format!("degree_hist_{ty}.csv")),
                &csv_bytes(&["degree", "count"], rows)?,
            )?;
        }
        Ok(())
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Node and edge counts, class-conditional degree and amount statistics,
/// motif counts and degree histograms.
pub fn signal_strength_report(
    graph: &HeteroGraph,
    labels: &LabelTable,
    motifs: Option<&[MotifInstance]>,
) -> Result<SignalReport> {
    labels.check_against(graph)?;
    let schema = graph.schema();
    let ids = AmlIds::resolve(schema)?;
    let mut rows: Vec<(String, Option<f64>)> = Vec::new();

    for (t, def) in schema.node_types().iter().enumerate() {
        rows.push((format!("nodes_{}", def.name), Some(graph.num_nodes(t) as f64)));
    }
    for (s, step) in schema.meta_steps().iter().enumerate() {
        rows.push((format!("edges_{}", schema.step_name(*step)), Some(graph.edge_set(s).len() as f64)));
    }
    let y = labels.labels();
    rows.push(("positives".into(), Some(labels.positives() as f64)));
    rows.push(("prevalence".into(), mean(y.iter().map(|&v| v as f64))));

    let mut degree: Vec<Vec<usize>> = graph.node_counts().iter().map(|&n| vec![0; n]).collect();
    for (s, step) in schema.meta_steps().iter().enumerate() {
        let es = graph.edge_set(s);
        for &u in es.src() {
            degree[step.source][u] += 1;
        }
        for &v in es.dst() {
            degree[step.target][v] += 1;
        }
    }

    let w = weighted_summary(graph, AMOUNT)?;
    let columns: [(&str, Box<dyn Fn(usize) -> f64>); 3] = [
        ("degree", Box::new(|v| degree[ids.ind][v] as f64)),
        ("weighted_in_degree", Box::new(|v| w.get(v, 6))),
        ("weighted_out_degree", Box::new(|v| w.get(v, 7))),
    ];
    for (name, f) in &columns {
        for class in [0u8, 1] {
            let m = mean((0..y.len()).filter(|&v| y[v] == class).map(f));
            rows.push((format!("mean_{name}_class{class}"), m));
        }
    }

    if let Some(motifs) = motifs {
        for kind in [MotifKind::Smurfing, MotifKind::Layering, MotifKind::RoleAbuse] {
            let name = serde_json::to_value(kind)?.as_str().unwrap_or_default().replace('-', "_");
            for (decoy, label) in [(false, "motifs"), (true, "decoys")] {
                let c = motifs.iter().filter(|m| m.kind == kind && m.decoy == decoy).count();
                rows.push((format!("{label}_{name}"), Some(c as f64)));
            }
        }
        let covered = motifs
            .iter()
            .filter(|m| !m.decoy)
            .flat_map(|m| m.centres.iter())
            .filter(|&&v| y.get(v) == Some(&1))
            .count();
        let recall = (labels.positives() > 0).then(|| covered as f64 / labels.positives() as f64);
        rows.push(("motif_recall".into(), recall));
    }

    let degree_hist = schema
        .node_types()
        .iter()
        .enumerate()
        .map(|(t, def)| {
            let mut h: BTreeMap<usize, usize> = BTreeMap::new();
            for &d in &degree[t] {
                *h.entry(d).or_default() += 1;
            }
            (def.name.clone(), h.into_iter().collect())
        })
        .collect();
    Ok(SignalReport { rows, degree_hist })
}
