use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AmlIds, HeteroGraph};
use crate::tensor::Tensor;
use crate::util::{csv_bytes, derive_seed, write_atomic};

use super::{
    metapath_walks, skipgram_train, unweighted_summary, weighted_summary, MetaPath, SkipGramConfig, AMOUNT,
    UNWEIGHTED_COLUMNS, WEIGHTED_COLUMNS,
};

/// The four embedding meta-paths, in column order.
pub const TABLE_A2_PATHS: [&str; 4] = [
    "individual-txn-individual-txn-individual",
    "individual-txn-organization-txn-individual",
    "individual-txn-external-txn-individual",
    "individual-role-organization-txn-individual",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub walk_length: usize,
    pub walks_per_node: usize,
    pub skipgram: SkipGramConfig,
    pub amount_index: usize,
    pub summaries: bool,
    pub embeddings: bool,
    pub seed: u64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            walk_length: 20,
            walks_per_node: 10,
            skipgram: SkipGramConfig::default(),
            amount_index: AMOUNT,
            summaries: true,
            embeddings: true,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    pub matrix: Tensor,
    pub columns: Vec<String>,
    /// Fraction of individuals with a trained embedding, per block.
    pub coverage: Vec<(String, f64)>,
}

fn slug(path: &str) -> String {
    path.split('-').map(|p| &p[..p.len().min(3)]).collect::<Vec<_>>().join("_")
}

/// `n_individual x 94`: intrinsic features, unweighted summary, weighted
/// summary, then for each meta-path the start and end embeddings. Blocks
/// switched off in `config` are left as zero columns.
pub fn assemble_feature_table(graph: &HeteroGraph, config: &FeatureConfig) -> Result<FeatureTable> {
    let schema = graph.schema();
    let ids = AmlIds::resolve(schema)?;
    let n = graph.num_nodes(ids.ind);
    let dim = config.skipgram.dim;

    let mut columns: Vec<String> = (0..schema.node_dim(ids.ind))
        .map(|i| format!("x_{}", schema.node_types()[ids.ind].feature_name(i)))
        .collect();
    columns.extend(UNWEIGHTED_COLUMNS.iter().map(|s| s.to_string()));
    columns.extend(WEIGHTED_COLUMNS.iter().map(|s| s.to_string()));
    for p in TABLE_A2_PATHS {
        for pos in ["start", "end"] {
            columns.extend((0..dim).map(|i| format!("m2v_{}_{pos}_{i}", slug(p))));
        }
    }

    let mut blocks: Vec<Tensor> = vec![graph.node_features(ids.ind).clone()];
    if config.summaries {
        blocks.push(unweighted_summary(graph)?);
        blocks.push(weighted_summary(graph, config.amount_index)?);
    } else {
        blocks.push(Tensor::zeros(n, UNWEIGHTED_COLUMNS.len()));
        blocks.push(Tensor::zeros(n, WEIGHTED_COLUMNS.len()));
    }

    let mut coverage = Vec::new();
    if config.embeddings && n > 0 {
        let jobs: Vec<(usize, MetaPath, &str)> = TABLE_A2_PATHS
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let path = MetaPath::parse(schema, p)?;
                Ok([(2 * i, path.clone(), "start"), (2 * i + 1, path.reversed(), "end")])
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        let counts = graph.node_counts();
        let trained: Vec<(Tensor, f64)> = jobs
            .par_iter()
            .map(|(k, path, _)| {
                let seed = derive_seed(config.seed, *k as u64 + 1);
                let corpus = metapath_walks(graph, path, config.walk_length, config.walks_per_node, seed)?;
                let cfg = SkipGramConfig {
                    seed,
                    ..config.skipgram.clone()
                };
                let table = skipgram_train(&counts, &corpus, &cfg)?;
                let cov = table.coverage(ids.ind).iter().filter(|&&c| c).count() as f64 / n as f64;
                Ok((table.for_type(ids.ind), cov))
            })
            .collect::<Result<Vec<_>>>()?;
        for ((k, _, pos), (emb, cov)) in jobs.iter().zip(trained) {
            coverage.push((format!("{}:{pos}", TABLE_A2_PATHS[k / 2]), cov));
            blocks.push(emb);
        }
    } else {
        blocks.push(Tensor::zeros(n, 2 * TABLE_A2_PATHS.len() * dim));
    }

    let refs: Vec<&Tensor> = blocks.iter().collect();
    let matrix = Tensor::hcat(&refs)?;
    if matrix.cols() != columns.len() {
        return Err(Error::shape(
            "assemble_feature_table",
            format!("{} columns built, {} named", matrix.cols(), columns.len()),
        ));
    }
    Ok(FeatureTable {
        matrix,
        columns,
        coverage,
    })
}

impl FeatureTable {
    /// CSV with header `id,<columns>`; ids are dense individual indices.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut header = vec!["id".to_string()];
        header.extend(self.columns.iter().cloned());
        let rows = (0..self.matrix.rows()).map(|i| {
            let mut r = vec![i.to_string()];
            r.extend(self.matrix.row(i).iter().map(|v| v.to_string()));
            r
        });
        csv_bytes(&header, rows)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_csv()?)
    }

    /// Reads a table written by [`write`](Self::write). Rows must carry ids
    /// `0..n` in order.
    pub fn read(path: &Path) -> Result<FeatureTable> {
        let table = path.display().to_string();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::Reader::from_reader(f);
        let header = rdr.headers()?.clone();
        if header.get(0) != Some("id") {
            return Err(Error::Table {
                table,
                row: 0,
                msg: "first column must be `id`".into(),
            });
        }
        let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut data = Vec::new();
        let mut rows = 0;
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |msg: String| Error::Table {
                table: table.clone(),
                row,
                msg,
            };
            if rec.get(0).and_then(|s| s.parse::<usize>().ok()) != Some(row) {
                return Err(bad(format!("expected id {row}")));
            }
            for v in rec.iter().skip(1) {
                data.push(v.parse::<f64>().map_err(|_| bad(format!("value `{v}` is not a number")))?);
            }
            rows += 1;
        }
        Ok(FeatureTable {
            matrix: Tensor::from_vec(rows, columns.len(), data)?,
            columns,
            coverage: Vec::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, HeteroSchema};

    #[test]
    fn width_and_isolated_rows() {
        let s = HeteroSchema::aml();
        let mut x = Tensor::zeros(2, 11);
        x.row_mut(1).copy_from_slice(&[1.0; 11]);
        let nodes = vec![x, Tensor::zeros(1, 8), Tensor::zeros(1, 2)];
        let g = build_graph(s, nodes, vec![]).unwrap();
        let t = assemble_feature_table(&g, &FeatureConfig::default()).unwrap();
        assert_eq!(t.matrix.cols(), 94);
        assert_eq!(t.columns.len(), 94);
        assert_eq!(t.columns.iter().filter(|c| c.starts_with("m2v_")).count(), 64);
        assert_eq!(&t.matrix.row(1)[..11], &[1.0; 11]);
        assert!(t.matrix.row(1)[11..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn csv_round_trip() {
        let t = FeatureTable {
            matrix: Tensor::from_vec(2, 2, vec![0.1, 2.0, -1.0 / 3.0, 4.0]).unwrap(),
            columns: vec!["a".into(), "b".into()],
            coverage: Vec::new(),
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        t.write(&p).unwrap();
        assert_eq!(FeatureTable::read(&p).unwrap(), t);
    }
}
