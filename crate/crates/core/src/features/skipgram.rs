use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NodeTypeId;
use crate::tensor::{sigmoid, Tensor};
use crate::util::derive_seed;

use super::walks::{window_positions, WalkCorpus};

const SKIPGRAM_STREAM: u64 = 0x5c1b;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub context_size: usize,
    pub num_negative: usize,
    pub epochs: usize,
    /// Initial rate, decayed linearly to `min_lr` over all updates.
    pub lr: f64,
    pub min_lr: f64,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig {
            dim: 8,
            context_size: 10,
            num_negative: 1,
            epochs: 5,
            lr: 0.025,
            min_lr: 1e-4,
            seed: 0,
        }
    }
}

/// Center-vector embeddings for every node of every type.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    offsets: Vec<usize>,
    center: Tensor,
    trained: Vec<bool>,
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.center.cols()
    }

    /// `n_t x dim` block for one node type; rows of nodes that never took
    /// part in a training pair are zero.
    pub fn for_type(&self, t: NodeTypeId) -> Tensor {
        let (lo, hi) = (self.offsets[t], self.offsets[t + 1]);
        let mut out = Tensor::zeros(hi - lo, self.dim());
        for (i, g) in (lo..hi).enumerate() {
            if self.trained[g] {
                out.row_mut(i).copy_from_slice(self.center.row(g));
            }
        }
        out
    }

    /// Whether each node of type `t` received any update.
    pub fn coverage(&self, t: NodeTypeId) -> &[bool] {
        &self.trained[self.offsets[t]..self.offsets[t + 1]]
    }
}

/// `-ln σ(v·u) - Σ ln σ(-v·u_neg)`.
pub fn pair_loss(v: &[f64], u: &[f64], negatives: &[&[f64]]) -> f64 {
    let pos = -sigmoid(dot(v, u)).ln();
    let neg: f64 = negatives.iter().map(|n| -sigmoid(-dot(v, n)).ln()).sum();
    pos + neg
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Skip-gram with negative sampling over the corpus windows. Negatives are
/// drawn uniformly from the context node's type. Updates are applied one
/// pair at a time in corpus order.
pub fn skipgram_train(node_counts: &[usize], corpus: &WalkCorpus, cfg: &SkipGramConfig) -> Result<EmbeddingTable> {
    train(node_counts, corpus, cfg).map(|(table, _)| table)
}

/// Returns the center table and the raw context vectors.
fn train(node_counts: &[usize], corpus: &WalkCorpus, cfg: &SkipGramConfig) -> Result<(EmbeddingTable, Tensor)> {
    if corpus.walks.is_empty() {
        return Err(Error::InvalidArgument("skip-gram needs a non-empty walk corpus".into()));
    }
    if cfg.dim == 0 || cfg.context_size < 2 {
        return Err(Error::InvalidArgument("skip-gram needs dim >= 1 and context_size >= 2".into()));
    }
    let mut offsets = vec![0];
    for &n in node_counts {
        offsets.push(offsets.last().unwrap() + n);
    }
    let total_nodes = *offsets.last().unwrap();
    let dim = cfg.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, SKIPGRAM_STREAM));
    let half = 0.5 / dim as f64;
    let mut center = Tensor::from_vec(
        total_nodes,
        dim,
        (0..total_nodes * dim).map(|_| rng.random_range(-half..half)).collect(),
    )?;
    let mut context = Tensor::zeros(total_nodes, dim);
    let mut trained = vec![false; total_nodes];

    let path = &corpus.path;
    let total_updates = (cfg.epochs * corpus.num_pairs(cfg.context_size)).max(1) as f64;
    let mut done = 0usize;
    let mut neu = vec![0.0; dim];
    let mut targets: Vec<(usize, f64)> = Vec::with_capacity(1 + cfg.num_negative);

    for _ in 0..cfg.epochs {
        for walk in &corpus.walks {
            for (j, c) in window_positions(walk.len(), cfg.context_size) {
                let lr = cfg.lr - (cfg.lr - cfg.min_lr) * (done as f64 / total_updates);
                done += 1;
                let vi = offsets[path.type_at(j)] + walk[j];
                let ct = path.type_at(c);
                let ci = offsets[ct] + walk[c];
                trained[vi] = true;
                trained[ci] = true;
                targets.clear();
                targets.push((ci, 1.0));
                let n_ct = node_counts[ct];
                for _ in 0..cfg.num_negative {
                    targets.push((offsets[ct] + rng.random_range(0..n_ct), 0.0));
                }
                neu.iter_mut().for_each(|x| *x = 0.0);
                for &(o, label) in &targets {
                    let v = center.row(vi);
                    let u = context.row_mut(o);
                    let g = (label - sigmoid(dot(v, u))) * lr;
                    for k in 0..dim {
                        neu[k] += g * u[k];
                        u[k] += g * v[k];
                    }
                }
                for (x, d) in center.row_mut(vi).iter_mut().zip(&neu) {
                    *x += d;
                }
            }
        }
    }
    if !center.is_finite() {
        return Err(Error::NonFinite("skipgram_train"));
    }
    Ok((
        EmbeddingTable {
            offsets,
            center,
            trained,
        },
        context,
    ))
}
