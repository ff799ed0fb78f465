//! Hand-built graphs shared by several test targets.

use hmpnn::features::{assemble_feature_table, metapath_walks, skipgram_train, FeatureConfig, MetaPath, SkipGramConfig};
use hmpnn::graph::{build_graph, AmlIds, EdgeTableBuilder};
use hmpnn::harness::build_input;
use hmpnn::models::{Model, ModelConfig, ModelInput, ModelKind};
use hmpnn::synth::{generate, GenConfig};
use hmpnn::{HeteroGraph, HeteroSchema, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::oracle::{entity_scores, graph_scores};

pub const BLOCK: usize = 40;

/// Two communities of `BLOCK` individuals: each individual sends 6
/// transactions inside its own block and, with probability 0.2, one to the
/// other block. One organization and one external are present but unused.
pub fn two_block_graph(seed: u64) -> HeteroGraph {
    let schema = HeteroSchema::aml();
    let ids = AmlIds::resolve(&schema).unwrap();
    let step = ids.txn(0, 0).unwrap();
    let meta = schema.meta_steps()[step];
    let dim = schema.edge_dim(meta.edge);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = EdgeTableBuilder::new(meta, dim);
    let n = 2 * BLOCK;
    for u in 0..n {
        let base = (u / BLOCK) * BLOCK;
        for _ in 0..6 {
            let mut v = base + rng.random_range(0..BLOCK);
            while v == u {
                v = base + rng.random_range(0..BLOCK);
            }
            b.push(u, v, &vec![1.0; dim]);
        }
        if rng.random_bool(0.2) {
            let other = (base + BLOCK) % n;
            b.push(u, other + rng.random_range(0..BLOCK), &vec![1.0; dim]);
        }
    }
    let counts = [(ids.ind, n), (ids.org, 1), (ids.ext, 1)];
    let mut nodes = vec![Tensor::zeros(0, 0); schema.num_node_types()];
    for (t, c) in counts {
        nodes[t] = Tensor::zeros(c, schema.node_dim(t));
    }
    build_graph(schema, nodes, vec![b.finish()]).unwrap()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Mean intra-block minus mean inter-block cosine similarity of the
/// individual embeddings learned on ind-txn-ind-txn-ind walks with the
/// default (dim 8, context 10, one negative) skip-gram settings.
pub fn block_cosine_gap(seed: u64) -> f64 {
    let g = two_block_graph(seed);
    let ids = AmlIds::resolve(g.schema()).unwrap();
    let path = MetaPath::parse(g.schema(), "individual-txn-individual-txn-individual").unwrap();
    let corpus = metapath_walks(&g, &path, 20, 10, seed).unwrap();
    let cfg = SkipGramConfig {
        seed,
        ..SkipGramConfig::default()
    };
    let emb = skipgram_train(&g.node_counts(), &corpus, &cfg).unwrap().for_type(ids.ind);
    let (mut intra, mut ni, mut inter, mut nx) = (0.0, 0, 0.0, 0);
    for i in 0..2 * BLOCK {
        for j in (i + 1)..2 * BLOCK {
            let c = cosine(emb.row(i), emb.row(j));
            if i / BLOCK == j / BLOCK {
                intra += c;
                ni += 1;
            } else {
                inter += c;
                nx += 1;
            }
        }
    }
    intra / ni as f64 - inter / nx as f64
}

/// Every model kind with the layer counts it supports.
pub const MODEL_GRID: [(ModelKind, usize); 13] = [
    (ModelKind::Logreg, 1),
    (ModelKind::Mlp, 1),
    (ModelKind::Mlp, 2),
    (ModelKind::Mlp, 3),
    (ModelKind::Hgraphsage, 1),
    (ModelKind::Hgraphsage, 2),
    (ModelKind::Hgraphsage, 3),
    (ModelKind::HmpnnSum, 1),
    (ModelKind::HmpnnSum, 2),
    (ModelKind::HmpnnSum, 3),
    (ModelKind::HmpnnCt, 1),
    (ModelKind::HmpnnCt, 2),
    (ModelKind::HmpnnCt, 3),
];

/// Largest finite-difference relative error (h = 1e-6) of the BCE gradient
/// at initialization on the seeded 50-node graph, over every labeled node.
pub fn grad_check_error(kind: ModelKind, layers: usize, seed: u64) -> f64 {
    let g = generate(&GenConfig::tiny(seed)).unwrap();
    assert_eq!(g.graph.total_nodes(), 50);
    let ind = AmlIds::resolve(g.graph.schema()).unwrap().ind;
    let mc = ModelConfig::new(kind, layers).with_seed(seed);
    let table = if kind.is_graph() {
        None
    } else {
        let fc = FeatureConfig {
            seed,
            ..FeatureConfig::default()
        };
        Some(assemble_feature_table(&g.graph, &fc).unwrap().matrix)
    };
    let input = build_input(&g.graph, ind, &mc, table.as_ref()).unwrap();
    let model = Model::new(&input, &mc).unwrap();
    let idx: Vec<usize> = (0..g.labels.labels().len()).collect();
    let y: Vec<f64> = g.labels.labels().iter().map(|&v| v as f64).collect();
    model.gradient_check(&input, &idx, &y, 1e-6).unwrap().max_rel_err
}

/// Generates a random graph of at most a few hundred edges, runs every model
/// kind with randomly moved parameters against the naive oracle, and returns
/// the edge count and the largest score difference.
pub fn forward_mismatch(g_seed: u64, rng: &mut ChaCha8Rng) -> (usize, f64) {
    let cfg = GenConfig {
        n_individual: rng.random_range(25..=120),
        n_organization: rng.random_range(3..=15),
        n_external: rng.random_range(8..=40),
        prevalence: 0.02,
        decoys_per_motif: 1,
        seed: g_seed,
        ..GenConfig::default()
    };
    let g = generate(&cfg).unwrap();
    let ind = AmlIds::resolve(g.graph.schema()).unwrap().ind;
    let fc = FeatureConfig {
        seed: g_seed,
        ..FeatureConfig::default()
    };
    let table = assemble_feature_table(&g.graph, &fc).unwrap();
    let mut worst: f64 = 0.0;
    for (kind, layers) in MODEL_GRID {
        let mc = ModelConfig::new(kind, layers).with_seed(g_seed);
        let input = build_input(&g.graph, ind, &mc, Some(&table.matrix)).unwrap();
        let mut model = Model::new(&input, &mc).unwrap();
        // move every parameter, biases included, off its initial value
        for t in model.params_mut().tensors_mut() {
            for v in t.data_mut() {
                *v += rng.random_range(-0.3..0.3);
            }
        }
        let got = model.scores(&input).unwrap();
        let want = match &input {
            ModelInput::Graph(gi) => graph_scores(gi, model.params(), kind, layers, mc.hidden_dim),
            ModelInput::Entity(e) => entity_scores(&e.features, model.params(), layers),
        };
        let err = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(err);
    }
    (g.graph.total_edges(), worst)
}
