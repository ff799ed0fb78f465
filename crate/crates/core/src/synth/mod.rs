//! Deterministic generator of labeled transaction graphs.
//!
//! Background traffic follows per-meta-step rates with geometric counts and
//! log-normal amounts. Suspicious individuals are embedded in one of three
//! motifs, each shadowed by decoys with the same shape and similar totals
//! but ordinary counts and amounts, so the label is recoverable only from
//! edge features.

mod oracle;
mod report;

pub use oracle::{oracle_scores, zero_amounts};
pub use report::{signal_strength_report, SignalReport};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_graph, AmlIds, EdgeTableBuilder, HeteroGraph, HeteroSchema, LabelTable, NodeRef};
use crate::tensor::Tensor;
use crate::util::derive_seed;

const GEN_STREAM: u64 = 0x9e7;
/// Count used for salary-like recurring transfers.
const RECURRING: f64 = 12.0;

/// Mean number of background edges per source node, per meta-step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EdgeRates {
    pub ind_ind: f64,
    pub ind_org: f64,
    pub ind_ext: f64,
    pub org_ind: f64,
    pub org_org: f64,
    pub org_ext: f64,
    pub ext_ind: f64,
    pub ext_org: f64,
    pub role: f64,
}

impl Default for EdgeRates {
    fn default() -> Self {
        EdgeRates {
            ind_ind: 0.6,
            ind_org: 0.8,
            ind_ext: 0.8,
            org_ind: 1.0,
            org_org: 0.5,
            org_ext: 1.5,
            ext_ind: 0.4,
            ext_org: 0.3,
            role: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotifWeights {
    pub smurfing: f64,
    pub layering: f64,
    pub role_abuse: f64,
}

impl Default for MotifWeights {
    fn default() -> Self {
        MotifWeights {
            smurfing: 0.4,
            layering: 0.4,
            role_abuse: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub n_individual: usize,
    pub n_organization: usize,
    pub n_external: usize,
    pub rates: EdgeRates,
    /// Fraction of individuals labeled suspicious.
    pub prevalence: f64,
    pub motif_weights: MotifWeights,
    /// Log-normal parameters of the per-transaction background amount.
    pub amount_mu: f64,
    pub amount_sigma: f64,
    /// Success probability of the geometric extra-count distribution.
    pub count_p: f64,
    /// Share of individuals whose recurring income comes from an organization.
    pub income_org_fraction: f64,
    /// Decoy motif instances per suspicious instance.
    pub decoys_per_motif: usize,
    /// Smallest transaction count on decoy motif edges.
    pub decoy_min_count: f64,
    /// Mean shift of the two class-correlated individual features.
    pub feature_shift: f64,
    /// Fraction of suspicious individuals left without a motif.
    pub noise: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_individual: 20_000,
            n_organization: 2_000,
            n_external: 10_000,
            rates: EdgeRates::default(),
            prevalence: 0.005,
            motif_weights: MotifWeights::default(),
            amount_mu: 6.0,
            amount_sigma: 1.5,
            count_p: 0.5,
            income_org_fraction: 0.7,
            decoys_per_motif: 3,
            decoy_min_count: 2.0,
            feature_shift: 0.5,
            noise: 0.0,
            seed: 0,
        }
    }
}

impl GenConfig {
    /// A 50-node graph (30 individuals, 8 organizations, 12 externals) with
    /// one suspicious individual, for gradient checks and smoke tests.
    pub fn tiny(seed: u64) -> Self {
        GenConfig {
            n_individual: 30,
            n_organization: 8,
            n_external: 12,
            prevalence: 0.02,
            decoys_per_motif: 1,
            seed,
            ..GenConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.prevalence > 0.0 && self.prevalence <= 0.02) {
            return bad(format!("prevalence {} outside (0, 0.02]", self.prevalence));
        }
        let r = &self.rates;
        let rates = [
            r.ind_ind, r.ind_org, r.ind_ext, r.org_ind, r.org_org, r.org_ext, r.ext_ind, r.ext_org, r.role,
        ];
        if rates.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return bad("edge rates must be finite and nonnegative".into());
        }
        let w = &self.motif_weights;
        let weights = [w.smurfing, w.layering, w.role_abuse];
        if weights.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || weights.iter().sum::<f64>() <= 0.0 {
            return bad("motif weights must be nonnegative with a positive sum".into());
        }
        if !(self.amount_sigma > 0.0 && self.amount_mu.is_finite()) {
            return bad("amount distribution needs finite mu and sigma > 0".into());
        }
        if !(self.count_p > 0.0 && self.count_p <= 1.0) {
            return bad(format!("count_p {} outside (0, 1]", self.count_p));
        }
        for (name, v) in [("income_org_fraction", self.income_org_fraction), ("noise", self.noise)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} {v} outside [0, 1]"));
            }
        }
        if !(self.decoy_min_count >= 2.0 && self.decoy_min_count.is_finite()) {
            return bad("decoy_min_count must be at least 2".into());
        }
        if !self.feature_shift.is_finite() {
            return bad("feature_shift must be finite".into());
        }
        Ok(())
    }

    /// Number of suspicious individuals the config asks for.
    pub fn num_positive(&self) -> usize {
        (self.prevalence * self.n_individual as f64).round() as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MotifKind {
    Smurfing,
    Layering,
    RoleAbuse,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InjectedEdge {
    pub step: usize,
    pub src: usize,
    pub dst: usize,
    pub features: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MotifInstance {
    pub kind: MotifKind,
    pub decoy: bool,
    /// Individuals the motif is built around (labeled 1 unless a decoy).
    pub centres: Vec<usize>,
    /// Every node the motif touches, centres first.
    pub nodes: Vec<NodeRef>,
    pub edges: Vec<InjectedEdge>,
}

#[derive(Clone, Debug)]
pub struct Generated {
    pub graph: HeteroGraph,
    pub labels: LabelTable,
    pub motifs: Vec<MotifInstance>,
}

struct Builder {
    ids: AmlIds,
    steps: Vec<EdgeTableBuilder>,
}

impl Builder {
    fn push(&mut self, step: usize, src: usize, dst: usize, f: [f64; 2]) -> InjectedEdge {
        self.steps[step].push(src, dst, &f);
        InjectedEdge {
            step,
            src,
            dst,
            features: f,
        }
    }

    fn txn(&self, a: usize, b: usize) -> usize {
        self.ids.txn(a, b).expect("transaction schema allows this step")
    }
}

struct Sampler<'c> {
    cfg: &'c GenConfig,
    rng: ChaCha8Rng,
    amount: LogNormal<f64>,
    extra: Geometric,
}

impl Sampler<'_> {
    /// Background count `1 + Geometric(p)`.
    fn count(&mut self) -> f64 {
        1.0 + self.extra.sample(&mut self.rng) as f64
    }

    /// Ordinary count for decoys: `decoy_min_count` plus geometric extra.
    fn decoy_count(&mut self) -> f64 {
        self.cfg.decoy_min_count + self.extra.sample(&mut self.rng) as f64
    }

    fn background(&mut self) -> [f64; 2] {
        let c = self.count();
        [c, round2(c * self.amount.sample(&mut self.rng))]
    }

    fn lognormal(&mut self, mu: f64, sigma: f64) -> f64 {
        LogNormal::new(mu, sigma).expect("valid parameters").sample(&mut self.rng)
    }

    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.random_range(lo..hi)
    }

    /// `k` distinct values from `0..n`, excluding `skip`.
    fn distinct(&mut self, n: usize, k: usize, skip: &[usize]) -> Vec<usize> {
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            let v = self.rng.random_range(0..n);
            if !skip.contains(&v) && !out.contains(&v) {
                out.push(v);
            }
        }
        out
    }

    fn pick_kind(&mut self) -> MotifKind {
        let w = &self.cfg.motif_weights;
        let total = w.smurfing + w.layering + w.role_abuse;
        let x = self.rng.random_range(0.0..total);
        if x < w.smurfing {
            MotifKind::Smurfing
        } else if x < w.smurfing + w.layering {
            MotifKind::Layering
        } else {
            MotifKind::RoleAbuse
        }
    }
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Generates a graph over the transaction schema with labels on individuals.
pub fn generate(cfg: &GenConfig) -> Result<Generated> {
    cfg.validate()?;
    let schema = HeteroSchema::aml();
    let ids = AmlIds::resolve(&schema)?;
    let (n_ind, n_org, n_ext) = (cfg.n_individual, cfg.n_organization, cfg.n_external);
    let n_pos = cfg.num_positive();
    check_feasible(cfg, n_pos)?;

    let mut s = Sampler {
        cfg,
        rng: ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, GEN_STREAM)),
        amount: LogNormal::new(cfg.amount_mu, cfg.amount_sigma).expect("validated"),
        extra: Geometric::new(cfg.count_p).expect("validated"),
    };
    let mut b = Builder {
        ids,
        steps: schema
            .meta_steps()
            .iter()
            .map(|st| EdgeTableBuilder::new(*st, schema.edge_dim(st.edge)))
            .collect(),
    };

    // Roles among individuals: shuffled once, suspicious first, then decoy
    // centres drawn from the rest in order.
    let mut order: Vec<usize> = (0..n_ind).collect();
    order.shuffle(&mut s.rng);
    let suspicious: Vec<usize> = order[..n_pos].to_vec();
    let mut spare = order[n_pos..].iter().copied();
    let mut labels = vec![0u8; n_ind];
    for &v in &suspicious {
        labels[v] = 1;
    }

    // Node features.
    let std_normal = Normal::new(0.0, 1.0).expect("valid");
    let mut node_tables = Vec::new();
    for (t, n) in [(ids.ind, n_ind), (ids.org, n_org), (ids.ext, n_ext)] {
        let d = schema.node_dim(t);
        let data = (0..n * d).map(|_| std_normal.sample(&mut s.rng)).collect();
        node_tables.push((t, Tensor::from_vec(n, d, data)?));
    }
    node_tables.sort_by_key(|(t, _)| *t);
    let mut node_tables: Vec<Tensor> = node_tables.into_iter().map(|(_, x)| x).collect();
    for &v in &suspicious {
        let row = node_tables[ids.ind].row_mut(v);
        row[0] += cfg.feature_shift;
        row[1] += cfg.feature_shift;
    }

    background(&mut s, &mut b, cfg);

    // Recurring income for every individual.
    for v in 0..n_ind {
        let from_org = n_org > 0 && (n_ext == 0 || s.rng.random_bool(cfg.income_org_fraction));
        let amount = round2(RECURRING * s.lognormal(8.0, 0.4));
        if from_org {
            let o = s.rng.random_range(0..n_org);
            let st = b.txn(1, 0);
            b.push(st, o, v, [RECURRING, amount]);
        } else if n_ext > 0 {
            let e = s.rng.random_range(0..n_ext);
            let st = b.txn(2, 0);
            b.push(st, e, v, [RECURRING, amount]);
        }
    }

    // Motifs.
    let with_motif = n_pos - (cfg.noise * n_pos as f64).round() as usize;
    let mut motifs = Vec::new();
    let mut next = 0;
    while next < with_motif {
        let kind = s.pick_kind();
        match kind {
            MotifKind::Smurfing | MotifKind::RoleAbuse => {
                let v = suspicious[next];
                next += 1;
                motifs.push(plant(&mut s, &mut b, kind, &[v], false, n_ind, n_org, n_ext));
                for _ in 0..cfg.decoys_per_motif {
                    let d = spare.next().expect("feasibility checked");
                    motifs.push(plant(&mut s, &mut b, kind, &[d], true, n_ind, n_org, n_ext));
                }
            }
            MotifKind::Layering => {
                let r = s.rng.random_range(3..=5usize).min(with_motif - next);
                if r < 2 {
                    // A ring needs two members; fall back to smurfing.
                    let v = suspicious[next];
                    next += 1;
                    motifs.push(plant(&mut s, &mut b, MotifKind::Smurfing, &[v], false, n_ind, n_org, n_ext));
                    continue;
                }
                let ring = suspicious[next..next + r].to_vec();
                next += r;
                motifs.push(plant(&mut s, &mut b, kind, &ring, false, n_ind, n_org, n_ext));
                for _ in 0..cfg.decoys_per_motif {
                    let decoys: Vec<usize> = (0..r).map(|_| spare.next().expect("feasibility checked")).collect();
                    motifs.push(plant(&mut s, &mut b, kind, &decoys, true, n_ind, n_org, n_ext));
                }
            }
        }
    }

    let edge_tables = b.steps.into_iter().map(EdgeTableBuilder::finish).collect();
    let graph = build_graph(schema, node_tables, edge_tables)?;
    let labels = LabelTable::new(ids.ind, labels)?;
    Ok(Generated { graph, labels, motifs })
}

fn check_feasible(cfg: &GenConfig, n_pos: usize) -> Result<()> {
    if n_pos == 0 {
        return Ok(());
    }
    // Worst case: every suspicious individual is its own motif with its own decoys,
    // plus up to nine distinct smurfing senders.
    let need_ind = n_pos * (1 + cfg.decoys_per_motif) + 10;
    if cfg.n_individual < need_ind {
        return Err(Error::Infeasible(format!(
            "{n_pos} suspicious individuals with {} decoys each need at least {need_ind} individuals, have {}",
            cfg.decoys_per_motif, cfg.n_individual
        )));
    }
    if cfg.n_external < 6 {
        return Err(Error::Infeasible(format!(
            "motifs need at least 6 external nodes, have {}",
            cfg.n_external
        )));
    }
    if cfg.n_organization < 1 {
        return Err(Error::Infeasible("role-abuse motifs need at least one organization".into()));
    }
    Ok(())
}

fn background(s: &mut Sampler, b: &mut Builder, cfg: &GenConfig) {
    let n = [cfg.n_individual, cfg.n_organization, cfg.n_external];
    let r = &cfg.rates;
    let plan = [
        (0, 0, r.ind_ind),
        (0, 1, r.ind_org),
        (0, 2, r.ind_ext),
        (1, 0, r.org_ind),
        (1, 1, r.org_org),
        (1, 2, r.org_ext),
        (2, 0, r.ext_ind),
        (2, 1, r.ext_org),
    ];
    for (a, c, rate) in plan {
        let same = a == c;
        if n[a] == 0 || n[c] == 0 || (same && n[a] < 2) {
            continue;
        }
        let st = b.txn(a, c);
        let m = (rate * n[a] as f64).round() as usize;
        for _ in 0..m {
            let src = s.rng.random_range(0..n[a]);
            let mut dst = s.rng.random_range(0..n[c]);
            while same && dst == src {
                dst = s.rng.random_range(0..n[c]);
            }
            let f = s.background();
            b.push(st, src, dst, f);
        }
    }
    if n[0] > 0 && n[1] > 0 {
        let m = (r.role * n[0] as f64).round() as usize;
        for _ in 0..m {
            let v = s.rng.random_range(0..n[0]);
            let o = s.rng.random_range(0..n[1]);
            let role_type = s.rng.random_range(1..=3u32) as f64;
            let ownership = round2(s.rng.random_range(0.0..=1.0));
            let st = b.ids.role_step;
            b.push(st, v, o, [role_type, ownership]);
        }
    }
}

/// Plants one motif instance around `centre` individuals. Suspicious
/// instances use single transfers (count 1) in tight amount bands; decoys
/// use ordinary counts with similar totals.
#[allow(clippy::too_many_arguments)]
fn plant(
    s: &mut Sampler,
    b: &mut Builder,
    kind: MotifKind,
    centre: &[usize],
    decoy: bool,
    n_ind: usize,
    n_org: usize,
    n_ext: usize,
) -> MotifInstance {
    let (ind_ind, ind_ext, ext_ind, ext_org, org_ind) = (b.txn(0, 0), b.txn(0, 2), b.txn(2, 0), b.txn(2, 1), b.txn(1, 0));
    let mut edges = Vec::new();
    let mut nodes: Vec<NodeRef> = centre.iter().map(|&v| NodeRef::new(b.ids.ind, v)).collect();
    match kind {
        MotifKind::Smurfing => {
            let v = centre[0];
            let k = s.rng.random_range(5..=9usize);
            let senders = s.distinct(n_ind, k, &[v]);
            let mut total = 0.0;
            for &u in &senders {
                let f = if decoy {
                    let c = s.decoy_count();
                    [c, round2(s.uniform(6000.0, 12000.0))]
                } else {
                    [1.0, round2(s.uniform(8000.0, 9900.0))]
                };
                total += f[1];
                edges.push(b.push(ind_ind, u, v, f));
                nodes.push(NodeRef::new(b.ids.ind, u));
            }
            let e = s.rng.random_range(0..n_ext);
            let out = round2(total * s.uniform(0.9, 0.98));
            let c = if decoy { s.decoy_count() } else { 1.0 };
            edges.push(b.push(ind_ext, v, e, [c, out]));
            nodes.push(NodeRef::new(b.ids.ext, e));
        }
        MotifKind::Layering => {
            let r = centre.len();
            let ws = s.distinct(n_ext, r, &[]);
            for i in 0..r {
                let amount = round2(s.lognormal(9.5, 0.3));
                let c = if decoy { s.decoy_count() } else { 1.0 };
                edges.push(b.push(ind_ext, centre[i], ws[i], [c, amount]));
                let pass = round2(amount * s.uniform(0.93, 0.97));
                edges.push(b.push(ext_ind, ws[i], centre[(i + 1) % r], [RECURRING, pass]));
                nodes.push(NodeRef::new(b.ids.ext, ws[i]));
            }
        }
        MotifKind::RoleAbuse => {
            let v = centre[0];
            let o = s.rng.random_range(0..n_org);
            let role_type = s.rng.random_range(1..=3u32) as f64;
            let ownership = round2(s.uniform(0.5, 1.0));
            edges.push(b.push(b.ids.role_step, v, o, [role_type, ownership]));
            let k = s.rng.random_range(3..=6usize);
            let senders = s.distinct(n_ext, k.min(n_ext), &[]);
            let mut total = 0.0;
            for &e in &senders {
                let amount = round2(s.lognormal(9.0, 0.3));
                let c = if decoy { s.decoy_count() } else { 1.0 };
                total += amount;
                edges.push(b.push(ext_org, e, o, [c, amount]));
                nodes.push(NodeRef::new(b.ids.ext, e));
            }
            let pay = round2(total * s.uniform(0.85, 0.95));
            edges.push(b.push(org_ind, o, v, [RECURRING, pay]));
            nodes.push(NodeRef::new(b.ids.org, o));
        }
    }
    MotifInstance {
        kind,
        decoy,
        centres: centre.to_vec(),
        nodes,
        edges,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GenConfig {
        GenConfig {
            n_individual: 2000,
            n_organization: 200,
            n_external: 1000,
            prevalence: 0.01,
            ..GenConfig::default()
        }
    }

    #[test]
    fn empty_config_gives_empty_graph() {
        let cfg = GenConfig {
            n_individual: 0,
            n_organization: 0,
            n_external: 0,
            ..GenConfig::default()
        };
        let g = generate(&cfg).unwrap();
        assert_eq!(g.graph.total_nodes(), 0);
        assert_eq!(g.graph.total_edges(), 0);
        assert!(g.labels.is_empty());
    }

    #[test]
    fn small_graph_is_valid_and_hits_prevalence() {
        let g = generate(&small()).unwrap();
        g.graph.validate().unwrap();
        assert_eq!(g.labels.positives(), 20);
        assert!(g.motifs.iter().filter(|m| !m.decoy).count() > 0);
    }

    #[test]
    fn same_seed_same_graph() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.graph, b.graph);
        assert_eq!(a.labels, b.labels);
        let c = generate(&GenConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(a.graph, c.graph);
    }

    #[test]
    fn config_validation() {
        assert!(generate(&GenConfig { prevalence: 0.5, ..small() }).is_err());
        assert!(generate(&GenConfig { prevalence: 0.0, ..small() }).is_err());
        let tiny = GenConfig {
            n_individual: 500,
            n_organization: 1,
            n_external: 3,
            prevalence: 0.02,
            ..GenConfig::default()
        };
        assert!(matches!(generate(&tiny), Err(Error::Infeasible(_))));
        let crowded = GenConfig {
            n_individual: 200,
            decoys_per_motif: 100,
            ..small()
        };
        assert!(matches!(generate(&crowded), Err(Error::Infeasible(_))));
    }

    #[test]
    fn every_individual_has_income() {
        let g = generate(&small()).unwrap();
        let ids = AmlIds::resolve(g.graph.schema()).unwrap();
        for v in 0..g.graph.num_nodes(ids.ind) {
            let incoming = [ids.txn(0, 0), ids.txn(1, 0), ids.txn(2, 0)]
                .iter()
                .map(|s| g.graph.edge_set(s.unwrap()).incoming(v).len())
                .sum::<usize>();
            assert!(incoming >= 1);
        }
    }
}
