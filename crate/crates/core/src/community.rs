//! Community detection, partition comparison, role analysis, and the
//! parameter-calibration protocol.
//!
//! Communities in the weighted complement/substitute networks are found by
//! minimizing the two-level map equation: the expected description length
//! of a random walk given a partition into modules. Partitions are compared
//! with normalized and chance-adjusted mutual information, role structure is
//! summarized by mean inter-role weights, and calibration sweeps the
//! significance levels and threshold quantiles to the most permissive values
//! that keep the community structure stable.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bipartite::{BipartiteNetwork, CoPurchaseCounts};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::measures::{
    apply_threshold, sim_original, sim_randomised_config, sim_substitutability, MeasureChoice,
};
use crate::null_models::{derive_relations, run_null_model, NullModelKind, NullModelSpec};

/// Undirected weighted graph with cached strengths.
#[derive(Debug, Clone)]
pub struct WeightedGraph {
    adj: Vec<Vec<(u32, f64)>>,
    strengths: Vec<f64>,
    /// Sum of all edge weights (each edge once).
    total_weight: f64,
}

impl WeightedGraph {
    /// Build from the positive off-diagonal entries of a symmetric matrix.
    pub fn from_matrix(values: &Matrix) -> Self {
        debug_assert!(values.is_symmetric(1e-9));
        let n = values.n();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let w = values.get(i, j);
                if w > 0.0 {
                    edges.push((i as u32, j as u32, w));
                }
            }
        }
        Self::from_edges(n, &edges)
    }

    /// Build from an explicit edge list; duplicate pairs accumulate.
    pub fn from_edges(n: usize, edges: &[(u32, u32, f64)]) -> Self {
        let mut adj = vec![Vec::new(); n];
        let mut strengths = vec![0.0; n];
        let mut total = 0.0;
        for &(u, v, w) in edges {
            let (u, v) = (u as usize, v as usize);
            if u == v {
                strengths[u] += 2.0 * w;
            } else {
                adj[u].push((v as u32, w));
                adj[v].push((u as u32, w));
                strengths[u] += w;
                strengths[v] += w;
            }
            total += w;
        }
        WeightedGraph {
            adj,
            strengths,
            total_weight: total,
        }
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn strength(&self, i: usize) -> f64 {
        self.strengths[i]
    }

    pub fn neighbors(&self, i: usize) -> &[(u32, f64)] {
        &self.adj[i]
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    /// Indices of nodes with no incident weight.
    pub fn isolated_nodes(&self) -> Vec<u32> {
        (0..self.n() as u32)
            .filter(|&i| self.strengths[i as usize] == 0.0)
            .collect()
    }
}

/// Node-to-role assignment with dense role indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    assignment: Vec<u32>,
    n_roles: usize,
}

impl Partition {
    /// Normalize arbitrary labels to dense role indices `0..n_roles`,
    /// numbered by first appearance.
    pub fn new(labels: &[u32]) -> Self {
        let mut remap = std::collections::BTreeMap::new();
        let mut assignment = Vec::with_capacity(labels.len());
        let mut next = 0u32;
        for &l in labels {
            let id = *remap.entry(l).or_insert_with(|| {
                let id = next;
                next += 1;
                id
            });
            assignment.push(id);
        }
        Partition {
            assignment,
            n_roles: next as usize,
        }
    }

    /// Every node in one role.
    pub fn all_in_one(n: usize) -> Self {
        Partition {
            assignment: vec![0; n],
            n_roles: if n == 0 { 0 } else { 1 },
        }
    }

    /// Every node its own role.
    pub fn singletons(n: usize) -> Self {
        Partition {
            assignment: (0..n as u32).collect(),
            n_roles: n,
        }
    }

    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn n_roles(&self) -> usize {
        self.n_roles
    }

    pub fn role_of(&self, i: usize) -> u32 {
        self.assignment[i]
    }

    pub fn assignment(&self) -> &[u32] {
        &self.assignment
    }

    /// Node indices grouped by role.
    pub fn groups(&self) -> Vec<Vec<u32>> {
        let mut groups = vec![Vec::new(); self.n_roles];
        for (i, &r) in self.assignment.iter().enumerate() {
            groups[r as usize].push(i as u32);
        }
        groups
    }
}

/// `x·log₂(x)` with the continuous extension 0 at 0.
fn plogp(x: f64) -> f64 {
    if x > 0.0 {
        x * x.log2()
    } else {
        0.0
    }
}

/// Two-level map-equation description length, in bits.
///
/// With node visit rates `π_i = strength_i / 2W`, module totals
/// `p_r = Σ_{i∈r} π_i`, and module exit rates `q_r = boundary_r / 2W`:
///
/// `L = plogp(Σ q_r) − 2·Σ plogp(q_r) + Σ plogp(q_r + p_r) − Σ plogp(π_i)`
///
/// A graph with no edges has codelength 0 (there is no walk to describe).
pub fn map_equation_codelength(graph: &WeightedGraph, partition: &Partition) -> Result<f64> {
    if graph.n() == 0 {
        return Err(Error::EmptyGraph);
    }
    if graph.n() != partition.n() {
        return Err(Error::ShapeMismatch {
            context: "graph nodes vs partition",
            left: graph.n(),
            right: partition.n(),
        });
    }
    let two_w: f64 = 2.0 * graph.total_weight();
    if two_w <= 0.0 {
        return Ok(0.0);
    }
    let n_roles = partition.n_roles();
    let mut p = vec![0.0; n_roles];
    let mut boundary = vec![0.0; n_roles];
    for i in 0..graph.n() {
        let r = partition.role_of(i) as usize;
        p[r] += graph.strength(i) / two_w;
        for &(j, w) in graph.neighbors(i) {
            if partition.role_of(j as usize) != partition.role_of(i) {
                boundary[r] += w;
            }
        }
    }
    let q: Vec<f64> = boundary.iter().map(|b| b / two_w).collect();
    let sum_q: f64 = q.iter().sum();
    let node_term: f64 = (0..graph.n())
        .map(|i| plogp(graph.strength(i) / two_w))
        .sum();
    let module_terms: f64 = (0..n_roles)
        .map(|r| -2.0 * plogp(q[r]) + plogp(q[r] + p[r]))
        .sum();
    Ok(plogp(sum_q) + module_terms - node_term)
}

/// Restart schedule for the detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct DetectorConfig {
    pub seed: u64,
    pub n_trials: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            seed: 0,
            n_trials: 8,
        }
    }
}

/// Detection output: the partition, its codelength, and any nodes that
/// were isolated (kept as flagged singleton roles).
#[derive(Debug, Clone, PartialEq)]
pub struct Detected {
    pub partition: Partition,
    pub codelength: f64,
    pub isolated: Vec<u32>,
}

/// One optimization level: nodes, possibly aggregated, with self-loops.
struct Level {
    adj: Vec<Vec<(u32, f64)>>,
    self_loop: Vec<f64>,
    strength: Vec<f64>,
}

impl Level {
    fn from_graph(g: &WeightedGraph) -> Self {
        // Strength counts a self-loop twice; recover loop weights so the
        // optimizer never treats them as boundary.
        let self_loop: Vec<f64> = (0..g.n())
            .map(|i| {
                let adj_sum: f64 = g.adj[i].iter().map(|&(_, w)| w).sum();
                ((g.strengths[i] - adj_sum) / 2.0).max(0.0)
            })
            .collect();
        Level {
            adj: g.adj.clone(),
            self_loop,
            strength: g.strengths.clone(),
        }
    }

    fn n(&self) -> usize {
        self.adj.len()
    }
}

/// Mutable module aggregates for the greedy optimizer at one level.
struct Modules {
    assignment: Vec<usize>,
    strength_sum: Vec<f64>,
    boundary: Vec<f64>,
    size: Vec<usize>,
    two_w: f64,
}

impl Modules {
    fn init(level: &Level, two_w: f64) -> Self {
        let n = level.n();
        let strength_sum = level.strength.clone();
        let boundary: Vec<f64> = (0..n)
            .map(|i| level.strength[i] - 2.0 * level.self_loop[i])
            .collect();
        Modules {
            assignment: (0..n).collect(),
            strength_sum,
            boundary,
            size: vec![1; n],
            two_w,
        }
    }

    /// Contribution of one module, used to evaluate a move by recomputing
    /// only the affected modules (the node-visit entropy is constant under
    /// moves and settled once at the end from the original graph).
    fn module_term(&self, r: usize) -> f64 {
        if self.size[r] == 0 {
            return 0.0;
        }
        let q = self.boundary[r] / self.two_w;
        let p = self.strength_sum[r] / self.two_w;
        -2.0 * plogp(q) + plogp(q + p)
    }
}

/// Greedy local moves followed by aggregation, repeated to fixpoint.
fn one_trial(graph: &WeightedGraph, seed: u64) -> (Partition, f64) {
    let two_w = 2.0 * graph.total_weight();
    if two_w <= 0.0 {
        let p = Partition::singletons(graph.n());
        return (p, 0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut level = Level::from_graph(graph);
    // membership[original node] = current top-level module of its super-node.
    let mut membership: Vec<usize> = (0..graph.n()).collect();

    loop {
        let n = level.n();
        let mut modules = Modules::init(&level, two_w);
        let mut order: Vec<usize> = (0..n).collect();
        let mut moved_any = false;
        loop {
            let mut moved_this_pass = false;
            order.shuffle(&mut rng);
            for &u in &order {
                if level.adj[u].is_empty() {
                    continue;
                }
                let from = modules.assignment[u];
                // Weight from u to each adjacent module.
                let mut to_weights: Vec<(usize, f64)> = Vec::new();
                for &(v, w) in &level.adj[u] {
                    let r = modules.assignment[v as usize];
                    match to_weights.iter_mut().find(|(m, _)| *m == r) {
                        Some((_, acc)) => *acc += w,
                        None => to_weights.push((r, w)),
                    }
                }
                let w_to_from = to_weights
                    .iter()
                    .find(|(m, _)| *m == from)
                    .map(|(_, w)| *w)
                    .unwrap_or(0.0);
                let s_u = level.strength[u];
                let ext_u = s_u - 2.0 * level.self_loop[u];

                // Candidate target modules: adjacent modules, plus a fresh
                // singleton if u currently shares its module.
                let mut candidates: Vec<usize> = to_weights.iter().map(|(m, _)| *m).collect();
                candidates.sort_unstable();
                candidates.dedup();
                let fresh = if modules.size[from] > 1 {
                    (0..n).find(|&r| modules.size[r] == 0)
                } else {
                    None
                };
                if let Some(f) = fresh {
                    candidates.push(f);
                }

                let base =
                    modules.module_term(from) + plogp(modules.boundary.iter().sum::<f64>() / two_w);
                let mut best: Option<(f64, usize)> = None;
                for &to in &candidates {
                    if to == from {
                        continue;
                    }
                    let w_to_target = to_weights
                        .iter()
                        .find(|(m, _)| *m == to)
                        .map(|(_, w)| *w)
                        .unwrap_or(0.0);
                    // Apply the move virtually.
                    let old_terms = base + modules.module_term(to);
                    let (b_from, s_from) = (modules.boundary[from], modules.strength_sum[from]);
                    let (b_to, s_to) = (modules.boundary[to], modules.strength_sum[to]);
                    let nb_from = b_from - ext_u + 2.0 * w_to_from;
                    let nb_to = b_to + ext_u - 2.0 * w_to_target;
                    let sum_q_new =
                        (modules.boundary.iter().sum::<f64>() - b_from - b_to + nb_from + nb_to)
                            / two_w;
                    let term = |size: usize, b: f64, s: f64| {
                        if size == 0 {
                            0.0
                        } else {
                            let q = b / two_w;
                            -2.0 * plogp(q) + plogp(q + s / two_w)
                        }
                    };
                    let new_terms = plogp(sum_q_new)
                        + term(modules.size[from] - 1, nb_from, s_from - s_u)
                        + term(modules.size[to] + 1, nb_to, s_to + s_u);
                    let delta = new_terms - old_terms;
                    let better = match best {
                        None => delta < -1e-12,
                        Some((bd, bt)) => {
                            delta < bd - 1e-12 || ((delta - bd).abs() <= 1e-12 && to < bt)
                        }
                    };
                    if better {
                        best = Some((delta, to));
                    }
                }
                if let Some((_, to)) = best {
                    let w_to_target = to_weights
                        .iter()
                        .find(|(m, _)| *m == to)
                        .map(|(_, w)| *w)
                        .unwrap_or(0.0);
                    modules.boundary[from] += -ext_u + 2.0 * w_to_from;
                    modules.boundary[to] += ext_u - 2.0 * w_to_target;
                    modules.strength_sum[from] -= s_u;
                    modules.strength_sum[to] += s_u;
                    modules.size[from] -= 1;
                    modules.size[to] += 1;
                    modules.assignment[u] = to;
                    moved_this_pass = true;
                    moved_any = true;
                }
            }
            if !moved_this_pass {
                break;
            }
        }
        if !moved_any {
            break;
        }

        // Aggregate modules into super-nodes, numbered by first appearance.
        let mut remap: Vec<Option<usize>> = vec![None; n];
        let mut next = 0usize;
        for u in 0..n {
            let r = modules.assignment[u];
            if remap[r].is_none() {
                remap[r] = Some(next);
                next += 1;
            }
        }
        if next == n {
            break;
        }
        let node_module: Vec<usize> = (0..n)
            .map(|u| remap[modules.assignment[u]].unwrap())
            .collect();
        for m in membership.iter_mut() {
            *m = node_module[*m];
        }
        let mut agg_edges: std::collections::BTreeMap<(usize, usize), f64> =
            std::collections::BTreeMap::new();
        let mut self_loop = vec![0.0; next];
        for u in 0..n {
            self_loop[node_module[u]] += level.self_loop[u];
            for &(v, w) in &level.adj[u] {
                let v = v as usize;
                if v < u {
                    continue;
                }
                let (a, b) = (node_module[u], node_module[v]);
                if a == b {
                    self_loop[a] += w;
                } else {
                    *agg_edges.entry((a.min(b), a.max(b))).or_insert(0.0) += w;
                }
            }
        }
        let mut adj = vec![Vec::new(); next];
        let mut strength = vec![0.0; next];
        for (&(a, b), &w) in &agg_edges {
            adj[a].push((b as u32, w));
            adj[b].push((a as u32, w));
            strength[a] += w;
            strength[b] += w;
        }
        for (r, &l) in self_loop.iter().enumerate() {
            strength[r] += 2.0 * l;
        }
        level = Level {
            adj,
            self_loop,
            strength,
        };
    }

    let labels: Vec<u32> = membership.iter().map(|&m| m as u32).collect();
    let partition = Partition::new(&labels);
    let codelength = map_equation_codelength(graph, &partition).expect("non-empty graph");
    (partition, codelength)
}

/// Minimize the map equation by seeded greedy restarts; the best trial
/// wins, ties broken toward the lower trial index. The result never has a
/// higher codelength than the all-in-one partition, and isolated nodes
/// are kept as flagged singleton roles.
pub fn detect_communities(graph: &WeightedGraph, config: DetectorConfig) -> Result<Detected> {
    if graph.n() == 0 {
        return Err(Error::EmptyGraph);
    }
    let isolated = graph.isolated_nodes();
    let trials = config.n_trials.max(1);
    let mut results: Vec<(usize, Partition, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let (p, l) = one_trial(graph, config.seed.wrapping_add(t as u64));
            (t, p, l)
        })
        .collect();
    results.sort_by(|a, b| {
        a.2.partial_cmp(&b.2)
            .expect("finite codelengths")
            .then(a.0.cmp(&b.0))
    });
    let (_, mut partition, mut codelength) = results.swap_remove(0);

    // Sanity floor: one module for everything (isolated nodes stay
    // separate; with zero visit rate they do not affect the codelength).
    let mut floor_labels = vec![0u32; graph.n()];
    for (extra, &i) in isolated.iter().enumerate() {
        floor_labels[i as usize] = extra as u32 + 1;
    }
    let floor = Partition::new(&floor_labels);
    let floor_codelength = map_equation_codelength(graph, &floor)?;
    if floor_codelength < codelength - 1e-12 {
        partition = floor;
        codelength = floor_codelength;
    }
    Ok(Detected {
        partition,
        codelength,
        isolated,
    })
}

/// Contingency table between two partitions over the same node set.
fn contingency(p1: &Partition, p2: &Partition) -> Result<Vec<Vec<u64>>> {
    if p1.n() != p2.n() {
        return Err(Error::ShapeMismatch {
            context: "partition node sets",
            left: p1.n(),
            right: p2.n(),
        });
    }
    let mut table = vec![vec![0u64; p2.n_roles()]; p1.n_roles()];
    for i in 0..p1.n() {
        table[p1.role_of(i) as usize][p2.role_of(i) as usize] += 1;
    }
    Ok(table)
}

/// Mutual information and the two entropies, in nats.
fn mutual_information(table: &[Vec<u64>], n: u64) -> (f64, f64, f64) {
    let nf = n as f64;
    let row: Vec<u64> = table.iter().map(|r| r.iter().sum()).collect();
    let col: Vec<u64> = (0..table.first().map_or(0, Vec::len))
        .map(|j| table.iter().map(|r| r[j]).sum())
        .collect();
    let mut mi = 0.0;
    for (i, r) in table.iter().enumerate() {
        for (j, &c) in r.iter().enumerate() {
            if c > 0 {
                let p = c as f64 / nf;
                mi += p * ((nf * c as f64) / (row[i] as f64 * col[j] as f64)).ln();
            }
        }
    }
    let entropy = |counts: &[u64]| -> f64 {
        counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / nf;
                -p * p.ln()
            })
            .sum()
    };
    (mi, entropy(&row), entropy(&col))
}

/// Normalized mutual information with arithmetic-mean normalization:
/// `2I/(H₁+H₂)`, defined as 1 when both partitions are trivial.
pub fn nmi(p1: &Partition, p2: &Partition) -> Result<f64> {
    let table = contingency(p1, p2)?;
    let n = p1.n() as u64;
    if n == 0 {
        return Ok(1.0);
    }
    let (mi, h1, h2) = mutual_information(&table, n);
    if h1 + h2 <= 0.0 {
        return Ok(1.0);
    }
    Ok((2.0 * mi / (h1 + h2)).clamp(0.0, 1.0))
}

/// Expected mutual information under the permutation (hypergeometric)
/// model, in nats.
fn expected_mutual_information(row: &[u64], col: &[u64], n: u64) -> f64 {
    let nf = n as f64;
    let max_count = n as usize;
    let mut ln_fact = vec![0.0f64; max_count + 1];
    for k in 1..=max_count {
        ln_fact[k] = ln_fact[k - 1] + (k as f64).ln();
    }
    let mut emi = 0.0;
    for &a in row {
        for &b in col {
            let lo = 1.max((a + b).saturating_sub(n));
            let hi = a.min(b);
            for k in lo..=hi {
                let p_ln = ln_fact[a as usize]
                    + ln_fact[b as usize]
                    + ln_fact[(n - a) as usize]
                    + ln_fact[(n - b) as usize]
                    - ln_fact[n as usize]
                    - ln_fact[k as usize]
                    - ln_fact[(a - k) as usize]
                    - ln_fact[(b - k) as usize]
                    - ln_fact[(n + k - a - b) as usize];
                let term = (k as f64 / nf) * ((nf * k as f64) / (a as f64 * b as f64)).ln();
                emi += p_ln.exp() * term;
            }
        }
    }
    emi
}

/// Adjusted mutual information: `(I − E[I]) / (mean(H₁,H₂) − E[I])` with
/// the permutation-model expectation. Degenerate normalizers fall back to
/// 1 when the numerator is also ~0 (identical trivial partitions), else 0.
pub fn ami(p1: &Partition, p2: &Partition) -> Result<f64> {
    let table = contingency(p1, p2)?;
    let n = p1.n() as u64;
    if n == 0 {
        return Ok(1.0);
    }
    let (mi, h1, h2) = mutual_information(&table, n);
    let row: Vec<u64> = table.iter().map(|r| r.iter().sum()).collect();
    let col: Vec<u64> = (0..table.first().map_or(0, Vec::len))
        .map(|j| table.iter().map(|r| r[j]).sum())
        .collect();
    let emi = expected_mutual_information(&row, &col, n);
    let denom = 0.5 * (h1 + h2) - emi;
    // For trivial partitions (all-in-one, all singletons) the normalizer is
    // zero up to accumulated rounding; treat anything below 1e-9 nats as
    // degenerate rather than dividing by residue.
    if denom.abs() < 1e-9 {
        return Ok(if (mi - emi).abs() < 1e-9 { 1.0 } else { 0.0 });
    }
    Ok((mi - emi) / denom)
}

/// Mean inter-role weights `B_rs = Σ_{i∈r, j∈s} W_ij / (n_r·n_s)`, summed
/// over ordered node pairs including `i = j` (diagonal weights are zero in
/// masked score matrices, so this matches the pairwise mean).
#[derive(Debug, Clone, PartialEq)]
pub struct RoleAdjacency {
    pub b: Matrix,
    pub sizes: Vec<usize>,
}

/// Qualitative role structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoleClass {
    Assortative,
    Disassortative,
    Mixed,
}

/// Default dominance ratio standing in for "much greater than".
pub const DEFAULT_DOMINANCE_RATIO: f64 = 3.0;

/// Compute the role-adjacency matrix of a partition over a weight matrix.
pub fn role_adjacency(weights: &Matrix, partition: &Partition) -> Result<RoleAdjacency> {
    if weights.n() != partition.n() {
        return Err(Error::ShapeMismatch {
            context: "weight matrix vs partition",
            left: weights.n(),
            right: partition.n(),
        });
    }
    let k = partition.n_roles();
    let mut sums = vec![vec![0.0; k]; k];
    for i in 0..weights.n() {
        for j in 0..weights.n() {
            sums[partition.role_of(i) as usize][partition.role_of(j) as usize] += weights.get(i, j);
        }
    }
    let sizes: Vec<usize> = partition.groups().iter().map(Vec::len).collect();
    let b = Matrix::from_fn(k, |r, s| sums[r][s] / (sizes[r] * sizes[s]) as f64);
    Ok(RoleAdjacency { b, sizes })
}

/// Classify each role: assortative when its internal mean weight dominates
/// every external one by `dominance_ratio`, disassortative when some
/// external mean dominates the internal one, mixed otherwise.
pub fn classify_roles(roles: &RoleAdjacency, dominance_ratio: f64) -> Vec<RoleClass> {
    let k = roles.b.n();
    (0..k)
        .map(|r| {
            let internal = roles.b.get(r, r);
            let external = (0..k)
                .filter(|&s| s != r)
                .map(|s| roles.b.get(r, s))
                .fold(0.0, f64::max);
            if internal >= dominance_ratio * external {
                RoleClass::Assortative
            } else if external >= dominance_ratio * internal {
                RoleClass::Disassortative
            } else {
                RoleClass::Mixed
            }
        })
        .collect()
}

/// Grids for the calibration sweeps; each must be sorted ascending.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CalibrationGrids {
    pub alpha_m: Vec<f64>,
    pub alpha_l: Vec<f64>,
    pub q_c: Vec<f64>,
    pub q_s: Vec<f64>,
}

/// Reference point the sweeps compare against.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CalibrationBaseline {
    /// Significance level used for both test sides at baseline.
    pub alpha: f64,
    pub q_c: f64,
    pub q_s: f64,
}

impl Default for CalibrationBaseline {
    fn default() -> Self {
        CalibrationBaseline {
            alpha: 0.05,
            q_c: 0.0,
            q_s: 0.7,
        }
    }
}

/// Community-structure stability floor for accepting a sweep value.
pub const DEFAULT_NMI_FLOOR: f64 = 0.8;

/// One evaluated grid point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub nmi: f64,
    pub passed: bool,
}

/// Traces of all four sweeps, in execution order.
#[derive(Debug, Clone, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct CalibrationTraces {
    pub alpha_m: Vec<SweepPoint>,
    pub q_c: Vec<SweepPoint>,
    pub alpha_l: Vec<SweepPoint>,
    pub q_s: Vec<SweepPoint>,
}

/// Selected parameters, resulting thresholds, sweep traces, and the list
/// of parameters that fell back to baseline because nothing passed.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub alpha_m: f64,
    pub alpha_l: f64,
    pub q_c: f64,
    pub theta_c: Option<f64>,
    pub q_s: f64,
    pub theta_s: Option<f64>,
    pub traces: CalibrationTraces,
    pub fell_back: Vec<&'static str>,
}

/// Everything the calibration pipeline needs to evaluate one grid point.
pub struct CalibrationInput<'a> {
    pub net: &'a BipartiteNetwork,
    pub cn: &'a CoPurchaseCounts,
    pub null_kind: NullModelKind,
    pub measure: MeasureChoice,
    pub detector: DetectorConfig,
}

impl CalibrationInput<'_> {
    fn complement_scores(&self) -> Result<crate::measures::ScoreMatrix> {
        Ok(match self.measure {
            MeasureChoice::Original => sim_original(self.net)?,
            MeasureChoice::RandomisedConfig => sim_randomised_config(self.net)?.0,
        })
    }

    /// Partition of the thresholded complement network at a grid point.
    fn wc_partition(&self, alpha_m: f64, alpha_l: f64, q_c: f64) -> Result<Partition> {
        let spec = NullModelSpec::new(self.null_kind, alpha_m, alpha_l)?;
        let scan = run_null_model(self.net, self.cn, &spec)?;
        let relations = derive_relations(&scan)?;
        let comp = self.complement_scores()?;
        let wc = apply_threshold(&comp, &relations.a_comp, q_c)?;
        let graph = WeightedGraph::from_matrix(&wc.scores.values);
        Ok(detect_communities(&graph, self.detector)?.partition)
    }

    /// Partition of the thresholded substitute network at a grid point.
    fn ws_partition(&self, alpha_m: f64, alpha_l: f64, q_c: f64, q_s: f64) -> Result<Partition> {
        let spec = NullModelSpec::new(self.null_kind, alpha_m, alpha_l)?;
        let scan = run_null_model(self.net, self.cn, &spec)?;
        let relations = derive_relations(&scan)?;
        let comp = self.complement_scores()?;
        let wc = apply_threshold(&comp, &relations.a_comp, q_c)?;
        let subs = sim_substitutability(&wc.scores);
        let ws = apply_threshold(&subs, &relations.a_subs, q_s)?;
        let graph = WeightedGraph::from_matrix(&ws.scores.values);
        Ok(detect_communities(&graph, self.detector)?.partition)
    }
}

fn check_grid(name: &'static str, grid: &[f64], lo: f64, hi_exclusive: f64) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidGrid(name));
    }
    let sorted = grid.windows(2).all(|w| w[0] < w[1]);
    let in_range = grid.iter().all(|&v| v >= lo && v < hi_exclusive);
    if !sorted || !in_range {
        return Err(Error::InvalidGrid(name));
    }
    Ok(())
}

/// Sweep the four parameters in the order α_m → q_c → α_l → q_s, comparing
/// each grid point's partition against the partition at that sweep's
/// baseline value (with upstream selections fixed). α_m takes the smallest
/// passing value, q_c the largest, α_l the largest, q_s the smallest;
/// a sweep with no passing value keeps its baseline and is flagged.
pub fn calibrate(
    input: &CalibrationInput,
    grids: &CalibrationGrids,
    baseline: CalibrationBaseline,
    nmi_floor: f64,
) -> Result<CalibrationResult> {
    check_grid("alpha_m", &grids.alpha_m, f64::MIN_POSITIVE, 1.0)?;
    check_grid("alpha_l", &grids.alpha_l, f64::MIN_POSITIVE, 1.0)?;
    check_grid("q_c", &grids.q_c, 0.0, 1.0)?;
    check_grid("q_s", &grids.q_s, 0.0, 1.0)?;
    if !(baseline.alpha > 0.0 && baseline.alpha < 1.0) {
        return Err(Error::InvalidParameter {
            context: "baseline alpha",
            value: baseline.alpha,
            range: "(0, 1)",
        });
    }
    let mut fell_back = Vec::new();
    let mut traces = CalibrationTraces::default();

    // Sweep 1: α_m against the baseline-α complement partition.
    let reference = input.wc_partition(baseline.alpha, baseline.alpha, baseline.q_c)?;
    let points: Vec<SweepPoint> = grids
        .alpha_m
        .par_iter()
        .map(|&a| {
            let p = input.wc_partition(a, baseline.alpha, baseline.q_c)?;
            let score = nmi(&reference, &p)?;
            Ok(SweepPoint {
                value: a,
                nmi: score,
                passed: score > nmi_floor,
            })
        })
        .collect::<Result<_>>()?;
    let alpha_m = match points.iter().find(|p| p.passed) {
        Some(p) => p.value,
        None => {
            fell_back.push("alpha_m");
            baseline.alpha
        }
    };
    traces.alpha_m = points;

    // Sweep 2: q_c, upstream α_m fixed, against the baseline-q_c partition.
    let reference = input.wc_partition(alpha_m, baseline.alpha, baseline.q_c)?;
    let points: Vec<SweepPoint> = grids
        .q_c
        .par_iter()
        .map(|&q| {
            let p = input.wc_partition(alpha_m, baseline.alpha, q)?;
            let score = nmi(&reference, &p)?;
            Ok(SweepPoint {
                value: q,
                nmi: score,
                passed: score > nmi_floor,
            })
        })
        .collect::<Result<_>>()?;
    let q_c = match points.iter().rev().find(|p| p.passed) {
        Some(p) => p.value,
        None => {
            fell_back.push("q_c");
            baseline.q_c
        }
    };
    traces.q_c = points;

    // Sweep 3: α_l on the substitute side, α_m and q_c fixed.
    let reference = input.ws_partition(alpha_m, baseline.alpha, q_c, baseline.q_s)?;
    let points: Vec<SweepPoint> = grids
        .alpha_l
        .par_iter()
        .map(|&a| {
            let p = input.ws_partition(alpha_m, a, q_c, baseline.q_s)?;
            let score = nmi(&reference, &p)?;
            Ok(SweepPoint {
                value: a,
                nmi: score,
                passed: score > nmi_floor,
            })
        })
        .collect::<Result<_>>()?;
    let alpha_l = match points.iter().rev().find(|p| p.passed) {
        Some(p) => p.value,
        None => {
            fell_back.push("alpha_l");
            baseline.alpha
        }
    };
    traces.alpha_l = points;

    // Sweep 4: q_s, everything upstream fixed.
    let reference = input.ws_partition(alpha_m, alpha_l, q_c, baseline.q_s)?;
    let points: Vec<SweepPoint> = grids
        .q_s
        .par_iter()
        .map(|&q| {
            let p = input.ws_partition(alpha_m, alpha_l, q_c, q)?;
            let score = nmi(&reference, &p)?;
            Ok(SweepPoint {
                value: q,
                nmi: score,
                passed: score > nmi_floor,
            })
        })
        .collect::<Result<_>>()?;
    let q_s = match points.iter().find(|p| p.passed) {
        Some(p) => p.value,
        None => {
            fell_back.push("q_s");
            baseline.q_s
        }
    };
    traces.q_s = points;

    // Final thresholds at the selected parameters.
    let spec = NullModelSpec::new(input.null_kind, alpha_m, alpha_l)?;
    let scan = run_null_model(input.net, input.cn, &spec)?;
    let relations = derive_relations(&scan)?;
    let comp = input.complement_scores()?;
    let wc = apply_threshold(&comp, &relations.a_comp, q_c)?;
    let subs = sim_substitutability(&wc.scores);
    let ws = apply_threshold(&subs, &relations.a_subs, q_s)?;

    Ok(CalibrationResult {
        alpha_m,
        alpha_l,
        q_c,
        theta_c: wc.theta,
        q_s,
        theta_s: ws.theta,
        traces,
        fell_back,
    })
}

/// Export a partition as JSON `{product_id: role_index}` in label order.
pub fn write_partition_json(
    path: &std::path::Path,
    partition: &Partition,
    labels: &[String],
) -> Result<()> {
    let map: std::collections::BTreeMap<&str, u32> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), partition.role_of(i)))
        .collect();
    let file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), &map)?;
    Ok(())
}

/// Export a role-adjacency matrix as TSV with role headers.
pub fn write_role_adjacency_tsv(path: &std::path::Path, roles: &RoleAdjacency) -> Result<()> {
    use std::io::Write as _;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(out, "role")?;
    for r in 0..roles.b.n() {
        write!(out, "\trole{r}")?;
    }
    writeln!(out)?;
    for r in 0..roles.b.n() {
        write!(out, "role{r}")?;
        for s in 0..roles.b.n() {
            write!(out, "\t{:.9}", roles.b.get(r, s))?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Export calibration traces as TSV `parameter, value, nmi, passed`.
pub fn write_calibration_trace_tsv(
    path: &std::path::Path,
    result: &CalibrationResult,
) -> Result<()> {
    use std::io::Write as _;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "parameter\tvalue\tnmi\tpassed")?;
    for (name, points) in [
        ("alpha_m", &result.traces.alpha_m),
        ("q_c", &result.traces.q_c),
        ("alpha_l", &result.traces.alpha_l),
        ("q_s", &result.traces.q_s),
    ] {
        for p in points {
            writeln!(out, "{name}\t{:.6}\t{:.9}\t{}", p.value, p.nmi, p.passed)?;
        }
    }
    out.flush()?;
    Ok(())
}
