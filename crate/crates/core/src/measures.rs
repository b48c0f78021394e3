//! Complementarity and substitutability scores.
//!
//! Complementarity scores weigh each co-purchase by the size of the basket
//! it happened in (a shared appearance in a two-item basket says more than
//! one in a fifty-item basket) and normalize so every product is maximally
//! complementary to itself. The randomised variants subtract, term by term,
//! what a degree-preserving random network would contribute, removing
//! popularity noise. Substitutability scores then compare products by the
//! similarity of their complement profiles. Quantile thresholds and the
//! relation masks turn raw scores into the weighted complement and
//! substitute networks.

use rayon::prelude::*;

use crate::bipartite::BipartiteNetwork;
use crate::error::{Error, Result};
use crate::matrix::{Matrix, PairSet};
use crate::null_models::RelationMatrices;

/// Whether a score matrix describes complement or substitute strength.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreKind {
    Comp,
    Subs,
}

/// Which formula produced a score matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasureKind {
    Original,
    OriginalDirected,
    RandomisedConfig,
    RandomisedConfigDirected,
    Substitutability,
    SubstitutabilityDirected,
}

impl MeasureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MeasureKind::Original => "original",
            MeasureKind::OriginalDirected => "original-directed",
            MeasureKind::RandomisedConfig => "randomised-config",
            MeasureKind::RandomisedConfigDirected => "randomised-config-directed",
            MeasureKind::Substitutability => "substitutability",
            MeasureKind::SubstitutabilityDirected => "substitutability-directed",
        }
    }
}

impl ScoreKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreKind::Comp => "comp",
            ScoreKind::Subs => "subs",
        }
    }
}

/// Product-pair scores in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub values: Matrix,
    pub kind: ScoreKind,
    pub measure: MeasureKind,
    pub symmetric: bool,
}

/// Counters for the defensive paths of the randomised measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClampStats {
    /// Pair factors whose noise-corrected numerator went negative.
    pub negative_numerators: usize,
    /// Products whose noise-corrected denominator was ≤ 0 (pairs scored 0).
    pub nonpositive_denominators: usize,
    /// Entries clamped back into `[0, 1]` by more than float fuzz.
    pub out_of_range: usize,
}

impl ClampStats {
    fn merge(mut self, other: ClampStats) -> ClampStats {
        self.negative_numerators += other.negative_numerators;
        self.nonpositive_denominators += other.nonpositive_denominators;
        self.out_of_range += other.out_of_range;
        self
    }
}

/// A score matrix after masking and quantile thresholding.
///
/// `theta` is the applied threshold, or `None` when the masked matrix had
/// no nonzero entries (the all-zero-output warning case).
#[derive(Debug, Clone, PartialEq)]
pub struct Thresholded {
    pub scores: ScoreMatrix,
    pub theta: Option<f64>,
}

/// Complement-measure choice for the pipeline (symmetric variants; the
/// directed ones are exportable but not pipeline defaults).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasureChoice {
    Original,
    RandomisedConfig,
}

/// Measure choice plus the two quantile levels.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MeasureSpec {
    pub measure: MeasureChoice,
    pub q_c: f64,
    pub q_s: f64,
}

/// The weighted complement and substitute networks with their thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedNetworks {
    pub wc: Thresholded,
    pub ws: Thresholded,
    pub clamp: ClampStats,
}

/// Inverse basket sizes, the per-transaction discount weights.
fn inverse_basket_sizes(net: &BipartiteNetwork) -> Vec<f64> {
    net.d_t().iter().map(|&d| 1.0 / d as f64).collect()
}

/// `S_i = Σ_{h∈Γ(i)} 1/d_t[h]`: a product's total discounted presence.
fn discounted_presence(net: &BipartiteNetwork, inv_d: &[f64]) -> Vec<f64> {
    (0..net.n_p())
        .map(|i| {
            net.transactions_for(i)
                .iter()
                .map(|&h| inv_d[h as usize])
                .sum()
        })
        .collect()
}

/// Shared-basket statistics of a product pair: the co-purchase count and
/// the discounted overlap `Σ_{l∈Γ(i)∩Γ(j)} 1/d_t[l]`.
fn overlap(net: &BipartiteNetwork, inv_d: &[f64], i: usize, j: usize) -> (u32, f64) {
    let (a, b) = (net.transactions_for(i), net.transactions_for(j));
    let (mut x, mut y) = (0, 0);
    let mut count = 0;
    let mut sum = 0.0;
    while x < a.len() && y < b.len() {
        match a[x].cmp(&b[y]) {
            std::cmp::Ordering::Less => x += 1,
            std::cmp::Ordering::Greater => y += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                sum += inv_d[a[x] as usize];
                x += 1;
                y += 1;
            }
        }
    }
    (count, sum)
}

/// Symmetric complementarity: each shared basket contributes `1/d_t`, and
/// the total is normalized by the geometric mean of the two products'
/// discounted presences. Diagonal is exactly 1.
pub fn sim_original(net: &BipartiteNetwork) -> Result<ScoreMatrix> {
    let n = net.n_p();
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    let inv_d = inverse_basket_sizes(net);
    let s = discounted_presence(net, &inv_d);
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        1.0
                    } else {
                        let (_, c) = overlap(net, &inv_d, i, j);
                        c / (s[i] * s[j]).sqrt()
                    }
                })
                .collect()
        })
        .collect();
    Ok(ScoreMatrix {
        values: Matrix::from_fn(n, |i, j| rows[i][j]),
        kind: ScoreKind::Comp,
        measure: MeasureKind::Original,
        symmetric: true,
    })
}

/// Directed complementarity: entry `(i, j)` is the complementarity of `i`
/// to `j`, the shared discounted mass as a fraction of `j`'s presence.
pub fn sim_original_directed(net: &BipartiteNetwork) -> Result<ScoreMatrix> {
    let n = net.n_p();
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    let inv_d = inverse_basket_sizes(net);
    let s = discounted_presence(net, &inv_d);
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        1.0
                    } else {
                        let (_, c) = overlap(net, &inv_d, i, j);
                        c / s[j]
                    }
                })
                .collect()
        })
        .collect();
    Ok(ScoreMatrix {
        values: Matrix::from_fn(n, |i, j| rows[i][j]),
        kind: ScoreKind::Comp,
        measure: MeasureKind::OriginalDirected,
        symmetric: false,
    })
}

/// One directed noise-corrected factor: numerator and denominator both have
/// `d_p/m` (the random network's expected contribution per basket)
/// subtracted term by term. Returns the factor and clamp bookkeeping.
fn randomised_factor(
    cn: u32,
    overlap_sum: f64,
    presence: f64,
    d_p: u32,
    m: f64,
) -> (f64, ClampStats) {
    let mut stats = ClampStats::default();
    let expected = d_p as f64 / m;
    let den = presence - d_p as f64 * expected;
    if den <= 0.0 {
        stats.nonpositive_denominators += 1;
        return (0.0, stats);
    }
    let num = overlap_sum - cn as f64 * expected;
    if num < 0.0 {
        stats.negative_numerators += 1;
        return (0.0, stats);
    }
    let factor = num / den;
    if factor > 1.0 {
        if factor > 1.0 + 1e-9 {
            stats.out_of_range += 1;
        }
        return (1.0, stats);
    }
    (factor, stats)
}

/// Symmetric randomised-configuration complementarity: the geometric mean
/// of the two directed noise-corrected factors, each clamped to `[0, 1]`
/// before the square root. Diagonal is exactly 1.
pub fn sim_randomised_config(net: &BipartiteNetwork) -> Result<(ScoreMatrix, ClampStats)> {
    let n = net.n_p();
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    let inv_d = inverse_basket_sizes(net);
    let s = discounted_presence(net, &inv_d);
    let m = net.m() as f64;
    let d_p = net.d_p();
    let per_row: Vec<(Vec<f64>, ClampStats)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut stats = ClampStats::default();
            let row = (0..n)
                .map(|j| {
                    if i == j {
                        return 1.0;
                    }
                    let (cn, c) = overlap(net, &inv_d, i, j);
                    let (fi, si) = randomised_factor(cn, c, s[i], d_p[i], m);
                    let (fj, sj) = randomised_factor(cn, c, s[j], d_p[j], m);
                    stats = stats.merge(si).merge(sj);
                    (fi * fj).sqrt()
                })
                .collect();
            (row, stats)
        })
        .collect();
    let stats = per_row
        .iter()
        .map(|(_, s)| *s)
        .fold(ClampStats::default(), ClampStats::merge);
    Ok((
        ScoreMatrix {
            values: Matrix::from_fn(n, |i, j| per_row[i].0[j]),
            kind: ScoreKind::Comp,
            measure: MeasureKind::RandomisedConfig,
            symmetric: true,
        },
        stats,
    ))
}

/// Directed randomised-configuration complementarity: the `j`-side
/// noise-corrected factor alone, clamped to `[0, 1]`.
pub fn sim_randomised_config_directed(net: &BipartiteNetwork) -> Result<(ScoreMatrix, ClampStats)> {
    let n = net.n_p();
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    let inv_d = inverse_basket_sizes(net);
    let s = discounted_presence(net, &inv_d);
    let m = net.m() as f64;
    let d_p = net.d_p();
    let per_row: Vec<(Vec<f64>, ClampStats)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut stats = ClampStats::default();
            let row = (0..n)
                .map(|j| {
                    if i == j {
                        return 1.0;
                    }
                    let (cn, c) = overlap(net, &inv_d, i, j);
                    let (fj, sj) = randomised_factor(cn, c, s[j], d_p[j], m);
                    stats = stats.merge(sj);
                    fj
                })
                .collect();
            (row, stats)
        })
        .collect();
    let stats = per_row
        .iter()
        .map(|(_, s)| *s)
        .fold(ClampStats::default(), ClampStats::merge);
    Ok((
        ScoreMatrix {
            values: Matrix::from_fn(n, |i, j| per_row[i].0[j]),
            kind: ScoreKind::Comp,
            measure: MeasureKind::RandomisedConfigDirected,
            symmetric: false,
        },
        stats,
    ))
}

/// Symmetric substitutability: cosine similarity between the two products'
/// complement-score rows. A product with an all-zero complement row scores
/// 0 against everything, itself included.
pub fn sim_substitutability(wc: &ScoreMatrix) -> ScoreMatrix {
    let n = wc.values.n();
    let norms2: Vec<f64> = (0..n)
        .map(|i| wc.values.row(i).iter().map(|v| v * v).sum())
        .collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    if norms2[i] <= 0.0 || norms2[j] <= 0.0 {
                        return 0.0;
                    }
                    let dot: f64 = wc
                        .values
                        .row(i)
                        .iter()
                        .zip(wc.values.row(j))
                        .map(|(a, b)| a * b)
                        .sum();
                    (dot / (norms2[i] * norms2[j]).sqrt()).clamp(0.0, 1.0)
                })
                .collect()
        })
        .collect();
    ScoreMatrix {
        values: Matrix::from_fn(n, |i, j| rows[i][j]),
        kind: ScoreKind::Subs,
        measure: MeasureKind::Substitutability,
        symmetric: true,
    }
}

/// Directed substitutability: entry `(i, j)` compares `i`'s complement row
/// against `j`'s, normalized by `j`'s squared row. Taking the entrywise
/// minimum makes the score exactly 1 whenever `i`'s complement degrees
/// dominate `j`'s.
pub fn sim_substitutability_directed(wc: &ScoreMatrix) -> ScoreMatrix {
    let n = wc.values.n();
    let norms2: Vec<f64> = (0..n)
        .map(|j| wc.values.row(j).iter().map(|v| v * v).sum())
        .collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    if norms2[j] <= 0.0 {
                        return 0.0;
                    }
                    // Same ascending-k accumulation as the norm, so
                    // entrywise dominance yields exactly 1.0.
                    let num: f64 = wc
                        .values
                        .row(i)
                        .iter()
                        .zip(wc.values.row(j))
                        .map(|(&a, &b)| a.min(b) * b)
                        .sum();
                    (num / norms2[j]).clamp(0.0, 1.0)
                })
                .collect()
        })
        .collect();
    ScoreMatrix {
        values: Matrix::from_fn(n, |i, j| rows[i][j]),
        kind: ScoreKind::Subs,
        measure: MeasureKind::SubstitutabilityDirected,
        symmetric: false,
    }
}

/// Zero out entries outside the mask, then zero entries below the
/// `q`-quantile of the surviving nonzero values (lower nearest rank).
///
/// `q = 0` keeps every masked nonzero entry. An empty masked matrix comes
/// back all-zero with `theta = None`.
pub fn apply_threshold(scores: &ScoreMatrix, mask: &PairSet, q: f64) -> Result<Thresholded> {
    if !(0.0..1.0).contains(&q) {
        return Err(Error::InvalidParameter {
            context: "threshold quantile",
            value: q,
            range: "[0, 1)",
        });
    }
    let n = scores.values.n();
    let mut masked = Matrix::zeros(n);
    let mut nonzeros = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j || !mask.contains(i as u32, j as u32) {
                continue;
            }
            let v = scores.values.get(i, j);
            if v > 0.0 {
                masked.set(i, j, v);
                if i < j || !scores.symmetric {
                    nonzeros.push(v);
                }
            }
        }
    }
    if nonzeros.is_empty() {
        return Ok(Thresholded {
            scores: ScoreMatrix {
                values: masked,
                ..*scores
            },
            theta: None,
        });
    }
    nonzeros.sort_by(|a, b| a.partial_cmp(b).expect("scores are finite"));
    let idx = ((q * nonzeros.len() as f64).floor() as usize).min(nonzeros.len() - 1);
    let theta = nonzeros[idx];
    for i in 0..n {
        for j in 0..n {
            if masked.get(i, j) < theta {
                masked.set(i, j, 0.0);
            }
        }
    }
    Ok(Thresholded {
        scores: ScoreMatrix {
            values: masked,
            ..*scores
        },
        theta: Some(theta),
    })
}

/// Full scoring stage: complement scores masked by the MORE relations and
/// thresholded at `q_c`, then substitutability of that result masked by
/// the substitute relations and thresholded at `q_s`.
pub fn build_weighted_networks(
    net: &BipartiteNetwork,
    relations: &RelationMatrices,
    spec: &MeasureSpec,
) -> Result<WeightedNetworks> {
    if net.n_p() != relations.n_p() {
        return Err(Error::ShapeMismatch {
            context: "network products vs relation matrices",
            left: net.n_p(),
            right: relations.n_p(),
        });
    }
    let (comp, clamp) = match spec.measure {
        MeasureChoice::Original => (sim_original(net)?, ClampStats::default()),
        MeasureChoice::RandomisedConfig => sim_randomised_config(net)?,
    };
    let wc = apply_threshold(&comp, &relations.a_comp, spec.q_c)?;
    let subs = sim_substitutability(&wc.scores);
    let ws = apply_threshold(&subs, &relations.a_subs, spec.q_s)?;
    Ok(WeightedNetworks { wc, ws, clamp })
}

/// Export nonzero scores as TSV rows
/// `product_a<TAB>product_b<TAB>score<TAB>kind<TAB>measure`; symmetric
/// matrices emit each pair once.
pub fn write_scores_tsv(
    path: &std::path::Path,
    scores: &ScoreMatrix,
    labels: &[String],
) -> Result<()> {
    use std::io::Write as _;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "product_a\tproduct_b\tscore\tkind\tmeasure")?;
    let n = scores.values.n();
    for i in 0..n {
        let j_start = if scores.symmetric { i + 1 } else { 0 };
        for j in j_start..n {
            if i == j {
                continue;
            }
            let v = scores.values.get(i, j);
            if v > 0.0 {
                writeln!(
                    out,
                    "{}\t{}\t{:.9}\t{}\t{}",
                    labels[i],
                    labels[j],
                    v,
                    scores.kind.as_str(),
                    scores.measure.as_str()
                )?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Export the full dense matrix as TSV with label row and column headers.
pub fn write_dense_scores_tsv(
    path: &std::path::Path,
    scores: &ScoreMatrix,
    labels: &[String],
) -> Result<()> {
    use std::io::Write as _;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(out, "product")?;
    for l in labels {
        write!(out, "\t{l}")?;
    }
    writeln!(out)?;
    for (i, label) in labels.iter().enumerate().take(scores.values.n()) {
        write!(out, "{label}")?;
        for j in 0..scores.values.n() {
            write!(out, "\t{:.9}", scores.values.get(i, j))?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bipartite::{build_network, FrequencyFilter, TransactionRecord};
    use approx::assert_abs_diff_eq;

    fn rec(t: &str, p: &str) -> TransactionRecord {
        TransactionRecord::new(t, p)
    }

    fn net_from(pairs: &[(&str, &str)]) -> BipartiteNetwork {
        let records: Vec<_> = pairs.iter().map(|(t, p)| rec(t, p)).collect();
        build_network(&records, FrequencyFilter::default()).unwrap()
    }

    #[test]
    fn original_single_shared_basket_scores_one() {
        // a and b appear only together, in one two-item basket.
        let net = net_from(&[("t1", "a"), ("t1", "b")]);
        let sim = sim_original(&net).unwrap();
        assert_abs_diff_eq!(sim.values.get(0, 1), 1.0, epsilon = 1e-12);
        assert_eq!(sim.values.get(0, 0), 1.0);
    }

    #[test]
    fn original_disjoint_neighbourhoods_score_zero() {
        let net = net_from(&[("t1", "a"), ("t1", "b"), ("t2", "c"), ("t2", "d")]);
        let a = net.product_index("a").unwrap();
        let c = net.product_index("c").unwrap();
        let sim = sim_original(&net).unwrap();
        assert_eq!(sim.values.get(a, c), 0.0);
    }

    #[test]
    fn directed_asymmetric_fixture_hand_checked() {
        // a in baskets t1 (with b) and t2 (alone-ish); b only in t1.
        let net = net_from(&[("t1", "a"), ("t1", "b"), ("t2", "a"), ("t2", "c")]);
        let a = net.product_index("a").unwrap();
        let b = net.product_index("b").unwrap();
        let sim = sim_original_directed(&net).unwrap();
        // S_a = 1/2 + 1/2 = 1, S_b = 1/2; shared mass 1/2.
        assert_abs_diff_eq!(sim.values.get(a, b), (0.5) / 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(sim.values.get(b, a), (0.5) / 1.0, epsilon = 1e-12);
        assert!(sim.values.get(a, b) != sim.values.get(b, a));
        // Geometric-mean identity against the symmetric measure.
        let sym = sim_original(&net).unwrap();
        let expect = (sim.values.get(a, b) * sim.values.get(b, a)).sqrt();
        assert_abs_diff_eq!(sym.values.get(a, b), expect, epsilon = 1e-12);
    }

    /// On a fully regular network the noise term shrinks numerator and
    /// denominator proportionally, so the randomised score coincides with
    /// the original (closed form: both equal cn/d_p); orderings match.
    #[test]
    fn randomised_equals_original_on_regular_fixture() {
        // 6 products in a cycle of two-item baskets: d_t ≡ 2, d_p ≡ 2.
        let mut pairs = Vec::new();
        for k in 0..6u32 {
            let t = format!("t{k}");
            pairs.push((t.clone(), format!("p{k}")));
            pairs.push((t, format!("p{}", (k + 1) % 6)));
        }
        let records: Vec<_> = pairs.iter().map(|(t, p)| rec(t, p)).collect();
        let net = build_network(&records, FrequencyFilter::default()).unwrap();
        let orig = sim_original(&net).unwrap();
        let (rand, stats) = sim_randomised_config(&net).unwrap();
        for i in 0..net.n_p() {
            for j in 0..net.n_p() {
                assert_abs_diff_eq!(
                    rand.values.get(i, j),
                    orig.values.get(i, j),
                    epsilon = 1e-12
                );
            }
        }
        assert_eq!(stats, ClampStats::default());
        // Closed form for adjacent pairs: cn/d_p = 1/2.
        assert_abs_diff_eq!(orig.values.get(0, 1), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn randomised_expected_contribution_matches_stub_matching() {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        // Uniform-degree fixture: d_t ≡ 2 over 10 transactions, d_p ≡ 2
        // over 10 products, m = 20. The subtracted term d_p/m should match
        // the empirical mean of A/d over random degree-preserving networks.
        let n = 10usize;
        let m = 2 * n;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let t_of_slot: Vec<usize> = (0..n).flat_map(|l| [l, l]).collect();
        let p_of_stub: Vec<usize> = (0..n).flat_map(|i| [i, i]).collect();
        let samples = 10_000;
        let mut values = Vec::with_capacity(samples);
        for _ in 0..samples {
            let mut stubs: Vec<usize> = (0..m).collect();
            stubs.shuffle(&mut rng);
            let mut adjacency = [[false; 10]; 10];
            for (slot, &stub) in stubs.iter().enumerate() {
                adjacency[t_of_slot[slot]][p_of_stub[stub]] = true;
            }
            let degree: usize = adjacency[0].iter().filter(|&&x| x).count();
            values.push(if adjacency[0][0] {
                1.0 / degree as f64
            } else {
                0.0
            });
        }
        let mean: f64 = values.iter().sum::<f64>() / samples as f64;
        let var: f64 =
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (samples as f64 - 1.0);
        let se = (var / samples as f64).sqrt();
        let target = 2.0 / m as f64;
        assert!(
            (mean - target).abs() <= 3.0 * se,
            "mean {mean:.5} vs target {target:.5} (se {se:.5})"
        );
    }

    #[test]
    fn threshold_quantile_convention() {
        // Scores {0.1,0.2,0.3,0.4} on four pairs; q=0.5 keeps {0.3,0.4}.
        let mut values = Matrix::zeros(5);
        let pairs = [(0, 1, 0.1), (0, 2, 0.2), (1, 3, 0.3), (2, 4, 0.4)];
        let mut mask = PairSet::new();
        for &(i, j, v) in &pairs {
            values.set(i, j, v);
            values.set(j, i, v);
            mask.insert(i as u32, j as u32);
        }
        let scores = ScoreMatrix {
            values,
            kind: ScoreKind::Comp,
            measure: MeasureKind::Original,
            symmetric: true,
        };
        let t = apply_threshold(&scores, &mask, 0.5).unwrap();
        assert_eq!(t.theta, Some(0.3));
        assert_eq!(t.scores.values.get(0, 1), 0.0);
        assert_eq!(t.scores.values.get(0, 2), 0.0);
        assert_eq!(t.scores.values.get(1, 3), 0.3);
        assert_eq!(t.scores.values.get(2, 4), 0.4);
        // q=0: masking only, everything masked-in survives.
        let t0 = apply_threshold(&scores, &mask, 0.0).unwrap();
        assert_eq!(t0.theta, Some(0.1));
        assert_eq!(t0.scores.values.get(0, 1), 0.1);
        // Mask removal: a pair outside the mask is zeroed regardless.
        let mut partial = PairSet::new();
        partial.insert(0, 1);
        let tm = apply_threshold(&scores, &partial, 0.0).unwrap();
        assert_eq!(tm.scores.values.get(2, 4), 0.0);
        assert_eq!(tm.scores.values.get(0, 1), 0.1);
    }

    #[test]
    fn threshold_empty_mask_warns_with_none() {
        let scores = ScoreMatrix {
            values: Matrix::zeros(3),
            kind: ScoreKind::Comp,
            measure: MeasureKind::Original,
            symmetric: true,
        };
        let t = apply_threshold(&scores, &PairSet::new(), 0.3).unwrap();
        assert_eq!(t.theta, None);
        assert!(apply_threshold(&scores, &PairSet::new(), 1.0).is_err());
    }

    #[test]
    fn substitutability_identical_and_orthogonal_rows() {
        let mut values = Matrix::zeros(4);
        // Products 0 and 1 share the complement profile {2: 0.6, 3: 0.3};
        // product 2's profile is disjoint from 3's.
        values.set(0, 2, 0.6);
        values.set(0, 3, 0.3);
        values.set(1, 2, 0.6);
        values.set(1, 3, 0.3);
        values.set(2, 0, 0.5);
        values.set(3, 1, 0.5);
        let wc = ScoreMatrix {
            values,
            kind: ScoreKind::Comp,
            measure: MeasureKind::Original,
            symmetric: false,
        };
        let s = sim_substitutability(&wc);
        assert_abs_diff_eq!(s.values.get(0, 1), 1.0, epsilon = 1e-12);
        assert_eq!(s.values.get(2, 3), 0.0);
    }

    #[test]
    fn substitutability_zero_row_scores_zero_everywhere() {
        let mut values = Matrix::zeros(3);
        values.set(0, 1, 0.5);
        let wc = ScoreMatrix {
            values,
            kind: ScoreKind::Comp,
            measure: MeasureKind::Original,
            symmetric: false,
        };
        let s = sim_substitutability(&wc);
        // Product 2 has no complements: zero against everything, itself too.
        assert_eq!(s.values.get(2, 2), 0.0);
        assert_eq!(s.values.get(2, 0), 0.0);
        assert_eq!(s.values.get(0, 2), 0.0);
    }

    #[test]
    fn directed_substitutability_dominance_is_exactly_one() {
        let mut values = Matrix::zeros(4);
        // Row 0 dominates row 1 entrywise.
        values.set(0, 2, 0.9);
        values.set(0, 3, 0.8);
        values.set(1, 2, 0.4);
        values.set(1, 3, 0.8);
        let wc = ScoreMatrix {
            values,
            kind: ScoreKind::Comp,
            measure: MeasureKind::Original,
            symmetric: false,
        };
        let s = sim_substitutability_directed(&wc);
        assert_eq!(s.values.get(0, 1), 1.0);
        assert!(s.values.get(1, 0) < 1.0);
    }

    #[test]
    fn weighted_networks_empty_relations_give_empty_scores() {
        use crate::null_models::{derive_relations, SignificanceResult};
        let net = net_from(&[("t1", "a"), ("t1", "b"), ("t2", "a"), ("t2", "b")]);
        let empty = SignificanceResult::from_scans(PairSet::new(), PairSet::new(), net.n_p());
        let relations = derive_relations(&empty).unwrap();
        let spec = MeasureSpec {
            measure: MeasureChoice::Original,
            q_c: 0.0,
            q_s: 0.0,
        };
        let w = build_weighted_networks(&net, &relations, &spec).unwrap();
        assert_eq!(w.wc.theta, None);
        assert_eq!(w.ws.theta, None);
        assert!(w.wc.scores.values.positive_off_diagonal().is_empty());
    }

    #[test]
    fn score_exports_round_numbers_deterministically() {
        let dir = tempfile::tempdir().unwrap();
        let mut values = Matrix::zeros(2);
        values.set(0, 1, 0.125);
        values.set(1, 0, 0.125);
        let scores = ScoreMatrix {
            values,
            kind: ScoreKind::Comp,
            measure: MeasureKind::Original,
            symmetric: true,
        };
        let labels = vec!["a".to_string(), "b".to_string()];
        let sparse = dir.path().join("s.tsv");
        write_scores_tsv(&sparse, &scores, &labels).unwrap();
        let text = std::fs::read_to_string(&sparse).unwrap();
        assert_eq!(
            text,
            "product_a\tproduct_b\tscore\tkind\tmeasure\na\tb\t0.125000000\tcomp\toriginal\n"
        );
        let dense = dir.path().join("d.tsv");
        write_dense_scores_tsv(&dense, &scores, &labels).unwrap();
        let text = std::fs::read_to_string(&dense).unwrap();
        assert!(text.starts_with("product\ta\tb\n"));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn random_network() -> impl Strategy<Value = BipartiteNetwork> {
            proptest::collection::vec((0u8..12, 0u8..8), 4..80).prop_map(|pairs| {
                let records: Vec<_> = pairs
                    .iter()
                    .map(|(t, p)| rec(&format!("t{t:02}"), &format!("p{p}")))
                    .collect();
                build_network(&records, FrequencyFilter::default()).unwrap()
            })
        }

        proptest! {
            #[test]
            fn geometric_mean_identity_and_range(net in random_network()) {
                let o = sim_original(&net).unwrap();
                let od = sim_original_directed(&net).unwrap();
                let n = net.n_p();
                for i in 0..n {
                    for j in 0..n {
                        let s = o.values.get(i, j);
                        prop_assert!((0.0..=1.0 + 1e-12).contains(&s));
                        let product = od.values.get(i, j) * od.values.get(j, i);
                        prop_assert!((s * s - product).abs() < 1e-9);
                    }
                }
            }

            #[test]
            fn randomised_identity_and_range(net in random_network()) {
                let (r, _) = sim_randomised_config(&net).unwrap();
                let (rd, _) = sim_randomised_config_directed(&net).unwrap();
                let n = net.n_p();
                for i in 0..n {
                    for j in 0..n {
                        let s = r.values.get(i, j);
                        prop_assert!((0.0..=1.0).contains(&s));
                        let (a, b) = (rd.values.get(i, j), rd.values.get(j, i));
                        prop_assert!((0.0..=1.0).contains(&a));
                        // Identity holds wherever no factor was clamped;
                        // unclamped is detectable as both factors positive.
                        if a > 0.0 && b > 0.0 && a < 1.0 && b < 1.0 {
                            prop_assert!((s * s - a * b).abs() < 1e-9);
                        }
                    }
                }
            }

            #[test]
            fn substitutability_scale_invariant(
                row_a in proptest::collection::vec(0.0..1.0f64, 6),
                row_b in proptest::collection::vec(0.0..1.0f64, 6),
            ) {
                // Cosine similarity ignores uniform row rescaling.
                let build = |a: &[f64], b: &[f64]| {
                    let mut m = Matrix::zeros(8);
                    for (k, &v) in a.iter().enumerate() { m.set(0, 2 + k, v); }
                    for (k, &v) in b.iter().enumerate() { m.set(1, 2 + k, v); }
                    sim_substitutability(&ScoreMatrix {
                        values: m,
                        kind: ScoreKind::Comp,
                        measure: MeasureKind::Original,
                        symmetric: false,
                    })
                };
                let plain = build(&row_a, &row_b);
                let doubled: Vec<f64> = row_a.iter().map(|v| v * 0.5).collect();
                let scaled = build(&doubled, &row_b);
                let (x, y) = (plain.values.get(0, 1), scaled.values.get(0, 1));
                prop_assert!((x - y).abs() < 1e-9);
            }

            #[test]
            fn thresholding_is_monotone_in_q(
                net in random_network(),
                q1 in 0.0..0.9f64,
                dq in 0.0..0.09f64,
            ) {
                let o = sim_original(&net).unwrap();
                let mut mask = PairSet::new();
                let n = net.n_p() as u32;
                for i in 0..n {
                    for j in i + 1..n {
                        mask.insert(i, j);
                    }
                }
                let q2 = q1 + dq;
                let lo = apply_threshold(&o, &mask, q1).unwrap();
                let hi = apply_threshold(&o, &mask, q2).unwrap();
                for i in 0..net.n_p() {
                    for j in 0..net.n_p() {
                        // A higher quantile can only remove more entries.
                        if hi.scores.values.get(i, j) > 0.0 {
                            prop_assert!(lo.scores.values.get(i, j) > 0.0);
                        }
                    }
                }
            }
        }
    }
}
