//! Null models and significance tests for co-purchase counts.
//!
//! Each product pair's common-neighbour count is compared against what a
//! random network with matching gross statistics would produce. Pairs
//! co-purchased significantly more often than the null predicts are
//! complement candidates; pairs co-purchased significantly less are
//! substitute candidates (once they share a complement). Three nulls are
//! offered: a per-product Bernoulli model with a normal approximation, and
//! a degree-preserving bipartite configuration model tested either via a
//! Poisson approximation or via conservative Chernoff tail bounds.

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bipartite::{BipartiteNetwork, CoPurchaseCounts};
use crate::error::{Error, Result};
use crate::matrix::PairSet;
use crate::pb_stats::{chernoff_lower_bound, chernoff_upper_bound, poisson_cdf};

/// Fewest transactions for which the normal approximation is accepted.
pub const NORMAL_APPROX_MIN_TRANSACTIONS: usize = 30;

/// Per-product rows of flagged `(i, j)` pairs gathered in parallel scans.
type FlagRow = (Vec<(u32, u32)>, Vec<(u32, u32)>);

/// Which null model to test against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NullModelKind {
    /// Per-product connection probability, normal-approximate test.
    ErVariant,
    /// Degree-preserving configuration model, Poisson-approximate test.
    BicmPoisson,
    /// Degree-preserving configuration model, Chernoff-bound test.
    BicmChernoff,
}

/// Null model choice plus significance levels.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NullModelSpec {
    pub kind: NullModelKind,
    /// Level for flagging "significantly more" co-purchases.
    pub alpha_m: f64,
    /// Level for flagging "significantly less" co-purchases.
    pub alpha_l: f64,
}

impl NullModelSpec {
    pub fn new(kind: NullModelKind, alpha_m: f64, alpha_l: f64) -> Result<Self> {
        for (context, value) in [("alpha_m", alpha_m), ("alpha_l", alpha_l)] {
            if !(value > 0.0 && value < 1.0) {
                return Err(Error::InvalidParameter {
                    context,
                    value,
                    range: "(0, 1)",
                });
            }
        }
        Ok(NullModelSpec {
            kind,
            alpha_m,
            alpha_l,
        })
    }
}

/// Per-pair outcome of a significance test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PairDecision {
    pub more: bool,
    pub less: bool,
}

/// A pair where the Poisson approximation's error bound is unavailable
/// because one composing probability is large (typically a hub product in
/// a huge basket). Reported for transparency; the decision is unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct HubDiagnostic {
    pub i: u32,
    pub j: u32,
    /// Null mean of the pair's co-purchase count.
    pub mu: f64,
    /// `ω = Σ p² / μ` of the composing per-transaction probabilities.
    pub omega: f64,
    /// Largest composing probability.
    pub p_star: f64,
}

/// Output of a full pairwise significance scan.
#[derive(Debug, Clone, PartialEq)]
pub struct SignificanceResult {
    pub more: PairSet,
    pub less: PairSet,
    n_p: usize,
    /// Products excluded from testing (degenerate estimated probability).
    pub skipped_products: Vec<u32>,
    /// Pairs where the Poisson error bound was unavailable.
    pub hub_flags: Vec<HubDiagnostic>,
}

impl SignificanceResult {
    /// Package externally computed MORE/LESS scans (useful for fixtures
    /// and for replaying exported relation lists).
    pub fn from_scans(more: PairSet, less: PairSet, n_p: usize) -> Self {
        SignificanceResult {
            more,
            less,
            n_p,
            skipped_products: Vec::new(),
            hub_flags: Vec::new(),
        }
    }

    pub fn n_p(&self) -> usize {
        self.n_p
    }
}

/// The four relation matrices over product pairs.
///
/// `a_comp` equals `a_more`; `a_subs` keeps only the `a_less` pairs that
/// share at least one common neighbour in the `a_more` graph.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationMatrices {
    pub a_more: PairSet,
    pub a_less: PairSet,
    pub a_comp: PairSet,
    pub a_subs: PairSet,
    n_p: usize,
}

impl RelationMatrices {
    pub fn n_p(&self) -> usize {
        self.n_p
    }

    /// All relations as `(i, j, name)` rows in a fixed order.
    pub fn rows(&self) -> Vec<(u32, u32, &'static str)> {
        let mut out = Vec::new();
        for (set, name) in [
            (&self.a_more, "more"),
            (&self.a_less, "less"),
            (&self.a_comp, "comp"),
            (&self.a_subs, "subs"),
        ] {
            out.extend(set.iter().map(|(i, j)| (i, j, name)));
        }
        out
    }
}

/// Normal upper quantile `Φ⁻¹(1 − alpha)`.
pub fn normal_upper_quantile(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter {
            context: "significance level",
            value: alpha,
            range: "(0, 1)",
        });
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    Ok(normal.inverse_cdf(1.0 - alpha))
}

/// Per-pair decision under the per-product Bernoulli null.
///
/// With `p̂ = d/n_t` per product, the null co-purchase count is
/// `Binomial(n_t, p̂_i p̂_j)`, tested by normal approximation: MORE iff
/// `cn > μ + z_m σ`, LESS iff `cn < μ − z_l σ`, both strict. Returns `None`
/// when either estimated probability is degenerate (σ = 0).
pub fn er_pair_decision(
    n_t: usize,
    d_i: u32,
    d_j: u32,
    cn: u32,
    z_more: f64,
    z_less: f64,
) -> Option<PairDecision> {
    let n = n_t as f64;
    let p_i = d_i as f64 / n;
    let p_j = d_j as f64 / n;
    if p_i <= 0.0 || p_i >= 1.0 || p_j <= 0.0 || p_j >= 1.0 {
        return None;
    }
    let pp = p_i * p_j;
    let mu = n * pp;
    let sigma = (n * pp * (1.0 - pp)).sqrt();
    let x = cn as f64;
    Some(PairDecision {
        more: x > mu + z_more * sigma,
        less: x < mu - z_less * sigma,
    })
}

/// Per-pair decision under the Poisson approximation of the configuration
/// model: MORE iff `1 − F(cn) < α_m`, LESS iff `F(cn) < α_l`, strict.
///
/// A pair with null mean zero cannot produce any co-purchase, so observing
/// one is flagged MORE unconditionally; observing none is no evidence.
pub fn poisson_pair_decision(mu: f64, cn: u32, alpha_m: f64, alpha_l: f64) -> PairDecision {
    if mu <= 0.0 {
        return PairDecision {
            more: cn > 0,
            less: false,
        };
    }
    let f = poisson_cdf(mu, cn as f64);
    PairDecision {
        more: 1.0 - f < alpha_m,
        less: f < alpha_l,
    }
}

/// Per-pair decision under Chernoff tail bounds of the configuration model:
/// MORE iff `cn ≥ μ` and the upper bound is below `α_m`; LESS iff
/// `0 < cn < μ` and the lower bound is below `α_l`. A count outside a
/// bound's domain is no evidence for that side.
pub fn chernoff_pair_decision(mu: f64, cn: u32, alpha_m: f64, alpha_l: f64) -> PairDecision {
    if mu <= 0.0 {
        return PairDecision::default();
    }
    let x = cn as f64;
    let more = x >= mu
        && chernoff_upper_bound(mu, x)
            .map(|b| b < alpha_m)
            .unwrap_or(false);
    let less = x > 0.0
        && x < mu
        && chernoff_lower_bound(mu, x)
            .map(|b| b < alpha_l)
            .unwrap_or(false);
    PairDecision { more, less }
}

/// Ratio `(⟨d²⟩ − ⟨d⟩)/⟨d⟩` of a degree sequence; `Σ d(d−1) / Σ d`.
fn excess_ratio(degrees: &[u32]) -> f64 {
    let sum: u64 = degrees.iter().map(|&d| d as u64).sum();
    if sum == 0 {
        return 0.0;
    }
    let sum_sq: u64 = degrees.iter().map(|&d| d as u64 * d as u64).sum();
    (sum_sq - sum) as f64 / sum as f64
}

/// Null mean of the co-purchase count of products `i ≠ j` under the
/// degree-preserving configuration model:
/// `μ_ij = (d_p[i]·d_p[j]/m)·(⟨d_t²⟩−⟨d_t⟩)/⟨d_t⟩`.
pub fn bicm_pair_mean(net: &BipartiteNetwork, i: usize, j: usize) -> f64 {
    debug_assert_ne!(i, j);
    let kappa = excess_ratio(net.d_t());
    net.d_p()[i] as f64 * net.d_p()[j] as f64 / net.m() as f64 * kappa
}

/// Expected multiplicity of edge `(l, i)` under the configuration model:
/// `d_t[l]·d_p[i]/m`.
pub fn bicm_edge_prob(net: &BipartiteNetwork, l: usize, i: usize) -> f64 {
    net.d_t()[l] as f64 * net.d_p()[i] as f64 / net.m() as f64
}

/// Expected number of multi-edge stub pairs under the configuration model:
/// `((⟨d_t²⟩−⟨d_t⟩)/⟨d_t⟩)·((⟨d_p²⟩−⟨d_p⟩)/⟨d_p⟩)`.
pub fn bicm_multiedge_expectation(net: &BipartiteNetwork) -> f64 {
    excess_ratio(net.d_t()) * excess_ratio(net.d_p())
}

/// Scan every product pair under the per-product Bernoulli null with the
/// default minimum transaction count for the normal approximation.
pub fn er_variant_test(
    net: &BipartiteNetwork,
    cn: &CoPurchaseCounts,
    alpha_m: f64,
    alpha_l: f64,
) -> Result<SignificanceResult> {
    er_variant_test_with_min(net, cn, alpha_m, alpha_l, NORMAL_APPROX_MIN_TRANSACTIONS)
}

/// [`er_variant_test`] with an explicit minimum transaction count.
pub fn er_variant_test_with_min(
    net: &BipartiteNetwork,
    cn: &CoPurchaseCounts,
    alpha_m: f64,
    alpha_l: f64,
    min_transactions: usize,
) -> Result<SignificanceResult> {
    NullModelSpec::new(NullModelKind::ErVariant, alpha_m, alpha_l)?;
    if net.n_t() < min_transactions {
        return Err(Error::TooFewTransactions {
            n_t: net.n_t(),
            required: min_transactions,
        });
    }
    let z_more = normal_upper_quantile(alpha_m)?;
    let z_less = normal_upper_quantile(alpha_l)?;
    let n_t = net.n_t();
    let n_p = net.n_p();
    let d_p = net.d_p();

    let skipped_products: Vec<u32> = (0..n_p as u32)
        .filter(|&i| {
            let d = d_p[i as usize] as usize;
            d == 0 || d == n_t
        })
        .collect();

    let per_row: Vec<FlagRow> = (0..n_p)
        .into_par_iter()
        .map(|i| {
            let mut more = Vec::new();
            let mut less = Vec::new();
            for j in i + 1..n_p {
                let Some(d) = er_pair_decision(n_t, d_p[i], d_p[j], cn.get(i, j), z_more, z_less)
                else {
                    continue;
                };
                if d.more {
                    more.push((i as u32, j as u32));
                }
                if d.less {
                    less.push((i as u32, j as u32));
                }
            }
            (more, less)
        })
        .collect();

    let mut more = PairSet::new();
    let mut less = PairSet::new();
    for (m_row, l_row) in per_row {
        for (i, j) in m_row {
            more.insert(i, j);
        }
        for (i, j) in l_row {
            less.insert(i, j);
        }
    }
    Ok(SignificanceResult {
        more,
        less,
        n_p,
        skipped_products,
        hub_flags: Vec::new(),
    })
}

/// Scan every product pair under the configuration-model null with the
/// Poisson approximation.
pub fn bicm_poisson_test(
    net: &BipartiteNetwork,
    cn: &CoPurchaseCounts,
    alpha_m: f64,
    alpha_l: f64,
) -> Result<SignificanceResult> {
    NullModelSpec::new(NullModelKind::BicmPoisson, alpha_m, alpha_l)?;
    let n_p = net.n_p();
    let d_p = net.d_p();
    let m = net.m() as f64;
    let kappa = excess_ratio(net.d_t());
    // Per-transaction factors d(d−1), aggregated for the diagnostics:
    // ω and the largest composing probability depend only on these sums.
    let excess_sq_sum: f64 = net
        .d_t()
        .iter()
        .map(|&d| {
            let e = d as f64 * (d as f64 - 1.0);
            e * e
        })
        .sum();
    let excess_max: f64 = net
        .d_t()
        .iter()
        .map(|&d| d as f64 * (d as f64 - 1.0))
        .fold(0.0, f64::max);

    let per_row: Vec<(FlagRow, Vec<HubDiagnostic>)> = (0..n_p)
        .into_par_iter()
        .map(|i| {
            let mut more = Vec::new();
            let mut less = Vec::new();
            let mut hubs = Vec::new();
            for j in i + 1..n_p {
                let scale = d_p[i] as f64 * d_p[j] as f64 / (m * m);
                let mu = scale * m * kappa;
                let d = poisson_pair_decision(mu, cn.get(i, j), alpha_m, alpha_l);
                if d.more {
                    more.push((i as u32, j as u32));
                }
                if d.less {
                    less.push((i as u32, j as u32));
                }
                let p_star = scale * excess_max;
                if 4.0 * p_star > 1.0 {
                    let omega = if mu > 0.0 {
                        scale * scale * excess_sq_sum / mu
                    } else {
                        0.0
                    };
                    hubs.push(HubDiagnostic {
                        i: i as u32,
                        j: j as u32,
                        mu,
                        omega,
                        p_star,
                    });
                }
            }
            ((more, less), hubs)
        })
        .collect();

    let mut more = PairSet::new();
    let mut less = PairSet::new();
    let mut hub_flags = Vec::new();
    for ((m_row, l_row), h_row) in per_row {
        for (i, j) in m_row {
            more.insert(i, j);
        }
        for (i, j) in l_row {
            less.insert(i, j);
        }
        hub_flags.extend(h_row);
    }
    Ok(SignificanceResult {
        more,
        less,
        n_p,
        skipped_products: Vec::new(),
        hub_flags,
    })
}

/// Scan every product pair under the configuration-model null with
/// Chernoff tail bounds. The bounds depend only on the pair's null mean,
/// so the scan is an O(pairs) kernel over precomputed degree aggregates.
pub fn bicm_chernoff_test(
    net: &BipartiteNetwork,
    cn: &CoPurchaseCounts,
    alpha_m: f64,
    alpha_l: f64,
) -> Result<SignificanceResult> {
    NullModelSpec::new(NullModelKind::BicmChernoff, alpha_m, alpha_l)?;
    let n_p = net.n_p();
    let d_p = net.d_p();
    let m = net.m() as f64;
    let kappa = excess_ratio(net.d_t());

    let per_row: Vec<FlagRow> = (0..n_p)
        .into_par_iter()
        .map(|i| {
            let mut more = Vec::new();
            let mut less = Vec::new();
            for j in i + 1..n_p {
                let mu = d_p[i] as f64 * d_p[j] as f64 / m * kappa;
                let d = chernoff_pair_decision(mu, cn.get(i, j), alpha_m, alpha_l);
                if d.more {
                    more.push((i as u32, j as u32));
                }
                if d.less {
                    less.push((i as u32, j as u32));
                }
            }
            (more, less)
        })
        .collect();

    let mut more = PairSet::new();
    let mut less = PairSet::new();
    for (m_row, l_row) in per_row {
        for (i, j) in m_row {
            more.insert(i, j);
        }
        for (i, j) in l_row {
            less.insert(i, j);
        }
    }
    Ok(SignificanceResult {
        more,
        less,
        n_p,
        skipped_products: Vec::new(),
        hub_flags: Vec::new(),
    })
}

/// Run the null model named by `spec`.
pub fn run_null_model(
    net: &BipartiteNetwork,
    cn: &CoPurchaseCounts,
    spec: &NullModelSpec,
) -> Result<SignificanceResult> {
    match spec.kind {
        NullModelKind::ErVariant => er_variant_test(net, cn, spec.alpha_m, spec.alpha_l),
        NullModelKind::BicmPoisson => bicm_poisson_test(net, cn, spec.alpha_m, spec.alpha_l),
        NullModelKind::BicmChernoff => bicm_chernoff_test(net, cn, spec.alpha_m, spec.alpha_l),
    }
}

/// Complete the relation matrices from the MORE/LESS scans: complements
/// are exactly the MORE pairs; substitutes are the LESS pairs whose
/// endpoints share at least one neighbour in the MORE graph.
pub fn derive_relations(result: &SignificanceResult) -> Result<RelationMatrices> {
    let SignificanceResult {
        more, less, n_p, ..
    } = result;
    if !more.is_disjoint(less) {
        let overlap = more.iter().filter(|&(i, j)| less.contains(i, j)).count();
        return Err(Error::OverlappingRelations { pairs: overlap });
    }
    let adjacency = more.adjacency(*n_p);
    let mut a_subs = PairSet::new();
    for (i, j) in less.iter() {
        let shares_complement = adjacency[i as usize]
            .intersection(&adjacency[j as usize])
            .next()
            .is_some();
        if shares_complement {
            a_subs.insert(i, j);
        }
    }
    Ok(RelationMatrices {
        a_more: more.clone(),
        a_less: less.clone(),
        a_comp: more.clone(),
        a_subs,
        n_p: *n_p,
    })
}

/// Export relations as TSV rows `product_i<TAB>product_j<TAB>relation`.
pub fn write_relations_tsv(
    path: &std::path::Path,
    relations: &RelationMatrices,
    labels: &[String],
) -> Result<()> {
    use std::io::Write as _;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "product_i\tproduct_j\trelation")?;
    for (i, j, name) in relations.rows() {
        writeln!(
            out,
            "{}\t{}\t{}",
            labels[i as usize], labels[j as usize], name
        )?;
    }
    out.flush()?;
    Ok(())
}
