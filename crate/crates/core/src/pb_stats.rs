//! Poisson-binomial distribution utilities.
//!
//! A sum of independent, non-identical Bernoulli variables has a
//! Poisson-binomial distribution. The significance tests in
//! [`crate::null_models`] approximate it two ways: by a Poisson distribution
//! with matching mean (cheap, accurate when the composing probabilities are
//! small) and by closed-form Chernoff tail bounds (conservative but always
//! valid). This module provides the exact distribution as an oracle, the
//! Poisson CDF, the approximation-error bounds that justify the Poisson
//! route, and the two tail bounds.

use crate::error::{Error, Result};

/// Default cap on the exact-PMF convolution size.
pub const EXACT_PMF_LIMIT: usize = 10_000;

/// Sum of independent `Bernoulli(p_j)` variables.
#[derive(Debug, Clone)]
pub struct PoissonBinomial {
    probs: Vec<f64>,
    mu: f64,
    sigma2: f64,
}

/// Total-variation-style error bounds for approximating a Poisson binomial
/// by `Poisson(mu)`, in the `Σ_k |P(X=k) − Q(k)|` distance convention.
#[derive(Debug, Clone, PartialEq)]
pub struct LeCamBounds {
    /// `2λω = 2 Σ p_j²`; always valid.
    pub tv_bound_2lw: f64,
    /// `9α` where `α = sup p_j`; always valid.
    pub tv_bound_d1a: f64,
    /// `16ω`; valid only when `4α ≤ 1`, otherwise absent.
    pub tv_bound_d2w: Option<f64>,
    /// `ω = Σ p_j² / λ`.
    pub omega: f64,
    /// `α = sup p_j`.
    pub alpha: f64,
}

impl PoissonBinomial {
    /// Build from success probabilities; each must lie in `[0, 1]`.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        for &p in &probs {
            if !(0.0..=1.0).contains(&p) || p.is_nan() {
                return Err(Error::InvalidParameter {
                    context: "Bernoulli probability",
                    value: p,
                    range: "[0, 1]",
                });
            }
        }
        let mu = probs.iter().sum();
        let sigma2 = probs.iter().map(|p| p * (1.0 - p)).sum();
        Ok(PoissonBinomial { probs, mu, sigma2 })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn n(&self) -> usize {
        self.probs.len()
    }

    /// Mean `μ = Σ p_j`.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Variance `σ² = Σ p_j (1 − p_j)`.
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Largest composing probability, `sup p_j` (0 for an empty sum).
    pub fn alpha(&self) -> f64 {
        self.probs.iter().copied().fold(0.0, f64::max)
    }

    /// Exact probability mass function over `0..=n` by convolution.
    ///
    /// Quadratic in `n`, so callers are expected to stay at oracle scale;
    /// sizes above [`EXACT_PMF_LIMIT`] are refused.
    pub fn exact_pmf(&self) -> Result<Vec<f64>> {
        self.exact_pmf_with_limit(EXACT_PMF_LIMIT)
    }

    /// [`Self::exact_pmf`] with an explicit size cap.
    pub fn exact_pmf_with_limit(&self, limit: usize) -> Result<Vec<f64>> {
        let n = self.probs.len();
        if n > limit {
            return Err(Error::PmfSizeLimit { n, limit });
        }
        let mut pmf = vec![0.0; n + 1];
        pmf[0] = 1.0;
        for (step, &p) in self.probs.iter().enumerate() {
            // In-place downward update keeps one allocation for the whole DP.
            for k in (0..=step + 1).rev() {
                let stay = pmf[k] * (1.0 - p);
                let up = if k > 0 { pmf[k - 1] * p } else { 0.0 };
                pmf[k] = stay + up;
            }
        }
        Ok(pmf)
    }

    /// Exact upper tail `P(X ≥ x)` from the convolution PMF.
    pub fn exact_upper_tail(&self, x: f64) -> Result<f64> {
        let pmf = self.exact_pmf()?;
        let from = x.ceil().max(0.0) as usize;
        Ok(pmf.iter().skip(from).sum())
    }

    /// Exact lower tail `P(X ≤ x)` from the convolution PMF.
    pub fn exact_lower_tail(&self, x: f64) -> Result<f64> {
        let pmf = self.exact_pmf()?;
        let to = x.floor().min(self.n() as f64) as usize;
        Ok(if x < 0.0 {
            0.0
        } else {
            pmf.iter().take(to + 1).sum()
        })
    }

    /// Error bounds for the `Poisson(μ)` approximation.
    ///
    /// In the `Σ_k |P(X=k) − Q(k)|` distance: `2λω` and `9α` hold always,
    /// and `16ω` holds whenever `4α ≤ 1`.
    pub fn lecam_bounds(&self) -> Result<LeCamBounds> {
        if self.mu <= 0.0 {
            return Err(Error::DegenerateDistribution(
                "approximation bounds need a positive mean",
            ));
        }
        let sum_sq: f64 = self.probs.iter().map(|p| p * p).sum();
        let omega = sum_sq / self.mu;
        let alpha = self.alpha();
        Ok(LeCamBounds {
            tv_bound_2lw: 2.0 * self.mu * omega,
            tv_bound_d1a: 9.0 * alpha,
            tv_bound_d2w: (4.0 * alpha <= 1.0).then_some(16.0 * omega),
            omega,
            alpha,
        })
    }

    /// Chernoff bound on the upper tail: `P(X ≥ x) ≤ exp(x − μ − x·ln(x/μ))`
    /// for `x ≥ μ > 0`. Equals 1 at `x = μ`.
    pub fn chernoff_upper(&self, x: f64) -> Result<f64> {
        chernoff_upper_bound(self.mu, x)
    }

    /// Chernoff bound on the lower tail: `P(X ≤ x) ≤ exp(x − μ + x·ln(μ/x))`
    /// for `0 < x < μ`.
    pub fn chernoff_lower(&self, x: f64) -> Result<f64> {
        chernoff_lower_bound(self.mu, x)
    }

    /// `Σ_k |P(X=k) − Poisson(μ)(k)|`, including the Poisson mass above `n`.
    ///
    /// This is the distance the [`LeCamBounds`] govern; exposed so callers
    /// can report the realized approximation error next to its bounds.
    pub fn poisson_l1_distance(&self) -> Result<f64> {
        let pmf = self.exact_pmf()?;
        let mut dist = 0.0;
        let mut poisson_mass = 0.0;
        for (k, &p) in pmf.iter().enumerate() {
            let q = poisson_pmf(self.mu, k as u64);
            poisson_mass += q;
            dist += (p - q).abs();
        }
        dist += (1.0 - poisson_mass).max(0.0);
        Ok(dist)
    }
}

/// Chernoff upper-tail bound `exp(x − μ − x·ln(x/μ))`, defined for `x ≥ μ > 0`.
///
/// Only the mean of the Poisson binomial enters the closed form, so callers
/// that know `μ` can skip materializing the composing probabilities.
pub fn chernoff_upper_bound(mu: f64, x: f64) -> Result<f64> {
    if mu <= 0.0 {
        return Err(Error::DegenerateDistribution(
            "upper tail bound needs a positive mean",
        ));
    }
    if x < mu {
        return Err(Error::BoundDomain {
            bound: "upper-tail",
            x,
            mu,
        });
    }
    Ok((x - mu - x * (x / mu).ln()).exp())
}

/// Chernoff lower-tail bound `exp(x − μ + x·ln(μ/x))`, defined for `0 < x < μ`.
pub fn chernoff_lower_bound(mu: f64, x: f64) -> Result<f64> {
    if x <= 0.0 || x >= mu {
        return Err(Error::BoundDomain {
            bound: "lower-tail",
            x,
            mu,
        });
    }
    Ok((x - mu + x * (mu / x).ln()).exp())
}

/// Poisson CDF `F(y) = e^{−λ} Σ_{k=0}^{⌊y⌋} λ^k / k!`.
///
/// Negative `y` yields 0. Evaluated stably in log space so large means and
/// large floors stay finite.
pub fn poisson_cdf(lambda: f64, y: f64) -> f64 {
    if y < 0.0 {
        return 0.0;
    }
    if lambda == 0.0 {
        return 1.0;
    }
    let kmax = y.floor().min(u64::MAX as f64) as u64;
    let mut sum = 0.0;
    let mut ln_term = -lambda; // ln of e^{−λ} λ^0 / 0!
    for k in 0..=kmax {
        if k > 0 {
            ln_term += lambda.ln() - (k as f64).ln();
        }
        sum += ln_term.exp();
        // Terms past the mean shrink geometrically; once they stop
        // contributing at f64 resolution the partial sum is final.
        if k as f64 > lambda && ln_term < -745.0 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// Poisson PMF `e^{−λ} λ^k / k!` in log space.
pub fn poisson_pmf(lambda: f64, k: u64) -> f64 {
    if lambda == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    let kf = k as f64;
    (-lambda + kf * lambda.ln() - ln_factorial(k)).exp()
}

/// `ln(k!)` via Stirling's series for large `k`, exact products below 20.
fn ln_factorial(k: u64) -> f64 {
    if k < 20 {
        let mut acc = 0.0;
        for i in 2..=k {
            acc += (i as f64).ln();
        }
        acc
    } else {
        let kf = k as f64;
        // Stirling with the first two correction terms: accurate to ~1e-12
        // relative at k ≥ 20.
        kf * kf.ln() - kf + 0.5 * (2.0 * std::f64::consts::PI * kf).ln() + 1.0 / (12.0 * kf)
            - 1.0 / (360.0 * kf * kf * kf)
    }
}
