//! Scalar exponent sequences for the gradient estimates.
//!
//! Everything in this module is pure arithmetic on the growth exponents
//! `p = (p_1, …, p_N)`: the conjugate-type sequence `q_j`, the geometric
//! ladder `γ_j` with its interpolation weights `τ_j` and product corrections
//! `ε_j`, the starting indices `j0`, `j1`, `J`, the truncated product `Θ`,
//! and the closed-form bound for absorbable recursive estimates on nested
//! radii.
//!
//! All arithmetic is 64-bit floating point; identities are checked by tests
//! at 1e-12 relative tolerance since `γ_j` grows like `2^j`.

use serde::Serialize;

use crate::error::{Error, Result};

/// Relative tolerance used when floating-point identities are asserted.
pub const IDENTITY_RTOL: f64 = 1e-12;

/// A real number extended with `+∞`, carried explicitly so that minima with
/// the convention `p/(p-2) = +∞` for `p = 2` are exact rather than a large
/// sentinel.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ExtendedReal(f64);

impl ExtendedReal {
    pub const INFINITY: ExtendedReal = ExtendedReal(f64::INFINITY);

    pub fn new(value: f64) -> Self {
        ExtendedReal(value)
    }

    /// The conjugate-type quotient `p/(p-2)`, `+∞` when `p = 2`.
    pub fn conjugate_quotient(p: f64) -> Self {
        if p <= 2.0 {
            ExtendedReal::INFINITY
        } else {
            ExtendedReal(p / (p - 2.0))
        }
    }

    pub fn min(self, other: ExtendedReal) -> ExtendedReal {
        if self.0 <= other.0 {
            self
        } else {
            other
        }
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    /// Finite value; panics on `+∞` (callers take a `min` with a finite cap
    /// before extracting).
    pub fn value(self) -> f64 {
        assert!(self.0.is_finite(), "extended real is +inf");
        self.0
    }
}

/// The growth exponents `p = (p_1, …, p_N)`, `2 ≤ p_1 ≤ … ≤ p_N`, `N ≥ 2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentVector {
    p: Vec<f64>,
}

impl ExponentVector {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.len() < 2 {
            return Err(Error::InvalidExponents(format!(
                "need at least 2 exponents, got {}",
                p.len()
            )));
        }
        for (i, &pi) in p.iter().enumerate() {
            if !pi.is_finite() || pi < 2.0 {
                return Err(Error::InvalidExponents(format!(
                    "p_{} = {pi} violates p_i >= 2",
                    i + 1
                )));
            }
        }
        if p.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidExponents(
                "exponents must be non-decreasing".into(),
            ));
        }
        Ok(ExponentVector { p })
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }

    /// 1-based access `p_i`, matching the usual indexing `i = 1, …, N`.
    pub fn at(&self, i: usize) -> f64 {
        self.p[i - 1]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    pub fn min_exponent(&self) -> f64 {
        self.p[0]
    }

    pub fn max_exponent(&self) -> f64 {
        self.p[self.p.len() - 1]
    }
}

/// The sequence `q_j = min{p_j/(p_j-2), q0}` for a target order `q0 ≥ 2`,
/// with `q.at(0) = q0`. Non-increasing in `j` because `p` is ordered.
#[derive(Debug, Clone, Serialize)]
pub struct QSequence {
    pub q0: f64,
    pub q: Vec<f64>,
}

impl QSequence {
    /// `q_k` for `k = 0, …, N`; index 0 is the target order itself.
    pub fn at(&self, k: usize) -> f64 {
        if k == 0 {
            self.q0
        } else {
            self.q[k - 1]
        }
    }

    pub fn last(&self) -> f64 {
        self.q[self.q.len() - 1]
    }
}

/// `q_j = min{p_j/(p_j-2), q0}`, with the `+∞` convention when `p_j = 2`.
pub fn compute_q_sequence(p: &ExponentVector, q0: f64) -> Result<QSequence> {
    if !q0.is_finite() || q0 < 2.0 {
        return Err(Error::InvalidParameter {
            name: "q0",
            reason: format!("must be a finite real >= 2, got {q0}"),
        });
    }
    let q = p
        .as_slice()
        .iter()
        .map(|&pj| {
            ExtendedReal::conjugate_quotient(pj)
                .min(ExtendedReal::new(q0))
                .value()
        })
        .collect();
    Ok(QSequence { q0, q })
}

/// The exponent ladder for the sup-gradient estimate: `γ_j`, interpolation
/// weights `τ_j`, product corrections `ε_j`, starting indices and the
/// truncated product `Θ`.
///
/// `tau` is stored from index `j0` and `eps` from index `j_start = J`; below
/// those indices the defining expressions can be singular.
#[derive(Debug, Clone, Serialize)]
pub struct MoserSchedule {
    /// Space dimension (`≥ 3` so the Sobolev exponent `2N/(N-2)` is finite).
    pub n: usize,
    pub sobolev2star: f64,
    pub j0: usize,
    pub j1: usize,
    /// `J = 1 + max{j0, j1}`, the first index from which the ladder ratio is
    /// uniformly inside `(0, 1)`.
    #[serde(rename = "J")]
    pub j_start: usize,
    pub jmax: usize,
    /// `γ_j = p_N + 2^{j+2} - 2` for `j = 0, …, jmax`.
    pub gamma: Vec<f64>,
    /// First index of `tau` (equals `j0`).
    pub tau_start: usize,
    pub tau: Vec<f64>,
    /// First index of `eps` (equals `J`).
    pub eps_start: usize,
    pub eps: Vec<f64>,
    /// `Π_{j=J}^{jmax} (1 + ε_j)`.
    pub theta: f64,
    /// Upper estimate of the dropped tail `Σ_{j>jmax} ε_j` from the
    /// geometric asymptotic `ε_j ~ N(p_N - p_1)/8 · 2^{-j}`.
    pub theta_tail_bound: f64,
    p1: f64,
    pn: f64,
}

impl MoserSchedule {
    /// `γ_j`; defined for `j ≥ -1` by the same formula (`γ_{-1} = p_N`).
    pub fn gamma_at(&self, j: i64) -> f64 {
        gamma_of(self.pn, j)
    }

    pub fn tau_at(&self, j: usize) -> Option<f64> {
        j.checked_sub(self.tau_start).and_then(|k| self.tau.get(k)).copied()
    }

    pub fn eps_at(&self, j: usize) -> Option<f64> {
        j.checked_sub(self.eps_start).and_then(|k| self.eps.get(k)).copied()
    }

    /// The ladder ratio `(1-τ_j)γ_j/(γ_j + p_1 - p_N)`, which lies in
    /// `(0, 1)` for every `j ≥ J`.
    pub fn ladder_ratio(&self, j: usize) -> Option<f64> {
        let tau = self.tau_at(j)?;
        let g = self.gamma_at(j as i64);
        Some((1.0 - tau) * g / (g + self.p1 - self.pn))
    }
}

fn gamma_of(pn: f64, j: i64) -> f64 {
    pn + f64::exp2((j + 2) as f64) - 2.0
}

/// `min{j in N : j > log2(arg) - 2}`, with `log t = -∞` for `t ≤ 0`.
fn threshold_index(arg: f64) -> usize {
    if arg <= 0.0 {
        return 0;
    }
    let bound = arg.log2() - 2.0;
    if bound < 0.0 {
        0
    } else {
        // strictly greater, so an integral bound still advances by one
        (bound.floor() as usize) + 1
    }
}

fn tau_of(pn: f64, p1: f64, half_sobolev: f64, j: i64) -> f64 {
    let g = gamma_of(pn, j);
    let g_prev = gamma_of(pn, j - 1);
    let boosted = half_sobolev * (g + p1 - pn);
    (g_prev / g) * (boosted - g) / (boosted - g_prev)
}

/// `ε_j` in the cancellation-free form
/// `ε_j = (p_N - p_1)/γ_j · (1-τ_j)/(τ_j - (p_N - p_1)/γ_j)`,
/// algebraically equal to `τ_j · ((γ_j + p_1 - p_N)/((1-τ_j) γ_j))' - 1`
/// but accurate when `p_N - p_1` or `2^{-j}` is small.
fn eps_of(pn: f64, p1: f64, half_sobolev: f64, j: i64) -> f64 {
    let g = gamma_of(pn, j);
    let tau = tau_of(pn, p1, half_sobolev, j);
    let del = (pn - p1) / g;
    del * (1.0 - tau) / (tau - del)
}

/// Builds the full exponent schedule up to `jmax`.
///
/// Requires `N ≥ 3` (finite Sobolev exponent; the two-dimensional case is
/// handled by other means) and `jmax ≥ J + 10` so the product `Θ` carries a
/// meaningful part of its tail.
pub fn compute_moser_schedule(p: &ExponentVector, jmax: usize) -> Result<MoserSchedule> {
    let n = p.dim();
    if n < 3 {
        return Err(Error::InvalidParameter {
            name: "p",
            reason: format!("schedule needs N >= 3, got N = {n}"),
        });
    }
    let p1 = p.min_exponent();
    let pn = p.max_exponent();
    let nf = n as f64;
    let sobolev2star = 2.0 * nf / (nf - 2.0);
    let half_sobolev = sobolev2star / 2.0;

    let arg0 = (nf - 2.0) / 2.0 * (pn - 2.0) - nf / 2.0 * (p1 - 2.0);
    let arg1 = (nf - 2.0) * (pn - 2.0) - nf * (p1 - 2.0);
    let j0 = threshold_index(arg0);
    let j1 = threshold_index(arg1);
    let j_start = 1 + j0.max(j1);

    if jmax < j_start + 10 {
        return Err(Error::InvalidParameter {
            name: "jmax",
            reason: format!("must be >= J + 10 = {}, got {jmax}", j_start + 10),
        });
    }

    let gamma: Vec<f64> = (0..=jmax as i64).map(|j| gamma_of(pn, j)).collect();
    let tau: Vec<f64> = (j0 as i64..=jmax as i64)
        .map(|j| tau_of(pn, p1, half_sobolev, j))
        .collect();
    let eps: Vec<f64> = (j_start as i64..=jmax as i64)
        .map(|j| eps_of(pn, p1, half_sobolev, j))
        .collect();
    let theta = eps.iter().fold(1.0, |acc, e| acc * (1.0 + e));
    // Σ_{j>jmax} ε_j  ≲  N(pN-p1)/8 · Σ_{j>jmax} 2^{-j}, with a factor-2
    // margin on the asymptotic.
    let theta_tail_bound = 2.0 * epsilon_asymptote(p)? * f64::exp2(-(jmax as f64));

    Ok(MoserSchedule {
        n,
        sobolev2star,
        j0,
        j1,
        j_start,
        jmax,
        gamma,
        tau_start: j0,
        tau,
        eps_start: j_start,
        eps,
        theta,
        theta_tail_bound,
        p1,
        pn,
    })
}

/// The limit of `2^j ε_j`, namely `N (p_N - p_1) / 8`.
pub fn epsilon_asymptote(p: &ExponentVector) -> Result<f64> {
    if p.dim() < 3 {
        return Err(Error::InvalidParameter {
            name: "p",
            reason: format!("asymptote needs N >= 3, got N = {}", p.dim()),
        });
    }
    Ok(p.dim() as f64 * (p.max_exponent() - p.min_exponent()) / 8.0)
}

/// Midpoint of the admissible interval `(θ^{1/α0}, 1)` for the free
/// parameter of [`iteration_lemma_bound`].
pub fn default_lambda(theta: f64, alpha0: f64) -> f64 {
    (1.0 + theta.powf(1.0 / alpha0)) / 2.0
}

/// Closed-form bound for a bounded `Z` satisfying, for `r ≤ t < s ≤ R`,
/// `Z(t) ≤ A/(s-t)^α0 + B/(s-t)^β0 + C + θ Z(s)` with `θ < 1`:
///
/// `Z(r) ≤ (1-λ)^{-α0} · λ^{α0}/(λ^{α0}-θ) · [A/(R-r)^{α0} + B/(R-r)^{β0} + C]`
///
/// for any `λ` with `θ^{1/α0} < λ < 1`.
#[allow(clippy::too_many_arguments)]
pub fn iteration_lemma_bound(
    a: f64,
    b: f64,
    c: f64,
    alpha0: f64,
    beta0: f64,
    theta: f64,
    lambda: f64,
    r: f64,
    big_r: f64,
) -> Result<f64> {
    for (name, v) in [("A", a), ("B", b), ("Cc", c)] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidParameter {
                name,
                reason: format!("must be a finite real >= 0, got {v}"),
            });
        }
    }
    if !(beta0 > 0.0 && alpha0 >= beta0) {
        return Err(Error::InvalidParameter {
            name: "alpha0",
            reason: format!("need alpha0 >= beta0 > 0, got alpha0 = {alpha0}, beta0 = {beta0}"),
        });
    }
    if !(0.0..1.0).contains(&theta) {
        return Err(Error::InvalidParameter {
            name: "theta",
            reason: format!("must lie in [0, 1), got {theta}"),
        });
    }
    let lambda_min = theta.powf(1.0 / alpha0);
    if !(lambda > lambda_min && lambda < 1.0) {
        return Err(Error::InvalidParameter {
            name: "lambda",
            reason: format!("must lie in (theta^(1/alpha0), 1) = ({lambda_min}, 1), got {lambda}"),
        });
    }
    if !(r >= 0.0 && big_r > r) {
        return Err(Error::InvalidParameter {
            name: "r",
            reason: format!("need 0 <= r < R, got r = {r}, R = {big_r}"),
        });
    }
    let gap = big_r - r;
    let la = lambda.powf(alpha0);
    let prefactor = (1.0 - lambda).powf(-alpha0) * la / (la - theta);
    Ok(prefactor * (a / gap.powf(alpha0) + b / gap.powf(beta0) + c))
}
