//! The multiply-recursive integrability exponents.
//!
//! For a fixed outer index `j ∈ {2, …, N}`, the vector
//! `(β_{j-1}^{(ℓ)}, …, β_N^{(ℓ)})` starts from
//!
//! - `β_{j-1}^{(0)} = p_{j-1} · min{q_{j-2}, q_{j-1} q_N}`,
//! - `β_i^{(0)} = p_i · q_{j-1}` for `i ≥ j`,
//!
//! and advances one level by a downward sweep `i = N, N-1, …, j-1` in which
//! each component takes
//!
//! `β_i^{(ℓ+1)} = p_i · min{q_{j-2}, β_k^{(ℓ)}/(p_k-2) for k < i,
//!                          β_k^{(ℓ+1)}/(p_k-2) for k > i}`
//!
//! with the `+∞` convention for `p_k = 2`. Each component is non-decreasing
//! in `ℓ`, capped by `p_i q_{j-2}`, and the whole vector stabilizes at that
//! cap after finitely many levels; the trace records the first such level
//! `ℓ0` and the per-level progress statistic `δ^{(ℓ)} = min_k β_k^{(ℓ)}/p_k`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exponents::{compute_q_sequence, ExponentVector, ExtendedReal, QSequence};

/// Relative tolerance for fixpoint detection; the `min` selections become
/// exact once they pick `q_{j-2}`, but quotient chains pass through general
/// floating products first.
pub const STABILIZATION_RTOL: f64 = 1e-12;

/// One level of the recursion: components `β_i` for `i = j-1, …, N` together
/// with the fixpoint target `p_i q_{j-2}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaState {
    pub j: usize,
    pub level: usize,
    pub beta: Vec<f64>,
    pub target: Vec<f64>,
    pub stabilized: bool,
}

impl BetaState {
    /// Smallest component index carried by the state (`j - 1`).
    pub fn first_index(&self) -> usize {
        self.j - 1
    }

    /// Component `β_i` by its 1-based index `i ∈ {j-1, …, N}`.
    pub fn component(&self, i: usize) -> f64 {
        self.beta[i - self.first_index()]
    }

    /// `δ = min_k β_k / p_k`.
    pub fn delta(&self, p: &ExponentVector) -> f64 {
        let lo = self.first_index();
        self.beta
            .iter()
            .enumerate()
            .map(|(k, &b)| b / p.at(lo + k))
            .fold(f64::INFINITY, f64::min)
    }

    fn at_target(&self) -> bool {
        self.beta
            .iter()
            .zip(&self.target)
            .all(|(&b, &t)| (b - t).abs() <= STABILIZATION_RTOL * t)
    }
}

/// The full iteration record from level 0 to stabilization.
#[derive(Debug, Clone, Serialize)]
pub struct BetaTrace {
    pub ell0: usize,
    pub delta: Vec<f64>,
    pub states: Vec<BetaState>,
}

fn validate_inputs(p: &ExponentVector, q: &QSequence, j: usize) -> Result<()> {
    if !(2..=p.dim()).contains(&j) {
        return Err(Error::InvalidParameter {
            name: "j",
            reason: format!("must lie in {{2, …, N = {}}}, got {j}", p.dim()),
        });
    }
    if q.q.len() != p.dim() {
        return Err(Error::InvalidParameter {
            name: "q",
            reason: format!(
                "sequence has {} entries but p has dimension {}",
                q.q.len(),
                p.dim()
            ),
        });
    }
    Ok(())
}

/// Level-0 state; `q_{j-2}` means `q0` when `j = 2`.
pub fn beta_init(p: &ExponentVector, q: &QSequence, j: usize) -> Result<BetaState> {
    validate_inputs(p, q, j)?;
    let n = p.dim();
    let q_cap = q.at(j - 2);
    let q_prev = q.at(j - 1);
    let q_n = q.last();

    let mut beta = Vec::with_capacity(n - j + 2);
    beta.push(p.at(j - 1) * q_cap.min(q_prev * q_n));
    for i in j..=n {
        beta.push(p.at(i) * q_prev);
    }
    let target = (j - 1..=n).map(|i| p.at(i) * q_cap).collect();

    let mut state = BetaState {
        j,
        level: 0,
        beta,
        target,
        stabilized: false,
    };
    state.stabilized = state.at_target();
    Ok(state)
}

/// Quotient `β_k/(p_k - 2)` with the `+∞` convention for `p_k = 2`.
fn quotient(beta_k: f64, p_k: f64) -> ExtendedReal {
    if p_k <= 2.0 {
        ExtendedReal::INFINITY
    } else {
        ExtendedReal::new(beta_k / (p_k - 2.0))
    }
}

/// One downward sweep `i = N, …, j-1`: stale quotients for `k < i`, fresh
/// ones for `k > i`. The output dominates the input componentwise.
pub fn beta_step(state: &BetaState, p: &ExponentVector, q: &QSequence) -> Result<BetaState> {
    validate_inputs(p, q, state.j)?;
    let n = p.dim();
    let j = state.j;
    let lo = j - 1;
    let q_cap = q.at(j - 2);

    let mut fresh = state.beta.clone();
    for i in (lo..=n).rev() {
        let mut m = ExtendedReal::new(q_cap);
        for k in lo..i {
            m = m.min(quotient(state.beta[k - lo], p.at(k)));
        }
        for k in (i + 1)..=n {
            m = m.min(quotient(fresh[k - lo], p.at(k)));
        }
        fresh[i - lo] = p.at(i) * m.value();
    }

    let mut next = BetaState {
        j,
        level: state.level + 1,
        beta: fresh,
        target: state.target.clone(),
        stabilized: false,
    };
    next.stabilized = next.at_target();
    Ok(next)
}

/// Iterates [`beta_step`] from the level-0 state until the vector equals its
/// target, recording `δ^{(ℓ)}` along the way. Non-stabilization within
/// `max_levels` is an error: finiteness is guaranteed, so hitting the cap
/// signals a tolerance or input problem.
pub fn beta_run(
    p: &ExponentVector,
    q0: f64,
    j: usize,
    max_levels: usize,
) -> Result<BetaTrace> {
    if max_levels == 0 {
        return Err(Error::InvalidParameter {
            name: "max_levels",
            reason: "must be at least 1".into(),
        });
    }
    let q = compute_q_sequence(p, q0)?;
    let mut state = beta_init(p, &q, j)?;
    let mut delta = vec![state.delta(p)];
    let mut states = vec![state.clone()];

    while !state.stabilized {
        if state.level >= max_levels {
            let gap = state
                .beta
                .iter()
                .zip(&state.target)
                .map(|(b, t)| (t - b).abs())
                .fold(0.0, f64::max);
            return Err(Error::NotStabilized {
                levels: max_levels,
                gap,
            });
        }
        state = beta_step(&state, p, &q)?;
        delta.push(state.delta(p));
        states.push(state.clone());
    }

    Ok(BetaTrace {
        ell0: state.level,
        delta,
        states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pvec(p: &[f64]) -> ExponentVector {
        ExponentVector::new(p.to_vec()).unwrap()
    }

    fn setup(p: &[f64], q0: f64) -> (ExponentVector, QSequence) {
        let p = pvec(p);
        let q = compute_q_sequence(&p, q0).unwrap();
        (p, q)
    }

    #[test]
    fn init_examples() {
        // q = (2,2,2); already at target p_i * q0
        let (p, q) = setup(&[3.0, 3.0, 4.0], 2.0);
        let s = beta_init(&p, &q, 2).unwrap();
        assert_eq!(s.beta, vec![6.0, 6.0, 8.0]);
        assert_eq!(s.target, vec![6.0, 6.0, 8.0]);
        assert!(s.stabilized);

        // q = (2, 10/9); beta_1 = 4*min{10, 20/9} = 80/9, beta_2 = 20*2 = 40
        let (p, q) = setup(&[4.0, 20.0], 10.0);
        let s = beta_init(&p, &q, 2).unwrap();
        assert_relative_eq!(s.beta[0], 80.0 / 9.0, max_relative = 1e-14);
        assert_relative_eq!(s.beta[1], 40.0);
        assert!(!s.stabilized);

        // all p_i = 2: every component is 2*q0
        let (p, q) = setup(&[2.0, 2.0, 2.0, 2.0], 5.0);
        let s = beta_init(&p, &q, 3).unwrap();
        assert!(s.beta.iter().all(|&b| b == 10.0));
        assert!(s.stabilized);
    }

    #[test]
    fn init_rejects_bad_j() {
        let (p, q) = setup(&[2.0, 3.0], 2.0);
        assert!(beta_init(&p, &q, 1).is_err());
        assert!(beta_init(&p, &q, 3).is_err());
    }

    #[test]
    fn step_examples() {
        // (80/9, 40) -> (3200/162, 800/9)
        let (p, q) = setup(&[4.0, 20.0], 10.0);
        let s0 = beta_init(&p, &q, 2).unwrap();
        let s1 = beta_step(&s0, &p, &q).unwrap();
        assert_relative_eq!(s1.beta[1], 800.0 / 9.0, max_relative = 1e-14);
        assert_relative_eq!(s1.beta[0], 3200.0 / 162.0, max_relative = 1e-14);
        assert_eq!(s1.level, 1);

        // a state at target maps to itself
        let (p, q) = setup(&[3.0, 5.0, 9.0], 3.0);
        let mut s = beta_init(&p, &q, 2).unwrap();
        s.beta = s.target.clone();
        s.stabilized = true;
        let next = beta_step(&s, &p, &q).unwrap();
        assert_eq!(next.beta, s.target);

        // fixpoint already at level 0
        let (p, q) = setup(&[3.0, 3.0, 4.0], 2.0);
        let s0 = beta_init(&p, &q, 2).unwrap();
        let s1 = beta_step(&s0, &p, &q).unwrap();
        assert_eq!(s1.beta, vec![6.0, 6.0, 8.0]);
    }

    #[test]
    fn run_pinned_case() {
        // levels: (80/9, 40) -> (~19.753, ~88.889) -> (40, ~197.53) -> (40, 200)
        let p = pvec(&[4.0, 20.0]);
        let trace = beta_run(&p, 10.0, 2, 100).unwrap();
        assert_eq!(trace.ell0, 3);
        let last = trace.states.last().unwrap();
        assert_relative_eq!(last.beta[0], 40.0, max_relative = 1e-12);
        assert_relative_eq!(last.beta[1], 200.0, max_relative = 1e-12);
        assert_eq!(trace.delta.len(), 4);
    }

    #[test]
    fn run_with_quadratic_directions() {
        // +inf quotients for p_1 = 2 never bind
        let p = pvec(&[2.0, 6.0, 6.0]);
        let trace = beta_run(&p, 4.0, 2, 100).unwrap();
        assert_eq!(trace.ell0, 0);
        assert_eq!(trace.states[0].beta, vec![8.0, 24.0, 24.0]);
    }

    #[test]
    fn run_standard_growth() {
        // with q0 below the squared conjugate quotient, stabilization takes
        // at most one level; at larger q0 it still stabilizes, just later
        let mut rng = ChaCha8Rng::seed_from_u64(0xbe7a);
        for _ in 0..50 {
            let n = rng.gen_range(2..=6);
            // p_i <= 6 keeps the squared quotient above the q0 >= 2 floor
            let pi = rng.gen_range(2.0..6.0);
            let p = pvec(&vec![pi; n]);
            let qstar = if pi <= 2.0 { f64::INFINITY } else { pi / (pi - 2.0) };
            let j = rng.gen_range(2..=n);

            let q0_small = 2.0f64.max((qstar * qstar).min(20.0) - 1e-9);
            let trace = beta_run(&p, q0_small, j, 1000).unwrap();
            assert!(trace.ell0 <= 1, "ell0 = {} for p_i = {pi}", trace.ell0);
            let q = compute_q_sequence(&p, q0_small).unwrap();
            for (k, b) in trace.states.last().unwrap().beta.iter().enumerate() {
                assert_relative_eq!(*b, p.at(j - 1 + k) * q.at(j - 2), max_relative = 1e-12);
            }

            let trace = beta_run(&p, 20.0, j, 1000).unwrap();
            let q = compute_q_sequence(&p, 20.0).unwrap();
            for (k, b) in trace.states.last().unwrap().beta.iter().enumerate() {
                assert_relative_eq!(*b, p.at(j - 1 + k) * q.at(j - 2), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn monotone_capped_and_delta_recursion() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for _ in 0..100 {
            let n = rng.gen_range(2..=8);
            let mut pv: Vec<f64> = (0..n).map(|_| rng.gen_range(2.0..40.0)).collect();
            pv.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let p = pvec(&pv);
            let q0 = rng.gen_range(2.0..20.0);
            let j = rng.gen_range(2..=n);
            let q = compute_q_sequence(&p, q0).unwrap();
            let q_cap = q.at(j - 2);
            let q_n = q.last();

            let trace = beta_run(&p, q0, j, 10_000).unwrap();
            for w in trace.states.windows(2) {
                for (a, b) in w[0].beta.iter().zip(&w[1].beta) {
                    assert!(b >= a, "component decreased across a level");
                }
            }
            for s in &trace.states {
                for (k, b) in s.beta.iter().enumerate() {
                    let cap = p.at(j - 1 + k) * q_cap;
                    assert!(*b <= cap * (1.0 + 1e-13), "cap violated: {b} > {cap}");
                }
            }
            for w in trace.delta.windows(2) {
                let floor = q_cap.min(q_n * w[0]);
                assert!(w[1] >= floor - 1e-12 * floor, "delta recursion violated");
            }
        }
    }

    #[test]
    fn sweep_is_a_function_of_the_previous_level() {
        let (p, q) = setup(&[4.0, 7.0, 20.0, 22.0], 10.0);
        let s0 = beta_init(&p, &q, 2).unwrap();
        let s1 = beta_step(&s0, &p, &q).unwrap();
        // recompute each component from scratch with the sweep's own outputs
        let n = p.dim();
        let lo = 1;
        for i in (lo..=n).rev() {
            let mut m = ExtendedReal::new(q.at(0));
            for k in lo..i {
                m = m.min(quotient(s0.beta[k - lo], p.at(k)));
            }
            for k in (i + 1)..=n {
                m = m.min(quotient(s1.beta[k - lo], p.at(k)));
            }
            assert_eq!(p.at(i) * m.value(), s1.beta[i - lo]);
        }
    }

    #[test]
    fn non_stabilization_is_reported() {
        let p = pvec(&[4.0, 20.0]);
        let err = beta_run(&p, 10.0, 2, 2).unwrap_err();
        assert!(matches!(err, Error::NotStabilized { levels: 2, .. }));
    }
}
