//! Slack-variable barrier formulation.
//!
//! The inequality-constrained problem is rewritten with slacks s > 0 and a
//! log barrier, working on the combined primal vector z = (x, s). Derivatives
//! are slack-scaled: the barrier gradient carries a constant −μ block and the
//! constraint Jacobian carries diag(s) as its slack block, so the Jacobian
//! has full row rank whenever the slacks are positive.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::problem::NoisyEvaluation;

/// Floor applied to slacks after a reset; keeps log(s) finite when the
/// componentwise max lands exactly on zero in floating point.
pub const SLACK_FLOOR: f64 = 1e-12;

/// Primal-dual iterate of the barrier subproblem.
#[derive(Debug, Clone)]
pub struct BarrierState {
    pub x: DVector<f64>,
    /// Slacks, strictly positive at all times.
    pub s: DVector<f64>,
    /// Multiplier estimate for the slack equality constraint.
    pub y: DVector<f64>,
    /// Merit parameter; positive and nonincreasing across iterations.
    pub tau: f64,
    /// Barrier parameter.
    pub mu: f64,
    /// Iteration counter.
    pub k: u64,
}

/// Barrier-scaled quantities at a point, assembled from one evaluation:
/// objective f = f₀ − μ Σ log sᵢ, residual c = c_I + s, gradient
/// g = [g₀; −μe], Jacobian J = [J_I  diag(s)].
#[derive(Debug, Clone)]
pub struct ScaledSystem {
    pub f: f64,
    pub c: DVector<f64>,
    pub g: DVector<f64>,
    pub j: DMatrix<f64>,
    pub n: usize,
    pub q: usize,
}

impl ScaledSystem {
    /// ‖Jᵀc‖, the infeasibility stationarity measure.
    pub fn jt_c_norm(&self) -> f64 {
        (self.j.transpose() * &self.c).norm()
    }
}

/// Build the scaled system from a served evaluation, slacks and barrier
/// parameter. Fails if any slack is outside the barrier domain.
pub fn assemble(eval: &NoisyEvaluation, s: &DVector<f64>, mu: f64) -> Result<ScaledSystem> {
    if mu <= 0.0 || !mu.is_finite() {
        return Err(Error::InvalidArgument(format!("mu must be positive, got {mu}")));
    }
    let q = s.len();
    let n = eval.g0.len();
    for (i, &si) in s.iter().enumerate() {
        if si <= 0.0 || !si.is_finite() {
            return Err(Error::BarrierDomain { index: i, value: si });
        }
    }

    let log_term: f64 = s.iter().map(|v| v.ln()).sum();
    let f = eval.f0 - mu * log_term;
    let c = &eval.c_i + s;

    let mut g = DVector::<f64>::zeros(n + q);
    g.rows_mut(0, n).copy_from(&eval.g0);
    g.rows_mut(n, q).fill(-mu);

    let mut j = DMatrix::<f64>::zeros(q, n + q);
    j.view_mut((0, 0), (q, n)).copy_from(&eval.j_i);
    for i in 0..q {
        j[(i, n + i)] = s[i];
    }

    if !f.is_finite() || c.iter().any(|v| !v.is_finite()) || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("assembled barrier system"));
    }
    Ok(ScaledSystem { f, c, g, j, n, q })
}

/// Barrier objective at (f₀, s): f₀ − μ Σ log sᵢ.
pub fn barrier_objective(f0: f64, s: &DVector<f64>, mu: f64) -> f64 {
    f0 - mu * s.iter().map(|v| v.ln()).sum::<f64>()
}

/// Initial slacks: a vector of ones followed by a reset against the served
/// constraint values, so s₀ > 0 and c_I(x₀) + s₀ ≥ 0.
pub fn init_slacks(c_i: &DVector<f64>) -> DVector<f64> {
    let ones = DVector::from_element(c_i.len(), 1.0);
    slack_reset(&ones, c_i, SLACK_FLOOR)
}

/// Componentwise slack reset s ← max{s, −c_I(x₊), s_min}.
///
/// Never decreases a slack and guarantees c_I(x₊) + s ≥ 0 afterwards; the
/// merit function cannot increase under this update.
pub fn slack_reset(s_cand: &DVector<f64>, c_i_next: &DVector<f64>, s_min: f64) -> DVector<f64> {
    DVector::from_fn(s_cand.len(), |i, _| {
        s_cand[i].max(-c_i_next[i]).max(s_min)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn eval_with(f0: f64, g0: Vec<f64>, c: Vec<f64>, j: DMatrix<f64>) -> NoisyEvaluation {
        let n = g0.len();
        NoisyEvaluation {
            f0,
            g0: DVector::from_vec(g0),
            c_i: DVector::from_vec(c),
            j_i: j,
            hess: DMatrix::zeros(n, n),
        }
    }

    #[test]
    fn assemble_definitional_values() {
        // Unit slacks: log term vanishes.
        let ev = eval_with(
            2.0,
            vec![1.0, 2.0],
            vec![0.0, 0.0],
            DMatrix::zeros(2, 2),
        );
        let s = DVector::from_vec(vec![1.0, 1.0]);
        let sys = assemble(&ev, &s, 0.1).unwrap();
        assert_relative_eq!(sys.f, 2.0);
        assert_eq!(sys.g, DVector::from_vec(vec![1.0, 2.0, -0.1, -0.1]));

        let ev = eval_with(0.0, vec![0.0, 0.0], vec![0.0], DMatrix::from_row_slice(1, 2, &[1.0, 0.0]));
        let s = DVector::from_vec(vec![3.0]);
        let sys = assemble(&ev, &s, 0.1).unwrap();
        assert_eq!(sys.j, DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 3.0]));
    }

    #[test]
    fn assemble_rejects_nonpositive_slack() {
        let ev = eval_with(0.0, vec![0.0], vec![0.0], DMatrix::zeros(1, 1));
        let s = DVector::from_vec(vec![0.0]);
        assert!(matches!(
            assemble(&ev, &s, 0.1),
            Err(Error::BarrierDomain { .. })
        ));
    }

    #[test]
    fn assembled_jacobian_has_full_row_rank() {
        // The diag(s) block alone guarantees rank q; check σ_min > 0 even
        // when the constraint block is rank deficient.
        let j_i = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]);
        let ev = eval_with(0.0, vec![0.0, 0.0], vec![0.0, 0.0], j_i);
        let s = DVector::from_vec(vec![0.5, 2.0]);
        let sys = assemble(&ev, &s, 1.0).unwrap();
        let svals = sys.j.svd(false, false).singular_values;
        assert!(svals.iter().all(|&v| v > 0.4));
    }

    #[test]
    fn barrier_objective_decreases_in_each_slack() {
        let mu = 0.3;
        let s = DVector::from_vec(vec![0.5, 1.5, 2.0]);
        let base = barrier_objective(1.0, &s, mu);
        for i in 0..3 {
            let mut sp = s.clone();
            sp[i] *= 1.1;
            assert!(barrier_objective(1.0, &sp, mu) < base);
        }
    }

    #[test]
    fn init_slacks_cases() {
        // Reset active: c = −3 lifts the unit slack to 3, making c + s = 0.
        let s = init_slacks(&DVector::from_vec(vec![-3.0]));
        assert_eq!(s[0], 3.0);
        // Reset inactive.
        let s = init_slacks(&DVector::from_vec(vec![0.5]));
        assert_eq!(s[0], 1.0);
        // Boundary: max{1, 1} = 1, c + s = 0.
        let s = init_slacks(&DVector::from_vec(vec![-1.0]));
        assert_eq!(s[0], 1.0);
    }

    #[test]
    fn slack_reset_examples() {
        let s = slack_reset(
            &DVector::from_vec(vec![0.2]),
            &DVector::from_vec(vec![-0.5]),
            SLACK_FLOOR,
        );
        assert_eq!(s[0], 0.5);
        let s = slack_reset(
            &DVector::from_vec(vec![0.2]),
            &DVector::from_vec(vec![0.3]),
            SLACK_FLOOR,
        );
        assert_eq!(s[0], 0.2);
    }

    proptest! {
        #[test]
        fn slack_reset_never_shrinks_and_restores_nonnegativity(
            s in proptest::collection::vec(1e-9..10.0f64, 1..8),
            c in proptest::collection::vec(-10.0..10.0f64, 8),
        ) {
            let dim = s.len();
            let s_cand = DVector::from_vec(s);
            let c_next = DVector::from_vec(c[..dim].to_vec());
            let out = slack_reset(&s_cand, &c_next, SLACK_FLOOR);
            for i in 0..dim {
                prop_assert!(out[i] >= s_cand[i]);
                prop_assert!(out[i] >= SLACK_FLOOR);
                prop_assert!(c_next[i] + out[i] >= 0.0);
            }
        }
    }
}
