//! Embedded analytic test problems, all in the standard form
//! minimize f₀(x) subject to c(x) ≤ 0, with analytic first derivatives and
//! Lagrangian Hessians.
//!
//! The default suite has twelve problems: eight convex (linear programs,
//! quadratic programs, one smooth exponential), two smooth nonconvex ones,
//! one with a rank-deficient constraint Jacobian at the solution, and one
//! infeasible instance. Known minimizers are recorded where they exist in
//! closed form.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::problem::{ProblemRegistry, TrueProblem};

/// Closed-form reference data for a suite problem.
#[derive(Debug, Clone)]
pub struct Reference {
    pub name: &'static str,
    /// Minimizer of the original problem, when known analytically.
    pub x_star: Option<Vec<f64>>,
    pub convex: bool,
    pub degenerate: bool,
    pub infeasible: bool,
}

/// Names of the default twelve-problem suite.
pub fn default_suite_names() -> Vec<&'static str> {
    vec![
        "bound1d",
        "circle_lp",
        "lp_simplex2",
        "qp_box2",
        "qp_diag5",
        "qp_nd10",
        "lp_band5",
        "exp_sum3",
        "rosenbrock_circle",
        "bilinear_corner",
        "degenerate_sq",
        "infeasible_parabola",
    ]
}

/// Reference table for the default suite.
pub fn references() -> Vec<Reference> {
    vec![
        Reference { name: "bound1d", x_star: Some(vec![1.0]), convex: true, degenerate: false, infeasible: false },
        Reference { name: "circle_lp", x_star: Some(vec![1.0, 0.0]), convex: true, degenerate: false, infeasible: false },
        Reference { name: "lp_simplex2", x_star: Some(vec![0.0, 1.0]), convex: true, degenerate: false, infeasible: false },
        Reference { name: "qp_box2", x_star: Some(vec![1.0, 0.0]), convex: true, degenerate: false, infeasible: false },
        Reference { name: "qp_diag5", x_star: Some(vec![1.0, 1.0, 0.1, -1.0, 0.4]), convex: true, degenerate: false, infeasible: false },
        Reference { name: "qp_nd10", x_star: None, convex: true, degenerate: false, infeasible: false },
        Reference { name: "lp_band5", x_star: None, convex: true, degenerate: false, infeasible: false },
        Reference { name: "exp_sum3", x_star: Some(vec![1.0 / 3.0; 3]), convex: true, degenerate: false, infeasible: false },
        Reference { name: "rosenbrock_circle", x_star: Some(vec![1.0, 1.0]), convex: false, degenerate: false, infeasible: false },
        Reference { name: "bilinear_corner", x_star: Some(vec![1.0, 1.0]), convex: false, degenerate: false, infeasible: false },
        Reference { name: "degenerate_sq", x_star: Some(vec![0.0, 0.0]), convex: false, degenerate: true, infeasible: false },
        Reference { name: "infeasible_parabola", x_star: None, convex: false, degenerate: false, infeasible: true },
    ]
}

/// Names of the convex subset.
pub fn convex_suite_names() -> Vec<&'static str> {
    references()
        .into_iter()
        .filter(|r| r.convex)
        .map(|r| r.name)
        .collect()
}

/// Names of the non-degenerate, feasible subset.
pub fn nondegenerate_suite_names() -> Vec<&'static str> {
    references()
        .into_iter()
        .filter(|r| !r.degenerate && !r.infeasible)
        .map(|r| r.name)
        .collect()
}

/// Registry holding the default suite.
pub fn registry() -> ProblemRegistry {
    let mut reg = ProblemRegistry::new();
    reg.insert(bound1d());
    reg.insert(circle_lp());
    reg.insert(lp_simplex2());
    reg.insert(qp_box2());
    reg.insert(qp_diag5());
    reg.insert(qp_nd10());
    reg.insert(lp_band5());
    reg.insert(exp_sum3());
    reg.insert(rosenbrock_circle());
    reg.insert(bilinear_corner());
    reg.insert(degenerate_sq());
    reg.insert(infeasible_parabola());
    reg
}

/// Fetch one suite problem by name.
pub fn problem(name: &str) -> crate::error::Result<Arc<TrueProblem>> {
    registry().get(name)
}

/// min x s.t. x ≥ 1. Solution x* = 1, y* = 1.
fn bound1d() -> TrueProblem {
    TrueProblem::new(
        "bound1d",
        1,
        1,
        DVector::from_vec(vec![3.0]),
        Box::new(|x| x[0]),
        Box::new(|_| DVector::from_vec(vec![1.0])),
        Box::new(|x| DVector::from_vec(vec![1.0 - x[0]])),
        Box::new(|_| DMatrix::from_row_slice(1, 1, &[-1.0])),
        Some(Box::new(|_, _| DMatrix::zeros(1, 1))),
    )
}

/// min −x₁ s.t. ‖x‖² ≤ 1. Solution (1, 0) with y* = 1/2.
fn circle_lp() -> TrueProblem {
    TrueProblem::new(
        "circle_lp",
        2,
        1,
        DVector::from_vec(vec![0.0, 0.0]),
        Box::new(|x| -x[0]),
        Box::new(|_| DVector::from_vec(vec![-1.0, 0.0])),
        Box::new(|x| DVector::from_vec(vec![x[0] * x[0] + x[1] * x[1] - 1.0])),
        Box::new(|x| DMatrix::from_row_slice(1, 2, &[2.0 * x[0], 2.0 * x[1]])),
        Some(Box::new(|x, y| {
            DMatrix::from_diagonal(&DVector::from_element(x.len(), 2.0 * y[0]))
        })),
    )
}

/// min −x₁ − 2x₂ over the unit simplex. Solution (0, 1).
fn lp_simplex2() -> TrueProblem {
    TrueProblem::new(
        "lp_simplex2",
        2,
        3,
        DVector::from_vec(vec![0.25, 0.25]),
        Box::new(|x| -x[0] - 2.0 * x[1]),
        Box::new(|_| DVector::from_vec(vec![-1.0, -2.0])),
        Box::new(|x| DVector::from_vec(vec![x[0] + x[1] - 1.0, -x[0], -x[1]])),
        Box::new(|_| DMatrix::from_row_slice(3, 2, &[1.0, 1.0, -1.0, 0.0, 0.0, -1.0])),
        Some(Box::new(|x, _| DMatrix::zeros(x.len(), x.len()))),
    )
}

/// min ½‖x − (2, −1)‖² s.t. x₁ ≤ 1, x₂ ≥ 0. Solution (1, 0), y* = (1, 1).
fn qp_box2() -> TrueProblem {
    TrueProblem::new(
        "qp_box2",
        2,
        2,
        DVector::from_vec(vec![0.0, 1.0]),
        Box::new(|x| 0.5 * ((x[0] - 2.0).powi(2) + (x[1] + 1.0).powi(2))),
        Box::new(|x| DVector::from_vec(vec![x[0] - 2.0, x[1] + 1.0])),
        Box::new(|x| DVector::from_vec(vec![x[0] - 1.0, -x[1]])),
        Box::new(|_| DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])),
        Some(Box::new(|x, _| DMatrix::identity(x.len(), x.len()))),
    )
}

/// Separable QP with upper bounds, n = q = 5. Solution min(tᵢ, uᵢ).
fn qp_diag5() -> TrueProblem {
    let t = [2.0, 1.0, 0.5, -1.0, 0.4];
    let u = [1.0, 2.0, 0.1, 0.0, 1.0];
    TrueProblem::new(
        "qp_diag5",
        5,
        5,
        DVector::zeros(5),
        Box::new(move |x| {
            (0..5)
                .map(|i| 0.5 * (i + 1) as f64 * (x[i] - t[i]).powi(2))
                .sum()
        }),
        Box::new(move |x| DVector::from_fn(5, |i, _| (i + 1) as f64 * (x[i] - t[i]))),
        Box::new(move |x| DVector::from_fn(5, |i, _| x[i] - u[i])),
        Box::new(|_| DMatrix::identity(5, 5)),
        Some(Box::new(|_, _| {
            DMatrix::from_diagonal(&DVector::from_fn(5, |i, _| (i + 1) as f64))
        })),
    )
}

/// Convex QP in ten variables with four affine constraints.
fn qp_nd10() -> TrueProblem {
    let n = 10;
    TrueProblem::new(
        "qp_nd10",
        n,
        4,
        DVector::zeros(n),
        Box::new(move |x| 0.5 * (0..n).map(|i| (x[i] - 1.0).powi(2)).sum::<f64>()),
        Box::new(move |x| DVector::from_fn(n, |i, _| x[i] - 1.0)),
        Box::new(move |x| {
            DVector::from_vec(vec![
                x.iter().sum::<f64>() - 2.0,
                x[0] - 0.05,
                -x[1] + 0.01,
                x[2] + x[3] - 0.8,
            ])
        }),
        Box::new(move |_| {
            let mut j = DMatrix::zeros(4, n);
            for c in 0..n {
                j[(0, c)] = 1.0;
            }
            j[(1, 0)] = 1.0;
            j[(2, 1)] = -1.0;
            j[(3, 2)] = 1.0;
            j[(3, 3)] = 1.0;
            j
        }),
        Some(Box::new(move |_, _| DMatrix::identity(n, n))),
    )
}

/// min Σx s.t. Σx ≥ 3 and xᵢ ≥ i/10. Optimal face Σx = 3.
fn lp_band5() -> TrueProblem {
    TrueProblem::new(
        "lp_band5",
        5,
        6,
        DVector::from_element(5, 1.0),
        Box::new(|x| x.iter().sum()),
        Box::new(|_| DVector::from_element(5, 1.0)),
        Box::new(|x| {
            let mut c = DVector::zeros(6);
            c[0] = 3.0 - x.iter().sum::<f64>();
            for i in 0..5 {
                c[i + 1] = (i + 1) as f64 / 10.0 - x[i];
            }
            c
        }),
        Box::new(|_| {
            let mut j = DMatrix::zeros(6, 5);
            for c in 0..5 {
                j[(0, c)] = -1.0;
                j[(c + 1, c)] = -1.0;
            }
            j
        }),
        Some(Box::new(|_, _| DMatrix::zeros(5, 5))),
    )
}

/// min Σ exp(xᵢ) s.t. Σx ≥ 1. Solution xᵢ = 1/3, y* = e^{1/3}.
fn exp_sum3() -> TrueProblem {
    TrueProblem::new(
        "exp_sum3",
        3,
        1,
        DVector::from_element(3, 1.0),
        Box::new(|x| x.iter().map(|v| v.exp()).sum()),
        Box::new(|x| DVector::from_fn(3, |i, _| x[i].exp())),
        Box::new(|x| DVector::from_vec(vec![1.0 - x.iter().sum::<f64>()])),
        Box::new(|_| DMatrix::from_row_slice(1, 3, &[-1.0, -1.0, -1.0])),
        Some(Box::new(|x, _| {
            DMatrix::from_diagonal(&DVector::from_fn(3, |i, _| x[i].exp()))
        })),
    )
}

/// Rosenbrock inside the radius-2 disk; the unconstrained minimizer (1, 1)
/// is interior, the initial gradient is steep enough to exercise scaling.
fn rosenbrock_circle() -> TrueProblem {
    TrueProblem::new(
        "rosenbrock_circle",
        2,
        1,
        DVector::from_vec(vec![-1.2, 1.0]),
        Box::new(|x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)),
        Box::new(|x| {
            DVector::from_vec(vec![
                -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]),
                200.0 * (x[1] - x[0] * x[0]),
            ])
        }),
        Box::new(|x| DVector::from_vec(vec![x[0] * x[0] + x[1] * x[1] - 4.0])),
        Box::new(|x| DMatrix::from_row_slice(1, 2, &[2.0 * x[0], 2.0 * x[1]])),
        Some(Box::new(|x, y| {
            let h11 = 2.0 - 400.0 * (x[1] - 3.0 * x[0] * x[0]);
            let h12 = -400.0 * x[0];
            DMatrix::from_row_slice(
                2,
                2,
                &[h11 + 2.0 * y[0], h12, h12, 200.0 + 2.0 * y[0]],
            )
        })),
    )
}

/// min −x₁x₂ on the triangle x ≥ 0, x₁ + x₂ ≤ 2. Solution (1, 1) with an
/// indefinite Hessian, exercising the inertia correction.
fn bilinear_corner() -> TrueProblem {
    TrueProblem::new(
        "bilinear_corner",
        2,
        3,
        DVector::from_vec(vec![0.5, 0.5]),
        Box::new(|x| -x[0] * x[1]),
        Box::new(|x| DVector::from_vec(vec![-x[1], -x[0]])),
        Box::new(|x| DVector::from_vec(vec![x[0] + x[1] - 2.0, -x[0], -x[1]])),
        Box::new(|_| DMatrix::from_row_slice(3, 2, &[1.0, 1.0, -1.0, 0.0, 0.0, -1.0])),
        Some(Box::new(|_, _| {
            DMatrix::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 0.0])
        })),
    )
}

/// Feasible set {x₁ = 0} written as x₁² ≤ 0, so the constraint gradient
/// vanishes at every feasible point and no constraint qualification holds.
fn degenerate_sq() -> TrueProblem {
    TrueProblem::new(
        "degenerate_sq",
        2,
        1,
        DVector::from_vec(vec![0.5, 0.5]),
        Box::new(|x| (x[0] - 1.0).powi(2) + x[1] * x[1]),
        Box::new(|x| DVector::from_vec(vec![2.0 * (x[0] - 1.0), 2.0 * x[1]])),
        Box::new(|x| DVector::from_vec(vec![x[0] * x[0]])),
        Box::new(|x| DMatrix::from_row_slice(1, 2, &[2.0 * x[0], 0.0])),
        Some(Box::new(|_, y| {
            DMatrix::from_row_slice(2, 2, &[2.0 + 2.0 * y[0], 0.0, 0.0, 2.0])
        })),
    )
}

/// min x s.t. x² + 1 ≤ 0: infeasible everywhere; the infeasibility measure
/// is stationary at x = 0.
fn infeasible_parabola() -> TrueProblem {
    TrueProblem::new(
        "infeasible_parabola",
        1,
        1,
        DVector::from_vec(vec![2.0]),
        Box::new(|x| x[0]),
        Box::new(|_| DVector::from_vec(vec![1.0])),
        Box::new(|x| DVector::from_vec(vec![x[0] * x[0] + 1.0])),
        Box::new(|x| DMatrix::from_row_slice(1, 1, &[2.0 * x[0]])),
        Some(Box::new(|_, y| DMatrix::from_row_slice(1, 1, &[2.0 * y[0]]))),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::max_derivative_deviation;
    use crate::testrng::TestRng;

    #[test]
    fn default_suite_has_twelve_problems() {
        let reg = registry();
        assert_eq!(reg.names().len(), 12);
        for name in default_suite_names() {
            assert!(reg.get(name).is_ok(), "{name} missing");
        }
        assert!(convex_suite_names().len() >= 6);
        assert_eq!(nondegenerate_suite_names().len(), 10);
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let reg = registry();
        let mut rng = TestRng::new(2024);
        for p in reg.iter() {
            let points: Vec<DVector<f64>> = (0..5)
                .map(|_| {
                    DVector::from_fn(p.n(), |i, _| {
                        p.x0()[i] + 0.3 * (2.0 * rng.uniform() - 1.0)
                    })
                })
                .collect();
            let dev = max_derivative_deviation(p, &points, 1e-6);
            assert!(
                dev <= 1e-6,
                "{}: derivative deviation {dev:.3e}",
                p.name()
            );
        }
    }

    #[test]
    fn lagrangian_hessians_match_finite_differences_of_gradient() {
        let reg = registry();
        let mut rng = TestRng::new(77);
        let h = 1e-6;
        for p in reg.iter() {
            let y = DVector::from_fn(p.q(), |_, _| 0.5 + rng.uniform());
            let x = DVector::from_fn(p.n(), |i, _| p.x0()[i] + 0.2 * (2.0 * rng.uniform() - 1.0));
            let hess = p.eval_lagrangian_hessian(&x, &y).expect("suite problems carry Hessians");
            let lag_grad = |x: &DVector<f64>| p.eval_g0(x) + p.eval_ji(x).transpose() * &y;
            for k in 0..p.n() {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += h;
                xm[k] -= h;
                let col = (lag_grad(&xp) - lag_grad(&xm)) / (2.0 * h);
                for r in 0..p.n() {
                    assert!(
                        (col[r] - hess[(r, k)]).abs() <= 2e-4 * (1.0 + hess[(r, k)].abs()),
                        "{}: H[{r},{k}] {} vs fd {}",
                        p.name(),
                        hess[(r, k)],
                        col[r]
                    );
                }
            }
        }
    }

    #[test]
    fn known_minimizers_satisfy_first_order_conditions() {
        let reg = registry();
        for r in references() {
            let Some(xs) = r.x_star else { continue };
            let p = reg.get(r.name).unwrap();
            let x = DVector::from_vec(xs);
            let c = p.eval_ci(&x);
            assert!(
                c.iter().all(|&v| v <= 1e-9),
                "{}: x* infeasible, c = {c:?}",
                r.name
            );
            if r.degenerate {
                // No constraint qualification: a multiplier need not exist.
                continue;
            }
            // Stationarity of the Lagrangian with some nonnegative multiplier:
            // solve the least-squares multiplier fit on the active set.
            let g = p.eval_g0(&x);
            let j = p.eval_ji(&x);
            let active: Vec<usize> = (0..p.q()).filter(|&i| c[i] >= -1e-6).collect();
            if active.is_empty() {
                assert!(g.norm() <= 1e-8, "{}: interior x* not stationary", r.name);
                continue;
            }
            let ja = DMatrix::from_fn(active.len(), p.n(), |r_, c_| j[(active[r_], c_)]);
            let jat = ja.transpose();
            let y = (&ja * &jat)
                .lu()
                .solve(&(&ja * -&g))
                .expect("active Jacobian has full row rank on these instances");
            let resid = (&g + jat * &y).norm();
            assert!(
                resid <= 1e-8,
                "{}: KKT residual {resid:.3e} at x*",
                r.name
            );
            assert!(y.iter().all(|&v| v >= -1e-8), "{}: y = {y:?}", r.name);
        }
    }
}
