//! Shared oracles for the integration tests. These deliberately take
//! different computational routes from the library: the trust-region
//! reference works on the eigendecomposition and bisects the secular
//! equation, and the central-path reference runs a damped Newton method on
//! the barrier optimality system.

use nalgebra::{DMatrix, DVector};
use noisy_ipm::problem::TrueProblem;
use rand_chacha::rand_core::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct SeededRng(pub ChaCha8Rng);

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng(ChaCha8Rng::seed_from_u64(seed))
    }
    pub fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
    pub fn symmetric(&mut self) -> f64 {
        2.0 * self.uniform() - 1.0
    }
}

pub struct TrReference {
    pub value: f64,
    pub t: DVector<f64>,
    pub lambda: f64,
}

pub fn tr_objective(h: &DMatrix<f64>, b: &DVector<f64>, t: &DVector<f64>) -> f64 {
    0.5 * (t.transpose() * h * t)[(0, 0)] + b.dot(t)
}

/// Brute-force reference for min ½tᵀHt + bᵀt, ‖t‖ ≤ delta with H PSD:
/// eigendecompose, try the least-norm interior candidate, otherwise bisect
/// the secular equation Σ βᵢ²/(λᵢ + λ)² = delta² to machine depth.
pub fn tr_reference(h: &DMatrix<f64>, b: &DVector<f64>, delta: f64) -> TrReference {
    let m = h.nrows();
    let eig = h.clone().symmetric_eigen();
    let evals: Vec<f64> = eig.eigenvalues.iter().map(|&v| v.max(0.0)).collect();
    let q = &eig.eigenvectors;
    let beta = q.transpose() * b;

    let max_eig = evals.iter().cloned().fold(0.0f64, f64::max);
    let cut = 1e-12 * max_eig.max(1.0) * m as f64;

    let nb = b.norm();
    if nb == 0.0 || delta == 0.0 {
        return TrReference {
            value: 0.0,
            t: DVector::zeros(m),
            lambda: 0.0,
        };
    }

    let t_of = |lambda: f64| -> DVector<f64> {
        let coeff = DVector::from_fn(m, |i, _| {
            let d = evals[i] + lambda;
            if d > 0.0 {
                -beta[i] / d
            } else {
                0.0
            }
        });
        q * coeff
    };

    // Interior candidate over the numerically nonzero spectrum.
    let t_int = {
        let coeff = DVector::from_fn(m, |i, _| {
            if evals[i] > cut {
                -beta[i] / evals[i]
            } else {
                0.0
            }
        });
        q * coeff
    };
    let null_resid: f64 = (0..m)
        .filter(|&i| evals[i] <= cut)
        .map(|i| beta[i] * beta[i])
        .sum::<f64>()
        .sqrt();
    if null_resid <= 1e-11 * nb && t_int.norm() <= delta {
        let value = tr_objective(h, b, &t_int);
        return TrReference {
            value,
            t: t_int,
            lambda: 0.0,
        };
    }

    let norm_sq = |lambda: f64| -> f64 {
        (0..m)
            .map(|i| {
                let d = evals[i] + lambda;
                (beta[i] / d) * (beta[i] / d)
            })
            .sum()
    };
    let mut lo = 0.0_f64;
    let mut hi = nb / delta * (1.0 + 1e-12);
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if norm_sq(mid) > delta * delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda = 0.5 * (lo + hi);
    let t = t_of(lambda);
    TrReference {
        value: tr_objective(h, b, &t),
        t,
        lambda,
    }
}

pub struct CentralPathPoint {
    pub x: DVector<f64>,
    pub s: DVector<f64>,
    pub y: DVector<f64>,
    pub residual: f64,
}

/// Damped Newton on the barrier optimality system
///
/// ```text
/// g₀(x) + J(x)ᵀy = 0,   S y = μ e,   c(x) + s = 0,   (s, y) > 0
/// ```
///
/// with a fraction-to-the-boundary cap on (s, y) and backtracking on the
/// residual norm. Walks μ down from 10⁻¹ to the target for robustness.
pub fn central_path(problem: &TrueProblem, mu_target: f64, tol: f64) -> Option<CentralPathPoint> {
    let n = problem.n();
    let q = problem.q();
    let mut x = problem.x0().clone();
    let c0 = problem.eval_ci(&x);
    let mut s = DVector::from_fn(q, |i, _| (-c0[i]).max(0.5));
    let mut mu = 1e-1f64.max(mu_target);
    let mut y = DVector::from_fn(q, |i, _| mu / s[i]);

    let residual_at = |x: &DVector<f64>, s: &DVector<f64>, y: &DVector<f64>, mu: f64| {
        let g = problem.eval_g0(x);
        let j = problem.eval_ji(x);
        let c = problem.eval_ci(x);
        let mut f = DVector::<f64>::zeros(n + 2 * q);
        let top = &g + j.transpose() * y;
        for i in 0..n {
            f[i] = top[i];
        }
        for i in 0..q {
            f[n + i] = s[i] * y[i] - mu;
            f[n + q + i] = c[i] + s[i];
        }
        f
    };

    loop {
        let mut converged = false;
        for _ in 0..400 {
            let f = residual_at(&x, &s, &y, mu);
            if f.norm() <= tol {
                converged = true;
                break;
            }
            let j = problem.eval_ji(&x);
            let h = problem
                .eval_lagrangian_hessian(&x, &y)
                .unwrap_or_else(|| DMatrix::zeros(n, n));
            let mut jac = DMatrix::<f64>::zeros(n + 2 * q, n + 2 * q);
            jac.view_mut((0, 0), (n, n)).copy_from(&h);
            jac.view_mut((0, n + q), (n, q)).copy_from(&j.transpose());
            for i in 0..q {
                jac[(n + i, n + i)] = y[i];
                jac[(n + i, n + q + i)] = s[i];
                jac[(n + q + i, n + i)] = 1.0;
            }
            jac.view_mut((n + q, 0), (q, n)).copy_from(&j);
            // Tiny primal regularization keeps LP blocks factorizable.
            for i in 0..n {
                jac[(i, i)] += 1e-12;
            }

            let step = jac.lu().solve(&(-&f))?;
            let dx = step.rows(0, n).into_owned();
            let ds = step.rows(n, q).into_owned();
            let dy = step.rows(n + q, q).into_owned();

            let mut alpha: f64 = 1.0;
            for i in 0..q {
                if ds[i] < 0.0 {
                    alpha = alpha.min(-0.995 * s[i] / ds[i]);
                }
                if dy[i] < 0.0 {
                    alpha = alpha.min(-0.995 * y[i] / dy[i]);
                }
            }
            let f_norm = f.norm();
            let mut accepted = false;
            for _ in 0..40 {
                let xt = &x + alpha * &dx;
                let st = &s + alpha * &ds;
                let yt = &y + alpha * &dy;
                if residual_at(&xt, &st, &yt, mu).norm() <= (1.0 - 1e-4 * alpha) * f_norm {
                    x = xt;
                    s = st;
                    y = yt;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                return None;
            }
        }
        if !converged {
            return None;
        }
        if (mu - mu_target).abs() <= f64::EPSILON * mu_target {
            break;
        }
        mu = (mu * 0.1).max(mu_target);
    }

    let g = problem.eval_g0(&x);
    let j = problem.eval_ji(&x);
    let residual = (&g + j.transpose() * &y).norm();
    Some(CentralPathPoint { x, s, y, residual })
}
