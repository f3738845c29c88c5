//! Step computation: normal step, tangential step, multipliers.
//!
//! The normal step reduces linearized infeasibility inside a trust region
//! whose radius scales with ‖Jᵀc‖, solved with a Moré-Sorensen iteration on
//! the positive semidefinite model Hessian JᵀJ. The full step and new
//! multipliers come from the saddle-point system
//!
//! ```text
//! [ W  Jᵀ ] [ d  ]   [ −g ]
//! [ J  0  ] [ y₊ ] = [ Jv ]
//! ```
//!
//! where W = blkdiag(H, Σ) is made sufficiently positive definite on null(J)
//! by adding multiples of the identity until the factorization's inertia is
//! right. The tangential step u = d − v then lies in null(J) and keeps the
//! normal step's feasibility gain.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::barrier::ScaledSystem;
use crate::error::{Error, Result};
use crate::linalg::LdlFactors;

/// Relative tolerance for trust-region certificates.
pub const TOL_TR: f64 = 1e-8;
/// Relative tolerance for the saddle-point residuals.
pub const TOL_KKT: f64 = 1e-8;
/// Strictness threshold on the factorization's positive pivots.
pub const PD_TOL: f64 = 1e-10;
/// First diagonal shift tried when the inertia is wrong.
pub const SHIFT_MIN: f64 = 1e-8;
/// Largest shift before the iteration is declared failed.
pub const SHIFT_MAX: f64 = 1e8;
/// Multiplier clamp for the slack curvature block Σ.
pub const KAPPA_SIGMA: f64 = 1e10;

/// Normal-step result.
#[derive(Debug, Clone)]
pub struct TrustRegionResult {
    pub v: DVector<f64>,
    pub on_boundary: bool,
    /// Multiplier of the trust-region constraint.
    pub lambda: f64,
    /// ‖c + Jv‖ at the step.
    pub predicted_residual: f64,
}

/// Full-step result.
#[derive(Debug, Clone)]
pub struct KktResult {
    /// Full step d = v + u, split (dˣ, dˢ).
    pub d: DVector<f64>,
    /// Tangential component, in null(J).
    pub u: DVector<f64>,
    pub y_next: DVector<f64>,
    /// W after any diagonal modification.
    pub w_used: DMatrix<f64>,
    /// Shift δ ≥ 0 that was added to W's diagonal.
    pub modification_shift: f64,
}

/// Minimize ½ tᵀHt + bᵀt subject to ‖t‖ ≤ delta for symmetric positive
/// semidefinite H.
///
/// Returns (t, λ) satisfying (H + λI) t = −b with λ ≥ 0 and λ(‖t‖ − delta) ≈ 0.
/// When the unconstrained minimizer set meets the ball the least-norm
/// minimizer (pseudoinverse solution) is returned with λ = 0; otherwise a
/// safeguarded Newton iteration on the boundary equation ‖t(λ)‖ = delta is
/// run with Cholesky factorizations of H + λI.
pub fn solve_trust_region(
    h: &DMatrix<f64>,
    b: &DVector<f64>,
    delta: f64,
) -> Result<(DVector<f64>, f64)> {
    let m = h.nrows();
    if h.ncols() != m || b.len() != m {
        return Err(Error::InvalidArgument(format!(
            "trust region: H is {}x{}, b has length {}",
            h.nrows(),
            h.ncols(),
            b.len()
        )));
    }
    if !delta.is_finite() || delta < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "trust region radius must be finite and nonnegative, got {delta}"
        )));
    }
    if h.iter().any(|v| !v.is_finite()) || b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("trust region inputs"));
    }

    let nb = b.norm();
    if nb == 0.0 || delta == 0.0 {
        return Ok((DVector::zeros(m), 0.0));
    }

    let scale = h.amax().max(1.0);

    // Fast path: H positive definite and the Newton point inside the ball.
    if let Some(chol) = Cholesky::new(h.clone()) {
        let t = chol.solve(&(-b));
        if t.norm() <= delta * (1.0 + 1e-12) {
            return Ok((t, 0.0));
        }
    } else {
        // Singular H: least-norm candidate via the pseudoinverse. If b is
        // consistent with range(H) and the candidate fits, it is the answer;
        // in the numerical gray zone the certificate still holds at the
        // returned point because the cut residual is itself below tolerance.
        let svd = h.clone().svd(true, true);
        let rank_tol = 1e-12 * scale * m as f64;
        let t_ln = pinv_apply(&svd, &(-b), rank_tol);
        let consistency = (h * &t_ln + b).norm();
        if consistency <= 1e-8 * (nb + scale * t_ln.norm())
            && t_ln.norm() <= delta * (1.0 + 1e-12)
        {
            return Ok((t_ln, 0.0));
        }
    }

    // Boundary case: find λ with ‖t(λ)‖ = delta, t(λ) = −(H + λI)⁻¹b. The
    // root lies in (0, ‖b‖/delta]; safeguarded Newton with Cholesky solves.
    // λ is kept above a rounding floor; if the bracket collapses onto the
    // floor the ball constraint is numerically inactive there and t(floor)
    // already carries a clean certificate.
    let lambda_floor = 1e-14 * scale;
    let mut lo = 0.0_f64;
    let mut hi = nb / delta;
    let mut lambda = (0.5 * hi).max(lambda_floor);
    let mut best: Option<(DVector<f64>, f64, f64)> = None;
    for _ in 0..300 {
        let shifted = {
            let mut a = h.clone();
            for i in 0..m {
                a[(i, i)] += lambda;
            }
            a
        };
        let chol = match Cholesky::new(shifted) {
            Some(c) => c,
            None => {
                // λ below the rounding level of H; move the bracket up.
                lo = lambda;
                lambda = if hi > lo { 0.5 * (lo + hi) } else { lambda * 10.0 };
                continue;
            }
        };
        let t = chol.solve(&(-b));
        let nt = t.norm();
        let gap = nt - delta;
        let better = match &best {
            Some((_, _, g)) => gap.abs() < g.abs(),
            None => true,
        };
        if better {
            best = Some((t.clone(), lambda, gap));
        }
        if gap.abs() <= 1e-12 * delta.max(1.0) {
            return Ok((t, lambda));
        }
        if gap < 0.0 && lambda <= lambda_floor * 2.0 {
            // Interior-grazing: no root above the floor.
            return Ok((t, lambda));
        }
        if nt > delta {
            lo = lambda;
        } else {
            hi = lambda;
        }
        // Newton step on 1/‖t(λ)‖ − 1/delta using q = L⁻¹t.
        let q = chol.l_dirty().solve_lower_triangular(&t).ok_or_else(|| {
            Error::Internal("trust region: triangular solve failed".into())
        })?;
        let nq = q.norm();
        let mut next = lambda + (nt / nq).powi(2) * (gap / delta);
        if !(next > lo && next < hi) || !next.is_finite() {
            next = if lo > 0.0 {
                (lo * hi).sqrt()
            } else {
                0.5 * (lo + hi)
            };
        }
        lambda = next.max(lambda_floor);
    }
    let (t, lambda, gap) = best.ok_or_else(|| {
        Error::Internal("trust region: no factorizable shift found".into())
    })?;
    if gap.abs() <= 1e-6 * delta.max(1.0) {
        Ok((t, lambda))
    } else {
        Err(Error::Internal(format!(
            "trust region: boundary equation not solved, residual {gap:.3e}"
        )))
    }
}

fn pinv_apply(
    svd: &nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>,
    rhs: &DVector<f64>,
    tol: f64,
) -> DVector<f64> {
    let u = svd.u.as_ref().expect("svd computed with u");
    let v_t = svd.v_t.as_ref().expect("svd computed with v_t");
    let mut coeffs = u.transpose() * rhs;
    for (i, c) in coeffs.iter_mut().enumerate() {
        let s = svd.singular_values[i];
        *c = if s > tol { *c / s } else { 0.0 };
    }
    v_t.transpose() * coeffs
}

/// Normal step: minimize ½‖c + Jv‖² over v ∈ range(Jᵀ) with ‖v‖ ≤ ω‖Jᵀc‖.
///
/// Solved in v-space on (JᵀJ, Jᵀc); the least-norm convention keeps v in
/// range(Jᵀ), and in the boundary case (JᵀJ + λI)⁻¹Jᵀ = Jᵀ(JJᵀ + λI)⁻¹ does
/// the same. A zero radius returns v = 0 and lets the driver handle
/// termination.
pub fn normal_step(sys: &ScaledSystem, omega: f64) -> Result<TrustRegionResult> {
    if omega <= 0.0 || !omega.is_finite() {
        return Err(Error::InvalidArgument(format!("omega must be positive, got {omega}")));
    }
    let jt_c = sys.j.transpose() * &sys.c;
    let radius = omega * jt_c.norm();
    if radius == 0.0 {
        return Ok(TrustRegionResult {
            v: DVector::zeros(sys.n + sys.q),
            on_boundary: false,
            lambda: 0.0,
            predicted_residual: sys.c.norm(),
        });
    }
    let h = sys.j.transpose() * &sys.j;
    let (v_raw, lambda) = solve_trust_region(&h, &jt_c, radius)?;
    // Re-project onto range(Jᵀ): the exact solution lives there, and the
    // projection strips rounding spill from near-stationary instances
    // without touching Jv or the trust-region certificate.
    let jjt = &sys.j * sys.j.transpose();
    let v = match Cholesky::new(jjt.clone()) {
        Some(chol) => sys.j.transpose() * chol.solve(&(&sys.j * &v_raw)),
        None => match jjt.lu().solve(&(&sys.j * &v_raw)) {
            Some(w) => sys.j.transpose() * w,
            None => v_raw,
        },
    };
    let predicted_residual = (&sys.c + &sys.j * &v).norm();
    Ok(TrustRegionResult {
        on_boundary: lambda > 0.0 || v.norm() >= radius * (1.0 - 1e-9),
        lambda,
        predicted_residual,
        v,
    })
}

/// Assemble W = blkdiag(H, Σ) with Σᵢᵢ = sᵢ · clamp(yᵢ, μ/(κ_σ sᵢ), κ_σ μ/sᵢ),
/// the primal-dual choice with the usual safeguard keeping each Σᵢᵢ inside
/// [μ/κ_σ, κ_σ μ].
pub fn build_w(
    h_noisy: &DMatrix<f64>,
    s: &DVector<f64>,
    y: &DVector<f64>,
    mu: f64,
    kappa_sigma: f64,
) -> DMatrix<f64> {
    let n = h_noisy.nrows();
    let q = s.len();
    let mut w = DMatrix::<f64>::zeros(n + q, n + q);
    w.view_mut((0, 0), (n, n)).copy_from(h_noisy);
    // Symmetrize the Hessian block; noise is added per entry upstream only
    // on the diagonal but user Hessians may carry rounding skew.
    for i in 0..n {
        for jj in 0..i {
            let v = 0.5 * (w[(i, jj)] + w[(jj, i)]);
            w[(i, jj)] = v;
            w[(jj, i)] = v;
        }
    }
    for i in 0..q {
        let lo = mu / (kappa_sigma * s[i]);
        let hi = kappa_sigma * mu / s[i];
        let y_clamped = y[i].clamp(lo, hi);
        w[(n + i, n + i)] = s[i] * y_clamped;
    }
    w
}

/// Saddle-point solve with inertia correction.
///
/// Factors [[W + δI, Jᵀ], [J, 0]] with a symmetric-indefinite LDLᵀ and checks
/// that the block-diagonal factor has n+q positive eigenvalues of size at
/// least `pd_tol` and q negative ones. If not, δ is increased (warm-started
/// from the previous iteration's shift, then ×10) and the factorization is
/// retried. After a successful solve the tangential curvature uᵀWu is also
/// required to clear pd_tol·‖u‖²; a failure there re-enters the shift loop.
pub fn inertia_correct_and_solve(
    w: &DMatrix<f64>,
    sys: &ScaledSystem,
    v: &DVector<f64>,
    pd_tol: f64,
    warm_shift: f64,
) -> Result<KktResult> {
    let (n, q) = (sys.n, sys.q);
    let dim = n + q;
    let kdim = dim + q;

    let j_v = &sys.j * v;
    let mut rhs = DVector::<f64>::zeros(kdim);
    for i in 0..dim {
        rhs[i] = -sys.g[i];
    }
    for i in 0..q {
        rhs[dim + i] = j_v[i];
    }

    let mut delta = 0.0_f64;
    loop {
        let mut k = DMatrix::<f64>::zeros(kdim, kdim);
        k.view_mut((0, 0), (dim, dim)).copy_from(w);
        for i in 0..dim {
            k[(i, i)] += delta;
        }
        k.view_mut((dim, 0), (q, dim)).copy_from(&sys.j);
        k.view_mut((0, dim), (dim, q)).copy_from(&sys.j.transpose());

        let attempt = LdlFactors::factor(&k).ok().and_then(|f| {
            let inertia = f.inertia(pd_tol);
            if inertia.positive == dim && inertia.negative == q && inertia.zero == 0 && inertia.weak == 0 {
                Some(f)
            } else {
                None
            }
        });

        if let Some(factors) = attempt {
            if let Some(result) = try_solve(&factors, &k, &rhs, w, sys, v, &j_v, delta, pd_tol) {
                return Ok(result);
            }
        }

        if delta >= SHIFT_MAX {
            return Err(Error::ShiftExhausted(delta));
        }
        delta = if delta == 0.0 {
            if warm_shift > 0.0 {
                (warm_shift / 3.0).max(SHIFT_MIN)
            } else {
                SHIFT_MIN
            }
        } else {
            (delta * 10.0).min(SHIFT_MAX)
        };
    }
}

/// Backward-error denominator for the stationarity block row.
pub fn kkt_row1_scale(sys: &ScaledSystem, w: &DMatrix<f64>, d: &DVector<f64>, y: &DVector<f64>) -> f64 {
    1.0 + sys.g.norm() + w.norm() * d.norm() + sys.j.norm() * y.norm()
}

/// Backward-error denominator for the range block row.
pub fn kkt_row2_scale(sys: &ScaledSystem, d: &DVector<f64>, v: &DVector<f64>) -> f64 {
    1.0 + sys.j.norm() * (d.norm() + v.norm())
}

/// Solve with the accepted factorization and validate residuals and
/// tangential curvature; `None` sends the caller back for a larger shift.
#[allow(clippy::too_many_arguments)]
fn try_solve(
    factors: &LdlFactors,
    k: &DMatrix<f64>,
    rhs: &DVector<f64>,
    w: &DMatrix<f64>,
    sys: &ScaledSystem,
    v: &DVector<f64>,
    j_v: &DVector<f64>,
    delta: f64,
    pd_tol: f64,
) -> Option<KktResult> {
    let dim = sys.n + sys.q;
    let mut sol = factors.solve(rhs).ok()?;
    // One round of iterative refinement buys the residual tolerance on
    // ill-conditioned barrier systems.
    for _ in 0..2 {
        let resid = rhs - k * &sol;
        if resid.norm() <= 1e-14 * (1.0 + rhs.norm()) {
            break;
        }
        let corr = factors.solve(&resid).ok()?;
        sol += corr;
    }

    let d = DVector::from_fn(dim, |i, _| sol[i]);
    let y_next = DVector::from_fn(sys.q, |i, _| sol[dim + i]);
    let u = &d - v;

    let w_used = {
        let mut m = w.clone();
        for i in 0..dim {
            m[(i, i)] += delta;
        }
        m
    };

    // Block-row residuals against backward-error scales, so ill-conditioned
    // but honestly solved systems are not rejected for rounding they cannot
    // avoid.
    let r1 = (&w_used * &d + sys.j.transpose() * &y_next + &sys.g).norm();
    if r1 > TOL_KKT * kkt_row1_scale(sys, &w_used, &d, &y_next) {
        return None;
    }
    let r2 = (&sys.j * &d - j_v).norm();
    if r2 > TOL_KKT * kkt_row2_scale(sys, &d, v) {
        return None;
    }
    // Quantitative positive definiteness along the tangential direction; a
    // rounding-level shortfall is cured by the next shift, which is tiny.
    let u_norm2 = u.norm_squared();
    if u_norm2 > 0.0 {
        let curvature = (u.transpose() * &w_used * &u)[(0, 0)];
        if curvature < pd_tol * u_norm2 {
            return None;
        }
    }
    Some(KktResult {
        d,
        u,
        y_next,
        w_used,
        modification_shift: delta,
    })
}

/// Step size of the steepest-descent Cauchy point for ½‖c + α J(−Jᵀc)‖²
/// over α ∈ [0, ω]; used by the per-iteration decrease check.
pub fn cauchy_step_size(sys: &ScaledSystem, omega: f64) -> f64 {
    let jt_c = sys.j.transpose() * &sys.c;
    let jjt_c = &sys.j * &jt_c;
    let denom = jjt_c.norm_squared();
    if denom == 0.0 {
        return 0.0;
    }
    (jt_c.norm_squared() / denom).clamp(0.0, omega)
}
