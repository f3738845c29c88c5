//! Merit function, merit-parameter update, step-size rules.
//!
//! Progress is measured with φ(z, τ) = τ f(z) + ‖c(z)‖. The merit parameter
//! is chosen so the model reduction achieved by the step covers a fraction of
//! the feasibility gain plus half the tangential curvature. The step size is
//! capped by a fraction-to-the-boundary rule on the slacks and then
//! backtracked under a sufficient-decrease test relaxed by an additive
//! (2 + ζ)ε slack that absorbs bounded evaluation noise, ε = τ ε_f + ε_c.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Floor for the noise allowance when both bounds are configured to zero;
/// keeps the backtracking loop finite in the noiseless limit.
pub const EPS_K_FLOOR: f64 = 1e-16;

/// Quantities of the current step entering the merit-parameter update and
/// the model reduction.
#[derive(Debug, Clone, Copy)]
pub struct MeritModel {
    /// ‖c‖ at the iterate.
    pub c_norm: f64,
    /// ‖c + Jv‖ after the normal step.
    pub jv_residual: f64,
    /// gᵀd for the full step.
    pub g_dot_d: f64,
    /// uᵀWu for the tangential step against the modified W.
    pub u_w_u: f64,
    /// ‖g‖‖d‖, the rounding scale of gᵀd; a trial denominator below this
    /// level times machine precision is not reliably positive.
    pub inner_scale: f64,
}

/// Outcome of the backtracking line search.
#[derive(Debug, Clone, Copy)]
pub struct LineSearchOutcome {
    pub alpha_max: f64,
    pub alpha: f64,
    /// Number of halvings: alpha = (½)^j · alpha_max.
    pub j: u32,
    pub phi_old: f64,
    pub phi_new: f64,
    /// Noise allowance τ ε_f + ε_c used in the acceptance test.
    pub eps_k: f64,
}

/// φ(z, τ) = τ f + ‖c‖₂.
pub fn merit_value(f: f64, c: &DVector<f64>, tau: f64) -> f64 {
    tau * f + c.norm()
}

/// Model reduction Δm(d, τ) = −τ gᵀd + ‖c‖ − ‖c + Jv‖.
pub fn model_reduction(mm: &MeritModel, tau: f64) -> f64 {
    -tau * mm.g_dot_d + mm.c_norm - mm.jv_residual
}

/// Merit-parameter update.
///
/// The trial value is ∞ when gᵀd + ½uᵀWu ≤ 0 and otherwise
/// (1 − σ)(‖c‖ − ‖c + Jv‖)/(gᵀd + ½uᵀWu); the parameter keeps its previous
/// value when that already lies below the trial, else drops to
/// min{(1 − δ_τ)τ, τ_trial}. The returned value always certifies
/// Δm ≥ ½τ uᵀWu + σ(‖c‖ − ‖c + Jv‖).
pub fn update_tau(tau_prev: f64, mm: &MeritModel, sigma: f64, delta_tau: f64) -> Result<f64> {
    debug_assert!(tau_prev > 0.0 && sigma > 0.0 && sigma < 1.0 && delta_tau > 0.0 && delta_tau < 1.0);
    let denom = mm.g_dot_d + 0.5 * mm.u_w_u;
    let gain = mm.c_norm - mm.jv_residual;
    // A denominator below its own rounding level cannot be certified
    // positive; near stationarity it is cancellation residue, and shrinking
    // τ on it would drive the merit parameter to zero.
    let denom_floor = 1e-13 * (1.0 + mm.inner_scale + 0.5 * mm.u_w_u.abs());
    let tau = if denom <= denom_floor {
        tau_prev
    } else {
        if gain < 0.0 {
            // The normal step never worsens linearized feasibility, so a
            // positive denominator with negative gain cannot happen.
            return Err(Error::Internal(format!(
                "merit update: positive curvature {denom:.3e} with negative feasibility gain {gain:.3e}"
            )));
        }
        let trial = (1.0 - sigma) * gain / denom;
        if tau_prev <= trial {
            tau_prev
        } else {
            ((1.0 - delta_tau) * tau_prev).min(trial)
        }
    };
    debug_assert!(
        model_reduction(mm, tau) >= 0.5 * tau * mm.u_w_u + sigma * gain - 1e-12 * (1.0 + gain.abs()),
        "model reduction condition violated by returned tau"
    );
    Ok(tau)
}

/// Largest α in (0, 1] with s + α S dˢ ≥ (1 − η_s) s.
///
/// Since every slack is positive the condition reduces componentwise to
/// α dˢᵢ ≥ −η_s, so α_max = min(1, min over dˢᵢ < 0 of η_s/(−dˢᵢ)).
pub fn fraction_to_boundary(ds: &DVector<f64>, eta_s: f64) -> f64 {
    debug_assert!(eta_s > 0.0 && eta_s < 1.0);
    let mut alpha: f64 = 1.0;
    for &di in ds.iter() {
        if di < 0.0 {
            alpha = alpha.min(eta_s / (-di));
        }
    }
    alpha
}

/// Backtracking line search under the relaxed sufficient-decrease test
///
/// ```text
/// φ(z + α d̂, τ) ≤ φ(z, τ) − η_φ α Δm + (2 + ζ) ε
/// ```
///
/// trying α = (½)^j α_max for j = 0, 1, …. `trial_phi` must evaluate the
/// merit function at the trial point for halving count j — with fresh noisy
/// values — and is the only thing the search needs from the outside.
#[allow(clippy::too_many_arguments)]
pub fn armijo_backtrack(
    mut trial_phi: impl FnMut(u32, f64) -> Result<f64>,
    phi_old: f64,
    dm: f64,
    alpha_max: f64,
    eta_phi: f64,
    zeta: f64,
    eps_k: f64,
    j_max: u32,
) -> Result<LineSearchOutcome> {
    debug_assert!(dm >= 0.0, "model reduction must be nonnegative, got {dm}");
    debug_assert!(eps_k > 0.0);
    let mut alpha = alpha_max;
    for j in 0..=j_max {
        let phi_new = trial_phi(j, alpha)?;
        if phi_new <= phi_old - eta_phi * alpha * dm + (2.0 + zeta) * eps_k {
            return Ok(LineSearchOutcome {
                alpha_max,
                alpha,
                j,
                phi_old,
                phi_new,
                eps_k,
            });
        }
        alpha *= 0.5;
    }
    Err(Error::LineSearchStalled(j_max))
}

/// ε = τ ε_f + ε_c with the noiseless-configuration floor applied.
pub fn eps_k(tau: f64, eps_f: f64, eps_c: f64) -> f64 {
    (tau * eps_f + eps_c).max(EPS_K_FLOOR)
}
