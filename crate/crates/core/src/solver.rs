//! Barrier-subproblem driver and barrier-parameter continuation.
//!
//! One iteration, in order: evaluate noisily, test for an infeasible
//! stationary point, compute the normal step, build and correct W, solve the
//! saddle-point system, test for subproblem stationarity, update the merit
//! parameter, cap the step by the fraction-to-the-boundary rule, backtrack
//! under the relaxed sufficient-decrease test, move, reset slacks. The
//! multipliers are refreshed from the saddle-point solve every iteration.
//!
//! Termination thresholds default to zero, which disables both tests and
//! runs the full iteration budget; this mirrors how the solver is driven in
//! the experiment harness, where stationarity is judged offline from the
//! recorded trace.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::barrier::{assemble, barrier_objective, init_slacks, slack_reset, BarrierState, ScaledSystem, SLACK_FLOOR};
use crate::error::{Error, Result};
use crate::globalization::{
    armijo_backtrack, eps_k, fraction_to_boundary, merit_value, model_reduction, update_tau,
    MeritModel,
};
use crate::linalg::min_eigenvalue_sym;
use crate::problem::{EvalKey, NoisyOracle};
use crate::steps::{
    build_w, cauchy_step_size, inertia_correct_and_solve, normal_step, KAPPA_SIGMA, PD_TOL,
    TOL_KKT, TOL_TR,
};

/// Maximum line-search halvings before the run is declared failed.
pub const J_MAX: u32 = 60;
/// Cauchy-decrease fraction checked by the per-iteration audit.
pub const DELTA_V: f64 = 1.0 - 1e-8;

/// Barrier-parameter continuation settings.
#[derive(Debug, Clone, Copy)]
pub struct ContinuationConfig {
    pub kappa_mu: f64,
    pub theta_mu: f64,
    pub mu_min: f64,
    pub max_subproblems: usize,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        ContinuationConfig {
            kappa_mu: 0.2,
            theta_mu: 1.5,
            mu_min: 1e-6,
            max_subproblems: 50,
        }
    }
}

/// How a subproblem inside the continuation loop decides it is done.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContinuationStop {
    /// Noise-aware trigger built from the run's own error estimates.
    Heuristic,
    /// Final subproblem at μ_min: run down to the noise floor of Δm.
    FinalTolerance,
}

/// Solver parameters. Defaults follow the experiment conventions.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub mu: f64,
    /// Initial merit parameter τ₋₁.
    pub tau_init: f64,
    /// Normal-step trust-region radius multiplier ω.
    pub omega: f64,
    /// Feasibility-gain fraction σ in the merit update.
    pub sigma: f64,
    /// Minimum relative merit-parameter decrease δ_τ.
    pub delta_tau: f64,
    /// Fraction-to-the-boundary parameter; `None` selects max{0.99, 1 − μ}.
    pub eta_s: Option<f64>,
    pub eta_phi: f64,
    pub zeta: f64,
    /// Known noise bounds entering the line-search relaxation.
    pub eps_f: f64,
    pub eps_c: f64,
    pub max_iter: usize,
    pub time_limit: Duration,
    /// Termination threshold; 0 disables both stationarity tests.
    pub tol_term: f64,
    pub kappa_sigma: f64,
    pub pd_tol: f64,
    /// Audit the per-iteration invariants and collect violations.
    pub check_invariants: bool,
    pub continuation: ContinuationConfig,
    /// Set by the continuation driver; `None` runs the plain iteration budget.
    pub continuation_stop: Option<ContinuationStop>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            mu: 1e-1,
            tau_init: 1e-1,
            omega: 1e3,
            sigma: 1e-1,
            delta_tau: 1e-4,
            eta_s: None,
            eta_phi: 1e-8,
            zeta: 1e-1,
            eps_f: 0.0,
            eps_c: 0.0,
            max_iter: 2000,
            time_limit: Duration::from_secs(3600),
            tol_term: 0.0,
            kappa_sigma: KAPPA_SIGMA,
            pd_tol: PD_TOL,
            check_invariants: true,
            continuation: ContinuationConfig::default(),
            continuation_stop: None,
        }
    }
}

impl SolverConfig {
    pub fn eta_s(&self) -> f64 {
        self.eta_s.unwrap_or_else(|| 0.99f64.max(1.0 - self.mu))
    }

    pub fn validate(&self) -> Result<()> {
        let open_unit = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must lie in (0,1), got {v}")))
            }
        };
        open_unit("sigma", self.sigma)?;
        open_unit("delta_tau", self.delta_tau)?;
        open_unit("eta_phi", self.eta_phi)?;
        open_unit("eta_s", self.eta_s())?;
        for (name, v) in [("mu", self.mu), ("tau_init", self.tau_init), ("omega", self.omega), ("zeta", self.zeta)] {
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("eps_f", self.eps_f), ("eps_c", self.eps_c), ("tol_term", self.tol_term)] {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be nonnegative, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    /// Noisy stationarity for the infeasibility measure with c_I ≰ 0.
    InfeasibleStationary,
    /// Noisy stationarity for the barrier subproblem.
    Stationary,
    MaxIter,
    TimeLimit,
    /// Continuation trigger fired; only produced inside the continuation loop.
    SubproblemConverged,
    Failure,
}

/// One completed-iteration trace row. The `*_true` measures are filled by a
/// harness-side pass with noiseless evaluations; the solver leaves them NaN.
#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    pub k: u64,
    pub tau: f64,
    pub alpha_max: f64,
    pub alpha: f64,
    pub j: u32,
    pub dm: f64,
    pub merit_noisy: f64,
    pub stat_kkt_noisy: f64,
    pub stat_infeas_noisy: f64,
    pub stat_kkt_true: f64,
    pub stat_infeas_true: f64,
    pub shift: f64,
    pub mu: f64,
}

/// Pre-step iterate and the multiplier computed at it, retained so noiseless
/// diagnostics can be recomputed offline.
#[derive(Debug, Clone)]
pub struct IterateSnapshot {
    pub x: DVector<f64>,
    pub s: DVector<f64>,
    pub y_next: DVector<f64>,
}

#[derive(Debug)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub final_state: BarrierState,
    pub trace: Vec<IterationRecord>,
    pub snapshots: Vec<IterateSnapshot>,
    pub wall_time: Duration,
    /// Invariant-audit findings; empty on a clean run.
    pub violations: Vec<String>,
    /// Present when status is Failure.
    pub failure: Option<String>,
}

/// Build the starting iterate: x₀ as given, slacks set to ones followed by a
/// reset against the noisy constraint values at x₀, duals y₀ = μ S₀⁻¹ e, and
/// τ at its configured initial value.
pub fn initial_state(oracle: &NoisyOracle, config: &SolverConfig) -> Result<BarrierState> {
    let x0 = oracle.problem().x0().clone();
    let y_probe = DVector::zeros(oracle.problem().q());
    let ev = oracle.evaluate(&x0, &y_probe, EvalKey::base(0))?;
    let s = init_slacks(&ev.c_i);
    let y = DVector::from_fn(s.len(), |i, _| config.mu / s[i]);
    Ok(BarrierState {
        x: x0,
        s,
        y,
        tau: config.tau_init,
        mu: config.mu,
        k: 0,
    })
}

/// Running estimates feeding the continuation trigger.
#[derive(Debug, Clone, Default)]
pub struct ContinuationSignals {
    pub g_sup: f64,
    pub j_sup: f64,
    pub c_sup: f64,
    /// Difference-quotient estimates of the gradient/Jacobian Lipschitz moduli.
    pub l_g: f64,
    pub l_j: f64,
    prev_point: Option<(DVector<f64>, DVector<f64>, DMatrix<f64>)>,
    /// Last-iteration quantities.
    pub dm: f64,
    pub d_norm: f64,
    pub v_norm: f64,
    pub jt_c_norm: f64,
    pub alpha_max: f64,
    pub tau: f64,
    pub sigma_j: f64,
    pub sigma_w: f64,
    pub kappa_w: f64,
}

impl ContinuationSignals {
    fn observe_point(&mut self, z: DVector<f64>, g: DVector<f64>, j: DMatrix<f64>) {
        self.g_sup = self.g_sup.max(g.norm());
        self.j_sup = self.j_sup.max(j.norm());
        if let Some((pz, pg, pj)) = &self.prev_point {
            let dz = (&z - pz).norm();
            if dz > 1e-14 {
                self.l_g = self.l_g.max((&g - pg).norm() / dz);
                self.l_j = self.l_j.max((&j - pj).norm() / dz);
            }
        }
        self.prev_point = Some((z, g, j));
    }
}

/// Decide whether the barrier parameter should be reduced.
///
/// The rule compares the observed model reduction Δm against a computable
/// version of the run's stationarity threshold. Estimation recipe, in full:
///
/// - step error ε_d = ε_v + ε_u, with ε_v from the normal-step perturbation
///   bound using the effective radius multiplier ω_eff = min(ω, ‖Jᵀc‖/‖v‖),
///   σ_J ≈ ‖(JJᵀ)⁻¹‖ at the last iterate, ‖J̄‖ ≈ running max ‖J‖ + ε_J and
///   ‖c̄‖ ≈ running max ‖c‖ + ε_c; and ε_u ≈ (ε_g + ‖W‖ ε_v)/λ_min(ZᵀWZ),
///   the leading terms of the tangential-step perturbation bound with unit
///   projector norms;
/// - model-error bounds E₁ = (τ ε_g + ε_J) ε_d + 2 ε_c + (τ ε_g + ε_J)(‖d‖ + ε_d)
///   and E₂ = (τ g_sup + J_sup) ε_d, taking the noisy and noiseless merit
///   parameters as equal (their drift is unobservable and vanishes with the
///   noise);
/// - curvature modulus ξ⁰ = max{½(τ L_g + L_J), τ μ/(1 − η_s)} with L_g, L_J
///   estimated by running maxima of difference quotients between consecutive
///   iterates;
/// - step-size floor α̂ = min{(1 − η_φ) Δm / (2 ξ⁰ ‖d‖²), α_max}.
///
/// The trigger fires when
/// Δm ≤ max{ 2(η_φ E₁ + (1 − η_φ) E₂)/(1 − η_φ), 2(E₁ + E₂),
///           4(4 + 2ζ) ε / (η_φ α̂) }
/// with ε = τ ε_f + ε_c (floored). All three terms vanish with the noise
/// bounds up to the ε floor, so in the noiseless limit the trigger fires only
/// once Δm itself is at the floor.
pub fn should_reduce_mu(signals: &ContinuationSignals, config: &SolverConfig) -> bool {
    let s = signals;
    if s.dm == 0.0 {
        return true;
    }
    let spec_eps = |oracle_free: f64| oracle_free.max(0.0);
    let (ef, ec) = (spec_eps(config.eps_f), spec_eps(config.eps_c));
    // Derived bounds follow the experiment convention ε_g = ε_J = √ε_f.
    let eg = ef.sqrt();
    let ej = ef.sqrt();

    let omega_eff = if s.v_norm > 0.0 {
        (s.jt_c_norm / s.v_norm).min(config.omega)
    } else {
        config.omega
    };
    let j_est = s.j_sup + ej;
    let c_est = s.c_sup + ec;
    let sj = s.sigma_j.max(0.0);
    let jj_gap = ej * (ej + 2.0 * j_est);
    let eps_t1 = sj * sj
        * j_est
        * (omega_eff * j_est * c_est * jj_gap
            + 2.0 * j_est * ec
            + c_est * ej
            + c_est * jj_gap.sqrt());
    let eps_t2 = omega_eff
        * sj.sqrt()
        * (j_est * ec
            + c_est * ej
            + (s.jt_c_norm + j_est * ec + ej * c_est) * sj.sqrt() * jj_gap.sqrt());
    let eps_v = ej * omega_eff * sj.sqrt() * s.jt_c_norm + j_est * (eps_t1 + eps_t2);
    let eps_u = if s.sigma_w > 0.0 {
        (eg + s.kappa_w * eps_v) / s.sigma_w
    } else {
        0.0
    };
    let eps_d = eps_v + eps_u;

    let e1 = (s.tau * eg + ej) * eps_d + 2.0 * ec + (s.tau * eg + ej) * (s.d_norm + eps_d);
    let e2 = (s.tau * s.g_sup + s.j_sup) * eps_d;

    let eta_phi = config.eta_phi;
    let xi0 = (0.5 * (s.tau * s.l_g + s.l_j)).max(s.tau * config.mu / (1.0 - config.eta_s()));
    let alpha_hat = if xi0 > 0.0 && s.d_norm > 0.0 {
        ((1.0 - eta_phi) * s.dm / (2.0 * xi0 * s.d_norm * s.d_norm)).min(s.alpha_max)
    } else {
        s.alpha_max
    };
    let epsk = eps_k(s.tau, ef, ec);

    let t1 = 2.0 * (eta_phi * e1 + (1.0 - eta_phi) * e2) / (1.0 - eta_phi);
    let t2 = 2.0 * (e1 + e2);
    let t3 = 4.0 * (4.0 + 2.0 * config.zeta) * epsk / (eta_phi * alpha_hat.max(1e-300));
    s.dm <= t1.max(t2).max(t3)
}

struct Audit<'a> {
    enabled: bool,
    violations: &'a mut Vec<String>,
    k: u64,
}

impl Audit<'_> {
    fn check(&mut self, ok: bool, what: &str, detail: String) {
        if self.enabled && !ok {
            self.violations.push(format!("k={}: {} ({})", self.k, what, detail));
            debug_assert!(false, "invariant violated at k={}: {what} ({detail})", self.k);
        }
    }
}

/// Run the barrier subproblem to one of its exits.
pub fn solve_barrier_subproblem(
    oracle: &NoisyOracle,
    config: &SolverConfig,
    start: Option<BarrierState>,
) -> Result<SolveResult> {
    config.validate()?;
    let t0 = Instant::now();
    let mut state = match start {
        Some(s) => s,
        None => initial_state(oracle, config)?,
    };
    state.mu = config.mu;

    let n = oracle.problem().n();
    let q = oracle.problem().q();
    let eta_s = config.eta_s();

    let mut trace: Vec<IterationRecord> = Vec::new();
    let mut snapshots: Vec<IterateSnapshot> = Vec::new();
    let mut violations: Vec<String> = Vec::new();
    let mut signals = ContinuationSignals::default();
    let mut warm_shift = 0.0_f64;
    let mut failure: Option<String> = None;

    let status = 'run: {
        for _ in 0..config.max_iter {
            if t0.elapsed() > config.time_limit {
                break 'run SolveStatus::TimeLimit;
            }

            let step = match iterate_once(
                oracle,
                config,
                &mut state,
                eta_s,
                n,
                q,
                &mut signals,
                &mut warm_shift,
                &mut trace,
                &mut snapshots,
                &mut violations,
            ) {
                Ok(s) => s,
                Err(e) => {
                    failure = Some(e.to_string());
                    break 'run SolveStatus::Failure;
                }
            };
            match step {
                IterationExit::Continue => {}
                IterationExit::InfeasibleStationary => break 'run SolveStatus::InfeasibleStationary,
                IterationExit::Stationary => break 'run SolveStatus::Stationary,
                IterationExit::Trigger => break 'run SolveStatus::SubproblemConverged,
            }
        }
        SolveStatus::MaxIter
    };

    Ok(SolveResult {
        status,
        final_state: state,
        trace,
        snapshots,
        wall_time: t0.elapsed(),
        violations,
        failure,
    })
}

enum IterationExit {
    Continue,
    InfeasibleStationary,
    Stationary,
    Trigger,
}

#[allow(clippy::too_many_arguments)]
fn iterate_once(
    oracle: &NoisyOracle,
    config: &SolverConfig,
    state: &mut BarrierState,
    eta_s: f64,
    n: usize,
    q: usize,
    signals: &mut ContinuationSignals,
    warm_shift: &mut f64,
    trace: &mut Vec<IterationRecord>,
    snapshots: &mut Vec<IterateSnapshot>,
    violations: &mut Vec<String>,
) -> Result<IterationExit> {
    let ev = oracle.evaluate(&state.x, &state.y, EvalKey::base(state.k))?;
    let sys = assemble(&ev, &state.s, config.mu)?;
    let jt_c = sys.j.transpose() * &sys.c;
    let jt_c_norm = jt_c.norm();
    let c_norm = sys.c.norm();

    if jt_c_norm <= config.tol_term && ev.c_i.iter().any(|&v| v > 0.0) {
        return Ok(IterationExit::InfeasibleStationary);
    }

    let tr = normal_step(&sys, config.omega)?;
    let w = build_w(&ev.hess, &state.s, &state.y, config.mu, config.kappa_sigma);
    let kkt = inertia_correct_and_solve(&w, &sys, &tr.v, config.pd_tol, *warm_shift)?;
    *warm_shift = kkt.modification_shift;

    let kkt_residual_norm = (&sys.g + sys.j.transpose() * &kkt.y_next).norm();
    if jt_c_norm <= config.tol_term && kkt_residual_norm <= config.tol_term {
        state.y = kkt.y_next;
        return Ok(IterationExit::Stationary);
    }

    let u_w_u = (kkt.u.transpose() * &kkt.w_used * &kkt.u)[(0, 0)];
    let mm = MeritModel {
        c_norm,
        // The normal step cannot worsen linearized feasibility; clip the
        // rounding spill so the merit update sees gain ≥ 0 exactly.
        jv_residual: tr.predicted_residual.min(c_norm),
        g_dot_d: sys.g.dot(&kkt.d),
        u_w_u,
        inner_scale: sys.g.norm() * kkt.d.norm(),
    };
    let tau_prev = state.tau;
    let tau = update_tau(tau_prev, &mm, config.sigma, config.delta_tau)?;
    let dm = {
        let raw = model_reduction(&mm, tau);
        if raw >= 0.0 {
            raw
        } else if raw >= -1e-12 * (1.0 + tau * mm.g_dot_d.abs() + mm.c_norm) {
            // Cancellation residue at stationarity; the model reduction is
            // nonnegative by construction.
            0.0
        } else {
            return Err(Error::Internal(format!(
                "model reduction {raw:.3e} negative beyond rounding level"
            )));
        }
    };

    let dx = kkt.d.rows(0, n).into_owned();
    let ds = kkt.d.rows(n, q).into_owned();
    let alpha_max = fraction_to_boundary(&ds, eta_s);

    let phi_old = merit_value(sys.f, &sys.c, tau);
    let epsk = eps_k(tau, config.eps_f, config.eps_c);

    let mut accepted: Option<(crate::problem::NoisyEvaluation, DVector<f64>, DVector<f64>)> = None;
    let outcome = armijo_backtrack(
        |j, alpha| {
            let x_t = &state.x + alpha * &dx;
            let s_t = DVector::from_fn(q, |i, _| state.s[i] * (1.0 + alpha * ds[i]));
            let ev_t = oracle.evaluate(&x_t, &state.y, EvalKey::trial(state.k, j))?;
            let f_t = barrier_objective(ev_t.f0, &s_t, config.mu);
            let phi = merit_value(f_t, &(&ev_t.c_i + &s_t), tau);
            accepted = Some((ev_t, x_t, s_t));
            Ok(phi)
        },
        phi_old,
        dm,
        alpha_max,
        config.eta_phi,
        config.zeta,
        epsk,
        J_MAX,
    )?;
    let (ev_next, x_next, s_cand) =
        accepted.ok_or_else(|| Error::Internal("line search returned without a trial".into()))?;

    let s_next = slack_reset(&s_cand, &ev_next.c_i, SLACK_FLOOR);

    let mut audit = Audit {
        enabled: config.check_invariants,
        violations,
        k: state.k,
    };
    run_audit(
        &mut audit, config, &sys, &tr, &kkt, &mm, tau, tau_prev, dm, &ds, &outcome,
        &ev_next, &s_next, u_w_u, eta_s, epsk,
    );

    trace.push(IterationRecord {
        k: state.k,
        tau,
        alpha_max,
        alpha: outcome.alpha,
        j: outcome.j,
        dm,
        merit_noisy: phi_old,
        stat_kkt_noisy: kkt_residual_norm.max(c_norm),
        stat_infeas_noisy: jt_c_norm,
        stat_kkt_true: f64::NAN,
        stat_infeas_true: f64::NAN,
        shift: kkt.modification_shift,
        mu: config.mu,
    });
    snapshots.push(IterateSnapshot {
        x: state.x.clone(),
        s: state.s.clone(),
        y_next: kkt.y_next.clone(),
    });

    let continuation_active = config.continuation_stop.is_some();
    if continuation_active {
        let mut z = DVector::<f64>::zeros(n + q);
        z.rows_mut(0, n).copy_from(&state.x);
        z.rows_mut(n, q).copy_from(&state.s);
        signals.observe_point(z, sys.g.clone(), sys.j.clone());
        signals.c_sup = signals.c_sup.max(c_norm);
        signals.dm = dm;
        signals.d_norm = kkt.d.norm();
        signals.v_norm = tr.v.norm();
        signals.jt_c_norm = jt_c_norm;
        signals.alpha_max = alpha_max;
        signals.tau = tau;
        signals.sigma_j = {
            let jjt = &sys.j * sys.j.transpose();
            let lmin = min_eigenvalue_sym(&jjt);
            if lmin > 0.0 {
                1.0 / lmin
            } else {
                f64::INFINITY
            }
        };
        signals.kappa_w = kkt.w_used.norm();
        signals.sigma_w = reduced_min_eigenvalue(&kkt.w_used, &sys.j);
    }

    state.x = x_next;
    state.s = s_next;
    state.y = kkt.y_next;
    state.tau = tau;
    state.k += 1;

    if continuation_active {
        let fire = match config.continuation_stop {
            Some(ContinuationStop::Heuristic) => should_reduce_mu(signals, config),
            Some(ContinuationStop::FinalTolerance) => dm <= 10.0 * epsk,
            None => false,
        };
        if fire {
            return Ok(IterationExit::Trigger);
        }
    }
    Ok(IterationExit::Continue)
}

/// λ_min of W restricted to null(J), computed as the smallest eigenvalue of
/// P W P + c (I − P) with P the orthogonal projector onto null(J) and c a
/// level above ‖W‖ so the range-space directions cannot interfere.
fn reduced_min_eigenvalue(w: &DMatrix<f64>, j: &DMatrix<f64>) -> f64 {
    let dim = w.nrows();
    let jjt = j * j.transpose();
    let lu = jjt.lu();
    let mut p = DMatrix::<f64>::identity(dim, dim);
    if let Some(inv_j) = lu.solve(j) {
        p -= j.transpose() * inv_j;
    } else {
        return 0.0;
    }
    let level = w.norm() + 1.0;
    let mut m = &p * w * &p;
    let i_minus_p = DMatrix::identity(dim, dim) - &p;
    m += i_minus_p * level;
    // Symmetrize rounding skew before the eigensolve.
    let mt = m.transpose();
    m = (m + mt) * 0.5;
    min_eigenvalue_sym(&m)
}

#[allow(clippy::too_many_arguments)]
fn run_audit(
    audit: &mut Audit<'_>,
    config: &SolverConfig,
    sys: &ScaledSystem,
    tr: &crate::steps::TrustRegionResult,
    kkt: &crate::steps::KktResult,
    mm: &MeritModel,
    tau: f64,
    tau_prev: f64,
    dm: f64,
    ds: &DVector<f64>,
    outcome: &crate::globalization::LineSearchOutcome,
    ev_next: &crate::problem::NoisyEvaluation,
    s_next: &DVector<f64>,
    u_w_u: f64,
    eta_s: f64,
    epsk: f64,
) {
    if !audit.enabled {
        return;
    }
    let c_norm = mm.c_norm;

    audit.check(
        s_next.iter().all(|&v| v > 0.0),
        "slack positivity",
        format!("min slack {:.3e}", s_next.min()),
    );
    let c_reset_min = (0..s_next.len())
        .map(|i| ev_next.c_i[i] + s_next[i])
        .fold(f64::INFINITY, f64::min);
    audit.check(
        c_reset_min >= 0.0,
        "post-reset residual nonnegativity",
        format!("min component {c_reset_min:.3e}"),
    );

    let gain = c_norm - mm.jv_residual;
    audit.check(
        dm >= 0.5 * tau * u_w_u + config.sigma * gain - 1e-10 * (1.0 + dm.abs()),
        "model reduction condition",
        format!("dm {dm:.3e}"),
    );
    audit.check(
        dm >= -1e-12,
        "model reduction nonnegative",
        format!("dm {dm:.3e}"),
    );

    let blocking = ds
        .iter()
        .map(|&d| outcome.alpha * d)
        .fold(f64::INFINITY, f64::min);
    audit.check(
        blocking >= -eta_s - 1e-12,
        "fraction to the boundary at accepted step",
        format!("min alpha*ds {blocking:.3e}"),
    );

    audit.check(
        outcome.phi_new
            <= outcome.phi_old - config.eta_phi * outcome.alpha * dm
                + (2.0 + config.zeta) * epsk
                + 1e-12 * (1.0 + outcome.phi_old.abs()),
        "relaxed sufficient decrease at accepted step",
        format!("phi_new {:.6e}", outcome.phi_new),
    );

    audit.check(
        tau > 0.0 && tau <= tau_prev,
        "merit parameter monotonicity",
        format!("tau {tau:.3e} prev {tau_prev:.3e}"),
    );

    let r1 = (&kkt.w_used * &kkt.d + sys.j.transpose() * &kkt.y_next + &sys.g).norm();
    audit.check(
        r1 <= TOL_KKT * crate::steps::kkt_row1_scale(sys, &kkt.w_used, &kkt.d, &kkt.y_next),
        "stationarity block residual",
        format!("{r1:.3e}"),
    );
    let jv = &sys.j * &tr.v;
    let r2 = (&sys.j * &kkt.d - &jv).norm();
    audit.check(
        r2 <= TOL_KKT * crate::steps::kkt_row2_scale(sys, &kkt.d, &tr.v),
        "range block residual",
        format!("{r2:.3e}"),
    );
    let cd = (&sys.c + &sys.j * &kkt.d).norm();
    audit.check(
        (cd - tr.predicted_residual).abs()
            <= 1e-8 * (1.0 + c_norm + sys.j.norm() * kkt.d.norm()),
        "full step preserves normal-step residual",
        format!("|{cd:.6e} - {:.6e}|", tr.predicted_residual),
    );

    let jt_c = sys.j.transpose() * &sys.c;
    let radius = config.omega * jt_c.norm();
    audit.check(
        tr.v.norm() <= radius * (1.0 + TOL_TR) + 1e-300,
        "normal step inside trust region",
        format!("‖v‖ {:.3e} radius {radius:.3e}", tr.v.norm()),
    );
    audit.check(
        tr.predicted_residual <= c_norm * (1.0 + 1e-8),
        "normal step never worsens feasibility",
        format!("{:.6e} vs {c_norm:.6e}", tr.predicted_residual),
    );
    if tr.v.norm() > 0.0 {
        let jjt = &sys.j * sys.j.transpose();
        if let Some(sol) = jjt.lu().solve(&(&sys.j * &tr.v)) {
            let range_defect = (&tr.v - sys.j.transpose() * sol).norm();
            audit.check(
                range_defect <= 1e-6 * tr.v.norm(),
                "normal step in row space",
                format!("defect {range_defect:.3e}"),
            );
        }
    }

    // Cauchy decrease against the one-dimensional steepest-descent point.
    let alpha_hat = cauchy_step_size(sys, config.omega);
    let cauchy_resid = (&sys.c - alpha_hat * (&sys.j * &jt_c)).norm();
    let cauchy_gain = c_norm - cauchy_resid;
    audit.check(
        gain >= DELTA_V * cauchy_gain - 1e-10 * (1.0 + c_norm),
        "Cauchy decrease",
        format!("gain {gain:.6e} cauchy {cauchy_gain:.6e}"),
    );

    let u_norm2 = kkt.u.norm_squared();
    audit.check(
        u_w_u >= -1e-14 * (1.0 + kkt.w_used.norm() * u_norm2),
        "tangential curvature nonnegative",
        format!("{u_w_u:.3e}"),
    );
    if u_norm2 > 0.0 {
        audit.check(
            u_w_u >= config.pd_tol * u_norm2 * (1.0 - 1e-6),
            "tangential curvature above threshold",
            format!("{u_w_u:.3e} vs {:.3e}", config.pd_tol * u_norm2),
        );
    }

    // The slack reset cannot increase the merit function.
    let phi_reset = merit_value(
        barrier_objective(ev_next.f0, s_next, config.mu),
        &(&ev_next.c_i + s_next),
        tau,
    );
    audit.check(
        phi_reset <= outcome.phi_new + 1e-10 * (1.0 + outcome.phi_new.abs()),
        "slack reset monotone in merit",
        format!("{phi_reset:.6e} vs {:.6e}", outcome.phi_new),
    );

    let finite = [
        tau,
        dm,
        outcome.alpha,
        outcome.phi_new,
        mm.c_norm,
        tr.predicted_residual,
        u_w_u,
    ]
    .iter()
    .all(|v| v.is_finite());
    audit.check(finite, "recorded quantities finite", String::new());
}

/// Solve a sequence of barrier subproblems for decreasing μ.
///
/// After each subproblem the parameter moves by μ ← max(μ_min, min(κ_μ μ,
/// μ^θ_μ)); the primal point, slacks and merit parameter are warm-started,
/// the duals are re-initialized to μ S⁻¹ e, and the fraction-to-the-boundary
/// parameter is recomputed from the new μ. The final subproblem at μ_min
/// runs down to the Δm noise floor instead of the heuristic trigger.
pub fn continuation_loop(oracle: &NoisyOracle, config: &SolverConfig) -> Result<Vec<SolveResult>> {
    config.validate()?;
    let cont = config.continuation;
    if !(cont.mu_min > 0.0 && cont.mu_min <= config.mu) {
        return Err(Error::InvalidArgument(format!(
            "continuation requires 0 < mu_min ≤ mu, got mu_min {} mu {}",
            cont.mu_min, config.mu
        )));
    }
    let t0 = Instant::now();
    let mut results = Vec::new();
    let mut mu = config.mu;
    let mut start: Option<BarrierState> = None;

    for _ in 0..cont.max_subproblems {
        let at_floor = mu <= cont.mu_min * (1.0 + 1e-12);
        let mut sub = config.clone();
        sub.mu = mu;
        sub.eta_s = config.eta_s; // `None` re-derives max{0.99, 1−μ} from the new μ
        sub.continuation_stop = Some(if at_floor {
            ContinuationStop::FinalTolerance
        } else {
            ContinuationStop::Heuristic
        });
        let remaining = config.time_limit.saturating_sub(t0.elapsed());
        sub.time_limit = remaining;

        let warm = match start.take() {
            Some(mut st) => {
                st.mu = mu;
                st.y = DVector::from_fn(st.s.len(), |i, _| mu / st.s[i]);
                Some(st)
            }
            None => None,
        };
        let result = solve_barrier_subproblem(oracle, &sub, warm)?;
        let stop = matches!(
            result.status,
            SolveStatus::Failure
                | SolveStatus::TimeLimit
                | SolveStatus::InfeasibleStationary
        );
        start = Some(result.final_state.clone());
        results.push(result);
        if stop || at_floor {
            break;
        }
        mu = (cont.kappa_mu * mu).min(mu.powf(cont.theta_mu)).max(cont.mu_min);
    }
    Ok(results)
}
