//! Problem definitions and the bounded-noise evaluation layer.
//!
//! A [`TrueProblem`] holds the noiseless objective, inequality constraints
//! (in `c(x) ≤ 0` form) and their first derivatives, plus an optional
//! Lagrangian Hessian. A [`NoisyOracle`] wraps a problem with a
//! [`NoiseSpec`] and serves perturbed values whose errors respect the
//! configured bounds:
//!
//! ```text
//! |f − f̄| ≤ ε_f    ‖c − c̄‖ ≤ ε_c    ‖g − ḡ‖ ≤ ε_g    ‖J − J̄‖ ≤ ε_J
//! ```
//!
//! Every draw is a pure function of the RNG seed and the evaluation key, so
//! re-querying the same key reproduces the same perturbation bit for bit and
//! whole solver runs replay exactly.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_chacha::rand_core::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

type ScalarFn = Box<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
type VectorFn = Box<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type MatrixFn = Box<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
type HessianFn = Box<dyn Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// Scale factors applied by [`scale_problem`], kept so reports can undo them.
#[derive(Debug, Clone, Serialize)]
pub struct ScaleInfo {
    pub objective_factor: f64,
    pub row_factors: Vec<f64>,
    /// Constraint rows whose gradient was nonfinite at x₀; left unscaled.
    pub skipped_rows: Vec<usize>,
    /// Objective gradient was nonfinite at x₀; objective left unscaled.
    pub objective_skipped: bool,
}

impl ScaleInfo {
    fn unit(q: usize) -> Self {
        ScaleInfo {
            objective_factor: 1.0,
            row_factors: vec![1.0; q],
            skipped_rows: Vec::new(),
            objective_skipped: false,
        }
    }
}

/// A noiseless inequality-constrained problem: minimize f₀(x) subject to
/// c(x) ≤ 0, with analytic first derivatives.
pub struct TrueProblem {
    name: String,
    n: usize,
    q: usize,
    x0: DVector<f64>,
    f0: ScalarFn,
    g0: VectorFn,
    c_i: VectorFn,
    j_i: MatrixFn,
    lag_hessian: Option<HessianFn>,
    scale: ScaleInfo,
}

impl std::fmt::Debug for TrueProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TrueProblem")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("q", &self.q)
            .finish()
    }
}

impl TrueProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        n: usize,
        q: usize,
        x0: DVector<f64>,
        f0: ScalarFn,
        g0: VectorFn,
        c_i: VectorFn,
        j_i: MatrixFn,
        lag_hessian: Option<HessianFn>,
    ) -> Self {
        assert_eq!(x0.len(), n, "x0 dimension mismatch");
        TrueProblem {
            name: name.into(),
            n,
            q,
            x0,
            f0,
            g0,
            c_i,
            j_i,
            lag_hessian,
            scale: ScaleInfo::unit(q),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn q(&self) -> usize {
        self.q
    }
    pub fn x0(&self) -> &DVector<f64> {
        &self.x0
    }
    pub fn scale(&self) -> &ScaleInfo {
        &self.scale
    }

    pub fn eval_f0(&self, x: &DVector<f64>) -> f64 {
        (self.f0)(x)
    }
    pub fn eval_g0(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.g0)(x)
    }
    pub fn eval_ci(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.c_i)(x)
    }
    pub fn eval_ji(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.j_i)(x)
    }

    /// Hessian of the Lagrangian f₀ + yᵀc at (x, y), when the problem
    /// supplies one. The solver does not require second derivatives; callers
    /// fall back to a zero matrix.
    pub fn eval_lagrangian_hessian(&self, x: &DVector<f64>, y: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.lag_hessian.as_ref().map(|h| h(x, y))
    }

    pub fn has_hessian(&self) -> bool {
        self.lag_hessian.is_some()
    }
}

/// Gradient-based problem scaling.
///
/// If ‖ḡ₀(x₀)‖∞ exceeds 10 the objective is multiplied by 10/‖ḡ₀(x₀)‖∞, and
/// each constraint row whose gradient ∞-norm at x₀ exceeds 10 is scaled the
/// same way. Rows with a nonfinite gradient at x₀ are left alone and flagged.
pub fn scale_problem(problem: Arc<TrueProblem>) -> TrueProblem {
    const LIMIT: f64 = 10.0;
    let x0 = problem.x0.clone();
    let n = problem.n;
    let q = problem.q;

    let g = problem.eval_g0(&x0);
    let obj_factor = if g.iter().all(|v| v.is_finite()) {
        let norm = g.amax();
        if norm > LIMIT {
            LIMIT / norm
        } else {
            1.0
        }
    } else {
        1.0
    };
    let objective_skipped = g.iter().any(|v| !v.is_finite());
    let mut skipped = Vec::new();

    let j = problem.eval_ji(&x0);
    let mut row_factors = vec![1.0; q];
    for (i, factor) in row_factors.iter_mut().enumerate() {
        let row = j.row(i);
        if row.iter().any(|v| !v.is_finite()) {
            skipped.push(i);
            continue;
        }
        let norm = row.amax();
        if norm > LIMIT {
            *factor = LIMIT / norm;
        }
    }

    let rf = DVector::from_vec(row_factors.clone());

    let p_f = Arc::clone(&problem);
    let p_g = Arc::clone(&problem);
    let p_c = Arc::clone(&problem);
    let p_j = Arc::clone(&problem);
    let rf_c = rf.clone();
    let rf_j = rf.clone();

    let lag: Option<HessianFn> = if problem.has_hessian() {
        let p_h = Arc::clone(&problem);
        let rf_h = rf.clone();
        let of = obj_factor;
        // The scaled Lagrangian Hessian is ρ_f ∇²f₀ + Σᵢ ρᵢ yᵢ ∇²cᵢ, which the
        // unscaled callback produces when fed multipliers (ρᵢ/ρ_f) yᵢ and the
        // result is multiplied by ρ_f.
        Some(Box::new(move |x, y| {
            let adj = DVector::from_fn(y.len(), |i, _| y[i] * rf_h[i] / of);
            p_h.eval_lagrangian_hessian(x, &adj)
                .map(|h| h * of)
                .unwrap_or_else(|| DMatrix::zeros(x.len(), x.len()))
        }))
    } else {
        None
    };

    let mut scaled = TrueProblem::new(
        problem.name.clone(),
        n,
        q,
        x0,
        Box::new(move |x| obj_factor * p_f.eval_f0(x)),
        Box::new(move |x| obj_factor * p_g.eval_g0(x)),
        Box::new(move |x| p_c.eval_ci(x).component_mul(&rf_c)),
        Box::new(move |x| {
            let mut m = p_j.eval_ji(x);
            for i in 0..m.nrows() {
                let f = rf_j[i];
                if f != 1.0 {
                    for v in m.row_mut(i).iter_mut() {
                        *v *= f;
                    }
                }
            }
            m
        }),
        lag,
    );
    scaled.scale = ScaleInfo {
        objective_factor: obj_factor,
        row_factors,
        skipped_rows: skipped,
        objective_skipped,
    };
    scaled
}

/// How noise draws are keyed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum NoiseKeying {
    /// Fresh draw per evaluation event, keyed by (seed, iteration, probe).
    #[default]
    PerIteration,
    /// Draw keyed by (seed, bits of x): re-evaluating the same point always
    /// returns the same noisy values, emulating deterministic noise.
    HashOfPoint,
}

/// Bounds and keying for the injected evaluation noise.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub eps_f: f64,
    pub eps_c: f64,
    pub eps_g: f64,
    pub eps_j: f64,
    pub eps_h: f64,
    pub seed: u64,
    pub keying: NoiseKeying,
}

impl NoiseSpec {
    /// All bounds zero; evaluations pass through exactly.
    pub fn exact(seed: u64) -> Self {
        NoiseSpec {
            eps_f: 0.0,
            eps_c: 0.0,
            eps_g: 0.0,
            eps_j: 0.0,
            eps_h: 0.0,
            seed,
            keying: NoiseKeying::PerIteration,
        }
    }

    /// The experiment convention: ε_f = ε_c given, ε_g = ε_J = ε_H = √ε_f.
    pub fn derived(eps_f: f64, seed: u64) -> Self {
        let root = eps_f.sqrt();
        NoiseSpec {
            eps_f,
            eps_c: eps_f,
            eps_g: root,
            eps_j: root,
            eps_h: root,
            seed,
            keying: NoiseKeying::PerIteration,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eps_f", self.eps_f),
            ("eps_c", self.eps_c),
            ("eps_g", self.eps_g),
            ("eps_j", self.eps_j),
            ("eps_h", self.eps_h),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "noise bound {name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn is_exact(&self) -> bool {
        self.eps_f == 0.0
            && self.eps_c == 0.0
            && self.eps_g == 0.0
            && self.eps_j == 0.0
            && self.eps_h == 0.0
    }
}

/// Identifies one evaluation event: `iter` is the solver iteration and
/// `probe` distinguishes the base evaluation (0) from line-search trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalKey {
    pub iter: u64,
    pub probe: u32,
}

impl EvalKey {
    pub fn base(iter: u64) -> Self {
        EvalKey { iter, probe: 0 }
    }
    pub fn trial(iter: u64, j: u32) -> Self {
        EvalKey {
            iter,
            probe: j + 1,
        }
    }
}

/// One served evaluation bundle.
#[derive(Debug, Clone)]
pub struct NoisyEvaluation {
    pub f0: f64,
    pub g0: DVector<f64>,
    pub c_i: DVector<f64>,
    pub j_i: DMatrix<f64>,
    /// Noisy Lagrangian Hessian; zero-based when the problem has none.
    pub hess: DMatrix<f64>,
}

/// Serves noisy evaluations of a [`TrueProblem`] per a [`NoiseSpec`].
///
/// The oracle is immutable; evaluations are pure functions of
/// (seed, key) or (seed, x), so one oracle may be shared across threads.
#[derive(Debug, Clone)]
pub struct NoisyOracle {
    problem: Arc<TrueProblem>,
    spec: NoiseSpec,
}

impl NoisyOracle {
    pub fn new(problem: Arc<TrueProblem>, spec: NoiseSpec) -> Result<Self> {
        spec.validate()?;
        Ok(NoisyOracle { problem, spec })
    }

    pub fn problem(&self) -> &Arc<TrueProblem> {
        &self.problem
    }
    pub fn spec(&self) -> &NoiseSpec {
        &self.spec
    }

    /// Evaluate everything at x with noise drawn for `key`. The multiplier
    /// estimate y only enters the Lagrangian-Hessian value, not the keying.
    pub fn evaluate(&self, x: &DVector<f64>, y: &DVector<f64>, key: EvalKey) -> Result<NoisyEvaluation> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("evaluation point"));
        }
        let p = &self.problem;
        let f0 = p.eval_f0(x);
        let g0 = p.eval_g0(x);
        let c_i = p.eval_ci(x);
        let j_i = p.eval_ji(x);
        let hess = p
            .eval_lagrangian_hessian(x, y)
            .unwrap_or_else(|| DMatrix::zeros(p.n, p.n));

        if self.spec.is_exact() {
            return Ok(NoisyEvaluation {
                f0,
                g0,
                c_i,
                j_i,
                hess,
            });
        }

        let mut rng = self.rng_for(x, key);
        let s = &self.spec;
        let q = p.q;

        let f0 = f0 + s.eps_f * (2.0 * uniform(&mut rng) - 1.0);
        let c_i = if q > 0 {
            &c_i + sample_ball(s.eps_c, q, &mut rng)
        } else {
            c_i
        };
        let g0 = &g0 + sample_ball(s.eps_g, p.n, &mut rng);

        // Row-wise Jacobian perturbation restricted to the nonzero pattern,
        // radius ε_J/√q so the stacked perturbation stays within ε_J.
        let mut j_i = j_i;
        if q > 0 && s.eps_j > 0.0 {
            let row_radius = s.eps_j / (q as f64).sqrt();
            for i in 0..q {
                let pattern: Vec<usize> =
                    (0..p.n).filter(|&c| j_i[(i, c)] != 0.0).collect();
                if pattern.is_empty() {
                    continue;
                }
                let noise = sample_ball(row_radius, pattern.len(), &mut rng);
                for (slot, &c) in pattern.iter().enumerate() {
                    j_i[(i, c)] += noise[slot];
                }
            }
        }

        let mut hess = hess;
        if s.eps_h > 0.0 {
            for i in 0..p.n {
                hess[(i, i)] += s.eps_h * (2.0 * uniform(&mut rng) - 1.0);
            }
        }

        Ok(NoisyEvaluation {
            f0,
            g0,
            c_i,
            j_i,
            hess,
        })
    }

    fn rng_for(&self, x: &DVector<f64>, key: EvalKey) -> ChaCha8Rng {
        let material = match self.spec.keying {
            NoiseKeying::PerIteration => [self.spec.seed, key.iter, key.probe as u64, 0x9e3779b9],
            NoiseKeying::HashOfPoint => {
                let mut h = 0xcbf29ce484222325u64;
                for v in x.iter() {
                    h ^= v.to_bits();
                    h = h.wrapping_mul(0x100000001b3);
                }
                [self.spec.seed, h, 0, 0x517cc1b7]
            }
        };
        let mut seed_bytes = [0u8; 32];
        let mut state = material[0]
            ^ splitmix64(material[1])
            ^ splitmix64(splitmix64(material[2]))
            ^ material[3];
        for chunk in seed_bytes.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed_bytes)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Uniform draw from [0, 1).
fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform draw over the closed ℓ₂ ball of the given radius: direction
/// uniform on the sphere (normalized Gaussians), length `radius · U^(1/dim)`.
pub fn sample_ball(radius: f64, dim: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    assert!(radius >= 0.0 && radius.is_finite(), "ball radius {radius}");
    assert!(dim >= 1, "ball dimension must be positive");
    if radius == 0.0 {
        return DVector::zeros(dim);
    }
    let mut dir = DVector::<f64>::zeros(dim);
    loop {
        let mut i = 0;
        while i < dim {
            // Box-Muller; u1 shifted into (0, 1] so the log stays finite.
            let u1 = ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
            let u2 = uniform(rng);
            let r = (-2.0 * u1.ln()).sqrt();
            let theta = 2.0 * std::f64::consts::PI * u2;
            dir[i] = r * theta.cos();
            i += 1;
            if i < dim {
                dir[i] = r * theta.sin();
                i += 1;
            }
        }
        let norm = dir.norm();
        if norm > 1e-300 {
            dir /= norm;
            break;
        }
    }
    let scale = radius * uniform(rng).powf(1.0 / dim as f64);
    dir * scale
}

/// Problem registry keyed by name.
#[derive(Default)]
pub struct ProblemRegistry {
    map: BTreeMap<String, Arc<TrueProblem>>,
}

impl ProblemRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, problem: TrueProblem) {
        self.map
            .insert(problem.name().to_string(), Arc::new(problem));
    }

    pub fn get(&self, name: &str) -> Result<Arc<TrueProblem>> {
        self.map
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownProblem(name.to_string()))
    }

    pub fn names(&self) -> Vec<String> {
        self.map.keys().cloned().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<TrueProblem>> {
        self.map.values()
    }
}

/// Central-difference check of the analytic first derivatives at `points`.
/// Returns the worst relative deviation seen.
pub fn max_derivative_deviation(p: &TrueProblem, points: &[DVector<f64>], h: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for x in points {
        let g = p.eval_g0(x);
        let j = p.eval_ji(x);
        for k in 0..p.n() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let fd_g = (p.eval_f0(&xp) - p.eval_f0(&xm)) / (2.0 * h);
            worst = worst.max((fd_g - g[k]).abs() / (1.0 + g[k].abs()));
            let cp = p.eval_ci(&xp);
            let cm = p.eval_ci(&xm);
            for i in 0..p.q() {
                let fd_j = (cp[i] - cm[i]) / (2.0 * h);
                worst = worst.max((fd_j - j[(i, k)]).abs() / (1.0 + j[(i, k)].abs()));
            }
        }
    }
    worst
}
