//! The semi-proximal splitting iteration.
//!
//! One step minimizes the augmented Lagrangian blockwise and then ascends
//! the multiplier:
//!
//! ```text
//! x⁺ = argmin_x  f(x) + ⟨y, Ax⟩ + (σ/2)‖Ax + Bz − c‖² + (ρ/2)‖x − x‖²_S
//! z⁺ = argmin_z  g(z) + ⟨y, Bz⟩ + (σ/2)‖Ax⁺ + Bz − c‖² + (1/2)‖z − z‖²_T
//! y⁺ = y + τσ(Ax⁺ + Bz⁺ − c)
//! ```
//!
//! The proximal operators `S` (per round, possibly varying) and `T` are only
//! required to be PSD; they exist to make the subproblems uniquely solvable
//! even when `f`, `g`, `A`, `B` individually are degenerate. The scalar `ρ`
//! is `σ` in the online variant and `1` in the offline one — the two
//! published shapes of the x-proximal term — and both share this code path.
//!
//! The dual step-length `τ` is admissible on `(0, (1+√5)/2)`; the upper
//! endpoint itself is rejected at configuration time because every
//! certified decrease estimate degenerates there.

use crate::linalg::{Matrix, PsdOperator, Vector};
use crate::problem::{CouplingConstraint, ProblemError, QuadCost, Regularizer};
use rand::Rng;
use thiserror::Error;

/// The golden ratio `(1+√5)/2`, the open upper limit for `τ`.
pub const TAU_LIMIT: f64 = 1.618033988749895;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("tau out of range (0, (1+sqrt(5))/2): got {0}")]
    TauOutOfRange(f64),
    #[error("sigma must be positive: got {0}")]
    SigmaNotPositive(f64),
    #[error("proximal schedule produced a non-PSD operator: {0}")]
    ScheduleNotPsd(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// Which of the two published x-proximal scalings is in force.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProximalScaling {
    /// `(σ/2)‖x − xᵏ‖²_{S_k}` — the online shape.
    Online,
    /// `(1/2)‖x − xᵏ‖²_{S_k}` — the offline shape.
    Offline,
}

impl ProximalScaling {
    /// The multiplier `ρ` applied to `S_k` inside the x-subproblem.
    pub fn factor(&self, sigma: f64) -> f64 {
        match self {
            ProximalScaling::Online => sigma,
            ProximalScaling::Offline => 1.0,
        }
    }
}

/// Round-indexed choice of the x-proximal operator `S_k`.
#[derive(Debug, Clone)]
pub enum SSchedule {
    /// The same operator every round.
    Constant(PsdOperator),
    /// `α·I − w·G_k − AᵀA`, rebuilt from each round's cost curvature `G_k`.
    /// `gram` holds the fixed `AᵀA` part and `w` the curvature weight.
    CurvatureAdaptive { alpha: f64, curvature_weight: f64, gram: Matrix },
}

impl SSchedule {
    pub fn zero(n: usize) -> Self {
        SSchedule::Constant(PsdOperator::zero(n))
    }

    /// The operator for a round whose cost has the given curvature.
    pub fn operator(&self, cost: &QuadCost) -> Result<PsdOperator, EngineError> {
        match self {
            SSchedule::Constant(s) => Ok(s.clone()),
            SSchedule::CurvatureAdaptive { alpha, curvature_weight, gram } => {
                let n = gram.nrows();
                let m = Matrix::identity(n, n) * *alpha
                    - cost.curvature().matrix() * *curvature_weight
                    - gram;
                PsdOperator::new(m).map_err(|e| {
                    EngineError::ScheduleNotPsd(format!("alpha too small: {e}"))
                })
            }
        }
    }
}

/// Full parameterization of the iteration.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Penalty parameter `σ > 0`.
    pub sigma: f64,
    /// Dual step-length `τ ∈ (0, (1+√5)/2)`.
    pub tau: f64,
    /// The z-proximal operator `T`.
    pub t_op: PsdOperator,
    /// The x-proximal schedule `S_k`.
    pub s_schedule: SSchedule,
    /// Online (`σ·S_k`) or offline (`S_k`) x-proximal scaling.
    pub scaling: ProximalScaling,
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if !(self.sigma > 0.0) {
            return Err(EngineError::SigmaNotPositive(self.sigma));
        }
        if !(self.tau > 0.0 && self.tau < TAU_LIMIT) {
            return Err(EngineError::TauOutOfRange(self.tau));
        }
        Ok(())
    }

    /// The scalar `ρ` multiplying `S_k`.
    pub fn prox_factor(&self) -> f64 {
        self.scaling.factor(self.sigma)
    }
}

/// The iterate triple plus the one-step history the decrease estimates need.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub x: Vector,
    pub z: Vector,
    /// `z` of the previous round; equal to `z` at round 1, so the history
    /// term of every certified inequality is well defined from the start.
    pub z_prev: Vector,
    pub y: Vector,
    /// Round counter, starting at 1.
    pub round: usize,
}

impl SolverState {
    pub fn new(x: Vector, z: Vector, y: Vector) -> Self {
        let z_prev = z.clone();
        Self { x, z, z_prev, y, round: 1 }
    }

    pub fn zeros(cc: &CouplingConstraint) -> Self {
        Self::new(
            Vector::zeros(cc.x_dim()),
            Vector::zeros(cc.z_dim()),
            Vector::zeros(cc.y_dim()),
        )
    }
}

/// What one step produced: the new triple, the loss of the driving cost at
/// the new pair, and the constraint violation.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub x_new: Vector,
    pub z_new: Vector,
    pub y_new: Vector,
    /// `f(x⁺) + g(z⁺)` for the cost `f` that drove this step.
    pub loss: f64,
    /// `‖Ax⁺ + Bz⁺ − c‖`.
    pub residual: f64,
}

/// The augmented Lagrangian
/// `f(x) + g(z) + ⟨y, Ax + Bz − c⟩ + (σ/2)‖Ax + Bz − c‖²`;
/// `+∞` exactly when `g(z) = +∞`.
pub fn aug_lagrangian(
    f: &QuadCost,
    g: &Regularizer,
    cc: &CouplingConstraint,
    sigma: f64,
    x: &Vector,
    z: &Vector,
    y: &Vector,
) -> Result<f64, EngineError> {
    let r = cc.residual_vec(x, z)?;
    let gz = g.value(z);
    if gz.is_infinite() {
        return Ok(f64::INFINITY);
    }
    Ok(f.value(x) + gz + y.dot(&r) + 0.5 * sigma * r.norm_squared())
}

fn x_quadratic_shift(
    cc: &CouplingConstraint,
    sigma: f64,
    rho: f64,
    s_k: &PsdOperator,
    state: &SolverState,
) -> (Matrix, Vector) {
    let a = cc.a();
    let p = a.transpose() * a * sigma + s_k.matrix() * rho;
    let q = a.transpose() * &state.y
        + a.transpose() * (cc.b() * &state.z - cc.c()) * sigma
        - s_k.apply(&state.x) * rho;
    (p, q)
}

fn z_quadratic_shift(
    cc: &CouplingConstraint,
    sigma: f64,
    t_op: &PsdOperator,
    state: &SolverState,
    x_new: &Vector,
) -> (Matrix, Vector) {
    let b = cc.b();
    let p = b.transpose() * b * sigma + t_op.matrix();
    let q = b.transpose() * &state.y
        + b.transpose() * (cc.a() * x_new - cc.c()) * sigma
        - t_op.apply(&state.z);
    (p, q)
}

/// Exact x-subproblem solve for the current round.
pub fn x_update(
    f: &QuadCost,
    state: &SolverState,
    config: &SolverConfig,
    cc: &CouplingConstraint,
) -> Result<Vector, EngineError> {
    let s_k = config.s_schedule.operator(f)?;
    x_update_with(f, state, config, cc, &s_k)
}

fn x_update_with(
    f: &QuadCost,
    state: &SolverState,
    config: &SolverConfig,
    cc: &CouplingConstraint,
    s_k: &PsdOperator,
) -> Result<Vector, EngineError> {
    let (p, q) = x_quadratic_shift(cc, config.sigma, config.prox_factor(), s_k, state);
    Ok(f.solve_shifted(&p, &q)?)
}

/// Exact z-subproblem solve, given the freshly updated `x`.
pub fn z_update(
    g: &Regularizer,
    x_new: &Vector,
    state: &SolverState,
    config: &SolverConfig,
    cc: &CouplingConstraint,
) -> Result<Vector, EngineError> {
    let (p, q) = z_quadratic_shift(cc, config.sigma, &config.t_op, state, x_new);
    Ok(g.solve_shifted(&p, &q)?)
}

/// Multiplier ascent `y⁺ = y + τσ(Ax⁺ + Bz⁺ − c)`.
pub fn dual_update(
    state: &SolverState,
    config: &SolverConfig,
    cc: &CouplingConstraint,
    x_new: &Vector,
    z_new: &Vector,
) -> Result<Vector, EngineError> {
    let r = cc.residual_vec(x_new, z_new)?;
    Ok(&state.y + r * (config.tau * config.sigma))
}

/// One full iteration: x-update, z-update, dual update, history shift.
pub fn step(
    f: &QuadCost,
    g: &Regularizer,
    cc: &CouplingConstraint,
    state: &SolverState,
    config: &SolverConfig,
) -> Result<(SolverState, StepRecord), EngineError> {
    step_perturbed(f, g, cc, state, config, None)
}

/// Which update a deliberate fault targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateTarget {
    XUpdate,
    ZUpdate,
    DualUpdate,
}

/// A deliberate fault injected after one of the three updates. Exists so the
/// certification suite can prove its inequalities are not vacuous: breaking
/// any update must break at least one certified inequality.
#[derive(Debug, Clone, Copy)]
pub struct Perturbation {
    pub target: UpdateTarget,
    pub magnitude: f64,
}

impl Perturbation {
    fn apply(&self, target: UpdateTarget, v: &mut Vector) {
        if self.target == target && !v.is_empty() {
            v[0] += self.magnitude;
        }
    }
}

/// [`step`] with an optional injected fault.
pub fn step_perturbed(
    f: &QuadCost,
    g: &Regularizer,
    cc: &CouplingConstraint,
    state: &SolverState,
    config: &SolverConfig,
    perturbation: Option<&Perturbation>,
) -> Result<(SolverState, StepRecord), EngineError> {
    config.validate()?;
    let s_k = config.s_schedule.operator(f)?;
    let mut x_new = x_update_with(f, state, config, cc, &s_k)?;
    if let Some(p) = perturbation {
        p.apply(UpdateTarget::XUpdate, &mut x_new);
    }
    let mut z_new = z_update(g, &x_new, state, config, cc)?;
    if let Some(p) = perturbation {
        p.apply(UpdateTarget::ZUpdate, &mut z_new);
    }
    let mut y_new = dual_update(state, config, cc, &x_new, &z_new)?;
    if let Some(p) = perturbation {
        p.apply(UpdateTarget::DualUpdate, &mut y_new);
    }
    let residual = cc.residual(&x_new, &z_new)?;
    let loss = f.value(&x_new) + g.value(&z_new);
    let record = StepRecord {
        x_new: x_new.clone(),
        z_new: z_new.clone(),
        y_new: y_new.clone(),
        loss,
        residual,
    };
    let next = SolverState {
        x: x_new,
        z: z_new,
        z_prev: state.z.clone(),
        y: y_new,
        round: state.round + 1,
    };
    Ok((next, record))
}

/// The x-subproblem objective at an arbitrary point, for optimality probes.
pub fn x_subproblem_objective(
    f: &QuadCost,
    cc: &CouplingConstraint,
    config: &SolverConfig,
    state: &SolverState,
    s_k: &PsdOperator,
    x: &Vector,
) -> f64 {
    let r = cc.a() * x + cc.b() * &state.z - cc.c();
    let dx = x - &state.x;
    f.value(x)
        + state.y.dot(&r)
        + 0.5 * config.sigma * r.norm_squared()
        + 0.5 * config.prox_factor() * s_k.quad_form(&dx)
}

/// The z-subproblem objective at an arbitrary point (may be `+∞`).
pub fn z_subproblem_objective(
    g: &Regularizer,
    cc: &CouplingConstraint,
    config: &SolverConfig,
    state: &SolverState,
    x_new: &Vector,
    z: &Vector,
) -> f64 {
    let gz = g.value(z);
    if gz.is_infinite() {
        return f64::INFINITY;
    }
    let r = cc.a() * x_new + cc.b() * z - cc.c();
    let dz = z - &state.z;
    gz + state.y.dot(&r) + 0.5 * config.sigma * r.norm_squared() + 0.5 * config.t_op.quad_form(&dz)
}

/// Probe the accepted x-minimizer along `directions` random unit directions
/// at offset `eps`; returns the smallest directional objective change
/// `(φ(x⁺+εd) − φ(x⁺))/ε`. Nonnegative (up to rounding) certifies optimality.
pub fn x_optimality_probe<R: Rng>(
    f: &QuadCost,
    cc: &CouplingConstraint,
    config: &SolverConfig,
    state: &SolverState,
    x_star: &Vector,
    directions: usize,
    eps: f64,
    rng: &mut R,
) -> Result<f64, EngineError> {
    let s_k = config.s_schedule.operator(f)?;
    let base = x_subproblem_objective(f, cc, config, state, &s_k, x_star);
    let mut worst = f64::INFINITY;
    for _ in 0..directions {
        let d = random_unit(x_star.len(), rng);
        let probe = x_star + d * eps;
        let val = x_subproblem_objective(f, cc, config, state, &s_k, &probe);
        worst = worst.min((val - base) / eps);
    }
    Ok(worst)
}

/// Same probe for the z-minimizer, with candidate points pulled back into
/// `dom g` for indicator regularizers.
pub fn z_optimality_probe<R: Rng>(
    g: &Regularizer,
    cc: &CouplingConstraint,
    config: &SolverConfig,
    state: &SolverState,
    x_new: &Vector,
    z_star: &Vector,
    directions: usize,
    eps: f64,
    rng: &mut R,
) -> f64 {
    let base = z_subproblem_objective(g, cc, config, state, x_new, z_star);
    let mut worst = f64::INFINITY;
    for _ in 0..directions {
        let d = random_unit(z_star.len(), rng);
        let mut probe = z_star + d * eps;
        if let Regularizer::Indicator(set) = g {
            probe = set.project(&probe);
        }
        let step_len = (&probe - z_star).norm();
        if step_len < eps * 1e-6 {
            continue;
        }
        let val = z_subproblem_objective(g, cc, config, state, x_new, &probe);
        worst = worst.min((val - base) / step_len);
    }
    if worst == f64::INFINITY {
        0.0
    } else {
        worst
    }
}

fn random_unit<R: Rng>(n: usize, rng: &mut R) -> Vector {
    if n == 0 {
        return Vector::zeros(0);
    }
    loop {
        let v = Vector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let norm = v.norm();
        if norm > 1e-6 {
            return v / norm;
        }
    }
}
