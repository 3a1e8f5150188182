//! Online quadratic optimization over `{x ∈ X : Ax = b}` with a compact
//! simple set `X`.
//!
//! The split introduces a copy variable: minimize `½xᵀG_t x + c_tᵀx + δ_X(z)`
//! subject to the stacked constraint `(Ax − b, x − z) = 0`, with multiplier
//! `(μ, λ)`. Choosing the per-round x-proximal operator
//!
//! ```text
//! S_t = α·I − (1/√N)·G_t − AᵀA      (α large enough that S_t ⪰ 0)
//! ```
//!
//! and penalty `σ = √N` collapses the x-subproblem's coefficient matrix to
//! `√N(α+1)·I`, so both subproblems are solvable in closed form:
//!
//! ```text
//! x⁺ = [−c_k − Aᵀμ − λ] / ((α+1)√N) + [Aᵀb + z + S_k x] / (α+1)
//! z⁺ = Π_X(x⁺ + λ/√N)
//! ```
//!
//! The generic engine run on the stacked formulation produces the same
//! iterates; the test suite pins the two routes against each other to
//! `1e-10`.

use crate::engine::SSchedule;
use crate::linalg::{sym_eigenvalues, Matrix, PsdOperator, Vector};
use crate::problem::{CouplingConstraint, OnlineStream, ProblemError, QuadCost, Regularizer};
pub use crate::sets::SimpleSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Euclidean projection onto a simple set (delegates to [`SimpleSet::project`]).
pub fn project(set: &SimpleSet, v: &Vector) -> Vector {
    set.project(v)
}

/// Margin added above the smallest admissible `α`.
pub const ALPHA_MARGIN: f64 = 1e-8;

/// The smallest `α` (plus a safety margin) making every
/// `α·I − (1/√N)·G_t − AᵀA` positive semidefinite:
/// `α = max_t λ_max((1/√N)·G_t + AᵀA) + margin`.
pub fn choose_alpha(costs: &[QuadCost], a: &Matrix, n_rounds: usize) -> f64 {
    assert!(!costs.is_empty(), "nonempty cost family required");
    let weight = 1.0 / (n_rounds as f64).sqrt();
    let gram = a.transpose() * a;
    let mut alpha: f64 = 0.0;
    for cost in costs {
        let m = cost.curvature().matrix() * weight + &gram;
        let lam_max = sym_eigenvalues(&m).max();
        alpha = alpha.max(lam_max);
    }
    alpha + ALPHA_MARGIN
}

/// Assemble and certify `S_t = α·I − (1/√N)·G_t − AᵀA`.
pub fn build_s_t(
    cost: &QuadCost,
    a: &Matrix,
    n_rounds: usize,
    alpha: f64,
) -> Result<PsdOperator, ProblemError> {
    let n = cost.dim();
    let weight = 1.0 / (n_rounds as f64).sqrt();
    let m = Matrix::identity(n, n) * alpha
        - cost.curvature().matrix() * weight
        - a.transpose() * a;
    PsdOperator::new(m)
        .map_err(|e| ProblemError::InvalidSet(format!("alpha too small for a PSD schedule: {e}")))
}

/// Iterate of the closed-form specialization: the decision `x`, its copy
/// `z ∈ X`, and the two multiplier blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct QpState {
    pub x: Vector,
    pub z: Vector,
    pub mu: Vector,
    pub lambda: Vector,
    pub round: usize,
}

impl QpState {
    pub fn new(x: Vector, z: Vector, mu: Vector, lambda: Vector) -> Self {
        Self { x, z, mu, lambda, round: 1 }
    }
}

/// Closed-form x-update; valid under `σ = √N` and `S_k` from [`build_s_t`].
pub fn qp_x_update(
    state: &QpState,
    cost: &QuadCost,
    a: &Matrix,
    b: &Vector,
    s_k: &PsdOperator,
    n_rounds: usize,
) -> Vector {
    let sqrt_n = (n_rounds as f64).sqrt();
    // recover α from the schedule: S_k + (1/√N)G_k + AᵀA = α·I
    let alpha = (s_k.matrix()
        + cost.curvature().matrix() / sqrt_n
        + a.transpose() * a)[(0, 0)];
    let first = (-cost.linear() - a.transpose() * &state.mu - &state.lambda)
        / ((alpha + 1.0) * sqrt_n);
    let second = (a.transpose() * b + &state.z + s_k.apply(&state.x)) / (alpha + 1.0);
    first + second
}

/// Closed-form z-update `z⁺ = Π_X(x⁺ + λ/√N)`; valid under `σ = √N`.
pub fn qp_z_update(state: &QpState, x_new: &Vector, set: &SimpleSet, n_rounds: usize) -> Vector {
    let sqrt_n = (n_rounds as f64).sqrt();
    set.project(&(x_new + &state.lambda / sqrt_n))
}

/// The two multiplier ascents of the stacked constraint.
pub fn qp_dual_update(
    state: &QpState,
    x_new: &Vector,
    z_new: &Vector,
    a: &Matrix,
    b: &Vector,
    tau: f64,
    n_rounds: usize,
) -> (Vector, Vector) {
    let step = tau * (n_rounds as f64).sqrt();
    let mu = &state.mu + (a * x_new - b) * step;
    let lambda = &state.lambda + (x_new - z_new) * step;
    (mu, lambda)
}

/// Serializable description of a random QP stream instance.
///
/// `G_t = MᵀM` with `M` entries uniform in `[-G_scale, G_scale]`, `c_t`
/// uniform in `[-c_scale, c_scale]`; `A` has entries uniform in `[-1, 1]`
/// and `b = A·x₀` for a deterministic interior point `x₀` of `X`, so the
/// decision set is nonempty by construction.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QpStreamConfig {
    pub n: usize,
    pub m: usize,
    #[serde(rename = "N")]
    pub horizon: usize,
    pub seed: u64,
    #[serde(rename = "G_scale")]
    pub g_scale: f64,
    #[serde(rename = "c_scale")]
    pub c_scale: f64,
    #[serde(rename = "X")]
    pub set: SimpleSetSpec,
    /// Draw the curvature once and reuse it each round (keeps the proximal
    /// schedule constant, hence trivially monotone).
    #[serde(default, rename = "fixed_G")]
    pub fixed_g: bool,
}

/// Plain-JSON shape of a simple set.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimpleSetSpec {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    Simplex { dim: usize },
    UnitBox { dim: usize },
}

impl SimpleSetSpec {
    pub fn build(&self) -> Result<SimpleSet, ProblemError> {
        let set = match self {
            SimpleSetSpec::Box { lo, hi } => SimpleSet::Box {
                lo: Vector::from_row_slice(lo),
                hi: Vector::from_row_slice(hi),
            },
            SimpleSetSpec::Ball { center, radius } => SimpleSet::Ball {
                center: Vector::from_row_slice(center),
                radius: *radius,
            },
            SimpleSetSpec::Simplex { dim } => SimpleSet::Simplex { dim: *dim },
            SimpleSetSpec::UnitBox { dim } => SimpleSet::unit_box(*dim),
        };
        set.validate().map_err(ProblemError::InvalidSet)?;
        Ok(set)
    }

    pub fn from_set(set: &SimpleSet) -> Self {
        match set {
            SimpleSet::Box { lo, hi } => SimpleSetSpec::Box {
                lo: lo.iter().copied().collect(),
                hi: hi.iter().copied().collect(),
            },
            SimpleSet::Ball { center, radius } => SimpleSetSpec::Ball {
                center: center.iter().copied().collect(),
                radius: *radius,
            },
            SimpleSet::Simplex { dim } => SimpleSetSpec::Simplex { dim: *dim },
        }
    }
}

/// A materialized QP stream instance, carrying both the closed-form data and
/// its stacked general-form view.
#[derive(Debug, Clone)]
pub struct QpInstance {
    pub a: Matrix,
    pub b: Vector,
    pub set: SimpleSet,
    pub stream: OnlineStream,
    /// Interior anchor with `A·x₀ = b`; also the default starting point.
    pub x0: Vector,
    pub alpha: f64,
}

/// Generator stream index reserved for instance-level draws (`A`, `x₀`).
const INSTANCE_DRAW_STREAM: u64 = u64::MAX;

impl QpInstance {
    pub fn build(config: &QpStreamConfig) -> Result<Self, ProblemError> {
        let set = config.set.build()?;
        if set.dim() != config.n {
            return Err(ProblemError::Dimension { expected: config.n, got: set.dim() });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(INSTANCE_DRAW_STREAM);
        let a = Matrix::from_fn(config.m, config.n, |_, _| rng.gen_range(-1.0..=1.0));
        let x0 = set.interior_point(&mut rng);
        let b = &a * &x0;
        let stream = OnlineStream::Quadratic {
            seed: config.seed,
            horizon: config.horizon,
            n: config.n,
            g_scale: config.g_scale,
            c_scale: config.c_scale,
            fixed_g: config.fixed_g,
        };
        let costs = stream.materialize()?;
        let alpha = choose_alpha(&costs, &a, config.horizon);
        Ok(Self { a, b, set, stream, x0, alpha })
    }

    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    /// The stacked coupling constraint `(Ax − b, x − z) = 0`.
    pub fn coupling(&self) -> CouplingConstraint {
        let n = self.n();
        let a = crate::linalg::vcat(&self.a, &Matrix::identity(n, n));
        let b = crate::linalg::vcat(&Matrix::zeros(self.m(), n), &(-Matrix::identity(n, n)));
        let c = crate::linalg::stack2(&self.b, &Vector::zeros(n));
        CouplingConstraint::new(a, b, c).expect("stacked shapes are consistent")
    }

    pub fn regularizer(&self) -> Regularizer {
        Regularizer::Indicator(self.set.clone())
    }

    /// The per-round proximal schedule in generic-engine form. The Gram term
    /// uses the original `A`, not the stacked map.
    pub fn schedule(&self) -> SSchedule {
        SSchedule::CurvatureAdaptive {
            alpha: self.alpha,
            curvature_weight: 1.0 / (self.stream.horizon() as f64).sqrt(),
            gram: self.a.transpose() * &self.a,
        }
    }

    /// Feasible default start `(x₀, x₀, 0)`.
    pub fn default_init(&self) -> crate::engine::SolverState {
        crate::engine::SolverState::new(
            self.x0.clone(),
            self.x0.clone(),
            Vector::zeros(self.m() + self.n()),
        )
    }

    /// Split a stacked multiplier into its `(μ, λ)` blocks.
    pub fn split_dual(&self, y: &Vector) -> (Vector, Vector) {
        (y.rows(0, self.m()).into_owned(), y.rows(self.m(), self.n()).into_owned())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{x_update, z_update, ProximalScaling, SolverConfig, SolverState};
    use rand::SeedableRng;

    fn vecn(s: &[f64]) -> Vector {
        Vector::from_row_slice(s)
    }

    #[test]
    fn alpha_margin_only_when_everything_vanishes() {
        let costs = vec![QuadCost::zero(2)];
        let a = Matrix::zeros(1, 2);
        assert_eq!(choose_alpha(&costs, &a, 4), ALPHA_MARGIN);
    }

    #[test]
    fn alpha_from_cost_curvature() {
        let costs =
            vec![QuadCost::new(PsdOperator::identity(2), Vector::zeros(2)).unwrap()];
        let a = Matrix::zeros(1, 2);
        // λ_max(G) = 1 at N = 1
        assert!((choose_alpha(&costs, &a, 1) - (1.0 + ALPHA_MARGIN)).abs() < 1e-12);
    }

    #[test]
    fn alpha_from_constraint_gram() {
        let costs = vec![QuadCost::zero(2)];
        let a = Matrix::identity(2, 2);
        assert!((choose_alpha(&costs, &a, 100) - (1.0 + ALPHA_MARGIN)).abs() < 1e-12);
    }

    #[test]
    fn schedule_matrix_shapes() {
        let cost = QuadCost::zero(2);
        let a = Matrix::zeros(1, 2);
        let s = build_s_t(&cost, &a, 9, 1.0).unwrap();
        assert_eq!(s.matrix(), &Matrix::identity(2, 2));
        let cost = QuadCost::new(PsdOperator::identity(2), Vector::zeros(2)).unwrap();
        // α·I − (1/√4)·I = 0.5·I
        let s = build_s_t(&cost, &a, 4, 1.0).unwrap();
        assert_eq!(s.matrix(), &(Matrix::identity(2, 2) * 0.5));
    }

    #[test]
    fn schedule_rejects_small_alpha() {
        let cost = QuadCost::new(PsdOperator::scaled_identity(2, 4.0), Vector::zeros(2)).unwrap();
        let a = Matrix::identity(2, 2);
        assert!(build_s_t(&cost, &a, 1, 1.0).is_err());
    }

    #[test]
    fn x_update_all_zero_data() {
        let cost = QuadCost::zero(2);
        let a = Matrix::zeros(1, 2);
        let s = build_s_t(&cost, &a, 1, 1.0).unwrap();
        let state =
            QpState::new(Vector::zeros(2), Vector::zeros(2), Vector::zeros(1), Vector::zeros(2));
        let x = qp_x_update(&state, &cost, &a, &Vector::zeros(1), &s, 1);
        assert_eq!(x, Vector::zeros(2));
    }

    #[test]
    fn x_update_scalar_hand_value() {
        // n = m = 1, c = 0, μ = λ = 0, A = 1, b = 2, z = 0, S = 0, α = 1,
        // N = 1: x = ½·(Aᵀb) = 1
        let cost = QuadCost::zero(1);
        let a = Matrix::identity(1, 1);
        let s = PsdOperator::zero(1);
        let state =
            QpState::new(Vector::zeros(1), Vector::zeros(1), Vector::zeros(1), Vector::zeros(1));
        let x = qp_x_update(&state, &cost, &a, &vecn(&[2.0]), &s, 1);
        assert!((x[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn z_update_projection_behaviour() {
        let set = SimpleSet::unit_box(2);
        let state = QpState::new(
            Vector::zeros(2),
            Vector::zeros(2),
            Vector::zeros(1),
            Vector::zeros(2),
        );
        // λ = 0 and x⁺ ∈ X: projection fixes it
        let inside = vecn(&[0.5, -0.5]);
        assert_eq!(qp_z_update(&state, &inside, &set, 4), inside);
        // componentwise clamp outside
        let outside = vecn(&[1.5, -0.2]);
        let set01 = SimpleSet::Box { lo: Vector::zeros(2), hi: Vector::from_element(2, 1.0) };
        assert_eq!(qp_z_update(&state, &outside, &set01, 4), vecn(&[1.0, 0.0]));
    }

    #[test]
    fn z_update_simplex_vertex() {
        let set = SimpleSet::Simplex { dim: 2 };
        let state = QpState::new(
            Vector::zeros(2),
            Vector::zeros(2),
            Vector::zeros(1),
            Vector::zeros(2),
        );
        let z = qp_z_update(&state, &vecn(&[2.0, 0.0]), &set, 1);
        assert!((z - vecn(&[1.0, 0.0])).norm() < 1e-12);
    }

    #[test]
    fn closed_form_matches_generic_engine() {
        // random states and rounds: both routes must agree to 1e-10
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let config = QpStreamConfig {
            n: 3,
            m: 2,
            horizon: 16,
            seed: 99,
            g_scale: 1.0,
            c_scale: 1.0,
            set: SimpleSetSpec::UnitBox { dim: 3 },
            fixed_g: false,
        };
        let inst = QpInstance::build(&config).unwrap();
        let cc = inst.coupling();
        let reg = inst.regularizer();
        let sqrt_n = (inst.stream.horizon() as f64).sqrt();
        let engine_cfg = SolverConfig {
            sigma: sqrt_n,
            tau: 1.0,
            t_op: PsdOperator::zero(3),
            s_schedule: inst.schedule(),
            scaling: ProximalScaling::Online,
        };
        for _ in 0..25 {
            use rand::Rng;
            let t = rng.gen_range(1..=inst.stream.horizon());
            let cost = inst.stream.cost(t).unwrap();
            let x = Vector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
            let z = Vector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
            let mu = Vector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
            let lambda = Vector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
            let qp_state = QpState::new(x.clone(), z.clone(), mu.clone(), lambda.clone());
            let gen_state =
                SolverState::new(x, z, crate::linalg::stack2(&mu, &lambda));
            let s_k = build_s_t(&cost, &inst.a, inst.stream.horizon(), inst.alpha).unwrap();
            let x_closed =
                qp_x_update(&qp_state, &cost, &inst.a, &inst.b, &s_k, inst.stream.horizon());
            let x_generic = x_update(&cost, &gen_state, &engine_cfg, &cc).unwrap();
            assert!(
                (&x_closed - &x_generic).norm() < 1e-10,
                "x mismatch: {:e}",
                (&x_closed - &x_generic).norm()
            );
            let z_closed = qp_z_update(&qp_state, &x_closed, &inst.set, inst.stream.horizon());
            let z_generic = z_update(&reg, &x_closed, &gen_state, &engine_cfg, &cc).unwrap();
            assert!(
                (&z_closed - &z_generic).norm() < 1e-10,
                "z mismatch: {:e}",
                (&z_closed - &z_generic).norm()
            );
        }
    }

    #[test]
    fn instance_anchor_is_feasible() {
        let config = QpStreamConfig {
            n: 4,
            m: 2,
            horizon: 9,
            seed: 3,
            g_scale: 1.0,
            c_scale: 1.0,
            set: SimpleSetSpec::Simplex { dim: 4 },
            fixed_g: true,
        };
        let inst = QpInstance::build(&config).unwrap();
        assert!(inst.set.contains(&inst.x0, 1e-12));
        assert!((inst.a.clone() * &inst.x0 - &inst.b).norm() < 1e-12);
        let cc = inst.coupling();
        let init = inst.default_init();
        assert!(cc.residual(&init.x, &init.z).unwrap() < 1e-12);
    }

    #[test]
    fn projection_idempotence_and_optimality() {
        use rand::Rng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let sets = vec![
            SimpleSet::unit_box(4),
            SimpleSet::Ball { center: Vector::from_element(4, 0.2), radius: 1.3 },
            SimpleSet::Simplex { dim: 4 },
        ];
        for set in &sets {
            for _ in 0..100 {
                let v = Vector::from_fn(4, |_, _| rng.gen_range(-3.0..3.0));
                let p = set.project(&v);
                // idempotence
                assert!((set.project(&p) - &p).norm() < 1e-12);
                // variational inequality against random members
                let q = set.project(&Vector::from_fn(4, |_, _| rng.gen_range(-3.0..3.0)));
                let ip = (&v - &p).dot(&(&q - &p));
                assert!(ip <= 1e-10, "projection optimality violated: {ip}");
            }
        }
    }
}
