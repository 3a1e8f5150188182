//! The composite problem model: a coupling constraint `Ax + Bz = c`, a
//! static regularizer `g` over the auxiliary space, and a stream of per-round
//! convex costs `f_t` over the decision space.
//!
//! Costs in this crate are convex quadratics `½⟨x, Gx⟩ + ⟨c, x⟩` (linear when
//! `G = 0`); each carries its strong-convexity operator (`G` itself) and an
//! exact solver for the shifted quadratic subproblems the splitting method
//! produces. Regularizers may take the value `+∞`: indicator functions of
//! simple sets and affine sets are first-class, which is what lets the model
//! express constrained decision sets without smoothness assumptions.

use crate::linalg::{check_finite, solve_spd, solve_square, Matrix, PsdOperator, Vector};
use crate::sets::SimpleSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("coupling constraint dimensions disagree: A is {a_rows}x{a_cols}, B is {b_rows}x{b_cols}, c has length {c_len}")]
    CouplingShape { a_rows: usize, a_cols: usize, b_rows: usize, b_cols: usize, c_len: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("x-subproblem not positive definite: the cost curvature plus the quadratic shift must be positive definite")]
    XSubproblemSingular,
    #[error("z-subproblem not positive definite: the regularizer curvature plus the quadratic shift must be positive definite")]
    ZSubproblemSingular,
    #[error("z-subproblem has no closed form: {0}")]
    UnsupportedProx(String),
    #[error("invalid set: {0}")]
    InvalidSet(String),
    #[error("round index {round} outside 1..={horizon}")]
    RoundOutOfRange { round: usize, horizon: usize },
    #[error("non-finite data: {0}")]
    NonFinite(String),
}

/// The pair of linear maps and right-hand side defining the feasible set
/// `{(x, z) : Ax + Bz = c}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingConstraint {
    a: Matrix,
    b: Matrix,
    c: Vector,
}

impl CouplingConstraint {
    pub fn new(a: Matrix, b: Matrix, c: Vector) -> Result<Self, ProblemError> {
        if a.nrows() != b.nrows() || a.nrows() != c.len() {
            return Err(ProblemError::CouplingShape {
                a_rows: a.nrows(),
                a_cols: a.ncols(),
                b_rows: b.nrows(),
                b_cols: b.ncols(),
                c_len: c.len(),
            });
        }
        check_finite(&c).map_err(|e| ProblemError::NonFinite(e.to_string()))?;
        Ok(Self { a, b, c })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn c(&self) -> &Vector {
        &self.c
    }

    pub fn x_dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn z_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn y_dim(&self) -> usize {
        self.c.len()
    }

    /// The residual vector `Ax + Bz − c`.
    pub fn residual_vec(&self, x: &Vector, z: &Vector) -> Result<Vector, ProblemError> {
        if x.len() != self.x_dim() {
            return Err(ProblemError::Dimension { expected: self.x_dim(), got: x.len() });
        }
        if z.len() != self.z_dim() {
            return Err(ProblemError::Dimension { expected: self.z_dim(), got: z.len() });
        }
        Ok(&self.a * x + &self.b * z - &self.c)
    }

    /// The constraint violation `‖Ax + Bz − c‖`.
    pub fn residual(&self, x: &Vector, z: &Vector) -> Result<f64, ProblemError> {
        Ok(self.residual_vec(x, z)?.norm())
    }
}

/// Convenience: the constraint violation of a pair under a constraint.
pub fn residual(cc: &CouplingConstraint, x: &Vector, z: &Vector) -> Result<f64, ProblemError> {
    cc.residual(x, z)
}

/// A convex quadratic round cost `f(x) = ½⟨x, Gx⟩ + ⟨c, x⟩` with `G` PSD.
///
/// `G` doubles as the cost's strong-convexity operator; a zero `G` makes the
/// cost linear (merely convex), which is always an admissible choice.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadCost {
    curvature: PsdOperator,
    linear: Vector,
}

impl QuadCost {
    pub fn new(curvature: PsdOperator, linear: Vector) -> Result<Self, ProblemError> {
        if curvature.dim() != linear.len() {
            return Err(ProblemError::Dimension { expected: curvature.dim(), got: linear.len() });
        }
        check_finite(&linear).map_err(|e| ProblemError::NonFinite(e.to_string()))?;
        Ok(Self { curvature, linear })
    }

    pub fn linear_only(linear: Vector) -> Self {
        let n = linear.len();
        Self { curvature: PsdOperator::zero(n), linear }
    }

    pub fn zero(n: usize) -> Self {
        Self::linear_only(Vector::zeros(n))
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn curvature(&self) -> &PsdOperator {
        &self.curvature
    }

    pub fn linear(&self) -> &Vector {
        &self.linear
    }

    pub fn value(&self, x: &Vector) -> f64 {
        0.5 * self.curvature.quad_form(x) + self.linear.dot(x)
    }

    /// The gradient, which is the unique subgradient of a quadratic.
    pub fn gradient(&self, x: &Vector) -> Vector {
        self.curvature.apply(x) + &self.linear
    }

    /// Exact minimizer of `f(x) + ½⟨x, Px⟩ + ⟨q, x⟩` for PSD `P`: solves
    /// `(G + P) x = −(c + q)` by Cholesky. Singular systems are rejected
    /// rather than resolved by pseudo-inverse, since a non-unique minimizer
    /// means the positive-definiteness precondition failed.
    pub fn solve_shifted(&self, p: &Matrix, q: &Vector) -> Result<Vector, ProblemError> {
        let m = self.curvature.matrix() + p;
        let rhs = -(&self.linear + q);
        solve_spd(&m, &rhs).ok_or(ProblemError::XSubproblemSingular)
    }

    /// Pointwise sum of two costs on the same space.
    pub fn add(&self, other: &QuadCost) -> QuadCost {
        QuadCost {
            curvature: self.curvature.add(&other.curvature),
            linear: &self.linear + &other.linear,
        }
    }
}

/// The static convex regularizer `g` over the auxiliary space. May be
/// extended-valued; indicator kinds return exactly `+∞` outside their set so
/// that infeasibility is detected rather than smeared by a large penalty.
#[derive(Debug, Clone, PartialEq)]
pub enum Regularizer {
    /// `g ≡ 0`.
    Zero { dim: usize },
    /// `g(z) = weight · (½⟨z, Qz⟩ + ⟨q, z⟩)`.
    Quadratic { curvature: PsdOperator, linear: Vector, weight: f64 },
    /// `g(z) = weight · ‖z‖₁`.
    OneNorm { dim: usize, weight: f64 },
    /// Indicator of a simple compact convex set.
    Indicator(SimpleSet),
    /// Indicator of the affine set `{z : Fz = d}`.
    AffineSet { map: Matrix, rhs: Vector },
}

/// Absolute tolerance for indicator membership; keeps projected iterates
/// from being charged `+∞` by rounding.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

impl Regularizer {
    pub fn dim(&self) -> usize {
        match self {
            Regularizer::Zero { dim } => *dim,
            Regularizer::Quadratic { linear, .. } => linear.len(),
            Regularizer::OneNorm { dim, .. } => *dim,
            Regularizer::Indicator(set) => set.dim(),
            Regularizer::AffineSet { map, .. } => map.ncols(),
        }
    }

    pub fn value(&self, z: &Vector) -> f64 {
        match self {
            Regularizer::Zero { .. } => 0.0,
            Regularizer::Quadratic { curvature, linear, weight } => {
                weight * (0.5 * curvature.quad_form(z) + linear.dot(z))
            }
            Regularizer::OneNorm { weight, .. } => weight * z.iter().map(|v| v.abs()).sum::<f64>(),
            Regularizer::Indicator(set) => {
                if set.contains(z, MEMBERSHIP_TOL) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Regularizer::AffineSet { map, rhs } => {
                let r = map * z - rhs;
                let scale = rhs.norm().max(1.0);
                if r.norm() <= MEMBERSHIP_TOL * scale {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// A valid subgradient at a point of finite value. For indicators the
    /// zero vector always lies in the normal cone, so it is returned.
    pub fn subgradient(&self, z: &Vector) -> Vector {
        match self {
            Regularizer::Zero { dim } => Vector::zeros(*dim),
            Regularizer::Quadratic { curvature, linear, weight } => {
                (curvature.apply(z) + linear) * *weight
            }
            Regularizer::OneNorm { dim, weight } => Vector::from_fn(*dim, |i, _| {
                if z[i] == 0.0 {
                    0.0
                } else {
                    weight * z[i].signum()
                }
            }),
            Regularizer::Indicator(_) | Regularizer::AffineSet { .. } => Vector::zeros(self.dim()),
        }
    }

    /// The strong-convexity operator of `g` (zero unless `g` is quadratic).
    pub fn curvature_op(&self) -> PsdOperator {
        match self {
            Regularizer::Quadratic { curvature, weight, .. } => curvature.scale(*weight),
            other => PsdOperator::zero(other.dim()),
        }
    }

    /// Scale the regularizer by `w > 0` (indicators are fixed points).
    pub fn scaled(&self, w: f64) -> Regularizer {
        assert!(w > 0.0, "scale must be positive");
        match self {
            Regularizer::Zero { dim } => Regularizer::Zero { dim: *dim },
            Regularizer::Quadratic { curvature, linear, weight } => Regularizer::Quadratic {
                curvature: curvature.clone(),
                linear: linear.clone(),
                weight: weight * w,
            },
            Regularizer::OneNorm { dim, weight } => {
                Regularizer::OneNorm { dim: *dim, weight: weight * w }
            }
            Regularizer::Indicator(set) => Regularizer::Indicator(set.clone()),
            Regularizer::AffineSet { map, rhs } => {
                Regularizer::AffineSet { map: map.clone(), rhs: rhs.clone() }
            }
        }
    }

    /// Exact minimizer of `g(z) + ½⟨z, Pz⟩ + ⟨q, z⟩` for PSD `P`.
    ///
    /// The supported closed forms: linear solves for zero/quadratic `g`,
    /// projections for indicators (requiring `P` to be a positive multiple of
    /// the identity), coordinatewise soft-thresholding for `‖·‖₁` (requiring
    /// `P` diagonal), and an equality-constrained solve for affine sets.
    pub fn solve_shifted(&self, p: &Matrix, q: &Vector) -> Result<Vector, ProblemError> {
        let n = self.dim();
        if p.nrows() != n || q.len() != n {
            return Err(ProblemError::Dimension { expected: n, got: p.nrows() });
        }
        if n == 0 {
            return Ok(Vector::zeros(0));
        }
        match self {
            Regularizer::Zero { .. } => {
                solve_spd(p, &(-q)).ok_or(ProblemError::ZSubproblemSingular)
            }
            Regularizer::Quadratic { curvature, linear, weight } => {
                let m = curvature.matrix() * *weight + p;
                let rhs = -(linear * *weight + q);
                solve_spd(&m, &rhs).ok_or(ProblemError::ZSubproblemSingular)
            }
            Regularizer::OneNorm { weight, .. } => {
                let diag_only = (0..n).all(|i| {
                    (0..n).all(|j| i == j || p[(i, j)] == 0.0)
                });
                if !diag_only {
                    return Err(ProblemError::UnsupportedProx(
                        "1-norm shift requires a diagonal quadratic term".into(),
                    ));
                }
                let mut z = Vector::zeros(n);
                for i in 0..n {
                    let pi = p[(i, i)];
                    if pi <= 0.0 {
                        return Err(ProblemError::ZSubproblemSingular);
                    }
                    z[i] = soft_threshold(-q[i], *weight) / pi;
                }
                Ok(z)
            }
            Regularizer::Indicator(set) => {
                let eta = scalar_identity_factor(p).ok_or_else(|| {
                    ProblemError::UnsupportedProx(
                        "projection step requires the quadratic term to be a positive multiple of the identity".into(),
                    )
                })?;
                if eta <= 0.0 {
                    return Err(ProblemError::ZSubproblemSingular);
                }
                Ok(set.project(&(-q / eta)))
            }
            Regularizer::AffineSet { map, rhs } => {
                // Stationarity over {Fz = d}: solve the bordered system
                // [P Fᵀ; F 0] (z, w) = (−q, d).
                let m = map.nrows();
                let mut sys = Matrix::zeros(n + m, n + m);
                sys.view_mut((0, 0), (n, n)).copy_from(p);
                sys.view_mut((0, n), (n, m)).copy_from(&map.transpose());
                sys.view_mut((n, 0), (m, n)).copy_from(map);
                let mut full_rhs = Vector::zeros(n + m);
                full_rhs.rows_mut(0, n).copy_from(&(-q));
                full_rhs.rows_mut(n, m).copy_from(rhs);
                let sol = solve_square(&sys, &full_rhs).ok_or(ProblemError::ZSubproblemSingular)?;
                Ok(sol.rows(0, n).into_owned())
            }
        }
    }
}

fn soft_threshold(a: f64, t: f64) -> f64 {
    if a > t {
        a - t
    } else if a < -t {
        a + t
    } else {
        0.0
    }
}

/// `Some(η)` when `P = η·I` within a tight relative tolerance.
fn scalar_identity_factor(p: &Matrix) -> Option<f64> {
    let n = p.nrows();
    let eta = p[(0, 0)];
    let tol = 1e-12 * eta.abs().max(1.0);
    for i in 0..n {
        for j in 0..n {
            let expect = if i == j { eta } else { 0.0 };
            if (p[(i, j)] - expect).abs() > tol {
                return None;
            }
        }
    }
    Some(eta)
}

/// Generator stream-index tag separating linear-part draws from curvature
/// draws, so fixing one leaves the other untouched.
const LINEAR_DRAW_TAG: u64 = 1 << 63;

/// A deterministic stream of per-round costs. The generator is stateless:
/// round `t` is derived from `(seed, t)` alone, so the same seed reproduces
/// the same sequence bit-for-bit and materializing a round never disturbs
/// any other.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OnlineStream {
    /// Quadratic costs: `G_t = MᵀM` with `M` entries uniform in
    /// `[-G_scale, G_scale]` and `c_t` uniform in `[-c_scale, c_scale]`.
    /// With `fixed_G` the curvature is drawn once and reused every round.
    Quadratic {
        seed: u64,
        #[serde(rename = "N")]
        horizon: usize,
        n: usize,
        #[serde(rename = "G_scale")]
        g_scale: f64,
        #[serde(rename = "c_scale")]
        c_scale: f64,
        #[serde(default, rename = "fixed_G")]
        fixed_g: bool,
    },
    /// Linear costs: `c_t` uniform in `[-c_scale, c_scale]`, zero curvature.
    Linear {
        seed: u64,
        #[serde(rename = "N")]
        horizon: usize,
        n: usize,
        #[serde(rename = "c_scale")]
        c_scale: f64,
    },
}

impl OnlineStream {
    pub fn horizon(&self) -> usize {
        match self {
            OnlineStream::Quadratic { horizon, .. } | OnlineStream::Linear { horizon, .. } => {
                *horizon
            }
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            OnlineStream::Quadratic { seed, .. } | OnlineStream::Linear { seed, .. } => *seed,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            OnlineStream::Quadratic { n, .. } | OnlineStream::Linear { n, .. } => *n,
        }
    }

    /// Replace the horizon (used by sweeps over the round count).
    pub fn with_horizon(&self, new_horizon: usize) -> OnlineStream {
        let mut s = self.clone();
        match &mut s {
            OnlineStream::Quadratic { horizon, .. } | OnlineStream::Linear { horizon, .. } => {
                *horizon = new_horizon
            }
        }
        s
    }

    fn round_rng(&self, stream_index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed());
        rng.set_stream(stream_index);
        rng
    }

    /// The cost revealed at round `t ∈ 1..=N`.
    pub fn cost(&self, t: usize) -> Result<QuadCost, ProblemError> {
        if t == 0 || t > self.horizon() {
            return Err(ProblemError::RoundOutOfRange { round: t, horizon: self.horizon() });
        }
        match self {
            OnlineStream::Quadratic { n, g_scale, c_scale, fixed_g, .. } => {
                // curvature and linear parts draw from disjoint generator
                // streams so that fixing one leaves the other untouched
                let curvature_stream = if *fixed_g { 0 } else { t as u64 };
                let mut g_rng = self.round_rng(curvature_stream);
                let m = Matrix::from_fn(*n, *n, |_, _| g_rng.gen_range(-*g_scale..=*g_scale));
                let curvature = PsdOperator::gram(&m);
                let mut c_rng = self.round_rng(t as u64 | LINEAR_DRAW_TAG);
                let linear =
                    Vector::from_fn(*n, |_, _| c_rng.gen_range(-*c_scale..=*c_scale));
                QuadCost::new(curvature, linear)
            }
            OnlineStream::Linear { n, c_scale, .. } => {
                let mut rng = self.round_rng(t as u64);
                let linear = Vector::from_fn(*n, |_, _| rng.gen_range(-*c_scale..=*c_scale));
                Ok(QuadCost::linear_only(linear))
            }
        }
    }

    /// All costs of the stream, in round order.
    pub fn materialize(&self) -> Result<Vec<QuadCost>, ProblemError> {
        (1..=self.horizon()).map(|t| self.cost(t)).collect()
    }
}

/// The static problem a completed stream defines: minimize
/// `Σ_t f_t(x) + N·g(z)` subject to `Ax + Bz = c`.
#[derive(Debug, Clone)]
pub struct OfflineProblem {
    pub cost: QuadCost,
    pub reg: Regularizer,
    pub cc: CouplingConstraint,
    /// Number of summed rounds (1 for a plain offline problem).
    pub rounds: usize,
}

impl OfflineProblem {
    pub fn new(cost: QuadCost, reg: Regularizer, cc: CouplingConstraint) -> Self {
        Self { cost, reg, cc, rounds: 1 }
    }

    pub fn objective(&self, x: &Vector, z: &Vector) -> f64 {
        self.cost.value(x) + self.reg.value(z)
    }
}

/// Package a stream, regularizer, and constraint into the aggregate offline
/// problem: costs sum, strong-convexity operators sum, and the regularizer
/// picks up the factor `N`.
pub fn aggregate_problem(
    stream: &OnlineStream,
    g: &Regularizer,
    cc: &CouplingConstraint,
) -> Result<OfflineProblem, ProblemError> {
    let n_rounds = stream.horizon();
    let mut total = QuadCost::zero(stream.dim());
    for t in 1..=n_rounds {
        total = total.add(&stream.cost(t)?);
    }
    Ok(OfflineProblem {
        cost: total,
        reg: g.scaled(n_rounds as f64),
        cc: cc.clone(),
        rounds: n_rounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn vecn(s: &[f64]) -> Vector {
        Vector::from_row_slice(s)
    }

    #[test]
    fn residual_feasible_by_construction() {
        let cc = CouplingConstraint::new(
            Matrix::identity(2, 2),
            -Matrix::identity(2, 2),
            Vector::zeros(2),
        )
        .unwrap();
        let x = vecn(&[1.0, 2.0]);
        assert_eq!(cc.residual(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn residual_unit_offset() {
        let cc = CouplingConstraint::new(
            Matrix::identity(1, 1),
            Matrix::zeros(1, 1),
            vecn(&[1.0]),
        )
        .unwrap();
        assert_eq!(cc.residual(&vecn(&[0.0]), &vecn(&[0.0])).unwrap(), 1.0);
    }

    #[test]
    fn residual_direct_arithmetic() {
        let cc = CouplingConstraint::new(
            Matrix::from_row_slice(1, 2, &[1.0, 1.0]),
            Matrix::from_row_slice(1, 1, &[-1.0]),
            vecn(&[0.0]),
        )
        .unwrap();
        // 2 + 3 - 4 = 1
        assert_eq!(cc.residual(&vecn(&[2.0, 3.0]), &vecn(&[4.0])).unwrap(), 1.0);
    }

    #[test]
    fn residual_dimension_mismatch() {
        let cc = CouplingConstraint::new(
            Matrix::identity(2, 2),
            -Matrix::identity(2, 2),
            Vector::zeros(2),
        )
        .unwrap();
        assert!(cc.residual(&vecn(&[1.0]), &vecn(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn coupling_shape_rejected() {
        let r = CouplingConstraint::new(
            Matrix::identity(2, 2),
            Matrix::identity(3, 3),
            Vector::zeros(2),
        );
        assert!(matches!(r, Err(ProblemError::CouplingShape { .. })));
    }

    #[test]
    fn quadratic_cost_value_and_gradient() {
        let f = QuadCost::new(
            PsdOperator::from_diagonal(&[2.0, 4.0]).unwrap(),
            vecn(&[1.0, -1.0]),
        )
        .unwrap();
        let x = vecn(&[1.0, 1.0]);
        assert_eq!(f.value(&x), 0.5 * (2.0 + 4.0) + 0.0);
        assert_eq!(f.gradient(&x), vecn(&[3.0, 3.0]));
    }

    #[test]
    fn strong_convexity_witness_is_exact_for_quadratics() {
        // f(v) = f(u) + <∇f(u), v-u> + ½‖v-u‖²_G exactly.
        let f = QuadCost::new(
            PsdOperator::from_diagonal(&[2.0, 0.5]).unwrap(),
            vecn(&[0.3, -0.7]),
        )
        .unwrap();
        let u = vecn(&[1.0, -2.0]);
        let v = vecn(&[-0.5, 0.25]);
        let d = &v - &u;
        let model = f.value(&u) + f.gradient(&u).dot(&d) + 0.5 * f.curvature().quad_form(&d);
        assert!((f.value(&v) - model).abs() < 1e-8);
    }

    #[test]
    fn indicator_values_are_exactly_infinite() {
        let g = Regularizer::Indicator(SimpleSet::Box {
            lo: Vector::zeros(1),
            hi: Vector::zeros(1),
        });
        assert_eq!(g.value(&vecn(&[0.0])), 0.0);
        assert_eq!(g.value(&vecn(&[1.0])), f64::INFINITY);
    }

    #[test]
    fn one_norm_prox_soft_thresholds() {
        // minimize |z| + ½z² - 2z → soft-threshold(2, 1) = 1
        let g = Regularizer::OneNorm { dim: 1, weight: 1.0 };
        let z = g.solve_shifted(&Matrix::identity(1, 1), &vecn(&[-2.0])).unwrap();
        assert!((z[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn affine_set_prox_satisfies_constraint() {
        // project-ish: minimize ½‖z‖² - ⟨(1,0), z⟩ s.t. z₁ + z₂ = 1
        let g = Regularizer::AffineSet {
            map: Matrix::from_row_slice(1, 2, &[1.0, 1.0]),
            rhs: vecn(&[1.0]),
        };
        let z = g.solve_shifted(&Matrix::identity(2, 2), &vecn(&[-1.0, 0.0])).unwrap();
        assert!((z[0] + z[1] - 1.0).abs() < 1e-12);
        // stationarity: z + q + Fᵀw = 0 for some scalar w → z = (1,0) − w(1,1)/... check optimality numerically
        assert!((z[0] - 1.0).abs() < 1e-9 || z[0] > z[1]);
    }

    #[test]
    fn stream_is_deterministic_bit_for_bit() {
        let s = OnlineStream::Quadratic {
            seed: 7,
            horizon: 5,
            n: 3,
            g_scale: 1.0,
            c_scale: 2.0,
            fixed_g: false,
        };
        for t in 1..=5 {
            let a = s.cost(t).unwrap();
            let b = s.cost(t).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn fixed_curvature_streams_reuse_their_matrix() {
        let s = OnlineStream::Quadratic {
            seed: 11,
            horizon: 4,
            n: 2,
            g_scale: 1.0,
            c_scale: 1.0,
            fixed_g: true,
        };
        let c1 = s.cost(1).unwrap();
        let c4 = s.cost(4).unwrap();
        assert_eq!(c1.curvature(), c4.curvature());
        assert_ne!(c1.linear(), c4.linear());
    }

    #[test]
    fn stream_round_bounds_are_enforced() {
        let s = OnlineStream::Linear { seed: 1, horizon: 3, n: 2, c_scale: 1.0 };
        assert!(s.cost(0).is_err());
        assert!(s.cost(4).is_err());
    }

    #[test]
    fn aggregate_single_round_matches_the_round() {
        let s = OnlineStream::Linear { seed: 3, horizon: 1, n: 2, c_scale: 1.0 };
        let g = Regularizer::Zero { dim: 2 };
        let cc = CouplingConstraint::new(
            Matrix::identity(2, 2),
            -Matrix::identity(2, 2),
            Vector::zeros(2),
        )
        .unwrap();
        let agg = aggregate_problem(&s, &g, &cc).unwrap();
        assert_eq!(agg.cost, s.cost(1).unwrap());
    }

    #[test]
    fn aggregate_sums_linear_coefficients() {
        // hand-built stream with c_t = t·(1): aggregate coefficient 1+2+3 = 6
        let costs: Vec<QuadCost> =
            (1..=3).map(|t| QuadCost::linear_only(vecn(&[t as f64]))).collect();
        let total = costs.iter().fold(QuadCost::zero(1), |acc, c| acc.add(c));
        assert_eq!(total.linear(), &vecn(&[6.0]));
    }

    #[test]
    fn aggregate_value_equals_sum_of_round_values() {
        let s = OnlineStream::Quadratic {
            seed: 13,
            horizon: 6,
            n: 3,
            g_scale: 1.0,
            c_scale: 1.0,
            fixed_g: false,
        };
        let g = Regularizer::Zero { dim: 3 };
        let cc = CouplingConstraint::new(
            Matrix::identity(3, 3),
            -Matrix::identity(3, 3),
            Vector::zeros(3),
        )
        .unwrap();
        let agg = aggregate_problem(&s, &g, &cc).unwrap();
        let x = vecn(&[0.3, -0.4, 0.9]);
        let direct: f64 = (1..=6).map(|t| s.cost(t).unwrap().value(&x)).sum();
        let rel = (agg.cost.value(&x) - direct).abs() / direct.abs().max(1.0);
        assert!(rel < 1e-10);
    }

    #[test]
    fn scaled_regularizer_matches_weighting() {
        let g = Regularizer::OneNorm { dim: 2, weight: 0.5 };
        let z = vecn(&[1.0, -3.0]);
        assert_eq!(g.scaled(4.0).value(&z), 4.0 * g.value(&z));
        // indicators are fixed points of scaling
        let ind = Regularizer::Indicator(SimpleSet::unit_box(2));
        assert_eq!(ind.scaled(10.0).value(&z), ind.value(&z));
    }
}
