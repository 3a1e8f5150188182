//! Dense vectors, linear maps, and positive semidefinite operators.
//!
//! Everything in this crate is dense `f64`: problem sizes stay in the tens
//! to low hundreds, so dense symmetric eigendecompositions and Cholesky
//! factorizations are cheap and we trade micro-optimization for uniformity.
//! The central type is [`PsdOperator`], a symmetric positive semidefinite
//! matrix `B` defining the seminorm `‖v‖_B = √⟨v, Bv⟩`; semidefinite (not
//! definite) operators are first-class citizens here, so `‖·‖_B` may
//! annihilate whole subspaces.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// A point of one of the problem spaces. Entries must stay finite.
pub type Vector = DVector<f64>;
/// A dense linear map; rows index the output space, columns the input.
pub type Matrix = DMatrix<f64>;

/// Relative tolerance under which a slightly indefinite symmetric matrix is
/// still accepted as PSD. Accommodates rounding accumulated while assembling
/// operator sums such as `σS + σAᵀA`.
pub const PSD_TOL: f64 = 1e-10;

/// Relative symmetry tolerance for [`PsdOperator`] construction.
pub const SYM_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is not symmetric: asymmetry {asymmetry:.3e} exceeds tolerance")]
    NotSymmetric { asymmetry: f64 },
    #[error("operator not PSD: minimum eigenvalue {min_eig:.3e} below tolerance {tol:.3e}")]
    NotPsd { min_eig: f64, tol: f64 },
    #[error("operator not PSD: quadratic form value {value:.3e}")]
    NegativeQuadForm { value: f64 },
    #[error("empty point set")]
    EmptySet,
    #[error("non-finite entry at index {index}")]
    NonFinite { index: usize },
}

/// Reject vectors carrying NaN or infinities.
pub fn check_finite(v: &Vector) -> Result<(), LinalgError> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(LinalgError::NonFinite { index }),
        None => Ok(()),
    }
}

/// Eigenvalues of a (nearly) symmetric matrix, after symmetrizing away
/// rounding noise.
pub fn sym_eigenvalues(m: &Matrix) -> Vector {
    assert_eq!(m.nrows(), m.ncols(), "square matrix required");
    if m.nrows() == 0 {
        return Vector::zeros(0);
    }
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigen().eigenvalues
}

/// Spectral norm of a symmetric matrix: the largest eigenvalue magnitude.
pub fn spectral_norm_sym(m: &Matrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    sym_eigenvalues(m).iter().fold(0.0, |acc, e| acc.max(e.abs()))
}

/// A self-adjoint positive semidefinite operator, stored densely.
///
/// Construction via [`PsdOperator::new`] certifies symmetry (within
/// [`SYM_TOL`] relative) and tolerance-PSD (minimum eigenvalue no smaller
/// than `−PSD_TOL · ‖B‖`). Values are immutable afterwards; all operations
/// are pure, so operators can be shared freely across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdOperator {
    matrix: Matrix,
}

impl PsdOperator {
    /// Certify an arbitrary square matrix as a PSD operator.
    pub fn new(matrix: Matrix) -> Result<Self, LinalgError> {
        assert_eq!(matrix.nrows(), matrix.ncols(), "square matrix required");
        let scale = matrix.amax().max(1.0);
        let asymmetry = (&matrix - matrix.transpose()).amax();
        if asymmetry > SYM_TOL * scale {
            return Err(LinalgError::NotSymmetric { asymmetry: asymmetry / scale });
        }
        let sym = (&matrix + matrix.transpose()) * 0.5;
        if sym.nrows() > 0 {
            let eigs = sym_eigenvalues(&sym);
            let min_eig = eigs.min();
            let spec = eigs.amax();
            let tol = PSD_TOL * spec.max(1.0);
            if min_eig < -tol {
                return Err(LinalgError::NotPsd { min_eig, tol });
            }
        }
        Ok(Self { matrix: sym })
    }

    /// The zero operator on an `n`-dimensional space.
    pub fn zero(n: usize) -> Self {
        Self { matrix: Matrix::zeros(n, n) }
    }

    /// The identity on an `n`-dimensional space.
    pub fn identity(n: usize) -> Self {
        Self { matrix: Matrix::identity(n, n) }
    }

    /// `s·I` with `s ≥ 0`.
    pub fn scaled_identity(n: usize, s: f64) -> Self {
        assert!(s >= 0.0, "scale must be nonnegative");
        Self { matrix: Matrix::identity(n, n) * s }
    }

    /// Diagonal operator with nonnegative entries.
    pub fn from_diagonal(diag: &[f64]) -> Result<Self, LinalgError> {
        Self::new(Matrix::from_diagonal(&Vector::from_row_slice(diag)))
    }

    /// The Gram operator `MᵀM`, PSD by construction.
    pub fn gram(m: &Matrix) -> Self {
        let g = m.transpose() * m;
        let sym = (&g + g.transpose()) * 0.5;
        Self { matrix: sym }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn apply(&self, v: &Vector) -> Vector {
        &self.matrix * v
    }

    /// `⟨v, Bv⟩` without the PSD clamp applied by [`seminorm`].
    pub fn quad_form(&self, v: &Vector) -> f64 {
        if v.is_empty() {
            return 0.0;
        }
        (v.transpose() * &self.matrix * v)[(0, 0)]
    }

    /// Sum of two PSD operators; PSD is closed under addition so no recheck.
    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim(), other.dim(), "operator dimensions must agree");
        Self { matrix: &self.matrix + &other.matrix }
    }

    /// Nonnegative scaling.
    pub fn scale(&self, s: f64) -> Self {
        assert!(s >= 0.0, "scale must be nonnegative");
        Self { matrix: &self.matrix * s }
    }

    /// Block-diagonal composition `Diag(self, other)`.
    pub fn block_diag(&self, other: &Self) -> Self {
        let (n, m) = (self.dim(), other.dim());
        let mut out = Matrix::zeros(n + m, n + m);
        out.view_mut((0, 0), (n, n)).copy_from(&self.matrix);
        out.view_mut((n, n), (m, m)).copy_from(&other.matrix);
        Self { matrix: out }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        if self.dim() == 0 {
            return 0.0;
        }
        sym_eigenvalues(&self.matrix).min()
    }

    pub fn spectral_norm(&self) -> f64 {
        spectral_norm_sym(&self.matrix)
    }
}

/// The seminorm `‖v‖_B = √⟨v, Bv⟩` for PSD `B`.
///
/// Rounding can push the quadratic form of a genuinely PSD operator a hair
/// below zero; such values are clamped to zero before the square root.
/// Values negative beyond the clamp window indicate the operator is not PSD
/// and come back as an error.
pub fn seminorm(b: &PsdOperator, v: &Vector) -> Result<f64, LinalgError> {
    if b.dim() != v.len() {
        return Err(LinalgError::DimensionMismatch { expected: b.dim(), got: v.len() });
    }
    let quad = b.quad_form(v);
    let scale = (b.matrix.norm() * v.norm_squared()).max(1.0);
    if quad < -1e-12 * scale {
        return Err(LinalgError::NegativeQuadForm { value: quad });
    }
    Ok(quad.max(0.0).sqrt())
}

/// Squared seminorm, with the same clamp as [`seminorm`].
pub fn seminorm_sq(b: &PsdOperator, v: &Vector) -> Result<f64, LinalgError> {
    seminorm(b, v).map(|s| s * s)
}

/// `dist_B(v, D) = min_{p ∈ D} ‖p − v‖_B` over a finite nonempty set.
pub fn dist_b(b: &PsdOperator, v: &Vector, points: &[Vector]) -> Result<f64, LinalgError> {
    if points.is_empty() {
        return Err(LinalgError::EmptySet);
    }
    let mut best = f64::INFINITY;
    for p in points {
        if p.len() != v.len() {
            return Err(LinalgError::DimensionMismatch { expected: v.len(), got: p.len() });
        }
        best = best.min(seminorm(b, &(p - v))?);
    }
    Ok(best)
}

/// Loewner order test `P ⪰ Q`: the minimum eigenvalue of `P − Q` must not
/// fall below `−tol · max(1, ‖P − Q‖)`.
pub fn loewner_geq(p: &PsdOperator, q: &PsdOperator, tol: f64) -> Result<bool, LinalgError> {
    if p.dim() != q.dim() {
        return Err(LinalgError::DimensionMismatch { expected: p.dim(), got: q.dim() });
    }
    if p.dim() == 0 {
        return Ok(true);
    }
    let diff = p.matrix() - q.matrix();
    let eigs = sym_eigenvalues(&diff);
    Ok(eigs.min() >= -tol * eigs.amax().max(1.0))
}

/// Strict positive definiteness: minimum eigenvalue strictly above `tol`.
pub fn positive_definite(p: &PsdOperator, tol: f64) -> bool {
    if p.dim() == 0 {
        return true;
    }
    p.min_eigenvalue() > tol
}

/// Solve `M x = rhs` for symmetric positive definite `M` via Cholesky.
pub fn solve_spd(m: &Matrix, rhs: &Vector) -> Option<Vector> {
    if m.nrows() == 0 {
        return Some(Vector::zeros(0));
    }
    let chol = nalgebra::Cholesky::new(m.clone())?;
    Some(chol.solve(rhs))
}

/// Solve a general square system by full-pivot LU; `None` when singular.
pub fn solve_square(m: &Matrix, rhs: &Vector) -> Option<Vector> {
    if m.nrows() == 0 {
        return Some(Vector::zeros(0));
    }
    m.clone().full_piv_lu().solve(rhs)
}

/// Minimum-norm least squares solution of `M x = rhs` via SVD.
pub fn lstsq(m: &Matrix, rhs: &Vector) -> Vector {
    if m.ncols() == 0 {
        return Vector::zeros(0);
    }
    m.clone().svd(true, true).solve(rhs, 1e-12).expect("svd solve")
}

/// Stack two vectors into one.
pub fn stack2(a: &Vector, b: &Vector) -> Vector {
    let mut out = Vector::zeros(a.len() + b.len());
    out.rows_mut(0, a.len()).copy_from(a);
    out.rows_mut(a.len(), b.len()).copy_from(b);
    out
}

/// Stack three vectors into one.
pub fn stack3(a: &Vector, b: &Vector, c: &Vector) -> Vector {
    stack2(&stack2(a, b), c)
}

/// Horizontal concatenation `[A B]`.
pub fn hcat(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.nrows(), b.nrows(), "row counts must agree");
    let mut out = Matrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    out.view_mut((0, a.ncols()), (b.nrows(), b.ncols())).copy_from(b);
    out
}

/// Vertical concatenation `[A; B]`.
pub fn vcat(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.ncols(), b.ncols(), "column counts must agree");
    let mut out = Matrix::zeros(a.nrows() + b.nrows(), a.ncols());
    out.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    out.view_mut((a.nrows(), 0), (b.nrows(), b.ncols())).copy_from(b);
    out
}
