//! Simple convex compact sets with exact Euclidean projections.
//!
//! Boxes project by componentwise clamping, balls by radial scaling, and the
//! unit simplex by the usual sort-and-threshold scheme. These are the sets a
//! projection-based splitting step can handle in closed form.

use crate::linalg::Vector;
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub enum SimpleSet {
    /// `{v : lo ≤ v ≤ hi}` componentwise, `lo ≤ hi` required.
    Box { lo: Vector, hi: Vector },
    /// `{v : ‖v − center‖ ≤ radius}` with `radius > 0`.
    Ball { center: Vector, radius: f64 },
    /// The unit simplex `{v ≥ 0 : Σ vᵢ = 1}`.
    Simplex { dim: usize },
}

impl SimpleSet {
    /// The unit box `[-1, 1]ⁿ`.
    pub fn unit_box(n: usize) -> Self {
        SimpleSet::Box {
            lo: Vector::from_element(n, -1.0),
            hi: Vector::from_element(n, 1.0),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SimpleSet::Box { lo, .. } => lo.len(),
            SimpleSet::Ball { center, .. } => center.len(),
            SimpleSet::Simplex { dim } => *dim,
        }
    }

    /// Check the nonemptiness invariants (`lo ≤ hi`, `radius > 0`).
    pub fn validate(&self) -> Result<(), String> {
        match self {
            SimpleSet::Box { lo, hi } => {
                if lo.len() != hi.len() {
                    return Err("box bounds disagree in dimension".into());
                }
                if lo.iter().zip(hi.iter()).any(|(l, h)| l > h) {
                    return Err("box has lo > hi in some coordinate".into());
                }
                Ok(())
            }
            SimpleSet::Ball { radius, .. } => {
                if *radius > 0.0 {
                    Ok(())
                } else {
                    Err("ball radius must be positive".into())
                }
            }
            SimpleSet::Simplex { dim } => {
                if *dim > 0 {
                    Ok(())
                } else {
                    Err("simplex dimension must be positive".into())
                }
            }
        }
    }

    /// Exact Euclidean projection onto the set.
    pub fn project(&self, v: &Vector) -> Vector {
        assert_eq!(v.len(), self.dim(), "projection input dimension mismatch");
        match self {
            SimpleSet::Box { lo, hi } => {
                Vector::from_fn(v.len(), |i, _| v[i].clamp(lo[i], hi[i]))
            }
            SimpleSet::Ball { center, radius } => {
                let d = v - center;
                let norm = d.norm();
                if norm <= *radius {
                    v.clone()
                } else {
                    center + d * (*radius / norm)
                }
            }
            SimpleSet::Simplex { .. } => project_simplex(v),
        }
    }

    /// Membership within an absolute tolerance `tol` on the defining
    /// constraints.
    pub fn contains(&self, v: &Vector, tol: f64) -> bool {
        if v.len() != self.dim() {
            return false;
        }
        match self {
            SimpleSet::Box { lo, hi } => v
                .iter()
                .enumerate()
                .all(|(i, &vi)| vi >= lo[i] - tol && vi <= hi[i] + tol),
            SimpleSet::Ball { center, radius } => (v - center).norm() <= radius + tol,
            SimpleSet::Simplex { .. } => {
                v.iter().all(|&vi| vi >= -tol) && (v.sum() - 1.0).abs() <= tol
            }
        }
    }

    /// A deterministic interior-ish point, jittered by `rng`. Used to anchor
    /// feasible instances and starting points.
    pub fn interior_point<R: Rng>(&self, rng: &mut R) -> Vector {
        match self {
            SimpleSet::Box { lo, hi } => Vector::from_fn(lo.len(), |i, _| {
                let mid = 0.5 * (lo[i] + hi[i]);
                let half = 0.5 * (hi[i] - lo[i]);
                mid + 0.5 * half * rng.gen_range(-1.0..1.0)
            }),
            SimpleSet::Ball { center, radius } => {
                let n = center.len();
                let dir = Vector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
                let norm = dir.norm();
                if norm == 0.0 {
                    center.clone()
                } else {
                    center + dir * (0.5 * radius / norm)
                }
            }
            SimpleSet::Simplex { dim } => {
                let raw = Vector::from_fn(*dim, |_, _| rng.gen_range(0.1..1.0));
                let s = raw.sum();
                raw / s
            }
        }
    }
}

/// Projection onto the unit simplex by sorting and thresholding: find the
/// largest prefix of the sorted coordinates whose shifted values stay
/// positive, then subtract the corresponding threshold.
fn project_simplex(v: &Vector) -> Vector {
    let n = v.len();
    let mut sorted: Vec<f64> = v.iter().copied().collect();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite entries"));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (j as f64 + 1.0);
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    Vector::from_fn(n, |i, _| (v[i] - theta).max(0.0))
}
