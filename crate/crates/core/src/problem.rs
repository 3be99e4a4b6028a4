//! Problem definitions: affine monotone maps, VI problem bundles, and the
//! validity checks for the standing assumptions (monotonicity, Lipschitz
//! continuity, feasibility of a reference solution).

use crate::error::{Error, Result};
use crate::linalg;
use crate::projections::{dist_to_set, Projector};
use crate::scalar::{c, Scalar};
use crate::{Matrix, Vector};
use rand::Rng;

/// Absolute floor on the minimum eigenvalue of the symmetric part accepted
/// as monotone; slack for floating-point eigen-solves.
pub const MONOTONE_EIG_TOL: f64 = 1e-8;

/// The affine map `F(x) = M x + d` together with its monotonicity witness:
/// construction fails unless the symmetric part of `M` is positive
/// semidefinite up to [`MONOTONE_EIG_TOL`].
#[derive(Debug, Clone)]
pub struct AffineMonotoneMap<T: Scalar> {
    matrix: Matrix<T>,
    offset: Vector<T>,
    dim: usize,
    min_sym_eig: T,
}

impl<T: Scalar> AffineMonotoneMap<T> {
    pub fn new(matrix: Matrix<T>, offset: Vector<T>) -> Result<Self> {
        let n = matrix.nrows();
        if matrix.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: matrix.ncols(),
            });
        }
        if offset.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: offset.len(),
            });
        }
        if matrix.iter().chain(offset.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "affine map coefficients".into(),
            });
        }
        let min_sym_eig = if n == 0 {
            T::zero()
        } else {
            linalg::min_sym_eigenvalue(&matrix)
        };
        if min_sym_eig < -c::<T>(MONOTONE_EIG_TOL) {
            return Err(Error::NotMonotone {
                min_eig: min_sym_eig.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(AffineMonotoneMap {
            matrix,
            offset,
            dim: n,
            min_sym_eig,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.matrix
    }

    pub fn offset(&self) -> &Vector<T> {
        &self.offset
    }

    pub fn min_sym_eigenvalue(&self) -> T {
        self.min_sym_eig
    }

    /// `M x + d`.
    pub fn evaluate(&self, x: &Vector<T>) -> Result<Vector<T>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(self.matrix.dot(x) + &self.offset)
    }

    /// Largest eigenvalue of `M + Mᵀ`, the curvature bound used by the
    /// gap-function ascent.
    pub(crate) fn max_doubled_sym_eigenvalue(&self) -> T {
        let sym = &self.matrix + &self.matrix.t();
        linalg::max_sym_eigenvalue(&sym)
    }
}

/// `F(x) = M x + d`, checking dimensions.
pub fn evaluate_map<T: Scalar>(map: &AffineMonotoneMap<T>, x: &Vector<T>) -> Result<Vector<T>> {
    map.evaluate(x)
}

/// Spectral-norm estimate of `M` (the Lipschitz constant of the affine map)
/// by power iteration on `MᵀM` with random restarts: returns `λ ≥ 0` with
/// `|λ − ‖M‖₂| ≤ tol·‖M‖₂` with high probability.
pub fn estimate_lipschitz<T: Scalar>(
    map: &AffineMonotoneMap<T>,
    iters: usize,
    tol: T,
) -> Result<T> {
    linalg::spectral_norm_power(&map.matrix, iters, tol)
}

/// Randomized monotonicity check: `(F(x)−F(y))ᵀ(x−y) ≥ −1e−9·(1+‖x−y‖²)`
/// over sampled pairs, combined with the eigenvalue test of the symmetric
/// part.
pub fn check_monotone<T: Scalar, R: Rng + ?Sized>(
    map: &AffineMonotoneMap<T>,
    trials: usize,
    rng: &mut R,
) -> bool {
    if map.min_sym_eig < -c::<T>(MONOTONE_EIG_TOL) {
        return false;
    }
    let n = map.dim;
    let tol = c::<T>(1e-9);
    for _ in 0..trials {
        let x = Vector::from_shape_fn(n, |_| T::standard_normal(rng) * c::<T>(3.0));
        let y = Vector::from_shape_fn(n, |_| T::standard_normal(rng) * c::<T>(3.0));
        let dx = &x - &y;
        let df = map.matrix.dot(&dx);
        let inner = df.dot(&dx);
        if inner < -tol * (T::one() + dx.dot(&dx)) {
            return false;
        }
    }
    true
}

/// How a solution certificate was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertificateMethod {
    /// Projected gradient ascent on the gap function.
    GapAscent,
    /// Deterministic extragradient run to a small natural-map residual.
    ReferenceExtragradient,
    /// Supplied externally (e.g. parsed from a problem file).
    External,
}

/// A candidate solution with its certification data.
#[derive(Debug, Clone)]
pub struct SolutionCertificate<T: Scalar> {
    pub point: Vector<T>,
    pub gap_value: T,
    pub feasibility_residual: T,
    pub method: CertificateMethod,
}

impl<T: Scalar> SolutionCertificate<T> {
    pub fn new(
        point: Vector<T>,
        gap_value: T,
        feasibility_residual: T,
        method: CertificateMethod,
        gap_tol: T,
    ) -> Result<Self> {
        if gap_value < -gap_tol {
            return Err(Error::invalid(format!(
                "certificate gap {gap_value} below -tolerance"
            )));
        }
        if feasibility_residual < T::zero() {
            return Err(Error::invalid("negative feasibility residual"));
        }
        Ok(SolutionCertificate {
            point,
            gap_value,
            feasibility_residual,
            method,
        })
    }
}

/// A variational inequality problem: the map, the feasible set, an optional
/// constraint family for random-projection schemes, and analysis metadata.
#[derive(Debug, Clone)]
pub struct ViProblem<T: Scalar> {
    map: AffineMonotoneMap<T>,
    feasible_set: Projector<T>,
    constraint_family: Option<crate::projections::ConstraintFamily<T>>,
    lipschitz: T,
    diameter_bound: Option<T>,
    reference_solution: Option<Vector<T>>,
    /// Weak-sharpness modulus when known. Recorded for reporting only;
    /// no algorithm consumes it.
    weak_sharpness_alpha: Option<T>,
}

impl<T: Scalar> ViProblem<T> {
    /// Bundles a map with its feasible set. `lipschitz` is validated against
    /// a power-iteration estimate of `‖M‖₂` (must not undershoot it by more
    /// than 1e−6).
    pub fn new(map: AffineMonotoneMap<T>, feasible_set: Projector<T>, lipschitz: T) -> Result<Self> {
        if let Some(d) = feasible_set.dim() {
            if d != map.dim() {
                return Err(Error::DimensionMismatch {
                    expected: map.dim(),
                    got: d,
                });
            }
        }
        let estimate = estimate_lipschitz(&map, 5_000, c(1e-12))?;
        if lipschitz < estimate - c(1e-6) {
            return Err(Error::invalid(format!(
                "declared Lipschitz constant {lipschitz} is below the spectral norm estimate {estimate}"
            )));
        }
        Ok(ViProblem {
            map,
            feasible_set,
            constraint_family: None,
            lipschitz,
            diameter_bound: None,
            reference_solution: None,
            weak_sharpness_alpha: None,
        })
    }

    /// Same as [`ViProblem::new`] with the Lipschitz constant taken directly
    /// from the power-iteration estimate.
    pub fn with_estimated_lipschitz(
        map: AffineMonotoneMap<T>,
        feasible_set: Projector<T>,
    ) -> Result<Self> {
        let lip = estimate_lipschitz(&map, 5_000, c(1e-12))?;
        ViProblem::new(map, feasible_set, lip)
    }

    pub fn with_family(mut self, family: crate::projections::ConstraintFamily<T>) -> Self {
        self.constraint_family = Some(family);
        self
    }

    pub fn with_diameter_bound(mut self, d: T) -> Self {
        self.diameter_bound = Some(d);
        self
    }

    pub fn with_weak_sharpness_alpha(mut self, alpha: T) -> Self {
        self.weak_sharpness_alpha = Some(alpha);
        self
    }

    /// Attaches a reference solution after validating feasibility
    /// (`dist(x*, X) ≤ 1e−8`). Gap validation lives in the metrics module
    /// (`attach_reference`), which also calls this.
    pub fn with_reference_feasible(mut self, x: Vector<T>) -> Result<Self> {
        let d = dist_to_set(&self.feasible_set, &x)?;
        if d > c(1e-8) {
            return Err(Error::Infeasible {
                dist: d.to_f64().unwrap_or(f64::NAN),
                tol: 1e-8,
            });
        }
        self.reference_solution = Some(x);
        Ok(self)
    }

    pub(crate) fn set_reference_unchecked(&mut self, x: Vector<T>) {
        self.reference_solution = Some(x);
    }

    pub fn dim(&self) -> usize {
        self.map.dim()
    }

    pub fn map(&self) -> &AffineMonotoneMap<T> {
        &self.map
    }

    pub fn feasible_set(&self) -> &Projector<T> {
        &self.feasible_set
    }

    pub fn constraint_family(&self) -> Option<&crate::projections::ConstraintFamily<T>> {
        self.constraint_family.as_ref()
    }

    pub fn lipschitz(&self) -> T {
        self.lipschitz
    }

    pub fn diameter_bound(&self) -> Option<T> {
        self.diameter_bound
    }

    pub fn reference_solution(&self) -> Option<&Vector<T>> {
        self.reference_solution.as_ref()
    }

    pub fn weak_sharpness_alpha(&self) -> Option<T> {
        self.weak_sharpness_alpha
    }
}
