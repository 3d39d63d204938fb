//! Correlation matrices and the small dense Hermitian / generalized
//! eigen-utilities the rest of the toolkit consumes.
//!
//! Everything here targets transmit covariance matrices of modest size
//! (M up to a few tens), so dense decompositions are used throughout.
//! Eigenvector phases are fixed deterministically (largest-magnitude
//! component made real-positive) so downstream golden tests are stable;
//! rates are invariant to that choice.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Relative positive-definiteness floor: smallest eigenvalue must exceed
/// `PD_TOL_REL * largest`.
pub const PD_TOL_REL: f64 = 1e-10;

/// Guard band on the exponential-model magnitude; `t_mag >= 1 - PD_GUARD`
/// is rejected as effectively rank-deficient.
pub const PD_GUARD: f64 = 1e-6;

const HERMITIAN_TOL: f64 = 1e-10;

/// Hermitian positive-definite transmit covariance, trace-normalized to M.
///
/// Construction validates all three invariants; the stored entries are
/// exactly Hermitian (entry(i,j) == conj(entry(j,i)) as stored).
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    dim: usize,
    entries: CMatrix,
}

impl CorrelationMatrix {
    /// Builds a correlation matrix from raw entries.
    ///
    /// The input must be square with M >= 2, Hermitian up to round-off and
    /// positive definite. The trace is renormalized to M, so covariances
    /// supplied on a different power scale are accepted.
    pub fn new(entries: CMatrix) -> Result<Self> {
        let m = entries.nrows();
        if m < 2 {
            return Err(Error::BadDim(m));
        }
        if entries.ncols() != m {
            return Err(Error::DimMismatch(format!(
                "covariance must be square, got {}x{}",
                m,
                entries.ncols()
            )));
        }
        let scale = entries.iter().map(|z| z.norm()).fold(0.0_f64, f64::max);
        let herm_dev = (&entries - entries.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0_f64, f64::max);
        if herm_dev > HERMITIAN_TOL * scale.max(1.0) {
            return Err(Error::DimMismatch(format!(
                "covariance is not Hermitian (max deviation {herm_dev:.3e})"
            )));
        }
        // Exact Hermitian storage, then trace renormalization.
        let mut h = (&entries + entries.adjoint()).scale(0.5);
        let trace: f64 = (0..m).map(|i| h[(i, i)].re).sum();
        if trace <= 0.0 || trace.is_nan() {
            return Err(Error::NotPositiveDefinite(format!(
                "trace {trace:.3e} is not positive"
            )));
        }
        h.scale_mut(m as f64 / trace);
        Self::from_hermitian(h)
    }

    /// Identity covariance (spatially uncorrelated channel).
    pub fn identity(m: usize) -> Result<Self> {
        Self::new(CMatrix::identity(m, m))
    }

    // Entries are already exactly Hermitian with trace M; checks PD only.
    fn from_hermitian(entries: CMatrix) -> Result<Self> {
        let m = entries.nrows();
        let eig = eig_hermitian(&entries)?;
        let lam_max = eig.values[0];
        let lam_min = eig.values[m - 1];
        if lam_min <= PD_TOL_REL * lam_max.max(0.0) {
            return Err(Error::NotPositiveDefinite(format!(
                "smallest eigenvalue {lam_min:.3e} vs largest {lam_max:.3e}"
            )));
        }
        Ok(Self { dim: m, entries })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.entries[(i, i)].re).sum()
    }

    /// Quadratic form x^H R x (real by Hermitian symmetry).
    pub fn quad_form(&self, x: &CVector) -> f64 {
        (x.adjoint() * &self.entries * x)[(0, 0)].re
    }
}

/// Eigendecomposition of a Hermitian matrix.
///
/// `values` are sorted descending; `vectors` columns are orthonormal and
/// phase-fixed, with column i paired to `values[i]`.
#[derive(Debug, Clone)]
pub struct EigPair {
    pub values: DVector<f64>,
    pub vectors: CMatrix,
}

impl EigPair {
    pub fn max_value(&self) -> f64 {
        self.values[0]
    }

    pub fn min_value(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn max_vector(&self) -> CVector {
        self.vectors.column(0).into_owned()
    }

    pub fn min_vector(&self) -> CVector {
        self.vectors.column(self.vectors.ncols() - 1).into_owned()
    }
}

/// Generalized eigendecomposition of the pencil (A, B): A x = lambda B x.
///
/// `values` sorted descending. Columns of `vectors` are unit-norm but not
/// mutually orthogonal (they are B-orthogonal).
#[derive(Debug, Clone)]
pub struct GeneralizedEig {
    pub values: DVector<f64>,
    pub vectors: CMatrix,
}

impl GeneralizedEig {
    pub fn max_vector(&self) -> CVector {
        self.vectors.column(0).into_owned()
    }

    pub fn min_vector(&self) -> CVector {
        self.vectors.column(self.vectors.ncols() - 1).into_owned()
    }
}

/// Single-parameter exponential correlation model: entry (i, j) is
/// t^(j-i) for j >= i with t = t_mag * e^{i phase}, conjugated below the
/// diagonal. The unit diagonal makes the trace exactly M.
pub fn exp_correlation(t_mag: f64, phase: f64, m: usize) -> Result<CorrelationMatrix> {
    if m < 2 {
        return Err(Error::BadDim(m));
    }
    if !(0.0..1.0 - PD_GUARD).contains(&t_mag) {
        return Err(Error::NotPositiveDefinite(format!(
            "correlation magnitude {t_mag} outside [0, {})",
            1.0 - PD_GUARD
        )));
    }
    let t = Complex64::from_polar(t_mag, phase);
    let entries = CMatrix::from_fn(m, m, |i, j| {
        if j >= i {
            t.powu((j - i) as u32)
        } else {
            t.powu((i - j) as u32).conj()
        }
    });
    CorrelationMatrix::from_hermitian(entries)
}

/// Hermitian PSD square root S of R with S * S = R.
pub fn hermitian_sqrt(r: &CorrelationMatrix) -> Result<CMatrix> {
    let eig = eig_hermitian(r.entries())?;
    let m = r.dim();
    let sqrt_vals = CMatrix::from_fn(m, m, |i, j| {
        if i == j {
            Complex64::new(eig.values[i].max(0.0).sqrt(), 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let s = &eig.vectors * sqrt_vals * eig.vectors.adjoint();
    // Kill round-off asymmetry so S feeds back into Hermitian-only paths.
    Ok((&s + s.adjoint()).scale(0.5))
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues descending.
///
/// The input is symmetrized as (R + R^H)/2 before solving, so callers may
/// pass matrices that are Hermitian only up to round-off.
pub fn eig_hermitian(r: &CMatrix) -> Result<EigPair> {
    let m = r.nrows();
    if m == 0 || r.ncols() != m {
        return Err(Error::DimMismatch(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            m,
            r.ncols()
        )));
    }
    let h = (r + r.adjoint()).scale(0.5);
    let eig = SymmetricEigen::try_new(h, f64::EPSILON, 10_000).ok_or(Error::ConvergenceFailure)?;

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = DVector::from_iterator(m, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = CMatrix::zeros(m, m);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        fix_phase(&mut col);
        vectors.set_column(dst, &col);
    }
    Ok(EigPair { values, vectors })
}

/// Full generalized eigendecomposition of the PD pencil (A, B) via
/// Cholesky reduction of B followed by a Hermitian eigensolve.
pub fn generalized_eig(a: &CorrelationMatrix, b: &CorrelationMatrix) -> Result<GeneralizedEig> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch(format!(
            "pencil dimensions differ: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let chol = Cholesky::new(b.entries().clone()).ok_or_else(|| {
        Error::NotPositiveDefinite("Cholesky factorization of the pencil base failed".into())
    })?;
    let l = chol.l();
    // C = L^{-1} A L^{-H}, Hermitian with the pencil's eigenvalues.
    let y = l
        .solve_lower_triangular(a.entries())
        .ok_or(Error::ConvergenceFailure)?;
    let c = l
        .solve_lower_triangular(&y.adjoint())
        .ok_or(Error::ConvergenceFailure)?;
    let inner = eig_hermitian(&c)?;
    // Map back through L^{-H} and renormalize to unit length.
    let mut vectors = l
        .adjoint()
        .solve_upper_triangular(&inner.vectors)
        .ok_or(Error::ConvergenceFailure)?;
    for j in 0..vectors.ncols() {
        let mut col = vectors.column(j).into_owned();
        let n = col.norm();
        col.unscale_mut(n);
        fix_phase(&mut col);
        vectors.set_column(j, &col);
    }
    Ok(GeneralizedEig {
        values: inner.values,
        vectors,
    })
}

/// Unit vector maximizing the generalized Rayleigh quotient
/// (x^H A x) / (x^H B x), i.e. the dominant eigenvector of B^{-1} A.
pub fn generalized_max_eigvec(a: &CorrelationMatrix, b: &CorrelationMatrix) -> Result<CVector> {
    Ok(generalized_eig(a, b)?.max_vector())
}

/// Unit vector minimizing the generalized Rayleigh quotient.
pub fn generalized_min_eigvec(a: &CorrelationMatrix, b: &CorrelationMatrix) -> Result<CVector> {
    Ok(generalized_eig(a, b)?.min_vector())
}

/// Condition number lambda_max / lambda_min of a PD matrix.
pub fn condition_number(r: &CorrelationMatrix) -> Result<f64> {
    let eig = eig_hermitian(r.entries())?;
    Ok(eig.max_value() / eig.min_value())
}

/// Condition number of the pencil B^{-1} A: ratio of the extreme
/// generalized Rayleigh quotients.
pub fn generalized_condition_number(a: &CorrelationMatrix, b: &CorrelationMatrix) -> Result<f64> {
    let eig = generalized_eig(a, b)?;
    Ok(eig.values[0] / eig.values[eig.values.len() - 1])
}

// Rotate so the largest-magnitude component is real-positive.
fn fix_phase(v: &mut CVector) {
    let (idx, _) = v
        .iter()
        .enumerate()
        .max_by(|(_, x), (_, y)| x.norm().partial_cmp(&y.norm()).unwrap())
        .expect("non-empty vector");
    let z = v[idx];
    if z.norm() > 0.0 {
        let rot = z.conj() / z.norm();
        for e in v.iter_mut() {
            *e *= rot;
        }
    }
}
