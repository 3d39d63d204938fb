//! Monte Carlo oracles for the two expectation identities the closed
//! forms lean on: the log quadratic-form mean and the first-order
//! approximation of a ratio of quadratic forms.

use num_complex::Complex64;
use samat_core::channel::{sample_cn01, SeedSpec};
use samat_core::estimate::monte_carlo;
use samat_core::linalg::{hermitian_sqrt, CMatrix, CVector, CorrelationMatrix};
use samat_core::{Result, EULER_GAMMA};

/// Outcome of the log quadratic-form oracle.
#[derive(Debug, Clone, Copy)]
pub struct LogFormCheck {
    pub mc_mean: f64,
    pub closed_form: f64,
    pub gap: f64,
}

/// Compares the Monte Carlo mean of ln|h^H w|^2 for h = R^{1/2} z,
/// z ~ CN(0, I), against the closed form ln(w^H R w) - gamma.
pub fn log_form_oracle(
    r: &CorrelationMatrix,
    w: &CVector,
    trials: u64,
    seed: u64,
) -> Result<LogFormCheck> {
    let sqrt = hermitian_sqrt(r)?;
    let m = r.dim();
    let closed_form = r.quad_form(w).ln() - EULER_GAMMA;
    let w = w.clone();
    let est = monte_carlo(trials, seed, move |trial| {
        let h = &sqrt * sample_cn01(m, SeedSpec::new(seed, trial), 0);
        h.dotc(&w).norm_sqr().ln()
    });
    Ok(LogFormCheck {
        mc_mean: est.mean_bits,
        closed_form,
        gap: (est.mean_bits - closed_form).abs(),
    })
}

/// Distribution of the numerator x and denominator y in E[x / y].
#[derive(Debug, Clone)]
pub enum RatioSpec {
    /// Degenerate point masses; the first-order value is exact.
    Constants { x: f64, y: f64 },
    /// x = z1^H A z1 and y = 1 + z2^H B z2 with independent standard
    /// complex Gaussian vectors z1, z2. The first-order value
    /// Tr(A) / (1 + Tr(B)) is a lower bound here.
    IndependentForms { a: CMatrix, b: CMatrix },
    /// x = z^H A z and y = 1 + z^H B z sharing the same draw, as in the
    /// effective-SNR weights of the retransmission slots.
    SharedForms { a: CMatrix, b: CMatrix },
}

/// Outcome of the ratio-of-forms oracle.
#[derive(Debug, Clone, Copy)]
pub struct RatioCheck {
    pub mc_ratio_mean: f64,
    pub first_order: f64,
    pub gap: f64,
}

/// Compares the Monte Carlo mean of x/y against the first-order value
/// `E[x] / E[y]`.
pub fn ratio_oracle(spec: &RatioSpec, trials: u64, seed: u64) -> RatioCheck {
    let (mc_ratio_mean, first_order) = match spec {
        RatioSpec::Constants { x, y } => (*x / *y, *x / *y),
        RatioSpec::IndependentForms { a, b } => {
            let first_order = trace(a) / (1.0 + trace(b));
            let (a, b) = (a.clone(), b.clone());
            let m = a.nrows();
            let est = monte_carlo(trials, seed, move |trial| {
                let z1 = sample_cn01(m, SeedSpec::new(seed, trial), 0);
                let z2 = sample_cn01(m, SeedSpec::new(seed, trial), 1);
                quad(&a, &z1) / (1.0 + quad(&b, &z2))
            });
            (est.mean_bits, first_order)
        }
        RatioSpec::SharedForms { a, b } => {
            let first_order = trace(a) / (1.0 + trace(b));
            let (a, b) = (a.clone(), b.clone());
            let m = a.nrows();
            let est = monte_carlo(trials, seed, move |trial| {
                let z = sample_cn01(m, SeedSpec::new(seed, trial), 0);
                quad(&a, &z) / (1.0 + quad(&b, &z))
            });
            (est.mean_bits, first_order)
        }
    };
    RatioCheck {
        mc_ratio_mean,
        first_order,
        gap: (mc_ratio_mean - first_order).abs(),
    }
}

/// Builds S v v^H S scaled, the rank-one pieces the slot-2/3 noise and
/// signal forms are made of (S a covariance square root).
pub fn scaled_outer(s: &CMatrix, v: &CVector, scale: f64) -> CMatrix {
    let sv = s * v;
    (&sv * sv.adjoint()).scale(scale)
}

fn quad(a: &CMatrix, z: &CVector) -> f64 {
    (z.adjoint() * a * z)[(0, 0)].re
}

fn trace(a: &CMatrix) -> f64 {
    (0..a.nrows()).map(|i| a[(i, i)].re).sum()
}

/// Unit basis vector, used to address the retransmission antenna.
pub fn basis_vector(m: usize, idx: usize) -> CVector {
    let mut v = CVector::zeros(m);
    v[idx] = Complex64::new(1.0, 0.0);
    v
}
