//! Shared helpers for the integration tests.
#![allow(dead_code)] // each test target uses a subset

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use samat_core::linalg::{CMatrix, CVector, CorrelationMatrix};

/// Random PD covariance with trace M: X X^H + 0.1 I, renormalized.
pub fn random_correlation(m: usize, seed: u64) -> CorrelationMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = CMatrix::from_fn(m, m, |_, _| {
        Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
    });
    let gram = &x * x.adjoint() + CMatrix::identity(m, m).scale(0.1);
    CorrelationMatrix::new(gram).expect("Gram matrix plus ridge is PD")
}

/// Random unit-norm complex vector.
pub fn random_unit(m: usize, seed: u64) -> CVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = DVector::from_fn(m, |_, _| {
        Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
    });
    let n = v.norm();
    v.unscale_mut(n);
    v
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
