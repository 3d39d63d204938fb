//! Reproducible sampling of spatially correlated Rayleigh channel vectors.
//!
//! Every draw is keyed by a [`SeedSpec`] plus a stream index, with one
//! counter-based ChaCha stream per (trial, slot, user). Trials are pure
//! functions of the seed, so Monte Carlo loops parallelize without any
//! shared RNG state and give identical results at any thread count.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector};

/// Streams reserved per trial; slots 0..2 are user A, 3..5 user B.
const STREAMS_PER_TRIAL: u64 = 8;

/// Identifies one Monte Carlo trial of one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub trial_index: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, trial_index: u64) -> Self {
        Self {
            master_seed,
            trial_index,
        }
    }
}

/// Channel vectors for both users over the three slots of one trial.
///
/// All six vectors are independent draws; h-vectors share user A's
/// covariance and g-vectors user B's.
#[derive(Debug, Clone)]
pub struct ChannelTriple {
    pub h: [CVector; 3],
    pub g: [CVector; 3],
}

/// Circularly symmetric complex Gaussian vector with unit-variance entries
/// (real and imaginary parts each of variance 1/2).
///
/// The same (seed, stream) always yields the identical vector.
pub fn sample_cn01(dim: usize, seed: SeedSpec, stream: u64) -> CVector {
    let mut rng = stream_rng(seed, stream);
    DVector::from_fn(dim, |_, _| cn01(&mut rng))
}

/// Draws the six per-slot channel vectors h_j = sqrtA * w_j,
/// g_j = sqrtB * v_j from six disjoint streams.
pub fn sample_triple(sqrt_a: &CMatrix, sqrt_b: &CMatrix, seed: SeedSpec) -> Result<ChannelTriple> {
    let m = sqrt_a.nrows();
    if sqrt_a.ncols() != m || sqrt_b.nrows() != m || sqrt_b.ncols() != m {
        return Err(Error::DimMismatch(format!(
            "covariance square roots must be equal square matrices, got {}x{} and {}x{}",
            sqrt_a.nrows(),
            sqrt_a.ncols(),
            sqrt_b.nrows(),
            sqrt_b.ncols()
        )));
    }
    let draw = |stream: u64, s: &CMatrix| s * sample_cn01(m, seed, stream);
    Ok(ChannelTriple {
        h: [draw(0, sqrt_a), draw(1, sqrt_a), draw(2, sqrt_a)],
        g: [draw(3, sqrt_b), draw(4, sqrt_b), draw(5, sqrt_b)],
    })
}

fn stream_rng(seed: SeedSpec, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.master_seed);
    rng.set_stream(
        seed.trial_index
            .wrapping_mul(STREAMS_PER_TRIAL)
            .wrapping_add(stream),
    );
    rng
}

// Box-Muller on the uniform stream: |z|^2 ~ Exp(1), phase uniform.
fn cn01<R: Rng>(rng: &mut R) -> Complex64 {
    let u1: f64 = rng.gen();
    let u2: f64 = rng.gen();
    let r = (-(1.0 - u1).ln()).sqrt();
    Complex64::from_polar(r, std::f64::consts::TAU * u2)
}
