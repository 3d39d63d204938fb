//! Statistical beamforming: WE and GE precoders, the high-SNR sum-rate
//! lower bound, and exact Monte Carlo SINR rates.
//!
//! One statistically precoded symbol per user per slot, equal power split
//! rho = P/2. The WE precoder steers along the unintended user's weakest
//! covariance eigenvector; the GE precoder maximizes the lower bound
//!
//! ```text
//! R_sum >= log2( (w^H R_A w / w^H R_B w) * (q^H R_B q / q^H R_A q) )
//! ```
//!
//! whose optimum value is log2 of the pencil condition number.

use crate::channel::{sample_triple, SeedSpec};
use crate::error::{Error, Result};
use crate::estimate::{monte_carlo, RateEstimate};
use crate::linalg::{
    eig_hermitian, generalized_max_eigvec, hermitian_sqrt, CVector, CorrelationMatrix,
};

const UNIT_NORM_TOL: f64 = 1e-12;

/// One unit-norm beamforming vector per user.
#[derive(Debug, Clone)]
pub struct SbfPrecoders {
    pub w: CVector,
    pub q: CVector,
}

impl SbfPrecoders {
    pub fn new(w: CVector, q: CVector) -> Result<Self> {
        for (name, v) in [("w", &w), ("q", &q)] {
            if (v.norm() - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::DimMismatch(format!(
                    "precoder {name} is not unit norm (|{name}| = {})",
                    v.norm()
                )));
            }
        }
        if w.len() != q.len() {
            return Err(Error::DimMismatch(format!(
                "precoder lengths differ: {} vs {}",
                w.len(),
                q.len()
            )));
        }
        Ok(Self { w, q })
    }
}

/// Weakest-eigenvector precoders: w along u_min(R_B), q along u_min(R_A).
pub fn we_precoders(r_a: &CorrelationMatrix, r_b: &CorrelationMatrix) -> Result<SbfPrecoders> {
    let w = eig_hermitian(r_b.entries())?.min_vector();
    let q = eig_hermitian(r_a.entries())?.min_vector();
    SbfPrecoders::new(w, q)
}

/// Generalized-eigenvector precoders: w = u_max(R_B^{-1} R_A),
/// q = u_max(R_A^{-1} R_B). These maximize the sum-rate lower bound.
pub fn ge_precoders(r_a: &CorrelationMatrix, r_b: &CorrelationMatrix) -> Result<SbfPrecoders> {
    let w = generalized_max_eigvec(r_a, r_b)?;
    let q = generalized_max_eigvec(r_b, r_a)?;
    SbfPrecoders::new(w, q)
}

/// High-SNR lower bound on the SBF ergodic sum-rate, bits/s/Hz.
pub fn sum_rate_lower_bound(
    r_a: &CorrelationMatrix,
    r_b: &CorrelationMatrix,
    pre: &SbfPrecoders,
) -> f64 {
    let ratio = (r_a.quad_form(&pre.w) / r_b.quad_form(&pre.w))
        * (r_b.quad_form(&pre.q) / r_a.quad_form(&pre.q));
    ratio.log2()
}

/// Monte Carlo ergodic sum-rate of SBF at per-slot budget P (rho = P/2),
/// treating the other user's symbol as noise.
pub fn mc_rate_sbf(
    r_a: &CorrelationMatrix,
    r_b: &CorrelationMatrix,
    pre: &SbfPrecoders,
    p: f64,
    trials: u64,
    master_seed: u64,
) -> Result<RateEstimate> {
    let sqrt_a = hermitian_sqrt(r_a)?;
    let sqrt_b = hermitian_sqrt(r_b)?;
    let rho = p / 2.0;
    let w = pre.w.clone();
    let q = pre.q.clone();
    Ok(monte_carlo(trials, master_seed, move |trial| {
        let t = sample_triple(&sqrt_a, &sqrt_b, SeedSpec::new(master_seed, trial))
            .expect("validated dimensions");
        let h = &t.h[0];
        let g = &t.g[0];
        let sinr_a = rho * h.dotc(&w).norm_sqr() / (1.0 + rho * h.dotc(&q).norm_sqr());
        let sinr_b = rho * g.dotc(&q).norm_sqr() / (1.0 + rho * g.dotc(&w).norm_sqr());
        (1.0 + sinr_a).log2() + (1.0 + sinr_b).log2()
    }))
}
