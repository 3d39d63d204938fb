//! Simulation and optimization toolkit for the two-user MISO broadcast channel
//! with statistical and delayed CSIT.
//!
//! The transmitter carries `M >= 2` antennas and serves two single-antenna
//! users over spatially correlated Rayleigh fading. Three transmission
//! strategies are covered, each with closed-form rate approximations and
//! exact Monte Carlo evaluation against MMSE-SIC receivers:
//!
//! - [`sbf`]: statistical beamforming with weakest-eigenvector (WE) or
//!   generalized-eigenvector (GE) precoders and the high-SNR sum-rate
//!   lower bound they maximize;
//! - [`amat`]: alternative MAT retransmission of overheard interference
//!   with statistically optimized precoders (alternating Max-Eig /
//!   gradient-ascent updates of the Theta objective);
//! - [`samat`]: the superposition of both, with a ten-way power split
//!   optimized under a long-term power constraint by the dense SQP
//!   solver in [`sqp`].
//!
//! [`linalg`] holds the correlation-matrix and Hermitian/generalized
//! eigen utilities everything else consumes; [`channel`] draws
//! reproducible correlated channel realizations.

pub mod amat;
pub mod channel;
pub mod error;
pub mod estimate;
pub mod linalg;
pub mod samat;
pub mod sbf;
pub mod sqp;

pub use error::{Error, Result};
pub use estimate::RateEstimate;

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
