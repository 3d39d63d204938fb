//! Monte Carlo driver and the rate-estimate record it produces.

use rayon::prelude::*;

/// Monte Carlo mean rate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate {
    /// Sample mean, bits/s/Hz per slot.
    pub mean_bits: f64,
    /// Sample standard deviation / sqrt(trials).
    pub stderr: f64,
    pub trials: u64,
    pub seed: u64,
}

/// Runs `sample` over trial indices 0..trials in parallel and aggregates.
///
/// Samples are collected in trial order and summed sequentially, so the
/// result is independent of the worker count.
pub fn monte_carlo<F>(trials: u64, seed: u64, sample: F) -> RateEstimate
where
    F: Fn(u64) -> f64 + Sync,
{
    assert!(trials >= 1, "need at least one trial");
    let samples: Vec<f64> = (0..trials).into_par_iter().map(&sample).collect();
    let n = trials as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let stderr = if trials > 1 {
        let ss: f64 = samples.iter().map(|x| (x - mean) * (x - mean)).sum();
        (ss / (n - 1.0)).sqrt() / n.sqrt()
    } else {
        0.0
    };
    RateEstimate {
        mean_bits: mean,
        stderr,
        trials,
        seed,
    }
}
