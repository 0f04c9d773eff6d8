//! Simulation estimators of VaR and its Euler allocation.
//!
//! * [`mc`]: plain Monte Carlo with the band estimator;
//! * [`is`]: importance sampling with a mean-shifted Gaussian proposal on
//!   `Y_i` and likelihood-ratio weights;
//! * [`mcmc`]: a Metropolis-Hastings chain on the level set `X = -VaR`.
//!
//! MC and IS never hold the full `m x n` component matrix: they keep the
//! totals, sort them, and regenerate only the band rows from their streams.

pub mod is;
pub mod mc;
pub mod mcmc;
pub mod ops;

use std::ops::Range;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::models::ShiftedLognormalAsset;
use crate::rng::stream;
use ops::Tally;

pub use is::{estimate_is, is_draws, ISConfig, IsDraws};
pub use mc::{estimate_mc, MCConfig};
pub use mcmc::{estimate_mcmc, estimate_mcmc_pooled, run_chain, ChainOutput, MCMCConfig, RatioMode, TraceRow};
pub use ops::{count_operations, AnalyticCounts, EstimatorKind, OpCounts};

/// Mean and across-member standard deviation of a group of allocations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupStat {
    pub mean: f64,
    pub sd: f64,
    pub count: usize,
}

/// Summaries of `values` over index ranges (groups of exchangeable assets).
/// The spread across equal assets measures the precision of one asset's
/// estimate.
pub fn group_summary(values: &[f64], groups: &[Range<usize>]) -> Vec<GroupStat> {
    groups
        .iter()
        .map(|r| {
            let v = &values[r.clone()];
            let k = v.len() as f64;
            let mean = v.iter().sum::<f64>() / k;
            let sd = if v.len() > 1 {
                (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
            } else {
                0.0
            };
            GroupStat { mean, sd, count: v.len() }
        })
        .collect()
}

/// `count` consecutive groups of `size` assets.
pub fn equal_groups(count: usize, size: usize) -> Vec<Range<usize>> {
    (0..count).map(|g| g * size..(g + 1) * size).collect()
}

/// Number of totals in `[lo, hi]`.
pub fn band_hits(totals: &[f64], lo: f64, hi: f64) -> usize {
    totals.iter().filter(|t| **t >= lo && **t <= hi).count()
}

/// Log likelihood ratio `log phi(y; mu, s) - log phi(y; mu', s')` per asset.
#[derive(Debug, Clone)]
enum LogRatio {
    /// Equal scales: `-c (y - mid)` with `c = shift / s^2`, `mid = mu + shift / 2`.
    EqualScale { c: f64, mid: f64 },
    General { mu: f64, sigma: f64, mu_p: f64, sigma_p: f64 },
}

/// Row generator for lognormal portfolios under a shifted proposal
/// `Y_i = (mu_i + shift_i) + sigma_y_i Z`. With zero shifts and
/// `sigma_y = sigma` it produces exactly the rows of
/// [`crate::models::RowSampler`].
#[derive(Debug, Clone)]
pub(crate) struct LognormalKernel {
    assets: Vec<ShiftedLognormalAsset>,
    weights: Vec<f64>,
    /// Proposal means `mu_i + shift_i`.
    mu_y: Vec<f64>,
    sigma_y: Vec<f64>,
    ratio: Vec<LogRatio>,
}

impl LognormalKernel {
    pub fn new(
        assets: Vec<ShiftedLognormalAsset>,
        weights: Vec<f64>,
        shift: Vec<f64>,
        sigma_y: Vec<f64>,
    ) -> Self {
        let ratio = assets
            .iter()
            .zip(shift.iter().zip(&sigma_y))
            .map(|(x, (&s, &sy))| {
                if sy == x.sigma {
                    LogRatio::EqualScale { c: s / (x.sigma * x.sigma), mid: x.mu + 0.5 * s }
                } else {
                    LogRatio::General { mu: x.mu, sigma: x.sigma, mu_p: x.mu + s, sigma_p: sy }
                }
            })
            .collect();
        let mu_y = assets.iter().zip(&shift).map(|(x, s)| x.mu + s).collect();
        Self { assets, weights, mu_y, sigma_y, ratio }
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    /// Fills `out` with the weighted components of realization `j`; returns
    /// the total and the log likelihood ratio of the row.
    #[inline]
    pub fn row<const COUNT: bool>(
        &self,
        seed: u64,
        j: u64,
        out: &mut [f64],
        tally: &mut Tally<COUNT>,
    ) -> (f64, f64) {
        let mut total = 0.0;
        let mut log_w = 0.0;
        for (i, x) in self.assets.iter().enumerate() {
            let mut rng = stream(seed, j, i as u64);
            let z: f64 = StandardNormal.sample(&mut rng);
            let y = self.mu_y[i] + self.sigma_y[i] * z;
            tally.add(1);
            tally.mul(1);
            let raw = x.a - y.exp();
            tally.exp();
            tally.add(1);
            let w = self.weights[i];
            out[i] = if w == 1.0 {
                raw
            } else {
                tally.mul(1);
                w * raw
            };
            total += out[i];
            tally.add(1);
            match self.ratio[i] {
                LogRatio::EqualScale { c, mid } => {
                    if c != 0.0 {
                        log_w -= c * (y - mid);
                        tally.add(2);
                        tally.mul(1);
                    }
                }
                LogRatio::General { mu, sigma, mu_p, sigma_p } => {
                    log_w += crate::models::gaussian_log_density(y, mu, sigma)
                        - crate::models::gaussian_log_density(y, mu_p, sigma_p);
                    tally.add(6);
                    tally.mul(8);
                    tally.log();
                    tally.log();
                }
            }
        }
        (total, log_w)
    }
}
