//! Importance sampling: draw `Y_i` from a mean-shifted Gaussian, weight each
//! realization by the likelihood ratio, and use the weighted quantile and
//! a weighted band.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ops::{OpCounts, Tally};
use super::{band_hits, LognormalKernel};
use crate::allocation::{band_allocation, AllocationReport, BandForm, Method};
use crate::empirical::{ascending_order, closest_weighted_position, scaled_weights, RealizationBatch};
use crate::models::PortfolioSpec;
use crate::{check_level, Error, Result};

/// Minimum effective sample size.
pub const MIN_ESS: f64 = 10.0;

const COUNTED_ROWS: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ISConfig {
    pub m: usize,
    pub b_is: usize,
    pub alpha: f64,
    /// Per-asset proposal mean shift `mu_IS - mu`.
    pub shift: Vec<f64>,
    /// Per-asset proposal scale; defaults to the model's `sigma`.
    #[serde(default)]
    pub sigma_is: Option<Vec<f64>>,
    #[serde(default)]
    pub form: BandForm,
    #[serde(default)]
    pub hit_band: Option<(f64, f64)>,
}

impl ISConfig {
    /// The same shift on every asset.
    pub fn uniform(m: usize, b_is: usize, alpha: f64, n: usize, shift: f64) -> Self {
        Self { m, b_is, alpha, shift: vec![shift; n], sigma_is: None, form: BandForm::Rescaled, hit_band: None }
    }

    fn validate(&self, n: usize) -> Result<()> {
        check_level(self.alpha)?;
        if self.shift.len() != n || self.sigma_is.as_ref().is_some_and(|s| s.len() != n) {
            return Err(Error::InvalidConfig(format!("IS parameters must have one entry per asset ({n})")));
        }
        if self.shift.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidConfig("non-finite shift".into()));
        }
        if let Some(s) = &self.sigma_is {
            if s.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
                return Err(Error::InvalidConfig("proposal scales must be positive".into()));
            }
        }
        if self.m < 2 * self.b_is + 1 {
            return Err(Error::InvalidConfig(format!("m = {} < 2 b_IS + 1", self.m)));
        }
        Ok(())
    }
}

/// Totals and normalized weights of an IS run (weights scaled to max 1).
#[derive(Debug, Clone)]
pub struct IsDraws {
    pub totals: Vec<f64>,
    pub weights: Vec<f64>,
    pub ess: f64,
}

fn kernel(spec: &PortfolioSpec, cfg: &ISConfig) -> Result<LognormalKernel> {
    let assets = spec.lognormals()?;
    cfg.validate(assets.len())?;
    let sigma = cfg.sigma_is.clone().unwrap_or_else(|| assets.iter().map(|a| a.sigma).collect());
    Ok(LognormalKernel::new(assets, spec.weights.clone(), cfg.shift.clone(), sigma))
}

/// Simulates totals under the proposal with their likelihood-ratio weights.
pub fn is_draws(spec: &PortfolioSpec, cfg: &ISConfig, seed: u64) -> Result<IsDraws> {
    let k = kernel(spec, cfg)?;
    draws_with(&k, cfg.m, seed)
}

fn draws_with(k: &LognormalKernel, m: usize, seed: u64) -> Result<IsDraws> {
    let n = k.n_assets();
    let (totals, log_w): (Vec<f64>, Vec<f64>) = (0..m as u64)
        .into_par_iter()
        .map_init(
            || (vec![0.0; n], Tally::<false>::default()),
            |(out, tally), j| k.row(seed, j, out, tally),
        )
        .unzip();
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let weights = scaled_weights(&raw)?;
    let (s1, s2) = weights.iter().fold((0.0, 0.0), |(a, b), w| (a + w, b + w * w));
    let ess = s1 * s1 / s2;
    if ess < MIN_ESS {
        return Err(Error::DegenerateWeights { ess });
    }
    Ok(IsDraws { totals, weights, ess })
}

/// IS estimate of `VaR_alpha` and its weighted band allocation.
///
/// VaR is the weighted lower-tail quantile; the band is centered on the
/// sorted position whose cumulative weight is closest to `1 - alpha`.
/// Diagnostics: `ess`, `center`, `band_hits`, `ops_per_realization`.
pub fn estimate_is(spec: &PortfolioSpec, cfg: &ISConfig, seed: u64) -> Result<AllocationReport> {
    let k = kernel(spec, cfg)?;
    let n = k.n_assets();
    let draws = draws_with(&k, cfg.m, seed)?;
    let order = ascending_order(&draws.totals);
    let sorted_w: Vec<f64> = order.iter().map(|&j| draws.weights[j]).collect();
    let level = 1.0 - cfg.alpha;
    let center = closest_weighted_position(&sorted_w, level);
    let quantile_pos = {
        // first sorted position whose cumulative weight reaches `level`
        let batch = RealizationBatch::from_totals(draws.totals.clone())?.with_weights(draws.weights.clone())?;
        crate::empirical::weighted_quantile(&batch, level)?.1
    };
    let var = -draws.totals[order[quantile_pos]];

    if center < cfg.b_is || center + cfg.b_is >= cfg.m {
        return Err(Error::BandOutOfRange {
            lo: center as i64 - cfg.b_is as i64,
            hi: (center + cfg.b_is) as i64,
            m: cfg.m,
        });
    }
    let band = &order[center - cfg.b_is..=center + cfg.b_is];
    let mut comps = vec![0.0; band.len() * n];
    comps.par_chunks_mut(n).zip(band.par_iter()).for_each_init(Tally::<false>::default, |t, (out, &j)| {
        k.row(seed, j as u64, out, t);
    });
    let band_w: Vec<f64> = band.iter().map(|&j| draws.weights[j]).collect();
    let rows = RealizationBatch::new(n, comps, Some(band_w), seed)?;
    let identity: Vec<usize> = (0..band.len()).collect();
    let est = band_allocation(&rows, &identity, cfg.b_is, cfg.b_is, cfg.form)?;

    let mut report = AllocationReport::new(Method::Is, var, est.allocations, est.stderr)
        .diagnostic("m", cfg.m as f64)
        .diagnostic("b", cfg.b_is as f64)
        .diagnostic("ess", draws.ess)
        .diagnostic("center", center as f64);
    if let Some((lo, hi)) = cfg.hit_band {
        report = report.diagnostic("band_hits", band_hits(&draws.totals, lo, hi) as f64);
    }
    let ops = instrumented_ops(&k, seed, cfg.m as u64);
    report = report.diagnostic("ops_per_realization", ops.per(COUNTED_ROWS.min(cfg.m as u64)));
    if let Some(ret) = spec.expected_components() {
        report = report.with_returns(ret)?;
    }
    Ok(report)
}

fn instrumented_ops(k: &LognormalKernel, seed: u64, m: u64) -> OpCounts {
    let mut tally = Tally::<true>::default();
    let mut out = vec![0.0; k.n_assets()];
    for j in 0..COUNTED_ROWS.min(m) {
        k.row(seed, j, &mut out, &mut tally);
    }
    tally.0
}
