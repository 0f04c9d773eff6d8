//! Plain Monte Carlo: simulate totals, sort, read VaR off the level order
//! statistic and average the band around it.

use serde::{Deserialize, Serialize};

use super::ops::{OpCounts, Tally};
use super::{band_hits, LognormalKernel};
use crate::allocation::{band_allocation, AllocationReport, BandForm, Method};
use crate::empirical::{ascending_order, level_rank};
use crate::models::PortfolioSpec;
use crate::{check_level, Error, Result};

/// Realizations instrumented when counting hot-loop operations.
const COUNTED_ROWS: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MCConfig {
    pub m: usize,
    /// Band half-width.
    pub b: usize,
    pub alpha: f64,
    #[serde(default)]
    pub form: BandForm,
    /// Fixed interval of totals whose hits are counted.
    #[serde(default)]
    pub hit_band: Option<(f64, f64)>,
}

impl MCConfig {
    pub fn new(m: usize, b: usize, alpha: f64) -> Self {
        Self { m, b, alpha, form: BandForm::Rescaled, hit_band: None }
    }

    pub fn validate(&self) -> Result<()> {
        check_level(self.alpha)?;
        if self.m < 2 * self.b + 1 {
            return Err(Error::InvalidConfig(format!("m = {} < 2b + 1 = {}", self.m, 2 * self.b + 1)));
        }
        let c = level_rank(self.alpha, self.m) - 1;
        if c < self.b || c + self.b >= self.m {
            return Err(Error::BandOutOfRange {
                lo: c as i64 - self.b as i64,
                hi: (c + self.b) as i64,
                m: self.m,
            });
        }
        Ok(())
    }
}

/// MC estimate of `VaR_alpha` and its band allocation.
///
/// Diagnostics: `m`, `b`, `n_alpha`, `band_hits` (when a hit band is set)
/// and, for lognormal portfolios, `ops_per_realization` from an
/// instrumented rerun of the first rows.
pub fn estimate_mc(spec: &PortfolioSpec, cfg: &MCConfig, seed: u64) -> Result<AllocationReport> {
    cfg.validate()?;
    let sampler = spec.sampler()?;
    let totals = sampler.totals(cfg.m, seed);
    let order = ascending_order(&totals);
    let center = level_rank(cfg.alpha, cfg.m) - 1;
    let band = &order[center - cfg.b..=center + cfg.b];
    let rows = sampler.rows(band, seed)?;
    let identity: Vec<usize> = (0..band.len()).collect();
    let est = band_allocation(&rows, &identity, cfg.b, cfg.b, cfg.form)?;
    let var = -totals[order[center]];

    let mut report = AllocationReport::new(Method::Mc, var, est.allocations, est.stderr)
        .diagnostic("m", cfg.m as f64)
        .diagnostic("b", cfg.b as f64)
        .diagnostic("n_alpha", (center + 1) as f64);
    if let Some((lo, hi)) = cfg.hit_band {
        report = report.diagnostic("band_hits", band_hits(&totals, lo, hi) as f64);
    }
    if let Some(ops) = instrumented_ops(spec, seed, &totals)? {
        report = report.diagnostic("ops_per_realization", ops.per(COUNTED_ROWS.min(cfg.m as u64)));
    }
    if let Some(ret) = spec.expected_components() {
        report = report.with_returns(ret)?;
    }
    Ok(report)
}

/// Reruns the first rows through the counted lognormal kernel, checking
/// that it reproduces the sampled totals.
fn instrumented_ops(spec: &PortfolioSpec, seed: u64, totals: &[f64]) -> Result<Option<OpCounts>> {
    let Ok(assets) = spec.lognormals() else {
        return Ok(None);
    };
    let n = assets.len();
    let sigma = assets.iter().map(|a| a.sigma).collect();
    let kernel = LognormalKernel::new(assets, spec.weights.clone(), vec![0.0; n], sigma);
    let mut tally = Tally::<true>::default();
    let mut out = vec![0.0; n];
    for j in 0..COUNTED_ROWS.min(totals.len() as u64) {
        let (t, _) = kernel.row(seed, j, &mut out, &mut tally);
        if t != totals[j as usize] {
            return Err(Error::InvalidModel("instrumented kernel diverged from the sampler".into()));
        }
    }
    Ok(Some(tally.0))
}
