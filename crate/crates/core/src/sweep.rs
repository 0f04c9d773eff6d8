//! Two-asset weight sweeps: portfolio `u X_1 + (1 - u) X_2` over a grid of
//! `u`, with portfolio and asset RORACs under a sampled allocation regime.
//!
//! All grid points reuse one set of draws (common random numbers), so the
//! curves are smooth in `u` and differences between points are not
//! dominated by sampling noise.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocation::{PortfolioEvaluator, Regime, SampledEvaluator};
use crate::discrete::WeightVector;
use crate::empirical::{fmt_full, level_rank};
use crate::models::{sample_portfolio, PortfolioSpec};
use crate::{Error, Result};

/// Band half-width used when none is given: about 16% of the tail count.
pub fn default_band(alpha: f64, m: usize) -> usize {
    let n_alpha = level_rank(alpha, m) as f64;
    ((0.16 * n_alpha).round() as usize).max(1)
}

/// `count` equally spaced points on `[0, 1]`.
pub fn unit_grid(count: usize) -> Result<Vec<f64>> {
    if count < 2 {
        return Err(Error::InvalidConfig("a sweep grid needs at least 2 points".into()));
    }
    let step = (count - 1) as f64;
    Ok((0..count).map(|k| k as f64 / step).collect())
}

/// Grid points must be strictly increasing inside `[0, 1]`.
pub fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::InvalidConfig("a sweep grid needs at least 2 points".into()));
    }
    if grid.iter().any(|u| !(0.0..=1.0).contains(u)) {
        return Err(Error::InvalidConfig("sweep grid points must lie in [0, 1]".into()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig("sweep grid must be strictly increasing".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub u: f64,
    pub risk: f64,
    pub portfolio_rorac: f64,
    /// `None` where the asset's allocation is zero.
    pub asset_roracs: [Option<f64>; 2],
}

impl SweepRow {
    /// Largest relative distance of a defined asset RORAC from the
    /// portfolio RORAC.
    pub fn compatibility_gap(&self) -> f64 {
        self.asset_roracs
            .iter()
            .flatten()
            .map(|a| ((a - self.portfolio_rorac) / self.portfolio_rorac).abs())
            .fold(0.0, f64::max)
    }

    /// Relative gap between the two asset RORACs, against the portfolio RORAC.
    pub fn asset_gap(&self) -> Option<f64> {
        match self.asset_roracs {
            [Some(a), Some(b)] => Some(((a - b) / self.portfolio_rorac).abs()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub regime: Regime,
    pub rows: Vec<SweepRow>,
    /// Grid row with the largest portfolio RORAC.
    pub grid_argmax: usize,
    /// Evaluation at the vertex of the parabola through the grid maximum
    /// and its neighbours (the grid maximum itself at an endpoint).
    pub optimum: SweepRow,
}

impl SweepCurve {
    /// CSV with columns `u,risk,portfolio_rorac,asset1_rorac,asset2_rorac`;
    /// undefined RORACs are empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["u", "risk", "portfolio_rorac", "asset1_rorac", "asset2_rorac"])?;
        for r in &self.rows {
            let opt = |x: Option<f64>| x.map(fmt_full).unwrap_or_default();
            w.write_record([
                fmt_full(r.u),
                fmt_full(r.risk),
                fmt_full(r.portfolio_rorac),
                opt(r.asset_roracs[0]),
                opt(r.asset_roracs[1]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Draws once and evaluates each regime over the grid.
pub fn sweep_rorac(
    spec: &PortfolioSpec,
    grid: &[f64],
    regimes: &[Regime],
    m: usize,
    seed: u64,
) -> Result<Vec<SweepCurve>> {
    spec.validate()?;
    validate_grid(grid)?;
    if spec.n_assets() != 2 {
        return Err(Error::InvalidConfig(format!("a sweep needs exactly 2 assets, got {}", spec.n_assets())));
    }
    if spec.weights.iter().any(|w| *w != 1.0) {
        return Err(Error::InvalidConfig("sweep assets must carry unit weights".into()));
    }
    let returns = spec
        .expected_components()
        .ok_or_else(|| Error::InvalidConfig("sweep needs assets with known means".into()))?;
    let draws = sample_portfolio(spec, m, seed)?;
    regimes
        .iter()
        .map(|&regime| {
            let ev = SampledEvaluator { draws: draws.clone(), returns: returns.clone(), regime };
            sweep_evaluator(&ev, grid)
                .map(|(rows, grid_argmax, optimum)| SweepCurve { regime, rows, grid_argmax, optimum })
        })
        .collect()
}

/// Sweep of any two-asset evaluator; returns the rows, the grid argmax and
/// the refined optimum.
pub fn sweep_evaluator(ev: &dyn PortfolioEvaluator, grid: &[f64]) -> Result<(Vec<SweepRow>, usize, SweepRow)> {
    validate_grid(grid)?;
    let rows = grid.par_iter().map(|&u| evaluate_at(ev, u)).collect::<Result<Vec<_>>>()?;
    let k = rows
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.portfolio_rorac.total_cmp(&b.1.portfolio_rorac))
        .map(|(k, _)| k)
        .ok_or_else(|| Error::InvalidConfig("empty sweep grid".into()))?;
    let optimum = if k == 0 || k + 1 == rows.len() {
        rows[k].clone()
    } else {
        let u = parabola_vertex(
            (rows[k - 1].u, rows[k - 1].portfolio_rorac),
            (rows[k].u, rows[k].portfolio_rorac),
            (rows[k + 1].u, rows[k + 1].portfolio_rorac),
        );
        evaluate_at(ev, u)?
    };
    Ok((rows, k, optimum))
}

fn evaluate_at(ev: &dyn PortfolioEvaluator, u: f64) -> Result<SweepRow> {
    let w = WeightVector::new(vec![u, 1.0 - u])?;
    let risk = ev.risk(&w)?;
    if risk == 0.0 {
        return Err(Error::ZeroRisk);
    }
    let portfolio_rorac = ev.portfolio_return(&w) / risk;
    let a = ev.asset_roracs(&w)?;
    Ok(SweepRow { u, risk, portfolio_rorac, asset_roracs: [a[0].value, a[1].value] })
}

/// Abscissa of the vertex of the parabola through three points with
/// `x0 < x1 < x2` and `y1` the largest; clamped to `[x0, x2]`. Falls back
/// to `x1` when the points are not strictly concave.
pub fn parabola_vertex((x0, y0): (f64, f64), (x1, y1): (f64, f64), (x2, y2): (f64, f64)) -> f64 {
    let d0 = (y1 - y0) / (x1 - x0);
    let d1 = (y2 - y1) / (x2 - x1);
    let curvature = (d1 - d0) / (x2 - x0);
    if !(curvature < 0.0) {
        return x1;
    }
    // derivative of the interpolant: d0 + curvature (2x - x0 - x1)
    let x = 0.5 * (x0 + x1) - d0 / (2.0 * curvature);
    x.clamp(x0, x2)
}
