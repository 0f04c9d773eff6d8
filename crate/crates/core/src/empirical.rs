//! Realization batches, order statistics and empirical quantiles.
//!
//! Quantiles use the lower-tail inf definition
//! `q_p(X) = inf { z : P(X <= z) >= p }` applied to the empirical law of the
//! batch totals, optionally reweighted by importance weights.

use std::io::Write;

use crate::{check_level, Error, Result};

/// `m` realizations of an `n`-asset portfolio.
///
/// Components are stored row-major (`m x n`). `totals[j]` is the row sum of
/// row `j`; weights, when present, are importance weights `p^j`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizationBatch {
    n_assets: usize,
    components: Vec<f64>,
    totals: Vec<f64>,
    weights: Option<Vec<f64>>,
    seed: u64,
}

fn validate_weights(weights: &[f64], m: usize) -> Result<()> {
    if weights.len() != m {
        return Err(Error::InvalidWeights(format!(
            "{} weights for {} realizations",
            weights.len(),
            m
        )));
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(Error::InvalidWeights(format!("weight {w} is negative or non-finite")));
    }
    if weights.iter().all(|w| *w == 0.0) {
        return Err(Error::ZeroWeights);
    }
    Ok(())
}

impl RealizationBatch {
    /// Builds a batch from row-major components; totals are the row sums.
    pub fn new(
        n_assets: usize,
        components: Vec<f64>,
        weights: Option<Vec<f64>>,
        seed: u64,
    ) -> Result<Self> {
        if n_assets == 0 {
            return Err(Error::InvalidBatch("zero assets".into()));
        }
        if !components.len().is_multiple_of(n_assets) {
            return Err(Error::InvalidBatch(format!(
                "{} values do not fill rows of {} assets",
                components.len(),
                n_assets
            )));
        }
        let totals: Vec<f64> = components.chunks(n_assets).map(|r| r.iter().sum()).collect();
        Self::from_parts(n_assets, components, totals, weights, seed)
    }

    /// Builds a batch with precomputed totals, checking them against the
    /// row sums (absolute tolerance `1e-9 * max(1, |total|)`).
    pub fn from_parts(
        n_assets: usize,
        components: Vec<f64>,
        totals: Vec<f64>,
        weights: Option<Vec<f64>>,
        seed: u64,
    ) -> Result<Self> {
        if n_assets == 0 || components.len() != totals.len() * n_assets {
            return Err(Error::InvalidBatch(format!(
                "{} components for {} rows of {} assets",
                components.len(),
                totals.len(),
                n_assets
            )));
        }
        for (j, (row, t)) in components.chunks(n_assets).zip(&totals).enumerate() {
            if !t.is_finite() || row.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidBatch(format!("non-finite value in row {j}")));
            }
            let s: f64 = row.iter().sum();
            if (s - t).abs() > 1e-9 * t.abs().max(1.0) {
                return Err(Error::InvalidBatch(format!(
                    "row {j}: total {t} differs from row sum {s}"
                )));
            }
        }
        if let Some(w) = &weights {
            validate_weights(w, totals.len())?;
        }
        Ok(Self { n_assets, components, totals, weights, seed })
    }

    /// Single-asset batch whose components are the totals themselves.
    pub fn from_totals(totals: Vec<f64>) -> Result<Self> {
        Self::new(1, totals, None, 0)
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        validate_weights(&weights, self.totals.len())?;
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.totals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.totals.is_empty()
    }

    pub fn n_assets(&self) -> usize {
        self.n_assets
    }

    pub fn totals(&self) -> &[f64] {
        &self.totals
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.components[j * self.n_assets..(j + 1) * self.n_assets]
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        self.components.chunks(self.n_assets).map(|r| r[i]).collect()
    }

    /// Weight of realization `j` (1 for unweighted batches).
    #[inline]
    pub fn weight(&self, j: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[j])
    }

    /// Keeps only the realizations with `d1 <= total <= d2`.
    ///
    /// Quantile levels on the filtered batch no longer refer to the full
    /// sample; callers track the discarded mass themselves.
    pub fn band_filter(&self, d1: f64, d2: f64) -> Result<Self> {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&j| self.totals[j] >= d1 && self.totals[j] <= d2)
            .collect();
        if keep.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let components = keep.iter().flat_map(|&j| self.row(j).iter().copied()).collect();
        let totals = keep.iter().map(|&j| self.totals[j]).collect();
        let weights = self.weights.as_ref().map(|w| keep.iter().map(|&j| w[j]).collect());
        Ok(Self { n_assets: self.n_assets, components, totals, weights, seed: self.seed })
    }

    /// CSV with header `asset_1,...,asset_n,total,weight`; unweighted
    /// batches write weight 1.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.n_assets).map(|i| format!("asset_{i}")).collect();
        header.push("total".into());
        header.push("weight".into());
        w.write_record(&header)?;
        for j in 0..self.len() {
            let mut rec: Vec<String> = self.row(j).iter().map(|x| fmt_full(*x)).collect();
            rec.push(fmt_full(self.totals[j]));
            rec.push(fmt_full(self.weight(j)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest decimal representation that round-trips the `f64`.
pub fn fmt_full(x: f64) -> String {
    format!("{x:?}")
}

/// Sorting permutation of a batch plus the order-statistic index for a
/// level `alpha`.
///
/// `level_index` is the 0-based position of `X^(n_alpha)` where
/// `n_alpha = round((1 - alpha) m)` is the 1-based rank, clamped to `[1, m]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SortedBatch {
    pub order: Vec<usize>,
    pub level_index: usize,
}

impl SortedBatch {
    /// 1-based rank `n_alpha` of the level order statistic.
    pub fn n_alpha(&self) -> usize {
        self.level_index + 1
    }

    /// The level order statistic `X^(n_alpha)`.
    pub fn level_total(&self, batch: &RealizationBatch) -> f64 {
        batch.totals()[self.order[self.level_index]]
    }
}

/// Stable ascending permutation of `values`.
pub fn ascending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    order
}

/// 1-based rank `round((1 - alpha) m)`, half away from zero, clamped to `[1, m]`.
pub fn level_rank(alpha: f64, m: usize) -> usize {
    let r = ((1.0 - alpha) * m as f64).round();
    (r as usize).clamp(1, m.max(1))
}

pub fn sort_batch(batch: &RealizationBatch, alpha: f64) -> Result<SortedBatch> {
    check_level(alpha)?;
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let order = ascending_order(batch.totals());
    let level_index = level_rank(alpha, batch.len()) - 1;
    Ok(SortedBatch { order, level_index })
}

/// Snaps `t` to the nearest integer when it is within relative `1e-9`, so
/// that `(1 - 0.99) * 1e6` counts as 10000 rather than 10000.000000000009.
#[inline]
pub(crate) fn snap(t: f64) -> f64 {
    let r = t.round();
    if (t - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else {
        t
    }
}

/// Position (0-based, in `order`) of the first cumulative weight reaching
/// `level * total_weight`. `weights` are given in sorted order.
fn first_reaching(sorted_weights: impl Iterator<Item = f64>, total: f64, level: f64) -> usize {
    let target = snap(level * total);
    let mut cum = 0.0;
    let mut last = 0;
    for (k, w) in sorted_weights.enumerate() {
        cum += w;
        last = k;
        if w > 0.0 && cum >= target {
            return k;
        }
    }
    last
}

/// Lower-tail quantile `q_level` of the (unweighted) batch totals: the
/// smallest order statistic `z` with `#{X^j <= z} / m >= level`.
pub fn empirical_quantile(batch: &RealizationBatch, level: f64) -> Result<f64> {
    check_level(level)?;
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let order = ascending_order(batch.totals());
    let k = first_reaching(std::iter::repeat_n(1.0, order.len()), order.len() as f64, level);
    Ok(batch.totals()[order[k]])
}

/// Scales weights by their maximum so that uniform weights become exactly 1
/// and cumulative sums stay exact.
pub(crate) fn scaled_weights(weights: &[f64]) -> Result<Vec<f64>> {
    let max = weights.iter().copied().fold(0.0_f64, f64::max);
    if max <= 0.0 {
        return Err(Error::ZeroWeights);
    }
    Ok(weights.iter().map(|w| w / max).collect())
}

/// Importance-weighted lower-tail quantile at `level`.
///
/// Returns the sorted total whose normalized cumulative weight first reaches
/// `level`, and its position in the ascending order. With uniform weights
/// this is exactly [`empirical_quantile`].
pub fn weighted_quantile(batch: &RealizationBatch, level: f64) -> Result<(f64, usize)> {
    check_level(level)?;
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let weights = batch
        .weights()
        .ok_or_else(|| Error::InvalidWeights("batch carries no weights".into()))?;
    let w = scaled_weights(weights)?;
    let order = ascending_order(batch.totals());
    let total: f64 = order.iter().map(|&j| w[j]).sum();
    let k = first_reaching(order.iter().map(|&j| w[j]), total, level);
    Ok((batch.totals()[order[k]], k))
}

/// Quantile of the batch at `level`, weighted when the batch has weights.
pub fn batch_quantile(batch: &RealizationBatch, level: f64) -> Result<f64> {
    if batch.weights().is_some() {
        weighted_quantile(batch, level).map(|(v, _)| v)
    } else {
        empirical_quantile(batch, level)
    }
}

/// Position `k` in sorted order whose cumulative weight is closest to
/// `level * W`; ties go to the larger index. With unit weights this is the
/// same position as `level_rank(1 - level, m) - 1`.
pub fn closest_weighted_position(sorted_weights: &[f64], level: f64) -> usize {
    let total: f64 = sorted_weights.iter().sum();
    let target = level * total;
    let mut cum = 0.0;
    for (k, w) in sorted_weights.iter().enumerate() {
        let prev = cum;
        cum += w;
        if cum >= target {
            if k > 0 && target - prev < cum - target {
                return k - 1;
            }
            return k;
        }
    }
    sorted_weights.len().saturating_sub(1)
}
