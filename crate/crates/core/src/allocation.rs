//! Euler allocation estimators on batches, RORAC and compatibility checks.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::discrete::{DiscreteJointDistribution, EsForm, WeightVector};
use crate::empirical::{batch_quantile, fmt_full, sort_batch, RealizationBatch, SortedBatch};
use crate::risk_measures::{es_empirical, RiskMeasureId};
use crate::{check_level, Error, Result};

/// Number of sub-samples used for split standard errors.
pub const STDERR_GROUPS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Fd,
    Mc,
    Is,
    Mcmc,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Self::Exact => "exact",
            Self::Fd => "fd",
            Self::Mc => "MC",
            Self::Is => "IS",
            Self::Mcmc => "MCMC",
        }
    }
}

/// Per-asset RORAC. `value` is `None` when the allocation is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssetRorac {
    pub value: Option<f64>,
    pub negative_allocation: bool,
}

impl AssetRorac {
    pub fn new(expected_return: f64, allocation: f64) -> Self {
        Self {
            value: (allocation != 0.0).then(|| expected_return / allocation),
            negative_allocation: allocation < 0.0,
        }
    }

    pub fn flag(&self) -> &'static str {
        match (self.value, self.negative_allocation) {
            (None, _) => "undefined",
            (Some(_), true) => "negative-allocation",
            (Some(_), false) => "",
        }
    }
}

/// Portfolio risk, per-asset allocations and their diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationReport {
    pub method: Method,
    pub risk: f64,
    pub allocations: Vec<f64>,
    pub stderr: Vec<f64>,
    pub expected_returns: Vec<f64>,
    pub roracs: Vec<AssetRorac>,
    pub portfolio_rorac: Option<f64>,
    pub diagnostics: BTreeMap<String, f64>,
}

impl AllocationReport {
    pub fn new(method: Method, risk: f64, allocations: Vec<f64>, stderr: Vec<f64>) -> Self {
        Self {
            method,
            risk,
            allocations,
            stderr,
            expected_returns: Vec::new(),
            roracs: Vec::new(),
            portfolio_rorac: None,
            diagnostics: BTreeMap::new(),
        }
    }

    pub fn diagnostic(mut self, name: &str, value: f64) -> Self {
        self.diagnostics.insert(name.to_string(), value);
        self
    }

    /// Attaches expected returns and fills in the RORACs.
    pub fn with_returns(mut self, expected_returns: Vec<f64>) -> Result<Self> {
        let total: f64 = expected_returns.iter().sum();
        let (per_asset, portfolio) = rorac(&expected_returns, &self.allocations, total, self.risk)?;
        self.expected_returns = expected_returns;
        self.roracs = per_asset;
        self.portfolio_rorac = Some(portfolio);
        Ok(self)
    }

    /// `sum_i allocation_i - risk`.
    pub fn full_allocation_gap(&self) -> f64 {
        self.allocations.iter().sum::<f64>() - self.risk
    }

    /// One row per asset: `asset,allocation,stderr,expected_return,rorac,flag`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["asset", "allocation", "stderr", "expected_return", "rorac", "flag"])?;
        for i in 0..self.allocations.len() {
            let ret = self.expected_returns.get(i).map_or(String::new(), |r| fmt_full(*r));
            let (rorac, flag) = match self.roracs.get(i) {
                Some(r) => (r.value.map_or(String::new(), fmt_full), r.flag()),
                None => (String::new(), ""),
            };
            w.write_record([
                (i + 1).to_string(),
                fmt_full(self.allocations[i]),
                self.stderr.get(i).map_or(String::new(), |s| fmt_full(*s)),
                ret,
                rorac,
                flag.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Aligned text summary with `digits` decimals.
    pub fn to_text(&self, digits: usize) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "method: {}", self.method.tag());
        let _ = writeln!(s, "risk: {:.*}", digits, self.risk);
        if let Some(r) = self.portfolio_rorac {
            let _ = writeln!(s, "portfolio RORAC: {r:.digits$}");
        }
        let _ = writeln!(s, "{:>6} {:>14} {:>14} {:>14}", "asset", "allocation", "stderr", "RORAC");
        for i in 0..self.allocations.len() {
            let se = self.stderr.get(i).copied().unwrap_or(f64::NAN);
            let rorac = match self.roracs.get(i) {
                Some(AssetRorac { value: Some(v), negative_allocation }) => {
                    format!("{v:.digits$}{}", if *negative_allocation { " (neg)" } else { "" })
                }
                Some(_) => "undefined".into(),
                None => String::new(),
            };
            let _ = writeln!(
                s,
                "{:>6} {:>14.*} {:>14.*} {:>14}",
                i + 1,
                digits,
                self.allocations[i],
                digits,
                se,
                rorac
            );
        }
        for (k, v) in &self.diagnostics {
            let _ = writeln!(s, "{k}: {v}");
        }
        s
    }
}

/// Band estimator variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandForm {
    /// Each band realization rescaled by `X^(center) / X^(j)`.
    #[default]
    Rescaled,
    /// Plain (weighted) mean of the band components.
    Plain,
}

/// Allocation estimate with split-sample standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub allocations: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Realizations used.
    pub members: usize,
}

/// Weighted average of `-x_i` (optionally rescaled) over `members`.
fn band_mean(
    batch: &RealizationBatch,
    members: &[usize],
    scale: impl Fn(usize) -> Result<f64>,
) -> Result<Vec<f64>> {
    let n = batch.n_assets();
    let mut acc = vec![0.0; n];
    let mut mass = 0.0;
    for &j in members {
        let w = batch.weight(j);
        let r = scale(j)?;
        for (a, x) in acc.iter_mut().zip(batch.row(j)) {
            *a += w * (x * r);
        }
        mass += w;
    }
    if mass <= 0.0 {
        return Err(Error::ZeroWeights);
    }
    Ok(acc.into_iter().map(|a| 0.0 - a / mass).collect())
}

/// Standard error from `STDERR_GROUPS` interleaved sub-samples.
fn split_stderr(
    members: &[usize],
    estimate: impl Fn(&[usize]) -> Result<Vec<f64>>,
    n: usize,
) -> Result<Vec<f64>> {
    let g = STDERR_GROUPS.min(members.len());
    if g < 2 {
        return Ok(vec![0.0; n]);
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); g];
    for (k, &j) in members.iter().enumerate() {
        groups[k % g].push(j);
    }
    let mut ests = Vec::with_capacity(g);
    for grp in &groups {
        match estimate(grp) {
            Ok(e) => ests.push(e),
            // a sub-sample with no weight carries no information
            Err(Error::ZeroWeights) => {}
            Err(e) => return Err(e),
        }
    }
    let k = ests.len() as f64;
    if k < 2.0 {
        return Ok(vec![0.0; n]);
    }
    Ok((0..n)
        .map(|i| {
            let mean = ests.iter().map(|e| e[i]).sum::<f64>() / k;
            let var = ests.iter().map(|e| (e[i] - mean).powi(2)).sum::<f64>() / (k - 1.0);
            (var / k).sqrt()
        })
        .collect())
}

/// Band estimator around sorted position `center`: the `2b + 1` realizations
/// `order[center - b ..= center + b]`, weighted when the batch has weights.
pub fn band_allocation(
    batch: &RealizationBatch,
    order: &[usize],
    center: usize,
    b: usize,
    form: BandForm,
) -> Result<Estimate> {
    let m = order.len();
    if center < b || center + b >= m {
        return Err(Error::BandOutOfRange {
            lo: center as i64 - b as i64,
            hi: (center + b) as i64,
            m,
        });
    }
    let members = &order[center - b..=center + b];
    let totals = batch.totals();
    let xc = totals[order[center]];
    let estimate = |set: &[usize]| match form {
        BandForm::Rescaled => band_mean(batch, set, |j| {
            if totals[j] == 0.0 {
                Err(Error::ZeroTotalInBand(j))
            } else {
                Ok(xc / totals[j])
            }
        }),
        BandForm::Plain => band_mean(batch, set, |_| Ok(1.0)),
    };
    let allocations = estimate(members)?;
    let stderr = split_stderr(members, estimate, batch.n_assets())?;
    Ok(Estimate { allocations, stderr, members: members.len() })
}

/// VaR band estimator around the level order statistic of `sorted`.
pub fn alloc_var_band(
    batch: &RealizationBatch,
    sorted: &SortedBatch,
    b: usize,
    form: BandForm,
) -> Result<Estimate> {
    band_allocation(batch, &sorted.order, sorted.level_index, b, form)
}

/// `-E[X_i | X <= -VaR]`: (weighted) mean over realizations with total at
/// or below the `1 - alpha` quantile.
pub fn alloc_es_tail(batch: &RealizationBatch, alpha: f64) -> Result<Estimate> {
    check_level(alpha)?;
    let q = batch_quantile(batch, 1.0 - alpha)?;
    let members: Vec<usize> = (0..batch.len()).filter(|&j| batch.totals()[j] <= q).collect();
    if members.is_empty() {
        return Err(Error::EmptyTail);
    }
    let estimate = |set: &[usize]| band_mean(batch, set, |_| Ok(1.0));
    let allocations = estimate(&members)?;
    let stderr = split_stderr(&members, estimate, batch.n_assets())?;
    Ok(Estimate { allocations, stderr, members: members.len() })
}

/// ES allocations rescaled to sum to VaR: `ES_i * VaR / ES`.
pub fn alloc_blend_var_es(es_allocs: &[f64], es_total: f64, var_total: f64) -> Result<Vec<f64>> {
    if es_total == 0.0 {
        return Err(Error::ZeroEs);
    }
    let ratio = var_total / es_total;
    Ok(es_allocs.iter().map(|a| a * ratio).collect())
}

/// Per-asset `E[X_i] / allocation_i` and portfolio `E[X] / risk`.
pub fn rorac(
    expected_returns: &[f64],
    allocations: &[f64],
    portfolio_return: f64,
    portfolio_risk: f64,
) -> Result<(Vec<AssetRorac>, f64)> {
    if portfolio_risk == 0.0 {
        return Err(Error::ZeroRisk);
    }
    if expected_returns.len() != allocations.len() {
        return Err(Error::InvalidWeights(format!(
            "{} returns for {} allocations",
            expected_returns.len(),
            allocations.len()
        )));
    }
    if let Some(a) = allocations.iter().find(|a| !a.is_finite()) {
        return Err(Error::NonFinite(vec![*a]));
    }
    let per_asset = expected_returns.iter().zip(allocations).map(|(r, a)| AssetRorac::new(*r, *a)).collect();
    Ok((per_asset, portfolio_return / portfolio_risk))
}

/// A portfolio whose weights can be bumped: risk `f(u)` and Euler
/// allocations of the weighted assets `u_i X_i`.
pub trait PortfolioEvaluator: Sync {
    fn n_assets(&self) -> usize;
    /// `E[X_i]` per unit weight.
    fn unit_returns(&self) -> Vec<f64>;
    fn risk(&self, u: &WeightVector) -> Result<f64>;
    fn allocations(&self, u: &WeightVector) -> Result<Vec<f64>>;

    fn portfolio_return(&self, u: &WeightVector) -> f64 {
        self.unit_returns().iter().zip(u.as_slice()).map(|(r, w)| r * w).sum()
    }

    fn portfolio_rorac(&self, u: &WeightVector) -> Result<f64> {
        let risk = self.risk(u)?;
        if risk == 0.0 {
            return Err(Error::ZeroRisk);
        }
        Ok(self.portfolio_return(u) / risk)
    }

    fn asset_roracs(&self, u: &WeightVector) -> Result<Vec<AssetRorac>> {
        let alloc = self.allocations(u)?;
        Ok(self
            .unit_returns()
            .iter()
            .zip(u.as_slice())
            .zip(&alloc)
            .map(|((r, w), a)| AssetRorac::new(r * w, *a))
            .collect())
    }
}

/// `f(u) = sum_i c_i u_i`.
#[derive(Debug, Clone)]
pub struct LinearEvaluator {
    pub costs: Vec<f64>,
    pub returns: Vec<f64>,
}

impl PortfolioEvaluator for LinearEvaluator {
    fn n_assets(&self) -> usize {
        self.costs.len()
    }
    fn unit_returns(&self) -> Vec<f64> {
        self.returns.clone()
    }
    fn risk(&self, u: &WeightVector) -> Result<f64> {
        Ok(self.costs.iter().zip(u.as_slice()).map(|(c, w)| c * w).sum())
    }
    fn allocations(&self, u: &WeightVector) -> Result<Vec<f64>> {
        Ok(self.costs.iter().zip(u.as_slice()).map(|(c, w)| c * w).collect())
    }
}

/// Exact risk and allocations on a discrete joint law.
#[derive(Debug, Clone)]
pub struct ExactEvaluator {
    pub dist: DiscreteJointDistribution,
    pub measure: RiskMeasureId,
}

impl PortfolioEvaluator for ExactEvaluator {
    fn n_assets(&self) -> usize {
        self.dist.n_assets()
    }
    fn unit_returns(&self) -> Vec<f64> {
        (0..self.dist.n_assets()).map(|i| self.dist.marginal(i).mean()).collect()
    }
    fn risk(&self, u: &WeightVector) -> Result<f64> {
        self.measure.exact(&self.dist, u)
    }
    fn allocations(&self, u: &WeightVector) -> Result<Vec<f64>> {
        self.measure.allocate_exact(&self.dist.scaled(u)?)
    }
}

/// How a sampled evaluator turns a batch into risk and allocations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Regime {
    /// VaR with band allocations.
    Var { alpha: f64, b: usize, form: BandForm },
    /// Tail-conditional ES with tail allocations.
    Es { alpha: f64 },
    /// VaR as portfolio risk, ES allocations rescaled to VaR.
    Blend { alpha: f64 },
}

impl Regime {
    pub fn alpha(&self) -> f64 {
        match *self {
            Self::Var { alpha, .. } | Self::Es { alpha } | Self::Blend { alpha } => alpha,
        }
    }

    /// Risk and allocations of a batch whose components are already weighted.
    pub fn evaluate(&self, batch: &RealizationBatch) -> Result<(f64, Estimate)> {
        match *self {
            Self::Var { alpha, b, form } => {
                let sorted = sort_batch(batch, alpha)?;
                let est = alloc_var_band(batch, &sorted, b, form)?;
                Ok((-sorted.level_total(batch), est))
            }
            Self::Es { alpha } => {
                let es = es_empirical(batch, alpha, EsForm::TailConditional)?;
                Ok((es, alloc_es_tail(batch, alpha)?))
            }
            Self::Blend { alpha } => {
                let sorted = sort_batch(batch, alpha)?;
                let var = -sorted.level_total(batch);
                let es = es_empirical(batch, alpha, EsForm::TailConditional)?;
                let tail = alloc_es_tail(batch, alpha)?;
                let ratio = var / es;
                Ok((
                    var,
                    Estimate {
                        allocations: alloc_blend_var_es(&tail.allocations, es, var)?,
                        stderr: tail.stderr.iter().map(|s| s * ratio.abs()).collect(),
                        members: tail.members,
                    },
                ))
            }
        }
    }
}

/// Risk and allocations from one fixed set of unweighted draws, reused for
/// every weight vector (common random numbers).
#[derive(Debug, Clone)]
pub struct SampledEvaluator {
    pub draws: RealizationBatch,
    pub returns: Vec<f64>,
    pub regime: Regime,
}

impl SampledEvaluator {
    /// The draws with component `i` multiplied by `u_i`.
    pub fn weighted(&self, u: &WeightVector) -> Result<RealizationBatch> {
        let n = self.draws.n_assets();
        if u.len() != n {
            return Err(Error::InvalidWeights(format!("{} weights for {n} assets", u.len())));
        }
        let mut comps = Vec::with_capacity(self.draws.len() * n);
        for j in 0..self.draws.len() {
            comps.extend(self.draws.row(j).iter().zip(u.as_slice()).map(|(x, w)| w * x));
        }
        RealizationBatch::new(n, comps, self.draws.weights().map(<[f64]>::to_vec), self.draws.seed())
    }

    pub fn evaluate(&self, u: &WeightVector) -> Result<(f64, Estimate)> {
        self.regime.evaluate(&self.weighted(u)?)
    }
}

impl PortfolioEvaluator for SampledEvaluator {
    fn n_assets(&self) -> usize {
        self.draws.n_assets()
    }
    fn unit_returns(&self) -> Vec<f64> {
        self.returns.clone()
    }
    fn risk(&self, u: &WeightVector) -> Result<f64> {
        self.evaluate(u).map(|(r, _)| r)
    }
    fn allocations(&self, u: &WeightVector) -> Result<Vec<f64>> {
        self.evaluate(u).map(|(_, e)| e.allocations)
    }
}

/// Outcome of a RORAC-compatibility check for one asset.
#[derive(Debug, Clone, PartialEq)]
pub struct Compatibility {
    pub asset_rorac: Option<f64>,
    pub portfolio_rorac: f64,
    /// Whether the asset's RORAC exceeds the portfolio's (the premise).
    pub triggered: bool,
    /// Largest grid step `h` such that every grid step up to it raises the
    /// portfolio RORAC.
    pub epsilon: Option<f64>,
    /// Grid steps at which the portfolio RORAC did not increase.
    pub failures: Vec<f64>,
}

impl Compatibility {
    pub fn holds(&self) -> bool {
        !self.triggered || self.epsilon.is_some()
    }
}

/// Checks that `RORAC(X_i, X) > RORAC(X)` implies `RORAC(X + h X_i) > RORAC(X)`
/// on the grid `h_grid`. Asset RORACs within relative `tie_tol` of the
/// portfolio RORAC do not trigger the premise.
pub fn check_rorac_compatibility(
    ev: &dyn PortfolioEvaluator,
    u: &WeightVector,
    i: usize,
    h_grid: &[f64],
    tie_tol: f64,
) -> Result<Compatibility> {
    if i >= ev.n_assets() {
        return Err(Error::InvalidWeights(format!("asset {i} out of range")));
    }
    if h_grid.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::InvalidConfig("h grid must be positive".into()));
    }
    let base = ev.portfolio_rorac(u)?;
    let asset = ev.asset_roracs(u)?[i].value;
    let triggered = asset.is_some_and(|a| a > base + tie_tol * base.abs());
    let mut result = Compatibility { asset_rorac: asset, portfolio_rorac: base, triggered, epsilon: None, failures: vec![] };
    if !triggered {
        return Ok(result);
    }
    let mut grid = h_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let mut unbroken = true;
    for h in grid {
        let mut bumped = u.as_slice().to_vec();
        bumped[i] += h;
        let r = ev.portfolio_rorac(&WeightVector::new(bumped)?)?;
        if r > base {
            if unbroken {
                result.epsilon = Some(h);
            }
        } else {
            unbroken = false;
            result.failures.push(h);
        }
    }
    Ok(result)
}
