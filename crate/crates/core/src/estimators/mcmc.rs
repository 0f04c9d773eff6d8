//! Metropolis-Hastings on the level set `sum_i X_i = -VaR`.
//!
//! The state stores `D_i = Y_i - mu_i` and `E_i = exp(Y_i)`, so that
//! `X_i = a_i - E_i`. A step picks `k2 != k1`, proposes `D_k2` from a
//! stationary AR(1), and moves `E_k1` by the opposite amount, which keeps
//! `sum_i E_i` (hence the total) fixed. After each step `k1 = k2`.

use rand::RngExt;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ops::{OpCounts, Tally};
use crate::allocation::{AllocationReport, Method};
use crate::models::{PortfolioSpec, ShiftedLognormalAsset};
use crate::rng::{stream, StreamRng, CHAIN_SLOT};
use crate::{Error, Result};

/// Consecutive rejections after which the chain is declared stuck.
pub const STUCK_STEPS: u64 = 10_000;

/// Relative tolerance for retained states on the level set.
pub const LEVEL_SET_TOL: f64 = 1e-8;

/// Batches used for batch-means standard errors.
const BATCHES: usize = 20;

/// Acceptance ratio of a move of `Y_k1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatioMode {
    /// Gaussian density ratio of the `k1` coordinate only.
    CoordinateOnly,
    /// Density ratio times `E_k1 / E~_k1`, the change of variables from `Y`
    /// to `X`; exact for the conditional law on the level set.
    #[default]
    JacobianCorrected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MCMCConfig {
    /// Retained samples.
    pub m: usize,
    /// Steps between retained samples; `n` when absent.
    #[serde(default)]
    pub thin: Option<usize>,
    #[serde(default = "default_rho")]
    pub rho_prop: f64,
    /// `VaR_alpha(X)`, supplied from another estimator.
    pub var_level: f64,
    /// Discarded initial steps; `10 n` when absent.
    #[serde(default)]
    pub burn_in: Option<usize>,
    #[serde(default)]
    pub ratio_mode: RatioMode,
    /// Record the first `trace_steps` steps.
    #[serde(default)]
    pub trace_steps: usize,
}

fn default_rho() -> f64 {
    0.3
}

impl MCMCConfig {
    pub fn new(m: usize, var_level: f64) -> Self {
        Self {
            m,
            thin: None,
            rho_prop: default_rho(),
            var_level,
            burn_in: None,
            ratio_mode: RatioMode::JacobianCorrected,
            trace_steps: 0,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if n < 2 {
            return Err(Error::InvalidConfig("the level-set chain needs at least two assets".into()));
        }
        if !(0.0..1.0).contains(&self.rho_prop) {
            return Err(Error::InvalidConfig(format!("rho_prop {} not in [0, 1)", self.rho_prop)));
        }
        if !self.var_level.is_finite() {
            return Err(Error::InvalidConfig("var_level must be finite".into()));
        }
        if self.m == 0 || self.thin == Some(0) {
            return Err(Error::InvalidConfig("m and thin must be positive".into()));
        }
        Ok(())
    }
}

/// One step of the chain, for trace output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub step: u64,
    pub accepted: bool,
    pub total: f64,
    pub asset_k1: f64,
    pub asset_k2: f64,
}

/// Raw output of one chain.
#[derive(Debug, Clone)]
pub struct ChainOutput {
    /// Mean of `X_i` over retained states.
    pub means: Vec<f64>,
    /// Batch-means standard error of each mean.
    pub stderr: Vec<f64>,
    pub acceptance: f64,
    /// Asset 0's component at each retained state.
    pub trace_scalar: Vec<f64>,
    /// Largest `|sum_i X_i + var_level| / max(1, |var_level|)` over retained states.
    pub max_level_error: f64,
    pub steps: u64,
    pub burn_in: u64,
    /// Hot-loop operations over all steps.
    pub ops: OpCounts,
    pub trace: Vec<TraceRow>,
}

struct Chain<'a> {
    a: &'a [f64],
    mu: Vec<f64>,
    /// AR(1) coefficient on `D`.
    rho: f64,
    /// `sqrt(1 - rho^2) sigma_i`.
    innov: Vec<f64>,
    /// `1 / (2 sigma_i^2)`.
    half_prec: Vec<f64>,
    d: Vec<f64>,
    e: Vec<f64>,
    k1: usize,
    jacobian: bool,
}

impl Chain<'_> {
    /// One Metropolis-Hastings step; returns whether it was accepted and `k2`.
    #[inline]
    fn step<const COUNT: bool>(&mut self, rng: &mut StreamRng, tally: &mut Tally<COUNT>) -> (bool, usize) {
        let n = self.d.len();
        let mut k2 = rng.random_range(0..n - 1);
        tally.cmp();
        if k2 >= self.k1 {
            k2 += 1;
        }
        let k1 = self.k1;
        let z: f64 = StandardNormal.sample(rng);
        let d2 = self.rho * self.d[k2] + self.innov[k2] * z;
        tally.mul(2);
        tally.add(1);
        let e2 = (d2 + self.mu[k2]).exp();
        tally.add(1);
        tally.exp();
        let e1 = self.e[k1] + self.e[k2] - e2;
        tally.add(2);
        tally.cmp();
        let accepted = if e1 <= 0.0 {
            false
        } else {
            let d1 = e1.ln() - self.mu[k1];
            tally.log();
            tally.add(1);
            let diff = self.d[k1] - d1;
            let mut lr = diff * (self.d[k1] + d1) * self.half_prec[k1];
            tally.add(2);
            tally.mul(2);
            if self.jacobian {
                // log(E_k1 / E~_k1) = Y_k1 - Y~_k1
                lr += diff;
                tally.add(1);
            }
            tally.cmp();
            let ok = lr >= 0.0 || {
                let u: f64 = Exp1.sample(rng);
                -u < lr
            };
            if ok {
                self.d[k1] = d1;
                self.e[k1] = e1;
                self.d[k2] = d2;
                self.e[k2] = e2;
            }
            ok
        };
        self.k1 = k2;
        (accepted, k2)
    }
}

/// Runs one chain with stream `(seed, chain, CHAIN_SLOT)`.
pub fn run_chain(spec: &PortfolioSpec, cfg: &MCMCConfig, seed: u64, chain: u64) -> Result<ChainOutput> {
    let assets: Vec<ShiftedLognormalAsset> = spec.lognormals()?;
    let n = assets.len();
    cfg.validate(n)?;
    if spec.weights.iter().any(|u| *u != 1.0) {
        return Err(Error::InvalidConfig("the level-set chain runs on unit weights".into()));
    }
    let thin = cfg.thin.unwrap_or(n) as u64;
    let burn_in = cfg.burn_in.unwrap_or(10 * n) as u64;
    let a: Vec<f64> = assets.iter().map(|x| x.a).collect();
    let mu: Vec<f64> = assets.iter().map(|x| x.mu).collect();

    // common shift c with sum_i exp(mu_i + c) = sum_i a_i + VaR
    let target: f64 = a.iter().sum::<f64>() + cfg.var_level;
    let base: f64 = mu.iter().map(|m| m.exp()).sum();
    if !(target > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "level {} is unreachable: sum of shifts plus VaR must be positive",
            cfg.var_level
        )));
    }
    let c = (target / base).ln();
    let mut ch = Chain {
        a: &a,
        mu: mu.clone(),
        rho: cfg.rho_prop,
        innov: assets.iter().map(|x| (1.0 - cfg.rho_prop * cfg.rho_prop).sqrt() * x.sigma).collect(),
        half_prec: assets.iter().map(|x| 0.5 / (x.sigma * x.sigma)).collect(),
        d: vec![c; n],
        e: mu.iter().map(|m| (m + c).exp()).collect(),
        k1: 0,
        jacobian: cfg.ratio_mode == RatioMode::JacobianCorrected,
    };
    let mut rng = stream(seed, chain, CHAIN_SLOT);
    ch.k1 = rng.random_range(0..n);

    let total_steps = burn_in + cfg.m as u64 * thin;
    let per_batch = cfg.m.div_ceil(BATCHES);
    let mut batch_sums = vec![vec![0.0; n]; cfg.m.div_ceil(per_batch)];
    let mut batch_counts = vec![0usize; batch_sums.len()];
    let mut trace_scalar = Vec::with_capacity(cfg.m);
    let mut trace = Vec::with_capacity(cfg.trace_steps.min(total_steps as usize));
    let mut tally = Tally::<true>::default();
    let (mut accepted, mut since_accept, mut max_err) = (0u64, 0u64, 0.0f64);
    let scale = cfg.var_level.abs().max(1.0);
    let mut retained = 0usize;

    for step in 1..=total_steps {
        let k1 = ch.k1;
        let (ok, k2) = ch.step(&mut rng, &mut tally);
        if ok {
            accepted += 1;
            since_accept = 0;
        } else {
            since_accept += 1;
            if since_accept >= STUCK_STEPS {
                return Err(Error::ChainStuck(step as usize));
            }
        }
        if (step as usize) <= cfg.trace_steps {
            trace.push(TraceRow {
                step,
                accepted: ok,
                total: total_of(ch.a, &ch.e),
                asset_k1: ch.a[k1] - ch.e[k1],
                asset_k2: ch.a[k2] - ch.e[k2],
            });
        }
        if step > burn_in && (step - burn_in).is_multiple_of(thin) {
            let bucket = &mut batch_sums[retained / per_batch];
            let mut total = 0.0;
            for ((b, a), e) in bucket.iter_mut().zip(ch.a.iter()).zip(ch.e.iter()) {
                let x = a - e;
                *b += x;
                total += x;
            }
            batch_counts[retained / per_batch] += 1;
            max_err = max_err.max((total + cfg.var_level).abs() / scale);
            trace_scalar.push(ch.a[0] - ch.e[0]);
            retained += 1;
        }
    }

    let m = retained as f64;
    let means: Vec<f64> = (0..n).map(|i| batch_sums.iter().map(|b| b[i]).sum::<f64>() / m).collect();
    let nb = batch_sums.len() as f64;
    let stderr = (0..n)
        .map(|i| {
            if nb < 2.0 {
                return 0.0;
            }
            let bm: Vec<f64> = batch_sums.iter().zip(&batch_counts).map(|(b, &k)| b[i] / k as f64).collect();
            let mean = bm.iter().sum::<f64>() / nb;
            (bm.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nb - 1.0) / nb).sqrt()
        })
        .collect();
    Ok(ChainOutput {
        means,
        stderr,
        acceptance: accepted as f64 / total_steps as f64,
        trace_scalar,
        max_level_error: max_err,
        steps: total_steps,
        burn_in,
        ops: tally.0,
        trace,
    })
}

fn total_of(a: &[f64], e: &[f64]) -> f64 {
    a.iter().zip(e).map(|(a, e)| a - e).sum()
}

/// Sample autocorrelation of `xs` at lags `1..=max_lag`.
pub fn autocorrelation(xs: &[f64], max_lag: usize) -> Vec<f64> {
    let m = xs.len();
    let mean = xs.iter().sum::<f64>() / m as f64;
    let var: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    (1..=max_lag)
        .map(|k| {
            if k >= m || var == 0.0 {
                return 0.0;
            }
            let cov: f64 = (0..m - k).map(|t| (xs[t] - mean) * (xs[t + k] - mean)).sum();
            cov / var
        })
        .collect()
}

fn report_from(out: &ChainOutput, cfg: &MCMCConfig, spec: &PortfolioSpec) -> Result<AllocationReport> {
    let alloc: Vec<f64> = out.means.iter().map(|x| 0.0 - x).collect();
    let mut report = AllocationReport::new(Method::Mcmc, cfg.var_level, alloc, out.stderr.clone())
        .diagnostic("acceptance", out.acceptance)
        .diagnostic("burn_in", out.burn_in as f64)
        .diagnostic("steps", out.steps as f64)
        .diagnostic("max_level_error", out.max_level_error)
        .diagnostic("ops_per_step", out.ops.per(out.steps));
    for (k, r) in autocorrelation(&out.trace_scalar, 10).into_iter().enumerate() {
        report = report.diagnostic(&format!("acf_lag_{:02}", k + 1), r);
    }
    if let Some(ret) = spec.expected_components() {
        report = report.with_returns(ret)?;
    }
    Ok(report)
}

/// MCMC allocation `-E[X_i | X = -var_level]` from one chain.
///
/// Diagnostics: `acceptance`, `burn_in`, `steps`, `max_level_error`,
/// `ops_per_step` and `acf_lag_01..10` of asset 0's retained component.
pub fn estimate_mcmc(spec: &PortfolioSpec, cfg: &MCMCConfig, seed: u64) -> Result<AllocationReport> {
    let out = run_chain(spec, cfg, seed, 0)?;
    report_from(&out, cfg, spec)
}

/// Pools `chains` independent chains run in parallel. The reported
/// standard error is the between-chain standard error of the pooled mean;
/// `between_chain_sd_max` is the largest across-chain spread of one asset.
pub fn estimate_mcmc_pooled(
    spec: &PortfolioSpec,
    cfg: &MCMCConfig,
    seed: u64,
    chains: usize,
) -> Result<AllocationReport> {
    if chains < 2 {
        return estimate_mcmc(spec, cfg, seed);
    }
    let outs: Vec<ChainOutput> = (0..chains as u64)
        .into_par_iter()
        .map(|c| run_chain(spec, cfg, seed, c))
        .collect::<Result<_>>()?;
    let n = outs[0].means.len();
    let k = chains as f64;
    let means: Vec<f64> = (0..n).map(|i| outs.iter().map(|o| o.means[i]).sum::<f64>() / k).collect();
    let sds: Vec<f64> = (0..n)
        .map(|i| (outs.iter().map(|o| (o.means[i] - means[i]).powi(2)).sum::<f64>() / (k - 1.0)).sqrt())
        .collect();
    let mut pooled = outs[0].clone();
    pooled.means = means;
    pooled.stderr = sds.iter().map(|s| s / k.sqrt()).collect();
    pooled.acceptance = outs.iter().map(|o| o.acceptance).sum::<f64>() / k;
    pooled.max_level_error = outs.iter().map(|o| o.max_level_error).fold(0.0, f64::max);
    pooled.steps = outs.iter().map(|o| o.steps).sum();
    pooled.ops = outs.iter().fold(OpCounts::default(), |mut acc, o| {
        acc += o.ops;
        acc
    });
    let report = report_from(&pooled, cfg, spec)?
        .diagnostic("chains", k)
        .diagnostic("between_chain_sd_max", sds.iter().copied().fold(0.0, f64::max));
    Ok(report)
}
