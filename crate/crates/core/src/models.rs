//! Parametric asset models and portfolio sampling.
//!
//! Asset `i` of realization `j` draws only from stream `(seed, j, i)`, so a
//! batch is a pure function of `(spec, m, seed)`.

use std::f64::consts::PI;

use rand::distr::weighted::WeightedIndex;
use rand::RngExt;
use rand_distr::{Distribution, Pareto, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discrete::{product_distribution, reflect, DiscreteJointDistribution, DiscreteLaw, WeightVector};
use crate::empirical::RealizationBatch;
use crate::rng::{stream, StreamRng};
use crate::{Error, Result};

/// `X = a - exp(Y)`, `Y ~ N(mu, sigma^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftedLognormalAsset {
    pub a: f64,
    pub mu: f64,
    pub sigma: f64,
}

impl ShiftedLognormalAsset {
    pub fn new(a: f64, mu: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !a.is_finite() || !mu.is_finite() || !sigma.is_finite() {
            return Err(Error::InvalidModel(format!("lognormal a={a} mu={mu} sigma={sigma}")));
        }
        Ok(Self { a, mu, sigma })
    }

    /// Shift `a` calibrated so that `E[X] = target_mean`.
    pub fn calibrated(mu: f64, sigma: f64, target_mean: f64) -> Result<Self> {
        Self::new(calibrate_a(mu, sigma, target_mean), mu, sigma)
    }

    pub fn mean(&self) -> f64 {
        self.a - (self.mu + 0.5 * self.sigma * self.sigma).exp()
    }

    /// Value for a standard normal draw `z` under the proposal
    /// `Y = (mu + shift) + sigma_y z`.
    #[inline]
    pub fn value_from_normal(&self, z: f64, shift: f64, sigma_y: f64) -> f64 {
        self.a - ((self.mu + shift) + sigma_y * z).exp()
    }
}

/// `X = base - I Y` with `P(I = 1) = p_loss` and `Y` Lomax with density
/// `(gamma / b) (y / b + 1)^(-gamma - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BernoulliParetoAsset {
    pub base: f64,
    pub p_loss: f64,
    pub gamma: f64,
    pub b: f64,
}

impl BernoulliParetoAsset {
    pub fn new(base: f64, p_loss: f64, gamma: f64, b: f64) -> Result<Self> {
        if !(gamma > 1.0) {
            return Err(Error::InfiniteMean(gamma));
        }
        if !(p_loss > 0.0 && p_loss < 1.0) || !(b > 0.0) || !base.is_finite() {
            return Err(Error::InvalidModel(format!(
                "bernoulli-pareto base={base} p_loss={p_loss} b={b}"
            )));
        }
        Ok(Self { base, p_loss, gamma, b })
    }

    /// Scale `b` calibrated so that `E[X] = target_mean`.
    pub fn calibrated(base: f64, p_loss: f64, gamma: f64, target_mean: f64) -> Result<Self> {
        let b = calibrate_pareto_scale(gamma, p_loss, base, target_mean)?;
        Self::new(base, p_loss, gamma, b)
    }

    pub fn mean(&self) -> f64 {
        self.base - self.p_loss * self.b / (self.gamma - 1.0)
    }
}

/// One asset of a portfolio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AssetModel {
    ShiftedLognormal { a: f64, mu: f64, sigma: f64 },
    BernoulliPareto { base: f64, p_loss: f64, gamma: f64, b: f64 },
    Uniform { lo: f64, hi: f64 },
    Discrete { values: Vec<f64>, probs: Vec<f64> },
    Constant { value: f64 },
    /// `-down * S` for `S <= 0`, `-up * S` otherwise, where `S` is the raw
    /// (unweighted) value of the earlier asset `source`.
    Reflection { source: usize, down: f64, up: f64 },
}

impl From<ShiftedLognormalAsset> for AssetModel {
    fn from(x: ShiftedLognormalAsset) -> Self {
        Self::ShiftedLognormal { a: x.a, mu: x.mu, sigma: x.sigma }
    }
}

impl From<BernoulliParetoAsset> for AssetModel {
    fn from(x: BernoulliParetoAsset) -> Self {
        Self::BernoulliPareto { base: x.base, p_loss: x.p_loss, gamma: x.gamma, b: x.b }
    }
}

impl AssetModel {
    pub fn as_lognormal(&self) -> Option<ShiftedLognormalAsset> {
        match *self {
            Self::ShiftedLognormal { a, mu, sigma } => Some(ShiftedLognormalAsset { a, mu, sigma }),
            _ => None,
        }
    }

    /// Expected value, when it does not depend on other assets.
    pub fn mean(&self) -> Option<f64> {
        match self {
            Self::ShiftedLognormal { a, mu, sigma } => {
                Some(ShiftedLognormalAsset { a: *a, mu: *mu, sigma: *sigma }.mean())
            }
            Self::BernoulliPareto { base, p_loss, gamma, b } => {
                Some(BernoulliParetoAsset { base: *base, p_loss: *p_loss, gamma: *gamma, b: *b }.mean())
            }
            Self::Uniform { lo, hi } => Some(0.5 * (lo + hi)),
            Self::Discrete { values, probs } => Some(values.iter().zip(probs).map(|(v, p)| v * p).sum()),
            Self::Constant { value } => Some(*value),
            Self::Reflection { .. } => None,
        }
    }

    fn validate(&self, index: usize) -> Result<()> {
        match self {
            Self::ShiftedLognormal { a, mu, sigma } => ShiftedLognormalAsset::new(*a, *mu, *sigma).map(drop),
            Self::BernoulliPareto { base, p_loss, gamma, b } => {
                BernoulliParetoAsset::new(*base, *p_loss, *gamma, *b).map(drop)
            }
            Self::Uniform { lo, hi } if lo < hi && lo.is_finite() && hi.is_finite() => Ok(()),
            Self::Uniform { lo, hi } => Err(Error::InvalidModel(format!("uniform on [{lo}, {hi}]"))),
            Self::Discrete { values, probs } => DiscreteLaw::new(values.clone(), probs.clone()).map(drop),
            Self::Constant { value } if value.is_finite() => Ok(()),
            Self::Constant { value } => Err(Error::InvalidModel(format!("constant {value}"))),
            Self::Reflection { source, .. } if *source < index => Ok(()),
            Self::Reflection { source, .. } => Err(Error::InvalidModel(format!(
                "asset {index} reflects asset {source}, which must come earlier"
            ))),
        }
    }
}

/// Sampler prepared once per batch.
#[derive(Debug, Clone)]
enum Prepared {
    Lognormal(ShiftedLognormalAsset),
    Pareto { base: f64, p_loss: f64, lomax: Pareto<f64>, b: f64 },
    Uniform { lo: f64, width: f64 },
    Discrete { values: Vec<f64>, index: WeightedIndex<f64> },
    Constant(f64),
    Reflection { source: usize, down: f64, up: f64 },
}

impl Prepared {
    fn new(model: &AssetModel) -> Result<Self> {
        Ok(match model {
            AssetModel::ShiftedLognormal { a, mu, sigma } => {
                Self::Lognormal(ShiftedLognormalAsset { a: *a, mu: *mu, sigma: *sigma })
            }
            AssetModel::BernoulliPareto { base, p_loss, gamma, b } => Self::Pareto {
                base: *base,
                p_loss: *p_loss,
                lomax: Pareto::new(*b, *gamma).map_err(|e| Error::InvalidModel(e.to_string()))?,
                b: *b,
            },
            AssetModel::Uniform { lo, hi } => Self::Uniform { lo: *lo, width: hi - lo },
            AssetModel::Discrete { values, probs } => Self::Discrete {
                values: values.clone(),
                index: WeightedIndex::new(probs).map_err(|e| Error::InvalidModel(e.to_string()))?,
            },
            AssetModel::Constant { value } => Self::Constant(*value),
            AssetModel::Reflection { source, down, up } => {
                Self::Reflection { source: *source, down: *down, up: *up }
            }
        })
    }

    #[inline]
    fn draw(&self, rng: &mut StreamRng, raw: &[f64]) -> f64 {
        match self {
            Self::Lognormal(x) => {
                let z: f64 = StandardNormal.sample(rng);
                x.value_from_normal(z, 0.0, x.sigma)
            }
            Self::Pareto { base, p_loss, lomax, b } => {
                if rng.random::<f64>() < *p_loss {
                    base - (lomax.sample(rng) - b)
                } else {
                    *base
                }
            }
            Self::Uniform { lo, width } => lo + width * rng.random::<f64>(),
            Self::Discrete { values, index } => values[index.sample(rng)],
            Self::Constant(v) => *v,
            Self::Reflection { source, down, up } => reflect(raw[*source], *down, *up),
        }
    }
}

/// How the assets of a portfolio depend on each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dependence {
    Independent,
    /// Some asset is a piecewise reflection of another.
    Reflection,
}

/// Assets, their weights, and the resulting portfolio `X = sum_i u_i X_i`.
/// Batches record the weighted components `u_i X_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortfolioSpec {
    pub assets: Vec<AssetModel>,
    pub weights: Vec<f64>,
}

impl PortfolioSpec {
    pub fn new(assets: Vec<AssetModel>, weights: WeightVector) -> Result<Self> {
        let spec = Self { assets, weights: weights.as_slice().to_vec() };
        spec.validate()?;
        Ok(spec)
    }

    /// Unit weights.
    pub fn unweighted(assets: Vec<AssetModel>) -> Result<Self> {
        let n = assets.len();
        Self::new(assets, WeightVector::ones(n))
    }

    pub fn validate(&self) -> Result<()> {
        if self.assets.is_empty() {
            return Err(Error::InvalidModel("no assets".into()));
        }
        if self.weights.len() != self.assets.len() {
            return Err(Error::InvalidWeights(format!(
                "{} weights for {} assets",
                self.weights.len(),
                self.assets.len()
            )));
        }
        if self.weights.iter().any(|u| !u.is_finite()) {
            return Err(Error::InvalidWeights("non-finite weight".into()));
        }
        self.assets.iter().enumerate().try_for_each(|(i, a)| a.validate(i))
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn dependence(&self) -> Dependence {
        if self.assets.iter().any(|a| matches!(a, AssetModel::Reflection { .. })) {
            Dependence::Reflection
        } else {
            Dependence::Independent
        }
    }

    /// `E[u_i X_i]` per asset; reflections are estimated by the caller.
    pub fn expected_components(&self) -> Option<Vec<f64>> {
        self.assets.iter().zip(&self.weights).map(|(a, u)| a.mean().map(|m| u * m)).collect()
    }

    /// All assets as lognormals, if they are.
    pub fn lognormals(&self) -> Result<Vec<ShiftedLognormalAsset>> {
        self.assets
            .iter()
            .map(|a| {
                a.as_lognormal()
                    .ok_or_else(|| Error::InvalidModel("estimator needs shifted-lognormal assets".into()))
            })
            .collect()
    }

    /// Exact joint law of the weighted components. Assets must be discrete,
    /// constant, uniform (replaced by `uniform_points` equally likely grid
    /// atoms) or reflections.
    pub fn discrete_joint(&self, uniform_points: usize) -> Result<DiscreteJointDistribution> {
        self.validate()?;
        let mut laws = Vec::new();
        for a in &self.assets {
            match a {
                AssetModel::Discrete { values, probs } => laws.push(DiscreteLaw::new(values.clone(), probs.clone())?),
                AssetModel::Constant { value } => laws.push(DiscreteLaw::point(*value)),
                AssetModel::Uniform { lo, hi } => laws.push(DiscreteLaw::uniform_grid(*lo, *hi, uniform_points)?),
                AssetModel::Reflection { .. } => {}
                _ => return Err(Error::InvalidModel("exact evaluation needs discrete assets".into())),
            }
        }
        let base = product_distribution(&laws)?;
        let n = self.n_assets();
        let atoms = base
            .atoms()
            .map(|(free, p)| {
                let mut raw = Vec::with_capacity(n);
                let mut next = free.iter();
                for a in &self.assets {
                    let x = match *a {
                        AssetModel::Reflection { source, down, up } => reflect(raw[source], down, up),
                        _ => *next.next().expect("one free value per independent asset"),
                    };
                    raw.push(x);
                }
                (raw.iter().zip(&self.weights).map(|(x, u)| u * x).collect(), p)
            })
            .collect();
        DiscreteJointDistribution::new(n, atoms)
    }

    /// Sampler that can regenerate any row on demand.
    pub fn sampler(&self) -> Result<RowSampler> {
        self.validate()?;
        Ok(RowSampler {
            prepared: self.assets.iter().map(Prepared::new).collect::<Result<_>>()?,
            weights: self.weights.clone(),
        })
    }
}

/// Row generator for a [`PortfolioSpec`].
#[derive(Debug, Clone)]
pub struct RowSampler {
    prepared: Vec<Prepared>,
    weights: Vec<f64>,
}

impl RowSampler {
    pub fn n_assets(&self) -> usize {
        self.prepared.len()
    }

    /// Fills `out` with the weighted components of realization `j` and
    /// returns their sum. `raw` is scratch of the same length.
    #[inline]
    pub fn row(&self, seed: u64, j: u64, raw: &mut [f64], out: &mut [f64]) -> f64 {
        let mut total = 0.0;
        for (i, p) in self.prepared.iter().enumerate() {
            let mut rng = stream(seed, j, i as u64);
            raw[i] = p.draw(&mut rng, raw);
            out[i] = self.weights[i] * raw[i];
            total += out[i];
        }
        total
    }

    /// Totals of realizations `0..m`, in parallel.
    pub fn totals(&self, m: usize, seed: u64) -> Vec<f64> {
        let n = self.n_assets();
        (0..m as u64)
            .into_par_iter()
            .map_init(
                || (vec![0.0; n], vec![0.0; n]),
                |(raw, out), j| self.row(seed, j, raw, out),
            )
            .collect()
    }

    /// The listed realizations as a batch, rows in the given order.
    pub fn rows(&self, indices: &[usize], seed: u64) -> Result<RealizationBatch> {
        let n = self.n_assets();
        let mut components = vec![0.0; indices.len() * n];
        components.par_chunks_mut(n).zip(indices.par_iter()).for_each_init(
            || vec![0.0; n],
            |raw, (out, &j)| {
                self.row(seed, j as u64, raw, out);
            },
        );
        RealizationBatch::new(n, components, None, seed)
    }
}

/// `a = target_mean + exp(mu + sigma^2 / 2)`, so `E[a - e^Y] = target_mean`.
pub fn calibrate_a(mu: f64, sigma: f64, target_mean: f64) -> f64 {
    target_mean + (mu + 0.5 * sigma * sigma).exp()
}

/// `b = (base - target_mean) (gamma - 1) / p_loss`, from the Lomax mean
/// `b / (gamma - 1)`.
pub fn calibrate_pareto_scale(gamma: f64, p_loss: f64, base: f64, target_mean: f64) -> Result<f64> {
    if !(gamma > 1.0) {
        return Err(Error::InfiniteMean(gamma));
    }
    let b = (base - target_mean) * (gamma - 1.0) / p_loss;
    if !(b > 0.0) {
        return Err(Error::InvalidModel(format!("pareto scale {b} must be positive")));
    }
    Ok(b)
}

/// `m` realizations of the portfolio.
pub fn sample_portfolio(spec: &PortfolioSpec, m: usize, seed: u64) -> Result<RealizationBatch> {
    if m == 0 {
        return Err(Error::EmptyBatch);
    }
    let sampler = spec.sampler()?;
    let n = sampler.n_assets();
    let mut components = vec![0.0; m * n];
    components.par_chunks_mut(n).enumerate().for_each_init(
        || vec![0.0; n],
        |raw, (j, out)| {
            sampler.row(seed, j as u64, raw, out);
        },
    );
    RealizationBatch::new(n, components, None, seed)
}

/// Gaussian log-density of `Y` at `y`.
#[inline]
pub fn log_density_y(asset: &ShiftedLognormalAsset, y: f64) -> f64 {
    gaussian_log_density(y, asset.mu, asset.sigma)
}

#[inline]
pub fn gaussian_log_density(y: f64, mu: f64, sigma: f64) -> f64 {
    let d = (y - mu) / sigma;
    -0.5 * d * d - (sigma * (2.0 * PI).sqrt()).ln()
}

/// Example 2 portfolio: `X_1` uniform on `[-1, 1]`, `X_2` its reflection,
/// components `(3 X_1, X_2)`.
pub fn example2_spec() -> PortfolioSpec {
    PortfolioSpec {
        assets: vec![
            AssetModel::Uniform { lo: -1.0, hi: 1.0 },
            AssetModel::Reflection { source: 0, down: 1.0, up: 2.0 },
        ],
        weights: vec![3.0, 1.0],
    }
}

/// Example 3 asset types: `0.5 - I Y` with loss probability 0.1, mean 0.2,
/// and tail index 5 (light) or 1.7 (heavy).
pub fn example3_assets() -> Result<[BernoulliParetoAsset; 2]> {
    Ok([
        BernoulliParetoAsset::calibrated(0.5, 0.1, 5.0, 0.2)?,
        BernoulliParetoAsset::calibrated(0.5, 0.1, 1.7, 0.2)?,
    ])
}

/// Example 5 portfolio: three groups of `per_group` lognormal assets with
/// `mu = 0.44, 0.45, 0.47`, `sigma = 0.5`, each calibrated to mean 0.2.
pub fn example5_spec(per_group: usize) -> Result<PortfolioSpec> {
    let mut assets = Vec::with_capacity(3 * per_group);
    for mu in EXAMPLE5_MUS {
        for _ in 0..per_group {
            assets.push(ShiftedLognormalAsset::calibrated(mu, 0.5, 0.2)?.into());
        }
    }
    PortfolioSpec::unweighted(assets)
}

pub const EXAMPLE5_MUS: [f64; 3] = [0.44, 0.45, 0.47];

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn discrete_joint_matches_example2() {
        let joint = example2_spec().discrete_joint(101).unwrap();
        let direct = crate::discrete::example2_joint(101).unwrap();
        assert_eq!(joint.atoms().collect::<Vec<_>>(), direct.atoms().collect::<Vec<_>>());
        assert!(example5_spec(1).unwrap().discrete_joint(3).is_err());
    }

    #[test]
    fn calibrate_a_values() {
        assert_abs_diff_eq!(calibrate_a(0.0, 0.0, 0.2), 1.2, epsilon = 1e-15);
        let a = calibrate_a(0.45, 0.5, 0.2);
        assert_abs_diff_eq!(a, 0.2 + 0.575f64.exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(a, 1.977, epsilon = 1e-3);
    }

    fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
        let m = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / m;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
        (mean, (var / m).sqrt())
    }

    #[test]
    fn calibrated_lognormal_hits_mean() {
        let asset = ShiftedLognormalAsset::calibrated(0.45, 0.5, 0.2).unwrap();
        let spec = PortfolioSpec::unweighted(vec![asset.into()]).unwrap();
        let b = sample_portfolio(&spec, 1_000_000, 11).unwrap();
        let (mean, se) = mean_and_stderr(b.totals());
        assert!((mean - 0.2).abs() <= 3.0 * se, "{mean} +- {se}");
    }

    #[test]
    fn pareto_scale_closed_form() {
        assert_abs_diff_eq!(calibrate_pareto_scale(5.0, 0.1, 0.5, 0.2).unwrap(), 12.0, epsilon = 1e-12);
        assert_abs_diff_eq!(calibrate_pareto_scale(1.7, 0.1, 0.5, 0.2).unwrap(), 2.1, epsilon = 1e-12);
        assert!(calibrate_pareto_scale(2.0, 0.1, 0.5, 0.5).is_err());
        assert!(matches!(calibrate_pareto_scale(1.0, 0.1, 0.5, 0.2), Err(Error::InfiniteMean(_))));
    }

    #[test]
    fn pareto_mean_by_quadrature() {
        // integral of y f(y) on [0, inf) via y = b (1/t - 1), t in (0, 1]
        for (gamma, b) in [(5.0, 12.0), (3.0, 6.0)] {
            let k = 200_000;
            let mut acc = 0.0;
            for s in 0..k {
                let t = (s as f64 + 0.5) / k as f64;
                let y = b * (1.0 / t - 1.0);
                let f = gamma / b * (y / b + 1.0).powf(-gamma - 1.0);
                acc += y * f * b / (t * t) / k as f64;
            }
            assert_abs_diff_eq!(acc, b / (gamma - 1.0), epsilon = 1e-6 * b);
        }
    }

    #[test]
    fn bernoulli_pareto_loss_frequency() {
        let [light, _] = example3_assets().unwrap();
        let spec = PortfolioSpec::unweighted(vec![light.into()]).unwrap();
        let m = 1_000_000;
        let b = sample_portfolio(&spec, m, 5).unwrap();
        let hits = b.totals().iter().filter(|t| **t < 0.5).count() as f64 / m as f64;
        let se = (0.1 * 0.9 / m as f64).sqrt();
        assert!((hits - 0.1).abs() <= 3.0 * se, "{hits}");
        let (mean, se) = mean_and_stderr(b.totals());
        assert!((mean - 0.2).abs() <= 3.0 * se, "{mean} +- {se}");
    }

    #[test]
    fn zero_weights_give_zero_totals() {
        let assets = example3_assets().unwrap().map(AssetModel::from).to_vec();
        let spec = PortfolioSpec::new(assets, vec![0.0, 0.0].into()).unwrap();
        let b = sample_portfolio(&spec, 1000, 1).unwrap();
        assert!(b.totals().iter().all(|t| *t == 0.0));
    }

    #[test]
    fn seed_determinism_and_row_regeneration() {
        let spec = example5_spec(2).unwrap();
        let a = sample_portfolio(&spec, 500, 9).unwrap();
        let b = sample_portfolio(&spec, 500, 9).unwrap();
        assert_eq!(a, b);
        let sampler = spec.sampler().unwrap();
        assert_eq!(sampler.totals(500, 9), a.totals());
        let rows = sampler.rows(&[17, 3], 9).unwrap();
        assert_eq!(rows.row(0), a.row(17));
        assert_eq!(rows.row(1), a.row(3));
        assert_ne!(sample_portfolio(&spec, 500, 10).unwrap(), a);
    }

    #[test]
    fn example2_rows_are_structural() {
        let b = sample_portfolio(&example2_spec(), 10_000, 3).unwrap();
        for j in 0..b.len() {
            let x1 = b.row(j)[0] / 3.0;
            let expect = if x1 <= 0.0 { 2.0 * x1 } else { x1 };
            assert_abs_diff_eq!(b.totals()[j], expect, epsilon = 1e-12);
        }
    }

    fn ks_distance(a: &mut [f64], b: &mut [f64]) -> f64 {
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let (mut i, mut k, mut d) = (0, 0, 0.0f64);
        while i < a.len() && k < b.len() {
            let z = a[i].min(b[k]);
            while i < a.len() && a[i] <= z {
                i += 1;
            }
            while k < b.len() && b[k] <= z {
                k += 1;
            }
            d = d.max((i as f64 / a.len() as f64 - k as f64 / b.len() as f64).abs());
        }
        d
    }

    #[test]
    fn example2_total_has_law_of_x2() {
        let m = 200_000;
        let first = sample_portfolio(&example2_spec(), m, 1).unwrap();
        let second = sample_portfolio(&example2_spec(), m, 2).unwrap();
        let mut total = first.totals().to_vec();
        let mut x2 = second.column(1);
        assert!(ks_distance(&mut total, &mut x2) <= 2.0 / (m as f64).sqrt());
    }

    #[test]
    fn example2_stochastic_dominance_on_grid() {
        let b = sample_portfolio(&example2_spec(), 100_000, 4).unwrap();
        let x1: Vec<f64> = b.column(0).iter().map(|v| v / 3.0).collect();
        let x2 = b.column(1);
        // the two CDFs coincide on [0, 1], so allow sampling noise there
        let slack = 3.0 * 0.5 * (b.len() as f64).sqrt();
        for k in 0..=40 {
            let z = -2.0 + 0.1 * k as f64;
            let f1 = x1.iter().filter(|v| **v <= z).count() as f64;
            let f2 = x2.iter().filter(|v| **v <= z).count() as f64;
            assert!(f1 <= f2 + slack, "z = {z}: {f1} > {f2}");
        }
    }

    #[test]
    fn log_density_properties() {
        let asset = ShiftedLognormalAsset::new(2.0, 0.3, 0.7).unwrap();
        assert_abs_diff_eq!(
            log_density_y(&asset, 0.3),
            -(0.7 * (2.0 * PI).sqrt()).ln(),
            epsilon = 1e-15
        );
        assert_eq!(log_density_y(&asset, 0.3 + 0.7), log_density_y(&asset, 0.3 - 0.7));
        let (lo, hi, k) = (0.3 - 12.0 * 0.7, 0.3 + 12.0 * 0.7, 100_000);
        let h = (hi - lo) / k as f64;
        let mut acc = 0.0;
        for s in 0..=k {
            let w = if s == 0 || s == k { 0.5 } else { 1.0 };
            acc += w * log_density_y(&asset, lo + h * s as f64).exp();
        }
        assert_abs_diff_eq!(acc * h, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn invalid_models_rejected() {
        assert!(PortfolioSpec::unweighted(vec![]).is_err());
        assert!(ShiftedLognormalAsset::new(1.0, 0.0, 0.0).is_err());
        let bad = vec![AssetModel::Reflection { source: 0, down: 1.0, up: 2.0 }];
        assert!(PortfolioSpec::unweighted(bad).is_err());
        let spec = PortfolioSpec { assets: vec![AssetModel::Constant { value: 1.0 }], weights: vec![] };
        assert!(spec.validate().is_err());
    }
}
