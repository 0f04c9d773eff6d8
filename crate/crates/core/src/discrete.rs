//! Exact risk and Euler allocations on finite joint distributions.
//!
//! This is the ground truth the simulation estimators are checked against.
//! All quantities are computed by sorting the atoms of `sum_i u_i X_i`.

use std::path::Path;

use crate::{check_level, Error, Result};

/// Absolute tolerance for matching an atom total to `-VaR`.
pub const LEVEL_MATCH_TOL: f64 = 1e-9;

/// Slack on cumulative probabilities when locating a quantile.
const CUM_TOL: f64 = 1e-12;

/// Upper bound on the atom count of a product distribution.
pub const MAX_ATOMS: usize = 10_000_000;

/// Law of one discrete variable.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLaw {
    pub values: Vec<f64>,
    pub probs: Vec<f64>,
}

fn prob_sum_tol(atoms: usize) -> f64 {
    // rounding in long probability sums grows with the atom count
    CUM_TOL.max(4.0 * atoms as f64 * f64::EPSILON)
}

fn validate_probs(probs: &[f64]) -> Result<()> {
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidDistribution("negative or non-finite probability".into()));
    }
    let s: f64 = probs.iter().sum();
    if (s - 1.0).abs() > prob_sum_tol(probs.len()) {
        return Err(Error::InvalidDistribution(format!("probabilities sum to {s}")));
    }
    Ok(())
}

impl DiscreteLaw {
    pub fn new(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if values.len() != probs.len() || values.is_empty() {
            return Err(Error::InvalidDistribution(format!(
                "{} values and {} probabilities",
                values.len(),
                probs.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDistribution("non-finite value".into()));
        }
        validate_probs(&probs)?;
        Ok(Self { values, probs })
    }

    pub fn point(value: f64) -> Self {
        Self { values: vec![value], probs: vec![1.0] }
    }

    /// `points` equally weighted atoms evenly spaced on `[lo, hi]`,
    /// endpoints included. Atoms are `(lo (N - k) + hi k) / N`, so a grid
    /// symmetric about 0 has exactly negated atoms.
    pub fn uniform_grid(lo: f64, hi: f64, points: usize) -> Result<Self> {
        if points < 2 || !(hi > lo) {
            return Err(Error::InvalidDistribution(format!(
                "grid of {points} points on [{lo}, {hi}]"
            )));
        }
        let n = (points - 1) as f64;
        let values = (0..points).map(|k| (lo * (n - k as f64) + hi * k as f64) / n).collect();
        Self::new(values, vec![1.0 / points as f64; points])
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().zip(&self.probs).map(|(v, p)| v * p).sum()
    }

    /// `P(X <= z)`.
    pub fn cdf(&self, z: f64) -> f64 {
        self.values.iter().zip(&self.probs).filter(|(v, _)| **v <= z).map(|(_, p)| p).sum()
    }
}

/// Finite joint law of `(X_1, ..., X_n)`: atoms are value vectors with
/// probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteJointDistribution {
    n: usize,
    values: Vec<f64>,
    probs: Vec<f64>,
}

/// Portfolio weights `u`. `WeightVector::ones(n)` is the Euler reference point.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(u: Vec<f64>) -> Result<Self> {
        if u.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidWeights(format!("non-finite weight in {u:?}")));
        }
        Ok(Self(u))
    }

    pub fn ones(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<f64>> for WeightVector {
    fn from(u: Vec<f64>) -> Self {
        Self(u)
    }
}

/// Form of Expected Shortfall.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EsForm {
    /// `-E[X | X <= -VaR]`.
    TailConditional,
    /// `(1 / (1 - alpha)) * integral_alpha^1 VaR_tau dtau`; coherent on atoms.
    Integral,
}

impl DiscreteJointDistribution {
    pub fn new(n: usize, atoms: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        if n == 0 || atoms.is_empty() {
            return Err(Error::InvalidDistribution("no assets or no atoms".into()));
        }
        let mut values = Vec::with_capacity(atoms.len() * n);
        let mut probs = Vec::with_capacity(atoms.len());
        for (v, p) in atoms {
            if v.len() != n {
                return Err(Error::InvalidDistribution(format!(
                    "atom of length {} in a {n}-asset distribution",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidDistribution("non-finite atom value".into()));
            }
            values.extend(v);
            probs.push(p);
        }
        validate_probs(&probs)?;
        Ok(Self { n, values, probs })
    }

    /// Single-asset distribution from a marginal law.
    pub fn from_law(law: &DiscreteLaw) -> Self {
        Self { n: 1, values: law.values.clone(), probs: law.probs.clone() }
    }

    /// Loads `x_1,...,x_n,prob` CSV (header required).
    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        Self::from_csv_reader(&mut rdr)
    }

    pub fn from_csv_reader<R: std::io::Read>(rdr: &mut csv::Reader<R>) -> Result<Self> {
        let header = rdr.headers()?.clone();
        let cols = header.len();
        if cols < 2 || &header[cols - 1] != "prob" {
            return Err(Error::InvalidDistribution(
                "expected header x_1,...,x_n,prob".into(),
            ));
        }
        let n = cols - 1;
        let mut atoms = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let parsed: std::result::Result<Vec<f64>, _> =
                rec.iter().map(|s| s.trim().parse::<f64>()).collect();
            let parsed = parsed
                .map_err(|e| Error::InvalidDistribution(format!("row {:?}: {e}", rec.position())))?;
            atoms.push((parsed[..n].to_vec(), parsed[n]));
        }
        Self::new(n, atoms)
    }

    pub fn n_assets(&self) -> usize {
        self.n
    }

    pub fn n_atoms(&self) -> usize {
        self.probs.len()
    }

    pub fn atom(&self, k: usize) -> (&[f64], f64) {
        (&self.values[k * self.n..(k + 1) * self.n], self.probs[k])
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.values.chunks(self.n).zip(self.probs.iter().copied())
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Atom totals of `sum_i u_i X_i`.
    pub fn weighted_sums(&self, u: &WeightVector) -> Result<Vec<f64>> {
        if u.len() != self.n {
            return Err(Error::InvalidWeights(format!(
                "{} weights for {} assets",
                u.len(),
                self.n
            )));
        }
        Ok(self
            .values
            .chunks(self.n)
            .map(|v| v.iter().zip(u.as_slice()).map(|(x, w)| x * w).sum())
            .collect())
    }

    /// Marginal law of asset `i`.
    pub fn marginal(&self, i: usize) -> DiscreteLaw {
        DiscreteLaw {
            values: self.values.chunks(self.n).map(|v| v[i]).collect(),
            probs: self.probs.clone(),
        }
    }

    /// Distribution with every atom value multiplied by the per-asset
    /// factors `u` (the assets become `u_i X_i`).
    pub fn scaled(&self, u: &WeightVector) -> Result<Self> {
        if u.len() != self.n {
            return Err(Error::InvalidWeights("weight length mismatch".into()));
        }
        let values = self
            .values
            .chunks(self.n)
            .flat_map(|v| v.iter().zip(u.as_slice()).map(|(x, w)| x * w).collect::<Vec<_>>())
            .collect();
        Ok(Self { n: self.n, values, probs: self.probs.clone() })
    }

    /// Adds a derived column computed from each atom.
    pub fn with_column(&self, f: impl Fn(&[f64]) -> f64) -> Self {
        let n = self.n + 1;
        let mut values = Vec::with_capacity(self.n_atoms() * n);
        for v in self.values.chunks(self.n) {
            values.extend_from_slice(v);
            values.push(f(v));
        }
        Self { n, values, probs: self.probs.clone() }
    }

    /// Selects columns (in the given order).
    pub fn select(&self, cols: &[usize]) -> Result<Self> {
        if cols.is_empty() || cols.iter().any(|&c| c >= self.n) {
            return Err(Error::InvalidDistribution(format!("bad column selection {cols:?}")));
        }
        let values = self.values.chunks(self.n).flat_map(|v| cols.iter().map(move |&c| v[c])).collect();
        Ok(Self { n: cols.len(), values, probs: self.probs.clone() })
    }

    /// Single-asset distribution of the portfolio total `sum_i X_i`.
    pub fn total(&self) -> Self {
        Self {
            n: 1,
            values: self.values.chunks(self.n).map(|v| v.iter().sum()).collect(),
            probs: self.probs.clone(),
        }
    }
}

/// Independent joint law from marginals: the full Cartesian product with
/// product probabilities. Asset order follows `marginals`; the last
/// marginal varies fastest.
pub fn product_distribution(marginals: &[DiscreteLaw]) -> Result<DiscreteJointDistribution> {
    if marginals.is_empty() {
        return Err(Error::InvalidDistribution("no marginals".into()));
    }
    let count = marginals.iter().fold(1u128, |acc, m| acc.saturating_mul(m.values.len() as u128));
    if count > MAX_ATOMS as u128 {
        return Err(Error::TooManyAtoms { count, bound: MAX_ATOMS });
    }
    for m in marginals {
        validate_probs(&m.probs)?;
    }
    let n = marginals.len();
    let mut values: Vec<f64> = Vec::with_capacity(count as usize * n);
    let mut probs: Vec<f64> = Vec::with_capacity(count as usize);
    let mut idx = vec![0usize; n];
    loop {
        let mut p = 1.0;
        for (i, m) in marginals.iter().enumerate() {
            values.push(m.values[idx[i]]);
            p *= m.probs[idx[i]];
        }
        probs.push(p);
        // odometer increment, last asset fastest
        let mut i = n;
        loop {
            if i == 0 {
                return Ok(DiscreteJointDistribution { n, values, probs });
            }
            i -= 1;
            idx[i] += 1;
            if idx[i] < marginals[i].values.len() {
                break;
            }
            idx[i] = 0;
        }
    }
}

/// Lower-tail quantile of an atomic law: smallest atom value whose
/// cumulative probability reaches `level`. Returns the value and the atom
/// order sorted ascending.
pub(crate) fn atomic_quantile(values: &[f64], probs: &[f64], level: f64) -> (f64, Vec<usize>) {
    let order = crate::empirical::ascending_order(values);
    let mut cum = 0.0;
    for &k in &order {
        cum += probs[k];
        if probs[k] > 0.0 && cum >= level - CUM_TOL {
            return (values[k], order);
        }
    }
    let last = *order.last().expect("non-empty distribution");
    (values[last], order)
}

/// `VaR_alpha(sum_i u_i X_i) = -q_{1-alpha}(sum_i u_i X_i)`; this is `f(u)`
/// for the VaR measure.
pub fn var_exact(dist: &DiscreteJointDistribution, u: &WeightVector, alpha: f64) -> Result<f64> {
    check_level(alpha)?;
    let sums = dist.weighted_sums(u)?;
    Ok(0.0 - atomic_quantile(&sums, &dist.probs, 1.0 - alpha).0)
}

pub fn es_exact(
    dist: &DiscreteJointDistribution,
    u: &WeightVector,
    alpha: f64,
    form: EsForm,
) -> Result<f64> {
    check_level(alpha)?;
    let sums = dist.weighted_sums(u)?;
    let (q, order) = atomic_quantile(&sums, &dist.probs, 1.0 - alpha);
    match form {
        EsForm::TailConditional => {
            let (mut mass, mut acc) = (0.0, 0.0);
            for (s, p) in sums.iter().zip(&dist.probs) {
                if *s <= q + LEVEL_MATCH_TOL {
                    mass += p;
                    acc += p * s;
                }
            }
            if mass <= 0.0 {
                return Err(Error::EmptyTail);
            }
            Ok(-acc / mass)
        }
        EsForm::Integral => {
            // ES = VaR + (1/(1-alpha)) * E[(q - X) on the worst 1-alpha mass];
            // the excess form keeps ES >= VaR exact in floating point
            let tail = 1.0 - alpha;
            let mut remaining = tail;
            let mut excess = 0.0;
            for &k in &order {
                if sums[k] > q || remaining <= 0.0 {
                    break;
                }
                let take = dist.probs[k].min(remaining);
                excess += take * (q - sums[k]);
                remaining -= take;
            }
            Ok(-q + excess / tail)
        }
    }
}

/// Euler allocation for VaR: `-E[X_i | X = -VaR_alpha(X)]` over the atoms
/// whose total matches `-VaR` within [`LEVEL_MATCH_TOL`].
pub fn euler_alloc_var_exact(dist: &DiscreteJointDistribution, alpha: f64) -> Result<Vec<f64>> {
    check_level(alpha)?;
    let sums = dist.weighted_sums(&WeightVector::ones(dist.n))?;
    let (q, _) = atomic_quantile(&sums, &dist.probs, 1.0 - alpha);
    conditional_mean(dist, |k| (sums[k] - q).abs() <= LEVEL_MATCH_TOL)
        .map_err(|_| Error::NoAtomAtVar(-q))
}

/// Euler allocation for tail-conditional ES: `-E[X_i | X <= -VaR_alpha(X)]`.
pub fn euler_alloc_es_exact(dist: &DiscreteJointDistribution, alpha: f64) -> Result<Vec<f64>> {
    check_level(alpha)?;
    let sums = dist.weighted_sums(&WeightVector::ones(dist.n))?;
    let (q, _) = atomic_quantile(&sums, &dist.probs, 1.0 - alpha);
    conditional_mean(dist, |k| sums[k] <= q + LEVEL_MATCH_TOL)
}

/// Euler allocation for integral-form ES: the expectation of `-X_i` under
/// the worst `1 - alpha` probability mass, with atoms tied at the quantile
/// sharing the boundary mass in proportion to their probabilities. This is
/// a supergradient of the integral-form ES and sums to it exactly.
pub fn euler_alloc_es_integral_exact(
    dist: &DiscreteJointDistribution,
    alpha: f64,
) -> Result<Vec<f64>> {
    check_level(alpha)?;
    let sums = dist.weighted_sums(&WeightVector::ones(dist.n))?;
    let (q, _) = atomic_quantile(&sums, &dist.probs, 1.0 - alpha);
    let tail = 1.0 - alpha;
    let below: f64 = (0..dist.n_atoms()).filter(|&k| sums[k] < q).map(|k| dist.probs[k]).sum();
    let at: f64 = (0..dist.n_atoms()).filter(|&k| sums[k] == q).map(|k| dist.probs[k]).sum();
    let share = if at > 0.0 { ((tail - below) / at).clamp(0.0, 1.0) } else { 0.0 };
    let mut alloc = vec![0.0; dist.n];
    for (k, (v, p)) in dist.atoms().enumerate() {
        let w = if sums[k] < q {
            p
        } else if sums[k] == q {
            p * share
        } else {
            continue;
        };
        for (a, x) in alloc.iter_mut().zip(v) {
            *a -= w * x;
        }
    }
    alloc.iter_mut().for_each(|a| *a /= tail);
    Ok(alloc)
}

fn conditional_mean(
    dist: &DiscreteJointDistribution,
    pick: impl Fn(usize) -> bool,
) -> Result<Vec<f64>> {
    let mut mass = 0.0;
    let mut acc = vec![0.0; dist.n];
    for (k, (v, p)) in dist.atoms().enumerate() {
        if pick(k) {
            mass += p;
            for (a, x) in acc.iter_mut().zip(v) {
                *a += p * x;
            }
        }
    }
    if mass <= 0.0 {
        return Err(Error::EmptyTail);
    }
    Ok(acc.into_iter().map(|a| 0.0 - a / mass).collect())
}

/// Default central-difference step `1e-3 * max(1, |f(u)|)`.
pub fn default_fd_step(f_at_u: f64) -> f64 {
    1e-3 * f_at_u.abs().max(1.0)
}

/// Euler allocation as the central-difference gradient of `f` at `u`:
/// `[f(u + h e_i) - f(u - h e_i)] / (2h)`.
pub fn fd_alloc<F>(risk_of_weights: F, u: &WeightVector, h: f64) -> Result<Vec<f64>>
where
    F: Fn(&WeightVector) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidConfig(format!("finite-difference step {h} must be positive")));
    }
    let mut grad = Vec::with_capacity(u.len());
    for i in 0..u.len() {
        let mut up = u.as_slice().to_vec();
        let mut down = up.clone();
        up[i] += h;
        down[i] -= h;
        let fu = risk_of_weights(&WeightVector(up.clone()))?;
        let fd = risk_of_weights(&WeightVector(down.clone()))?;
        if !fu.is_finite() {
            return Err(Error::NonFinite(up));
        }
        if !fd.is_finite() {
            return Err(Error::NonFinite(down));
        }
        grad.push((fu - fd) / (2.0 * h));
    }
    Ok(grad)
}

/// Example 1 marginals: `P(X_1 = -200) = P(X_2 = -100) = 0.0075`, else 0.
pub fn example1_marginals() -> [DiscreteLaw; 2] {
    [
        DiscreteLaw { values: vec![0.0, -200.0], probs: vec![0.9925, 0.0075] },
        DiscreteLaw { values: vec![0.0, -100.0], probs: vec![0.9925, 0.0075] },
    ]
}

/// Example 2 on a grid: `X_1` uniform on `points` atoms of `[-1, 1]`,
/// `X_2 = -X_1` for `X_1 <= 0` and `-2 X_1` otherwise; assets `(3 X_1, X_2)`.
pub fn example2_joint(points: usize) -> Result<DiscreteJointDistribution> {
    let x1 = DiscreteLaw::uniform_grid(-1.0, 1.0, points)?;
    let atoms = x1
        .values
        .iter()
        .zip(&x1.probs)
        .map(|(&x, &p)| (vec![3.0 * x, reflect(x, 1.0, 2.0)], p))
        .collect();
    DiscreteJointDistribution::new(2, atoms)
}

/// `-down * x` for `x <= 0`, `-up * x` for `x > 0`.
#[inline]
pub fn reflect(x: f64, down: f64, up: f64) -> f64 {
    if x <= 0.0 {
        -down * x
    } else {
        -up * x
    }
}
