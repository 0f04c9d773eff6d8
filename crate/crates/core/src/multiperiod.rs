//! Commitment-period evaluation of a new investment.
//!
//! A candidate held for `T` periods sits next to a background portfolio
//! whose composition changes from period to period. Its time-averaged
//! expected allocation (or RORAC) is the per-period average of the
//! composition-weighted single-period values.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::allocation::{Regime, SampledEvaluator};
use crate::discrete::{product_distribution, DiscreteJointDistribution, DiscreteLaw, WeightVector};
use crate::empirical::fmt_full;
use crate::models::{sample_portfolio, AssetModel, PortfolioSpec};
use crate::risk_measures::{AxiomOutcome, Counterexample, RiskMeasureId};
use crate::{Error, Result};

/// Probabilities per period must sum to 1 within this tolerance.
const PROB_TOL: f64 = 1e-9;

/// Background compositions are multisets of asset-type indices.
pub type Composition = Vec<usize>;

/// Row-major square table indexed `[new][other]`.
pub type Matrix = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommitmentScenario {
    /// Asset types; compositions and the candidate index into this list.
    pub types: Vec<AssetModel>,
    pub candidate: usize,
    /// One entry per period: `(composition, probability)` pairs.
    pub background: Vec<Vec<(Composition, f64)>>,
}

impl CommitmentScenario {
    pub fn horizon(&self) -> usize {
        self.background.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.background.is_empty() {
            return Err(Error::InvalidConfig("commitment horizon must be at least 1".into()));
        }
        if self.candidate >= self.types.len() {
            return Err(Error::InvalidConfig(format!("candidate type {} does not exist", self.candidate)));
        }
        for (t, period) in self.background.iter().enumerate() {
            let total: f64 = period.iter().map(|(_, p)| p).sum();
            if period.iter().any(|(_, p)| !(*p >= 0.0)) || (total - 1.0).abs() > PROB_TOL {
                return Err(Error::InvalidConfig(format!("period {t} probabilities must be >= 0 and sum to 1")));
            }
            if let Some(k) = period.iter().flat_map(|(c, _)| c).find(|&&k| k >= self.types.len()) {
                return Err(Error::InvalidConfig(format!("period {t} references missing type {k}")));
            }
        }
        Ok(())
    }

    /// Two periods: the first with the given other investment, the second
    /// with each type equally likely.
    pub fn renewal(types: Vec<AssetModel>, candidate: usize, first_other: usize) -> Self {
        let k = types.len();
        let second = (0..k).map(|o| (vec![o], 1.0 / k as f64)).collect();
        Self { types, candidate, background: vec![vec![(vec![first_other], 1.0)], second] }
    }
}

/// Allocation and RORAC of the candidate next to one composition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellValue {
    pub allocation: f64,
    pub allocation_stderr: f64,
    pub rorac: f64,
    pub rorac_stderr: f64,
}

impl CellValue {
    fn new(expected_return: f64, allocation: f64, allocation_stderr: f64) -> Result<Self> {
        if allocation == 0.0 {
            return Err(Error::ZeroRisk);
        }
        let rorac = expected_return / allocation;
        // first-order error propagation of r / a
        let rorac_stderr = (rorac / allocation).abs() * allocation_stderr;
        Ok(Self { allocation, allocation_stderr, rorac, rorac_stderr })
    }
}

/// How a single-period cell is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CellEngine {
    /// Exact oracle; every type must be discrete or constant.
    Exact { measure: RiskMeasureId },
    /// Simulation with `m` realizations per cell. All cells share their
    /// streams: slot `2k` holds the candidate of type `k`, slot `2k + 1`
    /// the background asset of type `k`.
    Sampled { m: usize, regime: Regime },
}

/// Evaluates cells with common random numbers and memoizes them by
/// composition.
pub struct CellEvaluator<'a> {
    types: &'a [AssetModel],
    engine: CellEngine,
    seed: u64,
    draws: Option<crate::empirical::RealizationBatch>,
    cache: BTreeMap<(usize, Composition), CellValue>,
}

impl<'a> CellEvaluator<'a> {
    pub fn new(types: &'a [AssetModel], engine: CellEngine, seed: u64) -> Result<Self> {
        if types.is_empty() {
            return Err(Error::InvalidConfig("no asset types".into()));
        }
        let draws = match engine {
            CellEngine::Exact { measure } => {
                measure.validate()?;
                None
            }
            CellEngine::Sampled { m, .. } => {
                let assets = types.iter().flat_map(|t| [t.clone(), t.clone()]).collect();
                Some(sample_portfolio(&PortfolioSpec::unweighted(assets)?, m, seed)?)
            }
        };
        Ok(Self { types, engine, seed, draws, cache: BTreeMap::new() })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The candidate of type `candidate` next to one asset of each type in
    /// `composition` (types may repeat only for the exact engine).
    pub fn cell(&mut self, candidate: usize, composition: &[usize]) -> Result<CellValue> {
        let mut key = composition.to_vec();
        key.sort_unstable();
        if let Some(v) = self.cache.get(&(candidate, key.clone())) {
            return Ok(*v);
        }
        let ret = self.types[candidate]
            .mean()
            .ok_or_else(|| Error::InvalidModel("candidate type needs a known mean".into()))?;
        let value = match self.engine {
            CellEngine::Exact { measure } => {
                let mut laws = vec![discrete_law(&self.types[candidate])?];
                for &k in &key {
                    laws.push(discrete_law(&self.types[k])?);
                }
                let dist = product_distribution(&laws)?;
                let alloc = measure.allocate_exact(&dist)?;
                CellValue::new(ret, alloc[0], 0.0)?
            }
            CellEngine::Sampled { regime, .. } => {
                if key.windows(2).any(|w| w[0] == w[1]) {
                    return Err(Error::InvalidConfig(
                        "sampled cells hold at most one background asset per type".into(),
                    ));
                }
                let draws = self.draws.as_ref().expect("sampled engine has draws");
                let mut u = vec![0.0; draws.n_assets()];
                u[2 * candidate] = 1.0;
                for &k in &key {
                    u[2 * k + 1] = 1.0;
                }
                let ev = SampledEvaluator { draws: draws.clone(), returns: vec![], regime };
                let (_, est) = ev.evaluate(&WeightVector::new(u)?)?;
                CellValue::new(ret, est.allocations[2 * candidate], est.stderr[2 * candidate])?
            }
        };
        self.cache.insert((candidate, key), value);
        Ok(value)
    }
}

fn discrete_law(model: &AssetModel) -> Result<DiscreteLaw> {
    match model {
        AssetModel::Discrete { values, probs } => DiscreteLaw::new(values.clone(), probs.clone()),
        AssetModel::Constant { value } => Ok(DiscreteLaw::point(*value)),
        other => Err(Error::InvalidModel(format!("exact cells need discrete types, got {other:?}"))),
    }
}

/// `table[new][other]`: the candidate of type `new` next to one asset of
/// type `other`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoracTable {
    pub cells: Vec<Vec<CellValue>>,
}

impl RoracTable {
    pub fn roracs(&self) -> Vec<Vec<f64>> {
        self.cells.iter().map(|r| r.iter().map(|c| c.rorac).collect()).collect()
    }

    /// CSV with columns `new,other,allocation,allocation_stderr,rorac,rorac_stderr`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["new", "other", "allocation", "allocation_stderr", "rorac", "rorac_stderr"])?;
        for (i, row) in self.cells.iter().enumerate() {
            for (k, c) in row.iter().enumerate() {
                w.write_record([
                    (i + 1).to_string(),
                    (k + 1).to_string(),
                    fmt_full(c.allocation),
                    fmt_full(c.allocation_stderr),
                    fmt_full(c.rorac),
                    fmt_full(c.rorac_stderr),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Aligned text: one row per new type, one column per other type.
    pub fn to_text(&self, digits: usize) -> String {
        aligned(&self.roracs(), digits)
    }
}

fn aligned(values: &[Vec<f64>], digits: usize) -> String {
    let mut s = String::from("new\\other");
    for k in 0..values.first().map_or(0, Vec::len) {
        s.push_str(&format!("  {:>w$}", format!("X{}", k + 1), w = digits + 3));
    }
    s.push('\n');
    for (i, row) in values.iter().enumerate() {
        s.push_str(&format!("{:<9}", format!("X{}", i + 1)));
        for v in row {
            s.push_str(&format!("  {:>w$.digits$}", v, w = digits + 3));
        }
        s.push('\n');
    }
    s
}

/// Every ordered pair of types as (candidate, single background asset).
pub fn single_period_rorac_table(evaluator: &mut CellEvaluator) -> Result<RoracTable> {
    let k = evaluator.types.len();
    if k < 2 {
        return Err(Error::InvalidConfig("a RORAC table needs at least 2 asset types".into()));
    }
    let cells = (0..k)
        .map(|new| (0..k).map(|other| evaluator.cell(new, &[other])).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(RoracTable { cells })
}

/// Per-period average of a cell quantity, with its standard error assuming
/// independent cells.
fn commitment_average(
    scn: &CommitmentScenario,
    evaluator: &mut CellEvaluator,
    pick: impl Fn(&CellValue) -> (f64, f64),
) -> Result<(f64, f64)> {
    scn.validate()?;
    let t = scn.horizon() as f64;
    let mut mean = 0.0;
    let mut var = 0.0;
    for period in &scn.background {
        let mut period_mean = 0.0;
        for (comp, p) in period {
            let (v, se) = pick(&evaluator.cell(scn.candidate, comp)?);
            period_mean += p * v;
            var += (p * se / t).powi(2);
        }
        mean += period_mean;
    }
    Ok((mean / t, var.sqrt()))
}

/// `(1/T) sum_t sum_c P_t(c) alloc(candidate | c)` and its standard error.
pub fn expected_commitment_alloc(scn: &CommitmentScenario, evaluator: &mut CellEvaluator) -> Result<(f64, f64)> {
    commitment_average(scn, evaluator, |c| (c.allocation, c.allocation_stderr))
}

/// `(1/T) sum_t sum_c P_t(c) RORAC(candidate | c)` and its standard error.
pub fn expected_commitment_rorac(scn: &CommitmentScenario, evaluator: &mut CellEvaluator) -> Result<(f64, f64)> {
    commitment_average(scn, evaluator, |c| (c.rorac, c.rorac_stderr))
}

/// Averaged RORACs of [`CommitmentScenario::renewal`] for every candidate and
/// first-period type: `(table[new][first] + mean_k table[new][k]) / 2`.
pub fn renewal_table(evaluator: &mut CellEvaluator) -> Result<(Matrix, Matrix)> {
    let k = evaluator.types.len();
    let types = evaluator.types.to_vec();
    let mut values = vec![vec![0.0; k]; k];
    let mut errors = vec![vec![0.0; k]; k];
    for new in 0..k {
        for first in 0..k {
            let scn = CommitmentScenario::renewal(types.clone(), new, first);
            (values[new][first], errors[new][first]) = expected_commitment_rorac(&scn, evaluator)?;
        }
    }
    Ok((values, errors))
}

/// Aligned text of a renewal table.
pub fn renewal_text(values: &[Vec<f64>], digits: usize) -> String {
    aligned(values, digits)
}

/// Checks `alloc(candidate, X + candidate) >= rho(X + candidate) - rho(X)`
/// exactly, where `X` is the sum of the other columns.
pub fn marginal_increase_check(
    dist: &DiscreteJointDistribution,
    candidate: usize,
    measure: RiskMeasureId,
) -> Result<AxiomOutcome> {
    let n = dist.n_assets();
    if candidate >= n {
        return Err(Error::InvalidConfig(format!("candidate column {candidate} out of range")));
    }
    let others: Vec<usize> = (0..n).filter(|&i| i != candidate).collect();
    let lhs = measure.allocate_exact(dist)?[candidate];
    let with = measure.exact_total(dist)?;
    let without = if others.is_empty() { 0.0 } else { measure.exact_total(&dist.select(&others)?)? };
    let rhs = with - without;
    if lhs + 1e-9 * lhs.abs().max(rhs.abs()).max(1.0) >= rhs {
        Ok(AxiomOutcome::Pass)
    } else {
        Ok(AxiomOutcome::Counterexample(Counterexample {
            description: format!(
                "{}: allocation {lhs} of column {candidate} is below the marginal increase {rhs}",
                measure.label()
            ),
            lhs,
            rhs,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocation::BandForm;
    use crate::models::example3_assets;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn coin(lo: f64, hi: f64) -> AssetModel {
        AssetModel::Discrete { values: vec![lo, hi], probs: vec![0.5, 0.5] }
    }

    #[test]
    fn averaging_rounded_cells() {
        let avg = (0.044 + (0.044 + 0.071) / 2.0) / 2.0;
        assert_abs_diff_eq!(avg, 0.05075, epsilon = 1e-15);
    }

    #[test]
    fn single_period_degenerate_scenario_is_the_cell() {
        let types = vec![coin(-4.0, 1.0), coin(-1.0, 1.0)];
        let engine = CellEngine::Exact { measure: RiskMeasureId::EsIntegral { alpha: 0.6 } };
        let mut ev = CellEvaluator::new(&types, engine, 0).unwrap();
        let scn = CommitmentScenario { types: types.clone(), candidate: 0, background: vec![vec![(vec![1], 1.0)]] };
        let cell = ev.cell(0, &[1]).unwrap();
        assert_eq!(expected_commitment_alloc(&scn, &mut ev).unwrap(), (cell.allocation, 0.0));
        assert_eq!(expected_commitment_rorac(&scn, &mut ev).unwrap(), (cell.rorac, 0.0));
    }

    #[test]
    fn constant_background_gives_standalone_rorac() {
        let types = vec![coin(-4.0, 2.0), AssetModel::Constant { value: 0.3 }];
        let measure = RiskMeasureId::VaR { alpha: 0.9 };
        let mut ev = CellEvaluator::new(&types, CellEngine::Exact { measure }, 0).unwrap();
        let table = single_period_rorac_table(&mut ev).unwrap();
        let standalone = measure.exact_total(&product_distribution(&[discrete_law(&types[0]).unwrap()]).unwrap()).unwrap();
        assert_eq!(table.cells[0][1].allocation, standalone);
        assert_eq!(table.cells[0][1].rorac, -1.0 / standalone);
    }

    #[test]
    fn identical_types_give_equal_cells() {
        let types = vec![coin(-3.0, 1.0), coin(-3.0, 1.0)];
        let engine = CellEngine::Exact { measure: RiskMeasureId::EsTail { alpha: 0.7 } };
        let mut ev = CellEvaluator::new(&types, engine, 0).unwrap();
        let t = single_period_rorac_table(&mut ev).unwrap().roracs();
        assert!(t.iter().flatten().all(|v| *v == t[0][0]));
    }

    #[test]
    fn renewal_table_is_the_averaging_formula() {
        let [x1, x2] = example3_assets().unwrap();
        let types = vec![AssetModel::from(x1), x2.into()];
        let engine = CellEngine::Sampled {
            m: 20_000,
            regime: Regime::Var { alpha: 0.99, b: 30, form: BandForm::Rescaled },
        };
        let mut ev = CellEvaluator::new(&types, engine, 5).unwrap();
        let t1 = single_period_rorac_table(&mut ev).unwrap().roracs();
        let (t2, _) = renewal_table(&mut ev).unwrap();
        for new in 0..2 {
            for first in 0..2 {
                let formula = (t1[new][first] + (t1[new][0] + t1[new][1]) / 2.0) / 2.0;
                assert_eq!(t2[new][first], formula);
            }
        }
        assert!(t1.iter().flatten().all(|v| *v > 0.0));
    }

    #[test]
    fn sampled_cells_reject_repeated_background_types() {
        let types = vec![coin(-1.0, 1.0)];
        let engine = CellEngine::Sampled { m: 100, regime: Regime::Es { alpha: 0.9 } };
        let mut ev = CellEvaluator::new(&types, engine, 0).unwrap();
        assert!(ev.cell(0, &[0, 0]).is_err());
    }

    #[test]
    fn scenario_validation() {
        let types = vec![coin(-1.0, 1.0)];
        let mut scn = CommitmentScenario::renewal(types, 0, 0);
        assert!(scn.validate().is_ok());
        scn.background[1][0].1 = 0.7;
        assert!(scn.validate().is_err());
        scn.background.clear();
        assert!(scn.validate().is_err());
    }

    #[test]
    fn zero_candidate_and_duplicate() {
        let es = RiskMeasureId::EsIntegral { alpha: 0.75 };
        let base = vec![(vec![-3.0], 0.2), (vec![1.0], 0.5), (vec![2.0], 0.3)];
        let with_zero = DiscreteJointDistribution::new(1, base.clone()).unwrap().with_column(|_| 0.0);
        assert!(marginal_increase_check(&with_zero, 1, es).unwrap().passed());
        assert_eq!(es.allocate_exact(&with_zero).unwrap()[1], 0.0);
        let dup = DiscreteJointDistribution::new(1, base).unwrap().with_column(|r| r[0]);
        let alloc = es.allocate_exact(&dup).unwrap()[1];
        let single = es.exact_total(&dup.select(&[0]).unwrap()).unwrap();
        assert_abs_diff_eq!(alloc, single, epsilon = 1e-12);
        assert!(marginal_increase_check(&dup, 1, es).unwrap().passed());
    }

    fn instance() -> impl Strategy<Value = DiscreteJointDistribution> {
        prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64, 0.05..1.0f64), 4).prop_map(|atoms| {
            let total: f64 = atoms.iter().map(|a| a.2).sum();
            DiscreteJointDistribution::new(2, atoms.into_iter().map(|(x, y, p)| (vec![x, y], p / total)).collect())
                .unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]
        #[test]
        fn es_integral_allocation_bounds_marginal_increase(dist in instance(), alpha in 0.5..0.99f64) {
            let outcome = marginal_increase_check(&dist, 1, RiskMeasureId::EsIntegral { alpha }).unwrap();
            prop_assert!(outcome.passed(), "{outcome:?}");
        }
    }
}
