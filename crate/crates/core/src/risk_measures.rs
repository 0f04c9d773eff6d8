//! VaR and ES on batches and discrete laws, and executable axiom checks.

use serde::{Deserialize, Serialize};

use crate::discrete::{
    self, es_exact, fd_alloc, var_exact, DiscreteJointDistribution, EsForm, WeightVector,
};
use crate::empirical::{ascending_order, batch_quantile, scaled_weights, RealizationBatch};
use crate::{check_level, Error, Result};

/// A risk measure and its parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RiskMeasureId {
    #[serde(rename = "var")]
    VaR { alpha: f64 },
    EsTail { alpha: f64 },
    EsIntegral { alpha: f64 },
    StdDevMultiple { multiplier: f64 },
}

impl RiskMeasureId {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::VaR { alpha } | Self::EsTail { alpha } | Self::EsIntegral { alpha } => {
                check_level(alpha)
            }
            Self::StdDevMultiple { multiplier } if multiplier > 0.0 && multiplier.is_finite() => {
                Ok(())
            }
            Self::StdDevMultiple { multiplier } => {
                Err(Error::InvalidConfig(format!("std-dev multiplier {multiplier} must be positive")))
            }
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match *self {
            Self::VaR { alpha } | Self::EsTail { alpha } | Self::EsIntegral { alpha } => Some(alpha),
            Self::StdDevMultiple { .. } => None,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Self::VaR { alpha } => format!("VaR({alpha})"),
            Self::EsTail { alpha } => format!("ES-tail({alpha})"),
            Self::EsIntegral { alpha } => format!("ES-integral({alpha})"),
            Self::StdDevMultiple { multiplier } => format!("{multiplier}*StdDev"),
        }
    }

    /// `f(u) = rho(sum_i u_i X_i)` on a discrete law.
    pub fn exact(&self, dist: &DiscreteJointDistribution, u: &WeightVector) -> Result<f64> {
        self.validate()?;
        match *self {
            Self::VaR { alpha } => var_exact(dist, u, alpha),
            Self::EsTail { alpha } => es_exact(dist, u, alpha, EsForm::TailConditional),
            Self::EsIntegral { alpha } => es_exact(dist, u, alpha, EsForm::Integral),
            Self::StdDevMultiple { multiplier } => {
                let sums = dist.weighted_sums(u)?;
                Ok(multiplier * law_std_dev(&sums, dist.probs()))
            }
        }
    }

    /// Risk of the total `sum_i X_i`.
    pub fn exact_total(&self, dist: &DiscreteJointDistribution) -> Result<f64> {
        self.exact(dist, &WeightVector::ones(dist.n_assets()))
    }

    /// Euler allocation at `u = (1, ..., 1)` on a discrete law.
    pub fn allocate_exact(&self, dist: &DiscreteJointDistribution) -> Result<Vec<f64>> {
        self.validate()?;
        match *self {
            Self::VaR { alpha } => discrete::euler_alloc_var_exact(dist, alpha),
            Self::EsTail { alpha } => discrete::euler_alloc_es_exact(dist, alpha),
            Self::EsIntegral { alpha } => discrete::euler_alloc_es_integral_exact(dist, alpha),
            Self::StdDevMultiple { .. } => {
                let u = WeightVector::ones(dist.n_assets());
                let h = discrete::default_fd_step(self.exact(dist, &u)?);
                fd_alloc(|w| self.exact(dist, w), &u, h)
            }
        }
    }

    /// Risk of the batch totals (weighted when the batch carries weights).
    pub fn empirical(&self, batch: &RealizationBatch) -> Result<f64> {
        self.validate()?;
        match *self {
            Self::VaR { alpha } => var_empirical(batch, alpha),
            Self::EsTail { alpha } => es_empirical(batch, alpha, EsForm::TailConditional),
            Self::EsIntegral { alpha } => es_empirical(batch, alpha, EsForm::Integral),
            Self::StdDevMultiple { multiplier } => {
                let w: Vec<f64> = (0..batch.len()).map(|j| batch.weight(j)).collect();
                let total: f64 = w.iter().sum();
                let p: Vec<f64> = w.iter().map(|x| x / total).collect();
                Ok(multiplier * law_std_dev(batch.totals(), &p))
            }
        }
    }
}

fn law_std_dev(values: &[f64], probs: &[f64]) -> f64 {
    let mean: f64 = values.iter().zip(probs).map(|(v, p)| v * p).sum();
    let var: f64 = values.iter().zip(probs).map(|(v, p)| p * (v - mean) * (v - mean)).sum();
    var.max(0.0).sqrt()
}

/// `VaR_alpha = -q_{1-alpha}` of the batch totals.
pub fn var_empirical(batch: &RealizationBatch, alpha: f64) -> Result<f64> {
    check_level(alpha)?;
    Ok(-batch_quantile(batch, 1.0 - alpha)?)
}

/// ES of the batch totals.
///
/// Tail form: minus the (weighted) mean of totals `<= -VaR`. Integral form:
/// minus the mean over the worst `1 - alpha` probability mass, the boundary
/// realization carrying the fractional remainder.
pub fn es_empirical(batch: &RealizationBatch, alpha: f64, form: EsForm) -> Result<f64> {
    check_level(alpha)?;
    let q = batch_quantile(batch, 1.0 - alpha)?;
    let totals = batch.totals();
    match form {
        EsForm::TailConditional => {
            let (mut mass, mut acc) = (0.0, 0.0);
            for (j, &t) in totals.iter().enumerate() {
                if t <= q {
                    let w = batch.weight(j);
                    mass += w;
                    acc += w * t;
                }
            }
            if mass <= 0.0 {
                return Err(Error::EmptyTail);
            }
            Ok(-acc / mass)
        }
        EsForm::Integral => {
            let w = match batch.weights() {
                Some(w) => scaled_weights(w)?,
                None => vec![1.0; batch.len()],
            };
            let total: f64 = w.iter().sum();
            let tail = (1.0 - alpha) * total;
            let mut remaining = tail;
            let mut excess = 0.0;
            for j in ascending_order(totals) {
                if totals[j] > q || remaining <= 0.0 {
                    break;
                }
                let take = w[j].min(remaining);
                excess += take * (q - totals[j]);
                remaining -= take;
            }
            Ok(-q + excess / tail)
        }
    }
}

/// Risk-measure axioms that can be checked on discrete evidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axiom {
    /// `X <= Y` atomwise implies `rho(X) >= rho(Y)`.
    Monotonous,
    /// `rho(X + Y) <= rho(X) + rho(Y)`.
    Subadditive,
    /// `rho(hX) = h rho(X)` for `h > 0`.
    PositiveHomogeneous,
    /// `rho(X + h) = rho(X) - h`.
    TranslationInvariant,
    /// Equal laws give equal risk.
    LawInvariant,
    /// `P(X_1 <= z) >= P(X_2 <= z)` for all `z` implies
    /// `rho(X_1, X) >= rho(X_2, X)` for the Euler allocation.
    AllocationMonotonous,
}

/// Evidence for an axiom check.
#[derive(Debug, Clone)]
pub enum Evidence {
    /// Joint law of two variables `(X, Y)` (columns 0 and 1; extra columns ignored
    /// except for allocation checks, which use the whole portfolio).
    Pair(DiscreteJointDistribution),
    /// Single-variable law (column sum) and a scale factor.
    Scaled { dist: DiscreteJointDistribution, h: f64 },
    /// Single-variable law (column sum) and a cash shift.
    Translated { dist: DiscreteJointDistribution, h: f64 },
    Family(Vec<Evidence>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Counterexample {
    pub description: String,
    /// The side that should not exceed `rhs`, or should equal it.
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AxiomOutcome {
    Pass,
    Counterexample(Counterexample),
}

impl AxiomOutcome {
    pub fn passed(&self) -> bool {
        matches!(self, Self::Pass)
    }
}

/// Relative slack for equalities and inequalities evaluated in floating point.
const AXIOM_TOL: f64 = 1e-9;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= AXIOM_TOL * a.abs().max(b.abs()).max(1.0)
}

fn leq(a: f64, b: f64) -> bool {
    a <= b + AXIOM_TOL * a.abs().max(b.abs()).max(1.0)
}

/// `P(A <= z) >= P(B <= z)` at every atom value `z`.
pub fn dominated_in_distribution(a: &discrete::DiscreteLaw, b: &discrete::DiscreteLaw) -> bool {
    a.values.iter().chain(&b.values).all(|&z| a.cdf(z) + AXIOM_TOL >= b.cdf(z))
}

fn same_law(a: &discrete::DiscreteLaw, b: &discrete::DiscreteLaw) -> bool {
    a.values.iter().chain(&b.values).all(|&z| (a.cdf(z) - b.cdf(z)).abs() <= AXIOM_TOL)
}

/// Evaluates `axiom` for `measure` on the evidence; the first violating
/// instance is returned.
pub fn check_axiom(measure: RiskMeasureId, axiom: Axiom, evidence: &Evidence) -> Result<AxiomOutcome> {
    measure.validate()?;
    match evidence {
        Evidence::Family(items) => {
            for (k, e) in items.iter().enumerate() {
                if let AxiomOutcome::Counterexample(mut c) = check_axiom(measure, axiom, e)? {
                    c.description = format!("instance {k}: {}", c.description);
                    return Ok(AxiomOutcome::Counterexample(c));
                }
            }
            Ok(AxiomOutcome::Pass)
        }
        Evidence::Scaled { dist, h } => {
            if axiom != Axiom::PositiveHomogeneous || *h <= 0.0 {
                return Ok(AxiomOutcome::Pass);
            }
            let x = dist.total();
            let base = measure.exact_total(&x)?;
            let scaled = measure.exact(&x, &vec![*h].into())?;
            Ok(if close(scaled, h * base) {
                AxiomOutcome::Pass
            } else {
                AxiomOutcome::Counterexample(Counterexample {
                    description: format!("rho({h} X) != {h} rho(X)"),
                    lhs: scaled,
                    rhs: h * base,
                })
            })
        }
        Evidence::Translated { dist, h } => {
            if axiom != Axiom::TranslationInvariant {
                return Ok(AxiomOutcome::Pass);
            }
            let x = dist.total();
            let base = measure.exact_total(&x)?;
            let shifted = measure.exact_total(&x.with_column(|_| *h).total())?;
            Ok(if close(shifted, base - h) {
                AxiomOutcome::Pass
            } else {
                AxiomOutcome::Counterexample(Counterexample {
                    description: format!("rho(X + {h}) != rho(X) - {h}"),
                    lhs: shifted,
                    rhs: base - h,
                })
            })
        }
        Evidence::Pair(dist) => check_pair(measure, axiom, dist),
    }
}

fn check_pair(
    measure: RiskMeasureId,
    axiom: Axiom,
    dist: &DiscreteJointDistribution,
) -> Result<AxiomOutcome> {
    if dist.n_assets() < 2 {
        return Err(Error::InvalidDistribution("pair evidence needs two columns".into()));
    }
    let x = dist.select(&[0])?;
    let y = dist.select(&[1])?;
    let one = WeightVector::ones(1);
    let outcome = match axiom {
        Axiom::Subadditive => {
            let joint = measure.exact(&dist.select(&[0, 1])?, &WeightVector::ones(2))?;
            let (rx, ry) = (measure.exact(&x, &one)?, measure.exact(&y, &one)?);
            if leq(joint, rx + ry) {
                None
            } else {
                Some(Counterexample {
                    description: format!("rho(X+Y) = {joint} > rho(X) + rho(Y) = {rx} + {ry}"),
                    lhs: joint,
                    rhs: rx + ry,
                })
            }
        }
        Axiom::Monotonous => {
            let below = dist.atoms().all(|(v, _)| v[0] <= v[1]);
            let (rx, ry) = (measure.exact(&x, &one)?, measure.exact(&y, &one)?);
            if !below || leq(ry, rx) {
                None
            } else {
                Some(Counterexample {
                    description: format!("X <= Y atomwise but rho(X) = {rx} < rho(Y) = {ry}"),
                    lhs: ry,
                    rhs: rx,
                })
            }
        }
        Axiom::LawInvariant => {
            let (rx, ry) = (measure.exact(&x, &one)?, measure.exact(&y, &one)?);
            if !same_law(&dist.marginal(0), &dist.marginal(1)) || close(rx, ry) {
                None
            } else {
                Some(Counterexample {
                    description: format!("equal laws but rho(X) = {rx}, rho(Y) = {ry}"),
                    lhs: rx,
                    rhs: ry,
                })
            }
        }
        Axiom::AllocationMonotonous => {
            let alloc = measure.allocate_exact(dist)?;
            let smaller = dominated_in_distribution(&dist.marginal(0), &dist.marginal(1));
            if !smaller || leq(alloc[1], alloc[0]) {
                None
            } else {
                Some(Counterexample {
                    description: format!(
                        "X_1 is stochastically smaller but its allocation {} < {}",
                        alloc[0], alloc[1]
                    ),
                    lhs: alloc[1],
                    rhs: alloc[0],
                })
            }
        }
        Axiom::PositiveHomogeneous | Axiom::TranslationInvariant => None,
    };
    Ok(outcome.map_or(AxiomOutcome::Pass, AxiomOutcome::Counterexample))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete::{example1_marginals, product_distribution, DiscreteLaw};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn constant_batch() {
        let b = RealizationBatch::from_totals(vec![-2.5; 40]).unwrap();
        for alpha in [0.01, 0.5, 0.99] {
            assert_eq!(var_empirical(&b, alpha).unwrap(), 2.5);
        }
    }

    #[test]
    fn es_tail_single_point() {
        let b = RealizationBatch::from_totals(vec![-4.0, -2.0, 0.0, 2.0]).unwrap();
        assert_eq!(es_empirical(&b, 0.75, EsForm::TailConditional).unwrap(), 4.0);
        assert_eq!(var_empirical(&b, 0.75).unwrap(), 4.0);
    }

    #[test]
    fn es_integral_uniform_grid() {
        let totals: Vec<f64> = (0..1000).map(|k| -1.0 + k as f64 / 999.0).collect();
        let b = RealizationBatch::from_totals(totals).unwrap();
        let es = es_empirical(&b, 0.9, EsForm::Integral).unwrap();
        assert_abs_diff_eq!(es, 0.95, epsilon = 2e-3);
    }

    #[test]
    fn es_integral_fractional_boundary() {
        // m = 10, alpha = 0.85: worst 1.5 realizations, -10 fully and -8 at half weight
        let b = RealizationBatch::from_totals(vec![-10.0, -8.0, 0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0])
            .unwrap();
        let es = es_empirical(&b, 0.85, EsForm::Integral).unwrap();
        assert_abs_diff_eq!(es, (10.0 + 0.5 * 8.0) / 1.5, epsilon = 1e-12);
    }

    #[test]
    fn weighted_es_tail() {
        let b = RealizationBatch::from_totals(vec![-4.0, -2.0, 0.0])
            .unwrap()
            .with_weights(vec![1.0, 1.0, 2.0])
            .unwrap();
        // q_{0.5}: cumulative 0.25, 0.5 -> -2; tail mean of {-4, -2}
        assert_eq!(var_empirical(&b, 0.5).unwrap(), 2.0);
        assert_eq!(es_empirical(&b, 0.5, EsForm::TailConditional).unwrap(), 3.0);
    }

    #[test]
    fn example1_subadditivity_counterexample() {
        let d = product_distribution(&example1_marginals()).unwrap();
        let out = check_axiom(RiskMeasureId::VaR { alpha: 0.99 }, Axiom::Subadditive, &Evidence::Pair(d))
            .unwrap();
        match out {
            AxiomOutcome::Counterexample(c) => {
                assert_eq!(c.lhs, 100.0);
                assert_eq!(c.rhs, 0.0);
            }
            AxiomOutcome::Pass => panic!("VaR passed subadditivity on Example 1"),
        }
    }

    #[test]
    fn example1_allocation_monotonicity_counterexample() {
        let d = product_distribution(&example1_marginals()).unwrap();
        let out = check_axiom(
            RiskMeasureId::VaR { alpha: 0.99 },
            Axiom::AllocationMonotonous,
            &Evidence::Pair(d),
        )
        .unwrap();
        assert_eq!(
            out,
            AxiomOutcome::Counterexample(Counterexample {
                description: "X_1 is stochastically smaller but its allocation 0 < 100".into(),
                lhs: 100.0,
                rhs: 0.0,
            })
        );
    }

    #[test]
    fn var_homogeneity_and_translation() {
        let law = DiscreteLaw::new(vec![-3.0, -1.0, 0.5, 2.0], vec![0.05, 0.15, 0.3, 0.5]).unwrap();
        let d = DiscreteJointDistribution::from_law(&law);
        let m = RiskMeasureId::VaR { alpha: 0.9 };
        let scaled = check_axiom(m, Axiom::PositiveHomogeneous, &Evidence::Scaled { dist: d.clone(), h: 2.0 });
        assert!(scaled.unwrap().passed());
        let shifted = check_axiom(m, Axiom::TranslationInvariant, &Evidence::Translated { dist: d.clone(), h: 1.5 });
        assert!(shifted.unwrap().passed());
        let sd = RiskMeasureId::StdDevMultiple { multiplier: 2.0 };
        let shifted = check_axiom(sd, Axiom::TranslationInvariant, &Evidence::Translated { dist: d, h: 1.5 });
        assert!(!shifted.unwrap().passed());
    }

    #[test]
    fn law_invariance_of_swapped_copy() {
        let coin = DiscreteLaw::new(vec![-1.0, 1.0], vec![0.3, 0.7]).unwrap();
        let d = product_distribution(&[coin.clone(), coin]).unwrap();
        for m in [RiskMeasureId::VaR { alpha: 0.8 }, RiskMeasureId::EsIntegral { alpha: 0.8 }] {
            assert!(check_axiom(m, Axiom::LawInvariant, &Evidence::Pair(d.clone())).unwrap().passed());
        }
    }

    #[test]
    fn monotonicity_statewise() {
        let d = DiscreteJointDistribution::new(
            2,
            vec![(vec![-5.0, -1.0], 0.02), (vec![-2.0, 0.0], 0.08), (vec![1.0, 1.0], 0.9)],
        )
        .unwrap();
        for m in [
            RiskMeasureId::VaR { alpha: 0.95 },
            RiskMeasureId::EsTail { alpha: 0.95 },
            RiskMeasureId::EsIntegral { alpha: 0.95 },
        ] {
            assert!(check_axiom(m, Axiom::Monotonous, &Evidence::Pair(d.clone())).unwrap().passed());
        }
    }

    fn small_pair(vals: Vec<(f64, f64)>, raw: Vec<f64>) -> DiscreteJointDistribution {
        let total: f64 = raw.iter().sum();
        let atoms = vals.into_iter().zip(raw).map(|((a, b), p)| (vec![a, b], p / total)).collect();
        DiscreteJointDistribution::new(2, atoms).unwrap()
    }

    fn pair_strategy() -> impl Strategy<Value = DiscreteJointDistribution> {
        (
            prop::collection::vec((-20i32..20, -20i32..20), 5),
            prop::collection::vec(1u32..100, 5),
        )
            .prop_map(|(v, p)| {
                small_pair(
                    v.into_iter().map(|(a, b)| (a as f64 / 2.0, b as f64 / 2.0)).collect(),
                    p.into_iter().map(f64::from).collect(),
                )
            })
    }

    proptest! {
        #[test]
        fn es_integral_subadditive(d in pair_strategy(), alpha in 0.5f64..0.99) {
            let out = check_axiom(RiskMeasureId::EsIntegral { alpha }, Axiom::Subadditive, &Evidence::Pair(d)).unwrap();
            prop_assert!(out.passed(), "{out:?}");
        }

        #[test]
        fn es_integral_dominates_var_on_laws(d in pair_strategy(), alpha in 0.5f64..0.99) {
            let u = WeightVector::ones(2);
            let es = es_exact(&d, &u, alpha, EsForm::Integral).unwrap();
            let var = var_exact(&d, &u, alpha).unwrap();
            prop_assert!(es >= var, "{es} < {var}");
        }

        #[test]
        fn batch_translation_and_scale(
            totals in prop::collection::vec(-1e3f64..1e3, 1..300),
            alpha in 0.01f64..0.99,
            shift in -100.0f64..100.0,
            scale in prop::sample::select(vec![0.25, 0.5, 2.0, 4.0, 8.0]),
        ) {
            let b = RealizationBatch::from_totals(totals.clone()).unwrap();
            let v = var_empirical(&b, alpha).unwrap();
            let shifted = RealizationBatch::from_totals(totals.iter().map(|t| t + shift).collect()).unwrap();
            let vs = var_empirical(&shifted, alpha).unwrap();
            // exact: the order statistic moves by the same float addition
            prop_assert_eq!(vs, -(-v + shift));
            let scaled = RealizationBatch::from_totals(totals.iter().map(|t| t * scale).collect()).unwrap();
            prop_assert_eq!(var_empirical(&scaled, alpha).unwrap(), scale * v);
        }

        #[test]
        fn batch_es_dominates_var(
            totals in prop::collection::vec(-1e3f64..1e3, 1..300),
            alpha in 0.01f64..0.99,
        ) {
            let b = RealizationBatch::from_totals(totals).unwrap();
            let es = es_empirical(&b, alpha, EsForm::Integral).unwrap();
            let var = var_empirical(&b, alpha).unwrap();
            prop_assert!(es >= var, "{es} < {var}");
        }

        #[test]
        fn var_respects_first_order_dominance(
            base in prop::collection::vec(-50i32..50, 2..8),
            bump in prop::collection::vec(0i32..10, 8),
            alpha in 0.05f64..0.95,
        ) {
            // Y = X + nonnegative bump has P(X <= z) >= P(Y <= z)
            let k = base.len();
            let p = vec![1.0 / k as f64; k];
            let xs: Vec<f64> = base.iter().map(|v| f64::from(*v)).collect();
            let ys: Vec<f64> = xs.iter().zip(&bump).map(|(x, b)| x + f64::from(*b)).collect();
            let x = DiscreteJointDistribution::from_law(&DiscreteLaw { values: xs, probs: p.clone() });
            let y = DiscreteJointDistribution::from_law(&DiscreteLaw { values: ys, probs: p });
            let one = WeightVector::ones(1);
            prop_assert!(var_exact(&x, &one, alpha).unwrap() >= var_exact(&y, &one, alpha).unwrap());
        }
    }
}
