//! Operation accounting: the analytic per-realization costs of the three
//! algorithms, and tallies from instrumented hot loops.

use std::ops::AddAssign;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Mc,
    Is,
    Mcmc,
}

/// Analytic operation counts per realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnalyticCounts {
    /// Cost of one realization for the VaR estimate; MCMC takes VaR as input.
    pub var: Option<Ratio<u64>>,
    /// Cost per realization that contributes to the allocation estimate.
    pub allocation: Ratio<u64>,
}

/// MC: `3n` per realization, `3n / (2b + 1)` per useful band realization;
/// IS: `6n` and `6n / (2b + 1)`; MCMC: 9 per chain step.
pub fn count_operations(kind: EstimatorKind, n: u64, b: u64) -> AnalyticCounts {
    match kind {
        EstimatorKind::Mc => AnalyticCounts {
            var: Some(Ratio::from_integer(3 * n)),
            allocation: Ratio::new(3 * n, 2 * b + 1),
        },
        EstimatorKind::Is => AnalyticCounts {
            var: Some(Ratio::from_integer(6 * n)),
            allocation: Ratio::new(6 * n, 2 * b + 1),
        },
        EstimatorKind::Mcmc => AnalyticCounts { var: None, allocation: Ratio::from_integer(9) },
    }
}

/// Tally of arithmetic operations executed in a hot loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OpCounts {
    pub add: u64,
    pub mul: u64,
    pub exp: u64,
    pub log: u64,
    pub cmp: u64,
}

impl OpCounts {
    pub fn total(&self) -> u64 {
        self.add + self.mul + self.exp + self.log + self.cmp
    }

    /// Average operations per unit of work.
    pub fn per(&self, units: u64) -> f64 {
        self.total() as f64 / units.max(1) as f64
    }
}

impl AddAssign for OpCounts {
    fn add_assign(&mut self, o: Self) {
        self.add += o.add;
        self.mul += o.mul;
        self.exp += o.exp;
        self.log += o.log;
        self.cmp += o.cmp;
    }
}

/// Counter that compiles away when `ON` is false.
#[derive(Debug, Default)]
pub(crate) struct Tally<const ON: bool>(pub OpCounts);

impl<const ON: bool> Tally<ON> {
    #[inline(always)]
    pub fn add(&mut self, k: u64) {
        if ON {
            self.0.add += k;
        }
    }
    #[inline(always)]
    pub fn mul(&mut self, k: u64) {
        if ON {
            self.0.mul += k;
        }
    }
    #[inline(always)]
    pub fn exp(&mut self) {
        if ON {
            self.0.exp += 1;
        }
    }
    #[inline(always)]
    pub fn log(&mut self) {
        if ON {
            self.0.log += 1;
        }
    }
    #[inline(always)]
    pub fn cmp(&mut self) {
        if ON {
            self.0.cmp += 1;
        }
    }
}
