//! Value-at-Risk, Expected Shortfall and Euler capital allocation.
//!
//! The crate computes portfolio risk and per-asset Euler allocations
//! `rho(X_i, X) = d/du_i rho(sum u_j X_j)` at `u = (1, ..., 1)` in two ways:
//!
//! * exactly, on finite joint distributions ([`discrete`]);
//! * by simulation, with plain Monte Carlo, importance sampling and a
//!   Metropolis-Hastings chain that lives on the level set `X = -VaR`
//!   ([`estimators`]).
//!
//! Around those sit the asset models ([`models`]), empirical quantiles
//! ([`empirical`]), risk measures with executable axiom checks
//! ([`risk_measures`]), allocation estimators and RORAC ([`allocation`]),
//! two-asset weight sweeps ([`sweep`]) and commitment-period evaluation
//! ([`multiperiod`]).
//!
//! Sign conventions: asset values are cash flows, so losses are negative.
//! Quantiles are taken on `X` in the lower tail and VaR negates afterwards,
//! `VaR_alpha(X) = -q_{1-alpha}(X)`.

// NaN-rejecting checks are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocation;
pub mod discrete;
pub mod empirical;
pub mod error;
pub mod estimators;
pub mod models;
pub mod multiperiod;
pub mod risk_measures;
pub mod rng;
pub mod sweep;

pub use error::{Error, Result};

pub(crate) fn check_level(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidLevel(alpha))
    }
}
