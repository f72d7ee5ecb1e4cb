//! Closed forms for `p_0` and `p_1`, zero modification and the spike test.
//!
//! For a fixed number of goals `n`,
//! `p_0 = r2 (1-r1)^(n-1) / (r1+r2)` and
//! `p_1 = {2 r1 r2 (1-r1)^(n-2) + (n-2) r1 r2^2 (1-r1)^(n-3)} / (r1+r2)`.
//! Mixing these over binomial and Poisson parents gives the forms below.
//!
//! The binomial-parent `p_1` is sometimes quoted with three slips: a
//! `(1-r3)^3` denominator on the `(1-r1 r3)^N` term, a minus sign on the
//! `w^N/(1-r1)^3` term and a missing factor `N` on the last term. Only the
//! rederived expression agrees with the recursion (and reduces to the Poisson
//! form as `N -> inf`); the printed readings are kept in
//! [`BinomialP1Reading`] so the comparison stays reproducible.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{stationary_possession, BDist, ChainParams, ParentDist};
use crate::pmf::{recursive_prob, PmfVector};
use crate::model::{DEFAULT_SUPPORT_CAP, DEFAULT_TAIL_TOL};

/// Below this distance from `r1 = 1` the mixture forms (which divide by
/// `1 - r1`) are replaced by the recursion.
pub const R1_SINGULAR_TOL: f64 = 1e-8;

pub fn fixed_p0(chain: &ChainParams, n: u64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    stationary_possession(chain) * (1.0 - chain.r1()).powi((n - 1) as i32)
}

pub fn fixed_p1(chain: &ChainParams, n: u64) -> f64 {
    let (r1, r2) = (chain.r1(), chain.r2());
    let total = r1 + r2;
    match n {
        0 => 0.0,
        1 => r1 / total,
        2 => 2.0 * r1 * r2 / total,
        _ => {
            let x = 1.0 - r1;
            let k = n as i32;
            (2.0 * r1 * r2 * x.powi(k - 2) + (n - 2) as f64 * r1 * r2 * r2 * x.powi(k - 3)) / total
        }
    }
}

fn binomial_p0(chain: &ChainParams, n: u64, r3: f64) -> f64 {
    let (r1, r2) = (chain.r1(), chain.r2());
    let k = n as i32;
    let w_n = (1.0 - r3).powi(k);
    r2 / ((r1 + r2) * (1.0 - r1)) * ((1.0 - r1 * r3).powi(k) - w_n) + w_n
}

fn poisson_p0(chain: &ChainParams, mu0: f64) -> f64 {
    let (r1, r2) = (chain.r1(), chain.r2());
    let e0 = (-mu0).exp();
    r2 / ((r1 + r2) * (1.0 - r1)) * ((-r1 * mu0).exp() - e0) + e0
}

/// Readings of the binomial-parent `p_1` display.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinomialP1Reading {
    /// Term for term as usually printed.
    AsPrinted,
    /// As printed but with `(1-r1)^3` in place of `(1-r3)^3`.
    DenominatorCorrected,
    /// Rederived by summing the fixed-`n` form against the binomial pmf.
    Rederived,
}

/// Binomial-parent `p_1` under a chosen reading of the closed form.
pub fn binomial_p1(chain: &ChainParams, n: u64, r3: f64, reading: BinomialP1Reading) -> f64 {
    let (r1, r2) = (chain.r1(), chain.r2());
    let x = 1.0 - r1;
    let w = 1.0 - r3;
    let nn = n as f64;
    let k = n as i32;
    let a_n = (1.0 - r1 * r3).powi(k);
    let a_n1 = (1.0 - r1 * r3).powi(k - 1);
    let w_n = w.powi(k);
    let w_n1 = w.powi(k - 1);
    let r2sq = r2 * r2;

    let common = 2.0 * r1 * r2 * a_n / (x * x) + r1 * r2sq * nn * r3 * a_n1 / (x * x)
        + nn * r1 * r3 * w_n1
        - 2.0 * r1 * r2 * w_n / (x * x)
        - 2.0 * r1 * r2 * r3 * nn * w_n1 / x;
    let rest = match reading {
        BinomialP1Reading::AsPrinted => {
            -2.0 * r1 * r2sq * a_n / w.powi(3) - 2.0 * r1 * r2sq * w_n / x.powi(3)
                + r1 * r2sq * r3 * w_n1 / (x * x)
        }
        BinomialP1Reading::DenominatorCorrected => {
            -2.0 * r1 * r2sq * a_n / x.powi(3) - 2.0 * r1 * r2sq * w_n / x.powi(3)
                + r1 * r2sq * r3 * w_n1 / (x * x)
        }
        BinomialP1Reading::Rederived => {
            -2.0 * r1 * r2sq * a_n / x.powi(3) + 2.0 * r1 * r2sq * w_n / x.powi(3)
                + r1 * r2sq * nn * r3 * w_n1 / (x * x)
        }
    };
    (common + rest) / (r1 + r2)
}

fn poisson_p1(chain: &ChainParams, mu0: f64) -> f64 {
    let (r1, r2) = (chain.r1(), chain.r2());
    let x = 1.0 - r1;
    let ea = (-r1 * mu0).exp();
    let e0 = (-mu0).exp();
    let r2sq = r2 * r2;
    let sum = 2.0 * r1 * r2 * ea / (x * x) + r1 * r2sq * mu0 * ea / (x * x)
        - 2.0 * r1 * r2sq * ea / x.powi(3)
        + r1 * mu0 * e0
        - 2.0 * r1 * r2 * e0 / (x * x)
        + 2.0 * r1 * r2sq * e0 / x.powi(3)
        - 2.0 * r1 * r2 * mu0 * e0 / x
        + r1 * r2sq * mu0 * e0 / (x * x);
    sum / (r1 + r2)
}

fn near_singular(chain: &ChainParams) -> bool {
    (1.0 - chain.r1()).abs() < R1_SINGULAR_TOL
}

fn recursive(spec: &BDist, i: usize) -> Result<f64> {
    recursive_prob(spec, i, DEFAULT_TAIL_TOL, DEFAULT_SUPPORT_CAP)
}

/// Closed-form `p_0` for fixed, binomial and Poisson parents.
pub fn analytic_p0(spec: &BDist) -> Result<f64> {
    let chain = spec.chain();
    match spec.parent() {
        ParentDist::Fixed { n } => Ok(fixed_p0(chain, *n)),
        ParentDist::Binomial { .. } | ParentDist::Poisson { .. } if near_singular(chain) => {
            recursive(spec, 0)
        }
        ParentDist::Binomial { n, p } => Ok(binomial_p0(chain, *n, *p)),
        ParentDist::Poisson { mean } => Ok(poisson_p0(chain, *mean)),
        other => Err(Error::UnsupportedParent(other.name())),
    }
}

/// Closed-form `p_1` for fixed, binomial and Poisson parents.
pub fn analytic_p1(spec: &BDist) -> Result<f64> {
    let chain = spec.chain();
    match spec.parent() {
        ParentDist::Fixed { n } => Ok(fixed_p1(chain, *n)),
        ParentDist::Binomial { .. } | ParentDist::Poisson { .. } if near_singular(chain) => {
            recursive(spec, 1)
        }
        ParentDist::Binomial { n, p } => {
            Ok(binomial_p1(chain, *n, *p, BinomialP1Reading::Rederived))
        }
        ParentDist::Poisson { mean } => Ok(poisson_p1(chain, *mean)),
        other => Err(Error::UnsupportedParent(other.name())),
    }
}

/// Replacement zero-class mass.
///
/// `p0_new` takes the place of `p_0` *before* renormalization: every entry,
/// zero included, is then divided by `1 + p0_new - p_0`. The final zero
/// probability is therefore `p0_new / (1 + p0_new - p_0)`, and the mean
/// scales by the same factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroModification {
    pub p0_new: f64,
}

impl ZeroModification {
    pub fn new(p0_new: f64) -> Result<Self> {
        crate::error::check_probability("p0_new", p0_new)?;
        Ok(Self { p0_new })
    }
}

/// Applies a zero modification, returning the new pmf and the rescaled mean.
/// The mean is computed from `p` itself.
pub fn zero_modify(p: &PmfVector, modification: ZeroModification) -> Result<(PmfVector, f64)> {
    let p0 = p.get(0);
    let norm = 1.0 + modification.p0_new - p0;
    if !(norm > 0.0) {
        return Err(Error::InvalidModification(norm));
    }
    let mut probs: Vec<f64> = p.probs.iter().map(|v| v / norm).collect();
    if probs.is_empty() {
        probs.push(0.0);
    }
    probs[0] = modification.p0_new / norm;
    let mean = p.mean() / norm;
    Ok((
        PmfVector {
            probs,
            truncation_mass: p.truncation_mass / norm,
        },
        mean,
    ))
}

/// `p_0 > p_1`, in closed form where available and numerically otherwise.
pub fn spike_at_zero(spec: &BDist) -> Result<bool> {
    let (p0, p1) = match (analytic_p0(spec), analytic_p1(spec)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(Error::UnsupportedParent(_)), _) | (_, Err(Error::UnsupportedParent(_))) => {
            (recursive(spec, 0)?, recursive(spec, 1)?)
        }
        (Err(e), _) | (_, Err(e)) => return Err(e),
    };
    Ok(p0 > p1)
}
