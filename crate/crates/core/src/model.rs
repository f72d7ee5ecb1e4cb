//! The distribution family: a two-state scoring chain stopped after a
//! parent-distributed number of steps.
//!
//! Team 1 scores with probability `r1` when it holds starting possession and
//! with probability `1 - r2` when team 2 does. Every goal hands possession to
//! the side that conceded. The count of team-1 goals after `N` total goals,
//! with the chain started in its stationary state, is the generalized
//! distribution of `N`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{check_positive, check_probability, Error, Result};

/// Default tolerance for the thinning test `|r1 + r2 - 1| <= tol`.
pub const THINNING_TOL: f64 = 1e-12;

/// Default parent tail mass that may be discarded when enumerating support.
pub const DEFAULT_TAIL_TOL: f64 = 1e-12;

/// Default cap on the number of parent support points enumerated.
pub const DEFAULT_SUPPORT_CAP: usize = 100_000;

/// Scoring probabilities of the two-state chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawChain", into = "RawChain")]
pub struct ChainParams {
    r1: f64,
    r2: f64,
}

#[derive(Serialize, Deserialize)]
struct RawChain {
    r1: f64,
    r2: f64,
}

impl TryFrom<RawChain> for ChainParams {
    type Error = Error;
    fn try_from(raw: RawChain) -> Result<Self> {
        ChainParams::new(raw.r1, raw.r2)
    }
}

impl From<ChainParams> for RawChain {
    fn from(c: ChainParams) -> Self {
        RawChain { r1: c.r1, r2: c.r2 }
    }
}

impl ChainParams {
    pub fn new(r1: f64, r2: f64) -> Result<Self> {
        check_probability("r1", r1)?;
        check_probability("r2", r2)?;
        if r1 + r2 <= 0.0 {
            return Err(Error::DegenerateChain);
        }
        Ok(Self { r1, r2 })
    }

    /// `r1 = 1, r2 = 0`: team 1 scores every goal and the parent is recovered.
    pub fn parent_recovery() -> Self {
        Self { r1: 1.0, r2: 0.0 }
    }

    /// `r2 = 1 - r1`: each goal is independently a team-1 goal.
    pub fn thinning(r1: f64) -> Result<Self> {
        Self::new(r1, 1.0 - r1)
    }

    #[inline]
    pub fn r1(&self) -> f64 {
        self.r1
    }

    #[inline]
    pub fn r2(&self) -> f64 {
        self.r2
    }

    /// The same chain seen from team 2's side.
    pub fn swapped(&self) -> Self {
        Self {
            r1: self.r2,
            r2: self.r1,
        }
    }

    /// Second eigenvalue of the scorer chain, `1 - r1 - r2`. It is the lag-one
    /// autocorrelation of the team-1 scoring indicator.
    #[inline]
    pub fn lag_correlation(&self) -> f64 {
        1.0 - self.r1 - self.r2
    }

    pub fn classify(&self) -> Regime {
        classify_dispersion(self, THINNING_TOL)
    }
}

/// Equilibrium probability `r2 / (r1 + r2)` that team 1 holds starting possession.
#[inline]
pub fn stationary_possession(chain: &ChainParams) -> f64 {
    chain.r2 / (chain.r1 + chain.r2)
}

/// Dispersion regime of a chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// `r1 + r2 < 1`: a team-1 goal makes the next one more likely.
    SelfExciting,
    /// `r1 + r2 = 1`: goals are independent.
    Thinning,
    /// `r1 + r2 > 1`: a team-1 goal makes the next one less likely.
    SelfDampening,
}

pub fn classify_dispersion(chain: &ChainParams, tol: f64) -> Regime {
    let excess = chain.r1 + chain.r2 - 1.0;
    if excess.abs() <= tol {
        Regime::Thinning
    } else if excess < 0.0 {
        Regime::SelfExciting
    } else {
        Regime::SelfDampening
    }
}

/// Distribution of the total number of goals `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ParentDist {
    Fixed { n: u64 },
    Binomial { n: u64, p: f64 },
    Poisson { mean: f64 },
    /// Failures before the `size`-th success, success probability `prob`.
    NegBinomial { size: f64, prob: f64 },
    Custom { probs: Vec<f64> },
}

/// Parent probabilities `P_0 ..= P_m` with the discarded upper tail mass.
#[derive(Debug, Clone, PartialEq)]
pub struct ParentTable {
    pub probs: Vec<f64>,
    pub truncated: f64,
}

impl ParentTable {
    /// Highest index with retained mass.
    pub fn max_n(&self) -> usize {
        self.probs.len().saturating_sub(1)
    }
}

impl ParentDist {
    pub fn fixed(n: u64) -> Self {
        ParentDist::Fixed { n }
    }

    pub fn binomial(n: u64, p: f64) -> Result<Self> {
        let d = ParentDist::Binomial { n, p };
        d.validate()?;
        Ok(d)
    }

    pub fn poisson(mean: f64) -> Result<Self> {
        let d = ParentDist::Poisson { mean };
        d.validate()?;
        Ok(d)
    }

    pub fn neg_binomial(size: f64, prob: f64) -> Result<Self> {
        let d = ParentDist::NegBinomial { size, prob };
        d.validate()?;
        Ok(d)
    }

    pub fn custom(probs: Vec<f64>) -> Result<Self> {
        let d = ParentDist::Custom { probs };
        d.validate()?;
        Ok(d)
    }

    /// Uses a computed pmf as a parent, renormalizing away any truncated tail.
    pub fn from_pmf(pmf: &crate::pmf::PmfVector) -> Result<Self> {
        let total: f64 = pmf.probs.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Data("pmf has no mass".into()));
        }
        Self::custom(pmf.probs.iter().map(|p| p / total).collect())
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ParentDist::Fixed { .. } => Ok(()),
            ParentDist::Binomial { p, .. } => check_probability("p", *p),
            ParentDist::Poisson { mean } => check_positive("mean", *mean),
            ParentDist::NegBinomial { size, prob } => {
                check_positive("size", *size)?;
                check_probability("prob", *prob)?;
                if *prob == 0.0 {
                    return Err(Error::InvalidParameter {
                        name: "prob",
                        value: 0.0,
                        reason: "must be positive",
                    });
                }
                Ok(())
            }
            ParentDist::Custom { probs } => {
                if probs.is_empty() {
                    return Err(Error::Data("custom parent has no support".into()));
                }
                for &p in probs {
                    check_probability("probs", p)?;
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidParameter {
                        name: "probs",
                        value: total,
                        reason: "must sum to 1 within 1e-12",
                    });
                }
                Ok(())
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ParentDist::Fixed { .. } => "fixed",
            ParentDist::Binomial { .. } => "binomial",
            ParentDist::Poisson { .. } => "poisson",
            ParentDist::NegBinomial { .. } => "negative binomial",
            ParentDist::Custom { .. } => "custom",
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            ParentDist::Fixed { n } => *n as f64,
            ParentDist::Binomial { n, p } => *n as f64 * p,
            ParentDist::Poisson { mean } => *mean,
            ParentDist::NegBinomial { size, prob } => size * (1.0 - prob) / prob,
            ParentDist::Custom { probs } => probs
                .iter()
                .enumerate()
                .map(|(n, p)| n as f64 * p)
                .sum(),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            ParentDist::Fixed { .. } => 0.0,
            ParentDist::Binomial { n, p } => *n as f64 * p * (1.0 - p),
            ParentDist::Poisson { mean } => *mean,
            ParentDist::NegBinomial { size, prob } => size * (1.0 - prob) / (prob * prob),
            ParentDist::Custom { probs } => {
                let m = self.mean();
                probs
                    .iter()
                    .enumerate()
                    .map(|(n, p)| (n as f64 - m).powi(2) * p)
                    .sum()
            }
        }
    }

    /// Probability generating function `E[z^N]` for `|z| <= 1`.
    pub fn pgf(&self, z: f64) -> f64 {
        match self {
            ParentDist::Fixed { n } => z.powi(*n as i32),
            ParentDist::Binomial { n, p } => (1.0 - p + p * z).powi(*n as i32),
            ParentDist::Poisson { mean } => (-mean * (1.0 - z)).exp(),
            ParentDist::NegBinomial { size, prob } => (prob / (1.0 - (1.0 - prob) * z)).powf(*size),
            ParentDist::Custom { probs } => probs.iter().rev().fold(0.0, |acc, p| acc * z + p),
        }
    }

    /// `P(N = n)`. Poisson, binomial and negative binomial are evaluated in log space.
    pub fn pmf(&self, n: u64) -> f64 {
        match self {
            ParentDist::Fixed { n: n0 } => {
                if n == *n0 {
                    1.0
                } else {
                    0.0
                }
            }
            ParentDist::Binomial { n: size, p } => {
                if n > *size {
                    return 0.0;
                }
                if *p == 0.0 {
                    return if n == 0 { 1.0 } else { 0.0 };
                }
                if *p == 1.0 {
                    return if n == *size { 1.0 } else { 0.0 };
                }
                let k = n as f64;
                let m = *size as f64;
                (ln_choose(m, k) + k * p.ln() + (m - k) * (-p).ln_1p()).exp()
            }
            ParentDist::Poisson { mean } => {
                let k = n as f64;
                (k * mean.ln() - mean - ln_gamma(k + 1.0)).exp()
            }
            ParentDist::NegBinomial { size, prob } => {
                if *prob == 1.0 {
                    return if n == 0 { 1.0 } else { 0.0 };
                }
                let k = n as f64;
                (ln_gamma(k + size) - ln_gamma(*size) - ln_gamma(k + 1.0)
                    + size * prob.ln()
                    + k * (-prob).ln_1p())
                .exp()
            }
            ParentDist::Custom { probs } => probs.get(n as usize).copied().unwrap_or(0.0),
        }
    }

    /// Enumerates `P_0, P_1, ...` until the cumulative mass exceeds
    /// `1 - tail_tol` (or a rigorous geometric bound on the remaining tail
    /// drops below `tail_tol`). Finite supports are enumerated in full.
    pub fn table(&self, tail_tol: f64, cap: usize) -> Result<ParentTable> {
        let table = match self {
            ParentDist::Fixed { n } => {
                let n = *n as usize;
                if n >= cap {
                    return Err(Error::SupportTooLarge { cap });
                }
                let mut probs = vec![0.0; n + 1];
                probs[n] = 1.0;
                return Ok(ParentTable {
                    probs,
                    truncated: 0.0,
                });
            }
            ParentDist::Custom { probs } => {
                if probs.len() > cap {
                    return Err(Error::SupportTooLarge { cap });
                }
                return Ok(ParentTable {
                    probs: probs.clone(),
                    truncated: 0.0,
                });
            }
            ParentDist::Binomial { n, p } => {
                if *p == 0.0 || *p == 1.0 || *n == 0 {
                    let at = if *p == 1.0 { *n } else { 0 };
                    return ParentDist::Fixed { n: at }.table(tail_tol, cap);
                }
                let size = *n as f64;
                let odds = p / (1.0 - p);
                let mode = (((size + 1.0) * p).floor() as u64).min(*n);
                ratio_table(
                    mode as usize,
                    self.pmf(mode),
                    |j| (size - j as f64) / (j as f64 + 1.0) * odds,
                    Some(*n as usize),
                    tail_tol,
                    cap,
                )?
            }
            ParentDist::Poisson { mean } => {
                let mode = mean.floor();
                if mode >= cap as f64 {
                    return Err(Error::SupportTooLarge { cap });
                }
                let mode = mode as u64;
                ratio_table(
                    mode as usize,
                    self.pmf(mode),
                    |j| mean / (j as f64 + 1.0),
                    None,
                    tail_tol,
                    cap,
                )?
            }
            ParentDist::NegBinomial { size, prob } => {
                if *prob == 1.0 {
                    return ParentDist::Fixed { n: 0 }.table(tail_tol, cap);
                }
                let q = 1.0 - prob;
                let mode = if *size > 1.0 {
                    ((size - 1.0) * q / prob).floor()
                } else {
                    0.0
                };
                if mode >= cap as f64 {
                    return Err(Error::SupportTooLarge { cap });
                }
                let mode = mode as u64;
                ratio_table(
                    mode as usize,
                    self.pmf(mode),
                    |j| (j as f64 + size) / (j as f64 + 1.0) * q,
                    None,
                    tail_tol,
                    cap,
                )?
            }
        };
        Ok(table)
    }
}

/// Builds a table outwards from the mode using `P_{j+1} = P_j * ratio(j)`.
/// `ratio` must be decreasing in `j` so that `P_j r / (1 - r)` bounds the tail.
fn ratio_table(
    mode: usize,
    at_mode: f64,
    ratio: impl Fn(usize) -> f64,
    upper: Option<usize>,
    tail_tol: f64,
    cap: usize,
) -> Result<ParentTable> {
    if mode >= cap {
        return Err(Error::SupportTooLarge { cap });
    }
    let mut probs = vec![0.0; mode + 1];
    probs[mode] = at_mode;
    for j in (0..mode).rev() {
        probs[j] = probs[j + 1] / ratio(j);
    }
    // Summed smallest-first.
    let mut cum: f64 = probs.iter().sum();
    let mut j = mode;
    loop {
        if upper.is_some_and(|u| j >= u) {
            break;
        }
        let r = ratio(j);
        let pj = probs[j];
        if cum >= 1.0 - tail_tol || (r < 1.0 && pj * r / (1.0 - r) < tail_tol) {
            break;
        }
        if probs.len() >= cap {
            return Err(Error::SupportTooLarge { cap });
        }
        let next = pj * r;
        probs.push(next);
        cum += next;
        j += 1;
    }
    Ok(ParentTable {
        probs,
        truncated: (1.0 - cum).max(0.0),
    })
}

pub(crate) fn ln_choose(n: f64, k: f64) -> f64 {
    ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)
}

/// A b-distribution: chain parameters plus the parent law of `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BDist {
    chain: ChainParams,
    parent: ParentDist,
}

impl BDist {
    pub fn new(chain: ChainParams, parent: ParentDist) -> Result<Self> {
        parent.validate()?;
        Ok(Self { chain, parent })
    }

    pub fn chain(&self) -> &ChainParams {
        &self.chain
    }

    pub fn parent(&self) -> &ParentDist {
        &self.parent
    }

    /// Exact mean `r1 E(N) / (r1 + r2)`.
    pub fn mean(&self) -> f64 {
        self.chain.r1 * self.parent.mean() / (self.chain.r1 + self.chain.r2)
    }

    /// Exact variance of the team-1 count.
    ///
    /// The scoring indicators form a stationary two-state chain with success
    /// probability `p = r1/(r1+r2)` and lag-k correlation `λ^k`, `λ = 1-r1-r2`,
    /// so given `N = n` the variance is
    /// `pq (n + 2 Σ_{k<n} (n-k) λ^k)`, which only needs `E(N)`, `var(N)` and
    /// `E(λ^N)` after mixing over the parent.
    pub fn variance(&self) -> f64 {
        let p = self.chain.r1 / (self.chain.r1 + self.chain.r2);
        let pq = p * (1.0 - p);
        let lam = self.chain.lag_correlation();
        let en = self.parent.mean();
        let var_n = self.parent.variance();
        let one_minus = self.chain.r1 + self.chain.r2;
        // E[(1-λ)N - 1 + λ^N], evaluated with expm1 for the Poisson parent
        // where the bracket cancels to second order.
        let bracket = match &self.parent {
            ParentDist::Poisson { mean } => {
                let x = mean * one_minus;
                (-x).exp_m1() + x
            }
            _ => one_minus * en - 1.0 + self.parent.pgf(lam),
        };
        let cross = 2.0 * pq * lam * bracket / (one_minus * one_minus);
        pq * en + cross + p * p * var_n
    }

    pub fn regime(&self) -> Regime {
        self.chain.classify()
    }
}

/// Free-function form of [`BDist::mean`].
pub fn mean(spec: &BDist) -> f64 {
    spec.mean()
}

/// Free-function form of [`ParentDist::pmf`].
pub fn parent_pmf(parent: &ParentDist, n: u64) -> f64 {
    parent.pmf(n)
}
