//! Team-1 goals as renewals: interval laws, generating function, moments and
//! the large-mean normal approximation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{stationary_possession, BDist, ChainParams};

/// Which interval law to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntervalKind {
    /// Time to the next team-1 goal when team 2 holds the ball.
    Ordinary,
    /// Time to the first team-1 goal from the stationary start.
    Equilibrium,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Evaluate {
    Pmf,
    Cdf,
}

/// Probability (or cdf) of an interval of `m >= 1` goals.
pub fn interval_dist(chain: &ChainParams, m: u64, kind: IntervalKind, eval: Evaluate) -> f64 {
    if m == 0 {
        return 0.0;
    }
    let (r1, r2) = (chain.r1(), chain.r2());
    // Weight on the geometric part: r2 for ordinary, s for equilibrium.
    let c = match kind {
        IntervalKind::Ordinary => r2,
        IntervalKind::Equilibrium => stationary_possession(chain),
    };
    let decay = 1.0 - r1;
    match eval {
        Evaluate::Pmf if m == 1 => 1.0 - c,
        Evaluate::Pmf => c * r1 * decay.powi((m - 2) as i32),
        Evaluate::Cdf => 1.0 - c * decay.powi((m - 1) as i32),
    }
}

/// Generating function of the ordinary interval,
/// `(1 - r2) z + r1 r2 z^2 / (1 - (1 - r1) z)`.
pub fn pgf_eval(chain: &ChainParams, z: f64) -> Result<f64> {
    let (r1, r2) = (chain.r1(), chain.r2());
    let denom = 1.0 - (1.0 - r1) * z;
    if denom <= 4.0 * f64::EPSILON * (1.0 + (1.0 - r1) * z.abs()) {
        return Err(Error::Pole { z });
    }
    Ok((1.0 - r2) * z + z * z * r1 * r2 / denom)
}

/// Moments of the ordinary interval `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenewalMoments {
    /// `E(T)`
    pub m1: f64,
    /// `var(T)`
    pub v1: f64,
    /// `E(T^3)`
    pub et3: f64,
    /// Third central moment.
    pub k1: f64,
}

pub fn moments(chain: &ChainParams) -> Result<RenewalMoments> {
    let (r1, r2) = (chain.r1(), chain.r2());
    if r1 == 0.0 {
        return Err(Error::ZeroScoringRate);
    }
    let m1 = 1.0 + r2 / r1;
    let v1 = (2.0 - r1 - r2) * r2 / (r1 * r1);
    let et3 = 1.0 + r2 * (r1 * r1 + 6.0) / (r1 * r1 * r1);
    let k1 = et3 - 3.0 * m1 * v1 - m1.powi(3);
    Ok(RenewalMoments { m1, v1, et3, k1 })
}

/// Normal law `N(mu, variance)` for the team-1 count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalApprox {
    pub mu: f64,
    pub variance: f64,
}

impl NormalApprox {
    /// Probabilities of `0..=max` from the continuity-corrected normal cdf.
    pub fn discretize(&self, max: usize) -> Vec<f64> {
        use statrs::distribution::{ContinuousCDF, Normal};
        let normal = Normal::new(self.mu, self.variance.sqrt()).expect("positive variance");
        (0..=max)
            .map(|i| {
                let x = i as f64;
                normal.cdf(x + 0.5) - normal.cdf(x - 0.5)
            })
            .collect()
    }
}

/// Cox's correction for an asynchronous renewal process,
/// `1/6 + v1^2 / (2 m1^4) - k1 / (3 m1^3)`.
pub fn cox_correction(m: &RenewalMoments) -> f64 {
    1.0 / 6.0 + m.v1 * m.v1 / (2.0 * m.m1.powi(4)) - m.k1 / (3.0 * m.m1.powi(3))
}

/// Large-mean normal approximation. The mean is exact; the variance is
/// `E(N) v1 / m1^3 + var(N) / m1^2` plus Cox's correction.
pub fn normal_approx(spec: &BDist) -> Result<NormalApprox> {
    let m = moments(spec.chain())?;
    let parent = spec.parent();
    let variance = parent.mean() * m.v1 / m.m1.powi(3)
        + parent.variance() / (m.m1 * m.m1)
        + cox_correction(&m);
    if !(variance > 0.0) {
        return Err(Error::NonPositiveVariance(variance));
    }
    Ok(NormalApprox {
        mu: spec.mean(),
        variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ParentDist;

    fn chain(r1: f64, r2: f64) -> ChainParams {
        ChainParams::new(r1, r2).unwrap()
    }

    #[test]
    fn interval_examples() {
        let c = chain(0.8, 0.3);
        let ord = |m, e| interval_dist(&c, m, IntervalKind::Ordinary, e);
        assert!((ord(1, Evaluate::Pmf) - 0.7).abs() < 1e-15);
        assert!((ord(3, Evaluate::Pmf) - 0.048).abs() < 1e-15);
        let eq_cdf = interval_dist(&c, 2, IntervalKind::Equilibrium, Evaluate::Cdf);
        assert!((eq_cdf - (1.0 - 0.3 / 1.1 * 0.2)).abs() < 1e-15);
        assert!((eq_cdf - 0.945455).abs() < 1e-6);
    }

    #[test]
    fn interval_laws_normalize_and_difference() {
        for (r1, r2) in [(0.8, 0.3), (0.1, 0.9), (0.45, 0.05), (1.0, 0.5)] {
            let c = chain(r1, r2);
            for kind in [IntervalKind::Ordinary, IntervalKind::Equilibrium] {
                let mut total = 0.0;
                let mut m = 1;
                while interval_dist(&c, m, kind, Evaluate::Cdf) <= 1.0 - 1e-12 {
                    total += interval_dist(&c, m, kind, Evaluate::Pmf);
                    m += 1;
                }
                total += interval_dist(&c, m, kind, Evaluate::Pmf);
                assert!((total - 1.0).abs() < 1e-11, "{r1} {r2} {kind:?}");
                for m in 2..60 {
                    let diff = interval_dist(&c, m, kind, Evaluate::Cdf)
                        - interval_dist(&c, m - 1, kind, Evaluate::Cdf);
                    assert!((diff - interval_dist(&c, m, kind, Evaluate::Pmf)).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn pgf_values() {
        let c = chain(0.8, 0.3);
        assert!((pgf_eval(&c, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(pgf_eval(&c, 0.0).unwrap(), 0.0);
        assert!(matches!(pgf_eval(&c, 5.0), Err(Error::Pole { .. })));
        let h = 1e-6;
        let slope = (pgf_eval(&c, 1.0).unwrap() - pgf_eval(&c, 1.0 - h).unwrap()) / h;
        assert!((slope - 1.375).abs() < 1e-5);
    }

    #[test]
    fn moment_examples() {
        let m = moments(&chain(0.8, 0.3)).unwrap();
        assert!((m.m1 - 1.375).abs() < 1e-14);
        assert!((m.v1 - 0.421875).abs() < 1e-14);
        assert!((m.et3 - 4.890625).abs() < 1e-13);
        assert!((m.k1 - 0.55078125).abs() < 1e-13);
        let d = moments(&ChainParams::parent_recovery()).unwrap();
        assert_eq!((d.m1, d.v1, d.et3, d.k1), (1.0, 0.0, 1.0, 0.0));
        let g = moments(&chain(0.5, 0.5)).unwrap();
        assert_eq!((g.m1, g.v1), (2.0, 2.0));
        assert_eq!(moments(&chain(0.0, 0.4)), Err(Error::ZeroScoringRate));
    }

    #[test]
    fn moments_match_direct_summation() {
        for (r1, r2) in [(0.8, 0.3), (0.2, 0.7), (0.6, 0.05)] {
            let c = chain(r1, r2);
            let (mut e1, mut e2, mut e3) = (0.0, 0.0, 0.0);
            for m in 1..2000u64 {
                let p = interval_dist(&c, m, IntervalKind::Ordinary, Evaluate::Pmf);
                let t = m as f64;
                e1 += t * p;
                e2 += t * t * p;
                e3 += t * t * t * p;
            }
            let mo = moments(&c).unwrap();
            assert!((e1 - mo.m1).abs() < 1e-10);
            assert!((e2 - e1 * e1 - mo.v1).abs() < 1e-9);
            assert!((e3 - mo.et3).abs() < 1e-8);
        }
    }

    #[test]
    fn normal_approx_parent_recovery() {
        let spec = BDist::new(
            ChainParams::parent_recovery(),
            ParentDist::poisson(100.0).unwrap(),
        )
        .unwrap();
        let a = normal_approx(&spec).unwrap();
        assert_eq!(a.mu, 100.0);
        assert!((a.variance - (100.0 + 1.0 / 6.0)).abs() < 1e-12);
    }

    #[test]
    fn normal_approx_fixed_parent() {
        let spec = BDist::new(chain(0.5, 0.5), ParentDist::fixed(400)).unwrap();
        let a = normal_approx(&spec).unwrap();
        assert_eq!(a.mu, 200.0);
        let m = moments(spec.chain()).unwrap();
        assert!((a.variance - (100.0 + cox_correction(&m))).abs() < 1e-12);
    }
}
