//! Conway-Maxwell-Poisson pmf, `P_n ∝ (mu^n / n!)^nu`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{check_positive, Error, Result};
use crate::pmf::PmfVector;

/// Largest support searched when choosing `n_max` automatically.
pub const MAX_SUPPORT: usize = 1_000_000;

/// Tail mass accepted by [`com_poisson_pmf`].
pub const MAX_TAIL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComPoissonParams {
    mu: f64,
    nu: f64,
}

impl ComPoissonParams {
    pub fn new(mu: f64, nu: f64) -> Result<Self> {
        check_positive("mu", mu)?;
        check_positive("nu", nu)?;
        Ok(Self { mu, nu })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    fn ln_term(&self, n: usize) -> f64 {
        self.nu * (n as f64 * self.mu.ln() - ln_gamma(n as f64 + 1.0))
    }

    /// Bound on the unnormalized mass above `n_max`, relative to the largest
    /// term. Terms fall by at least `(mu / (n + 1))^nu` once `n + 1 > mu`.
    fn tail_bound(&self, n_max: usize, ln_peak: f64) -> f64 {
        let next = n_max as f64 + 1.0;
        if next <= self.mu {
            return f64::INFINITY;
        }
        let ratio = (self.mu / (next + 1.0)).powf(self.nu);
        (self.ln_term(n_max + 1) - ln_peak).exp() / (1.0 - ratio)
    }
}

/// Normalized pmf on `0 ..= n_max`; errors when the mass beyond `n_max`
/// could reach [`MAX_TAIL`].
pub fn com_poisson_pmf(params: ComPoissonParams, n_max: usize) -> Result<PmfVector> {
    let ln: Vec<f64> = (0..=n_max).map(|n| params.ln_term(n)).collect();
    let peak = ln.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = ln.iter().map(|l| (l - peak).exp()).collect();
    let total: f64 = weights.iter().sum();
    let tail = params.tail_bound(n_max, peak) / total;
    if !(tail < MAX_TAIL) {
        return Err(Error::Truncation(tail));
    }
    let probs = weights.iter().map(|w| w / total).collect();
    let mut pmf = PmfVector::new(probs);
    pmf.truncation_mass = tail;
    Ok(pmf)
}

/// Smallest support whose tail bound is below `tail_tol`.
pub fn com_poisson_support(params: ComPoissonParams, tail_tol: f64) -> Result<usize> {
    let mut peak = params.ln_term(0);
    let mut total = 1.0;
    let mut n = 0;
    loop {
        if n >= MAX_SUPPORT {
            return Err(Error::SupportTooLarge { cap: MAX_SUPPORT });
        }
        n += 1;
        let l = params.ln_term(n);
        if l > peak {
            total = total * (peak - l).exp() + 1.0;
            peak = l;
        } else {
            total += (l - peak).exp();
        }
        if n as f64 + 1.0 > params.mu && params.tail_bound(n, peak) / total < tail_tol {
            return Ok(n);
        }
    }
}

/// Pmf on a support chosen for a `1e-12` tail.
pub fn com_poisson_pmf_auto(params: ComPoissonParams) -> Result<PmfVector> {
    let n_max = com_poisson_support(params, 1e-12)?;
    com_poisson_pmf(params, n_max)
}

/// `mu` giving the requested mean at fixed `nu`, by bisection on `ln mu`.
pub fn com_poisson_for_mean(mean: f64, nu: f64) -> Result<ComPoissonParams> {
    check_positive("mean", mean)?;
    check_positive("nu", nu)?;
    let mean_at = |ln_mu: f64| -> Result<f64> {
        Ok(com_poisson_pmf_auto(ComPoissonParams::new(ln_mu.exp(), nu)?)?.mean())
    };
    let mut lo = mean.ln() - 1.0;
    while mean_at(lo)? > mean {
        lo -= 2.0 * (mean.ln() - lo).abs().max(1.0);
        if lo < -700.0 {
            return Err(Error::InvalidParameter {
                name: "mean",
                value: mean,
                reason: "not reachable for this nu",
            });
        }
    }
    let mut hi = mean.ln() + 1.0;
    while mean_at(hi)? < mean {
        hi += 2.0 * (hi - mean.ln()).abs().max(1.0);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_at(mid)? < mean {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 * (1.0 + hi.abs()) {
            break;
        }
    }
    ComPoissonParams::new((0.5 * (lo + hi)).exp(), nu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{Discrete, Poisson};

    #[test]
    fn unit_nu_is_poisson() {
        let p = com_poisson_pmf_auto(ComPoissonParams::new(5.0, 1.0).unwrap()).unwrap();
        let pois = Poisson::new(5.0).unwrap();
        for n in 0..p.len() {
            let e = (p.get(n) - pois.pmf(n as u64)).abs() / pois.pmf(n as u64);
            assert!(e < 1e-11, "n={n} rel={e:e}");
        }
        assert!((p.mean() - 5.0).abs() < 1e-10);
    }

    #[test]
    fn large_nu_concentrates() {
        let v10 = com_poisson_pmf_auto(ComPoissonParams::new(3.4, 10.0).unwrap()).unwrap().variance();
        let v50 = com_poisson_pmf_auto(ComPoissonParams::new(3.4, 50.0).unwrap()).unwrap().variance();
        assert!(v50 < v10 && v50 < 1e-2, "{v10} {v50}");
    }

    #[test]
    fn underdispersed_above_unit_nu() {
        let p = com_poisson_for_mean(2.38, 1.43).unwrap();
        let pmf = com_poisson_pmf_auto(p).unwrap();
        assert!((pmf.mean() - 2.38).abs() < 1e-9);
        assert!(pmf.variance() / pmf.mean() < 1.0);
    }

    #[test]
    fn short_support_is_rejected() {
        let p = ComPoissonParams::new(5.0, 1.0).unwrap();
        assert!(matches!(com_poisson_pmf(p, 8), Err(Error::Truncation(_))));
        assert!(ComPoissonParams::new(0.0, 1.0).is_err());
        assert!(ComPoissonParams::new(1.0, -1.0).is_err());
    }

    #[test]
    fn small_nu_approaches_geometric() {
        let p = com_poisson_for_mean(1.456, 0.01).unwrap();
        let pmf = com_poisson_pmf_auto(p).unwrap();
        let cd = pmf.variance() / pmf.mean();
        assert!(cd > 2.3 && cd < 2.456, "{cd}");
    }
}
