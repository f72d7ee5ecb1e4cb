//! Extremes of the coefficient of dispersion at a fixed mean.

use serde::{Deserialize, Serialize};

use super::com_poisson::{com_poisson_for_mean, com_poisson_pmf_auto};
use super::optimize::nelder_mead;
use crate::error::{check_positive, Result};
use crate::model::{BDist, ChainParams, ParentDist};
use crate::pmf::pmf_default;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DispersionFamily {
    BPoisson,
    ComPoisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionOptions {
    /// Grid points per searched coordinate.
    pub grid: usize,
    /// Chain parameters are searched on `[r_lo, r_hi]`, log-odds spaced.
    pub r_lo: f64,
    pub r_hi: f64,
    /// COM-Poisson `nu` is searched on `[nu_lo, nu_hi]`, log spaced.
    pub nu_lo: f64,
    pub nu_hi: f64,
}

impl Default for DispersionOptions {
    fn default() -> Self {
        Self {
            grid: 60,
            r_lo: 0.001,
            r_hi: 0.999,
            nu_lo: 0.01,
            nu_hi: 50.0,
        }
    }
}

/// Extremes with their locations: `(r1, r2, mu0)` for the b-Poisson,
/// `(mu, nu)` for the COM-Poisson.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionBounds {
    pub family: DispersionFamily,
    pub mean: f64,
    pub min_cd: f64,
    pub max_cd: f64,
    pub min_at: Vec<f64>,
    pub max_at: Vec<f64>,
}

/// b-Poisson with the parent mean set so the count has the given mean.
pub fn b_poisson_at_mean(mean: f64, chain: ChainParams) -> Result<BDist> {
    let mu0 = mean * (chain.r1() + chain.r2()) / chain.r1();
    BDist::new(chain, ParentDist::poisson(mu0)?)
}

/// Closed-form `var / mean`.
pub fn b_poisson_dispersion(mean: f64, chain: ChainParams) -> Result<f64> {
    let spec = b_poisson_at_mean(mean, chain)?;
    Ok(spec.variance() / spec.mean())
}

/// `var / mean` from the exact pmf.
pub fn b_poisson_dispersion_exact(mean: f64, chain: ChainParams) -> Result<f64> {
    let p = pmf_default(&b_poisson_at_mean(mean, chain)?)?;
    Ok(p.variance() / p.mean())
}

pub fn com_poisson_dispersion(mean: f64, nu: f64) -> Result<(f64, f64)> {
    let params = com_poisson_for_mean(mean, nu)?;
    let p = com_poisson_pmf_auto(params)?;
    Ok((p.variance() / p.mean(), params.mu()))
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

/// Grid search plus local refinement on the objective, with `sign = 1` for
/// the minimum and `-1` for the maximum. Returns the best point.
fn search(
    f: &impl Fn(&[f64]) -> f64,
    axes: &[Vec<f64>],
    bounds: &[(f64, f64)],
    sign: f64,
) -> Vec<f64> {
    let mut best = (f64::INFINITY, Vec::new());
    let mut idx = vec![0usize; axes.len()];
    loop {
        let x: Vec<f64> = idx.iter().zip(axes).map(|(&k, a)| a[k]).collect();
        let v = sign * f(&x);
        if v < best.0 {
            best = (v, x);
        }
        let mut d = 0;
        loop {
            if d == axes.len() {
                break;
            }
            idx[d] += 1;
            if idx[d] < axes[d].len() {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
        if d == axes.len() {
            break;
        }
    }
    let clamp = |x: &[f64]| -> Vec<f64> {
        x.iter().zip(bounds).map(|(v, (lo, hi))| v.clamp(*lo, *hi)).collect()
    };
    let step = axes
        .iter()
        .map(|a| if a.len() > 1 { (a[1] - a[0]).abs() } else { 0.1 })
        .fold(f64::INFINITY, f64::min);
    let (x, v) = nelder_mead(|x| sign * f(&clamp(x)), &best.1, step, 400, 1e-12);
    if v < best.0 {
        clamp(&x)
    } else {
        best.1
    }
}

/// Minimum and maximum coefficient of dispersion over the family at `mean`.
///
/// The b-Poisson search runs over `(r1, r2)` with `mu0 = mean (r1 + r2) / r1`
/// using the closed-form variance; the two extremes are then re-evaluated
/// from the exact pmf, which is what is reported.
pub fn dispersion_bounds(mean: f64, family: DispersionFamily) -> Result<DispersionBounds> {
    dispersion_bounds_with(mean, family, &DispersionOptions::default())
}

pub fn dispersion_bounds_with(
    mean: f64,
    family: DispersionFamily,
    opts: &DispersionOptions,
) -> Result<DispersionBounds> {
    check_positive("mean", mean)?;
    match family {
        DispersionFamily::BPoisson => {
            let (lo, hi) = (logit(opts.r_lo), logit(opts.r_hi));
            let axis = linspace(lo, hi, opts.grid);
            let cd = |u: &[f64]| -> f64 {
                ChainParams::new(expit(u[0]), expit(u[1]))
                    .and_then(|c| b_poisson_dispersion(mean, c))
                    .unwrap_or(f64::NAN)
            };
            let axes = [axis.clone(), axis];
            let bounds = [(lo, hi), (lo, hi)];
            let exact = |u: &[f64]| -> Result<(f64, Vec<f64>)> {
                let chain = ChainParams::new(expit(u[0]), expit(u[1]))?;
                let mu0 = mean * (chain.r1() + chain.r2()) / chain.r1();
                Ok((
                    b_poisson_dispersion_exact(mean, chain)?,
                    vec![chain.r1(), chain.r2(), mu0],
                ))
            };
            let (min_cd, min_at) = exact(&search(&cd, &axes, &bounds, 1.0))?;
            let (max_cd, max_at) = exact(&search(&cd, &axes, &bounds, -1.0))?;
            Ok(DispersionBounds {
                family,
                mean,
                min_cd,
                max_cd,
                min_at,
                max_at,
            })
        }
        DispersionFamily::ComPoisson => {
            let (lo, hi) = (opts.nu_lo.ln(), opts.nu_hi.ln());
            let cd = |v: &[f64]| -> f64 {
                com_poisson_dispersion(mean, v[0].exp())
                    .map(|(cd, _)| cd)
                    .unwrap_or(f64::NAN)
            };
            let axes = [linspace(lo, hi, opts.grid)];
            let bounds = [(lo, hi)];
            let at = |v: &[f64]| -> Result<(f64, Vec<f64>)> {
                let nu = v[0].exp();
                let (cd, mu) = com_poisson_dispersion(mean, nu)?;
                Ok((cd, vec![mu, nu]))
            };
            let (min_cd, min_at) = at(&search(&cd, &axes, &bounds, 1.0))?;
            let (max_cd, max_at) = at(&search(&cd, &axes, &bounds, -1.0))?;
            Ok(DispersionBounds {
                family,
                mean,
                min_cd,
                max_cd,
                min_at,
                max_at,
            })
        }
    }
}

/// Bounds at each mean, for plotting against the mean.
pub fn dispersion_curve(
    means: &[f64],
    family: DispersionFamily,
    opts: &DispersionOptions,
) -> Result<Vec<DispersionBounds>> {
    means
        .iter()
        .map(|&m| dispersion_bounds_with(m, family, opts))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thinning_slice_is_poisson() {
        for r1 in [0.1, 0.4, 0.9] {
            let c = ChainParams::thinning(r1).unwrap();
            assert!((b_poisson_dispersion(3.0, c).unwrap() - 1.0).abs() < 1e-12);
            assert!((b_poisson_dispersion_exact(3.0, c).unwrap() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn closed_form_matches_pmf() {
        for (r1, r2) in [(0.05, 0.3), (0.9, 0.95), (0.3, 0.01)] {
            let c = ChainParams::new(r1, r2).unwrap();
            let a = b_poisson_dispersion(2.0, c).unwrap();
            let b = b_poisson_dispersion_exact(2.0, c).unwrap();
            assert!((a - b).abs() < 1e-8 * a, "{a} {b}");
        }
    }

    #[test]
    fn b_poisson_spans_unit_dispersion() {
        let opts = DispersionOptions {
            grid: 15,
            ..DispersionOptions::default()
        };
        let b = dispersion_bounds_with(4.0, DispersionFamily::BPoisson, &opts).unwrap();
        assert!(b.min_cd < 1.0 && b.max_cd > 1.0, "{b:?}");
        assert!((b.max_at[2] * b.max_at[0] / (b.max_at[0] + b.max_at[1]) - 4.0).abs() < 1e-9);
    }

    #[test]
    fn com_poisson_bounds_bracket_poisson() {
        let opts = DispersionOptions {
            grid: 12,
            ..DispersionOptions::default()
        };
        let b = dispersion_bounds_with(1.456, DispersionFamily::ComPoisson, &opts).unwrap();
        assert!(b.min_cd < 0.5 && b.max_cd > 2.0 && b.max_cd < 2.456, "{b:?}");
    }
}
