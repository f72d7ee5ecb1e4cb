use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::optimize::{bfgs, hessian, newton_polish, Minimum, OptimizerOptions};
use crate::error::{Error, Result};
use crate::fast::{fast_prob_table, needs_recursion};
use crate::model::{ChainParams, ParentDist, DEFAULT_SUPPORT_CAP, DEFAULT_TAIL_TOL};
use crate::pmf::recursive_prob_table;
use crate::sampler::RandomSource;

/// Probabilities below this are replaced before taking logs.
pub const PROB_FLOOR: f64 = 1e-300;

/// Parent mean `alpha exp(beta' x)` above which the likelihood is rejected.
pub const MAX_PARENT_MEAN: f64 = 5e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// Plain Poisson regression: the chain is pinned at `r1 = 1, r2 = 0`.
    Poisson,
    /// Poisson parent passed through the scoring chain.
    BPoisson,
}

/// Parent mean `alpha exp(beta' x)` with chain parameters. Parameters are
/// ordered `alpha, beta..., r1, r2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionModel {
    pub family: Family,
    pub alpha: f64,
    pub beta: Vec<f64>,
    pub chain: ChainParams,
    pub fixed: Vec<bool>,
}

impl RegressionModel {
    /// All parameters free except the chain under the Poisson family.
    pub fn new(family: Family, alpha: f64, beta: Vec<f64>, chain: ChainParams) -> Result<Self> {
        let k = beta.len();
        let mut fixed = vec![false; k + 3];
        let chain = match family {
            Family::Poisson => {
                fixed[k + 1] = true;
                fixed[k + 2] = true;
                ChainParams::parent_recovery()
            }
            Family::BPoisson => chain,
        };
        let model = Self {
            family,
            alpha,
            beta,
            chain,
            fixed,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidParameter {
                name: "alpha",
                value: self.alpha,
                reason: "must be positive and finite",
            });
        }
        if self.fixed.len() != self.n_params() {
            return Err(Error::Data(format!(
                "fixed mask has {} entries for {} parameters",
                self.fixed.len(),
                self.n_params()
            )));
        }
        if self.family == Family::Poisson && self.chain != ChainParams::parent_recovery() {
            return Err(Error::Data("the Poisson family needs r1 = 1, r2 = 0".into()));
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.beta.len() + 3
    }

    pub fn free_params(&self) -> usize {
        self.fixed.iter().filter(|&&f| !f).count()
    }

    pub fn fix_r1(mut self, r1: f64) -> Result<Self> {
        self.chain = ChainParams::new(r1, self.chain.r2())?;
        let k = self.beta.len();
        self.fixed[k + 1] = true;
        Ok(self)
    }

    pub fn fix_r2(mut self, r2: f64) -> Result<Self> {
        self.chain = ChainParams::new(self.chain.r1(), r2)?;
        let k = self.beta.len();
        self.fixed[k + 2] = true;
        Ok(self)
    }

    /// Natural-scale parameter vector.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        p.push(self.alpha);
        p.extend(&self.beta);
        p.push(self.chain.r1());
        p.push(self.chain.r2());
        p
    }

    /// Names in parameter order, using the dataset's covariate names.
    pub fn param_names(&self, data: &Dataset) -> Vec<String> {
        let mut names = vec!["alpha".to_string()];
        names.extend(data.names().iter().cloned());
        names.push("r1".into());
        names.push("r2".into());
        names
    }

    pub fn parent_mean(&self, row: &[f64]) -> f64 {
        let eta: f64 = self.beta.iter().zip(row).map(|(b, x)| b * x).sum();
        self.alpha * eta.exp()
    }

    /// Free parameters on the unconstrained scale: `ln alpha`, `beta`,
    /// `logit r1`, `logit r2`.
    fn to_free(&self) -> Vec<f64> {
        self.params()
            .iter()
            .enumerate()
            .filter(|(j, _)| !self.fixed[*j])
            .map(|(j, &v)| to_unconstrained(j, self.beta.len(), v))
            .collect()
    }

    fn with_free(&self, theta: &[f64]) -> Result<Self> {
        let k = self.beta.len();
        let mut p = self.params();
        let mut it = theta.iter();
        for (j, value) in p.iter_mut().enumerate() {
            if !self.fixed[j] {
                *value = to_natural(j, k, *it.next().expect("one value per free parameter"));
            }
        }
        let mut out = self.clone();
        out.alpha = p[0];
        out.beta = p[1..=k].to_vec();
        out.chain = ChainParams::new(p[k + 1], p[k + 2])?;
        out.validate()?;
        Ok(out)
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn to_unconstrained(j: usize, k: usize, v: f64) -> f64 {
    if j == 0 {
        v.ln()
    } else if j <= k {
        v
    } else {
        logit(v)
    }
}

fn to_natural(j: usize, k: usize, t: f64) -> f64 {
    if j == 0 {
        t.exp()
    } else if j <= k {
        t
    } else {
        expit(t)
    }
}

/// Centering and scaling of the covariates used while optimizing, so that
/// every unconstrained coordinate moves the linear predictor by a similar
/// amount. Constant columns are left alone.
#[derive(Debug, Clone)]
struct Scaling {
    center: Vec<f64>,
    scale: Vec<f64>,
}

impl Scaling {
    fn of(data: &Dataset) -> Self {
        let n = data.len() as f64;
        let k = data.n_covariates();
        let mut center = vec![0.0; k];
        let mut scale = vec![1.0; k];
        for j in 0..k {
            let m = data.x().iter().map(|r| r[j]).sum::<f64>() / n;
            let var = data.x().iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n;
            if var > 0.0 {
                center[j] = m;
                scale[j] = var.sqrt();
            }
        }
        Self { center, scale }
    }

    fn apply(&self, data: &Dataset) -> Result<Dataset> {
        let x = data
            .x()
            .iter()
            .map(|r| {
                r.iter()
                    .zip(self.center.iter().zip(&self.scale))
                    .map(|(v, (m, s))| (v - m) / s)
                    .collect()
            })
            .collect();
        Dataset::new(data.y().to_vec(), x, data.names().to_vec())
    }

    fn to_internal(&self, model: &RegressionModel) -> RegressionModel {
        let mut out = model.clone();
        let shift: f64 = model.beta.iter().zip(&self.center).map(|(b, m)| b * m).sum();
        out.alpha = model.alpha * shift.exp();
        out.beta = model.beta.iter().zip(&self.scale).map(|(b, s)| b * s).collect();
        out
    }

    fn to_natural(&self, model: &RegressionModel) -> RegressionModel {
        let mut out = model.clone();
        out.beta = model.beta.iter().zip(&self.scale).map(|(b, s)| b / s).collect();
        let shift: f64 = out.beta.iter().zip(&self.center).map(|(b, m)| b * m).sum();
        out.alpha = model.alpha * (-shift).exp();
        out
    }

    /// `d natural / d internal-unconstrained`, restricted to free columns.
    fn jacobian(&self, natural: &RegressionModel) -> DMatrix<f64> {
        let n = natural.n_params();
        let k = natural.beta.len();
        let mut full = DMatrix::<f64>::zeros(n, n);
        full[(0, 0)] = natural.alpha;
        for j in 0..k {
            full[(0, j + 1)] = -natural.alpha * self.center[j] / self.scale[j];
            full[(j + 1, j + 1)] = 1.0 / self.scale[j];
        }
        let (r1, r2) = (natural.chain.r1(), natural.chain.r2());
        full[(k + 1, k + 1)] = r1 * (1.0 - r1);
        full[(k + 2, k + 2)] = r2 * (1.0 - r2);
        let free: Vec<usize> = (0..n).filter(|&j| !natural.fixed[j]).collect();
        DMatrix::from_fn(n, free.len(), |r, c| full[(r, free[c])])
    }
}

/// Negative log-likelihood with the number of floored observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Likelihood {
    pub neg_loglik: f64,
    pub floored: usize,
}

/// `-Σ ln p(y_j | mu0_j)` with `mu0_j = alpha exp(beta' x_j)`.
pub fn neg_log_likelihood(model: &RegressionModel, data: &Dataset) -> Result<f64> {
    Ok(likelihood(model, data)?.neg_loglik)
}

/// [`neg_log_likelihood`] with diagnostics. Observations sharing a parent
/// mean share one parent table; groups are evaluated in parallel and the
/// sum runs in observation order.
pub fn likelihood(model: &RegressionModel, data: &Dataset) -> Result<Likelihood> {
    model.validate()?;
    if model.beta.len() != data.n_covariates() {
        return Err(Error::Data(format!(
            "model has {} coefficients but the data {} covariates",
            model.beta.len(),
            data.n_covariates()
        )));
    }
    let means: Vec<f64> = data.x().iter().map(|row| model.parent_mean(row)).collect();
    if let Some(&bad) = means.iter().find(|m| !m.is_finite() || **m > MAX_PARENT_MEAN) {
        if !bad.is_finite() {
            return Err(Error::NonFinite("parent mean"));
        }
        return Err(Error::InvalidParameter {
            name: "parent mean",
            value: bad,
            reason: "exceeds the supported maximum",
        });
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&a, &b| means[a].total_cmp(&means[b]).then(data.y()[a].cmp(&data.y()[b])));
    let mut groups: Vec<&[usize]> = Vec::new();
    let mut start = 0;
    for end in 1..=order.len() {
        if end == order.len() || means[order[end]].to_bits() != means[order[start]].to_bits() {
            groups.push(&order[start..end]);
            start = end;
        }
    }
    let chain = model.chain;
    let per_group: Vec<Vec<(usize, f64)>> = groups
        .par_iter()
        .map(|idx| group_probs(&chain, means[idx[0]], idx, data.y()))
        .collect::<Result<_>>()?;
    let mut probs = vec![0.0; data.len()];
    for (j, p) in per_group.into_iter().flatten() {
        probs[j] = p;
    }
    let mut floored = 0;
    let mut nll = 0.0;
    for p in probs {
        let p = if p < PROB_FLOOR || !p.is_finite() {
            floored += 1;
            PROB_FLOOR
        } else {
            p
        };
        nll -= p.ln();
    }
    Ok(Likelihood {
        neg_loglik: nll,
        floored,
    })
}

fn group_probs(chain: &ChainParams, mu0: f64, idx: &[usize], y: &[u64]) -> Result<Vec<(usize, f64)>> {
    let parent = ParentDist::poisson(mu0)?;
    if *chain == ChainParams::parent_recovery() {
        return Ok(idx.iter().map(|&j| (j, parent.pmf(y[j]))).collect());
    }
    let table = parent.table(DEFAULT_TAIL_TOL, DEFAULT_SUPPORT_CAP)?;
    let recursion = needs_recursion(chain);
    let mut out = Vec::with_capacity(idx.len());
    let mut last: Option<(u64, f64)> = None;
    for &j in idx {
        let p = match last {
            Some((yy, p)) if yy == y[j] => p,
            _ => {
                let i = y[j] as usize;
                if recursion {
                    recursive_prob_table(chain, &table, i)
                } else {
                    fast_prob_table(chain, &table, i, true).prob
                }
            }
        };
        last = Some((y[j], p));
        out.push((j, p));
    }
    Ok(out)
}

/// AIC from the free-parameter count.
pub fn aic(free_params: usize, neg_loglik: f64) -> f64 {
    2.0 * free_params as f64 + 2.0 * neg_loglik
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub family: Family,
    /// Holds `r1` at this value.
    pub fix_r1: Option<f64>,
    pub fix_r2: Option<f64>,
    /// Covariate subset by name; all columns when `None`.
    pub covariates: Option<Vec<String>>,
    /// Starting model; derived from a Poisson fit when `None`.
    pub start: Option<RegressionModel>,
    /// Total starts including the unjittered one.
    pub starts: usize,
    /// Standard deviation of the start jitter on the unconstrained scale.
    pub jitter: f64,
    pub seed: u64,
    pub grad_tol: f64,
    pub f_tol: f64,
    pub max_iter: usize,
    /// Relative finite-difference step for the Hessian.
    pub hessian_step: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        let opt = OptimizerOptions::default();
        Self {
            family: Family::BPoisson,
            fix_r1: None,
            fix_r2: None,
            covariates: None,
            start: None,
            starts: 5,
            jitter: 0.5,
            seed: 0,
            grad_tol: opt.grad_tol,
            f_tol: opt.f_tol,
            max_iter: opt.max_iter,
            hessian_step: 1e-4,
        }
    }
}

impl FitOptions {
    pub fn new(family: Family) -> Self {
        Self {
            family,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: RegressionModel,
    pub param_names: Vec<String>,
    pub neg_loglik: f64,
    pub aic: f64,
    pub free_params: usize,
    pub n_obs: usize,
    /// Natural-scale standard errors, zero for fixed parameters; unset when
    /// the Hessian could not be inverted.
    pub se: Option<Vec<f64>>,
    pub covariance: Option<Vec<Vec<f64>>>,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    pub floored: usize,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Option<f64> {
        let j = self.param_names.iter().position(|n| n == name)?;
        Some(self.model.params()[j])
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        let j = self.param_names.iter().position(|n| n == name)?;
        self.se.as_ref().map(|se| se[j])
    }
}

fn objective<'a>(base: &RegressionModel, data: &'a Dataset) -> impl Fn(&[f64]) -> f64 + 'a {
    let base = base.clone();
    move |theta: &[f64]| {
        base.with_free(theta)
            .and_then(|m| neg_log_likelihood(&m, data))
            .unwrap_or(f64::INFINITY)
    }
}

/// Poisson regression start: intercept at the log mean, zero slopes.
fn poisson_start(data: &Dataset, opts: &FitOptions) -> Result<RegressionModel> {
    let mean = data.mean_y().max(1e-3);
    let model = RegressionModel::new(
        Family::Poisson,
        mean,
        vec![0.0; data.n_covariates()],
        ChainParams::parent_recovery(),
    )?;
    if data.n_covariates() == 0 {
        return Ok(model);
    }
    let f = objective(&model, data);
    let m = bfgs(&f, &model.to_free(), &optimizer_options(opts));
    model.with_free(&m.x)
}

fn optimizer_options(opts: &FitOptions) -> OptimizerOptions {
    OptimizerOptions {
        grad_tol: opts.grad_tol,
        f_tol: opts.f_tol,
        max_iter: opts.max_iter,
        ..OptimizerOptions::default()
    }
}

fn initial_model(data: &Dataset, opts: &FitOptions) -> Result<RegressionModel> {
    if let Some(start) = &opts.start {
        let mut m = start.clone();
        if let Some(r1) = opts.fix_r1 {
            m = m.fix_r1(r1)?;
        }
        if let Some(r2) = opts.fix_r2 {
            m = m.fix_r2(r2)?;
        }
        return Ok(m);
    }
    let pois = poisson_start(data, opts)?;
    if opts.family == Family::Poisson {
        return Ok(pois);
    }
    let r1 = opts.fix_r1.unwrap_or(0.5);
    let r2 = opts.fix_r2.unwrap_or(0.5);
    let chain = ChainParams::new(r1, r2)?;
    // Keep the starting mean at the Poisson fit: E = mu0 r1 / (r1 + r2).
    let alpha = pois.alpha * (r1 + r2) / r1.max(1e-6);
    let mut m = RegressionModel::new(Family::BPoisson, alpha, pois.beta, chain)?;
    if let Some(r1) = opts.fix_r1 {
        m = m.fix_r1(r1)?;
    }
    if let Some(r2) = opts.fix_r2 {
        m = m.fix_r2(r2)?;
    }
    Ok(m)
}

/// Maximum likelihood over the free parameters from several jittered starts.
///
/// Optimization runs on centered and scaled covariates with `ln alpha` and
/// log-odds chain parameters; the result is mapped back to the natural scale.
pub fn fit(data: &Dataset, opts: &FitOptions) -> Result<FitResult> {
    let data = match &opts.covariates {
        Some(cols) => data.select(cols)?,
        None => data.clone(),
    };
    let data = &data;
    if data.n_covariates() > 0 && data.sd_y() == 0.0 {
        return Err(Error::Data("response has zero variance".into()));
    }
    let scaling = Scaling::of(data);
    let internal = scaling.apply(data)?;
    let mut start_opts = opts.clone();
    start_opts.start = opts.start.as_ref().map(|m| scaling.to_internal(m));
    let base = initial_model(&internal, &start_opts)?;
    if base.beta.len() != data.n_covariates() {
        return Err(Error::Data("start model does not match the covariates".into()));
    }
    let f = objective(&base, &internal);
    let theta0 = base.to_free();
    let optimizer = optimizer_options(opts);
    let mut warnings = Vec::new();
    if !f(&theta0).is_finite() {
        return Err(Error::NonFinite("likelihood at the starting values"));
    }
    let mut best: Option<Minimum> = None;
    for start in 0..opts.starts.max(1) {
        let x0 = if start == 0 {
            theta0.clone()
        } else {
            match jittered_start(&f, &theta0, opts, start) {
                Some(x0) => x0,
                None => {
                    warnings.push(format!("start {start}: no finite jittered point; skipped"));
                    continue;
                }
            }
        };
        let mut m = bfgs(&f, &x0, &optimizer);
        if !m.converged {
            m = newton_polish(&f, m, &optimizer, opts.hessian_step, 10);
        }
        if best.as_ref().map_or(true, |b| m.f < b.f) {
            best = Some(m);
        }
    }
    let best = best.expect("the unjittered start always runs");
    let model = scaling.to_natural(&base.with_free(&best.x)?);
    let lik = likelihood(&model, data)?;
    if lik.floored > 0 {
        warnings.push(format!("{} observations floored at {PROB_FLOOR:e}", lik.floored));
    }
    if !best.converged {
        warnings.push(format!("gradient norm {:e} above tolerance", best.grad_norm));
    }
    let jac = scaling.jacobian(&model);
    let (se, covariance) = match standard_errors(&jac, &f, &best.x, opts.hessian_step) {
        Some((se, cov)) => (Some(se), Some(cov)),
        None => {
            warnings.push("Hessian is singular or indefinite; standard errors unset".into());
            (None, None)
        }
    };
    let free_params = model.free_params();
    Ok(FitResult {
        param_names: model.param_names(data),
        neg_loglik: lik.neg_loglik,
        aic: aic(free_params, lik.neg_loglik),
        free_params,
        n_obs: data.len(),
        se,
        covariance,
        converged: best.converged,
        iterations: best.iterations,
        grad_norm: best.grad_norm,
        floored: lik.floored,
        warnings,
        model,
    })
}

/// Gaussian jitter around `theta0`, halving the spread until the
/// likelihood is finite.
fn jittered_start(f: &impl Fn(&[f64]) -> f64, theta0: &[f64], opts: &FitOptions, start: usize) -> Option<Vec<f64>> {
    let mut rng = RandomSource::with_stream(opts.seed, start as u64);
    let mut spread = opts.jitter;
    for _ in 0..8 {
        let x0: Vec<f64> = theta0
            .iter()
            .map(|v| v + spread * standard_normal(&mut rng))
            .collect();
        if f(&x0).is_finite() {
            return Some(x0);
        }
        spread *= 0.5;
    }
    None
}

fn standard_normal(rng: &mut RandomSource) -> f64 {
    use rand_distr::{Distribution, StandardNormal};
    StandardNormal.sample(rng.rng())
}

type Covariance = Vec<Vec<f64>>;

/// Delta-method covariance `J H^-1 J'` from the Hessian on the optimizer's
/// scale.
fn standard_errors(
    jac: &DMatrix<f64>,
    f: &impl Fn(&[f64]) -> f64,
    theta: &[f64],
    step: f64,
) -> Option<(Vec<f64>, Covariance)> {
    let h = hessian(f, theta, step);
    if h.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let inv = h.try_inverse()?;
    if (0..inv.nrows()).any(|j| !(inv[(j, j)] > 0.0)) {
        return None;
    }
    let cov = jac * inv * jac.transpose();
    let n = cov.nrows();
    let se = (0..n).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
    let rows = (0..n).map(|r| (0..n).map(|c| cov[(r, c)]).collect()).collect();
    Some((se, rows))
}
