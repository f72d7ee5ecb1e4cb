//! Quasi-Newton minimization with finite-difference derivatives.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerOptions {
    /// Converged once every central-difference partial is below this.
    pub grad_tol: f64,
    /// Converged once an iteration also lowers the objective by less than
    /// this.
    pub f_tol: f64,
    pub max_iter: usize,
    /// A positive-definite Newton step below this (relative) also counts as
    /// converged, since finite-difference gradients bottom out near `1e-7`.
    pub x_tol: f64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-6,
            f_tol: 1e-10,
            max_iter: 500,
            x_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

const STALL_DECREASE: f64 = 1e-15;
const STALL_ITERATIONS: usize = 10;

fn step_size(x: f64) -> f64 {
    1e-5 * (1.0 + x.abs())
}

/// Central-difference gradient.
pub fn gradient(f: &impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|j| {
            let h = step_size(x[j]);
            probe[j] = x[j] + h;
            let up = f(&probe);
            probe[j] = x[j] - h;
            let down = f(&probe);
            probe[j] = x[j];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Central-difference Hessian with step `h_j = rel (1 + |x_j|)`.
pub fn hessian(f: &impl Fn(&[f64]) -> f64, x: &[f64], rel: f64) -> DMatrix<f64> {
    let k = x.len();
    let h: Vec<f64> = x.iter().map(|v| rel * (1.0 + v.abs())).collect();
    let f0 = f(x);
    let mut probe = x.to_vec();
    let mut eval = |shifts: &[(usize, f64)]| {
        for &(j, s) in shifts {
            probe[j] += s;
        }
        let v = f(&probe);
        for &(j, s) in shifts {
            probe[j] -= s;
        }
        v
    };
    let mut hess = DMatrix::zeros(k, k);
    for i in 0..k {
        let up = eval(&[(i, h[i])]);
        let down = eval(&[(i, -h[i])]);
        hess[(i, i)] = (up - 2.0 * f0 + down) / (h[i] * h[i]);
        for j in 0..i {
            let pp = eval(&[(i, h[i]), (j, h[j])]);
            let pm = eval(&[(i, h[i]), (j, -h[j])]);
            let mp = eval(&[(i, -h[i]), (j, h[j])]);
            let mm = eval(&[(i, -h[i]), (j, -h[j])]);
            let v = (pp - pm - mp + mm) / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// BFGS with a backtracking Armijo line search. Non-finite objective values
/// are treated as +inf, which keeps the search inside the feasible region.
pub fn bfgs(f: impl Fn(&[f64]) -> f64, x0: &[f64], opts: &OptimizerOptions) -> Minimum {
    let f = |x: &[f64]| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let k = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let mut fx = f(x.as_slice());
    let mut g = DVector::from_vec(gradient(&f, x.as_slice()));
    let mut inv_h = DMatrix::<f64>::identity(k, k);
    let mut iterations = 0;
    let mut small_steps = 0;

    while iterations < opts.max_iter {
        if max_abs(g.as_slice()) < opts.grad_tol {
            return Minimum {
                grad_norm: max_abs(g.as_slice()),
                x: x.as_slice().to_vec(),
                f: fx,
                iterations,
                converged: true,
            };
        }
        iterations += 1;
        let mut dir = -(&inv_h * &g);
        let mut slope = g.dot(&dir);
        if slope >= 0.0 {
            inv_h = DMatrix::identity(k, k);
            dir = -g.clone();
            slope = g.dot(&dir);
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &x + &dir * t;
            let ft = f(trial.as_slice());
            if ft <= fx + 1e-4 * t * slope {
                accepted = Some((trial, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            if inv_h != DMatrix::identity(k, k) {
                inv_h = DMatrix::identity(k, k);
                continue;
            }
            break;
        };
        let g_new = DVector::from_vec(gradient(&f, x_new.as_slice()));
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let eye = DMatrix::<f64>::identity(k, k);
            let left = &eye - (&s * y.transpose()) * rho;
            let right = &eye - (&y * s.transpose()) * rho;
            inv_h = &left * &inv_h * &right + (&s * s.transpose()) * rho;
        }
        let decrease = fx - f_new;
        x = x_new;
        fx = f_new;
        g = g_new;
        if decrease < opts.f_tol && max_abs(g.as_slice()) < opts.grad_tol {
            break;
        }
        // Stalled: progress at rounding level for many iterations.
        if decrease < STALL_DECREASE * (1.0 + fx.abs()) {
            small_steps += 1;
            if small_steps >= STALL_ITERATIONS {
                break;
            }
        } else {
            small_steps = 0;
        }
    }
    let grad_norm = max_abs(g.as_slice());
    Minimum {
        x: x.as_slice().to_vec(),
        f: fx,
        grad_norm,
        iterations,
        converged: grad_norm < opts.grad_tol,
    }
}

/// Damped Newton steps with a finite-difference Hessian, for finishing a
/// quasi-Newton run that stalled on an ill-conditioned ridge.
pub fn newton_polish(
    f: impl Fn(&[f64]) -> f64,
    start: Minimum,
    opts: &OptimizerOptions,
    rel: f64,
    max_steps: usize,
) -> Minimum {
    let f = |x: &[f64]| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut m = start;
    for _ in 0..max_steps {
        if m.grad_norm < opts.grad_tol {
            break;
        }
        let g = DVector::from_vec(gradient(&f, &m.x));
        let h = hessian(&f, &m.x, rel);
        let Some(dir) = h.cholesky().map(|c| -c.solve(&g)) else {
            break;
        };
        // At the optimum up to the gradient's own noise.
        if dir.iter().zip(&m.x).all(|(d, x)| d.abs() < opts.x_tol * (1.0 + x.abs())) {
            m.converged = true;
            return m;
        }
        let x = DVector::from_column_slice(&m.x);
        let mut t = 1.0;
        let mut next = None;
        for _ in 0..30 {
            let trial = &x + &dir * t;
            let ft = f(trial.as_slice());
            if ft <= m.f {
                next = Some((trial, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((x_new, f_new)) = next else {
            break;
        };
        m.iterations += 1;
        m.x = x_new.as_slice().to_vec();
        m.f = f_new;
        m.grad_norm = max_abs(&gradient(&f, &m.x));
    }
    m.converged = m.grad_norm < opts.grad_tol;
    m
}

/// Nelder-Mead simplex search, used for low-dimensional, possibly noisy
/// objectives such as the dispersion-bound refinement.
pub fn nelder_mead(
    f: impl Fn(&[f64]) -> f64,
    x0: &[f64],
    scale: f64,
    max_iter: usize,
    tol: f64,
) -> (Vec<f64>, f64) {
    let k = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = (0..=k)
        .map(|j| {
            let mut v = x0.to_vec();
            if j > 0 {
                v[j - 1] += scale;
            }
            let fv = f(&v);
            (v, fv)
        })
        .collect();
    let point = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
    };
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if (simplex[k].1 - simplex[0].1).abs() <= tol * (1.0 + simplex[0].1.abs()) {
            break;
        }
        let centroid: Vec<f64> = (0..k)
            .map(|d| simplex[..k].iter().map(|(v, _)| v[d]).sum::<f64>() / k as f64)
            .collect();
        let worst = simplex[k].clone();
        let refl = point(&centroid, &worst.0, -1.0);
        let fr = f(&refl);
        if fr < simplex[0].1 {
            let exp = point(&centroid, &worst.0, -2.0);
            let fe = f(&exp);
            simplex[k] = if fe < fr { (exp, fe) } else { (refl, fr) };
        } else if fr < simplex[k - 1].1 {
            simplex[k] = (refl, fr);
        } else {
            let con = point(&centroid, &worst.0, 0.5);
            let fc = f(&con);
            if fc < worst.1 {
                simplex[k] = (con, fc);
            } else {
                let best = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let v = point(&best, &entry.0, 0.5);
                    let fv = f(&v);
                    *entry = (v, fv);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0)
}
