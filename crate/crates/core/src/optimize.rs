//! Derivative-free minimizers used by the fitting routines.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    /// Convergence when every vertex is within this distance of the best, per coordinate.
    pub x_tol: f64,
    /// ... and the objective spread is below this.
    pub f_tol: f64,
    pub max_iter: usize,
    /// Initial simplex step per coordinate.
    pub step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            x_tol: 1e-6,
            f_tol: 1e-10,
            max_iter: 5000,
            step: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

/// Nelder–Mead simplex minimization. Infeasible points should evaluate to +∞.
/// Restarts once from the reported optimum to avoid premature collapse.
pub fn nelder_mead<F>(f: F, start: &[f64], opts: &NelderMeadOptions) -> Result<Minimum>
where
    F: Fn(&[f64]) -> f64,
{
    let first = nelder_mead_once(&f, start, opts)?;
    let second = nelder_mead_once(&f, &first.x, opts)?;
    let iterations = first.iterations + second.iterations;
    let best = if second.value <= first.value { second } else { first };
    Ok(Minimum { iterations, ..best })
}

fn nelder_mead_once<F>(f: &F, start: &[f64], opts: &NelderMeadOptions) -> Result<Minimum>
where
    F: Fn(&[f64]) -> f64,
{
    let d = start.len();
    let f0 = f(start);
    if !f0.is_finite() {
        return Err(Error::NonConvergence {
            iterations: 0,
            spread: f64::INFINITY,
            context: format!("objective is not finite at the start point {start:?}"),
        });
    }
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(start.to_vec(), f0)];
    for i in 0..d {
        let mut p = start.to_vec();
        let h = if p[i] != 0.0 { opts.step * p[i].abs().max(1.0) } else { opts.step };
        p[i] += h;
        let mut v = f(&p);
        if !v.is_finite() {
            p[i] = start[i] - h;
            v = f(&p);
        }
        simplex.push((p, v));
    }

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut iter = 0;
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let x_spread = simplex[1..]
            .iter()
            .flat_map(|(p, _)| p.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        let f_spread = (simplex[d].1 - simplex[0].1).abs();
        if x_spread <= opts.x_tol && f_spread <= opts.f_tol.max(opts.f_tol * simplex[0].1.abs()) {
            let (x, value) = simplex.swap_remove(0);
            return Ok(Minimum { x, value, iterations: iter });
        }
        if iter >= opts.max_iter {
            return Err(Error::NonConvergence {
                iterations: iter,
                spread: x_spread,
                context: format!("best point {:?} value {}", simplex[0].0, simplex[0].1),
            });
        }
        iter += 1;

        let centroid: Vec<f64> = (0..d)
            .map(|j| simplex[..d].iter().map(|(p, _)| p[j]).sum::<f64>() / d as f64)
            .collect();
        let toward = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[d].0)
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };
        let xr = toward(-alpha);
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe = toward(-gamma);
            let fe = f(&xe);
            simplex[d] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[d - 1].1 {
            simplex[d] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[d].1 {
                let xc = toward(-rho);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = toward(rho);
                let fc = f(&xc);
                (xc, fc)
            };
            if fc < simplex[d].1.min(fr) {
                simplex[d] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for (p, v) in simplex.iter_mut().skip(1) {
                    for (pj, bj) in p.iter_mut().zip(&best) {
                        *pj = bj + sigma * (*pj - bj);
                    }
                    *v = f(p);
                }
            }
        }
    }
}

/// Brent's method for a unimodal function on [a, b]. Returns (argmin, min).
pub fn brent_minimize<F>(f: F, mut a: f64, mut b: f64, tol: f64, max_iter: usize) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    const GOLD: f64 = 0.381_966_011_250_105_1;
    let mut x = a + GOLD * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let (mut d, mut e) = (0.0f64, 0.0f64);
    for _ in 0..max_iter {
        let m = 0.5 * (a + b);
        let tol1 = tol * x.abs() + 1e-12;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            if p.abs() < (0.5 * q * e).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if x < m { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x < m { b - x } else { a - x };
            d = GOLD * e;
        }
        let u = if d.abs() >= tol1 { x + d } else if d > 0.0 { x + tol1 } else { x - tol1 };
        let fu = f(u);
        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}
