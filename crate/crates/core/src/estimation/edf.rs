use super::lognormal::mean_and_ss;
use crate::error::{Error, Result};
use crate::sample::DurationSample;
use crate::special::normal_cdf;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Right-continuous empirical distribution function.
#[derive(Debug, Clone, PartialEq)]
pub struct Edf {
    sorted: Vec<f64>,
}

impl Edf {
    pub fn new(values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self { sorted }
    }

    pub fn from_sample(s: &DurationSample) -> Self {
        Self {
            sorted: s.values().to_vec(),
        }
    }

    /// (# values ≤ t) / n.
    pub fn eval(&self, t: f64) -> f64 {
        if self.sorted.is_empty() {
            return 0.0;
        }
        self.sorted.partition_point(|&v| v <= t) as f64 / self.sorted.len() as f64
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdfFitOptions {
    /// Largest |EDF estimate − MLE| in μ or σ still counted as agreement.
    pub agreement_tolerance: f64,
    /// Samples smaller than this are flagged low-confidence.
    pub min_points: usize,
    pub max_iter: usize,
}

impl Default for EdfFitOptions {
    fn default() -> Self {
        Self {
            agreement_tolerance: 0.05,
            min_points: 20,
            max_iter: 200,
        }
    }
}

/// Least-squares normal fit to the EDF of ln(values), next to the closed-form MLE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdfNormalFit {
    pub mu: f64,
    pub sigma: f64,
    pub mle_mu: f64,
    pub mle_sigma: f64,
    /// Residual sum of squares at the optimum.
    pub rss: f64,
    pub iterations: usize,
    pub low_confidence: bool,
    /// The EDF and MLE estimates disagree beyond the tolerance.
    pub misfit: bool,
}

pub fn fit_edf_normal(s: &DurationSample, opts: &EdfFitOptions) -> Result<EdfNormalFit> {
    let n = s.len();
    if n < 2 {
        return Err(Error::TooFewPoints { got: n, need: 2 });
    }
    let y = s.ln_values();
    let nf = n as f64;
    // EDF height at each point, ties sharing the top of their jump
    let mut f = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && y[j] == y[i] {
            j += 1;
        }
        for v in &mut f[i..j] {
            *v = j as f64 / nf;
        }
        i = j;
    }
    let (mle_mu, ss) = mean_and_ss(&y);
    let mle_sigma = (ss / nf).sqrt();
    if mle_sigma == 0.0 {
        return Ok(EdfNormalFit {
            mu: mle_mu,
            sigma: 0.0,
            mle_mu,
            mle_sigma,
            rss: 0.0,
            iterations: 0,
            low_confidence: true,
            misfit: false,
        });
    }
    let ln_sigma_floor = (mle_sigma * 1e-3).ln();

    let rss_at = |mu: f64, ls: f64| -> f64 {
        let sg = ls.exp();
        y.iter()
            .zip(&f)
            .map(|(yi, fi)| {
                let r = normal_cdf((yi - mu) / sg) - fi;
                r * r
            })
            .sum()
    };

    // Levenberg–Marquardt on (μ, ln σ)
    let (mut mu, mut ls) = (mle_mu, mle_sigma.ln());
    let mut rss = rss_at(mu, ls);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let inv_sqrt_2pi = 1.0 / (2.0 * PI).sqrt();
    while iterations < opts.max_iter {
        iterations += 1;
        let sg = ls.exp();
        let (mut a11, mut a12, mut a22, mut g1, mut g2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (yi, fi) in y.iter().zip(&f) {
            let z = (yi - mu) / sg;
            let r = normal_cdf(z) - fi;
            let phi = inv_sqrt_2pi * (-0.5 * z * z).exp();
            let j1 = -phi / sg;
            let j2 = -phi * z;
            a11 += j1 * j1;
            a12 += j1 * j2;
            a22 += j2 * j2;
            g1 += j1 * r;
            g2 += j2 * r;
        }
        let mut accepted = false;
        while lambda < 1e12 {
            let (b11, b22) = (a11 * (1.0 + lambda), a22 * (1.0 + lambda));
            let det = b11 * b22 - a12 * a12;
            if !(det > 0.0) {
                lambda *= 10.0;
                continue;
            }
            let d1 = -(b22 * g1 - a12 * g2) / det;
            let d2 = -(b11 * g2 - a12 * g1) / det;
            let (nmu, nls) = (mu + d1, (ls + d2).max(ln_sigma_floor));
            let nrss = rss_at(nmu, nls);
            if nrss <= rss {
                let step = (nmu - mu).abs().max((nls - ls).abs());
                mu = nmu;
                ls = nls;
                let improvement = rss - nrss;
                rss = nrss;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if step < 1e-10 || improvement <= 1e-15 * rss.max(1e-300) {
                    lambda = f64::INFINITY;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted || lambda.is_infinite() {
            break;
        }
    }
    let sigma = ls.exp();
    let tol = opts.agreement_tolerance;
    Ok(EdfNormalFit {
        mu,
        sigma,
        mle_mu,
        mle_sigma,
        rss,
        iterations,
        low_confidence: n < opts.min_points,
        misfit: (mu - mle_mu).abs() > tol || (sigma - mle_sigma).abs() > tol,
    })
}
