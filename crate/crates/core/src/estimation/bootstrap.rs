use super::lognormal::{fit_truncated_logs, LognormalFitOptions};
use super::powerlaw::{fit_sorted, PowerLawFitOptions};
use super::{FitKind, FitParams, FitReport};
use crate::error::{Error, Result};
use crate::par;
use crate::sample::DurationSample;
use crate::special::{ln_normal_sf, normal_cdf, normal_quantile, normal_upper_quantile};
use crate::synthesis::{sorted_exponentials, sorted_uniforms, SeededGenerator};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

pub const MIN_BOOTSTRAP_REPS: usize = 100;

/// Result of a bootstrap goodness-of-fit run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOutcome {
    /// Fraction of replicates whose KS distance is ≥ the observed one.
    pub p_value: f64,
    pub reps: usize,
    pub exceed: usize,
    /// Replicates whose refit failed; excluded from the fraction.
    pub failed: usize,
    /// Nominal precision 1/(2√reps).
    pub precision: f64,
}

/// Semi-parametric bootstrap p-value of a continuous fit.
///
/// Power-law fits with a scanned xmin draw each synthetic point from the
/// fitted tail with probability n_tail/n and from the empirical body
/// otherwise, then repeat the whole scan. Fits with a fixed cutoff only
/// resample the tail. A closed-form lognormal fit is bootstrapped fully
/// parametrically.
pub fn bootstrap_pvalue(s: &DurationSample, fit: &FitReport, reps: usize, g: &SeededGenerator) -> Result<BootstrapOutcome> {
    bootstrap_pvalue_with(s, fit, reps, g, &PowerLawFitOptions::default())
}

/// As [`bootstrap_pvalue`], refitting power-law replicates with `opts`
/// (its `xmin` field is ignored).
pub fn bootstrap_pvalue_with(
    s: &DurationSample,
    fit: &FitReport,
    reps: usize,
    g: &SeededGenerator,
    opts: &PowerLawFitOptions,
) -> Result<BootstrapOutcome> {
    if reps < MIN_BOOTSTRAP_REPS {
        return Err(Error::param(format!("bootstrap needs at least {MIN_BOOTSTRAP_REPS} reps, got {reps}")));
    }
    if fit.kind != FitKind::Continuous {
        return Err(Error::param("binned fits are bootstrapped with bootstrap_pvalue_binned"));
    }
    if fit.n_total != s.len() {
        return Err(Error::param(format!(
            "fit was made on {} points but the sample has {}",
            fit.n_total,
            s.len()
        )));
    }
    let logs = s.ln_values();
    let replicate: Box<dyn Fn(&mut ChaCha20Rng) -> Result<f64> + Sync> = match fit.params {
        FitParams::PowerLaw { gamma, tau } if fit.xmin_scanned => {
            let start = s.values().partition_point(|&v| v < tau);
            let body = &s.values()[..start];
            let body_logs = &logs[..start];
            let n = s.len();
            let q = fit.n_tail as f64 / n as f64;
            let binom = Binomial::new(n as u64, q).map_err(|e| Error::param(e.to_string()))?;
            let opts = PowerLawFitOptions { xmin: None, ..opts.clone() };
            let ln_tau = tau.ln();
            Box::new(move |rng| {
                let mut n_tail = binom.sample(rng) as usize;
                if body.is_empty() {
                    n_tail = n;
                }
                let n_body = n - n_tail;
                let mut lv = Vec::with_capacity(n);
                let mut v = Vec::with_capacity(n);
                for u in sorted_uniforms(n_body, rng) {
                    let i = ((u * body.len() as f64) as usize).min(body.len() - 1);
                    v.push(body[i]);
                    lv.push(body_logs[i]);
                }
                for e in sorted_exponentials(n_tail, gamma - 1.0, rng) {
                    let y = ln_tau + e;
                    lv.push(y);
                    v.push(y.exp());
                }
                fit_sorted(&v, &lv, &opts).map(|f| f.ks)
            })
        }
        FitParams::PowerLaw { gamma, tau } => {
            let n_tail = fit.n_tail;
            let ln_tau = tau.ln();
            let opts = PowerLawFitOptions { xmin: Some(tau), ..opts.clone() };
            Box::new(move |rng| {
                let lv: Vec<f64> = sorted_exponentials(n_tail, gamma - 1.0, rng)
                    .into_iter()
                    .map(|e| ln_tau + e)
                    .collect();
                let v: Vec<f64> = lv.iter().map(|y| y.exp()).collect();
                fit_sorted(&v, &lv, &opts).map(|f| f.ks)
            })
        }
        FitParams::Lognormal { mu, sigma } => match fit.xmin {
            None => {
                let n = s.len();
                Box::new(move |rng| {
                    let lv: Vec<f64> = sorted_uniforms(n, rng)
                        .into_iter()
                        .map(|u| mu + sigma * normal_quantile(u))
                        .collect();
                    closed_form_ks(&lv)
                })
            }
            Some(xmin) => {
                let n_tail = fit.n_tail;
                let ln_xmin = xmin.ln();
                let sf0 = ln_normal_sf((ln_xmin - mu) / sigma).exp();
                let lopts = LognormalFitOptions::default();
                Box::new(move |rng| {
                    // descending uniforms give ascending values through the upper quantile
                    let lv: Vec<f64> = sorted_uniforms(n_tail, rng)
                        .into_iter()
                        .rev()
                        .map(|u| (mu + sigma * normal_upper_quantile(u * sf0)).max(ln_xmin))
                        .collect();
                    let (m, sg, _) = fit_truncated_logs(&lv, ln_xmin, &lopts)?;
                    let l0 = ln_normal_sf((ln_xmin - m) / sg);
                    Ok(super::ks_distance(&lv, |y| super::lognormal::truncated_cdf_log(y, m, sg, l0)))
                })
            }
        },
    };

    let observed = fit.ks;
    let outcomes = par::map_range(reps, |r| {
        let mut rng = g.derive(r as u64).stream(0);
        replicate(&mut rng)
    });
    let mut exceed = 0;
    let mut failed = 0;
    for o in &outcomes {
        match o {
            Ok(ks) if *ks >= observed => exceed += 1,
            Ok(_) => {}
            Err(_) => failed += 1,
        }
    }
    let done = reps - failed;
    if done == 0 {
        return Err(outcomes.into_iter().find_map(|o| o.err()).unwrap_or(Error::EmptySample));
    }
    Ok(BootstrapOutcome {
        p_value: exceed as f64 / done as f64,
        reps,
        exceed,
        failed,
        precision: 1.0 / (2.0 * (reps as f64).sqrt()),
    })
}

fn closed_form_ks(sorted_logs: &[f64]) -> Result<f64> {
    let (mu, ss) = super::lognormal::mean_and_ss(sorted_logs);
    let sigma = (ss / sorted_logs.len() as f64).sqrt();
    if !(sigma > 0.0) {
        return Err(Error::DegenerateSample("bootstrap replicate collapsed".into()));
    }
    Ok(super::ks_distance(sorted_logs, |y| normal_cdf((y - mu) / sigma)))
}
