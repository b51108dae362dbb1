use super::lognormal::LognormalFitOptions;
use super::{fit_lognormal_with, fit_powerlaw_tail, FitReport, PowerLawFitOptions};
use crate::error::{Error, Result};
use crate::sample::DurationSample;
use crate::special::{ln_normal_sf, LN_SQRT_2PI};
use serde::{Deserialize, Serialize};
use libm::erfc;
use std::fmt;

pub const DEFAULT_VERDICT_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    PowerLaw,
    Lognormal,
    Undecided,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::PowerLaw => "powerlaw",
            Verdict::Lognormal => "lognormal",
            Verdict::Undecided => "undecided",
        })
    }
}

/// Log-likelihood ratio test between the two families on a common tail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// Σ [ln f_PL(x_i) − ln f_LN(x_i)]; positive favors the power-law.
    pub lr: f64,
    /// lr / (σ_ℓ √n_tail), σ_ℓ the standard deviation of the per-point terms.
    pub normalized: f64,
    /// Two-sided probability of an |lr| this large if the families fit equally well.
    pub p_value: f64,
    pub verdict: Verdict,
    pub threshold: f64,
    pub n_tail: usize,
    pub xmin: Option<f64>,
    pub powerlaw: Option<FitReport>,
    pub lognormal: Option<FitReport>,
}

impl ComparisonReport {
    /// The verdict under a different significance threshold.
    pub fn verdict_at(&self, threshold: f64) -> Verdict {
        verdict(self.lr, self.p_value, threshold)
    }
}

fn verdict(lr: f64, p: f64, threshold: f64) -> Verdict {
    if p < threshold && lr > 0.0 {
        Verdict::PowerLaw
    } else if p < threshold && lr < 0.0 {
        Verdict::Lognormal
    } else {
        Verdict::Undecided
    }
}

/// Likelihood-ratio test from per-point log densities of the two models.
pub fn compare_log_densities(ln_pl: &[f64], ln_ln: &[f64], threshold: f64) -> Result<ComparisonReport> {
    if ln_pl.len() != ln_ln.len() {
        return Err(Error::param("log-density vectors differ in length"));
    }
    let n = ln_pl.len();
    if n < 2 {
        return Err(Error::TooFewPoints { got: n, need: 2 });
    }
    let terms: Vec<f64> = ln_pl.iter().zip(ln_ln).map(|(a, b)| a - b).collect();
    let nf = n as f64;
    let lr: f64 = terms.iter().sum();
    let mean = lr / nf;
    let var = terms.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / nf;
    let sd = var.sqrt();
    let (normalized, p_value) = if sd > 0.0 {
        let z = lr / (sd * nf.sqrt());
        (z, erfc(z.abs() / std::f64::consts::SQRT_2))
    } else if lr == 0.0 {
        (0.0, 1.0)
    } else {
        (lr.signum() * f64::INFINITY, 0.0)
    };
    Ok(ComparisonReport {
        lr,
        normalized,
        p_value,
        verdict: verdict(lr, p_value, threshold),
        threshold,
        n_tail: n,
        xmin: None,
        powerlaw: None,
        lognormal: None,
    })
}

/// Fits both families on the tail x ≥ xmin and compares them.
pub fn compare_families(s: &DurationSample, xmin: f64) -> Result<ComparisonReport> {
    compare_families_with(s, xmin, DEFAULT_VERDICT_THRESHOLD, &LognormalFitOptions::default())
}

pub fn compare_families_with(
    s: &DurationSample,
    xmin: f64,
    threshold: f64,
    lopts: &LognormalFitOptions,
) -> Result<ComparisonReport> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::param(format!("verdict threshold must lie in (0, 1), got {threshold}")));
    }
    let tail = s.tail(xmin);
    if tail.len() < 2 {
        return Err(Error::TooFewPoints { got: tail.len(), need: 2 });
    }
    let pl = fit_powerlaw_tail(s, &PowerLawFitOptions::with_xmin(xmin))?;
    let ln = fit_lognormal_with(s, Some(xmin), lopts)?;
    let gamma = pl.gamma().expect("power-law fit");
    let (mu, sigma) = ln.lognormal_params().expect("lognormal fit");

    let ln_xmin = xmin.ln();
    let beta = gamma - 1.0;
    let pl_const = beta.ln() + beta * ln_xmin;
    let ln_const = -sigma.ln() - LN_SQRT_2PI - ln_normal_sf((ln_xmin - mu) / sigma);
    let logs: Vec<f64> = tail.iter().map(|x| x.ln()).collect();
    let a: Vec<f64> = logs.iter().map(|y| pl_const - gamma * y).collect();
    let b: Vec<f64> = logs
        .iter()
        .map(|y| {
            let z = (y - mu) / sigma;
            ln_const - 0.5 * z * z - y
        })
        .collect();
    let mut report = compare_log_densities(&a, &b, threshold)?;
    report.xmin = Some(xmin);
    report.powerlaw = Some(pl);
    report.lognormal = Some(ln);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{LognormalModel, PowerLawModel};
    use crate::synthesis::{sample_lognormal, sample_powerlaw, SeededGenerator};

    #[test]
    fn identical_densities_are_undecided() {
        let d = [-1.0, -2.0, -0.5];
        let r = compare_log_densities(&d, &d, 0.1).unwrap();
        assert_eq!(r.lr, 0.0);
        assert_eq!(r.verdict, Verdict::Undecided);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn verdict_follows_sign_and_threshold() {
        assert_eq!(verdict(5.0, 0.01, 0.1), Verdict::PowerLaw);
        assert_eq!(verdict(-5.0, 0.01, 0.1), Verdict::Lognormal);
        assert_eq!(verdict(-5.0, 0.2, 0.1), Verdict::Undecided);
        assert_eq!(verdict(0.0, 0.0, 0.1), Verdict::Undecided);
    }

    #[test]
    fn normalized_statistic_hand_computed() {
        // terms 1, 3 → lr 4, mean 2, σ 1, normalized 4/√2
        let r = compare_log_densities(&[1.0, 3.0], &[0.0, 0.0], 0.1).unwrap();
        assert!((r.normalized - 4.0 / 2f64.sqrt()).abs() < 1e-14);
        assert!((r.p_value - erfc(2.0)).abs() < 1e-15);
    }

    #[test]
    fn per_point_terms_match_model_densities() {
        let m = LognormalModel::new(3.0, 1.5).unwrap();
        let s = sample_lognormal(&m, 3000, &SeededGenerator::new(8)).unwrap();
        let xmin = 40.0;
        let r = compare_families(&s, xmin).unwrap();
        let pl = PowerLawModel::new(r.powerlaw.as_ref().unwrap().gamma().unwrap(), xmin).unwrap();
        let (mu, sg) = r.lognormal.as_ref().unwrap().lognormal_params().unwrap();
        let lnm = LognormalModel::new(mu, sg).unwrap();
        let direct: f64 = s
            .tail(xmin)
            .iter()
            .map(|&x| pl.ln_pdf(x).unwrap() - (lnm.ln_pdf(x).unwrap() - lnm.sf(xmin).ln()))
            .sum();
        assert!((direct - r.lr).abs() < 1e-8 * direct.abs().max(1.0));
        // the two likelihoods in the report combine to the same ratio
        let diff = r.powerlaw.unwrap().loglik - r.lognormal.unwrap().loglik;
        assert!((diff - r.lr).abs() < 1e-8 * diff.abs().max(1.0));
    }

    #[test]
    fn signs_on_generated_tails() {
        let ln = sample_lognormal(&LognormalModel::new(10.45, 2.75).unwrap(), 20_000, &SeededGenerator::new(1)).unwrap();
        let r = compare_families(&ln, 20_000.0).unwrap();
        assert!(r.lr < 0.0, "{r:?}");
        let pl = sample_powerlaw(&PowerLawModel::new(1.53, 59.0).unwrap(), 20_000, &SeededGenerator::new(1)).unwrap();
        let r = compare_families(&pl, 59.0).unwrap();
        assert!(r.lr > 0.0, "{r:?}");
    }

    #[test]
    fn small_tail_is_rejected() {
        let s = DurationSample::from_seconds(vec![1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(compare_families(&s, 2.5), Err(Error::TooFewPoints { .. })));
    }
}
