//! Fitting both families, goodness of fit, and discrimination between them.
//!
//! * [`fit_powerlaw_tail`]: continuous power-law MLE with the tail cutoff
//!   chosen by minimizing the KS distance between tail EDF and fitted cdf.
//! * [`fit_lognormal`]: closed-form MLE, or the MLE of the lognormal
//!   truncated to [xmin, ∞) when a cutoff is given.
//! * [`fit_binned`]: multinomial likelihood over histogram bins, for data a
//!   provider has already quantized.
//! * [`bootstrap_pvalue`]: semi-parametric bootstrap of the KS statistic.
//! * [`compare_families`]: normalized log-likelihood ratio with a sign test.

mod binned;
mod bootstrap;
mod compare;
mod edf;
mod lognormal;
mod powerlaw;
mod report;

pub use binned::{bootstrap_pvalue_binned, fit_binned, fit_binned_data, BinnedData, BinnedFitOptions};
pub use bootstrap::{bootstrap_pvalue, bootstrap_pvalue_with, BootstrapOutcome, MIN_BOOTSTRAP_REPS};
pub use compare::{compare_families, compare_families_with, compare_log_densities, ComparisonReport, Verdict, DEFAULT_VERDICT_THRESHOLD};
pub use edf::{fit_edf_normal, Edf, EdfNormalFit, EdfFitOptions};
pub use lognormal::{fit_lognormal, fit_lognormal_with, LognormalFitOptions};
pub use powerlaw::{fit_powerlaw_tail, PowerLawFitOptions};
pub use report::{render_csv, render_markdown, Table3Row, ROW_KEYS, TABLE_COLUMNS};

use crate::distributions::{LognormalModel, Model, PowerLawModel};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Which model family a fit belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    PowerLaw,
    Lognormal,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::PowerLaw => "powerlaw",
            Family::Lognormal => "lognormal",
        })
    }
}

/// Fitted parameters of either family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FitParams {
    PowerLaw { gamma: f64, tau: f64 },
    Lognormal { mu: f64, sigma: f64 },
}

/// How the data entered the likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitKind {
    /// Raw values, continuous density.
    Continuous,
    /// Bin counts, multinomial likelihood.
    Binned,
}

/// Outcome of one fit: parameters, tail, KS distance and likelihood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub family: Family,
    pub params: FitParams,
    pub kind: FitKind,
    /// Tail cutoff (τ̂ for the power-law; the truncation point of a tail lognormal).
    pub xmin: Option<f64>,
    /// Whether xmin was chosen by the KS scan (as opposed to given).
    pub xmin_scanned: bool,
    pub n_tail: usize,
    pub n_total: usize,
    pub ks: f64,
    pub loglik: f64,
    /// Analytic standard error (γ̂−1)/√n_tail of a continuous power-law exponent.
    pub gamma_stderr: Option<f64>,
    pub p_value: Option<f64>,
}

impl FitReport {
    pub fn gamma(&self) -> Option<f64> {
        match self.params {
            FitParams::PowerLaw { gamma, .. } => Some(gamma),
            _ => None,
        }
    }

    pub fn lognormal_params(&self) -> Option<(f64, f64)> {
        match self.params {
            FitParams::Lognormal { mu, sigma } => Some((mu, sigma)),
            _ => None,
        }
    }

    pub fn model(&self) -> Model {
        match self.params {
            FitParams::PowerLaw { gamma, tau } => {
                Model::PowerLaw(PowerLawModel::new(gamma, tau).expect("fitted power-law is valid"))
            }
            FitParams::Lognormal { mu, sigma } => {
                Model::Lognormal(LognormalModel::new(mu, sigma).expect("fitted lognormal is valid"))
            }
        }
    }
}

/// Two-sided KS distance between a sorted sample and a continuous cdf:
/// sup over sample points of max(|EDF(x⁻) − F(x)|, |EDF(x) − F(x)|).
pub fn ks_distance<F: Fn(f64) -> f64>(sorted: &[f64], cdf: F) -> f64 {
    ks_distance_bounded(sorted, cdf, f64::INFINITY).unwrap_or(f64::INFINITY)
}

/// As [`ks_distance`] but gives up (None) once the running maximum exceeds `bound`.
pub(crate) fn ks_distance_bounded<F: Fn(f64) -> f64>(sorted: &[f64], cdf: F, bound: f64) -> Option<f64> {
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let x = sorted[i];
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == x {
            j += 1;
        }
        let f = cdf(x);
        let below = i as f64 / n;
        let at = j as f64 / n;
        d = d.max((f - below).abs()).max((at - f).abs());
        if d > bound {
            return None;
        }
        i = j;
    }
    Some(d)
}

/// Two-sample KS distance between sorted samples.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}
