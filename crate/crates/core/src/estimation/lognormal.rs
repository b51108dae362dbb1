use super::{ks_distance, FitKind, FitParams, FitReport, Family};
use crate::error::{Error, Result};
use crate::optimize::{nelder_mead, NelderMeadOptions};
use crate::sample::DurationSample;
use crate::special::{ln_normal_sf, LN_SQRT_2PI};

/// Settings of the truncated lognormal fit.
#[derive(Debug, Clone, PartialEq)]
pub struct LognormalFitOptions {
    /// Upper bound on the standardized truncation point (ln xmin − μ)/σ.
    /// Without it the truncated lognormal can mimic a pure power-law tail
    /// arbitrarily well by sending μ → −∞ and σ → ∞.
    pub max_truncation_z: f64,
    /// Parameter tolerance of the simplex search.
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for LognormalFitOptions {
    fn default() -> Self {
        Self {
            max_truncation_z: 6.0,
            tolerance: 1e-8,
            max_iter: 5000,
        }
    }
}

/// Lognormal MLE. Closed form on the whole sample, or the lognormal truncated
/// to [xmin, ∞) when a cutoff is given.
pub fn fit_lognormal(s: &DurationSample, xmin: Option<f64>) -> Result<FitReport> {
    fit_lognormal_with(s, xmin, &LognormalFitOptions::default())
}

pub fn fit_lognormal_with(s: &DurationSample, xmin: Option<f64>, opts: &LognormalFitOptions) -> Result<FitReport> {
    match xmin {
        None => fit_closed_form(s),
        Some(x) => {
            if !(x.is_finite() && x > 0.0) {
                return Err(Error::param(format!("xmin must be > 0, got {x}")));
            }
            let tail = s.tail(x);
            let logs: Vec<f64> = tail.iter().map(|v| v.ln()).collect();
            fit_truncated_logs(&logs, x.ln(), opts).map(|(mu, sigma, loglik)| {
                let z0 = (x.ln() - mu) / sigma;
                let ln_sf0 = ln_normal_sf(z0);
                let ks = ks_distance(&logs, |y| truncated_cdf_log(y, mu, sigma, ln_sf0));
                FitReport {
                    family: Family::Lognormal,
                    params: FitParams::Lognormal { mu, sigma },
                    kind: FitKind::Continuous,
                    xmin: Some(x),
                    xmin_scanned: false,
                    n_tail: tail.len(),
                    n_total: s.len(),
                    ks,
                    loglik,
                    gamma_stderr: None,
                    p_value: None,
                }
            })
        }
    }
}

fn fit_closed_form(s: &DurationSample) -> Result<FitReport> {
    let n = s.len();
    if n < 2 {
        return Err(Error::TooFewPoints { got: n, need: 2 });
    }
    let logs = s.ln_values();
    let (mu, ss) = mean_and_ss(&logs);
    let sigma = (ss / n as f64).sqrt();
    if !(sigma > 0.0) {
        return Err(Error::DegenerateSample("all values are equal".into()));
    }
    let nf = n as f64;
    let sum_logs: f64 = logs.iter().sum();
    let loglik = -nf * (sigma.ln() + LN_SQRT_2PI) - sum_logs - 0.5 * nf;
    let ks = ks_distance(&logs, |y| crate::special::normal_cdf((y - mu) / sigma));
    Ok(FitReport {
        family: Family::Lognormal,
        params: FitParams::Lognormal { mu, sigma },
        kind: FitKind::Continuous,
        xmin: None,
        xmin_scanned: false,
        n_tail: n,
        n_total: n,
        ks,
        loglik,
        gamma_stderr: None,
        p_value: None,
    })
}

/// Mean and centered sum of squares, two-pass.
pub(crate) fn mean_and_ss(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let ss = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, ss)
}

/// cdf of the truncated lognormal at ln-value `y`.
pub(crate) fn truncated_cdf_log(y: f64, mu: f64, sigma: f64, ln_sf0: f64) -> f64 {
    let l = ln_normal_sf((y - mu) / sigma) - ln_sf0;
    -l.exp_m1()
}

/// Sufficient statistics of a tail in log space.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LogTailStats {
    pub n: f64,
    pub mean: f64,
    pub ss: f64,
    pub sum: f64,
    pub ln_xmin: f64,
}

impl LogTailStats {
    pub fn new(logs: &[f64], ln_xmin: f64) -> Self {
        let (mean, ss) = mean_and_ss(logs);
        Self {
            n: logs.len() as f64,
            mean,
            ss,
            sum: logs.iter().sum(),
            ln_xmin,
        }
    }

    /// Log-likelihood of the lognormal truncated to [xmin, ∞).
    pub fn loglik(&self, mu: f64, sigma: f64) -> f64 {
        let dm = self.mean - mu;
        let quad = (self.ss + self.n * dm * dm) / (2.0 * sigma * sigma);
        let z0 = (self.ln_xmin - mu) / sigma;
        -self.n * (sigma.ln() + LN_SQRT_2PI) - self.sum - quad - self.n * ln_normal_sf(z0)
    }
}

/// Returns (μ̂, σ̂, loglik) of the truncated fit on the log tail.
pub(crate) fn fit_truncated_logs(logs: &[f64], ln_xmin: f64, opts: &LognormalFitOptions) -> Result<(f64, f64, f64)> {
    let n = logs.len();
    if n < 2 {
        return Err(Error::TooFewPoints { got: n, need: 2 });
    }
    let st = LogTailStats::new(logs, ln_xmin);
    if !(st.ss > 0.0) {
        return Err(Error::DegenerateSample("all tail values are equal".into()));
    }
    let zmax = opts.max_truncation_z;
    let objective = |p: &[f64]| {
        let (mu, sigma) = (p[0], p[1].exp());
        if !sigma.is_finite() || sigma <= 0.0 || (ln_xmin - mu) / sigma > zmax {
            return f64::INFINITY;
        }
        let v = -st.loglik(mu, sigma);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let sd = (st.ss / st.n).sqrt();
    let nm = NelderMeadOptions {
        x_tol: opts.tolerance,
        f_tol: 1e-12,
        max_iter: opts.max_iter,
        step: 0.2,
    };
    let mut starts = vec![
        [st.mean, sd.ln()],
        [ln_xmin, (2.0 * sd).ln()],
        [ln_xmin - 2.0 * sd, (2.0 * sd).ln()],
        [st.mean - sd, (1.5 * sd).ln()],
    ];
    // a start near the truncation bound
    let s_edge = 4.0 * sd;
    starts.push([ln_xmin - 0.5 * zmax * s_edge, s_edge.ln()]);

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut last_err = None;
    for start in starts.iter().filter(|p| objective(&p[..]).is_finite()) {
        match nelder_mead(objective, start, &nm) {
            Ok(m) => {
                if best.as_ref().is_none_or(|b| m.value < b.1) {
                    best = Some((m.x, m.value));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match best {
        Some((x, v)) => Ok((x[0], x[1].exp(), -v)),
        None => Err(last_err.unwrap_or(Error::NonConvergence {
            iterations: 0,
            spread: f64::INFINITY,
            context: "no feasible start for the truncated lognormal".into(),
        })),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::LognormalModel;
    use crate::optimize::brent_minimize;
    use crate::synthesis::{sample_lognormal, SeededGenerator};
    use std::f64::consts::E;

    #[test]
    fn closed_form_three_points() {
        let s = DurationSample::from_seconds(vec![1.0, E, E * E]).unwrap();
        let fit = fit_lognormal(&s, None).unwrap();
        let (mu, sigma) = fit.lognormal_params().unwrap();
        assert!((mu - 1.0).abs() < 1e-15);
        assert!((sigma - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        // numeric oracle: profile the likelihood over σ at μ = 1
        let nll = |sg: f64| {
            -s.values()
                .iter()
                .map(|&x| LognormalModel::new(1.0, sg).unwrap().ln_pdf(x).unwrap())
                .sum::<f64>()
        };
        let (sg, v) = brent_minimize(nll, 0.1, 5.0, 1e-12, 500);
        assert!((sg - sigma).abs() < 1e-6);
        assert!((-v - fit.loglik).abs() < 1e-9);
    }

    #[test]
    fn reported_loglik_matches_direct_sum() {
        let m = LognormalModel::new(2.0, 1.3).unwrap();
        let s = sample_lognormal(&m, 5000, &SeededGenerator::new(3)).unwrap();
        let xmin = 20.0;
        let fit = fit_lognormal(&s, Some(xmin)).unwrap();
        let (mu, sigma) = fit.lognormal_params().unwrap();
        let fitted = LognormalModel::new(mu, sigma).unwrap();
        let ln_sf = fitted.sf(xmin).ln();
        let direct: f64 = s.tail(xmin).iter().map(|&x| fitted.ln_pdf(x).unwrap() - ln_sf).sum();
        assert!((direct - fit.loglik).abs() < 1e-9 * direct.abs().max(1.0));
        assert!((mu - 2.0).abs() < 0.3 && (sigma - 1.3).abs() < 0.2, "{mu} {sigma}");
    }

    #[test]
    fn vanishing_truncation_matches_closed_form() {
        let m = LognormalModel::new(1.0, 0.7).unwrap();
        let s = sample_lognormal(&m, 2000, &SeededGenerator::new(4)).unwrap();
        let a = fit_lognormal(&s, None).unwrap().lognormal_params().unwrap();
        let b = fit_lognormal(&s, Some(1e-200)).unwrap().lognormal_params().unwrap();
        assert!((a.0 - b.0).abs() < 1e-5 && (a.1 - b.1).abs() < 1e-5, "{a:?} {b:?}");
    }

    #[test]
    fn truncated_beats_grid_candidates() {
        let m = LognormalModel::new(3.0, 2.0).unwrap();
        let s = sample_lognormal(&m, 3000, &SeededGenerator::new(5)).unwrap();
        let xmin = 50.0;
        let fit = fit_lognormal(&s, Some(xmin)).unwrap();
        let logs: Vec<f64> = s.tail(xmin).iter().map(|v| v.ln()).collect();
        let st = LogTailStats::new(&logs, xmin.ln());
        for i in 0..20 {
            for j in 1..20 {
                let (mu, sg) = (-2.0 + 0.5 * i as f64, 0.25 * j as f64);
                if (xmin.ln() - mu) / sg <= 6.0 {
                    assert!(fit.loglik >= st.loglik(mu, sg) - 1e-9);
                }
            }
        }
    }

    #[test]
    fn too_few_and_degenerate() {
        let s = DurationSample::from_seconds(vec![2.0]).unwrap();
        assert!(matches!(fit_lognormal(&s, None), Err(Error::TooFewPoints { .. })));
        let s = DurationSample::from_seconds(vec![2.0, 2.0]).unwrap();
        assert!(matches!(fit_lognormal(&s, None), Err(Error::DegenerateSample(_))));
        let s = DurationSample::from_seconds(vec![1.0, 2.0, 3.0]).unwrap();
        assert!(fit_lognormal(&s, Some(2.5)).is_err());
    }

    #[test]
    fn recovers_parameter_point() {
        let m = LognormalModel::new(10.45, 2.75).unwrap();
        let s = sample_lognormal(&m, 1_000_000, &SeededGenerator::new(6)).unwrap();
        let (mu, sigma) = fit_lognormal(&s, None).unwrap().lognormal_params().unwrap();
        assert!((mu - 10.45).abs() < 0.01 && (sigma - 2.75).abs() < 0.01, "{mu} {sigma}");
    }
}
