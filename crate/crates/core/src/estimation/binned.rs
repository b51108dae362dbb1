//! Multinomial likelihood fits on binned data.
//!
//! Only non-empty bins enter the likelihood; the model is conditioned on
//! x ≥ the first bin edge in the fitted range, so a provider that erased
//! everything below its resolution does not bias the fit.

use super::lognormal::LognormalFitOptions;
use super::{FitKind, FitParams, FitReport, Family};
use crate::binning::{sparse_counts, BinGrid, Histogram, Quantized};
use crate::error::{Error, Result};
use crate::optimize::{nelder_mead, NelderMeadOptions};
use crate::par;
use crate::special::{ln_normal_sf, normal_interval, normal_upper_quantile};
use crate::synthesis::{sorted_exponentials, sorted_uniforms, SeededGenerator};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Binomial, Distribution};

use super::bootstrap::{BootstrapOutcome, MIN_BOOTSTRAP_REPS};

/// Below this log-width a bin's term ln(1 − e^(−βD)) is evaluated by its series.
const FINE_LOG_WIDTH: f64 = 0.02;

/// Non-empty bins of a histogram, as (left, right, weight), ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedData {
    left: Vec<f64>,
    right: Vec<f64>,
    weight: Vec<f64>,
    total: f64,
    grid: Option<BinGrid>,
}

impl BinnedData {
    /// Bins must be ascending and disjoint with positive widths. Zero-weight bins are dropped.
    pub fn new(bins: Vec<(f64, f64, f64)>, grid: Option<BinGrid>) -> Result<Self> {
        let mut left = Vec::with_capacity(bins.len());
        let mut right = Vec::with_capacity(bins.len());
        let mut weight = Vec::with_capacity(bins.len());
        let mut prev_right = f64::NEG_INFINITY;
        for (a, b, w) in bins {
            if !(a.is_finite() && b.is_finite() && a >= 0.0 && b > a) {
                return Err(Error::param(format!("bad bin [{a}, {b})")));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::param(format!("bad bin weight {w}")));
            }
            if a < prev_right {
                return Err(Error::param("bins must be ascending and disjoint"));
            }
            prev_right = b;
            if w > 0.0 {
                left.push(a);
                right.push(b);
                weight.push(w);
            }
        }
        if weight.is_empty() {
            return Err(Error::EmptySample);
        }
        let total = weight.iter().sum();
        Ok(Self {
            left,
            right,
            weight,
            total,
            grid,
        })
    }

    pub fn from_histogram(h: &Histogram) -> Result<Self> {
        let bins = h
            .edges()
            .windows(2)
            .zip(h.counts())
            .map(|(e, &c)| (e[0], e[1], c as f64))
            .collect();
        Self::new(bins, Some(h.grid()))
    }

    /// From (grid index, count) pairs as produced by [`sparse_counts`].
    pub fn from_sparse(counts: &[(i64, u64)], grid: BinGrid) -> Result<Self> {
        let bins = counts
            .iter()
            .map(|&(k, c)| (grid.edge(k), grid.edge(k + 1), c as f64))
            .collect();
        Self::new(bins, Some(grid))
    }

    /// Quantized values k·step become the bins [k·step, (k+1)·step).
    pub fn from_quantized(q: &Quantized) -> Result<Self> {
        let grid = BinGrid::Linear {
            origin: 0.0,
            width: q.step,
        };
        Self::from_sparse(&sparse_counts(q.sample.values(), grid), grid)
    }

    pub fn len(&self) -> usize {
        self.weight.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weight.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn grid(&self) -> Option<BinGrid> {
        self.grid
    }

    pub fn bins(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        (0..self.len()).map(move |j| (self.left[j], self.right[j], self.weight[j]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinnedFitOptions {
    /// Least tail weight a candidate cutoff edge may leave.
    pub min_tail: f64,
    /// Candidate cutoffs beyond this are thinned to a geometric ladder of tail weights.
    pub max_candidates: usize,
    /// Fixed cutoff: the first bin edge ≥ this value.
    pub xmin: Option<f64>,
    pub lognormal: LognormalFitOptions,
}

impl Default for BinnedFitOptions {
    fn default() -> Self {
        Self {
            min_tail: 50.0,
            max_candidates: 1000,
            xmin: None,
            lognormal: LognormalFitOptions::default(),
        }
    }
}

/// Binned fit of a histogram with default options.
pub fn fit_binned(h: &Histogram, family: Family) -> Result<FitReport> {
    fit_binned_data(&BinnedData::from_histogram(h)?, family, &BinnedFitOptions::default())
}

pub fn fit_binned_data(d: &BinnedData, family: Family, opts: &BinnedFitOptions) -> Result<FitReport> {
    if d.len() < 3 {
        return Err(Error::TooFewPoints { got: d.len(), need: 3 });
    }
    let start = match opts.xmin {
        Some(x) => {
            let k = d.left.partition_point(|&a| a < x);
            if k + 2 > d.len() {
                return Err(Error::TooFewPoints {
                    got: d.len() - k.min(d.len()),
                    need: 2,
                });
            }
            Some(k)
        }
        None => None,
    };
    match family {
        Family::PowerLaw => {
            let pre = PowerLawPre::new(d);
            let (k, beta, ks) = match start {
                Some(k) => {
                    let beta = pre.solve(k).ok_or_else(|| {
                        Error::DegenerateSample("binned power-law likelihood has no finite maximum".into())
                    })?;
                    (k, beta, pre.ks(k, beta, f64::INFINITY).unwrap_or(1.0))
                }
                None => pre.scan(opts)?,
            };
            let w_tail = pre.suffix_w[k];
            let info = -pre.second_derivative(k, beta);
            Ok(FitReport {
                family: Family::PowerLaw,
                params: FitParams::PowerLaw {
                    gamma: 1.0 + beta,
                    tau: d.left[k],
                },
                kind: FitKind::Binned,
                xmin: Some(d.left[k]),
                xmin_scanned: start.is_none(),
                n_tail: w_tail.round() as usize,
                n_total: d.total.round() as usize,
                ks,
                loglik: pre.loglik(k, beta),
                gamma_stderr: (info > 0.0).then(|| 1.0 / info.sqrt()),
                p_value: None,
            })
        }
        Family::Lognormal => {
            let k = start.unwrap_or(0);
            let (mu, sigma, loglik) = fit_lognormal_bins(d, k, &opts.lognormal)?;
            let ks = binned_ks(d, k, |x| lognormal_cond_cdf(x, mu, sigma, d.left[k]), f64::INFINITY).unwrap_or(1.0);
            let w_tail: f64 = d.weight[k..].iter().sum();
            Ok(FitReport {
                family: Family::Lognormal,
                params: FitParams::Lognormal { mu, sigma },
                kind: FitKind::Binned,
                xmin: Some(d.left[k]),
                xmin_scanned: false,
                n_tail: w_tail.round() as usize,
                n_total: d.total.round() as usize,
                ks,
                loglik,
                gamma_stderr: None,
                p_value: None,
            })
        }
    }
}

/// KS distance between the binned tail (bins from `k` on) and a conditional
/// cdf, checked at both edges of every non-empty bin. None once above `bound`.
fn binned_ks<F: Fn(f64) -> f64>(d: &BinnedData, k: usize, cdf: F, bound: f64) -> Option<f64> {
    let w_tail: f64 = d.weight[k..].iter().sum();
    let mut cum = 0.0;
    let mut ks: f64 = 0.0;
    for j in k..d.len() {
        let below = cum / w_tail;
        cum += d.weight[j];
        let at = cum / w_tail;
        ks = ks.max((cdf(d.left[j]) - below).abs()).max((cdf(d.right[j]) - at).abs());
        if ks > bound {
            return None;
        }
    }
    Some(ks)
}

fn lognormal_cond_cdf(x: f64, mu: f64, sigma: f64, lo: f64) -> f64 {
    if x <= lo {
        return 0.0;
    }
    let z0 = if lo > 0.0 { (lo.ln() - mu) / sigma } else { f64::NEG_INFINITY };
    let z = (x.ln() - mu) / sigma;
    normal_interval(z0, z) / normal_interval(z0, f64::INFINITY)
}

/// Bin-level quantities shared by every candidate cutoff.
struct PowerLawPre<'a> {
    d: &'a BinnedData,
    ln_left: Vec<f64>,
    log_width: Vec<f64>,
    suffix_w: Vec<f64>,
    // suffix sums over fine bins only
    f_w: Vec<f64>,
    f_w_ln_a: Vec<f64>,
    f_w_ln_d: Vec<f64>,
    f_wd: Vec<f64>,
    f_wd2: Vec<f64>,
    f_wd4: Vec<f64>,
    coarse: Vec<usize>,
}

struct FineSums {
    w: f64,
    w_u: f64,
    w_ln_d: f64,
    wd: f64,
    wd2: f64,
    wd4: f64,
}

impl<'a> PowerLawPre<'a> {
    fn new(d: &'a BinnedData) -> Self {
        let m = d.len();
        let ln_left: Vec<f64> = d.left.iter().map(|a| a.ln()).collect();
        let log_width: Vec<f64> = (0..m).map(|j| (d.right[j] / d.left[j]).ln()).collect();
        let mut suffix_w = vec![0.0; m + 1];
        let mut f = vec![vec![0.0; m + 1]; 6];
        let mut coarse = Vec::new();
        for j in (0..m).rev() {
            let w = d.weight[j];
            suffix_w[j] = suffix_w[j + 1] + w;
            let dj = log_width[j];
            let fine = d.left[j] > 0.0 && dj <= FINE_LOG_WIDTH;
            let terms = if fine {
                [w, w * ln_left[j], w * dj.ln(), w * dj, w * dj * dj, w * dj.powi(4)]
            } else {
                [0.0; 6]
            };
            for (s, t) in f.iter_mut().zip(terms) {
                s[j] = s[j + 1] + t;
            }
        }
        for j in 0..m {
            if !(d.left[j] > 0.0 && log_width[j] <= FINE_LOG_WIDTH) {
                coarse.push(j);
            }
        }
        let [f_w, f_w_ln_a, f_w_ln_d, f_wd, f_wd2, f_wd4]: [Vec<f64>; 6] = f.try_into().expect("six sums");
        Self {
            d,
            ln_left,
            log_width,
            suffix_w,
            f_w,
            f_w_ln_a,
            f_w_ln_d,
            f_wd,
            f_wd2,
            f_wd4,
            coarse,
        }
    }

    fn fine(&self, k: usize) -> FineSums {
        FineSums {
            w: self.f_w[k],
            w_u: self.f_w_ln_a[k] - self.f_w[k] * self.ln_left[k],
            w_ln_d: self.f_w_ln_d[k],
            wd: self.f_wd[k],
            wd2: self.f_wd2[k],
            wd4: self.f_wd4[k],
        }
    }

    fn coarse_from(&self, k: usize) -> &[usize] {
        &self.coarse[self.coarse.partition_point(|&j| j < k)..]
    }

    /// Log-likelihood of the tail from bin k at exponent β = γ − 1.
    fn loglik(&self, k: usize, beta: f64) -> f64 {
        let f = self.fine(k);
        let mut l = f.w_ln_d + f.w * beta.ln() - beta * (f.w_u + 0.5 * f.wd) + beta * beta * f.wd2 / 24.0
            - beta.powi(4) * f.wd4 / 2880.0;
        for &j in self.coarse_from(k) {
            let u = self.ln_left[j] - self.ln_left[k];
            l += self.d.weight[j] * (-beta * u + (-(-beta * self.log_width[j]).exp_m1()).ln());
        }
        l
    }

    fn derivative(&self, k: usize, beta: f64) -> f64 {
        let f = self.fine(k);
        let mut g = f.w / beta - (f.w_u + 0.5 * f.wd) + beta * f.wd2 / 12.0 - beta.powi(3) * f.wd4 / 720.0;
        for &j in self.coarse_from(k) {
            let u = self.ln_left[j] - self.ln_left[k];
            let dj = self.log_width[j];
            g += self.d.weight[j] * (-u + dj / (beta * dj).exp_m1());
        }
        g
    }

    fn second_derivative(&self, k: usize, beta: f64) -> f64 {
        let f = self.fine(k);
        let mut h = -f.w / (beta * beta) + f.wd2 / 12.0 - beta * beta * f.wd4 / 240.0;
        for &j in self.coarse_from(k) {
            let dj = self.log_width[j];
            let e = (beta * dj).exp_m1();
            h -= self.d.weight[j] * dj * dj * (e + 1.0) / (e * e);
        }
        h
    }

    /// MLE of β for the tail from bin k; None when the likelihood keeps rising.
    fn solve(&self, k: usize) -> Option<f64> {
        if self.d.left[k] <= 0.0 || self.d.len() - k < 2 {
            return None;
        }
        let (mut lo, mut hi) = (1e-9, 1.0);
        while self.derivative(k, hi) > 0.0 {
            lo = hi;
            hi *= 2.0;
            if hi > 1e4 {
                return None;
            }
        }
        let mut beta = 0.5 * (lo + hi);
        for _ in 0..200 {
            let g = self.derivative(k, beta);
            if g > 0.0 {
                lo = beta;
            } else {
                hi = beta;
            }
            let h = self.second_derivative(k, beta);
            let mut next = beta - g / h;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            if (next - beta).abs() <= 1e-13 * beta || hi - lo <= 1e-14 * beta {
                return Some(next);
            }
            beta = next;
        }
        Some(beta)
    }

    fn ks(&self, k: usize, beta: f64, bound: f64) -> Option<f64> {
        let lnb = self.ln_left[k];
        binned_ks(self.d, k, |x| -(-beta * (x.ln() - lnb)).exp_m1(), bound)
    }

    fn candidates(&self, opts: &BinnedFitOptions) -> Vec<usize> {
        let mut c: Vec<usize> = (0..self.d.len().saturating_sub(1))
            .filter(|&k| self.d.left[k] > 0.0 && self.suffix_w[k] >= opts.min_tail)
            .collect();
        if c.len() > opts.max_candidates && opts.max_candidates >= 2 {
            let largest = self.suffix_w[c[0]];
            let smallest = opts.min_tail.max(1.0);
            let ratio = (largest / smallest)
                .powf(1.0 / (opts.max_candidates - 1) as f64)
                .max(1.0 + 1e-12);
            let mut next = largest;
            c.retain(|&k| {
                let t = self.suffix_w[k];
                if t <= next {
                    next = t / ratio;
                    true
                } else {
                    false
                }
            });
        }
        c
    }

    fn scan(&self, opts: &BinnedFitOptions) -> Result<(usize, f64, f64)> {
        let cands = self.candidates(opts);
        let blocks: Vec<&[usize]> = cands.chunks(16).collect();
        let per_block = par::map_slice(&blocks, |block| {
            let mut best: Option<(usize, f64, f64)> = None;
            for &k in block.iter() {
                let Some(beta) = self.solve(k) else { continue };
                let bound = best.map_or(f64::INFINITY, |b| b.2);
                if let Some(ks) = self.ks(k, beta, bound) {
                    if best.is_none_or(|b| ks < b.2) {
                        best = Some((k, beta, ks));
                    }
                }
            }
            best
        });
        per_block
            .into_iter()
            .flatten()
            .fold(None, |acc: Option<(usize, f64, f64)>, f| match acc {
                Some(a) if a.2 <= f.2 => Some(a),
                _ => Some(f),
            })
            .ok_or_else(|| Error::DegenerateSample("no bin edge leaves a tail with a finite power-law fit".into()))
    }
}

/// Binned lognormal MLE over bins from k on, conditional on x ≥ left[k].
fn fit_lognormal_bins(d: &BinnedData, k: usize, opts: &LognormalFitOptions) -> Result<(f64, f64, f64)> {
    let lo = d.left[k];
    let ln_lo = if lo > 0.0 { lo.ln() } else { f64::NEG_INFINITY };
    let bins: Vec<(f64, f64, f64)> = (k..d.len())
        .map(|j| {
            let a = if d.left[j] > 0.0 { d.left[j].ln() } else { f64::NEG_INFINITY };
            (a, d.right[j].ln(), d.weight[j])
        })
        .collect();
    let w: f64 = bins.iter().map(|b| b.2).sum();
    let loglik = |mu: f64, sigma: f64| -> f64 {
        let z0 = (ln_lo - mu) / sigma;
        let norm = if z0 == f64::NEG_INFINITY { 0.0 } else { ln_normal_sf(z0) };
        let mut l = -w * norm;
        for &(a, b, wj) in &bins {
            l += wj * normal_interval((a - mu) / sigma, (b - mu) / sigma).ln();
        }
        l
    };
    let zmax = opts.max_truncation_z;
    let objective = |p: &[f64]| {
        let (mu, sigma) = (p[0], p[1].exp());
        if !(sigma > 0.0 && sigma.is_finite()) || (ln_lo - mu) / sigma > zmax {
            return f64::INFINITY;
        }
        let v = -loglik(mu, sigma);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    // weighted moments of bin log-midpoints as the start
    let mids: Vec<f64> = bins
        .iter()
        .map(|&(a, b, _)| if a.is_finite() { 0.5 * (a + b) } else { b - 0.5 })
        .collect();
    let m0 = bins.iter().zip(&mids).map(|(b, m)| b.2 * m).sum::<f64>() / w;
    let v0 = bins.iter().zip(&mids).map(|(b, m)| b.2 * (m - m0) * (m - m0)).sum::<f64>() / w;
    let s0 = v0.sqrt().max(1e-3);
    let nm = NelderMeadOptions {
        x_tol: opts.tolerance,
        f_tol: 1e-12,
        max_iter: opts.max_iter,
        step: 0.2,
    };
    let mut starts = vec![[m0, s0.ln()], [m0 - s0, (1.5 * s0).ln()]];
    if ln_lo.is_finite() {
        starts.push([ln_lo, (2.0 * s0).ln()]);
    }
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut last_err = None;
    for s in starts.iter().filter(|p| objective(&p[..]).is_finite()) {
        match nelder_mead(objective, s, &nm) {
            Ok(m) if best.as_ref().is_none_or(|b| m.value < b.1) => best = Some((m.x, m.value)),
            Ok(_) => {}
            Err(e) => last_err = Some(e),
        }
    }
    match best {
        Some((x, v)) => Ok((x[0], x[1].exp(), -v)),
        None => Err(last_err.unwrap_or(Error::NonConvergence {
            iterations: 0,
            spread: f64::INFINITY,
            context: "no feasible start for the binned lognormal".into(),
        })),
    }
}

/// Semi-parametric bootstrap of a binned fit: the body below the cutoff is
/// resampled multinomially from its bins, the tail is drawn from the fitted
/// model and binned on the data's grid, then the fit is repeated.
pub fn bootstrap_pvalue_binned(
    d: &BinnedData,
    fit: &FitReport,
    reps: usize,
    g: &SeededGenerator,
    opts: &BinnedFitOptions,
) -> Result<BootstrapOutcome> {
    if reps < MIN_BOOTSTRAP_REPS {
        return Err(Error::param(format!("bootstrap needs at least {MIN_BOOTSTRAP_REPS} reps, got {reps}")));
    }
    if fit.kind != FitKind::Binned {
        return Err(Error::param("continuous fits are bootstrapped with bootstrap_pvalue"));
    }
    let grid = d
        .grid
        .ok_or_else(|| Error::param("bootstrapping binned data needs its bin grid"))?;
    let xmin = fit.xmin.ok_or_else(|| Error::param("binned fit without a cutoff"))?;
    let k0 = d.left.partition_point(|&a| a < xmin);
    let body_w: Vec<f64> = d.weight[..k0].to_vec();
    let body_total: f64 = body_w.iter().sum();
    let n = d.total.round() as u64;
    let tail_frac = (1.0 - body_total / d.total).clamp(0.0, 1.0);
    let binom = Binomial::new(n, tail_frac).map_err(|e| Error::param(e.to_string()))?;
    let refit_opts = BinnedFitOptions {
        xmin: if fit.xmin_scanned { None } else { Some(xmin) },
        ..opts.clone()
    };
    let family = fit.family;
    let params = fit.params;
    let ln_xmin = xmin.ln();

    let replicate = |rng: &mut ChaCha20Rng| -> Result<f64> {
        let n_tail = if k0 == 0 { n } else { binom.sample(rng) };
        let mut bins: Vec<(f64, f64, f64)> = Vec::new();
        // multinomial body through sequential binomials
        let mut left = n - n_tail;
        let mut rest = body_total;
        for j in 0..k0 {
            if left == 0 {
                break;
            }
            let p = (body_w[j] / rest).clamp(0.0, 1.0);
            let c = if j + 1 == k0 {
                left
            } else {
                Binomial::new(left, p).map_err(|e| Error::param(e.to_string()))?.sample(rng)
            };
            if c > 0 {
                bins.push((d.left[j], d.right[j], c as f64));
            }
            left -= c;
            rest -= body_w[j];
        }
        let tail: Vec<f64> = match params {
            FitParams::PowerLaw { gamma, .. } => sorted_exponentials(n_tail as usize, gamma - 1.0, rng)
                .into_iter()
                .map(|e| (ln_xmin + e).exp())
                .collect(),
            FitParams::Lognormal { mu, sigma } => {
                let sf0 = if xmin > 0.0 { ln_normal_sf((ln_xmin - mu) / sigma).exp() } else { 1.0 };
                sorted_uniforms(n_tail as usize, rng)
                    .into_iter()
                    .rev()
                    .map(|u| (mu + sigma * normal_upper_quantile(u * sf0)).exp().max(xmin))
                    .collect()
            }
        };
        for (k, c) in sparse_counts(&tail, grid) {
            bins.push((grid.edge(k), grid.edge(k + 1), c as f64));
        }
        let data = BinnedData::new(bins, Some(grid))?;
        fit_binned_data(&data, family, &refit_opts).map(|f| f.ks)
    };

    let outcomes = par::map_range(reps, |r| {
        let mut rng = g.derive(r as u64).stream(0);
        replicate(&mut rng)
    });
    let mut exceed = 0;
    let mut failed = 0;
    for o in &outcomes {
        match o {
            Ok(ks) if *ks >= fit.ks => exceed += 1,
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
