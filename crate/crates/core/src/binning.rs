//! Histograms, unit rescaling and timestamp quantization.
//!
//! Bins are left-closed and right-open; the last bin of an m-bin linear
//! histogram is closed so that x_max is counted. Rescaling a lognormal sample
//! by b shifts μ by ln b and leaves σ untouched, while quantization (floor to
//! a provider's storage resolution) erases the small durations and pushes the
//! observable shape toward a straight line on log-log axes.

use crate::distributions::Model;
use crate::error::{Error, Result};
use crate::par;
use crate::sample::{DurationSample, TimeUnit};
use std::io::Write;

/// Dense histograms refuse to allocate more bins than this.
pub const MAX_DENSE_BINS: usize = 1 << 26;

/// Rule mapping a value to an integer bin index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BinGrid {
    /// Edges at origin + k·width.
    Linear { origin: f64, width: f64 },
    /// Edges at 10^(k / bins_per_decade).
    Log { bins_per_decade: u32 },
}

impl BinGrid {
    pub fn edge(&self, k: i64) -> f64 {
        match *self {
            BinGrid::Linear { origin, width } => origin + k as f64 * width,
            BinGrid::Log { bins_per_decade } => {
                let b = bins_per_decade as i64;
                if k % b == 0 {
                    10f64.powi((k / b) as i32)
                } else {
                    10f64.powf(k as f64 / b as f64)
                }
            }
        }
    }

    /// Index k with edge(k) ≤ x < edge(k+1).
    pub fn index(&self, x: f64) -> i64 {
        let guess = match *self {
            BinGrid::Linear { origin, width } => ((x - origin) / width).floor(),
            BinGrid::Log { bins_per_decade } => (bins_per_decade as f64 * x.log10()).floor(),
        };
        let mut k = guess as i64;
        // float rounding can land one off near an edge
        while x < self.edge(k) {
            k -= 1;
        }
        while x >= self.edge(k + 1) {
            k += 1;
        }
        k
    }
}

/// Label of how a histogram was built.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BinScheme {
    Linear { width: f64 },
    Logarithmic { bins_per_decade: u32 },
}

/// Counts of a sample over contiguous bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    edges: Vec<f64>,
    counts: Vec<u64>,
    scheme: BinScheme,
    grid: BinGrid,
    first_index: i64,
    n: u64,
    unit: TimeUnit,
}

impl Histogram {
    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn scheme(&self) -> BinScheme {
        self.scheme
    }

    pub fn grid(&self) -> BinGrid {
        self.grid
    }

    /// Grid index of the first bin.
    pub fn first_index(&self) -> i64 {
        self.first_index
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn unit(&self) -> &TimeUnit {
        &self.unit
    }

    pub fn bin_count(&self) -> usize {
        self.counts.len()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// h_j / (n · width_j); sums to 1 against the widths.
    pub fn density(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.counts
            .iter()
            .zip(self.edges.windows(2))
            .map(|(&c, w)| c as f64 / (n * (w[1] - w[0])))
            .collect()
    }

    pub fn non_empty_bins(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// Histogram CSV: `bin_left,bin_right,count,density`, one row per bin.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let rows = self
            .edges
            .windows(2)
            .zip(self.counts.iter().zip(self.density()))
            .map(|(w, (&c, d))| (w[0], w[1], c, d));
        write_histogram_rows(out, rows)
    }
}

/// Writes histogram CSV rows under the standard header.
pub fn write_histogram_rows<W, I>(out: W, rows: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = (f64, f64, u64, f64)>,
{
    let mut w = csv::Writer::from_writer(out);
    let map = crate::ingestion::csv_error;
    w.write_record(["bin_left", "bin_right", "count", "density"])
        .map_err(map)?;
    for (l, r, c, d) in rows {
        w.write_record(&[l.to_string(), r.to_string(), c.to_string(), d.to_string()])
            .map_err(map)?;
    }
    w.flush()?;
    Ok(())
}

fn count_indices(values: &[f64], grid: BinGrid, first: i64, bins: usize, clamp_last: bool) -> Vec<u64> {
    let partials = par::map_chunks(values, 1 << 16, |chunk| {
        let mut counts = vec![0u64; bins];
        for &x in chunk {
            let mut k = (grid.index(x) - first) as usize;
            if clamp_last && k >= bins {
                k = bins - 1;
            }
            counts[k] += 1;
        }
        counts
    });
    let mut counts = vec![0u64; bins];
    for p in partials {
        for (c, v) in counts.iter_mut().zip(p) {
            *c += v;
        }
    }
    counts
}

fn check_bins(bins: usize) -> Result<()> {
    if bins > MAX_DENSE_BINS {
        return Err(Error::param(format!(
            "{bins} bins exceed the dense limit of {MAX_DENSE_BINS}; use sparse counts or log bins"
        )));
    }
    Ok(())
}

/// m equal-width bins anchored at x_min; the last bin is closed at x_max.
pub fn bin_linear(s: &DurationSample, m: usize) -> Result<Histogram> {
    if m == 0 {
        return Err(Error::param("bin count must be >= 1"));
    }
    check_bins(m)?;
    let (lo, hi) = (s.min(), s.max());
    if hi == lo {
        // all mass at one point: a single bin of width x_min
        let grid = BinGrid::Linear { origin: lo, width: lo };
        return Ok(Histogram {
            edges: vec![lo, 2.0 * lo],
            counts: vec![s.len() as u64],
            scheme: BinScheme::Linear { width: lo },
            grid,
            first_index: 0,
            n: s.len() as u64,
            unit: s.unit().clone(),
        });
    }
    let width = (hi - lo) / m as f64;
    let grid = BinGrid::Linear { origin: lo, width };
    let mut edges: Vec<f64> = (0..=m as i64).map(|k| grid.edge(k)).collect();
    edges[m] = hi;
    let counts = count_indices(s.values(), grid, 0, m, true);
    Ok(Histogram {
        edges,
        counts,
        scheme: BinScheme::Linear { width },
        grid,
        first_index: 0,
        n: s.len() as u64,
        unit: s.unit().clone(),
    })
}

/// Bins of fixed `width` anchored at `origin`, spanning every value.
pub fn bin_width(s: &DurationSample, origin: f64, width: f64) -> Result<Histogram> {
    if !(width.is_finite() && width > 0.0) {
        return Err(Error::param(format!("bin width must be > 0, got {width}")));
    }
    if !(origin.is_finite() && origin <= s.min()) {
        return Err(Error::param("bin origin must not exceed the smallest value"));
    }
    let grid = BinGrid::Linear { origin, width };
    grid_histogram(s, grid, BinScheme::Linear { width })
}

/// Logarithmic bins with edges at 10^(k/bins_per_decade) covering [x_min, x_max].
pub fn bin_log(s: &DurationSample, bins_per_decade: u32) -> Result<Histogram> {
    if bins_per_decade == 0 {
        return Err(Error::param("bins per decade must be >= 1"));
    }
    let grid = BinGrid::Log { bins_per_decade };
    let first = grid.index(s.min());
    let mut last = grid.index(s.max());
    let closes_on_edge = grid.edge(last) == s.max() && last > first;
    if closes_on_edge {
        // x_max sits exactly on an edge: close the previous bin instead of opening one
        last -= 1;
    }
    let bins = (last - first + 1) as usize;
    check_bins(bins)?;
    let edges = (first..=last + 1).map(|k| grid.edge(k)).collect();
    let counts = count_indices(s.values(), grid, first, bins, closes_on_edge);
    Ok(Histogram {
        edges,
        counts,
        scheme: BinScheme::Logarithmic { bins_per_decade },
        grid,
        first_index: first,
        n: s.len() as u64,
        unit: s.unit().clone(),
    })
}

fn grid_histogram(s: &DurationSample, grid: BinGrid, scheme: BinScheme) -> Result<Histogram> {
    let first = grid.index(s.min());
    let last = grid.index(s.max());
    let bins = (last - first + 1) as usize;
    check_bins(bins)?;
    let edges = (first..=last + 1).map(|k| grid.edge(k)).collect();
    let counts = count_indices(s.values(), grid, first, bins, false);
    Ok(Histogram {
        edges,
        counts,
        scheme,
        grid,
        first_index: first,
        n: s.len() as u64,
        unit: s.unit().clone(),
    })
}

/// Non-empty bins only, as (grid index, count), ascending.
pub fn sparse_counts(values: &[f64], grid: BinGrid) -> Vec<(i64, u64)> {
    let mut out: Vec<(i64, u64)> = Vec::new();
    let mut sorted = true;
    for w in values.windows(2) {
        if w[1] < w[0] {
            sorted = false;
            break;
        }
    }
    let mut idx: Vec<i64> = values.iter().map(|&x| grid.index(x)).collect();
    if !sorted {
        idx.sort_unstable();
    }
    for k in idx {
        match out.last_mut() {
            Some((last, c)) if *last == k => *c += 1,
            _ => out.push((k, 1)),
        }
    }
    out
}

/// Multiplies every value by `b` (a change of time unit).
pub fn rescale(s: &DurationSample, b: f64) -> Result<DurationSample> {
    if !(b.is_finite() && b > 0.0) {
        return Err(Error::param(format!("rescale factor must be > 0, got {b}")));
    }
    if b == 1.0 {
        return Ok(s.clone());
    }
    let values: Vec<f64> = s.values().iter().map(|&v| v * b).collect();
    if let Some(&bad) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::domain("rescaled duration", bad, "overflowed or underflowed"));
    }
    Ok(DurationSample::from_sorted_unchecked(values, s.unit().scaled(b)))
}

/// A quantized sample and how many values were erased to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Quantized {
    pub sample: DurationSample,
    pub dropped: usize,
    pub step: f64,
}

/// Largest k with k·step ≤ v.
fn floor_multiple(v: f64, step: f64) -> f64 {
    let mut k = (v / step).floor();
    if (k + 1.0) * step <= v {
        k += 1.0;
    } else if k * step > v {
        k -= 1.0;
    }
    k
}

/// Truncates each value down to a multiple of `step` and drops the zeros.
pub fn quantize(s: &DurationSample, step: f64) -> Result<Quantized> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::param(format!("quantization step must be > 0, got {step}")));
    }
    let values: Vec<f64> = s
        .values()
        .iter()
        .map(|&v| floor_multiple(v, step) * step)
        .filter(|&q| q > 0.0)
        .collect();
    let dropped = s.len() - values.len();
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(Quantized {
        sample: DurationSample::from_sorted_unchecked(values, s.unit().clone()),
        dropped,
        step,
    })
}

/// Histogram of quantized data: bin k·step covers [k·step, (k+1)·step).
pub fn bin_quantized(q: &Quantized) -> Result<Histogram> {
    bin_width(&q.sample, 0.0, q.step)
}

/// n·(F(right) − F(left)) for each bin.
pub fn expected_counts(model: &Model, edges: &[f64], n: f64) -> Vec<f64> {
    edges
        .windows(2)
        .map(|w| n * model.interval(w[0], w[1]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{LognormalModel, PowerLawModel};
    use crate::estimation::fit_lognormal;
    use crate::synthesis::{sample_lognormal, sample_powerlaw, SeededGenerator};
    use std::f64::consts::E;

    fn sample(v: &[f64]) -> DurationSample {
        DurationSample::from_seconds(v.to_vec()).unwrap()
    }

    #[test]
    fn linear_small_example() {
        let h = bin_linear(&sample(&[1.0, 2.0, 3.0, 4.0]), 2).unwrap();
        assert_eq!(h.edges(), &[1.0, 2.5, 4.0]);
        assert_eq!(h.counts(), &[2, 2]);
        assert!(bin_linear(&sample(&[1.0]), 0).is_err());
    }

    #[test]
    fn linear_edge_tie_goes_right() {
        let h = bin_linear(&sample(&[0.0 + 1.0, 2.0, 3.0]), 2).unwrap();
        // edges {1, 2, 3}: the value 2 sits on the interior edge
        assert_eq!(h.edges(), &[1.0, 2.0, 3.0]);
        assert_eq!(h.counts(), &[1, 2]);
    }

    #[test]
    fn linear_single_value() {
        let h = bin_linear(&sample(&[5.0, 5.0, 5.0]), 10).unwrap();
        assert_eq!(h.bin_count(), 1);
        assert_eq!(h.counts(), &[3]);
    }

    #[test]
    fn linear_density_sums_to_one() {
        let m = LognormalModel::new(1.0, 0.7).unwrap();
        let s = sample_lognormal(&m, 10_000, &SeededGenerator::new(1)).unwrap();
        let h = bin_linear(&s, 37).unwrap();
        assert_eq!(h.counts().iter().sum::<u64>(), 10_000);
        let total: f64 = h.density().iter().zip(h.widths()).map(|(d, w)| d * w).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let w0 = h.widths()[0];
        assert!(h.widths().iter().all(|w| (w - w0).abs() < 1e-9 * w0));
    }

    #[test]
    fn linear_counts_match_expected_within_poisson_band() {
        let m = LognormalModel::new(10.0, 2.0).unwrap();
        let s = sample_lognormal(&m, 1_000_000, &SeededGenerator::new(2)).unwrap();
        let h = bin_linear(&s, 1000).unwrap();
        let exp = expected_counts(&Model::Lognormal(m), h.edges(), 1e6);
        for (j, (&c, &e)) in h.counts().iter().zip(&exp).enumerate() {
            let tol = 4.0 * e.sqrt().max(1.0);
            assert!((c as f64 - e).abs() <= tol, "bin {j}: {c} vs {e}");
        }
    }

    #[test]
    fn log_bins_cover_decades() {
        let h = bin_log(&sample(&[1.0, 5.0, 20.0, 300.0, 1000.0]), 1).unwrap();
        assert_eq!(h.edges(), &[1.0, 10.0, 100.0, 1000.0]);
        assert_eq!(h.counts(), &[2, 1, 2]);
        let total: f64 = h.density().iter().zip(h.widths()).map(|(d, w)| d * w).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    fn least_squares(x: &[f64], y: &[f64], degree: usize) -> Vec<f64> {
        // normal equations, small degree only
        let k = degree + 1;
        let mut a = vec![vec![0.0; k + 1]; k];
        for (&xi, &yi) in x.iter().zip(y) {
            let pows: Vec<f64> = (0..k).map(|p| xi.powi(p as i32)).collect();
            for r in 0..k {
                for c in 0..k {
                    a[r][c] += pows[r] * pows[c];
                }
                a[r][k] += pows[r] * yi;
            }
        }
        for col in 0..k {
            let piv = (col..k).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
            a.swap(col, piv);
            for r in 0..k {
                if r != col {
                    let f = a[r][col] / a[col][col];
                    for c in col..=k {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
        (0..k).map(|r| a[r][k] / a[r][r]).collect()
    }

    fn log_density_points(h: &Histogram, min_count: u64) -> (Vec<f64>, Vec<f64>) {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for ((w, &c), d) in h.edges().windows(2).zip(h.counts()).zip(h.density()) {
            if c >= min_count {
                xs.push((w[0] * w[1]).sqrt().ln());
                ys.push(d.ln());
            }
        }
        (xs, ys)
    }

    #[test]
    fn log_binned_powerlaw_has_slope_minus_gamma() {
        let m = PowerLawModel::new(2.0, 1.0).unwrap();
        let s = sample_powerlaw(&m, 1_000_000, &SeededGenerator::new(3)).unwrap();
        let h = bin_log(&s, 10).unwrap();
        let (x, y) = log_density_points(&h, 100);
        let coef = least_squares(&x, &y, 1);
        assert!((coef[1] + 2.0).abs() < 0.05, "slope {}", coef[1]);
    }

    #[test]
    fn log_binned_lognormal_is_quadratic() {
        let m = LognormalModel::new(10.0, 2.0).unwrap();
        let s = sample_lognormal(&m, 1_000_000, &SeededGenerator::new(4)).unwrap();
        let h = bin_log(&s, 10).unwrap();
        let (x, y) = log_density_points(&h, 100);
        let coef = least_squares(&x, &y, 2);
        let target = -1.0 / (2.0 * 4.0);
        assert!(((coef[2] - target) / target).abs() < 0.1, "a2 {}", coef[2]);
    }

    #[test]
    fn rescale_identity_and_errors() {
        let s = sample(&[1.0, 2.0, 3.0]);
        assert_eq!(rescale(&s, 1.0).unwrap(), s);
        assert!(rescale(&s, 0.0).is_err());
        assert!(rescale(&s, -1.0).is_err());
        let r = rescale(&s, 1.0 / 60.0).unwrap();
        assert_eq!(r.unit(), &TimeUnit::minutes());
    }

    #[test]
    fn rescale_shifts_mu_only() {
        let m = LognormalModel::new(10.0, 2.0).unwrap();
        let s = sample_lognormal(&m, 200_000, &SeededGenerator::new(5)).unwrap();
        let base = fit_lognormal(&s, None).unwrap();
        let (mu0, s0) = base.lognormal_params().unwrap();
        for &b in &[1.0 / 60.0, 1.0 / 3600.0] {
            let fit = fit_lognormal(&rescale(&s, b).unwrap(), None).unwrap();
            let (mu, sigma) = fit.lognormal_params().unwrap();
            assert!((sigma - s0).abs() < 1e-12);
            assert!((mu - mu0 - b.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn scale_covariance_of_linear_bins() {
        let m = LognormalModel::new(3.0, 1.0).unwrap();
        let s = sample_lognormal(&m, 5000, &SeededGenerator::new(6)).unwrap();
        let b = 0.25; // power of two keeps products exact
        let h1 = bin_linear(&s, 50).unwrap();
        let h2 = bin_linear(&rescale(&s, b).unwrap(), 50).unwrap();
        assert_eq!(h1.counts(), h2.counts());
        for (e1, e2) in h1.edges().iter().zip(h2.edges()) {
            assert_eq!(e1 * b, *e2);
        }
    }

    #[test]
    fn quantize_example() {
        let q = quantize(&sample(&[30.0, 59.0, 61.0, 3700.0]), 60.0).unwrap();
        assert_eq!(q.sample.values(), &[60.0, 3660.0]);
        assert_eq!(q.dropped, 2);
        let ints = sample(&[1.0, 2.0, 7.0, 7.0]);
        assert_eq!(quantize(&ints, 1.0).unwrap().sample, ints);
        assert!(matches!(quantize(&sample(&[1.0, 2.0]), 5.0), Err(Error::EmptySample)));
        assert!(quantize(&ints, 0.0).is_err());
    }

    #[test]
    fn quantized_histogram_bins_at_multiples() {
        let q = quantize(&sample(&[61.0, 130.0, 170.0, 3700.0]), 60.0).unwrap();
        let h = bin_quantized(&q).unwrap();
        assert_eq!(h.edges()[0], 60.0);
        assert_eq!(h.counts()[0], 1);
        assert_eq!(h.counts()[1], 2);
        assert_eq!(h.counts().iter().sum::<u64>(), 4);
    }

    #[test]
    fn expected_count_examples() {
        let m = Model::Lognormal(LognormalModel::new(0.0, 1.0).unwrap());
        let full = expected_counts(&m, &[1e-300, 1e300], 500.0);
        assert!((full[0] - 500.0).abs() < 1e-9);
        let e = expected_counts(&m, &[(-1f64).exp(), 1.0, E], 1000.0);
        // Φ(1) − Φ(0) from a table: 0.3413447460685429
        assert!((e[0] - 341.344_746_068_542_9).abs() < 1e-9);
        assert!((e[1] - 341.344_746_068_542_9).abs() < 1e-9);
        let m = Model::Lognormal(LognormalModel::new(2.0, 0.5).unwrap());
        let c = 2f64.exp();
        let e = expected_counts(&m, &[c / 3.0, c / 1.5, c, c * 1.5, c * 3.0], 1.0);
        assert!((e[0] - e[3]).abs() < 1e-14 && (e[1] - e[2]).abs() < 1e-14);
        let p = Model::PowerLaw(PowerLawModel::new(2.0, 1.0).unwrap());
        let e = expected_counts(&p, &[1.0, 2.0, 4.0], 100.0);
        let sum: f64 = e.iter().sum();
        assert!((sum - 100.0 * (p.cdf(4.0) - p.cdf(1.0))).abs() < 1e-12);
    }

    #[test]
    fn csv_output_shape() {
        let h = bin_linear(&sample(&[1.0, 2.0, 3.0, 4.0]), 2).unwrap();
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "bin_left,bin_right,count,density\n1,2.5,2,0.3333333333333333\n2.5,4,2,0.3333333333333333\n");
    }

    #[test]
    fn sparse_counts_skip_empty_bins() {
        let grid = BinGrid::Linear { origin: 0.0, width: 10.0 };
        let c = sparse_counts(&[1.0, 5.0, 95.0, 1000.0], grid);
        assert_eq!(c, vec![(0, 2), (9, 1), (100, 1)]);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn counts_conserved(vals in prop::collection::vec(1e-3f64..1e6, 1..300), m in 1usize..50, bpd in 1u32..12) {
                let s = DurationSample::from_seconds(vals).unwrap();
                let h = bin_linear(&s, m).unwrap();
                prop_assert_eq!(h.counts().iter().sum::<u64>(), s.len() as u64);
                let h = bin_log(&s, bpd).unwrap();
                prop_assert_eq!(h.counts().iter().sum::<u64>(), s.len() as u64);
                prop_assert!(h.edges().windows(2).all(|w| w[0] < w[1]));
                prop_assert!(h.edges()[0] <= s.min() && *h.edges().last().unwrap() >= s.max());
            }

            #[test]
            fn quantize_idempotent(vals in prop::collection::vec(0.01f64..1e5, 1..200), step in prop::sample::select(vec![0.1, 1.0, 7.0, 60.0, 3600.0])) {
                let s = DurationSample::from_seconds(vals).unwrap();
                if let Ok(q) = quantize(&s, step) {
                    let again = quantize(&q.sample, step).unwrap();
                    prop_assert_eq!(again.dropped, 0);
                    prop_assert_eq!(&again.sample, &q.sample);
                    prop_assert_eq!(q.sample.len() + q.dropped, s.len());
                }
            }
        }
    }
}
