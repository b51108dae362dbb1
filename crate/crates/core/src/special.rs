//! Normal-distribution helpers and the Kolmogorov limiting distribution.

use libm::erfc;
use statrs::function::erf::erfc_inv;
use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

/// ln(√(2π))
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal cdf Φ(z).
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// Standard normal survival 1 − Φ(z), accurate in the upper tail.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z * FRAC_1_SQRT_2)
}

/// ln(1 − Φ(z)) without underflow for large z.
pub fn ln_normal_sf(z: f64) -> f64 {
    if z < 30.0 {
        normal_sf(z).ln()
    } else {
        // Asymptotic Mills-ratio expansion.
        let z2 = z * z;
        let series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
        -0.5 * z2 - z.ln() - LN_SQRT_2PI + series.ln()
    }
}

/// ln Φ(z) without underflow for very negative z.
pub fn ln_normal_cdf(z: f64) -> f64 {
    ln_normal_sf(-z)
}

/// Φ(b) − Φ(a) for a ≤ b, evaluated on whichever side of zero keeps precision.
pub fn normal_interval(a: f64, b: f64) -> f64 {
    if a > 0.0 {
        normal_sf(a) - normal_sf(b)
    } else {
        normal_cdf(b) - normal_cdf(a)
    }
}

/// z such that 1 − Φ(z) = q, for q in (0, 1).
pub fn normal_upper_quantile(q: f64) -> f64 {
    let z = SQRT_2 * erfc_inv(2.0 * q);
    if !z.is_finite() {
        return z;
    }
    // one Newton step against the accurate survival function
    let phi = (-0.5 * z * z - LN_SQRT_2PI).exp();
    if phi > 0.0 {
        z + (normal_sf(z) - q) / phi
    } else {
        z
    }
}

/// Φ⁻¹(p) for p in (0, 1).
pub fn normal_quantile(p: f64) -> f64 {
    -normal_upper_quantile(p)
}

/// Survival function of the Kolmogorov distribution, Pr[K > λ].
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        1.0
    } else if lambda < 1.18 {
        kolmogorov_sf_theta(lambda)
    } else {
        kolmogorov_sf_alternating(lambda)
    }
}

// Jacobi-theta form, fast for small λ.
fn kolmogorov_sf_theta(lambda: f64) -> f64 {
    let w = (2.0 * PI).sqrt() / lambda;
    let t = -PI * PI / (8.0 * lambda * lambda);
    let p: f64 = (1..=20)
        .map(|k| {
            let j = (2 * k - 1) as f64;
            (t * j * j).exp()
        })
        .sum();
    (1.0 - w * p).clamp(0.0, 1.0)
}

fn kolmogorov_sf_alternating(lambda: f64) -> f64 {
    let mut q = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        q += sign * term;
        if term < 1e-18 {
            break;
        }
        sign = -sign;
    }
    (2.0 * q).clamp(0.0, 1.0)
}

/// Asymptotic p-value of a one-sample KS statistic `d` on `n` points.
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d)
}

/// Asymptotic p-value of a two-sample KS statistic on samples of sizes `n` and `m`.
pub fn ks_pvalue_two_sample(d: f64, n: usize, m: usize) -> f64 {
    let ne = (n as f64 * m as f64) / (n + m) as f64;
    ks_pvalue(d, ne.round().max(1.0) as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_cdf_reference_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-14);
        assert!((normal_cdf(-1.96) - 0.024_997_895_148_220_43).abs() < 1e-14);
    }

    #[test]
    fn log_tail_is_continuous_across_switch() {
        let below = ln_normal_sf(29.999_999);
        let above = ln_normal_sf(30.0);
        assert!((below - above).abs() < 1e-4, "{below} vs {above}");
        assert!(ln_normal_sf(100.0).is_finite());
        assert!(ln_normal_cdf(-100.0).is_finite());
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-12, 0.025, 0.5, 0.8, 0.999] {
            let back = normal_cdf(normal_quantile(p));
            assert!(((back - p) / p).abs() < 1e-9, "p={p} back={back}");
        }
    }

    #[test]
    fn upper_quantile_inverts_sf() {
        for &q in &[0.5, 0.1, 1e-3, 1e-9, 1e-200] {
            let z = normal_upper_quantile(q);
            let back = normal_sf(z);
            assert!(((back - q) / q).abs() < 1e-8, "q={q} back={back}");
        }
    }

    #[test]
    fn kolmogorov_branches_agree() {
        for &lam in &[0.6, 0.9, 1.18, 1.5] {
            let a = kolmogorov_sf_theta(lam);
            let b = kolmogorov_sf_alternating(lam);
            assert!((a - b).abs() < 1e-10, "λ={lam}: {a} vs {b}");
        }
        // Classical critical values.
        assert!((kolmogorov_sf(1.358) - 0.05).abs() < 5e-4);
        assert!((kolmogorov_sf(1.628) - 0.01).abs() < 5e-4);
    }
}
