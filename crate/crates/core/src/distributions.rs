//! The two model families: a pure power-law on [τ, ∞) and the lognormal.
//!
//! Densities are evaluated in log-space and exponentiated only on return, so
//! parameters around μ ≈ 10, σ ≈ 3 (seconds-scale human activity data) never
//! under- or overflow intermediate terms.

use crate::error::{Error, Result};
use crate::special::{normal_cdf, normal_sf, LN_SQRT_2PI};
use serde::{Deserialize, Serialize};

/// Power-law density c·t^(−γ) on [τ, ∞) with c = (γ−1)·τ^(γ−1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawModel {
    gamma: f64,
    tau: f64,
}

impl PowerLawModel {
    pub fn new(gamma: f64, tau: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 1.0) {
            return Err(Error::param(format!(
                "power-law exponent must be > 1, got {gamma}"
            )));
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::param(format!(
                "power-law lower bound must be > 0, got {tau}"
            )));
        }
        Ok(Self { gamma, tau })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Normalization constant c.
    pub fn normalization(&self) -> f64 {
        self.ln_normalization().exp()
    }

    fn ln_normalization(&self) -> f64 {
        (self.gamma - 1.0).ln() + (self.gamma - 1.0) * self.tau.ln()
    }

    /// Density at `t`. Requesting it below τ is a domain error, not zero.
    pub fn pdf(&self, t: f64) -> Result<f64> {
        self.ln_pdf(t).map(f64::exp)
    }

    pub fn ln_pdf(&self, t: f64) -> Result<f64> {
        if !(t >= self.tau) {
            return Err(Error::domain("t", t, "below the power-law lower bound"));
        }
        Ok(self.ln_pdf_unchecked(t.ln()))
    }

    /// ln f at `ln_t`, no support check.
    #[inline]
    pub(crate) fn ln_pdf_unchecked(&self, ln_t: f64) -> f64 {
        self.ln_normalization() - self.gamma * ln_t
    }

    /// Pr[X ≤ t]; zero below τ.
    pub fn cdf(&self, t: f64) -> f64 {
        if t <= self.tau {
            0.0
        } else {
            -(((1.0 - self.gamma) * (t / self.tau).ln()).exp_m1())
        }
    }

    /// Pr[X > t]; one below τ.
    pub fn sf(&self, t: f64) -> f64 {
        if t <= self.tau {
            1.0
        } else {
            ((1.0 - self.gamma) * (t / self.tau).ln()).exp()
        }
    }

    /// Pr[X > κ] = (κ/τ)^(1−γ): how much mass a claimed upper cutoff κ leaves out.
    pub fn tail_probability(&self, kappa: f64) -> Result<f64> {
        if !(kappa >= self.tau) {
            return Err(Error::domain("kappa", kappa, "below the power-law lower bound"));
        }
        Ok(self.sf(kappa))
    }

    /// Inverse cdf: τ·(1−u)^(−1/(γ−1)).
    pub fn quantile(&self, u: f64) -> f64 {
        self.tau * (-(-u).ln_1p() / (self.gamma - 1.0)).exp()
    }
}

/// Lognormal law of e^N(μ, σ²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LognormalModel {
    mu: f64,
    sigma: f64,
}

/// Coefficients of ln f(t) = a2·(ln t)² + a1·ln t + a0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLogQuadratic {
    pub a2: f64,
    pub a1: f64,
    pub a0: f64,
}

impl LogLogQuadratic {
    pub fn eval(&self, ln_t: f64) -> f64 {
        (self.a2 * ln_t + self.a1) * ln_t + self.a0
    }
}

impl LognormalModel {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::param(format!("lognormal mu must be finite, got {mu}")));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::param(format!(
                "lognormal sigma must be > 0, got {sigma}"
            )));
        }
        Ok(Self { mu, sigma })
    }

    /// Parameters matching a given mean and variance.
    pub fn from_moments(mean: f64, variance: f64) -> Result<Self> {
        if !(mean.is_finite() && mean > 0.0) {
            return Err(Error::domain("mean", mean, "must be positive"));
        }
        if !(variance.is_finite() && variance > 0.0) {
            return Err(Error::domain("variance", variance, "must be positive"));
        }
        let s2 = (variance / (mean * mean)).ln_1p();
        Self::new(mean.ln() - 0.5 * s2, s2.sqrt())
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    #[inline]
    fn z(&self, ln_t: f64) -> f64 {
        (ln_t - self.mu) / self.sigma
    }

    pub fn pdf(&self, t: f64) -> Result<f64> {
        self.ln_pdf(t).map(f64::exp)
    }

    pub fn ln_pdf(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::domain("t", t, "lognormal support is t > 0"));
        }
        Ok(self.ln_pdf_unchecked(t.ln()))
    }

    #[inline]
    pub(crate) fn ln_pdf_unchecked(&self, ln_t: f64) -> f64 {
        let z = self.z(ln_t);
        -0.5 * z * z - self.sigma.ln() - LN_SQRT_2PI - ln_t
    }

    /// Φ((ln t − μ)/σ).
    pub fn cdf(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::domain("t", t, "lognormal cdf needs t >= 0"));
        }
        if t == 0.0 {
            return Ok(0.0);
        }
        Ok(normal_cdf(self.z(t.ln())))
    }

    /// Pr[X > t] for t > 0.
    pub fn sf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            1.0
        } else {
            normal_sf(self.z(t.ln()))
        }
    }

    pub fn mean(&self) -> f64 {
        (self.mu + 0.5 * self.sigma * self.sigma).exp()
    }

    pub fn variance(&self) -> f64 {
        let s2 = self.sigma * self.sigma;
        (2.0 * self.mu + s2).exp() * s2.exp_m1()
    }

    /// (mean, variance).
    pub fn moments(&self) -> (f64, f64) {
        (self.mean(), self.variance())
    }

    /// Location of the density maximum, e^(μ−σ²).
    pub fn mode(&self) -> f64 {
        (self.mu - self.sigma * self.sigma).exp()
    }

    /// Local power-law exponent α(t) = 1 + (ln t − 2μ)/(2σ²), so that
    /// f(t) = prefactor · t^(−α(t)).
    pub fn effective_exponent(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::domain("t", t, "lognormal support is t > 0"));
        }
        Ok(1.0 + (t.ln() - 2.0 * self.mu) / (2.0 * self.sigma * self.sigma))
    }

    /// e^(−μ²/(2σ²)) / (σ√(2π)), the constant in front of t^(−α(t)).
    pub fn power_law_prefactor(&self) -> f64 {
        self.ln_power_law_prefactor().exp()
    }

    /// ln of [`power_law_prefactor`](Self::power_law_prefactor), finite where the prefactor underflows.
    pub fn ln_power_law_prefactor(&self) -> f64 {
        let s2 = self.sigma * self.sigma;
        -(self.mu * self.mu) / (2.0 * s2) - self.sigma.ln() - LN_SQRT_2PI
    }

    /// Interval on which |α(t) − 1| ≤ ε: [e^(2μ−2σ²ε), e^(2μ+2σ²ε)].
    pub fn power_law_window(&self, epsilon: f64) -> (f64, f64) {
        let half = 2.0 * self.sigma * self.sigma * epsilon;
        ((2.0 * self.mu - half).exp(), (2.0 * self.mu + half).exp())
    }

    pub fn loglog_coefficients(&self) -> LogLogQuadratic {
        let s2 = self.sigma * self.sigma;
        LogLogQuadratic {
            a2: -1.0 / (2.0 * s2),
            a1: self.mu / s2 - 1.0,
            a0: -(LN_SQRT_2PI + self.sigma.ln()) - self.mu * self.mu / (2.0 * s2),
        }
    }
}

/// Either fitted family, for code that treats them uniformly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Model {
    PowerLaw(PowerLawModel),
    Lognormal(LognormalModel),
}

impl Model {
    /// Pr[X ≤ t], zero outside the support.
    pub fn cdf(&self, t: f64) -> f64 {
        match self {
            Model::PowerLaw(m) => m.cdf(t),
            Model::Lognormal(m) => {
                if t <= 0.0 {
                    0.0
                } else {
                    normal_cdf((t.ln() - m.mu) / m.sigma)
                }
            }
        }
    }

    pub fn sf(&self, t: f64) -> f64 {
        match self {
            Model::PowerLaw(m) => m.sf(t),
            Model::Lognormal(m) => m.sf(t),
        }
    }

    /// Pr[a ≤ X < b], computed from the survival side in the upper tail.
    pub fn interval(&self, a: f64, b: f64) -> f64 {
        match self {
            Model::PowerLaw(m) => (m.sf(a) - m.sf(b)).max(0.0),
            Model::Lognormal(m) => {
                let za = if a <= 0.0 { f64::NEG_INFINITY } else { (a.ln() - m.mu) / m.sigma };
                let zb = if b <= 0.0 { f64::NEG_INFINITY } else { (b.ln() - m.mu) / m.sigma };
                crate::special::normal_interval(za, zb).max(0.0)
            }
        }
    }
}

impl From<PowerLawModel> for Model {
    fn from(m: PowerLawModel) -> Self {
        Model::PowerLaw(m)
    }
}

impl From<LognormalModel> for Model {
    fn from(m: LognormalModel) -> Self {
        Model::Lognormal(m)
    }
}
