//! Seeded generators for every process the models are contrasted on.
//!
//! All samplers split their output into fixed-size chunks, each drawn from
//! its own ChaCha20 stream keyed by (seed, chunk index). The output therefore
//! depends only on the seed and the parameters, never on the thread count.

use crate::distributions::{LognormalModel, PowerLawModel};
use crate::error::{Error, Result};
use crate::par;
use crate::sample::{DurationSample, TimeUnit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp, Exp1, StandardNormal};
use std::fmt;
use std::sync::Arc;

const CHUNK: usize = 1 << 16;

/// Deterministic source of independent random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeededGenerator {
    seed: u64,
}

impl SeededGenerator {
    /// Engine identifier; bumped whenever the draw sequence for a seed changes.
    pub const ALGORITHM_ID: &'static str = "chacha20-streams/ziggurat/v1";

    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn algorithm_id(&self) -> &'static str {
        Self::ALGORITHM_ID
    }

    /// Independent stream number `index`.
    pub fn stream(&self, index: u64) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }

    /// A child generator with an unrelated seed, for nested work items
    /// such as bootstrap replicates.
    pub fn derive(&self, index: u64) -> Self {
        Self {
            seed: splitmix64(self.seed ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d))),
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn check_count(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::EmptySample)
    } else {
        Ok(())
    }
}

/// Draws `n` values chunk by chunk; `draw` maps a stream to one value.
fn chunked<F>(n: usize, g: &SeededGenerator, draw: F) -> Vec<f64>
where
    F: Fn(&mut ChaCha20Rng) -> f64 + Sync + Send,
{
    let mut out = vec![0.0; n];
    par::for_each_chunk_mut(&mut out, CHUNK, |ci, chunk| {
        let mut rng = g.stream(ci as u64);
        for v in chunk {
            *v = draw(&mut rng);
        }
    });
    out
}

/// `n` i.i.d. draws of e^N(μ, σ²).
pub fn sample_lognormal(m: &LognormalModel, n: usize, g: &SeededGenerator) -> Result<DurationSample> {
    check_count(n)?;
    let (mu, sigma) = (m.mu(), m.sigma());
    let values = chunked(n, g, |rng| {
        let z: f64 = StandardNormal.sample(rng);
        (mu + sigma * z).exp()
    });
    DurationSample::new(values, TimeUnit::seconds())
}

/// Inverse-cdf power-law draws τ·(1−U)^(−1/(γ−1)) with U in [0, 1).
pub fn sample_powerlaw(m: &PowerLawModel, n: usize, g: &SeededGenerator) -> Result<DurationSample> {
    check_count(n)?;
    let m = *m;
    let values = chunked(n, g, |rng| m.quantile(rng.gen::<f64>()));
    DurationSample::new(values, TimeUnit::seconds())
}

/// X = τ·e^Y with Y exponential of rate γ−1. Distributed exactly like
/// [`sample_powerlaw`], but drawn through an unrelated route.
pub fn sample_exp_of_exponential(
    gamma: f64,
    tau: f64,
    n: usize,
    g: &SeededGenerator,
) -> Result<DurationSample> {
    PowerLawModel::new(gamma, tau)?;
    check_count(n)?;
    let exp = Exp::new(gamma - 1.0).map_err(|e| Error::param(e.to_string()))?;
    let ln_tau = tau.ln();
    let values = chunked(n, g, |rng| (ln_tau + exp.sample(rng)).exp());
    DurationSample::new(values, TimeUnit::seconds())
}

/// Ascending exponential(rate) order statistics of size `n` (Rényi representation).
pub(crate) fn sorted_exponentials<R: Rng>(n: usize, rate: f64, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut acc = 0.0;
    for j in 0..n {
        let z: f64 = Exp1.sample(rng);
        acc += z / (n - j) as f64;
        out.push(acc / rate);
    }
    out
}

/// Ascending uniform(0,1) order statistics of size `n`.
pub(crate) fn sorted_uniforms<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut acc = 0.0;
    for _ in 0..n {
        let z: f64 = Exp1.sample(rng);
        acc += z;
        out.push(acc);
    }
    let z: f64 = Exp1.sample(rng);
    let total = acc + z;
    for v in &mut out {
        *v /= total;
    }
    out
}

/// Sampler for the log growth factor ξ = ln a of a Gibrat process.
pub trait LogFactorSampler: Send + Sync {
    fn sample(&self, rng: &mut ChaCha20Rng) -> f64;
    fn mean(&self) -> f64;
    fn std_dev(&self) -> f64;
}

/// Distribution of ξ_t. Normal unless a custom sampler is supplied.
#[derive(Clone)]
pub enum LogFactor {
    Normal { mean: f64, std_dev: f64 },
    Custom(Arc<dyn LogFactorSampler>),
}

impl fmt::Debug for LogFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LogFactor::Normal { mean, std_dev } => f
                .debug_struct("Normal")
                .field("mean", mean)
                .field("std_dev", std_dev)
                .finish(),
            LogFactor::Custom(s) => f
                .debug_struct("Custom")
                .field("mean", &s.mean())
                .field("std_dev", &s.std_dev())
                .finish(),
        }
    }
}

impl LogFactor {
    fn draw(&self, rng: &mut ChaCha20Rng) -> f64 {
        match self {
            LogFactor::Normal { mean, std_dev } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + std_dev * z
            }
            LogFactor::Custom(s) => s.sample(rng),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            LogFactor::Normal { mean, .. } => *mean,
            LogFactor::Custom(s) => s.mean(),
        }
    }

    pub fn std_dev(&self) -> f64 {
        match self {
            LogFactor::Normal { std_dev, .. } => *std_dev,
            LogFactor::Custom(s) => s.std_dev(),
        }
    }
}

/// Law of proportionate effect: S_t = a_t · S_{t−1} with a_t = e^(ξ_t) > 0.
#[derive(Debug, Clone)]
pub struct GibratProcess {
    pub s0: f64,
    pub steps: usize,
    pub agents: usize,
    pub log_factor: LogFactor,
}

impl GibratProcess {
    pub fn normal(s0: f64, steps: usize, agents: usize, mean: f64, std_dev: f64) -> Result<Self> {
        let p = Self {
            s0,
            steps,
            agents,
            log_factor: LogFactor::Normal { mean, std_dev },
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s0.is_finite() && self.s0 > 0.0) {
            return Err(Error::param(format!("initial size must be > 0, got {}", self.s0)));
        }
        if self.steps == 0 {
            return Err(Error::param("Gibrat process needs at least one step"));
        }
        if self.agents == 0 {
            return Err(Error::param("Gibrat process needs at least one agent"));
        }
        if let LogFactor::Normal { mean, std_dev } = self.log_factor {
            if !(mean.is_finite() && std_dev.is_finite() && std_dev >= 0.0) {
                return Err(Error::param("log-factor mean/std must be finite, std >= 0"));
            }
        }
        Ok(())
    }
}

/// Log-sizes of every agent at steps 0..=steps.
#[derive(Debug, Clone, PartialEq)]
pub struct GibratTrajectories {
    steps: usize,
    agents: usize,
    ln_sizes: Vec<f64>,
}

impl GibratTrajectories {
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    fn row(&self, agent: usize) -> &[f64] {
        let w = self.steps + 1;
        &self.ln_sizes[agent * w..(agent + 1) * w]
    }

    pub fn ln_size(&self, agent: usize, step: usize) -> f64 {
        self.row(agent)[step]
    }

    pub fn size(&self, agent: usize, step: usize) -> f64 {
        self.ln_size(agent, step).exp()
    }

    pub fn final_ln_sizes(&self) -> Vec<f64> {
        (0..self.agents).map(|a| self.ln_size(a, self.steps)).collect()
    }

    /// Final sizes S_t of every agent as a duration-like sample.
    pub fn final_sizes(&self) -> Result<DurationSample> {
        DurationSample::new(
            self.final_ln_sizes().into_iter().map(f64::exp).collect(),
            TimeUnit::custom(1.0),
        )
    }
}

/// Runs every agent's trajectory in log-space; agent `i` uses stream `i`.
pub fn run_gibrat(p: &GibratProcess, g: &SeededGenerator) -> Result<GibratTrajectories> {
    p.validate()?;
    let w = p.steps + 1;
    let ln_s0 = p.s0.ln();
    let mut ln_sizes = vec![0.0; p.agents * w];
    par::for_each_chunk_mut(&mut ln_sizes, w, |agent, row| {
        let mut rng = g.stream(agent as u64);
        row[0] = ln_s0;
        for t in 1..w {
            row[t] = row[t - 1] + p.log_factor.draw(&mut rng);
        }
    });
    Ok(GibratTrajectories {
        steps: p.steps,
        agents: p.agents,
        ln_sizes,
    })
}
