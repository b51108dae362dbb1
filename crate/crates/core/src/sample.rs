use crate::error::{Error, Result};
use crate::par;
use serde::{Deserialize, Serialize};

/// The unit a sample's durations are expressed in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeUnit {
    pub label: String,
    /// Length of one unit in seconds.
    pub seconds_per_unit: f64,
}

impl TimeUnit {
    pub fn seconds() -> Self {
        Self {
            label: "seconds".into(),
            seconds_per_unit: 1.0,
        }
    }

    pub fn minutes() -> Self {
        Self {
            label: "minutes".into(),
            seconds_per_unit: 60.0,
        }
    }

    pub fn hours() -> Self {
        Self {
            label: "hours".into(),
            seconds_per_unit: 3600.0,
        }
    }

    pub fn custom(seconds_per_unit: f64) -> Self {
        Self {
            label: format!("x{seconds_per_unit}s"),
            seconds_per_unit,
        }
    }

    /// Unit after multiplying every value by `b`: one new unit is 1/b old units.
    pub fn scaled(&self, b: f64) -> Self {
        let spu = self.seconds_per_unit / b;
        for known in [Self::seconds(), Self::minutes(), Self::hours()] {
            if (known.seconds_per_unit - spu).abs() <= 1e-12 * spu {
                return known;
            }
        }
        Self::custom(spu)
    }
}

impl Default for TimeUnit {
    fn default() -> Self {
        Self::seconds()
    }
}

/// Sorted, strictly positive inter-event durations.
#[derive(Debug, Clone, PartialEq)]
pub struct DurationSample {
    values: Vec<f64>,
    unit: TimeUnit,
}

impl DurationSample {
    /// Builds a sample from unsorted values. Rejects empty input and any value
    /// that is not finite and positive.
    pub fn new(mut values: Vec<f64>, unit: TimeUnit) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySample);
        }
        if let Some(&bad) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::domain("duration", bad, "durations must be finite and > 0"));
        }
        par::sort_f64(&mut values);
        Ok(Self { values, unit })
    }

    /// Seconds-unit convenience constructor.
    pub fn from_seconds(values: Vec<f64>) -> Result<Self> {
        Self::new(values, TimeUnit::seconds())
    }

    /// Caller guarantees sorted, positive, non-empty.
    pub(crate) fn from_sorted_unchecked(values: Vec<f64>, unit: TimeUnit) -> Self {
        debug_assert!(!values.is_empty());
        debug_assert!(values.windows(2).all(|w| w[0] <= w[1]));
        Self { values, unit }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn unit(&self) -> &TimeUnit {
        &self.unit
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Natural logs of the values, in sample order.
    pub fn ln_values(&self) -> Vec<f64> {
        let mut out = self.values.clone();
        par::for_each_chunk_mut(&mut out, 1 << 16, |_, c| {
            for v in c {
                *v = v.ln();
            }
        });
        out
    }

    /// Values ≥ `xmin` (a suffix, since the sample is sorted).
    pub fn tail(&self, xmin: f64) -> &[f64] {
        let start = self.values.partition_point(|&v| v < xmin);
        &self.values[start..]
    }

    pub fn distinct_count(&self) -> usize {
        1 + self.values.windows(2).filter(|w| w[0] != w[1]).count()
    }
}
