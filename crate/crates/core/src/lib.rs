//! Power-law and lognormal models of human inter-event times.
//!
//! The crate fits both families to duration samples, discriminates between
//! them by likelihood ratio, simulates the generating processes (lognormal,
//! power-law, exponential-of-exponential, Gibrat multiplicative growth) and
//! measures how binning and unit changes deform a lognormal sample into an
//! apparent power-law.
//!
//! Data-parallel inner loops (xmin scans, bootstrap replicates, chunked
//! sampling, bin counting) run on rayon when the `parallel` feature is on and
//! fall back to plain iterators otherwise. Results are identical either way.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod binning;
pub mod distributions;
pub mod error;
pub mod estimation;
pub mod ingestion;
pub mod optimize;
pub mod par;
pub mod sample;
pub mod special;
pub mod synthesis;

pub use binning::{BinGrid, Histogram};
pub use distributions::{LognormalModel, PowerLawModel};
pub use error::{Error, Result};
pub use estimation::{ComparisonReport, Family, FitReport, Verdict};
pub use sample::{DurationSample, TimeUnit};
pub use synthesis::{GibratProcess, SeededGenerator};
