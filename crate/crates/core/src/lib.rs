//! Bayesian-surprise training cutoff for aggregate power-meter data.
//!
//! Power readings are reduced to step events by a steady-state block filter,
//! clustered by a truncated variational Dirichlet-process Gaussian mixture,
//! and turned into two per-window surprise signals: the divergence between the
//! posterior predictives before and after the window (postdictive) and the
//! summed divergence of Markov transition rows as the window's events are
//! added (transitional). The cutoff is the first window after which both
//! normalized signals stay under their thresholds for `patience` windows.
//!
//! ```no_run
//! use nilm_surprise::cutoff::{run_pipeline, CutoffConfig};
//! use nilm_surprise::ingest::{load_series, IngestConfig};
//!
//! let loaded = load_series("house.csv", &IngestConfig::default())?;
//! let result = run_pipeline(&loaded.segments[0], &CutoffConfig::new(50), 7)?;
//! println!("{:?}", result.cutoff_timestamp);
//! # Ok::<(), nilm_surprise::Error>(())
//! ```

pub mod blockfilter;
pub mod cli;
pub mod config;
pub mod cutoff;
pub mod dpgmm;
pub mod error;
pub mod ingest;
mod io_util;
pub mod markov;
pub mod metrics;
pub mod surprise;
pub mod synthetic;

pub use error::{Error, Result};
