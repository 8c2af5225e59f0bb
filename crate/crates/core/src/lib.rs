//! Computer-aided diagnosis pipeline over cortical morphometry tables.
//!
//! Features are ranked by one-way ANOVA, grown into subsets by cross-validated
//! F1, and classified by Gaussian discriminant analysis in two decision
//! spaces (left and right hemisphere) whose labels are fused with OR.
//!
//! ```no_run
//! use dualspace::pipeline::{cmd_run, RunConfig};
//!
//! let config = RunConfig {
//!     input: Some("cohort.csv".into()),
//!     seed: 7,
//!     ..RunConfig::default()
//! };
//! let out = cmd_run(&config)?;
//! println!("cv f1 = {:.4}", out.report.cv.metrics.f1);
//! # Ok::<(), dualspace::Error>(())
//! ```

pub mod anova;
pub mod cohort;
pub mod dual;
pub mod error;
pub mod evaluation;
pub mod gda;
pub mod linalg;
mod parallel;
pub mod pipeline;
pub mod rng;
pub mod selection;
pub mod special;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
