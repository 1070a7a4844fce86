//! Quick-count estimation of a chamber's composition from stratified samples
//! of polling stations, including samples that are still incomplete.
//!
//! Two pipelines share the seat rules in [`apportionment`]:
//!
//! * frequentist: [`mi`] (chained predictive-mean-matching imputation) on top
//!   of the mirror-match stratified [`bootstrap`], pooled with Rubin's rules;
//! * Bayesian: the conjugate truncated-normal/gamma model in [`bayes`] with
//!   stratum-level imputation of sufficient statistics from [`poststrat`].
//!
//! [`design`] simulates sampling-design error bounds and [`replay`] drives
//! both pipelines over an election-night arrival log.

pub mod apportionment;
pub mod bayes;
pub mod bootstrap;
pub mod catalog;
pub mod design;
pub mod error;
pub mod interval;
pub mod io;
pub mod mi;
pub mod par;
pub mod poststrat;
pub mod replay;
pub mod rng;
pub mod sampleframe;
pub mod synth;

pub use error::{Error, Result};
