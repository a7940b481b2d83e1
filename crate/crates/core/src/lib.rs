//! Private online detection of community changes in censored block models.
//!
//! This crate is the algorithmic core: it samples two-community censored
//! block models (CBM), privatizes them under edge differential privacy
//! (randomized response for the local setting, stability-gated release for
//! the central setting), recovers communities with a low-rank semidefinite
//! relaxation or a spectral method, and runs adaptive CUSUM detectors on the
//! resulting streams. Closed-form recovery thresholds, information numbers
//! and delay/run-length bounds live in [`theory`].
//!
//! The crate is `no_std` with `alloc`. File formats, the Monte Carlo harness
//! and the command-line tool live in the `cbmdetect-sim` crate.
//!
//! ```
//! use cbmdetect_core::{model, ldp, recovery};
//!
//! let labels = model::LabelVector::balanced(20);
//! let params = model::CbmParams::new(20, 0.8, 0.1).unwrap();
//! let graph = model::sample_cbm(&params, &labels, 7).unwrap();
//! let noisy = ldp::perturb_graph(&graph, 3.0, 8).unwrap();
//! let est = recovery::spectral_estimate(&[noisy]).unwrap();
//! assert!(model::err(&est.labels, &labels).unwrap() <= 2);
//! ```
#![cfg_attr(not(test), no_std)]

extern crate alloc;

mod error;
mod math;

pub mod cdp;
pub mod detector;
pub mod ldp;
pub mod model;
pub mod recovery;
pub mod rng;
pub mod theory;

pub use error::{Error, Result};
pub use ldp::PrivacyBudget;
pub use model::{CbmParams, ChangePoint, ChangeScenario, LabelVector, TernaryGraph};
pub use recovery::{Estimator, RecoveryResult, SdpConfig};
