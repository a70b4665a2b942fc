//! Myoelectric control pipeline trained on continuous dynamic data.
//!
//! The crate covers the whole chain, from synthetic multichannel sEMG to a
//! closed-loop 3DoF Fitts' law evaluation:
//!
//! ```text
//! dataset  -> dsp (band-pass + notch, framing)
//!          -> features (LSF4 + MAV, standardization)
//!          -> labeling (ramp relabel, CRT-delayed continuous labels)
//!          -> models (LDA, LSTM backbone + softmax head) / ssl (VICReg)
//!          -> control (rejection, proportional velocity)
//!          -> fitts (environment, simulated user, metrics)
//!          -> analysis (error rates, PCA, Latin square, RM-ANOVA, BY, Cohen's d)
//! ```
//!
//! [`experiment`] wires the modules into the five-classifier study used by
//! the `myo` command line tool.

pub mod analysis;
pub mod control;
pub mod dataset;
pub mod dsp;
pub mod error;
pub mod experiment;
pub mod features;
pub mod fitts;
pub mod labeling;
pub mod models;
pub mod rng;
pub mod ssl;

pub use error::{Error, Result};
