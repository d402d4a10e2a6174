//! Joint transmit-precoder and IRS phase design for secrecy outage
//! minimisation in a multi-antenna wiretap link.
//!
//! The eavesdropper's instantaneous channel is unknown; only its Rayleigh
//! statistics and large-scale fading enter the design. The crate provides
//! the closed-form outage probability and its Monte Carlo check, the
//! closed-form optimal precoder for a given phase configuration, an
//! alternating manifold-gradient optimiser, and an unsupervised neural
//! phase predictor.

pub mod ao;
pub mod beamform;
pub mod channel;
pub mod error;
pub mod neuralphase;
pub mod numerics;
pub mod secrecy;

pub use beamform::{optimal_beam, Method, Solution};
pub use channel::{ChannelRealization, SystemParams, WiretapDraw};
pub use error::{Error, Result};
pub use numerics::{CMat, CVec, Complex64};
pub use secrecy::{Beamformer, EvalResult, PhaseConfig};
