//! Cutoff-rate analysis for two-dimensional constellations under mixed
//! Gaussian-impulsive noise.
//!
//! The crate is organised bottom-up:
//!
//! - [`special`]: gamma, beta, error function, Tricomi U, Gauss 2F1
//! - [`noise`]: the GS mixture model, baseband transform, sampler, GSNR
//! - [`oracle`]: polar quadrature ground truth for S-integrals, Z and the cutoff rate
//! - [`pla`]: chord/tangent piecewise-linear envelopes and division sequences
//! - [`bounds`]: closed-form bounds on the S-integrals, Z and the cutoff rate
//! - [`shaping`]: joint probabilistic/geometric shaping by projected gradient descent

pub mod bounds;
pub mod error;
pub mod noise;
pub mod oracle;
pub mod pla;
pub(crate) mod quadrature;
pub mod report;
pub mod shaping;
pub mod special;
pub mod verify;

pub use error::{Error, Result};
