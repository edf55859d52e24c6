//! Unsupervised domain adaptation from labeled frame images to unlabeled
//! event-camera recordings.
//!
//! The pipeline encodes frames and events into a shared content space,
//! synthesizes fake events from frame content and event attributes, and
//! aligns the two domains adversarially. Two regularizers sit on top of the
//! adversarial baseline: augmentation invariance of every encoder's pooled
//! projection, and decorrelation of event content from event attributes.
//!
//! Module map:
//! - [`event_io`]: N-MNIST binary records and dataset manifests
//! - [`representation`]: event histograms and frame tensors
//! - [`augment`]: stochastic views for the self-supervised term
//! - [`nets`]: encoders, decoder, refinement net, discriminators, classifier
//! - [`losses`]: every loss term and the weighted total
//! - [`trainer`]: alternating optimization, LR schedule, checkpoints
//! - [`eval`]: accuracy, embedding export, domain probe, ablations

pub mod augment;
pub mod data;
pub mod error;
pub mod eval;
pub mod event_io;
pub mod losses;
pub mod nets;
pub mod representation;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};

/// Environment variable that forces deterministic, single-threaded execution.
pub const DETERMINISTIC_ENV: &str = "DAEC2_DETERMINISTIC";

/// Returns true when `DAEC2_DETERMINISTIC=1` is set.
pub fn deterministic_requested() -> bool {
    std::env::var(DETERMINISTIC_ENV).is_ok_and(|v| v == "1")
}

/// Pins tensor kernels to a single thread. Must run before the first tensor op
/// to take effect.
pub fn enable_deterministic_mode() {
    std::env::set_var("RAYON_NUM_THREADS", "1");
}
