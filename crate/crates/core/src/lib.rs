//! Adversarial robustness of modulation classifiers.
//!
//! Synthesizes labelled I/Q frames, trains a dense ReLU network and eight
//! classical classifiers on them, crafts C-W L2 and FGSM
//! adversarial examples against the network, and measures how accuracy
//! per SNR changes when those examples are fed to every classifier.

pub mod attacks;
pub mod classical;
pub mod error;
pub mod eval;
pub mod mlp;
pub mod numerics;
pub mod signal;

pub use error::{Error, Result};
