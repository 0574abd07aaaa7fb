//! Robust domain adaptation laboratory.
//!
//! A desk-scale pipeline for studying unsupervised domain adaptation when
//! the labeled source data carries label and feature corruption:
//!
//! - [`matrix`] / [`mlp`] / [`loss`] / [`optim`]: a minimal dense MLP engine
//!   with exact reverse-mode gradients, generic over the scalar type;
//! - [`datagen`]: synthetic shifted source/target domain pairs with
//!   controlled, ground-truth-flagged corruption;
//! - [`curriculum`]: the offline curriculum filter — record per-example
//!   losses over early training epochs, threshold the per-class averages,
//!   emit binary sample weights;
//! - [`pmd`]: proxy-margin-discrepancy adversarial training, a three-head
//!   min-max game between a representation, a classifier, and an
//!   adversarial classifier mediated by a low-loss proxy subset;
//! - [`diagnostics`]: proxy-A-distance estimation, loss histograms by noise
//!   category, accuracy metrics, embedding export;
//! - [`harness`]: config-driven experiment runner behind the `rda` CLI.
//!
//! The numeric core is generic over [`num::Scalar`] (`f32` or `f64`); the
//! pipeline itself runs at the crate-level default [`Real`] = `f64`, which
//! all stated tolerances assume.

pub mod curriculum;
pub mod datagen;
pub mod diagnostics;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod io;
pub mod loss;
pub mod matrix;
pub mod mlp;
pub mod num;
pub mod optim;
pub mod pmd;

/// Scalar precision the pipeline runs at.
pub type Real = f64;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use mlp::{GradBundle, Layer, Mlp, Trace};
pub use num::Scalar;
pub use optim::SgdNesterov;
