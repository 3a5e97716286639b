//! Training-time filtering and relabelling of noisy-labelled instances.
//!
//! A pluggable classifier reports per-instance losses and class
//! probabilities every epoch. The [`engine`] fits a two-component Gaussian
//! mixture ([`gmm`]) to those losses to decide when to start acting and
//! when to freeze its thresholds, and removes or relabels suspicious
//! instances. [`noise`] injects controlled label noise, [`models`] provides
//! the classifiers, and [`eval`] runs experiment protocols and audits what
//! the engine did against the hidden clean labels.

pub mod cli;
pub mod dataset;
pub mod engine;
pub mod error;
pub mod eval;
pub mod gmm;
pub mod models;
pub mod noise;
pub mod rng;

pub use dataset::{gen_synthetic, load_dataset, save_dataset, LabeledDataset, Matrix};
pub use engine::{ActionLogEntry, EpochSnapshot, RafniConfig, RafniEngine};
pub use error::{RafniError, Result};
pub use gmm::{GmmFit, Gaussian};
pub use models::{Classifier, ClassifierKind, ClassifierSpec, OptimizerSpec};
pub use noise::{NoiseKind, NoiseReport, NoiseSpec};
