//! Hyperspectral band selection by iterative wavelet-domain gradient sampling.
//!
//! The crate is organised bottom-up:
//!
//! - [`data`]: cube and label containers, file ingestion, synthetic scenes,
//!   mirror-padded patches, seeded splits and per-class undersampling.
//! - [`wavelet`]: orthonormal multilevel spectral DWT (Haar, Daubechies-4).
//! - [`classifier`]: one-hidden-layer patch classifier with exact gradients.
//! - [`iwgs`]: greedy mask-gradient channel selection.
//! - [`adversarial`]: Gaussian atmospheric noise and ℓ∞ PGD.
//! - [`metrics`]: confusion matrix, OA, AA and Cohen's κ.
//! - [`experiment`]: config-driven pipelines, patch-size and robustness sweeps.

pub mod adversarial;
pub mod classifier;
pub mod data;
pub mod error;
pub mod experiment;
pub mod iwgs;
pub mod metrics;
pub mod rng;
pub mod wavelet;

pub use adversarial::{atmospheric_noise, compound_perturb, pgd_attack, AttackConfig};
pub use classifier::{train, Activation, ClassifierParams, PatchObjective, TrainConfig};
pub use data::{HyperCube, LabelMap, Patch, SplitSpec, SyntheticSpec};
pub use error::{Error, ErrorKind, Result};
pub use experiment::{
    patch_sweep, render_map, robustness_sweep, run_pipeline, DataSource, ExperimentConfig,
    RunOptions, RunRecord, Stage,
};
pub use iwgs::{select, BudgetMode, Criterion, IwgsConfig, SelectionMask, SelectionTrace};
pub use metrics::{ClassReport, ConfusionMatrix};
pub use wavelet::{ChannelTransform, CoeffCube, Domain, Family, WaveletSpec};
