//! Differentially private Gaussian mixture estimation with the Private
//! Populous Estimator.
//!
//! The crate is generic over the scalar type through [`Real`], implemented
//! for `f32` and `f64`. Aliases for the common concrete types live at the
//! crate root.

pub mod audit;
pub mod calibration;
pub mod dataset;
pub mod error;
pub mod learn;
pub mod linalg;
pub mod masking;
pub mod matching;
pub mod metrics;
pub mod model;
pub mod ppe;
pub mod private_fit;
pub mod random;
pub mod scalar;

pub use audit::{audit_concentration, audit_indistinguishability, audit_triangle, AuditReport};
pub use calibration::{
    calibrate_gamma, calibrate_mask_config, compose_epsilon, min_subsets, ppe_threshold, CalibrationInput,
};
pub use dataset::Dataset;
pub use error::{Error, Result};
pub use learn::{em_fit, make_separated_gmm, sample_gmm, LearnerOptions};
pub use linalg::{Matrix, SymMatrix};
pub use masking::{mask_gmm, MaskConfig};
pub use metrics::{dist_comp, dist_mixture, dist_mixture_bruteforce, SemimetricParams};
pub use model::{Component, Gmm};
pub use ppe::{ppe_run, BotReason, Diagnostics, PpeConfig, PpeOutcome, Verdict};
pub use private_fit::{fit_gmm_private, plan_fit, FitPlan, PrivateFitConfig};
pub use random::{RandomStream, TLapParams};
pub use scalar::Real;

pub type Gmm64 = Gmm<f64>;
pub type Gmm32 = Gmm<f32>;
pub type Component64 = Component<f64>;
pub type Component32 = Component<f32>;
pub type SymMatrix64 = SymMatrix<f64>;
pub type SymMatrix32 = SymMatrix<f32>;
pub type Dataset64 = Dataset<f64>;
pub type Dataset32 = Dataset<f32>;
