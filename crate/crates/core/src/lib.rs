//! Unbiased linear parameter estimation for block-structured inverse problems.
//!
//! The crate covers the whitened forward model and its unbiased operator,
//! MNE/sLORETA/UGE estimators, exact-reconstruction bounds, noncentral-F
//! weak-reconstruction probabilities, and two 2D test beds: a conductivity
//! disk with boundary sensors and a Fourier-sampled Shepp-Logan phantom.
//!
//! ```
//! use nalgebra::{DMatrix, DVector};
//! use unbiased_core::{whiten, BlockForwardModel, CovarianceSpec, SourceConfig};
//!
//! let l = BlockForwardModel::new(DMatrix::from_fn(6, 4, |i, j| ((i * 4 + j) as f64).sin()), 1)?;
//! let cov = CovarianceSpec::isotropic(4, 6, 0.1)?;
//! let wm = whiten(&l, &cov)?;
//! let y = l.apply(&SourceConfig::single(2, DVector::from_vec(vec![1.0]))?)?;
//! let z = wm.backproject(&wm.whiten_vector(&y)?)?;
//! let best = (0..4).max_by(|&a, &b| z.norms[a].total_cmp(&z.norms[b])).unwrap();
//! assert_eq!(best, 2);
//! # Ok::<(), unbiased_core::Error>(())
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod combinatorics;
pub mod disk;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod matrix_io;
pub mod model;
pub mod pgm;
pub mod phantom;
pub mod probability;
pub mod recoverability;
pub mod rng;
pub mod whitening;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use estimators::{
    localization_metrics, mne, sloreta_scores, uge, LocalizationError, MixtureEstimate, PointSource, SamplingMode,
    ScoreField, SetWeight, SloretaScores, UgeOptions,
};
pub use model::{
    correlated_noise_covariance, snr, synthesize, synthesize_at, BlockForwardModel, CovarianceSpec, NoiseKind,
    NoiseSpec, Observation, SourceConfig,
};
pub use phantom::{
    ec_project, fourier_sample, image_uge, radial_mask, relative_error, shepp_logan, split_bregman_tv, ImageGrid,
    SamplingMask, TvParams,
};
pub use probability::{
    ncf_cdf, snr_curves, snr_prob, spatial_prob_map, weak_recon_prob, weak_recon_prob_orthogonal, LambdaMode,
    NoncentralF, ProbabilityCurve, ProbabilityMap,
};
pub use recoverability::{
    brute_force_unique, coherence, lemma_conditions, unique_bound, unique_bound_complex, RecoveryReport, UniqueBound,
    UniquenessOracle,
};
pub use whitening::{build_sigma, whiten, whiten_with, Backprojection, SigmaForm, StrengthMap, WhitenedModel};
