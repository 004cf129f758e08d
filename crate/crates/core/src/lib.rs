//! Single-look polarimetric SAR covariance estimation with guided nonlocal means.
//!
//! Each output pixel's 3x3 covariance is a weighted mean of outer products
//! `s s^H` drawn from its search window. Candidates are scored by a
//! polarimetric patch dissimilarity on the SLC data and an optical patch
//! dissimilarity on a coregistered guide image, both normalised by
//! percentile thresholds computed from the image itself.
//!
//! ```no_run
//! use pgnlm::{builtin_scene, calibrate, estimate_image, generate_scene, PgnlmConfig};
//!
//! let scene = generate_scene(&builtin_scene("edge2", 64, 7)?)?;
//! let cfg = PgnlmConfig::default();
//! let calib = calibrate(&scene.slc, &scene.guide, &cfg)?;
//! let (cov, diagnostics) = estimate_image(&scene.slc, Some(&scene.guide), &cfg, &calib)?;
//! # Ok::<(), pgnlm::Error>(())
//! ```

pub mod analysis;
pub mod calibration;
pub mod container;
pub mod dissimilarity;
pub mod error;
pub mod estimator;
pub mod hermitian;
pub mod simulator;
pub mod types;

pub use analysis::{
    crossval_classify, enl, extract_features, matrix_error, Classifier, CvConfig, CvReport, FeatureVector,
    LabeledSet, MatrixErrorSummary,
};
pub use calibration::{
    calibrate, calibrate_with, diagonal_sample_positions, CalibrationResult, SamplingMode,
};
pub use container::{read_container, write_container, Raster, RasterKind};
pub use dissimilarity::{optical_patch_dissim, pgnlm_weight, polsar_patch_dissim, vector_dissim};
pub use error::{Error, Result};
pub use estimator::{
    boxcar, estimate_image, estimate_pixel, select_predictors, Estimator, EstimatorDiagnostics, PgnlmConfig,
    PixelEstimate,
};
pub use hermitian::HermitianMatrix3;
pub use simulator::{builtin_scene, generate_scene, sample_target_vector, Scene, SceneSpec};
pub use types::{
    BorderPolicy, CovarianceField, GuideImage, LabelRaster, Patch, Pixel, ScatteringImage, TargetVector,
};
