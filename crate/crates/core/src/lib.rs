//! Geometry of the SPD manifold and image-set classification on it.
//!
//! The crate is organised bottom-up:
//!
//! * [`linalg`]: symmetric eigendecomposition and spectral matrix functions.
//! * [`metrics`]: affine-invariant and Log-Euclidean geometry.
//! * [`kernels`]: Log-Euclidean Mercer kernels and certified Gram matrices.
//! * [`descriptors`]: covariance (SPD) and block-kernel (CSPD) image-set descriptors.
//! * [`classifiers`]: nearest neighbour, kernel LDA and kernel sparse coding.
//! * [`ingestion`]: on-disk datasets, image loading and cross-validation splits.
//! * [`harness`]: end-to-end experiments and report tables.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifiers;
pub mod descriptors;
pub mod error;
pub mod harness;
pub mod ingestion;
pub mod kernels;
pub mod linalg;
pub mod metrics;
pub mod random;
pub mod synth;
pub mod textio;

pub use error::{Error, Result};
pub use linalg::{EigenDecomposition, SpdMatrix, SymMatrix};
pub use nalgebra;
pub use descriptors::{DescriptorConfig, ImageSet};
pub use kernels::{GramMatrix, KernelSpec};
pub use classifiers::{train, HyperParams, LabeledDescriptors, TrainedModel, Variant};
pub use harness::{run_experiment, ExperimentConfig, ExperimentReport, ReportFormat};
pub use ingestion::{DatasetManifest, SplitPlan};
pub use textio::Descriptor;
