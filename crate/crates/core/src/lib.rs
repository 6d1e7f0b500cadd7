//! Simulation and adaptive-measurement toolkit for single-particle
//! transmission microscopy with a deterministic ion source.
//!
//! The crate is organized around the measurement loop:
//!
//! - [`grid`]: joint parameter densities on regular grids, Bayes updates,
//!   entropy and posterior summaries.
//! - [`models`]: detection probability of one probe particle behind a knife
//!   edge or a circular hole, for a Gaussian beam of finite detector
//!   efficiency.
//! - [`design`]: expected information gain, recursive probe-position search
//!   and the adaptive probe → update loop with its JSON Lines run log.
//! - [`source`]: deterministic and Poissonian sources, detector thinning,
//!   dark counts and counting-statistics SNR.
//! - [`imaging`]: raster-scan imaging of masks and empirical SNR.
//! - [`estimation`]: maximum-likelihood fits of recorded probe data.
//! - [`cli`]: configuration files and the `ionprobe` command-line runs.
//!
//! Runnable walkthroughs of every capability live in the crate's `examples/`
//! directory.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod cli;
pub mod design;
pub mod error;
pub mod estimation;
pub mod grid;
pub mod imaging;
pub mod models;
pub mod rng;
pub mod source;
pub mod special;

pub use design::{
    maximize_landscape, optimize_design, run_experiment, simulate_experiment, utility, utility_by_entropy_difference,
    DesignWindow, ExperimentRun, ProbeRecord, ProbeSource, RunLog, SimulatedTruth, StopRule, UtilityContext,
};
pub use error::{Error, Result};
pub use estimation::{log_likelihood, mle_fit, Dataset, FitOptions, FitResult};
pub use grid::{make_grid, Marginal, ParameterAxis, ParameterGrid, PosteriorSummary, Prior};
pub use imaging::{empirical_snr, raster_scan, Bitmap, Image, ImageFormat, Mask, ScanConfig};
pub use models::{
    disc_containment, edge_likelihood, hole_likelihood, mask_transmission, BeamSpec, Design, EdgeModel, EdgeParams,
    HoleModel, HoleParams, MeasurementModel, Outcome,
};
pub use source::{
    compactify, sample_probe, snr_curve, snr_deterministic, snr_poisson, DetectorSpec, ProbeOutcome, SourceKind,
    SourceSpec,
};
