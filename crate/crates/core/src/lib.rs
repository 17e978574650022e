//! # vlclink
//!
//! Forward simulator and analysis toolkit for a photodiode-based visible
//! light communication (VLC) receiver looking at a traffic-light
//! transmitter.
//!
//! The crate is organised as a chain of small modules:
//!
//! - [`geometry`] turns road-grid positions and receiver orientation modes
//!   into the line-of-sight angle set consumed by the optical model.
//! - [`optics`] implements the condenser-lens chain: angular field of view,
//!   thin-lens imaging of the lamp disk, image/photodiode overlap and the
//!   piecewise received-amplitude model.
//! - [`radiometry`] hosts the pluggable transmitter intensity pattern and
//!   the amplitude calibration scale.
//! - [`telecom`] maps amplitude to bit/packet error probabilities and
//!   solves for the effective field of view (EFOV) at a PER threshold.
//! - [`fitting`] contains the weighted nonlinear least-squares machinery
//!   for calibration-curve fits and reflection-isolation scan fits.
//! - [`catalog`], [`config`], [`sweep`] and [`cli`] wire everything into a
//!   config-driven command line tool with deterministic CSV output.

pub mod catalog;
pub mod cli;
pub mod config;
pub mod fitting;
pub mod geometry;
pub mod optics;
pub mod radiometry;
pub mod sweep;
pub mod telecom;

pub use catalog::{builtin_lenses, builtin_presets, CalibrationPreset, Lights};
pub use geometry::{los_angles, AngleSet, RxMode, ScenePoint};
pub use optics::{ImageGeometry, LensKind, LensSpec, PhotodiodeSpec, SourceSpec};
pub use radiometry::{PatternModel, RadiationPattern, TabulatedMap};
pub use telecom::{CalibrationCurve, Efov, PerResult, ScanAxis};

/// Crate version string embedded in every generated CSV header.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Unified error type for the whole crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Scene parameters violate the geometry invariants.
    #[error("invalid scene geometry: {0}")]
    Geometry(String),
    /// Thin-lens imaging is undefined for objects at or inside the focal length.
    #[error("object distance {distance_mm} mm is not beyond the focal length {focal_mm} mm")]
    ObjectInsideFocus { distance_mm: f64, focal_mm: f64 },
    /// The radiation pattern has no amplitude scale set yet.
    #[error("radiation pattern is not calibrated (no amplitude scale set)")]
    UncalibratedPattern,
    /// A tabulated pattern was queried outside its grid.
    #[error("query (alpha {alpha_deg} deg, beta {beta_deg} deg) lies outside the tabulated pattern grid")]
    PatternOutOfBounds { alpha_deg: f64, beta_deg: f64 },
    /// A tabulated pattern failed validation.
    #[error("invalid tabulated pattern: {0}")]
    InvalidPattern(String),
    /// Calibration is impossible because the model predicts no signal at the
    /// reference point.
    #[error("calibration reference produces zero model amplitude")]
    ZeroReferenceAmplitude,
    /// A lens label was not found in the catalog.
    #[error("unknown lens label '{0}'")]
    UnknownLens(String),
    /// Configuration file or flag values are unusable.
    #[error("config error: {0}")]
    Config(String),
    /// An input CSV is malformed.
    #[error("csv error in {path}: {message}")]
    CsvFormat { path: String, message: String },
    /// Optimizer ran out of iterations.
    #[error("fit did not converge after {iterations} iterations (cost {cost:.6e})")]
    FitDidNotConverge {
        iterations: usize,
        cost: f64,
        /// Last accepted iterate, in the same order as the fit's parameters.
        last_params: Vec<f64>,
    },
    /// Fit data cannot constrain the free parameters.
    #[error("degenerate fit data: {0}")]
    DegenerateFit(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 config, 3 fit, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Geometry(_)
            | Error::ObjectInsideFocus { .. }
            | Error::UncalibratedPattern
            | Error::PatternOutOfBounds { .. }
            | Error::InvalidPattern(_)
            | Error::ZeroReferenceAmplitude
            | Error::UnknownLens(_)
            | Error::Config(_) => 2,
            Error::FitDidNotConverge { .. } | Error::DegenerateFit(_) => 3,
            Error::CsvFormat { .. } | Error::Io(_) => 4,
        }
    }
}
