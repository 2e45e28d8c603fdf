//! Discovering POI name aliases from the mobility of the users who write them.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision for the common cases.

pub mod discovery;
pub mod distribution;
pub mod eval;
pub mod geo;
pub mod ingestion;
pub mod pipeline;
pub mod preprocess;
pub mod profile;
pub mod scalar;
pub mod serde_util;
pub mod synth;

pub use discovery::{AliasMatrix, Decision, Method, MetricConfig, ScoredPair};
pub use eval::{Calibration, EvalReport, LabelIndex};
pub use ingestion::Corpus;
pub use pipeline::{PrepareConfig, PreparedDataset, ThresholdSpec};
pub use preprocess::CanonicalMap;
pub use scalar::Scalar;
pub use synth::{SynthCity, SynthConfig};

pub type GeoPoint64 = geo::GeoPoint<f64>;
pub type GeoPoint32 = geo::GeoPoint<f32>;
pub type PlanarPoint64 = geo::PlanarPoint<f64>;
pub type PlanarPoint32 = geo::PlanarPoint<f32>;
pub type Window64 = geo::Window<f64>;
pub type BoundingBox64 = distribution::BoundingBox<f64>;
pub type BoundingBox32 = distribution::BoundingBox<f32>;
pub type Distribution64 = distribution::Distribution<f64>;
pub type Distribution32 = distribution::Distribution<f32>;
pub type DensityMatrix64 = distribution::DensityMatrix<f64>;
pub type Profile64 = profile::MobilityProfile<f64>;
pub type Profile32 = profile::MobilityProfile<f32>;
/// Exact ratio used for precision, recall and F1 comparisons.
pub type Ratio = num_rational::Ratio<u64>;
