//! Geometry of the pre-softmax feature space.
//!
//! Class loci cut out by differential vectors, softmax sensitivity to the
//! norm and orientation of a feature vector, angular overfitting metrics, and
//! a desk-scale trainer and fusion harness that exercise them end to end.
//!
//! The analytic modules are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix `f64`.

pub mod cli;
pub mod division;
pub mod error;
pub mod fusion;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod scalar;
pub mod sensitivity;
pub mod toytrain;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type FeatureVector = geometry::FeatureVector<f64>;
pub type ClassifierHead = geometry::ClassifierHead<f64>;
pub type PlaneOfVariations = geometry::PlaneOfVariations<f64>;
pub type ProjectedWeight = geometry::ProjectedWeight<f64>;
pub type DifferentialVectorSet = division::DifferentialVectorSet<f64>;
pub type SensitivityResult = sensitivity::SensitivityResult<f64>;
pub type ResponseSurface = sensitivity::ResponseSurface<f64>;
pub type LabeledFeatureSet = metrics::LabeledFeatureSet<f64>;
pub type MetricsReport = metrics::MetricsReport<f64>;
pub type PointCloudInstance = metrics::PointCloudInstance<f64>;
