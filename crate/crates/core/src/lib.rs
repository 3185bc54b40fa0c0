pub mod aop;
pub mod crosscut;
pub mod demo;
pub mod manifest;
pub mod metrics;
pub mod middleware;
pub mod scalar;
pub mod scenario;
pub mod sim;

use num_rational::Rational64;

pub use manifest::{parse_manifest, write_manifest, ConcernManifest};
pub use metrics::CohesionReport;

pub type CohesionReportF64 = CohesionReport<f64>;
pub type CohesionReportF32 = CohesionReport<f32>;
pub type ExactCohesionReport = CohesionReport<Rational64>;
