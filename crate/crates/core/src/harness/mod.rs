//! Experiment drivers: Monte Carlo detection runs, SINR, mobility, output
//! files and the self-check suite.

pub mod detection;
pub mod metrics;
pub mod mobility;
pub mod output;
pub mod sinr;
pub mod trial;
pub mod validate;

pub use detection::{run_detection, DetectionPoint};
pub use mobility::{run_mobility, MobilityPoint};
pub use sinr::{run_sinr, BeamSource, Direction, SinrResult};
pub use trial::{detection_success, Variant};
