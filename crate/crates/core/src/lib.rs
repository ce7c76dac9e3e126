//! Simulation toolkit for Liouville quantum gravity metric balls on a
//! discrete Gaussian free field.
//!
//! The pipeline is: sample a field ([`gff`]), turn it into a first-passage
//! metric ([`metric`]), grow a ball around the origin, and measure the
//! Euclidean and quantum dimensions of its boundary ([`fractal`]) together
//! with the thick-point spectrum ([`thickpoints`]). Closed-form predictions
//! live in [`formulas`]; [`oracle`] holds slow reference implementations
//! used by the test suites; [`harness`] drives reproducible experiments.

pub mod formulas;
pub mod fractal;
pub mod gff;
pub mod grid;
pub mod harness;
pub mod io;
pub mod metric;
pub mod oracle;
pub mod stats;
pub mod thickpoints;

pub use formulas::{DGammaModel, GammaParams};
pub use gff::{FieldGrid, Normalization, Sampler};
pub use grid::{GridGeometry, Point, Rect};
pub use metric::{DistanceField, MetricBall, MetricConfig, WeightGrid};
