//! Trajectory bundles over several runs, the degrees-of-freedom crossing
//! statistic, and curve export.

mod bundle;
mod crossing;
mod export;

pub use bundle::{build_bundle, build_named_bundle, RunSeries, Series, TrajectoryBundle};
pub use crossing::{crossing_report, CrossingReport};
pub use export::{bundle_from_csv, bundle_to_csv, bundle_to_svg, export_curves, CurveFormat};
