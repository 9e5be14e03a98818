//! Synthetic marker data: spline trajectories, rendered volumes and
//! sequence datasets.

mod dataset;
mod render;
mod spline;
mod trajectory;

pub use dataset::{build_dataset, fit_normalization, read_config, DataConfig, Dataset, ModeView, SplitTag, Splits, FORMAT_VERSION, MANIFEST};
pub use render::{render_volume, PhantomConfig};
pub use spline::SplinePath;
pub use trajectory::{generate_knots, TrajectoryConfig};
