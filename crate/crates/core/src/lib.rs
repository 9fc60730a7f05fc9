//! Occupancy prediction for EV charging stations from the real-time
//! occupancy of neighboring stations.
//!
//! [`ingest`] turns plug/unplug events into an hourly occupancy grid.
//! [`matrixize`] cuts the grid into leave-one-station-out datasets.
//! [`logreg`] is a single-neuron logistic regression, trained on a
//! time-of-day dependent window chosen by [`window`].
//! [`eval`] benchmarks it against the models in [`baselines`].
//! [`synth`] produces calibrated synthetic event logs.

pub mod baselines;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod logreg;
pub mod matrixize;
pub mod par;
pub mod synth;
pub mod window;

pub use error::{Error, Result};
pub use eval::{BenchmarkConfig, EvalReport, Model};
pub use ingest::{EventRecord, OccupancyGrid};
pub use logreg::{DerivativeMode, TrainConfig, WeightVector};
pub use matrixize::Dataset;
pub use par::ExecMode;
pub use synth::SynthConfig;
pub use window::{TrainingWindow, WindowPolicy};
