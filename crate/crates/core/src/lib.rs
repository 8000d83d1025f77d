//! Inference for Fleming-Viot hidden Markov models with Dirichlet-process
//! mixture states: exact and Monte Carlo filtering, smoothing and prediction.

pub mod cli;
pub mod death;
pub mod diagnostics;
pub mod error;
pub mod filtering;
pub mod io;
pub mod lattice;
pub mod mc;
pub mod numeric;
pub mod posterior;
pub mod smoothing;
pub mod synth;

pub use error::{Error, Result};
pub use filtering::{filter_dataset, Dataset, InferenceOptions, Mode, ObservationBatch};
pub use lattice::{Baseline, FvddpState, Node, TypeRegistry};
pub use smoothing::{smooth_dataset, smooth_exact, smooth_mc};
