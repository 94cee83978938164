//! Joint blind source separation of multi-subject datasets under the
//! joint / partially-joint / individual source model.
//!
//! The pipeline is: [`preprocess`] each subject down to a whitened `Z`, run
//! the deflation engine in [`engine`], then label every extracted source with
//! [`typing`]. [`simgen`] produces synthetic studies with ground truth and
//! [`metrics`] scores a decomposition against it. [`baseline`] holds the
//! joint/individual-only comparison algorithm.
//!
//! ```
//! use jpji::{simgen::ScenarioSpec, run_jpji_ica, AlgoConfig};
//!
//! let spec = ScenarioSpec { n_time: 60, ..ScenarioSpec::default() };
//! let (data, _truth) = jpji::simgen::generate_dataset(&spec).unwrap();
//! let dec = run_jpji_ica(&data, &AlgoConfig::default()).unwrap();
//! assert_eq!(dec.n_slots(), 6);
//! ```

// `!(x > 0.0)` is used on purpose so NaN is rejected along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Slot loops index several per-subject tables at once.
#![allow(clippy::needless_range_loop)]

pub mod baseline;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod numerics;
pub mod preprocess;
pub mod rng;
pub mod simgen;
pub mod types;
pub mod typing;

pub use engine::run_jpji_ica;
pub use error::{Error, Result};
pub use types::{
    AlgoConfig, ComponentPolicy, Decomposition, Estimator, GroundTruth, Sigma0, SourceKind,
    SourceLabel, SubjectDataset, Weights,
};
