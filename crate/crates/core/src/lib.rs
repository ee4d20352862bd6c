//! Partial identification of treatment effects for always-observed units in
//! two-group, two-period panels with endogenous sample selection.
//!
//! The crate is organised bottom-up:
//!
//! - [`dataset`]: panel ingestion, validation and tallies.
//! - [`empirical`]: ECDF, generalized-inverse quantiles and trimmed means.
//! - [`strata`]: always-observed shares per group and stratum classification.
//! - [`bounds`]: trimming bounds (difference-in-differences and
//!   changes-in-changes) plus the complete-case contrasts.
//! - [`inference`]: stratified bootstrap and Imbens–Manski intervals.
//! - [`simulate`]: data-generating processes with known truth and
//!   coverage studies.

pub mod bounds;
pub mod dataset;
pub mod empirical;
mod error;
pub mod inference;
pub mod simulate;
pub mod strata;

pub use bounds::{BoundsResult, Estimator, Method};
pub use dataset::{DataError, Direction, Group, PanelDataset, Schema, UnitRecord};
pub use error::EstimationError;
pub use strata::StrataProportions;
