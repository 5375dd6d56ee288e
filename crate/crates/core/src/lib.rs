//! Simulation and analysis of random walks that avoid the convex hull of
//! their last `k` positions together with the origin.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: cone membership, admissibility and planar sectors.
//! - [`walk`]: samplers, the walk state machine and replicated runs.
//! - [`renewal`]: good-geometry detection and the block-splitting sampler.
//! - [`angle_chain`]: the planar unit-memory angle recursion and its exact speed.
//! - [`estimators`]: speed, direction, drift and renewal-based estimates.
//! - [`io`]: trace and summary formats.

pub mod angle_chain;
pub mod error;
pub mod estimators;
pub mod geometry;
pub mod io;
pub mod point;
pub mod quadrature;
pub mod renewal;
pub mod rng;
pub mod stats;
pub mod walk;

pub use angle_chain::{speed_2_1, Angle, SpeedMethod, SPEED_2_1, SPHERE_SPEED_2_1};
pub use error::{Error, Result};
pub use estimators::{DirectionSample, DriftProfile, RenewalCrossCheck, SpeedEstimate, SweepTable};
pub use geometry::{admissible_point, admissible_sector_2d, cone_contains, Arc, ConeGenerators, ConstraintMode};
pub use io::{SummaryDocument, TraceFormat, TraceRecord};
pub use point::Point;
pub use renewal::{GoodGeometryParams, RenewalRecord, RenewalReport, SplitRun};
pub use walk::{IncrementLaw, Sampler, Trajectory, Variant, WalkConfig, WalkState};
