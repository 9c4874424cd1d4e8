//! Service-delay model and cache-placement optimizer for layered (SVC super
//! layer) video delivery over a three-tier network: D2D helpers, small-cell
//! base stations (SBS) and macro base stations (MBS).
//!
//! The numerical core is generic over the scalar type through [`Real`]
//! (`f32` or `f64`); the aliases at the crate root fix it to `f64`, which is
//! what the Monte-Carlo tooling and the CLI use.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod content;
pub mod delay;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod grid;
pub mod mc;
pub mod optimizer;
pub mod policy;
pub mod quadrature;
pub mod scalar;

pub use error::{Error, Result};
pub use grid::LayerGrid;
pub use scalar::Real;

pub type ContentLibrary = content::ContentLibrary<f64>;
pub type TierGeometry = geometry::TierGeometry<f64>;
pub type NetworkGeometry = geometry::NetworkGeometry<f64>;
pub type RadioConfig = geometry::RadioConfig<f64>;
pub type TierLink = geometry::TierLink<f64>;
pub type Grid = LayerGrid<f64>;
pub type CacheBudgets = delay::CacheBudgets<f64>;
pub type DelayModel = delay::DelayModel<f64>;
pub type DelayBreakdown = delay::DelayBreakdown<f64>;
pub type CachingPolicy = policy::CachingPolicy<f64>;
pub type OptimizerConfig = optimizer::OptimizerConfig<f64>;
pub type OptimizerResult = optimizer::OptimizerResult<f64>;
pub type SimConfig = mc::SimConfig;
pub type EstimatorResult = mc::EstimatorResult;
pub use config::{ExperimentConfig, SweepSpec, SweepVar};

pub type ContentLibraryF32 = content::ContentLibrary<f32>;
pub type TierGeometryF32 = geometry::TierGeometry<f32>;
