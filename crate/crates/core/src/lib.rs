//! Modeling and analysis toolkit for modular tendon-driven soft arms.
//!
//! Every numeric routine is generic over [`Real`] (`f32` or `f64`); the
//! `*F64` aliases below are the concrete types the CLI and tests use.
//! Units are mm, g, N and rad throughout; degrees appear only in I/O.

pub mod calibration;
pub mod config;
pub mod error;
pub mod geom;
pub mod io;
pub mod kinematics;
pub mod mocap;
pub mod optim;
pub mod scalar;
pub mod statics;
pub mod workspace;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Vec3F64 = geom::Vec3<f64>;
pub type ArcParamsF64 = kinematics::ArcParams<f64>;
pub type TendonLayoutF64 = kinematics::TendonLayout<f64>;
pub type ActuationCommandF64 = kinematics::ActuationCommand<f64>;
pub type MaterialParamsF64 = statics::MaterialParams<f64>;
pub type SegmentSpecF64 = statics::SegmentSpec<f64>;
pub type LoadCaseF64 = statics::LoadCase<f64>;
pub type RodStateF64 = statics::RodState<f64>;
pub type EquilibriumResultF64 = statics::EquilibriumResult<f64>;
pub type PointCloudF64 = workspace::PointCloud<f64>;
pub type MocapTrajectoryF64 = mocap::MocapTrajectory<f64>;

pub type Vec3F32 = geom::Vec3<f32>;
pub type ArcParamsF32 = kinematics::ArcParams<f32>;
pub type PointCloudF32 = workspace::PointCloud<f32>;
