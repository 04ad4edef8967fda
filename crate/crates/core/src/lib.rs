//! Unified predictor-corrector (UniPC) samplers for diffusion ODEs.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases at the
//! crate root fix it to one of them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod error;
pub(crate) mod linalg;
mod scalar;

pub mod coeffs;
pub mod harness;
pub mod model;
pub mod schedule;
pub mod solver;

pub use coeffs::{BhVariant, CoefficientSystem, VaryingCoefficientMatrix};
pub use error::{Error, Result};
pub use model::{
    convert_parameterization, dynamic_threshold, Counted, Model, ModelSpec, Prediction,
    StateVector, SyntheticModel, Thresholding,
};
pub use scalar::Scalar;
pub use schedule::{NoiseSchedule, ScheduleKind, ScheduleSpec, SkipKind, TimeGrid};
pub use solver::{
    sample, sample_with, CorrectorMode, OrderSchedule, SampleOptions, SampleOutput, SolverConfig,
    Variant,
};

pub type NoiseScheduleF64 = NoiseSchedule<f64>;
pub type TimeGridF64 = TimeGrid<f64>;
pub type StateVectorF64 = StateVector<f64>;
pub type SyntheticModelF64 = SyntheticModel<f64>;

pub type NoiseScheduleF32 = NoiseSchedule<f32>;
pub type TimeGridF32 = TimeGrid<f32>;
pub type StateVectorF32 = StateVector<f32>;
pub type SyntheticModelF32 = SyntheticModel<f32>;
