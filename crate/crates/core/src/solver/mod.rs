//! UniP / UniC / UniPC samplers.

mod config;
mod driver;
pub mod steps;

pub use config::{CorrectorMode, OrderSchedule, SolverConfig, Variant};
pub use driver::{sample, sample_with, SampleOptions, SampleOutput, StepTrace};
pub use steps::{
    ddim_step, unic_step, unip_step, unipc_v_step, Node, StepContext, Target, Weighting,
};
