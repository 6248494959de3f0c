//! Reduced-model motion synthesis for quadruped locomotion.
//!
//! The crate builds dynamically consistent reference motions by solving a
//! finite-horizon trajectory optimization over a variable-height inverted
//! pendulum, scores motions with a multiplicative imitation-reward stack,
//! and validates the pipeline with a receding-horizon control harness on
//! the same reduced model.
//!
//! All numeric layers are generic over the scalar type (`f32`/`f64`); the
//! aliases at the crate root pin the common aggregates to `f64`, which is
//! what the CLI and the file formats use.

// Validation deliberately writes `!(x > 0)` instead of `x <= 0`: the
// negated form also rejects NaN inputs. Leg loops index several parallel
// per-leg arrays at once, where an index loop reads clearest.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod config;
pub mod error;
pub mod export;
pub mod gait;
pub mod geometry;
pub mod harness;
pub mod imitation;
pub mod ocp;
pub mod scalar;
pub mod synthesis;
pub mod terrain;
pub mod vhipm;

pub use error::{Error, Result};
pub use scalar::{real, Real};

/// `f64` aliases for the common aggregates.
pub mod f64_types {
    pub type GaitPattern = crate::gait::GaitPattern<f64>;
    pub type ContactTimeline = crate::gait::ContactTimeline<f64>;
    pub type PendulumState = crate::vhipm::PendulumState<f64>;
    pub type SupportSet = crate::vhipm::SupportSet<f64>;
    pub type ControlInput = crate::vhipm::ControlInput<f64>;
    pub type GravityVector = crate::vhipm::GravityVector<f64>;
    pub type VelocityCommand = crate::ocp::VelocityCommand<f64>;
    pub type OcpProblem = crate::ocp::OcpProblem<f64>;
    pub type OcpWeights = crate::ocp::OcpWeights<f64>;
    pub type StackedControl = crate::ocp::StackedControl<f64>;
    pub type StackedState = crate::ocp::StackedState<f64>;
    pub type SolveReport = crate::ocp::SolveReport<f64>;
    pub type ReferenceFrame = crate::synthesis::ReferenceFrame<f64>;
    pub type RobotSnapshot = crate::imitation::RobotSnapshot<f64>;
    pub type RewardConfig = crate::imitation::RewardConfig<f64>;
    pub type RandomizationConfig = crate::harness::RandomizationConfig<f64>;
    pub type RunLog = crate::harness::RunLog<f64>;
    pub type ToolConfig = crate::config::ToolConfig;
    pub type MotionQueue = crate::synthesis::MotionQueue<f64>;
    pub type HeightField = crate::terrain::HeightField<f64>;
}
