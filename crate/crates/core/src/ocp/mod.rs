//! Finite-horizon trajectory optimization over the pendulum model.
//!
//! The decision vector stacks one input per step (vertical acceleration
//! plus CoP weights for the stance legs) and the planned footholds in
//! footfall order. Forward rollout integrates the discrete dynamics; a
//! Gauss-Newton loop with Levenberg damping and a backtracking line search
//! minimizes a sum-of-squares tracking-plus-regularization cost with
//! feasibility penalties on the CoP weights.

mod cost;
mod layout;
mod solver;

pub use cost::{cost_gradient, evaluate_cost, resolve_supports, rollout};
pub use layout::{decision_footholds, DecisionFoothold};
pub use solver::{
    default_initial_guess, solve_ocp, warm_start_shift, Solution, SolveReport, SolverSettings,
    StopReason,
};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gait::ContactTimeline;
use crate::geometry::yaw_rotate;
use crate::scalar::{real, Real};
use crate::vhipm::GravityVector;

/// Planar velocity command: forward and lateral speed in the heading frame
/// plus a yaw rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityCommand<T: Real> {
    pub forward: T,
    pub lateral: T,
    pub yaw_rate: T,
}

impl<T: Real> VelocityCommand<T> {
    pub fn new(forward: T, lateral: T, yaw_rate: T) -> Self {
        Self {
            forward,
            lateral,
            yaw_rate,
        }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    /// Heading after integrating the yaw rate for `elapsed` seconds.
    pub fn yaw_after(&self, initial_yaw: T, elapsed: T) -> T {
        initial_yaw + self.yaw_rate * elapsed
    }

    /// Commanded world-frame velocity at a given heading.
    pub fn world_velocity(&self, yaw: T) -> Vector3<T> {
        yaw_rotate(yaw, &Vector3::new(self.forward, self.lateral, T::zero()))
    }

    /// Closed-form position after following the command for `elapsed`
    /// seconds from `origin` with heading `initial_yaw`. The z component
    /// of `origin` is preserved.
    pub fn integrate_position(
        &self,
        origin: &Vector3<T>,
        initial_yaw: T,
        elapsed: T,
    ) -> Vector3<T> {
        let omega = self.yaw_rate;
        if omega.abs() < real(1e-9) {
            let v = self.world_velocity(initial_yaw);
            Vector3::new(origin.x + v.x * elapsed, origin.y + v.y * elapsed, origin.z)
        } else {
            let yaw1 = initial_yaw + omega * elapsed;
            let (s0, c0) = initial_yaw.sin_cos();
            let (s1, c1) = yaw1.sin_cos();
            let dx = (self.forward * (s1 - s0) + self.lateral * (c1 - c0)) / omega;
            let dy = (-self.forward * (c1 - c0) + self.lateral * (s1 - s0)) / omega;
            Vector3::new(origin.x + dx, origin.y + dy, origin.z)
        }
    }
}

/// Cost weights for the trajectory optimization.
///
/// The input-regularization weight applies to both the vertical
/// acceleration and the CoP-weight deviation from uniform; the two penalty
/// weights enforce the weight-sum and non-negativity constraints (the
/// non-negativity weight also backs the vertical-acceleration bounds).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcpWeights<T: Real> {
    pub velocity_tracking: T,
    pub height_tracking: T,
    pub foothold_reg: T,
    pub input_reg: T,
    pub weight_sum_penalty: T,
    pub weight_nonneg_penalty: T,
    /// Weight on consecutive vertical-acceleration differences; zero
    /// disables the term.
    pub input_smoothness: T,
}

impl<T: Real> Default for OcpWeights<T> {
    fn default() -> Self {
        Self {
            velocity_tracking: real(10.0),
            height_tracking: real(100.0),
            foothold_reg: real(5.0),
            input_reg: real(1e-3),
            weight_sum_penalty: real(1e6),
            weight_nonneg_penalty: real(1e6),
            input_smoothness: T::zero(),
        }
    }
}

impl<T: Real> OcpWeights<T> {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("velocity_tracking", self.velocity_tracking),
            ("height_tracking", self.height_tracking),
            ("foothold_reg", self.foothold_reg),
            ("input_reg", self.input_reg),
            ("weight_sum_penalty", self.weight_sum_penalty),
            ("weight_nonneg_penalty", self.weight_nonneg_penalty),
            ("input_smoothness", self.input_smoothness),
        ];
        for (name, w) in all {
            if w < T::zero() {
                return Err(Error::Config(format!("ocp.{name} must be >= 0")));
            }
        }
        if self.velocity_tracking == T::zero() && self.height_tracking == T::zero() {
            return Err(Error::Config(
                "ocp: at least one tracking weight must be > 0".into(),
            ));
        }
        Ok(())
    }

    /// Scales both constraint-penalty weights, used for the one-shot
    /// escalation when a solve converges infeasible.
    pub fn escalate_penalties(&self, factor: T) -> Self {
        let mut w = *self;
        w.weight_sum_penalty *= factor;
        w.weight_nonneg_penalty *= factor;
        w
    }
}

/// One step's input inside a stacked control vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInput<T: Real> {
    pub vertical_accel: T,
    /// One weight per stance leg of that step, in FL, FR, HL, HR order.
    pub cop_weights: Vec<T>,
}

/// Decision vector of the trajectory optimization: per-step inputs plus
/// the planned footholds in footfall order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackedControl<T: Real> {
    pub steps: Vec<StepInput<T>>,
    pub footholds: Vec<Vector3<T>>,
}

/// CoM positions `r_1 ... r_N` produced by a rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackedState<T: Real> {
    pub positions: Vec<Vector3<T>>,
}

impl<T: Real> StackedState<T> {
    /// Positions including the initial one: `r_0, r_1, ..., r_N`.
    pub fn with_initial(&self, r0: &Vector3<T>) -> Vec<Vector3<T>> {
        let mut out = Vec::with_capacity(self.positions.len() + 1);
        out.push(*r0);
        out.extend_from_slice(&self.positions);
        out
    }
}

/// A trajectory-optimization instance.
///
/// The previous position `r_{-1}` is always derived as
/// `r_0 - v_0 * dt`, never stored. Legs in contact at the first step keep
/// their entries of `initial_feet` as constants; later touchdowns are
/// decision variables.
#[derive(Debug, Clone, PartialEq)]
pub struct OcpProblem<T: Real> {
    pub initial_position: Vector3<T>,
    pub initial_velocity: Vector3<T>,
    pub initial_yaw: T,
    /// World foot positions at the start of the horizon.
    pub initial_feet: [Vector3<T>; 4],
    pub timeline: ContactTimeline<T>,
    pub command: VelocityCommand<T>,
    /// Target base height above ground, meters.
    pub target_height: T,
    /// Nominal hip positions per leg in the yaw frame (z ignored).
    pub hip_offsets: [Vector3<T>; 4],
    pub gravity: GravityVector<T>,
    /// Feedback gain of the foothold planning rule used for initial
    /// guesses and regularization anchoring.
    pub raibert_gain: T,
}

impl<T: Real> OcpProblem<T> {
    pub fn dt(&self) -> T {
        self.timeline.dt
    }

    pub fn n_steps(&self) -> usize {
        self.timeline.len()
    }

    pub fn start_time(&self) -> T {
        self.timeline.start_time
    }

    /// Time of grid node `k`, for `k` in `0..=n_steps`.
    pub fn time_at(&self, k: usize) -> T {
        self.start_time() + T::from_usize(k).unwrap() * self.dt()
    }

    /// Heading at grid node `k` under the command's yaw rate.
    pub fn yaw_at(&self, k: usize) -> T {
        self.command
            .yaw_after(self.initial_yaw, T::from_usize(k).unwrap() * self.dt())
    }

    /// Commanded world-frame base position at time `t`.
    pub fn command_position(&self, t: T) -> Vector3<T> {
        self.command.integrate_position(
            &self.initial_position,
            self.initial_yaw,
            t - self.start_time(),
        )
    }

    /// World position of the nominal hip of `leg` at time `t`, projected
    /// to the ground plane, assuming the base follows the command.
    pub fn hip_world(&self, leg: usize, t: T) -> Vector3<T> {
        let yaw = self
            .command
            .yaw_after(self.initial_yaw, t - self.start_time());
        let base = self.command_position(t);
        let hip = yaw_rotate(yaw, &self.hip_offsets[leg]);
        Vector3::new(base.x + hip.x, base.y + hip.y, T::zero())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt() > T::zero()) {
            return Err(Error::InvalidParameter("ocp: dt must be > 0".into()));
        }
        if self.n_steps() == 0 {
            return Err(Error::InvalidParameter("ocp: empty timeline".into()));
        }
        if !(self.target_height > T::zero()) {
            return Err(Error::InvalidParameter(
                "ocp: target_height must be > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Foothold planning rule: place the foot under the hip, advanced by half
/// a stance of commanded travel, plus a feedback correction along the
/// velocity error. The z component comes from the hip projection, so the
/// caller supplies ground (or terrain) height there.
pub fn raibert_foothold<T: Real>(
    hip_nominal: &Vector3<T>,
    base_velocity: &Vector3<T>,
    command_velocity: &Vector3<T>,
    stance_duration: T,
    gain: T,
) -> Vector3<T> {
    let half = real::<T>(0.5);
    let err = base_velocity - command_velocity;
    Vector3::new(
        hip_nominal.x + half * stance_duration * command_velocity.x + gain * err.x,
        hip_nominal.y + half * stance_duration * command_velocity.y + gain * err.y,
        hip_nominal.z,
    )
}
