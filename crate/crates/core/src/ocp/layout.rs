//! Decision-vector layout: which variable lives where, and which foothold
//! backs each stance leg at each step.

use nalgebra::{DVector, Vector3};

use crate::gait::{footfall_sequence, LEG_COUNT};
use crate::scalar::{real, Real};

use super::{OcpProblem, StackedControl, StepInput};

/// What a stance leg stands on during a step.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum FootholdRef<T: Real> {
    /// The leg was already on the ground when the horizon started; its
    /// measured position is a constant.
    Frozen(Vector3<T>),
    /// Index into the decision-foothold block.
    Decision(usize),
}

/// A stance leg at one step.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct StanceSlot<T: Real> {
    pub leg: usize,
    pub foothold: FootholdRef<T>,
}

/// One planned touchdown within the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionFoothold<T: Real> {
    pub leg: usize,
    /// First stance sample of the new stance interval.
    pub step: usize,
    pub touchdown_time: T,
    /// Nominal placement the optimizer is regularized toward.
    pub regularization_target: Vector3<T>,
    /// Whether the foothold enters the dynamics. Touchdowns coinciding
    /// exactly with the horizon start stay frozen at the measured foot
    /// position, leaving their decision variable regularization-only.
    pub coupled: bool,
}

/// Variable layout over the flat decision vector.
#[derive(Debug, Clone)]
pub(crate) struct Layout<T: Real> {
    /// Index of the vertical-acceleration variable per step; the step's
    /// CoP weights follow contiguously.
    pub step_offsets: Vec<usize>,
    /// Stance legs per step with their foothold references.
    pub stance: Vec<Vec<StanceSlot<T>>>,
    pub footholds: Vec<DecisionFoothold<T>>,
    /// Base index of the foothold block.
    pub foothold_offset: usize,
    /// Total number of decision variables.
    pub dim: usize,
}

impl<T: Real> Layout<T> {
    pub fn build(problem: &OcpProblem<T>) -> Self {
        let timeline = &problem.timeline;
        let n_steps = timeline.len();
        let falls = footfall_sequence(timeline);
        let stance_duration = timeline.gait.stance_duration();

        let mut footholds: Vec<DecisionFoothold<T>> = falls
            .iter()
            .map(|fall| {
                let hip = problem.hip_world(fall.leg, fall.time);
                let cmd_vel = problem.command.world_velocity(
                    problem
                        .command
                        .yaw_after(problem.initial_yaw, fall.time - problem.start_time()),
                );
                let target = Vector3::new(
                    hip.x + real::<T>(0.5) * stance_duration * cmd_vel.x,
                    hip.y + real::<T>(0.5) * stance_duration * cmd_vel.y,
                    T::zero(),
                );
                DecisionFoothold {
                    leg: fall.leg,
                    step: fall.step,
                    touchdown_time: fall.time,
                    regularization_target: target,
                    coupled: false,
                }
            })
            .collect();

        // Walk the horizon tracking what each leg currently stands on.
        let mut current: [Option<FootholdRef<T>>; LEG_COUNT] = Default::default();
        let mut stance: Vec<Vec<StanceSlot<T>>> = Vec::with_capacity(n_steps);
        for k in 0..n_steps {
            let mut slots = Vec::new();
            for leg in 0..LEG_COUNT {
                if !timeline.contacts[leg][k] {
                    current[leg] = None;
                    continue;
                }
                if k == 0 {
                    // On the ground at the start: planted where measured,
                    // even if the touchdown coincides with the start.
                    current[leg] = Some(FootholdRef::Frozen(problem.initial_feet[leg]));
                } else if !timeline.contacts[leg][k - 1] {
                    let j = footholds
                        .iter()
                        .position(|f| f.leg == leg && f.step == k)
                        .expect("touchdown without a footfall entry");
                    footholds[j].coupled = true;
                    current[leg] = Some(FootholdRef::Decision(j));
                }
                slots.push(StanceSlot {
                    leg,
                    foothold: current[leg].clone().expect("stance leg without foothold"),
                });
            }
            stance.push(slots);
        }

        let mut step_offsets = Vec::with_capacity(n_steps);
        let mut cursor = 0;
        for slots in &stance {
            step_offsets.push(cursor);
            cursor += 1 + slots.len();
        }
        let foothold_offset = cursor;
        let dim = cursor + 3 * footholds.len();

        Self {
            step_offsets,
            stance,
            footholds,
            foothold_offset,
            dim,
        }
    }

    pub fn n_steps(&self) -> usize {
        self.stance.len()
    }

    pub fn vertical_accel_index(&self, k: usize) -> usize {
        self.step_offsets[k]
    }

    pub fn weight_index(&self, k: usize, i: usize) -> usize {
        self.step_offsets[k] + 1 + i
    }

    /// Index of the x component of decision foothold `j`.
    pub fn foothold_index(&self, j: usize) -> usize {
        self.foothold_offset + 3 * j
    }

    /// Resolved world position of the foothold behind a stance slot.
    pub fn slot_position(&self, slot: &StanceSlot<T>, u: &DVector<T>) -> Vector3<T> {
        match &slot.foothold {
            FootholdRef::Frozen(p) => *p,
            FootholdRef::Decision(j) => {
                let base = self.foothold_index(*j);
                Vector3::new(u[base], u[base + 1], u[base + 2])
            }
        }
    }

    pub fn flatten(&self, control: &StackedControl<T>) -> DVector<T> {
        assert_eq!(control.steps.len(), self.n_steps(), "step count mismatch");
        assert_eq!(
            control.footholds.len(),
            self.footholds.len(),
            "foothold count mismatch"
        );
        let mut u = DVector::zeros(self.dim);
        for (k, step) in control.steps.iter().enumerate() {
            assert_eq!(
                step.cop_weights.len(),
                self.stance[k].len(),
                "weight count mismatch at step {k}"
            );
            u[self.vertical_accel_index(k)] = step.vertical_accel;
            for (i, &w) in step.cop_weights.iter().enumerate() {
                u[self.weight_index(k, i)] = w;
            }
        }
        for (j, s) in control.footholds.iter().enumerate() {
            let base = self.foothold_index(j);
            u[base] = s.x;
            u[base + 1] = s.y;
            u[base + 2] = s.z;
        }
        u
    }

    pub fn unflatten(&self, u: &DVector<T>) -> StackedControl<T> {
        assert_eq!(u.len(), self.dim, "flat vector dimension mismatch");
        let steps = (0..self.n_steps())
            .map(|k| StepInput {
                vertical_accel: u[self.vertical_accel_index(k)],
                cop_weights: (0..self.stance[k].len())
                    .map(|i| u[self.weight_index(k, i)])
                    .collect(),
            })
            .collect();
        let footholds = (0..self.footholds.len())
            .map(|j| {
                let base = self.foothold_index(j);
                Vector3::new(u[base], u[base + 1], u[base + 2])
            })
            .collect();
        StackedControl { steps, footholds }
    }
}

/// Planned touchdowns of a problem in footfall order, with their
/// regularization targets. This is the public view of the foothold block
/// of the decision vector.
pub fn decision_footholds<T: Real>(problem: &OcpProblem<T>) -> Vec<DecisionFoothold<T>> {
    Layout::build(problem).footholds
}

/// Shared fixture for the trajectory-optimization test modules.
#[cfg(test)]
pub(crate) mod testing {
    use super::*;
    use crate::gait::{make_timeline, GaitPattern};
    use crate::ocp::VelocityCommand;
    use crate::vhipm::GravityVector;

    pub(crate) fn test_problem(gait: &GaitPattern<f64>, steps: usize) -> OcpProblem<f64> {
        let timeline = make_timeline(gait, 0.0, steps, 0.025).unwrap();
        let hips = [
            Vector3::new(0.19, 0.13, 0.0),
            Vector3::new(0.19, -0.13, 0.0),
            Vector3::new(-0.19, 0.13, 0.0),
            Vector3::new(-0.19, -0.13, 0.0),
        ];
        OcpProblem {
            initial_position: Vector3::new(0.0, 0.0, 0.32),
            initial_velocity: Vector3::zeros(),
            initial_yaw: 0.0,
            initial_feet: hips,
            timeline,
            command: VelocityCommand::zero(),
            target_height: 0.32,
            hip_offsets: hips,
            gravity: GravityVector::default(),
            raibert_gain: 0.03,
        }
    }
}
