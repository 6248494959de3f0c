//! Forward rollout, cost evaluation, and exact first-order sensitivities
//! of the trajectory-optimization objective.

use nalgebra::{DMatrix, DVector, Vector3};

use crate::error::{Error, Result};
use crate::scalar::{real, Real};
use crate::vhipm::{self, SupportSet};

use super::layout::{FootholdRef, Layout};
use super::{OcpProblem, OcpWeights, StackedControl, StackedState};

/// Upper bound on the vertical-acceleration input, m/s^2. The lower bound
/// is the local gravity magnitude, below which the pendulum would have to
/// pull on the ground.
pub const VERTICAL_ACCEL_MAX: f64 = 20.0;

/// Rolled-out trajectory: node positions including the initial one
/// (`N + 1` entries).
pub(crate) struct Trajectory<T: Real> {
    pub positions: Vec<Vector3<T>>,
}

pub(crate) struct CostDerivatives<T: Real> {
    pub gradient: DVector<T>,
    /// Gauss-Newton Hessian approximation of the sum-of-squares cost.
    pub gauss_newton: DMatrix<T>,
}

pub(crate) struct CostEvaluation<T: Real> {
    pub cost: T,
    pub trajectory: Trajectory<T>,
    pub derivatives: Option<CostDerivatives<T>>,
}

/// Per-node sensitivity matrices, 3 x dim each.
type Sensitivities<T> = Vec<DMatrix<T>>;

/// Integrates the dynamics under the flat decision vector `u`, optionally
/// propagating position/velocity sensitivities with respect to `u`.
fn roll<T: Real>(
    problem: &OcpProblem<T>,
    layout: &Layout<T>,
    u: &DVector<T>,
    with_sensitivities: bool,
) -> Result<(Trajectory<T>, Sensitivities<T>, Sensitivities<T>)> {
    let n_steps = layout.n_steps();
    let dt = problem.dt();
    let gravity = &problem.gravity;
    let g_mag = gravity.magnitude();
    let dim = layout.dim;

    let mut positions = Vec::with_capacity(n_steps + 1);
    positions.push(problem.initial_position);
    let mut velocity = problem.initial_velocity;

    // d(position_k)/dU and d(velocity_k)/dU, 3 x dim each.
    let mut pos_sens: Vec<DMatrix<T>> = Vec::new();
    let mut vel_sens: Vec<DMatrix<T>> = Vec::new();
    if with_sensitivities {
        pos_sens.push(DMatrix::zeros(3, dim));
        vel_sens.push(DMatrix::zeros(3, dim));
    }

    for k in 0..n_steps {
        let r = positions[k];
        let slots = &layout.stance[k];
        let h_ddot = u[layout.vertical_accel_index(k)];

        let accel;
        let mut stance_terms = None;
        if slots.is_empty() {
            accel = gravity.g;
        } else {
            if r.z < real(vhipm::MIN_SUPPORT_HEIGHT) {
                return Err(Error::Singularity {
                    height: r.z.to_f64().unwrap_or(f64::NAN),
                    minimum: vhipm::MIN_SUPPORT_HEIGHT,
                });
            }
            let mut cop = Vector3::zeros();
            let mut foot_positions = Vec::with_capacity(slots.len());
            for (i, slot) in slots.iter().enumerate() {
                let p = layout.slot_position(slot, u);
                cop += p * u[layout.weight_index(k, i)];
                foot_positions.push(p);
            }
            accel = vhipm::accel_from_cop(&r, h_ddot, &cop, gravity);
            let alpha = (h_ddot + g_mag) / r.z;
            stance_terms = Some((alpha, r - cop, foot_positions));
        }

        velocity += accel * dt;
        let r_next = r + velocity * dt;
        positions.push(r_next);

        if with_sensitivities {
            // accel_dot = dfdr * pos_sens[k] + direct input columns.
            let mut accel_dot = DMatrix::zeros(3, dim);
            if let Some((alpha, offset, foot_positions)) = &stance_terms {
                let alpha = *alpha;
                // dfdr = alpha * I - (alpha / r_z) * offset * e_z^T
                accel_dot += &pos_sens[k] * alpha;
                let coeff = alpha / r.z;
                let z_row = pos_sens[k].row(2).clone_owned();
                for col in 0..dim {
                    let s = z_row[col];
                    if s != T::zero() {
                        accel_dot[(0, col)] -= coeff * offset.x * s;
                        accel_dot[(1, col)] -= coeff * offset.y * s;
                        accel_dot[(2, col)] -= coeff * offset.z * s;
                    }
                }
                // d accel / d h_ddot = offset / r_z
                let ha = layout.vertical_accel_index(k);
                accel_dot[(0, ha)] += offset.x / r.z;
                accel_dot[(1, ha)] += offset.y / r.z;
                accel_dot[(2, ha)] += offset.z / r.z;
                for (i, slot) in slots.iter().enumerate() {
                    // d accel / d w_i = -alpha * s_i
                    let wi = layout.weight_index(k, i);
                    let p = foot_positions[i];
                    accel_dot[(0, wi)] -= alpha * p.x;
                    accel_dot[(1, wi)] -= alpha * p.y;
                    accel_dot[(2, wi)] -= alpha * p.z;
                    // d accel / d s_j = -alpha * w_i * I
                    if let FootholdRef::Decision(j) = slot.foothold {
                        let base = layout.foothold_index(j);
                        let w = u[layout.weight_index(k, i)];
                        for axis in 0..3 {
                            accel_dot[(axis, base + axis)] -= alpha * w;
                        }
                    }
                }
            }
            let mut v_sens = vel_sens[k].clone();
            v_sens += accel_dot * dt;
            let mut p_sens = pos_sens[k].clone();
            p_sens += &v_sens * dt;
            vel_sens.push(v_sens);
            pos_sens.push(p_sens);
        }
    }

    Ok((Trajectory { positions }, pos_sens, vel_sens))
}

/// Evaluates the cost (and optionally its gradient and Gauss-Newton
/// Hessian) at the flat decision vector `u`.
///
/// The cost is a weighted sum of squares:
/// horizontal-velocity tracking and height tracking per node, foothold
/// deviation from nominal placements, input regularization (vertical
/// acceleration toward zero, CoP weights toward uniform), quadratic
/// penalties on the weight sum, and one-sided quadratic hinges for weight
/// non-negativity and the vertical-acceleration bounds.
pub(crate) fn evaluate<T: Real>(
    problem: &OcpProblem<T>,
    layout: &Layout<T>,
    weights: &OcpWeights<T>,
    u: &DVector<T>,
    with_derivatives: bool,
) -> Result<CostEvaluation<T>> {
    let n_steps = layout.n_steps();
    let dt = problem.dt();
    let dim = layout.dim;
    let g_mag = problem.gravity.magnitude();
    let two = real::<T>(2.0);

    let (trajectory, pos_sens, vel_sens) = roll(problem, layout, u, with_derivatives)?;

    let mut cost = T::zero();
    let mut gradient = DVector::zeros(if with_derivatives { dim } else { 0 });
    let mut hessian = DMatrix::zeros(
        if with_derivatives { dim } else { 0 },
        if with_derivatives { dim } else { 0 },
    );

    // Dense rank-1 update for rows whose Jacobian spans the whole vector.
    let dense_row = |gradient: &mut DVector<T>,
                     hessian: &mut DMatrix<T>,
                     w: T,
                     residual: T,
                     row: DVector<T>| {
        gradient.axpy(two * w * residual, &row, T::one());
        hessian.ger(two * w, &row, &row, T::one());
    };

    // Tracking terms per node.
    for k in 1..=n_steps {
        let t = problem.time_at(k);
        let yaw = problem
            .command
            .yaw_after(problem.initial_yaw, t - problem.start_time());
        let v_cmd = problem.command.world_velocity(yaw);
        let v = (trajectory.positions[k] - trajectory.positions[k - 1]) / dt;

        // The commanded vertical velocity is zero: tracking all three
        // components keeps the height channel damped instead of letting
        // the optimizer plan free-fall dives back to the target height.
        let res_vx = v.x - v_cmd.x;
        let res_vy = v.y - v_cmd.y;
        let res_vz = v.z - v_cmd.z;
        let res_h = trajectory.positions[k].z - problem.target_height;
        cost += weights.velocity_tracking * (res_vx * res_vx + res_vy * res_vy + res_vz * res_vz);
        cost += weights.height_tracking * res_h * res_h;

        if with_derivatives {
            let vs = &vel_sens[k];
            dense_row(
                &mut gradient,
                &mut hessian,
                weights.velocity_tracking,
                res_vx,
                vs.row(0).transpose(),
            );
            dense_row(
                &mut gradient,
                &mut hessian,
                weights.velocity_tracking,
                res_vy,
                vs.row(1).transpose(),
            );
            dense_row(
                &mut gradient,
                &mut hessian,
                weights.velocity_tracking,
                res_vz,
                vs.row(2).transpose(),
            );
            dense_row(
                &mut gradient,
                &mut hessian,
                weights.height_tracking,
                res_h,
                pos_sens[k].row(2).transpose(),
            );
        }
    }

    // Foothold regularization toward nominal placements.
    for (j, foothold) in layout.footholds.iter().enumerate() {
        let base = layout.foothold_index(j);
        let target = foothold.regularization_target;
        for axis in 0..3 {
            let res = u[base + axis] - target[axis];
            cost += weights.foothold_reg * res * res;
            if with_derivatives {
                gradient[base + axis] += two * weights.foothold_reg * res;
                hessian[(base + axis, base + axis)] += two * weights.foothold_reg;
            }
        }
    }

    // Per-step input regularization and feasibility penalties.
    let accel_max: T = real(VERTICAL_ACCEL_MAX);
    for k in 0..n_steps {
        let ha = layout.vertical_accel_index(k);
        let h_ddot = u[ha];
        let m = layout.stance[k].len();

        // Vertical acceleration toward zero.
        cost += weights.input_reg * h_ddot * h_ddot;
        if with_derivatives {
            gradient[ha] += two * weights.input_reg * h_ddot;
            hessian[(ha, ha)] += two * weights.input_reg;
        }

        if m > 0 {
            let uniform = T::one() / T::from_usize(m).unwrap();
            let mut sum = T::zero();
            for i in 0..m {
                let wi = layout.weight_index(k, i);
                let w_val = u[wi];
                sum += w_val;

                // Deviation from uniform weights.
                let res = w_val - uniform;
                cost += weights.input_reg * res * res;
                if with_derivatives {
                    gradient[wi] += two * weights.input_reg * res;
                    hessian[(wi, wi)] += two * weights.input_reg;
                }

                // One-sided hinge for non-negativity.
                if w_val < T::zero() {
                    cost += weights.weight_nonneg_penalty * w_val * w_val;
                    if with_derivatives {
                        gradient[wi] += two * weights.weight_nonneg_penalty * w_val;
                        hessian[(wi, wi)] += two * weights.weight_nonneg_penalty;
                    }
                }
            }

            // Weight-sum equality penalty.
            let res = sum - T::one();
            cost += weights.weight_sum_penalty * res * res;
            if with_derivatives {
                for a in 0..m {
                    let ia = layout.weight_index(k, a);
                    gradient[ia] += two * weights.weight_sum_penalty * res;
                    for b in 0..m {
                        let ib = layout.weight_index(k, b);
                        hessian[(ia, ib)] += two * weights.weight_sum_penalty;
                    }
                }
            }
        }

        // Vertical-acceleration bounds as one-sided hinges.
        let low = h_ddot + g_mag;
        if low < T::zero() {
            cost += weights.weight_nonneg_penalty * low * low;
            if with_derivatives {
                gradient[ha] += two * weights.weight_nonneg_penalty * low;
                hessian[(ha, ha)] += two * weights.weight_nonneg_penalty;
            }
        }
        let high = h_ddot - accel_max;
        if high > T::zero() {
            cost += weights.weight_nonneg_penalty * high * high;
            if with_derivatives {
                gradient[ha] += two * weights.weight_nonneg_penalty * high;
                hessian[(ha, ha)] += two * weights.weight_nonneg_penalty;
            }
        }
    }

    // Optional smoothness on consecutive vertical accelerations.
    if weights.input_smoothness > T::zero() {
        for k in 1..n_steps {
            let ia = layout.vertical_accel_index(k);
            let ib = layout.vertical_accel_index(k - 1);
            let res = u[ia] - u[ib];
            cost += weights.input_smoothness * res * res;
            if with_derivatives {
                let c = two * weights.input_smoothness;
                gradient[ia] += c * res;
                gradient[ib] -= c * res;
                hessian[(ia, ia)] += c;
                hessian[(ib, ib)] += c;
                hessian[(ia, ib)] -= c;
                hessian[(ib, ia)] -= c;
            }
        }
    }

    let derivatives = with_derivatives.then_some(CostDerivatives {
        gradient,
        gauss_newton: hessian,
    });
    Ok(CostEvaluation {
        cost,
        trajectory,
        derivatives,
    })
}

fn checked_flatten<T: Real>(layout: &Layout<T>, control: &StackedControl<T>) -> Result<DVector<T>> {
    if control.steps.len() != layout.n_steps() || control.footholds.len() != layout.footholds.len()
    {
        return Err(Error::InvalidInput(format!(
            "stacked control has {} steps / {} footholds, problem expects {} / {}",
            control.steps.len(),
            control.footholds.len(),
            layout.n_steps(),
            layout.footholds.len()
        )));
    }
    for (k, step) in control.steps.iter().enumerate() {
        if step.cop_weights.len() != layout.stance[k].len() {
            return Err(Error::InvalidInput(format!(
                "step {k} has {} CoP weights, timeline has {} stance legs",
                step.cop_weights.len(),
                layout.stance[k].len()
            )));
        }
    }
    Ok(layout.flatten(control))
}

/// Forward-integrates the dynamics under a stacked control.
pub fn rollout<T: Real>(
    problem: &OcpProblem<T>,
    control: &StackedControl<T>,
) -> Result<StackedState<T>> {
    let layout = Layout::build(problem);
    let u = checked_flatten(&layout, control)?;
    let (trajectory, _, _) = roll(problem, &layout, &u, false)?;
    Ok(StackedState {
        positions: trajectory.positions[1..].to_vec(),
    })
}

/// Total cost of a stacked control.
pub fn evaluate_cost<T: Real>(
    problem: &OcpProblem<T>,
    control: &StackedControl<T>,
    weights: &OcpWeights<T>,
) -> Result<T> {
    let layout = Layout::build(problem);
    let u = checked_flatten(&layout, control)?;
    Ok(evaluate(problem, &layout, weights, &u, false)?.cost)
}

/// Exact gradient of the cost, shaped like the control it differentiates.
pub fn cost_gradient<T: Real>(
    problem: &OcpProblem<T>,
    control: &StackedControl<T>,
    weights: &OcpWeights<T>,
) -> Result<StackedControl<T>> {
    let layout = Layout::build(problem);
    let u = checked_flatten(&layout, control)?;
    let eval = evaluate(problem, &layout, weights, &u, true)?;
    Ok(layout.unflatten(&eval.derivatives.unwrap().gradient))
}

/// Per-step support sets with the foothold positions the control resolves
/// to (frozen initial feet or planned footholds).
pub fn resolve_supports<T: Real>(
    problem: &OcpProblem<T>,
    control: &StackedControl<T>,
) -> Result<Vec<SupportSet<T>>> {
    let layout = Layout::build(problem);
    let u = checked_flatten(&layout, control)?;
    Ok(layout
        .stance
        .iter()
        .map(|slots| {
            SupportSet::new(
                slots
                    .iter()
                    .map(|slot| layout.slot_position(slot, &u))
                    .collect(),
            )
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::super::layout::testing::test_problem;
    use super::super::{default_initial_guess, StepInput};
    use super::*;
    use crate::gait::{make_timeline, GaitPattern};

    #[test]
    fn equilibrium_rollout_is_constant() {
        let problem = test_problem(&GaitPattern::trot(), 40);
        let control = default_initial_guess(&problem);
        let state = rollout(&problem, &control).unwrap();
        for r in &state.positions {
            assert!((r - problem.initial_position).norm() < 1e-9);
        }
    }

    #[test]
    fn equilibrium_cost_and_gradient_are_zero() {
        let problem = test_problem(&GaitPattern::trot(), 40);
        let control = default_initial_guess(&problem);
        let weights = OcpWeights::default();
        let cost = evaluate_cost(&problem, &control, &weights).unwrap();
        assert!(cost < 1e-18, "cost {cost}");
        let grad = cost_gradient(&problem, &control, &weights).unwrap();
        for step in &grad.steps {
            assert!(step.vertical_accel.abs() < 1e-9);
            for w in &step.cop_weights {
                assert!(w.abs() < 1e-9);
            }
        }
        for s in &grad.footholds {
            assert!(s.norm() < 1e-9);
        }
    }

    #[test]
    fn doubling_weights_doubles_cost() {
        let problem = test_problem(&GaitPattern::gallop(), 30);
        let mut control = default_initial_guess(&problem);
        control.steps[3].vertical_accel = 1.7;
        if !control.steps[5].cop_weights.is_empty() {
            control.steps[5].cop_weights[0] += 0.2;
        }
        control.footholds[1].x += 0.05;
        let w1 = OcpWeights::default();
        let mut w2 = w1;
        w2.velocity_tracking *= 2.0;
        w2.height_tracking *= 2.0;
        w2.foothold_reg *= 2.0;
        w2.input_reg *= 2.0;
        w2.weight_sum_penalty *= 2.0;
        w2.weight_nonneg_penalty *= 2.0;
        w2.input_smoothness *= 2.0;
        let j1 = evaluate_cost(&problem, &control, &w1).unwrap();
        let j2 = evaluate_cost(&problem, &control, &w2).unwrap();
        assert!(j1 > 0.0);
        assert_eq!(j2, 2.0 * j1);
    }

    #[test]
    fn ballistic_rollout_matches_closed_form() {
        // A hand-built all-flight timeline: the rollout must free-fall.
        let gait = GaitPattern::<f64>::pronk();
        let mut timeline = make_timeline(&gait, 0.0, 20, 0.02).unwrap();
        for leg in 0..4 {
            for flag in timeline.contacts[leg].iter_mut() {
                *flag = false;
            }
        }
        let mut problem = test_problem(&gait, 20);
        problem.timeline = timeline;
        problem.initial_position = nalgebra::Vector3::new(0.0, 0.0, 1.0);

        let control = StackedControl {
            steps: (0..20)
                .map(|_| StepInput {
                    vertical_accel: 0.0,
                    cop_weights: vec![],
                })
                .collect(),
            footholds: vec![],
        };
        let state = rollout(&problem, &control).unwrap();
        let dt = 0.02;
        let g = 9.81;
        for (idx, r) in state.positions.iter().enumerate() {
            let k = (idx + 1) as f64;
            // Exact discrete sum of the semi-implicit recurrence.
            let discrete = 1.0 - g * dt * dt * (k * (k + 1.0) / 2.0);
            assert!((r.z - discrete).abs() < 1e-12, "step {idx}");
            // Continuous arc within the integrator's O(dt) bias at fixed time.
            let t = k * dt;
            let continuous = 1.0 - 0.5 * g * t * t;
            assert!((r.z - continuous).abs() <= 0.5 * g * dt * t + 1e-12);
        }
    }

    #[test]
    fn uncoupled_foothold_gradient_is_regularization_only() {
        // Footholds whose touchdown coincides with the horizon start never
        // enter the dynamics; their gradient is the regularizer's alone.
        let problem = test_problem(&GaitPattern::trot(), 40);
        let mut control = default_initial_guess(&problem);
        let weights = OcpWeights::default();
        let layout = Layout::build(&problem);
        let j = layout
            .footholds
            .iter()
            .position(|f| !f.coupled)
            .expect("trot from stance start has uncoupled footholds");
        control.footholds[j].x += 0.04;
        control.footholds[j].z += 0.01;
        let target = layout.footholds[j].regularization_target;
        let grad = cost_gradient(&problem, &control, &weights).unwrap();
        let expected = (control.footholds[j] - target) * 2.0 * weights.foothold_reg;
        assert!((grad.footholds[j] - expected).norm() < 1e-12);
    }

    #[test]
    fn singularity_propagates_from_rollout() {
        let problem = test_problem(&GaitPattern::trot(), 40);
        let mut control = default_initial_guess(&problem);
        for step in control.steps.iter_mut() {
            step.vertical_accel = -9.0;
        }
        let err = rollout(&problem, &control);
        assert!(matches!(err, Err(Error::Singularity { .. })));
    }
}
