//! Gauss-Newton descent over the stacked control vector.

use std::time::{Duration, Instant};

use nalgebra::{Cholesky, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::scalar::{real, Real};

use super::cost::evaluate;
use super::layout::Layout;
use super::{raibert_foothold, OcpProblem, OcpWeights, StackedControl, StackedState, StepInput};

/// Solver knobs. The gradient tolerance is scaled by `1 + cost` so flat
/// and steep problems stop consistently.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings<T: Real> {
    pub gradient_tol: T,
    pub max_iterations: usize,
    pub armijo_c: T,
    /// Smallest backtracking scale attempted before the step is rejected.
    pub min_backtrack: T,
    /// Levenberg damping ceiling; exceeding it declares a stall.
    pub lambda_max: T,
    /// One-shot multiplier on the constraint penalties when a solve
    /// converges infeasible.
    pub penalty_escalation: T,
}

impl<T: Real> Default for SolverSettings<T> {
    fn default() -> Self {
        Self {
            gradient_tol: real(1e-6),
            max_iterations: 300,
            armijo_c: real(1e-4),
            min_backtrack: real(1e-10),
            lambda_max: real(1e10),
            penalty_escalation: real(100.0),
        }
    }
}

impl<T: Real> SolverSettings<T> {
    pub fn validate(&self) -> crate::error::Result<()> {
        if !(self.gradient_tol > T::zero()) {
            return Err(crate::error::Error::Config(
                "solver.gradient_tol must be > 0".into(),
            ));
        }
        if self.max_iterations == 0 {
            return Err(crate::error::Error::Config(
                "solver.max_iterations must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Why the descent loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Scaled gradient norm under tolerance.
    GradientTolerance,
    /// No descent step found with maximal damping: a stationary point at
    /// the resolution of the line search.
    LineSearchStall,
    /// Iteration budget exhausted before stationarity.
    MaxIterations,
}

/// Outcome record of one solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport<T: Real> {
    pub iterations: usize,
    pub converged: bool,
    pub reason: StopReason,
    pub final_cost: T,
    pub gradient_norm: T,
    pub cost_trace: Vec<T>,
    pub penalty_escalated: bool,
    /// Wall time is informational and excluded from serialized reports so
    /// that identical inputs produce byte-identical output files.
    #[serde(skip, default)]
    pub wall_time: Duration,
}

/// A solved instance: optimal control, its rollout, and the report.
#[derive(Debug, Clone)]
pub struct Solution<T: Real> {
    pub control: StackedControl<T>,
    pub state: StackedState<T>,
    pub report: SolveReport<T>,
}

/// Warm-startable initial guess: a height-stabilizing vertical
/// acceleration profile, uniform CoP weights, and footholds from the
/// planning rule.
pub fn default_initial_guess<T: Real>(problem: &OcpProblem<T>) -> StackedControl<T> {
    let layout = Layout::build(problem);
    let stance_duration = problem.timeline.gait.stance_duration();
    // The vertical channel decouples on flat ground (the CoP sits at
    // z = 0), so the guess stabilizes it directly: during stance a
    // clamped PD toward the target height, ballistic during flight.
    // This keeps the start point clear of the pendulum's height floor
    // from any reasonable state, including post-disturbance warm-start
    // fallbacks and multi-period flight gaits.
    let dt = problem.dt();
    let g_mag = problem.gravity.magnitude();
    let kp = real::<T>(60.0);
    let kd = real::<T>(15.0);
    let lower = -g_mag * real::<T>(0.5);
    let upper = real::<T>(15.0);
    let mut z = problem.initial_position.z;
    let mut vz = problem.initial_velocity.z;
    let steps: Vec<StepInput<T>> = layout
        .stance
        .iter()
        .map(|slots| {
            let accel = if slots.is_empty() {
                T::zero()
            } else {
                (kp * (problem.target_height - z) - kd * vz).clamp(lower, upper)
            };
            let accel_z = if slots.is_empty() { -g_mag } else { accel };
            vz += accel_z * dt;
            z += vz * dt;
            StepInput {
                vertical_accel: accel,
                cop_weights: if slots.is_empty() {
                    Vec::new()
                } else {
                    vec![T::one() / T::from_usize(slots.len()).unwrap(); slots.len()]
                },
            }
        })
        .collect();
    let footholds = layout
        .footholds
        .iter()
        .map(|f| {
            let hip = problem.hip_world(f.leg, f.touchdown_time);
            let yaw = problem
                .command
                .yaw_after(problem.initial_yaw, f.touchdown_time - problem.start_time());
            let cmd_vel = problem.command.world_velocity(yaw);
            raibert_foothold(
                &hip,
                &problem.initial_velocity,
                &cmd_vel,
                stance_duration,
                problem.raibert_gain,
            )
        })
        .collect();
    StackedControl { steps, footholds }
}

/// Shifts a previous solution onto a new problem's variable layout:
/// footholds are matched by leg and touchdown time, step inputs by
/// absolute time, and anything unmatched falls back to the default guess.
pub fn warm_start_shift<T: Real>(
    previous_problem: &OcpProblem<T>,
    previous_control: &StackedControl<T>,
    next_problem: &OcpProblem<T>,
) -> StackedControl<T> {
    let mut guess = default_initial_guess(next_problem);
    let prev_layout = Layout::build(previous_problem);
    let next_layout = Layout::build(next_problem);
    let half_dt = previous_problem.dt() / real(2.0);

    for (j, f) in next_layout.footholds.iter().enumerate() {
        let matched = prev_layout
            .footholds
            .iter()
            .position(|p| p.leg == f.leg && (p.touchdown_time - f.touchdown_time).abs() < half_dt);
        if let Some(pj) = matched {
            guess.footholds[j] = previous_control.footholds[pj];
        }
    }

    let prev_n = prev_layout.n_steps();
    for k in 0..next_layout.n_steps() {
        let t = next_problem.time_at(k);
        let offset = (t - previous_problem.start_time()) / previous_problem.dt();
        let ki = offset.round();
        if ki < T::zero() {
            continue;
        }
        let ki = ki.to_usize().unwrap_or(usize::MAX);
        if ki >= prev_n {
            continue;
        }
        if (previous_problem.time_at(ki) - t).abs() >= half_dt {
            continue;
        }
        guess.steps[k].vertical_accel = previous_control.steps[ki].vertical_accel;
        for (i, slot) in next_layout.stance[k].iter().enumerate() {
            if let Some(pi) = prev_layout.stance[ki]
                .iter()
                .position(|p| p.leg == slot.leg)
            {
                guess.steps[k].cop_weights[i] = previous_control.steps[ki].cop_weights[pi];
            }
        }
    }
    guess
}

/// Whether the CoP weights of a flat control satisfy the feasibility
/// thresholds the penalties enforce.
fn weights_feasible<T: Real>(layout: &Layout<T>, u: &DVector<T>) -> bool {
    let sum_tol = real::<T>(1e-6);
    let neg_tol = real::<T>(-1e-8);
    for k in 0..layout.n_steps() {
        let m = layout.stance[k].len();
        if m == 0 {
            continue;
        }
        let mut sum = T::zero();
        for i in 0..m {
            let w = u[layout.weight_index(k, i)];
            if w < neg_tol {
                return false;
            }
            sum += w;
        }
        if (sum - T::one()).abs() > sum_tol {
            return false;
        }
    }
    true
}

struct DescentOutcome<T: Real> {
    u: DVector<T>,
    cost: T,
    gradient_norm: T,
    cost_trace: Vec<T>,
    iterations: usize,
    reason: StopReason,
}

fn descend<T: Real>(
    problem: &OcpProblem<T>,
    layout: &Layout<T>,
    weights: &OcpWeights<T>,
    settings: &SolverSettings<T>,
    mut u: DVector<T>,
) -> Result<DescentOutcome<T>> {
    let mut cost = evaluate(problem, layout, weights, &u, false)?.cost;
    let mut cost_trace = vec![cost];
    let mut lambda = T::zero();
    let mut gradient_norm = T::zero();
    let mut iterations = 0;
    let mut reason = StopReason::MaxIterations;

    'outer: for _ in 0..settings.max_iterations {
        let eval = evaluate(problem, layout, weights, &u, true)?;
        let derivs = eval.derivatives.expect("derivatives requested");
        let gradient = derivs.gradient;
        gradient_norm = gradient.norm();
        if gradient_norm <= settings.gradient_tol * (T::one() + cost) {
            reason = StopReason::GradientTolerance;
            break;
        }

        let dim = u.len();
        let mean_diag = derivs.gauss_newton.diagonal().sum() / T::from_usize(dim).unwrap();

        loop {
            let mut damped = derivs.gauss_newton.clone();
            if lambda > T::zero() {
                for i in 0..dim {
                    damped[(i, i)] += lambda;
                }
            }
            let bump = |l: T| {
                if l == T::zero() {
                    real::<T>(1e-6) * (T::one() + mean_diag)
                } else {
                    l * real::<T>(10.0)
                }
            };
            let step = match Cholesky::new(damped) {
                Some(chol) => -chol.solve(&gradient),
                None => {
                    lambda = bump(lambda);
                    if lambda > settings.lambda_max {
                        reason = StopReason::LineSearchStall;
                        break 'outer;
                    }
                    continue;
                }
            };
            let directional = gradient.dot(&step);
            if !(directional < T::zero()) {
                lambda = bump(lambda);
                if lambda > settings.lambda_max {
                    reason = StopReason::LineSearchStall;
                    break 'outer;
                }
                continue;
            }

            // Backtracking line search; rollout failures reject the step.
            let mut alpha = T::one();
            let mut accepted = None;
            while alpha >= settings.min_backtrack {
                let candidate = &u + &step * alpha;
                match evaluate(problem, layout, weights, &candidate, false) {
                    Ok(eval) if eval.cost <= cost + settings.armijo_c * alpha * directional => {
                        accepted = Some((candidate, eval.cost));
                        break;
                    }
                    _ => alpha *= real::<T>(0.5),
                }
            }

            match accepted {
                Some((next_u, next_cost)) => {
                    u = next_u;
                    cost = next_cost;
                    iterations += 1;
                    cost_trace.push(cost);
                    lambda = (lambda / real::<T>(10.0)).max(T::zero());
                    if lambda < real(1e-12) {
                        lambda = T::zero();
                    }
                    break;
                }
                None => {
                    lambda = bump(lambda);
                    if lambda > settings.lambda_max {
                        reason = StopReason::LineSearchStall;
                        break 'outer;
                    }
                }
            }
        }
    }

    Ok(DescentOutcome {
        u,
        cost,
        gradient_norm,
        cost_trace,
        iterations,
        reason,
    })
}

/// Solves the finite-horizon problem from `init` (or the default guess).
///
/// Returns the best iterate even when the iteration budget runs out; the
/// report's `converged` flag records whether a stationary point was
/// reached. Penalty weights escalate once if the CoP-weight constraints
/// are violated at convergence.
pub fn solve_ocp<T: Real>(
    problem: &OcpProblem<T>,
    weights: &OcpWeights<T>,
    settings: &SolverSettings<T>,
    init: Option<&StackedControl<T>>,
) -> Result<Solution<T>> {
    let start = Instant::now();
    problem.validate()?;
    weights.validate()?;
    settings.validate()?;

    let layout = Layout::build(problem);
    let mut u0 = match init {
        Some(control) => layout.flatten(control),
        None => layout.flatten(&default_initial_guess(problem)),
    };
    // A provided start whose rollout is infeasible (for instance a warm
    // start gone stale after a disturbance) falls back to the default
    // guess, whose trajectory cannot sink through the height floor.
    if init.is_some() && evaluate(problem, &layout, weights, &u0, false).is_err() {
        u0 = layout.flatten(&default_initial_guess(problem));
    }

    let mut outcome = descend(problem, &layout, weights, settings, u0)?;
    let mut penalty_escalated = false;
    if !weights_feasible(&layout, &outcome.u) {
        // Re-solve once under stiffer penalties. The reported trace is the
        // escalated phase's; each phase is monotone under its own objective.
        let escalated = weights.escalate_penalties(settings.penalty_escalation);
        let first_iterations = outcome.iterations;
        outcome = descend(problem, &layout, &escalated, settings, outcome.u.clone())?;
        outcome.iterations += first_iterations;
        penalty_escalated = true;
    }

    let final_eval = evaluate(problem, &layout, weights, &outcome.u, false)?;
    let state = StackedState {
        positions: final_eval.trajectory.positions[1..].to_vec(),
    };
    let converged = outcome.reason != StopReason::MaxIterations;
    let report = SolveReport {
        iterations: outcome.iterations,
        converged,
        reason: outcome.reason,
        final_cost: outcome.cost,
        gradient_norm: outcome.gradient_norm,
        cost_trace: outcome.cost_trace,
        penalty_escalated,
        wall_time: start.elapsed(),
    };
    Ok(Solution {
        control: layout.unflatten(&outcome.u),
        state,
        report,
    })
}
