//! Reference-motion assembly: full base-plus-feet frames from solved
//! trajectories, the kinematic baseline generator, terrain adjustment, and
//! the on-demand motion queue.

use std::collections::VecDeque;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gait::{phase_variables, GaitPattern, LEG_COUNT};
use crate::geometry::{smoothstep, yaw_rotate};
use crate::ocp::{
    decision_footholds, raibert_foothold, solve_ocp, OcpProblem, OcpWeights, SolveReport,
    SolverSettings, VelocityCommand,
};
use crate::scalar::{real, Real};
use crate::terrain::HeightField;
use crate::vhipm::GravityVector;

/// One time-sample of reference motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFrame<T: Real> {
    pub time: T,
    pub base_position: Vector3<T>,
    pub base_velocity: Vector3<T>,
    pub yaw: T,
    pub yaw_rate: T,
    pub foot_positions: [Vector3<T>; LEG_COUNT],
    pub contacts: [bool; LEG_COUNT],
    /// Contact-phase angles, swing in [-pi, 0) and stance in [0, pi).
    pub phases: [T; LEG_COUNT],
}

/// Robot state a generation starts from.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorState<T: Real> {
    pub time: T,
    pub position: Vector3<T>,
    pub velocity: Vector3<T>,
    pub yaw: T,
    pub feet: [Vector3<T>; LEG_COUNT],
}

impl<T: Real> GeneratorState<T> {
    /// Standing at the target height with feet under the nominal hips.
    pub fn standing(height: T, hip_offsets: &[Vector3<T>; LEG_COUNT]) -> Self {
        Self {
            time: T::zero(),
            position: Vector3::new(T::zero(), T::zero(), height),
            velocity: Vector3::zeros(),
            yaw: T::zero(),
            feet: hip_offsets.map(|h| Vector3::new(h.x, h.y, T::zero())),
        }
    }

    pub fn from_frame(frame: &ReferenceFrame<T>) -> Self {
        Self {
            time: frame.time,
            position: frame.base_position,
            velocity: frame.base_velocity,
            yaw: frame.yaw,
            feet: frame.foot_positions,
        }
    }
}

/// Knobs of the reference generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisConfig<T: Real> {
    /// Trajectory-optimization step, seconds.
    pub solver_dt: T,
    /// Frame spacing, seconds (the policy rate).
    pub frame_dt: T,
    pub target_height: T,
    /// Swing apex clearance above the higher endpoint, meters.
    pub swing_height: T,
    pub hip_offsets: [Vector3<T>; LEG_COUNT],
    pub raibert_gain: T,
    pub gravity: GravityVector<T>,
    pub weights: OcpWeights<T>,
    pub solver: SolverSettings<T>,
    /// Queue refill threshold as a fraction of a gait period.
    pub queue_threshold_fraction: T,
    /// Time constant of the terrain base-offset filter, seconds.
    pub terrain_filter_tau: T,
}

impl<T: Real> Default for SynthesisConfig<T> {
    fn default() -> Self {
        Self {
            solver_dt: real(0.025),
            frame_dt: real(0.02),
            target_height: real(0.32),
            swing_height: real(0.08),
            hip_offsets: [
                Vector3::new(real(0.19), real(0.13), T::zero()),
                Vector3::new(real(0.19), real(-0.13), T::zero()),
                Vector3::new(real(-0.19), real(0.13), T::zero()),
                Vector3::new(real(-0.19), real(-0.13), T::zero()),
            ],
            raibert_gain: real(0.03),
            gravity: GravityVector::default(),
            weights: OcpWeights::default(),
            solver: SolverSettings::default(),
            queue_threshold_fraction: real(0.5),
            terrain_filter_tau: real(0.2),
        }
    }
}

/// Reference frames plus the solve that produced them.
#[derive(Debug, Clone)]
pub struct GeneratedMotion<T: Real> {
    pub frames: Vec<ReferenceFrame<T>>,
    pub report: SolveReport<T>,
    /// Set when the solver returned its best iterate without convergence;
    /// the frames are still usable but come from a degraded solve.
    pub degraded: bool,
}

/// Swing-foot interpolation between a liftoff and a touchdown point.
///
/// The xy path follows a smoothstep of the progress; the height follows
/// the same blend plus a sine-squared bump that peaks mid-swing at
/// `max(start_z, end_z) + apex_height`. With a terrain field, the result
/// is kept at or above the local terrain where the field covers it.
pub fn swing_trajectory<T: Real>(
    start: &Vector3<T>,
    end: &Vector3<T>,
    progress: T,
    apex_height: T,
    terrain: Option<&HeightField<T>>,
) -> Vector3<T> {
    let s = smoothstep(progress);
    let x = start.x + (end.x - start.x) * s;
    let y = start.y + (end.y - start.y) * s;
    let base_z = start.z + (end.z - start.z) * s;
    let mid = (start.z + end.z) / real(2.0);
    let bump = start.z.max(end.z) + apex_height - mid;
    let phase = progress.clamp(T::zero(), T::one()) * T::pi();
    let mut z = base_z + bump * phase.sin() * phase.sin();
    if let Some(field) = terrain {
        if let Ok(h) = field.height_at(x, y) {
            z = z.max(h);
        }
    }
    Vector3::new(x, y, z)
}

/// World position of the nominal hip of `leg` at time `t`, projected to
/// the ground plane, assuming the base follows the command from `state`.
fn hip_world_at<T: Real>(
    state: &GeneratorState<T>,
    command: &VelocityCommand<T>,
    hip_offsets: &[Vector3<T>; LEG_COUNT],
    leg: usize,
    t: T,
) -> Vector3<T> {
    let elapsed = t - state.time;
    let yaw = command.yaw_after(state.yaw, elapsed);
    let base = command.integrate_position(&state.position, state.yaw, elapsed);
    let hip = yaw_rotate(yaw, &hip_offsets[leg]);
    Vector3::new(base.x + hip.x, base.y + hip.y, T::zero())
}

/// Planted stance entries of one leg: (continuous touchdown time,
/// position).
type PlantedEntries<T> = Vec<(T, Vector3<T>)>;

/// Per-leg plant schedule: where each leg stands, keyed by the continuous
/// touchdown time that starts the stance interval.
struct FootPlan<T: Real> {
    planted: [PlantedEntries<T>; LEG_COUNT],
    /// Swing progress at the start of the horizon for legs that begin
    /// airborne; their first arc re-normalizes from here.
    initial_swing: [Option<T>; LEG_COUNT],
}

impl<T: Real> FootPlan<T> {
    fn start(
        state: &GeneratorState<T>,
        gait: &GaitPattern<T>,
    ) -> ([PlantedEntries<T>; LEG_COUNT], [Option<T>; LEG_COUNT]) {
        let mut planted: [PlantedEntries<T>; LEG_COUNT] = Default::default();
        let mut initial_swing = [None; LEG_COUNT];
        for leg in 0..LEG_COUNT {
            let phase = gait.leg_phase(leg, state.time);
            if phase < gait.duty_cycle {
                let since_touchdown = phase * gait.period;
                planted[leg].push((state.time - since_touchdown, state.feet[leg]));
            } else {
                initial_swing[leg] = Some((phase - gait.duty_cycle) / (T::one() - gait.duty_cycle));
            }
        }
        (planted, initial_swing)
    }

    /// Plan for a solved problem: planted positions come from the solved
    /// footholds (projected to the ground plane).
    fn from_solution(
        state: &GeneratorState<T>,
        gait: &GaitPattern<T>,
        problem: &OcpProblem<T>,
        footholds: &[Vector3<T>],
    ) -> Self {
        let (mut planted, initial_swing) = Self::start(state, gait);
        for (f, position) in decision_footholds(problem).iter().zip(footholds) {
            if !f.coupled {
                continue;
            }
            let phase = gait.leg_phase(f.leg, f.touchdown_time);
            let touchdown = f.touchdown_time - phase * gait.period;
            planted[f.leg].push((touchdown, Vector3::new(position.x, position.y, T::zero())));
        }
        for entries in planted.iter_mut() {
            entries.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        }
        Self {
            planted,
            initial_swing,
        }
    }

    /// Plan for the kinematic baseline: every touchdown inside the horizon
    /// uses the foothold planning rule with the command as base velocity.
    fn kinematic(
        state: &GeneratorState<T>,
        gait: &GaitPattern<T>,
        command: &VelocityCommand<T>,
        cfg: &SynthesisConfig<T>,
        horizon: T,
    ) -> Self {
        let (mut planted, initial_swing) = Self::start(state, gait);
        let end = state.time + horizon;
        for leg in 0..LEG_COUNT {
            let Some(mut touchdown) = gait.next_touchdown(leg, state.time) else {
                continue;
            };
            if let Some(&(first, _)) = planted[leg].first() {
                // A leg standing since the horizon start owns this instant.
                if touchdown <= first {
                    touchdown += gait.period;
                }
            }
            while touchdown < end {
                let hip = hip_world_at(state, command, &cfg.hip_offsets, leg, touchdown);
                let yaw = command.yaw_after(state.yaw, touchdown - state.time);
                let v_cmd = command.world_velocity(yaw);
                let position = raibert_foothold(
                    &hip,
                    &v_cmd,
                    &v_cmd,
                    gait.stance_duration(),
                    cfg.raibert_gain,
                );
                planted[leg].push((touchdown, position));
                touchdown += gait.period;
            }
        }
        Self {
            planted,
            initial_swing,
        }
    }

    /// Foot position of `leg` at time `t`.
    fn foot_at(
        &self,
        leg: usize,
        t: T,
        state: &GeneratorState<T>,
        gait: &GaitPattern<T>,
        command: &VelocityCommand<T>,
        cfg: &SynthesisConfig<T>,
    ) -> Vector3<T> {
        let eps = cfg.frame_dt * real(1e-6);
        let phase = gait.leg_phase(leg, t);
        let entries = &self.planted[leg];
        let current = entries.iter().rev().find(|(start, _)| *start <= t + eps);
        if phase < gait.duty_cycle {
            return current.map(|(_, p)| *p).unwrap_or(state.feet[leg]);
        }

        let q = (phase - gait.duty_cycle) / (T::one() - gait.duty_cycle);
        let (start_pos, progress) = match current {
            Some((_, p)) => (*p, q),
            None => {
                // Mid-swing at the horizon start: re-normalize the arc from
                // the measured foot position.
                let q0 = self.initial_swing[leg].unwrap_or(T::zero());
                let span = T::one() - q0;
                let progress = if span > real(1e-9) {
                    ((q - q0) / span).clamp(T::zero(), T::one())
                } else {
                    T::one()
                };
                (state.feet[leg], progress)
            }
        };
        let end_pos = entries
            .iter()
            .find(|(start, _)| *start > t + eps)
            .map(|(_, p)| *p)
            .unwrap_or_else(|| {
                // Touchdown beyond the horizon: aim at the planning rule's
                // nominal target.
                let touchdown = gait.next_touchdown(leg, t).unwrap_or(t);
                let hip = hip_world_at(state, command, &cfg.hip_offsets, leg, touchdown);
                let yaw = command.yaw_after(state.yaw, touchdown - state.time);
                let v_cmd = command.world_velocity(yaw);
                raibert_foothold(
                    &hip,
                    &v_cmd,
                    &v_cmd,
                    gait.stance_duration(),
                    cfg.raibert_gain,
                )
            });
        swing_trajectory(&start_pos, &end_pos, progress, cfg.swing_height, None)
    }
}

/// Catmull-Rom interpolation over a uniform grid of positions, clamped at
/// the ends. Exact for sampled quadratics away from the boundary, which
/// preserves ballistic arcs through resampling.
fn catmull_rom<T: Real>(grid: &[Vector3<T>], start_time: T, dt: T, t: T) -> Vector3<T> {
    let n = grid.len();
    if n == 1 {
        return grid[0];
    }
    let x = ((t - start_time) / dt).max(T::zero());
    let mut i = x.floor().to_usize().unwrap_or(0);
    if i > n - 2 {
        i = n - 2;
    }
    let s = (x - T::from_usize(i).unwrap()).clamp(T::zero(), T::one());
    let at = |idx: isize| -> Vector3<T> {
        let idx = idx.clamp(0, (n - 1) as isize) as usize;
        grid[idx]
    };
    let p0 = at(i as isize - 1);
    let p1 = at(i as isize);
    let p2 = at(i as isize + 1);
    let p3 = at(i as isize + 2);
    let half = real::<T>(0.5);
    let m1 = (p2 - p0) * half;
    let m2 = (p3 - p1) * half;
    let s2 = s * s;
    let s3 = s2 * s;
    let two = real::<T>(2.0);
    let three = real::<T>(3.0);
    p1 * (two * s3 - three * s2 + T::one())
        + m1 * (s3 - two * s2 + s)
        + p2 * (-two * s3 + three * s2)
        + m2 * (s3 - s2)
}

fn frame_times<T: Real>(start: T, horizon: T, frame_dt: T) -> Vec<T> {
    let count = (horizon / frame_dt).round().to_usize().unwrap_or(0);
    (0..count)
        .map(|i| start + T::from_usize(i).unwrap() * frame_dt)
        .collect()
}

/// Central-difference velocities over the assembled frames (one-sided at
/// the ends).
fn fill_velocities<T: Real>(frames: &mut [ReferenceFrame<T>], frame_dt: T) {
    let n = frames.len();
    if n < 2 {
        return;
    }
    let two_dt = real::<T>(2.0) * frame_dt;
    for i in 0..n {
        let v = if i == 0 {
            (frames[1].base_position - frames[0].base_position) / frame_dt
        } else if i == n - 1 {
            (frames[n - 1].base_position - frames[n - 2].base_position) / frame_dt
        } else {
            (frames[i + 1].base_position - frames[i - 1].base_position) / two_dt
        };
        frames[i].base_velocity = v;
    }
}

fn check_horizon<T: Real>(gait: &GaitPattern<T>, horizon: T) -> Result<()> {
    if horizon < gait.period {
        return Err(Error::InvalidParameter(format!(
            "horizon {} s is shorter than one gait period {} s",
            horizon.to_f64().unwrap_or(f64::NAN),
            gait.period.to_f64().unwrap_or(f64::NAN)
        )));
    }
    Ok(())
}

/// Builds the trajectory-optimization instance a generation solves.
pub fn build_problem<T: Real>(
    state: &GeneratorState<T>,
    command: &VelocityCommand<T>,
    gait: &GaitPattern<T>,
    horizon: T,
    cfg: &SynthesisConfig<T>,
) -> Result<OcpProblem<T>> {
    check_horizon(gait, horizon)?;
    let n_steps = (horizon / cfg.solver_dt)
        .round()
        .to_usize()
        .filter(|&n| n >= 1)
        .ok_or_else(|| Error::InvalidParameter("horizon yields no solver steps".into()))?;
    let timeline = crate::gait::make_timeline(gait, state.time, n_steps, cfg.solver_dt)?;
    Ok(OcpProblem {
        initial_position: state.position,
        initial_velocity: state.velocity,
        initial_yaw: state.yaw,
        initial_feet: state.feet,
        timeline,
        command: *command,
        target_height: cfg.target_height,
        hip_offsets: cfg.hip_offsets,
        gravity: cfg.gravity,
        raibert_gain: cfg.raibert_gain,
    })
}

/// Generates dynamically consistent reference frames over `horizon`
/// seconds at the frame rate, starting at `state.time` (the first frame
/// reproduces the start state).
///
/// A non-converged solve still emits frames from the best iterate, with
/// the result marked degraded.
pub fn generate_reference<T: Real>(
    state: &GeneratorState<T>,
    command: &VelocityCommand<T>,
    gait: &GaitPattern<T>,
    horizon: T,
    cfg: &SynthesisConfig<T>,
) -> Result<GeneratedMotion<T>> {
    let problem = build_problem(state, command, gait, horizon, cfg)?;
    let solution = solve_ocp(&problem, &cfg.weights, &cfg.solver, None)?;

    let grid = solution.state.with_initial(&state.position);
    let plan = FootPlan::from_solution(state, gait, &problem, &solution.control.footholds);

    let mut frames: Vec<ReferenceFrame<T>> = frame_times(state.time, horizon, cfg.frame_dt)
        .into_iter()
        .map(|t| {
            let mut foot_positions = [Vector3::zeros(); LEG_COUNT];
            let mut contacts = [false; LEG_COUNT];
            for leg in 0..LEG_COUNT {
                foot_positions[leg] = plan.foot_at(leg, t, state, gait, command, cfg);
                contacts[leg] = gait.in_stance(leg, t);
            }
            ReferenceFrame {
                time: t,
                base_position: catmull_rom(&grid, state.time, cfg.solver_dt, t),
                base_velocity: Vector3::zeros(),
                yaw: command.yaw_after(state.yaw, t - state.time),
                yaw_rate: command.yaw_rate,
                foot_positions,
                contacts,
                phases: phase_variables(gait, t),
            }
        })
        .collect();
    fill_velocities(&mut frames, cfg.frame_dt);
    if let Some(first) = frames.first_mut() {
        first.base_velocity = state.velocity;
    }

    let degraded = !solution.report.converged;
    Ok(GeneratedMotion {
        frames,
        report: solution.report,
        degraded,
    })
}

/// Kinematic baseline generator: the base integrates the command at a
/// constant height with no dynamics, and footholds come from the planning
/// rule alone.
pub fn kinematic_baseline<T: Real>(
    state: &GeneratorState<T>,
    command: &VelocityCommand<T>,
    gait: &GaitPattern<T>,
    horizon: T,
    cfg: &SynthesisConfig<T>,
) -> Result<Vec<ReferenceFrame<T>>> {
    check_horizon(gait, horizon)?;
    let plan = FootPlan::kinematic(state, gait, command, cfg, horizon);
    let frames = frame_times(state.time, horizon, cfg.frame_dt)
        .into_iter()
        .map(|t| {
            let elapsed = t - state.time;
            let yaw = command.yaw_after(state.yaw, elapsed);
            let base = command.integrate_position(&state.position, state.yaw, elapsed);
            let mut foot_positions = [Vector3::zeros(); LEG_COUNT];
            let mut contacts = [false; LEG_COUNT];
            for leg in 0..LEG_COUNT {
                foot_positions[leg] = plan.foot_at(leg, t, state, gait, command, cfg);
                contacts[leg] = gait.in_stance(leg, t);
            }
            ReferenceFrame {
                time: t,
                base_position: Vector3::new(base.x, base.y, cfg.target_height),
                base_velocity: command.world_velocity(yaw),
                yaw,
                yaw_rate: command.yaw_rate,
                foot_positions,
                contacts,
                phases: phase_variables(gait, t),
            }
        })
        .collect();
    Ok(frames)
}

/// Adjusts frames for terrain: footholds snap onto the terrain surface,
/// swing feet shift with the local terrain (never below it), and the base
/// height is offset by a low-pass filtered average of the stance feet's
/// terrain heights.
pub fn adjust_for_terrain<T: Real>(
    frames: &[ReferenceFrame<T>],
    terrain: &HeightField<T>,
    cfg: &SynthesisConfig<T>,
) -> Result<Vec<ReferenceFrame<T>>> {
    let mut out = Vec::with_capacity(frames.len());
    let alpha = cfg.frame_dt / (cfg.terrain_filter_tau + cfg.frame_dt);
    let mut filtered: Option<T> = None;
    let mut held: Option<T> = None;

    for frame in frames {
        let mut adjusted = frame.clone();
        let mut stance_sum = T::zero();
        let mut stance_count = 0;
        for leg in 0..LEG_COUNT {
            let p = frame.foot_positions[leg];
            let ground = terrain.height_at(p.x, p.y)?;
            if frame.contacts[leg] {
                adjusted.foot_positions[leg].z = ground;
                stance_sum += ground;
                stance_count += 1;
            } else {
                let lifted = p.z + ground;
                adjusted.foot_positions[leg].z = lifted.max(ground);
            }
        }
        let sample = if stance_count > 0 {
            let mean = stance_sum / T::from_usize(stance_count).unwrap();
            held = Some(mean);
            mean
        } else {
            held.unwrap_or(T::zero())
        };
        let offset = match filtered {
            None => sample,
            Some(prev) => prev + alpha * (sample - prev),
        };
        filtered = Some(offset);
        adjusted.base_position.z += offset;
        out.push(adjusted);
    }

    // The vertical offset changes the height profile; refresh its rate.
    let n = out.len();
    if n >= 2 {
        let two_dt = real::<T>(2.0) * cfg.frame_dt;
        for i in 0..n {
            let vz = if i == 0 {
                (out[1].base_position.z - out[0].base_position.z) / cfg.frame_dt
            } else if i == n - 1 {
                (out[n - 1].base_position.z - out[n - 2].base_position.z) / cfg.frame_dt
            } else {
                (out[i + 1].base_position.z - out[i - 1].base_position.z) / two_dt
            };
            out[i].base_velocity.z = vz;
        }
    }
    Ok(out)
}

/// Ordered frames awaiting consumption, refilled on demand.
#[derive(Debug, Clone, Default)]
pub struct MotionQueue<T: Real> {
    frames: VecDeque<ReferenceFrame<T>>,
    pub refill_threshold: usize,
}

impl<T: Real> MotionQueue<T> {
    pub fn new(refill_threshold: usize) -> Self {
        Self {
            frames: VecDeque::new(),
            refill_threshold,
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn needs_refill(&self) -> bool {
        self.frames.len() < self.refill_threshold
    }

    pub fn front(&self) -> Option<&ReferenceFrame<T>> {
        self.frames.front()
    }

    pub fn back(&self) -> Option<&ReferenceFrame<T>> {
        self.frames.back()
    }

    pub fn get(&self, index: usize) -> Option<&ReferenceFrame<T>> {
        self.frames.get(index)
    }

    pub fn pop(&mut self) -> Option<ReferenceFrame<T>> {
        self.frames.pop_front()
    }

    /// Appends frames, requiring strictly increasing times.
    pub fn push_frames(
        &mut self,
        frames: impl IntoIterator<Item = ReferenceFrame<T>>,
    ) -> Result<()> {
        for frame in frames {
            if let Some(last) = self.frames.back() {
                if frame.time <= last.time {
                    return Err(Error::InvalidInput(format!(
                        "queue frames must advance in time: {} after {}",
                        frame.time.to_f64().unwrap_or(f64::NAN),
                        last.time.to_f64().unwrap_or(f64::NAN)
                    )));
                }
            }
            self.frames.push_back(frame);
        }
        Ok(())
    }
}

impl<T: Real> SynthesisConfig<T> {
    /// Queue refill threshold in frames: the configured fraction of one
    /// gait period at the frame rate.
    pub fn queue_threshold(&self, gait: &GaitPattern<T>) -> usize {
        (self.queue_threshold_fraction * gait.period / self.frame_dt)
            .round()
            .to_usize()
            .unwrap_or(1)
            .max(1)
    }
}

/// Generates one more horizon of frames from the last queued state and
/// appends it. The generation's first frame reproduces the seam state and
/// is dropped after a continuity check; on any failure the queue is left
/// unchanged.
pub fn queue_refill<T: Real>(
    queue: &mut MotionQueue<T>,
    command: &VelocityCommand<T>,
    gait: &GaitPattern<T>,
    horizon: T,
    cfg: &SynthesisConfig<T>,
) -> Result<SolveReport<T>> {
    let last = queue.back().ok_or(Error::EmptyQueue)?.clone();
    let state = GeneratorState::from_frame(&last);
    let generated = generate_reference(&state, command, gait, horizon, cfg)?;
    let seam = generated
        .frames
        .first()
        .ok_or_else(|| Error::InvalidInput("generator produced no frames".into()))?;
    let tol = real::<T>(1e-6);
    if (seam.base_position - last.base_position).norm() > tol {
        return Err(Error::InvalidInput(
            "refill seam discontinuity in base position".into(),
        ));
    }
    for leg in 0..LEG_COUNT {
        if (seam.foot_positions[leg] - last.foot_positions[leg]).norm() > tol {
            return Err(Error::InvalidInput(format!(
                "refill seam discontinuity at foot {leg}"
            )));
        }
    }
    queue.push_frames(generated.frames.into_iter().skip(1))?;
    Ok(generated.report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gait::GaitPattern;

    fn cfg() -> SynthesisConfig<f64> {
        SynthesisConfig::default()
    }

    fn standing(cfg: &SynthesisConfig<f64>) -> GeneratorState<f64> {
        GeneratorState::standing(cfg.target_height, &cfg.hip_offsets)
    }

    #[test]
    fn swing_endpoints_are_exact() {
        let start: Vector3<f64> = Vector3::new(0.1, 0.2, 0.0);
        let end = Vector3::new(0.3, 0.1, 0.05);
        assert_eq!(swing_trajectory(&start, &end, 0.0, 0.08, None), start);
        assert_eq!(swing_trajectory(&start, &end, 1.0, 0.08, None), end);
    }

    #[test]
    fn swing_apex_on_flat_ground() {
        let start: Vector3<f64> = Vector3::new(0.0, 0.0, 0.0);
        let end = Vector3::new(0.2, 0.0, 0.0);
        let mid = swing_trajectory(&start, &end, 0.5, 0.08, None);
        assert!((mid.z - 0.08).abs() < 1e-12);
        assert!((mid.x - 0.1).abs() < 1e-12);
    }

    #[test]
    fn swing_apex_clears_higher_endpoint() {
        let start: Vector3<f64> = Vector3::new(0.0, 0.0, 0.0);
        let end = Vector3::new(0.2, 0.0, 0.1);
        let mid = swing_trajectory(&start, &end, 0.5, 0.08, None);
        assert!((mid.z - 0.18).abs() < 1e-12);
    }

    #[test]
    fn zero_command_trot_holds_height_and_footprints() {
        let cfg = cfg();
        let state = standing(&cfg);
        let gait = GaitPattern::trot();
        let motion =
            generate_reference(&state, &VelocityCommand::zero(), &gait, 1.0, &cfg).unwrap();
        assert!(!motion.degraded);
        assert_eq!(motion.frames.len(), 50);
        for frame in &motion.frames {
            assert!(
                (frame.base_position.z - 0.32).abs() < 1e-3,
                "height {} at t={}",
                frame.base_position.z,
                frame.time
            );
            for leg in 0..LEG_COUNT {
                let p = frame.foot_positions[leg];
                let nominal = cfg.hip_offsets[leg];
                assert!(
                    (p.x - nominal.x).abs() < 2e-2 && (p.y - nominal.y).abs() < 2e-2,
                    "foot {leg} wandered to {p:?}"
                );
            }
        }
    }

    #[test]
    fn frame_count_matches_horizon_arithmetic() {
        let cfg = cfg();
        let state = standing(&cfg);
        let gait = GaitPattern::trot();
        let motion =
            generate_reference(&state, &VelocityCommand::zero(), &gait, 2.0 * 0.5, &cfg).unwrap();
        assert_eq!(motion.frames.len(), 50);
        let frames =
            kinematic_baseline(&state, &VelocityCommand::zero(), &gait, 1.0, &cfg).unwrap();
        assert_eq!(frames.len(), 50);
    }

    #[test]
    fn horizon_shorter_than_period_is_rejected() {
        let cfg = cfg();
        let state = standing(&cfg);
        let gait = GaitPattern::trot();
        assert!(generate_reference(&state, &VelocityCommand::zero(), &gait, 0.3, &cfg).is_err());
    }

    #[test]
    fn stance_feet_are_stationary() {
        let cfg = cfg();
        let state = standing(&cfg);
        let gait = GaitPattern::trot();
        let command = VelocityCommand::new(0.5, 0.0, 0.0);
        let motion = generate_reference(&state, &command, &gait, 1.0, &cfg).unwrap();
        for pair in motion.frames.windows(2) {
            for leg in 0..LEG_COUNT {
                if pair[0].contacts[leg] && pair[1].contacts[leg] {
                    let d = (pair[1].foot_positions[leg] - pair[0].foot_positions[leg]).norm();
                    assert!(d <= 1e-9, "foot {leg} slid {d} m during stance");
                }
            }
        }
    }

    #[test]
    fn pronk_reference_shows_ballistic_flight() {
        let cfg = cfg();
        let mut state = standing(&cfg);
        state.velocity.x = 0.5;
        let gait = GaitPattern::pronk();
        let command = VelocityCommand::new(0.5, 0.0, 0.0);
        let motion = generate_reference(&state, &command, &gait, 0.8, &cfg).unwrap();
        // Frames whose neighborhood is fully airborne: the height profile
        // second difference is close to the ballistic value.
        let dt = cfg.frame_dt;
        let expected = -9.81 * dt * dt;
        let mut checked = 0;
        for w in motion.frames.windows(3) {
            let airborne = w.iter().all(|f| f.contacts.iter().all(|&c| !c));
            if !airborne {
                continue;
            }
            let dd = w[2].base_position.z - 2.0 * w[1].base_position.z + w[0].base_position.z;
            assert!(
                (dd - expected).abs() < 0.35 * expected.abs(),
                "second difference {dd:.3e} vs ballistic {expected:.3e}"
            );
            checked += 1;
        }
        assert!(checked >= 2, "no fully airborne frame triples found");
    }

    #[test]
    fn baseline_holds_height_and_integrates_command() {
        let cfg = cfg();
        let state = standing(&cfg);
        let gait = GaitPattern::pronk();
        let command = VelocityCommand::new(0.5, 0.0, 0.0);
        let frames = kinematic_baseline(&state, &command, &gait, 1.0, &cfg).unwrap();
        for frame in &frames {
            assert_eq!(frame.base_position.z, 0.32);
        }
        // Base advances by exactly v * t.
        let last = frames.last().unwrap();
        assert!((last.base_position.x - 0.5 * last.time).abs() < 1e-12);
        // No ballistic arc anywhere: flat second differences.
        for w in frames.windows(3) {
            let dd = w[2].base_position.z - 2.0 * w[1].base_position.z + w[0].base_position.z;
            assert_eq!(dd, 0.0);
        }
    }

    #[test]
    fn flat_terrain_adjustment_is_identity() {
        let cfg = cfg();
        let state = standing(&cfg);
        let gait = GaitPattern::trot();
        let command = VelocityCommand::new(0.3, 0.0, 0.0);
        let frames = kinematic_baseline(&state, &command, &gait, 1.0, &cfg).unwrap();
        let terrain = HeightField::flat(10.0, 0.1, 0.0).unwrap();
        let adjusted = adjust_for_terrain(&frames, &terrain, &cfg).unwrap();
        for (a, b) in frames.iter().zip(&adjusted) {
            assert!((a.base_position - b.base_position).norm() < 1e-12);
            for leg in 0..LEG_COUNT {
                assert!((a.foot_positions[leg] - b.foot_positions[leg]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn uniform_terrain_shifts_everything_exactly() {
        let cfg = cfg();
        let state = standing(&cfg);
        let gait = GaitPattern::trot();
        let command = VelocityCommand::new(0.3, 0.0, 0.0);
        let frames = kinematic_baseline(&state, &command, &gait, 1.0, &cfg).unwrap();
        let terrain = HeightField::flat(10.0, 0.1, 0.1).unwrap();
        let adjusted = adjust_for_terrain(&frames, &terrain, &cfg).unwrap();
        for (a, b) in frames.iter().zip(&adjusted) {
            assert!((b.base_position.z - a.base_position.z - 0.1).abs() < 1e-12);
            for leg in 0..LEG_COUNT {
                if a.contacts[leg] {
                    assert!((b.foot_positions[leg].z - 0.1).abs() < 1e-12);
                } else {
                    assert!(
                        (b.foot_positions[leg].z - a.foot_positions[leg].z - 0.1).abs() < 1e-12
                    );
                }
            }
        }
    }

    #[test]
    fn step_under_front_feet_blends_base_offset() {
        let cfg = cfg();
        let state = standing(&cfg);
        let gait = GaitPattern::<f64>::new("stand", 0.5, 1.0, [0.0; 3]).unwrap();
        let frames =
            kinematic_baseline(&state, &VelocityCommand::zero(), &gait, 1.0, &cfg).unwrap();
        // 0.1 m step under x > 0.05 (the front feet).
        let terrain = HeightField::from_fn([-5.0, -5.0], 0.05, 201, 201, |x, _| {
            if x > 0.05 {
                0.1
            } else {
                0.0
            }
        })
        .unwrap();
        let adjusted = adjust_for_terrain(&frames, &terrain, &cfg).unwrap();
        let last = adjusted.last().unwrap();
        for leg in 0..LEG_COUNT {
            let expected = if cfg.hip_offsets[leg].x > 0.05 {
                0.1
            } else {
                0.0
            };
            assert!((last.foot_positions[leg].z - expected).abs() < 1e-12);
        }
        let offset = last.base_position.z - 0.32;
        assert!(offset > 0.01 && offset < 0.09, "offset {offset}");
    }

    #[test]
    fn queue_threshold_and_refill() {
        let cfg = cfg();
        let state = standing(&cfg);
        let gait = GaitPattern::trot();
        let command = VelocityCommand::zero();
        let motion = generate_reference(&state, &command, &gait, 1.0, &cfg).unwrap();
        // Half a trot period at 50 Hz: 12.5 frames, rounded up.
        let threshold = cfg.queue_threshold(&gait);
        assert_eq!(threshold, 13);
        let mut queue = MotionQueue::new(threshold);
        queue.push_frames(motion.frames).unwrap();
        let total = queue.len();

        // Consume until exactly the threshold boundary.
        for _ in 0..(total - threshold + 1) {
            assert!(!queue.needs_refill());
            queue.pop().unwrap();
        }
        assert!(queue.needs_refill());
        let before = queue.len();
        queue_refill(&mut queue, &command, &gait, 1.0, &cfg).unwrap();
        assert_eq!(queue.len(), before + 49);
    }

    #[test]
    fn refills_stay_continuous_and_monotone() {
        let cfg = cfg();
        let state = standing(&cfg);
        let gait = GaitPattern::trot();
        let mut command = VelocityCommand::zero();
        let motion = generate_reference(&state, &command, &gait, 1.0, &cfg).unwrap();
        let mut queue = MotionQueue::new(8);
        queue.push_frames(motion.frames).unwrap();

        // Ten seconds of refills; change the command mid-stream and check
        // the replan keeps stance feet planted across every seam.
        for refill in 0..9 {
            if refill == 2 {
                command = VelocityCommand::new(0.4, 0.0, 0.0);
            }
            let last = queue.back().unwrap().clone();
            queue_refill(&mut queue, &command, &gait, 1.0, &cfg).unwrap();
            let next_after_seam = queue.get(queue.len() - 49).expect("refill appended frames");
            for leg in 0..LEG_COUNT {
                if last.contacts[leg] && next_after_seam.contacts[leg] {
                    let d = (last.foot_positions[leg] - next_after_seam.foot_positions[leg]).norm();
                    assert!(d < 1e-9, "stance foot {leg} moved {d} across the seam");
                }
            }
        }

        let mut t_prev = f64::NEG_INFINITY;
        let mut index = 0;
        while let Some(frame) = queue.pop() {
            assert!(frame.time > t_prev);
            if t_prev.is_finite() {
                assert!((frame.time - t_prev - 0.02).abs() < 1e-9, "frame {index}");
            }
            t_prev = frame.time;
            index += 1;
        }
    }

    #[test]
    fn empty_queue_refill_errors() {
        let cfg = cfg();
        let mut queue = MotionQueue::<f64>::new(4);
        let err = queue_refill(
            &mut queue,
            &VelocityCommand::zero(),
            &GaitPattern::trot(),
            1.0,
            &cfg,
        );
        assert!(matches!(err, Err(Error::EmptyQueue)));
    }
}
