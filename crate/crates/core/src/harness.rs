//! Closed-loop validation on the reduced-model plant: receding-horizon
//! control runs, disturbance injection, domain-randomization samplers, and
//! tracking metrics.

use std::collections::VecDeque;

use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gait::{phase_variables, GaitPattern, LEG_COUNT};
use crate::imitation::{total_reward, RewardBreakdown, RewardConfig, RobotSnapshot, JOINT_COUNT};
use crate::ocp::{
    decision_footholds, raibert_foothold, solve_ocp, warm_start_shift, OcpProblem, StackedControl,
    VelocityCommand,
};
use crate::scalar::{real, Real};
use crate::synthesis::{
    build_problem, swing_trajectory, GeneratorState, ReferenceFrame, SynthesisConfig,
};
use crate::terrain::HeightField;
use crate::vhipm::{semi_implicit_step, ControlInput, GravityVector, PendulumState, SupportSet};

/// Domain-randomization ranges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomizationConfig<T: Real> {
    /// Linear velocity impulse bound, m/s per axis (symmetric).
    pub linear_impulse: T,
    /// Angular velocity impulse bound, rad/s per axis (symmetric).
    pub angular_impulse: T,
    /// Friction coefficient range.
    pub friction: [T; 2],
    /// Terrain-noise spatial frequency range.
    pub perlin_frequency: [T; 2],
    /// Terrain-noise height range, meters.
    pub perlin_magnitude: [T; 2],
    /// Half-angle of the gravity-direction cone, radians.
    pub gravity_cone_half_angle: T,
    /// Actuator latency, seconds.
    pub actuator_latency: T,
}

impl<T: Real> Default for RandomizationConfig<T> {
    fn default() -> Self {
        Self {
            linear_impulse: real(1.5),
            angular_impulse: real(1.5),
            friction: [real(0.5), real(1.25)],
            perlin_frequency: [T::zero(), real(0.9)],
            perlin_magnitude: [T::zero(), real(0.1)],
            gravity_cone_half_angle: real(10.0_f64.to_radians()),
            actuator_latency: real(0.03),
        }
    }
}

impl<T: Real> RandomizationConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.linear_impulse < T::zero() || self.angular_impulse < T::zero() {
            return Err(Error::Config(
                "randomization impulse bounds must be >= 0".into(),
            ));
        }
        for (name, range) in [
            ("friction", self.friction),
            ("perlin_frequency", self.perlin_frequency),
            ("perlin_magnitude", self.perlin_magnitude),
        ] {
            if range[0] > range[1] {
                return Err(Error::Config(format!(
                    "randomization.{name} range is not well-ordered"
                )));
            }
        }
        if self.gravity_cone_half_angle < T::zero() {
            return Err(Error::Config(
                "randomization.gravity_cone_half_angle must be >= 0".into(),
            ));
        }
        if self.actuator_latency < T::zero() {
            return Err(Error::Config(
                "randomization.actuator_latency must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// One draw from the randomization distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomizationDraw<T: Real> {
    pub linear_impulse: Vector3<T>,
    pub angular_impulse: Vector3<T>,
    pub friction: T,
    pub perlin_frequency: T,
    pub perlin_magnitude: T,
    /// Unit vector within the configured cone around straight down.
    pub gravity_direction: Vector3<T>,
    pub actuator_latency: T,
}

/// Samples impulses, friction, terrain parameters, and a gravity direction
/// uniformly over their configured ranges (the gravity direction is
/// uniform over the spherical cap of the cone).
pub fn sample_randomization<T: Real, R: Rng>(
    cfg: &RandomizationConfig<T>,
    rng: &mut R,
) -> RandomizationDraw<T> {
    let sym = |rng: &mut R, bound: T| -> T {
        let b = bound.to_f64().unwrap();
        if b == 0.0 {
            T::zero()
        } else {
            real(rng.gen_range(-b..=b))
        }
    };
    let uniform = |rng: &mut R, range: [T; 2]| -> T {
        let (lo, hi) = (range[0].to_f64().unwrap(), range[1].to_f64().unwrap());
        if lo == hi {
            range[0]
        } else {
            real(rng.gen_range(lo..=hi))
        }
    };

    let linear_impulse = Vector3::new(
        sym(rng, cfg.linear_impulse),
        sym(rng, cfg.linear_impulse),
        sym(rng, cfg.linear_impulse),
    );
    let angular_impulse = Vector3::new(
        sym(rng, cfg.angular_impulse),
        sym(rng, cfg.angular_impulse),
        sym(rng, cfg.angular_impulse),
    );
    let friction = uniform(rng, cfg.friction);
    let perlin_frequency = uniform(rng, cfg.perlin_frequency);
    let perlin_magnitude = uniform(rng, cfg.perlin_magnitude);

    // Uniform over the cap: cos(theta) uniform in [cos(max), 1].
    let cos_max = cfg.gravity_cone_half_angle.to_f64().unwrap().cos();
    let cos_theta = rng.gen_range(cos_max..=1.0);
    let sin_theta = (1.0 - cos_theta * cos_theta).max(0.0).sqrt();
    let phi = rng.gen_range(0.0..std::f64::consts::TAU);
    let gravity_direction = Vector3::new(
        real(sin_theta * phi.cos()),
        real(sin_theta * phi.sin()),
        real(-cos_theta),
    );

    RandomizationDraw {
        linear_impulse,
        angular_impulse,
        friction,
        perlin_frequency,
        perlin_magnitude,
        gravity_direction,
        actuator_latency: cfg.actuator_latency,
    }
}

const PERLIN_FREQUENCY_MAX: f64 = 0.9;
const PERLIN_MAGNITUDE_MAX: f64 = 0.1;
// Amplitude bound of 2-D gradient noise with unit gradients.
const PERLIN_AMPLITUDE: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

fn gradient(hash: u8, dx: f64, dy: f64) -> f64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    match hash & 7 {
        0 => dx,
        1 => -dx,
        2 => dy,
        3 => -dy,
        4 => s * (dx + dy),
        5 => s * (dx - dy),
        6 => s * (-dx + dy),
        _ => s * (-dx - dy),
    }
}

struct Perlin {
    perm: [u8; 512],
}

impl Perlin {
    fn new(seed: u64) -> Self {
        let mut table: Vec<u8> = (0..=255).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Fisher-Yates shuffle.
        for i in (1..table.len()).rev() {
            let j = rng.gen_range(0..=i);
            table.swap(i, j);
        }
        let mut perm = [0u8; 512];
        for i in 0..512 {
            perm[i] = table[i & 255];
        }
        Self { perm }
    }

    fn hash(&self, ix: i64, iy: i64) -> u8 {
        let x = (ix.rem_euclid(256)) as usize;
        let y = (iy.rem_euclid(256)) as usize;
        self.perm[self.perm[x] as usize + y]
    }

    /// Gradient noise in roughly [-amplitude, amplitude].
    fn noise(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let dx = x - x0;
        let dy = y - y0;
        let ix = x0 as i64;
        let iy = y0 as i64;
        let n00 = gradient(self.hash(ix, iy), dx, dy);
        let n10 = gradient(self.hash(ix + 1, iy), dx - 1.0, dy);
        let n01 = gradient(self.hash(ix, iy + 1), dx, dy - 1.0);
        let n11 = gradient(self.hash(ix + 1, iy + 1), dx - 1.0, dy - 1.0);
        let u = fade(dx);
        let v = fade(dy);
        let nx0 = n00 + u * (n10 - n00);
        let nx1 = n01 + u * (n11 - n01);
        nx0 + v * (nx1 - nx0)
    }
}

/// Deterministic gradient-noise terrain over a centered square of side
/// `extent`, scaled into `[0, magnitude]`.
pub fn perlin_heightfield<T: Real>(
    frequency: T,
    magnitude: T,
    seed: u64,
    extent: T,
    resolution: T,
) -> Result<HeightField<T>> {
    let f = frequency.to_f64().unwrap();
    let m = magnitude.to_f64().unwrap();
    if !(0.0..=PERLIN_FREQUENCY_MAX).contains(&f) {
        return Err(Error::InvalidParameter(format!(
            "perlin frequency {f} outside [0, {PERLIN_FREQUENCY_MAX}]"
        )));
    }
    if !(0.0..=PERLIN_MAGNITUDE_MAX).contains(&m) {
        return Err(Error::InvalidParameter(format!(
            "perlin magnitude {m} outside [0, {PERLIN_MAGNITUDE_MAX}] m"
        )));
    }
    let noise = Perlin::new(seed);
    HeightField::from_fn(
        [-extent / real(2.0), -extent / real(2.0)],
        resolution,
        ((extent / resolution).ceil().to_usize().unwrap_or(1) + 1).max(2),
        ((extent / resolution).ceil().to_usize().unwrap_or(1) + 1).max(2),
        |x, y| {
            let n = noise.noise(x.to_f64().unwrap() * f, y.to_f64().unwrap() * f);
            let unit = ((n / PERLIN_AMPLITUDE) + 1.0) / 2.0;
            real(unit.clamp(0.0, 1.0) * m)
        },
    )
}

/// One plant step: an optional velocity impulse followed by a
/// semi-implicit Euler step of the pendulum dynamics.
pub fn plant_step<T: Real>(
    state: &PendulumState<T>,
    input: &ControlInput<T>,
    support: &SupportSet<T>,
    disturbance: Option<&Vector3<T>>,
    gravity: &GravityVector<T>,
    dt: T,
) -> Result<PendulumState<T>> {
    let mut state = *state;
    if let Some(dv) = disturbance {
        state.velocity += dv;
    }
    semi_implicit_step(&state, input, support, gravity, dt)
}

/// A scheduled disturbance. The angular part is recorded in the log but
/// does not act on the point-mass plant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceEvent<T: Real> {
    pub time: T,
    pub linear_impulse: Vector3<T>,
    pub angular_impulse: Vector3<T>,
}

/// Harness knobs on top of the generator configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct HarnessConfig<T: Real> {
    pub synthesis: SynthesisConfig<T>,
    pub reward: RewardConfig<T>,
    /// Control (replanning) period, seconds.
    pub control_dt: T,
    /// Planning horizon in gait periods.
    pub horizon_periods: T,
    /// Fixed actuator latency on applied inputs; `None` disables the
    /// delay buffer.
    pub latency: Option<T>,
}

impl<T: Real> Default for HarnessConfig<T> {
    fn default() -> Self {
        Self {
            synthesis: SynthesisConfig::default(),
            reward: RewardConfig::default(),
            control_dt: real(0.02),
            horizon_periods: real(2.0),
            latency: None,
        }
    }
}

/// Solver outcome summary attached to each control step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary<T> {
    pub iterations: usize,
    pub cost: T,
    pub gradient_norm: T,
    pub converged: bool,
}

/// One control step of a closed-loop run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStep<T: Real> {
    /// Time at the start of the step; `state` is the plant state then.
    pub time: T,
    pub state: PendulumState<T>,
    pub applied_accel: T,
    /// Applied CoP weight per leg (zero for swing legs).
    pub applied_weights: [T; LEG_COUNT],
    pub contacts: [bool; LEG_COUNT],
    pub foot_positions: [Vector3<T>; LEG_COUNT],
    pub disturbance: Option<Vector3<T>>,
    pub angular_disturbance: Option<Vector3<T>>,
    /// One-step-ahead reference the controller was tracking.
    pub reference: ReferenceFrame<T>,
    /// Reward of the post-step plant state against `reference`.
    pub reward: RewardBreakdown<T>,
    pub solve: SolveSummary<T>,
}

/// Full record of one closed-loop run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog<T: Real> {
    pub gait: String,
    pub command: VelocityCommand<T>,
    pub control_dt: T,
    pub target_height: T,
    pub steps: Vec<RunStep<T>>,
    pub final_state: PendulumState<T>,
}

struct FootTracker<T: Real> {
    positions: [Vector3<T>; LEG_COUNT],
    swing_start: [Vector3<T>; LEG_COUNT],
}

/// Next planned foothold of `leg` strictly after time `t`, from the
/// active solution; falls back to the planning rule.
#[allow(clippy::too_many_arguments)]
fn planned_foothold<T: Real>(
    problem: &OcpProblem<T>,
    control: &StackedControl<T>,
    gait: &GaitPattern<T>,
    cfg: &SynthesisConfig<T>,
    state: &GeneratorState<T>,
    command: &VelocityCommand<T>,
    leg: usize,
    t: T,
) -> Vector3<T> {
    let eps = cfg.frame_dt * real(1e-6);
    for (f, s) in decision_footholds(problem).iter().zip(&control.footholds) {
        if f.leg == leg && f.coupled && f.touchdown_time > t + eps {
            return Vector3::new(s.x, s.y, T::zero());
        }
    }
    let touchdown = gait.next_touchdown(leg, t).unwrap_or(t);
    let yaw = command.yaw_after(state.yaw, touchdown - state.time);
    let hip = {
        let base = command.integrate_position(&state.position, state.yaw, touchdown - state.time);
        let off = crate::geometry::yaw_rotate(yaw, &cfg.hip_offsets[leg]);
        Vector3::new(base.x + off.x, base.y + off.y, T::zero())
    };
    let v_cmd = command.world_velocity(yaw);
    raibert_foothold(
        &hip,
        &v_cmd,
        &v_cmd,
        gait.stance_duration(),
        cfg.raibert_gain,
    )
}

/// Runs the receding-horizon loop: at every control step the trajectory
/// optimization re-solves from the measured plant state (warm-started from
/// the previous solution), the first input is applied, and the plant steps
/// forward. Solver degradation is recorded per step and the run continues
/// on the best iterate; a plant singularity aborts with an error.
pub fn receding_horizon_run<T: Real>(
    command: &VelocityCommand<T>,
    gait: &GaitPattern<T>,
    duration: T,
    disturbances: &[DisturbanceEvent<T>],
    cfg: &HarnessConfig<T>,
) -> Result<RunLog<T>> {
    if !(duration > T::zero()) {
        return Err(Error::InvalidParameter("run duration must be > 0".into()));
    }
    let syn = &cfg.synthesis;
    let dt = cfg.control_dt;
    let n_steps = (duration / dt).round().to_usize().unwrap_or(0).max(1);
    let horizon = cfg.horizon_periods * gait.period;

    let mut state = PendulumState::at_rest(Vector3::new(T::zero(), T::zero(), syn.target_height));
    let mut yaw = T::zero();
    let mut feet = FootTracker {
        positions: syn.hip_offsets.map(|h| Vector3::new(h.x, h.y, T::zero())),
        swing_start: syn.hip_offsets.map(|h| Vector3::new(h.x, h.y, T::zero())),
    };
    let mut previous: Option<(OcpProblem<T>, StackedControl<T>)> = None;
    // Entries of (compute time, vertical accel, per-leg weights).
    type DelayedInput<T> = (T, T, Vec<(usize, T)>);
    let mut latency_buffer: VecDeque<DelayedInput<T>> = VecDeque::new();
    let mut steps = Vec::with_capacity(n_steps);

    for i in 0..n_steps {
        let t = T::from_usize(i).unwrap() * dt;
        let gen_state = GeneratorState {
            time: t,
            position: state.position,
            velocity: state.velocity,
            yaw,
            feet: feet.positions,
        };
        let problem = build_problem(&gen_state, command, gait, horizon, syn)?;
        let guess = previous
            .as_ref()
            .map(|(pp, pc)| warm_start_shift(pp, pc, &problem));
        let solution = solve_ocp(&problem, &syn.weights, &syn.solver, guess.as_ref())?;

        let stance_legs: Vec<usize> = (0..LEG_COUNT)
            .filter(|&leg| problem.timeline.contacts[leg][0])
            .collect();
        let computed_weights: Vec<(usize, T)> = stance_legs
            .iter()
            .copied()
            .zip(solution.control.steps[0].cop_weights.iter().copied())
            .collect();
        let computed_accel = solution.control.steps[0].vertical_accel;

        // Latency: apply the newest input computed at or before t - delay.
        let (applied_accel, applied_by_leg) = match cfg.latency {
            None => (computed_accel, computed_weights.clone()),
            Some(delay) => {
                latency_buffer.push_back((t, computed_accel, computed_weights.clone()));
                let cutoff = t - delay;
                let mut chosen: Option<(T, Vec<(usize, T)>)> = None;
                for (stamp, accel, weights) in latency_buffer.iter() {
                    if *stamp <= cutoff {
                        chosen = Some((*accel, weights.clone()));
                    }
                }
                while latency_buffer.len() > 64 {
                    latency_buffer.pop_front();
                }
                chosen.unwrap_or((T::zero(), Vec::new()))
            }
        };

        // Map the applied weights onto the current stance set.
        let uniform = if stance_legs.is_empty() {
            T::zero()
        } else {
            T::one() / T::from_usize(stance_legs.len()).unwrap()
        };
        let weights: Vec<T> = stance_legs
            .iter()
            .map(|leg| {
                applied_by_leg
                    .iter()
                    .find(|(l, _)| l == leg)
                    .map(|(_, w)| *w)
                    .unwrap_or(uniform)
            })
            .collect();
        let support = SupportSet::new(stance_legs.iter().map(|&leg| feet.positions[leg]).collect());
        let input = ControlInput::new(applied_accel, weights);

        let mut linear = Vector3::zeros();
        let mut angular: Option<Vector3<T>> = None;
        for event in disturbances {
            if event.time >= t && event.time < t + dt {
                linear += event.linear_impulse;
                angular = Some(event.angular_impulse + angular.unwrap_or_else(Vector3::zeros));
            }
        }
        let disturbance = (linear.norm() > T::zero()).then_some(linear);

        let next = plant_step(
            &state,
            &input,
            &support,
            disturbance.as_ref(),
            &syn.gravity,
            dt,
        )?;

        // One-step-ahead reference from the fresh solution.
        let predicted = solution.state.positions[0];
        let frac = dt / syn.solver_dt;
        let ref_position = state.position + (predicted - state.position) * frac;
        let ref_velocity = (predicted - state.position) / syn.solver_dt;
        let t_next = t + dt;
        let mut ref_feet = [Vector3::zeros(); LEG_COUNT];
        let mut contacts_next = [false; LEG_COUNT];
        for leg in 0..LEG_COUNT {
            contacts_next[leg] = gait.in_stance(leg, t_next);
        }

        // Advance the tracked feet across [t, t + dt].
        let mut next_positions = feet.positions;
        for leg in 0..LEG_COUNT {
            let stance_now = problem.timeline.contacts[leg][0];
            let stance_next = contacts_next[leg];
            if stance_now && !stance_next {
                feet.swing_start[leg] = feet.positions[leg];
            }
            if !stance_next {
                let phase = gait.leg_phase(leg, t_next);
                let q = (phase - gait.duty_cycle) / (T::one() - gait.duty_cycle);
                let target = planned_foothold(
                    &problem,
                    &solution.control,
                    gait,
                    syn,
                    &gen_state,
                    command,
                    leg,
                    t_next,
                );
                next_positions[leg] =
                    swing_trajectory(&feet.swing_start[leg], &target, q, syn.swing_height, None);
            } else if !stance_now {
                // Touchdown in this window: plant at the planned spot.
                next_positions[leg] = planned_foothold(
                    &problem,
                    &solution.control,
                    gait,
                    syn,
                    &gen_state,
                    command,
                    leg,
                    t,
                );
            }
            ref_feet[leg] = next_positions[leg];
        }

        let reference = ReferenceFrame {
            time: t_next,
            base_position: ref_position,
            base_velocity: ref_velocity,
            yaw: command.yaw_after(yaw, dt),
            yaw_rate: command.yaw_rate,
            foot_positions: ref_feet,
            contacts: contacts_next,
            phases: phase_variables(gait, t_next),
        };

        // Reward of the post-step state against the reference.
        let mut snapshot = RobotSnapshot::upright(next.position.z, next_positions);
        snapshot.base_position = next.position;
        snapshot.base_velocity = next.velocity;
        snapshot.yaw = command.yaw_after(yaw, dt);
        snapshot.yaw_rate = command.yaw_rate;
        snapshot.foot_contacts = contacts_next;
        let mut action = [T::zero(); JOINT_COUNT];
        action[0] = applied_accel;
        for (slot, (_, w)) in applied_by_leg.iter().enumerate().take(4) {
            action[1 + slot] = *w;
        }
        let prev_action = steps
            .last()
            .map(|s: &RunStep<T>| {
                let mut a = [T::zero(); JOINT_COUNT];
                a[0] = s.applied_accel;
                for (slot, w) in s.applied_weights.iter().enumerate().take(4) {
                    a[1 + slot] = *w;
                }
                a
            })
            .unwrap_or(action);
        let reward = total_reward(&snapshot, &reference, &action, &prev_action, &cfg.reward)?;

        let mut applied_weights = [T::zero(); LEG_COUNT];
        for (leg, w) in &applied_by_leg {
            applied_weights[*leg] = *w;
        }
        steps.push(RunStep {
            time: t,
            state,
            applied_accel,
            applied_weights,
            contacts: core::array::from_fn(|leg| problem.timeline.contacts[leg][0]),
            foot_positions: feet.positions,
            disturbance,
            angular_disturbance: angular,
            reference,
            reward,
            solve: SolveSummary {
                iterations: solution.report.iterations,
                cost: solution.report.final_cost,
                gradient_norm: solution.report.gradient_norm,
                converged: solution.report.converged,
            },
        });

        state = next;
        yaw = command.yaw_after(yaw, dt);
        feet.positions = next_positions;
        previous = Some((problem, solution.control));
    }

    Ok(RunLog {
        gait: gait.name.clone(),
        command: *command,
        control_dt: dt,
        target_height: syn.target_height,
        steps,
        final_state: state,
    })
}

/// Recovery record for one disturbance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRecord<T> {
    pub disturbance_time: T,
    /// Seconds until the velocity error first dropped below the recovery
    /// threshold; `None` if it never did within the log.
    pub recovery_time: Option<T>,
}

/// Plot-ready series extracted from a run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries<T> {
    pub time: Vec<T>,
    pub forward_velocity: Vec<T>,
    pub base_height: Vec<T>,
    /// Height of the front-left foot.
    pub foot_height: Vec<T>,
}

/// Summary metrics of a run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingMetrics<T: Real> {
    /// Mean planar velocity-error norm after the settle window.
    pub mean_velocity_error: T,
    pub max_velocity_error: T,
    /// RMSE of base height against the target, after the settle window.
    pub height_rmse: T,
    pub mean_height: T,
    pub mean_forward_velocity: T,
    pub recovery: Vec<RecoveryRecord<T>>,
    pub mean_reward: RewardBreakdown<T>,
    pub series: PlotSeries<T>,
}

fn velocity_error<T: Real>(log: &RunLog<T>, time: T, velocity: &Vector3<T>, yaw0: T) -> T {
    let yaw = log.command.yaw_after(yaw0, time);
    let cmd = log.command.world_velocity(yaw);
    let dx = velocity.x - cmd.x;
    let dy = velocity.y - cmd.y;
    (dx * dx + dy * dy).sqrt()
}

/// Computes tracking metrics over a run log. Velocity statistics skip the
/// first `settle_time` seconds; recovery times use `recovery_threshold` on
/// the planar velocity-error norm.
pub fn tracking_metrics<T: Real>(
    log: &RunLog<T>,
    settle_time: T,
    recovery_threshold: T,
) -> Result<TrackingMetrics<T>> {
    if log.steps.is_empty() {
        return Err(Error::InvalidInput("empty run log".into()));
    }
    let mut series = PlotSeries {
        time: Vec::with_capacity(log.steps.len()),
        forward_velocity: Vec::with_capacity(log.steps.len()),
        base_height: Vec::with_capacity(log.steps.len()),
        foot_height: Vec::with_capacity(log.steps.len()),
    };

    let mut sum_err = T::zero();
    let mut max_err = T::zero();
    let mut count = 0;
    let mut sum_sq_height = T::zero();
    let mut sum_height = T::zero();
    let mut sum_vx = T::zero();
    let mut errors: Vec<(T, T)> = Vec::with_capacity(log.steps.len());

    for step in &log.steps {
        let err = velocity_error(log, step.time, &step.state.velocity, T::zero());
        errors.push((step.time, err));
        series.time.push(step.time);
        series.forward_velocity.push(step.state.velocity.x);
        series.base_height.push(step.state.position.z);
        series.foot_height.push(step.foot_positions[0].z);
        if step.time >= settle_time {
            sum_err += err;
            max_err = max_err.max(err);
            let dh = step.state.position.z - log.target_height;
            sum_sq_height += dh * dh;
            sum_height += step.state.position.z;
            sum_vx += step.state.velocity.x;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::InvalidInput(
            "settle window leaves no samples to summarize".into(),
        ));
    }
    let n = T::from_usize(count).unwrap();

    let mut recovery = Vec::new();
    for step in &log.steps {
        if step.disturbance.is_none() {
            continue;
        }
        let t0 = step.time;
        let found = errors
            .iter()
            .find(|(t, e)| *t > t0 && *e < recovery_threshold)
            .map(|(t, _)| *t - t0);
        recovery.push(RecoveryRecord {
            disturbance_time: t0,
            recovery_time: found,
        });
    }

    let m = T::from_usize(log.steps.len()).unwrap();
    let mut mean_reward = RewardBreakdown {
        height: T::zero(),
        velocity: T::zero(),
        yaw_rate: T::zero(),
        feet_position: T::zero(),
        action_rate: T::zero(),
        feet_slip: T::zero(),
        pitch_roll: T::zero(),
        imitation: T::zero(),
        regularizer: T::zero(),
        total: T::zero(),
    };
    for step in &log.steps {
        mean_reward.height += step.reward.height / m;
        mean_reward.velocity += step.reward.velocity / m;
        mean_reward.yaw_rate += step.reward.yaw_rate / m;
        mean_reward.feet_position += step.reward.feet_position / m;
        mean_reward.action_rate += step.reward.action_rate / m;
        mean_reward.feet_slip += step.reward.feet_slip / m;
        mean_reward.pitch_roll += step.reward.pitch_roll / m;
        mean_reward.imitation += step.reward.imitation / m;
        mean_reward.regularizer += step.reward.regularizer / m;
        mean_reward.total += step.reward.total / m;
    }

    Ok(TrackingMetrics {
        mean_velocity_error: sum_err / n,
        max_velocity_error: max_err,
        height_rmse: (sum_sq_height / n).sqrt(),
        mean_height: sum_height / n,
        mean_forward_velocity: sum_vx / n,
        recovery,
        mean_reward,
        series,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ocp::{resolve_supports, rollout, OcpWeights, SolverSettings};

    #[test]
    fn impulse_adds_to_velocity_exactly() {
        let state = PendulumState::<f64>::at_rest(Vector3::new(0.0, 0.0, 0.32));
        let support = SupportSet::new(vec![Vector3::zeros()]);
        let input = ControlInput::new(0.0, vec![1.0]);
        let g = GravityVector::default();
        let kicked = plant_step(
            &state,
            &input,
            &support,
            Some(&Vector3::new(0.5, 0.0, 0.0)),
            &g,
            0.02,
        )
        .unwrap();
        let un_kicked = plant_step(&state, &input, &support, None, &g, 0.02).unwrap();
        // The impulse shifts the pre-step velocity by exactly 0.5 m/s.
        assert!((kicked.velocity.x - un_kicked.velocity.x - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ballistic_segment_conserves_horizontal_velocity() {
        let g = GravityVector::default();
        let input = ControlInput::new(0.0, vec![]);
        let mut state =
            PendulumState::new(Vector3::new(0.0, 0.0, 0.5), Vector3::new(0.3, -0.2, 0.0));
        for _ in 0..20 {
            state = plant_step(&state, &input, &SupportSet::flight(), None, &g, 0.02).unwrap();
            assert_eq!(state.velocity.x, 0.3);
            assert_eq!(state.velocity.y, -0.2);
        }
    }

    #[test]
    fn open_loop_plant_matches_rollout_exactly() {
        let gait = GaitPattern::trot();
        let syn = SynthesisConfig::<f64>::default();
        let state = GeneratorState::standing(syn.target_height, &syn.hip_offsets);
        let problem = build_problem(
            &state,
            &VelocityCommand::new(0.4, 0.0, 0.0),
            &gait,
            1.0,
            &syn,
        )
        .unwrap();
        let solution = solve_ocp(
            &problem,
            &OcpWeights::default(),
            &SolverSettings::default(),
            None,
        )
        .unwrap();
        let reference = rollout(&problem, &solution.control).unwrap();
        let supports = resolve_supports(&problem, &solution.control).unwrap();

        let mut plant = PendulumState::new(problem.initial_position, problem.initial_velocity);
        for (k, support) in supports.iter().enumerate() {
            let input = ControlInput::new(
                solution.control.steps[k].vertical_accel,
                solution.control.steps[k].cop_weights.clone(),
            );
            plant = plant_step(&plant, &input, support, None, &problem.gravity, 0.025).unwrap();
            assert_eq!(
                plant.position, reference.positions[k],
                "open-loop divergence at step {k}"
            );
        }
    }

    #[test]
    fn randomization_draws_stay_in_range() {
        let cfg = RandomizationConfig::<f64>::default();
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        for _ in 0..20_000 {
            let draw = sample_randomization(&cfg, &mut rng);
            for axis in 0..3 {
                assert!(draw.linear_impulse[axis].abs() <= 1.5);
                assert!(draw.angular_impulse[axis].abs() <= 1.5);
            }
            assert!((0.5..=1.25).contains(&draw.friction));
            assert!((0.0..=0.9).contains(&draw.perlin_frequency));
            assert!((0.0..=0.1).contains(&draw.perlin_magnitude));
            assert!((draw.gravity_direction.norm() - 1.0).abs() < 1e-12);
            let angle = (-draw.gravity_direction.z).acos();
            assert!(angle <= 10.0_f64.to_radians() + 1e-12);
            assert_eq!(draw.actuator_latency, 0.03);
        }
    }

    #[test]
    fn cone_sampling_matches_analytic_mean_angle() {
        let cfg = RandomizationConfig::<f64>::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let draw = sample_randomization(&cfg, &mut rng);
            sum += (-draw.gravity_direction.z).acos();
        }
        let mean = sum / n as f64;
        // Uniform over the cap: E[theta] = (sin t - t cos t) / (1 - cos t).
        let t = 10.0_f64.to_radians();
        let analytic = (t.sin() - t * t.cos()) / (1.0 - t.cos());
        assert!(
            (mean - analytic).abs() / analytic < 0.02,
            "mean {mean} vs analytic {analytic}"
        );
    }

    #[test]
    fn seeded_draws_are_reproducible() {
        let cfg = RandomizationConfig::<f64>::default();
        let mut a = ChaCha8Rng::seed_from_u64(99);
        let mut b = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            assert_eq!(
                sample_randomization(&cfg, &mut a),
                sample_randomization(&cfg, &mut b)
            );
        }
    }

    #[test]
    fn perlin_zero_magnitude_is_flat() {
        let field = perlin_heightfield(0.5, 0.0, 42, 4.0, 0.1).unwrap();
        assert_eq!(field.min_height(), 0.0);
        assert_eq!(field.max_height(), 0.0);
    }

    #[test]
    fn perlin_respects_magnitude_bounds() {
        let field = perlin_heightfield(0.9, 0.1, 42, 6.0, 0.05).unwrap();
        assert!(field.min_height() >= 0.0);
        assert!(field.max_height() <= 0.1);
        // Deterministic per seed.
        let again = perlin_heightfield(0.9, 0.1, 42, 6.0, 0.05).unwrap();
        assert_eq!(field, again);
        let other = perlin_heightfield(0.9, 0.1, 43, 6.0, 0.05).unwrap();
        assert_ne!(field, other);
    }

    #[test]
    fn perlin_rejects_out_of_range_parameters() {
        assert!(perlin_heightfield(1.0, 0.05, 1, 4.0, 0.1).is_err());
        assert!(perlin_heightfield(0.5, 0.2, 1, 4.0, 0.1).is_err());
    }

    #[test]
    fn perlin_slope_stays_bounded_under_refinement() {
        let mut slopes = Vec::new();
        for &res in &[0.08, 0.04, 0.02] {
            let field = perlin_heightfield::<f64>(0.9, 0.1, 7, 4.0, res).unwrap();
            let (nx, ny) = field.node_counts();
            let mut max_diff = 0.0_f64;
            for iy in 0..ny {
                for ix in 0..nx - 1 {
                    max_diff = max_diff.max((field.node(ix + 1, iy) - field.node(ix, iy)).abs());
                }
            }
            slopes.push(max_diff / res);
        }
        // Continuity: adjacent-node differences shrink with resolution, so
        // the discrete slope stays bounded instead of blowing up.
        for pair in slopes.windows(2) {
            assert!(pair[1] <= pair[0] * 1.5 + 1e-9, "slopes {slopes:?}");
        }
    }

    fn synthetic_log(states: Vec<(f64, PendulumState<f64>, Option<Vector3<f64>>)>) -> RunLog<f64> {
        let reward = RewardBreakdown {
            height: 1.0,
            velocity: 1.0,
            yaw_rate: 1.0,
            feet_position: 1.0,
            action_rate: 1.0,
            feet_slip: 1.0,
            pitch_roll: 1.0,
            imitation: 1.0,
            regularizer: 1.0,
            total: 1.0,
        };
        let final_state = states.last().unwrap().1;
        let steps = states
            .into_iter()
            .map(|(time, state, disturbance)| RunStep {
                time,
                state,
                applied_accel: 0.0,
                applied_weights: [0.0; LEG_COUNT],
                contacts: [true; LEG_COUNT],
                foot_positions: [Vector3::zeros(); LEG_COUNT],
                disturbance,
                angular_disturbance: None,
                reference: ReferenceFrame {
                    time,
                    base_position: Vector3::new(0.0, 0.0, 0.32),
                    base_velocity: Vector3::zeros(),
                    yaw: 0.0,
                    yaw_rate: 0.0,
                    foot_positions: [Vector3::zeros(); LEG_COUNT],
                    contacts: [true; LEG_COUNT],
                    phases: [0.0; LEG_COUNT],
                },
                reward,
                solve: SolveSummary {
                    iterations: 0,
                    cost: 0.0,
                    gradient_norm: 0.0,
                    converged: true,
                },
            })
            .collect();
        RunLog {
            gait: "synthetic".into(),
            command: VelocityCommand::new(0.5, 0.0, 0.0),
            control_dt: 0.02,
            target_height: 0.32,
            steps,
            final_state,
        }
    }

    #[test]
    fn metrics_on_perfect_tracking_are_zero() {
        let states = (0..100)
            .map(|i| {
                let t = i as f64 * 0.02;
                (
                    t,
                    PendulumState::new(
                        Vector3::new(0.5 * t, 0.0, 0.32),
                        Vector3::new(0.5, 0.0, 0.0),
                    ),
                    None,
                )
            })
            .collect();
        let metrics = tracking_metrics(&synthetic_log(states), 0.0, 0.05).unwrap();
        assert_eq!(metrics.mean_velocity_error, 0.0);
        assert_eq!(metrics.max_velocity_error, 0.0);
        assert_eq!(metrics.height_rmse, 0.0);
        assert!((metrics.mean_forward_velocity - 0.5).abs() < 1e-12);
    }

    #[test]
    fn metrics_report_constant_height_offset_exactly() {
        let states = (0..50)
            .map(|i| {
                let t = i as f64 * 0.02;
                (
                    t,
                    PendulumState::new(
                        Vector3::new(0.5 * t, 0.0, 0.34),
                        Vector3::new(0.5, 0.0, 0.0),
                    ),
                    None,
                )
            })
            .collect();
        let metrics = tracking_metrics(&synthetic_log(states), 0.0, 0.05).unwrap();
        assert!((metrics.height_rmse - 0.02).abs() < 1e-12);
    }

    #[test]
    fn recovery_time_matches_analytic_crossing() {
        // Error decays as 0.5 exp(-(t - 1)/tau) after a kick at t = 1; the
        // threshold 0.05 is crossed at tau ln(10) after the kick.
        let tau = 0.3;
        let states: Vec<_> = (0..200)
            .map(|i| {
                let t = i as f64 * 0.02;
                let err = if t >= 1.0 {
                    0.5 * (-(t - 1.0) / tau).exp()
                } else {
                    0.0
                };
                (
                    t,
                    PendulumState::new(
                        Vector3::new(0.5 * t, 0.0, 0.32),
                        Vector3::new(0.5, err, 0.0),
                    ),
                    (t == 1.0).then_some(Vector3::new(0.0, 0.5, 0.0)),
                )
            })
            .collect();
        let metrics = tracking_metrics(&synthetic_log(states), 0.0, 0.05).unwrap();
        assert_eq!(metrics.recovery.len(), 1);
        let measured = metrics.recovery[0].recovery_time.unwrap();
        let analytic = tau * 10.0_f64.ln();
        // First sample strictly past the crossing on the 20 ms grid.
        let expected = (analytic / 0.02).floor() * 0.02 + 0.02;
        assert!(
            (measured - expected).abs() < 1e-9,
            "measured {measured} vs expected {expected}"
        );
    }

    #[test]
    fn short_receding_horizon_run_tracks_in_place() {
        let cfg = HarnessConfig::<f64>::default();
        let log = receding_horizon_run(
            &VelocityCommand::zero(),
            &GaitPattern::trot(),
            1.5,
            &[],
            &cfg,
        )
        .unwrap();
        assert_eq!(log.steps.len(), 75);
        let metrics = tracking_metrics(&log, 0.5, 0.05).unwrap();
        assert!(metrics.mean_velocity_error < 0.05, "{metrics:?}");
        let drift = (log.final_state.position - Vector3::new(0.0, 0.0, 0.32)).norm();
        assert!(drift < 0.05, "drift {drift}");
        for step in &log.steps {
            assert!(step.solve.converged);
        }
    }
}
