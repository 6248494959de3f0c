//! Motion-imitation contract: reward terms, observation assembly, episode
//! initialization, and termination.
//!
//! Every reward factor maps a tracking error through
//! `exp(-||error / sigma||^2)`, so factors live in (0, 1] and multiply.

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gait::LEG_COUNT;
use crate::geometry::yaw_rotate;
use crate::ocp::VelocityCommand;
use crate::scalar::{real, Real};
use crate::synthesis::{MotionQueue, ReferenceFrame};

pub const JOINT_COUNT: usize = 12;
/// Rows x columns of the optional terrain height scan.
pub const HEIGHT_SCAN_SHAPE: (usize, usize) = (7, 11);

/// One measured robot state, as the reward and observation layers see it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotSnapshot<T: Real> {
    pub base_position: Vector3<T>,
    /// Gravity direction in the body frame, unit norm.
    pub gravity_direction: Vector3<T>,
    pub base_velocity: Vector3<T>,
    pub angular_velocity: Vector3<T>,
    pub yaw: T,
    pub yaw_rate: T,
    pub pitch: T,
    pub roll: T,
    pub joint_positions: [T; JOINT_COUNT],
    pub joint_velocities: [T; JOINT_COUNT],
    pub foot_positions: [Vector3<T>; LEG_COUNT],
    pub foot_velocities: [Vector3<T>; LEG_COUNT],
    pub foot_contacts: [bool; LEG_COUNT],
    /// Set when something other than a foot touches the world.
    pub non_foot_contact: bool,
    pub previous_action: [T; JOINT_COUNT],
    /// Optional terrain height scan (7 x 11, row-major) for perceptive
    /// observation layouts.
    pub height_scan: Option<Vec<T>>,
}

impl<T: Real> RobotSnapshot<T> {
    /// Upright snapshot at the given base height, feet planted under the
    /// given offsets.
    pub fn upright(height: T, feet: [Vector3<T>; LEG_COUNT]) -> Self {
        Self {
            base_position: Vector3::new(T::zero(), T::zero(), height),
            gravity_direction: Vector3::new(T::zero(), T::zero(), -T::one()),
            base_velocity: Vector3::zeros(),
            angular_velocity: Vector3::zeros(),
            yaw: T::zero(),
            yaw_rate: T::zero(),
            pitch: T::zero(),
            roll: T::zero(),
            joint_positions: [T::zero(); JOINT_COUNT],
            joint_velocities: [T::zero(); JOINT_COUNT],
            foot_positions: feet,
            foot_velocities: [Vector3::zeros(); LEG_COUNT],
            foot_contacts: [true; LEG_COUNT],
            non_foot_contact: false,
            previous_action: [T::zero(); JOINT_COUNT],
            height_scan: None,
        }
    }

    pub fn base_height(&self) -> T {
        self.base_position.z
    }

    pub fn validate(&self) -> Result<()> {
        if (self.gravity_direction.norm() - T::one()).abs() > real(1e-9) {
            return Err(Error::InvalidInput(
                "snapshot gravity direction must have unit norm".into(),
            ));
        }
        Ok(())
    }
}

/// Reward sensitivities. Vector-valued sensitivities apply in
/// forward-vertical-sideways order, i.e. (x, z, y) of the yaw frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig<T> {
    pub base_height: T,
    pub base_velocity: [T; 3],
    pub yaw_rate: T,
    pub feet_position: [T; 3],
    pub action_rate: T,
    pub feet_slip: T,
    pub pitch_roll: T,
}

impl<T: Real> Default for RewardConfig<T> {
    fn default() -> Self {
        Self {
            base_height: real(0.05),
            base_velocity: [real(0.3), real(0.1), real(0.3)],
            yaw_rate: real(0.5),
            feet_position: [real(0.15), real(0.025), real(0.15)],
            action_rate: real(1.5),
            feet_slip: real(0.1),
            pitch_roll: real(0.5),
        }
    }
}

impl<T: Real> RewardConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let mut all = vec![
            ("base_height", self.base_height),
            ("yaw_rate", self.yaw_rate),
            ("action_rate", self.action_rate),
            ("feet_slip", self.feet_slip),
            ("pitch_roll", self.pitch_roll),
        ];
        for i in 0..3 {
            all.push(("base_velocity", self.base_velocity[i]));
            all.push(("feet_position", self.feet_position[i]));
        }
        for (name, sigma) in all {
            if !(sigma > T::zero()) {
                return Err(Error::Config(format!(
                    "reward.{name}: sensitivities must be > 0"
                )));
            }
        }
        Ok(())
    }
}

/// Termination thresholds for the collapse check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminationConfig<T> {
    /// Base height below this terminates, meters.
    pub min_base_height: T,
    /// Pitch or roll beyond this terminates, radians.
    pub max_tilt: T,
}

impl<T: Real> Default for TerminationConfig<T> {
    fn default() -> Self {
        Self {
            min_base_height: real(0.15),
            max_tilt: real(1.0),
        }
    }
}

/// Maps a tracking error through `exp(-||(reference - actual)/sigma||^2)`.
///
/// `sigma` is either one scalar for the whole error vector or one entry
/// per component. The result is 1 exactly when the error is zero.
pub fn reward_term<T: Real>(reference: &[T], actual: &[T], sigma: &[T]) -> Result<T> {
    if reference.len() != actual.len() {
        return Err(Error::InvalidInput(format!(
            "reward term dimensions differ: {} vs {}",
            reference.len(),
            actual.len()
        )));
    }
    if sigma.is_empty() || (sigma.len() != 1 && sigma.len() != reference.len()) {
        return Err(Error::InvalidInput(format!(
            "sensitivity must be scalar or match the error dimension {}",
            reference.len()
        )));
    }
    let mut sum = T::zero();
    for i in 0..reference.len() {
        let s = if sigma.len() == 1 { sigma[0] } else { sigma[i] };
        if !(s > T::zero()) {
            return Err(Error::Config("sensitivities must be > 0".into()));
        }
        let e = (reference[i] - actual[i]) / s;
        sum += e * e;
    }
    Ok((-sum).exp())
}

/// Scalar convenience wrapper over [`reward_term`].
pub fn reward_term_scalar<T: Real>(reference: T, actual: T, sigma: T) -> Result<T> {
    reward_term(&[reference], &[actual], &[sigma])
}

/// Foot positions expressed in the frame whose origin is the base position
/// projected to the ground and whose orientation keeps only the yaw angle.
pub fn feet_frame_transform<T: Real>(
    base_position: &Vector3<T>,
    yaw: T,
    feet: &[Vector3<T>; LEG_COUNT],
) -> [Vector3<T>; LEG_COUNT] {
    let origin = Vector3::new(base_position.x, base_position.y, T::zero());
    feet.map(|p| yaw_rotate(-yaw, &(p - origin)))
}

/// Per-factor reward values; the products are precomputed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown<T> {
    pub height: T,
    pub velocity: T,
    pub yaw_rate: T,
    pub feet_position: T,
    pub action_rate: T,
    pub feet_slip: T,
    pub pitch_roll: T,
    pub imitation: T,
    pub regularizer: T,
    pub total: T,
}

fn height_factor<T: Real>(
    snapshot: &RobotSnapshot<T>,
    reference: &ReferenceFrame<T>,
    cfg: &RewardConfig<T>,
) -> Result<T> {
    reward_term_scalar(
        reference.base_position.z,
        snapshot.base_height(),
        cfg.base_height,
    )
}

/// Velocities compare in each body's own yaw frame, ordered
/// forward-vertical-sideways.
fn velocity_factor<T: Real>(
    snapshot: &RobotSnapshot<T>,
    reference: &ReferenceFrame<T>,
    cfg: &RewardConfig<T>,
) -> Result<T> {
    let v_ref = yaw_rotate(-reference.yaw, &reference.base_velocity);
    let v_act = yaw_rotate(-snapshot.yaw, &snapshot.base_velocity);
    reward_term(
        &[v_ref.x, v_ref.z, v_ref.y],
        &[v_act.x, v_act.z, v_act.y],
        &cfg.base_velocity,
    )
}

fn feet_factor<T: Real>(
    snapshot: &RobotSnapshot<T>,
    reference: &ReferenceFrame<T>,
    cfg: &RewardConfig<T>,
) -> Result<T> {
    let feet_ref = feet_frame_transform(
        &reference.base_position,
        reference.yaw,
        &reference.foot_positions,
    );
    let feet_act = feet_frame_transform(
        &snapshot.base_position,
        snapshot.yaw,
        &snapshot.foot_positions,
    );
    let mut ref_flat = Vec::with_capacity(3 * LEG_COUNT);
    let mut act_flat = Vec::with_capacity(3 * LEG_COUNT);
    let mut sigma = Vec::with_capacity(3 * LEG_COUNT);
    for leg in 0..LEG_COUNT {
        ref_flat.extend_from_slice(&[feet_ref[leg].x, feet_ref[leg].z, feet_ref[leg].y]);
        act_flat.extend_from_slice(&[feet_act[leg].x, feet_act[leg].z, feet_act[leg].y]);
        sigma.extend_from_slice(&cfg.feet_position);
    }
    reward_term(&ref_flat, &act_flat, &sigma)
}

fn slip_factor<T: Real>(snapshot: &RobotSnapshot<T>, cfg: &RewardConfig<T>) -> Result<T> {
    let mut planar = Vec::new();
    for leg in 0..LEG_COUNT {
        if snapshot.foot_contacts[leg] {
            planar.push(snapshot.foot_velocities[leg].x);
            planar.push(snapshot.foot_velocities[leg].y);
        }
    }
    if planar.is_empty() {
        Ok(T::one())
    } else {
        let zeros = vec![T::zero(); planar.len()];
        reward_term(&zeros, &planar, &[cfg.feet_slip])
    }
}

/// Imitation reward: the product of the height, velocity, yaw-rate, and
/// feet-position factors against a time-aligned reference frame.
pub fn imitation_reward<T: Real>(
    snapshot: &RobotSnapshot<T>,
    reference: &ReferenceFrame<T>,
    cfg: &RewardConfig<T>,
) -> Result<T> {
    let r_h = height_factor(snapshot, reference, cfg)?;
    let r_v = velocity_factor(snapshot, reference, cfg)?;
    let r_yaw = reward_term_scalar(reference.yaw_rate, snapshot.yaw_rate, cfg.yaw_rate)?;
    let r_ee = feet_factor(snapshot, reference, cfg)?;
    Ok(r_h * r_v * r_yaw * r_ee)
}

/// Regularizer: action rate, contact-feet slip, and pitch/roll factors.
/// With no feet in contact the slip factor is 1.
pub fn regularizer<T: Real>(
    snapshot: &RobotSnapshot<T>,
    action: &[T; JOINT_COUNT],
    previous_action: &[T; JOINT_COUNT],
    cfg: &RewardConfig<T>,
) -> Result<T> {
    let r_rate = reward_term(action, previous_action, &[cfg.action_rate])?;
    let r_slip = slip_factor(snapshot, cfg)?;
    let zero = [T::zero(), T::zero()];
    let r_tilt = reward_term(&zero, &[snapshot.pitch, snapshot.roll], &[cfg.pitch_roll])?;
    Ok(r_rate * r_slip * r_tilt)
}

/// Full reward: imitation times regularizer, with the factor breakdown.
pub fn total_reward<T: Real>(
    snapshot: &RobotSnapshot<T>,
    reference: &ReferenceFrame<T>,
    action: &[T; JOINT_COUNT],
    previous_action: &[T; JOINT_COUNT],
    cfg: &RewardConfig<T>,
) -> Result<RewardBreakdown<T>> {
    let height = height_factor(snapshot, reference, cfg)?;
    let velocity = velocity_factor(snapshot, reference, cfg)?;
    let yaw_rate = reward_term_scalar(reference.yaw_rate, snapshot.yaw_rate, cfg.yaw_rate)?;
    let feet_position = feet_factor(snapshot, reference, cfg)?;
    let imitation = height * velocity * yaw_rate * feet_position;

    let action_rate = reward_term(action, previous_action, &[cfg.action_rate])?;
    let feet_slip = slip_factor(snapshot, cfg)?;
    let zero = [T::zero(), T::zero()];
    let pitch_roll = reward_term(&zero, &[snapshot.pitch, snapshot.roll], &[cfg.pitch_roll])?;
    let regularizer = action_rate * feet_slip * pitch_roll;

    Ok(RewardBreakdown {
        height,
        velocity,
        yaw_rate,
        feet_position,
        action_rate,
        feet_slip,
        pitch_roll,
        imitation,
        regularizer,
        total: imitation * regularizer,
    })
}

/// Named blocks of the observation vector, in layout order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationBlock {
    BaseHeight,
    GravityDirection,
    LinearVelocity,
    AngularVelocity,
    JointPositions,
    JointVelocities,
    PhaseSinCos,
    VelocityCommand,
    PreviousAction,
    HeightScan,
}

/// Fixed observation layout; the perceptive variant appends the height
/// scan block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationLayout {
    pub perceptive: bool,
}

impl ObservationLayout {
    pub fn blind() -> Self {
        Self { perceptive: false }
    }

    pub fn perceptive() -> Self {
        Self { perceptive: true }
    }

    /// Blocks with their index ranges.
    pub fn segments(&self) -> Vec<(ObservationBlock, std::ops::Range<usize>)> {
        use ObservationBlock::*;
        let sizes = [
            (BaseHeight, 1),
            (GravityDirection, 3),
            (LinearVelocity, 3),
            (AngularVelocity, 3),
            (JointPositions, JOINT_COUNT),
            (JointVelocities, JOINT_COUNT),
            (PhaseSinCos, 2 * LEG_COUNT),
            (VelocityCommand, 3),
            (PreviousAction, JOINT_COUNT),
        ];
        let mut out = Vec::new();
        let mut cursor = 0;
        for (block, size) in sizes {
            out.push((block, cursor..cursor + size));
            cursor += size;
        }
        if self.perceptive {
            let scan = HEIGHT_SCAN_SHAPE.0 * HEIGHT_SCAN_SHAPE.1;
            out.push((HeightScan, cursor..cursor + scan));
        }
        out
    }

    pub fn len(&self) -> usize {
        self.segments().last().map(|(_, r)| r.end).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Concatenates the observation blocks in layout order. The phase block
/// holds one (sin, cos) pair per leg.
pub fn build_observation<T: Real>(
    snapshot: &RobotSnapshot<T>,
    phases: &[[T; 2]; LEG_COUNT],
    command: &VelocityCommand<T>,
    layout: &ObservationLayout,
) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(layout.len());
    out.push(snapshot.base_height());
    out.extend_from_slice(snapshot.gravity_direction.as_slice());
    out.extend_from_slice(snapshot.base_velocity.as_slice());
    out.extend_from_slice(snapshot.angular_velocity.as_slice());
    out.extend_from_slice(&snapshot.joint_positions);
    out.extend_from_slice(&snapshot.joint_velocities);
    for pair in phases {
        out.push(pair[0]);
        out.push(pair[1]);
    }
    out.push(command.forward);
    out.push(command.lateral);
    out.push(command.yaw_rate);
    out.extend_from_slice(&snapshot.previous_action);
    if layout.perceptive {
        let scan = snapshot
            .height_scan
            .as_ref()
            .ok_or_else(|| Error::Layout("perceptive layout requires a height scan".into()))?;
        let expected = HEIGHT_SCAN_SHAPE.0 * HEIGHT_SCAN_SHAPE.1;
        if scan.len() != expected {
            return Err(Error::Layout(format!(
                "height scan has {} cells, expected {expected}",
                scan.len()
            )));
        }
        out.extend_from_slice(scan);
    }
    if out.len() != layout.len() {
        return Err(Error::Layout(format!(
            "assembled {} values for a layout of {}",
            out.len(),
            layout.len()
        )));
    }
    Ok(out)
}

/// Uniformly samples a queued reference frame as the episode's initial
/// pose target.
pub fn episode_init<'q, T: Real, R: Rng>(
    queue: &'q MotionQueue<T>,
    rng: &mut R,
) -> Result<&'q ReferenceFrame<T>> {
    if queue.is_empty() {
        return Err(Error::EmptyQueue);
    }
    let index = rng.gen_range(0..queue.len());
    Ok(queue.get(index).expect("index in range"))
}

/// Episode continuation decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Continue,
    /// Base fell below the height floor.
    Collapsed,
    /// Pitch or roll beyond the tilt limit.
    TippedOver,
    /// Something other than a foot hit the world.
    BodyContact,
}

/// Collapse check against the termination thresholds.
pub fn check_termination<T: Real>(
    snapshot: &RobotSnapshot<T>,
    cfg: &TerminationConfig<T>,
) -> Termination {
    if snapshot.base_height() < cfg.min_base_height {
        Termination::Collapsed
    } else if snapshot.pitch.abs() > cfg.max_tilt || snapshot.roll.abs() > cfg.max_tilt {
        Termination::TippedOver
    } else if snapshot.non_foot_contact {
        Termination::BodyContact
    } else {
        Termination::Continue
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gait::{phase_sin_cos, GaitPattern};
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn feet() -> [Vector3<f64>; LEG_COUNT] {
        [
            Vector3::new(0.19, 0.13, 0.0),
            Vector3::new(0.19, -0.13, 0.0),
            Vector3::new(-0.19, 0.13, 0.0),
            Vector3::new(-0.19, -0.13, 0.0),
        ]
    }

    fn reference() -> ReferenceFrame<f64> {
        ReferenceFrame {
            time: 0.0,
            base_position: Vector3::new(0.0, 0.0, 0.32),
            base_velocity: Vector3::zeros(),
            yaw: 0.0,
            yaw_rate: 0.0,
            foot_positions: feet(),
            contacts: [true; LEG_COUNT],
            phases: [0.0; LEG_COUNT],
        }
    }

    fn snapshot() -> RobotSnapshot<f64> {
        RobotSnapshot::upright(0.32, feet())
    }

    #[test]
    fn reward_term_is_one_at_zero_error() {
        assert_eq!(reward_term_scalar(0.32, 0.32, 0.05).unwrap(), 1.0);
        let v = [0.1, -0.2, 0.3];
        assert_eq!(reward_term(&v, &v, &[0.3, 0.1, 0.3]).unwrap(), 1.0);
    }

    #[test]
    fn one_sensitivity_unit_gives_inverse_e() {
        let e_inv = (-1.0_f64).exp();
        let r = reward_term_scalar(0.32 + 0.05, 0.32, 0.05).unwrap();
        assert!((r - e_inv).abs() < 1e-15);
        // Component-wise scaling: different axes, same normalized error.
        let a = reward_term(&[0.3, 0.0, 0.0], &[0.0, 0.0, 0.0], &[0.3, 0.1, 0.3]).unwrap();
        let b = reward_term(&[0.0, 0.1, 0.0], &[0.0, 0.0, 0.0], &[0.3, 0.1, 0.3]).unwrap();
        assert!((a - e_inv).abs() < 1e-15);
        assert_eq!(a, b);
    }

    #[test]
    fn reward_term_rejects_bad_sensitivities() {
        assert!(reward_term_scalar(1.0, 1.0, 0.0).is_err());
        assert!(reward_term_scalar(1.0, 1.0, -0.5).is_err());
        assert!(reward_term(&[1.0, 2.0], &[1.0], &[0.5]).is_err());
        assert!(reward_term(&[1.0, 2.0], &[1.0, 2.0], &[0.5, 0.5, 0.5]).is_err());
    }

    #[test]
    fn feet_frame_examples() {
        let base = Vector3::new(0.0, 0.0, 0.32);
        let mut positions = feet();
        let local = feet_frame_transform(&base, 0.0, &positions);
        for (a, b) in local.iter().zip(&positions) {
            assert_eq!(a, b);
        }
        // Quarter yaw turn: a foot one meter ahead maps to (0, -1).
        positions[0] = Vector3::new(1.0, 0.0, 0.0);
        let local = feet_frame_transform(&base, std::f64::consts::FRAC_PI_2, &positions);
        assert!((local[0] - Vector3::new(0.0, -1.0, 0.0)).norm() < 1e-12);

        // Common translation of base and feet changes nothing.
        let shift = Vector3::new(2.0, -3.0, 0.0);
        let shifted = positions.map(|p| p + shift);
        let a = feet_frame_transform(&base, 0.7, &positions);
        let b = feet_frame_transform(&(base + shift), 0.7, &shifted);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn perfect_tracking_scores_one() {
        let cfg = RewardConfig::default();
        let r = imitation_reward(&snapshot(), &reference(), &cfg).unwrap();
        assert_eq!(r, 1.0);
        let action = [0.0; JOINT_COUNT];
        let breakdown = total_reward(&snapshot(), &reference(), &action, &action, &cfg).unwrap();
        assert_eq!(breakdown.total, 1.0);
    }

    #[test]
    fn single_degraded_factor_lowers_the_product() {
        let cfg = RewardConfig::default();
        let mut snap = snapshot();
        snap.base_position.z = 0.32 - 0.05;
        let r = imitation_reward(&snap, &reference(), &cfg).unwrap();
        let e_inv = (-1.0_f64).exp();
        assert!((r - e_inv).abs() < 1e-12);
        assert!(r < 1.0);
    }

    #[test]
    fn product_is_bounded_by_each_factor() {
        let cfg = RewardConfig::default();
        let mut snap = snapshot();
        snap.base_position.z = 0.30;
        snap.base_velocity.x = 0.2;
        snap.yaw_rate = 0.3;
        let action = [0.1; JOINT_COUNT];
        let prev = [0.0; JOINT_COUNT];
        let b = total_reward(&snap, &reference(), &action, &prev, &cfg).unwrap();
        for factor in [
            b.height,
            b.velocity,
            b.yaw_rate,
            b.feet_position,
            b.action_rate,
            b.feet_slip,
            b.pitch_roll,
        ] {
            assert!(factor > 0.0 && factor <= 1.0);
            assert!(b.total <= factor + 1e-15);
        }
    }

    #[test]
    fn slip_factor_is_one_without_contacts() {
        let cfg = RewardConfig::default();
        let mut snap = snapshot();
        snap.foot_contacts = [false; LEG_COUNT];
        for v in snap.foot_velocities.iter_mut() {
            *v = Vector3::new(5.0, -3.0, 1.0);
        }
        let action = [0.0; JOINT_COUNT];
        let r = regularizer(&snap, &action, &action, &cfg).unwrap();
        assert_eq!(r, 1.0);
    }

    #[test]
    fn pitch_error_of_one_unit() {
        let cfg = RewardConfig::default();
        let mut snap = snapshot();
        snap.pitch = 0.5;
        let action = [0.0; JOINT_COUNT];
        let r = regularizer(&snap, &action, &action, &cfg).unwrap();
        assert!((r - (-1.0_f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn wider_sensitivities_never_reduce_reward() {
        let cfg = RewardConfig::default();
        let mut wide = cfg;
        wide.base_height *= 2.0;
        wide.base_velocity = wide.base_velocity.map(|s| s * 2.0);
        wide.yaw_rate *= 2.0;
        wide.feet_position = wide.feet_position.map(|s| s * 2.0);
        let mut snap = snapshot();
        snap.base_position.z = 0.27;
        snap.base_velocity = Vector3::new(0.4, -0.1, 0.05);
        snap.yaw_rate = 0.4;
        snap.foot_positions[2].x += 0.08;
        let narrow = imitation_reward(&snap, &reference(), &cfg).unwrap();
        let wider = imitation_reward(&snap, &reference(), &wide).unwrap();
        assert!(wider >= narrow);
    }

    #[test]
    fn reward_is_invariant_under_translation_and_yaw() {
        let cfg = RewardConfig::default();
        let mut snap = snapshot();
        snap.base_position += Vector3::new(0.03, -0.02, -0.01);
        snap.base_velocity = Vector3::new(0.3, 0.1, -0.05);
        snap.yaw = 0.2;
        snap.yaw_rate = 0.15;
        snap.foot_positions[1].x += 0.05;
        let action = [0.2; JOINT_COUNT];
        let prev = [0.1; JOINT_COUNT];
        let reference = reference();
        let before = total_reward(&snap, &reference, &action, &prev, &cfg).unwrap();

        let delta_yaw = 1.1;
        let shift = Vector3::new(4.0, -2.5, 0.0);
        let mut snap2 = snap.clone();
        snap2.base_position = yaw_rotate(delta_yaw, &snap.base_position) + shift;
        snap2.base_velocity = yaw_rotate(delta_yaw, &snap.base_velocity);
        snap2.yaw += delta_yaw;
        snap2.foot_positions = snap
            .foot_positions
            .map(|p| yaw_rotate(delta_yaw, &p) + shift);
        snap2.foot_velocities = snap.foot_velocities.map(|v| yaw_rotate(delta_yaw, &v));
        let mut ref2 = reference.clone();
        ref2.base_position = yaw_rotate(delta_yaw, &reference.base_position) + shift;
        ref2.base_velocity = yaw_rotate(delta_yaw, &reference.base_velocity);
        ref2.yaw += delta_yaw;
        ref2.foot_positions = reference
            .foot_positions
            .map(|p| yaw_rotate(delta_yaw, &p) + shift);
        let after = total_reward(&snap2, &ref2, &action, &prev, &cfg).unwrap();
        assert!((before.total - after.total).abs() < 1e-9);
    }

    #[test]
    fn observation_lengths() {
        let snap = snapshot();
        let phases = phase_sin_cos(&GaitPattern::trot(), 0.0);
        let cmd = VelocityCommand::new(0.5, 0.0, 0.0);
        let blind = build_observation(&snap, &phases, &cmd, &ObservationLayout::blind()).unwrap();
        assert_eq!(blind.len(), 57);

        let mut snap = snap;
        snap.height_scan = Some(vec![0.0; 77]);
        let wide =
            build_observation(&snap, &phases, &cmd, &ObservationLayout::perceptive()).unwrap();
        assert_eq!(wide.len(), 134);
    }

    #[test]
    fn observation_blocks_slice_back_to_inputs() {
        let mut snap = snapshot();
        snap.base_velocity = Vector3::new(0.5, -0.2, 0.1);
        snap.joint_positions = core::array::from_fn(|i| i as f64 * 0.1);
        snap.previous_action = core::array::from_fn(|i| -(i as f64) * 0.01);
        let gait = GaitPattern::trot();
        let phases = phase_sin_cos(&gait, 0.0);
        let cmd = VelocityCommand::new(0.5, -0.1, 0.3);
        let layout = ObservationLayout::blind();
        let obs = build_observation(&snap, &phases, &cmd, &layout).unwrap();

        for (block, range) in layout.segments() {
            let slice = &obs[range];
            match block {
                ObservationBlock::BaseHeight => assert_eq!(slice, &[0.32]),
                ObservationBlock::LinearVelocity => {
                    assert_eq!(slice, snap.base_velocity.as_slice())
                }
                ObservationBlock::JointPositions => assert_eq!(slice, &snap.joint_positions),
                ObservationBlock::PhaseSinCos => {
                    // Stance onset: (sin, cos) = (0, 1) per leg at t=0 for
                    // the legs whose phase starts at zero.
                    assert_eq!(slice[0], 0.0);
                    assert_eq!(slice[1], 1.0);
                }
                ObservationBlock::VelocityCommand => assert_eq!(slice, &[0.5, -0.1, 0.3]),
                ObservationBlock::PreviousAction => assert_eq!(slice, &snap.previous_action),
                _ => {}
            }
        }
    }

    #[test]
    fn perceptive_layout_requires_scan() {
        let snap = snapshot();
        let phases = phase_sin_cos(&GaitPattern::trot(), 0.0);
        let cmd = VelocityCommand::zero();
        let err = build_observation(&snap, &phases, &cmd, &ObservationLayout::perceptive());
        assert!(matches!(err, Err(Error::Layout(_))));
    }

    #[test]
    fn episode_init_samples_uniformly() {
        let cfg = crate::synthesis::SynthesisConfig::<f64>::default();
        let state = crate::synthesis::GeneratorState::standing(0.32, &cfg.hip_offsets);
        let motion = crate::synthesis::generate_reference(
            &state,
            &VelocityCommand::zero(),
            &GaitPattern::trot(),
            1.0,
            &cfg,
        )
        .unwrap();
        let mut queue = MotionQueue::new(4);
        queue.push_frames(motion.frames).unwrap();
        let n = queue.len();

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut counts = vec![0usize; n];
        let draws = 10_000;
        for _ in 0..draws {
            let frame = episode_init(&queue, &mut rng).unwrap();
            let idx = ((frame.time - 0.0) / 0.02).round() as usize;
            counts[idx] += 1;
        }
        let expected = draws as f64 / n as f64;
        let sigma = (expected * (1.0 - 1.0 / n as f64)).sqrt();
        for (i, &c) in counts.iter().enumerate() {
            assert!(
                (c as f64 - expected).abs() < 3.0 * sigma + 1.0,
                "frame {i} drawn {c} times (expected {expected:.1} +- {sigma:.1})"
            );
        }

        // Determinism under a fixed seed.
        let mut a = ChaCha8Rng::seed_from_u64(11);
        let mut b = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            assert_eq!(
                episode_init(&queue, &mut a).unwrap().time,
                episode_init(&queue, &mut b).unwrap().time
            );
        }
    }

    #[test]
    fn single_frame_queue_is_deterministic() {
        let mut queue = MotionQueue::new(1);
        queue
            .push_frames([reference()])
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10 {
            assert_eq!(episode_init(&queue, &mut rng).unwrap(), &reference());
        }
    }

    #[test]
    fn termination_thresholds() {
        let cfg = TerminationConfig::default();
        assert_eq!(check_termination(&snapshot(), &cfg), Termination::Continue);
        let mut snap = snapshot();
        snap.base_position.z = 0.10;
        assert_eq!(check_termination(&snap, &cfg), Termination::Collapsed);
        let mut snap = snapshot();
        snap.roll = 1.2;
        assert_eq!(check_termination(&snap, &cfg), Termination::TippedOver);
        let mut snap = snapshot();
        snap.non_foot_contact = true;
        assert_eq!(check_termination(&snap, &cfg), Termination::BodyContact);
    }
}
