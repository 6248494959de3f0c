//! The `reward` subcommand: scores a logged trajectory against a
//! reference trajectory, frame by frame.

use std::path::Path;

use anyhow::{bail, Context, Result};

use strider_core::export::{self, format_float};
use strider_core::imitation::{total_reward, RewardBreakdown, RobotSnapshot, JOINT_COUNT};
use strider_core::synthesis::ReferenceFrame;

use crate::{load, output_dir, write_file, CommonArgs};

/// Converts a logged frame into the snapshot the reward layer consumes.
/// Foot velocities come from finite differences between frames; joint and
/// action channels are absent from the frame schema and score as perfect.
fn snapshot_from(
    frame: &ReferenceFrame<f64>,
    previous: Option<&ReferenceFrame<f64>>,
) -> RobotSnapshot<f64> {
    let mut snapshot = RobotSnapshot::upright(frame.base_position.z, frame.foot_positions);
    snapshot.base_position = frame.base_position;
    snapshot.base_velocity = frame.base_velocity;
    snapshot.yaw = frame.yaw;
    snapshot.yaw_rate = frame.yaw_rate;
    snapshot.foot_contacts = frame.contacts;
    if let Some(prev) = previous {
        let dt = frame.time - prev.time;
        if dt > 0.0 {
            for leg in 0..4 {
                // A touchdown frame's backward difference spans the last
                // swing step; only stance-to-stance windows measure slip.
                if frame.contacts[leg] && prev.contacts[leg] {
                    snapshot.foot_velocities[leg] =
                        (frame.foot_positions[leg] - prev.foot_positions[leg]) / dt;
                }
            }
        }
    }
    snapshot
}

const BREAKDOWN_HEADER: &str = "time,r_height,r_velocity,r_yaw_rate,r_feet,\
r_action_rate,r_slip,r_pitch_roll,r_imitation,r_regularizer,r_total";

pub fn run(common: &CommonArgs, actual: &Path, reference: &Path) -> Result<()> {
    let config = load(common)?;
    let dir = output_dir(common, &config)?;
    let reward_cfg = config.reward_config();

    let actual_frames = export::parse_frames_csv(
        &std::fs::read_to_string(actual)
            .with_context(|| format!("reading {}", actual.display()))?,
    )?;
    let reference_frames = export::parse_frames_csv(
        &std::fs::read_to_string(reference)
            .with_context(|| format!("reading {}", reference.display()))?,
    )?;
    if actual_frames.len() != reference_frames.len() {
        bail!(
            "trajectories differ in length: {} vs {} frames",
            actual_frames.len(),
            reference_frames.len()
        );
    }
    if actual_frames.is_empty() {
        bail!("empty trajectories");
    }

    let action = [0.0; JOINT_COUNT];
    let mut rows = String::from(BREAKDOWN_HEADER);
    rows.push('\n');
    let mut sums = [0.0; 10];
    for (i, (frame, reference)) in actual_frames.iter().zip(&reference_frames).enumerate() {
        if (frame.time - reference.time).abs() > 1e-9 {
            bail!(
                "frame {i}: time mismatch ({} vs {})",
                frame.time,
                reference.time
            );
        }
        let previous = (i > 0).then(|| &actual_frames[i - 1]);
        let snapshot = snapshot_from(frame, previous);
        let breakdown = total_reward(&snapshot, reference, &action, &action, &reward_cfg)?;
        let values = [
            breakdown.height,
            breakdown.velocity,
            breakdown.yaw_rate,
            breakdown.feet_position,
            breakdown.action_rate,
            breakdown.feet_slip,
            breakdown.pitch_roll,
            breakdown.imitation,
            breakdown.regularizer,
            breakdown.total,
        ];
        for (sum, v) in sums.iter_mut().zip(values) {
            *sum += v;
        }
        let mut fields = vec![format_float(frame.time)];
        fields.extend(values.iter().map(|v| format_float(*v)));
        rows.push_str(&fields.join(","));
        rows.push('\n');
    }

    let n = actual_frames.len() as f64;
    let mean = RewardBreakdown {
        height: sums[0] / n,
        velocity: sums[1] / n,
        yaw_rate: sums[2] / n,
        feet_position: sums[3] / n,
        action_rate: sums[4] / n,
        feet_slip: sums[5] / n,
        pitch_roll: sums[6] / n,
        imitation: sums[7] / n,
        regularizer: sums[8] / n,
        total: sums[9] / n,
    };

    write_file(&dir.join("reward_breakdown.csv"), &rows)?;
    write_file(
        &dir.join("reward_summary.json"),
        &export::to_json_string(&mean)?,
    )?;
    eprintln!("mean total reward: {:.6}", mean.total);
    Ok(())
}
