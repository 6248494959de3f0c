//! Trajectory and report serialization.
//!
//! CSV output prints floats with 17 significant digits so every value
//! round-trips to the exact same bits; JSON uses the standard shortest
//! round-trip form. Identical inputs always produce byte-identical files.

use std::io::Write;

use nalgebra::Vector3;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gait::{DiagramInterval, LEG_COUNT, LEG_NAMES};
use crate::harness::RunLog;
use crate::synthesis::ReferenceFrame;

/// 17 significant digits: lossless for `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_float(field: &str, context: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("{context}: bad float '{field}'")))
}

fn parse_flag(field: &str, context: &str) -> Result<bool> {
    match field.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::Parse(format!("{context}: bad flag '{other}'"))),
    }
}

/// Header of the reference-frame CSV schema.
pub const FRAME_CSV_HEADER: &str = "time,base_x,base_y,base_z,vel_x,vel_y,vel_z,yaw,yaw_rate,\
fl_foot_x,fl_foot_y,fl_foot_z,fr_foot_x,fr_foot_y,fr_foot_z,\
hl_foot_x,hl_foot_y,hl_foot_z,hr_foot_x,hr_foot_y,hr_foot_z,\
fl_contact,fr_contact,hl_contact,hr_contact,\
fl_phase,fr_phase,hl_phase,hr_phase";

/// Writes reference frames as CSV (header plus one row per frame).
pub fn write_frames_csv<W: Write>(frames: &[ReferenceFrame<f64>], out: &mut W) -> Result<()> {
    writeln!(out, "{FRAME_CSV_HEADER}")?;
    for frame in frames {
        let mut fields = Vec::with_capacity(29);
        fields.push(format_float(frame.time));
        for v in [&frame.base_position, &frame.base_velocity] {
            fields.push(format_float(v.x));
            fields.push(format_float(v.y));
            fields.push(format_float(v.z));
        }
        fields.push(format_float(frame.yaw));
        fields.push(format_float(frame.yaw_rate));
        for foot in &frame.foot_positions {
            fields.push(format_float(foot.x));
            fields.push(format_float(foot.y));
            fields.push(format_float(foot.z));
        }
        for &contact in &frame.contacts {
            fields.push(if contact { "1".into() } else { "0".into() });
        }
        for &phase in &frame.phases {
            fields.push(format_float(phase));
        }
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

pub fn frames_to_csv_string(frames: &[ReferenceFrame<f64>]) -> String {
    let mut buffer = Vec::new();
    write_frames_csv(frames, &mut buffer).expect("writing to memory cannot fail");
    String::from_utf8(buffer).expect("CSV output is ASCII")
}

/// Parses the reference-frame CSV schema back into frames.
pub fn parse_frames_csv(text: &str) -> Result<Vec<ReferenceFrame<f64>>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty frames CSV".into()))?;
    if header.trim() != FRAME_CSV_HEADER {
        return Err(Error::Parse("unrecognized frames CSV header".into()));
    }
    let mut frames = Vec::new();
    for (line_no, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let context = format!("frames CSV line {}", line_no + 2);
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 29 {
            return Err(Error::Parse(format!(
                "{context}: {} fields, expected 29",
                fields.len()
            )));
        }
        let f = |i: usize| parse_float(fields[i], &context);
        let mut foot_positions = [Vector3::zeros(); LEG_COUNT];
        for leg in 0..LEG_COUNT {
            foot_positions[leg] = Vector3::new(f(9 + 3 * leg)?, f(10 + 3 * leg)?, f(11 + 3 * leg)?);
        }
        let mut contacts = [false; LEG_COUNT];
        for leg in 0..LEG_COUNT {
            contacts[leg] = parse_flag(fields[21 + leg], &context)?;
        }
        let mut phases = [0.0; LEG_COUNT];
        for leg in 0..LEG_COUNT {
            phases[leg] = f(25 + leg)?;
        }
        frames.push(ReferenceFrame {
            time: f(0)?,
            base_position: Vector3::new(f(1)?, f(2)?, f(3)?),
            base_velocity: Vector3::new(f(4)?, f(5)?, f(6)?),
            yaw: f(7)?,
            yaw_rate: f(8)?,
            foot_positions,
            contacts,
            phases,
        });
    }
    Ok(frames)
}

/// Serializes frames as JSON.
pub fn frames_to_json_string(frames: &[ReferenceFrame<f64>]) -> Result<String> {
    serde_json::to_string_pretty(frames).map_err(|e| Error::Parse(e.to_string()))
}

pub fn parse_frames_json(text: &str) -> Result<Vec<ReferenceFrame<f64>>> {
    serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

/// Gait-diagram CSV: normalized phase intervals per leg over one period.
pub const DIAGRAM_CSV_HEADER: &str = "leg,interval_start,interval_end,contact_flag";

pub fn diagram_to_csv_string(rows: &[DiagramInterval<f64>]) -> String {
    let mut out = String::from(DIAGRAM_CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            LEG_NAMES[row.leg],
            format_float(row.start),
            format_float(row.end),
            u8::from(row.contact)
        ));
    }
    out
}

pub fn parse_diagram_csv(text: &str) -> Result<Vec<DiagramInterval<f64>>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty diagram CSV".into()))?;
    if header.trim() != DIAGRAM_CSV_HEADER {
        return Err(Error::Parse("unrecognized diagram CSV header".into()));
    }
    let mut rows = Vec::new();
    for (line_no, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let context = format!("diagram CSV line {}", line_no + 2);
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Parse(format!("{context}: expected 4 fields")));
        }
        let leg = LEG_NAMES
            .iter()
            .position(|&n| n == fields[0].trim())
            .ok_or_else(|| Error::Parse(format!("{context}: unknown leg '{}'", fields[0])))?;
        rows.push(DiagramInterval {
            leg,
            start: parse_float(fields[1], &context)?,
            end: parse_float(fields[2], &context)?,
            contact: parse_flag(fields[3], &context)?,
        });
    }
    Ok(rows)
}

/// Run-log CSV: one row per control step with state, input, reference,
/// disturbances, the reward breakdown, and the solve summary.
pub const RUN_LOG_CSV_HEADER: &str = "time,com_x,com_y,com_z,vel_x,vel_y,vel_z,\
applied_accel,w_fl,w_fr,w_hl,w_hr,contact_fl,contact_fr,contact_hl,contact_hr,\
fl_foot_x,fl_foot_y,fl_foot_z,fr_foot_x,fr_foot_y,fr_foot_z,\
hl_foot_x,hl_foot_y,hl_foot_z,hr_foot_x,hr_foot_y,hr_foot_z,\
dist_vx,dist_vy,dist_vz,dist_wx,dist_wy,dist_wz,\
ref_x,ref_y,ref_z,ref_vx,ref_vy,ref_vz,\
r_height,r_velocity,r_yaw_rate,r_feet,r_action_rate,r_slip,r_pitch_roll,\
r_imitation,r_regularizer,r_total,solve_iterations,solve_cost,solve_converged";

pub fn run_log_to_csv_string(log: &RunLog<f64>) -> String {
    let mut out = String::from(RUN_LOG_CSV_HEADER);
    out.push('\n');
    for step in &log.steps {
        let mut fields = Vec::with_capacity(53);
        fields.push(format_float(step.time));
        for v in [&step.state.position, &step.state.velocity] {
            fields.push(format_float(v.x));
            fields.push(format_float(v.y));
            fields.push(format_float(v.z));
        }
        fields.push(format_float(step.applied_accel));
        for w in &step.applied_weights {
            fields.push(format_float(*w));
        }
        for &c in &step.contacts {
            fields.push(if c { "1".into() } else { "0".into() });
        }
        for foot in &step.foot_positions {
            fields.push(format_float(foot.x));
            fields.push(format_float(foot.y));
            fields.push(format_float(foot.z));
        }
        let zero = Vector3::zeros();
        let dv = step.disturbance.as_ref().unwrap_or(&zero);
        let dw = step.angular_disturbance.as_ref().unwrap_or(&zero);
        for v in [dv, dw] {
            fields.push(format_float(v.x));
            fields.push(format_float(v.y));
            fields.push(format_float(v.z));
        }
        for v in [&step.reference.base_position, &step.reference.base_velocity] {
            fields.push(format_float(v.x));
            fields.push(format_float(v.y));
            fields.push(format_float(v.z));
        }
        for r in [
            step.reward.height,
            step.reward.velocity,
            step.reward.yaw_rate,
            step.reward.feet_position,
            step.reward.action_rate,
            step.reward.feet_slip,
            step.reward.pitch_roll,
            step.reward.imitation,
            step.reward.regularizer,
            step.reward.total,
        ] {
            fields.push(format_float(r));
        }
        fields.push(step.solve.iterations.to_string());
        fields.push(format_float(step.solve.cost));
        fields.push(if step.solve.converged {
            "1".into()
        } else {
            "0".into()
        });
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Pretty JSON for any serializable report (solve reports, metrics).
pub fn to_json_string<S: Serialize>(value: &S) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))
}
