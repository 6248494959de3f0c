//! Gait patterns, contact timelines, and contact-phase variables.
//!
//! A gait is a periodic schedule: each leg is in stance while its normalized
//! phase is below the duty cycle and in swing otherwise. Legs are indexed
//! FL = 0, FR = 1, HL = 2, HR = 3 everywhere in this crate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{real, Real};

/// Number of legs.
pub const LEG_COUNT: usize = 4;

/// Leg names in index order: front-left, front-right, hind-left, hind-right.
pub const LEG_NAMES: [&str; LEG_COUNT] = ["FL", "FR", "HL", "HR"];

/// A named periodic gait: period, duty cycle, and per-leg phase offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitPattern<T> {
    pub name: String,
    /// Gait period in seconds.
    pub period: T,
    /// Fraction of the period each leg spends in stance, in (0, 1].
    pub duty_cycle: T,
    /// Phase offsets of FR, HL, HR relative to FL; FL is 0 by convention.
    pub phase_offsets: [T; 3],
}

impl<T: Real> GaitPattern<T> {
    pub fn new(name: &str, period: T, duty_cycle: T, phase_offsets: [T; 3]) -> Result<Self> {
        let gait = Self {
            name: name.to_string(),
            period,
            duty_cycle,
            phase_offsets,
        };
        gait.validate()?;
        Ok(gait)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.period > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "gait '{}': period must be > 0",
                self.name
            )));
        }
        if !(self.duty_cycle > T::zero() && self.duty_cycle <= T::one()) {
            return Err(Error::InvalidParameter(format!(
                "gait '{}': duty_cycle must lie in (0, 1]",
                self.name
            )));
        }
        for (i, offset) in self.phase_offsets.iter().enumerate() {
            if !(*offset >= T::zero() && *offset < T::one()) {
                return Err(Error::InvalidParameter(format!(
                    "gait '{}': phase_offsets[{i}] must lie in [0, 1)",
                    self.name
                )));
            }
        }
        Ok(())
    }

    /// Phase offset of a leg; FL is 0 by convention.
    pub fn offset(&self, leg: usize) -> T {
        if leg == 0 {
            T::zero()
        } else {
            self.phase_offsets[leg - 1]
        }
    }

    /// Normalized gait phase of a leg at time `t`, in `[0, 1)`.
    pub fn leg_phase(&self, leg: usize, t: T) -> T {
        let x = t / self.period - self.offset(leg);
        x - x.floor()
    }

    /// A leg is in stance while its phase is strictly below the duty cycle.
    ///
    /// The tie at `phase == duty_cycle` counts as swing, so stance lasts
    /// exactly `duty_cycle * period` on a continuous clock.
    pub fn in_stance(&self, leg: usize, t: T) -> bool {
        self.leg_phase(leg, t) < self.duty_cycle
    }

    /// Duration of one stance interval in seconds.
    pub fn stance_duration(&self) -> T {
        self.duty_cycle * self.period
    }

    /// Duration of one swing interval in seconds (zero for full-stance gaits).
    pub fn swing_duration(&self) -> T {
        (T::one() - self.duty_cycle) * self.period
    }

    /// Time of the next touchdown of `leg` strictly after `t`, or at `t`
    /// itself when the leg touches down exactly then. Full-stance gaits
    /// never touch down.
    pub fn next_touchdown(&self, leg: usize, t: T) -> Option<T> {
        if self.duty_cycle >= T::one() {
            return None;
        }
        let cycles = (t / self.period - self.offset(leg)).ceil();
        Some((cycles + self.offset(leg)) * self.period)
    }

    pub fn trot() -> Self {
        Self::new(
            "trot",
            real(0.5),
            real(0.5),
            [real(0.5), real(0.5), real(0.0)],
        )
        .unwrap()
    }

    pub fn pace() -> Self {
        Self::new(
            "pace",
            real(0.5),
            real(0.6),
            [real(0.5), real(0.0), real(0.5)],
        )
        .unwrap()
    }

    pub fn pronk() -> Self {
        Self::new(
            "pronk",
            real(0.4),
            real(0.6),
            [real(0.0), real(0.0), real(0.0)],
        )
        .unwrap()
    }

    pub fn bound() -> Self {
        Self::new(
            "bound",
            real(0.4),
            real(0.6),
            [real(0.0), real(0.5), real(0.5)],
        )
        .unwrap()
    }

    pub fn gallop() -> Self {
        Self::new(
            "gallop",
            real(0.5),
            real(0.45),
            [real(0.75), real(0.5), real(0.25)],
        )
        .unwrap()
    }

    /// The five built-in gaits.
    pub fn builtins() -> Vec<Self> {
        vec![
            Self::trot(),
            Self::pace(),
            Self::pronk(),
            Self::bound(),
            Self::gallop(),
        ]
    }
}

/// Discretized per-leg stance/swing schedule over a horizon.
///
/// `contacts[leg][k]` and `phases[leg][k]` describe leg `leg` at time
/// `start_time + k * dt`. The flags and phases are the source of truth for
/// downstream consumers; `gait` records the generating pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactTimeline<T> {
    pub gait: GaitPattern<T>,
    pub start_time: T,
    pub dt: T,
    pub contacts: [Vec<bool>; LEG_COUNT],
    pub phases: [Vec<T>; LEG_COUNT],
}

impl<T: Real> ContactTimeline<T> {
    /// Number of steps in the horizon.
    pub fn len(&self) -> usize {
        self.contacts[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Time of step `k`.
    pub fn time_at(&self, k: usize) -> T {
        self.start_time + T::from_usize(k).unwrap() * self.dt
    }

    /// Legs in stance at step `k`, in FL, FR, HL, HR order.
    pub fn stance_legs(&self, k: usize) -> Vec<usize> {
        (0..LEG_COUNT)
            .filter(|&leg| self.contacts[leg][k])
            .collect()
    }
}

/// Generates the per-leg contact timeline of `gait` over `horizon_steps`
/// steps of length `dt` starting at `start_time`.
pub fn make_timeline<T: Real>(
    gait: &GaitPattern<T>,
    start_time: T,
    horizon_steps: usize,
    dt: T,
) -> Result<ContactTimeline<T>> {
    gait.validate()?;
    if !(dt > T::zero()) {
        return Err(Error::InvalidParameter("timeline dt must be > 0".into()));
    }
    if horizon_steps == 0 {
        return Err(Error::InvalidParameter(
            "timeline horizon_steps must be >= 1".into(),
        ));
    }

    let mut contacts: [Vec<bool>; LEG_COUNT] = Default::default();
    let mut phases: [Vec<T>; LEG_COUNT] = Default::default();
    for leg in 0..LEG_COUNT {
        contacts[leg].reserve(horizon_steps);
        phases[leg].reserve(horizon_steps);
        for k in 0..horizon_steps {
            let t = start_time + T::from_usize(k).unwrap() * dt;
            let phase = gait.leg_phase(leg, t);
            phases[leg].push(phase);
            contacts[leg].push(phase < gait.duty_cycle);
        }
    }

    Ok(ContactTimeline {
        gait: gait.clone(),
        start_time,
        dt,
        contacts,
        phases,
    })
}

/// Per-leg contact-phase variables at time `t`, as angles in `[-pi, pi)`.
///
/// Stance progress maps linearly onto `[0, pi)` and swing progress onto
/// `[-pi, 0)`, so a touchdown sits at angle 0 and a liftoff at -pi.
pub fn phase_variables<T: Real>(gait: &GaitPattern<T>, t: T) -> [T; LEG_COUNT] {
    let mut angles = [T::zero(); LEG_COUNT];
    for (leg, angle) in angles.iter_mut().enumerate() {
        let phase = gait.leg_phase(leg, t);
        *angle = if phase < gait.duty_cycle {
            phase / gait.duty_cycle * T::pi()
        } else {
            let swing_progress = (phase - gait.duty_cycle) / (T::one() - gait.duty_cycle);
            (swing_progress - T::one()) * T::pi()
        };
    }
    angles
}

/// `(sin, cos)` pairs of the contact-phase variables, for observations.
pub fn phase_sin_cos<T: Real>(gait: &GaitPattern<T>, t: T) -> [[T; 2]; LEG_COUNT] {
    let angles = phase_variables(gait, t);
    angles.map(|a| [a.sin(), a.cos()])
}

/// One touchdown within a timeline horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Footfall<T> {
    pub leg: usize,
    /// Step index of the first stance sample of the new stance interval.
    pub step: usize,
    /// Time of that sample.
    pub time: T,
}

/// Swing-to-stance transitions within the horizon, sorted by touchdown time
/// with simultaneous touchdowns ordered FL, FR, HL, HR.
///
/// A leg that starts the horizon exactly at its touchdown instant (stance
/// flag set with phase exactly zero) counts as a footfall at step 0; a leg
/// that is already mid-stance does not.
pub fn footfall_sequence<T: Real>(timeline: &ContactTimeline<T>) -> Vec<Footfall<T>> {
    let mut falls = Vec::new();
    let has_swing = timeline.gait.duty_cycle < T::one();
    for leg in 0..LEG_COUNT {
        let flags = &timeline.contacts[leg];
        if has_swing && flags[0] && timeline.phases[leg][0] == T::zero() {
            falls.push(Footfall {
                leg,
                step: 0,
                time: timeline.start_time,
            });
        }
        for k in 1..flags.len() {
            if flags[k] && !flags[k - 1] {
                falls.push(Footfall {
                    leg,
                    step: k,
                    time: timeline.time_at(k),
                });
            }
        }
    }
    // Same-step touchdowns share an identical time value, so the leg index
    // is a deterministic tie-break.
    falls.sort_by(|a, b| a.step.cmp(&b.step).then(a.leg.cmp(&b.leg)));
    falls
}

/// One interval of a Hildebrand-style gait diagram, in normalized phase
/// units (fractions of the period over the global window `[0, 1)`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagramInterval<T> {
    pub leg: usize,
    pub start: T,
    pub end: T,
    pub contact: bool,
}

/// Exports one period of the gait as stance/swing intervals per leg.
///
/// Interval bounds are exact functions of the gait parameters, not sampled
/// flags, so duty cycle and offsets are recoverable at machine precision.
pub fn gait_diagram<T: Real>(gait: &GaitPattern<T>) -> Vec<DiagramInterval<T>> {
    let mut rows = Vec::new();
    for leg in 0..LEG_COUNT {
        let onset = gait.offset(leg);
        let duty = gait.duty_cycle;
        if duty >= T::one() {
            rows.push(DiagramInterval {
                leg,
                start: T::zero(),
                end: T::one(),
                contact: true,
            });
            continue;
        }
        let head = T::one() - onset;
        if duty <= head {
            // Stance fits before the wrap point.
            let stance_end = onset + duty;
            if onset > T::zero() {
                rows.push(DiagramInterval {
                    leg,
                    start: T::zero(),
                    end: onset,
                    contact: false,
                });
            }
            rows.push(DiagramInterval {
                leg,
                start: onset,
                end: stance_end,
                contact: true,
            });
            if stance_end < T::one() {
                rows.push(DiagramInterval {
                    leg,
                    start: stance_end,
                    end: T::one(),
                    contact: false,
                });
            }
        } else {
            // Stance wraps across the period boundary.
            let tail = duty - head;
            rows.push(DiagramInterval {
                leg,
                start: T::zero(),
                end: tail,
                contact: true,
            });
            rows.push(DiagramInterval {
                leg,
                start: tail,
                end: onset,
                contact: false,
            });
            rows.push(DiagramInterval {
                leg,
                start: onset,
                end: T::one(),
                contact: true,
            });
        }
    }
    rows
}

/// Gait parameters re-derived from a diagram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedGait<T> {
    pub duty_cycle: T,
    /// Stance onsets per leg; subtract the FL entry to express Table-style
    /// relative offsets (FL is 0 for diagrams produced by [`gait_diagram`]).
    pub offsets: [T; LEG_COUNT],
}

/// Recovers duty cycle and per-leg phase offsets from diagram intervals.
pub fn rederive_gait<T: Real>(rows: &[DiagramInterval<T>]) -> Result<DerivedGait<T>> {
    let mut offsets = [T::zero(); LEG_COUNT];
    let mut duty = None;
    for leg in 0..LEG_COUNT {
        let mut stance: Vec<&DiagramInterval<T>> =
            rows.iter().filter(|r| r.leg == leg && r.contact).collect();
        if stance.is_empty() {
            return Err(Error::InvalidInput(format!(
                "diagram has no stance interval for leg {leg}"
            )));
        }
        stance.sort_by(|a, b| a.start.partial_cmp(&b.start).unwrap());
        let (onset, leg_duty) = if stance.len() == 1 {
            let piece = stance[0];
            (piece.start, piece.end - piece.start)
        } else if stance.len() == 2 && stance[0].start == T::zero() && stance[1].end == T::one() {
            // Stance wraps: the later piece starts it.
            let wrap = stance[1];
            let tail = stance[0];
            (wrap.start, (T::one() - wrap.start) + tail.end)
        } else {
            return Err(Error::InvalidInput(format!(
                "diagram stance intervals for leg {leg} are not a single (possibly wrapped) run"
            )));
        };
        offsets[leg] = onset;
        match duty {
            None => duty = Some(leg_duty),
            Some(d) => {
                if (d - leg_duty).abs() > real(1e-9) {
                    return Err(Error::InvalidInput(
                        "diagram legs disagree on duty cycle".into(),
                    ));
                }
            }
        }
    }
    Ok(DerivedGait {
        duty_cycle: duty.unwrap(),
        offsets,
    })
}
