//! Variable-height inverted pendulum dynamics.
//!
//! The model is a point mass whose acceleration depends on the offset
//! between the center of mass and the center of pressure, plus a commanded
//! vertical acceleration. With no stance feet the mass is ballistic.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{real, Real};

/// Stance dynamics are rejected below this CoM height (meters); reference
/// generation should never push the base toward the ground, and failing
/// loudly exposes bad schedules.
pub const MIN_SUPPORT_HEIGHT: f64 = 0.05;

/// Tolerance on the CoP weight sum for validated inputs.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Point-mass state: CoM position and velocity, z up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendulumState<T: Real> {
    pub position: Vector3<T>,
    pub velocity: Vector3<T>,
}

impl<T: Real> PendulumState<T> {
    pub fn new(position: Vector3<T>, velocity: Vector3<T>) -> Self {
        Self { position, velocity }
    }

    /// At rest at the given position.
    pub fn at_rest(position: Vector3<T>) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
        }
    }
}

/// The set of stance-foot positions at an instant. Empty means flight.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SupportSet<T: Real> {
    pub footholds: Vec<Vector3<T>>,
}

impl<T: Real> SupportSet<T> {
    pub fn new(footholds: Vec<Vector3<T>>) -> Self {
        Self { footholds }
    }

    pub fn flight() -> Self {
        Self {
            footholds: Vec::new(),
        }
    }

    pub fn is_flight(&self) -> bool {
        self.footholds.is_empty()
    }

    pub fn len(&self) -> usize {
        self.footholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.footholds.is_empty()
    }
}

/// Control input: vertical CoM acceleration plus one CoP weight per stance
/// foot. Validated entry points require the weights to be non-negative and
/// sum to one; the optimizer's intermediate iterates may violate both, and
/// the raw dynamics use them as given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlInput<T: Real> {
    pub vertical_accel: T,
    pub cop_weights: Vec<T>,
}

impl<T: Real> ControlInput<T> {
    pub fn new(vertical_accel: T, cop_weights: Vec<T>) -> Self {
        Self {
            vertical_accel,
            cop_weights,
        }
    }

    /// Uniform weights over `n` stance feet.
    pub fn uniform(vertical_accel: T, n: usize) -> Self {
        let w = if n == 0 {
            Vec::new()
        } else {
            vec![T::one() / T::from_usize(n).unwrap(); n]
        };
        Self {
            vertical_accel,
            cop_weights: w,
        }
    }
}

/// Gravity as a world-frame vector; defaults to (0, 0, -9.81).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GravityVector<T: Real> {
    pub g: Vector3<T>,
}

impl<T: Real> Default for GravityVector<T> {
    fn default() -> Self {
        Self {
            g: Vector3::new(T::zero(), T::zero(), real(-9.81)),
        }
    }
}

impl<T: Real> GravityVector<T> {
    pub fn new(g: Vector3<T>) -> Self {
        Self { g }
    }

    pub fn magnitude(&self) -> T {
        self.g.norm()
    }
}

/// Center of pressure as the convex combination of the stance footholds.
///
/// Errors on an empty support set (the caller must branch to ballistic
/// dynamics), on negative weights, and on a weight sum off one by more
/// than [`WEIGHT_SUM_TOL`].
pub fn compute_cop<T: Real>(support: &SupportSet<T>, weights: &[T]) -> Result<Vector3<T>> {
    if support.is_flight() {
        return Err(Error::FlightPhase);
    }
    if weights.len() != support.len() {
        return Err(Error::InvalidInput(format!(
            "{} weights for {} footholds",
            weights.len(),
            support.len()
        )));
    }
    let mut sum = T::zero();
    for &w in weights {
        if w < T::zero() {
            return Err(Error::InvalidInput(format!(
                "negative CoP weight {}",
                w.to_f64().unwrap_or(f64::NAN)
            )));
        }
        sum += w;
    }
    if (sum - T::one()).abs() > real(WEIGHT_SUM_TOL) {
        return Err(Error::InvalidInput(format!(
            "CoP weights sum to {}, expected 1",
            sum.to_f64().unwrap_or(f64::NAN)
        )));
    }
    Ok(weighted_point(support, weights))
}

/// Weighted combination of the footholds with no validation; used by the
/// optimizer where intermediate weights may be infeasible.
pub fn weighted_point<T: Real>(support: &SupportSet<T>, weights: &[T]) -> Vector3<T> {
    let mut cop = Vector3::zeros();
    for (foothold, &w) in support.footholds.iter().zip(weights) {
        cop += foothold * w;
    }
    cop
}

/// The pendulum acceleration formula given a precomputed CoP. No guards;
/// `com.z` must be validated by the caller for stance dynamics.
#[inline]
pub fn accel_from_cop<T: Real>(
    com: &Vector3<T>,
    vertical_accel: T,
    cop: &Vector3<T>,
    gravity: &GravityVector<T>,
) -> Vector3<T> {
    (com - cop) * ((vertical_accel + gravity.magnitude()) / com.z) + gravity.g
}

fn check_support_height<T: Real>(height: T) -> Result<()> {
    if height < real(MIN_SUPPORT_HEIGHT) {
        return Err(Error::Singularity {
            height: height.to_f64().unwrap_or(f64::NAN),
            minimum: MIN_SUPPORT_HEIGHT,
        });
    }
    Ok(())
}

/// Continuous CoM acceleration.
///
/// With a non-empty support set this evaluates the pendulum equation; with
/// an empty one the mass is ballistic and the vertical-acceleration input
/// is ignored. Weights are used as given (see [`ControlInput`]).
pub fn continuous_accel<T: Real>(
    state: &PendulumState<T>,
    input: &ControlInput<T>,
    support: &SupportSet<T>,
    gravity: &GravityVector<T>,
) -> Result<Vector3<T>> {
    if support.is_flight() {
        return Ok(gravity.g);
    }
    if input.cop_weights.len() != support.len() {
        return Err(Error::InvalidInput(format!(
            "{} weights for {} footholds",
            input.cop_weights.len(),
            support.len()
        )));
    }
    check_support_height(state.position.z)?;
    let cop = weighted_point(support, &input.cop_weights);
    Ok(accel_from_cop(
        &state.position,
        input.vertical_accel,
        &cop,
        gravity,
    ))
}

/// One step of the position-form recurrence:
/// `r_next = 2 r_curr - r_prev + accel * dt^2`.
pub fn discrete_step<T: Real>(
    r_prev: &Vector3<T>,
    r_curr: &Vector3<T>,
    input: &ControlInput<T>,
    support: &SupportSet<T>,
    gravity: &GravityVector<T>,
    dt: T,
) -> Result<Vector3<T>> {
    if !(dt > T::zero()) {
        return Err(Error::InvalidParameter(
            "discrete_step dt must be > 0".into(),
        ));
    }
    let state = PendulumState::at_rest(*r_curr);
    let accel = continuous_accel(&state, input, support, gravity)?;
    Ok(r_curr * real::<T>(2.0) - r_prev + accel * (dt * dt))
}

/// One semi-implicit Euler step in velocity form:
/// `v_next = v + accel * dt`, `r_next = r + v_next * dt`.
///
/// Algebraically identical to [`discrete_step`] with
/// `r_prev = r - v * dt`; the open-loop plant and the trajectory rollout
/// both use this exact code path so their outputs match bitwise.
pub fn semi_implicit_step<T: Real>(
    state: &PendulumState<T>,
    input: &ControlInput<T>,
    support: &SupportSet<T>,
    gravity: &GravityVector<T>,
    dt: T,
) -> Result<PendulumState<T>> {
    if !(dt > T::zero()) {
        return Err(Error::InvalidParameter(
            "semi_implicit_step dt must be > 0".into(),
        ));
    }
    let accel = continuous_accel(state, input, support, gravity)?;
    let velocity = state.velocity + accel * dt;
    let position = state.position + velocity * dt;
    Ok(PendulumState { position, velocity })
}

/// Whether the xy projection of `point` lies inside (or within `tol` of)
/// the convex hull of the xy projections of `points`.
pub fn in_convex_hull_xy<T: Real>(point: &Vector3<T>, points: &[Vector3<T>], tol: T) -> bool {
    match points.len() {
        0 => false,
        1 => {
            let dx = point.x - points[0].x;
            let dy = point.y - points[0].y;
            (dx * dx + dy * dy).sqrt() <= tol
        }
        _ => {
            // Distance to the hull is zero iff the point cannot be separated
            // from every vertex by some direction. Sample the separating
            // direction over edge normals and vertex directions.
            let inside_all_halfplanes = |p: (T, T)| -> bool {
                // For every ordered pair (i, j), the hull lies on one side of
                // the edge line through i, j; accept p if for each direction
                // that separates p from all vertices none exists.
                // Equivalent formulation: p is in the hull iff for every unit
                // direction d, dot(p, d) <= max_i dot(v_i, d). Checking edge
                // normals and vertex-to-point directions suffices for <= 4
                // points.
                let mut dirs: Vec<(T, T)> = Vec::new();
                for i in 0..points.len() {
                    for j in 0..points.len() {
                        if i == j {
                            continue;
                        }
                        let ex = points[j].x - points[i].x;
                        let ey = points[j].y - points[i].y;
                        let norm = (ex * ex + ey * ey).sqrt();
                        if norm > T::default_epsilon() {
                            dirs.push((ey / norm, -ex / norm));
                            dirs.push((-ey / norm, ex / norm));
                        }
                    }
                    let vx = p.0 - points[i].x;
                    let vy = p.1 - points[i].y;
                    let norm = (vx * vx + vy * vy).sqrt();
                    if norm > T::default_epsilon() {
                        dirs.push((vx / norm, vy / norm));
                    }
                }
                for (dx, dy) in dirs {
                    let proj = p.0 * dx + p.1 * dy;
                    let mut support_max = points[0].x * dx + points[0].y * dy;
                    for v in &points[1..] {
                        support_max = support_max.max(v.x * dx + v.y * dy);
                    }
                    if proj > support_max + tol {
                        return false;
                    }
                }
                true
            };
            inside_all_halfplanes((point.x, point.y))
        }
    }
}
