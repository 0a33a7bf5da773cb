//! Piecewise-smooth spring-damper contact model with hidden anchor states.
//!
//! Forces blend quadratically to zero over a smoothing depth `alpha_c` so both
//! the force and its gradient are continuous at touchdown. Tangential forces
//! act against the displacement from the anchor point recorded when contact was
//! established; anchors are hidden states threaded through rollouts and are not
//! part of the optimizer's state vector.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ContactError {
    #[error("contact parameter `{0}` out of range: {1}")]
    Parameter(&'static str, f64),
    #[error("ground plane normal must be unit length with positive vertical component")]
    BadPlane,
}

/// Spring-damper contact parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct ContactParams {
    /// Smoothing depth [m] below which forces blend quadratically to zero.
    pub alpha_c: f64,
    /// Normal spring stiffness [N/m].
    pub k_n: f64,
    /// Normal damping gain.
    pub d_n: f64,
    /// Tangential spring stiffness [N/m].
    pub k_t: f64,
    /// Tangential damping gain [N·s/m].
    pub d_t: f64,
    /// Friction coefficient (static = dynamic).
    pub mu: f64,
}

impl ContactParams {
    pub fn validate(&self) -> Result<(), ContactError> {
        if !(self.alpha_c > 0.0) {
            return Err(ContactError::Parameter("alpha_c", self.alpha_c));
        }
        for (name, v) in [
            ("k_n", self.k_n),
            ("d_n", self.d_n),
            ("k_t", self.k_t),
            ("d_t", self.d_t),
            ("mu", self.mu),
        ] {
            if !(v >= 0.0) {
                return Err(ContactError::Parameter(name, v));
            }
        }
        Ok(())
    }
}

/// Ground plane with unit, upward-oriented normal.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct GroundPlane {
    pub point: [f64; 3],
    pub normal: [f64; 3],
}

impl GroundPlane {
    pub fn horizontal(height: f64) -> Self {
        GroundPlane {
            point: [0.0, 0.0, height],
            normal: [0.0, 0.0, 1.0],
        }
    }

    pub fn point_vec(&self) -> Vector3<f64> {
        Vector3::from_column_slice(&self.point)
    }

    pub fn normal_vec(&self) -> Vector3<f64> {
        Vector3::from_column_slice(&self.normal)
    }

    pub fn validate(&self) -> Result<(), ContactError> {
        let n = self.normal_vec();
        if (n.norm() - 1.0).abs() > 1e-9 || n.z <= 0.0 {
            return Err(ContactError::BadPlane);
        }
        Ok(())
    }
}

/// Hidden per-foot contact state: whether the foot is in contact and the world
/// position where contact was established. The anchor is only meaningful while
/// `in_contact` holds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FootContact {
    pub in_contact: bool,
    pub anchor: Vector3<f64>,
}

impl FootContact {
    pub fn clear() -> Self {
        FootContact {
            in_contact: false,
            anchor: Vector3::zeros(),
        }
    }
}

/// Hidden contact state for all feet.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ContactState {
    pub feet: Vec<FootContact>,
}

impl ContactState {
    pub fn cleared(n_feet: usize) -> Self {
        ContactState {
            feet: vec![FootContact::clear(); n_feet],
        }
    }
}

/// Penetration geometry of a foot relative to the plane.
#[derive(Debug, Clone, Copy)]
pub struct Penetration {
    /// Signed depth along -normal (positive = penetrating).
    pub depth: f64,
    /// Rate of change of the depth.
    pub depth_rate: f64,
    /// Tangential displacement from the anchor (zero without an anchor).
    pub tangential: Vector3<f64>,
    /// Tangential component of the foot velocity.
    pub tangential_rate: Vector3<f64>,
}

/// Decompose foot position/velocity into normal penetration and tangential
/// components. `anchor` supplies the tangential displacement reference.
pub fn penetration(
    foot_position: &Vector3<f64>,
    foot_velocity: &Vector3<f64>,
    plane: &GroundPlane,
    anchor: Option<&Vector3<f64>>,
) -> Penetration {
    let n = plane.normal_vec();
    let depth = -(foot_position - plane.point_vec()).dot(&n);
    let depth_rate = -foot_velocity.dot(&n);
    let tangential = match anchor {
        Some(a) => {
            let d = foot_position - a;
            d - d.dot(&n) * n
        }
        None => Vector3::zeros(),
    };
    let tangential_rate = foot_velocity + depth_rate * n;
    Penetration {
        depth,
        depth_rate,
        tangential,
        tangential_rate,
    }
}

/// Piecewise-smooth blending factor shared by the normal and tangential models:
/// `p^2 / (2 alpha_c)` inside the smoothing band, `p - alpha_c / 2` beyond it.
fn smoothing_factor(depth: f64, alpha_c: f64) -> f64 {
    if depth <= 0.0 {
        0.0
    } else if depth < alpha_c {
        depth * depth / (2.0 * alpha_c)
    } else {
        depth - 0.5 * alpha_c
    }
}

/// Normal contact force along the surface normal, clamped to be non-adhesive.
pub fn normal_force(
    depth: f64,
    depth_rate: f64,
    params: &ContactParams,
    normal: &Vector3<f64>,
) -> Vector3<f64> {
    let factor = smoothing_factor(depth, params.alpha_c);
    if factor == 0.0 {
        return Vector3::zeros();
    }
    let magnitude = ((params.k_n + params.d_n * depth_rate) * factor).max(0.0);
    magnitude * normal
}

/// Tangential spring-damper force, restoring against displacement and velocity.
pub fn tangential_force(pen: &Penetration, params: &ContactParams) -> Vector3<f64> {
    let factor = smoothing_factor(pen.depth, params.alpha_c);
    if factor == 0.0 {
        return Vector3::zeros();
    }
    -(params.k_t * pen.tangential + params.d_t * pen.tangential_rate) * factor
}

/// Friction-cone saturation: clamp the tangential magnitude to mu * |lambda_N|
/// preserving direction.
pub fn friction_saturate(
    tangential: &Vector3<f64>,
    normal_force: &Vector3<f64>,
    mu: f64,
) -> Vector3<f64> {
    let limit = mu * normal_force.norm();
    let mag = tangential.norm();
    if mag <= limit || mag == 0.0 {
        *tangential
    } else {
        tangential * (limit / mag)
    }
}

/// Update the hidden state of one foot after an integration step.
///
/// On touchdown the anchor is set to the foot position projected onto the
/// plane; it stays fixed while contact persists and is cleared on liftoff.
pub fn update_contact_state(
    state: &FootContact,
    foot_position: &Vector3<f64>,
    depth: f64,
    plane: &GroundPlane,
) -> FootContact {
    if depth <= 0.0 {
        FootContact::clear()
    } else if state.in_contact {
        *state
    } else {
        let n = plane.normal_vec();
        let projected = foot_position + (depth) * n;
        FootContact {
            in_contact: true,
            anchor: projected,
        }
    }
}

/// Total contact force of one foot: saturated tangential plus normal force.
pub fn total_contact_force(
    foot_position: &Vector3<f64>,
    foot_velocity: &Vector3<f64>,
    state: &FootContact,
    plane: &GroundPlane,
    params: &ContactParams,
) -> Vector3<f64> {
    let anchor = state.in_contact.then_some(&state.anchor);
    let pen = penetration(foot_position, foot_velocity, plane, anchor);
    let n = plane.normal_vec();
    let lam_n = normal_force(pen.depth, pen.depth_rate, params, &n);
    if !state.in_contact {
        // Touchdown mid-step: normal repulsion only until the anchor exists.
        return lam_n;
    }
    let lam_t = friction_saturate(&tangential_force(&pen, params), &lam_n, params.mu);
    lam_n + lam_t
}
