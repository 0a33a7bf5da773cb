//! Rotation and Euler-angle kinematics shared by the dynamics and cost modules.
//!
//! Base orientation is roll-pitch-yaw with `R = Rz(yaw) * Ry(pitch) * Rx(roll)`
//! mapping body-frame vectors into the world frame. Pose rates relate to the
//! body-frame angular velocity through `d(rpy)/dt = E_inv(roll, pitch) * w_body`,
//! which is singular at pitch = ±pi/2.

use nalgebra::{Matrix2, Matrix3, Vector3};

/// Wrap an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut w = a % two_pi;
    if w <= -std::f64::consts::PI {
        w += two_pi;
    } else if w > std::f64::consts::PI {
        w -= two_pi;
    }
    w
}

/// World-from-body rotation for roll-pitch-yaw angles.
pub fn rotation_rpy(roll: f64, pitch: f64, yaw: f64) -> Matrix3<f64> {
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let (sy, cy) = yaw.sin_cos();
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cr, -sr, 0.0, sr, cr);
    let ry = Matrix3::new(cp, 0.0, sp, 0.0, 1.0, 0.0, -sp, 0.0, cp);
    let rz = Matrix3::new(cy, -sy, 0.0, sy, cy, 0.0, 0.0, 0.0, 1.0);
    rz * ry * rx
}

/// Partial derivatives of `rotation_rpy` with respect to roll, pitch, yaw.
pub fn rotation_rpy_partials(roll: f64, pitch: f64, yaw: f64) -> [Matrix3<f64>; 3] {
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let (sy, cy) = yaw.sin_cos();
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cr, -sr, 0.0, sr, cr);
    let ry = Matrix3::new(cp, 0.0, sp, 0.0, 1.0, 0.0, -sp, 0.0, cp);
    let rz = Matrix3::new(cy, -sy, 0.0, sy, cy, 0.0, 0.0, 0.0, 1.0);
    let drx = Matrix3::new(0.0, 0.0, 0.0, 0.0, -sr, -cr, 0.0, cr, -sr);
    let dry = Matrix3::new(-sp, 0.0, cp, 0.0, 0.0, 0.0, -cp, 0.0, -sp);
    let drz = Matrix3::new(-sy, -cy, 0.0, cy, -sy, 0.0, 0.0, 0.0, 0.0);
    [rz * ry * drx, rz * dry * rx, drz * ry * rx]
}

/// Matrix mapping body angular velocity to Euler-angle rates:
/// `d(rpy)/dt = euler_rate_matrix(roll, pitch) * w_body`.
pub fn euler_rate_matrix(roll: f64, pitch: f64) -> Matrix3<f64> {
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let tp = sp / cp;
    Matrix3::new(
        1.0,
        sr * tp,
        cr * tp,
        0.0,
        cr,
        -sr,
        0.0,
        sr / cp,
        cr / cp,
    )
}

/// Partial derivatives of `euler_rate_matrix` with respect to roll and pitch.
pub fn euler_rate_matrix_partials(roll: f64, pitch: f64) -> [Matrix3<f64>; 2] {
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let tp = sp / cp;
    let sec2 = 1.0 / (cp * cp);
    let d_roll = Matrix3::new(
        0.0,
        cr * tp,
        -sr * tp,
        0.0,
        -sr,
        -cr,
        0.0,
        cr / cp,
        -sr / cp,
    );
    let d_pitch = Matrix3::new(
        0.0,
        sr * sec2,
        cr * sec2,
        0.0,
        0.0,
        0.0,
        0.0,
        sr * sp * sec2,
        cr * sp * sec2,
    );
    [d_roll, d_pitch]
}

/// 2D world-from-body rotation for a planar base pitched about +y.
///
/// Maps body-frame (x, z) components into world-frame (x, z), consistent with
/// restricting `Ry(pitch)` to the x-z plane.
pub fn rotation_planar(pitch: f64) -> Matrix2<f64> {
    let (sp, cp) = pitch.sin_cos();
    Matrix2::new(cp, sp, -sp, cp)
}

/// Derivative of `rotation_planar` with respect to pitch.
pub fn rotation_planar_partial(pitch: f64) -> Matrix2<f64> {
    let (sp, cp) = pitch.sin_cos();
    Matrix2::new(-sp, cp, -cp, -sp)
}

/// Skew-symmetric matrix such that `skew(a) * b = a × b`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}
