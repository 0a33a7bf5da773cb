//! Floating-base legged system: rigid-body dynamics driven by joint torques
//! and smooth contact forces, exposed as a `ControlledSystem`.
//!
//! State layout: `[base pose, joint positions, base twist, joint velocities]`
//! with the base twist expressed in the body frame. The kinematic row maps the
//! body twist to world-frame pose rates through `R_WL(q)`; the acceleration row
//! is `M^{-1} (S^T tau + J_c^T lambda - C - G)`.

use nalgebra::{DMatrix, DVector, Vector2, Vector3};

use crate::contact::{
    total_contact_force, update_contact_state, ContactParams, ContactState, GroundPlane,
};
use crate::dynamics::{ControlledSystem, StepError};
use crate::math::{
    euler_rate_matrix, euler_rate_matrix_partials, rotation_planar, rotation_planar_partial,
    rotation_rpy, rotation_rpy_partials,
};
use crate::rigid_body::dynamics::{bias_forces, factorize, mass_matrix};
use crate::rigid_body::kinematics::{
    foot_kinematics, kinematics, potential_energy, FootKinematics,
};
use crate::rigid_body::RigidBodyModel;

/// Pitch distance to ±pi/2 below which the Euler-rate map is treated as
/// singular and stepping errors out instead of regularizing.
const GIMBAL_GUARD: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct LeggedSystem {
    pub model: RigidBodyModel,
    pub contact: ContactParams,
    pub plane: GroundPlane,
}

impl LeggedSystem {
    pub fn new(model: RigidBodyModel, contact: ContactParams, plane: GroundPlane) -> Self {
        LeggedSystem {
            model,
            contact,
            plane,
        }
    }

    /// Number of generalized coordinates (half the state dimension).
    pub fn nq(&self) -> usize {
        self.model.nv()
    }

    pub fn split_state<'a>(
        &self,
        x: &'a DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>) {
        let nq = self.nq();
        (x.rows(0, nq).into_owned(), x.rows(nq, nq).into_owned())
    }

    fn check_gimbal(&self, q: &DVector<f64>) -> Result<(), StepError> {
        if self.model.floating_base && !self.model.planar {
            let pitch = q[1];
            if pitch.cos().abs() < GIMBAL_GUARD {
                return Err(StepError::GimbalLock { pitch });
            }
        }
        Ok(())
    }

    /// World-frame contact force per foot for a state and hidden contact state.
    pub fn contact_forces(
        &self,
        x: &DVector<f64>,
        hidden: &ContactState,
    ) -> Vec<Vector3<f64>> {
        let (q, v) = self.split_state(x);
        let cache = kinematics(&self.model, &q, &v);
        let feet = foot_kinematics(&self.model, &cache, &v);
        self.forces_from_feet(&feet, hidden)
    }

    fn forces_from_feet(
        &self,
        feet: &[FootKinematics],
        hidden: &ContactState,
    ) -> Vec<Vector3<f64>> {
        feet.iter()
            .zip(hidden.feet.iter())
            .map(|(fk, fc)| {
                total_contact_force(&fk.position, &fk.velocity, fc, &self.plane, &self.contact)
            })
            .collect()
    }

    /// Generalized accelerations for given torques and hidden contact state.
    fn acceleration(
        &self,
        q: &DVector<f64>,
        v: &DVector<f64>,
        tau: &DVector<f64>,
        hidden: &ContactState,
    ) -> Result<DVector<f64>, StepError> {
        let cache = kinematics(&self.model, q, v);
        let feet = foot_kinematics(&self.model, &cache, v);
        let lambdas = self.forces_from_feet(&feet, hidden);

        let m = mass_matrix(&self.model, q);
        let chol = factorize(m)?;
        let mut rhs = -bias_forces(&self.model, q, v);
        for (k, &idx) in self.model.actuated.iter().enumerate() {
            rhs[idx] += tau[k];
        }
        for (fk, lam) in feet.iter().zip(lambdas.iter()) {
            rhs += fk.jacobian.transpose() * lam;
        }
        Ok(chol.solve(&rhs))
    }

    /// Pose rates from the body twist (the analytic kinematic row).
    fn pose_rates(&self, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let nq = self.nq();
        let mut dq = DVector::zeros(nq);
        if self.model.floating_base {
            if self.model.planar {
                dq[0] = v[0];
                let r = rotation_planar(q[0]);
                let world = r * Vector2::new(v[1], v[2]);
                dq[1] = world.x;
                dq[2] = world.y;
                for j in 3..nq {
                    dq[j] = v[j];
                }
            } else {
                let e = euler_rate_matrix(q[0], q[1]);
                let drpy = e * Vector3::new(v[0], v[1], v[2]);
                let r = rotation_rpy(q[0], q[1], q[2]);
                let dpos = r * Vector3::new(v[3], v[4], v[5]);
                for i in 0..3 {
                    dq[i] = drpy[i];
                    dq[3 + i] = dpos[i];
                }
                for j in 6..nq {
                    dq[j] = v[j];
                }
            }
        } else {
            dq.copy_from(v);
        }
        dq
    }

    /// Total mechanical energy (kinetic plus gravitational potential).
    pub fn energy(&self, x: &DVector<f64>) -> f64 {
        let (q, v) = self.split_state(x);
        let m = mass_matrix(&self.model, &q);
        let kinetic = 0.5 * v.dot(&(&m * &v));
        let cache = kinematics(&self.model, &q, &v);
        kinetic + potential_energy(&self.model, &cache)
    }

    /// Power injected by torques and contact forces at a state.
    pub fn input_power(&self, x: &DVector<f64>, tau: &DVector<f64>, hidden: &ContactState) -> f64 {
        let (q, v) = self.split_state(x);
        let cache = kinematics(&self.model, &q, &v);
        let feet = foot_kinematics(&self.model, &cache, &v);
        let lambdas = self.forces_from_feet(&feet, hidden);
        let actuation: f64 = self
            .model
            .actuated
            .iter()
            .zip(tau.iter())
            .map(|(&idx, t)| t * v[idx])
            .sum();
        let contact: f64 = feet
            .iter()
            .zip(lambdas.iter())
            .map(|(fk, lam)| fk.velocity.dot(lam))
            .sum();
        actuation + contact
    }

    /// World positions and velocities of the feet at a state.
    pub fn foot_states(&self, x: &DVector<f64>) -> Vec<FootKinematics> {
        let (q, v) = self.split_state(x);
        let cache = kinematics(&self.model, &q, &v);
        foot_kinematics(&self.model, &cache, &v)
    }

    /// Initial PD joint-hold controller around a state (gains from the model
    /// file); feedforward is zero.
    pub fn pd_hold_policy(&self, x_hold: &DVector<f64>, n_steps: usize) -> crate::dynamics::AffinePolicy {
        let nq = self.nq();
        let m = self.model.num_actuated();
        let mut gain = DMatrix::zeros(m, 2 * nq);
        for (k, &idx) in self.model.actuated.iter().enumerate() {
            gain[(k, idx)] = -self.model.pd_hold.kp[k];
            gain[(k, nq + idx)] = -self.model.pd_hold.kd[k];
        }
        crate::dynamics::AffinePolicy::hold(x_hold.clone(), gain, n_steps)
    }
}

impl ControlledSystem for LeggedSystem {
    type Hidden = ContactState;

    fn state_dim(&self) -> usize {
        2 * self.nq()
    }

    fn input_dim(&self) -> usize {
        self.model.num_actuated()
    }

    fn derivative(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        hidden: &ContactState,
    ) -> Result<DVector<f64>, StepError> {
        let nq = self.nq();
        let (q, v) = self.split_state(x);
        self.check_gimbal(&q)?;

        let accel = self.acceleration(&q, &v, u, hidden)?;
        let dq = self.pose_rates(&q, &v);

        let mut dx = DVector::zeros(2 * nq);
        dx.rows_mut(0, nq).copy_from(&dq);
        dx.rows_mut(nq, nq).copy_from(&accel);
        if let Some(coordinate) = dx.iter().position(|c| !c.is_finite()) {
            return Err(StepError::NonFinite { coordinate });
        }
        Ok(dx)
    }

    fn init_hidden(&self, x: &DVector<f64>) -> ContactState {
        let state = ContactState::cleared(self.model.feet.len());
        self.advance_contacts(&state, x)
    }

    fn advance_hidden(&self, hidden: &ContactState, x_next: &DVector<f64>) -> ContactState {
        self.advance_contacts(hidden, x_next)
    }

    /// Hybrid linearization: analytic kinematic row (including the R_WL
    /// partials) and torque columns, central finite differences for the
    /// acceleration row with respect to the state. Anchors stay frozen.
    fn linearize_continuous(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        hidden: &ContactState,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>), StepError> {
        let nq = self.nq();
        let n = 2 * nq;
        let (q, v) = self.split_state(x);
        self.check_gimbal(&q)?;

        let mut a = DMatrix::zeros(n, n);

        // Kinematic rows.
        if self.model.floating_base {
            if self.model.planar {
                a[(0, nq)] = 1.0;
                let r = rotation_planar(q[0]);
                let dr = rotation_planar_partial(q[0]);
                let dtheta = dr * Vector2::new(v[1], v[2]);
                a[(1, 0)] = dtheta.x;
                a[(2, 0)] = dtheta.y;
                for (i, row) in [1usize, 2].iter().enumerate() {
                    a[(*row, nq + 1)] = r[(i, 0)];
                    a[(*row, nq + 2)] = r[(i, 1)];
                }
                for j in 3..nq {
                    a[(j, nq + j)] = 1.0;
                }
            } else {
                let omega = Vector3::new(v[0], v[1], v[2]);
                let vel = Vector3::new(v[3], v[4], v[5]);
                let e = euler_rate_matrix(q[0], q[1]);
                let de = euler_rate_matrix_partials(q[0], q[1]);
                let r = rotation_rpy(q[0], q[1], q[2]);
                let dr = rotation_rpy_partials(q[0], q[1], q[2]);
                for i in 0..3 {
                    a[(i, 0)] = (de[0] * omega)[i];
                    a[(i, 1)] = (de[1] * omega)[i];
                    for k in 0..3 {
                        a[(i, nq + k)] = e[(i, k)];
                        a[(3 + i, k)] = (dr[k] * vel)[i];
                        a[(3 + i, nq + 3 + k)] = r[(i, k)];
                    }
                }
                for j in 6..nq {
                    a[(j, nq + j)] = 1.0;
                }
            }
        } else {
            for j in 0..nq {
                a[(j, nq + j)] = 1.0;
            }
        }

        // Acceleration rows by central differences over the state.
        for i in 0..n {
            let h = crate::dynamics::fd_step(x[i]);
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let (qp, vp) = self.split_state(&xp);
            let (qm, vm) = self.split_state(&xm);
            let fp = self.acceleration(&qp, &vp, u, hidden)?;
            let fm = self.acceleration(&qm, &vm, u, hidden)?;
            let col = (fp - fm) / (2.0 * h);
            for row in 0..nq {
                a[(nq + row, i)] = col[row];
            }
        }

        // Torque columns: M^{-1} S^T, analytic.
        let m_in = self.input_dim();
        let mut b = DMatrix::zeros(n, m_in);
        let mass = mass_matrix(&self.model, &q);
        let chol = factorize(mass)?;
        for (k, &idx) in self.model.actuated.iter().enumerate() {
            let mut e = DVector::zeros(nq);
            e[idx] = 1.0;
            let col = chol.solve(&e);
            for row in 0..nq {
                b[(nq + row, k)] = col[row];
            }
        }
        Ok((a, b))
    }
}

impl LeggedSystem {
    fn advance_contacts(&self, state: &ContactState, x: &DVector<f64>) -> ContactState {
        let (q, v) = self.split_state(x);
        let cache = kinematics(&self.model, &q, &v);
        let n = self.plane.normal_vec();
        let p0 = self.plane.point_vec();
        let feet: Vec<_> = (0..self.model.feet.len())
            .map(|i| {
                let pos = crate::rigid_body::kinematics::foot_position(&self.model, &cache, i);
                let depth = -(pos - p0).dot(&n);
                let prev = state
                    .feet
                    .get(i)
                    .copied()
                    .unwrap_or(crate::contact::FootContact::clear());
                update_contact_state(&prev, &pos, depth, &self.plane)
            })
            .collect();
        ContactState { feet }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{rollout, step, AffinePolicy, IntegratorChoice};
    use approx::assert_abs_diff_eq;

    fn free_body() -> LeggedSystem {
        let model = RigidBodyModel::from_json(
            r#"{
            "name": "free-planar-body",
            "planar": true,
            "base_link": "body",
            "links": [{"name": "body", "mass": 2.0, "inertia": 0.3}],
            "actuated_joints": [],
            "pd_hold": {"kp": [], "kd": []},
            "default_base_pose": [0.0, 0.0, 1.0]
        }"#,
        )
        .unwrap();
        LeggedSystem::new(
            model,
            ContactParams {
                alpha_c: 0.01,
                k_n: 10000.0,
                d_n: 2000.0,
                k_t: 100000.0,
                d_t: 2000.0,
                mu: 0.8,
            },
            GroundPlane::horizontal(-100.0),
        )
    }

    fn spatial_free_body() -> LeggedSystem {
        let model = RigidBodyModel::from_json(
            r#"{
            "name": "free-spatial-body",
            "planar": false,
            "base_link": "body",
            "links": [{"name": "body", "mass": 2.0, "inertia": [0.3, 0.4, 0.5]}],
            "actuated_joints": [],
            "pd_hold": {"kp": [], "kd": []},
            "default_base_pose": [0, 0, 0, 0, 0, 1.0]
        }"#,
        )
        .unwrap();
        LeggedSystem::new(
            model,
            ContactParams {
                alpha_c: 0.01,
                k_n: 10000.0,
                d_n: 2000.0,
                k_t: 100000.0,
                d_t: 2000.0,
                mu: 0.8,
            },
            GroundPlane::horizontal(-100.0),
        )
    }

    #[test]
    fn free_fall_vertical_acceleration() {
        let sys = free_body();
        let x = sys.model.default_state();
        let dx = sys
            .derivative(&x, &DVector::zeros(0), &sys.init_hidden(&x))
            .unwrap();
        assert_abs_diff_eq!(dx[5], -9.81, epsilon = 1e-12);
    }

    #[test]
    fn gimbal_lock_guard_trips() {
        let sys = spatial_free_body();
        let mut x = sys.model.default_state();
        x[1] = std::f64::consts::FRAC_PI_2 - 5e-4;
        let err = sys
            .derivative(&x, &DVector::zeros(0), &sys.init_hidden(&x))
            .unwrap_err();
        assert!(matches!(err, StepError::GimbalLock { .. }));
    }

    #[test]
    fn spatial_kinematic_row_matches_finite_differences() {
        // The analytic kinematic rows (E_inv and R_WL partials) against a pure
        // finite-difference linearization of the same derivative.
        let sys = spatial_free_body();
        let mut x = sys.model.default_state();
        x[0] = 0.3;
        x[1] = -0.5;
        x[2] = 0.9;
        for (i, v) in [0.4, -0.2, 0.6, 1.0, -0.7, 0.3].iter().enumerate() {
            x[6 + i] = *v;
        }
        let u = DVector::zeros(0);
        let hidden = sys.init_hidden(&x);
        let (a, _) = sys.linearize_continuous(&x, &u, &hidden).unwrap();

        let n = sys.state_dim();
        for i in 0..n {
            let h = 1e-6;
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let fp = sys.derivative(&xp, &u, &hidden).unwrap();
            let fm = sys.derivative(&xm, &u, &hidden).unwrap();
            let col = (fp - fm) / (2.0 * h);
            for row in 0..6 {
                assert_abs_diff_eq!(a[(row, i)], col[row], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn settles_on_ground_and_holds_contact() {
        // Drop the body onto the plane; it must settle with the hidden state
        // in contact and the anchor constant across the rollout.
        let model = RigidBodyModel::from_json(
            r#"{
            "name": "point-foot-body",
            "planar": true,
            "base_link": "body",
            "links": [{"name": "body", "mass": 2.0, "inertia": 0.3}],
            "feet": [{"name": "foot", "link": "body", "offset": [0, 0, -0.2]}],
            "actuated_joints": [],
            "pd_hold": {"kp": [], "kd": []},
            "default_base_pose": [0.0, 0.0, 0.25]
        }"#,
        )
        .unwrap();
        let sys = LeggedSystem::new(
            model,
            ContactParams {
                alpha_c: 0.01,
                k_n: 20000.0,
                d_n: 8000.0,
                k_t: 0.0,
                d_t: 100.0,
                mu: 0.8,
            },
            GroundPlane::horizontal(0.0),
        );
        let x0 = sys.model.default_state();
        let n = 1500;
        let policy = AffinePolicy::open_loop(vec![DVector::zeros(0); n], sys.state_dim());
        let traj = rollout(&sys, &policy, x0, n, &IntegratorChoice::rk4(0.002)).unwrap();

        let final_x = traj.final_state();
        // Settled: foot slightly below the plane, weight balanced.
        assert!(final_x[2] < 0.2 && final_x[2] > 0.19);
        assert!(final_x[5].abs() < 1e-3);
        let forces = sys.contact_forces(final_x, traj.hidden.last().unwrap());
        assert_abs_diff_eq!(forces[0].z, 2.0 * 9.81, epsilon = 0.5);

        // Anchor invariant while in contact.
        let mut anchor = None;
        for h in &traj.hidden {
            if h.feet[0].in_contact {
                match anchor {
                    None => anchor = Some(h.feet[0].anchor),
                    Some(a) => assert_eq!(h.feet[0].anchor, a),
                }
            }
        }
        assert!(anchor.is_some());
    }

    #[test]
    fn step_determinism() {
        let sys = free_body();
        let x = sys.model.default_state();
        let h = sys.init_hidden(&x);
        let integ = IntegratorChoice::rk4(0.004);
        let a = step(&sys, &x, &DVector::zeros(0), &h, &integ).unwrap();
        let b = step(&sys, &x, &DVector::zeros(0), &h, &integ).unwrap();
        assert_eq!(a.0, b.0);
    }
}
