//! Mass matrix (composite rigid body), inverse dynamics (recursive
//! Newton-Euler), bias forces, and contact-aware forward dynamics.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Vector3};
use thiserror::Error;

use super::kinematics::{foot_kinematics, kinematics};
use super::spatial::{
    inv_transform_motion, transform_force, Force, Motion, SpatialInertia,
};
use super::RigidBodyModel;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("mass matrix factorization failed (model not positive definite)")]
    Factorization,
    #[error("dimension mismatch: expected {expected}, got {got} for {what}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<(), DynamicsError> {
    if expected != got {
        return Err(DynamicsError::Dimension {
            what,
            expected,
            got,
        });
    }
    Ok(())
}

/// Joint-space mass matrix M(q) via the composite-rigid-body algorithm.
pub fn mass_matrix(model: &RigidBodyModel, q: &DVector<f64>) -> DMatrix<f64> {
    let nv = model.nv();
    let nb = model.bodies.len();
    let mut m = DMatrix::zeros(nv, nv);

    let local_pose: Vec<_> = model
        .bodies
        .iter()
        .map(|b| model.joint_pose(b, q))
        .collect();

    let mut composite: Vec<SpatialInertia> =
        model.bodies.iter().map(|b| b.inertia).collect();
    for i in (0..nb).rev() {
        if let Some(p) = model.bodies[i].parent {
            let lifted = composite[i].transform(&local_pose[i]);
            composite[p] = composite[p].add(&lifted);
        }
    }

    for i in 0..nb {
        let body = &model.bodies[i];
        let ci = body.coord_start;
        // Force transmitted through each subspace column of joint i.
        let mut forces: Vec<Force> = body
            .subspace
            .iter()
            .map(|s| composite[i].apply(s))
            .collect();
        for (a, sa) in body.subspace.iter().enumerate() {
            for (b, f) in forces.iter().enumerate() {
                m[(ci + a, ci + b)] = f.dot(sa);
            }
        }
        let mut j = i;
        while let Some(p) = model.bodies[j].parent {
            for f in forces.iter_mut() {
                *f = transform_force(&local_pose[j], f);
            }
            j = p;
            let pj = &model.bodies[j];
            for (a, sa) in pj.subspace.iter().enumerate() {
                for (b, f) in forces.iter().enumerate() {
                    let val = f.dot(sa);
                    m[(pj.coord_start + a, ci + b)] = val;
                    m[(ci + b, pj.coord_start + a)] = val;
                }
            }
        }
    }
    m
}

/// Inverse dynamics: generalized forces required to produce `qdd` at (q, qd),
/// including gravity, with optional external spatial forces per body expressed
/// in world coordinates about each body's own frame point.
pub fn inverse_dynamics(
    model: &RigidBodyModel,
    q: &DVector<f64>,
    qd: &DVector<f64>,
    qdd: &DVector<f64>,
    external: Option<&[Force]>,
) -> DVector<f64> {
    let nb = model.bodies.len();
    let nv = model.nv();
    let mut tau = DVector::zeros(nv);

    let local_pose: Vec<_> = model
        .bodies
        .iter()
        .map(|b| model.joint_pose(b, q))
        .collect();

    let mut vel = vec![Motion::zero(); nb];
    let mut acc = vec![Motion::zero(); nb];
    let mut net = vec![Force::zero(); nb];

    // Gravity enters as a fictitious upward base acceleration.
    let a_world = Motion::new(Vector3::zeros(), -model.gravity);

    for i in 0..nb {
        let body = &model.bodies[i];
        let (v_parent, a_parent) = match body.parent {
            Some(p) => (
                inv_transform_motion(&local_pose[i], &vel[p]),
                inv_transform_motion(&local_pose[i], &acc[p]),
            ),
            None => (
                Motion::zero(),
                inv_transform_motion(&local_pose[i], &a_world),
            ),
        };
        let mut v_joint = Motion::zero();
        let mut a_joint = Motion::zero();
        for (k, s) in body.subspace.iter().enumerate() {
            v_joint = v_joint.add(&s.scale(qd[body.coord_start + k]));
            a_joint = a_joint.add(&s.scale(qdd[body.coord_start + k]));
        }
        vel[i] = v_parent.add(&v_joint);
        acc[i] = a_parent.add(&a_joint).add(&vel[i].cross_motion(&v_joint));

        let momentum = body.inertia.apply(&vel[i]);
        net[i] = body
            .inertia
            .apply(&acc[i])
            .add(&vel[i].cross_force(&momentum));
        if let Some(ext) = external {
            net[i] = net[i].sub(&ext[i]);
        }
    }

    for i in (0..nb).rev() {
        let body = &model.bodies[i];
        for (k, s) in body.subspace.iter().enumerate() {
            tau[body.coord_start + k] = net[i].dot(s);
        }
        if let Some(p) = body.parent {
            let lifted = transform_force(&local_pose[i], &net[i]);
            net[p] = net[p].add(&lifted);
        }
    }
    tau
}

/// Combined Coriolis, centrifugal, and gravity forces C(q, qd) + G(q).
pub fn bias_forces(model: &RigidBodyModel, q: &DVector<f64>, qd: &DVector<f64>) -> DVector<f64> {
    inverse_dynamics(model, q, qd, &DVector::zeros(model.nv()), None)
}

/// Forward dynamics with per-foot world-frame contact forces:
/// solves `M qdd = S^T tau + sum_i J_ci^T lambda_i - C - G`.
pub fn forward_dynamics(
    model: &RigidBodyModel,
    q: &DVector<f64>,
    qd: &DVector<f64>,
    tau: &DVector<f64>,
    lambda: &[Vector3<f64>],
) -> Result<DVector<f64>, DynamicsError> {
    let nv = model.nv();
    check_dim("q", nv, q.len())?;
    check_dim("qd", nv, qd.len())?;
    check_dim("tau", model.num_actuated(), tau.len())?;
    check_dim("lambda", model.feet.len(), lambda.len())?;

    let m = mass_matrix(model, q);
    let chol = factorize(m)?;
    let mut rhs = -bias_forces(model, q, qd);
    for (k, &idx) in model.actuated.iter().enumerate() {
        rhs[idx] += tau[k];
    }
    if !lambda.is_empty() {
        let cache = kinematics(model, q, qd);
        let feet = foot_kinematics(model, &cache, qd);
        for (fk, lam) in feet.iter().zip(lambda.iter()) {
            rhs += fk.jacobian.transpose() * lam;
        }
    }
    Ok(chol.solve(&rhs))
}

/// Cholesky factorization of the mass matrix, reusable for repeated solves.
pub fn factorize(m: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>, DynamicsError> {
    Cholesky::new(m).ok_or(DynamicsError::Factorization)
}
