//! Forward kinematics, foot kinematics, and contact Jacobians.

use nalgebra::{DMatrix, DVector, Vector3};

use super::spatial::{transform_motion, Motion, Pose};
use super::RigidBodyModel;

/// World-frame kinematics of one foot.
#[derive(Debug, Clone)]
pub struct FootKinematics {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// 3 x nv Jacobian mapping generalized velocities to world-frame linear
    /// velocity of the foot point: `v_foot = J_c * qd`.
    pub jacobian: DMatrix<f64>,
}

/// Per-configuration kinematics shared by the dynamics routines.
pub struct KinematicsCache {
    /// World pose of each body frame.
    pub world_pose: Vec<Pose>,
    /// Each body's motion-subspace columns re-expressed in world coordinates.
    pub world_subspace: Vec<Vec<Motion>>,
    /// Spatial velocity of each body in world coordinates.
    pub world_velocity: Vec<Motion>,
}

/// Compute world poses, world-frame subspaces, and body velocities.
pub fn kinematics(model: &RigidBodyModel, q: &DVector<f64>, qd: &DVector<f64>) -> KinematicsCache {
    let nb = model.bodies.len();
    let mut world_pose: Vec<Pose> = Vec::with_capacity(nb);
    let mut world_subspace: Vec<Vec<Motion>> = Vec::with_capacity(nb);
    let mut world_velocity: Vec<Motion> = Vec::with_capacity(nb);

    for (i, body) in model.bodies.iter().enumerate() {
        let local = model.joint_pose(body, q);
        let pose = match body.parent {
            Some(p) => world_pose[p].compose(&local),
            None => local,
        };
        let cols: Vec<Motion> = body
            .subspace
            .iter()
            .map(|s| transform_motion(&pose, s))
            .collect();
        let mut vel = match body.parent {
            Some(p) => world_velocity[p],
            None => Motion::zero(),
        };
        for (k, col) in cols.iter().enumerate() {
            vel = vel.add(&col.scale(qd[body.coord_start + k]));
        }
        world_pose.push(pose);
        world_subspace.push(cols);
        world_velocity.push(vel);
        debug_assert_eq!(world_pose.len(), i + 1);
    }

    KinematicsCache {
        world_pose,
        world_subspace,
        world_velocity,
    }
}

/// World position of one foot for a given configuration.
pub fn foot_position(model: &RigidBodyModel, cache: &KinematicsCache, foot: usize) -> Vector3<f64> {
    let f = &model.feet[foot];
    cache.world_pose[f.body].transform_point(&f.offset)
}

/// Positions, velocities, and Jacobians of all feet.
pub fn foot_kinematics(
    model: &RigidBodyModel,
    cache: &KinematicsCache,
    qd: &DVector<f64>,
) -> Vec<FootKinematics> {
    let _ = qd;
    let nv = model.nv();
    model
        .feet
        .iter()
        .map(|f| {
            let p = cache.world_pose[f.body].transform_point(&f.offset);
            let v_body = &cache.world_velocity[f.body];
            let velocity = v_body.lin + v_body.ang.cross(&p);

            let mut jacobian = DMatrix::zeros(3, nv);
            let mut b = Some(f.body);
            while let Some(i) = b {
                let body = &model.bodies[i];
                for (k, col) in cache.world_subspace[i].iter().enumerate() {
                    let lin = col.lin + col.ang.cross(&p);
                    jacobian
                        .column_mut(body.coord_start + k)
                        .copy_from(&lin);
                }
                b = body.parent;
            }
            FootKinematics {
                position: p,
                velocity,
                jacobian,
            }
        })
        .collect()
}

/// Gravitational potential energy of the configuration.
pub fn potential_energy(model: &RigidBodyModel, cache: &KinematicsCache) -> f64 {
    model
        .bodies
        .iter()
        .zip(cache.world_pose.iter())
        .map(|(b, pose)| {
            let com_world = pose.transform_point(&b.inertia.com);
            -b.inertia.mass * model.gravity.dot(&com_world)
        })
        .sum()
}
