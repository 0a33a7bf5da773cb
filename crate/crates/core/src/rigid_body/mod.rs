//! Kinematic-tree rigid-body models and their dynamics services.
//!
//! Models implement the floating-base equation of motion
//! `M(q) qdd + C(q, qd) + G(q) = J_c^T * lambda + S^T * tau` with the base twist
//! expressed in the body frame. Models are immutable after construction and
//! cheap to share across threads.

pub mod dynamics;
pub mod kinematics;
pub mod spatial;

use nalgebra::{DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{rotation_planar, rotation_rpy};
use spatial::{Motion, Pose, SpatialInertia};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model `{0}`: {1}")]
    Invalid(String, String),
    #[error("model file parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointKind {
    Revolute,
    Prismatic,
}

/// Joint model of a body within the tree, including the floating-base joints.
#[derive(Debug, Clone, PartialEq)]
pub enum JointModel {
    FloatingSpatial,
    FloatingPlanar,
    Revolute(Vector3<f64>),
    Prismatic(Vector3<f64>),
}

impl JointModel {
    pub fn dof(&self) -> usize {
        match self {
            JointModel::FloatingSpatial => 6,
            JointModel::FloatingPlanar => 3,
            _ => 1,
        }
    }

    /// Constant motion-subspace columns in the child frame.
    fn subspace(&self) -> Vec<Motion> {
        let e = |i: usize| {
            let mut v = Vector3::zeros();
            v[i] = 1.0;
            v
        };
        match self {
            JointModel::FloatingSpatial => (0..3)
                .map(|i| Motion::new(e(i), Vector3::zeros()))
                .chain((0..3).map(|i| Motion::new(Vector3::zeros(), e(i))))
                .collect(),
            JointModel::FloatingPlanar => vec![
                Motion::new(e(1), Vector3::zeros()),
                Motion::new(Vector3::zeros(), e(0)),
                Motion::new(Vector3::zeros(), e(2)),
            ],
            JointModel::Revolute(axis) => vec![Motion::new(*axis, Vector3::zeros())],
            JointModel::Prismatic(axis) => vec![Motion::new(Vector3::zeros(), *axis)],
        }
    }
}

/// One body of the tree together with the joint that connects it to its parent.
#[derive(Debug, Clone)]
pub struct Body {
    pub name: String,
    /// Parent body index; `None` for bodies attached to the world.
    pub parent: Option<usize>,
    pub joint: JointModel,
    /// Pose of the joint frame in the parent frame (identity joint position).
    pub origin: Pose,
    pub inertia: SpatialInertia,
    /// First index of this body's coordinates in the generalized vectors.
    pub coord_start: usize,
    /// Motion-subspace columns in the child frame.
    pub subspace: Vec<Motion>,
}

#[derive(Debug, Clone)]
pub struct Foot {
    pub name: String,
    pub body: usize,
    pub offset: Vector3<f64>,
}

/// Per-joint PD gains used for the initial hold controller.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PdHoldGains {
    pub kp: Vec<f64>,
    pub kd: Vec<f64>,
}

/// Compiled rigid-body model.
#[derive(Debug, Clone)]
pub struct RigidBodyModel {
    pub name: String,
    pub planar: bool,
    pub floating_base: bool,
    pub gravity: Vector3<f64>,
    pub bodies: Vec<Body>,
    pub feet: Vec<Foot>,
    /// Velocity-vector indices of the actuated joints (the selection matrix S).
    pub actuated: Vec<usize>,
    pub pd_hold: PdHoldGains,
    pub default_joint_positions: Vec<f64>,
    pub default_base_pose: Vec<f64>,
}

impl RigidBodyModel {
    /// Number of base coordinates (0 fixed, 3 planar, 6 spatial).
    pub fn base_dof(&self) -> usize {
        if !self.floating_base {
            0
        } else if self.planar {
            3
        } else {
            6
        }
    }

    pub fn num_joints(&self) -> usize {
        self.bodies
            .iter()
            .filter(|b| matches!(b.joint, JointModel::Revolute(_) | JointModel::Prismatic(_)))
            .count()
    }

    /// Dimension of the generalized position/velocity vectors.
    pub fn nv(&self) -> usize {
        self.base_dof() + self.num_joints()
    }

    pub fn num_actuated(&self) -> usize {
        self.actuated.len()
    }

    /// 2 for planar contact forces, 3 for spatial.
    pub fn force_dim(&self) -> usize {
        if self.planar {
            2
        } else {
            3
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.bodies.iter().map(|b| b.inertia.mass).sum()
    }

    /// Pose of a body's joint-plus-origin transform in its parent frame.
    pub fn joint_pose(&self, body: &Body, q: &DVector<f64>) -> Pose {
        let local = match &body.joint {
            JointModel::FloatingSpatial => {
                let s = body.coord_start;
                Pose::new(
                    rotation_rpy(q[s], q[s + 1], q[s + 2]),
                    Vector3::new(q[s + 3], q[s + 4], q[s + 5]),
                )
            }
            JointModel::FloatingPlanar => {
                let s = body.coord_start;
                let r2 = rotation_planar(q[s]);
                let mut rot = Matrix3::identity();
                rot[(0, 0)] = r2[(0, 0)];
                rot[(0, 2)] = r2[(0, 1)];
                rot[(2, 0)] = r2[(1, 0)];
                rot[(2, 2)] = r2[(1, 1)];
                Pose::new(rot, Vector3::new(q[s + 1], 0.0, q[s + 2]))
            }
            JointModel::Revolute(axis) => {
                let angle = q[body.coord_start];
                Pose::new(
                    nalgebra::Rotation3::from_axis_angle(
                        &nalgebra::Unit::new_normalize(*axis),
                        angle,
                    )
                    .into_inner(),
                    Vector3::zeros(),
                )
            }
            JointModel::Prismatic(axis) => {
                Pose::new(Matrix3::identity(), axis * q[body.coord_start])
            }
        };
        body.origin.compose(&local)
    }

    /// Default generalized position vector (base pose + joint positions).
    pub fn default_q(&self) -> DVector<f64> {
        let mut q = DVector::zeros(self.nv());
        for (i, v) in self.default_base_pose.iter().enumerate() {
            q[i] = *v;
        }
        for (i, v) in self.default_joint_positions.iter().enumerate() {
            q[self.base_dof() + i] = *v;
        }
        q
    }

    /// Default full state (default pose, zero velocity).
    pub fn default_state(&self) -> DVector<f64> {
        let nv = self.nv();
        let mut x = DVector::zeros(2 * nv);
        x.rows_mut(0, nv).copy_from(&self.default_q());
        x
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let raw: ModelFile = serde_json::from_str(text)?;
        raw.compile()
    }
}

// ---------------------------------------------------------------------------
// JSON schema
// ---------------------------------------------------------------------------

/// Inertia entry: scalar, 3-vector diagonal, or full 3x3 row-major matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InertiaSpec {
    Scalar(f64),
    Diagonal([f64; 3]),
    Full([[f64; 3]; 3]),
}

impl InertiaSpec {
    fn to_matrix(&self) -> Matrix3<f64> {
        match self {
            InertiaSpec::Scalar(v) => Matrix3::from_diagonal(&Vector3::new(*v, *v, *v)),
            InertiaSpec::Diagonal(d) => Matrix3::from_diagonal(&Vector3::new(d[0], d[1], d[2])),
            InertiaSpec::Full(rows) => Matrix3::from_fn(|i, j| rows[i][j]),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinkFile {
    pub name: String,
    pub mass: f64,
    pub inertia: InertiaSpec,
    #[serde(default = "zero3")]
    pub com: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JointFile {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: JointKind,
    pub axis: [f64; 3],
    pub parent: String,
    pub child: String,
    #[serde(default = "zero3")]
    pub origin_xyz: [f64; 3],
    #[serde(default = "zero3")]
    pub origin_rpy: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FootFile {
    pub name: String,
    pub link: String,
    pub offset: [f64; 3],
}

/// On-disk model description. All units SI; see the repository docs for the
/// full field reference.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub name: String,
    pub planar: bool,
    #[serde(default = "default_true")]
    pub floating_base: bool,
    #[serde(default = "default_gravity")]
    pub gravity: [f64; 3],
    /// Name of the base link; required for floating-base models.
    #[serde(default)]
    pub base_link: Option<String>,
    pub links: Vec<LinkFile>,
    #[serde(default)]
    pub joints: Vec<JointFile>,
    #[serde(default)]
    pub feet: Vec<FootFile>,
    pub actuated_joints: Vec<String>,
    pub pd_hold: PdHoldGains,
    #[serde(default)]
    pub default_joint_positions: Vec<f64>,
    #[serde(default)]
    pub default_base_pose: Vec<f64>,
}

fn zero3() -> [f64; 3] {
    [0.0; 3]
}

fn default_true() -> bool {
    true
}

fn default_gravity() -> [f64; 3] {
    [0.0, 0.0, -9.81]
}

impl ModelFile {
    pub fn compile(&self) -> Result<RigidBodyModel, ModelError> {
        let err = |msg: String| ModelError::Invalid(self.name.clone(), msg);

        for link in &self.links {
            if link.mass <= 0.0 {
                return Err(err(format!("links[{}].mass must be > 0", link.name)));
            }
            let tensor = link.inertia.to_matrix();
            if (tensor - tensor.transpose()).abs().max() > 1e-12 {
                return Err(err(format!("links[{}].inertia must be symmetric", link.name)));
            }
            let eig = tensor.symmetric_eigenvalues();
            if eig.min() <= 0.0 {
                return Err(err(format!(
                    "links[{}].inertia must be positive definite",
                    link.name
                )));
            }
        }

        let link_index = |name: &str| -> Result<usize, ModelError> {
            self.links
                .iter()
                .position(|l| l.name == name)
                .ok_or_else(|| err(format!("unknown link `{name}`")))
        };

        let inertia_of = |l: &LinkFile| SpatialInertia {
            mass: l.mass,
            com: Vector3::from_column_slice(&l.com),
            i_com: l.inertia.to_matrix(),
        };

        let base_dof = if !self.floating_base {
            0
        } else if self.planar {
            3
        } else {
            6
        };

        // Bodies in tree order: base first (floating), then joints in file order.
        // Joint parents must already be placed when their child is reached.
        let mut bodies: Vec<Body> = Vec::new();
        let mut body_of_link: Vec<Option<usize>> = vec![None; self.links.len()];

        if self.floating_base {
            let base_name = self
                .base_link
                .as_deref()
                .ok_or_else(|| err("floating-base model requires `base_link`".into()))?;
            let base_idx = link_index(base_name)?;
            let joint = if self.planar {
                JointModel::FloatingPlanar
            } else {
                JointModel::FloatingSpatial
            };
            let subspace = joint.subspace();
            bodies.push(Body {
                name: base_name.to_string(),
                parent: None,
                joint,
                origin: Pose::identity(),
                inertia: inertia_of(&self.links[base_idx]),
                coord_start: 0,
                subspace,
            });
            body_of_link[base_idx] = Some(0);
        }

        let mut next_coord = base_dof;
        for joint in &self.joints {
            let child_idx = link_index(&joint.child)?;
            if body_of_link[child_idx].is_some() {
                return Err(err(format!(
                    "link `{}` has more than one joint (tree required)",
                    joint.child
                )));
            }
            let parent = if joint.parent == "world" {
                if self.floating_base {
                    return Err(err(format!(
                        "joints[{}]: world-attached joints only allowed on fixed-base models",
                        joint.name
                    )));
                }
                None
            } else {
                let pidx = link_index(&joint.parent)?;
                Some(body_of_link[pidx].ok_or_else(|| {
                    err(format!(
                        "joints[{}]: parent `{}` not yet in tree (order joints parent-first)",
                        joint.name, joint.parent
                    ))
                })?)
            };
            let axis = Vector3::from_column_slice(&joint.axis);
            if (axis.norm() - 1.0).abs() > 1e-9 {
                return Err(err(format!("joints[{}].axis must be unit length", joint.name)));
            }
            if self.planar && matches!(joint.kind, JointKind::Revolute) && axis.x.abs() + axis.z.abs() > 1e-12 {
                return Err(err(format!(
                    "joints[{}]: planar models require revolute axes along y",
                    joint.name
                )));
            }
            let jm = match joint.kind {
                JointKind::Revolute => JointModel::Revolute(axis),
                JointKind::Prismatic => JointModel::Prismatic(axis),
            };
            let subspace = jm.subspace();
            let [r, p, y] = joint.origin_rpy;
            bodies.push(Body {
                name: joint.child.clone(),
                parent,
                joint: jm,
                origin: Pose::new(rotation_rpy(r, p, y), Vector3::from_column_slice(&joint.origin_xyz)),
                inertia: inertia_of(&self.links[child_idx]),
                coord_start: next_coord,
                subspace,
            });
            body_of_link[child_idx] = Some(bodies.len() - 1);
            next_coord += 1;
        }

        for (i, placed) in body_of_link.iter().enumerate() {
            if placed.is_none() {
                return Err(err(format!(
                    "link `{}` is not connected to the tree",
                    self.links[i].name
                )));
            }
        }

        let mut feet = Vec::new();
        for foot in &self.feet {
            let link = link_index(&foot.link)?;
            let body = body_of_link[link].unwrap();
            feet.push(Foot {
                name: foot.name.clone(),
                body,
                offset: Vector3::from_column_slice(&foot.offset),
            });
        }

        let mut actuated = Vec::new();
        for name in &self.actuated_joints {
            let joint_pos = self
                .joints
                .iter()
                .position(|j| &j.name == name)
                .ok_or_else(|| err(format!("actuated_joints: unknown joint `{name}`")))?;
            actuated.push(base_dof + joint_pos);
        }

        let n_act = actuated.len();
        if self.pd_hold.kp.len() != n_act || self.pd_hold.kd.len() != n_act {
            return Err(err(format!(
                "pd_hold.kp/kd must have one entry per actuated joint ({n_act})"
            )));
        }
        if !self.default_joint_positions.is_empty()
            && self.default_joint_positions.len() != self.joints.len()
        {
            return Err(err("default_joint_positions length must match joints".into()));
        }
        let expected_base_pose = base_dof;
        if !self.default_base_pose.is_empty() && self.default_base_pose.len() != expected_base_pose
        {
            return Err(err(format!(
                "default_base_pose must have {expected_base_pose} entries"
            )));
        }

        let mut default_joint_positions = self.default_joint_positions.clone();
        if default_joint_positions.is_empty() {
            default_joint_positions = vec![0.0; self.joints.len()];
        }
        let mut default_base_pose = self.default_base_pose.clone();
        if default_base_pose.is_empty() {
            default_base_pose = vec![0.0; expected_base_pose];
        }

        Ok(RigidBodyModel {
            name: self.name.clone(),
            planar: self.planar,
            floating_base: self.floating_base,
            gravity: Vector3::from_column_slice(&self.gravity),
            bodies,
            feet,
            actuated,
            pd_hold: self.pd_hold.clone(),
            default_joint_positions,
            default_base_pose,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SINGLE_BODY_PLANAR: &str = r#"{
        "name": "single-planar",
        "planar": true,
        "base_link": "body",
        "links": [{"name": "body", "mass": 3.0, "inertia": 0.4}],
        "actuated_joints": [],
        "pd_hold": {"kp": [], "kd": []},
        "default_base_pose": [0.0, 0.0, 1.0]
    }"#;

    #[test]
    fn parses_single_body() {
        let model = RigidBodyModel::from_json(SINGLE_BODY_PLANAR).unwrap();
        assert_eq!(model.nv(), 3);
        assert_eq!(model.num_joints(), 0);
        assert_eq!(model.force_dim(), 2);
        assert_eq!(model.default_q()[2], 1.0);
    }

    #[test]
    fn rejects_nonpositive_mass() {
        let text = SINGLE_BODY_PLANAR.replace("\"mass\": 3.0", "\"mass\": -1.0");
        let e = RigidBodyModel::from_json(&text).unwrap_err();
        assert!(e.to_string().contains("mass"));
    }

    #[test]
    fn rejects_planar_off_axis_joint() {
        let text = r#"{
            "name": "bad",
            "planar": true,
            "base_link": "body",
            "links": [
                {"name": "body", "mass": 3.0, "inertia": 0.4},
                {"name": "arm", "mass": 1.0, "inertia": 0.1}
            ],
            "joints": [{"name": "j", "type": "revolute", "axis": [1,0,0],
                        "parent": "body", "child": "arm"}],
            "actuated_joints": ["j"],
            "pd_hold": {"kp": [10.0], "kd": [1.0]}
        }"#;
        let e = RigidBodyModel::from_json(text).unwrap_err();
        assert!(e.to_string().contains("axes along y"));
    }

    #[test]
    fn rejects_unknown_actuated_joint() {
        let text = SINGLE_BODY_PLANAR.replace("\"actuated_joints\": []", "\"actuated_joints\": [\"nope\"]");
        let e = RigidBodyModel::from_json(&text).unwrap_err();
        assert!(e.to_string().contains("unknown joint"));
    }
}
