//! Minimal 6D spatial-vector algebra for kinematic trees.
//!
//! Motion and force vectors use (angular, linear) component ordering. A `Pose`
//! is the frame of a child expressed in its parent: `x_parent = rot * x_child + pos`.

use nalgebra::{Matrix3, Vector3};

use crate::math::skew;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rot: Matrix3<f64>,
    pub pos: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rot: Matrix3::identity(),
            pos: Vector3::zeros(),
        }
    }

    pub fn new(rot: Matrix3<f64>, pos: Vector3<f64>) -> Self {
        Pose { rot, pos }
    }

    /// Compose: `self` then `other` (other expressed in self's frame).
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rot: self.rot * other.rot,
            pos: self.rot * other.pos + self.pos,
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rot * p + self.pos
    }
}

/// Spatial motion vector (twist): angular then linear.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Motion {
    pub ang: Vector3<f64>,
    pub lin: Vector3<f64>,
}

impl Motion {
    pub fn zero() -> Self {
        Motion {
            ang: Vector3::zeros(),
            lin: Vector3::zeros(),
        }
    }

    pub fn new(ang: Vector3<f64>, lin: Vector3<f64>) -> Self {
        Motion { ang, lin }
    }

    pub fn scale(&self, s: f64) -> Motion {
        Motion {
            ang: self.ang * s,
            lin: self.lin * s,
        }
    }

    pub fn add(&self, other: &Motion) -> Motion {
        Motion {
            ang: self.ang + other.ang,
            lin: self.lin + other.lin,
        }
    }

    /// Motion-on-motion cross product `self ×ᴹ m`.
    pub fn cross_motion(&self, m: &Motion) -> Motion {
        Motion {
            ang: self.ang.cross(&m.ang),
            lin: self.ang.cross(&m.lin) + self.lin.cross(&m.ang),
        }
    }

    /// Motion-on-force cross product `self ×ᶠ f`.
    pub fn cross_force(&self, f: &Force) -> Force {
        Force {
            ang: self.ang.cross(&f.ang) + self.lin.cross(&f.lin),
            lin: self.ang.cross(&f.lin),
        }
    }
}

/// Spatial force vector (wrench): torque then force.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Force {
    pub ang: Vector3<f64>,
    pub lin: Vector3<f64>,
}

impl Force {
    pub fn zero() -> Self {
        Force {
            ang: Vector3::zeros(),
            lin: Vector3::zeros(),
        }
    }

    pub fn add(&self, other: &Force) -> Force {
        Force {
            ang: self.ang + other.ang,
            lin: self.lin + other.lin,
        }
    }

    pub fn sub(&self, other: &Force) -> Force {
        Force {
            ang: self.ang - other.ang,
            lin: self.lin - other.lin,
        }
    }

    /// Power pairing with a motion vector.
    pub fn dot(&self, m: &Motion) -> f64 {
        self.ang.dot(&m.ang) + self.lin.dot(&m.lin)
    }
}

/// Express a motion given in child coordinates in the parent frame.
pub fn transform_motion(x: &Pose, m: &Motion) -> Motion {
    let ang = x.rot * m.ang;
    Motion {
        ang,
        lin: x.rot * m.lin + x.pos.cross(&ang),
    }
}

/// Express a motion given in parent coordinates in the child frame.
pub fn inv_transform_motion(x: &Pose, m: &Motion) -> Motion {
    let rt = x.rot.transpose();
    Motion {
        ang: rt * m.ang,
        lin: rt * (m.lin - x.pos.cross(&m.ang)),
    }
}

/// Express a force given in child coordinates in the parent frame.
pub fn transform_force(x: &Pose, f: &Force) -> Force {
    let lin = x.rot * f.lin;
    Force {
        ang: x.rot * f.ang + x.pos.cross(&lin),
        lin,
    }
}

/// Express a force given in parent coordinates in the child frame.
pub fn inv_transform_force(x: &Pose, f: &Force) -> Force {
    let rt = x.rot.transpose();
    Force {
        ang: rt * (f.ang - x.pos.cross(&f.lin)),
        lin: rt * f.lin,
    }
}

/// Rigid-body inertia stored canonically as mass, COM offset, and rotational
/// inertia about the COM, all in the body frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialInertia {
    pub mass: f64,
    pub com: Vector3<f64>,
    pub i_com: Matrix3<f64>,
}

impl SpatialInertia {
    pub fn zero() -> Self {
        SpatialInertia {
            mass: 0.0,
            com: Vector3::zeros(),
            i_com: Matrix3::zeros(),
        }
    }

    /// Momentum-like product: h = I v, about the body origin.
    pub fn apply(&self, m: &Motion) -> Force {
        let lin = self.mass * (m.lin + m.ang.cross(&self.com));
        Force {
            ang: self.i_com * m.ang + self.com.cross(&lin),
            lin,
        }
    }

    /// Express this inertia in the parent frame through pose `x`.
    pub fn transform(&self, x: &Pose) -> SpatialInertia {
        SpatialInertia {
            mass: self.mass,
            com: x.transform_point(&self.com),
            i_com: x.rot * self.i_com * x.rot.transpose(),
        }
    }

    /// Combine with another inertia expressed in the same frame.
    pub fn add(&self, other: &SpatialInertia) -> SpatialInertia {
        let mass = self.mass + other.mass;
        if mass == 0.0 {
            return SpatialInertia::zero();
        }
        let com = (self.com * self.mass + other.com * other.mass) / mass;
        let shift = |inertia: &SpatialInertia| {
            let d = inertia.com - com;
            inertia.i_com + inertia.mass * (d.dot(&d) * Matrix3::identity() - d * d.transpose())
        };
        SpatialInertia {
            mass,
            com,
            i_com: shift(self) + shift(other),
        }
    }

    /// Dense 6x6 form in (angular, linear) block ordering.
    pub fn to_matrix(&self) -> nalgebra::Matrix6<f64> {
        let mut out = nalgebra::Matrix6::zeros();
        let cx = skew(&self.com);
        let i_origin = self.i_com - self.mass * cx * cx;
        out.fixed_view_mut::<3, 3>(0, 0).copy_from(&i_origin);
        out.fixed_view_mut::<3, 3>(0, 3).copy_from(&(self.mass * cx));
        out.fixed_view_mut::<3, 3>(3, 0)
            .copy_from(&(-self.mass * cx));
        out.fixed_view_mut::<3, 3>(3, 3)
            .copy_from(&(self.mass * Matrix3::identity()));
        out
    }
}
