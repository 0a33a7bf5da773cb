//! Quadratic cost with final, intermediate, input, and Gaussian-windowed
//! waypoint terms; exact evaluation and quadratization.
//!
//! `J = xbar(t_f)' H xbar(t_f) + sum_t [xbar' Q xbar + ubar' R ubar + W(x, t)] dt`
//! where deviations are taken from the desired trajectories and the waypoint
//! window is `sqrt(rho/2pi) * exp(-rho/2 (t - t_p)^2)`. Running terms are
//! scaled by dt so the sum approximates the continuous integral; the final
//! term is not scaled. Quadratic slices carry the 1/2-convention of the
//! solver's backward pass, so the expansion reproduces `evaluate` exactly.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::dynamics::Trajectory;
use crate::math::wrap_angle;

#[derive(Debug, Error)]
pub enum CostError {
    #[error("cost dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

/// Gaussian-windowed waypoint penalty centered at `t_center`.
#[derive(Debug, Clone)]
pub struct WaypointTerm {
    /// Center time [s].
    pub t_center: f64,
    /// Temporal concentration rho [1/s^2]; larger is narrower.
    pub concentration: f64,
    /// State weight (n x n, PSD).
    pub weight: DMatrix<f64>,
    /// Waypoint target state; deviations are measured against this, not the
    /// global desired trajectory.
    pub target: DVector<f64>,
}

impl WaypointTerm {
    /// Window value `sqrt(rho/2pi) exp(-rho/2 (t-t_p)^2)`, truncated to zero
    /// beyond six standard deviations.
    pub fn window(&self, t: f64) -> f64 {
        let rho = self.concentration;
        let dt = t - self.t_center;
        if dt * dt * rho > 36.0 {
            return 0.0;
        }
        (rho / (2.0 * std::f64::consts::PI)).sqrt() * (-0.5 * rho * dt * dt).exp()
    }
}

/// Piecewise-constant desired trajectory: the value at `t` is the entry of the
/// latest breakpoint not after `t`.
#[derive(Debug, Clone)]
pub enum DesiredTrajectory {
    Constant(DVector<f64>),
    Piecewise(Vec<(f64, DVector<f64>)>),
}

impl DesiredTrajectory {
    pub fn at(&self, t: f64) -> &DVector<f64> {
        match self {
            DesiredTrajectory::Constant(v) => v,
            DesiredTrajectory::Piecewise(pieces) => {
                let mut current = &pieces[0].1;
                for (start, v) in pieces {
                    if *start <= t {
                        current = v;
                    } else {
                        break;
                    }
                }
                current
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DesiredTrajectory::Constant(v) => v.len(),
            DesiredTrajectory::Piecewise(pieces) => pieces[0].1.len(),
        }
    }
}

/// Full cost specification.
#[derive(Debug, Clone)]
pub struct CostSpec {
    /// Final-state weight (n x n, PSD).
    pub final_weight: DMatrix<f64>,
    /// Intermediate state weight (n x n, PSD).
    pub state_weight: DMatrix<f64>,
    /// Input weight (m x m, PD).
    pub input_weight: DMatrix<f64>,
    pub x_desired: DesiredTrajectory,
    pub u_desired: DesiredTrajectory,
    pub waypoints: Vec<WaypointTerm>,
    /// State indices holding angles; deviations on these wrap to (-pi, pi].
    pub angle_indices: Vec<usize>,
}

impl CostSpec {
    /// Pure regulation cost around fixed targets, no waypoints.
    pub fn regulation(
        final_weight: DMatrix<f64>,
        state_weight: DMatrix<f64>,
        input_weight: DMatrix<f64>,
        x_des: DVector<f64>,
        u_des: DVector<f64>,
    ) -> Self {
        CostSpec {
            final_weight,
            state_weight,
            input_weight,
            x_desired: DesiredTrajectory::Constant(x_des),
            u_desired: DesiredTrajectory::Constant(u_des),
            waypoints: Vec::new(),
            angle_indices: Vec::new(),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_weight.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.input_weight.nrows()
    }

    pub fn validate(&self, n: usize, m: usize) -> Result<(), CostError> {
        let dims = [
            ("H", self.final_weight.nrows(), n),
            ("Q", self.state_weight.nrows(), n),
            ("R", self.input_weight.nrows(), m),
            ("x_des", self.x_desired.dim(), n),
            ("u_des", self.u_desired.dim(), m),
        ];
        for (what, got, expected) in dims {
            if got != expected {
                return Err(CostError::Dimension {
                    what,
                    expected,
                    got,
                });
            }
        }
        for wp in &self.waypoints {
            if wp.weight.nrows() != n || wp.target.len() != n {
                return Err(CostError::Dimension {
                    what: "waypoint",
                    expected: n,
                    got: wp.weight.nrows(),
                });
            }
        }
        Ok(())
    }

    /// Deviation with angle coordinates wrapped to (-pi, pi].
    fn deviation(&self, x: &DVector<f64>, target: &DVector<f64>) -> DVector<f64> {
        let mut d = x - target;
        for &i in &self.angle_indices {
            d[i] = wrap_angle(d[i]);
        }
        d
    }

    /// Exact cost of a trajectory.
    pub fn evaluate<H>(&self, trajectory: &Trajectory<H>) -> f64 {
        let dt = trajectory.dt;
        let n_steps = trajectory.len();
        let mut total = 0.0;
        for t in 0..n_steps {
            let time = t as f64 * dt;
            let x = &trajectory.states[t];
            let u = &trajectory.inputs[t];
            let xbar = self.deviation(x, self.x_desired.at(time));
            let ubar = u - self.u_desired.at(time);
            let mut running = xbar.dot(&(&self.state_weight * &xbar))
                + ubar.dot(&(&self.input_weight * &ubar));
            for wp in &self.waypoints {
                let w = wp.window(time);
                if w > 0.0 {
                    let xhat = self.deviation(x, &wp.target);
                    running += w * xhat.dot(&(&wp.weight * &xhat));
                }
            }
            total += running * dt;
        }
        let t_f = n_steps as f64 * dt;
        let xbar_f = self.deviation(trajectory.final_state(), self.x_desired.at(t_f));
        total + xbar_f.dot(&(&self.final_weight * &xbar_f))
    }

    /// Quadratic expansion of the running cost at one step, pre-scaled by dt,
    /// in the backward pass's 1/2-convention:
    /// `l(dx, du) = q + q_vec' dx + r_vec' du + 1/2 dx' Q dx + 1/2 du' R du`.
    pub fn quadratize_step(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        t: f64,
        dt: f64,
    ) -> QuadraticCostSlice {
        let xbar = self.deviation(x, self.x_desired.at(t));
        let ubar = u - self.u_desired.at(t);
        let mut q_mat = 2.0 * &self.state_weight;
        let mut q_vec = 2.0 * (&self.state_weight * &xbar);
        let mut scalar =
            xbar.dot(&(&self.state_weight * &xbar)) + ubar.dot(&(&self.input_weight * &ubar));
        for wp in &self.waypoints {
            let w = wp.window(t);
            if w > 0.0 {
                let xhat = self.deviation(x, &wp.target);
                q_mat += (2.0 * w) * &wp.weight;
                q_vec += (2.0 * w) * (&wp.weight * &xhat);
                scalar += w * xhat.dot(&(&wp.weight * &xhat));
            }
        }
        QuadraticCostSlice {
            scalar: scalar * dt,
            state_gradient: q_vec * dt,
            state_hessian: q_mat * dt,
            input_gradient: (2.0 * (&self.input_weight * &ubar)) * dt,
            input_hessian: (2.0 * &self.input_weight) * dt,
        }
    }

    /// Quadratic expansion of the final cost (not scaled by dt).
    pub fn quadratize_final(&self, x: &DVector<f64>, t_f: f64) -> FinalCostSlice {
        let xbar = self.deviation(x, self.x_desired.at(t_f));
        FinalCostSlice {
            scalar: xbar.dot(&(&self.final_weight * &xbar)),
            gradient: 2.0 * (&self.final_weight * &xbar),
            hessian: 2.0 * &self.final_weight,
        }
    }

    /// Quadratize the whole trajectory.
    pub fn quadratize<H>(&self, trajectory: &Trajectory<H>) -> QuadratizedCost {
        let dt = trajectory.dt;
        let steps = (0..trajectory.len())
            .map(|t| {
                self.quadratize_step(
                    &trajectory.states[t],
                    &trajectory.inputs[t],
                    t as f64 * dt,
                    dt,
                )
            })
            .collect();
        let final_slice =
            self.quadratize_final(trajectory.final_state(), trajectory.len() as f64 * dt);
        QuadratizedCost {
            steps,
            final_slice,
        }
    }
}

/// Per-step quadratic model of the running cost.
#[derive(Debug, Clone)]
pub struct QuadraticCostSlice {
    pub scalar: f64,
    pub state_gradient: DVector<f64>,
    pub state_hessian: DMatrix<f64>,
    pub input_gradient: DVector<f64>,
    pub input_hessian: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct FinalCostSlice {
    pub scalar: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct QuadratizedCost {
    pub steps: Vec<QuadraticCostSlice>,
    pub final_slice: FinalCostSlice,
}
