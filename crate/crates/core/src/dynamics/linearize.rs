//! Discrete-time linearization of a system along a trajectory.
//!
//! Continuous Jacobians come from `ControlledSystem::linearize_continuous`
//! (hybrid analytic/numeric for the legged system) and are discretized
//! consistently with the rollout integrator: first-order for explicit Euler,
//! the RK4 variational step otherwise. Hidden states stay frozen at each
//! step's value. Timesteps are independent and may be evaluated in parallel.

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use super::{ControlledSystem, IntegratorChoice, IntegratorMethod, StepError, Trajectory};

#[derive(Debug, Error)]
pub enum LinearizeError {
    #[error("non-finite Jacobian entry at step {time_index}, row {row}, col {col}")]
    NonFinite {
        time_index: usize,
        row: usize,
        col: usize,
    },
    #[error("linearization failed at step {time_index}: {source}")]
    Step {
        time_index: usize,
        #[source]
        source: StepError,
    },
}

/// Discrete-time Jacobians of the integration step map, one pair per step.
#[derive(Debug, Clone)]
pub struct LinearizedDynamics {
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
}

impl LinearizedDynamics {
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }
}

/// Linearize along a trajectory; `parallel` evaluates timesteps concurrently
/// with results identical to the sequential path.
pub fn linearize<S: ControlledSystem>(
    system: &S,
    trajectory: &Trajectory<S::Hidden>,
    integrator: &IntegratorChoice,
    parallel: bool,
) -> Result<LinearizedDynamics, LinearizeError> {
    let n = trajectory.len();
    let one = |t: usize| -> Result<(DMatrix<f64>, DMatrix<f64>), LinearizeError> {
        let (a, b) = linearize_step(
            system,
            &trajectory.states[t],
            &trajectory.inputs[t],
            &trajectory.hidden[t],
            integrator,
        )
        .map_err(|source| LinearizeError::Step {
            time_index: t,
            source,
        })?;
        check_finite(&a, t)?;
        check_finite(&b, t)?;
        Ok((a, b))
    };

    let pairs: Result<Vec<_>, LinearizeError> = if parallel {
        (0..n).into_par_iter().map(one).collect()
    } else {
        (0..n).map(one).collect()
    };
    let (a, b) = pairs?.into_iter().unzip();
    Ok(LinearizedDynamics { a, b })
}

fn check_finite(m: &DMatrix<f64>, time_index: usize) -> Result<(), LinearizeError> {
    for col in 0..m.ncols() {
        for row in 0..m.nrows() {
            if !m[(row, col)].is_finite() {
                return Err(LinearizeError::NonFinite {
                    time_index,
                    row,
                    col,
                });
            }
        }
    }
    Ok(())
}

/// Discrete Jacobians of one integration step.
pub fn linearize_step<S: ControlledSystem>(
    system: &S,
    x: &nalgebra::DVector<f64>,
    u: &nalgebra::DVector<f64>,
    hidden: &S::Hidden,
    integrator: &IntegratorChoice,
) -> Result<(DMatrix<f64>, DMatrix<f64>), StepError> {
    let n = system.state_dim();
    let dt = integrator.dt;
    match integrator.method {
        IntegratorMethod::ExplicitEuler => {
            let (ac, bc) = system.linearize_continuous(x, u, hidden)?;
            Ok((DMatrix::identity(n, n) + ac * dt, bc * dt))
        }
        IntegratorMethod::Rk4 => {
            // Variational RK4: propagate the step-map Jacobian through the four
            // stages, evaluating the continuous Jacobians at each stage point.
            let k1 = system.derivative(x, u, hidden)?;
            let x2 = x + (0.5 * dt) * &k1;
            let k2 = system.derivative(&x2, u, hidden)?;
            let x3 = x + (0.5 * dt) * &k2;
            let k3 = system.derivative(&x3, u, hidden)?;
            let x4 = x + dt * &k3;

            let (a1, b1) = system.linearize_continuous(x, u, hidden)?;
            let (a2, b2) = system.linearize_continuous(&x2, u, hidden)?;
            let (a3, b3) = system.linearize_continuous(&x3, u, hidden)?;
            let (a4, b4) = system.linearize_continuous(&x4, u, hidden)?;

            let eye = DMatrix::identity(n, n);
            let d1 = a1;
            let d2 = &a2 * (&eye + (0.5 * dt) * &d1);
            let d3 = &a3 * (&eye + (0.5 * dt) * &d2);
            let d4 = &a4 * (&eye + dt * &d3);
            let a_d = &eye + (dt / 6.0) * (&d1 + 2.0 * &d2 + 2.0 * &d3 + &d4);

            let e1 = b1;
            let e2 = &a2 * ((0.5 * dt) * &e1) + b2;
            let e3 = &a3 * ((0.5 * dt) * &e2) + b3;
            let e4 = &a4 * (dt * &e3) + b4;
            let b_d = (dt / 6.0) * (e1 + 2.0 * e2 + 2.0 * e3 + e4);

            Ok((a_d, b_d))
        }
    }
}

/// Central finite difference of the full integration step map; the independent
/// oracle used to validate hybrid linearization.
pub fn finite_difference_step_jacobians<S: ControlledSystem>(
    system: &S,
    x: &nalgebra::DVector<f64>,
    u: &nalgebra::DVector<f64>,
    hidden: &S::Hidden,
    integrator: &IntegratorChoice,
) -> Result<(DMatrix<f64>, DMatrix<f64>), StepError> {
    let n = system.state_dim();
    let m = system.input_dim();
    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, m);
    let step_no_hidden = |x: &nalgebra::DVector<f64>, u: &nalgebra::DVector<f64>| {
        super::step(system, x, u, hidden, integrator).map(|(xn, _)| xn)
    };
    for i in 0..n {
        let h = super::fd_step(x[i]);
        let mut xp = x.clone();
        xp[i] += h;
        let mut xm = x.clone();
        xm[i] -= h;
        let col = (step_no_hidden(&xp, u)? - step_no_hidden(&xm, u)?) / (2.0 * h);
        a.column_mut(i).copy_from(&col);
    }
    for j in 0..m {
        let h = super::fd_step(u[j]);
        let mut up = u.clone();
        up[j] += h;
        let mut um = u.clone();
        um[j] -= h;
        let col = (step_no_hidden(x, &up)? - step_no_hidden(x, &um)?) / (2.0 * h);
        b.column_mut(j).copy_from(&col);
    }
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{rollout, AffinePolicy, LinearSystem};
    use nalgebra::{DMatrix, DVector};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_lti(n: usize, m: usize, seed: u64) -> LinearSystem {
        let mut rng = StdRng::seed_from_u64(seed);
        LinearSystem {
            a: DMatrix::from_fn(n, n, |_, _| rng.gen_range(-2.0..2.0)),
            b: DMatrix::from_fn(n, m, |_, _| rng.gen_range(-1.0..1.0)),
        }
    }

    #[test]
    fn linear_system_linearization_is_exact_every_step() {
        let sys = random_lti(3, 2, 1);
        let integ = IntegratorChoice::rk4(0.01);
        let policy = AffinePolicy::open_loop(
            (0..50).map(|_| DVector::from_vec(vec![0.3, -0.2])).collect(),
            3,
        );
        let traj = rollout(&sys, &policy, DVector::from_vec(vec![1.0, 0.0, -1.0]), 50, &integ)
            .unwrap();
        let lin = linearize(&sys, &traj, &integ, false).unwrap();
        // For an LTI system the variational RK4 matrices are the exact step-map
        // Jacobians; every timestep must agree with the finite-difference map.
        let (a_fd, b_fd) =
            finite_difference_step_jacobians(&sys, &traj.states[0], &traj.inputs[0], &(), &integ)
                .unwrap();
        for t in 0..lin.len() {
            assert!((&lin.a[t] - &lin.a[0]).amax() < 1e-10);
            assert!((&lin.b[t] - &lin.b[0]).amax() < 1e-10);
        }
        assert!((&lin.a[0] - &a_fd).amax() < 1e-8);
        assert!((&lin.b[0] - &b_fd).amax() < 1e-8);
    }

    #[test]
    fn euler_discretization_is_first_order_exact() {
        let sys = random_lti(3, 1, 2);
        let integ = IntegratorChoice::euler(0.02);
        let policy = AffinePolicy::open_loop(vec![DVector::from_vec(vec![0.1]); 5], 3);
        let traj = rollout(&sys, &policy, DVector::from_vec(vec![0.5, 0.1, -0.3]), 5, &integ)
            .unwrap();
        let lin = linearize(&sys, &traj, &integ, false).unwrap();
        let expect_a = DMatrix::identity(3, 3) + &sys.a * 0.02;
        let expect_b = &sys.b * 0.02;
        assert!((&lin.a[0] - expect_a).amax() < 1e-14);
        assert!((&lin.b[0] - expect_b).amax() < 1e-14);
    }

    #[test]
    fn parallel_matches_sequential() {
        let sys = random_lti(4, 2, 3);
        let integ = IntegratorChoice::rk4(0.005);
        let policy = AffinePolicy::open_loop(
            (0..100).map(|_| DVector::from_vec(vec![0.5, -0.1])).collect(),
            4,
        );
        let traj = rollout(&sys, &policy, DVector::zeros(4), 100, &integ).unwrap();
        let seq = linearize(&sys, &traj, &integ, false).unwrap();
        let par = linearize(&sys, &traj, &integ, true).unwrap();
        for t in 0..seq.len() {
            assert_eq!(seq.a[t], par.a[t]);
            assert_eq!(seq.b[t], par.b[t]);
        }
    }
}
