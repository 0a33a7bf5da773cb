//! Abstract continuous-time controlled systems with rollout, discretization,
//! and linearization services.
//!
//! Systems are immutable after construction and safe to share across threads.
//! Hidden states (contact anchors) are threaded through rollouts explicitly and
//! held frozen within a single integration step.

pub mod linearize;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use linearize::{linearize, LinearizeError, LinearizedDynamics};

#[derive(Debug, Error)]
pub enum StepError {
    #[error("non-finite derivative in coordinate {coordinate}")]
    NonFinite { coordinate: usize },
    #[error("pitch {pitch:.6} rad within gimbal-lock guard of ±pi/2")]
    GimbalLock { pitch: f64 },
    #[error(transparent)]
    RigidBody(#[from] crate::rigid_body::dynamics::DynamicsError),
}

#[derive(Debug, Error)]
#[error("rollout failed at step {time_index}: {source}")]
pub struct RolloutError {
    pub time_index: usize,
    #[source]
    pub source: StepError,
}

/// Continuous-time controlled system `xdot = f(x, u)` with optional hidden
/// state carried alongside (not part of the differentiated state vector).
pub trait ControlledSystem: Sync {
    type Hidden: Clone + Default + Send + Sync;

    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;

    fn derivative(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        hidden: &Self::Hidden,
    ) -> Result<DVector<f64>, StepError>;

    /// Hidden state consistent with an initial state.
    fn init_hidden(&self, _x: &DVector<f64>) -> Self::Hidden {
        Self::Hidden::default()
    }

    /// Advance the hidden state after a completed integration step.
    fn advance_hidden(&self, hidden: &Self::Hidden, _x_next: &DVector<f64>) -> Self::Hidden {
        hidden.clone()
    }

    /// Continuous-time Jacobians (A, B) at a point. The default uses central
    /// finite differences of `derivative` with the hidden state frozen.
    fn linearize_continuous(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        hidden: &Self::Hidden,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>), StepError> {
        let n = self.state_dim();
        let m = self.input_dim();
        let mut a = DMatrix::zeros(n, n);
        let mut b = DMatrix::zeros(n, m);
        for i in 0..n {
            let h = fd_step(x[i]);
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let col = (self.derivative(&xp, u, hidden)? - self.derivative(&xm, u, hidden)?)
                / (2.0 * h);
            a.column_mut(i).copy_from(&col);
        }
        for j in 0..m {
            let h = fd_step(u[j]);
            let mut up = u.clone();
            up[j] += h;
            let mut um = u.clone();
            um[j] -= h;
            let col = (self.derivative(x, &up, hidden)? - self.derivative(x, &um, hidden)?)
                / (2.0 * h);
            b.column_mut(j).copy_from(&col);
        }
        Ok((a, b))
    }
}

/// Central-difference step size balancing truncation and roundoff.
pub(crate) fn fd_step(value: f64) -> f64 {
    (1e-6 * value.abs()).max(1e-6)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntegratorMethod {
    ExplicitEuler,
    Rk4,
}

/// Integration scheme and step size used for rollouts and discretization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorChoice {
    pub method: IntegratorMethod,
    pub dt: f64,
}

impl IntegratorChoice {
    pub fn rk4(dt: f64) -> Self {
        IntegratorChoice {
            method: IntegratorMethod::Rk4,
            dt,
        }
    }

    pub fn euler(dt: f64) -> Self {
        IntegratorChoice {
            method: IntegratorMethod::ExplicitEuler,
            dt,
        }
    }
}

/// Integrate one step with the hidden state frozen, then advance the hidden
/// state from the new configuration.
pub fn step<S: ControlledSystem>(
    system: &S,
    x: &DVector<f64>,
    u: &DVector<f64>,
    hidden: &S::Hidden,
    integrator: &IntegratorChoice,
) -> Result<(DVector<f64>, S::Hidden), StepError> {
    let dt = integrator.dt;
    let x_next = match integrator.method {
        IntegratorMethod::ExplicitEuler => {
            let k1 = system.derivative(x, u, hidden)?;
            x + dt * k1
        }
        IntegratorMethod::Rk4 => {
            let k1 = system.derivative(x, u, hidden)?;
            let k2 = system.derivative(&(x + (0.5 * dt) * &k1), u, hidden)?;
            let k3 = system.derivative(&(x + (0.5 * dt) * &k2), u, hidden)?;
            let k4 = system.derivative(&(x + dt * &k3), u, hidden)?;
            x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        }
    };
    if let Some(coordinate) = x_next.iter().position(|v| !v.is_finite()) {
        return Err(StepError::NonFinite { coordinate });
    }
    let hidden_next = system.advance_hidden(hidden, &x_next);
    Ok((x_next, hidden_next))
}

/// State/input trajectory with hidden contact states recorded per step.
#[derive(Debug, Clone)]
pub struct Trajectory<H> {
    pub dt: f64,
    /// N + 1 states.
    pub states: Vec<DVector<f64>>,
    /// N inputs.
    pub inputs: Vec<DVector<f64>>,
    /// N + 1 hidden states.
    pub hidden: Vec<H>,
}

impl<H> Trajectory<H> {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory has at least one state")
    }
}

/// Feedback policy evaluated during rollouts. Closures implement it directly,
/// which lets the line search try candidate step sizes without copying gains.
pub trait Policy {
    fn control(&self, t: usize, x: &DVector<f64>) -> DVector<f64>;
}

impl<F> Policy for F
where
    F: Fn(usize, &DVector<f64>) -> DVector<f64>,
{
    fn control(&self, t: usize, x: &DVector<f64>) -> DVector<f64> {
        self(t, x)
    }
}

impl Policy for AffinePolicy {
    fn control(&self, t: usize, x: &DVector<f64>) -> DVector<f64> {
        AffinePolicy::control(self, t, x)
    }
}

/// Time-varying affine feedback policy
/// `u(x, t) = u_ff(t) + K(t) (x - x_ref(t))`.
///
/// The SLQ line-search update folds `alpha * l(t)` into `u_ff`.
#[derive(Debug, Clone)]
pub struct AffinePolicy {
    pub x_ref: Vec<DVector<f64>>,
    pub u_ff: Vec<DVector<f64>>,
    pub gains: Vec<DMatrix<f64>>,
}

impl AffinePolicy {
    /// Constant feedback around a fixed reference, zero feedforward.
    pub fn hold(x_ref: DVector<f64>, gain: DMatrix<f64>, n_steps: usize) -> Self {
        let m = gain.nrows();
        AffinePolicy {
            x_ref: vec![x_ref; n_steps],
            u_ff: vec![DVector::zeros(m); n_steps],
            gains: vec![gain; n_steps],
        }
    }

    /// Open-loop input sequence (zero gains).
    pub fn open_loop(u_ff: Vec<DVector<f64>>, state_dim: usize) -> Self {
        let n = u_ff.len();
        let m = u_ff.first().map_or(0, |u| u.len());
        AffinePolicy {
            x_ref: vec![DVector::zeros(state_dim); n],
            u_ff,
            gains: vec![DMatrix::zeros(m, state_dim); n],
        }
    }

    pub fn control(&self, t: usize, x: &DVector<f64>) -> DVector<f64> {
        &self.u_ff[t] + &self.gains[t] * (x - &self.x_ref[t])
    }

    pub fn len(&self) -> usize {
        self.u_ff.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u_ff.is_empty()
    }
}

/// Forward-simulate the system under a policy, recording hidden states.
pub fn rollout<S: ControlledSystem, P: Policy + ?Sized>(
    system: &S,
    policy: &P,
    x0: DVector<f64>,
    n_steps: usize,
    integrator: &IntegratorChoice,
) -> Result<Trajectory<S::Hidden>, RolloutError> {
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut inputs = Vec::with_capacity(n_steps);
    let mut hidden = Vec::with_capacity(n_steps + 1);

    let mut x = x0;
    let mut h = system.init_hidden(&x);
    states.push(x.clone());
    hidden.push(h.clone());

    for t in 0..n_steps {
        let u = policy.control(t, &x);
        let (x_next, h_next) = step(system, &x, &u, &h, integrator)
            .map_err(|source| RolloutError {
                time_index: t,
                source,
            })?;
        inputs.push(u);
        states.push(x_next.clone());
        hidden.push(h_next.clone());
        x = x_next;
        h = h_next;
    }

    Ok(Trajectory {
        dt: integrator.dt,
        states,
        inputs,
        hidden,
    })
}

/// Linear time-invariant test system `xdot = A x + B u` with exact Jacobians.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl ControlledSystem for LinearSystem {
    type Hidden = ();

    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    fn derivative(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        _hidden: &(),
    ) -> Result<DVector<f64>, StepError> {
        Ok(&self.a * x + &self.b * u)
    }

    fn linearize_continuous(
        &self,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
        _hidden: &(),
    ) -> Result<(DMatrix<f64>, DMatrix<f64>), StepError> {
        Ok((self.a.clone(), self.b.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    /// Frozen test system: f = 0.
    struct FrozenSystem {
        n: usize,
    }

    impl ControlledSystem for FrozenSystem {
        type Hidden = ();
        fn state_dim(&self) -> usize {
            self.n
        }
        fn input_dim(&self) -> usize {
            1
        }
        fn derivative(
            &self,
            _x: &DVector<f64>,
            _u: &DVector<f64>,
            _h: &(),
        ) -> Result<DVector<f64>, StepError> {
            Ok(DVector::zeros(self.n))
        }
    }

    /// Matrix exponential by scaling and squaring with a Taylor series.
    pub(crate) fn matrix_exponential(a: &DMatrix<f64>) -> DMatrix<f64> {
        let n = a.nrows();
        let norm = a.amax();
        let scaling = (norm.log2().ceil().max(0.0) as i32 + 4) as u32;
        let scaled = a / 2f64.powi(scaling as i32);
        let mut result = DMatrix::identity(n, n);
        let mut term = DMatrix::identity(n, n);
        for k in 1..30 {
            term = &term * &scaled / (k as f64);
            result += &term;
            if term.amax() < 1e-18 {
                break;
            }
        }
        for _ in 0..scaling {
            result = &result * &result;
        }
        result
    }

    #[test]
    fn frozen_system_state_unchanged() {
        let sys = FrozenSystem { n: 4 };
        let x0 = DVector::from_vec(vec![1.0, -2.0, 3.0, 0.5]);
        let policy = AffinePolicy::open_loop(vec![DVector::zeros(1); 100], 4);
        let traj = rollout(&sys, &policy, x0.clone(), 100, &IntegratorChoice::rk4(0.01)).unwrap();
        assert_eq!(traj.final_state(), &x0);
        for s in &traj.states {
            assert_eq!(s, &x0);
        }
    }

    #[test]
    fn rk4_matches_matrix_exponential() {
        let mut rng = StdRng::seed_from_u64(5);
        let n = 4;
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let sys = LinearSystem {
            a: a.clone(),
            b: DMatrix::zeros(n, 1),
        };
        let x0 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let policy = AffinePolicy::open_loop(vec![DVector::zeros(1); 1000], n);
        let traj = rollout(&sys, &policy, x0.clone(), 1000, &IntegratorChoice::rk4(0.001)).unwrap();
        let expected = matrix_exponential(&a) * &x0;
        let got = traj.final_state();
        let rel = (got - &expected).norm() / expected.norm();
        assert!(rel < 1e-6, "relative error {rel}");
    }

    #[test]
    fn stable_scalar_closed_loop_norm_decreases() {
        // xdot = x + u with u = -2x gives xdot = -x.
        let sys = LinearSystem {
            a: DMatrix::from_element(1, 1, 1.0),
            b: DMatrix::from_element(1, 1, 1.0),
        };
        let policy = AffinePolicy::hold(
            DVector::zeros(1),
            DMatrix::from_element(1, 1, -2.0),
            500,
        );
        let traj = rollout(
            &sys,
            &policy,
            DVector::from_vec(vec![3.0]),
            500,
            &IntegratorChoice::rk4(0.01),
        )
        .unwrap();
        for w in traj.states.windows(2) {
            assert!(w[1].norm() < w[0].norm());
        }
        assert_abs_diff_eq!(
            traj.final_state()[0],
            3.0 * (-5.0f64).exp(),
            epsilon = 1e-6
        );
    }

    #[test]
    fn step_is_deterministic() {
        let sys = LinearSystem {
            a: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -0.3]),
            b: DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        };
        let x = DVector::from_vec(vec![0.7, -0.4]);
        let u = DVector::from_vec(vec![0.25]);
        let integ = IntegratorChoice::rk4(0.004);
        let (x1, _) = step(&sys, &x, &u, &(), &integ).unwrap();
        let (x2, _) = step(&sys, &x, &u, &(), &integ).unwrap();
        assert_eq!(x1, x2);
    }

    #[test]
    fn nonfinite_derivative_is_reported() {
        struct BlowUp;
        impl ControlledSystem for BlowUp {
            type Hidden = ();
            fn state_dim(&self) -> usize {
                1
            }
            fn input_dim(&self) -> usize {
                1
            }
            fn derivative(
                &self,
                x: &DVector<f64>,
                _u: &DVector<f64>,
                _h: &(),
            ) -> Result<DVector<f64>, StepError> {
                Ok(DVector::from_vec(vec![x[0] * 1e200]))
            }
        }
        let policy = AffinePolicy::open_loop(vec![DVector::zeros(1); 10], 1);
        let err = rollout(
            &BlowUp,
            &policy,
            DVector::from_vec(vec![1e200]),
            10,
            &IntegratorChoice::rk4(1.0),
        )
        .unwrap_err();
        assert_eq!(err.time_index, 0);
    }

    #[test]
    fn rollout_with_zero_alpha_reproduces_nominal_bit_for_bit() {
        // Control u = u_n + 0*l + K (x - x_n) from x_n(0) retraces the nominal.
        let sys = LinearSystem {
            a: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.5, -0.2]),
            b: DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        };
        let n = 200;
        let mut rng = StdRng::seed_from_u64(9);
        let u_n: Vec<_> = (0..n)
            .map(|_| DVector::from_vec(vec![rng.gen_range(-1.0..1.0)]))
            .collect();
        let integ = IntegratorChoice::rk4(0.01);
        let x0 = DVector::from_vec(vec![1.0, 0.0]);
        let nominal = rollout(
            &sys,
            &AffinePolicy::open_loop(u_n.clone(), 2),
            x0.clone(),
            n,
            &integ,
        )
        .unwrap();

        let policy = AffinePolicy {
            x_ref: nominal.states[..n].to_vec(),
            u_ff: u_n,
            gains: vec![DMatrix::from_row_slice(1, 2, &[-3.0, -1.0]); n],
        };
        let replay = rollout(&sys, &policy, x0, n, &integ).unwrap();
        for (a, b) in nominal.states.iter().zip(replay.states.iter()) {
            assert_eq!(a, b);
        }
    }
}
