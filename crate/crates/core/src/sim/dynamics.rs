use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::stl::{sample_count, Trajectory};
use crate::team::AgentId;

/// Relative slack on the input bound check.
const INPUT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("agent {id}: dynamics matrix is {rows}x{cols}, state dimension is {dim}")]
    Shape {
        id: AgentId,
        dim: usize,
        rows: usize,
        cols: usize,
    },
    #[error("agent {id}: bounds must be positive and finite")]
    Bounds { id: AgentId },
    #[error("agent {id}: initial state has norm {norm}, outside the state bound {bound}")]
    InitialState { id: AgentId, norm: f64, bound: f64 },
    #[error("agent {id}: non-finite parameter")]
    NotFinite { id: AgentId },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("input {index} has norm {norm}, above the bound {bound}")]
    InputBound { index: usize, norm: f64, bound: f64 },
    #[error("input {index} has dimension {found}, expected {expected}")]
    InputShape {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("{needed} input samples needed for the horizon, got {found}")]
    TooFewInputs { needed: usize, found: usize },
}

/// `dx/dt = A x + u` with `||x||_2 <= state_bound`, `||u||_2 <= input_bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearAgent {
    id: AgentId,
    a: DMatrix<f64>,
    state_bound: f64,
    input_bound: f64,
    initial_state: DVector<f64>,
}

impl LinearAgent {
    /// `initial_state` defaults to the origin.
    pub fn new(
        id: AgentId,
        a: DMatrix<f64>,
        state_bound: f64,
        input_bound: f64,
        initial_state: Option<Vec<f64>>,
    ) -> Result<Self, AgentError> {
        let dim = a.nrows();
        if a.ncols() != dim || dim == 0 {
            return Err(AgentError::Shape {
                id,
                dim,
                rows: a.nrows(),
                cols: a.ncols(),
            });
        }
        if !(state_bound > 0.0 && state_bound.is_finite() && input_bound > 0.0 && input_bound.is_finite()) {
            return Err(AgentError::Bounds { id });
        }
        let x0 = DVector::from_vec(initial_state.unwrap_or_else(|| vec![0.0; dim]));
        if x0.len() != dim {
            return Err(AgentError::Shape {
                id,
                dim: x0.len(),
                rows: a.nrows(),
                cols: a.ncols(),
            });
        }
        if a.iter().chain(x0.iter()).any(|v| !v.is_finite()) {
            return Err(AgentError::NotFinite { id });
        }
        if x0.norm() > state_bound {
            return Err(AgentError::InitialState {
                id,
                norm: x0.norm(),
                bound: state_bound,
            });
        }
        Ok(Self {
            id,
            a,
            state_bound,
            input_bound,
            initial_state: x0,
        })
    }

    pub fn id(&self) -> AgentId {
        self.id
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn dynamics(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn state_bound(&self) -> f64 {
        self.state_bound
    }

    pub fn input_bound(&self) -> f64 {
        self.input_bound
    }

    pub fn initial_state(&self) -> &DVector<f64> {
        &self.initial_state
    }

    /// One forward-Euler step.
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>, dt: f64) -> DVector<f64> {
        x + (&self.a * x + u) * dt
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub trajectory: Trajectory,
    /// Sample indices where `||x|| > state_bound`.
    pub state_violations: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StateViolation {
    pub agent: AgentId,
    pub time: f64,
    pub norm: f64,
}

/// Forward-Euler rollout `x_{k+1} = x_k + dt (A x_k + u_k)` from the
/// agent's initial state over `[0, horizon]`.
pub fn simulate_dynamics(agent: &LinearAgent, inputs: &[Vec<f64>], horizon: f64, dt: f64) -> Result<Rollout, SimError> {
    let n = sample_count(horizon, dt);
    if inputs.len() < n - 1 {
        return Err(SimError::TooFewInputs {
            needed: n - 1,
            found: inputs.len(),
        });
    }
    let dim = agent.dim();
    let mut x = agent.initial_state.clone();
    let mut samples = Vec::with_capacity(n);
    let mut state_violations = Vec::new();
    for (k, u) in inputs.iter().take(n - 1).enumerate() {
        if x.norm() > agent.state_bound {
            state_violations.push(k);
        }
        samples.push(x.iter().copied().collect::<Vec<f64>>());
        if u.len() != dim {
            return Err(SimError::InputShape {
                index: k,
                expected: dim,
                found: u.len(),
            });
        }
        let u = DVector::from_column_slice(u);
        let norm = u.norm();
        if norm > agent.input_bound * (1.0 + INPUT_TOL) {
            return Err(SimError::InputBound {
                index: k,
                norm,
                bound: agent.input_bound,
            });
        }
        x = agent.step(&x, &u, dt);
    }
    if x.norm() > agent.state_bound {
        state_violations.push(n - 1);
    }
    samples.push(x.iter().copied().collect());
    let trajectory = Trajectory::new(dt, 0.0, samples).expect("non-empty rollout on a valid grid");
    Ok(Rollout {
        trajectory,
        state_violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agent(a: DMatrix<f64>, x0: Vec<f64>) -> LinearAgent {
        LinearAgent::new(AgentId(1), a, 10.0, 5.0, Some(x0)).unwrap()
    }

    #[test]
    fn single_decay_step() {
        let ag = agent(-DMatrix::identity(2, 2), vec![1.0, 0.0]);
        let r = simulate_dynamics(&ag, &[vec![0.0, 0.0]], 0.1, 0.1).unwrap();
        assert_eq!(r.trajectory.len(), 2);
        let x1 = r.trajectory.sample(1);
        assert!((x1[0] - 0.9).abs() < 1e-15 && x1[1] == 0.0);
    }

    #[test]
    fn five_agent_dynamics_are_stable() {
        let a = DMatrix::from_row_slice(2, 2, &[-0.5, 0.0, 1.0, -1.0]);
        let eig = a.complex_eigenvalues();
        assert!(eig.iter().all(|l| l.re < 0.0));
        let ag = agent(a, vec![0.8, -0.3]);
        let zeros = vec![vec![0.0, 0.0]; 200];
        let r = simulate_dynamics(&ag, &zeros, 20.0, 0.1).unwrap();
        let last = r.trajectory.sample(r.trajectory.len() - 1);
        assert!(last[0].hypot(last[1]) < 0.1);
    }

    #[test]
    fn euler_error_shrinks_with_step() {
        // x' = -x + 1 from 0: x(T) = 1 - e^-T.
        let ag = agent(-DMatrix::identity(1, 1), vec![0.0]);
        let exact = 1.0 - (-2.0f64).exp();
        let end = |dt: f64| {
            let n = sample_count(2.0, dt);
            let r = simulate_dynamics(&ag, &vec![vec![1.0]; n - 1], 2.0, dt).unwrap();
            r.trajectory.sample(n - 1)[0]
        };
        let coarse = (end(0.1) - exact).abs();
        let fine = (end(0.01) - exact).abs();
        // First order: ten times smaller step, about ten times smaller error.
        assert!(fine < coarse / 5.0 && fine > coarse / 20.0, "{coarse} {fine}");
    }

    #[test]
    fn input_bound_enforced() {
        let ag = agent(DMatrix::zeros(1, 1), vec![0.0]);
        assert!(matches!(
            simulate_dynamics(&ag, &[vec![6.0]], 0.1, 0.1),
            Err(SimError::InputBound { index: 0, .. })
        ));
    }

    #[test]
    fn state_violations_flagged() {
        let ag = LinearAgent::new(AgentId(1), DMatrix::zeros(1, 1), 0.5, 5.0, None).unwrap();
        let r = simulate_dynamics(&ag, &[vec![4.0], vec![4.0]], 0.2, 0.1).unwrap();
        assert_eq!(r.state_violations, vec![2]);
        assert!((r.trajectory.sample(1)[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_agents() {
        assert!(LinearAgent::new(AgentId(1), DMatrix::zeros(2, 1), 1.0, 1.0, None).is_err());
        assert!(LinearAgent::new(AgentId(1), DMatrix::zeros(1, 1), 0.0, 1.0, None).is_err());
        assert!(matches!(
            LinearAgent::new(AgentId(1), DMatrix::zeros(1, 1), 1.0, 1.0, Some(vec![2.0])),
            Err(AgentError::InitialState { .. })
        ));
    }
}
