//! Small dense maximizer for a linear objective under smooth concave
//! inequality constraints and finite variable bounds.
//!
//! ```text
//! maximize    c^T x
//! subject to  g_j(x) >= 0      (g_j concave)
//!             l <= x <= u
//! ```
//!
//! Solved with a log-barrier interior point method: damped Newton centering
//! with backtracking, barrier weight reduced geometrically, and a slack
//! maximization phase I to find a strictly feasible start.

mod barrier;

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use barrier::{phase_one, solve, PhaseOne};

/// A smooth concave scalar function of the decision vector.
pub trait ConcaveFn: Send + Sync + fmt::Debug {
    fn value(&self, x: &DVector<f64>) -> f64;

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Analytic Hessian, when the family provides one. Constraints without
    /// it get a BFGS approximation inside the solver.
    fn hessian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
}

/// `g(x) = a^T x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineFn {
    pub gradient: DVector<f64>,
    pub offset: f64,
}

impl ConcaveFn for AffineFn {
    fn value(&self, x: &DVector<f64>) -> f64 {
        self.gradient.dot(x) + self.offset
    }

    fn gradient(&self, _x: &DVector<f64>) -> DVector<f64> {
        self.gradient.clone()
    }

    fn hessian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::zeros(x.len(), x.len()))
    }
}

/// `g(x) = offset - (M x + e - center)^T W (M x + e - center)` with `W` PSD:
/// a concave quadratic composed with an affine map.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticFn {
    offset: f64,
    center: DVector<f64>,
    weight: DMatrix<f64>,
    map: DMatrix<f64>,
    shift: DVector<f64>,
    hessian: DMatrix<f64>,
}

impl QuadraticFn {
    pub fn new(
        offset: f64,
        center: DVector<f64>,
        weight: DMatrix<f64>,
        map: DMatrix<f64>,
        shift: DVector<f64>,
    ) -> Self {
        assert_eq!(weight.nrows(), center.len());
        assert_eq!(map.nrows(), center.len());
        assert_eq!(shift.len(), center.len());
        let hessian = -2.0 * map.transpose() * &weight * &map;
        Self {
            offset,
            center,
            weight,
            map,
            shift,
            hessian,
        }
    }

    fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.map * x + &self.shift - &self.center
    }
}

impl ConcaveFn for QuadraticFn {
    fn value(&self, x: &DVector<f64>) -> f64 {
        let e = self.residual(x);
        self.offset - e.dot(&(&self.weight * &e))
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let e = self.residual(x);
        -2.0 * self.map.transpose() * (&self.weight * e)
    }

    fn hessian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.hessian.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProgramError {
    #[error("bounds have length {lower}/{upper}, objective has {vars}")]
    Shape { vars: usize, lower: usize, upper: usize },
    #[error("variable {0} has a non-finite bound")]
    InfiniteBound(usize),
    #[error("variable {index} has empty interior: [{lower}, {upper}]")]
    EmptyBox { index: usize, lower: f64, upper: f64 },
}

#[derive(Debug)]
pub struct ConvexProgram {
    objective: DVector<f64>,
    constraints: Vec<Box<dyn ConcaveFn>>,
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl ConvexProgram {
    pub fn new(objective: DVector<f64>, lower: DVector<f64>, upper: DVector<f64>) -> Result<Self, ProgramError> {
        let vars = objective.len();
        if lower.len() != vars || upper.len() != vars {
            return Err(ProgramError::Shape {
                vars,
                lower: lower.len(),
                upper: upper.len(),
            });
        }
        for i in 0..vars {
            if !lower[i].is_finite() || !upper[i].is_finite() {
                return Err(ProgramError::InfiniteBound(i));
            }
            if lower[i] >= upper[i] {
                return Err(ProgramError::EmptyBox {
                    index: i,
                    lower: lower[i],
                    upper: upper[i],
                });
            }
        }
        Ok(Self {
            objective,
            constraints: Vec::new(),
            lower,
            upper,
        })
    }

    pub fn with_constraint(mut self, g: impl ConcaveFn + 'static) -> Self {
        self.push_constraint(g);
        self
    }

    pub fn push_constraint(&mut self, g: impl ConcaveFn + 'static) {
        self.constraints.push(Box::new(g));
    }

    pub fn push_boxed(&mut self, g: Box<dyn ConcaveFn>) {
        self.constraints.push(g);
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn objective(&self) -> &DVector<f64> {
        &self.objective
    }

    pub fn constraints(&self) -> &[Box<dyn ConcaveFn>] {
        &self.constraints
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    /// Smallest constraint value at `x` (`+inf` without constraints).
    pub fn min_constraint(&self, x: &DVector<f64>) -> f64 {
        self.constraints
            .iter()
            .map(|g| g.value(x))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn in_box(&self, x: &DVector<f64>) -> bool {
        (0..self.num_vars()).all(|i| self.lower[i] <= x[i] && x[i] <= self.upper[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_outer: usize,
    pub max_inner: usize,
    /// Constraint values down to `-feasibility_tol` count as satisfied.
    pub feasibility_tol: f64,
    /// Relative duality-gap target.
    pub optimality_tol: f64,
    /// Starting barrier weight.
    pub barrier_start: f64,
    /// Geometric reduction of the barrier weight per outer iteration.
    pub barrier_factor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_outer: 200,
            max_inner: 50,
            feasibility_tol: 1e-8,
            optimality_tol: 1e-4,
            barrier_start: 1.0,
            barrier_factor: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub outer_iterations: usize,
    pub newton_steps: usize,
    /// `max(0, -min_j g_j(x))` at the returned point.
    pub max_violation: f64,
    /// Lagrangian stationarity residual with barrier multipliers.
    pub kkt_residual: f64,
    pub duality_gap: f64,
    /// Best slack reached by phase I (positive once a strictly feasible
    /// point was found).
    pub phase_one_slack: f64,
    /// Objective at the end of each centering step.
    pub centered_objectives: Vec<f64>,
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub point: DVector<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    pub diagnostics: Diagnostics,
}
