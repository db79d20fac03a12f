//! Hypercube under-approximation of a predicate's zero level-set.
//!
//! For a concave predicate `h` reading coordinates of several teams, each
//! team `l` gets an infinity-norm predicate `r_l - ||B_l (z_l - c_l)||_inf`.
//! The centers and radii maximize `sum r_l` subject to `h >= 0` at every
//! combination of cube vertices; concavity then gives `h >= 0` on the
//! whole product of cubes.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::solver::{self, AffineFn, ConvexProgram, Diagnostics, QuadraticFn, SolveStatus, SolverConfig};
use crate::stl::{PredicateFamily, PredicateFunction, RobustnessError, StatePredicate};
use crate::team::{footprint_selection, AgentId, FootprintSplit, PartitionError, TeamPartition};

/// Radii at or below this are reported as degenerate.
pub const DEGENERATE_RADIUS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecompositionError {
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error("radius {0} is negative")]
    NegativeRadius(f64),
    #[error("predicate is not concave on the domain (negated quadratic)")]
    NonConcave,
    #[error("domain has {found} coordinates, expected {expected}")]
    DomainShape { expected: usize, found: usize },
    #[error("domain coordinate {0} has an empty or unbounded range")]
    DomainRange(usize),
    #[error("zero level-set is empty within the domain (best slack {max_slack:e})")]
    Infeasible { max_slack: f64 },
    #[error("solver did not converge: {0}")]
    NonConvergence(String),
    #[error("grid oracle is limited to {limit} variables, problem has {vars}")]
    DimensionGuard { vars: usize, limit: usize },
}

/// Infinity-norm predicate `r - max_{eta in J} |z(eta) - c(eta)|` over a
/// team state `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypercubePredicate {
    #[serde(with = "crate::index_serde")]
    pub team: usize,
    pub center: Vec<f64>,
    pub radius: f64,
    /// Team-local coordinate indices `J`.
    #[serde(with = "crate::index_serde::vec")]
    pub coords: Vec<usize>,
    /// Index of the global conjunct this cube was derived from.
    #[serde(with = "crate::index_serde")]
    pub source: usize,
}

impl HypercubePredicate {
    pub fn new(
        team: usize,
        center: Vec<f64>,
        radius: f64,
        coords: Vec<usize>,
        source: usize,
    ) -> Result<Self, DecompositionError> {
        if radius < 0.0 || radius.is_nan() {
            return Err(DecompositionError::NegativeRadius(radius));
        }
        Ok(Self {
            team,
            center,
            radius,
            coords,
            source,
        })
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        let dev = self
            .coords
            .iter()
            .map(|&k| (z[k] - self.center[k]).abs())
            .fold(0.0, f64::max);
        self.radius - dev
    }

    /// Per-coordinate interval `[c - r, c + r]` for each `eta in J`.
    pub fn bounds(&self) -> Vec<(usize, f64, f64)> {
        self.coords
            .iter()
            .map(|&k| (k, self.center[k] - self.radius, self.center[k] + self.radius))
            .collect()
    }

    pub fn vertices(&self) -> Vec<Vec<f64>> {
        vertex_set(&self.center, self.radius, &self.coords).expect("radius is non-negative")
    }

    /// Same cube with the radius reduced by `margin`.
    pub fn shrunk(&self, margin: f64) -> Result<Self, DecompositionError> {
        Self::new(
            self.team,
            self.center.clone(),
            self.radius - margin,
            self.coords.clone(),
            self.source,
        )
    }
}

impl StatePredicate for HypercubePredicate {
    fn eval_state(&self, name: &str, state: &[f64]) -> Result<f64, RobustnessError> {
        let needed = self.coords.iter().copied().max().unwrap_or(0);
        if state.len() != self.center.len() || needed >= state.len() {
            return Err(RobustnessError::DimensionMismatch {
                name: name.to_string(),
                needed,
                found: state.len(),
            });
        }
        Ok(self.value(state))
    }
}

/// All `2^|J|` corners of the cube, in lexicographic sign order (the first
/// coordinate of `J` varies slowest, `-` before `+`). Coordinates outside
/// `J` are copied from `center`.
pub fn vertex_set(center: &[f64], radius: f64, coords: &[usize]) -> Result<Vec<Vec<f64>>, DecompositionError> {
    if radius < 0.0 || radius.is_nan() {
        return Err(DecompositionError::NegativeRadius(radius));
    }
    let d = coords.len();
    Ok((0..1usize << d)
        .map(|k| {
            let mut v = center.to_vec();
            for (j, &eta) in coords.iter().enumerate() {
                let plus = (k >> (d - 1 - j)) & 1 == 1;
                v[eta] = if plus {
                    center[eta] + radius
                } else {
                    center[eta] - radius
                };
            }
            v
        })
        .collect())
}

/// Per-coordinate bounds of the global state space.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Domain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, DecompositionError> {
        if lower.len() != upper.len() {
            return Err(DecompositionError::DomainShape {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        for (k, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(DecompositionError::DomainRange(k));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The largest axis-aligned box inside each agent's Euclidean state ball
    /// `||x_k||_2 <= radius(k)`: half-width `radius / sqrt(dim)` per
    /// coordinate.
    pub fn inscribed_in_balls(p: &TeamPartition, radius: impl Fn(AgentId) -> f64) -> Result<Self, DecompositionError> {
        let mut lower = Vec::with_capacity(p.dim());
        let mut upper = Vec::with_capacity(p.dim());
        for a in p.agents() {
            let half = radius(a.id) / (a.dim as f64).sqrt();
            lower.extend(std::iter::repeat_n(-half, a.dim));
            upper.extend(std::iter::repeat_n(half, a.dim));
        }
        Self::new(lower, upper)
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }
}

/// Decision variables belonging to one team.
#[derive(Debug, Clone, PartialEq)]
pub struct TeamBlock {
    pub team: usize,
    /// Team-local indices `J`, ascending.
    pub coords: Vec<usize>,
    /// Position of each `J` coordinate inside the predicate argument.
    pub positions: Vec<usize>,
    /// Variable index of each center coordinate in `J`.
    pub center_vars: Vec<usize>,
    pub radius_var: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Full team center with non-`J` coordinates at the domain midpoint.
    pub default_center: Vec<f64>,
}

impl TeamBlock {
    pub fn max_radius(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l) / 2.0)
            .fold(f64::INFINITY, f64::min)
    }
}

/// The vertex-constrained radius maximization for one global conjunct.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionProblem {
    pub source: usize,
    pub predicate: PredicateFunction,
    pub split: FootprintSplit,
    pub blocks: Vec<TeamBlock>,
    num_vars: usize,
}

/// One stacked footprint coordinate.
#[derive(Debug, Clone, Copy)]
struct Slot {
    center_var: usize,
    radius_var: usize,
    position: usize,
}

impl DecompositionProblem {
    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    /// `d_i`, the number of footprint coordinates.
    pub fn footprint_dim(&self) -> usize {
        self.split.dim()
    }

    /// Number of vertex constraints, `2^{d_i}`.
    pub fn vertex_constraint_count(&self) -> usize {
        1usize << self.footprint_dim()
    }

    fn slots(&self) -> Vec<Slot> {
        let mut out = Vec::new();
        for block in &self.blocks {
            for (j, &cv) in block.center_vars.iter().enumerate() {
                out.push(Slot {
                    center_var: cv,
                    radius_var: block.radius_var,
                    position: block.positions[j],
                });
            }
        }
        out
    }

    /// Predicate argument at vertex combination `k` (bits in lexicographic
    /// sign order over the stacked coordinates).
    pub fn vertex_point(&self, x: &[f64], k: usize) -> Vec<f64> {
        let slots = self.slots();
        let d = slots.len();
        let mut y = vec![0.0; d];
        for (j, s) in slots.iter().enumerate() {
            let sign = if (k >> (d - 1 - j)) & 1 == 1 { 1.0 } else { -1.0 };
            y[s.position] = x[s.center_var] + sign * x[s.radius_var];
        }
        y
    }

    /// Minimum of `h` over all vertex combinations at decision vector `x`.
    pub fn min_vertex_value(&self, x: &[f64]) -> f64 {
        let slots = self.slots();
        let d = slots.len();
        let mut y = vec![0.0; d];
        let mut min = f64::INFINITY;
        for k in 0..1usize << d {
            for (j, s) in slots.iter().enumerate() {
                let sign = if (k >> (d - 1 - j)) & 1 == 1 { 1.0 } else { -1.0 };
                y[s.position] = x[s.center_var] + sign * x[s.radius_var];
            }
            min = min.min(self.predicate.value(&y));
        }
        min
    }

    /// Affine map `y = M x` for vertex combination `k`.
    fn vertex_map(&self, k: usize) -> DMatrix<f64> {
        let slots = self.slots();
        let d = slots.len();
        let mut m = DMatrix::zeros(d, self.num_vars);
        for (j, s) in slots.iter().enumerate() {
            let sign = if (k >> (d - 1 - j)) & 1 == 1 { 1.0 } else { -1.0 };
            m[(s.position, s.center_var)] = 1.0;
            m[(s.position, s.radius_var)] = sign;
        }
        m
    }

    fn variable_bounds(&self) -> (DVector<f64>, DVector<f64>) {
        let mut lower = DVector::zeros(self.num_vars);
        let mut upper = DVector::zeros(self.num_vars);
        for b in &self.blocks {
            for (j, &v) in b.center_vars.iter().enumerate() {
                lower[v] = b.lower[j];
                upper[v] = b.upper[j];
            }
            lower[b.radius_var] = 0.0;
            upper[b.radius_var] = b.max_radius();
        }
        (lower, upper)
    }

    pub fn objective_vector(&self) -> DVector<f64> {
        let mut c = DVector::zeros(self.num_vars);
        for b in &self.blocks {
            c[b.radius_var] = 1.0;
        }
        c
    }

    /// Whether every cube stays inside the domain (up to `tol`).
    pub fn within_domain(&self, x: &[f64], tol: f64) -> bool {
        self.blocks.iter().all(|b| {
            let r = x[b.radius_var];
            r >= -tol
                && b.center_vars
                    .iter()
                    .enumerate()
                    .all(|(j, &v)| x[v] - r >= b.lower[j] - tol && x[v] + r <= b.upper[j] + tol)
        })
    }

    /// The convex program: vertex constraints in lexicographic order,
    /// followed by the domain containment constraints.
    pub fn to_program(&self) -> ConvexProgram {
        let (lower, upper) = self.variable_bounds();
        let mut prog = ConvexProgram::new(self.objective_vector(), lower, upper).expect("blocks have non-empty ranges");
        for k in 0..self.vertex_constraint_count() {
            let m = self.vertex_map(k);
            match self.predicate.family() {
                PredicateFamily::ConcaveQuadratic { offset, center, weight } => {
                    let shift = DVector::zeros(center.len());
                    prog.push_constraint(QuadraticFn::new(*offset, center.clone(), weight.clone(), m, shift));
                }
                PredicateFamily::Affine { gradient, offset } => {
                    prog.push_constraint(AffineFn {
                        gradient: m.transpose() * gradient,
                        offset: *offset,
                    });
                }
            }
        }
        for b in &self.blocks {
            for (j, &v) in b.center_vars.iter().enumerate() {
                // c - r - lower >= 0
                let mut g = DVector::zeros(self.num_vars);
                g[v] = 1.0;
                g[b.radius_var] = -1.0;
                prog.push_constraint(AffineFn {
                    gradient: g,
                    offset: -b.lower[j],
                });
                // upper - c - r >= 0
                let mut g = DVector::zeros(self.num_vars);
                g[v] = -1.0;
                g[b.radius_var] = -1.0;
                prog.push_constraint(AffineFn {
                    gradient: g,
                    offset: b.upper[j],
                });
            }
        }
        prog
    }

    /// Cubes described by decision vector `x`.
    pub fn cubes(&self, x: &[f64]) -> Vec<HypercubePredicate> {
        self.blocks
            .iter()
            .map(|b| {
                let mut center = b.default_center.clone();
                for (j, &eta) in b.coords.iter().enumerate() {
                    center[eta] = x[b.center_vars[j]];
                }
                HypercubePredicate {
                    team: b.team,
                    center,
                    radius: x[b.radius_var].max(0.0),
                    coords: b.coords.clone(),
                    source: self.source,
                }
            })
            .collect()
    }
}

/// The function to decompose: `h` itself, or `-h` for a negated literal.
pub fn effective_predicate(pred: &PredicateFunction, negated: bool) -> Result<PredicateFunction, DecompositionError> {
    if negated {
        pred.negated().ok_or(DecompositionError::NonConcave)
    } else {
        Ok(pred.clone())
    }
}

/// Builds the decomposition program for global conjunct `source`.
pub fn assemble_program(
    source: usize,
    pred: &PredicateFunction,
    p: &TeamPartition,
    domain: &Domain,
) -> Result<DecompositionProblem, DecompositionError> {
    if domain.dim() != p.dim() {
        return Err(DecompositionError::DomainShape {
            expected: p.dim(),
            found: domain.dim(),
        });
    }
    let split = footprint_selection(pred, p)?;
    let mut blocks = Vec::with_capacity(split.parts.len());
    let mut next_var = 0;
    for part in &split.parts {
        let e = p.selection_for_team(part.team)?;
        let team_lower = e.apply(domain.lower());
        let team_upper = e.apply(domain.upper());
        let default_center = team_lower.iter().zip(&team_upper).map(|(l, u)| 0.5 * (l + u)).collect();
        let d = part.dim();
        let center_vars: Vec<usize> = (next_var..next_var + d).collect();
        let radius_var = next_var + d;
        next_var += d + 1;
        blocks.push(TeamBlock {
            team: part.team,
            coords: part.local_indices.clone(),
            positions: part.positions.clone(),
            center_vars,
            radius_var,
            lower: part.local_indices.iter().map(|&k| team_lower[k]).collect(),
            upper: part.local_indices.iter().map(|&k| team_upper[k]).collect(),
            default_center,
        });
    }
    Ok(DecompositionProblem {
        source,
        predicate: pred.clone(),
        split,
        blocks,
        num_vars: next_var,
    })
}

/// Decomposition of one global conjunct into per-team cubes.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionResult {
    pub source: usize,
    pub cubes: Vec<HypercubePredicate>,
    pub objective: f64,
    pub status: SolveStatus,
    /// Some radius is (numerically) zero.
    pub degenerate: bool,
    pub diagnostics: Diagnostics,
}

impl DecompositionResult {
    pub fn cube_for_team(&self, team: usize) -> Option<&HypercubePredicate> {
        self.cubes.iter().find(|c| c.team == team)
    }

    pub fn teams(&self) -> Vec<usize> {
        self.cubes.iter().map(|c| c.team).collect()
    }
}

/// Solves the decomposition program with the barrier solver.
pub fn solve_decomposition(
    prob: &DecompositionProblem,
    cfg: &SolverConfig,
) -> Result<DecompositionResult, DecompositionError> {
    let program = prob.to_program();
    let sol = solver::solve(&program, cfg);
    let mut diagnostics = sol.diagnostics;
    let x: Vec<f64> = match sol.status {
        SolveStatus::Optimal => sol.point.iter().copied().collect(),
        SolveStatus::Infeasible => {
            let slack = diagnostics.phase_one_slack;
            if slack < -cfg.feasibility_tol {
                return Err(DecompositionError::Infeasible { max_slack: slack });
            }
            // Touching level set: collapse the cubes onto their centers.
            // Shrinking radii keeps vertex feasibility by concavity.
            let mut x: Vec<f64> = sol.point.iter().copied().collect();
            for b in &prob.blocks {
                x[b.radius_var] = 0.0;
            }
            diagnostics.message = Some("degenerate optimum: zero radius".into());
            x
        }
        SolveStatus::IterationLimit => {
            return Err(DecompositionError::NonConvergence(
                diagnostics.message.unwrap_or_default(),
            ))
        }
    };
    let min_h = prob.min_vertex_value(&x);
    if min_h < -cfg.feasibility_tol {
        return Err(DecompositionError::Infeasible { max_slack: min_h });
    }
    diagnostics.max_violation = (-min_h).max(0.0);
    let cubes = prob.cubes(&x);
    let degenerate = cubes.iter().any(|c| c.radius <= DEGENERATE_RADIUS);
    if degenerate {
        log::warn!(
            "conjunct {}: degenerate decomposition (radius <= {DEGENERATE_RADIUS:e})",
            prob.source
        );
    }
    Ok(DecompositionResult {
        source: prob.source,
        objective: cubes.iter().map(|c| c.radius).sum(),
        cubes,
        status: SolveStatus::Optimal,
        degenerate,
        diagnostics,
    })
}
