//! Brute-force search over gridded centers and radii.
//!
//! Every center coordinate and every radius except the last team's is
//! placed on a uniform grid. For each grid point the last radius is the
//! largest value keeping all vertex combinations inside the level set,
//! found by bisection (the feasible radii form an interval starting at 0).
//! Feasibility is checked by evaluating the predicate directly at the cube
//! corners, independently of the constraint objects the solver uses.
//!
//! With `refinements > 0` the search repeats on a finer grid centered on
//! the best point found so far.

use rayon::prelude::*;

use crate::hypercube::{DecompositionError, DecompositionProblem, DecompositionResult};
use crate::solver::{Diagnostics, SolveStatus};

/// Largest decision-vector size the oracle accepts.
pub const MAX_ORACLE_VARS: usize = 6;

const BISECTION_STEPS: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    /// Grid points per axis; odd so that the midpoint is included.
    pub resolution: usize,
    pub refinements: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            resolution: 7,
            refinements: 30,
        }
    }
}

impl OracleConfig {
    /// A single exhaustive pass with no refinement.
    pub fn exhaustive(resolution: usize) -> Self {
        Self {
            resolution,
            refinements: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub result: DecompositionResult,
    /// Largest grid spacing of the first (full-range) pass.
    pub grid_step: f64,
    /// Largest grid spacing of the last pass.
    pub final_step: f64,
    pub evaluated: usize,
}

/// One gridded axis: a decision variable and its current search range.
#[derive(Debug, Clone, Copy)]
struct Axis {
    var: usize,
    lo: f64,
    hi: f64,
}

impl Axis {
    fn point(&self, k: usize, n: usize) -> f64 {
        if n == 1 {
            0.5 * (self.lo + self.hi)
        } else {
            self.lo + (self.hi - self.lo) * k as f64 / (n - 1) as f64
        }
    }

    fn step(&self, n: usize) -> f64 {
        if n <= 1 {
            self.hi - self.lo
        } else {
            (self.hi - self.lo) / (n - 1) as f64
        }
    }
}

struct Search<'a> {
    prob: &'a DecompositionProblem,
    axes: Vec<Axis>,
    last_radius: usize,
    last_centers: Vec<(usize, f64, f64)>,
    radius_vars: Vec<usize>,
    /// `(center var, radius var, predicate argument position)` per stacked
    /// footprint coordinate.
    slots: Vec<(usize, usize, usize)>,
}

impl Search<'_> {
    fn feasible(&self, x: &[f64], y: &mut [f64]) -> bool {
        if !self.prob.within_domain(x, 0.0) {
            return false;
        }
        let d = self.slots.len();
        (0..1usize << d).all(|k| {
            for (j, &(c, r, pos)) in self.slots.iter().enumerate() {
                let sign = if (k >> (d - 1 - j)) & 1 == 1 { 1.0 } else { -1.0 };
                y[pos] = x[c] + sign * x[r];
            }
            self.prob.predicate.value(y) >= 0.0
        })
    }

    /// Largest radius the last block's cube can take at the current centers.
    fn radius_cap(&self, x: &[f64]) -> f64 {
        self.last_centers
            .iter()
            .map(|&(v, lo, hi)| (x[v] - lo).min(hi - x[v]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Evaluates grid point `index` (mixed radix over the axes); returns the
    /// completed decision vector and its objective when feasible.
    fn evaluate(&self, index: usize, n: usize, best: f64) -> Option<(f64, Vec<f64>)> {
        let mut x = vec![0.0; self.prob.num_vars()];
        let mut rest = index;
        for axis in self.axes.iter().rev() {
            x[axis.var] = axis.point(rest % n, n);
            rest /= n;
        }
        let partial: f64 = self
            .radius_vars
            .iter()
            .filter(|&&v| v != self.last_radius)
            .map(|&v| x[v])
            .sum();
        let cap = self.radius_cap(&x);
        if cap < 0.0 || partial + cap <= best {
            return None;
        }
        let mut y = vec![0.0; self.slots.len()];
        x[self.last_radius] = 0.0;
        if !self.feasible(&x, &mut y) {
            return None;
        }
        x[self.last_radius] = cap;
        if !self.feasible(&x, &mut y) {
            let (mut lo, mut hi) = (0.0, cap);
            for _ in 0..BISECTION_STEPS {
                let mid = 0.5 * (lo + hi);
                x[self.last_radius] = mid;
                if self.feasible(&x, &mut y) {
                    lo = mid;
                } else {
                    hi = mid;
                    if partial + hi <= best {
                        return None;
                    }
                }
            }
            x[self.last_radius] = lo;
        }
        let objective = partial + x[self.last_radius];
        (objective > best).then_some((objective, x))
    }

    fn pass(&self, n: usize, best: f64) -> Option<(f64, Vec<f64>)> {
        let total = n.pow(self.axes.len() as u32);
        (0..total)
            .into_par_iter()
            .filter_map(|k| self.evaluate(k, n, best).map(|(o, x)| (k, o, x)))
            // Highest objective; lowest grid index on ties for determinism.
            .reduce_with(|a, b| if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) { b } else { a })
            .map(|(_, o, x)| (o, x))
    }
}

/// Maximizes the sum of radii by grid search.
pub fn grid_oracle(prob: &DecompositionProblem, cfg: &OracleConfig) -> Result<OracleResult, DecompositionError> {
    let vars = prob.num_vars();
    if vars > MAX_ORACLE_VARS {
        return Err(DecompositionError::DimensionGuard {
            vars,
            limit: MAX_ORACLE_VARS,
        });
    }
    let n = cfg.resolution.max(2);
    let last = prob.blocks.last().expect("problem has at least one team");
    let mut full_axes = Vec::new();
    for b in &prob.blocks {
        for (j, &v) in b.center_vars.iter().enumerate() {
            full_axes.push(Axis {
                var: v,
                lo: b.lower[j],
                hi: b.upper[j],
            });
        }
        if b.radius_var != last.radius_var {
            full_axes.push(Axis {
                var: b.radius_var,
                lo: 0.0,
                hi: b.max_radius(),
            });
        }
    }
    let mut search = Search {
        prob,
        axes: full_axes.clone(),
        last_radius: last.radius_var,
        last_centers: last
            .center_vars
            .iter()
            .enumerate()
            .map(|(j, &v)| (v, last.lower[j], last.upper[j]))
            .collect(),
        radius_vars: prob.blocks.iter().map(|b| b.radius_var).collect(),
        slots: prob
            .blocks
            .iter()
            .flat_map(|b| {
                b.center_vars
                    .iter()
                    .zip(&b.positions)
                    .map(move |(&c, &pos)| (c, b.radius_var, pos))
            })
            .collect(),
    };
    let grid_step = full_axes.iter().map(|a| a.step(n)).fold(0.0, f64::max);
    let mut evaluated = 0;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut final_step = grid_step;
    for level in 0..=cfg.refinements {
        if level > 0 {
            let Some((_, x)) = &best else { break };
            // Zoom: keep the best point's neighbours within 1.5 steps.
            for (axis, full) in search.axes.iter_mut().zip(&full_axes) {
                let half = 1.5 * axis.step(n);
                axis.lo = (x[axis.var] - half).max(full.lo);
                axis.hi = (x[axis.var] + half).min(full.hi);
            }
            final_step = search.axes.iter().map(|a| a.step(n)).fold(0.0, f64::max);
        }
        evaluated += n.pow(search.axes.len() as u32);
        let floor = best.as_ref().map_or(-1.0, |b| b.0);
        if let Some(found) = search.pass(n, floor) {
            best = Some(found);
        }
    }
    let Some((objective, x)) = best else {
        return Err(DecompositionError::Infeasible {
            max_slack: f64::NEG_INFINITY,
        });
    };
    let cubes = prob.cubes(&x);
    let max_violation = (-prob.min_vertex_value(&x)).max(0.0);
    Ok(OracleResult {
        result: DecompositionResult {
            source: prob.source,
            degenerate: cubes.iter().any(|c| c.radius <= crate::hypercube::DEGENERATE_RADIUS),
            cubes,
            objective,
            status: SolveStatus::Optimal,
            diagnostics: Diagnostics {
                max_violation,
                ..Diagnostics::default()
            },
        },
        grid_step,
        final_step,
        evaluated,
    })
}
