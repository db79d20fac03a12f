use nalgebra::{DMatrix, DVector};

use super::{ConcaveFn, ConvexProgram, Diagnostics, Solution, SolveStatus, SolverConfig};

const NEWTON_TOL: f64 = 1e-10;
const ARMIJO: f64 = 0.25;
const BACKTRACK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 80;

/// `g(x) - s`, with `s` stored as the last variable.
#[derive(Debug)]
struct SlackShifted<'a> {
    inner: &'a dyn ConcaveFn,
}

impl ConcaveFn for SlackShifted<'_> {
    fn value(&self, xs: &DVector<f64>) -> f64 {
        let n = xs.len() - 1;
        self.inner.value(&xs.rows(0, n).into_owned()) - xs[n]
    }

    fn gradient(&self, xs: &DVector<f64>) -> DVector<f64> {
        let n = xs.len() - 1;
        let g = self.inner.gradient(&xs.rows(0, n).into_owned());
        let mut out = DVector::zeros(n + 1);
        out.rows_mut(0, n).copy_from(&g);
        out[n] = -1.0;
        out
    }

    fn hessian(&self, xs: &DVector<f64>) -> Option<DMatrix<f64>> {
        let n = xs.len() - 1;
        let h = self.inner.hessian(&xs.rows(0, n).into_owned())?;
        let mut out = DMatrix::zeros(n + 1, n + 1);
        out.view_mut((0, 0), (n, n)).copy_from(&h);
        Some(out)
    }
}

struct Problem<'a> {
    objective: &'a DVector<f64>,
    constraints: Vec<&'a dyn ConcaveFn>,
    lower: &'a DVector<f64>,
    upper: &'a DVector<f64>,
}

impl Problem<'_> {
    fn barrier_terms(&self) -> usize {
        self.constraints.len() + 2 * self.objective.len()
    }

    /// `-t c^T x - sum log g_j - sum log(x - l) - sum log(u - x)`, or `None`
    /// outside the strict interior.
    fn barrier_value(&self, x: &DVector<f64>, t: f64) -> Option<f64> {
        let mut v = -t * self.objective.dot(x);
        for i in 0..x.len() {
            let (a, b) = (x[i] - self.lower[i], self.upper[i] - x[i]);
            if a <= 0.0 || b <= 0.0 {
                return None;
            }
            v -= a.ln() + b.ln();
        }
        for g in &self.constraints {
            let gv = g.value(x);
            if gv <= 0.0 || !gv.is_finite() {
                return None;
            }
            v -= gv.ln();
        }
        Some(v)
    }
}

/// Per-constraint BFGS estimate of `-hessian(g_j)` for constraints that do
/// not provide second derivatives.
struct CurvatureModel {
    approx: Vec<Option<DMatrix<f64>>>,
}

impl CurvatureModel {
    fn new(m: usize) -> Self {
        Self { approx: vec![None; m] }
    }

    fn neg_hessian(&self, j: usize, g: &dyn ConcaveFn, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        match g.hessian(x) {
            Some(h) => Some(-h),
            None => self.approx[j].clone(),
        }
    }

    fn update(&mut self, j: usize, g: &dyn ConcaveFn, x: &DVector<f64>, x_new: &DVector<f64>) {
        if g.hessian(x).is_some() {
            return;
        }
        let s = x_new - x;
        let y = -(g.gradient(x_new) - g.gradient(x));
        let sy = s.dot(&y);
        if sy <= 1e-12 * s.norm() * y.norm().max(1e-300) || sy <= 0.0 {
            return;
        }
        let b = self.approx[j]
            .take()
            .unwrap_or_else(|| DMatrix::identity(s.len(), s.len()) * (y.dot(&y) / sy));
        let bs = &b * &s;
        let sbs = s.dot(&bs);
        let updated = if sbs > 0.0 {
            &b - (&bs * bs.transpose()) / sbs + (&y * y.transpose()) / sy
        } else {
            b
        };
        self.approx[j] = Some(updated);
    }
}

enum Centering {
    Converged,
    Stopped,
    Breakdown(String),
}

struct Run {
    x: DVector<f64>,
    newton_steps: usize,
    outer: usize,
    last_t: f64,
    centered: Vec<f64>,
    status: SolveStatus,
    message: Option<String>,
    stopped_early: bool,
}

/// One centering step sequence at barrier weight `1/t`.
fn center(
    p: &Problem<'_>,
    x: &mut DVector<f64>,
    t: f64,
    max_inner: usize,
    curvature: &mut CurvatureModel,
    newton_steps: &mut usize,
    stop: &dyn Fn(&DVector<f64>) -> bool,
) -> Centering {
    let n = x.len();
    for _ in 0..max_inner {
        let mut grad = -t * p.objective;
        let mut hess = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            let (a, b) = (x[i] - p.lower[i], p.upper[i] - x[i]);
            grad[i] += -1.0 / a + 1.0 / b;
            hess[(i, i)] += 1.0 / (a * a) + 1.0 / (b * b);
        }
        for (j, g) in p.constraints.iter().enumerate() {
            let gv = g.value(x);
            let dg = g.gradient(x);
            grad -= &dg / gv;
            hess += (&dg * dg.transpose()) / (gv * gv);
            if let Some(nh) = curvature.neg_hessian(j, *g, x) {
                hess += nh / gv;
            }
        }
        // Symmetrize against round-off before factoring.
        let hess = (&hess + hess.transpose()) * 0.5;
        let step = match hess.clone().cholesky() {
            Some(ch) => ch.solve(&(-&grad)),
            None => {
                let scale = hess.diagonal().amax().max(1.0);
                match (hess + DMatrix::identity(n, n) * (1e-10 * scale)).cholesky() {
                    Some(ch) => ch.solve(&(-&grad)),
                    None => return Centering::Breakdown("Newton system not positive definite".into()),
                }
            }
        };
        let slope = grad.dot(&step);
        if !slope.is_finite() {
            return Centering::Breakdown("non-finite Newton step".into());
        }
        if -slope / 2.0 <= NEWTON_TOL {
            return Centering::Converged;
        }
        let f0 = match p.barrier_value(x, t) {
            Some(v) => v,
            None => return Centering::Breakdown("iterate left the interior".into()),
        };
        let mut s = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let cand = &*x + &step * s;
            if let Some(f1) = p.barrier_value(&cand, t) {
                if f1 <= f0 + ARMIJO * s * slope {
                    accepted = Some(cand);
                    break;
                }
            }
            s *= BACKTRACK;
        }
        let Some(x_new) = accepted else {
            // No further decrease representable: treat as centered.
            return Centering::Converged;
        };
        for (j, g) in p.constraints.iter().enumerate() {
            curvature.update(j, *g, x, &x_new);
        }
        *x = x_new;
        *newton_steps += 1;
        if stop(x) {
            return Centering::Stopped;
        }
    }
    Centering::Converged
}

/// Runs the barrier method from a strictly feasible `x0` until the gap
/// bound `terms / t` drops below `gap_target(objective)`.
fn run_barrier(
    p: &Problem<'_>,
    x0: DVector<f64>,
    cfg: &SolverConfig,
    gap_target: &dyn Fn(f64) -> f64,
    stop: &dyn Fn(&DVector<f64>) -> bool,
) -> Run {
    let mut x = x0;
    let mut curvature = CurvatureModel::new(p.constraints.len());
    let mut newton_steps = 0;
    let mut t = 1.0 / cfg.barrier_start;
    let mut centered = Vec::new();
    let terms = p.barrier_terms() as f64;
    for outer in 1..=cfg.max_outer {
        match center(p, &mut x, t, cfg.max_inner, &mut curvature, &mut newton_steps, stop) {
            Centering::Stopped => {
                return Run {
                    x,
                    newton_steps,
                    outer,
                    last_t: t,
                    centered,
                    status: SolveStatus::Optimal,
                    message: None,
                    stopped_early: true,
                }
            }
            Centering::Breakdown(msg) => {
                return Run {
                    x,
                    newton_steps,
                    outer,
                    last_t: t,
                    centered,
                    status: SolveStatus::IterationLimit,
                    message: Some(msg),
                    stopped_early: false,
                }
            }
            Centering::Converged => {}
        }
        let obj = p.objective.dot(&x);
        centered.push(obj);
        if terms / t <= gap_target(obj) {
            return Run {
                x,
                newton_steps,
                outer,
                last_t: t,
                centered,
                status: SolveStatus::Optimal,
                message: None,
                stopped_early: false,
            };
        }
        t *= cfg.barrier_factor;
    }
    Run {
        x,
        newton_steps,
        outer: cfg.max_outer,
        last_t: t,
        centered,
        status: SolveStatus::IterationLimit,
        message: Some("outer iteration budget exhausted".into()),
        stopped_early: false,
    }
}

/// Outcome of the feasibility search.
#[derive(Debug, Clone, PartialEq)]
pub enum PhaseOne {
    /// Strictly inside the box with every constraint positive.
    Feasible { point: DVector<f64>, slack: f64 },
    /// The best achievable minimum slack is not positive.
    Infeasible { point: DVector<f64>, max_slack: f64 },
}

/// Finds a strictly feasible point by maximizing `s` subject to
/// `g_j(x) >= s` over the box. The box midpoint is returned unchanged when
/// it is already strictly feasible.
pub fn phase_one(p: &ConvexProgram, cfg: &SolverConfig) -> PhaseOne {
    let mid = (p.lower() + p.upper()) * 0.5;
    let s_mid = p.min_constraint(&mid);
    if s_mid > 0.0 {
        return PhaseOne::Feasible {
            point: mid,
            slack: s_mid,
        };
    }
    let n = p.num_vars();
    let s0 = s_mid - 1.0;
    let mut objective = DVector::zeros(n + 1);
    objective[n] = 1.0;
    let mut lower = DVector::zeros(n + 1);
    let mut upper = DVector::zeros(n + 1);
    lower.rows_mut(0, n).copy_from(p.lower());
    upper.rows_mut(0, n).copy_from(p.upper());
    lower[n] = s0 - 1.0;
    upper[n] = 1.0;
    let shifted: Vec<SlackShifted<'_>> = p
        .constraints()
        .iter()
        .map(|g| SlackShifted { inner: g.as_ref() })
        .collect();
    let prob = Problem {
        objective: &objective,
        constraints: shifted.iter().map(|g| g as &dyn ConcaveFn).collect(),
        lower: &lower,
        upper: &upper,
    };
    let mut x0 = DVector::zeros(n + 1);
    x0.rows_mut(0, n).copy_from(&mid);
    x0[n] = s0;
    let feasible = |xs: &DVector<f64>| p.min_constraint(&xs.rows(0, n).into_owned()) > 0.0;
    let gap = |_: f64| cfg.feasibility_tol * 1e-2;
    let run = run_barrier(&prob, x0, cfg, &gap, &feasible);
    let point = run.x.rows(0, n).into_owned();
    let slack = p.min_constraint(&point);
    if slack > 0.0 {
        PhaseOne::Feasible { point, slack }
    } else {
        PhaseOne::Infeasible {
            point,
            max_slack: slack,
        }
    }
}

/// Maximizes the program's objective.
pub fn solve(p: &ConvexProgram, cfg: &SolverConfig) -> Solution {
    let (x0, slack) = match phase_one(p, cfg) {
        PhaseOne::Feasible { point, slack } => (point, slack),
        PhaseOne::Infeasible { point, max_slack } => {
            let objective = p.objective().dot(&point);
            return Solution {
                point,
                objective,
                status: SolveStatus::Infeasible,
                diagnostics: Diagnostics {
                    max_violation: (-max_slack).max(0.0),
                    phase_one_slack: max_slack,
                    message: Some(format!("phase I best slack {max_slack:e}")),
                    ..Default::default()
                },
            };
        }
    };
    let prob = Problem {
        objective: p.objective(),
        constraints: p.constraints().iter().map(|g| g.as_ref()).collect(),
        lower: p.lower(),
        upper: p.upper(),
    };
    let tol = cfg.optimality_tol;
    let gap = move |obj: f64| tol * (1.0 + obj.abs());
    let run = run_barrier(&prob, x0, cfg, &gap, &|_| false);
    debug_assert!(!run.stopped_early);
    let x = run.x;
    let mu = 1.0 / run.last_t;
    let mut stationarity = p.objective().clone();
    for i in 0..x.len() {
        stationarity[i] += mu / (x[i] - p.lower()[i]) - mu / (p.upper()[i] - x[i]);
    }
    for g in p.constraints() {
        stationarity += g.gradient(&x) * (mu / g.value(&x));
    }
    let objective = p.objective().dot(&x);
    let min_g = p.min_constraint(&x);
    Solution {
        diagnostics: Diagnostics {
            outer_iterations: run.outer,
            newton_steps: run.newton_steps,
            max_violation: (-min_g).max(0.0),
            kkt_residual: stationarity.norm(),
            duality_gap: prob.barrier_terms() as f64 * mu,
            phase_one_slack: slack,
            centered_objectives: run.centered,
            message: run.message,
        },
        point: x,
        objective,
        status: run.status,
    }
}
