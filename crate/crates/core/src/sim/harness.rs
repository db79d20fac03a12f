//! End-to-end pipeline: decompose, synthesize, plan per team, evaluate.

use std::cell::Cell;
use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use super::dynamics::{LinearAgent, StateViolation};
use super::planner::{plan_team_trajectory, PlanError, TeamPlan};
use crate::hypercube::{
    assemble_program, effective_predicate, solve_decomposition, DecompositionError, DecompositionResult, Domain,
};
use crate::oracle::{grid_oracle, OracleConfig, MAX_ORACLE_VARS};
use crate::scenario::Scenario;
use crate::solver::SolveStatus;
use crate::stl::{
    grid_time_within, rewrite_untils, robustness, Formula, PredicateFunction, RewriteError, RobustnessError,
    StatePredicate, Trajectory,
};
use crate::synthesis::{
    cross_team_consistency_check, synthesize, ConsistencyViolation, LocalTaskSet, SynthesisError, TimingMode,
};
use crate::team::{AgentId, TeamPartition};

/// Allowed excess of the solver objective over the oracle's.
pub const ORACLE_UPPER_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Rewrite,
    Decompose,
    Synthesize,
    Plan,
    Evaluate,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error("until rewrite: {0}")]
    Rewrite(#[from] RewriteError),
    #[error("no sample time inside the until interval of conjunct {}", .0 + 1)]
    UntilOffGrid(usize),
    #[error("decomposing conjunct {}: {error}", source_index + 1)]
    Decompose {
        source_index: usize,
        error: DecompositionError,
    },
    #[error("synthesis: {0}")]
    Synthesis(#[from] SynthesisError),
    #[error("inconsistent local tasks: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Consistency(Vec<ConsistencyViolation>),
    #[error("planning team {}: {error}", team + 1)]
    Plan { team: usize, error: PlanError },
    #[error("evaluation: {0}")]
    Evaluate(#[from] RobustnessError),
}

impl RunError {
    pub fn stage(&self) -> Stage {
        match self {
            RunError::Rewrite(_) | RunError::UntilOffGrid(_) => Stage::Rewrite,
            RunError::Decompose { .. } => Stage::Decompose,
            RunError::Synthesis(_) | RunError::Consistency(_) => Stage::Synthesize,
            RunError::Plan { .. } => Stage::Plan,
            RunError::Evaluate(_) => Stage::Evaluate,
        }
    }

    /// Whether the failure means no solution exists (as opposed to bad
    /// input or a numerical failure).
    pub fn is_infeasible(&self) -> bool {
        match self {
            RunError::Decompose { error, .. } => matches!(error, DecompositionError::Infeasible { .. }),
            RunError::Plan { error, .. } => matches!(
                error,
                PlanError::Unreachable { .. } | PlanError::Conflict { .. } | PlanError::DeadlineMissed { .. }
            ),
            RunError::Synthesis(SynthesisError::MarginTooLarge { .. }) => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunOptions {
    /// Overrides the scenario's timing mode.
    pub mode: Option<TimingMode>,
    /// Overrides the scenario's margin.
    pub margin: Option<f64>,
    /// Cross-check each decomposition against the grid oracle when small
    /// enough.
    pub oracle: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CubeEntry {
    pub team: usize,
    pub agents: Vec<AgentId>,
    pub center: Vec<f64>,
    pub radius: f64,
    pub adjusted_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionEntry {
    /// 1-based conjunct number.
    pub conjunct: usize,
    pub predicate: String,
    pub objective: f64,
    pub status: SolveStatus,
    pub degenerate: bool,
    pub outer_iterations: usize,
    pub newton_steps: usize,
    pub max_violation: f64,
    pub kkt_residual: f64,
    pub cubes: Vec<CubeEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleCheck {
    pub conjunct: usize,
    pub solver: f64,
    pub oracle: f64,
    pub grid_step: f64,
    pub agrees: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TeamRobustness {
    /// 1-based team number.
    pub team: usize,
    pub agents: Vec<AgentId>,
    pub formula: String,
    /// `null` (infinite) for a team without tasks.
    pub robustness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessReport {
    pub mode: TimingMode,
    pub margin: f64,
    pub formula: String,
    /// Global formula after until rewriting.
    pub rewritten: String,
    pub decompositions: Vec<DecompositionEntry>,
    pub teams: Vec<TeamRobustness>,
    pub global_robustness: f64,
    pub all_local_positive: bool,
    /// All local robustness values are positive but the global one is not.
    pub soundness_violation: bool,
    pub state_violations: Vec<StateViolation>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub oracle_checks: Vec<OracleCheck>,
}

/// Wall-clock seconds per stage. Kept apart from the report so that the
/// report is reproducible byte for byte.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct StageTimings {
    pub decompose: f64,
    pub synthesize: f64,
    pub plan: f64,
    pub evaluate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRun {
    pub report: RobustnessReport,
    pub timings: StageTimings,
    pub rewritten: Formula,
    pub results: Vec<DecompositionResult>,
    pub tasks: LocalTaskSet,
    pub plans: Vec<TeamPlan>,
    /// Global state in agent listing order.
    pub trajectory: Trajectory,
}

/// A predicate read from the global state through its footprint indices.
#[derive(Debug, Clone)]
pub struct GlobalPredicate {
    pub function: PredicateFunction,
    pub indices: Vec<usize>,
}

impl StatePredicate for GlobalPredicate {
    fn eval_state(&self, name: &str, state: &[f64]) -> Result<f64, RobustnessError> {
        let needed = self.indices.iter().copied().max().unwrap_or(0);
        if needed >= state.len() {
            return Err(RobustnessError::DimensionMismatch {
                name: name.to_string(),
                needed,
                found: state.len(),
            });
        }
        let y: Vec<f64> = self.indices.iter().map(|&k| state[k]).collect();
        Ok(self.function.value(&y))
    }
}

/// Predicate table over the global state.
pub fn global_env(
    predicates: &BTreeMap<String, PredicateFunction>,
    p: &TeamPartition,
) -> Result<BTreeMap<String, GlobalPredicate>, crate::team::PartitionError> {
    predicates
        .iter()
        .map(|(name, f)| {
            let indices = f
                .footprint()
                .iter()
                .map(|&c| p.global_index(c))
                .collect::<Result<_, _>>()?;
            Ok((
                name.clone(),
                GlobalPredicate {
                    function: f.clone(),
                    indices,
                },
            ))
        })
        .collect()
}

/// Rewrites untils with `t*` at the grid point nearest the interval
/// midpoint.
pub fn rewrite_for_grid(formula: &Formula, dt: f64) -> Result<Formula, RunError> {
    let off_grid = Cell::new(false);
    let rewritten = rewrite_untils(formula, |iv| {
        let mid = 0.5 * (iv.start() + iv.end());
        grid_time_within(mid, iv.start(), iv.end(), dt).unwrap_or_else(|| {
            off_grid.set(true);
            mid
        })
    });
    if off_grid.get() {
        let i = formula
            .conjuncts()
            .iter()
            .position(|c| matches!(c, Formula::Until { .. }))
            .unwrap_or(0);
        return Err(RunError::UntilOffGrid(i));
    }
    Ok(rewritten?)
}

fn conjunct_predicate(c: &Formula) -> Option<(&str, bool)> {
    match c {
        Formula::Always { child, .. } | Formula::Eventually { child, .. } => match &**child {
            Formula::Predicate { name, negated } => Some((name.as_str(), *negated)),
            _ => None,
        },
        _ => None,
    }
}

/// Decomposes every conjunct of a fragment formula, in parallel.
pub fn decompose_all(
    s: &Scenario,
    formula: &Formula,
    oracle: bool,
) -> Result<(Vec<DecompositionResult>, Vec<OracleCheck>), RunError> {
    let domain = Domain::inscribed_in_balls(&s.partition, |id| {
        s.agent(id).map_or(f64::INFINITY, LinearAgent::state_bound)
    })
    .map_err(|error| RunError::Decompose { source_index: 0, error })?;
    let outcomes: Vec<Result<(DecompositionResult, Option<OracleCheck>), RunError>> = formula
        .conjuncts()
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let wrap = |error| RunError::Decompose { source_index: i, error };
            let (name, negated) =
                conjunct_predicate(c).ok_or_else(|| RunError::Synthesis(SynthesisError::Fragment(c.to_string())))?;
            let base = &s.predicates[name];
            let pred = effective_predicate(base, negated).map_err(wrap)?;
            let prob = assemble_program(i, &pred, &s.partition, &domain).map_err(wrap)?;
            let result = solve_decomposition(&prob, &s.solver).map_err(wrap)?;
            let check = if oracle && prob.num_vars() <= MAX_ORACLE_VARS {
                let o = grid_oracle(&prob, &OracleConfig::default()).map_err(wrap)?;
                let (solver, oracle) = (result.objective, o.result.objective);
                Some(OracleCheck {
                    conjunct: i + 1,
                    solver,
                    oracle,
                    grid_step: o.grid_step,
                    agrees: solver >= oracle - o.grid_step && solver <= oracle + ORACLE_UPPER_TOL,
                })
            } else {
                None
            };
            Ok((result, check))
        })
        .collect();
    let mut results = Vec::new();
    let mut checks = Vec::new();
    for o in outcomes {
        let (r, c) = o?;
        results.push(r);
        checks.extend(c);
    }
    Ok((results, checks))
}

/// Agents of team `l` in team order.
fn team_agents(s: &Scenario, l: usize) -> Vec<&LinearAgent> {
    s.partition.teams()[l]
        .iter()
        .map(|id| s.agent(*id).expect("partition agents exist"))
        .collect()
}

/// Output of the decomposition and synthesis stages.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioDecomposition {
    pub mode: TimingMode,
    pub margin: f64,
    pub rewritten: Formula,
    pub results: Vec<DecompositionResult>,
    pub tasks: LocalTaskSet,
    pub oracle_checks: Vec<OracleCheck>,
}

/// Rewrites, decomposes and synthesizes the local tasks, checking them for
/// cross-team consistency.
pub fn decompose_scenario(
    s: &Scenario,
    opts: &RunOptions,
    timings: &mut StageTimings,
) -> Result<ScenarioDecomposition, RunError> {
    let mode = opts.mode.unwrap_or(s.timing.mode);
    let margin = opts.margin.unwrap_or(s.margin);

    let clock = Instant::now();
    let rewritten = rewrite_for_grid(&s.formula, s.dt)?;
    let (results, oracle_checks) = decompose_all(s, &rewritten, opts.oracle)?;
    timings.decompose = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let policy = s.timing.policy(mode, s.dt);
    let tasks = synthesize(&rewritten, &results, &policy, margin, s.partition.team_count())?;
    let report = cross_team_consistency_check(&tasks, &rewritten, &results);
    if !report.is_clean() {
        return Err(RunError::Consistency(report.violations));
    }
    timings.synthesize = clock.elapsed().as_secs_f64();
    Ok(ScenarioDecomposition {
        mode,
        margin,
        rewritten,
        results,
        tasks,
        oracle_checks,
    })
}

pub fn run_scenario(s: &Scenario, opts: &RunOptions) -> Result<ScenarioRun, RunError> {
    let mut timings = StageTimings::default();
    let ScenarioDecomposition {
        mode,
        margin,
        rewritten,
        results,
        tasks,
        oracle_checks,
    } = decompose_scenario(s, opts, &mut timings)?;

    let clock = Instant::now();
    let plans: Vec<Result<TeamPlan, RunError>> = tasks
        .tasks
        .par_iter()
        .map(|task| {
            plan_team_trajectory(task, &team_agents(s, task.team), s.horizon, s.dt)
                .map_err(|error| RunError::Plan { team: task.team, error })
        })
        .collect();
    let plans = plans.into_iter().collect::<Result<Vec<_>, _>>()?;
    timings.plan = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let trajectory = assemble_global(&s.partition, &plans);
    let mut teams = Vec::with_capacity(plans.len());
    for (task, plan) in tasks.tasks.iter().zip(&plans) {
        let rho = robustness(&task.formula(), &plan.trajectory, 0.0, &task.env())?;
        teams.push(TeamRobustness {
            team: task.team + 1,
            agents: s.partition.teams()[task.team].clone(),
            formula: task.formula_text(),
            robustness: rho,
        });
    }
    let env = global_env(&s.predicates, &s.partition).expect("validated footprints");
    let global_robustness = robustness(&s.formula, &trajectory, 0.0, &env)?;
    let all_local_positive = teams.iter().all(|t| t.robustness > 0.0);
    let soundness_violation = all_local_positive && global_robustness <= 0.0;
    if soundness_violation {
        log::error!("local tasks hold but the global formula does not (rho = {global_robustness})");
    }
    timings.evaluate = clock.elapsed().as_secs_f64();

    let decompositions = results
        .iter()
        .map(|r| decomposition_entry(s, &rewritten, r, margin))
        .collect();
    let state_violations = plans.iter().flat_map(|p| p.state_violations.iter().copied()).collect();
    Ok(ScenarioRun {
        report: RobustnessReport {
            mode,
            margin,
            formula: s.formula.to_string(),
            rewritten: rewritten.to_string(),
            decompositions,
            teams,
            global_robustness,
            all_local_positive,
            soundness_violation,
            state_violations,
            oracle_checks,
        },
        timings,
        rewritten,
        results,
        tasks,
        plans,
        trajectory,
    })
}

pub fn decomposition_entry(
    s: &Scenario,
    rewritten: &Formula,
    r: &DecompositionResult,
    margin: f64,
) -> DecompositionEntry {
    let predicate = conjunct_predicate(&rewritten.conjuncts()[r.source])
        .map(|(n, neg)| if neg { format!("not {n}") } else { n.to_string() })
        .unwrap_or_default();
    DecompositionEntry {
        conjunct: r.source + 1,
        predicate,
        objective: r.objective,
        status: r.status,
        degenerate: r.degenerate,
        outer_iterations: r.diagnostics.outer_iterations,
        newton_steps: r.diagnostics.newton_steps,
        max_violation: r.diagnostics.max_violation,
        kkt_residual: r.diagnostics.kkt_residual,
        cubes: r
            .cubes
            .iter()
            .map(|c| CubeEntry {
                team: c.team + 1,
                agents: s.partition.teams()[c.team].clone(),
                center: c.center.clone(),
                radius: c.radius,
                adjusted_radius: c.radius - margin,
            })
            .collect(),
    }
}

/// Scatters team trajectories into the global state `x = A z`.
pub fn assemble_global(p: &TeamPartition, plans: &[TeamPlan]) -> Trajectory {
    let first = &plans[0].trajectory;
    let (n, dt) = (first.len(), first.dt());
    let dim = p.dim();
    let maps: Vec<Vec<usize>> = (0..plans.len())
        .map(|l| p.selection_for_team(l).expect("team index").row_map().to_vec())
        .collect();
    let mut data = vec![0.0; n * dim];
    for (plan, map) in plans.iter().zip(&maps) {
        for k in 0..n {
            let z = plan.trajectory.sample(k);
            for (j, &g) in map.iter().enumerate() {
                data[k * dim + g] = z[j];
            }
        }
    }
    Trajectory::from_flat(dt, 0.0, dim, data).expect("consistent team trajectories")
}
