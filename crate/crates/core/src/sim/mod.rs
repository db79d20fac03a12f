//! Linear agents, a waypoint planner for cube tasks, and the end-to-end
//! scenario runner.

mod dynamics;
mod harness;
mod planner;

pub use dynamics::{simulate_dynamics, AgentError, LinearAgent, Rollout, SimError, StateViolation};
pub use harness::{
    assemble_global, decompose_all, decompose_scenario, decomposition_entry, global_env, rewrite_for_grid,
    run_scenario, CubeEntry, DecompositionEntry, GlobalPredicate, OracleCheck, RobustnessReport, RunError, RunOptions,
    ScenarioDecomposition, ScenarioRun, Stage, StageTimings, TeamRobustness, ORACLE_UPPER_TOL,
};
pub use planner::{plan_team_trajectory, PlanError, TeamPlan};
