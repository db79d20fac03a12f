use std::fs;
use std::path::Path;

use stldec::fuzz::run_fuzz;
use stldec::sim::{global_env, run_scenario, RunOptions};
use stldec::stl::{StatePredicate, Trajectory};

use crate::check::team_trajectory;
use crate::decompose::load_scenario;
use crate::error::CliError;
use crate::output::{state_columns, team_columns, write_boxes, write_json, write_traces, write_trajectory};

pub fn run(scenario: &Path, out: &Path, opts: &RunOptions) -> Result<(), CliError> {
    let (_, s) = load_scenario(scenario)?;
    let run = run_scenario(&s, opts)?;
    fs::create_dir_all(out).map_err(CliError::io(out))?;

    let r = &run.report;
    write_json(&out.join("report.json"), r)?;
    write_json(&out.join("timings.json"), &run.timings)?;
    write_trajectory(
        &out.join("trajectory.csv"),
        &run.trajectory,
        &state_columns(s.partition.dim()),
    )?;
    let teams: Vec<Trajectory> = (0..s.partition.team_count())
        .map(|l| team_trajectory(&s.partition, l, &run.trajectory))
        .collect();
    for (l, z) in teams.iter().enumerate() {
        write_trajectory(
            &out.join(format!("team_{}.csv", l + 1)),
            z,
            &team_columns(&s.partition, l),
        )?;
    }
    write_boxes(&out.join("boxes.csv"), &s.partition, &run.tasks)?;
    let env = global_env(&s.predicates, &s.partition).map_err(|e| CliError::Tasks(e.to_string()))?;
    let globals: Vec<(String, &dyn StatePredicate)> =
        env.iter().map(|(n, p)| (n.clone(), p as &dyn StatePredicate)).collect();
    write_traces(
        &out.join("traces.csv"),
        &s.partition,
        &run.tasks,
        &teams,
        &run.trajectory,
        &globals,
    )?;

    for t in &r.teams {
        println!("team {}: rho = {:e}  {}", t.team, t.robustness, t.formula);
    }
    println!("global: rho = {:e}", r.global_robustness);
    for v in &r.state_violations {
        log::warn!(
            "agent {} leaves its state bound at t = {} (norm {})",
            v.agent,
            v.time,
            v.norm
        );
    }

    if let Some(c) = r.oracle_checks.iter().find(|c| !c.agrees) {
        return Err(CliError::Violation(format!(
            "conjunct {}: solver objective {} disagrees with grid oracle {}",
            c.conjunct, c.solver, c.oracle
        )));
    }
    if r.soundness_violation {
        return Err(CliError::Violation(format!(
            "local tasks hold but the global formula has robustness {}",
            r.global_robustness
        )));
    }
    if !r.all_local_positive {
        let failed: Vec<String> = r
            .teams
            .iter()
            .filter(|t| t.robustness <= 0.0)
            .map(|t| format!("team {} ({})", t.team, t.robustness))
            .collect();
        return Err(CliError::Violation(format!(
            "planned trajectories violate local tasks: {}",
            failed.join(", ")
        )));
    }
    Ok(())
}

pub fn fuzz(count: usize, seed: u64, out: &Path) -> Result<(), CliError> {
    if count == 0 {
        return Err(CliError::Usage("--fuzz needs at least one scenario".to_string()));
    }
    let summary = run_fuzz(count, seed);
    fs::create_dir_all(out).map_err(CliError::io(out))?;
    write_json(&out.join("fuzz.json"), &summary)?;
    println!(
        "{} scenarios: {} completed, {} locally satisfied, {} soundness violations",
        summary.scenarios, summary.completed, summary.locally_satisfied, summary.soundness_violations
    );
    if summary.soundness_violations > 0 {
        return Err(CliError::Violation(format!(
            "{} runs satisfy every local task but not the global formula",
            summary.soundness_violations
        )));
    }
    Ok(())
}
