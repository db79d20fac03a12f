use std::fs;
use std::path::Path;

use serde::Serialize;
use stldec::scenario::Scenario;
use stldec::sim::global_env;
use stldec::stl::{robustness, Trajectory};
use stldec::synthesis::LocalTaskSet;
use stldec::team::{AgentId, TeamPartition};

use crate::decompose::TasksInput;
use crate::error::CliError;

/// Sample times may deviate from `k dt` by this much.
const TIME_TOL: f64 = 1e-6;

#[derive(Debug, Serialize)]
struct ConjunctCheck {
    name: String,
    formula: String,
    robustness: f64,
}

#[derive(Debug, Serialize)]
struct TeamCheck {
    team: usize,
    agents: Vec<AgentId>,
    formula: String,
    robustness: f64,
    conjuncts: Vec<ConjunctCheck>,
}

#[derive(Debug, Serialize)]
struct CheckReport {
    teams: Vec<TeamCheck>,
    global_robustness: f64,
    all_local_positive: bool,
}

fn validate_tasks(tasks: &LocalTaskSet, p: &TeamPartition) -> Result<(), CliError> {
    if tasks.tasks.len() != p.team_count() {
        return Err(CliError::Tasks(format!(
            "{} local tasks for {} teams",
            tasks.tasks.len(),
            p.team_count()
        )));
    }
    for (l, task) in tasks.tasks.iter().enumerate() {
        if task.team != l {
            return Err(CliError::Tasks(format!(
                "task {} belongs to team {}",
                l + 1,
                task.team + 1
            )));
        }
        let dim = p.team_dim(l).map_err(|e| CliError::Tasks(e.to_string()))?;
        for c in &task.conjuncts {
            if c.cube.center.len() != dim || c.cube.coords.iter().any(|&k| k >= dim) {
                return Err(CliError::Tasks(format!(
                    "cube `{}` does not fit the {dim}-dimensional state of team {}",
                    c.name,
                    l + 1
                )));
            }
        }
    }
    Ok(())
}

/// Reads `t, x1, ..., xn` with samples every `dt` from time zero.
pub fn read_trajectory(path: &Path, dim: usize, dt: f64) -> Result<Trajectory, CliError> {
    let bad = |message: String| CliError::Trajectory {
        path: path.to_path_buf(),
        message,
    };
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let columns = reader.headers().map_err(CliError::csv(path))?.len();
    if columns != dim + 1 {
        return Err(bad(format!(
            "expected a time column and {dim} state columns, found {columns} columns"
        )));
    }
    let mut data = Vec::new();
    let mut rows = 0;
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(CliError::csv(path))?;
        let values = record
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| bad(format!("row {}: {e}", k + 1)))?;
        if values.len() != dim + 1 {
            return Err(bad(format!(
                "row {} has {} fields, expected {}",
                k + 1,
                values.len(),
                dim + 1
            )));
        }
        if (values[0] - k as f64 * dt).abs() > TIME_TOL {
            return Err(bad(format!(
                "row {}: time {} is not {k} x dt = {}",
                k + 1,
                values[0],
                k as f64 * dt
            )));
        }
        data.extend_from_slice(&values[1..]);
        rows += 1;
    }
    if rows == 0 {
        return Err(bad("no samples".to_string()));
    }
    Trajectory::from_flat(dt, 0.0, dim, data).map_err(|e| bad(e.to_string()))
}

/// Team state `z_l = E_l x` over time.
pub fn team_trajectory(p: &TeamPartition, team: usize, x: &Trajectory) -> Trajectory {
    let e = p.selection_for_team(team).expect("team index in range");
    x.map_samples(e.rows(), |s, out| out.extend(e.apply(s)))
}

pub fn run(tasks_path: &Path, trajectory_path: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(tasks_path).map_err(CliError::io(tasks_path))?;
    let doc: TasksInput = serde_json::from_str(&text).map_err(CliError::json(tasks_path))?;
    let s = Scenario::try_from(&doc.scenario)?;
    validate_tasks(&doc.local_tasks, &s.partition)?;
    let x = read_trajectory(trajectory_path, s.partition.dim(), s.dt)?;
    let needed = s.formula.horizon();
    if x.end_time() + TIME_TOL < needed {
        return Err(CliError::Trajectory {
            path: trajectory_path.to_path_buf(),
            message: format!("ends at t = {} but the formula needs {needed} s", x.end_time()),
        });
    }

    let eval_err = |e: stldec::stl::RobustnessError| CliError::Tasks(e.to_string());
    let mut teams = Vec::new();
    for task in &doc.local_tasks.tasks {
        let z = team_trajectory(&s.partition, task.team, &x);
        let env = task.env();
        let conjuncts = task
            .conjuncts
            .iter()
            .map(|c| {
                let f = c.formula();
                Ok(ConjunctCheck {
                    name: c.name.clone(),
                    formula: f.to_string(),
                    robustness: robustness(&f, &z, 0.0, &env).map_err(eval_err)?,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        teams.push(TeamCheck {
            team: task.team + 1,
            agents: s.partition.teams()[task.team].clone(),
            formula: task.formula_text(),
            robustness: robustness(&task.formula(), &z, 0.0, &env).map_err(eval_err)?,
            conjuncts,
        });
    }
    let env = global_env(&s.predicates, &s.partition).map_err(|e| CliError::Tasks(e.to_string()))?;
    let global_robustness = robustness(&s.formula, &x, 0.0, &env).map_err(eval_err)?;
    let all_local_positive = teams.iter().all(|t| t.robustness > 0.0);
    let report = CheckReport {
        teams,
        global_robustness,
        all_local_positive,
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&report).map_err(CliError::json(trajectory_path))?
    );

    let failures: Vec<String> = report
        .teams
        .iter()
        .flat_map(|t| {
            t.conjuncts
                .iter()
                .filter(|c| c.robustness <= 0.0)
                .map(move |c| format!("team {}: `{}` has robustness {}", t.team, c.formula, c.robustness))
        })
        .collect();
    if !failures.is_empty() {
        return Err(CliError::Violation(format!(
            "local tasks violated: {}",
            failures.join("; ")
        )));
    }
    if global_robustness <= 0.0 {
        return Err(CliError::Violation(format!(
            "all local tasks hold but the global formula has robustness {global_robustness}"
        )));
    }
    Ok(())
}
