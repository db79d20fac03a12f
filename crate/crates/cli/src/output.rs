use std::fs;
use std::path::Path;

use serde::Serialize;
use stldec::hypercube::HypercubePredicate;
use stldec::stl::{StatePredicate, Trajectory};
use stldec::synthesis::{LocalOperator, LocalTaskSet};
use stldec::team::TeamPartition;

use crate::error::CliError;

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(CliError::json(path))?;
    text.push('\n');
    fs::write(path, text).map_err(CliError::io(path))
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    csv::Writer::from_path(path).map_err(CliError::csv(path))
}

/// `t, x1, ..., xn`.
pub fn write_trajectory(path: &Path, x: &Trajectory, columns: &[String]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    let mut header = vec!["t".to_string()];
    header.extend(columns.iter().cloned());
    w.write_record(&header).map_err(CliError::csv(path))?;
    for k in 0..x.len() {
        let mut row = vec![x.time(k).to_string()];
        row.extend(x.sample(k).iter().map(f64::to_string));
        w.write_record(&row).map_err(CliError::csv(path))?;
    }
    w.flush().map_err(CliError::io(path))
}

/// Global state column names.
pub fn state_columns(dim: usize) -> Vec<String> {
    (1..=dim).map(|k| format!("x{k}")).collect()
}

/// Team state column names, `a<agent>_<component>` (1-based components).
pub fn team_columns(p: &TeamPartition, team: usize) -> Vec<String> {
    p.teams()[team]
        .iter()
        .flat_map(|&id| {
            let dim = p.agent_dim(id).unwrap_or(0);
            (1..=dim).map(move |c| format!("a{}_{c}", id.0))
        })
        .collect()
}

/// One row per cube corner, projected onto each agent's constrained
/// coordinates. Unconstrained coordinates are left empty.
pub fn write_boxes(path: &Path, p: &TeamPartition, tasks: &LocalTaskSet) -> Result<(), CliError> {
    let max_dim = p.agents().iter().map(|a| a.dim).max().unwrap_or(0);
    let mut w = writer(path)?;
    let mut header: Vec<String> = [
        "name", "team", "conjunct", "operator", "start", "end", "agent", "corner",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((1..=max_dim).map(|k| format!("x{k}")));
    w.write_record(&header).map_err(CliError::csv(path))?;
    for task in &tasks.tasks {
        for c in &task.conjuncts {
            let operator = match c.operator {
                LocalOperator::Always => "always",
                LocalOperator::Eventually => "eventually",
            };
            let mut offset = 0;
            for &id in &p.teams()[task.team] {
                let dim = p.agent_dim(id).unwrap_or(0);
                let own: Vec<usize> = c
                    .cube
                    .coords
                    .iter()
                    .copied()
                    .filter(|&k| k >= offset && k < offset + dim)
                    .collect();
                for (corner, point) in agent_corners(&c.cube, &own).into_iter().enumerate() {
                    let mut row = vec![
                        c.name.clone(),
                        (task.team + 1).to_string(),
                        (c.source + 1).to_string(),
                        operator.to_string(),
                        c.interval.start().to_string(),
                        c.interval.end().to_string(),
                        id.0.to_string(),
                        (corner + 1).to_string(),
                    ];
                    for k in 0..max_dim {
                        row.push(match (k < dim, own.contains(&(offset + k))) {
                            (true, true) => point[offset + k].to_string(),
                            _ => String::new(),
                        });
                    }
                    w.write_record(&row).map_err(CliError::csv(path))?;
                }
                offset += dim;
            }
        }
    }
    w.flush().map_err(CliError::io(path))
}

/// Corners over `coords` only; empty when the agent is unconstrained.
fn agent_corners(cube: &HypercubePredicate, coords: &[usize]) -> Vec<Vec<f64>> {
    if coords.is_empty() {
        return Vec::new();
    }
    stldec::hypercube::vertex_set(&cube.center, cube.radius, coords).expect("non-negative radius")
}

/// Predicate value over time, one column per local cube and per global
/// predicate.
pub fn write_traces(
    path: &Path,
    p: &TeamPartition,
    tasks: &LocalTaskSet,
    team_trajectories: &[Trajectory],
    global: &Trajectory,
    global_predicates: &[(String, &dyn StatePredicate)],
) -> Result<(), CliError> {
    let mut w = writer(path)?;
    let mut header = vec!["t".to_string()];
    for task in &tasks.tasks {
        header.extend(task.conjuncts.iter().map(|c| c.name.clone()));
    }
    header.extend(global_predicates.iter().map(|(n, _)| n.clone()));
    w.write_record(&header).map_err(CliError::csv(path))?;
    debug_assert_eq!(team_trajectories.len(), p.team_count());
    for k in 0..global.len() {
        let mut row = vec![global.time(k).to_string()];
        for task in &tasks.tasks {
            let z = team_trajectories[task.team].sample(k);
            row.extend(task.conjuncts.iter().map(|c| c.cube.value(z).to_string()));
        }
        for (name, pred) in global_predicates {
            let v = pred
                .eval_state(name, global.sample(k))
                .map_err(|e| CliError::Tasks(e.to_string()))?;
            row.push(v.to_string());
        }
        w.write_record(&row).map_err(CliError::csv(path))?;
    }
    w.flush().map_err(CliError::io(path))
}
