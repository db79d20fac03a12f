use std::path::Path;

use serde::{Deserialize, Serialize};
use stldec::scenario::{Scenario, ScenarioFile};
use stldec::sim::{decompose_scenario, decomposition_entry, DecompositionEntry, OracleCheck, RunOptions, StageTimings};
use stldec::synthesis::LocalTaskSet;

use crate::error::CliError;
use crate::output::write_json;

/// The file written by `decompose` and read by `check`. The scenario is
/// embedded so that global robustness can be evaluated later.
#[derive(Debug, Serialize)]
pub struct TasksDocument<'a> {
    pub scenario: &'a ScenarioFile,
    pub rewritten: String,
    pub decompositions: Vec<DecompositionEntry>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub oracle_checks: Vec<OracleCheck>,
    pub local_formulas: Vec<String>,
    pub local_tasks: &'a LocalTaskSet,
}

/// The parts of a [`TasksDocument`] that `check` needs.
#[derive(Debug, Deserialize)]
pub struct TasksInput {
    pub scenario: ScenarioFile,
    pub local_tasks: LocalTaskSet,
}

pub fn load_scenario(path: &Path) -> Result<(ScenarioFile, Scenario), CliError> {
    let file = ScenarioFile::load(path)?;
    let scenario = Scenario::try_from(&file)?;
    Ok((file, scenario))
}

pub fn run(scenario: &Path, out: &Path, opts: &RunOptions) -> Result<(), CliError> {
    let (file, s) = load_scenario(scenario)?;
    let mut timings = StageTimings::default();
    let d = decompose_scenario(&s, opts, &mut timings)?;
    log::info!(
        "decomposed {} conjuncts in {:.3} s",
        d.results.len(),
        timings.decompose + timings.synthesize
    );
    let doc = TasksDocument {
        scenario: &file,
        rewritten: d.rewritten.to_string(),
        decompositions: d
            .results
            .iter()
            .map(|r| decomposition_entry(&s, &d.rewritten, r, d.margin))
            .collect(),
        oracle_checks: d.oracle_checks,
        local_formulas: d.tasks.tasks.iter().map(|t| t.formula_text()).collect(),
        local_tasks: &d.tasks,
    };
    write_json(out, &doc)?;
    if let Some(c) = doc.oracle_checks.iter().find(|c| !c.agrees) {
        return Err(CliError::Violation(format!(
            "conjunct {}: solver objective {} disagrees with grid oracle {}",
            c.conjunct, c.solver, c.oracle
        )));
    }
    for (team, text) in doc.local_formulas.iter().enumerate() {
        println!("team {}: {text}", team + 1);
    }
    Ok(())
}
