//! Scenario files: JSON description of agents, teams, predicates and the
//! global formula.
//!
//! Indices written in the file are 1-based: formula conjunct numbers in
//! timing overrides and state components in predicate footprints. Agent
//! ids are used as given.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{AgentError, LinearAgent};
use crate::solver::SolverConfig;
use crate::stl::{
    parse_formula, validate_fragment, Formula, ParseError, PredicateError, PredicateFunction, StateCoord, TimeInterval,
};
use crate::synthesis::{TimingMode, TimingPolicy, DEFAULT_MARGIN};
use crate::team::{AgentId, AgentSpec, PartitionError, TeamPartition};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid scenario JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("formula: {0}")]
    Formula(#[from] ParseError),
    #[error("predicate `{name}`: {source}")]
    Predicate { name: String, source: PredicateError },
    #[error("predicate `{name}`: {message}")]
    PredicateParameters { name: String, message: String },
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error("predicate `{name}`: footprint entry ({agent}, {component}) does not exist")]
    Footprint { name: String, agent: u32, component: usize },
    #[error("formula needs {needed} s but the horizon is {horizon} s")]
    Horizon { needed: f64, horizon: f64 },
    #[error("sampling period must be positive and divide into the horizon, got dt = {0}")]
    Period(f64),
    #[error("formula is outside the decomposable fragment: {0}")]
    Fragment(String),
    #[error("timing override for conjunct {0}, but the formula has {1} conjuncts")]
    Override(usize, usize),
    #[error("margin {0} must be finite and non-negative")]
    Margin(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentEntry {
    pub id: u32,
    pub dim: usize,
    /// Row-major `dim x dim` matrix.
    pub dynamics: Vec<f64>,
    pub state_bound: f64,
    pub input_bound: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    ConcaveQuadratic,
    Affine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticParameters {
    pub offset: f64,
    pub center: Vec<f64>,
    /// Rows of the weight matrix.
    pub weight: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineParameters {
    pub gradient: Vec<f64>,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredicateEntry {
    pub family: FamilyKind,
    pub parameters: serde_json::Value,
    /// `[agent id, component]` pairs, components 1-based.
    pub footprint: Vec<(u32, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimingChoice {
    Point,
    Interval,
}

impl From<TimingChoice> for TimingMode {
    fn from(c: TimingChoice) -> Self {
        match c {
            TimingChoice::Point => TimingMode::PointEventually,
            TimingChoice::Interval => TimingMode::IntervalAlways,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingEntry {
    pub mode: TimingChoice,
    /// Conjunct number (1-based) to instant, used in point mode.
    #[serde(default)]
    pub point_overrides: BTreeMap<usize, f64>,
    /// Conjunct number (1-based) to subinterval, used in interval mode.
    #[serde(default)]
    pub interval_overrides: BTreeMap<usize, TimeInterval>,
}

impl Default for TimingEntry {
    fn default() -> Self {
        Self {
            mode: TimingChoice::Point,
            point_overrides: BTreeMap::new(),
            interval_overrides: BTreeMap::new(),
        }
    }
}

fn default_margin() -> f64 {
    DEFAULT_MARGIN
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub agents: Vec<AgentEntry>,
    pub teams: Vec<Vec<u32>>,
    pub predicates: BTreeMap<String, PredicateEntry>,
    pub formula: String,
    pub horizon: f64,
    pub dt: f64,
    #[serde(default)]
    pub timing: TimingEntry,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default = "default_margin")]
    pub margin: f64,
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

/// Eventually-conjunct timing, keyed by 0-based conjunct index.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingSpec {
    pub mode: TimingMode,
    pub points: BTreeMap<usize, f64>,
    pub intervals: BTreeMap<usize, TimeInterval>,
}

impl TimingSpec {
    /// Policy for `mode`, carrying only that mode's overrides and snapping
    /// to the sampling grid.
    pub fn policy(&self, mode: TimingMode, dt: f64) -> TimingPolicy {
        let mut p = match mode {
            TimingMode::PointEventually => TimingPolicy::point(),
            TimingMode::IntervalAlways => TimingPolicy::interval(),
        };
        match mode {
            TimingMode::PointEventually => p.points = self.points.clone(),
            TimingMode::IntervalAlways => p.intervals = self.intervals.clone(),
        }
        p.on_grid(dt)
    }
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub agents: Vec<LinearAgent>,
    pub partition: TeamPartition,
    pub predicates: BTreeMap<String, PredicateFunction>,
    pub formula: Formula,
    pub horizon: f64,
    pub dt: f64,
    pub timing: TimingSpec,
    pub solver: SolverConfig,
    pub margin: f64,
}

impl Scenario {
    pub fn agent(&self, id: AgentId) -> Option<&LinearAgent> {
        self.agents.iter().find(|a| a.id() == id)
    }

    /// Number of conjuncts once untils are rewritten.
    pub fn conjunct_count(&self) -> usize {
        self.formula
            .conjuncts()
            .iter()
            .map(|c| if matches!(c, Formula::Until { .. }) { 2 } else { 1 })
            .sum()
    }
}

fn predicate_from_entry(
    name: &str,
    e: &PredicateEntry,
    partition: &TeamPartition,
) -> Result<PredicateFunction, ScenarioError> {
    let mut footprint = Vec::with_capacity(e.footprint.len());
    for &(agent, component) in &e.footprint {
        let missing = ScenarioError::Footprint {
            name: name.to_string(),
            agent,
            component,
        };
        let dim = partition.agent_dim(AgentId(agent)).ok_or(missing)?;
        if component == 0 || component > dim {
            return Err(ScenarioError::Footprint {
                name: name.to_string(),
                agent,
                component,
            });
        }
        footprint.push(StateCoord::new(agent, component - 1));
    }
    let bad = |err: serde_json::Error| ScenarioError::PredicateParameters {
        name: name.to_string(),
        message: err.to_string(),
    };
    let built = match e.family {
        FamilyKind::ConcaveQuadratic => {
            let q: QuadraticParameters = serde_json::from_value(e.parameters.clone()).map_err(bad)?;
            let d = q.center.len();
            if q.weight.len() != d || q.weight.iter().any(|row| row.len() != d) {
                return Err(ScenarioError::PredicateParameters {
                    name: name.to_string(),
                    message: format!("weight must be {d}x{d}"),
                });
            }
            let w = DMatrix::from_fn(d, d, |i, j| q.weight[i][j]);
            PredicateFunction::concave_quadratic(q.offset, q.center, w, footprint)
        }
        FamilyKind::Affine => {
            let a: AffineParameters = serde_json::from_value(e.parameters.clone()).map_err(bad)?;
            PredicateFunction::affine(a.gradient, a.offset, footprint)
        }
    };
    built.map_err(|source| ScenarioError::Predicate {
        name: name.to_string(),
        source,
    })
}

impl TryFrom<&ScenarioFile> for Scenario {
    type Error = ScenarioError;

    fn try_from(f: &ScenarioFile) -> Result<Self, ScenarioError> {
        let mut agents = Vec::with_capacity(f.agents.len());
        for a in &f.agents {
            let id = AgentId(a.id);
            if a.dynamics.len() != a.dim * a.dim {
                return Err(AgentError::Shape {
                    id,
                    dim: a.dim,
                    rows: a.dynamics.len(),
                    cols: 1,
                }
                .into());
            }
            let m = DMatrix::from_row_slice(a.dim, a.dim, &a.dynamics);
            agents.push(LinearAgent::new(
                id,
                m,
                a.state_bound,
                a.input_bound,
                a.initial_state.clone(),
            )?);
        }
        let specs = f
            .agents
            .iter()
            .map(|a| AgentSpec {
                id: AgentId(a.id),
                dim: a.dim,
            })
            .collect();
        let teams = f
            .teams
            .iter()
            .map(|t| t.iter().map(|&id| AgentId(id)).collect())
            .collect();
        let partition = TeamPartition::new(specs, teams)?;

        let mut predicates = BTreeMap::new();
        for (name, e) in &f.predicates {
            predicates.insert(name.clone(), predicate_from_entry(name, e, &partition)?);
        }
        let formula = parse_formula(&f.formula, |n| predicates.contains_key(n))?;

        if !(f.dt > 0.0 && f.dt.is_finite() && f.horizon.is_finite() && f.horizon >= f.dt) {
            return Err(ScenarioError::Period(f.dt));
        }
        if formula.horizon() > f.horizon + 1e-9 {
            return Err(ScenarioError::Horizon {
                needed: formula.horizon(),
                horizon: f.horizon,
            });
        }
        // Untils are rewritten later; check everything else now.
        let without_untils = Formula::And(
            formula
                .conjuncts()
                .iter()
                .filter(|c| !matches!(c, Formula::Until { .. }))
                .cloned()
                .collect(),
        );
        if !without_untils.conjuncts().is_empty() {
            if let Err(v) = validate_fragment(&without_untils) {
                let text: Vec<String> = v.iter().map(ToString::to_string).collect();
                return Err(ScenarioError::Fragment(text.join("; ")));
            }
        }
        if !(f.margin.is_finite() && f.margin >= 0.0) {
            return Err(ScenarioError::Margin(f.margin));
        }

        let scenario = Scenario {
            agents,
            partition,
            predicates,
            formula,
            horizon: f.horizon,
            dt: f.dt,
            timing: TimingSpec {
                mode: f.timing.mode.into(),
                points: BTreeMap::new(),
                intervals: BTreeMap::new(),
            },
            solver: f.solver,
            margin: f.margin,
        };
        let count = scenario.conjunct_count();
        let zero_based = |i: usize| {
            if i == 0 || i > count {
                Err(ScenarioError::Override(i, count))
            } else {
                Ok(i - 1)
            }
        };
        let points = f
            .timing
            .point_overrides
            .iter()
            .map(|(&i, &t)| Ok((zero_based(i)?, t)))
            .collect::<Result<_, ScenarioError>>()?;
        let intervals = f
            .timing
            .interval_overrides
            .iter()
            .map(|(&i, &iv)| Ok((zero_based(i)?, iv)))
            .collect::<Result<_, ScenarioError>>()?;
        Ok(Scenario {
            timing: TimingSpec {
                points,
                intervals,
                ..scenario.timing
            },
            ..scenario
        })
    }
}

/// The five-agent example shipped with the crate.
pub const FIVE_AGENTS_JSON: &str = include_str!("../scenarios/five_agents.json");

pub fn five_agents() -> Scenario {
    let file = ScenarioFile::from_json(FIVE_AGENTS_JSON).expect("bundled scenario parses");
    Scenario::try_from(&file).expect("bundled scenario is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenario_loads() {
        let s = five_agents();
        assert_eq!(s.agents.len(), 5);
        assert_eq!(s.partition.team_count(), 5);
        assert_eq!(s.formula.conjuncts().len(), 4);
        assert_eq!(s.timing.points.get(&2), Some(&7.0));
        assert_eq!(s.timing.points.get(&3), Some(&9.0));
        assert_eq!(s.timing.intervals.get(&2), Some(&TimeInterval::new(5.0, 7.0).unwrap()));
        let h1 = &s.predicates["near12"];
        // x1 - x2 = p gives the full offset 0.1.
        assert!((h1.value(&[0.15, 0.25, -0.15, -0.25]) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(FIVE_AGENTS_JSON).unwrap();
        v["extra"] = serde_json::json!(1);
        assert!(matches!(
            ScenarioFile::from_json(&v.to_string()),
            Err(ScenarioError::Json(_))
        ));
        let mut v: serde_json::Value = serde_json::from_str(FIVE_AGENTS_JSON).unwrap();
        v["agents"][0]["colour"] = serde_json::json!("red");
        assert!(ScenarioFile::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn bad_parameters_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(FIVE_AGENTS_JSON).unwrap();
        v["predicates"]["near12"]["parameters"]["scale"] = serde_json::json!(2.0);
        let f = ScenarioFile::from_json(&v.to_string()).unwrap();
        assert!(matches!(
            Scenario::try_from(&f),
            Err(ScenarioError::PredicateParameters { .. })
        ));
    }

    #[test]
    fn unknown_predicate_in_formula() {
        let mut f = ScenarioFile::from_json(FIVE_AGENTS_JSON).unwrap();
        f.formula = "G[0,1] nowhere".into();
        assert!(matches!(Scenario::try_from(&f), Err(ScenarioError::Formula(_))));
    }

    #[test]
    fn horizon_must_cover_formula() {
        let mut f = ScenarioFile::from_json(FIVE_AGENTS_JSON).unwrap();
        f.horizon = 9.0;
        assert!(matches!(Scenario::try_from(&f), Err(ScenarioError::Horizon { .. })));
    }

    #[test]
    fn override_index_checked() {
        let mut f = ScenarioFile::from_json(FIVE_AGENTS_JSON).unwrap();
        f.timing.point_overrides.insert(9, 1.0);
        assert!(matches!(Scenario::try_from(&f), Err(ScenarioError::Override(9, 4))));
    }

    #[test]
    fn round_trips() {
        let f = ScenarioFile::from_json(FIVE_AGENTS_JSON).unwrap();
        assert_eq!(ScenarioFile::from_json(&f.to_json()).unwrap(), f);
    }
}
