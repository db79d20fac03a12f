//! Local task construction from per-conjunct decompositions.
//!
//! Global conjunct `i` over teams `V_i` becomes one conjunct per team
//! `l in V_i`, reading that team's cube predicate `mu{i}_{l}`:
//! always-conjuncts keep their interval, eventually-conjuncts are pinned
//! to a single instant or held over a subinterval depending on the timing
//! mode. Every team involved in conjunct `i` gets the same timing.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hypercube::{DecompositionResult, HypercubePredicate};
use crate::stl::{grid_time_within, validate_fragment, Formula, TimeInterval};

/// Radius subtracted from every cube before tasks are emitted.
pub const DEFAULT_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthesisError {
    #[error("formula is outside the decomposable fragment: {0}")]
    Fragment(String),
    #[error("no decomposition for conjunct {}", .0 + 1)]
    MissingDecomposition(usize),
    #[error("decomposition for conjunct {} has no cube for team {}", source_index + 1, team + 1)]
    MissingCube { source_index: usize, team: usize },
    #[error("timing {timing} for conjunct {} is outside {interval}", source_index + 1)]
    TimingOutOfBounds {
        source_index: usize,
        timing: String,
        interval: TimeInterval,
    },
    #[error("no sample time lies inside {interval} (conjunct {})", source_index + 1)]
    OffGrid {
        source_index: usize,
        interval: TimeInterval,
    },
    #[error("{mode} timing given an override of the other kind for conjunct {}", source_index + 1)]
    ModeMismatch { mode: TimingMode, source_index: usize },
    #[error("timing override for conjunct {}, which is not an eventually-conjunct", .0 + 1)]
    StrayOverride(usize),
    #[error("margin {margin} exceeds radius {radius} of team {} cube for conjunct {}", team + 1, source_index + 1)]
    MarginTooLarge {
        source_index: usize,
        team: usize,
        radius: f64,
        margin: f64,
    },
    #[error("margin {0} must be finite and non-negative")]
    BadMargin(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimingMode {
    /// `F[t_i, t_i]` for each eventually-conjunct.
    PointEventually,
    /// `G[a_q, b_q]` with `[a_q, b_q]` inside the original interval.
    IntervalAlways,
}

impl fmt::Display for TimingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TimingMode::PointEventually => "point-eventually",
            TimingMode::IntervalAlways => "interval-always",
        })
    }
}

/// How eventually-conjuncts are timed. Overrides are keyed by conjunct
/// index; unlisted conjuncts use the midpoint (point mode) or the centered
/// third (interval mode). With `dt` set, chosen times are moved onto the
/// sampling grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingPolicy {
    pub mode: TimingMode,
    pub points: BTreeMap<usize, f64>,
    pub intervals: BTreeMap<usize, TimeInterval>,
    pub dt: Option<f64>,
}

impl TimingPolicy {
    pub fn point() -> Self {
        Self {
            mode: TimingMode::PointEventually,
            points: BTreeMap::new(),
            intervals: BTreeMap::new(),
            dt: None,
        }
    }

    pub fn interval() -> Self {
        Self {
            mode: TimingMode::IntervalAlways,
            ..Self::point()
        }
    }

    pub fn with_point(mut self, source: usize, t: f64) -> Self {
        self.points.insert(source, t);
        self
    }

    pub fn with_interval(mut self, source: usize, iv: TimeInterval) -> Self {
        self.intervals.insert(source, iv);
        self
    }

    pub fn on_grid(mut self, dt: f64) -> Self {
        self.dt = Some(dt);
        self
    }

    /// Local interval for eventually-conjunct `source` over `iv`.
    pub fn eventually_interval(&self, source: usize, iv: &TimeInterval) -> Result<TimeInterval, SynthesisError> {
        match self.mode {
            TimingMode::PointEventually => {
                if self.intervals.contains_key(&source) {
                    return Err(SynthesisError::ModeMismatch {
                        mode: self.mode,
                        source_index: source,
                    });
                }
                let t = self
                    .points
                    .get(&source)
                    .copied()
                    .unwrap_or(0.5 * (iv.start() + iv.end()));
                if !iv.contains(t) {
                    return Err(SynthesisError::TimingOutOfBounds {
                        source_index: source,
                        timing: format!("{t}"),
                        interval: *iv,
                    });
                }
                let t = self.snap_point(source, t, iv)?;
                Ok(TimeInterval::point(t).expect("inside a valid interval"))
            }
            TimingMode::IntervalAlways => {
                if self.points.contains_key(&source) {
                    return Err(SynthesisError::ModeMismatch {
                        mode: self.mode,
                        source_index: source,
                    });
                }
                let sub = match self.intervals.get(&source) {
                    Some(sub) => *sub,
                    None => {
                        let third = iv.length() / 3.0;
                        TimeInterval::new(iv.start() + third, iv.end() - third)
                            .expect("centered third of a valid interval")
                    }
                };
                if !iv.contains_interval(&sub) {
                    return Err(SynthesisError::TimingOutOfBounds {
                        source_index: source,
                        timing: sub.to_string(),
                        interval: *iv,
                    });
                }
                self.snap_interval(source, sub, iv)
            }
        }
    }

    fn snap_point(&self, source: usize, t: f64, iv: &TimeInterval) -> Result<f64, SynthesisError> {
        match self.dt {
            None => Ok(t),
            Some(dt) => grid_time_within(t, iv.start(), iv.end(), dt).ok_or(SynthesisError::OffGrid {
                source_index: source,
                interval: *iv,
            }),
        }
    }

    /// Shrinks `sub` inward to grid points; collapses to the grid point
    /// nearest its midpoint if no grid point lies inside.
    fn snap_interval(
        &self,
        source: usize,
        sub: TimeInterval,
        iv: &TimeInterval,
    ) -> Result<TimeInterval, SynthesisError> {
        let Some(dt) = self.dt else { return Ok(sub) };
        let a = grid_time_within(sub.start(), sub.start(), sub.end(), dt);
        let b = grid_time_within(sub.end(), sub.start(), sub.end(), dt);
        if let (Some(a), Some(b)) = (a, b) {
            return Ok(TimeInterval::new(a, b).expect("grid points inside sub"));
        }
        let mid = 0.5 * (sub.start() + sub.end());
        let t = self.snap_point(source, mid, iv)?;
        Ok(TimeInterval::point(t).expect("inside a valid interval"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalOperator {
    Always,
    Eventually,
}

/// One conjunct of a team's local formula.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalConjunct {
    pub name: String,
    /// Global conjunct index.
    #[serde(with = "crate::index_serde")]
    pub source: usize,
    pub operator: LocalOperator,
    pub interval: TimeInterval,
    /// Cube with the margin already subtracted.
    pub cube: HypercubePredicate,
    /// Radius before the margin was applied.
    pub raw_radius: f64,
    pub margin: f64,
}

impl LocalConjunct {
    pub fn formula(&self) -> Formula {
        let mu = Formula::predicate(self.name.clone());
        match self.operator {
            LocalOperator::Always => Formula::always(self.interval, mu),
            LocalOperator::Eventually => Formula::eventually(self.interval, mu),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalTask {
    #[serde(with = "crate::index_serde")]
    pub team: usize,
    pub conjuncts: Vec<LocalConjunct>,
}

impl LocalTask {
    /// Conjunction of the team's conjuncts; `true` for a team with none.
    pub fn formula(&self) -> Formula {
        match self.conjuncts.len() {
            0 => Formula::True,
            1 => self.conjuncts[0].formula(),
            _ => Formula::And(self.conjuncts.iter().map(LocalConjunct::formula).collect()),
        }
    }

    pub fn formula_text(&self) -> String {
        self.formula().to_string()
    }

    /// Predicate table for evaluating the local formula on team states.
    pub fn env(&self) -> BTreeMap<String, HypercubePredicate> {
        self.conjuncts
            .iter()
            .map(|c| (c.name.clone(), c.cube.clone()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalTaskSet {
    pub mode: TimingMode,
    pub margin: f64,
    pub tasks: Vec<LocalTask>,
}

impl LocalTaskSet {
    pub fn task(&self, team: usize) -> Option<&LocalTask> {
        self.tasks.iter().find(|t| t.team == team)
    }

    pub fn conjunct_count(&self) -> usize {
        self.tasks.iter().map(|t| t.conjuncts.len()).sum()
    }
}

/// Name of team `team`'s cube predicate for conjunct `source` (both shown
/// 1-based).
pub fn local_name(source: usize, team: usize) -> String {
    format!("mu{}_{}", source + 1, team + 1)
}

/// One fragment conjunct: operator, interval, predicate name.
fn split_conjunct(c: &Formula) -> Option<(LocalOperator, TimeInterval)> {
    match c {
        Formula::Always { interval, child } if matches!(**child, Formula::Predicate { .. }) => {
            Some((LocalOperator::Always, *interval))
        }
        Formula::Eventually { interval, child } if matches!(**child, Formula::Predicate { .. }) => {
            Some((LocalOperator::Eventually, *interval))
        }
        _ => None,
    }
}

/// Builds every team's local task. `results` holds one decomposition per
/// global conjunct, matched by `source`.
pub fn synthesize(
    global: &Formula,
    results: &[DecompositionResult],
    policy: &TimingPolicy,
    margin: f64,
    team_count: usize,
) -> Result<LocalTaskSet, SynthesisError> {
    if !(margin.is_finite() && margin >= 0.0) {
        return Err(SynthesisError::BadMargin(margin));
    }
    if let Err(violations) = validate_fragment(global) {
        let text: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err(SynthesisError::Fragment(text.join("; ")));
    }
    let conjuncts = global.conjuncts();
    let eventually: BTreeSet<usize> = conjuncts
        .iter()
        .enumerate()
        .filter(|(_, c)| matches!(c, Formula::Eventually { .. }))
        .map(|(i, _)| i)
        .collect();
    for i in policy.points.keys().chain(policy.intervals.keys()) {
        if !eventually.contains(i) {
            return Err(SynthesisError::StrayOverride(*i));
        }
    }

    let mut tasks: Vec<LocalTask> = (0..team_count)
        .map(|team| LocalTask {
            team,
            conjuncts: Vec::new(),
        })
        .collect();
    for (i, c) in conjuncts.iter().enumerate() {
        let (op, interval) = split_conjunct(c).expect("validated fragment conjunct");
        let result = results
            .iter()
            .find(|r| r.source == i)
            .ok_or(SynthesisError::MissingDecomposition(i))?;
        let (op, interval) = match op {
            LocalOperator::Always => (LocalOperator::Always, interval),
            LocalOperator::Eventually => {
                let local = policy.eventually_interval(i, &interval)?;
                match policy.mode {
                    TimingMode::PointEventually => (LocalOperator::Eventually, local),
                    TimingMode::IntervalAlways => (LocalOperator::Always, local),
                }
            }
        };
        for cube in &result.cubes {
            let shrunk = cube
                .shrunk(margin)
                .ok()
                .filter(|s| s.radius > 0.0 || margin == 0.0)
                .ok_or(SynthesisError::MarginTooLarge {
                    source_index: i,
                    team: cube.team,
                    radius: cube.radius,
                    margin,
                })?;
            let task = tasks.get_mut(cube.team).ok_or(SynthesisError::MissingCube {
                source_index: i,
                team: cube.team,
            })?;
            task.conjuncts.push(LocalConjunct {
                name: local_name(i, cube.team),
                source: i,
                operator: op,
                interval,
                cube: shrunk,
                raw_radius: cube.radius,
                margin,
            });
        }
    }
    Ok(LocalTaskSet {
        mode: policy.mode,
        margin,
        tasks,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConsistencyViolation {
    /// A team involved in the conjunct has no local conjunct for it.
    Missing {
        #[serde(with = "crate::index_serde")]
        source: usize,
        #[serde(with = "crate::index_serde")]
        team: usize,
    },
    /// A team has more than one local conjunct for the same source.
    Duplicate {
        #[serde(with = "crate::index_serde")]
        source: usize,
        #[serde(with = "crate::index_serde")]
        team: usize,
    },
    /// A team not involved in the conjunct carries a local conjunct for it.
    Unexpected {
        #[serde(with = "crate::index_serde")]
        source: usize,
        #[serde(with = "crate::index_serde")]
        team: usize,
    },
    /// Teams disagree on the local timing of the same conjunct.
    Timing {
        #[serde(with = "crate::index_serde")]
        source: usize,
        #[serde(with = "crate::index_serde::vec")]
        teams: Vec<usize>,
        intervals: Vec<TimeInterval>,
    },
    /// Margin differs from the task set's or does not match the radii.
    Margin {
        #[serde(with = "crate::index_serde")]
        source: usize,
        #[serde(with = "crate::index_serde")]
        team: usize,
        margin: f64,
        expected: f64,
    },
}

impl fmt::Display for ConsistencyViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Missing { source, team } => {
                write!(f, "conjunct {} missing for team {}", source + 1, team + 1)
            }
            Self::Duplicate { source, team } => {
                write!(f, "conjunct {} repeated for team {}", source + 1, team + 1)
            }
            Self::Unexpected { source, team } => {
                write!(f, "team {} is not involved in conjunct {}", team + 1, source + 1)
            }
            Self::Timing { source, intervals, .. } => {
                let iv: Vec<String> = intervals.iter().map(ToString::to_string).collect();
                write!(f, "conjunct {} timed differently: {}", source + 1, iv.join(" vs "))
            }
            Self::Margin {
                source,
                team,
                margin,
                expected,
            } => write!(
                f,
                "conjunct {} team {}: margin {margin} (expected {expected})",
                source + 1,
                team + 1
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub violations: Vec<ConsistencyViolation>,
}

impl ConsistencyReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

const MARGIN_TOL: f64 = 1e-12;

/// Checks that each global conjunct appears exactly once per involved team,
/// with one timing shared by all of them and one uniform margin.
pub fn cross_team_consistency_check(
    tasks: &LocalTaskSet,
    global: &Formula,
    results: &[DecompositionResult],
) -> ConsistencyReport {
    let mut violations = Vec::new();
    for i in 0..global.conjuncts().len() {
        let involved: BTreeSet<usize> = results
            .iter()
            .filter(|r| r.source == i)
            .flat_map(|r| r.teams())
            .collect();
        let mut timings: Vec<(usize, LocalOperator, TimeInterval)> = Vec::new();
        for task in &tasks.tasks {
            let mine: Vec<&LocalConjunct> = task.conjuncts.iter().filter(|c| c.source == i).collect();
            let team = task.team;
            match (involved.contains(&team), mine.len()) {
                (true, 0) => violations.push(ConsistencyViolation::Missing { source: i, team }),
                (false, n) if n > 0 => violations.push(ConsistencyViolation::Unexpected { source: i, team }),
                (_, n) if n > 1 => violations.push(ConsistencyViolation::Duplicate { source: i, team }),
                _ => {}
            }
            for c in mine {
                timings.push((team, c.operator, c.interval));
                let radius_gap = (c.raw_radius - c.margin - c.cube.radius).abs();
                if (c.margin - tasks.margin).abs() > MARGIN_TOL || radius_gap > MARGIN_TOL {
                    violations.push(ConsistencyViolation::Margin {
                        source: i,
                        team,
                        margin: c.raw_radius - c.cube.radius,
                        expected: tasks.margin,
                    });
                }
            }
        }
        for team in &involved {
            if !tasks.tasks.iter().any(|t| t.team == *team) {
                violations.push(ConsistencyViolation::Missing { source: i, team: *team });
            }
        }
        if let Some(&(_, op0, iv0)) = timings.first() {
            if timings.iter().any(|&(_, op, iv)| op != op0 || iv != iv0) {
                violations.push(ConsistencyViolation::Timing {
                    source: i,
                    teams: timings.iter().map(|t| t.0).collect(),
                    intervals: timings.iter().map(|t| t.2).collect(),
                });
            }
        }
    }
    ConsistencyReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{Diagnostics, SolveStatus};
    use crate::stl::parse;

    fn cube(team: usize, source: usize) -> HypercubePredicate {
        HypercubePredicate::new(team, vec![0.0, 0.0], 0.1, vec![0, 1], source).unwrap()
    }

    fn result(source: usize, teams: &[usize]) -> DecompositionResult {
        DecompositionResult {
            source,
            cubes: teams.iter().map(|&t| cube(t, source)).collect(),
            objective: 0.1 * teams.len() as f64,
            status: SolveStatus::Optimal,
            degenerate: false,
            diagnostics: Diagnostics::default(),
        }
    }

    /// Conjunct and team structure of the five-agent example.
    fn five_agents() -> (Formula, Vec<DecompositionResult>) {
        let f = parse("G[0,2.1] h1 and G[2,4] h2 and F[3,7] h3 and F[8,10] h4").unwrap();
        let results = vec![
            result(0, &[0, 1]),
            result(1, &[2, 3]),
            result(2, &[3, 4]),
            result(3, &[1, 4]),
        ];
        (f, results)
    }

    #[test]
    fn point_eventually_tasks() {
        let (f, results) = five_agents();
        let policy = TimingPolicy::point().with_point(2, 7.0).with_point(3, 9.0);
        let tasks = synthesize(&f, &results, &policy, DEFAULT_MARGIN, 5).unwrap();
        let texts: Vec<String> = tasks.tasks.iter().map(LocalTask::formula_text).collect();
        assert_eq!(
            texts,
            vec![
                "G[0,2.1] mu1_1",
                "G[0,2.1] mu1_2 and F[9,9] mu4_2",
                "G[2,4] mu2_3",
                "G[2,4] mu2_4 and F[7,7] mu3_4",
                "F[7,7] mu3_5 and F[9,9] mu4_5",
            ]
        );
        assert!(cross_team_consistency_check(&tasks, &f, &results).is_clean());
        let c = &tasks.tasks[0].conjuncts[0];
        assert!((c.cube.radius - (0.1 - DEFAULT_MARGIN)).abs() < 1e-15);
    }

    #[test]
    fn interval_always_tasks() {
        let (f, results) = five_agents();
        let policy = TimingPolicy::interval()
            .with_interval(2, TimeInterval::new(5.0, 7.0).unwrap())
            .with_interval(3, TimeInterval::new(9.0, 10.0).unwrap());
        let tasks = synthesize(&f, &results, &policy, DEFAULT_MARGIN, 5).unwrap();
        assert_eq!(tasks.tasks[4].formula_text(), "G[5,7] mu3_5 and G[9,10] mu4_5");
        assert_eq!(tasks.tasks[0].formula_text(), "G[0,2.1] mu1_1");
        assert!(cross_team_consistency_check(&tasks, &f, &results).is_clean());
    }

    #[test]
    fn always_only_keeps_intervals() {
        let f = parse("G[1,3] p and G[0.5,2] q").unwrap();
        let results = vec![result(0, &[0]), result(1, &[1])];
        for policy in [TimingPolicy::point(), TimingPolicy::interval()] {
            let tasks = synthesize(&f, &results, &policy, 0.0, 2).unwrap();
            assert_eq!(tasks.tasks[0].formula_text(), "G[1,3] mu1_1");
            assert_eq!(tasks.tasks[1].formula_text(), "G[0.5,2] mu2_2");
        }
    }

    #[test]
    fn default_timings() {
        let iv = TimeInterval::new(3.0, 7.0).unwrap();
        assert_eq!(
            TimingPolicy::point().eventually_interval(0, &iv).unwrap(),
            TimeInterval::point(5.0).unwrap()
        );
        let third = TimingPolicy::interval().eventually_interval(0, &iv).unwrap();
        assert!((third.start() - 13.0 / 3.0).abs() < 1e-12);
        assert!((third.end() - 17.0 / 3.0).abs() < 1e-12);
        let snapped = TimingPolicy::interval()
            .on_grid(0.1)
            .eventually_interval(0, &iv)
            .unwrap();
        assert_eq!(snapped, TimeInterval::new(4.4, 5.6).unwrap());
    }

    #[test]
    fn timing_errors() {
        let iv = TimeInterval::new(3.0, 7.0).unwrap();
        assert!(matches!(
            TimingPolicy::point().with_point(0, 8.0).eventually_interval(0, &iv),
            Err(SynthesisError::TimingOutOfBounds { .. })
        ));
        assert!(matches!(
            TimingPolicy::interval()
                .with_interval(0, TimeInterval::new(6.0, 8.0).unwrap())
                .eventually_interval(0, &iv),
            Err(SynthesisError::TimingOutOfBounds { .. })
        ));
        assert!(matches!(
            TimingPolicy::point()
                .with_interval(0, TimeInterval::new(4.0, 5.0).unwrap())
                .eventually_interval(0, &iv),
            Err(SynthesisError::ModeMismatch { .. })
        ));
    }

    #[test]
    fn missing_decomposition_and_margin() {
        let (f, mut results) = five_agents();
        let policy = TimingPolicy::point();
        assert_eq!(
            synthesize(&f, &results[..3], &policy, 0.0, 5),
            Err(SynthesisError::MissingDecomposition(3))
        );
        results[0].cubes[0].radius = 5e-4;
        assert!(matches!(
            synthesize(&f, &results, &policy, 1e-3, 5),
            Err(SynthesisError::MarginTooLarge {
                source_index: 0,
                team: 0,
                ..
            })
        ));
    }

    #[test]
    fn point_equals_degenerate_interval() {
        let f = parse("F[4,4] p").unwrap();
        let results = vec![result(0, &[0])];
        let a = synthesize(&f, &results, &TimingPolicy::point(), 0.0, 1).unwrap();
        let b = synthesize(&f, &results, &TimingPolicy::interval(), 0.0, 1).unwrap();
        assert_eq!(a.tasks[0].formula_text(), "F[4,4] mu1_1");
        assert_eq!(b.tasks[0].formula_text(), "G[4,4] mu1_1");
    }

    #[test]
    fn detects_edited_timing_and_dropped_conjunct() {
        let (f, results) = five_agents();
        let policy = TimingPolicy::point().with_point(2, 7.0).with_point(3, 9.0);
        let clean = synthesize(&f, &results, &policy, DEFAULT_MARGIN, 5).unwrap();

        let mut edited = clean.clone();
        edited.tasks[4].conjuncts[0].interval = TimeInterval::point(6.0).unwrap();
        let report = cross_team_consistency_check(&edited, &f, &results);
        assert!(matches!(
            report.violations.as_slice(),
            [ConsistencyViolation::Timing { source: 2, .. }]
        ));

        let mut dropped = clean.clone();
        dropped.tasks[1].conjuncts.remove(1);
        let report = cross_team_consistency_check(&dropped, &f, &results);
        assert_eq!(
            report.violations,
            vec![ConsistencyViolation::Missing { source: 3, team: 1 }]
        );

        let mut uneven = clean;
        uneven.tasks[2].conjuncts[0].cube.radius -= 1e-3;
        let report = cross_team_consistency_check(&uneven, &f, &results);
        assert!(matches!(
            report.violations.as_slice(),
            [ConsistencyViolation::Margin { source: 1, team: 2, .. }]
        ));
    }
}
