//! Seeded random scenarios and decomposition instances.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::hypercube::Domain;
use crate::scenario::{
    AgentEntry, FamilyKind, PredicateEntry, QuadraticParameters, Scenario, ScenarioFile, TimingChoice, TimingEntry,
};
use crate::sim::{run_scenario, RunOptions, Stage};
use crate::solver::SolverConfig;
use crate::stl::{sample_count, PredicateFunction, StateCoord, Trajectory};
use crate::synthesis::{LocalOperator, LocalTaskSet, TimingMode, DEFAULT_MARGIN};
use crate::team::{AgentId, AgentSpec, TeamPartition};

pub const FUZZ_HORIZON: f64 = 10.0;
pub const FUZZ_DT: f64 = 0.1;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn round1(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}

/// Random PSD weight `L^T L / d + 0.1 I`.
fn random_weight(rng: &mut impl Rng, d: usize) -> DMatrix<f64> {
    let l = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    let w = l.transpose() * &l / d as f64 + DMatrix::identity(d, d) * 0.1;
    // Exact symmetry for the serialized copy.
    (&w + w.transpose()) * 0.5
}

/// Random scenario: 2-6 agents of dimension 1-3 split into random teams,
/// 1-4 always/eventually conjuncts over concave quadratics reading one or
/// two agents. Level sets are non-empty by construction (the center lies
/// inside the domain and the offset is positive).
pub fn random_scenario_file(seed: u64, mode: TimingMode) -> ScenarioFile {
    let mut rng = rng(seed);
    let n = rng.random_range(2..=6usize);
    let agents: Vec<AgentEntry> = (1..=n as u32)
        .map(|id| {
            let dim = rng.random_range(1..=3usize);
            AgentEntry {
                id,
                dim,
                dynamics: (0..dim * dim).map(|_| round1(rng.random_range(-0.5..0.5))).collect(),
                state_bound: 1.0,
                input_bound: 5.0,
                initial_state: None,
            }
        })
        .collect();

    let team_count = rng.random_range(1..=n);
    let mut teams: Vec<Vec<u32>> = vec![Vec::new(); team_count];
    for (k, a) in agents.iter().enumerate() {
        // Seed every team with one agent, then scatter the rest.
        let t = if k < team_count {
            k
        } else {
            rng.random_range(0..team_count)
        };
        teams[t].push(a.id);
    }

    let conjuncts = rng.random_range(1..=4usize);
    let mut predicates = BTreeMap::new();
    let mut parts = Vec::new();
    for i in 1..=conjuncts {
        let first = rng.random_range(0..n);
        let mut readers = vec![first];
        if rng.random_bool(0.6) {
            let second = rng.random_range(0..n);
            if second != first {
                readers.push(second);
            }
        }
        // Footprints follow the global (listing) order.
        readers.sort_unstable();
        let mut footprint = Vec::new();
        let mut center = Vec::new();
        for &r in &readers {
            let a = &agents[r];
            let half = a.state_bound / (a.dim as f64).sqrt();
            for comp in 1..=a.dim {
                footprint.push((a.id, comp));
                center.push(rng.random_range(-0.4 * half..0.4 * half));
            }
        }
        let d = footprint.len();
        let w = random_weight(&mut rng, d);
        let offset = rng.random_range(0.05..0.3);
        let name = format!("h{i}");
        predicates.insert(
            name.clone(),
            PredicateEntry {
                family: FamilyKind::ConcaveQuadratic,
                parameters: serde_json::to_value(QuadraticParameters {
                    offset,
                    center,
                    weight: (0..d).map(|r| (0..d).map(|c| w[(r, c)]).collect()).collect(),
                })
                .expect("parameters serialize"),
                footprint,
            },
        );
        let a = round1(rng.random_range(1.0..8.0));
        let b = round1((a + rng.random_range(0.0..2.0)).min(FUZZ_HORIZON));
        let op = if rng.random_bool(0.5) { "G" } else { "F" };
        parts.push(format!("{op}[{a},{b}] {name}"));
    }

    ScenarioFile {
        agents,
        teams,
        predicates,
        formula: parts.join(" and "),
        horizon: FUZZ_HORIZON,
        dt: FUZZ_DT,
        timing: TimingEntry {
            mode: match mode {
                TimingMode::PointEventually => TimingChoice::Point,
                TimingMode::IntervalAlways => TimingChoice::Interval,
            },
            ..TimingEntry::default()
        },
        solver: SolverConfig::default(),
        margin: DEFAULT_MARGIN,
    }
}

pub fn random_scenario(seed: u64, mode: TimingMode) -> Scenario {
    Scenario::try_from(&random_scenario_file(seed, mode)).expect("generated scenarios are valid")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum FuzzOutcome {
    Completed {
        seed: u64,
        mode: TimingMode,
        all_local_positive: bool,
        global_robustness: f64,
        soundness_violation: bool,
    },
    Failed {
        seed: u64,
        mode: TimingMode,
        stage: Stage,
        infeasible: bool,
        message: String,
    },
}

impl FuzzOutcome {
    pub fn soundness_violation(&self) -> bool {
        matches!(
            self,
            FuzzOutcome::Completed {
                soundness_violation: true,
                ..
            }
        )
    }

    pub fn all_local_positive(&self) -> bool {
        matches!(
            self,
            FuzzOutcome::Completed {
                all_local_positive: true,
                ..
            }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FuzzSummary {
    pub scenarios: usize,
    pub completed: usize,
    pub locally_satisfied: usize,
    pub soundness_violations: usize,
    pub outcomes: Vec<FuzzOutcome>,
}

/// Runs `count` random scenarios with seeds `seed, seed + 1, ...`,
/// alternating the timing mode.
pub fn run_fuzz(count: usize, seed: u64) -> FuzzSummary {
    let outcomes: Vec<FuzzOutcome> = (0..count as u64)
        .into_par_iter()
        .map(|k| {
            let s = seed.wrapping_add(k);
            let mode = if k % 2 == 0 {
                TimingMode::PointEventually
            } else {
                TimingMode::IntervalAlways
            };
            let scenario = random_scenario(s, mode);
            match run_scenario(&scenario, &RunOptions::default()) {
                Ok(run) => FuzzOutcome::Completed {
                    seed: s,
                    mode,
                    all_local_positive: run.report.all_local_positive,
                    global_robustness: run.report.global_robustness,
                    soundness_violation: run.report.soundness_violation,
                },
                Err(e) => FuzzOutcome::Failed {
                    seed: s,
                    mode,
                    stage: e.stage(),
                    infeasible: e.is_infeasible(),
                    message: e.to_string(),
                },
            }
        })
        .collect();
    FuzzSummary {
        scenarios: count,
        completed: outcomes
            .iter()
            .filter(|o| matches!(o, FuzzOutcome::Completed { .. }))
            .count(),
        locally_satisfied: outcomes.iter().filter(|o| o.all_local_positive()).count(),
        soundness_violations: outcomes.iter().filter(|o| o.soundness_violation()).count(),
        outcomes,
    }
}

/// A small decomposition instance: predicate, partition, domain.
#[derive(Debug, Clone)]
pub struct Instance {
    pub predicate: PredicateFunction,
    pub partition: TeamPartition,
    pub domain: Domain,
}

/// Random instance whose decision vector has at most 6 entries. Teams are
/// singletons over agents 1..; the predicate reads all coordinates.
pub fn random_instance(rng: &mut impl Rng) -> Instance {
    let shapes: [&[usize]; 7] = [&[1], &[2], &[3], &[4], &[1, 1], &[1, 2], &[2, 2]];
    let dims = shapes[rng.random_range(0..shapes.len())];
    let agents: Vec<AgentSpec> = dims
        .iter()
        .enumerate()
        .map(|(k, &dim)| AgentSpec {
            id: AgentId(k as u32 + 1),
            dim,
        })
        .collect();
    let partition = TeamPartition::singletons(agents.clone()).expect("distinct agents");
    let footprint: Vec<StateCoord> = agents
        .iter()
        .flat_map(|a| (0..a.dim).map(move |c| StateCoord::new(a.id, c)))
        .collect();
    let d = footprint.len();
    let domain = Domain::new(vec![-1.0; d], vec![1.0; d]).expect("unit box");
    let predicate = if rng.random_bool(0.75) {
        let center: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..0.5)).collect();
        let w = random_weight(rng, d);
        PredicateFunction::concave_quadratic(rng.random_range(0.05..0.5), center, w, footprint)
    } else {
        let g: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        PredicateFunction::affine(g, rng.random_range(0.1..0.8), footprint)
    }
    .expect("valid random predicate");
    Instance {
        predicate,
        partition,
        domain,
    }
}

/// Team trajectories through random knots every half second (plus every
/// requirement start and end), drawn around the local task boxes with some
/// spill-over, interpolated linearly. No planner involved.
pub fn random_spline_team(
    rng: &mut impl Rng,
    tasks: &LocalTaskSet,
    team: usize,
    team_dim: usize,
    half_width: &[f64],
    spill: f64,
) -> Trajectory {
    let n = sample_count(FUZZ_HORIZON, FUZZ_DT);
    let grid = Trajectory::from_flat(FUZZ_DT, 0.0, 1, vec![0.0; n]).expect("grid");
    // Required box per sample and coordinate (first conjunct wins).
    let mut boxes: Vec<Vec<Option<(f64, f64)>>> = vec![vec![None; team_dim]; n];
    let mut knots = vec![false; n];
    for k in (0..n).step_by(5) {
        knots[k] = true;
    }
    knots[n - 1] = true;
    if let Some(task) = tasks.task(team) {
        for c in &task.conjuncts {
            let w = grid
                .window(c.interval.start(), c.interval.end())
                .expect("inside horizon");
            let idx: Vec<usize> = match c.operator {
                LocalOperator::Always => w.collect(),
                LocalOperator::Eventually => vec![*w.end()],
            };
            knots[idx[0]] = true;
            knots[*idx.last().expect("non-empty window")] = true;
            for &k in &idx {
                for (eta, lo, hi) in c.cube.bounds() {
                    boxes[k][eta].get_or_insert((lo, hi));
                }
            }
        }
    }
    let mut data = vec![0.0; n * team_dim];
    for eta in 0..team_dim {
        let knot_values: Vec<(usize, f64)> = (0..n)
            .filter(|&k| knots[k])
            .map(|k| {
                let v = match boxes[k][eta] {
                    Some((lo, hi)) => {
                        let mid = 0.5 * (lo + hi);
                        let r = 0.5 * (hi - lo);
                        mid + rng.random_range(-1.0..1.0) * r * (1.0 + spill)
                    }
                    None => rng.random_range(-half_width[eta]..half_width[eta]),
                };
                (k, v)
            })
            .collect();
        for pair in knot_values.windows(2) {
            let ((k0, v0), (k1, v1)) = (pair[0], pair[1]);
            for k in k0..=k1 {
                let s = (k - k0) as f64 / (k1 - k0) as f64;
                data[k * team_dim + eta] = v0 + s * (v1 - v0);
            }
        }
    }
    Trajectory::from_flat(FUZZ_DT, 0.0, team_dim, data).expect("consistent spline")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenarios_are_deterministic_and_valid() {
        for seed in 0..20 {
            let a = random_scenario_file(seed, TimingMode::PointEventually);
            let b = random_scenario_file(seed, TimingMode::PointEventually);
            assert_eq!(a, b);
            let s = Scenario::try_from(&a).unwrap();
            assert!((2..=6).contains(&s.agents.len()));
            assert!(s.agents.iter().all(|x| (1..=3).contains(&x.dim())));
        }
    }

    #[test]
    fn instances_stay_small() {
        let mut r = rng(7);
        for _ in 0..50 {
            let inst = random_instance(&mut r);
            let vars = inst.predicate.dim() + inst.partition.team_count();
            assert!(vars <= 6);
        }
    }
}
