//! Waypoint planner for a team's cube tasks.
//!
//! Each agent's coordinates are handled on their own: at every sample the
//! active requirements are intersected into one box, and the agent steers
//! toward the next required box along a straight line, as fast as the
//! input bound allows. The input cancels the drift `A x`, so the state
//! moves exactly along the commanded direction.

use nalgebra::DVector;
use thiserror::Error;

use super::dynamics::{simulate_dynamics, LinearAgent, SimError, StateViolation};
use crate::stl::{sample_count, Trajectory, TrajectoryError};
use crate::synthesis::{LocalOperator, LocalTask};
use crate::team::AgentId;

/// Fraction of each box's half-width kept as clearance around targets.
const CLEARANCE: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error(transparent)]
    Grid(#[from] TrajectoryError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("team state has {found} coordinates but the agents provide {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("agent {agent}: boxes of conjuncts {} and {} do not intersect at t = {time}", first + 1, second + 1)]
    Conflict {
        agent: AgentId,
        time: f64,
        first: usize,
        second: usize,
    },
    #[error(
        "agent {agent}: box of conjunct {} at t = {time} is {distance:.4} away, \
         at most {reachable:.4} is reachable",
        source_index + 1
    )]
    Unreachable {
        agent: AgentId,
        time: f64,
        source_index: usize,
        distance: f64,
        reachable: f64,
    },
    #[error("agent {agent}: missed the box of conjunct {} at t = {time}", source_index + 1)]
    DeadlineMissed {
        agent: AgentId,
        time: f64,
        source_index: usize,
    },
}

impl PlanError {
    /// Time of the violated requirement, for errors tied to one.
    pub fn deadline(&self) -> Option<f64> {
        match self {
            PlanError::Conflict { time, .. }
            | PlanError::Unreachable { time, .. }
            | PlanError::DeadlineMissed { time, .. } => Some(*time),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeamPlan {
    /// Stacked team state, agents in team order.
    pub trajectory: Trajectory,
    /// Per agent, the inputs applied at each step.
    pub inputs: Vec<Vec<Vec<f64>>>,
    pub state_violations: Vec<StateViolation>,
}

/// Required interval for one coordinate at one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Bound {
    lo: f64,
    hi: f64,
    source: usize,
}

/// Per-sample, per-component requirements of one agent.
struct Requirements {
    slots: Vec<Vec<Option<Bound>>>,
}

impl Requirements {
    fn new(samples: usize, dim: usize) -> Self {
        Self {
            slots: vec![vec![None; dim]; samples],
        }
    }

    fn add(&mut self, k: usize, comp: usize, b: Bound) -> Result<(), (usize, usize)> {
        let slot = &mut self.slots[k][comp];
        *slot = Some(match *slot {
            None => b,
            Some(old) => {
                let merged = Bound {
                    lo: old.lo.max(b.lo),
                    hi: old.hi.min(b.hi),
                    source: old.source,
                };
                if merged.lo > merged.hi {
                    return Err((old.source, b.source));
                }
                merged
            }
        });
        Ok(())
    }

    fn constrained(&self, k: usize) -> bool {
        self.slots[k].iter().any(Option::is_some)
    }

    fn next_constrained(&self, from: usize) -> Option<usize> {
        (from..self.slots.len()).find(|&k| self.constrained(k))
    }

    /// First constrained sample after `k` whose box differs from `k`'s.
    fn next_different(&self, k: usize) -> Option<usize> {
        (k + 1..self.slots.len()).find(|&j| self.constrained(j) && self.slots[j] != self.slots[k])
    }
}

/// Upper bound on `||x_k - x_0||` for every `k`, from the Euler recursion
/// `||x_{k+1}|| <= (1 + dt ||A||) ||x_k|| + dt d_u`.
fn reach_bounds(agent: &LinearAgent, samples: usize, dt: f64) -> Vec<f64> {
    let a_norm = agent.dynamics().norm();
    let mut norm = agent.initial_state().norm();
    let mut reach = 0.0;
    let mut out = Vec::with_capacity(samples);
    for _ in 0..samples {
        out.push(reach);
        reach += dt * (a_norm * norm + agent.input_bound());
        norm = (1.0 + dt * a_norm) * norm + dt * agent.input_bound();
    }
    out
}

fn distance_to_box(x: &DVector<f64>, slots: &[Option<Bound>]) -> f64 {
    slots
        .iter()
        .enumerate()
        .filter_map(|(m, b)| b.map(|b| (x[m] - x[m].clamp(b.lo, b.hi)).powi(2)))
        .sum::<f64>()
        .sqrt()
}

/// Input moving `x` toward `target` in one step if the bound allows, or as
/// far along the straight line as it does.
fn steer(agent: &LinearAgent, x: &DVector<f64>, target: &DVector<f64>, dt: f64) -> DVector<f64> {
    let d_u = agent.input_bound();
    let w = -(agent.dynamics() * x);
    let v = (target - x) / dt;
    let full = &w + &v;
    if full.norm() <= d_u {
        return full;
    }
    let ww = w.norm_squared();
    if ww >= d_u * d_u {
        // Cannot even cancel the drift: push against it as hard as allowed.
        return w * (d_u / ww.sqrt());
    }
    let vv = v.norm_squared();
    let wv = w.dot(&v);
    let alpha = (-wv + (wv * wv - vv * (ww - d_u * d_u)).sqrt()) / vv;
    let u = w + v * alpha.clamp(0.0, 1.0);
    // Stay strictly inside the bound despite rounding.
    let n = u.norm();
    if n > d_u {
        u * (d_u / n)
    } else {
        u
    }
}

fn plan_agent(agent: &LinearAgent, req: &Requirements, samples: usize, dt: f64) -> Result<Vec<Vec<f64>>, PlanError> {
    let x0 = agent.initial_state().clone();
    let reach = reach_bounds(agent, samples, dt);
    for (k, &reachable) in reach.iter().enumerate().take(samples) {
        if !req.constrained(k) {
            continue;
        }
        let distance = distance_to_box(&x0, &req.slots[k]);
        if distance > reachable {
            let source_index = req.slots[k].iter().flatten().next().expect("constrained").source;
            return Err(PlanError::Unreachable {
                agent: agent.id(),
                time: k as f64 * dt,
                source_index,
                distance,
                reachable,
            });
        }
    }

    let dim = agent.dim();
    let mut x = x0;
    let mut inputs = Vec::with_capacity(samples.saturating_sub(1));
    for k in 0..samples.saturating_sub(1) {
        let target = match req.next_constrained(k + 1) {
            None => x.clone(),
            Some(j) => {
                let after = req.next_different(j);
                DVector::from_fn(dim, |m, _| {
                    let aim = after
                        .and_then(|a| req.slots[a][m])
                        .map_or(x[m], |b| 0.5 * (b.lo + b.hi));
                    match req.slots[j][m] {
                        Some(b) => {
                            let mid = 0.5 * (b.lo + b.hi);
                            let half = (1.0 - CLEARANCE) * 0.5 * (b.hi - b.lo);
                            aim.clamp(mid - half, mid + half)
                        }
                        None => aim,
                    }
                })
            }
        };
        let u = steer(agent, &x, &target, dt);
        x = agent.step(&x, &u, dt);
        inputs.push(u.iter().copied().collect());
    }
    Ok(inputs)
}

/// Plans a trajectory of the team state satisfying every conjunct of
/// `task`. `agents` lists the team's agents in team order; the team state
/// stacks their states.
pub fn plan_team_trajectory(
    task: &LocalTask,
    agents: &[&LinearAgent],
    horizon: f64,
    dt: f64,
) -> Result<TeamPlan, PlanError> {
    let samples = sample_count(horizon, dt);
    let grid = Trajectory::from_flat(dt, 0.0, 1, vec![0.0; samples])?;
    let offsets: Vec<usize> = agents
        .iter()
        .scan(0, |acc, a| {
            let o = *acc;
            *acc += a.dim();
            Some(o)
        })
        .collect();
    let team_dim: usize = agents.iter().map(|a| a.dim()).sum();
    let locate = |eta: usize| -> Option<(usize, usize)> {
        let j = offsets.iter().rposition(|&o| o <= eta)?;
        (eta < team_dim).then(|| (j, eta - offsets[j]))
    };

    let mut reqs: Vec<Requirements> = agents.iter().map(|a| Requirements::new(samples, a.dim())).collect();
    for c in &task.conjuncts {
        if c.cube.center.len() != team_dim {
            return Err(PlanError::Dimension {
                expected: team_dim,
                found: c.cube.center.len(),
            });
        }
        let window = grid.window(c.interval.start(), c.interval.end())?;
        let indices: Vec<usize> = match c.operator {
            LocalOperator::Always => window.collect(),
            LocalOperator::Eventually => vec![*window.end()],
        };
        for (eta, lo, hi) in c.cube.bounds() {
            let (j, m) = locate(eta).ok_or(PlanError::Dimension {
                expected: team_dim,
                found: eta + 1,
            })?;
            for &k in &indices {
                reqs[j]
                    .add(
                        k,
                        m,
                        Bound {
                            lo,
                            hi,
                            source: c.source,
                        },
                    )
                    .map_err(|(first, second)| PlanError::Conflict {
                        agent: agents[j].id(),
                        time: grid.time(k),
                        first,
                        second,
                    })?;
            }
        }
    }

    let mut rollouts = Vec::with_capacity(agents.len());
    let mut all_inputs = Vec::with_capacity(agents.len());
    let mut state_violations = Vec::new();
    for (agent, req) in agents.iter().zip(&reqs) {
        let inputs = plan_agent(agent, req, samples, dt)?;
        let rollout = simulate_dynamics(agent, &inputs, horizon, dt)?;
        // Strict containment wherever a box is required.
        for k in 0..samples {
            let x = rollout.trajectory.sample(k);
            for (m, b) in req.slots[k].iter().enumerate() {
                if let Some(b) = b {
                    if !(b.lo < x[m] && x[m] < b.hi) {
                        return Err(PlanError::DeadlineMissed {
                            agent: agent.id(),
                            time: grid.time(k),
                            source_index: b.source,
                        });
                    }
                }
            }
        }
        state_violations.extend(rollout.state_violations.iter().map(|&k| StateViolation {
            agent: agent.id(),
            time: grid.time(k),
            norm: DVector::from_column_slice(rollout.trajectory.sample(k)).norm(),
        }));
        rollouts.push(rollout.trajectory);
        all_inputs.push(inputs);
    }

    let mut data = Vec::with_capacity(samples * team_dim);
    for k in 0..samples {
        for r in &rollouts {
            data.extend_from_slice(r.sample(k));
        }
    }
    Ok(TeamPlan {
        trajectory: Trajectory::from_flat(dt, 0.0, team_dim, data)?,
        inputs: all_inputs,
        state_violations,
    })
}
