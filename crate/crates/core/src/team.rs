//! Team partitions and the 0/1 selection algebra linking the global state
//! `x`, the stacked team states `z_l = E_l x`, and predicate footprints
//! `y = B z_l`.
//!
//! Selection matrices are stored as index maps (row -> source column);
//! products are index compositions.

use std::collections::HashMap;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stl::{PredicateFunction, StateCoord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u32);

impl From<u32> for AgentId {
    fn from(v: u32) -> Self {
        AgentId(v)
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PartitionError {
    #[error("no agents given")]
    NoAgents,
    #[error("agent {0} listed twice")]
    DuplicateAgent(AgentId),
    #[error("agent {0} has zero state dimension")]
    ZeroDim(AgentId),
    #[error("team {0} is empty")]
    EmptyTeam(usize),
    #[error("team {team} references unknown agent {agent}")]
    UnknownAgent { team: usize, agent: AgentId },
    #[error("agent {0} belongs to more than one team")]
    Overlap(AgentId),
    #[error("agent {0} belongs to no team")]
    Uncovered(AgentId),
    #[error("team index {0} out of range")]
    TeamIndex(usize),
    #[error("coordinate {0:?} does not exist")]
    CoordOutOfRange(StateCoord),
    #[error("footprint is not in ascending global coordinate order")]
    FootprintOrder,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SelectionError {
    #[error("row {row} selects column {col} but the matrix has {cols} columns")]
    ColumnOutOfRange { row: usize, col: usize, cols: usize },
    #[error("column {0} selected by more than one row")]
    RepeatedColumn(usize),
    #[error("cannot multiply {0}x{1} by {2}x{3}")]
    Shape(usize, usize, usize, usize),
}

/// A 0/1 matrix with exactly one unit entry per row and at most one per
/// column, stored as the source column of each row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionMatrix {
    cols: usize,
    map: Vec<usize>,
}

impl SelectionMatrix {
    pub fn new(cols: usize, map: Vec<usize>) -> Result<Self, SelectionError> {
        let mut seen = vec![false; cols];
        for (row, &col) in map.iter().enumerate() {
            if col >= cols {
                return Err(SelectionError::ColumnOutOfRange { row, col, cols });
            }
            if std::mem::replace(&mut seen[col], true) {
                return Err(SelectionError::RepeatedColumn(col));
            }
        }
        Ok(Self { cols, map })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            cols: n,
            map: (0..n).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.map.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Source column of `row`.
    pub fn source(&self, row: usize) -> usize {
        self.map[row]
    }

    pub fn row_map(&self) -> &[usize] {
        &self.map
    }

    pub fn is_permutation(&self) -> bool {
        self.rows() == self.cols
    }

    pub fn is_identity(&self) -> bool {
        self.is_permutation() && self.map.iter().enumerate().all(|(r, &c)| r == c)
    }

    /// Indices of the columns holding a unit entry, ascending.
    pub fn nonzero_columns(&self) -> Vec<usize> {
        let mut c = self.map.clone();
        c.sort_unstable();
        c
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        self.map.iter().map(|&c| x[c]).collect()
    }

    /// `self * rhs`.
    pub fn compose(&self, rhs: &SelectionMatrix) -> Result<SelectionMatrix, SelectionError> {
        if self.cols != rhs.rows() {
            return Err(SelectionError::Shape(self.rows(), self.cols, rhs.rows(), rhs.cols));
        }
        Ok(SelectionMatrix {
            cols: rhs.cols,
            map: self.map.iter().map(|&c| rhs.map[c]).collect(),
        })
    }

    /// Transpose of a permutation matrix (its inverse).
    pub fn transpose(&self) -> Option<SelectionMatrix> {
        if !self.is_permutation() {
            return None;
        }
        let mut map = vec![0; self.cols];
        for (row, &col) in self.map.iter().enumerate() {
            map[col] = row;
        }
        Some(SelectionMatrix { cols: self.rows(), map })
    }

    /// Vertical concatenation. All parts must share a column count.
    pub fn stack(parts: &[SelectionMatrix]) -> Result<SelectionMatrix, SelectionError> {
        let cols = parts.first().map_or(0, |p| p.cols);
        let mut map = Vec::new();
        for p in parts {
            if p.cols != cols {
                return Err(SelectionError::Shape(p.rows(), p.cols, 0, cols));
            }
            map.extend_from_slice(&p.map);
        }
        SelectionMatrix::new(cols, map)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows(), self.cols);
        for (r, &c) in self.map.iter().enumerate() {
            m[(r, c)] = 1.0;
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub id: AgentId,
    pub dim: usize,
}

/// Disjoint sub-teams covering the agent set. Agents inside each team are
/// kept in ascending id order; the global state stacks agents in the order
/// they were listed.
#[derive(Debug, Clone, PartialEq)]
pub struct TeamPartition {
    agents: Vec<AgentSpec>,
    teams: Vec<Vec<AgentId>>,
    offsets: HashMap<AgentId, usize>,
    team_of: HashMap<AgentId, usize>,
}

impl TeamPartition {
    pub fn new(agents: Vec<AgentSpec>, teams: Vec<Vec<AgentId>>) -> Result<Self, PartitionError> {
        if agents.is_empty() {
            return Err(PartitionError::NoAgents);
        }
        let mut offsets = HashMap::new();
        let mut offset = 0;
        for a in &agents {
            if a.dim == 0 {
                return Err(PartitionError::ZeroDim(a.id));
            }
            if offsets.insert(a.id, offset).is_some() {
                return Err(PartitionError::DuplicateAgent(a.id));
            }
            offset += a.dim;
        }
        let mut team_of = HashMap::new();
        let mut sorted = Vec::with_capacity(teams.len());
        for (l, team) in teams.into_iter().enumerate() {
            if team.is_empty() {
                return Err(PartitionError::EmptyTeam(l));
            }
            for &agent in &team {
                if !offsets.contains_key(&agent) {
                    return Err(PartitionError::UnknownAgent { team: l, agent });
                }
                if team_of.insert(agent, l).is_some() {
                    return Err(PartitionError::Overlap(agent));
                }
            }
            let mut team = team;
            team.sort_unstable();
            sorted.push(team);
        }
        if let Some(a) = agents.iter().find(|a| !team_of.contains_key(&a.id)) {
            return Err(PartitionError::Uncovered(a.id));
        }
        Ok(Self {
            agents,
            teams: sorted,
            offsets,
            team_of,
        })
    }

    /// Every agent in its own team, in listing order.
    pub fn singletons(agents: Vec<AgentSpec>) -> Result<Self, PartitionError> {
        let teams = agents.iter().map(|a| vec![a.id]).collect();
        Self::new(agents, teams)
    }

    pub fn agents(&self) -> &[AgentSpec] {
        &self.agents
    }

    pub fn teams(&self) -> &[Vec<AgentId>] {
        &self.teams
    }

    pub fn team_count(&self) -> usize {
        self.teams.len()
    }

    /// Global state dimension.
    pub fn dim(&self) -> usize {
        self.agents.iter().map(|a| a.dim).sum()
    }

    pub fn agent_dim(&self, id: AgentId) -> Option<usize> {
        self.agents.iter().find(|a| a.id == id).map(|a| a.dim)
    }

    pub fn team(&self, l: usize) -> Result<&[AgentId], PartitionError> {
        self.teams.get(l).map(Vec::as_slice).ok_or(PartitionError::TeamIndex(l))
    }

    pub fn team_of(&self, agent: AgentId) -> Option<usize> {
        self.team_of.get(&agent).copied()
    }

    pub fn team_dim(&self, l: usize) -> Result<usize, PartitionError> {
        Ok(self.team(l)?.iter().map(|a| self.agent_dim(*a).unwrap_or(0)).sum())
    }

    pub fn global_index(&self, c: StateCoord) -> Result<usize, PartitionError> {
        let off = self.offsets.get(&c.agent).ok_or(PartitionError::CoordOutOfRange(c))?;
        let dim = self.agent_dim(c.agent).unwrap_or(0);
        if c.component >= dim {
            return Err(PartitionError::CoordOutOfRange(c));
        }
        Ok(off + c.component)
    }

    /// Global coordinates of team `l`, in team order.
    pub fn team_coords(&self, l: usize) -> Result<Vec<StateCoord>, PartitionError> {
        let mut out = Vec::new();
        for &agent in self.team(l)? {
            let dim = self.agent_dim(agent).unwrap_or(0);
            out.extend((0..dim).map(|k| StateCoord::new(agent, k)));
        }
        Ok(out)
    }

    /// `E_l`: extracts team `l`'s coordinates from the global state.
    pub fn selection_for_team(&self, l: usize) -> Result<SelectionMatrix, PartitionError> {
        let map = self
            .team_coords(l)?
            .into_iter()
            .map(|c| self.global_index(c))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SelectionMatrix::new(self.dim(), map).expect("team coordinates are distinct"))
    }

    /// `A`: reassembles the global state from the stacked team states,
    /// so that `A * stack(E_1, ..., E_v)` is the identity.
    pub fn global_permutation(&self) -> SelectionMatrix {
        let parts: Vec<_> = (0..self.team_count())
            .map(|l| self.selection_for_team(l).expect("valid team index"))
            .collect();
        SelectionMatrix::stack(&parts)
            .expect("teams partition the coordinates")
            .transpose()
            .expect("stacked selections are square")
    }
}

/// The part of a predicate footprint that falls inside one team.
#[derive(Debug, Clone, PartialEq)]
pub struct TeamFootprint {
    pub team: usize,
    /// `B_i^l`, selecting `d_i^l` coordinates out of the team state.
    pub selection: SelectionMatrix,
    /// `J`: team-local indices of the selected coordinates, ascending.
    pub local_indices: Vec<usize>,
    /// Position of each selected coordinate inside the predicate's argument.
    pub positions: Vec<usize>,
}

impl TeamFootprint {
    pub fn dim(&self) -> usize {
        self.local_indices.len()
    }
}

/// A predicate footprint split across the teams it touches (ascending team
/// index).
#[derive(Debug, Clone, PartialEq)]
pub struct FootprintSplit {
    pub parts: Vec<TeamFootprint>,
}

impl FootprintSplit {
    /// Indices of the teams involved.
    pub fn teams(&self) -> Vec<usize> {
        self.parts.iter().map(|p| p.team).collect()
    }

    /// Total number of footprint coordinates.
    pub fn dim(&self) -> usize {
        self.parts.iter().map(TeamFootprint::dim).sum()
    }
}

pub fn footprint_selection(pred: &PredicateFunction, p: &TeamPartition) -> Result<FootprintSplit, PartitionError> {
    let mut last = None;
    let mut parts: Vec<TeamFootprint> = Vec::new();
    for (pos, &c) in pred.footprint().iter().enumerate() {
        let g = p.global_index(c)?;
        if last.is_some_and(|prev| g <= prev) {
            return Err(PartitionError::FootprintOrder);
        }
        last = Some(g);
        let team = p.team_of(c.agent).ok_or(PartitionError::CoordOutOfRange(c))?;
        let local = p
            .team_coords(team)?
            .iter()
            .position(|tc| *tc == c)
            .ok_or(PartitionError::CoordOutOfRange(c))?;
        match parts.iter_mut().find(|t| t.team == team) {
            Some(t) => {
                t.local_indices.push(local);
                t.positions.push(pos);
            }
            None => parts.push(TeamFootprint {
                team,
                selection: SelectionMatrix::identity(0),
                local_indices: vec![local],
                positions: vec![pos],
            }),
        }
    }
    for t in &mut parts {
        // keep J ascending, carrying positions along
        let mut pairs: Vec<_> = t
            .local_indices
            .iter()
            .copied()
            .zip(t.positions.iter().copied())
            .collect();
        pairs.sort_unstable();
        t.local_indices = pairs.iter().map(|x| x.0).collect();
        t.positions = pairs.iter().map(|x| x.1).collect();
        t.selection = SelectionMatrix::new(p.team_dim(t.team)?, t.local_indices.clone())
            .expect("footprint coordinates are distinct");
    }
    parts.sort_by_key(|t| t.team);
    Ok(FootprintSplit { parts })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agents(dims: &[usize]) -> Vec<AgentSpec> {
        dims.iter()
            .enumerate()
            .map(|(k, &dim)| AgentSpec {
                id: AgentId(k as u32 + 1),
                dim,
            })
            .collect()
    }

    fn ids(v: &[u32]) -> Vec<AgentId> {
        v.iter().map(|&k| AgentId(k)).collect()
    }

    #[test]
    fn two_singleton_teams() {
        let p = TeamPartition::singletons(agents(&[2, 2])).unwrap();
        let e2 = p.selection_for_team(1).unwrap();
        assert_eq!(e2.row_map(), &[2, 3]);
        assert_eq!(e2.cols(), 4);
        assert_eq!(e2.apply(&[1.0, 2.0, 3.0, 4.0]), vec![3.0, 4.0]);
    }

    #[test]
    fn single_team_is_identity() {
        let p = TeamPartition::new(agents(&[2, 1, 3]), vec![ids(&[3, 1, 2])]).unwrap();
        assert!(p.selection_for_team(0).unwrap().is_identity());
        assert!(p.global_permutation().is_identity());
    }

    #[test]
    fn five_agent_singletons_select_pairs() {
        let p = TeamPartition::singletons(agents(&[2; 5])).unwrap();
        for k in 0..5 {
            assert_eq!(p.selection_for_team(k).unwrap().row_map(), &[2 * k, 2 * k + 1]);
        }
    }

    #[test]
    fn reversed_teams_swap() {
        let p = TeamPartition::new(agents(&[1, 1]), vec![ids(&[2]), ids(&[1])]).unwrap();
        let a = p.global_permutation();
        assert_eq!(a.row_map(), &[1, 0]);
        assert_eq!(a.apply(&[10.0, 20.0]), vec![20.0, 10.0]);
    }

    #[test]
    fn partition_errors() {
        assert_eq!(
            TeamPartition::new(agents(&[1, 1]), vec![ids(&[1, 2]), ids(&[2])]),
            Err(PartitionError::Overlap(AgentId(2)))
        );
        assert_eq!(
            TeamPartition::new(agents(&[1, 1]), vec![ids(&[1])]),
            Err(PartitionError::Uncovered(AgentId(2)))
        );
        assert!(matches!(
            TeamPartition::new(agents(&[1]), vec![ids(&[1, 7])]),
            Err(PartitionError::UnknownAgent { .. })
        ));
        assert_eq!(
            TeamPartition::new(agents(&[1]), vec![vec![], ids(&[1])]),
            Err(PartitionError::EmptyTeam(0))
        );
        let p = TeamPartition::singletons(agents(&[1])).unwrap();
        assert_eq!(p.selection_for_team(3), Err(PartitionError::TeamIndex(3)));
    }

    #[test]
    fn selection_matrix_rules() {
        assert!(SelectionMatrix::new(3, vec![0, 0]).is_err());
        assert!(SelectionMatrix::new(3, vec![3]).is_err());
        let s = SelectionMatrix::new(3, vec![2, 0]).unwrap();
        let d = s.to_dense();
        for r in 0..2 {
            assert_eq!(d.row(r).sum(), 1.0);
        }
        for c in 0..3 {
            assert!(d.column(c).sum() <= 1.0);
        }
    }

    #[test]
    fn footprint_across_teams() {
        use nalgebra::DMatrix;
        let p = TeamPartition::new(agents(&[2, 2, 2]), vec![ids(&[1, 3]), ids(&[2])]).unwrap();
        let fp = vec![
            StateCoord::new(1, 1),
            StateCoord::new(2, 0),
            StateCoord::new(3, 0),
            StateCoord::new(3, 1),
        ];
        let h = PredicateFunction::concave_quadratic(1.0, vec![0.0; 4], DMatrix::identity(4, 4), fp).unwrap();
        let split = footprint_selection(&h, &p).unwrap();
        assert_eq!(split.teams(), vec![0, 1]);
        assert_eq!(split.dim(), 4);
        assert_eq!(split.parts[0].local_indices, vec![1, 2, 3]);
        assert_eq!(split.parts[0].positions, vec![0, 2, 3]);
        assert_eq!(split.parts[1].local_indices, vec![0]);
        assert_eq!(split.parts[1].positions, vec![1]);
        assert_eq!(split.parts[0].selection.cols(), 4);
    }

    #[test]
    fn footprint_out_of_range() {
        let p = TeamPartition::singletons(agents(&[2])).unwrap();
        let h = PredicateFunction::affine(vec![1.0], 0.0, vec![StateCoord::new(1, 5)]).unwrap();
        assert!(matches!(
            footprint_selection(&h, &p),
            Err(PartitionError::CoordOutOfRange(_))
        ));
        let h2 =
            PredicateFunction::affine(vec![1.0, 1.0], 0.0, vec![StateCoord::new(1, 1), StateCoord::new(1, 0)]).unwrap();
        assert_eq!(footprint_selection(&h2, &p), Err(PartitionError::FootprintOrder));
    }
}
