use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::team::AgentId;

/// One coordinate of the global state: component `component` of agent
/// `agent`'s state vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(AgentId, usize)", into = "(AgentId, usize)")]
pub struct StateCoord {
    pub agent: AgentId,
    pub component: usize,
}

impl StateCoord {
    pub fn new(agent: impl Into<AgentId>, component: usize) -> Self {
        Self {
            agent: agent.into(),
            component,
        }
    }
}

impl From<(AgentId, usize)> for StateCoord {
    fn from((agent, component): (AgentId, usize)) -> Self {
        Self { agent, component }
    }
}

impl From<StateCoord> for (AgentId, usize) {
    fn from(c: StateCoord) -> Self {
        (c.agent, c.component)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PredicateError {
    #[error("predicate has an empty footprint")]
    EmptyFootprint,
    #[error("parameter dimension {found} does not match footprint size {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("weight matrix is not symmetric")]
    NotSymmetric,
    #[error("weight matrix is not positive semidefinite (min eigenvalue {0})")]
    NotPsd(f64),
    #[error("footprint entry {0:?} appears more than once")]
    DuplicateCoord(StateCoord),
    #[error("non-finite parameter")]
    NotFinite,
}

/// Parametric family of a predicate function `h(y)`, where `y` is the
/// vector of footprint coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum PredicateFamily {
    /// `h(y) = offset - (y - center)^T weight (y - center)`, weight PSD.
    ConcaveQuadratic {
        offset: f64,
        center: DVector<f64>,
        weight: DMatrix<f64>,
    },
    /// `h(y) = gradient^T y + offset`.
    Affine { gradient: DVector<f64>, offset: f64 },
}

/// A predicate function together with the global-state coordinates it reads.
#[derive(Debug, Clone, PartialEq)]
pub struct PredicateFunction {
    family: PredicateFamily,
    footprint: Vec<StateCoord>,
}

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

impl PredicateFunction {
    pub fn new(family: PredicateFamily, footprint: Vec<StateCoord>) -> Result<Self, PredicateError> {
        if footprint.is_empty() {
            return Err(PredicateError::EmptyFootprint);
        }
        for (k, c) in footprint.iter().enumerate() {
            if footprint[..k].contains(c) {
                return Err(PredicateError::DuplicateCoord(*c));
            }
        }
        let d = footprint.len();
        match &family {
            PredicateFamily::ConcaveQuadratic { offset, center, weight } => {
                if center.len() != d {
                    return Err(PredicateError::Dimension {
                        expected: d,
                        found: center.len(),
                    });
                }
                if weight.nrows() != d || weight.ncols() != d {
                    return Err(PredicateError::Dimension {
                        expected: d,
                        found: weight.nrows().max(weight.ncols()),
                    });
                }
                if !offset.is_finite() || center.iter().any(|v| !v.is_finite()) || weight.iter().any(|v| !v.is_finite())
                {
                    return Err(PredicateError::NotFinite);
                }
                let scale = weight.amax().max(1.0);
                if (weight - weight.transpose()).amax() > SYMMETRY_TOL * scale {
                    return Err(PredicateError::NotSymmetric);
                }
                let min_eig = SymmetricEigen::new(weight.clone()).eigenvalues.min();
                if min_eig < -PSD_TOL * scale {
                    return Err(PredicateError::NotPsd(min_eig));
                }
            }
            PredicateFamily::Affine { gradient, offset } => {
                if gradient.len() != d {
                    return Err(PredicateError::Dimension {
                        expected: d,
                        found: gradient.len(),
                    });
                }
                if !offset.is_finite() || gradient.iter().any(|v| !v.is_finite()) {
                    return Err(PredicateError::NotFinite);
                }
            }
        }
        Ok(Self { family, footprint })
    }

    /// `offset - (y - center)^T weight (y - center)`.
    pub fn concave_quadratic(
        offset: f64,
        center: Vec<f64>,
        weight: DMatrix<f64>,
        footprint: Vec<StateCoord>,
    ) -> Result<Self, PredicateError> {
        Self::new(
            PredicateFamily::ConcaveQuadratic {
                offset,
                center: DVector::from_vec(center),
                weight,
            },
            footprint,
        )
    }

    /// `gradient^T y + offset`.
    pub fn affine(gradient: Vec<f64>, offset: f64, footprint: Vec<StateCoord>) -> Result<Self, PredicateError> {
        Self::new(
            PredicateFamily::Affine {
                gradient: DVector::from_vec(gradient),
                offset,
            },
            footprint,
        )
    }

    pub fn family(&self) -> &PredicateFamily {
        &self.family
    }

    pub fn footprint(&self) -> &[StateCoord] {
        &self.footprint
    }

    /// Number of coordinates the function reads.
    pub fn dim(&self) -> usize {
        self.footprint.len()
    }

    pub fn value(&self, y: &[f64]) -> f64 {
        debug_assert_eq!(y.len(), self.dim());
        match &self.family {
            PredicateFamily::ConcaveQuadratic { offset, center, weight } => {
                let d = self.dim();
                let mut q = 0.0;
                for i in 0..d {
                    let ei = y[i] - center[i];
                    let mut row = 0.0;
                    for j in 0..d {
                        row += weight[(i, j)] * (y[j] - center[j]);
                    }
                    q += ei * row;
                }
                offset - q
            }
            PredicateFamily::Affine { gradient, offset } => {
                gradient.iter().zip(y).map(|(a, v)| a * v).sum::<f64>() + offset
            }
        }
    }

    pub fn gradient(&self, y: &[f64]) -> DVector<f64> {
        match &self.family {
            PredicateFamily::ConcaveQuadratic { center, weight, .. } => {
                let e = DVector::from_column_slice(y) - center;
                -2.0 * (weight * e)
            }
            PredicateFamily::Affine { gradient, .. } => gradient.clone(),
        }
    }

    /// Constant Hessian of the function (the families are at most quadratic).
    pub fn hessian(&self) -> DMatrix<f64> {
        match &self.family {
            PredicateFamily::ConcaveQuadratic { weight, .. } => -2.0 * weight,
            PredicateFamily::Affine { gradient, .. } => DMatrix::zeros(gradient.len(), gradient.len()),
        }
    }

    /// Whether `-h` stays inside a concave family. Affine functions qualify,
    /// as does a quadratic whose weight is zero.
    pub fn negated(&self) -> Option<PredicateFunction> {
        let family = match &self.family {
            PredicateFamily::Affine { gradient, offset } => PredicateFamily::Affine {
                gradient: -gradient,
                offset: -offset,
            },
            PredicateFamily::ConcaveQuadratic { offset, weight, .. } if weight.amax() == 0.0 => {
                PredicateFamily::Affine {
                    gradient: DVector::zeros(self.dim()),
                    offset: -offset,
                }
            }
            PredicateFamily::ConcaveQuadratic { .. } => return None,
        };
        Some(Self {
            family,
            footprint: self.footprint.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fp(n: usize) -> Vec<StateCoord> {
        (0..n).map(|k| StateCoord::new(1, k)).collect()
    }

    #[test]
    fn quadratic_value_and_gradient() {
        let h = PredicateFunction::concave_quadratic(0.2, vec![0.0, 0.0], DMatrix::identity(2, 2), fp(2)).unwrap();
        assert!((h.value(&[0.1, 0.2]) - (0.2 - 0.05)).abs() < 1e-15);
        let g = h.gradient(&[0.1, 0.2]);
        assert!((g[0] + 0.2).abs() < 1e-15 && (g[1] + 0.4).abs() < 1e-15);
    }

    #[test]
    fn rejects_indefinite_weight() {
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let err = PredicateFunction::concave_quadratic(1.0, vec![0.0; 2], w, fp(2)).unwrap_err();
        assert!(matches!(err, PredicateError::NotPsd(_)));
    }

    #[test]
    fn rejects_asymmetric_and_misdimensioned() {
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert_eq!(
            PredicateFunction::concave_quadratic(1.0, vec![0.0; 2], w, fp(2)),
            Err(PredicateError::NotSymmetric)
        );
        assert!(matches!(
            PredicateFunction::affine(vec![1.0], 0.0, fp(2)),
            Err(PredicateError::Dimension { .. })
        ));
        assert_eq!(
            PredicateFunction::affine(vec![], 0.0, vec![]),
            Err(PredicateError::EmptyFootprint)
        );
        let dup = vec![StateCoord::new(1, 0), StateCoord::new(1, 0)];
        assert!(matches!(
            PredicateFunction::affine(vec![1.0, 1.0], 0.0, dup),
            Err(PredicateError::DuplicateCoord(_))
        ));
    }

    #[test]
    fn negation_of_affine_only() {
        let a = PredicateFunction::affine(vec![1.0, -2.0], 0.5, fp(2)).unwrap();
        let na = a.negated().unwrap();
        assert_eq!(na.value(&[0.3, 0.1]), -a.value(&[0.3, 0.1]));
        let q = PredicateFunction::concave_quadratic(0.2, vec![0.0], DMatrix::identity(1, 1), fp(1)).unwrap();
        assert!(q.negated().is_none());
    }
}
