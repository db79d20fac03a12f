//! Quantitative (space) robustness on sampled signals.
//!
//! Temporal operators take their extremum over the samples whose times fall
//! in `[t + a, t + b]`, with non-aligned endpoints snapped outward.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use super::ast::Formula;
use super::trajectory::{Trajectory, TrajectoryError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RobustnessError {
    #[error(transparent)]
    Grid(#[from] TrajectoryError),
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("predicate `{name}` expects a state of dimension > {needed}, got {found}")]
    DimensionMismatch { name: String, needed: usize, found: usize },
}

/// Resolves predicate names to values on a single state sample.
pub trait PredicateEnv {
    fn evaluate(&self, name: &str, state: &[f64]) -> Result<f64, RobustnessError>;
}

impl<E: PredicateEnv + ?Sized> PredicateEnv for &E {
    fn evaluate(&self, name: &str, state: &[f64]) -> Result<f64, RobustnessError> {
        (**self).evaluate(name, state)
    }
}

/// Something that can be evaluated on a full state vector.
pub trait StatePredicate {
    fn eval_state(&self, name: &str, state: &[f64]) -> Result<f64, RobustnessError>;
}

impl<P: StatePredicate> PredicateEnv for HashMap<String, P> {
    fn evaluate(&self, name: &str, state: &[f64]) -> Result<f64, RobustnessError> {
        self.get(name)
            .ok_or_else(|| RobustnessError::UnknownPredicate(name.to_string()))?
            .eval_state(name, state)
    }
}

impl<P: StatePredicate> PredicateEnv for BTreeMap<String, P> {
    fn evaluate(&self, name: &str, state: &[f64]) -> Result<f64, RobustnessError> {
        self.get(name)
            .ok_or_else(|| RobustnessError::UnknownPredicate(name.to_string()))?
            .eval_state(name, state)
    }
}

/// Adapts a closure `(name, state) -> value` into a predicate environment.
pub struct FnEnv<F>(pub F);

impl<F> PredicateEnv for FnEnv<F>
where
    F: Fn(&str, &[f64]) -> Option<f64>,
{
    fn evaluate(&self, name: &str, state: &[f64]) -> Result<f64, RobustnessError> {
        (self.0)(name, state).ok_or_else(|| RobustnessError::UnknownPredicate(name.to_string()))
    }
}

/// Robustness of `f` on `x` at time `t`.
pub fn robustness<E: PredicateEnv + ?Sized>(
    f: &Formula,
    x: &Trajectory,
    t: f64,
    env: &E,
) -> Result<f64, RobustnessError> {
    match f {
        Formula::True => Ok(f64::INFINITY),
        Formula::Predicate { name, negated } => {
            let k = x.index_at(t)?;
            let v = env.evaluate(name, x.sample(k))?;
            Ok(if *negated { -v } else { v })
        }
        Formula::And(children) => {
            let mut acc = f64::INFINITY;
            for c in children {
                acc = acc.min(robustness(c, x, t, env)?);
            }
            Ok(acc)
        }
        Formula::Always { interval, child } => {
            let mut acc = f64::INFINITY;
            for k in x.window(t + interval.start(), t + interval.end())? {
                acc = acc.min(robustness(child, x, x.time(k), env)?);
            }
            Ok(acc)
        }
        Formula::Eventually { interval, child } => {
            let mut acc = f64::NEG_INFINITY;
            for k in x.window(t + interval.start(), t + interval.end())? {
                acc = acc.max(robustness(child, x, x.time(k), env)?);
            }
            Ok(acc)
        }
        Formula::Until { interval, left, right } => {
            let outer = x.window(t + interval.start(), t + interval.end())?;
            let first = *x.window(t, t)?.start();
            // Running minimum of the left operand over [t, t1].
            let mut left_min = f64::INFINITY;
            let mut next_left = first;
            let mut acc = f64::NEG_INFINITY;
            for k1 in outer {
                while next_left <= k1 {
                    left_min = left_min.min(robustness(left, x, x.time(next_left), env)?);
                    next_left += 1;
                }
                let r = robustness(right, x, x.time(k1), env)?;
                acc = acc.max(r.min(left_min));
            }
            Ok(acc)
        }
    }
}

/// Strict satisfaction at time zero.
pub fn satisfies<E: PredicateEnv + ?Sized>(f: &Formula, x: &Trajectory, env: &E) -> Result<bool, RobustnessError> {
    Ok(robustness(f, x, x.start(), env)? > 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::ast::TimeInterval;

    fn iv(a: f64, b: f64) -> TimeInterval {
        TimeInterval::new(a, b).unwrap()
    }

    fn identity_env() -> FnEnv<impl Fn(&str, &[f64]) -> Option<f64>> {
        FnEnv(|name: &str, s: &[f64]| (name == "x").then(|| s[0]))
    }

    #[test]
    fn constant_signal_always() {
        let x = Trajectory::new(0.1, 0.0, vec![vec![0.5]; 11]).unwrap();
        let f = Formula::always(iv(0.0, 1.0), Formula::predicate("x"));
        assert_eq!(robustness(&f, &x, 0.0, &identity_env()).unwrap(), 0.5);
    }

    #[test]
    fn ramp_eventually_peaks_at_end() {
        let x = Trajectory::new(0.1, 0.0, (0..21).map(|k| vec![k as f64 * 0.1 - 1.0]).collect()).unwrap();
        let f = Formula::eventually(iv(0.0, 2.0), Formula::predicate("x"));
        let r = robustness(&f, &x, 0.0, &identity_env()).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn negation_and_duality() {
        let x = Trajectory::new(0.5, 0.0, vec![vec![0.3], vec![-0.2], vec![0.7]]).unwrap();
        let env = identity_env();
        let mu = Formula::predicate("x");
        let nmu = Formula::not_predicate("x");
        assert_eq!(
            robustness(&nmu, &x, 0.5, &env).unwrap(),
            -robustness(&mu, &x, 0.5, &env).unwrap()
        );
        let fe = Formula::eventually(iv(0.0, 1.0), mu);
        let gn = Formula::always(iv(0.0, 1.0), nmu);
        assert_eq!(
            robustness(&fe, &x, 0.0, &env).unwrap(),
            -robustness(&gn, &x, 0.0, &env).unwrap()
        );
    }

    #[test]
    fn until_matches_definition_by_hand() {
        // samples at t = 0, 1, 2, 3
        let x = Trajectory::new(
            1.0,
            0.0,
            vec![vec![1.0, -1.0], vec![2.0, 0.5], vec![-1.0, 3.0], vec![4.0, 4.0]],
        )
        .unwrap();
        let env = FnEnv(|name: &str, s: &[f64]| match name {
            "a" => Some(s[0]),
            "b" => Some(s[1]),
            _ => None,
        });
        let f = Formula::until(iv(1.0, 3.0), Formula::predicate("a"), Formula::predicate("b"));
        // t1=1: min(0.5, min(1,2)) = 0.5; t1=2: min(3, -1) = -1; t1=3: min(4, -1) = -1
        assert_eq!(robustness(&f, &x, 0.0, &env).unwrap(), 0.5);
    }

    #[test]
    fn errors_surface() {
        let x = Trajectory::new(0.1, 0.0, vec![vec![0.0]; 5]).unwrap();
        let env = identity_env();
        let f = Formula::always(iv(0.0, 1.0), Formula::predicate("x"));
        assert!(matches!(
            robustness(&f, &x, 0.0, &env),
            Err(RobustnessError::Grid(TrajectoryError::HorizonTooShort { .. }))
        ));
        let g = Formula::predicate("y");
        assert_eq!(
            robustness(&g, &x, 0.0, &env),
            Err(RobustnessError::UnknownPredicate("y".into()))
        );
        assert!(matches!(
            robustness(&Formula::predicate("x"), &x, 0.05, &env),
            Err(RobustnessError::Grid(TrajectoryError::OffGrid(_)))
        ));
    }

    #[test]
    fn conjunction_is_min() {
        let x = Trajectory::new(0.1, 0.0, vec![vec![0.2, 0.9]; 3]).unwrap();
        let env = FnEnv(|name: &str, s: &[f64]| match name {
            "a" => Some(s[0]),
            "b" => Some(s[1]),
            _ => None,
        });
        let f = Formula::And(vec![Formula::predicate("a"), Formula::predicate("b")]);
        assert_eq!(robustness(&f, &x, 0.0, &env).unwrap(), 0.2);
        assert_eq!(robustness(&Formula::True, &x, 0.0, &env).unwrap(), f64::INFINITY);
    }
}
