use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum IntervalError {
    #[error("interval bound {0} is negative")]
    Negative(f64),
    #[error("interval bound {0} is not finite")]
    NotFinite(f64),
    #[error("interval [{a}, {b}] has a > b")]
    Reversed { a: f64, b: f64 },
}

/// A closed, bounded time interval `[a, b]` with `0 <= a <= b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct TimeInterval {
    a: f64,
    b: f64,
}

impl TimeInterval {
    pub fn new(a: f64, b: f64) -> Result<Self, IntervalError> {
        for v in [a, b] {
            if !v.is_finite() {
                return Err(IntervalError::NotFinite(v));
            }
            if v < 0.0 {
                return Err(IntervalError::Negative(v));
            }
        }
        if a > b {
            return Err(IntervalError::Reversed { a, b });
        }
        Ok(Self { a, b })
    }

    /// The degenerate interval `[t, t]`.
    pub fn point(t: f64) -> Result<Self, IntervalError> {
        Self::new(t, t)
    }

    pub fn start(&self) -> f64 {
        self.a
    }

    pub fn end(&self) -> f64 {
        self.b
    }

    pub fn length(&self) -> f64 {
        self.b - self.a
    }

    pub fn contains(&self, t: f64) -> bool {
        self.a <= t && t <= self.b
    }

    pub fn contains_interval(&self, other: &TimeInterval) -> bool {
        self.a <= other.a && other.b <= self.b
    }
}

impl TryFrom<[f64; 2]> for TimeInterval {
    type Error = IntervalError;

    fn try_from(v: [f64; 2]) -> Result<Self, Self::Error> {
        Self::new(v[0], v[1])
    }
}

impl From<TimeInterval> for [f64; 2] {
    fn from(i: TimeInterval) -> Self {
        [i.a, i.b]
    }
}

impl fmt::Display for TimeInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.a, self.b)
    }
}

/// Abstract syntax tree of an STL formula.
///
/// Negation only ever wraps a predicate. `Until` is accepted by the parser
/// but must be rewritten (see [`crate::stl::until_rewrite`]) before the
/// formula is handed to the decomposition pipeline.
#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    True,
    Predicate {
        name: String,
        negated: bool,
    },
    Always {
        interval: TimeInterval,
        child: Box<Formula>,
    },
    Eventually {
        interval: TimeInterval,
        child: Box<Formula>,
    },
    Until {
        interval: TimeInterval,
        left: Box<Formula>,
        right: Box<Formula>,
    },
    And(Vec<Formula>),
}

impl Formula {
    pub fn predicate(name: impl Into<String>) -> Self {
        Formula::Predicate {
            name: name.into(),
            negated: false,
        }
    }

    pub fn not_predicate(name: impl Into<String>) -> Self {
        Formula::Predicate {
            name: name.into(),
            negated: true,
        }
    }

    pub fn always(interval: TimeInterval, child: Formula) -> Self {
        Formula::Always {
            interval,
            child: Box::new(child),
        }
    }

    pub fn eventually(interval: TimeInterval, child: Formula) -> Self {
        Formula::Eventually {
            interval,
            child: Box::new(child),
        }
    }

    pub fn until(interval: TimeInterval, left: Formula, right: Formula) -> Self {
        Formula::Until {
            interval,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    /// Negates a predicate leaf. Returns `None` for anything else, since the
    /// AST has no general negation node.
    pub fn negate_predicate(&self) -> Option<Formula> {
        match self {
            Formula::Predicate { name, negated } => Some(Formula::Predicate {
                name: name.clone(),
                negated: !negated,
            }),
            _ => None,
        }
    }

    /// Top-level conjuncts: the children of a root `And`, or the formula
    /// itself otherwise.
    pub fn conjuncts(&self) -> &[Formula] {
        match self {
            Formula::And(children) => children,
            other => std::slice::from_ref(other),
        }
    }

    /// Every predicate name referenced anywhere in the formula, in order of
    /// first appearance.
    pub fn predicate_names(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_names(&mut out);
        out
    }

    fn collect_names<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Formula::True => {}
            Formula::Predicate { name, .. } => {
                if !out.contains(&name.as_str()) {
                    out.push(name);
                }
            }
            Formula::Always { child, .. } | Formula::Eventually { child, .. } => child.collect_names(out),
            Formula::Until { left, right, .. } => {
                left.collect_names(out);
                right.collect_names(out);
            }
            Formula::And(children) => children.iter().for_each(|c| c.collect_names(out)),
        }
    }

    /// Latest time, relative to evaluation time, that the formula reads.
    pub fn horizon(&self) -> f64 {
        match self {
            Formula::True | Formula::Predicate { .. } => 0.0,
            Formula::Always { interval, child } | Formula::Eventually { interval, child } => {
                interval.end() + child.horizon()
            }
            Formula::Until { interval, left, right } => interval.end() + left.horizon().max(right.horizon()),
            Formula::And(children) => children.iter().map(Formula::horizon).fold(0.0, f64::max),
        }
    }

    fn fmt_unary(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::And(children) if children.len() != 1 => write!(f, "({self})"),
            Formula::And(children) => children[0].fmt_unary(f),
            Formula::Until { .. } => write!(f, "({self})"),
            other => write!(f, "{other}"),
        }
    }

    fn fmt_term(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::And(_) => write!(f, "({self})"),
            other => write!(f, "{other}"),
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => write!(f, "true"),
            Formula::Predicate { name, negated } => {
                if *negated {
                    write!(f, "not {name}")
                } else {
                    write!(f, "{name}")
                }
            }
            Formula::Always { interval, child } => {
                write!(f, "G{interval} ")?;
                child.fmt_unary(f)
            }
            Formula::Eventually { interval, child } => {
                write!(f, "F{interval} ")?;
                child.fmt_unary(f)
            }
            Formula::Until { interval, left, right } => {
                left.fmt_unary(f)?;
                write!(f, " U{interval} ")?;
                right.fmt_unary(f)
            }
            Formula::And(children) => {
                if children.is_empty() {
                    return write!(f, "true");
                }
                for (k, child) in children.iter().enumerate() {
                    if k > 0 {
                        write!(f, " and ")?;
                    }
                    child.fmt_term(f)?;
                }
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_validation() {
        assert!(TimeInterval::new(0.0, 2.1).is_ok());
        assert!(TimeInterval::new(3.0, 3.0).is_ok());
        assert_eq!(
            TimeInterval::new(2.0, 1.0),
            Err(IntervalError::Reversed { a: 2.0, b: 1.0 })
        );
        assert_eq!(TimeInterval::new(-1.0, 1.0), Err(IntervalError::Negative(-1.0)));
        assert!(TimeInterval::new(0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn prints_compact_grammar() {
        let i = TimeInterval::new(0.0, 2.1).unwrap();
        let f = Formula::And(vec![
            Formula::always(i, Formula::predicate("near12")),
            Formula::eventually(TimeInterval::new(3.0, 7.0).unwrap(), Formula::not_predicate("far")),
        ]);
        assert_eq!(f.to_string(), "G[0,2.1] near12 and F[3,7] not far");
    }

    #[test]
    fn horizon_accumulates_nested_intervals() {
        let f = Formula::always(
            TimeInterval::new(0.0, 2.0).unwrap(),
            Formula::eventually(TimeInterval::new(1.0, 3.0).unwrap(), Formula::predicate("p")),
        );
        assert_eq!(f.horizon(), 5.0);
    }
}
