//! The decomposable fragment: a conjunction of `G[a,b] psi` / `F[a,b] psi`
//! terms where `psi` is a possibly negated predicate.

use std::fmt;

use thiserror::Error;

use super::ast::{Formula, TimeInterval};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationReason {
    /// An `Until` node is still present; rewrite it first.
    ContainsUntil,
    /// A temporal operator wraps something other than a predicate literal.
    NonPredicateChild,
    /// A top-level conjunct is not an always/eventually formula.
    NotTemporal,
    /// The root conjunction is empty.
    EmptyConjunction,
}

impl fmt::Display for ViolationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ViolationReason::ContainsUntil => "contains an until operator; apply until_rewrite first",
            ViolationReason::NonPredicateChild => "temporal operator over a non-predicate formula",
            ViolationReason::NotTemporal => "conjunct is not an always/eventually formula",
            ViolationReason::EmptyConjunction => "empty conjunction",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FragmentViolation {
    /// Printed form of the offending subtree.
    pub subtree: String,
    pub reason: ViolationReason,
}

impl fmt::Display for FragmentViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "`{}`: {}", self.subtree, self.reason)
    }
}

fn contains_until(f: &Formula) -> bool {
    match f {
        Formula::Until { .. } => true,
        Formula::True | Formula::Predicate { .. } => false,
        Formula::Always { child, .. } | Formula::Eventually { child, .. } => contains_until(child),
        Formula::And(children) => children.iter().any(contains_until),
    }
}

/// Checks that `f` lies in the decomposable fragment. Every offending
/// subtree is reported.
pub fn validate_fragment(f: &Formula) -> Result<(), Vec<FragmentViolation>> {
    let mut out = Vec::new();
    let conjuncts = f.conjuncts();
    if conjuncts.is_empty() {
        out.push(FragmentViolation {
            subtree: f.to_string(),
            reason: ViolationReason::EmptyConjunction,
        });
    }
    for c in conjuncts {
        let report = |reason| FragmentViolation {
            subtree: c.to_string(),
            reason,
        };
        if contains_until(c) {
            out.push(report(ViolationReason::ContainsUntil));
            continue;
        }
        match c {
            Formula::Always { child, .. } | Formula::Eventually { child, .. } => {
                if !matches!(**child, Formula::Predicate { .. }) {
                    out.push(report(ViolationReason::NonPredicateChild));
                }
            }
            _ => out.push(report(ViolationReason::NotTemporal)),
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RewriteError {
    #[error("t* = {t_star} lies outside the until interval {interval}")]
    OutOfInterval { t_star: f64, interval: TimeInterval },
    #[error("until operand `{0}` is not a predicate literal")]
    NonPredicateOperand(String),
    #[error("until operator nested inside `{0}` cannot be rewritten")]
    Nested(String),
}

/// Rewrites `left U[a,b] right` as `G[0,t*] left and F[t*,t*] right`.
///
/// Satisfying the result implies satisfying the until formula: the left
/// operand is required on all of `[0, t*]`, which is what the until
/// robustness reads when the right operand is witnessed at `t*`.
pub fn until_rewrite(
    left: &Formula,
    right: &Formula,
    interval: TimeInterval,
    t_star: f64,
) -> Result<Formula, RewriteError> {
    if !interval.contains(t_star) {
        return Err(RewriteError::OutOfInterval { t_star, interval });
    }
    for op in [left, right] {
        if !matches!(op, Formula::Predicate { .. }) {
            return Err(RewriteError::NonPredicateOperand(op.to_string()));
        }
    }
    let hold = TimeInterval::new(0.0, t_star).expect("t* is non-negative");
    let point = TimeInterval::point(t_star).expect("t* is non-negative");
    Ok(Formula::And(vec![
        Formula::always(hold, left.clone()),
        Formula::eventually(point, right.clone()),
    ]))
}

/// Rewrites every top-level until conjunct, choosing `t*` with `choose`,
/// and flattens the results into the root conjunction.
pub fn rewrite_untils(f: &Formula, choose: impl Fn(&TimeInterval) -> f64) -> Result<Formula, RewriteError> {
    let mut out = Vec::new();
    for c in f.conjuncts() {
        match c {
            Formula::Until { interval, left, right } => {
                let rewritten = until_rewrite(left, right, *interval, choose(interval))?;
                out.extend(rewritten.conjuncts().iter().cloned());
            }
            other if contains_until(other) => return Err(RewriteError::Nested(other.to_string())),
            other => out.push(other.clone()),
        }
    }
    Ok(Formula::And(out))
}
