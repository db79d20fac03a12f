//! Signal Temporal Logic: syntax, the decomposable fragment, and
//! quantitative robustness on sampled signals.

mod ast;
mod fragment;
mod parse;
mod predicate;
mod robustness;
mod trajectory;

pub use ast::{Formula, IntervalError, TimeInterval};
pub use fragment::{
    rewrite_untils, until_rewrite, validate_fragment, FragmentViolation, RewriteError, ViolationReason,
};
pub use parse::{parse, parse_formula, ParseError, ParseErrorKind};
pub use predicate::{PredicateError, PredicateFamily, PredicateFunction, StateCoord};
pub use robustness::{robustness, satisfies, FnEnv, PredicateEnv, RobustnessError, StatePredicate};
pub use trajectory::{grid_time_within, sample_count, Trajectory, TrajectoryError};
