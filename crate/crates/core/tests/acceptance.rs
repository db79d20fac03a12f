//! Acceptance criteria 1 to 8. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::collections::BTreeSet;
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use stldec::fuzz::{random_instance, rng, run_fuzz};
use stldec::hypercube::{assemble_program, solve_decomposition, Domain};
use stldec::oracle::{grid_oracle, OracleConfig};
use stldec::scenario::five_agents;
use stldec::sim::{run_scenario, RunOptions};
use stldec::solver::SolverConfig;
use stldec::stl::{robustness, until_rewrite, FnEnv, Formula, PredicateFunction, StateCoord, TimeInterval, Trajectory};
use stldec::synthesis::TimingMode;
use stldec::team::{AgentId, AgentSpec, TeamPartition};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($arg:tt)*) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($arg)*));
        }
    };
}

fn singletons(dims: &[usize]) -> TeamPartition {
    TeamPartition::singletons(
        dims.iter()
            .enumerate()
            .map(|(k, &dim)| AgentSpec {
                id: AgentId(k as u32 + 1),
                dim,
            })
            .collect(),
    )
    .unwrap()
}

fn coords(agent: u32, dim: usize) -> Vec<StateCoord> {
    (0..dim).map(|k| StateCoord::new(agent, k)).collect()
}

fn unit_box(dim: usize) -> Domain {
    Domain::new(vec![-1.0; dim], vec![1.0; dim]).unwrap()
}

fn soundness() -> Outcome {
    let start = Instant::now();
    let summary = run_fuzz(100, 2024);
    let elapsed = start.elapsed();
    ensure!(summary.scenarios == 100, "ran {} scenarios", summary.scenarios);
    ensure!(
        summary.soundness_violations == 0,
        "{} runs with all local robustness > 0 but global <= 0",
        summary.soundness_violations
    );
    ensure!(
        summary.locally_satisfied > 0,
        "no run reached positive local robustness"
    );
    ensure!(elapsed < Duration::from_secs(120), "took {elapsed:?}");
    Ok(format!(
        "{} of 100 runs locally satisfied, 0 counterexamples, {} failed before evaluation, {:.1?}",
        summary.locally_satisfied,
        summary.scenarios - summary.completed,
        elapsed
    ))
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut r = rng(11);
    let mut worst_low = 0.0f64;
    let mut worst_high = 0.0f64;
    for k in 0..20 {
        let inst = random_instance(&mut r);
        let prob = assemble_program(0, &inst.predicate, &inst.partition, &inst.domain).unwrap();
        let solved = solve_decomposition(&prob, &SolverConfig::default()).map_err(|e| format!("instance {k}: {e}"))?;
        let oracle = grid_oracle(&prob, &OracleConfig::default()).map_err(|e| format!("instance {k}: oracle {e}"))?;
        let o = oracle.result.objective;
        ensure!(
            solved.objective >= o - oracle.grid_step && solved.objective <= o + 1e-3,
            "instance {k} ({} vars): solver {} vs oracle {} (grid step {})",
            prob.num_vars(),
            solved.objective,
            o,
            oracle.grid_step
        );
        worst_low = worst_low.max(o - solved.objective);
        worst_high = worst_high.max(solved.objective - o);
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!(
        "20 instances, solver below oracle by at most {worst_low:.1e}, above by at most {worst_high:.1e}, {elapsed:.1?}"
    ))
}

fn analytic_optima() -> Outcome {
    // 0.2 - ||y||^2 on one team of dimension 2.
    let single =
        PredicateFunction::concave_quadratic(0.2, vec![0.0, 0.0], DMatrix::identity(2, 2), coords(1, 2)).unwrap();
    let p1 = singletons(&[2]);
    // 0.1 - ||y1 - y2 - (0.3, 0.5)||^2 over two teams.
    let mut w = DMatrix::zeros(4, 4);
    for k in 0..2 {
        w[(k, k)] = 1.0;
        w[(k + 2, k + 2)] = 1.0;
        w[(k, k + 2)] = -1.0;
        w[(k + 2, k)] = -1.0;
    }
    let mut fp = coords(1, 2);
    fp.extend(coords(2, 2));
    let pair = PredicateFunction::concave_quadratic(0.1, vec![0.3, 0.5, 0.0, 0.0], w, fp).unwrap();
    let p2 = singletons(&[2, 2]);

    let mut found = Vec::new();
    for (pred, part, dim, expected) in [(&single, &p1, 2, 0.1f64.sqrt()), (&pair, &p2, 4, 0.05f64.sqrt())] {
        let prob = assemble_program(0, pred, part, &unit_box(dim)).unwrap();
        let solved = solve_decomposition(&prob, &SolverConfig::default()).map_err(|e| e.to_string())?;
        let oracle = grid_oracle(&prob, &OracleConfig::default()).map_err(|e| e.to_string())?;
        ensure!(
            (oracle.result.objective - expected).abs() <= 1e-3,
            "oracle gives {} instead of {expected}",
            oracle.result.objective
        );
        ensure!(
            (solved.objective - expected).abs() <= 1e-3,
            "solver gives {} instead of {expected}",
            solved.objective
        );
        found.push(solved.objective);
    }
    Ok(format!(
        "sum of radii {:.6} (sqrt 0.1) and {:.6} (sqrt 0.05)",
        found[0], found[1]
    ))
}

fn five_agent_reproduction() -> Outcome {
    let start = Instant::now();
    let s = five_agents();
    let expected = [
        (
            TimingMode::PointEventually,
            [
                "G[0,2.1] mu1_1",
                "G[0,2.1] mu1_2 and F[9,9] mu4_2",
                "G[2,4] mu2_3",
                "G[2,4] mu2_4 and F[7,7] mu3_4",
                "F[7,7] mu3_5 and F[9,9] mu4_5",
            ],
        ),
        (
            TimingMode::IntervalAlways,
            [
                "G[0,2.1] mu1_1",
                "G[0,2.1] mu1_2 and G[9,10] mu4_2",
                "G[2,4] mu2_3",
                "G[2,4] mu2_4 and G[5,7] mu3_4",
                "G[5,7] mu3_5 and G[9,10] mu4_5",
            ],
        ),
    ];
    let mut summary = Vec::new();
    for (mode, tasks) in expected {
        let opts = RunOptions {
            mode: Some(mode),
            ..RunOptions::default()
        };
        let run = run_scenario(&s, &opts).map_err(|e| format!("{mode:?}: {e}"))?;
        let counts: Vec<usize> = run.tasks.tasks.iter().map(|t| t.conjuncts.len()).collect();
        ensure!(counts == [1, 2, 1, 2, 2], "{mode:?}: conjunct counts {counts:?}");
        for (team, want) in tasks.iter().enumerate() {
            let got = &run.report.teams[team].formula;
            ensure!(got == want, "{mode:?} team {}: `{got}` instead of `{want}`", team + 1);
        }
        let min_local = run
            .report
            .teams
            .iter()
            .map(|t| t.robustness)
            .fold(f64::INFINITY, f64::min);
        ensure!(min_local > 0.0, "{mode:?}: local robustness {min_local}");
        ensure!(
            run.report.global_robustness > 0.0,
            "{mode:?}: global robustness {}",
            run.report.global_robustness
        );
        summary.push(format!(
            "{mode:?} min local {min_local:.2e} global {:.2e}",
            run.report.global_robustness
        ));
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    Ok(format!("{}, {elapsed:.1?}", summary.join(", ")))
}

const SIGNAL_DT: f64 = 0.1;

/// Predicates read straight off the signal.
fn signal_env(name: &str, x: &[f64]) -> Option<f64> {
    match name {
        "p" => Some(x[0] - 0.1),
        "q" => Some(0.4 - x[x.len() - 1]),
        "s" => Some(x[0] + x[x.len() - 1]),
        _ => None,
    }
}

fn steps(a: usize, b: usize) -> TimeInterval {
    TimeInterval::new(a as f64 * SIGNAL_DT, b as f64 * SIGNAL_DT).unwrap()
}

/// Formula plus the same formula with windows in integer steps, for the
/// brute-force evaluator.
#[derive(Debug, Clone)]
enum Shadow {
    Lit(&'static str, bool),
    G(usize, usize, Box<Shadow>),
    F(usize, usize, Box<Shadow>),
    U(usize, usize, Box<Shadow>, Box<Shadow>),
    And(Vec<Shadow>),
}

fn random_literal(r: &mut impl Rng) -> (Formula, Shadow) {
    let name = ["p", "q", "s"][r.random_range(0..3)];
    let neg = r.random_bool(0.3);
    let f = if neg {
        Formula::not_predicate(name)
    } else {
        Formula::predicate(name)
    };
    (f, Shadow::Lit(name, neg))
}

fn random_window(r: &mut impl Rng, budget: usize) -> (usize, usize) {
    let a = r.random_range(0..=budget / 2);
    let b = r.random_range(a..=budget);
    (a, b)
}

fn random_formula(r: &mut impl Rng, depth: usize, budget: usize) -> (Formula, Shadow) {
    if depth == 0 {
        return random_literal(r);
    }
    match r.random_range(0..5) {
        0 => random_literal(r),
        1 => {
            let (a, b) = random_window(r, budget);
            let (f, s) = random_formula(r, depth - 1, budget - b);
            (Formula::always(steps(a, b), f), Shadow::G(a, b, Box::new(s)))
        }
        2 => {
            let (a, b) = random_window(r, budget);
            let (f, s) = random_formula(r, depth - 1, budget - b);
            (Formula::eventually(steps(a, b), f), Shadow::F(a, b, Box::new(s)))
        }
        3 => {
            let (a, b) = random_window(r, budget);
            let (lf, ls) = random_formula(r, depth - 1, budget - b);
            let (rf, rs) = random_formula(r, depth - 1, budget - b);
            (
                Formula::until(steps(a, b), lf, rf),
                Shadow::U(a, b, Box::new(ls), Box::new(rs)),
            )
        }
        _ => {
            let n = r.random_range(2..=3);
            let (fs, ss): (Vec<_>, Vec<_>) = (0..n).map(|_| random_formula(r, depth - 1, budget)).unzip();
            (Formula::And(fs), Shadow::And(ss))
        }
    }
}

/// Direct min/max over explicit index ranges.
fn brute(s: &Shadow, x: &[Vec<f64>], k: usize) -> f64 {
    match s {
        Shadow::Lit(name, neg) => {
            let v = signal_env(name, &x[k]).unwrap();
            if *neg {
                -v
            } else {
                v
            }
        }
        Shadow::G(a, b, c) => (k + a..=k + b).map(|j| brute(c, x, j)).fold(f64::INFINITY, f64::min),
        Shadow::F(a, b, c) => (k + a..=k + b)
            .map(|j| brute(c, x, j))
            .fold(f64::NEG_INFINITY, f64::max),
        Shadow::U(a, b, l, r) => (k + a..=k + b)
            .map(|j1| {
                let hold = (k..=j1).map(|j| brute(l, x, j)).fold(f64::INFINITY, f64::min);
                brute(r, x, j1).min(hold)
            })
            .fold(f64::NEG_INFINITY, f64::max),
        Shadow::And(cs) => cs.iter().map(|c| brute(c, x, k)).fold(f64::INFINITY, f64::min),
    }
}

fn random_signal(r: &mut impl Rng, len: usize) -> Vec<Vec<f64>> {
    let dim = r.random_range(1..=2);
    (0..len)
        .map(|_| (0..dim).map(|_| r.random_range(-1.0..1.0)).collect())
        .collect()
}

fn robustness_semantics() -> Outcome {
    let mut r = rng(5);
    let env = FnEnv(signal_env);
    let len = 41;
    for case in 0..50 {
        let samples = random_signal(&mut r, len);
        let x = Trajectory::new(SIGNAL_DT, 0.0, samples.clone()).unwrap();
        let (f, shadow) = random_formula(&mut r, 2, len - 1);
        let got = robustness(&f, &x, 0.0, &env).map_err(|e| format!("case {case} `{f}`: {e}"))?;
        let want = brute(&shadow, &samples, 0);
        ensure!(
            got.to_bits() == want.to_bits(),
            "case {case} `{f}`: evaluator {got} vs brute force {want}"
        );
    }
    Ok("50 signals, evaluator bit-equal to brute force".to_string())
}

fn constraint_count() -> Outcome {
    let mut r = rng(3);
    for d in 1..=6usize {
        let pred =
            PredicateFunction::concave_quadratic(1.0, vec![0.0; d], DMatrix::identity(d, d), coords(1, d)).unwrap();
        let prob = assemble_program(0, &pred, &singletons(&[d]), &unit_box(d)).unwrap();
        ensure!(
            prob.vertex_constraint_count() == 1 << d,
            "d = {d}: {} vertex constraints",
            prob.vertex_constraint_count()
        );
        let program = prob.to_program();
        ensure!(
            program.constraints().len() == (1 << d) + 2 * d,
            "d = {d}: {} constraints in total",
            program.constraints().len()
        );
        // Enumerate every corner of a random cube and match it to its
        // constraint.
        let c: Vec<f64> = (0..d).map(|_| r.random_range(-0.3..0.3)).collect();
        let rad = r.random_range(0.05..0.3);
        let mut x = c.clone();
        x.push(rad);
        let xv = DVector::from_column_slice(&x);
        let mut corners = BTreeSet::new();
        for k in 0..1usize << d {
            let y: Vec<f64> = (0..d)
                .map(|j| {
                    if (k >> (d - 1 - j)) & 1 == 1 {
                        c[j] + rad
                    } else {
                        c[j] - rad
                    }
                })
                .collect();
            let g = program.constraints()[k].value(&xv);
            ensure!(
                (g - pred.value(&y)).abs() <= 1e-12,
                "d = {d}: constraint {k} is not corner {y:?}"
            );
            corners.insert(y.iter().map(|v| v.to_bits()).collect::<Vec<u64>>());
        }
        ensure!(corners.len() == 1 << d, "d = {d}: {} distinct corners", corners.len());
    }
    Ok("2^d vertex constraints for d = 1..6, one per corner".to_string())
}

fn relative_error(analytic: &DVector<f64>, numeric: &DVector<f64>) -> f64 {
    (analytic - numeric).norm() / analytic.norm().max(1.0)
}

fn central_difference(f: impl Fn(&[f64]) -> f64, y: &[f64]) -> DVector<f64> {
    let h = 1e-6;
    DVector::from_iterator(
        y.len(),
        (0..y.len()).map(|k| {
            let mut up = y.to_vec();
            let mut down = y.to_vec();
            up[k] += h;
            down[k] -= h;
            (f(&up) - f(&down)) / (2.0 * h)
        }),
    )
}

fn gradient_checks() -> Outcome {
    let mut r = rng(17);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let d = r.random_range(1..=4);
        let l = DMatrix::from_fn(d, d, |_, _| r.random_range(-1.0..1.0));
        let w = l.transpose() * &l + DMatrix::identity(d, d) * 0.1;
        let center: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
        let quad = PredicateFunction::concave_quadratic(r.random_range(0.0..1.0), center, w, coords(1, d)).unwrap();
        let grad: Vec<f64> = (0..d).map(|_| r.random_range(-2.0..2.0)).collect();
        let aff = PredicateFunction::affine(grad, r.random_range(-1.0..1.0), coords(1, d)).unwrap();
        let y: Vec<f64> = (0..d).map(|_| r.random_range(-1.5..1.5)).collect();
        for pred in [&quad, &aff] {
            let numeric = central_difference(|z| pred.value(z), &y);
            let e = relative_error(&pred.gradient(&y), &numeric);
            ensure!(e <= 1e-5, "{:?} at {y:?}: relative error {e:e}", pred.family());
            worst = worst.max(e);
        }
    }
    Ok(format!("200 gradients, worst relative error {worst:.1e}"))
}

fn until_soundness() -> Outcome {
    let mut r = rng(23);
    let env = FnEnv(signal_env);
    let len = 31;
    let mut positive = 0;
    for case in 0..50 {
        // Half of the signals are built to satisfy the rewrite: `p` held up
        // to `t*` and `q` reached there. The rest are noise.
        let dim = r.random_range(1..=2);
        let (a, b) = random_window(&mut r, len - 1);
        let t_star = r.random_range(a..=b);
        let shaped = r.random_bool(0.5);
        let samples: Vec<Vec<f64>> = (0..len)
            .map(|k| {
                (0..dim)
                    .map(|_| match (shaped, k.cmp(&t_star)) {
                        (true, std::cmp::Ordering::Less) => r.random_range(0.15..1.0),
                        (true, std::cmp::Ordering::Equal) => r.random_range(0.15..0.35),
                        _ => r.random_range(-1.0..1.0),
                    })
                    .collect()
            })
            .collect();
        let x = Trajectory::new(SIGNAL_DT, 0.0, samples).unwrap();
        let left = Formula::predicate("p");
        let right = Formula::predicate("q");
        let until = Formula::until(steps(a, b), left.clone(), right.clone());
        let rewritten =
            until_rewrite(&left, &right, steps(a, b), t_star as f64 * SIGNAL_DT).map_err(|e| e.to_string())?;
        let rho_rw = robustness(&rewritten, &x, 0.0, &env).map_err(|e| e.to_string())?;
        let rho_u = robustness(&until, &x, 0.0, &env).map_err(|e| e.to_string())?;
        if rho_rw > 0.0 {
            positive += 1;
            ensure!(rho_u > 0.0, "case {case}: rewritten {rho_rw} but until {rho_u}");
            ensure!(rho_u >= rho_rw, "case {case}: until {rho_u} below rewritten {rho_rw}");
        }
    }
    ensure!(positive > 0, "no signal satisfied the rewritten formula");
    Ok(format!(
        "{positive} of 50 signals satisfy the rewrite, all satisfy the until"
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("soundness implication", soundness),
        ("oracle equivalence", oracle_equivalence),
        ("analytic optima", analytic_optima),
        ("five-agent reproduction", five_agent_reproduction),
        ("robustness semantics", robustness_semantics),
        ("constraint count", constraint_count),
        ("gradient checks", gradient_checks),
        ("until rewrite soundness", until_soundness),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {detail}", k + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
