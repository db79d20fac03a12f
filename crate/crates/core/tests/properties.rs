use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

use stldec::fuzz::{random_instance, rng};
use stldec::hypercube::{assemble_program, solve_decomposition, Domain};
use stldec::solver::SolverConfig;
use stldec::stl::{parse, robustness, FnEnv, Formula, PredicateFunction, StateCoord, TimeInterval, Trajectory};
use stldec::team::{AgentId, AgentSpec, SelectionMatrix, TeamPartition};

fn interval() -> impl Strategy<Value = TimeInterval> {
    (0u32..50, 0u32..30).prop_map(|(a, len)| TimeInterval::new(a as f64 / 10.0, (a + len) as f64 / 10.0).unwrap())
}

fn literal() -> impl Strategy<Value = Formula> {
    (prop::sample::select(vec!["p", "q", "near_1", "x2"]), any::<bool>()).prop_map(|(n, neg)| {
        if neg {
            Formula::not_predicate(n)
        } else {
            Formula::predicate(n)
        }
    })
}

fn formula() -> impl Strategy<Value = Formula> {
    literal().prop_recursive(3, 24, 3, |inner| {
        prop_oneof![
            (interval(), inner.clone()).prop_map(|(i, f)| Formula::always(i, f)),
            (interval(), inner.clone()).prop_map(|(i, f)| Formula::eventually(i, f)),
            (interval(), inner.clone(), inner.clone()).prop_map(|(i, l, r)| Formula::until(i, l, r)),
            prop::collection::vec(inner, 2..4).prop_map(Formula::And),
        ]
    })
}

fn env(name: &str, x: &[f64]) -> Option<f64> {
    match name {
        "p" => Some(x[0]),
        "q" => Some(0.3 - x[0] * x[0]),
        _ => None,
    }
}

fn signal() -> impl Strategy<Value = Trajectory> {
    prop::collection::vec(-1.0f64..1.0, 21..40).prop_map(|v| Trajectory::from_flat(0.1, 0.0, 1, v).unwrap())
}

proptest! {
    #[test]
    fn print_then_parse_is_identity(f in formula()) {
        let text = f.to_string();
        prop_assert_eq!(parse(&text).unwrap(), f, "{}", text);
    }

    #[test]
    fn negated_literal_flips_sign(x in signal(), k in 0usize..20, name in prop::sample::select(vec!["p", "q"])) {
        let e = FnEnv(env);
        let t = k as f64 * 0.1;
        let pos = robustness(&Formula::predicate(name), &x, t, &e).unwrap();
        let neg = robustness(&Formula::not_predicate(name), &x, t, &e).unwrap();
        prop_assert_eq!(pos, -neg);
    }

    #[test]
    fn always_not_is_minus_eventually(x in signal(), a in 0u32..10, len in 0u32..10) {
        let e = FnEnv(env);
        let iv = TimeInterval::new(a as f64 / 10.0, (a + len) as f64 / 10.0).unwrap();
        let g = robustness(&Formula::always(iv, Formula::not_predicate("p")), &x, 0.0, &e).unwrap();
        let f = robustness(&Formula::eventually(iv, Formula::predicate("p")), &x, 0.0, &e).unwrap();
        prop_assert_eq!(g, -f);
    }

    #[test]
    fn team_selections_stack_to_a_permutation(
        dims in prop::collection::vec(1usize..4, 1..6),
        seed in any::<u64>(),
    ) {
        let agents: Vec<AgentSpec> = dims
            .iter()
            .enumerate()
            .map(|(k, &dim)| AgentSpec { id: AgentId(k as u32 + 1), dim })
            .collect();
        // Random grouping of the agents into teams.
        let mut r = rng(seed);
        let n_teams = r.random_range(1..=agents.len());
        let mut teams: Vec<Vec<AgentId>> = vec![Vec::new(); n_teams];
        for (k, a) in agents.iter().enumerate() {
            let t = if k < n_teams { k } else { r.random_range(0..n_teams) };
            teams[t].push(a.id);
        }
        let p = TeamPartition::new(agents, teams).unwrap();
        let parts: Vec<SelectionMatrix> = (0..p.team_count()).map(|l| p.selection_for_team(l).unwrap()).collect();
        let stacked = SelectionMatrix::stack(&parts).unwrap();
        prop_assert!(stacked.is_permutation());
        // x = A z with A = stack(E)^T recovers the global state.
        let a = stacked.to_dense().transpose();
        let product = a * stacked.to_dense();
        prop_assert_eq!(product, DMatrix::identity(p.dim(), p.dim()));
    }
}

/// Samples team states inside each cube and checks the global predicate
/// holds on the reassembled argument.
#[test]
fn cubes_lie_inside_the_level_set() {
    let mut r = rng(41);
    for case in 0..20 {
        let inst = random_instance(&mut r);
        let prob = assemble_program(0, &inst.predicate, &inst.partition, &inst.domain).unwrap();
        let sol = solve_decomposition(&prob, &SolverConfig::default()).unwrap();
        for _ in 0..10_000 {
            let mut y = vec![0.0; inst.predicate.dim()];
            for (part, cube) in prob.split.parts.iter().zip(&sol.cubes) {
                assert_eq!(part.team, cube.team);
                for (&local, &pos) in part.local_indices.iter().zip(&part.positions) {
                    let c = cube.center[local];
                    y[pos] = c + cube.radius * r.random_range(-1.0..=1.0);
                }
            }
            let h = inst.predicate.value(&y);
            assert!(h >= -1e-9, "case {case}: h = {h} at {y:?}");
        }
    }
}

fn disc(offset: f64) -> f64 {
    let p = TeamPartition::singletons(vec![AgentSpec { id: AgentId(1), dim: 2 }]).unwrap();
    let h = PredicateFunction::concave_quadratic(
        offset,
        vec![0.1, -0.2],
        DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
        vec![StateCoord::new(1, 0), StateCoord::new(1, 1)],
    )
    .unwrap();
    let dom = Domain::new(vec![-1.0; 2], vec![1.0; 2]).unwrap();
    let prob = assemble_program(0, &h, &p, &dom).unwrap();
    solve_decomposition(&prob, &SolverConfig::default()).unwrap().objective
}

#[test]
fn larger_level_sets_give_larger_cubes() {
    let radii: Vec<f64> = [0.01, 0.05, 0.1, 0.2, 0.4].iter().map(|&o| disc(o)).collect();
    for w in radii.windows(2) {
        assert!(w[1] > w[0] - 1e-9, "{radii:?}");
    }
}

#[test]
fn solver_is_deterministic() {
    let mut r = rng(9);
    for _ in 0..10 {
        let inst = random_instance(&mut r);
        let prob = assemble_program(0, &inst.predicate, &inst.partition, &inst.domain).unwrap();
        let a = solve_decomposition(&prob, &SolverConfig::default()).unwrap();
        let b = solve_decomposition(&prob, &SolverConfig::default()).unwrap();
        assert_eq!(a, b);
    }
}
