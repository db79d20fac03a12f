//! Local satisfaction implies global satisfaction on trajectories that were
//! not produced by the planner.

use stldec::fuzz::{random_scenario, random_spline_team, rng};
use stldec::sim::{assemble_global, global_env, run_scenario, RunOptions, TeamPlan};
use stldec::stl::robustness;
use stldec::synthesis::TimingMode;

#[test]
fn random_splines_respect_the_implication() {
    let mut r = rng(77);
    let mut locally_satisfied = 0;
    for seed in 0..40u64 {
        let mode = if seed % 2 == 0 {
            TimingMode::PointEventually
        } else {
            TimingMode::IntervalAlways
        };
        let s = random_scenario(seed, mode);
        let Ok(run) = run_scenario(&s, &RunOptions::default()) else {
            continue;
        };
        let env = global_env(&s.predicates, &s.partition).unwrap();
        for _ in 0..50 {
            let mut all_positive = true;
            let mut plans = Vec::new();
            for task in &run.tasks.tasks {
                let dim = s.partition.team_dim(task.team).unwrap();
                let half: Vec<f64> = s.partition.teams()[task.team]
                    .iter()
                    .flat_map(|&id| {
                        let a = s.agent(id).unwrap();
                        vec![a.state_bound() / (a.dim() as f64).sqrt(); a.dim()]
                    })
                    .collect();
                let z = random_spline_team(&mut r, &run.tasks, task.team, dim, &half, 0.05);
                let rho = robustness(&task.formula(), &z, 0.0, &task.env()).unwrap();
                all_positive &= rho > 0.0;
                plans.push(TeamPlan {
                    trajectory: z,
                    inputs: Vec::new(),
                    state_violations: Vec::new(),
                });
            }
            if !all_positive {
                continue;
            }
            locally_satisfied += 1;
            let x = assemble_global(&s.partition, &plans);
            let global = robustness(&s.formula, &x, 0.0, &env).unwrap();
            assert!(global > 0.0, "seed {seed}: local tasks hold, global rho = {global}");
        }
    }
    assert!(
        locally_satisfied > 100,
        "only {locally_satisfied} spline samples satisfied the local tasks"
    );
}
