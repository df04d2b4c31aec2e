use st_planner::planner::{PlannerKind, TrialOutcome};
use st_planner::sim_harness;
use st_planner::types::ScenarioConfig;
use rayon::prelude::*;

fn main() {
    let cfg = ScenarioConfig::default();
    for planner in [PlannerKind::St, PlannerKind::Vo, PlannerKind::Wg] {
        let mut rates = Vec::new();
        let mut times = Vec::new();
        for n in [20usize, 40, 60, 80] {
            let outcomes: Vec<TrialOutcome> = (0..30u64)
                .into_par_iter()
                .map(|seed| {
                    let (world, robot) = sim_harness::prepare_trial(&cfg, n, seed);
                    sim_harness::run_trial(world, robot, planner, &cfg).outcome
                })
                .collect();
            let ok = outcomes.iter().filter(|o| o.is_success()).count();
            let mean = outcomes.iter().map(|o| o.time_cost(30.0)).sum::<f64>() / 30.0;
            rates.push(ok as f64 / 30.0);
            times.push(mean);
        }
        println!("{planner}: success {rates:.2?} mean_time {times:.2?}");
    }
}
