//! Seeded statistical checks of the SGD dynamics: stationary noise floors
//! and variance decay under growing batches.

use sgdsched::*;

fn plateau(estimates: &[StepEstimate]) -> (f64, f64) {
    // Mean and pooled standard error over the last 10% of recorded steps.
    let tail = estimates.len() / 10;
    let window = &estimates[estimates.len() - tail.max(1)..];
    let mean = window.iter().map(|e| e.mean).sum::<f64>() / window.len() as f64;
    let se = (window
        .iter()
        .map(|e| e.standard_error * e.standard_error)
        .sum::<f64>()
        / window.len() as f64)
        .sqrt();
    (mean, se)
}

fn constant_plan(n: u64, b: u64, epochs: u64, eta: f64) -> SchedulerPlan {
    let bs = BsSchedule::Constant { b0: b };
    let structure = build_structure(n, &bs, &[epochs]).unwrap();
    SchedulerPlan::new(LrSchedule::Constant { eta_max: eta }, bs, structure).unwrap()
}

fn run_grid(problem: &Problem, plan: SchedulerPlan, seeds: u64) -> Vec<StepEstimate> {
    let base = RunConfig::new(plan, problem.clone(), vec![2.0; problem.dim()], 0, 1).unwrap();
    let exp = Experiment::seed_grid("grid", &base, 42, seeds);
    let traces = execute_runs(&exp.runs, 0).unwrap();
    aggregate(&traces, Measure::GradNorm2).unwrap()
}

#[test]
fn noise_floor_rises_with_eta_and_falls_with_batch() {
    // 3x3 grid: the long-run plateau of E||grad f||^2 is increasing in eta
    // at fixed batch and decreasing in batch at fixed eta.
    let problem = Problem::seeded_quadratic(64, 10, 1.0, 7).unwrap();
    let etas = [0.05, 0.1, 0.2];
    let batches = [8u64, 16, 32];
    let seeds = 100;
    let mut grid = [[(0.0f64, 0.0f64); 3]; 3];
    for (i, &eta) in etas.iter().enumerate() {
        for (j, &b) in batches.iter().enumerate() {
            let epochs = 1500 / (64 / b); // roughly equal total steps
            let estimates = run_grid(&problem, constant_plan(64, b, epochs, eta), seeds);
            grid[i][j] = plateau(&estimates);
        }
    }
    for j in 0..3 {
        for i in 0..2 {
            let (lo, se_lo) = grid[i][j];
            let (hi, se_hi) = grid[i + 1][j];
            let se = (se_lo * se_lo + se_hi * se_hi).sqrt();
            assert!(
                hi > lo - 2.0 * se,
                "plateau not increasing in eta at b = {}: {lo} vs {hi}",
                batches[j]
            );
        }
    }
    for i in 0..3 {
        for j in 0..2 {
            let (hi, se_hi) = grid[i][j];
            let (lo, se_lo) = grid[i][j + 1];
            let se = (se_lo * se_lo + se_hi * se_hi).sqrt();
            assert!(
                lo < hi + 2.0 * se,
                "plateau not decreasing in batch at eta = {}: {hi} vs {lo}",
                etas[i]
            );
        }
    }
}

#[test]
fn gradient_norm_at_block_ends_decays_under_growth() {
    // Doubling batches: the seed-mean squared gradient norm at the end of
    // each block is nonincreasing in the block index (2-SE slack).
    let problem = Problem::seeded_quadratic(64, 10, 1.0, 7).unwrap();
    let bs = BsSchedule::ExponentialGrowth { b0: 8, delta: 2.0 };
    let structure = build_structure(64, &bs, &[120, 120, 120, 120]).unwrap();
    let boundaries = structure.block_boundaries().to_vec();
    let plan = SchedulerPlan::new(LrSchedule::Constant { eta_max: 0.1 }, bs, structure).unwrap();
    let base = RunConfig::new(plan, problem, vec![2.0; 10], 0, 1).unwrap();
    let exp = Experiment::seed_grid("growth", &base, 42, 100);
    let traces = execute_runs(&exp.runs, 0).unwrap();
    let estimates = aggregate(&traces, Measure::GradNorm2).unwrap();

    let at = |t: u64| estimates.iter().find(|e| e.t == t).unwrap();
    let mut prev: Option<&StepEstimate> = None;
    for &end in &boundaries {
        let e = at(end - 1);
        if let Some(p) = prev {
            let se = (p.standard_error.powi(2) + e.standard_error.powi(2)).sqrt();
            assert!(
                e.mean <= p.mean + 2.0 * se,
                "block-end estimate rose: {} -> {}",
                p.mean,
                e.mean
            );
        }
        prev = Some(e);
    }
}

#[test]
fn joint_growth_also_decays_at_block_ends() {
    let problem = Problem::seeded_quadratic(64, 10, 1.0, 7).unwrap();
    let bs = BsSchedule::ExponentialGrowth { b0: 8, delta: 2.0 };
    let structure = build_structure(64, &bs, &[120, 120, 120, 120]).unwrap();
    let boundaries = structure.block_boundaries().to_vec();
    let plan = SchedulerPlan::new(
        LrSchedule::ExponentialGrowth {
            eta0: 0.1,
            gamma: 1.4,
        },
        bs,
        structure,
    )
    .unwrap();
    let base = RunConfig::new(plan, problem, vec![2.0; 10], 0, 1).unwrap();
    let exp = Experiment::seed_grid("joint", &base, 42, 100);
    let traces = execute_runs(&exp.runs, 0).unwrap();
    let estimates = aggregate(&traces, Measure::GradNorm2).unwrap();
    let at = |t: u64| estimates.iter().find(|e| e.t == t).unwrap();
    let mut prev: Option<&StepEstimate> = None;
    for &end in &boundaries {
        let e = at(end - 1);
        if let Some(p) = prev {
            let se = (p.standard_error.powi(2) + e.standard_error.powi(2)).sqrt();
            assert!(e.mean <= p.mean + 2.0 * se);
        }
        prev = Some(e);
    }
}
