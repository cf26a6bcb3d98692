//! Exhaustive search over a uniform `Δb` grid, one fixed-susceptance solve per point.

use std::sync::Mutex;
use std::time::Instant;

use super::{build_model, MethodConfig, MethodError, MethodReport};
use crate::formulation::SusceptancePlan;
use crate::network::{Scenario, TopologyMode};
use crate::solver::SolveStatus;

pub const MAX_ORACLE_LINES: usize = 6;
pub const MAX_ORACLE_STEPS: usize = 9;

fn axis(scale: f64, r: f64, steps: usize) -> Vec<f64> {
    let span = r * scale.abs();
    if steps <= 1 || span == 0.0 {
        return vec![0.0];
    }
    (0..steps).map(|k| -span + 2.0 * span * k as f64 / (steps - 1) as f64).collect()
}

/// Best cost over `steps` evenly spaced deviations in `[-r |b̄|, r |b̄|]` on every VID line.
pub fn brute_force_oracle(scenario: &Scenario, steps: usize, config: &MethodConfig) -> Result<MethodReport, MethodError> {
    if scenario.topology_mode != TopologyMode::Nominal {
        return Err(MethodError::OracleTopology);
    }
    let lines: Vec<usize> = scenario.vid_lines.iter().copied().collect();
    if lines.len() > MAX_ORACLE_LINES || steps > MAX_ORACLE_STEPS || steps == 0 {
        return Err(MethodError::OracleBudget { lines: lines.len(), steps });
    }
    let nominal = scenario.susceptances();
    let axes: Vec<Vec<f64>> = lines.iter().map(|&l| axis(nominal[l], scenario.r, steps)).collect();
    let total: usize = axes.iter().map(Vec::len).product();

    let point = |mut k: usize| -> Vec<f64> {
        let mut db = vec![0.0; nominal.len()];
        for (&l, ax) in lines.iter().zip(&axes) {
            db[l] = ax[k % ax.len()];
            k /= ax.len();
        }
        db
    };

    let start = Instant::now();
    let jobs = config.jobs.max(1).min(total);
    // (cost, index) of the best point; ties go to the lowest index.
    let best: Mutex<(f64, usize)> = Mutex::new((f64::INFINITY, usize::MAX));
    let failure: Mutex<Option<MethodError>> = Mutex::new(None);
    std::thread::scope(|scope| {
        for worker in 0..jobs {
            let (best, failure, point, nominal) = (&best, &failure, &point, &nominal);
            scope.spawn(move || {
                for k in (worker..total).step_by(jobs) {
                    let db = point(k);
                    let plan = SusceptancePlan::fixed(nominal.iter().zip(&db).map(|(b, d)| b + d).collect());
                    let built = match build_model(scenario, config, Some(&plan)) {
                        Ok(b) => b,
                        Err(e) => {
                            *failure.lock().unwrap() = Some(e);
                            return;
                        }
                    };
                    let result = built.model.solve();
                    if result.status.is_success() && result.has_solution() {
                        let mut b = best.lock().unwrap();
                        if result.objective < b.0 || (result.objective == b.0 && k < b.1) {
                            *b = (result.objective, k);
                        }
                    }
                }
            });
        }
    });
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    let (cost, index) = best.into_inner().unwrap();

    let mut report = MethodReport::for_scenario(scenario, "oracle");
    report.iterations = total;
    report.wall_time_s = start.elapsed().as_secs_f64();
    report.mip_gap = 0.0;
    if cost.is_finite() {
        report.status = SolveStatus::Optimal;
        report.objective = cost;
        report.validated_cost = cost;
        report.db_star = point(index);
    } else {
        report.status = SolveStatus::Infeasible;
        report.message = Some(format!("none of the {total} grid points was feasible"));
    }
    report.set_reference(config.reference.clone());
    Ok(report)
}
