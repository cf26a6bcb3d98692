//! McCormick envelopes of `w = Δb Δθ`, single-shot and re-centred every `dr`.

use serde::{Deserialize, Serialize};

use super::{
    build_model, cell_tag, dump_model, record_solve, solve_fixed, validate_report, MethodConfig, MethodError,
    MethodReport,
};
use crate::formulation::{FlowVariables, SusceptancePlan};
use crate::network::Scenario;
use crate::solver::{Model, ModelError, Sense, SolveStatus, VarId};

const BOUND_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McCormickBounds {
    pub db_min: Vec<f64>,
    pub db_max: Vec<f64>,
    pub dth_min: Vec<f64>,
    pub dth_max: Vec<f64>,
}

impl McCormickBounds {
    /// `Δb` box from the plan, `Δθ` within the model's symmetric bounds.
    pub fn from_plan(plan: &SusceptancePlan, dtheta_max: &[f64]) -> Self {
        Self {
            db_min: plan.db_lower.clone(),
            db_max: plan.db_upper.clone(),
            dth_min: dtheta_max.iter().map(|d| -d).collect(),
            dth_max: dtheta_max.to_vec(),
        }
    }
}

/// The four envelope rows of `w = x y` over `[xlo, xhi] x [ylo, yhi]`.
pub fn add_mccormick_envelope(
    model: &mut Model,
    name: &str,
    w: VarId,
    x: VarId,
    y: VarId,
    (xlo, xhi): (f64, f64),
    (ylo, yhi): (f64, f64),
) -> Result<(), ModelError> {
    // w >= xlo y + x ylo - xlo ylo
    model.add_constraint(format!("{name}.mc1"), [(w, 1.0), (y, -xlo), (x, -ylo)], Sense::Ge, -xlo * ylo)?;
    // w >= xhi y + x yhi - xhi yhi
    model.add_constraint(format!("{name}.mc2"), [(w, 1.0), (y, -xhi), (x, -yhi)], Sense::Ge, -xhi * yhi)?;
    // w <= xlo y + x yhi - xlo yhi
    model.add_constraint(format!("{name}.mc3"), [(w, 1.0), (y, -xlo), (x, -yhi)], Sense::Le, -xlo * yhi)?;
    // w <= xhi y + x ylo - xhi ylo
    model.add_constraint(format!("{name}.mc4"), [(w, 1.0), (y, -xhi), (x, -ylo)], Sense::Le, -xhi * ylo)?;
    Ok(())
}

fn check_bounds(line: usize, what: &'static str, model: (f64, f64), lo: f64, hi: f64) -> Result<(), MethodError> {
    let close = |a: f64, b: f64| (a - b).abs() <= BOUND_TOL * (1.0 + a.abs().max(b.abs()));
    if close(model.0, lo) && close(model.1, hi) && lo <= hi {
        Ok(())
    } else {
        Err(MethodError::Bounds { line, what, lo, hi, model_lo: model.0, model_hi: model.1 })
    }
}

pub fn apply_mccormick(model: &mut Model, fv: &FlowVariables, bounds: &McCormickBounds) -> Result<(), MethodError> {
    for (l, lv) in fv.lines.iter().enumerate() {
        let (db_lo, db_hi) = (bounds.db_min[l], bounds.db_max[l]);
        let (th_lo, th_hi) = (bounds.dth_min[l], bounds.dth_max[l]);
        check_bounds(l, "Δb", model.bounds(lv.db), db_lo, db_hi)?;
        check_bounds(l, "Δθ", model.bounds(lv.dtheta), th_lo, th_hi)?;
        add_mccormick_envelope(model, &format!("line{l}"), lv.w, lv.db, lv.dtheta, (db_lo, db_hi), (th_lo, th_hi))?;
    }
    Ok(())
}

/// Envelopes over the full `±r |b̄|` box, solved once.
pub fn solve_mccormick(scenario: &Scenario, config: &MethodConfig) -> MethodReport {
    let mut report = MethodReport::for_scenario(scenario, "mccormick");
    let plan = SusceptancePlan::from_scenario(scenario);
    let mut built = match build_model(scenario, config, Some(&plan)) {
        Ok(b) => b,
        Err(e) => return report.failed(e),
    };
    let bounds = McCormickBounds::from_plan(&plan, &built.vars.dtheta_max);
    if let Err(e) = apply_mccormick(&mut built.model, &built.vars, &bounds) {
        return report.failed(e);
    }
    dump_model(config, &built.model, &cell_tag(scenario, "mccormick"));
    let result = built.model.solve();
    record_solve(&mut report, &result);
    report.iterations = 1;
    if result.has_solution() {
        report.db_star = built.vars.lines.iter().map(|lv| result.value(lv.db)).collect();
        report.topology_star = built.vars.topology_values(&result);
        validate_report(scenario, config, &mut report);
    }
    report
}

/// Step box around the current setpoint: `±dr |b̄|`, clipped so the cumulative deviation stays
/// within `±r_final |b̄|`.
fn step_plan(scenario: &Scenario, nominal: &[f64], b_hat: &[f64], r_final: f64, dr: f64) -> SusceptancePlan {
    let n = nominal.len();
    let mut plan = SusceptancePlan::fixed(b_hat.to_vec());
    for l in 0..n {
        if !scenario.vid_lines.contains(&l) {
            continue;
        }
        let scale = nominal[l].abs();
        let offset = b_hat[l] - nominal[l];
        let lo = (-dr * scale).max(-r_final * scale - offset);
        let hi = (dr * scale).min(r_final * scale - offset);
        if hi > lo {
            plan.db_lower[l] = lo;
            plan.db_upper[l] = hi;
        }
    }
    plan
}

/// Number of passes of `while r < r_final { ...; r += dr }` starting from zero.
pub fn iteration_count(r_final: f64, dr: f64) -> usize {
    if r_final <= 0.0 {
        0
    } else {
        (r_final / dr - 1e-9).ceil().max(1.0) as usize
    }
}

/// Re-centre the envelopes on the previous solution every step of `dr`, until the cumulative
/// range reaches `r_final`.
pub fn solve_iterative_mccormick(scenario: &Scenario, r_final: f64, dr: f64, config: &MethodConfig) -> MethodReport {
    const NAME: &str = "iter_mccormick";
    let mut report = MethodReport::for_scenario(scenario, NAME);
    if r_final > 0.0 && !(dr > 0.0 && dr.is_finite()) {
        return report.failed(MethodError::Step { dr, r: r_final });
    }
    let iterations = iteration_count(r_final, dr);
    if iterations == 0 {
        let mut fixed = solve_fixed(scenario, config);
        fixed.method = NAME.to_string();
        fixed.iterations = 0;
        return fixed;
    }

    let nominal = scenario.susceptances();
    let mut b_hat = nominal.clone();
    let mut topology: Option<Vec<bool>> = None;
    let mut worst = SolveStatus::Optimal;
    for k in 0..iterations {
        let plan = step_plan(scenario, &nominal, &b_hat, r_final, dr);
        let mut built = match build_model(scenario, config, Some(&plan)) {
            Ok(b) => b,
            Err(e) => return report.failed(e),
        };
        if let Err(e) = apply_mccormick(&mut built.model, &built.vars, &McCormickBounds::from_plan(&plan, &built.vars.dtheta_max)) {
            return report.failed(e);
        }
        if config.warm_start {
            if let Some(prev) = &topology {
                built.model.set_warm_start(built.vars.assignment(prev));
            }
        }
        dump_model(config, &built.model, &format!("{}_it{}", cell_tag(scenario, NAME), k + 1));
        let result = built.model.solve();
        record_solve(&mut report, &result);
        if !result.has_solution() {
            log::warn!("{}: iteration {} ended {} without a solution", scenario.net.name, k + 1, result.status);
            if k == 0 {
                return report;
            }
            report.message = Some(format!("iteration {} ended {}; reporting iterate {}", k + 1, result.status, k));
            worst = result.status;
            break;
        }
        if !result.status.is_success() {
            worst = result.status;
        }
        for (l, lv) in built.vars.lines.iter().enumerate() {
            let limit = r_final * nominal[l].abs();
            let dev = (b_hat[l] + result.value(lv.db) - nominal[l]).clamp(-limit, limit);
            b_hat[l] = nominal[l] + dev;
        }
        topology = built.vars.topology_values(&result);
        report.iterations = k + 1;
    }
    if !worst.is_success() {
        report.status = worst;
    }
    report.db_star = b_hat.iter().zip(&nominal).map(|(b, n)| b - n).collect();
    report.topology_star = topology;
    validate_report(scenario, config, &mut report);
    report
}

#[cfg(test)]
mod tests {
    use super::super::tests::congested_triangle;
    use super::*;

    /// Range of `w` admitted by the envelope rows with `x`, `y` fixed.
    fn w_range(xlo: f64, xhi: f64, ylo: f64, yhi: f64, x0: f64, y0: f64) -> (f64, f64) {
        let mut m = Model::new("env");
        let x = m.add_continuous("x", xlo, xhi);
        let y = m.add_continuous("y", ylo, yhi);
        let w = m.add_free("w");
        add_mccormick_envelope(&mut m, "t", w, x, y, (xlo, xhi), (ylo, yhi)).unwrap();
        m.fix(x, x0);
        m.fix(y, y0);
        m.add_linear_cost(w, 1.0).unwrap();
        let lo = m.solve();
        let mut m2 = m.clone();
        m2.add_linear_cost(w, -2.0).unwrap();
        let hi = m2.solve();
        (lo.value(w), hi.value(w))
    }

    #[test]
    fn degenerate_box_forces_zero() {
        let (lo, hi) = w_range(0.0, 0.0, -1.2, 1.2, 0.0, 0.7);
        assert!(lo.abs() < 1e-12 && hi.abs() < 1e-12);
    }

    #[test]
    fn corner_is_exact() {
        let (lo, hi) = w_range(-5.0, 5.0, -0.1, 0.1, 5.0, 0.1);
        assert!((lo - 0.5).abs() < 1e-9 && (hi - 0.5).abs() < 1e-9);
    }

    #[test]
    fn centre_range_is_half_unit() {
        let (lo, hi) = w_range(-5.0, 5.0, -0.1, 0.1, 0.0, 0.0);
        assert!((lo + 0.5).abs() < 1e-9, "{lo}");
        assert!((hi - 0.5).abs() < 1e-9, "{hi}");
    }

    #[test]
    fn mismatched_bounds_are_rejected() {
        let s = congested_triangle(0.5);
        let config = MethodConfig::default();
        let plan = SusceptancePlan::from_scenario(&s);
        let mut built = build_model(&s, &config, Some(&plan)).unwrap();
        let mut bounds = McCormickBounds::from_plan(&plan, &built.vars.dtheta_max);
        bounds.db_max[1] *= 0.5;
        assert!(matches!(
            apply_mccormick(&mut built.model, &built.vars, &bounds),
            Err(MethodError::Bounds { line: 1, .. })
        ));
    }

    #[test]
    fn relaxation_is_below_fixed() {
        let s = congested_triangle(0.5);
        let config = MethodConfig::default();
        let fixed = solve_fixed(&s, &config);
        let mc = solve_mccormick(&s, &config);
        assert!(mc.succeeded());
        assert!(mc.objective <= fixed.objective + 1e-6);
        assert!(mc.validated_cost >= mc.objective - 1e-6);
    }

    #[test]
    fn zero_flexibility_equals_fixed() {
        let s = congested_triangle(0.0);
        let config = MethodConfig::default();
        let fixed = solve_fixed(&s, &config);
        let mc = solve_mccormick(&s, &config);
        let it = solve_iterative_mccormick(&s, 0.0, 0.0, &config);
        assert!((mc.objective - fixed.objective).abs() < 1e-9);
        assert!((it.objective - fixed.objective).abs() < 1e-9);
        assert_eq!(it.iterations, 0);
    }

    #[test]
    fn one_step_matches_single_shot() {
        let s = congested_triangle(0.05);
        let config = MethodConfig::default();
        let mc = solve_mccormick(&s, &config);
        let it = solve_iterative_mccormick(&s, 0.05, 0.05, &config);
        assert_eq!(it.iterations, 1);
        assert!((mc.objective - it.objective).abs() < 1e-9);
    }

    #[test]
    fn iteration_counts() {
        assert_eq!(iteration_count(0.1, 0.05), 2);
        assert_eq!(iteration_count(0.15, 0.05), 3);
        assert_eq!(iteration_count(0.5, 0.05), 10);
        assert_eq!(iteration_count(0.12, 0.05), 3);
        assert_eq!(iteration_count(0.0, 0.05), 0);
        assert_eq!(iteration_count(0.05, 0.1), 1);
    }

    #[test]
    fn step_plan_respects_cumulative_limit() {
        let s = congested_triangle(0.1);
        let nominal = s.susceptances();
        let b_hat: Vec<f64> = nominal.iter().map(|b| b * 1.08).collect();
        let plan = step_plan(&s, &nominal, &b_hat, 0.1, 0.05);
        for l in 0..3 {
            assert!((plan.db_upper[l] - 0.02 * nominal[l]).abs() < 1e-12);
            assert!((plan.db_lower[l] + 0.05 * nominal[l]).abs() < 1e-12);
        }
    }

    #[test]
    fn bad_step_is_reported() {
        let r = solve_iterative_mccormick(&congested_triangle(0.2), 0.2, 0.0, &MethodConfig::default());
        assert_eq!(r.status, SolveStatus::Error);
        assert!(r.message.unwrap().contains("dr"));
    }
}
