mod common;

use proptest::prelude::*;
use vidopt::formulation::{self, FormulationConfig, SusceptancePlan};
use vidopt::methods::{
    apply_mccormick, apply_sos2, brute_force_oracle, iteration_count, solve_fixed, solve_iterative_mccormick,
    solve_mccormick, solve_sos2, McCormickBounds, Sos2Grid,
};
use vidopt::network::CongestionBase;
use vidopt::solver::{Model, SolveStatus, VarId};
use vidopt::{MethodConfig, MethodRegistry, TopologyMode};

use common::{congested_triangle, envelope_interval, load, sos2_interval, sos2_single_line};

fn arb_box() -> impl Strategy<Value = ((f64, f64), (f64, f64))> {
    ((-50.0..50.0f64, 1e-3..50.0f64), (-2.0..2.0f64, 1e-4..2.0f64)).prop_map(|((x, wx), (y, wy))| ((x, x + wx), (y, y + wy)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn envelope_contains_the_product(((xb, yb), s, t) in (arb_box(), 0.0..=1.0f64, 0.0..=1.0f64)) {
        let x = xb.0 + s * (xb.1 - xb.0);
        let y = yb.0 + t * (yb.1 - yb.0);
        let (lo, hi) = envelope_interval(xb, yb, x, y);
        let tol = 1e-9 * (1.0 + (x * y).abs());
        prop_assert!(lo <= x * y + tol && x * y <= hi + tol, "[{lo}, {hi}] vs {}", x * y);
    }

    #[test]
    fn envelope_is_exact_on_the_box_edges(((xb, yb), s, on_x, hi_side) in (arb_box(), 0.0..=1.0f64, any::<bool>(), any::<bool>())) {
        let (x, y) = if on_x {
            (if hi_side { xb.1 } else { xb.0 }, yb.0 + s * (yb.1 - yb.0))
        } else {
            (xb.0 + s * (xb.1 - xb.0), if hi_side { yb.1 } else { yb.0 })
        };
        let (lo, hi) = envelope_interval(xb, yb, x, y);
        let tol = 1e-9 * (1.0 + xb.0.abs().max(xb.1.abs()) * yb.0.abs().max(yb.1.abs()));
        prop_assert!((lo - x * y).abs() <= tol && (hi - x * y).abs() <= tol, "[{lo}, {hi}] vs {}", x * y);
    }

    #[test]
    fn envelope_gap_at_the_centre((xb, yb) in arb_box()) {
        let (x, y) = ((xb.0 + xb.1) / 2.0, (yb.0 + yb.1) / 2.0);
        let (lo, hi) = envelope_interval(xb, yb, x, y);
        let quarter = (xb.1 - xb.0) * (yb.1 - yb.0) / 4.0;
        let tol = 1e-9 * (1.0 + quarter + (x * y).abs());
        prop_assert!((hi - x * y - quarter).abs() <= tol);
        prop_assert!((x * y - lo - quarter).abs() <= tol);
    }
}

#[test]
fn envelope_center_example() {
    let (lo, hi) = envelope_interval((-5.0, 5.0), (-0.1, 0.1), 0.0, 0.0);
    assert!((lo + 0.5).abs() < 1e-12 && (hi - 0.5).abs() < 1e-12, "[{lo}, {hi}]");
}

#[test]
fn sos2_surface_error_is_bounded_by_the_cell() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    for (base, r, d, n) in [(10.0, 0.1, 0.1, 11), (-4.0, 0.5, 0.3, 7), (2.5, 0.3, 1.2, 5)] {
        let line = sos2_single_line(base, r, d, n, n);
        let (sb, st) = line.grid.spacing(0);
        let bound = sb * st / 4.0;
        for _ in 0..40 {
            let db = rng.gen_range(-r * f64::abs(base)..=r * f64::abs(base));
            let dth = rng.gen_range(-d..=d);
            let (lo, hi) = sos2_interval(&line, db, dth);
            let exact = db * dth;
            assert!(exact - lo <= bound + 1e-7 && hi - exact <= bound + 1e-7, "({db}, {dth}): [{lo}, {hi}] vs {exact}");
        }
    }
}

#[test]
fn sos2_is_exact_on_grid_nodes() {
    let line = sos2_single_line(10.0, 0.1, 0.1, 11, 11);
    for (i, j) in [(0, 0), (3, 7), (10, 10), (5, 5), (8, 1)] {
        let db = line.grid.b[0][i] - 10.0;
        let dth = line.grid.dth[0][j];
        let (lo, hi) = sos2_interval(&line, db, dth);
        assert!((lo - db * dth).abs() < 1e-9 && (hi - db * dth).abs() < 1e-9, "node ({i}, {j}): [{lo}, {hi}]");
    }
}

/// `λ` vectors over `n` members with entries in quarters, summing to 1.
fn quarter_vectors(n: usize) -> Vec<Vec<f64>> {
    fn rec(n: usize, left: usize, cur: &mut Vec<f64>, out: &mut Vec<Vec<f64>>) {
        if cur.len() + 1 == n {
            cur.push(left as f64 / 4.0);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for k in 0..=left {
            cur.push(k as f64 / 4.0);
            rec(n, left - k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, 4, &mut Vec::new(), &mut out);
    out
}

fn adjacent_support(x: &[f64]) -> bool {
    let nz: Vec<usize> = (0..x.len()).filter(|&i| x[i] > 0.0).collect();
    nz.len() <= 1 || (nz.len() == 2 && nz[1] == nz[0] + 1)
}

#[test]
fn sos2_encodings_accept_exactly_adjacent_pairs() {
    type Encode = fn(&mut Model, &[VarId], usize) -> Vec<VarId>;
    let encodings: [(&str, Encode); 2] = [
        ("segment", |m, x, _| m.add_sos2_via_binaries(x).unwrap()),
        ("log", |m, x, split| m.add_sos2_log(x, if split == 0 { None } else { Some(split) }).unwrap()),
    ];
    for n in 2..=5 {
        for (name, encode) in encodings {
            let splits = if name == "log" { 0..n - 1 } else { 0..1 };
            for split in splits {
                for x in quarter_vectors(n) {
                    let mut m = Model::new("sos");
                    let vars: Vec<VarId> = (0..n).map(|i| m.add_continuous(format!("x{i}"), 0.0, 1.0)).collect();
                    encode(&mut m, &vars, split);
                    for (v, val) in vars.iter().zip(&x) {
                        m.fix(*v, *val);
                    }
                    let status = m.solve().status;
                    let feasible = status.is_success();
                    assert!(feasible || status == SolveStatus::Infeasible, "{status:?}");
                    assert_eq!(feasible, adjacent_support(&x), "{name} n={n} split={split} x={x:?}");
                }
            }
        }
    }
}

fn congested_case(name: &str, factor: f64, lines: &[usize], r: f64) -> vidopt::Scenario {
    let base = CongestionBase::new(load(name)).unwrap();
    base.scenario(factor, 2000.0, r, TopologyMode::Nominal).unwrap().with_vid_lines(lines.iter().copied()).unwrap()
}

#[test]
fn relaxation_bounds_every_validated_cost() {
    let config = MethodConfig { jobs: 2, ..MethodConfig::default() };
    let registry = MethodRegistry::builtin();
    for s in [congested_triangle(0.5), congested_case("case9.m", 0.7, &[0, 3, 6], 0.3)] {
        let mc = solve_mccormick(&s, &config);
        assert!(mc.status.is_success());
        let oracle = brute_force_oracle(&s, 5, &config).unwrap();
        assert!(mc.objective <= oracle.objective * (1.0 + 1e-6), "{} > oracle {}", mc.objective, oracle.objective);
        for method in registry.iter() {
            let rep = method.solve(&s, &config);
            assert!(rep.validated_cost.is_finite(), "{}", method.name());
            assert!(mc.objective <= rep.validated_cost * (1.0 + 1e-6), "{}: {}", method.name(), rep.validated_cost);
        }
    }
}

#[test]
fn triangle_oracle_dominates_mccormick_point() {
    let s = congested_triangle(0.5);
    let config = MethodConfig::default();
    let oracle = brute_force_oracle(&s, 9, &config).unwrap();
    let mc = solve_mccormick(&s, &config);
    assert!(oracle.objective <= mc.validated_cost + 1e-6);
}

#[test]
fn envelope_binds_where_db_sits_on_its_bound() {
    let s = congested_case("case14.m", 0.7, &[0, 1, 2, 3, 6, 9], 0.4);
    let config = FormulationConfig::default();
    let plan = SusceptancePlan::from_scenario(&s);
    let mut built = formulation::build(&s, &config, Some(&plan)).unwrap();
    let bounds = McCormickBounds::from_plan(&plan, &built.vars.dtheta_max);
    apply_mccormick(&mut built.model, &built.vars, &bounds).unwrap();
    let res = built.model.solve();
    assert!(res.status.is_success());
    let mut at_bound = 0;
    for (l, lv) in built.vars.lines.iter().enumerate() {
        let (db, dth, w) = (res.value(lv.db), res.value(lv.dtheta), res.value(lv.w));
        if plan.is_variable(l) && ((db - plan.db_lower[l]).abs() < 1e-9 || (db - plan.db_upper[l]).abs() < 1e-9) {
            at_bound += 1;
            assert!((w - db * dth).abs() <= 1e-6, "line {l}: w={w} vs {}", db * dth);
        }
    }
    assert!(at_bound > 0);
}

#[test]
fn sos2_solution_stays_within_the_interpolation_bound() {
    let s = congested_case("case9.m", 0.7, &[0, 3, 6], 0.3);
    let config = FormulationConfig::default();
    let plan = SusceptancePlan::from_scenario(&s);
    let mut built = formulation::build(&s, &config, Some(&plan)).unwrap();
    let grid = Sos2Grid::from_plan(&plan, &built.vars.dtheta_max, 11, 11).unwrap();
    apply_sos2(&mut built.model, &built.vars, &grid).unwrap();
    let res = built.model.solve();
    assert!(res.status.is_success(), "{:?}", res.message);
    for &l in &[0, 3, 6] {
        let lv = built.vars.lines[l];
        let (db, dth, w) = (res.value(lv.db), res.value(lv.dtheta), res.value(lv.w));
        let (sb, st) = grid.spacing(l);
        assert!((w - db * dth).abs() <= sb * st / 4.0 + 1e-7, "line {l}");
    }
}

#[test]
fn mccormick_is_monotone_in_r() {
    let config = MethodConfig::default();
    let mut last = f64::INFINITY;
    for r in [0.0, 0.1, 0.2, 0.3, 0.5] {
        let s = congested_case("case14.m", 0.7, &[0, 1, 2, 3, 6, 9], r);
        let obj = solve_mccormick(&s, &config).objective;
        assert!(obj <= last * (1.0 + 1e-9), "r={r}: {obj} > {last}");
        last = obj;
    }
}

#[test]
fn zero_flexibility_collapses_every_method() {
    let s = congested_case("case14.m", 0.7, &[0, 1, 2, 3], 0.0);
    let config = MethodConfig::default();
    let fixed = solve_fixed(&s, &config).objective;
    let rel = |x: f64| (x - fixed).abs() / fixed;
    assert!(rel(solve_mccormick(&s, &config).objective) < 1e-6);
    assert!(rel(solve_iterative_mccormick(&s, 0.0, 0.05, &config).objective) < 1e-6);
    assert!(rel(solve_sos2(&s, &config, 11, 11).validated_cost) < 1e-6);
}

#[test]
fn iterative_schedule_length() {
    assert_eq!(iteration_count(0.1, 0.05), 2);
    assert_eq!(iteration_count(0.5, 0.05), 10);
    assert_eq!(iteration_count(0.12, 0.05), 3);
    assert_eq!(iteration_count(0.0, 0.05), 0);
}
