#![allow(dead_code)]

use std::path::PathBuf;

use vidopt::io::{apply_setup_normalization, load_case, parse_case, PowerNetwork};

/// Three buses on a triangle of equal reactances; cheap generator at bus 1, expensive one at
/// bus 3 next to the 100 MW load.
pub const TRIANGLE: &str = r#"
function mpc = triangle
mpc.baseMVA = 100;
mpc.bus = [
	1	3	0	0	0	0	1	1	0	230	1	1.1	0.9;
	2	1	0	0	0	0	1	1	0	230	1	1.1	0.9;
	3	1	100	0	0	0	1	1	0	230	1	1.1	0.9;
];
mpc.gen = [
	1	0	0	0	0	1	100	1	200	0	0	0	0	0	0	0	0	0	0	0	0;
	3	0	0	0	0	1	100	1	200	0	0	0	0	0	0	0	0	0	0	0	0;
];
mpc.branch = [
	1	2	0	0.1	0	0	0	0	0	0	1	-360	360;
	2	3	0	0.1	0	0	0	0	0	0	1	-360	360;
	1	3	0	0.1	0	0	0	0	0	0	1	-360	360;
];
mpc.gencost = [
	2	0	0	3	0	10	0;
	2	0	0	3	0	100	0;
];
"#;

pub fn triangle() -> PowerNetwork {
    parse_case(TRIANGLE).unwrap()
}

pub fn case_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/cases").join(name)
}

pub fn load(name: &str) -> PowerNetwork {
    apply_setup_normalization(&load_case(case_path(name)).unwrap())
}

use vidopt::formulation::{FlowVariables, LineVars, SusceptancePlan};
use vidopt::methods::{add_mccormick_envelope, apply_sos2, Sos2Grid};
use vidopt::network::TopologyMode;
use vidopt::solver::{Model, Sense};
use vidopt::Scenario;

/// Triangle with the direct line 1-3 limited to 0.5 pu.
pub fn congested_triangle(r: f64) -> Scenario {
    Scenario::new(triangle(), vec![f64::INFINITY, f64::INFINITY, 0.5], 2000.0, r, TopologyMode::Nominal).unwrap()
}

/// Feasible `w` interval at `(x, y)` under the four envelope rows, read from the model.
pub fn envelope_interval(xb: (f64, f64), yb: (f64, f64), x: f64, y: f64) -> (f64, f64) {
    let mut m = Model::new("mc");
    let xv = m.add_continuous("x", xb.0, xb.1);
    let yv = m.add_continuous("y", yb.0, yb.1);
    let wv = m.add_free("w");
    add_mccormick_envelope(&mut m, "e", wv, xv, yv, xb, yb).unwrap();
    let mut values = vec![0.0; 3];
    values[xv.index()] = x;
    values[yv.index()] = y;
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for c in m.constraints() {
        let wc: f64 = c.terms.iter().filter(|(v, _)| *v == wv).map(|(_, k)| k).sum();
        let rest = c.activity(&values);
        let bound = (c.rhs - rest) / wc;
        match (c.sense, wc > 0.0) {
            (Sense::Ge, true) | (Sense::Le, false) => lo = lo.max(bound),
            (Sense::Le, true) | (Sense::Ge, false) => hi = hi.min(bound),
            (Sense::Eq, _) => {
                lo = lo.max(bound);
                hi = hi.min(bound);
            }
        }
    }
    (lo, hi)
}

pub struct SingleLine {
    pub model: Model,
    pub line: LineVars,
    pub grid: Sos2Grid,
}

/// One line `P = b̄ Δθ + w` with `Δb ∈ ±r|b̄|`, `Δθ ∈ ±d` and the SOS2 surface on `nb x nt`.
pub fn sos2_single_line(base: f64, r: f64, d: f64, nb: usize, nt: usize) -> SingleLine {
    let mut m = Model::new("sos");
    let span = r * base.abs();
    let line = LineVars {
        flow: m.add_free("P"),
        dtheta: m.add_continuous("dth", -d, d),
        w: m.add_free("w"),
        db: m.add_continuous("db", -span, span),
        status: None,
        ends: None,
    };
    m.add_constraint("flow", [(line.flow, 1.0), (line.dtheta, -base), (line.w, -1.0)], Sense::Eq, 0.0).unwrap();
    let fv = FlowVariables {
        lines: vec![line],
        busbar_angle: vec![],
        gen_split: vec![],
        gen_total: vec![],
        demand_split: vec![],
        injection: vec![],
        topology: None,
        base_susceptance: vec![base],
        big_m: vec![0.0],
        dtheta_max: vec![d],
    };
    let plan = SusceptancePlan { base: vec![base], db_lower: vec![-span], db_upper: vec![span] };
    let grid = Sos2Grid::from_plan(&plan, &[d], nb, nt).unwrap();
    apply_sos2(&mut m, &fv, &grid).unwrap();
    SingleLine { model: m, line, grid }
}

/// Smallest and largest `w` the SOS2 surface allows at `(Δb, Δθ)`.
pub fn sos2_interval(line: &SingleLine, db: f64, dth: f64) -> (f64, f64) {
    let mut out = [0.0; 2];
    for (k, sign) in [1.0, -1.0].into_iter().enumerate() {
        let mut m = line.model.clone();
        m.fix(line.line.db, db);
        m.fix(line.line.dtheta, dth);
        m.add_linear_cost(line.line.w, sign).unwrap();
        m.controls.rel_gap = 0.0;
        let res = m.solve();
        assert!(res.status.is_success(), "({db}, {dth}): {:?}", res.status);
        out[k] = res.value(line.line.w);
    }
    (out[0], out[1])
}
