//! Piecewise-linear interpolation of `b Δθ` on a breakpoint grid with SOS2 weights.

use serde::{Deserialize, Serialize};

use super::{build_model, cell_tag, dump_model, record_solve, validate_report, MethodConfig, MethodError, MethodReport};
use crate::formulation::{FlowVariables, LineVars, SusceptancePlan};
use crate::network::Scenario;
use crate::solver::{gray_code, sos2_code_layout, Model, Sense, VarId};

const GRID_TOL: f64 = 1e-9;

/// Breakpoints per line; lines with a fixed susceptance carry empty vectors and are left exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sos2Grid {
    pub b: Vec<Vec<f64>>,
    pub dth: Vec<Vec<f64>>,
}

/// `n` points over `±d`, mirrored exactly and with an exact zero when `n` is odd.
fn symmetric_axis(d: f64, n: usize) -> Vec<f64> {
    let m = (n - 1) as f64;
    (0..n).map(|k| d * (2.0 * k as f64 - m) / m).collect()
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|k| if k + 1 == n { hi } else { lo + k as f64 * step }).collect()
}

impl Sos2Grid {
    /// `n_b` breakpoints over the plan's susceptance range, `n_th` over `±dtheta_max[l]`.
    pub fn from_plan(
        plan: &SusceptancePlan,
        dtheta_max: &[f64],
        n_b: usize,
        n_th: usize,
    ) -> Result<Self, MethodError> {
        if n_b < 2 || n_th < 2 {
            return Err(MethodError::Grid { line: 0, message: format!("grid {n_b}x{n_th} needs at least 2 points per axis") });
        }
        let mut b = Vec::with_capacity(plan.len());
        let mut dth = Vec::with_capacity(plan.len());
        for l in 0..plan.len() {
            if plan.is_variable(l) {
                b.push(linspace(plan.base[l] + plan.db_lower[l], plan.base[l] + plan.db_upper[l], n_b));
                dth.push(symmetric_axis(dtheta_max[l], n_th));
            } else {
                b.push(Vec::new());
                dth.push(Vec::new());
            }
        }
        Ok(Self { b, dth })
    }

    pub fn spacing(&self, l: usize) -> (f64, f64) {
        let s = |v: &[f64]| if v.len() < 2 { 0.0 } else { v[1] - v[0] };
        (s(&self.b[l]), s(&self.dth[l]))
    }
}

/// Interpolation variables of one line; `lambda` is row-major over (b, Δθ).
#[derive(Debug, Clone, PartialEq)]
pub struct Sos2Vars {
    pub line: usize,
    pub lambda: Vec<VarId>,
    pub alpha: Vec<VarId>,
    pub beta: Vec<VarId>,
    /// Binaries of the logarithmic SOS2 encoding on `alpha` and `beta`.
    pub code_b: Vec<VarId>,
    pub code_th: Vec<VarId>,
    /// Gray-code offsets: segment `k` carries the code of `k + offset`.
    pub offset_b: usize,
    pub offset_th: usize,
}

fn check_axis(line: usize, axis: &str, points: &[f64], lo: f64, hi: f64) -> Result<(), MethodError> {
    let err = |message: String| MethodError::Grid { line, message };
    if points.len() < 2 {
        return Err(err(format!("{axis} axis has {} breakpoints", points.len())));
    }
    if points.windows(2).any(|p| !(p[1] > p[0])) {
        return Err(err(format!("{axis} breakpoints are not strictly increasing")));
    }
    let tol = GRID_TOL * (1.0 + lo.abs().max(hi.abs()));
    if (points[0] - lo).abs() > tol || (points[points.len() - 1] - hi).abs() > tol {
        return Err(err(format!(
            "{axis} breakpoints span [{}, {}] but the variable ranges over [{lo}, {hi}]",
            points[0],
            points[points.len() - 1]
        )));
    }
    Ok(())
}

/// Replace `w` on every gridded line by `Σ λ_ij b̂_i Δθ̂_j - b̂ Δθ`, so that the flow row
/// `P = b̂ Δθ + w` carries the interpolated product.
pub fn apply_sos2(model: &mut Model, fv: &FlowVariables, grid: &Sos2Grid) -> Result<Vec<Sos2Vars>, MethodError> {
    let mut out = Vec::new();
    for (l, lv) in fv.lines.iter().enumerate() {
        let (bs, ths) = (&grid.b[l], &grid.dth[l]);
        if bs.is_empty() && ths.is_empty() {
            continue;
        }
        let base = fv.base_susceptance[l];
        let (db_lo, db_hi) = model.bounds(lv.db);
        check_axis(l, "b", bs, base + db_lo, base + db_hi)?;
        let (th_lo, th_hi) = model.bounds(lv.dtheta);
        check_axis(l, "Δθ", ths, th_lo, th_hi)?;

        let (nb, nt) = (bs.len(), ths.len());
        let lambda: Vec<VarId> =
            (0..nb * nt).map(|k| model.add_continuous(format!("lam{l}.{}.{}", k / nt, k % nt), 0.0, 1.0)).collect();
        let alpha: Vec<VarId> = (0..nb).map(|i| model.add_continuous(format!("alpha{l}.{i}"), 0.0, 1.0)).collect();
        let beta: Vec<VarId> = (0..nt).map(|j| model.add_continuous(format!("beta{l}.{j}"), 0.0, 1.0)).collect();

        model.add_constraint(format!("sos{l}.simplex"), lambda.iter().map(|&v| (v, 1.0)), Sense::Eq, 1.0)?;
        for (i, &a) in alpha.iter().enumerate() {
            let terms = std::iter::once((a, 1.0)).chain((0..nt).map(|j| (lambda[i * nt + j], -1.0)));
            model.add_constraint(format!("sos{l}.alpha{i}"), terms, Sense::Eq, 0.0)?;
        }
        for (j, &b) in beta.iter().enumerate() {
            let terms = std::iter::once((b, 1.0)).chain((0..nb).map(|i| (lambda[i * nt + j], -1.0)));
            model.add_constraint(format!("sos{l}.beta{j}"), terms, Sense::Eq, 0.0)?;
        }
        // b̂ + Δb = Σ α_i b_i
        let terms = alpha.iter().zip(bs).map(|(&a, &b)| (a, b)).chain([(lv.db, -1.0)]);
        model.add_constraint(format!("sos{l}.b"), terms, Sense::Eq, base)?;
        let terms = beta.iter().zip(ths).map(|(&v, &t)| (v, t)).chain([(lv.dtheta, -1.0)]);
        model.add_constraint(format!("sos{l}.dtheta"), terms, Sense::Eq, 0.0)?;
        let mut terms: Vec<(VarId, f64)> = Vec::with_capacity(nb * nt + 2);
        for i in 0..nb {
            for j in 0..nt {
                let c = bs[i] * ths[j];
                if c != 0.0 {
                    terms.push((lambda[i * nt + j], c));
                }
            }
        }
        terms.push((lv.w, -1.0));
        terms.push((lv.dtheta, -base));
        model.add_constraint(format!("sos{l}.product"), terms, Sense::Eq, 0.0)?;

        let code_b = model.add_sos2_log(&alpha, None)?;
        // Top angle bit picks the sign of Δθ, the disjunction that matters most.
        let zero = (0..nt).min_by(|&a, &b| ths[a].abs().total_cmp(&ths[b].abs())).unwrap_or(0);
        let code_th = model.add_sos2_log(&beta, Some(zero))?;
        if zero > 0 && zero + 1 < nt && ths[zero] == 0.0 {
            add_sign_cone(model, l, lv, *code_th.last().unwrap(), (bs[0], bs[nb - 1]), (ths[0], ths[nt - 1]))?;
        }
        let offset_b = sos2_code_layout(nb - 1, None).1;
        let offset_th = sos2_code_layout(nt - 1, Some(zero)).1;
        out.push(Sos2Vars { line: l, lambda, alpha, beta, code_b, code_th, offset_b, offset_th });
    }
    Ok(out)
}

/// With `s = 1` exactly when every angle breakpoint in use is `>= 0`, the flow of an
/// interpolated point satisfies `blo Δθ <= P <= bhi Δθ`, and the reverse when `s = 0`.
/// These rows cut no point of the interpolation model.
fn add_sign_cone(
    model: &mut Model,
    l: usize,
    lv: &LineVars,
    s: VarId,
    (blo, bhi): (f64, f64),
    (tlo, thi): (f64, f64),
) -> Result<(), MethodError> {
    let big = (bhi - blo) * tlo.abs().max(thi.abs());
    let (p, th) = (lv.flow, lv.dtheta);
    model.add_constraint(format!("sos{l}.cone1"), [(p, 1.0), (th, -blo), (s, -big)], Sense::Ge, -big)?;
    model.add_constraint(format!("sos{l}.cone2"), [(p, 1.0), (th, -bhi), (s, big)], Sense::Le, big)?;
    model.add_constraint(format!("sos{l}.cone3"), [(p, 1.0), (th, -bhi), (s, big)], Sense::Ge, 0.0)?;
    model.add_constraint(format!("sos{l}.cone4"), [(p, 1.0), (th, -blo), (s, -big)], Sense::Le, 0.0)?;
    Ok(())
}

fn code_start(code: &[VarId], segment: usize, offset: usize) -> impl Iterator<Item = (VarId, f64)> + '_ {
    let gray = gray_code(segment + offset);
    code.iter().enumerate().map(move |(j, &z)| (z, (gray >> j & 1) as f64))
}

/// Code binaries of the point where every gridded line sits on the `b` node nearest its base
/// and `Δθ` comes from the fixed-susceptance dispatch at those nodes (nominal breakers). That
/// point is representable exactly, so it gives the search a feasible start.
fn grid_node_start(
    scenario: &Scenario,
    config: &MethodConfig,
    plan: &SusceptancePlan,
    grid: &Sos2Grid,
    sos: &[Sos2Vars],
) -> Vec<(VarId, f64)> {
    let mut nodes = plan.base.clone();
    let mut node_index = vec![0; plan.len()];
    for v in sos {
        let bs = &grid.b[v.line];
        let i = (0..bs.len())
            .min_by(|&a, &b| (bs[a] - plan.base[v.line]).abs().total_cmp(&(bs[b] - plan.base[v.line]).abs()))
            .unwrap_or(0);
        nodes[v.line] = bs[i];
        node_index[v.line] = i;
    }
    let Ok(mut fixed) = build_model(scenario, config, Some(&SusceptancePlan::fixed(nodes))) else {
        return Vec::new();
    };
    let nominal = fixed.vars.nominal_topology_start();
    for &(v, x) in &nominal {
        fixed.model.fix(v, x);
    }
    let result = fixed.model.solve();
    if !result.has_solution() {
        return Vec::new();
    }
    let mut out = Vec::new();
    for v in sos {
        let ths = &grid.dth[v.line];
        let x = result.value(fixed.vars.lines[v.line].dtheta);
        let j = ths.windows(2).position(|w| x <= w[1]).unwrap_or(ths.len() - 2);
        let i = node_index[v.line].min(grid.b[v.line].len() - 2);
        out.extend(code_start(&v.code_b, i, v.offset_b));
        out.extend(code_start(&v.code_th, j, v.offset_th));
    }
    out
}

pub fn solve_sos2(scenario: &Scenario, config: &MethodConfig, n_b: usize, n_th: usize) -> MethodReport {
    let mut report = MethodReport::for_scenario(scenario, "sos2");
    let plan = SusceptancePlan::from_scenario(scenario);
    let mut built = match build_model(scenario, config, Some(&plan)) {
        Ok(b) => b,
        Err(e) => return report.failed(e),
    };
    let applied = Sos2Grid::from_plan(&plan, &built.vars.dtheta_max, n_b, n_th)
        .and_then(|grid| apply_sos2(&mut built.model, &built.vars, &grid).map(|sos| (grid, sos)));
    let (grid, sos) = match applied {
        Ok(v) => v,
        Err(e) => return report.failed(e),
    };
    if config.warm_start {
        let mut start = built.model.warm_start().to_vec();
        start.extend(grid_node_start(scenario, config, &plan, &grid, &sos));
        built.model.set_warm_start(start);
    }
    dump_model(config, &built.model, &cell_tag(scenario, "sos2"));
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
