//! Scenario to optimisation model: operating cost, DC flow on a fixed or switchable
//! node-breaker topology, and VID susceptance ranges. The bilinear part of each line flow
//! is left as a placeholder `w_l = Δb_l Δθ_l` for the strategies in [`crate::methods`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{expand_node_breaker, NodeBreakerModel, Scenario, TopologyMode};
use crate::solver::{Model, ModelError, Sense, SolveResult, VarId};

#[derive(Debug, Error)]
pub enum FormulationError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("susceptance plan covers {plan} lines, network has {lines}")]
    PlanSize { plan: usize, lines: usize },
    #[error("topology assignment has {got} binaries, expected {expected}")]
    TopologySize { got: usize, expected: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum QuadraticMode {
    /// Pass the quadratic cost to the backend (piecewise-linear fallback only when needed).
    #[default]
    NativeQp,
    /// Always use the piecewise-linear under-approximation.
    Pwl,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormulationConfig {
    /// Largest angle difference between the busbars of a split substation (rad). Line angle
    /// differences are bounded by twice this value.
    pub theta_max: f64,
    /// Added to the flow bound of each line to form its big-M (pu).
    pub big_m_margin: f64,
    pub quadratic_mode: QuadraticMode,
    /// Serve every demand in full (no load-shedding variables).
    pub fixed_demand: bool,
    /// Pin the first element of each substation to busbar 1.
    pub symmetry_breaking: bool,
    /// On a fixed topology, bound `|Δθ_l|` by `limit_l / |b_l|min` as well as `2 theta_max`.
    pub limit_implied_angles: bool,
}

impl Default for FormulationConfig {
    fn default() -> Self {
        Self {
            theta_max: 0.6,
            big_m_margin: 1.0,
            quadratic_mode: QuadraticMode::NativeQp,
            fixed_demand: false,
            symmetry_breaking: true,
            limit_implied_angles: true,
        }
    }
}

impl FormulationConfig {
    pub fn dtheta_max(&self) -> f64 {
        2.0 * self.theta_max
    }

    /// `|b|max * 2 theta_max + margin`, which dominates `|b Δθ + w - P|` on an open line.
    pub fn big_m(&self, b_abs_max: f64) -> f64 {
        b_abs_max * self.dtheta_max() + self.big_m_margin
    }
}

/// Base susceptance of every line and the admissible deviation `Δb` around it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SusceptancePlan {
    pub base: Vec<f64>,
    pub db_lower: Vec<f64>,
    pub db_upper: Vec<f64>,
}

impl SusceptancePlan {
    /// Nominal susceptances with `|Δb| <= r |b̄|` on VID lines and `Δb = 0` elsewhere.
    pub fn from_scenario(scenario: &Scenario) -> Self {
        let base = scenario.susceptances();
        let span: Vec<f64> = base
            .iter()
            .enumerate()
            .map(|(l, b)| if scenario.vid_lines.contains(&l) { scenario.r * b.abs() } else { 0.0 })
            .collect();
        Self { db_lower: span.iter().map(|s| -s).collect(), db_upper: span, base }
    }

    /// Susceptances fixed at `base`.
    pub fn fixed(base: Vec<f64>) -> Self {
        let n = base.len();
        Self { base, db_lower: vec![0.0; n], db_upper: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }

    pub fn b_range(&self, l: usize) -> (f64, f64) {
        let a = self.base[l] + self.db_lower[l];
        let b = self.base[l] + self.db_upper[l];
        (a.min(b), a.max(b))
    }

    pub fn b_abs_max(&self, l: usize) -> f64 {
        let (lo, hi) = self.b_range(l);
        lo.abs().max(hi.abs())
    }

    pub fn is_variable(&self, l: usize) -> bool {
        self.db_lower[l] != self.db_upper[l]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineEndVars {
    /// Flow through busbar 1 and busbar 2 at this end.
    pub flow: [VarId; 2],
    pub angle: VarId,
    /// `h_{l,e}`: 1 when the end is attached to busbar 2.
    pub busbar: VarId,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineVars {
    pub flow: VarId,
    pub dtheta: VarId,
    /// Bilinear placeholder `Δb Δθ`.
    pub w: VarId,
    pub db: VarId,
    pub status: Option<VarId>,
    pub ends: Option<[LineEndVars; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopologyVars {
    pub hb: Vec<VarId>,
    pub hg: Vec<VarId>,
    pub hd: Vec<VarId>,
    pub hle: Vec<[VarId; 2]>,
    pub hl: Vec<VarId>,
}

impl TopologyVars {
    /// All breaker binaries in [`crate::network::BinaryIndex`] order.
    pub fn ordered(&self) -> Vec<VarId> {
        let mut out = Vec::with_capacity(self.hb.len() + self.hg.len() + self.hd.len() + 3 * self.hl.len());
        out.extend(&self.hb);
        out.extend(&self.hg);
        out.extend(&self.hd);
        for e in &self.hle {
            out.extend(e);
        }
        out.extend(&self.hl);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowVariables {
    pub lines: Vec<LineVars>,
    pub busbar_angle: Vec<[VarId; 2]>,
    pub gen_split: Vec<[VarId; 2]>,
    /// Net output per generator (aliases busbar 1 on a fixed topology).
    pub gen_total: Vec<VarId>,
    pub demand_split: Vec<[VarId; 2]>,
    pub injection: Vec<VarId>,
    pub topology: Option<TopologyVars>,
    pub base_susceptance: Vec<f64>,
    pub big_m: Vec<f64>,
    /// Symmetric bound on each line's `Δθ` variable.
    pub dtheta_max: Vec<f64>,
}

impl FlowVariables {
    /// Breaker positions of a solution, rounded, in binary-index order.
    pub fn topology_values(&self, result: &SolveResult) -> Option<Vec<bool>> {
        let topo = self.topology.as_ref()?;
        if !result.has_solution() {
            return None;
        }
        Some(topo.ordered().iter().map(|&v| result.value(v) > 0.5).collect())
    }

    /// Fix every breaker binary to `values` (binary-index order).
    pub fn fix_topology(&self, model: &mut Model, values: &[bool]) -> Result<(), FormulationError> {
        let Some(topo) = &self.topology else { return Ok(()) };
        let vars = topo.ordered();
        if vars.len() != values.len() {
            return Err(FormulationError::TopologySize { got: values.len(), expected: vars.len() });
        }
        for (v, &x) in vars.into_iter().zip(values) {
            model.fix(v, if x { 1.0 } else { 0.0 });
        }
        Ok(())
    }

    /// Breaker settings reproducing the fixed topology: couplers closed, everything on
    /// busbar 1, all lines in service.
    pub fn nominal_topology_start(&self) -> Vec<(VarId, f64)> {
        let Some(topo) = &self.topology else { return Vec::new() };
        let mut out = Vec::new();
        out.extend(topo.hb.iter().map(|&v| (v, 1.0)));
        out.extend(topo.hg.iter().chain(&topo.hd).map(|&v| (v, 0.0)));
        out.extend(topo.hle.iter().flatten().map(|&v| (v, 0.0)));
        out.extend(topo.hl.iter().map(|&v| (v, 1.0)));
        out
    }

    pub fn assignment(&self, values: &[bool]) -> Vec<(VarId, f64)> {
        match &self.topology {
            Some(topo) => topo.ordered().into_iter().zip(values).map(|(v, &x)| (v, if x { 1.0 } else { 0.0 })).collect(),
            None => Vec::new(),
        }
    }
}

/// A built model with the index maps of its variables.
#[derive(Debug, Clone)]
pub struct Formulation {
    pub model: Model,
    pub vars: FlowVariables,
    pub plan: SusceptancePlan,
    pub node_breaker: Option<NodeBreakerModel>,
}

/// Model for `scenario` with `plan` (defaults to the scenario's VID ranges). Bilinear
/// placeholders `w` are free on variable lines and fixed to zero elsewhere.
pub fn build(
    scenario: &Scenario,
    config: &FormulationConfig,
    plan: Option<&SusceptancePlan>,
) -> Result<Formulation, FormulationError> {
    let plan = plan.cloned().unwrap_or_else(|| SusceptancePlan::from_scenario(scenario));
    if plan.len() != scenario.net.branches.len() {
        return Err(FormulationError::PlanSize { plan: plan.len(), lines: scenario.net.branches.len() });
    }
    let mut model = Model::new(format!("{}-{}-r{}", scenario.net.name, scenario.topology_mode, scenario.r));
    if config.quadratic_mode == QuadraticMode::Pwl {
        model.controls.force_pwl = true;
    }
    let (vars, node_breaker) = match scenario.topology_mode {
        TopologyMode::Nominal => (add_fixed_topology_constraints(&mut model, scenario, config, &plan)?, None),
        TopologyMode::Nto => {
            let nb = expand_node_breaker(&scenario.net);
            (add_nto_constraints(&mut model, scenario, config, &plan, &nb)?, Some(nb))
        }
    };
    apply_susceptance_plan(&mut model, &vars, &plan);
    build_objective(&mut model, scenario, &vars)?;
    Ok(Formulation { model, vars, plan, node_breaker })
}

/// Generation cost `sum c2 P^2 + c1 P + c0` plus `VOLL * shed`, in $/h with `P` in MW.
pub fn build_objective(model: &mut Model, scenario: &Scenario, fv: &FlowVariables) -> Result<(), FormulationError> {
    let base = scenario.net.base_mva;
    for (gen, &p) in scenario.net.generators.iter().zip(&fv.gen_total) {
        model.add_quadratic_cost(p, gen.cost.c2 * base * base)?;
        model.add_linear_cost(p, gen.cost.c1 * base)?;
        model.add_constant_cost(gen.cost.c0);
    }
    for (demand, split) in scenario.demands().iter().zip(&fv.demand_split) {
        model.add_constant_cost(scenario.voll * demand.p_max_mw);
        for &d in split {
            model.add_linear_cost(d, -scenario.voll * base)?;
        }
    }
    Ok(())
}

/// Bound on `|Δθ_l|` per line. On a fixed topology any feasible point has `|b Δθ| <= limit`
/// with `|b|` at least `(1 - r) |b̄|`, so `limit / ((1 - r) |b̄|)` cuts nothing. The bound
/// depends on the scenario's range, never on the current plan's base.
pub fn dtheta_bounds(scenario: &Scenario, config: &FormulationConfig, plan: &SusceptancePlan) -> Vec<f64> {
    let cap = config.dtheta_max();
    if !config.limit_implied_angles || scenario.topology_mode != TopologyMode::Nominal {
        return vec![cap; plan.len()];
    }
    let nominal = scenario.susceptances();
    (0..plan.len())
        .map(|l| {
            let r = if scenario.vid_lines.contains(&l) { scenario.r } else { 0.0 };
            let (lo, hi) = plan.b_range(l);
            let plan_min = if lo <= 0.0 && hi >= 0.0 { 0.0 } else { lo.abs().min(hi.abs()) };
            let b_min = ((1.0 - r) * nominal[l].abs()).min(plan_min);
            let limit = scenario.line_limit_pu[l];
            if b_min > 0.0 && limit.is_finite() {
                cap.min(limit / b_min)
            } else {
                cap
            }
        })
        .collect()
}

fn line_flow_bound(scenario: &Scenario, plan: &SusceptancePlan, l: usize, dtheta_max: f64) -> f64 {
    scenario.line_limit_pu[l].min(plan.b_abs_max(l) * dtheta_max)
}

struct Common {
    gen_split: Vec<[VarId; 2]>,
    demand_split: Vec<[VarId; 2]>,
    injection: Vec<VarId>,
    busbar_angle: Vec<[VarId; 2]>,
}

fn declare_common(model: &mut Model, scenario: &Scenario) -> Common {
    let base = scenario.net.base_mva;
    let gen_split = scenario
        .net
        .generators
        .iter()
        .enumerate()
        .map(|(g, gen)| {
            [1, 2].map(|k| model.add_continuous(format!("Pg{g}.{k}"), 0.0, gen.p_max_mw.max(0.0) / base))
        })
        .collect();
    let demand_split = scenario
        .demands()
        .iter()
        .enumerate()
        .map(|(d, dem)| [1, 2].map(|k| model.add_continuous(format!("Pd{d}.{k}"), 0.0, dem.p_max_mw / base)))
        .collect();
    let injection = scenario
        .injections()
        .iter()
        .enumerate()
        .map(|(i, inj)| model.add_continuous(format!("Pinj{i}"), 0.0, inj.p_max_mw / base))
        .collect();
    let busbar_angle = (0..scenario.net.buses.len())
        .map(|b| [1, 2].map(|k| model.add_free(format!("theta{b}.{k}"))))
        .collect();
    Common { gen_split, demand_split, injection, busbar_angle }
}

/// DC flow `P_l = b̂_l Δθ_l + w_l` on the as-built topology with single-busbar nodal balance.
pub fn add_fixed_topology_constraints(
    model: &mut Model,
    scenario: &Scenario,
    config: &FormulationConfig,
    plan: &SusceptancePlan,
) -> Result<FlowVariables, FormulationError> {
    let net = &scenario.net;
    let index = net.bus_index();
    let common = declare_common(model, scenario);

    // Busbar-2 copies exist but stay empty.
    for split in common.gen_split.iter().chain(&common.demand_split) {
        model.fix(split[1], 0.0);
    }
    for angles in &common.busbar_angle {
        model.fix(angles[1], 0.0);
    }
    if config.fixed_demand {
        for (split, dem) in common.demand_split.iter().zip(scenario.demands()) {
            model.fix(split[0], dem.p_max_mw / net.base_mva);
        }
    }
    model.fix(common.busbar_angle[scenario.reference_bus()][0], 0.0);

    let mut lines = Vec::with_capacity(net.branches.len());
    let mut big_m = Vec::with_capacity(net.branches.len());
    let dtheta_max = dtheta_bounds(scenario, config, plan);
    for (l, br) in net.branches.iter().enumerate() {
        let dth = dtheta_max[l];
        let cap = line_flow_bound(scenario, plan, l, dth);
        let flow = model.add_continuous(format!("P{l}"), -cap, cap);
        let dtheta = model.add_continuous(format!("dtheta{l}"), -dth, dth);
        let w = model.add_free(format!("w{l}"));
        let db = model.add_continuous(format!("db{l}"), plan.db_lower[l], plan.db_upper[l]);
        let (f, t) = (index[&br.from_bus], index[&br.to_bus]);
        model.add_constraint(
            format!("angle{l}"),
            [(dtheta, 1.0), (common.busbar_angle[f][0], -1.0), (common.busbar_angle[t][0], 1.0)],
            Sense::Eq,
            0.0,
        )?;
        model.add_constraint(format!("dcflow{l}"), [(flow, 1.0), (dtheta, -plan.base[l]), (w, -1.0)], Sense::Eq, 0.0)?;
        lines.push(LineVars { flow, dtheta, w, db, status: None, ends: None });
        big_m.push(config.big_m(plan.b_abs_max(l)));
    }

    let mut rows: Vec<Vec<(VarId, f64)>> = vec![Vec::new(); net.buses.len()];
    for (gen, split) in net.generators.iter().zip(&common.gen_split) {
        rows[index[&gen.bus]].push((split[0], 1.0));
    }
    for (dem, split) in scenario.demands().iter().zip(&common.demand_split) {
        rows[dem.bus].push((split[0], -1.0));
    }
    for (inj, &v) in scenario.injections().iter().zip(&common.injection) {
        rows[inj.bus].push((v, 1.0));
    }
    for (br, lv) in net.branches.iter().zip(&lines) {
        rows[index[&br.from_bus]].push((lv.flow, -1.0));
        rows[index[&br.to_bus]].push((lv.flow, 1.0));
    }
    for (b, terms) in rows.into_iter().enumerate() {
        model.add_constraint(format!("balance{b}"), terms, Sense::Eq, 0.0)?;
    }

    Ok(FlowVariables {
        lines,
        gen_total: common.gen_split.iter().map(|s| s[0]).collect(),
        gen_split: common.gen_split,
        demand_split: common.demand_split,
        injection: common.injection,
        busbar_angle: common.busbar_angle,
        topology: None,
        base_susceptance: plan.base.clone(),
        big_m,
        dtheta_max,
    })
}

/// Two-busbar substations with coupler, element-assignment and line-switching binaries.
/// Per-busbar balance uses the split end flows; line-end angle selection uses the symmetric
/// big-M form on both busbars.
pub fn add_nto_constraints(
    model: &mut Model,
    scenario: &Scenario,
    config: &FormulationConfig,
    plan: &SusceptancePlan,
    nb: &NodeBreakerModel,
) -> Result<FlowVariables, FormulationError> {
    let net = &scenario.net;
    let base = net.base_mva;
    let index = net.bus_index();
    let theta_max = config.theta_max;
    let common = declare_common(model, scenario);

    let hb: Vec<VarId> = (0..net.buses.len()).map(|b| model.add_binary(format!("hb{b}"))).collect();
    let hg: Vec<VarId> = (0..net.generators.len()).map(|g| model.add_binary(format!("hg{g}"))).collect();
    let hd: Vec<VarId> = (0..nb.demands.len()).map(|d| model.add_binary(format!("hd{d}"))).collect();

    model.fix(common.busbar_angle[scenario.reference_bus()][0], 0.0);

    // busbar angle coupling
    for (b, angles) in common.busbar_angle.iter().enumerate() {
        let terms = [(angles[0], 1.0), (angles[1], -1.0), (hb[b], theta_max)];
        model.add_constraint(format!("coupler{b}.hi"), terms, Sense::Le, theta_max)?;
        let terms = [(angles[0], 1.0), (angles[1], -1.0), (hb[b], -theta_max)];
        model.add_constraint(format!("coupler{b}.lo"), terms, Sense::Ge, -theta_max)?;
    }

    // generator busbar assignment
    let mut gen_total = Vec::with_capacity(net.generators.len());
    for (g, gen) in net.generators.iter().enumerate() {
        let [p1, p2] = common.gen_split[g];
        let (pmin, pmax) = (gen.p_min_mw / base, gen.p_max_mw.max(0.0) / base);
        model.add_constraint(format!("gen{g}.b1max"), [(p1, 1.0), (hg[g], pmax)], Sense::Le, pmax)?;
        model.add_constraint(format!("gen{g}.b2max"), [(p2, 1.0), (hg[g], -pmax)], Sense::Le, 0.0)?;
        if pmin > 0.0 {
            model.add_constraint(format!("gen{g}.b1min"), [(p1, 1.0), (hg[g], pmin)], Sense::Ge, pmin)?;
            model.add_constraint(format!("gen{g}.b2min"), [(p2, 1.0), (hg[g], -pmin)], Sense::Ge, 0.0)?;
        }
        let total = model.add_continuous(format!("Pg{g}"), 0.0, pmax);
        model.add_constraint(format!("gen{g}.total"), [(total, 1.0), (p1, -1.0), (p2, -1.0)], Sense::Eq, 0.0)?;
        gen_total.push(total);
        let bus = index[&gen.bus];
        model.add_constraint(format!("gen{g}.merged"), [(hb[bus], 1.0), (hg[g], 1.0)], Sense::Le, 1.0)?;
    }

    // demand busbar assignment
    for (d, dem) in nb.demands.iter().enumerate() {
        let [d1, d2] = common.demand_split[d];
        let dmax = dem.p_max_mw / base;
        model.add_constraint(format!("dem{d}.b1max"), [(d1, 1.0), (hd[d], dmax)], Sense::Le, dmax)?;
        model.add_constraint(format!("dem{d}.b2max"), [(d2, 1.0), (hd[d], -dmax)], Sense::Le, 0.0)?;
        model.add_constraint(format!("dem{d}.merged"), [(hb[dem.bus], 1.0), (hd[d], 1.0)], Sense::Le, 1.0)?;
        if config.fixed_demand {
            model.add_constraint(format!("dem{d}.served"), [(d1, 1.0), (d2, 1.0)], Sense::Eq, dmax)?;
        }
    }

    // lines
    let mut lines = Vec::with_capacity(net.branches.len());
    let mut hle_all = Vec::with_capacity(net.branches.len());
    let mut hl_all = Vec::with_capacity(net.branches.len());
    let mut big_m = Vec::with_capacity(net.branches.len());
    let dtheta_max = dtheta_bounds(scenario, config, plan);
    for (l, br) in net.branches.iter().enumerate() {
        let dth = dtheta_max[l];
        let cap = line_flow_bound(scenario, plan, l, dth);
        let m_l = config.big_m(plan.b_abs_max(l));
        let flow = model.add_continuous(format!("P{l}"), -cap, cap);
        let dtheta = model.add_continuous(format!("dtheta{l}"), -dth, dth);
        let w = model.add_free(format!("w{l}"));
        let db = model.add_continuous(format!("db{l}"), plan.db_lower[l], plan.db_upper[l]);
        let hl = model.add_binary(format!("hl{l}"));
        let buses = [index[&br.from_bus], index[&br.to_bus]];
        let mut ends = Vec::with_capacity(2);
        for (e, &bus) in buses.iter().enumerate() {
            let tag = format!("{l}.{}", if e == 0 { "fr" } else { "to" });
            let f1 = model.add_continuous(format!("P{tag}.1"), -cap, cap);
            let f2 = model.add_continuous(format!("P{tag}.2"), -cap, cap);
            let angle = model.add_free(format!("theta{tag}"));
            let h = model.add_binary(format!("hle{tag}"));
            // busbar-1 share vanishes when attached to busbar 2
            model.add_constraint(format!("end{tag}.b1hi"), [(f1, 1.0), (h, cap)], Sense::Le, cap)?;
            model.add_constraint(format!("end{tag}.b1lo"), [(f1, -1.0), (h, cap)], Sense::Le, cap)?;
            model.add_constraint(format!("end{tag}.b2hi"), [(f2, 1.0), (h, -cap)], Sense::Le, 0.0)?;
            model.add_constraint(format!("end{tag}.b2lo"), [(f2, -1.0), (h, -cap)], Sense::Le, 0.0)?;
            // line status gating
            model.add_constraint(format!("end{tag}.onhi"), [(f1, 1.0), (hl, -cap)], Sense::Le, 0.0)?;
            model.add_constraint(format!("end{tag}.onlo"), [(f1, -1.0), (hl, -cap)], Sense::Le, 0.0)?;
            model.add_constraint(format!("end{tag}.status"), [(h, 1.0), (hl, -1.0)], Sense::Le, 0.0)?;
            model.add_constraint(format!("end{tag}.sum"), [(flow, 1.0), (f1, -1.0), (f2, -1.0)], Sense::Eq, 0.0)?;
            // end angle equals busbar 1 when h = 0
            let b1 = common.busbar_angle[bus][0];
            let b2 = common.busbar_angle[bus][1];
            model.add_constraint(format!("end{tag}.th1hi"), [(angle, 1.0), (b1, -1.0), (h, -theta_max)], Sense::Le, 0.0)?;
            model.add_constraint(format!("end{tag}.th1lo"), [(angle, 1.0), (b1, -1.0), (h, theta_max)], Sense::Ge, 0.0)?;
            // and busbar 2 when h = 1
            model.add_constraint(
                format!("end{tag}.th2hi"),
                [(angle, 1.0), (b2, -1.0), (h, theta_max)],
                Sense::Le,
                theta_max,
            )?;
            model.add_constraint(
                format!("end{tag}.th2lo"),
                [(angle, 1.0), (b2, -1.0), (h, -theta_max)],
                Sense::Ge,
                -theta_max,
            )?;
            // couplers closed: everything on busbar 1
            model.add_constraint(format!("end{tag}.merged"), [(hb[bus], 1.0), (h, 1.0)], Sense::Le, 1.0)?;
            ends.push(LineEndVars { flow: [f1, f2], angle, busbar: h });
        }
        let ends = [ends[0], ends[1]];
        model.add_constraint(
            format!("angle{l}"),
            [(dtheta, 1.0), (ends[0].angle, -1.0), (ends[1].angle, 1.0)],
            Sense::Eq,
            0.0,
        )?;
        // big-M flow relation with b = b̂ + Δb, bilinear part in w
        let terms = [(dtheta, plan.base[l]), (w, 1.0), (flow, -1.0), (hl, m_l)];
        model.add_constraint(format!("dcflow{l}.hi"), terms, Sense::Le, m_l)?;
        let terms = [(dtheta, plan.base[l]), (w, 1.0), (flow, -1.0), (hl, -m_l)];
        model.add_constraint(format!("dcflow{l}.lo"), terms, Sense::Ge, -m_l)?;

        hle_all.push([ends[0].busbar, ends[1].busbar]);
        hl_all.push(hl);
        big_m.push(m_l);
        lines.push(LineVars { flow, dtheta, w, db, status: Some(hl), ends: Some(ends) });
    }

    // per-busbar balance with split end flows
    let mut rows: Vec<[Vec<(VarId, f64)>; 2]> = vec![[Vec::new(), Vec::new()]; net.buses.len()];
    for (gen, split) in net.generators.iter().zip(&common.gen_split) {
        let b = index[&gen.bus];
        rows[b][0].push((split[0], 1.0));
        rows[b][1].push((split[1], 1.0));
    }
    for (dem, split) in nb.demands.iter().zip(&common.demand_split) {
        rows[dem.bus][0].push((split[0], -1.0));
        rows[dem.bus][1].push((split[1], -1.0));
    }
    for (inj, &v) in nb.injections.iter().zip(&common.injection) {
        rows[inj.bus][0].push((v, 1.0));
    }
    for (br, lv) in net.branches.iter().zip(&lines) {
        let ends = lv.ends.expect("nto lines have ends");
        let (f, t) = (index[&br.from_bus], index[&br.to_bus]);
        for k in 0..2 {
            rows[f][k].push((ends[0].flow[k], -1.0));
            rows[t][k].push((ends[1].flow[k], 1.0));
        }
    }
    for (b, [r1, r2]) in rows.into_iter().enumerate() {
        model.add_constraint(format!("balance{b}.1"), r1, Sense::Eq, 0.0)?;
        model.add_constraint(format!("balance{b}.2"), r2, Sense::Eq, 0.0)?;
    }

    if config.symmetry_breaking {
        for sub in &nb.substations {
            if let Some(&g) = sub.generators.first() {
                model.fix(hg[g], 0.0);
            } else if let Some(&d) = sub.demands.first() {
                model.fix(hd[d], 0.0);
            } else if let Some(&(l, end)) = sub.line_ends.first() {
                model.fix(hle_all[l][end as usize], 0.0);
            }
        }
    }
    Ok(FlowVariables {
        lines,
        busbar_angle: common.busbar_angle,
        gen_split: common.gen_split,
        gen_total,
        demand_split: common.demand_split,
        injection: common.injection,
        topology: Some(TopologyVars { hb, hg, hd, hle: hle_all, hl: hl_all }),
        base_susceptance: plan.base.clone(),
        big_m,
        dtheta_max,
    })
}

/// Set `Δb` bounds from `plan`; lines without a deviation range get `Δb = w = 0`.
pub fn apply_susceptance_plan(model: &mut Model, fv: &FlowVariables, plan: &SusceptancePlan) {
    for (l, lv) in fv.lines.iter().enumerate() {
        model.set_bounds(lv.db, plan.db_lower[l], plan.db_upper[l]);
        if !plan.is_variable(l) {
            model.fix(lv.db, plan.db_lower[l]);
            model.fix(lv.w, 0.0);
        }
    }
}

/// VID bounds `-r b̄ <= Δb <= r b̄` on the scenario's VID lines.
pub fn add_vid_bounds(model: &mut Model, fv: &FlowVariables, scenario: &Scenario) {
    apply_susceptance_plan(model, fv, &SusceptancePlan::from_scenario(scenario));
}
