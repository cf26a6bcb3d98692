//! DC susceptances, the derated congestion scenario and the two-busbar node-breaker expansion.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formulation::{self, FormulationConfig};
use crate::io::{Branch, PowerNetwork};
use crate::solver::SolveStatus;

/// Capacity kept on lines whose nominal flow is (near) zero, in per unit.
pub const FLOOR_PU: f64 = 1e-3;
pub const DEFAULT_VOLL: f64 = 2000.0;
pub const DEFAULT_CONGESTION: f64 = 0.8;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("branch {branch} has reactance {reactance}; the DC model needs a nonzero finite value")]
    Reactance { branch: usize, reactance: f64 },
    #[error("flexibility factor r = {0} outside [0, 1]")]
    Flexibility(f64),
    #[error("line limit of branch {branch} is {limit} pu; limits must be positive")]
    Limit { branch: usize, limit: f64 },
    #[error("VID line index {0} out of range")]
    VidLine(usize),
    #[error("nominal DC-OPF failed: {status}{}", .message.as_deref().map(|m| format!(" ({m})")).unwrap_or_default())]
    Nominal { status: SolveStatus, message: Option<String> },
    #[error(transparent)]
    Formulation(#[from] formulation::FormulationError),
}

/// Per-unit susceptance `1 / x` of a branch. Series-compensated branches (negative
/// reactance) yield a negative susceptance.
pub fn dc_susceptance(branch: &Branch) -> Result<f64, NetworkError> {
    dc_susceptance_at(branch, 0)
}

fn dc_susceptance_at(branch: &Branch, index: usize) -> Result<f64, NetworkError> {
    let x = branch.reactance_pu;
    if x == 0.0 || !x.is_finite() {
        return Err(NetworkError::Reactance { branch: index + 1, reactance: x });
    }
    Ok(1.0 / x)
}

pub fn susceptances(net: &PowerNetwork) -> Result<Vec<f64>, NetworkError> {
    net.branches.iter().enumerate().map(|(l, b)| dc_susceptance_at(b, l)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum TopologyMode {
    Nominal,
    Nto,
}

impl TopologyMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TopologyMode::Nominal => "nominal",
            TopologyMode::Nto => "nto",
        }
    }
}

impl fmt::Display for TopologyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TopologyMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nominal" | "fixed" => Ok(TopologyMode::Nominal),
            "nto" => Ok(TopologyMode::Nto),
            other => Err(format!("unknown topology mode `{other}` (expected nominal or nto)")),
        }
    }
}

/// How line limits were derived from the nominal flows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Derating {
    pub factor: f64,
    pub floor_pu: f64,
    /// Limits use `|flow|` rather than the signed flow.
    pub absolute_flow: bool,
}

/// A sheddable demand, one per bus with positive `PD`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Demand {
    pub bus: usize,
    pub p_max_mw: f64,
}

/// Zero-cost curtailable injection from a negative `PD` entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    pub bus: usize,
    pub p_max_mw: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub net: PowerNetwork,
    /// Per-branch limit in per unit (`+inf` when unlimited).
    pub line_limit_pu: Vec<f64>,
    pub voll: f64,
    pub r: f64,
    pub topology_mode: TopologyMode,
    /// Branch indices carrying a variable-impedance device.
    pub vid_lines: BTreeSet<usize>,
    pub derating: Option<Derating>,
}

impl Scenario {
    /// Scenario on the original thermal ratings (unrated lines unlimited), VIDs on every line.
    pub fn from_ratings(net: PowerNetwork, voll: f64, r: f64, topology_mode: TopologyMode) -> Result<Self, NetworkError> {
        let limits = net.branches.iter().map(|b| b.limit_pu(net.base_mva)).collect();
        Self::new(net, limits, voll, r, topology_mode)
    }

    pub fn new(
        net: PowerNetwork,
        line_limit_pu: Vec<f64>,
        voll: f64,
        r: f64,
        topology_mode: TopologyMode,
    ) -> Result<Self, NetworkError> {
        if !(0.0..=1.0).contains(&r) {
            return Err(NetworkError::Flexibility(r));
        }
        susceptances(&net)?;
        for (l, &lim) in line_limit_pu.iter().enumerate() {
            if !(lim > 0.0) {
                return Err(NetworkError::Limit { branch: l + 1, limit: lim });
            }
        }
        let vid_lines = (0..net.branches.len()).collect();
        Ok(Self { net, line_limit_pu, voll, r, topology_mode, vid_lines, derating: None })
    }

    pub fn with_r(&self, r: f64) -> Result<Self, NetworkError> {
        if !(0.0..=1.0).contains(&r) {
            return Err(NetworkError::Flexibility(r));
        }
        Ok(Self { r, ..self.clone() })
    }

    pub fn with_topology(&self, mode: TopologyMode) -> Self {
        Self { topology_mode: mode, ..self.clone() }
    }

    pub fn with_vid_lines(&self, lines: impl IntoIterator<Item = usize>) -> Result<Self, NetworkError> {
        let set: BTreeSet<usize> = lines.into_iter().collect();
        if let Some(&bad) = set.iter().find(|&&l| l >= self.net.branches.len()) {
            return Err(NetworkError::VidLine(bad));
        }
        Ok(Self { vid_lines: set, ..self.clone() })
    }

    pub fn susceptances(&self) -> Vec<f64> {
        susceptances(&self.net).expect("validated at construction")
    }

    pub fn demands(&self) -> Vec<Demand> {
        self.net
            .buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.demand_mw > 0.0)
            .map(|(i, b)| Demand { bus: i, p_max_mw: b.demand_mw })
            .collect()
    }

    pub fn injections(&self) -> Vec<Injection> {
        self.net
            .buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.injection_mw > 0.0)
            .map(|(i, b)| Injection { bus: i, p_max_mw: b.injection_mw })
            .collect()
    }

    /// First bus hosting a generator; its (busbar-1) angle is pinned to zero.
    pub fn reference_bus(&self) -> usize {
        let index = self.net.bus_index();
        self.net.generators.first().map(|g| index[&g.bus]).unwrap_or(0)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NominalDcopf {
    pub flows_pu: Vec<f64>,
    pub objective: f64,
    pub dispatch_mw: Vec<f64>,
}

/// Fixed-topology DC-OPF on the original ratings with all demand served and no VIDs.
pub fn nominal_dcopf(net: &PowerNetwork) -> Result<NominalDcopf, NetworkError> {
    let scenario = Scenario::from_ratings(net.clone(), DEFAULT_VOLL, 0.0, TopologyMode::Nominal)?;
    let config = FormulationConfig { fixed_demand: true, ..FormulationConfig::default() };
    let built = formulation::build(&scenario, &config, None)?;
    let result = built.model.solve();
    if !result.status.is_success() || !result.has_solution() {
        return Err(NetworkError::Nominal { status: result.status, message: result.message });
    }
    let flows_pu = built.vars.lines.iter().map(|l| result.value(l.flow)).collect();
    let dispatch_mw = built.vars.gen_total.iter().map(|&g| result.value(g) * net.base_mva).collect();
    Ok(NominalDcopf { flows_pu, objective: result.objective, dispatch_mw })
}

/// `max(factor * |flow|, floor)` per line.
pub fn derate_limits(flows_pu: &[f64], factor: f64) -> Vec<f64> {
    flows_pu.iter().map(|f| (factor * f.abs()).max(FLOOR_PU)).collect()
}

/// Normalised network plus its nominal DC-OPF, from which congestion scenarios are derived
/// without re-solving the nominal case.
#[derive(Debug, Clone)]
pub struct CongestionBase {
    pub net: PowerNetwork,
    pub nominal: NominalDcopf,
}

impl CongestionBase {
    pub fn new(net: PowerNetwork) -> Result<Self, NetworkError> {
        let nominal = nominal_dcopf(&net)?;
        Ok(Self { net, nominal })
    }

    pub fn scenario(&self, factor: f64, voll: f64, r: f64, mode: TopologyMode) -> Result<Scenario, NetworkError> {
        let limits = derate_limits(&self.nominal.flows_pu, factor);
        let mut s = Scenario::new(self.net.clone(), limits, voll, r, mode)?;
        s.derating = Some(Derating { factor, floor_pu: FLOOR_PU, absolute_flow: true });
        Ok(s)
    }
}

/// Derate every line to `factor` of its nominal-OPF flow.
pub fn make_congestion_scenario(
    net: &PowerNetwork,
    factor: f64,
    voll: f64,
    r: f64,
    topology_mode: TopologyMode,
) -> Result<Scenario, NetworkError> {
    CongestionBase::new(net.clone())?.scenario(factor, voll, r, topology_mode)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LineEnd {
    From = 0,
    To = 1,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Substation {
    pub bus: usize,
    pub generators: Vec<usize>,
    pub demands: Vec<usize>,
    pub injections: Vec<usize>,
    pub line_ends: Vec<(usize, LineEnd)>,
}

impl Substation {
    pub fn is_empty(&self) -> bool {
        self.generators.is_empty() && self.demands.is_empty() && self.line_ends.is_empty()
    }
}

/// Positions of each breaker binary inside one contiguous block:
/// `h_b` per bus, `h_g` per generator, `h_d` per demand, `h_{l,e}` per line end, `h_l` per line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryIndex {
    pub buses: usize,
    pub generators: usize,
    pub demands: usize,
    pub lines: usize,
}

impl BinaryIndex {
    pub fn hb(&self, bus: usize) -> usize {
        bus
    }
    pub fn hg(&self, gen: usize) -> usize {
        self.buses + gen
    }
    pub fn hd(&self, demand: usize) -> usize {
        self.buses + self.generators + demand
    }
    pub fn hle(&self, line: usize, end: LineEnd) -> usize {
        self.buses + self.generators + self.demands + 2 * line + end as usize
    }
    pub fn hl(&self, line: usize) -> usize {
        self.buses + self.generators + self.demands + 2 * self.lines + line
    }
    pub fn len(&self) -> usize {
        self.buses + self.generators + self.demands + 3 * self.lines
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Every bus split into two busbars joined by a coupler, with each attached element
/// switchable between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeBreakerModel {
    pub substations: Vec<Substation>,
    pub demands: Vec<Demand>,
    pub injections: Vec<Injection>,
    pub index: BinaryIndex,
}

impl NodeBreakerModel {
    pub fn num_hb(&self) -> usize {
        self.index.buses
    }
    pub fn num_hg(&self) -> usize {
        self.index.generators
    }
    pub fn num_hd(&self) -> usize {
        self.index.demands
    }
    pub fn num_hle(&self) -> usize {
        2 * self.index.lines
    }
    pub fn num_hl(&self) -> usize {
        self.index.lines
    }
}

pub fn expand_node_breaker(net: &PowerNetwork) -> NodeBreakerModel {
    let index = net.bus_index();
    let mut substations: Vec<Substation> = (0..net.buses.len())
        .map(|bus| Substation { bus, generators: vec![], demands: vec![], injections: vec![], line_ends: vec![] })
        .collect();
    for (g, gen) in net.generators.iter().enumerate() {
        substations[index[&gen.bus]].generators.push(g);
    }
    let mut demands = Vec::new();
    let mut injections = Vec::new();
    for (i, bus) in net.buses.iter().enumerate() {
        if bus.demand_mw > 0.0 {
            substations[i].demands.push(demands.len());
            demands.push(Demand { bus: i, p_max_mw: bus.demand_mw });
        }
        if bus.injection_mw > 0.0 {
            substations[i].injections.push(injections.len());
            injections.push(Injection { bus: i, p_max_mw: bus.injection_mw });
        }
    }
    for (l, br) in net.branches.iter().enumerate() {
        substations[index[&br.from_bus]].line_ends.push((l, LineEnd::From));
        substations[index[&br.to_bus]].line_ends.push((l, LineEnd::To));
    }
    let index = BinaryIndex {
        buses: net.buses.len(),
        generators: net.generators.len(),
        demands: demands.len(),
        lines: net.branches.len(),
    };
    NodeBreakerModel { substations, demands, injections, index }
}
