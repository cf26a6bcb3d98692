//! Strategies for the bilinear term `w_l = Δb_l Δθ_l`, selected by name at runtime.

mod mccormick;
mod oracle;
mod sos2;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formulation::{self, Formulation, FormulationConfig, FormulationError, SusceptancePlan};
use crate::network::{Scenario, TopologyMode};
use crate::solver::{write_lp, Controls, Model, ModelError, SolveResult, SolveStatus};

pub use self::mccormick::{
    add_mccormick_envelope, apply_mccormick, iteration_count, solve_iterative_mccormick, solve_mccormick, McCormickBounds,
};
pub use self::oracle::{brute_force_oracle, MAX_ORACLE_LINES, MAX_ORACLE_STEPS};
pub use self::sos2::{apply_sos2, solve_sos2, Sos2Grid, Sos2Vars};

#[derive(Debug, Error)]
pub enum MethodError {
    #[error(transparent)]
    Formulation(#[from] FormulationError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("line {line}: {what} bounds [{lo}, {hi}] do not match the model's [{model_lo}, {model_hi}]")]
    Bounds { line: usize, what: &'static str, lo: f64, hi: f64, model_lo: f64, model_hi: f64 },
    #[error("line {line}: {message}")]
    Grid { line: usize, message: String },
    #[error(
        "oracle budget exceeded: {lines} VID lines x {steps} steps (limits {MAX_ORACLE_LINES} lines, \
         {MAX_ORACLE_STEPS} steps); restrict --vid-lines"
    )]
    OracleBudget { lines: usize, steps: usize },
    #[error("the oracle needs a fixed topology")]
    OracleTopology,
    #[error("iterative step dr = {dr} must be positive and at most r = {r}")]
    Step { dr: f64, r: f64 },
}

/// Cost against which `error_pct` is measured, with a label saying where it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub cost: f64,
    pub label: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodConfig {
    pub formulation: FormulationConfig,
    pub controls: Controls,
    /// Step of the iterative McCormick schedule.
    pub dr: f64,
    /// SOS2 breakpoints along `b` and `Δθ`.
    pub grid: (usize, usize),
    pub oracle_steps: usize,
    pub reference: Option<Reference>,
    /// Seed MIP solves with the as-built topology (and the previous iterate when iterating).
    pub warm_start: bool,
    /// Worker threads for the oracle enumeration.
    pub jobs: usize,
    /// Write each solved model as an LP file into this directory.
    pub dump_dir: Option<PathBuf>,
}

impl Default for MethodConfig {
    fn default() -> Self {
        Self {
            formulation: FormulationConfig::default(),
            controls: Controls::default(),
            dr: 0.05,
            grid: (11, 11),
            oracle_steps: 9,
            reference: None,
            warm_start: true,
            jobs: 1,
            dump_dir: None,
        }
    }
}

/// One (method, r) cell of a benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub case: String,
    pub topology: TopologyMode,
    pub method: String,
    pub r: f64,
    /// Objective of the method's own model, evaluated exactly at the returned point.
    pub objective: f64,
    /// Cost re-solved with the returned susceptances (and topology) fixed.
    pub validated_cost: f64,
    pub error_pct: f64,
    pub reference: Option<Reference>,
    pub mip_gap: f64,
    /// Solver time summed over all solves of the method, excluding validation.
    pub wall_time_s: f64,
    pub validation_time_s: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    /// The quadratic cost was replaced by its piecewise-linear under-approximation.
    pub pwl_objective: bool,
    /// Returned `Δb` per line, relative to the nominal susceptance.
    pub db_star: Vec<f64>,
    pub topology_star: Option<Vec<bool>>,
    pub message: Option<String>,
}

impl MethodReport {
    pub fn empty(case: impl Into<String>, topology: TopologyMode, method: impl Into<String>, r: f64) -> Self {
        Self {
            case: case.into(),
            topology,
            method: method.into(),
            r,
            objective: f64::NAN,
            validated_cost: f64::NAN,
            error_pct: f64::NAN,
            reference: None,
            mip_gap: f64::NAN,
            wall_time_s: 0.0,
            validation_time_s: 0.0,
            status: SolveStatus::Error,
            iterations: 0,
            pwl_objective: false,
            db_star: Vec::new(),
            topology_star: None,
            message: None,
        }
    }

    fn for_scenario(scenario: &Scenario, method: &str) -> Self {
        Self::empty(scenario.net.name.clone(), scenario.topology_mode, method, scenario.r)
    }

    fn failed(mut self, err: impl ToString) -> Self {
        self.status = SolveStatus::Error;
        self.message = Some(err.to_string());
        self
    }

    /// Set the reference and recompute `error_pct = 100 (validated - ref) / ref`.
    pub fn set_reference(&mut self, reference: Option<Reference>) {
        self.error_pct = match &reference {
            Some(r) if self.validated_cost.is_finite() && r.cost.is_finite() && r.cost != 0.0 => {
                100.0 * (self.validated_cost - r.cost) / r.cost
            }
            _ => f64::NAN,
        };
        self.reference = reference;
    }

    /// Relative error of the method's own objective against the reference.
    pub fn objective_error_pct(&self) -> f64 {
        match &self.reference {
            Some(r) if r.cost != 0.0 => 100.0 * (self.objective - r.cost) / r.cost,
            _ => f64::NAN,
        }
    }

    pub fn succeeded(&self) -> bool {
        self.status.is_success()
    }
}

/// A strategy for the bilinear flow term.
pub trait BilinearMethod: Send + Sync {
    fn name(&self) -> &'static str;
    fn description(&self) -> &'static str;
    fn solve(&self, scenario: &Scenario, config: &MethodConfig) -> MethodReport;
}

#[derive(Clone, Default)]
pub struct MethodRegistry {
    methods: BTreeMap<String, Arc<dyn BilinearMethod>>,
}

impl MethodRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn builtin() -> Self {
        let mut reg = Self::new();
        reg.register(Arc::new(Fixed));
        reg.register(Arc::new(McCormick));
        reg.register(Arc::new(IterativeMcCormick));
        reg.register(Arc::new(Sos2));
        reg.register(Arc::new(Oracle));
        reg
    }

    /// Add or replace a method under its own name.
    pub fn register(&mut self, method: Arc<dyn BilinearMethod>) {
        self.methods.insert(method.name().to_string(), method);
    }

    pub fn get(&self, name: &str) -> Option<Arc<dyn BilinearMethod>> {
        self.methods.get(name).cloned()
    }

    pub fn names(&self) -> Vec<&str> {
        self.methods.keys().map(String::as_str).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<dyn BilinearMethod>> {
        self.methods.values()
    }
}

impl std::fmt::Debug for MethodRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.methods.keys()).finish()
    }
}

struct Fixed;
struct McCormick;
struct IterativeMcCormick;
struct Sos2;
struct Oracle;

impl BilinearMethod for Fixed {
    fn name(&self) -> &'static str {
        "fixed"
    }
    fn description(&self) -> &'static str {
        "nominal susceptances, no VID flexibility"
    }
    fn solve(&self, scenario: &Scenario, config: &MethodConfig) -> MethodReport {
        solve_fixed(scenario, config)
    }
}

impl BilinearMethod for McCormick {
    fn name(&self) -> &'static str {
        "mccormick"
    }
    fn description(&self) -> &'static str {
        "McCormick envelopes over the full ±r box"
    }
    fn solve(&self, scenario: &Scenario, config: &MethodConfig) -> MethodReport {
        solve_mccormick(scenario, config)
    }
}

impl BilinearMethod for IterativeMcCormick {
    fn name(&self) -> &'static str {
        "iter_mccormick"
    }
    fn description(&self) -> &'static str {
        "McCormick envelopes re-centred every dr step"
    }
    fn solve(&self, scenario: &Scenario, config: &MethodConfig) -> MethodReport {
        solve_iterative_mccormick(scenario, scenario.r, config.dr, config)
    }
}

impl BilinearMethod for Sos2 {
    fn name(&self) -> &'static str {
        "sos2"
    }
    fn description(&self) -> &'static str {
        "piecewise-linear bilinear surface on an SOS2 grid"
    }
    fn solve(&self, scenario: &Scenario, config: &MethodConfig) -> MethodReport {
        solve_sos2(scenario, config, config.grid.0, config.grid.1)
    }
}

impl BilinearMethod for Oracle {
    fn name(&self) -> &'static str {
        "oracle"
    }
    fn description(&self) -> &'static str {
        "exhaustive Δb grid search with one LP/QP per point"
    }
    fn solve(&self, scenario: &Scenario, config: &MethodConfig) -> MethodReport {
        match brute_force_oracle(scenario, config.oracle_steps, config) {
            Ok(report) => report,
            Err(e) => MethodReport::for_scenario(scenario, "oracle").failed(e),
        }
    }
}

fn dump_model(config: &MethodConfig, model: &Model, tag: &str) {
    let Some(dir) = &config.dump_dir else { return };
    let name: String =
        tag.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' }).collect();
    let path = dir.join(format!("{name}.lp"));
    let written = File::create(&path).and_then(|f| write_lp(model, BufWriter::new(f)));
    if let Err(e) = written {
        log::warn!("could not write {}: {e}", path.display());
    }
}

fn cell_tag(scenario: &Scenario, method: &str) -> String {
    format!("{}_{}_{}_r{}", scenario.net.name, scenario.topology_mode, method, scenario.r)
}

/// Build the scenario's model with `plan` and the method's controls applied.
fn build_model(
    scenario: &Scenario,
    config: &MethodConfig,
    plan: Option<&SusceptancePlan>,
) -> Result<Formulation, MethodError> {
    let mut built = formulation::build(scenario, &config.formulation, plan)?;
    let force_pwl = built.model.controls.force_pwl;
    built.model.controls = Controls { force_pwl: force_pwl || config.controls.force_pwl, ..config.controls };
    if config.warm_start && built.vars.topology.is_some() {
        built.model.set_warm_start(built.vars.nominal_topology_start());
    }
    Ok(built)
}

fn record_solve(report: &mut MethodReport, result: &SolveResult) {
    report.status = result.status;
    report.objective = result.objective;
    report.mip_gap = result.mip_gap;
    report.wall_time_s += result.wall_time_s;
    report.pwl_objective |= result.surrogate_objective.is_some();
    if result.message.is_some() {
        report.message = result.message.clone();
    }
}

/// Cost of the scenario with `b = b̄ + db_star` fixed (and the breaker positions, when given),
/// or `+inf` when that point admits no feasible dispatch.
pub fn validate_fixed_susceptance(
    scenario: &Scenario,
    config: &MethodConfig,
    db_star: &[f64],
    topology_star: Option<&[bool]>,
) -> Result<f64, MethodError> {
    let base = scenario.susceptances();
    if db_star.len() != base.len() {
        return Err(FormulationError::PlanSize { plan: db_star.len(), lines: base.len() }.into());
    }
    let plan = SusceptancePlan::fixed(base.iter().zip(db_star).map(|(b, d)| b + d).collect());
    let mut built = build_model(scenario, config, Some(&plan))?;
    if let Some(values) = topology_star {
        built.vars.fix_topology(&mut built.model, values)?;
    }
    let result = built.model.solve();
    if result.has_solution() && result.status.is_success() {
        Ok(result.objective)
    } else {
        log::warn!(
            "{}: validation at fixed susceptances ended {}{}",
            scenario.net.name,
            result.status,
            result.message.map(|m| format!(" ({m})")).unwrap_or_default()
        );
        Ok(f64::INFINITY)
    }
}

/// Fill `validated_cost` / `error_pct` from the report's `db_star` and `topology_star`.
fn validate_report(scenario: &Scenario, config: &MethodConfig, report: &mut MethodReport) {
    if report.db_star.is_empty() {
        return;
    }
    let start = Instant::now();
    match validate_fixed_susceptance(scenario, config, &report.db_star, report.topology_star.as_deref()) {
        Ok(cost) => report.validated_cost = cost,
        Err(e) => report.message = Some(format!("validation failed: {e}")),
    }
    report.validation_time_s = start.elapsed().as_secs_f64();
    report.set_reference(config.reference.clone());
}

/// Nominal susceptances with the scenario's topology mode.
pub fn solve_fixed(scenario: &Scenario, config: &MethodConfig) -> MethodReport {
    let mut report = MethodReport::for_scenario(scenario, "fixed");
    let plan = SusceptancePlan::fixed(scenario.susceptances());
    let built = match build_model(scenario, config, Some(&plan)) {
        Ok(b) => b,
        Err(e) => return report.failed(e),
    };
    dump_model(config, &built.model, &cell_tag(scenario, "fixed"));
    let result = built.model.solve();
    record_solve(&mut report, &result);
    report.iterations = 1;
    if result.has_solution() {
        report.db_star = vec![0.0; plan.len()];
        report.topology_star = built.vars.topology_values(&result);
        validate_report(scenario, config, &mut report);
    }
    report
}
