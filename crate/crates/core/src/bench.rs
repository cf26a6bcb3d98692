//! Method x r sweeps over one case and their text summary.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::Mutex;

use thiserror::Error;

use crate::formulation::FormulationConfig;
use crate::io::{apply_setup_normalization, load_case, CaseError, ReportFormat};
use crate::methods::{MethodConfig, MethodRegistry, MethodReport, Reference};
use crate::network::{CongestionBase, NetworkError, TopologyMode, DEFAULT_CONGESTION, DEFAULT_VOLL};
use crate::solver::{Controls, SolveStatus};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("unknown method '{name}' (available: {available})")]
    UnknownMethod { name: String, available: String },
    #[error("invalid run specification: {0}")]
    Spec(String),
}

/// Which lines carry a VID.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum VidSelection {
    #[default]
    All,
    /// Branch indices (0-based, in case-file order after dropping out-of-service rows).
    Lines(Vec<usize>),
    /// The `k` lines with the largest nominal `|flow|`.
    MostLoaded(usize),
}

#[derive(Debug, Clone)]
pub struct RunSpec {
    pub case_path: PathBuf,
    pub methods: Vec<String>,
    pub r_values: Vec<f64>,
    pub dr: f64,
    pub topology_mode: TopologyMode,
    pub congestion_factor: f64,
    pub voll: f64,
    pub gap: f64,
    pub time_limit_s: f64,
    pub grid: (usize, usize),
    pub seed: u64,
    pub vid_lines: VidSelection,
    pub oracle_steps: usize,
    /// Cells solved concurrently.
    pub jobs: usize,
    /// Threads per solver instance.
    pub threads: usize,
    pub out_path: Option<PathBuf>,
    pub out_format: ReportFormat,
    pub dump_dir: Option<PathBuf>,
}

impl RunSpec {
    pub fn new(case_path: impl Into<PathBuf>) -> Self {
        let controls = Controls::default();
        Self {
            case_path: case_path.into(),
            methods: vec!["mccormick".into(), "iter_mccormick".into(), "sos2".into()],
            r_values: vec![0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.5],
            dr: 0.05,
            topology_mode: TopologyMode::Nominal,
            congestion_factor: DEFAULT_CONGESTION,
            voll: DEFAULT_VOLL,
            gap: controls.rel_gap,
            time_limit_s: controls.time_limit_s,
            grid: (11, 11),
            seed: 0,
            vid_lines: VidSelection::All,
            oracle_steps: 9,
            jobs: 1,
            threads: 1,
            out_path: None,
            out_format: ReportFormat::Csv,
            dump_dir: None,
        }
    }

    pub fn validate(&self, registry: &MethodRegistry) -> Result<(), BenchError> {
        if self.methods.is_empty() {
            return Err(BenchError::Spec("no methods requested".into()));
        }
        for name in &self.methods {
            if registry.get(name).is_none() {
                return Err(BenchError::UnknownMethod { name: name.clone(), available: registry.names().join(", ") });
            }
        }
        if self.r_values.is_empty() {
            return Err(BenchError::Spec("no r values requested".into()));
        }
        if let Some(r) = self.r_values.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(BenchError::Spec(format!("r = {r} outside [0, 1]")));
        }
        if self.methods.iter().any(|m| m == "iter_mccormick") && !(self.dr > 0.0) {
            return Err(BenchError::Spec(format!("dr = {} must be positive for iter_mccormick", self.dr)));
        }
        if !(self.congestion_factor > 0.0) {
            return Err(BenchError::Spec(format!("congestion factor {} must be positive", self.congestion_factor)));
        }
        if !(self.gap >= 0.0) || !(self.time_limit_s > 0.0) {
            return Err(BenchError::Spec("gap must be >= 0 and the time limit positive".into()));
        }
        if self.grid.0 < 2 || self.grid.1 < 2 {
            return Err(BenchError::Spec(format!("grid {}x{} needs at least 2 points per axis", self.grid.0, self.grid.1)));
        }
        Ok(())
    }

    pub fn method_config(&self) -> MethodConfig {
        MethodConfig {
            formulation: FormulationConfig::default(),
            controls: Controls {
                rel_gap: self.gap,
                time_limit_s: self.time_limit_s,
                threads: self.threads,
                seed: self.seed,
                ..Controls::default()
            },
            dr: self.dr,
            grid: self.grid,
            oracle_steps: self.oracle_steps,
            reference: None,
            warm_start: true,
            jobs: 1,
            dump_dir: self.dump_dir.clone(),
        }
    }
}

/// Indices of the `k` lines with the largest nominal `|flow|` (ties by index), ascending.
pub fn most_loaded_lines(base: &CongestionBase, k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..base.nominal.flows_pu.len()).collect();
    order.sort_by(|&a, &b| {
        base.nominal.flows_pu[b].abs().total_cmp(&base.nominal.flows_pu[a].abs()).then(a.cmp(&b))
    });
    order.truncate(k);
    order.sort_unstable();
    order
}

/// Load, normalise and solve the nominal case once, then sweep.
pub fn run(spec: &RunSpec, registry: &MethodRegistry) -> Result<Vec<MethodReport>, BenchError> {
    spec.validate(registry)?;
    let net = apply_setup_normalization(&load_case(&spec.case_path)?);
    let base = CongestionBase::new(net)?;
    run_on_base(spec, &base, registry)
}

/// Sweep methods (outer) and r values (inner) on an already solved nominal case.
pub fn run_on_base(
    spec: &RunSpec,
    base: &CongestionBase,
    registry: &MethodRegistry,
) -> Result<Vec<MethodReport>, BenchError> {
    spec.validate(registry)?;
    let template = base.scenario(spec.congestion_factor, spec.voll, 0.0, spec.topology_mode)?;
    let template = match &spec.vid_lines {
        VidSelection::All => template,
        VidSelection::Lines(lines) => template.with_vid_lines(lines.iter().copied())?,
        VidSelection::MostLoaded(k) => template.with_vid_lines(most_loaded_lines(base, *k))?,
    };
    let cells: Vec<(String, f64)> =
        spec.methods.iter().flat_map(|m| spec.r_values.iter().map(move |&r| (m.clone(), r))).collect();
    let config = spec.method_config();

    let slots: Vec<Mutex<Option<MethodReport>>> = cells.iter().map(|_| Mutex::new(None)).collect();
    let jobs = spec.jobs.max(1).min(cells.len());
    std::thread::scope(|scope| {
        for worker in 0..jobs {
            let (cells, slots, template, config) = (&cells, &slots, &template, &config);
            scope.spawn(move || {
                for k in (worker..cells.len()).step_by(jobs) {
                    let (name, r) = &cells[k];
                    let method = registry.get(name).expect("validated");
                    let report = match template.with_r(*r) {
                        Ok(scenario) => {
                            log::info!("{} {} r={} ...", scenario.net.name, name, r);
                            method.solve(&scenario, config)
                        }
                        Err(e) => {
                            let mut rep = MethodReport::empty(&template.net.name, template.topology_mode, name, *r);
                            rep.message = Some(e.to_string());
                            rep
                        }
                    };
                    log::info!(
                        "{} {} r={}: {} objective={} validated={} ({:.2}s)",
                        report.case,
                        report.method,
                        report.r,
                        report.status,
                        report.objective,
                        report.validated_cost,
                        report.wall_time_s
                    );
                    *slots[k].lock().unwrap() = Some(report);
                }
            });
        }
    });
    let mut reports: Vec<MethodReport> = slots.into_iter().map(|s| s.into_inner().unwrap().expect("filled")).collect();
    assign_references(&mut reports);
    Ok(reports)
}

/// Reference per r: the oracle's cost when it ran, otherwise the best validated cost.
pub fn assign_references(reports: &mut [MethodReport]) {
    let mut by_r: Vec<(f64, Option<Reference>)> = Vec::new();
    for rep in reports.iter() {
        if by_r.iter().any(|(r, _)| *r == rep.r) {
            continue;
        }
        let same_r = || reports.iter().filter(|x| x.r == rep.r && x.succeeded() && x.validated_cost.is_finite());
        let reference = same_r()
            .find(|x| x.method == "oracle")
            .map(|x| Reference { cost: x.validated_cost, label: "oracle".into() })
            .or_else(|| {
                same_r()
                    .min_by(|a, b| a.validated_cost.total_cmp(&b.validated_cost))
                    .map(|x| Reference { cost: x.validated_cost, label: format!("best_validated:{}", x.method) })
            });
        by_r.push((rep.r, reference));
    }
    for rep in reports.iter_mut() {
        let reference = by_r.iter().find(|(r, _)| *r == rep.r).and_then(|(_, x)| x.clone());
        rep.set_reference(reference);
    }
}

/// Aligned table of `r, method, objective, error_pct, time_s`, sorted by r then method.
pub fn summarize(reports: &[MethodReport]) -> String {
    let mut rows: Vec<&MethodReport> = reports.iter().collect();
    rows.sort_by(|a, b| a.r.total_cmp(&b.r).then_with(|| a.method.cmp(&b.method)));
    let mut out = String::new();
    let _ = writeln!(out, "{:>6}  {:<16}  {:>18}  {:>10}  {:>10}", "r", "method", "objective", "error_pct", "time_s");
    for rep in rows {
        let objective = if rep.succeeded() { format!("{:.2}", rep.objective) } else { rep.status.as_str().to_string() };
        let error = if rep.error_pct.is_finite() { format!("{:.3}", rep.error_pct) } else { "-".into() };
        let _ = writeln!(
            out,
            "{:>6}  {:<16}  {:>18}  {:>10}  {:>10.2}",
            format!("{:.2}", rep.r),
            rep.method,
            objective,
            error,
            rep.wall_time_s
        );
    }
    out
}

/// 0 when every cell succeeded, 2 when any hit the time limit, 3 for other failures.
pub fn exit_code(reports: &[MethodReport]) -> i32 {
    if reports.iter().all(MethodReport::succeeded) {
        0
    } else if reports.iter().any(|r| r.status == SolveStatus::TimeLimit) {
        2
    } else {
        3
    }
}
