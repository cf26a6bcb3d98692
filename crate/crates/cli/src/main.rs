use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Parser;
use vidopt::bench::{self, RunSpec, VidSelection};
use vidopt::io::{render_report, write_report, ReportFormat};
use vidopt::{MethodRegistry, TopologyMode};

/// Sweep bilinear VID strategies over flexibility levels on a MATPOWER case.
#[derive(Debug, Parser)]
#[command(name = "vidopt", version)]
struct Args {
    /// MATPOWER case file.
    #[arg(long, required_unless_present = "list_methods")]
    case: Option<PathBuf>,

    /// Method to run (repeatable). See --list-methods.
    #[arg(long = "method", value_name = "NAME")]
    methods: Vec<String>,

    /// Flexibility factor: a value, or a range `start:stop:step` (repeatable).
    #[arg(long = "r", value_name = "R", allow_hyphen_values = false)]
    r: Vec<String>,

    /// Step of the iterative McCormick schedule.
    #[arg(long, default_value_t = 0.05)]
    dr: f64,

    #[arg(long, default_value = "nominal", value_parser = parse_topology)]
    topology: TopologyMode,

    /// Line limits as a fraction of the nominal OPF flows.
    #[arg(long, default_value_t = 0.8)]
    congestion: f64,

    /// Value of lost load ($/MWh).
    #[arg(long, default_value_t = 2000.0)]
    voll: f64,

    /// Relative MIP gap.
    #[arg(long, default_value_t = 1e-3)]
    gap: f64,

    /// Solver time limit per solve (s).
    #[arg(long = "time-limit", default_value_t = 1200.0)]
    time_limit: f64,

    /// SOS2 breakpoints, `NbxNt`.
    #[arg(long, default_value = "11x11", value_parser = parse_grid)]
    grid: (usize, usize),

    /// VID lines: `all`, `top:K` (K most loaded nominal lines) or comma-separated branch
    /// indices (0-based, in-service order).
    #[arg(long = "vid-lines", default_value = "all", value_parser = parse_vid_lines)]
    vid_lines: VidSelection,

    /// Grid points per line for the oracle.
    #[arg(long = "oracle-steps", default_value_t = 9)]
    oracle_steps: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Cells solved in parallel.
    #[arg(long, default_value_t = 1)]
    jobs: usize,

    /// Threads per solver instance.
    #[arg(long, default_value_t = 1)]
    threads: usize,

    /// Report destination; without it the report goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,

    #[arg(long, default_value = "csv", value_parser = parse_format)]
    format: ReportFormat,

    /// Write every solved model as an LP file into this directory.
    #[arg(long = "dump-models", value_name = "DIR")]
    dump_models: Option<PathBuf>,

    #[arg(long = "list-methods")]
    list_methods: bool,
}

fn parse_topology(s: &str) -> Result<TopologyMode, String> {
    s.parse()
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse()
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(|| format!("grid '{s}' is not of the form NbxNt"))?;
    let n = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("grid '{s}': {e}"));
    Ok((n(a)?, n(b)?))
}

fn parse_vid_lines(s: &str) -> Result<VidSelection, String> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("all") {
        return Ok(VidSelection::All);
    }
    if let Some(k) = s.strip_prefix("top:") {
        return k.parse().map(VidSelection::MostLoaded).map_err(|e| format!("vid-lines '{s}': {e}"));
    }
    s.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|e| format!("vid-lines '{s}': {e}")))
        .collect::<Result<Vec<_>, _>>()
        .map(VidSelection::Lines)
}

/// Expand `a:b:step` (inclusive of `b` up to rounding) or a single value.
fn parse_r(s: &str) -> Result<Vec<f64>> {
    let num = |v: &str| v.trim().parse::<f64>().with_context(|| format!("bad r value '{v}'"));
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [v] => Ok(vec![num(v)?]),
        [a, b, step] => {
            let (a, b, step) = (num(a)?, num(b)?, num(step)?);
            if !(step > 0.0) || b < a {
                bail!("range '{s}' needs start <= stop and a positive step");
            }
            let n = ((b - a) / step + 1e-9).floor() as usize;
            // Round to suppress accumulation noise such as 0.15000000000000002.
            Ok((0..=n).map(|k| ((a + k as f64 * step) * 1e12).round() / 1e12).collect())
        }
        _ => bail!("r '{s}' is neither a value nor start:stop:step"),
    }
}

fn build_spec(args: &Args, registry: &MethodRegistry) -> Result<RunSpec> {
    let case = args.case.clone().context("--case is required")?;
    if !case.is_file() {
        bail!("case file {} does not exist", case.display());
    }
    let mut spec = RunSpec::new(case);
    if !args.methods.is_empty() {
        spec.methods = args.methods.clone();
    }
    if !args.r.is_empty() {
        spec.r_values = args.r.iter().map(|s| parse_r(s)).collect::<Result<Vec<_>>>()?.concat();
    }
    spec.dr = args.dr;
    spec.topology_mode = args.topology;
    spec.congestion_factor = args.congestion;
    spec.voll = args.voll;
    spec.gap = args.gap;
    spec.time_limit_s = args.time_limit;
    spec.grid = args.grid;
    spec.seed = args.seed;
    spec.vid_lines = args.vid_lines.clone();
    spec.oracle_steps = args.oracle_steps;
    spec.jobs = args.jobs;
    spec.threads = args.threads;
    spec.out_path = args.out.clone();
    spec.out_format = args.format;
    spec.dump_dir = args.dump_models.clone();
    if let Some(dir) = &spec.dump_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    spec.validate(registry)?;
    Ok(spec)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // Exit code 2 is reserved for time limits, so usage errors map to 1.
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let registry = MethodRegistry::builtin();

    if args.list_methods {
        for m in registry.iter() {
            println!("{:<16} {}", m.name(), m.description());
        }
        return ExitCode::SUCCESS;
    }

    let spec = match build_spec(&args, &registry) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    let reports = match bench::run(&spec, &registry) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };

    let written = match &spec.out_path {
        Some(path) => {
            print!("{}", bench::summarize(&reports));
            write_report(&reports, spec.out_format, path).map_err(anyhow::Error::from)
        }
        None => {
            eprint!("{}", bench::summarize(&reports));
            render_report(&reports, spec.out_format, std::io::stdout().lock()).map_err(anyhow::Error::from)
        }
    };
    if let Err(e) = written {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    ExitCode::from(bench::exit_code(&reports) as u8)
}
