mod common;

use vidopt::bench::{self, RunSpec, VidSelection};
use vidopt::io::{render_report, ReportFormat, REPORT_COLUMNS};
use vidopt::methods::solve_fixed;
use vidopt::network::CongestionBase;
use vidopt::{MethodConfig, MethodRegistry, TopologyMode};

use common::{case_path, load};

fn spec() -> RunSpec {
    let mut spec = RunSpec::new(case_path("case9.m"));
    spec.methods = vec!["fixed".into(), "mccormick".into(), "iter_mccormick".into(), "sos2".into(), "oracle".into()];
    spec.r_values = vec![0.0, 0.2];
    spec.vid_lines = VidSelection::MostLoaded(2);
    spec.oracle_steps = 5;
    spec
}

/// CSV with the `time_s` column blanked.
fn csv_without_times(spec: &RunSpec) -> String {
    let reports = bench::run(spec, &MethodRegistry::builtin()).unwrap();
    let mut buf = Vec::new();
    render_report(&reports, ReportFormat::Csv, &mut buf).unwrap();
    let time_col = REPORT_COLUMNS.iter().position(|c| *c == "time_s").unwrap();
    String::from_utf8(buf)
        .unwrap()
        .lines()
        .map(|line| {
            let mut cells: Vec<&str> = line.split(',').collect();
            cells[time_col] = "";
            cells.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn sweep_is_reproducible() {
    let spec = spec();
    let a = csv_without_times(&spec);
    assert_eq!(a, csv_without_times(&spec));
    assert_eq!(a.lines().count(), 1 + 5 * 2);
}

#[test]
fn sweep_order_and_references() {
    let spec = spec();
    let reports = bench::run(&spec, &MethodRegistry::builtin()).unwrap();
    let cells: Vec<(String, f64)> = reports.iter().map(|r| (r.method.clone(), r.r)).collect();
    let expected: Vec<(String, f64)> =
        spec.methods.iter().flat_map(|m| spec.r_values.iter().map(move |&r| (m.clone(), r))).collect();
    assert_eq!(cells, expected);
    for rep in &reports {
        assert!(rep.succeeded(), "{} r={}: {:?}", rep.method, rep.r, rep.message);
        let oracle = reports.iter().find(|x| x.method == "oracle" && x.r == rep.r).unwrap();
        let expect = 100.0 * (rep.validated_cost - oracle.validated_cost) / oracle.validated_cost;
        assert!((rep.error_pct - expect).abs() < 1e-9);
    }
    assert_eq!(bench::exit_code(&reports), 0);
}

#[test]
fn baseline_cell_matches_congested_fixed_cost() {
    let mut spec = RunSpec::new(case_path("case14.m"));
    spec.methods = vec!["fixed".into()];
    spec.r_values = vec![0.0];
    let reports = bench::run(&spec, &MethodRegistry::builtin()).unwrap();
    assert_eq!(reports.len(), 1);
    let base = CongestionBase::new(load("case14.m")).unwrap();
    let s = base.scenario(0.8, 2000.0, 0.0, TopologyMode::Nominal).unwrap();
    let direct = solve_fixed(&s, &MethodConfig::default());
    assert!((reports[0].objective - direct.objective).abs() <= 1e-9 * direct.objective);
}

#[test]
fn missing_case_fails_before_solving() {
    let spec = RunSpec::new(case_path("no_such_case.m"));
    assert!(bench::run(&spec, &MethodRegistry::builtin()).is_err());
}

#[test]
fn summary_rows_sorted_by_method() {
    let mut spec = spec();
    spec.methods = vec!["sos2".into(), "fixed".into(), "mccormick".into()];
    spec.r_values = vec![0.1];
    let reports = bench::run(&spec, &MethodRegistry::builtin()).unwrap();
    let table = bench::summarize(&reports);
    let methods: Vec<&str> = table.lines().skip(1).map(|l| l.split_whitespace().nth(1).unwrap()).collect();
    assert_eq!(methods, ["fixed", "mccormick", "sos2"]);
    assert_eq!(bench::summarize(&[]).lines().count(), 1);
}
