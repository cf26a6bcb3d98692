//! MATPOWER case files (MATLAB matrix syntax) and the grid data they carry.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Quadratic generator cost `c2 * P^2 + c1 * P + c0` with `P` in MW and the result in $/h.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostPoly {
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

impl CostPoly {
    pub fn eval(&self, p_mw: f64) -> f64 {
        (self.c2 * p_mw + self.c1) * p_mw + self.c0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: u32,
    /// Sheddable demand (MW). Always non-negative.
    pub demand_mw: f64,
    /// Negative `PD` entries are kept as a zero-cost, curtailable injection (MW).
    pub injection_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: u32,
    pub p_min_mw: f64,
    pub p_max_mw: f64,
    pub in_service: bool,
    pub cost: CostPoly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from_bus: u32,
    pub to_bus: u32,
    pub reactance_pu: f64,
    /// `RATE_A` in MW; zero means unlimited.
    pub rate_mw: f64,
    pub in_service: bool,
}

impl Branch {
    /// Thermal limit in per unit, `+inf` for unrated branches.
    pub fn limit_pu(&self, base_mva: f64) -> f64 {
        if self.rate_mw > 0.0 {
            self.rate_mw / base_mva
        } else {
            f64::INFINITY
        }
    }
}

/// The static grid as read from a case file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerNetwork {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub generators: Vec<Generator>,
    pub branches: Vec<Branch>,
}

impl PowerNetwork {
    /// Map from external bus id to position in `buses`.
    pub fn bus_index(&self) -> HashMap<u32, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    pub fn total_demand_mw(&self) -> f64 {
        self.buses.iter().map(|b| b.demand_mw).sum()
    }

    /// JSON dump used for auditing; `from_debug_dump` restores the identical structure.
    pub fn to_debug_dump(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serialises")
    }

    pub fn from_debug_dump(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Re-check the structural invariants (bus references, nonzero reactance, connectivity).
    pub fn validate(&self) -> Result<(), CaseError> {
        let index = self.bus_index();
        if index.len() != self.buses.len() {
            return Err(CaseError::Invalid("duplicate bus ids".into()));
        }
        for (g, gen) in self.generators.iter().enumerate() {
            if !index.contains_key(&gen.bus) {
                return Err(CaseError::UnknownBus { element: format!("generator {}", g + 1), bus: gen.bus });
            }
            if gen.cost.c2 < 0.0 {
                return Err(CaseError::Invalid(format!("generator {} has a concave cost (c2 < 0)", g + 1)));
            }
        }
        for (l, br) in self.branches.iter().enumerate() {
            for bus in [br.from_bus, br.to_bus] {
                if !index.contains_key(&bus) {
                    return Err(CaseError::UnknownBus { element: format!("branch {}", l + 1), bus });
                }
            }
            if br.in_service && !(br.reactance_pu != 0.0 && br.reactance_pu.is_finite()) {
                return Err(CaseError::ZeroReactance { branch: l + 1 });
            }
        }

        let mut uf = UnionFind::<usize>::new(self.buses.len());
        for br in self.branches.iter().filter(|b| b.in_service) {
            uf.union(index[&br.from_bus], index[&br.to_bus]);
        }
        let mut active = vec![false; self.buses.len()];
        for (i, b) in self.buses.iter().enumerate() {
            active[i] = b.demand_mw != 0.0 || b.injection_mw != 0.0;
        }
        for gen in self.generators.iter().filter(|g| g.in_service && g.p_max_mw > 0.0) {
            active[index[&gen.bus]] = true;
        }
        let mut root = None;
        for (i, _) in active.iter().enumerate().filter(|(_, a)| **a) {
            let r = uf.find(i);
            match root {
                None => root = Some(r),
                Some(r0) if r0 != r => {
                    return Err(CaseError::Islanded { bus: self.buses[i].id });
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("case is missing mpc.{0}")]
    MissingMatrix(&'static str),
    #[error("mpc.{matrix} row at line {line} has {found} columns, expected at least {expected}")]
    Shape { matrix: &'static str, line: usize, expected: usize, found: usize },
    #[error("gencost row {row}: piecewise-linear cost (model 1) is not supported, only polynomial model 2")]
    PiecewiseCost { row: usize },
    #[error("gencost row {row}: {message}")]
    Cost { row: usize, message: String },
    #[error("{element} references unknown bus {bus}")]
    UnknownBus { element: String, bus: u32 },
    #[error("branch {branch} has zero or non-finite reactance")]
    ZeroReactance { branch: usize },
    #[error("bus {bus} is islanded from the rest of the energised network")]
    Islanded { bus: u32 },
    #[error("invalid case: {0}")]
    Invalid(String),
    #[error("failed to read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug)]
enum Value {
    Scalar(f64),
    /// Rows paired with the source line each row started on.
    Matrix(Vec<(usize, Vec<f64>)>),
    Other,
}

fn strip_comment(line: &str) -> &str {
    let mut in_str = false;
    for (i, c) in line.char_indices() {
        match c {
            '\'' => in_str = !in_str,
            '%' if !in_str => return &line[..i],
            _ => {}
        }
    }
    line
}

fn parse_number(tok: &str, line: usize) -> Result<f64, CaseError> {
    tok.parse::<f64>().map_err(|_| CaseError::Syntax { line, message: format!("invalid number `{tok}`") })
}

/// Parses the matrix body that starts after `[` on `start_line`.
fn parse_matrix<'a>(
    first: &str,
    start_line: usize,
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
) -> Result<Vec<(usize, Vec<f64>)>, CaseError> {
    let mut rows = Vec::new();
    let mut current: Vec<f64> = Vec::new();
    let mut current_line = start_line;
    let mut chunk = first.to_string();
    let mut line_no = start_line;
    loop {
        let (body, closed) = match chunk.find(']') {
            Some(pos) => (chunk[..pos].to_string(), true),
            None => (chunk.clone(), false),
        };
        for (k, segment) in body.split(';').enumerate() {
            if k > 0 && !current.is_empty() {
                rows.push((current_line, std::mem::take(&mut current)));
            }
            for tok in segment.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
                if current.is_empty() {
                    current_line = line_no;
                }
                current.push(parse_number(tok, line_no)?);
            }
        }
        // A newline also terminates a row.
        if !current.is_empty() {
            rows.push((current_line, std::mem::take(&mut current)));
        }
        if closed {
            return Ok(rows);
        }
        match lines.next() {
            Some((n, text)) => {
                line_no = n;
                chunk = strip_comment(text).to_string();
            }
            None => {
                return Err(CaseError::Syntax { line: start_line, message: "unterminated matrix".into() });
            }
        }
    }
}

fn skip_until<'a>(
    close: char,
    first: &str,
    start_line: usize,
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
) -> Result<(), CaseError> {
    if first.contains(close) {
        return Ok(());
    }
    for (_, text) in lines.by_ref() {
        if strip_comment(text).contains(close) {
            return Ok(());
        }
    }
    Err(CaseError::Syntax { line: start_line, message: format!("missing closing `{close}`") })
}

fn parse_fields(text: &str) -> Result<BTreeMap<String, (usize, Value)>, CaseError> {
    let mut fields = BTreeMap::new();
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    while let Some((line, raw)) = lines.next() {
        let stmt = strip_comment(raw).trim();
        if stmt.is_empty() || stmt.starts_with("function") || stmt == "end" {
            continue;
        }
        let Some(rest) = stmt.strip_prefix("mpc.") else {
            return Err(CaseError::Syntax { line, message: format!("expected `mpc.<field> = ...`, found `{stmt}`") });
        };
        let Some((name, rhs)) = rest.split_once('=') else {
            return Err(CaseError::Syntax { line, message: "missing `=`".into() });
        };
        let name = name.trim();
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(CaseError::Syntax { line, message: format!("invalid field name `{name}`") });
        }
        let rhs = rhs.trim();
        let value = if let Some(body) = rhs.strip_prefix('[') {
            Value::Matrix(parse_matrix(body, line, &mut lines)?)
        } else if let Some(body) = rhs.strip_prefix('{') {
            skip_until('}', body, line, &mut lines)?;
            Value::Other
        } else if rhs.starts_with('\'') {
            Value::Other
        } else {
            let tok = rhs.trim_end_matches(';').trim();
            Value::Scalar(parse_number(tok, line)?)
        };
        fields.insert(name.to_string(), (line, value));
    }
    Ok(fields)
}

fn matrix<'a>(
    fields: &'a BTreeMap<String, (usize, Value)>,
    name: &'static str,
    min_cols: usize,
) -> Result<&'a [(usize, Vec<f64>)], CaseError> {
    match fields.get(name) {
        Some((_, Value::Matrix(rows))) => {
            for (line, row) in rows {
                if row.len() < min_cols {
                    return Err(CaseError::Shape { matrix: name, line: *line, expected: min_cols, found: row.len() });
                }
            }
            Ok(rows)
        }
        Some((line, _)) => Err(CaseError::Syntax { line: *line, message: format!("mpc.{name} must be a matrix") }),
        None => Err(CaseError::MissingMatrix(name)),
    }
}

fn bus_id(v: f64, line: usize) -> Result<u32, CaseError> {
    if v.fract() != 0.0 || v < 0.0 || v > u32::MAX as f64 {
        return Err(CaseError::Syntax { line, message: format!("bus id {v} is not a non-negative integer") });
    }
    Ok(v as u32)
}

/// Parse a MATPOWER case and return it together with the warnings about ignored data.
pub fn parse_case_with_warnings(text: &str) -> Result<(PowerNetwork, Vec<String>), CaseError> {
    let fields = parse_fields(text)?;
    let mut warnings = Vec::new();

    let base_mva = match fields.get("baseMVA") {
        Some((_, Value::Scalar(v))) if *v > 0.0 => *v,
        Some((line, _)) => {
            return Err(CaseError::Syntax { line: *line, message: "mpc.baseMVA must be a positive scalar".into() })
        }
        None => return Err(CaseError::MissingMatrix("baseMVA")),
    };

    let bus_rows = matrix(&fields, "bus", 13)?;
    let gen_rows = matrix(&fields, "gen", 10)?;
    let branch_rows = matrix(&fields, "branch", 11)?;
    let cost_rows = matrix(&fields, "gencost", 4)?;

    let mut buses = Vec::with_capacity(bus_rows.len());
    let mut shunts = 0;
    let mut negative_loads = 0;
    for (line, row) in bus_rows {
        let pd = row[2];
        if row[4] != 0.0 {
            shunts += 1;
        }
        if pd < 0.0 {
            negative_loads += 1;
        }
        buses.push(Bus { id: bus_id(row[0], *line)?, demand_mw: pd.max(0.0), injection_mw: (-pd).max(0.0) });
    }
    if shunts > 0 {
        warnings.push(format!("{shunts} bus shunt(s) ignored by the DC model"));
    }
    if negative_loads > 0 {
        warnings.push(format!("{negative_loads} negative load(s) treated as curtailable injections"));
    }

    if cost_rows.len() < gen_rows.len() {
        return Err(CaseError::Invalid(format!(
            "mpc.gencost has {} rows for {} generators",
            cost_rows.len(),
            gen_rows.len()
        )));
    }
    let mut generators = Vec::with_capacity(gen_rows.len());
    for (k, ((line, row), (_, cost))) in gen_rows.iter().zip(cost_rows).enumerate() {
        generators.push(Generator {
            bus: bus_id(row[0], *line)?,
            p_max_mw: row[8],
            p_min_mw: row[9],
            in_service: row[7] > 0.0,
            cost: parse_cost_row(cost, k + 1)?,
        });
    }
    if cost_rows.len() > gen_rows.len() {
        warnings.push("reactive power cost rows ignored".into());
    }

    let mut branches = Vec::with_capacity(branch_rows.len());
    let mut taps = 0;
    for (line, row) in branch_rows {
        if (row[8] != 0.0 && row[8] != 1.0) || row[9] != 0.0 {
            taps += 1;
        }
        branches.push(Branch {
            from_bus: bus_id(row[0], *line)?,
            to_bus: bus_id(row[1], *line)?,
            reactance_pu: row[3],
            rate_mw: row[5].max(0.0),
            in_service: row[10] > 0.0,
        });
    }
    if taps > 0 {
        warnings.push(format!("tap ratio / phase shift ignored on {taps} branch(es)"));
    }

    let name = text
        .lines()
        .find_map(|l| strip_comment(l).trim().strip_prefix("function").map(|s| s.to_string()))
        .and_then(|s| s.split('=').nth(1).map(|n| n.trim().to_string()))
        .unwrap_or_else(|| "case".to_string());

    let net = PowerNetwork { name, base_mva, buses, generators, branches };
    net.validate()?;
    Ok((net, warnings))
}

/// Parse a MATPOWER case; warnings about ignored columns are emitted through `log`.
pub fn parse_case(text: &str) -> Result<PowerNetwork, CaseError> {
    let (net, warnings) = parse_case_with_warnings(text)?;
    for w in warnings {
        log::warn!("{}: {w}", net.name);
    }
    Ok(net)
}

pub fn load_case(path: impl AsRef<Path>) -> Result<PowerNetwork, CaseError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| CaseError::Io { path: path.display().to_string(), source })?;
    let mut net = parse_case(&text)?;
    if net.name == "case" {
        if let Some(stem) = path.file_stem() {
            net.name = stem.to_string_lossy().into_owned();
        }
    }
    Ok(net)
}

/// Map one `mpc.gencost` row (`model startup shutdown n c(n-1) ... c0`) to a cost polynomial.
pub fn parse_cost_row(row: &[f64], row_no: usize) -> Result<CostPoly, CaseError> {
    match row[0] as i64 {
        2 => {}
        1 => return Err(CaseError::PiecewiseCost { row: row_no }),
        m => return Err(CaseError::Cost { row: row_no, message: format!("unknown cost model {m}") }),
    }
    let n = row[3];
    if n.fract() != 0.0 || !(0.0..=3.0).contains(&n) {
        return Err(CaseError::Cost { row: row_no, message: format!("polynomial degree {} unsupported (max 2)", n - 1.0) });
    }
    let n = n as usize;
    if row.len() < 4 + n {
        return Err(CaseError::Cost { row: row_no, message: format!("expected {n} coefficients") });
    }
    // Coefficients are stored highest degree first; pad the missing high-order terms.
    let mut c = [0.0; 3];
    for (k, v) in row[4..4 + n].iter().enumerate() {
        c[3 - n + k] = *v;
    }
    Ok(CostPoly { c2: c[0], c1: c[1], c0: c[2] })
}

/// Experiment setup: zero generator minimum output and drop out-of-service elements.
pub fn apply_setup_normalization(net: &PowerNetwork) -> PowerNetwork {
    let mut out = net.clone();
    out.generators.retain(|g| g.in_service);
    for g in &mut out.generators {
        g.p_min_mw = 0.0;
    }
    out.branches.retain(|b| b.in_service);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const TWO_BUS: &str = "function mpc = two_bus
mpc.version = '2';
mpc.baseMVA = 100;
%% bus data
mpc.bus = [
	1	3	0	0	0	0	1	1	0	230	1	1.1	0.9;
	2	1	50	0	0	0	1	1	0	230	1	1.1	0.9;
];
mpc.gen = [
	1	0	0	100	-100	1	100	1	200	50	0	0	0	0	0	0	0	0	0	0	0;
];
mpc.branch = [
	1	2	0.01	0.1	0	80	0	0	0	0	1	-360	360;
];
mpc.gencost = [
	2	0	0	3	0.1	5	0;
];
";

    #[test]
    fn minimal_case_counts() {
        let net = parse_case(TWO_BUS).unwrap();
        assert_eq!(net.name, "two_bus");
        assert_eq!((net.buses.len(), net.branches.len(), net.generators.len()), (2, 1, 1));
        assert_eq!(net.buses[1].demand_mw, 50.0);
        assert_eq!(net.branches[0].reactance_pu, 0.1);
        assert_eq!(net.branches[0].rate_mw, 80.0);
        assert_eq!(net.generators[0].p_min_mw, 50.0);
        assert_eq!(net.generators[0].cost, CostPoly { c2: 0.1, c1: 5.0, c0: 0.0 });
    }

    #[test]
    fn cost_rows_are_zero_padded() {
        assert_eq!(parse_cost_row(&[2., 0., 0., 3., 0.1, 5., 0.], 1).unwrap(), CostPoly { c2: 0.1, c1: 5.0, c0: 0.0 });
        assert_eq!(parse_cost_row(&[2., 0., 0., 2., 7., 3.], 1).unwrap(), CostPoly { c2: 0.0, c1: 7.0, c0: 3.0 });
        assert_eq!(parse_cost_row(&[2., 0., 0., 1., 4.], 1).unwrap(), CostPoly { c2: 0.0, c1: 0.0, c0: 4.0 });
        assert!(matches!(parse_cost_row(&[2., 0., 0., 4., 1., 1., 1., 1.], 3), Err(CaseError::Cost { row: 3, .. })));
    }

    #[test]
    fn piecewise_cost_is_rejected() {
        let text = TWO_BUS.replace("2\t0\t0\t3\t0.1\t5\t0;", "1\t0\t0\t2\t0\t0\t100\t500;");
        let err = parse_case(&text).unwrap_err();
        assert!(matches!(err, CaseError::PiecewiseCost { row: 1 }));
        assert!(err.to_string().contains("piecewise"));
    }

    #[test]
    fn syntax_error_reports_line() {
        let text = TWO_BUS.replace("0.01\t0.1", "0.01\tabc");
        match parse_case(&text).unwrap_err() {
            CaseError::Syntax { line, .. } => assert_eq!(line, 13),
            e => panic!("unexpected {e}"),
        }
        match parse_case("mpc.baseMVA = 100;\nbogus\n").unwrap_err() {
            CaseError::Syntax { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn missing_matrix_is_structured() {
        let text = TWO_BUS.replace("mpc.gencost", "mpc.other");
        assert!(matches!(parse_case(&text).unwrap_err(), CaseError::MissingMatrix("gencost")));
    }

    #[test]
    fn bad_references_and_islands_rejected() {
        let text = TWO_BUS.replace("1\t2\t0.01\t0.1", "1\t7\t0.01\t0.1");
        assert!(matches!(parse_case(&text).unwrap_err(), CaseError::UnknownBus { bus: 7, .. }));
        let text = TWO_BUS.replace("0\t0\t0\t0\t1\t-360", "0\t0\t0\t0\t0\t-360");
        assert!(matches!(parse_case(&text).unwrap_err(), CaseError::Islanded { bus: 2 }));
        let text = TWO_BUS.replace("0.01\t0.1", "0.01\t0");
        assert!(matches!(parse_case(&text).unwrap_err(), CaseError::ZeroReactance { branch: 1 }));
    }

    #[test]
    fn normalization_zeroes_pmin_and_drops_outages() {
        let mut net = parse_case(TWO_BUS).unwrap();
        net.generators.push(Generator { bus: 2, p_min_mw: 0.0, p_max_mw: 10.0, in_service: true, cost: CostPoly::default() });
        net.generators.push(Generator { bus: 2, p_min_mw: 3.0, p_max_mw: 10.0, in_service: false, cost: CostPoly::default() });
        net.branches.push(Branch { from_bus: 1, to_bus: 2, reactance_pu: 0.2, rate_mw: 0.0, in_service: false });
        let out = apply_setup_normalization(&net);
        assert_eq!(out.generators.len(), 2);
        assert_eq!(out.generators[0].p_min_mw, 0.0);
        assert_eq!(out.generators[1], net.generators[1]);
        assert_eq!(out.branches.len(), 1);
        assert_eq!(out.buses, net.buses);
    }

    #[test]
    fn unrated_branch_is_unlimited() {
        let b = Branch { from_bus: 1, to_bus: 2, reactance_pu: 0.1, rate_mw: 0.0, in_service: true };
        assert!(b.limit_pu(100.0).is_infinite());
        let b = Branch { rate_mw: 250.0, ..b };
        assert_eq!(b.limit_pu(100.0), 2.5);
    }
}
