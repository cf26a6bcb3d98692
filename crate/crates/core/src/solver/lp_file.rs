//! CPLEX-style LP text export, for inspecting models with external tools.

use std::fmt::Write as _;
use std::io::{self, Write};

use super::{Model, Sense, VarKind};

fn lp_name(index: usize, name: &str) -> String {
    let clean: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '.' { c } else { '_' })
        .collect();
    format!("v{index}_{clean}")
}

fn push_term(out: &mut String, coef: f64, name: &str, first: &mut bool) {
    if *first {
        let _ = write!(out, " {coef} {name}");
        *first = false;
    } else if coef < 0.0 {
        let _ = write!(out, " - {} {name}", -coef);
    } else {
        let _ = write!(out, " + {coef} {name}");
    }
}

fn fmt_bound(v: f64) -> String {
    if v == f64::INFINITY {
        "+inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

/// Write `model` in LP format. SOS2 groups appear through their binary encoding.
pub fn write_lp(model: &Model, mut out: impl Write) -> io::Result<()> {
    let names: Vec<String> = model.vars.iter().enumerate().map(|(i, v)| lp_name(i, &v.name)).collect();
    let mut text = String::new();
    let _ = writeln!(text, "\\ {}", model.name);
    text.push_str("Minimize\n obj:");
    let mut first = true;
    for &(v, c) in &model.objective.linear {
        push_term(&mut text, c, &names[v.0], &mut first);
    }
    if model.objective.constant != 0.0 || first {
        let c = model.objective.constant;
        if first {
            let _ = write!(text, " {c}");
        } else if c < 0.0 {
            let _ = write!(text, " - {}", -c);
        } else {
            let _ = write!(text, " + {c}");
        }
    }
    if !model.objective.quadratic.is_empty() {
        text.push_str(" + [");
        let mut qfirst = true;
        for &(v, q) in &model.objective.quadratic {
            let name = format!("{} ^2", names[v.0]);
            push_term(&mut text, 2.0 * q, &name, &mut qfirst);
        }
        text.push_str(" ] / 2");
    }
    text.push_str("\nSubject To\n");
    for (k, c) in model.constraints.iter().enumerate() {
        let _ = write!(text, " c{k}:");
        let mut first = true;
        for &(v, coef) in &c.terms {
            push_term(&mut text, coef, &names[v.0], &mut first);
        }
        if first {
            let _ = write!(text, " 0 {}", names.first().map(String::as_str).unwrap_or("x"));
        }
        let op = match c.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        let _ = writeln!(text, " {op} {}", c.rhs);
    }
    text.push_str("Bounds\n");
    for (var, name) in model.vars.iter().zip(&names) {
        if var.lower == f64::NEG_INFINITY && var.upper == f64::INFINITY {
            let _ = writeln!(text, " {name} free");
        } else if var.lower == var.upper {
            let _ = writeln!(text, " {name} = {}", var.lower);
        } else {
            let _ = writeln!(text, " {} <= {name} <= {}", fmt_bound(var.lower), fmt_bound(var.upper));
        }
    }
    let binaries: Vec<&String> =
        model.vars.iter().zip(&names).filter(|(v, _)| v.kind == VarKind::Binary).map(|(_, n)| n).collect();
    if !binaries.is_empty() {
        text.push_str("Binaries\n");
        for chunk in binaries.chunks(8) {
            let line: Vec<&str> = chunk.iter().map(|s| s.as_str()).collect();
            let _ = writeln!(text, " {}", line.join(" "));
        }
    }
    text.push_str("End\n");
    out.write_all(text.as_bytes())
}

#[cfg(test)]
mod tests {
    use std::ffi::CString;

    use super::*;

    fn solve_lp_file(path: &std::path::Path) -> f64 {
        unsafe {
            let h = highs_sys::Highs_create();
            let key = CString::new("output_flag").unwrap();
            highs_sys::Highs_setBoolOptionValue(h, key.as_ptr(), 0);
            let p = CString::new(path.to_str().unwrap()).unwrap();
            assert_ne!(highs_sys::Highs_readModel(h, p.as_ptr()), -1);
            highs_sys::Highs_run(h);
            let obj = highs_sys::Highs_getObjectiveValue(h);
            highs_sys::Highs_destroy(h);
            obj
        }
    }

    #[test]
    fn exported_model_reads_back_with_same_optimum() {
        let mut m = Model::new("export");
        let x = m.add_continuous("x[1]", 0.0, 10.0);
        let y = m.add_continuous("y", -5.0, f64::INFINITY);
        let z = m.add_binary("z");
        m.add_constraint("a", [(x, 1.0), (y, 1.0)], Sense::Ge, 2.0).unwrap();
        m.add_constraint("b", [(x, 1.0), (z, -8.0)], Sense::Le, 0.0).unwrap();
        m.add_constraint("c", [(y, 1.0)], Sense::Eq, -1.0).unwrap();
        m.add_linear_cost(x, 2.0).unwrap();
        m.add_linear_cost(z, 1.0).unwrap();
        m.add_constant_cost(4.0);
        let direct = m.solve();
        assert!(direct.status.is_success());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.lp");
        write_lp(&m, std::fs::File::create(&path).unwrap()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("Binaries"));
        assert!((solve_lp_file(&path) - direct.objective).abs() < 1e-9);
    }

    #[test]
    fn quadratic_objective_round_trip() {
        let mut m = Model::new("q");
        let x = m.add_continuous("x", 0.0, 10.0);
        m.add_quadratic_cost(x, 1.0).unwrap();
        m.add_linear_cost(x, -4.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.lp");
        write_lp(&m, std::fs::File::create(&path).unwrap()).unwrap();
        assert!((solve_lp_file(&path) + 4.0).abs() < 1e-6);
    }
}
