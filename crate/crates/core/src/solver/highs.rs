//! HiGHS backend through its C API.

use std::ffi::{c_void, CString};
use std::os::raw::c_int;

use highs_sys::*;

use super::{Model, Sense, SolveResult, SolveStatus, SolverBackend, VarKind};

const STATUS_ERROR: c_int = -1;

/// LP and MILP through HiGHS. The backend can pass a quadratic objective to the HiGHS
/// active-set QP solver, but that solver stalls on congested DC-OPF instances, so it reports
/// no QP support and [`Model::solve_with`] uses tangent outer approximation instead.
#[derive(Debug, Clone, Copy, Default)]
pub struct HighsBackend;

struct Handle(*mut c_void);

impl Drop for Handle {
    fn drop(&mut self) {
        unsafe { Highs_destroy(self.0) }
    }
}

impl Handle {
    fn set_double(&self, name: &str, value: f64) {
        let key = CString::new(name).unwrap();
        unsafe { Highs_setDoubleOptionValue(self.0, key.as_ptr(), value) };
    }

    fn set_int(&self, name: &str, value: c_int) {
        let key = CString::new(name).unwrap();
        unsafe { Highs_setIntOptionValue(self.0, key.as_ptr(), value) };
    }

    fn set_bool(&self, name: &str, value: bool) {
        let key = CString::new(name).unwrap();
        unsafe { Highs_setBoolOptionValue(self.0, key.as_ptr(), value as c_int) };
    }

    fn double_info(&self, name: &str) -> Option<f64> {
        let key = CString::new(name).unwrap();
        let mut v = 0.0;
        let status = unsafe { Highs_getDoubleInfoValue(self.0, key.as_ptr(), &mut v) };
        (status != STATUS_ERROR).then_some(v)
    }

    fn int_info(&self, name: &str) -> Option<c_int> {
        let key = CString::new(name).unwrap();
        let mut v: c_int = 0;
        let status = unsafe { Highs_getIntInfoValue(self.0, key.as_ptr(), &mut v) };
        (status != STATUS_ERROR).then_some(v)
    }
}

fn row_bounds(sense: Sense, rhs: f64) -> (f64, f64) {
    match sense {
        Sense::Le => (f64::NEG_INFINITY, rhs),
        Sense::Ge => (rhs, f64::INFINITY),
        Sense::Eq => (rhs, rhs),
    }
}

impl SolverBackend for HighsBackend {
    fn name(&self) -> &'static str {
        "highs"
    }

    fn supports_qp(&self) -> bool {
        false
    }

    fn supports_miqp(&self) -> bool {
        false
    }

    fn solve(&self, model: &Model) -> SolveResult {
        let n = model.vars.len();
        let m = model.constraints.len();
        if n == 0 {
            return SolveResult {
                status: SolveStatus::Optimal,
                objective: model.objective.constant,
                surrogate_objective: None,
                values: Vec::new(),
                row_duals: Vec::new(),
                mip_gap: 0.0,
                wall_time_s: 0.0,
                message: None,
            };
        }

        let mut col_cost = vec![0.0; n];
        for &(v, c) in &model.objective.linear {
            col_cost[v.0] += c;
        }
        let col_lower: Vec<f64> = model.vars.iter().map(|v| v.lower).collect();
        let col_upper: Vec<f64> = model.vars.iter().map(|v| v.upper).collect();
        // Fixed binaries are passed as continuous so that a fully fixed model stays a QP.
        let integrality: Vec<c_int> = model
            .vars
            .iter()
            .map(|v| if v.kind == VarKind::Binary && v.lower != v.upper { 1 } else { 0 })
            .collect();
        let is_mip = integrality.iter().any(|&k| k == 1);

        let mut row_lower = Vec::with_capacity(m);
        let mut row_upper = Vec::with_capacity(m);
        let mut a_start: Vec<c_int> = Vec::with_capacity(m + 1);
        let mut a_index: Vec<c_int> = Vec::new();
        let mut a_value = Vec::new();
        for c in &model.constraints {
            let (lo, hi) = row_bounds(c.sense, c.rhs);
            row_lower.push(lo);
            row_upper.push(hi);
            a_start.push(a_index.len() as c_int);
            // HiGHS rejects duplicate entries within a row.
            let mut terms = c.terms.clone();
            terms.sort_by_key(|(v, _)| v.0);
            for (v, coef) in terms {
                if a_index.last() == Some(&(v.0 as c_int)) && a_index.len() > *a_start.last().unwrap() as usize {
                    *a_value.last_mut().unwrap() += coef;
                } else {
                    a_index.push(v.0 as c_int);
                    a_value.push(coef);
                }
            }
        }
        a_start.push(a_index.len() as c_int);

        // Lower-triangular CSC Hessian; HiGHS minimises c'x + x'Qx/2.
        let mut diag = vec![0.0; n];
        for &(v, q) in &model.objective.quadratic {
            diag[v.0] += 2.0 * q;
        }
        let quadratic = diag.iter().any(|&q| q != 0.0);
        let mut q_start: Vec<c_int> = Vec::with_capacity(n);
        let mut q_index: Vec<c_int> = Vec::new();
        let mut q_value = Vec::new();
        for (j, &q) in diag.iter().enumerate() {
            q_start.push(q_index.len() as c_int);
            if q != 0.0 {
                q_index.push(j as c_int);
                q_value.push(q);
            }
        }
        if quadratic && is_mip {
            return SolveResult::failure(SolveStatus::Error, "HiGHS cannot solve MIQP models");
        }

        let handle = Handle(unsafe { Highs_create() });
        // VIDOPT_SOLVER_LOG=1 shows the HiGHS log on stdout.
        handle.set_bool("output_flag", std::env::var_os("VIDOPT_SOLVER_LOG").is_some_and(|v| v == "1"));
        handle.set_double("time_limit", model.controls.time_limit_s);
        handle.set_double("mip_rel_gap", model.controls.rel_gap);
        handle.set_int("random_seed", (model.controls.seed % (i32::MAX as u64)) as c_int);
        if model.controls.threads > 0 {
            handle.set_int("threads", model.controls.threads as c_int);
        }

        let status = unsafe {
            Highs_passModel(
                handle.0,
                n as c_int,
                m as c_int,
                a_index.len() as c_int,
                q_index.len() as c_int,
                2, // row-wise matrix
                1, // triangular Hessian
                1, // minimise
                model.objective.constant,
                col_cost.as_ptr(),
                col_lower.as_ptr(),
                col_upper.as_ptr(),
                row_lower.as_ptr(),
                row_upper.as_ptr(),
                a_start.as_ptr(),
                a_index.as_ptr(),
                a_value.as_ptr(),
                if quadratic { q_start.as_ptr() } else { std::ptr::null() },
                if quadratic { q_index.as_ptr() } else { std::ptr::null() },
                if quadratic { q_value.as_ptr() } else { std::ptr::null() },
                if is_mip { integrality.as_ptr() } else { std::ptr::null() },
            )
        };
        if status == STATUS_ERROR {
            return SolveResult::failure(SolveStatus::Error, "HiGHS rejected the model");
        }

        if is_mip && !model.warm_start.is_empty() {
            let index: Vec<c_int> = model.warm_start.iter().map(|(v, _)| v.0 as c_int).collect();
            let value: Vec<f64> = model.warm_start.iter().map(|(_, x)| *x).collect();
            unsafe { Highs_setSparseSolution(handle.0, index.len() as c_int, index.as_ptr(), value.as_ptr()) };
        }

        let run = unsafe { Highs_run(handle.0) };
        let model_status = unsafe { Highs_getModelStatus(handle.0) };
        if run == STATUS_ERROR && model_status != kHighsModelStatusTimeLimit as c_int {
            return SolveResult::failure(SolveStatus::Error, format!("HiGHS run failed (model status {model_status})"));
        }

        // 2 = feasible primal solution available
        let has_primal = handle.int_info("primal_solution_status").unwrap_or(0) == 2;
        let mip_gap = if is_mip { handle.double_info("mip_gap").unwrap_or(f64::INFINITY) } else { 0.0 };

        let status = match model_status as u32 {
            s if s == kHighsModelStatusOptimal as u32 => {
                if is_mip && mip_gap > 1e-9 {
                    SolveStatus::GapLimit
                } else {
                    SolveStatus::Optimal
                }
            }
            s if s == kHighsModelStatusModelEmpty as u32 => SolveStatus::Optimal,
            s if s == kHighsModelStatusInfeasible as u32 => SolveStatus::Infeasible,
            s if s == kHighsModelStatusUnbounded as u32 => SolveStatus::Unbounded,
            s if s == kHighsModelStatusUnboundedOrInfeasible as u32 => {
                if is_mip {
                    SolveStatus::Infeasible
                } else {
                    SolveStatus::Unbounded
                }
            }
            s if s == kHighsModelStatusTimeLimit as u32 || s == kHighsModelStatusIterationLimit as u32 => {
                SolveStatus::TimeLimit
            }
            other => {
                return SolveResult::failure(SolveStatus::Error, format!("HiGHS model status {other}"));
            }
        };

        let mut duals = Vec::new();
        let values = if has_primal && !matches!(status, SolveStatus::Infeasible | SolveStatus::Unbounded) {
            let mut col_value = vec![0.0; n];
            let mut col_dual = vec![0.0; n];
            let mut row_value = vec![0.0; m];
            let mut row_dual = vec![0.0; m];
            unsafe {
                Highs_getSolution(
                    handle.0,
                    col_value.as_mut_ptr(),
                    col_dual.as_mut_ptr(),
                    row_value.as_mut_ptr(),
                    row_dual.as_mut_ptr(),
                )
            };
            if !is_mip {
                duals = row_dual;
            }
            col_value
        } else {
            Vec::new()
        };
        let objective = if values.is_empty() { f64::NAN } else { unsafe { Highs_getObjectiveValue(handle.0) } };

        SolveResult {
            status,
            objective,
            surrogate_objective: None,
            values,
            row_duals: duals,
            mip_gap,
            wall_time_s: unsafe { Highs_getRunTime(handle.0) },
            message: None,
        }
    }
}
