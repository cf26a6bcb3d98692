//! Backend-neutral optimisation model: bounded variables, linear rows, a diagonal convex
//! quadratic objective and SOS2 groups (always encoded with binaries).

mod highs;
mod lp_file;

use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::highs::HighsBackend;
pub use self::lp_file::write_lp;

/// Relative epigraph gap at which tangent refinement of a continuous model stops.
const OA_TOLERANCE: f64 = 1e-10;
const OA_MAX_ROUNDS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub kind: VarKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|(v, c)| c * values[v.0]).sum()
    }

    /// Amount by which `values` violates this row (0 when satisfied).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let a = self.activity(values);
        match self.sense {
            Sense::Le => (a - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - a).max(0.0),
            Sense::Eq => (a - self.rhs).abs(),
        }
    }
}

/// `sum q_i x_i^2 + sum c_i x_i + constant`, every `q_i >= 0`.
#[derive(Debug, Clone, Default)]
pub struct Objective {
    pub quadratic: Vec<(VarId, f64)>,
    pub linear: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl Objective {
    pub fn evaluate(&self, values: &[f64]) -> f64 {
        let q: f64 = self.quadratic.iter().map(|(v, c)| c * values[v.0] * values[v.0]).sum();
        let l: f64 = self.linear.iter().map(|(v, c)| c * values[v.0]).sum();
        q + l + self.constant
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Controls {
    /// Relative MIP gap at which the search stops.
    pub rel_gap: f64,
    pub time_limit_s: f64,
    pub threads: usize,
    pub seed: u64,
    /// Segments of the convex under-approximation used when the backend cannot take a
    /// quadratic objective together with binaries.
    pub pwl_segments: usize,
    /// Use the piecewise-linear objective even when the backend accepts the quadratic one.
    #[serde(default)]
    pub force_pwl: bool,
}

impl Default for Controls {
    fn default() -> Self {
        Self { rel_gap: 1e-3, time_limit_s: 1200.0, threads: 1, seed: 0, pwl_segments: 20, force_pwl: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    GapLimit,
    TimeLimit,
    Infeasible,
    Unbounded,
    Error,
}

impl SolveStatus {
    /// Optimal, or stopped by the gap criterion.
    pub fn is_success(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::GapLimit)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::GapLimit => "gap_limit",
            SolveStatus::TimeLimit => "time_limit",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::Error => "error",
        }
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Objective of the returned point under the model's own (exact) objective.
    pub objective: f64,
    /// Objective reported by the backend when a surrogate objective was solved.
    pub surrogate_objective: Option<f64>,
    /// One value per model variable; empty when no feasible point is available.
    pub values: Vec<f64>,
    /// Row duals of continuous models (empty for MIPs and failed solves).
    pub row_duals: Vec<f64>,
    pub mip_gap: f64,
    pub wall_time_s: f64,
    pub message: Option<String>,
}

impl SolveResult {
    pub fn has_solution(&self) -> bool {
        !self.values.is_empty()
    }

    pub fn value(&self, v: VarId) -> f64 {
        self.values[v.0]
    }

    pub(crate) fn failure(status: SolveStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            objective: f64::NAN,
            surrogate_objective: None,
            values: Vec::new(),
            row_duals: Vec::new(),
            mip_gap: f64::INFINITY,
            wall_time_s: 0.0,
            message: Some(message.into()),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("variable {0} was not declared")]
    UnknownVariable(usize),
    #[error("SOS2 group needs at least two members, got {0}")]
    ShortSos2(usize),
    #[error("SOS2 member `{0}` must be bounded within [0, 1]")]
    UnboundedSos2Member(String),
    #[error("quadratic coefficient {coef} on `{name}` is negative")]
    NonConvex { name: String, coef: f64 },
    #[error("variable `{0}` needs finite bounds for the piecewise-linear objective")]
    UnboundedQuadratic(String),
    #[error("invalid bounds [{lower}, {upper}] for `{name}`")]
    Bounds { name: String, lower: f64, upper: f64 },
}

pub fn gray_code(k: usize) -> usize {
    k ^ (k >> 1)
}

/// Code width and offset of a logarithmic SOS2 encoding with `segments` segments.
pub fn sos2_code_layout(segments: usize, split: Option<usize>) -> (usize, usize) {
    let width = |m: usize| if m <= 1 { 0 } else { (usize::BITS - (m - 1).leading_zeros()) as usize };
    match split {
        Some(s) if s > 0 && s < segments => {
            let half = s.max(segments - s);
            let bits = width(half) + 1;
            (bits, (1 << (bits - 1)) - s)
        }
        _ => (width(segments), 0),
    }
}

/// Anything that can solve a [`Model`].
pub trait SolverBackend: Send + Sync {
    fn name(&self) -> &'static str;
    fn supports_qp(&self) -> bool;
    fn supports_miqp(&self) -> bool;
    /// Solve a model whose objective this backend supports. `values` in the result are
    /// aligned with the model's variables.
    fn solve(&self, model: &Model) -> SolveResult;
}

#[derive(Debug, Clone, Default)]
pub struct Model {
    pub name: String,
    vars: Vec<Variable>,
    constraints: Vec<Constraint>,
    objective: Objective,
    sos2_groups: Vec<Vec<VarId>>,
    pub controls: Controls,
    warm_start: Vec<(VarId, f64)>,
}

impl Model {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), ..Default::default() }
    }

    pub fn variables(&self) -> &[Variable] {
        &self.vars
    }

    pub fn variable(&self, v: VarId) -> &Variable {
        &self.vars[v.0]
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn sos2_groups(&self) -> &[Vec<VarId>] {
        &self.sos2_groups
    }

    pub fn warm_start(&self) -> &[(VarId, f64)] {
        &self.warm_start
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    /// Binaries whose bounds are not fixed.
    pub fn num_free_binaries(&self) -> usize {
        self.vars.iter().filter(|v| v.kind == VarKind::Binary && v.lower != v.upper).count()
    }

    pub fn is_mip(&self) -> bool {
        self.num_free_binaries() > 0
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, kind: VarKind) -> VarId {
        let (lower, upper) = match kind {
            VarKind::Binary => (lower.max(0.0), upper.min(1.0)),
            VarKind::Continuous => (lower, upper),
        };
        self.vars.push(Variable { name: name.into(), lower, upper, kind });
        VarId(self.vars.len() - 1)
    }

    pub fn add_continuous(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarId {
        self.add_var(name, lower, upper, VarKind::Continuous)
    }

    pub fn add_free(&mut self, name: impl Into<String>) -> VarId {
        self.add_var(name, f64::NEG_INFINITY, f64::INFINITY, VarKind::Continuous)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> VarId {
        self.add_var(name, 0.0, 1.0, VarKind::Binary)
    }

    pub fn set_bounds(&mut self, v: VarId, lower: f64, upper: f64) {
        let var = &mut self.vars[v.0];
        var.lower = lower;
        var.upper = upper;
    }

    pub fn fix(&mut self, v: VarId, value: f64) {
        self.set_bounds(v, value, value);
    }

    pub fn bounds(&self, v: VarId) -> (f64, f64) {
        let var = &self.vars[v.0];
        (var.lower, var.upper)
    }

    fn check(&self, v: VarId) -> Result<(), ModelError> {
        if v.0 < self.vars.len() {
            Ok(())
        } else {
            Err(ModelError::UnknownVariable(v.0))
        }
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        terms: impl IntoIterator<Item = (VarId, f64)>,
        sense: Sense,
        rhs: f64,
    ) -> Result<usize, ModelError> {
        let terms: Vec<_> = terms.into_iter().filter(|(_, c)| *c != 0.0).collect();
        for (v, _) in &terms {
            self.check(*v)?;
        }
        self.constraints.push(Constraint { name: name.into(), terms, sense, rhs });
        Ok(self.constraints.len() - 1)
    }

    pub fn add_linear_cost(&mut self, v: VarId, coef: f64) -> Result<(), ModelError> {
        self.check(v)?;
        if coef != 0.0 {
            self.objective.linear.push((v, coef));
        }
        Ok(())
    }

    pub fn add_quadratic_cost(&mut self, v: VarId, coef: f64) -> Result<(), ModelError> {
        self.check(v)?;
        if coef < 0.0 {
            return Err(ModelError::NonConvex { name: self.vars[v.0].name.clone(), coef });
        }
        if coef > 0.0 {
            self.objective.quadratic.push((v, coef));
        }
        Ok(())
    }

    pub fn add_constant_cost(&mut self, c: f64) {
        self.objective.constant += c;
    }

    /// Suggested starting values; partial assignments are completed by the backend.
    pub fn set_warm_start(&mut self, values: Vec<(VarId, f64)>) {
        self.warm_start = values;
    }

    /// Impose SOS2 adjacency on `members` with `n - 1` segment binaries `z_k`:
    /// `sum z = 1`, `x_1 <= z_1`, `x_k <= z_{k-1} + z_k`, `x_n <= z_{n-1}`.
    /// Returns the segment binaries.
    pub fn add_sos2_via_binaries(&mut self, members: &[VarId]) -> Result<Vec<VarId>, ModelError> {
        let n = members.len();
        if n < 2 {
            return Err(ModelError::ShortSos2(n));
        }
        for &m in members {
            self.check(m)?;
            let var = &self.vars[m.0];
            if !(var.lower >= 0.0 && var.upper <= 1.0) {
                return Err(ModelError::UnboundedSos2Member(var.name.clone()));
            }
        }
        let base = self.vars[members[0].0].name.clone();
        let segments: Vec<VarId> = (0..n - 1).map(|k| self.add_binary(format!("{base}.seg{k}"))).collect();
        self.add_constraint(format!("{base}.one_segment"), segments.iter().map(|&z| (z, 1.0)), Sense::Eq, 1.0)?;
        for (k, &m) in members.iter().enumerate() {
            let mut terms = vec![(m, 1.0)];
            if k > 0 {
                terms.push((segments[k - 1], -1.0));
            }
            if k < n - 1 {
                terms.push((segments[k], -1.0));
            }
            self.add_constraint(format!("{base}.adj{k}"), terms, Sense::Le, 0.0)?;
        }
        self.sos2_groups.push(members.to_vec());
        Ok(segments)
    }

    /// SOS2 adjacency on `members` with about `log2(n - 1)` binaries. Segment `k` (between
    /// members `k` and `k + 1`) gets the Gray code of `k + offset`; bit `j` forbids the
    /// members outside the segments it selects. With `split = Some(s)` the offset makes the
    /// top bit separate segments `< s` from segments `>= s`. Valid only when the members sum
    /// to at most one. Returns the code binaries, lowest bit first.
    pub fn add_sos2_log(&mut self, members: &[VarId], split: Option<usize>) -> Result<Vec<VarId>, ModelError> {
        let n = members.len();
        if n < 2 {
            return Err(ModelError::ShortSos2(n));
        }
        for &m in members {
            self.check(m)?;
            let var = &self.vars[m.0];
            if !(var.lower >= 0.0 && var.upper <= 1.0) {
                return Err(ModelError::UnboundedSos2Member(var.name.clone()));
            }
        }
        let base = self.vars[members[0].0].name.clone();
        let segments = n - 1;
        let (bits, offset) = sos2_code_layout(segments, split);
        let code = |k: usize| gray_code(k + offset);
        let mut out = Vec::with_capacity(bits);
        for j in 0..bits {
            let z = self.add_binary(format!("{base}.code{j}"));
            let (mut ones, mut zeros) = (vec![(z, -1.0)], Vec::new());
            for (i, &m) in members.iter().enumerate() {
                let adjacent = [i.checked_sub(1), (i < segments).then_some(i)];
                let adjacent: Vec<usize> = adjacent.into_iter().flatten().collect();
                if adjacent.iter().all(|&k| code(k) >> j & 1 == 1) {
                    ones.push((m, 1.0));
                } else if adjacent.iter().all(|&k| code(k) >> j & 1 == 0) {
                    zeros.push((m, 1.0));
                }
            }
            self.add_constraint(format!("{base}.code{j}.one"), ones, Sense::Le, 0.0)?;
            zeros.push((z, 1.0));
            self.add_constraint(format!("{base}.code{j}.zero"), zeros, Sense::Le, 1.0)?;
            out.push(z);
        }
        self.sos2_groups.push(members.to_vec());
        Ok(out)
    }

    /// Largest bound or row violation of `values`, integrality included.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (var, &x) in self.vars.iter().zip(values) {
            worst = worst.max(var.lower - x).max(x - var.upper);
            if var.kind == VarKind::Binary {
                worst = worst.max((x - x.round()).abs());
            }
        }
        for c in &self.constraints {
            worst = worst.max(c.violation(values));
        }
        worst
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for var in &self.vars {
            if var.lower > var.upper || var.lower.is_nan() || var.upper.is_nan() {
                return Err(ModelError::Bounds { name: var.name.clone(), lower: var.lower, upper: var.upper });
            }
        }
        Ok(())
    }

    /// Replace each `q x^2` term with an epigraph variable bounded below by tangents at the
    /// midpoints of `segments` equal slices of `[lower, upper]`. The maximum error per term is
    /// `q * h^2 / 4` with `h` the slice width.
    pub fn with_pwl_objective(&self, segments: usize) -> Result<Model, ModelError> {
        Ok(self.with_tangent_objective(&self.pwl_points(segments)?))
    }

    fn pwl_points(&self, segments: usize) -> Result<Vec<Vec<f64>>, ModelError> {
        let segments = segments.max(1);
        self.objective
            .quadratic
            .iter()
            .map(|&(v, _)| {
                let Variable { name, lower, upper, .. } = &self.vars[v.0];
                if !lower.is_finite() || !upper.is_finite() {
                    return Err(ModelError::UnboundedQuadratic(name.clone()));
                }
                let h = (upper - lower) / segments as f64;
                Ok(if h > 0.0 { (0..segments).map(|k| lower + (k as f64 + 0.5) * h).collect() } else { vec![*lower] })
            })
            .collect()
    }

    /// Epigraph form with tangents of term `k` at `points[k]`. The epigraph variable of term
    /// `k` is appended as variable `num_vars() + k`.
    fn with_tangent_objective(&self, points: &[Vec<f64>]) -> Model {
        let mut out = self.clone();
        out.objective.quadratic.clear();
        for (&(v, q), pts) in self.objective.quadratic.iter().zip(points) {
            let Variable { name, lower, upper, .. } = self.vars[v.0].clone();
            let lo_cost = if lower <= 0.0 && upper >= 0.0 { 0.0 } else { q * lower.abs().min(upper.abs()).powi(2) };
            let t = out.add_continuous(format!("{name}.sqcost"), lo_cost, f64::INFINITY);
            out.objective.linear.push((t, 1.0));
            for (k, &p) in pts.iter().enumerate() {
                // t >= q p^2 + 2 q p (x - p)
                out.constraints.push(Constraint {
                    name: format!("{name}.tangent{k}"),
                    terms: vec![(t, 1.0), (v, -2.0 * q * p)],
                    sense: Sense::Ge,
                    rhs: -q * p * p,
                });
            }
            if let Some(&(_, x0)) = self.warm_start.iter().find(|(w, _)| *w == v) {
                out.warm_start.push((t, q * x0 * x0));
            }
        }
        out
    }

    /// Solve with tangent under-approximations of the quadratic terms. Continuous models add a
    /// tangent at the incumbent of every term whose epigraph gap exceeds the tolerance and
    /// re-solve, converging to the quadratic optimum; models with binaries are solved once.
    fn solve_outer_approximation(&self, backend: &dyn SolverBackend) -> SolveResult {
        let mut points = match self.pwl_points(self.controls.pwl_segments) {
            Ok(p) => p,
            Err(e) => return SolveResult::failure(SolveStatus::Error, e.to_string()),
        };
        let n = self.vars.len();
        let refine = !self.is_mip() && !self.controls.force_pwl;
        let mut round = 0;
        loop {
            let surrogate = self.with_tangent_objective(&points);
            let mut r = backend.solve(&surrogate);
            if !r.has_solution() {
                return r;
            }
            let surrogate_value = r.objective;
            let mut added = false;
            let mut gap = 0.0;
            let mut row = self.constraints.len();
            for (k, &(v, q)) in self.objective.quadratic.iter().enumerate() {
                let (x, t) = (r.values[v.0], r.values[n + k]);
                let err = q * x * x - t;
                gap += err.max(0.0);
                let rows = row..row + points[k].len();
                row = rows.end;
                if err <= OA_TOLERANCE * (1.0 + (q * x * x).abs()) {
                    continue;
                }
                // The duals of the active tangents weight their points into the dispatch at
                // which the marginal cost matches the current price.
                let mut candidates = vec![x];
                if r.row_duals.len() == surrogate.constraints.len() {
                    let y: Vec<f64> = rows.map(|i| r.row_duals[i].abs()).collect();
                    let total: f64 = y.iter().sum();
                    if total > 1e-12 {
                        let (lo, hi) = (self.vars[v.0].lower, self.vars[v.0].upper);
                        let p = y.iter().zip(&points[k]).map(|(w, p)| w * p).sum::<f64>() / total;
                        candidates.push(p.clamp(lo, hi));
                    }
                }
                for c in candidates {
                    if points[k].iter().all(|p| (p - c).abs() > 1e-12 * (1.0 + c.abs())) {
                        points[k].push(c);
                        added = true;
                    }
                }
            }
            round += 1;
            let converged = gap <= OA_TOLERANCE * (1.0 + surrogate_value.abs());
            log::trace!("{}: tangent round {round}, gap {gap}", self.name);
            if !refine || converged || !added || round >= OA_MAX_ROUNDS {
                if refine && !converged {
                    log::warn!("{}: tangent refinement stopped after {round} rounds with gap {gap}", self.name);
                }
                r.values.truncate(n);
                r.surrogate_objective = Some(surrogate_value);
                r.objective = self.objective.evaluate(&r.values);
                return r;
            }
        }
    }

    pub fn solve(&self) -> SolveResult {
        self.solve_with(&HighsBackend)
    }

    /// Solve with `backend`, substituting the piecewise-linear objective when the backend
    /// cannot handle a quadratic objective on this model.
    pub fn solve_with(&self, backend: &dyn SolverBackend) -> SolveResult {
        let start = Instant::now();
        if let Err(e) = self.validate() {
            return SolveResult::failure(SolveStatus::Error, e.to_string());
        }
        let quadratic = !self.objective.quadratic.is_empty();
        let unsupported = if self.is_mip() { !backend.supports_miqp() } else { !backend.supports_qp() };
        let needs_pwl = quadratic && (self.controls.force_pwl || unsupported);
        let mut result = if needs_pwl { self.solve_outer_approximation(backend) } else { backend.solve(self) };
        result.wall_time_s = start.elapsed().as_secs_f64();
        log::debug!(
            "{}: {} vars ({} binaries), {} rows -> {} obj={} gap={} in {:.2}s",
            self.name,
            self.vars.len(),
            self.num_free_binaries(),
            self.constraints.len(),
            result.status,
            result.objective,
            result.mip_gap,
            result.wall_time_s
        );
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_variable_lp() {
        let mut m = Model::new("lp");
        let x = m.add_continuous("x", 0.0, 10.0);
        m.add_constraint("c", [(x, 1.0)], Sense::Ge, 3.0).unwrap();
        m.add_linear_cost(x, 1.0).unwrap();
        let r = m.solve();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective - 3.0).abs() < 1e-9);
    }

    #[test]
    fn convex_quadratic_vertex() {
        let mut m = Model::new("qp");
        let x = m.add_continuous("x", 0.0, 10.0);
        m.add_quadratic_cost(x, 1.0).unwrap();
        m.add_linear_cost(x, -4.0).unwrap();
        let r = m.solve();
        assert_eq!(r.status, SolveStatus::Optimal);
        // limited by the LP feasibility tolerance on the tangent rows
        assert!((r.objective + 4.0).abs() < 1e-6, "{}", r.objective);
        assert!((r.value(x) - 2.0).abs() < 1e-3);
    }

    #[test]
    fn empty_feasible_set_is_infeasible() {
        let mut m = Model::new("inf");
        let x = m.add_free("x");
        m.add_constraint("a", [(x, 1.0)], Sense::Le, 0.0).unwrap();
        m.add_constraint("b", [(x, 1.0)], Sense::Ge, 1.0).unwrap();
        m.add_linear_cost(x, 1.0).unwrap();
        assert_eq!(m.solve().status, SolveStatus::Infeasible);
    }

    #[test]
    fn unbounded_lp() {
        let mut m = Model::new("unb");
        let x = m.add_free("x");
        m.add_linear_cost(x, 1.0).unwrap();
        assert_eq!(m.solve().status, SolveStatus::Unbounded);
    }

    #[test]
    fn miqp_falls_back_to_pwl_objective() {
        // min (x - 2.3)^2 + 5 y  with x <= 10 y, y binary -> y = 1, x = 2.3
        let mut m = Model::new("miqp");
        let x = m.add_continuous("x", 0.0, 10.0);
        let y = m.add_binary("y");
        m.add_constraint("link", [(x, 1.0), (y, -10.0)], Sense::Le, 0.0).unwrap();
        m.add_quadratic_cost(x, 1.0).unwrap();
        m.add_linear_cost(x, -4.6).unwrap();
        m.add_constant_cost(2.3 * 2.3);
        m.add_linear_cost(y, 0.1).unwrap();
        m.controls.pwl_segments = 20;
        let r = m.solve();
        assert!(r.status.is_success());
        let surrogate = r.surrogate_objective.expect("pwl used");
        // under-approximation error bounded by q h^2 / 4 with h = 0.5
        assert!(surrogate <= r.objective + 1e-9);
        assert!(r.objective - surrogate <= 0.25 * 0.25 + 1e-6);
        assert!((r.value(y) - 1.0).abs() < 1e-9);
        assert!((r.value(x) - 2.3).abs() <= 0.5);
    }

    #[test]
    fn sos2_rejects_bad_members() {
        let mut m = Model::new("s");
        let a = m.add_continuous("a", 0.0, 1.0);
        let b = m.add_continuous("b", 0.0, f64::INFINITY);
        assert_eq!(m.add_sos2_via_binaries(&[a]), Err(ModelError::ShortSos2(1)));
        assert!(matches!(m.add_sos2_via_binaries(&[a, b]), Err(ModelError::UnboundedSos2Member(_))));
        assert_eq!(m.add_sos2_via_binaries(&[a, VarId(99)]), Err(ModelError::UnknownVariable(99)));
    }

    fn sos2_feasible(values: &[f64]) -> bool {
        sos2_feasible_with(values, None)
    }

    fn sos2_feasible_with(values: &[f64], log: Option<Option<usize>>) -> bool {
        let mut m = Model::new("sos2");
        let vars: Vec<_> = values.iter().enumerate().map(|(k, _)| m.add_continuous(format!("x{k}"), 0.0, 1.0)).collect();
        if let Some(split) = log {
            m.add_sos2_log(&vars, split).unwrap();
        } else {
            m.add_sos2_via_binaries(&vars).unwrap();
        }
        for (&v, &x) in vars.iter().zip(values) {
            m.fix(v, x);
        }
        m.solve().status.is_success()
    }

    #[test]
    fn sos2_encoding_examples() {
        let mut m = Model::new("two");
        let a = m.add_continuous("a", 0.0, 1.0);
        let b = m.add_continuous("b", 0.0, 1.0);
        let z = m.add_sos2_via_binaries(&[a, b]).unwrap();
        assert_eq!(z.len(), 1);
        assert!(sos2_feasible(&[0.25, 0.75]));
        assert!(!sos2_feasible(&[0.5, 0.0, 0.5]));
        assert!(sos2_feasible(&[0.0, 0.3, 0.7, 0.0, 0.0]));
    }

    #[test]
    fn log_encoding_matches_adjacency() {
        // Two members at 0.5 each: feasible exactly when they are neighbours.
        for n in 2..=9 {
            for split in std::iter::once(None).chain((1..n - 1).map(Some)) {
                for a in 0..n {
                    for b in a + 1..n {
                        let mut v = vec![0.0; n];
                        v[a] = 0.5;
                        v[b] = 0.5;
                        assert_eq!(sos2_feasible_with(&v, Some(split)), b == a + 1, "n={n} {split:?} a={a} b={b}");
                    }
                    let mut v = vec![0.0; n];
                    v[a] = 1.0;
                    assert!(sos2_feasible_with(&v, Some(split)), "n={n} {split:?} single {a}");
                }
            }
        }
    }

    #[test]
    fn split_aligns_with_top_bit() {
        for segments in 2..=20 {
            for s in 1..segments {
                let (bits, offset) = sos2_code_layout(segments, Some(s));
                assert!(segments - 1 + offset < 1 << bits);
                for k in 0..segments {
                    let top = gray_code(k + offset) >> (bits - 1) & 1;
                    assert_eq!(top == 1, k >= s, "segments={segments} s={s} k={k}");
                }
            }
        }
    }

    #[test]
    fn unknown_variable_in_row() {
        let mut m = Model::new("u");
        assert_eq!(m.add_constraint("c", [(VarId(3), 1.0)], Sense::Le, 1.0), Err(ModelError::UnknownVariable(3)));
        assert_eq!(m.add_quadratic_cost(VarId(0), 1.0), Err(ModelError::UnknownVariable(0)));
    }

    #[test]
    fn negative_quadratic_rejected() {
        let mut m = Model::new("nc");
        let x = m.add_free("x");
        assert!(matches!(m.add_quadratic_cost(x, -1.0), Err(ModelError::NonConvex { .. })));
    }
}
