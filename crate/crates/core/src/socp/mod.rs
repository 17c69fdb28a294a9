//! A small dense second-order cone programming solver.
//!
//! Programs are stated in a modelling-friendly form ([`ConicProgram`]):
//! maximize a linear objective subject to affine equalities, affine
//! inequalities `expr <= 0`, cones `|u(x)| <= t(x)` and variable bounds.
//! Internally they are mapped to the standard form
//!
//! ```text
//! minimize  c^T x   s.t.  A x = b,  G x + s = h,  s in K
//! ```
//!
//! and solved by a primal-dual interior-point method on the homogeneous
//! self-dual embedding, so infeasible and unbounded programs are reported
//! through certificates rather than iteration-limit failures.

pub mod cbf;
mod cone;
mod ipm;
mod linalg;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use cone::Cones;
use linalg::{dot, norm_inf, SparseRows};

/// Affine expression `sum a_j x_j + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(j: usize) -> Self {
        Self {
            terms: vec![(j, 1.0)],
            constant: 0.0,
        }
    }

    pub fn term(j: usize, a: f64) -> Self {
        Self {
            terms: vec![(j, a)],
            constant: 0.0,
        }
    }

    pub fn add(mut self, j: usize, a: f64) -> Self {
        if a != 0.0 {
            self.terms.push((j, a));
        }
        self
    }

    pub fn plus(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn push(&mut self, j: usize, a: f64) {
        if a != 0.0 {
            self.terms.push((j, a));
        }
    }

    pub fn scaled(mut self, k: f64) -> Self {
        for t in &mut self.terms {
            t.1 *= k;
        }
        self.constant *= k;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(j, a)| a * x[j]).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowKind {
    /// `expr = 0`
    Eq,
    /// `expr <= 0`
    Le,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub expr: LinExpr,
    pub kind: RowKind,
    pub tag: &'static str,
}

/// `|u(x)| <= t(x)`; the cone dimension is `1 + u.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct SocConstraint {
    pub t: LinExpr,
    pub u: Vec<LinExpr>,
    pub tag: &'static str,
}

impl SocConstraint {
    pub fn dim(&self) -> usize {
        1 + self.u.len()
    }
}

/// A second-order cone program in maximization form.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram {
    pub n: usize,
    /// Maximize `objective . x`.
    pub objective: Vec<f64>,
    pub linear: Vec<LinearConstraint>,
    pub socs: Vec<SocConstraint>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ConicProgram {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            objective: vec![0.0; n],
            linear: Vec::new(),
            socs: Vec::new(),
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    /// Adds a variable and returns its index.
    pub fn add_var(&mut self, lower: f64, upper: f64) -> usize {
        self.n += 1;
        self.objective.push(0.0);
        self.lower.push(lower);
        self.upper.push(upper);
        self.n - 1
    }

    pub fn add_le(&mut self, expr: LinExpr, tag: &'static str) {
        self.linear.push(LinearConstraint {
            expr,
            kind: RowKind::Le,
            tag,
        });
    }

    pub fn add_eq(&mut self, expr: LinExpr, tag: &'static str) {
        self.linear.push(LinearConstraint {
            expr,
            kind: RowKind::Eq,
            tag,
        });
    }

    pub fn add_soc(&mut self, t: LinExpr, u: Vec<LinExpr>, tag: &'static str) {
        self.socs.push(SocConstraint { t, u, tag });
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        dot(&self.objective, x)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::MalformedProgram(m));
        if self.objective.len() != self.n || self.lower.len() != self.n || self.upper.len() != self.n {
            return bad("objective/bound vectors do not match the variable count".into());
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return bad("non-finite objective coefficient".into());
        }
        for j in 0..self.n {
            if self.lower[j].is_nan() || self.upper[j].is_nan() || self.lower[j] > self.upper[j] {
                return bad(format!("invalid bounds on variable {j}"));
            }
            if self.lower[j] == f64::INFINITY || self.upper[j] == f64::NEG_INFINITY {
                return bad(format!("infinite bound on the wrong side of variable {j}"));
            }
        }
        let check = |e: &LinExpr, what: &str| -> Result<()> {
            if !e.constant.is_finite() {
                return Err(Error::MalformedProgram(format!("non-finite constant in {what}")));
            }
            for &(j, a) in &e.terms {
                if j >= self.n {
                    return Err(Error::MalformedProgram(format!("variable index {j} out of range in {what}")));
                }
                if !a.is_finite() {
                    return Err(Error::MalformedProgram(format!("non-finite coefficient in {what}")));
                }
            }
            Ok(())
        };
        for (i, r) in self.linear.iter().enumerate() {
            check(&r.expr, &format!("linear row {i} ({})", r.tag))?;
        }
        for (i, c) in self.socs.iter().enumerate() {
            if c.u.is_empty() {
                return bad(format!("cone {i} ({}) has dimension < 2", c.tag));
            }
            check(&c.t, &format!("cone {i} ({})", c.tag))?;
            for u in &c.u {
                check(u, &format!("cone {i} ({})", c.tag))?;
            }
        }
        Ok(())
    }

    pub(crate) fn standard_form(&self) -> StandardForm {
        let n = self.n;
        let c: Vec<f64> = self.objective.iter().map(|v| -v).collect();
        let mut a = SparseRows::new(n);
        let mut b = Vec::new();
        let mut g = SparseRows::new(n);
        let mut h = Vec::new();
        let mut orth_map = Vec::new();
        for (i, r) in self.linear.iter().enumerate() {
            match r.kind {
                RowKind::Eq => {
                    a.push_row(&r.expr.terms);
                    b.push(-r.expr.constant);
                }
                RowKind::Le => {
                    g.push_row(&r.expr.terms);
                    h.push(-r.expr.constant);
                    orth_map.push(OrthRow::Linear(i));
                }
            }
        }
        for j in 0..n {
            if self.lower[j].is_finite() {
                g.push_row(&[(j, -1.0)]);
                h.push(-self.lower[j]);
                orth_map.push(OrthRow::Lower(j));
            }
            if self.upper[j].is_finite() {
                g.push_row(&[(j, 1.0)]);
                h.push(self.upper[j]);
                orth_map.push(OrthRow::Upper(j));
            }
        }
        let orth = g.nrows();
        let mut socs = Vec::with_capacity(self.socs.len());
        for s in &self.socs {
            for e in std::iter::once(&s.t).chain(&s.u) {
                let neg: Vec<(usize, f64)> = e.terms.iter().map(|&(j, v)| (j, -v)).collect();
                g.push_row(&neg);
                h.push(e.constant);
            }
            socs.push(s.dim());
        }
        StandardForm {
            c,
            a,
            b,
            g,
            h,
            cones: Cones { orth, socs },
            orth_map,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum OrthRow {
    Linear(usize),
    Lower(usize),
    Upper(usize),
}

pub(crate) struct StandardForm {
    pub c: Vec<f64>,
    pub a: SparseRows,
    pub b: Vec<f64>,
    pub g: SparseRows,
    pub h: Vec<f64>,
    pub cones: Cones,
    pub orth_map: Vec<OrthRow>,
}

impl StandardForm {
    /// Residuals of a candidate `(x, y, z)` for the standard form.
    pub fn residuals(&self, x: &[f64], y: &[f64], z: &[f64]) -> KktResiduals {
        let ax = self.a.mul(x);
        let gx = self.g.mul(x);
        let mut pr: f64 = ax.iter().zip(&self.b).fold(0.0, |m, (u, v)| m.max((u - v).abs()));
        let slack: Vec<f64> = self.h.iter().zip(&gx).map(|(h, g)| h - g).collect();
        pr = pr.max(self.cones.dist(&slack));
        let scale_p = 1.0 + norm_inf(&self.b).max(norm_inf(&self.h));
        let mut r = self.c.clone();
        self.a.mul_t_add(y, &mut r);
        self.g.mul_t_add(z, &mut r);
        let du = norm_inf(&r).max(self.cones.dist(z));
        let pobj = dot(&self.c, x);
        let dobj = -dot(&self.b, y) - dot(&self.h, z);
        let gap = (pobj - dobj).abs();
        KktResiduals {
            primal: pr / scale_p,
            dual: du / (1.0 + norm_inf(&self.c)),
            gap,
            rel_gap: gap / (1.0 + pobj.abs().min(dobj.abs())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterLimit,
}

/// Scaled KKT residuals.
///
/// `primal` is the worst equality residual or cone distance of the slack,
/// relative to `1 + |b, h|_inf`; `dual` the stationarity residual (with the
/// dual cone distance) relative to `1 + |c|_inf`; `gap` is the absolute
/// primal-dual objective gap and `rel_gap` that gap over `1 + |objective|`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KktResiduals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    pub rel_gap: f64,
}

impl KktResiduals {
    pub fn within(&self, tol: f64) -> bool {
        self.primal <= tol && self.dual <= tol && (self.gap <= tol || self.rel_gap <= tol)
    }
}

/// Dual values in the sign convention of the maximization form: every
/// multiplier is nonnegative (cone multipliers lie in the cone), and
/// `objective = sum_i y_i grad(row_i) - sum_k grad(cone_k)^T z_k + ...`
/// holds at optimality.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    /// One per entry of [`ConicProgram::linear`].
    pub linear_duals: Vec<f64>,
    /// One vector `(z_t, z_u)` per cone.
    pub soc_duals: Vec<Vec<f64>>,
    pub lower_duals: Vec<f64>,
    pub upper_duals: Vec<f64>,
    pub objective: f64,
    pub residuals: KktResiduals,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 100,
        }
    }
}

/// Solves `cp`. Malformed programs are rejected; otherwise the outcome is
/// carried by [`ConicSolution::status`].
pub fn solve(cp: &ConicProgram, opts: &SolverOptions) -> Result<ConicSolution> {
    cp.validate()?;
    let sf = cp.standard_form();
    let raw = ipm::solve(&sf, opts);
    Ok(unpack(cp, &sf, raw))
}

fn unpack(cp: &ConicProgram, sf: &StandardForm, raw: ipm::RawSolution) -> ConicSolution {
    let mut linear_duals = vec![0.0; cp.linear.len()];
    let mut lower_duals = vec![0.0; cp.n];
    let mut upper_duals = vec![0.0; cp.n];
    let mut eq_k = 0;
    for (i, r) in cp.linear.iter().enumerate() {
        if r.kind == RowKind::Eq {
            linear_duals[i] = raw.y[eq_k];
            eq_k += 1;
        }
    }
    for (k, m) in sf.orth_map.iter().enumerate() {
        match *m {
            OrthRow::Linear(i) => linear_duals[i] = raw.z[k],
            OrthRow::Lower(j) => lower_duals[j] = raw.z[k],
            OrthRow::Upper(j) => upper_duals[j] = raw.z[k],
        }
    }
    let soc_duals = sf.cones.soc_ranges().map(|r| raw.z[r].to_vec()).collect();
    ConicSolution {
        status: raw.status,
        objective: cp.objective_value(&raw.x),
        x: raw.x,
        linear_duals,
        soc_duals,
        lower_duals,
        upper_duals,
        residuals: raw.residuals,
        iterations: raw.iterations,
    }
}

/// Recomputes the KKT residuals of `sol` against `cp`.
pub fn kkt_residuals(cp: &ConicProgram, sol: &ConicSolution) -> KktResiduals {
    let sf = cp.standard_form();
    let mut y = Vec::new();
    for (i, r) in cp.linear.iter().enumerate() {
        if r.kind == RowKind::Eq {
            y.push(sol.linear_duals[i]);
        }
    }
    let mut z = Vec::with_capacity(sf.h.len());
    for m in &sf.orth_map {
        z.push(match *m {
            OrthRow::Linear(i) => sol.linear_duals[i],
            OrthRow::Lower(j) => sol.lower_duals[j],
            OrthRow::Upper(j) => sol.upper_duals[j],
        });
    }
    for d in &sol.soc_duals {
        z.extend_from_slice(d);
    }
    sf.residuals(&sol.x, &y, &z)
}
