//! Global solver for a quadratic program with one quadratic equality
//! constraint:
//!
//! ```text
//! minimize  x'Ax + b'x   subject to  x'Cx + c'x + d = 0
//! ```
//!
//! with `A` positive definite and `C` symmetric. A congruence transform
//! diagonalizes both forms; the multiplier is then the root of a monotone
//! scalar function on the interval where `A + mu C` stays positive
//! semidefinite, which certifies global optimality.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Qcqp1 {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c_quad: DMatrix<f64>,
    pub c_lin: DVector<f64>,
    pub d: f64,
}

#[derive(Debug, Clone)]
pub struct Qcqp1Solution {
    pub x: DVector<f64>,
    pub multiplier: f64,
    /// Constraint value at `x`.
    pub residual: f64,
}

impl Qcqp1 {
    pub fn new(n: usize) -> Self {
        Self {
            a: DMatrix::zeros(n, n),
            b: DVector::zeros(n),
            c_quad: DMatrix::zeros(n, n),
            c_lin: DVector::zeros(n),
            d: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// Adds `k (g'x + h)^2` to the objective.
    pub fn add_square(&mut self, k: f64, g: &[(usize, f64)], h: f64) {
        for &(i, gi) in g {
            self.b[i] += 2.0 * k * h * gi;
            for &(j, gj) in g {
                self.a[(i, j)] += k * gi * gj;
            }
        }
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        (x.transpose() * &self.a * x)[0] + self.b.dot(x)
    }

    pub fn constraint(&self, x: &DVector<f64>) -> f64 {
        (x.transpose() * &self.c_quad * x)[0] + self.c_lin.dot(x) + self.d
    }

    /// Substitutes `x_i = v` for every `Some(v)` in `fixed` and returns the
    /// problem in the remaining coordinates (in order).
    pub fn reduce(&self, fixed: &[Option<f64>]) -> Qcqp1 {
        assert_eq!(fixed.len(), self.dim());
        let free: Vec<usize> = (0..self.dim()).filter(|&i| fixed[i].is_none()).collect();
        let xf = DVector::from_iterator(self.dim(), fixed.iter().map(|v| v.unwrap_or(0.0)));
        let m = free.len();
        let mut out = Qcqp1::new(m);
        let ax = &self.a * &xf;
        let cx = &self.c_quad * &xf;
        for (r, &i) in free.iter().enumerate() {
            out.b[r] = self.b[i] + 2.0 * ax[i];
            out.c_lin[r] = self.c_lin[i] + 2.0 * cx[i];
            for (s, &j) in free.iter().enumerate() {
                out.a[(r, s)] = self.a[(i, j)];
                out.c_quad[(r, s)] = self.c_quad[(i, j)];
            }
        }
        out.d = self.d + self.c_lin.dot(&xf) + xf.dot(&cx);
        out
    }

    /// Inverse of [`reduce`]: scatters a reduced solution back.
    pub fn expand(fixed: &[Option<f64>], reduced: &DVector<f64>) -> DVector<f64> {
        let mut it = reduced.iter();
        DVector::from_iterator(fixed.len(), fixed.iter().map(|v| v.unwrap_or_else(|| *it.next().unwrap())))
    }

    pub fn solve(&self) -> Result<Qcqp1Solution> {
        let n = self.dim();
        let fail = |m: String| Err(Error::Block(format!("qcqp-1: {m}")));
        let chol = match self.a.clone().cholesky() {
            Some(c) => c,
            None => return fail("objective matrix is not positive definite".into()),
        };
        let l = chol.l();
        let l_inv = match l.clone().try_inverse() {
            Some(v) => v,
            None => return fail("singular factor".into()),
        };
        // y = L'x, then z = Q'y with L^-1 C L^-T = Q diag(ev) Q'.
        let m = &l_inv * &self.c_quad * l_inv.transpose();
        let m = (&m + m.transpose()) * 0.5;
        let eig = m.symmetric_eigen();
        let q = eig.eigenvectors;
        let ev = eig.eigenvalues;
        let beta = q.transpose() * (&l_inv * &self.b);
        let gam = q.transpose() * (&l_inv * &self.c_lin);
        let d = self.d;

        let scale = ev.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        let zero = 1e-12 * scale.max(1e-300);
        let z_of = |mu: f64| -> DVector<f64> {
            DVector::from_iterator(n, (0..n).map(|i| -(beta[i] + mu * gam[i]) / (2.0 * (1.0 + mu * ev[i]))))
        };
        let phi = |z: &DVector<f64>| -> f64 {
            (0..n).map(|i| ev[i] * z[i] * z[i] + gam[i] * z[i]).sum::<f64>() + d
        };
        let to_x = |z: &DVector<f64>| -> DVector<f64> { l_inv.transpose() * (&q * z) };

        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for &e in ev.iter() {
            if e > zero {
                lo = lo.max(-1.0 / e);
            } else if e < -zero {
                hi = hi.min(-1.0 / e);
            }
        }

        // phi is non-increasing in mu on (lo, hi).
        let start = if lo.is_finite() && hi.is_finite() {
            0.5 * (lo + hi)
        } else if lo.is_finite() {
            lo.max(0.0) + 1.0
        } else if hi.is_finite() {
            hi.min(0.0) - 1.0
        } else {
            0.0
        };
        let f0 = phi(&z_of(start));
        if f0 == 0.0 {
            let z = z_of(start);
            return Ok(self.finish(to_x(&z), start));
        }
        // Bracket: (a, fa > 0) and (b, fb < 0) with a < b.
        let (mut a, mut b);
        if f0 > 0.0 {
            a = start;
            b = start;
            let mut step = 1.0f64.max(start.abs());
            loop {
                let cand = if hi.is_finite() { 0.5 * (b + hi) } else { b + step };
                if !(cand > b) {
                    return self.hard_case(hi, &ev, &gam, &beta, &to_x, zero);
                }
                b = cand;
                step *= 2.0;
                let fb = phi(&z_of(b));
                if fb <= 0.0 {
                    break;
                }
                a = b;
                if !hi.is_finite() && step > 1e300 {
                    return fail("constraint residual never changes sign".into());
                }
                if hi.is_finite() && (hi - b) <= 1e-15 * hi.abs().max(1.0) {
                    return self.hard_case(hi, &ev, &gam, &beta, &to_x, zero);
                }
            }
        } else {
            a = start;
            b = start;
            let mut step = 1.0f64.max(start.abs());
            loop {
                let cand = if lo.is_finite() { 0.5 * (a + lo) } else { a - step };
                if !(cand < a) {
                    return self.hard_case(lo, &ev, &gam, &beta, &to_x, zero);
                }
                a = cand;
                step *= 2.0;
                let fa = phi(&z_of(a));
                if fa >= 0.0 {
                    break;
                }
                b = a;
                if !lo.is_finite() && step > 1e300 {
                    return fail("constraint residual never changes sign".into());
                }
                if lo.is_finite() && (a - lo) <= 1e-15 * lo.abs().max(1.0) {
                    return self.hard_case(lo, &ev, &gam, &beta, &to_x, zero);
                }
            }
        }
        for _ in 0..400 {
            let mid = 0.5 * (a + b);
            if !(mid > a && mid < b) {
                break;
            }
            let fm = phi(&z_of(mid));
            if fm == 0.0 {
                a = mid;
                b = mid;
                break;
            }
            if fm > 0.0 {
                a = mid;
            } else {
                b = mid;
            }
        }
        let za = z_of(a);
        let zb = z_of(b);
        let (z, mu) = if phi(&za).abs() <= phi(&zb).abs() { (za, a) } else { (zb, b) };
        Ok(self.finish(to_x(&z), mu))
    }

    fn finish(&self, x: DVector<f64>, mu: f64) -> Qcqp1Solution {
        let residual = self.constraint(&x);
        Qcqp1Solution { x, multiplier: mu, residual }
    }

    /// Multiplier pinned at a singular endpoint: the singular coordinates
    /// are free in the Lagrangian and are chosen to restore feasibility.
    #[allow(clippy::too_many_arguments)]
    fn hard_case(
        &self,
        mu: f64,
        ev: &DVector<f64>,
        gam: &DVector<f64>,
        beta: &DVector<f64>,
        to_x: &dyn Fn(&DVector<f64>) -> DVector<f64>,
        zero: f64,
    ) -> Result<Qcqp1Solution> {
        let n = ev.len();
        let mut z = DVector::zeros(n);
        let mut singular = None;
        for i in 0..n {
            let den = 1.0 + mu * ev[i];
            if den.abs() <= 1e-9 {
                singular = Some(i);
            } else {
                z[i] = -(beta[i] + mu * gam[i]) / (2.0 * den);
            }
        }
        let Some(k) = singular else {
            return Err(Error::Block("qcqp-1: no sign change and no singular direction".into()));
        };
        let rest: f64 = (0..n).filter(|&i| i != k).map(|i| ev[i] * z[i] * z[i] + gam[i] * z[i]).sum::<f64>() + self.d;
        // ev_k t^2 + gam_k t + rest = 0
        let (qa, qb, qc) = (ev[k], gam[k], rest);
        let t = if qa.abs() <= zero {
            if qb.abs() <= zero {
                return Err(Error::Block("qcqp-1: hard case without a feasible completion".into()));
            }
            -qc / qb
        } else {
            let disc = qb * qb - 4.0 * qa * qc;
            if disc < 0.0 {
                return Err(Error::Block("qcqp-1: hard case without a feasible completion".into()));
            }
            let r = disc.sqrt();
            let t1 = (-qb + r) / (2.0 * qa);
            let t2 = (-qb - r) / (2.0 * qa);
            // Objective contribution in z_k is t^2 + beta_k t.
            if t1 * t1 + beta[k] * t1 <= t2 * t2 + beta[k] * t2 {
                t1
            } else {
                t2
            }
        };
        z[k] = t;
        Ok(self.finish(to_x(&z), mu))
    }
}
