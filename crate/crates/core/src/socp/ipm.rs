//! Homogeneous self-dual interior-point iteration.
//!
//! The embedding keeps `(x, y, z, s, tau, kappa)` with
//!
//! ```text
//! 0     =  A^T y + G^T z + c tau
//! 0     = -A x + b tau
//! s     = -G x + h tau
//! kappa = -c^T x - b^T y - h^T z
//! ```
//!
//! Search directions use Nesterov-Todd scaling and a Mehrotra
//! predictor-corrector. Each Newton system is reduced to the normal
//! equations `(G^T W^-2 G) dx + A^T dy = r` and factored densely.

use super::cone::Scaling;
use super::linalg::{cholesky_in_place, cholesky_solve, dot, norm_inf};
use super::{KktResiduals, SolveStatus, SolverOptions, StandardForm};

pub(crate) struct RawSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub residuals: KktResiduals,
    pub iterations: usize,
}

const STEP_FACTOR: f64 = 0.99;
const REFINE_STEPS: usize = 8;
/// Iterations without halving the merit before giving up.
const STALL_ITERS: usize = 8;

/// Factored reduced KKT matrix for one scaling.
struct Kkt<'a> {
    sf: &'a StandardForm,
    w: Scaling,
    /// Cholesky factor of `H + delta I`.
    hfac: Vec<f64>,
    /// Cholesky factor of `A H^-1 A^T` (empty without equalities).
    sfac: Vec<f64>,
    /// `H^-1 A^T`, column-major by equality row.
    hinv_at: Vec<Vec<f64>>,
}

impl<'a> Kkt<'a> {
    fn new(sf: &'a StandardForm, w: Scaling) -> Self {
        let n = sf.c.len();
        let cones = &sf.cones;
        let mut h = vec![0.0; n * n];
        for i in 0..cones.orth {
            let wi = w.orth_winv2(i);
            let (idx, val) = sf.g.row(i);
            for (p, &j) in idx.iter().enumerate() {
                for (q, &k) in idx.iter().enumerate() {
                    if k <= j {
                        h[j * n + k] += wi * val[p] * val[q];
                    }
                }
            }
        }
        for (blk, r) in cones.soc_ranges().enumerate() {
            let (f, ww) = w.soc_winv2_parts(blk);
            // H += f (2 v v^T - g0 g0^T + sum gi gi^T), v = G_blk^T w
            let mut v_idx: Vec<usize> = Vec::new();
            let mut v_val: Vec<f64> = Vec::new();
            for (k, row) in r.clone().enumerate() {
                let (idx, val) = sf.g.row(row);
                let sign = if k == 0 { -1.0 } else { 1.0 };
                for (p, &j) in idx.iter().enumerate() {
                    for (q, &l) in idx.iter().enumerate() {
                        if l <= j {
                            h[j * n + l] += f * sign * val[p] * val[q];
                        }
                    }
                    match v_idx.iter().position(|&m| m == j) {
                        Some(pos) => v_val[pos] += ww[k] * val[p],
                        None => {
                            v_idx.push(j);
                            v_val.push(ww[k] * val[p]);
                        }
                    }
                }
            }
            for (p, &j) in v_idx.iter().enumerate() {
                for (q, &l) in v_idx.iter().enumerate() {
                    if l <= j {
                        h[j * n + l] += 2.0 * f * v_val[p] * v_val[q];
                    }
                }
            }
        }
        let dmax = (0..n).map(|j| h[j * n + j]).fold(1.0, f64::max);
        let delta = 1e-13 * dmax;
        cholesky_in_place(&mut h, n, delta.max(1e-300));

        let p = sf.a.nrows();
        let mut hinv_at = Vec::with_capacity(p);
        for i in 0..p {
            let mut col = vec![0.0; n];
            let (idx, val) = sf.a.row(i);
            for (&j, &v) in idx.iter().zip(val) {
                col[j] += v;
            }
            cholesky_solve(&h, n, &mut col);
            hinv_at.push(col);
        }
        let mut s = vec![0.0; p * p];
        for i in 0..p {
            for k in 0..=i {
                s[i * p + k] = sf.a.row_dot(i, &hinv_at[k]);
            }
        }
        if p > 0 {
            let smax = (0..p).map(|i| s[i * p + i]).fold(1e-300, f64::max);
            for i in 0..p {
                s[i * p + i] += 1e-13 * smax;
            }
            cholesky_in_place(&mut s, p, 1e-14 * smax);
        }
        Self {
            sf,
            w,
            hfac: h,
            sfac: s,
            hinv_at,
        }
    }

    /// One approximate solve of
    /// `[0 A^T G^T; -A 0 0; -G 0 W^2] (x, y, z) = (r1, r2, r3)`.
    fn solve_once(&self, r1: &[f64], r2: &[f64], r3: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let sf = self.sf;
        let n = r1.len();
        let p = r2.len();
        let cones = &sf.cones;
        let wr3 = self.w.apply_winv2(cones, r3);
        let mut f = r1.to_vec();
        let gt = sf.g.mul_t(&wr3);
        for j in 0..n {
            f[j] -= gt[j];
        }
        let mut x = f.clone();
        cholesky_solve(&self.hfac, n, &mut x);
        let mut y = vec![0.0; p];
        if p > 0 {
            // (A H^-1 A^T) y = A H^-1 f + r2
            for i in 0..p {
                y[i] = sf.a.row_dot(i, &x) + r2[i];
            }
            cholesky_solve(&self.sfac, p, &mut y);
            for i in 0..p {
                for j in 0..n {
                    x[j] -= self.hinv_at[i][j] * y[i];
                }
            }
        }
        let gx = sf.g.mul(&x);
        let t: Vec<f64> = r3.iter().zip(&gx).map(|(a, b)| a + b).collect();
        let z = self.w.apply_winv2(cones, &t);
        (x, y, z)
    }

    fn apply(&self, x: &[f64], y: &[f64], z: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let sf = self.sf;
        let mut o1 = sf.a.mul_t(y);
        sf.g.mul_t_add(z, &mut o1);
        let o2: Vec<f64> = sf.a.mul(x).iter().map(|v| -v).collect();
        let w2z = self.w.apply_w2(&sf.cones, z);
        let gx = sf.g.mul(x);
        let o3 = w2z.iter().zip(&gx).map(|(a, b)| a - b).collect();
        (o1, o2, o3)
    }

    fn solve(&self, r1: &[f64], r2: &[f64], r3: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (mut x, mut y, mut z) = self.solve_once(r1, r2, r3);
        for _ in 0..REFINE_STEPS {
            let (a1, a2, a3) = self.apply(&x, &y, &z);
            let e1: Vec<f64> = r1.iter().zip(&a1).map(|(r, a)| r - a).collect();
            let e2: Vec<f64> = r2.iter().zip(&a2).map(|(r, a)| r - a).collect();
            let e3: Vec<f64> = r3.iter().zip(&a3).map(|(r, a)| r - a).collect();
            let err = norm_inf(&e1).max(norm_inf(&e2)).max(norm_inf(&e3));
            let scale = 1.0 + norm_inf(r1).max(norm_inf(r2)).max(norm_inf(r3));
            if err <= 1e-14 * scale {
                break;
            }
            let (dx, dy, dz) = self.solve_once(&e1, &e2, &e3);
            axpy(1.0, &dx, &mut x);
            axpy(1.0, &dy, &mut y);
            axpy(1.0, &dz, &mut z);
        }
        (x, y, z)
    }
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

struct Direction {
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    s: Vec<f64>,
    tau: f64,
    kappa: f64,
}

struct Iterate {
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    s: Vec<f64>,
    tau: f64,
    kappa: f64,
}

/// Shifts `u` into the interior of the cone.
fn shift_into_cone(sf: &StandardForm, u: &mut [f64]) {
    let cones = &sf.cones;
    let m = cones.min_eig(u);
    let e = cones.identity();
    let shift = if m <= 0.0 { 1.0 - m } else { 0.0 };
    axpy(shift, &e, u);
}

pub(crate) fn solve(sf: &StandardForm, opts: &SolverOptions) -> RawSolution {
    let n = sf.c.len();
    let p = sf.b.len();
    let m = sf.h.len();
    let cones = &sf.cones;
    let e = cones.identity();

    // Initial point from two least-squares solves with W = I.
    let ident = Scaling::new(cones, &e, &e);
    let kkt0 = Kkt::new(sf, ident);
    let neg_b: Vec<f64> = sf.b.iter().map(|v| -v).collect();
    let neg_h: Vec<f64> = sf.h.iter().map(|v| -v).collect();
    let (x0, _, zp) = kkt0.solve(&vec![0.0; n], &neg_b, &neg_h);
    let mut s0: Vec<f64> = zp.iter().map(|v| -v).collect();
    let neg_c: Vec<f64> = sf.c.iter().map(|v| -v).collect();
    let (_, y0, mut z0) = kkt0.solve(&neg_c, &vec![0.0; p], &vec![0.0; m]);
    shift_into_cone(sf, &mut s0);
    shift_into_cone(sf, &mut z0);
    let mut it = Iterate {
        x: x0,
        y: y0,
        z: z0,
        s: s0,
        tau: 1.0,
        kappa: 1.0,
    };

    let scale_p = 1.0 + norm_inf(&sf.b).max(norm_inf(&sf.h));
    let scale_d = 1.0 + norm_inf(&sf.c);
    let degree = cones.degree() as f64 + 1.0;
    let tol = opts.tol;

    let mut best: Option<(f64, RawSolution)> = None;
    // Last merit that halved its predecessor, and when.
    let mut progress = (f64::INFINITY, 0);
    let mut iter = 0;
    loop {
        // Residuals of the embedding.
        let mut rx = sf.a.mul_t(&it.y);
        sf.g.mul_t_add(&it.z, &mut rx);
        axpy(it.tau, &sf.c, &mut rx);
        let ax = sf.a.mul(&it.x);
        let ry: Vec<f64> = ax.iter().zip(&sf.b).map(|(a, b)| -a + b * it.tau).collect();
        let gx = sf.g.mul(&it.x);
        let rz: Vec<f64> = (0..m).map(|i| -gx[i] + sf.h[i] * it.tau - it.s[i]).collect();
        let cx = dot(&sf.c, &it.x);
        let by = dot(&sf.b, &it.y);
        let hz = dot(&sf.h, &it.z);
        let rt = -cx - by - hz - it.kappa;

        // Optimality test on the recovered point.
        let xs: Vec<f64> = it.x.iter().map(|v| v / it.tau).collect();
        let ys: Vec<f64> = it.y.iter().map(|v| v / it.tau).collect();
        let zs: Vec<f64> = it.z.iter().map(|v| v / it.tau).collect();
        let res = sf.residuals(&xs, &ys, &zs);
        let merit = res.primal.max(res.dual).max(res.rel_gap.min(res.gap));
        if res.within(tol) {
            return RawSolution {
                status: SolveStatus::Optimal,
                x: xs,
                y: ys,
                z: zs,
                residuals: res,
                iterations: iter,
            };
        }
        if !merit.is_finite() {
            break;
        }
        if merit < 0.5 * progress.0 {
            progress = (merit, iter);
        } else if iter - progress.1 >= STALL_ITERS {
            break;
        }
        if best.as_ref().is_none_or(|(b, _)| merit < *b) {
            best = Some((
                merit,
                RawSolution {
                    status: SolveStatus::IterLimit,
                    x: xs,
                    y: ys,
                    z: zs,
                    residuals: res,
                    iterations: iter,
                },
            ));
        }

        // Infeasibility certificates.
        let dual_ray = -(by + hz);
        if dual_ray > 0.0 {
            let mut r = sf.a.mul_t(&it.y);
            sf.g.mul_t_add(&it.z, &mut r);
            if norm_inf(&r) / dual_ray <= tol * scale_d.max(1.0) && it.tau < it.kappa {
                let mut out = best.take().unwrap().1;
                out.status = SolveStatus::Infeasible;
                out.x = vec![f64::NAN; n];
                out.y = it.y.iter().map(|v| v / dual_ray).collect();
                out.z = it.z.iter().map(|v| v / dual_ray).collect();
                out.iterations = iter;
                return out;
            }
        }
        if -cx > 0.0 {
            let gxs: Vec<f64> = (0..m).map(|i| gx[i] + it.s[i]).collect();
            let pr = norm_inf(&ax).max(norm_inf(&gxs));
            if pr / -cx <= tol * scale_p.max(1.0) && it.tau < it.kappa {
                let mut out = best.take().unwrap().1;
                out.status = SolveStatus::Unbounded;
                out.x = it.x.iter().map(|v| v / -cx).collect();
                out.iterations = iter;
                return out;
            }
        }

        if iter >= opts.max_iters {
            break;
        }
        iter += 1;

        let w = Scaling::new(cones, &it.s, &it.z);
        let lambda = w.lambda.clone();
        let mu = (dot(&it.s, &it.z) + it.tau * it.kappa) / degree;
        let kkt = Kkt::new(sf, w);
        let neg_h: Vec<f64> = sf.h.iter().map(|v| -v).collect();
        let (vx, vy, vz) = kkt.solve(&neg_c, &neg_b, &neg_h);
        let v_dot = dot(&sf.c, &vx) + dot(&sf.b, &vy) + dot(&sf.h, &vz);

        let direction = |eta: f64, ds: &[f64], dk: f64| -> Direction {
            let psi: Vec<f64> = cones.jordan_div(&lambda, &ds.iter().map(|v| -v).collect::<Vec<_>>());
            let wpsi = kkt.w.apply_w(cones, &psi);
            let r1: Vec<f64> = rx.iter().map(|v| -eta * v).collect();
            let r2: Vec<f64> = ry.iter().map(|v| -eta * v).collect();
            let r3: Vec<f64> = (0..m).map(|i| -eta * rz[i] + wpsi[i]).collect();
            let (ux, uy, uz) = kkt.solve(&r1, &r2, &r3);
            let u_dot = dot(&sf.c, &ux) + dot(&sf.b, &uy) + dot(&sf.h, &uz);
            let dtau = (eta * rt - u_dot + dk / it.tau) / (v_dot - it.kappa / it.tau);
            let mut dx = ux;
            axpy(dtau, &vx, &mut dx);
            let mut dy = uy;
            axpy(dtau, &vy, &mut dy);
            let mut dz = uz;
            axpy(dtau, &vz, &mut dz);
            let w2dz = kkt.w.apply_w2(cones, &dz);
            let dsv: Vec<f64> = (0..m).map(|i| wpsi[i] - w2dz[i]).collect();
            let dkappa = (-dk - it.kappa * dtau) / it.tau;
            Direction {
                x: dx,
                y: dy,
                z: dz,
                s: dsv,
                tau: dtau,
                kappa: dkappa,
            }
        };
        let step_len = |d: &Direction| -> f64 {
            let mut a = cones.max_step(&it.s, &d.s).min(cones.max_step(&it.z, &d.z));
            if d.tau < 0.0 {
                a = a.min(-it.tau / d.tau);
            }
            if d.kappa < 0.0 {
                a = a.min(-it.kappa / d.kappa);
            }
            a
        };

        // Predictor.
        let ll = cones.jordan(&lambda, &lambda);
        let aff = direction(1.0, &ll, it.tau * it.kappa);
        let a_aff = step_len(&aff).min(1.0);
        let sigma = (1.0 - a_aff).powi(3).clamp(0.0, 1.0);

        // Corrector.
        let ws = kkt.w.apply_winv(cones, &aff.s);
        let wz = kkt.w.apply_w(cones, &aff.z);
        let cross = cones.jordan(&ws, &wz);
        let ds: Vec<f64> = (0..m).map(|i| ll[i] + cross[i] - sigma * mu * e[i]).collect();
        let dk = it.tau * it.kappa + aff.tau * aff.kappa - sigma * mu;
        let dir = direction(1.0 - sigma, &ds, dk);
        let alpha = (STEP_FACTOR * step_len(&dir)).min(1.0);
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !(alpha > 0.0)
            || !alpha.is_finite()
            || !(finite(&dir.x) && finite(&dir.y) && finite(&dir.z) && finite(&dir.s))
            || !(dir.tau.is_finite() && dir.kappa.is_finite())
        {
            break;
        }
        axpy(alpha, &dir.x, &mut it.x);
        axpy(alpha, &dir.y, &mut it.y);
        axpy(alpha, &dir.z, &mut it.z);
        axpy(alpha, &dir.s, &mut it.s);
        it.tau += alpha * dir.tau;
        it.kappa += alpha * dir.kappa;
        if cones.min_eig(&it.s) <= 0.0 || cones.min_eig(&it.z) <= 0.0 || it.tau <= 0.0 {
            break;
        }
    }
    let mut out = best.unwrap().1;
    out.status = SolveStatus::IterLimit;
    out.iterations = iter;
    out
}
