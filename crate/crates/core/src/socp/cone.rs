//! Cone arithmetic for the product of a nonnegative orthant and a list of
//! second-order cones, including Nesterov-Todd scaling.

use super::linalg::dot;

/// Layout of a cone vector: `orth` orthant entries followed by the SOC blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Cones {
    pub orth: usize,
    pub socs: Vec<usize>,
}

impl Cones {
    pub fn dim(&self) -> usize {
        self.orth + self.socs.iter().sum::<usize>()
    }

    /// Barrier degree: one per orthant entry and one per SOC.
    pub fn degree(&self) -> usize {
        self.orth + self.socs.len()
    }

    /// Start offsets of the SOC blocks.
    pub fn soc_ranges(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        let mut off = self.orth;
        self.socs.iter().map(move |&d| {
            let r = off..off + d;
            off += d;
            r
        })
    }

    pub fn identity(&self) -> Vec<f64> {
        let mut e = vec![0.0; self.dim()];
        e[..self.orth].fill(1.0);
        for r in self.soc_ranges() {
            e[r.start] = 1.0;
        }
        e
    }

    /// Smallest "eigenvalue": min over orthant entries and `u0 - |u1|` over blocks.
    pub fn min_eig(&self, u: &[f64]) -> f64 {
        let mut m = u[..self.orth].iter().copied().fold(f64::INFINITY, f64::min);
        for r in self.soc_ranges() {
            let b = &u[r];
            m = m.min(b[0] - norm2(&b[1..]));
        }
        m
    }

    /// Euclidean distance bound to the cone (exact per block).
    pub fn dist(&self, u: &[f64]) -> f64 {
        let mut d: f64 = u[..self.orth].iter().map(|v| (-v).max(0.0)).fold(0.0, f64::max);
        for r in self.soc_ranges() {
            d = d.max(soc_dist(&u[r]));
        }
        d
    }

    /// `u o v`.
    pub fn jordan(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let mut w = vec![0.0; u.len()];
        for i in 0..self.orth {
            w[i] = u[i] * v[i];
        }
        for r in self.soc_ranges() {
            let (a, b) = (&u[r.clone()], &v[r.clone()]);
            let out = &mut w[r];
            out[0] = dot(a, b);
            for k in 1..a.len() {
                out[k] = a[0] * b[k] + b[0] * a[k];
            }
        }
        w
    }

    /// Solves `lambda o v = w` for `v`.
    pub fn jordan_div(&self, lambda: &[f64], w: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; w.len()];
        for i in 0..self.orth {
            v[i] = w[i] / lambda[i];
        }
        for r in self.soc_ranges() {
            let (l, b) = (&lambda[r.clone()], &w[r.clone()]);
            let out = &mut v[r];
            let det = l[0] * l[0] - dot(&l[1..], &l[1..]);
            let v0 = (l[0] * b[0] - dot(&l[1..], &b[1..])) / det;
            out[0] = v0;
            for k in 1..l.len() {
                out[k] = (b[k] - v0 * l[k]) / l[0];
            }
        }
        v
    }

    /// Largest `a` with `u + a du` in the cone (infinite if unbounded).
    pub fn max_step(&self, u: &[f64], du: &[f64]) -> f64 {
        let mut a = f64::INFINITY;
        for i in 0..self.orth {
            if du[i] < 0.0 {
                a = a.min(-u[i] / du[i]);
            }
        }
        for r in self.soc_ranges() {
            a = a.min(soc_max_step(&u[r.clone()], &du[r]));
        }
        a
    }
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn soc_dist(b: &[f64]) -> f64 {
    let t = b[0];
    let r = norm2(&b[1..]);
    if r <= t {
        0.0
    } else if r <= -t {
        (t * t + r * r).sqrt()
    } else {
        (r - t) / std::f64::consts::SQRT_2
    }
}

/// `J`-norm squared `u0^2 - |u1|^2`.
fn jdot(u: &[f64], v: &[f64]) -> f64 {
    u[0] * v[0] - dot(&u[1..], &v[1..])
}

fn soc_max_step(u: &[f64], d: &[f64]) -> f64 {
    // f(a) = qa a^2 + 2 qb a + qc, first positive root.
    let qa = jdot(d, d);
    let qb = jdot(u, d);
    let qc = jdot(u, u).max(0.0);
    let scale = d[0].abs() + norm2(&d[1..]);
    if scale == 0.0 {
        return f64::INFINITY;
    }
    let disc = qb * qb - qa * qc;
    let mut best = f64::INFINITY;
    if qa.abs() <= 1e-14 * scale * scale {
        if qb < 0.0 {
            best = -qc / (2.0 * qb);
        }
    } else if disc >= 0.0 {
        let sq = disc.sqrt();
        let q = -(qb + qb.signum() * sq);
        for r in [q / qa, if q != 0.0 { qc / q } else { f64::INFINITY }] {
            if r > 0.0 && r < best {
                best = r;
            }
        }
    }
    // The line may also leave through the apex side (u0 + a d0 < 0).
    if d[0] < 0.0 {
        best = best.min(-u[0] / d[0]);
    }
    best
}

/// Nesterov-Todd scaling point for one SOC block.
#[derive(Debug, Clone)]
struct SocScaling {
    beta: f64,
    wbar: Vec<f64>,
}

impl SocScaling {
    fn apply(&self, v: &[f64], out: &mut [f64], inverse: bool) {
        let w = &self.wbar;
        let sgn = if inverse { -1.0 } else { 1.0 };
        let b = if inverse { 1.0 / self.beta } else { self.beta };
        let w1v1 = dot(&w[1..], &v[1..]);
        out[0] = b * (w[0] * v[0] + sgn * w1v1);
        let coef = sgn * v[0] + w1v1 / (1.0 + w[0]);
        for k in 1..v.len() {
            out[k] = b * (v[k] + coef * w[k]);
        }
    }
}

/// Scaling `W` with `W z = W^-1 s = lambda`.
#[derive(Debug, Clone)]
pub(crate) struct Scaling {
    orth: Vec<f64>,
    socs: Vec<SocScaling>,
    pub lambda: Vec<f64>,
}

impl Scaling {
    pub fn new(cones: &Cones, s: &[f64], z: &[f64]) -> Self {
        let orth: Vec<f64> = (0..cones.orth).map(|i| (s[i] / z[i]).sqrt()).collect();
        let mut socs = Vec::with_capacity(cones.socs.len());
        for r in cones.soc_ranges() {
            let (sb, zb) = (&s[r.clone()], &z[r]);
            let sn = jdot(sb, sb).max(f64::MIN_POSITIVE).sqrt();
            let zn = jdot(zb, zb).max(f64::MIN_POSITIVE).sqrt();
            let sbar: Vec<f64> = sb.iter().map(|v| v / sn).collect();
            let zbar: Vec<f64> = zb.iter().map(|v| v / zn).collect();
            let gamma = ((1.0 + dot(&sbar, &zbar)) / 2.0).sqrt();
            let mut wbar = vec![0.0; sb.len()];
            wbar[0] = (sbar[0] + zbar[0]) / (2.0 * gamma);
            for k in 1..sb.len() {
                wbar[k] = (sbar[k] - zbar[k]) / (2.0 * gamma);
            }
            // Re-normalize so that wbar^T J wbar = 1 exactly.
            let tail = dot(&wbar[1..], &wbar[1..]);
            wbar[0] = (1.0 + tail).sqrt();
            socs.push(SocScaling {
                beta: (sn / zn).sqrt(),
                wbar,
            });
        }
        let mut sc = Self {
            orth,
            socs,
            lambda: Vec::new(),
        };
        sc.lambda = sc.apply_w(cones, z);
        sc
    }

    fn apply(&self, cones: &Cones, v: &[f64], inverse: bool) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for i in 0..cones.orth {
            out[i] = if inverse { v[i] / self.orth[i] } else { v[i] * self.orth[i] };
        }
        for (r, sc) in cones.soc_ranges().zip(&self.socs) {
            sc.apply(&v[r.clone()], &mut out[r], inverse);
        }
        out
    }

    pub fn apply_w(&self, cones: &Cones, v: &[f64]) -> Vec<f64> {
        self.apply(cones, v, false)
    }

    pub fn apply_winv(&self, cones: &Cones, v: &[f64]) -> Vec<f64> {
        self.apply(cones, v, true)
    }

    pub fn apply_w2(&self, cones: &Cones, v: &[f64]) -> Vec<f64> {
        let t = self.apply_w(cones, v);
        self.apply_w(cones, &t)
    }

    pub fn apply_winv2(&self, cones: &Cones, v: &[f64]) -> Vec<f64> {
        let t = self.apply_winv(cones, v);
        self.apply_winv(cones, &t)
    }

    /// Orthant weights `z_i / s_i` (the diagonal of `W^-2`).
    pub fn orth_winv2(&self, i: usize) -> f64 {
        1.0 / (self.orth[i] * self.orth[i])
    }

    /// For SOC block `k`: `W^-2 = beta^-2 (2 w w^T - J)` with `w = J wbar`.
    pub fn soc_winv2_parts(&self, k: usize) -> (f64, Vec<f64>) {
        let sc = &self.socs[k];
        let mut w = sc.wbar.clone();
        for v in &mut w[1..] {
            *v = -*v;
        }
        (1.0 / (sc.beta * sc.beta), w)
    }
}
