//! Shared generators and oracles for the integration tests.
#![allow(dead_code)]

pub mod pdd_oracle;
pub mod toy;

use laser_relay::socp::{ConicProgram, LinExpr};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random SOCP that is strictly feasible (around a random interior point)
/// and bounded (box on every variable).
pub fn random_socp(seed: u64, max_vars: usize) -> ConicProgram {
    let mut r = rng(seed);
    let n = r.random_range(3..=max_vars);
    let x0: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
    let mut cp = ConicProgram::new(n);
    for j in 0..n {
        cp.objective[j] = r.random_range(-1.0..1.0);
        cp.lower[j] = -10.0;
        cp.upper[j] = 10.0;
    }
    let sparse_expr = |r: &mut ChaCha8Rng| {
        let mut e = LinExpr::new();
        let k = r.random_range(1..=n.min(6));
        for _ in 0..k {
            e.push(r.random_range(0..n), r.random_range(-1.0..1.0));
        }
        e
    };
    for _ in 0..r.random_range(0..=n / 2) {
        let e = sparse_expr(&mut r);
        let v = e.eval(&x0);
        cp.add_le(e.plus(-v - r.random_range(0.1..1.0)), "lin");
    }
    for _ in 0..r.random_range(0..=2.min(n / 3)) {
        let e = sparse_expr(&mut r);
        let v = e.eval(&x0);
        cp.add_eq(e.plus(-v), "eq");
    }
    for _ in 0..r.random_range(1..=n / 2 + 1) {
        let d = r.random_range(2..=5);
        let u: Vec<LinExpr> = (0..d - 1)
            .map(|_| {
                let e = sparse_expr(&mut r);
                let c = r.random_range(-1.0..1.0);
                e.plus(c)
            })
            .collect();
        let norm = u.iter().map(|e| e.eval(&x0).powi(2)).sum::<f64>().sqrt();
        let t = sparse_expr(&mut r);
        let tv = t.eval(&x0);
        let t = t.plus(norm - tv + r.random_range(0.1..1.0));
        cp.add_soc(t, u, "soc");
    }
    cp
}
