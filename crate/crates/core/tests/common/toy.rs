//! Four-slot scenario small enough for exhaustive search over quantized
//! trajectories and powers.

use laser_relay::evaluation::{check_feasibility, objective};
use laser_relay::scenario::{
    flying_energy, rate_source_to_uav, rate_uav_to_dest, received_laser_power_clamped, PowerSchedule, Scenario,
    Trajectory, Vec2,
};

pub fn toy_scenario(gamma: f64) -> Scenario {
    let mut sc = Scenario::nominal().with_weight(gamma);
    sc.n_slots = 4;
    sc.t_total = 16.0;
    sc.q_init = Vec2::new(420.0, 560.0);
    sc.q_final = Vec2::new(560.0, 560.0);
    sc.r_sum = 10.0;
    sc
}

/// Best quantized point and its objective.
pub struct GridOptimum {
    pub objective: f64,
    pub traj: Trajectory,
    pub pw: PowerSchedule,
    pub trajectories: usize,
}

fn disc(centre: Vec2, radius: f64, step: f64) -> Vec<Vec2> {
    let k = (radius / step).floor() as i64;
    let mut out = Vec::new();
    for a in -k..=k {
        for b in -k..=k {
            let p = Vec2::new(a as f64 * step, b as f64 * step);
            if p.norm() <= radius + 1e-9 {
                out.push(centre + p);
            }
        }
    }
    out
}

/// Best communication powers for a fixed trajectory:
/// `(f_ee, source powers, relay powers)`.
fn best_comm(q: &[Vec2], sc: &Scenario, levels: &[f64]) -> Option<(f64, [f64; 3], [f64; 3])> {
    let l = levels.len();
    // Source transmits in slots 0..3, relay in slots 1..4.
    let rs: Vec<Vec<f64>> = (0..3).map(|k| levels.iter().map(|&p| rate_source_to_uav(p, q[k], sc)).collect()).collect();
    let rr: Vec<Vec<f64>> =
        (1..4).map(|k| levels.iter().map(|&p| rate_uav_to_dest(p, q[k], sc)).collect()).collect();
    let fixed = sc.n_slots as f64 * sc.p_on;
    let mut best: Option<(f64, [f64; 3], [f64; 3])> = None;
    for a in 0..l {
        for b in 0..l {
            for c in 0..l {
                let s1 = rs[0][a];
                let s2 = s1 + rs[1][b];
                let s3 = s2 + rs[2][c];
                let ps = levels[a] + levels[b] + levels[c];
                for d in 0..l {
                    let r1 = rr[0][d];
                    if r1 > s1 {
                        continue;
                    }
                    for e in 0..l {
                        let r2 = r1 + rr[1][e];
                        if r2 > s2 {
                            continue;
                        }
                        for f in 0..l {
                            let r3 = r2 + rr[2][f];
                            if r3 > s3 || r3 < sc.r_sum {
                                continue;
                            }
                            let pr = levels[d] + levels[e] + levels[f];
                            let ee = r3 / (sc.upsilon_s * ps + sc.upsilon_r * pr + fixed);
                            if best.as_ref().is_none_or(|x| ee > x.0) {
                                best = Some((
                                    ee,
                                    [levels[a], levels[b], levels[c]],
                                    [levels[d], levels[e], levels[f]],
                                ));
                            }
                        }
                    }
                }
            }
        }
    }
    best
}

/// Best beacon powers for a fixed trajectory: `(f_pe, powers)`.
fn best_beacon(q: &[Vec2], sc: &Scenario, levels: &[f64]) -> Option<(f64, [f64; 4])> {
    let n = 4;
    let flight: Vec<f64> = (0..n)
        .map(|k| if k + 1 < n { flying_energy((q[k + 1] - q[k]) * (1.0 / sc.delta_t), sc) } else { 0.0 })
        .collect();
    let rx: Vec<Vec<f64>> =
        (0..n).map(|k| levels.iter().map(|&p| received_laser_power_clamped(p, q[k], sc)).collect()).collect();
    let l = levels.len();
    let mut best: Option<(f64, [f64; 4])> = None;
    let mut idx = [0usize; 4];
    loop {
        let mut level = sc.energy_budget;
        let mut ok = true;
        let (mut got, mut sent) = (0.0, 0.0);
        for k in 0..n {
            level += rx[k][idx[k]] * sc.delta_t - flight[k];
            if level < sc.energy_floor || level > sc.energy_budget {
                ok = false;
                break;
            }
            got += rx[k][idx[k]];
            sent += levels[idx[k]];
        }
        if ok {
            let pe = got / sent;
            if best.as_ref().is_none_or(|x| pe > x.0) {
                best = Some((pe, [levels[idx[0]], levels[idx[1]], levels[idx[2]], levels[idx[3]]]));
            }
        }
        let mut k = 0;
        while k < n {
            idx[k] += 1;
            if idx[k] < l {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == n {
            break;
        }
    }
    best
}

const LATTICE: f64 = 5.0;

/// Exhaustive search: interior waypoints on a 5 m lattice, communication
/// powers on zero plus nine geometric levels, beacon power on ten linear levels.
pub fn grid_optimum(sc: &Scenario) -> GridOptimum {
    assert_eq!(sc.n_slots, 4);
    let step = sc.v_max * sc.delta_t;
    let comm: Vec<f64> = std::iter::once(0.0).chain((0..9).map(|k| sc.p_max_s * 0.6f64.powi(8 - k))).collect();
    let beacon: Vec<f64> = (0..10).map(|k| sc.pb_min + (sc.pb_max - sc.pb_min) * k as f64 / 9.0).collect();
    let mut best: Option<GridOptimum> = None;
    let mut count = 0;
    for &q1 in &disc(sc.q_init, step, LATTICE) {
        for &q2 in &disc(sc.q_final, step, LATTICE) {
            if (q2 - q1).norm() > step + 1e-9 {
                continue;
            }
            count += 1;
            let q = [sc.q_init, q1, q2, sc.q_final];
            let (Some(c), Some(b)) = (best_comm(&q, sc, &comm), best_beacon(&q, sc, &beacon)) else {
                continue;
            };
            let value = c.0 + sc.gamma_weight * b.0;
            if best.as_ref().is_none_or(|x| value > x.objective) {
                best = Some(GridOptimum {
                    objective: value,
                    traj: Trajectory::new(q.to_vec()),
                    pw: PowerSchedule {
                        source: vec![c.1[0], c.1[1], c.1[2], 0.0],
                        relay: vec![0.0, c.2[0], c.2[1], c.2[2]],
                        beacon: b.1.to_vec(),
                    },
                    trajectories: 0,
                });
            }
        }
    }
    let mut best = best.expect("no feasible grid point");
    best.trajectories = count;
    // The winner must agree with the evaluation module.
    let rep = check_feasibility(&best.traj, &best.pw, sc, 1e-9).unwrap();
    assert!(rep.feasible, "grid optimum infeasible: {:?}", rep.worst());
    let m = objective(&best.traj, &best.pw, sc).unwrap();
    assert!((m.objective - best.objective).abs() < 1e-9 * best.objective.abs().max(1.0));
    best
}
