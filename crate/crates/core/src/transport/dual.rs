//! Kantorovich-Rubinstein dual for W1 through min-cost transshipment.
//!
//! Atoms of both measures are merged into one node set carrying the net
//! supply `mu - nu`. Successive shortest paths (Dijkstra on reduced costs)
//! route the supply over the complete graph with cost `d(x, y)`; the final
//! node potentials give a 1-Lipschitz test function.

use serde::{Deserialize, Serialize};

use super::{check_masses, DiscreteMeasure};
use crate::error::Result;
use crate::field::torus_distance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    pub points: Vec<[f64; 2]>,
    pub values: Vec<f64>,
    /// Largest `|z(x) - z(y)| / d(x, y)` over all pairs, after certification.
    pub lipschitz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualCertificate {
    /// `sum (mu - nu) z`, a lower bound on W1.
    pub lower_bound: f64,
    pub potential: Potential,
}

/// Maximize `sum (mu - nu) z` over 1-Lipschitz `z` on the union support.
pub fn w1_dual(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<DualCertificate> {
    check_masses(mu, nu)?;
    let length = mu.length();
    let rescale = if nu.total_mass() > 0.0 {
        mu.total_mass() / nu.total_mass()
    } else {
        1.0
    };

    // Union support with net supply; coincident atoms are merged.
    let mut points: Vec<[f64; 2]> = Vec::new();
    let mut supply: Vec<f64> = Vec::new();
    let mut add = |p: [f64; 2], w: f64| {
        if w == 0.0 {
            return;
        }
        match points.iter().position(|q| torus_distance(length, *q, p) == 0.0) {
            Some(k) => supply[k] += w,
            None => {
                points.push(p);
                supply.push(w);
            }
        }
    };
    for (p, w) in mu.points().iter().zip(mu.weights()) {
        add(*p, *w);
    }
    for (p, w) in nu.points().iter().zip(nu.weights()) {
        add(*p, -w * rescale);
    }
    let k = points.len();
    if k == 0 {
        return Ok(DualCertificate {
            lower_bound: 0.0,
            potential: Potential {
                points,
                values: Vec::new(),
                lipschitz: 0.0,
            },
        });
    }
    let dist: Vec<f64> = (0..k * k)
        .map(|e| torus_distance(length, points[e / k], points[e % k]))
        .collect();
    let total: f64 = supply.iter().filter(|s| **s > 0.0).sum();
    let stop = 1e-14 * total.max(f64::MIN_POSITIVE);

    let mut excess = supply.clone();
    let mut flow = vec![0.0; k * k];
    let mut pi = vec![0.0; k];
    let mut d = vec![0.0; k];
    let mut prev = vec![usize::MAX; k];
    let mut back = vec![false; k];
    let mut done = vec![false; k];

    loop {
        let remaining: f64 = excess.iter().filter(|e| **e > stop).sum();
        if remaining <= stop {
            break;
        }
        // Multi-source dense Dijkstra from all excess nodes.
        for v in 0..k {
            d[v] = if excess[v] > stop { 0.0 } else { f64::INFINITY };
            prev[v] = usize::MAX;
            done[v] = false;
        }
        let mut target = usize::MAX;
        for _ in 0..k {
            let mut x = usize::MAX;
            for v in 0..k {
                if !done[v] && (x == usize::MAX || d[v] < d[x]) {
                    x = v;
                }
            }
            if x == usize::MAX || d[x] == f64::INFINITY {
                break;
            }
            done[x] = true;
            if excess[x] < -stop {
                target = x;
                break;
            }
            for y in 0..k {
                if done[y] || y == x {
                    continue;
                }
                let fwd = (dist[x * k + y] + pi[x] - pi[y]).max(0.0);
                let (mut rc, mut via_back) = (fwd, false);
                if flow[y * k + x] > 0.0 {
                    let bwd = (-dist[y * k + x] + pi[x] - pi[y]).max(0.0);
                    if bwd < rc {
                        rc = bwd;
                        via_back = true;
                    }
                }
                if d[x] + rc < d[y] {
                    d[y] = d[x] + rc;
                    prev[y] = x;
                    back[y] = via_back;
                }
            }
        }
        if target == usize::MAX {
            break;
        }
        let dt = d[target];
        for v in 0..k {
            pi[v] += d[v].min(dt);
        }
        // Bottleneck along the path.
        let mut delta = -excess[target];
        let mut v = target;
        while prev[v] != usize::MAX {
            let u = prev[v];
            if back[v] {
                delta = delta.min(flow[v * k + u]);
            }
            v = u;
        }
        delta = delta.min(excess[v]);
        let source = v;
        let mut v = target;
        while prev[v] != usize::MAX {
            let u = prev[v];
            if back[v] {
                flow[v * k + u] -= delta;
            } else {
                flow[u * k + v] += delta;
            }
            v = u;
        }
        excess[source] -= delta;
        excess[target] += delta;
    }

    // z = -pi satisfies z(x) - z(y) <= d(x, y) on residual arcs; certify
    // over all pairs and shrink if rounding broke the constraint.
    let mut z: Vec<f64> = pi.iter().map(|p| -p).collect();
    let mut lip = 0.0_f64;
    for x in 0..k {
        for y in x + 1..k {
            let dd = dist[x * k + y];
            if dd > 0.0 {
                lip = lip.max((z[x] - z[y]).abs() / dd);
            }
        }
    }
    if lip > 1.0 {
        z.iter_mut().for_each(|v| *v /= lip);
        lip = 1.0;
    }
    // Normalize the additive constant; the objective is unaffected because
    // the net supply sums to zero.
    let z_mean = z.iter().sum::<f64>() / k as f64;
    z.iter_mut().for_each(|v| *v -= z_mean);
    let lower_bound = supply.iter().zip(&z).map(|(s, v)| s * v).sum();
    Ok(DualCertificate {
        lower_bound,
        potential: Potential {
            points,
            values: z,
            lipschitz: lip,
        },
    })
}
