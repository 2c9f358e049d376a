//! Primal network simplex for the uncapacitated transportation problem.
//!
//! Nodes `0..m` are sources, `m..m+n` sinks and `m+n` an artificial root.
//! Arc `k < m*n` goes from source `k / n` to sink `k % n`; arc `m*n + v`
//! joins node `v` to the root. The spanning tree is kept strongly feasible
//! (zero-flow tree arcs point away from the root), which rules out cycling.

use crate::error::{Error, Result};

const UP: bool = true; // tree arc points from the node to its parent
const DOWN: bool = false;

pub(crate) struct Solution {
    /// Flow on the `m * n` transport arcs, row-major.
    pub flow: Vec<f64>,
    pub cost: f64,
}

struct Tree {
    parent: Vec<usize>,
    pred: Vec<usize>,
    dir: Vec<bool>,
    depth: Vec<usize>,
    children: Vec<Vec<usize>>,
    pi: Vec<f64>,
}

/// Solve `min sum c_ij x_ij` subject to row sums `a`, column sums `b`,
/// `x >= 0`. `a` and `b` must be strictly positive with equal totals (up to
/// rounding). `cost` is row-major `m x n`.
pub(crate) fn solve(a: &[f64], b: &[f64], cost: &[f64], max_pivots: usize) -> Result<Solution> {
    let m = a.len();
    let n = b.len();
    debug_assert_eq!(cost.len(), m * n);
    let nodes = m + n;
    let root = nodes;
    let n_arcs = m * n;
    let max_cost = cost.iter().fold(0.0_f64, |acc, &c| acc.max(c.abs()));
    let art = (max_cost + 1.0) * (nodes as f64 + 1.0);
    let eps = 1e-13 * art;

    let arc_cost = |e: usize| -> f64 {
        if e < n_arcs {
            cost[e]
        } else if e - n_arcs < m {
            0.0
        } else {
            art
        }
    };
    let arc_ends = |e: usize| -> (usize, usize) {
        if e < n_arcs {
            (e / n, m + e % n)
        } else {
            let v = e - n_arcs;
            if v < m {
                (v, root)
            } else {
                (root, v)
            }
        }
    };

    let mut flow = vec![0.0; n_arcs + nodes];
    let mut t = Tree {
        parent: vec![root; nodes + 1],
        pred: vec![usize::MAX; nodes + 1],
        dir: vec![UP; nodes + 1],
        depth: vec![1; nodes + 1],
        children: vec![Vec::new(); nodes + 1],
        pi: vec![0.0; nodes + 1],
    };
    t.depth[root] = 0;
    for v in 0..nodes {
        let e = n_arcs + v;
        t.pred[v] = e;
        t.children[root].push(v);
        if v < m {
            t.dir[v] = UP;
            flow[e] = a[v];
            t.pi[v] = 0.0;
        } else {
            t.dir[v] = DOWN;
            flow[e] = b[v - m];
            t.pi[v] = art;
        }
    }

    let block = ((n_arcs as f64).sqrt().ceil() as usize).max(10).min(n_arcs.max(1));
    let mut next_arc = 0usize;
    let mut pivots = 0usize;
    let mut path_first = Vec::new();
    let mut path_second = Vec::new();

    loop {
        // Block search pricing over transport arcs.
        let mut best = (0.0, usize::MAX);
        let mut scanned = 0;
        let mut in_block = 0;
        while scanned < n_arcs {
            let e = next_arc;
            next_arc += 1;
            if next_arc == n_arcs {
                next_arc = 0;
            }
            let (u, v) = (e / n, m + e % n);
            let rc = cost[e] + t.pi[u] - t.pi[v];
            if rc < best.0 {
                best = (rc, e);
            }
            scanned += 1;
            in_block += 1;
            if in_block == block {
                if best.0 < -eps {
                    break;
                }
                in_block = 0;
            }
        }
        if best.0 >= -eps {
            break;
        }
        pivots += 1;
        if pivots > max_pivots {
            return Err(Error::PivotLimit(max_pivots));
        }
        let in_arc = best.1;
        let (first, second) = arc_ends(in_arc);

        // Join node and the two cycle paths.
        path_first.clear();
        path_second.clear();
        let (mut u, mut v) = (first, second);
        while u != v {
            if t.depth[u] >= t.depth[v] {
                path_first.push(u);
                u = t.parent[u];
            } else {
                path_second.push(v);
                v = t.parent[v];
            }
        }
        // Leaving arc: on ties the last candidate on the second path wins,
        // otherwise the first one found on the first path.
        let mut delta = f64::INFINITY;
        let mut u_out = usize::MAX;
        let mut out_on_first = true;
        for &x in &path_first {
            if t.dir[x] == UP {
                let d = flow[t.pred[x]];
                if d < delta {
                    delta = d;
                    u_out = x;
                    out_on_first = true;
                }
            }
        }
        for &x in &path_second {
            if t.dir[x] == DOWN {
                let d = flow[t.pred[x]];
                if d <= delta {
                    delta = d;
                    u_out = x;
                    out_on_first = false;
                }
            }
        }
        if u_out == usize::MAX {
            // Cannot happen for a balanced problem: the artificial arcs bound it.
            return Err(Error::InvalidParameter("unbounded transport problem".into()));
        }

        // Augment.
        if delta > 0.0 {
            flow[in_arc] += delta;
            for &x in &path_first {
                let e = t.pred[x];
                if t.dir[x] == UP {
                    flow[e] -= delta;
                } else {
                    flow[e] += delta;
                }
            }
            for &x in &path_second {
                let e = t.pred[x];
                if t.dir[x] == UP {
                    flow[e] += delta;
                } else {
                    flow[e] -= delta;
                }
            }
        }
        flow[t.pred[u_out]] = 0.0;

        // Re-hang the detached subtree from the entering arc.
        let (u_in, v_in) = if out_on_first { (first, second) } else { (second, first) };
        let rc = arc_cost(in_arc) + t.pi[first] - t.pi[second];
        let shift = if u_in == first { -rc } else { rc };

        let old_parent_of_out = t.parent[u_out];
        remove_child(&mut t.children[old_parent_of_out], u_out);
        // Path u_in = x0, x1, ..., xk = u_out.
        let mut chain = vec![u_in];
        while *chain.last().unwrap() != u_out {
            let x = *chain.last().unwrap();
            chain.push(t.parent[x]);
        }
        for i in (0..chain.len() - 1).rev() {
            let (x, up) = (chain[i], chain[i + 1]);
            remove_child(&mut t.children[up], x);
            t.parent[up] = x;
            t.pred[up] = t.pred[x];
            t.dir[up] = !t.dir[x];
            t.children[x].push(up);
        }
        t.parent[u_in] = v_in;
        t.pred[u_in] = in_arc;
        t.dir[u_in] = if arc_ends(in_arc).0 == u_in { UP } else { DOWN };
        t.children[v_in].push(u_in);

        // Depths and potentials of the moved subtree.
        let mut stack = vec![u_in];
        while let Some(x) = stack.pop() {
            t.depth[x] = t.depth[t.parent[x]] + 1;
            t.pi[x] += shift;
            stack.extend_from_slice(&t.children[x]);
        }
    }

    let transport_flow: Vec<f64> = flow[..n_arcs].to_vec();
    let cost_value = transport_flow.iter().zip(cost).map(|(f, c)| f * c).sum();
    Ok(Solution {
        flow: transport_flow,
        cost: cost_value,
    })
}

fn remove_child(list: &mut Vec<usize>, x: usize) {
    if let Some(pos) = list.iter().position(|&c| c == x) {
        list.swap_remove(pos);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_picks_cheaper_matching() {
        let s = solve(&[1.0, 1.0], &[1.0, 1.0], &[1.0, 5.0, 5.0, 1.0], 100).unwrap();
        assert!((s.cost - 2.0).abs() < 1e-12);
        assert_eq!(s.flow, vec![1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn unequal_weights_split_mass() {
        // One source feeding two sinks.
        let s = solve(&[3.0], &[1.0, 2.0], &[2.0, 1.0], 100).unwrap();
        assert!((s.cost - 4.0).abs() < 1e-12);
    }

    #[test]
    fn pivot_cap_is_enforced() {
        let r = solve(&[1.0, 1.0], &[1.0, 1.0], &[1.0, 5.0, 5.0, 1.0], 0);
        assert!(matches!(r, Err(Error::PivotLimit(0))));
    }
}
