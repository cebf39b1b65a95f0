//! Exact discrete optimal transport via successive shortest augmenting paths.

use nalgebra::DMatrix;

use crate::error::{OegError, Result};

/// Exact earth mover's distance between two discrete distributions.
///
/// `supply` and `demand` must be nonnegative and sum to the same mass
/// (within 1e-9; they are renormalized internally). `cost[(i, j)]` is the
/// ground cost of moving one unit from supply atom `i` to demand atom `j`.
///
/// Min-cost flow on the complete bipartite graph with Johnson potentials;
/// every augmentation saturates a source or a sink, so at most `n + m`
/// Dijkstra passes run. Exact, but dense: meant for mixture sizes, not for
/// large point clouds.
pub fn emd(supply: &[f64], demand: &[f64], cost: &DMatrix<f64>) -> Result<f64> {
    let n = supply.len();
    let m = demand.len();
    if cost.nrows() != n || cost.ncols() != m {
        return Err(OegError::InvalidInput(format!(
            "cost matrix {}x{} does not match {n} supplies and {m} demands",
            cost.nrows(),
            cost.ncols()
        )));
    }
    if supply.iter().chain(demand).any(|&v| v < -1e-12) {
        return Err(OegError::InvalidInput("negative mass".into()));
    }
    let total_s: f64 = supply.iter().sum();
    let total_d: f64 = demand.iter().sum();
    if total_s <= 0.0 || total_d <= 0.0 {
        return Ok(0.0);
    }
    if ((total_s - total_d) / total_s.max(total_d)).abs() > 1e-9 {
        return Err(OegError::InvalidInput(format!(
            "unbalanced masses {total_s} vs {total_d}"
        )));
    }

    if cost.iter().any(|&c| c < 0.0) {
        return Err(OegError::InvalidInput(
            "ground costs must be nonnegative".into(),
        ));
    }

    let mut remaining_supply: Vec<f64> = supply.iter().map(|&v| v.max(0.0) / total_s).collect();
    let mut remaining_demand: Vec<f64> = demand.iter().map(|&v| v.max(0.0) / total_d).collect();
    // flow[(i, j)] currently shipped from i to j
    let mut flow = DMatrix::<f64>::zeros(n, m);
    // Johnson potentials: reduced cost of i -> j is c_ij + pi_i - pi_j >= 0
    let nodes = n + m;
    let mut pi = vec![0.0f64; nodes];

    const MASS_EPS: f64 = 1e-15;
    loop {
        let Some(src) = (0..n).find(|&i| remaining_supply[i] > MASS_EPS) else {
            break;
        };

        // Dijkstra from src over sources (0..n) and sinks (n..n+m)
        let mut dist = vec![f64::INFINITY; nodes];
        let mut prev = vec![usize::MAX; nodes];
        let mut done = vec![false; nodes];
        dist[src] = 0.0;
        loop {
            let mut best = usize::MAX;
            let mut best_d = f64::INFINITY;
            for v in 0..nodes {
                if !done[v] && dist[v] < best_d {
                    best_d = dist[v];
                    best = v;
                }
            }
            if best == usize::MAX {
                break;
            }
            done[best] = true;
            if best < n {
                let i = best;
                for j in 0..m {
                    let rc = cost[(i, j)] + pi[i] - pi[n + j];
                    let cand = dist[i] + rc.max(0.0);
                    if cand < dist[n + j] {
                        dist[n + j] = cand;
                        prev[n + j] = i;
                    }
                }
            } else {
                let j = best - n;
                for i in 0..n {
                    if flow[(i, j)] > MASS_EPS {
                        let rc = -cost[(i, j)] + pi[n + j] - pi[i];
                        let cand = dist[n + j] + rc.max(0.0);
                        if cand < dist[i] {
                            dist[i] = cand;
                            prev[i] = n + j;
                        }
                    }
                }
            }
        }

        // nearest reachable sink with remaining demand
        let sink = (0..m)
            .filter(|&j| remaining_demand[j] > MASS_EPS && dist[n + j].is_finite())
            .min_by(|&a, &b| dist[n + a].total_cmp(&dist[n + b]))
            .ok_or_else(|| OegError::InvalidInput("transport network disconnected".into()))?;

        // bottleneck along the augmenting path
        let mut theta = remaining_supply[src].min(remaining_demand[sink]);
        let mut v = n + sink;
        while v != src {
            let u = prev[v];
            if v < n {
                // reverse edge: sink u-n -> source v carries flow[(v, u-n)]
                theta = theta.min(flow[(v, u - n)]);
            }
            v = u;
        }

        // apply the augmentation
        let mut v = n + sink;
        while v != src {
            let u = prev[v];
            if v >= n {
                flow[(u, v - n)] += theta;
            } else {
                flow[(v, u - n)] -= theta;
            }
            v = u;
        }
        remaining_supply[src] -= theta;
        remaining_demand[sink] -= theta;

        // raise potentials by the distances, capped at the sink distance so
        // reduced costs stay nonnegative for nodes beyond the sink
        let cap = dist[n + sink];
        for v in 0..nodes {
            pi[v] += dist[v].min(cap);
        }
    }

    let mut total = 0.0;
    for i in 0..n {
        for j in 0..m {
            total += flow[(i, j)] * cost[(i, j)];
        }
    }
    Ok(total)
}

/// Dense two-phase simplex oracle for the transportation LP.
///
/// Independent of the flow solver: solves
/// min c.x  s.t.  row sums = supply, column sums = demand, x >= 0
/// on the full tableau. Only sensible for tiny instances; intended as a
/// reference for validating [`emd`].
pub fn lp_oracle(supply: &[f64], demand: &[f64], cost: &DMatrix<f64>) -> f64 {
    let n = supply.len();
    let m = demand.len();
    let vars = n * m;
    let cons = n + m;
    // tableau: cons rows x (vars + cons artificials + rhs)
    let cols = vars + cons + 1;
    let mut t = vec![vec![0.0f64; cols]; cons];
    for i in 0..n {
        for j in 0..m {
            t[i][i * m + j] = 1.0;
            t[n + j][i * m + j] = 1.0;
        }
        t[i][cols - 1] = supply[i];
    }
    for j in 0..m {
        t[n + j][cols - 1] = demand[j];
    }
    for r in 0..cons {
        t[r][vars + r] = 1.0;
    }
    let mut basis: Vec<usize> = (vars..vars + cons).collect();

    // phase 1: minimize sum of artificials
    let mut obj = vec![0.0f64; cols];
    for r in 0..cons {
        for c in 0..cols {
            obj[c] -= t[r][c];
        }
    }
    for a in 0..cons {
        obj[vars + a] += 1.0;
    }
    simplex_iterate(&mut t, &mut obj, &mut basis, vars + cons);

    // phase 2: original objective, artificials barred
    let mut obj2 = vec![0.0f64; cols];
    for i in 0..n {
        for j in 0..m {
            obj2[i * m + j] = cost[(i, j)];
        }
    }
    // express objective in terms of nonbasic variables
    for (r, &b) in basis.iter().enumerate() {
        if obj2[b] != 0.0 {
            let coef = obj2[b];
            for c in 0..cols {
                obj2[c] -= coef * t[r][c];
            }
        }
    }
    simplex_iterate(&mut t, &mut obj2, &mut basis, vars);

    let mut value = 0.0;
    for (r, &b) in basis.iter().enumerate() {
        if b < vars {
            let i = b / m;
            let j = b % m;
            value += cost[(i, j)] * t[r][cols - 1];
        }
    }
    value
}

fn simplex_iterate(t: &mut [Vec<f64>], obj: &mut [f64], basis: &mut [usize], allowed: usize) {
    let cons = t.len();
    let cols = obj.len();
    for _ in 0..10_000 {
        let Some(enter) = (0..allowed)
            .filter(|&c| obj[c] < -1e-10)
            .min_by(|&a, &b| obj[a].total_cmp(&obj[b]))
        else {
            return;
        };
        let mut leave = usize::MAX;
        let mut best_ratio = f64::INFINITY;
        for r in 0..cons {
            if t[r][enter] > 1e-10 {
                let ratio = t[r][cols - 1] / t[r][enter];
                if ratio < best_ratio - 1e-12 {
                    best_ratio = ratio;
                    leave = r;
                }
            }
        }
        assert!(leave != usize::MAX, "unbounded transportation LP");
        let pivot = t[leave][enter];
        for c in 0..cols {
            t[leave][c] /= pivot;
        }
        for r in 0..cons {
            if r != leave && t[r][enter].abs() > 1e-14 {
                let coef = t[r][enter];
                for c in 0..cols {
                    t[r][c] -= coef * t[leave][c];
                }
            }
        }
        let coef = obj[enter];
        for c in 0..cols {
            obj[c] -= coef * t[leave][c];
        }
        basis[leave] = enter;
    }
    panic!("simplex did not converge");
}
