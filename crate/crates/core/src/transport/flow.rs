//! Uncapacitated transportation problem by successive shortest paths.
//!
//! Sources carry `supply[i]`, sinks `demand[j]`, every source-sink arc has
//! unbounded capacity and cost `c_ij`. Dijkstra runs on reduced costs, so
//! the potentials stay feasible and every augmentation is a shortest path.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Residual mass treated as exhausted.
const EPS: f64 = 1e-15;

/// Optimal flow as sparse `(source, sink, mass)` entries plus its cost.
#[derive(Debug, Clone)]
pub struct Flow {
    pub entries: Vec<(usize, usize, f64)>,
    pub cost: f64,
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    // min-heap on distance
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

/// Solves `min sum c_ij pi_ij` over couplings of `supply` and `demand`.
///
/// Both marginals must carry the same total mass.
pub fn solve(cost: &[f64], supply: &[f64], demand: &[f64]) -> Flow {
    let (n, m) = (supply.len(), demand.len());
    assert_eq!(cost.len(), n * m);
    let sink = |j: usize| n + j;
    let t = n + m;
    let s = n + m + 1;
    let nodes = n + m + 2;

    let mut flow = vec![0.0; n * m];
    let mut left_supply = supply.to_vec();
    let mut left_demand = demand.to_vec();
    let mut pot = vec![0.0; nodes];
    let mut dist = vec![f64::INFINITY; nodes];
    let mut prev = vec![usize::MAX; nodes];
    let mut done = vec![false; nodes];
    let mut heap = BinaryHeap::new();

    let total: f64 = supply.iter().sum();
    let mut shipped = 0.0;
    let max_rounds = 4 * (n + m) + 64;
    for _ in 0..max_rounds {
        if total - shipped <= EPS * total.max(1.0) * 16.0 {
            break;
        }
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        prev.iter_mut().for_each(|p| *p = usize::MAX);
        done.iter_mut().for_each(|d| *d = false);
        heap.clear();
        dist[s] = 0.0;
        heap.push(Entry(0.0, s));

        while let Some(Entry(d, u)) = heap.pop() {
            if done[u] || d > dist[u] {
                continue;
            }
            done[u] = true;
            if u == t {
                break;
            }
            let mut relax = |v: usize, w: f64, heap: &mut BinaryHeap<Entry>| {
                let nd = d + w.max(0.0);
                if nd < dist[v] {
                    dist[v] = nd;
                    prev[v] = u;
                    heap.push(Entry(nd, v));
                }
            };
            if u == s {
                for i in 0..n {
                    if left_supply[i] > EPS {
                        relax(i, pot[s] - pot[i], &mut heap);
                    }
                }
            } else if u < n {
                let row = &cost[u * m..(u + 1) * m];
                for j in 0..m {
                    let v = sink(j);
                    if !done[v] {
                        relax(v, row[j] + pot[u] - pot[v], &mut heap);
                    }
                }
            } else if u < t {
                let j = u - n;
                for i in 0..n {
                    if flow[i * m + j] > EPS && !done[i] {
                        relax(i, -cost[i * m + j] + pot[u] - pot[i], &mut heap);
                    }
                }
                if left_demand[j] > EPS {
                    relax(t, pot[u] - pot[t], &mut heap);
                }
            }
        }
        if !dist[t].is_finite() {
            break;
        }
        let dt = dist[t];
        for v in 0..nodes {
            pot[v] += dist[v].min(dt);
        }

        // bottleneck along s -> i0 -> j0 -> i1 -> ... -> jk -> t
        let last_sink = prev[t];
        let mut amount = left_demand[last_sink - n];
        let mut v = last_sink;
        let mut first_source = usize::MAX;
        while v != s {
            let u = prev[v];
            if u == s {
                first_source = v;
                amount = amount.min(left_supply[v]);
            } else if v < n {
                // reverse arc sink u -> source v cancels flow on (v, u)
                amount = amount.min(flow[v * m + (u - n)]);
            }
            v = u;
        }
        let mut v = last_sink;
        while v != s {
            let u = prev[v];
            if u != s {
                if v < n {
                    flow[v * m + (u - n)] -= amount;
                } else {
                    flow[u * m + (v - n)] += amount;
                }
            }
            v = u;
        }
        left_supply[first_source] -= amount;
        left_demand[last_sink - n] -= amount;
        shipped += amount;
    }

    let mut entries = Vec::new();
    let mut total_cost = 0.0;
    for i in 0..n {
        for j in 0..m {
            let f = flow[i * m + j];
            if f > EPS {
                entries.push((i, j, f));
                total_cost += f * cost[i * m + j];
            }
        }
    }
    Flow {
        entries,
        cost: total_cost,
    }
}
