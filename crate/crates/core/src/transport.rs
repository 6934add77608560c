//! Dense min-cost transportation by successive shortest paths.
//!
//! Sources carry supplies, sinks carry demands with equal totals, and every
//! source may ship to every sink at a nonnegative cost. Shortest paths run on
//! the residual graph with Johnson potentials so reduced costs stay
//! nonnegative; each augmentation exhausts a source, a sink, or a reverse arc.

use alloc::vec;
use alloc::vec::Vec;

pub(crate) struct Transport {
    sources: usize,
    sinks: usize,
    cost: Vec<f64>,
}

#[derive(Clone, Copy, PartialEq)]
enum Node {
    Source(usize),
    Sink(usize),
}

impl Transport {
    /// `cost` is row-major `sources × sinks`.
    pub(crate) fn new(sources: usize, sinks: usize, cost: Vec<f64>) -> Self {
        debug_assert_eq!(cost.len(), sources * sinks);
        Self {
            sources,
            sinks,
            cost,
        }
    }

    #[inline]
    fn c(&self, s: usize, t: usize) -> f64 {
        self.cost[s * self.sinks + t]
    }

    /// Minimal total cost of shipping `supply` to `demand`.
    pub(crate) fn solve(&self, supply: &[f64], demand: &[f64]) -> f64 {
        let (ns, nt) = (self.sources, self.sinks);
        let total: f64 = supply.iter().sum::<f64>().max(demand.iter().sum());
        if total <= 0.0 {
            return 0.0;
        }
        let eps = 1e-13 * total;
        let mut left = supply.to_vec();
        let mut need = demand.to_vec();
        let mut flow = vec![0.0; ns * nt];
        let mut pot_s = vec![0.0; ns];
        let mut pot_t = vec![0.0; nt];
        let mut dist_s = vec![0.0; ns];
        let mut dist_t = vec![0.0; nt];
        let mut done_s = vec![false; ns];
        let mut done_t = vec![false; nt];
        // Predecessor of a sink is a source and vice versa.
        let mut pred_t = vec![usize::MAX; nt];
        let mut pred_s = vec![usize::MAX; ns];

        // Each augmentation saturates a node or an arc; the bound is generous.
        let max_rounds = 4 * (ns + nt) * (ns + nt) + 16;
        for _ in 0..max_rounds {
            if !left.iter().any(|&a| a > eps) || !need.iter().any(|&b| b > eps) {
                break;
            }
            for s in 0..ns {
                dist_s[s] = if left[s] > eps { 0.0 } else { f64::INFINITY };
                done_s[s] = false;
                pred_s[s] = usize::MAX;
            }
            for t in 0..nt {
                dist_t[t] = f64::INFINITY;
                done_t[t] = false;
                pred_t[t] = usize::MAX;
            }
            // Dense Dijkstra over sources ∪ sinks.
            let mut target = None;
            loop {
                let mut best = f64::INFINITY;
                let mut pick = None;
                for s in 0..ns {
                    if !done_s[s] && dist_s[s] < best {
                        best = dist_s[s];
                        pick = Some(Node::Source(s));
                    }
                }
                for t in 0..nt {
                    if !done_t[t] && dist_t[t] < best {
                        best = dist_t[t];
                        pick = Some(Node::Sink(t));
                    }
                }
                let Some(node) = pick else { break };
                match node {
                    Node::Source(s) => {
                        done_s[s] = true;
                        for t in 0..nt {
                            if done_t[t] {
                                continue;
                            }
                            let reduced = (self.c(s, t) + pot_s[s] - pot_t[t]).max(0.0);
                            let cand = dist_s[s] + reduced;
                            if cand < dist_t[t] {
                                dist_t[t] = cand;
                                pred_t[t] = s;
                            }
                        }
                    }
                    Node::Sink(t) => {
                        done_t[t] = true;
                        if need[t] > eps {
                            target = Some(t);
                            break;
                        }
                        for s in 0..ns {
                            if done_s[s] || flow[s * nt + t] <= eps {
                                continue;
                            }
                            let reduced = (-self.c(s, t) + pot_t[t] - pot_s[s]).max(0.0);
                            let cand = dist_t[t] + reduced;
                            if cand < dist_s[s] {
                                dist_s[s] = cand;
                                pred_s[s] = t;
                            }
                        }
                    }
                }
            }
            let Some(sink) = target else { break };
            let reach = dist_t[sink];
            for s in 0..ns {
                pot_s[s] += dist_s[s].min(reach);
            }
            for t in 0..nt {
                pot_t[t] += dist_t[t].min(reach);
            }
            // Walk back to the originating source and find the bottleneck.
            let mut delta = need[sink];
            let mut t = sink;
            let origin;
            loop {
                let s = pred_t[t];
                let back = pred_s[s];
                if back == usize::MAX {
                    origin = s;
                    break;
                }
                delta = delta.min(flow[s * nt + back]);
                t = back;
            }
            delta = delta.min(left[origin]);
            let mut t = sink;
            loop {
                let s = pred_t[t];
                flow[s * nt + t] += delta;
                let back = pred_s[s];
                if back == usize::MAX {
                    break;
                }
                flow[s * nt + back] -= delta;
                t = back;
            }
            left[origin] -= delta;
            need[sink] -= delta;
        }
        flow.iter()
            .zip(&self.cost)
            .map(|(f, c)| f.max(0.0) * c)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_prefers_cheap_diagonal() {
        let tp = Transport::new(2, 2, vec![1.0, 3.0, 3.0, 1.0]);
        assert!((tp.solve(&[1.0, 1.0], &[1.0, 1.0]) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn requires_rerouting_through_reverse_arcs() {
        // Greedy shipping s0->t0 first is suboptimal; the solver must undo it.
        let tp = Transport::new(2, 2, vec![1.0, 2.0, 1.0, 100.0]);
        let value = tp.solve(&[1.0, 1.0], &[1.0, 1.0]);
        assert!((value - 3.0).abs() < 1e-12, "{value}");
    }

    #[test]
    fn matches_assignment_brute_force() {
        // 3x3 permutation check with unit supplies.
        let cost = vec![4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let tp = Transport::new(3, 3, cost.clone());
        let perms = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        let best = perms
            .iter()
            .map(|p| (0..3).map(|i| cost[i * 3 + p[i]]).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        assert!((tp.solve(&[1.0; 3], &[1.0; 3]) - best).abs() < 1e-12);
    }
}
