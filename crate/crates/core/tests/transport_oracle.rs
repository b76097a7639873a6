//! EMD checked against a generic min-cost-flow solver (successive shortest
//! paths with Bellman-Ford) on small integer transportation problems.

mod common;

use rand::Rng;

use common::rng;
use vcleak::{emd_1d, emd_transport, BinEdges, Histogram};

struct Edge {
    to: usize,
    cap: i64,
    cost: i64,
}

struct FlowGraph {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
}

impl FlowGraph {
    fn new(n: usize) -> Self {
        FlowGraph {
            edges: Vec::new(),
            adj: vec![Vec::new(); n],
        }
    }

    fn add(&mut self, from: usize, to: usize, cap: i64, cost: i64) {
        self.adj[from].push(self.edges.len());
        self.edges.push(Edge { to, cap, cost });
        self.adj[to].push(self.edges.len());
        self.edges.push(Edge {
            to: from,
            cap: 0,
            cost: -cost,
        });
    }

    /// Sends as much flow as possible from `s` to `t`; returns (flow, cost).
    fn min_cost_flow(&mut self, s: usize, t: usize) -> (i64, i64) {
        let n = self.adj.len();
        let (mut flow, mut cost) = (0, 0);
        loop {
            let mut dist = vec![i64::MAX; n];
            let mut via = vec![usize::MAX; n];
            dist[s] = 0;
            for _ in 0..n {
                let mut changed = false;
                for u in 0..n {
                    if dist[u] == i64::MAX {
                        continue;
                    }
                    for &e in &self.adj[u] {
                        let edge = &self.edges[e];
                        if edge.cap > 0 && dist[u] + edge.cost < dist[edge.to] {
                            dist[edge.to] = dist[u] + edge.cost;
                            via[edge.to] = e;
                            changed = true;
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
            if dist[t] == i64::MAX {
                return (flow, cost);
            }
            let mut push = i64::MAX;
            let mut v = t;
            while v != s {
                let e = via[v];
                push = push.min(self.edges[e].cap);
                v = self.edges[e ^ 1].to;
            }
            let mut v = t;
            while v != s {
                let e = via[v];
                self.edges[e].cap -= push;
                self.edges[e ^ 1].cap += push;
                v = self.edges[e ^ 1].to;
            }
            flow += push;
            cost += push * dist[t];
        }
    }
}

/// Exact EMD of two count vectors on `edges`, via min-cost flow on the
/// integer problem with supplies a_i * Tb and demands b_j * Ta.
fn oracle_emd(a: &[u64], b: &[u64], edges: &BinEdges) -> f64 {
    let n = a.len();
    let (ta, tb): (u64, u64) = (a.iter().sum(), b.iter().sum());
    let (s, t) = (2 * n, 2 * n + 1);
    let mut g = FlowGraph::new(2 * n + 2);
    for i in 0..n {
        g.add(s, i, (a[i] * tb) as i64, 0);
        g.add(n + i, t, (b[i] * ta) as i64, 0);
        for j in 0..n {
            g.add(i, n + j, i64::MAX / 4, (i as i64 - j as i64).abs());
        }
    }
    let (flow, cost) = g.min_cost_flow(s, t);
    assert_eq!(flow as u64, ta * tb);
    cost as f64 / (ta * tb) as f64 * edges.width()
}

fn random_counts(rng: &mut impl Rng, n: usize) -> Vec<u64> {
    loop {
        let c: Vec<u64> = (0..n).map(|_| rng.random_range(0..=6)).collect();
        if c.iter().any(|&x| x > 0) {
            return c;
        }
    }
}

#[test]
fn closed_form_matches_min_cost_flow() {
    let mut rng = rng(21);
    for _ in 0..300 {
        let n = rng.random_range(2..=9);
        let edges = BinEdges::new(-0.5, rng.random_range(-0.4..1.0), n).unwrap();
        let a = random_counts(&mut rng, n);
        let b = random_counts(&mut rng, n);
        let expected = oracle_emd(&a, &b, &edges);
        let ha = Histogram::from_counts(edges, a.clone()).unwrap();
        let hb = Histogram::from_counts(edges, b.clone()).unwrap();
        let closed = emd_1d(&ha, &hb).unwrap();
        let (transport, _) = emd_transport(&ha, &hb).unwrap();
        assert!(
            (closed - expected).abs() <= 1e-12,
            "{a:?} {b:?}: {closed} vs {expected}"
        );
        assert!(
            (transport - expected).abs() <= 1e-12,
            "{a:?} {b:?}: {transport} vs {expected}"
        );
    }
}

#[test]
fn transport_plan_cost_matches_its_flows() {
    let mut rng = rng(22);
    for _ in 0..100 {
        let n = rng.random_range(2..=12);
        let edges = BinEdges::new(0.0, 1.0, n).unwrap();
        let ha = Histogram::from_counts(edges, random_counts(&mut rng, n)).unwrap();
        let hb = Histogram::from_counts(edges, random_counts(&mut rng, n)).unwrap();
        let (cost, plan) = emd_transport(&ha, &hb).unwrap();
        let recomputed: f64 = plan
            .flows
            .iter()
            .map(|f| f.mass * (edges.center(f.from) - edges.center(f.to)).abs())
            .sum();
        assert!((cost - recomputed).abs() <= 1e-12);
        assert!((plan.cost - cost).abs() <= 1e-15);
    }
}

#[test]
fn oracle_sanity() {
    let edges = BinEdges::new(0.0, 1.0, 3).unwrap();
    // one unit moved two bins at width 1/3
    assert!((oracle_emd(&[1, 0, 0], &[0, 0, 1], &edges) - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(oracle_emd(&[2, 1, 3], &[4, 2, 6], &edges), 0.0);
}
