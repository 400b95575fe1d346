//! Dinic max-flow on real capacities.

use std::collections::VecDeque;

const EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
struct Edge {
    to: usize,
    cap: f64,
    rev: usize,
}

#[derive(Debug, Clone)]
pub struct Dinic {
    adj: Vec<Vec<Edge>>,
    level: Vec<i32>,
    iter: Vec<usize>,
}

impl Dinic {
    pub fn new(n: usize) -> Self {
        Dinic { adj: vec![Vec::new(); n], level: vec![0; n], iter: vec![0; n] }
    }

    pub fn add_edge(&mut self, u: usize, v: usize, cap: f64) {
        let ru = self.adj[v].len();
        let rv = self.adj[u].len();
        self.adj[u].push(Edge { to: v, cap, rev: ru });
        self.adj[v].push(Edge { to: u, cap: 0.0, rev: rv });
    }

    fn bfs(&mut self, s: usize) {
        self.level.iter_mut().for_each(|l| *l = -1);
        self.level[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for e in &self.adj[u] {
                if e.cap > EPS && self.level[e.to] < 0 {
                    self.level[e.to] = self.level[u] + 1;
                    queue.push_back(e.to);
                }
            }
        }
    }

    fn dfs(&mut self, u: usize, t: usize, f: f64) -> f64 {
        if u == t {
            return f;
        }
        while self.iter[u] < self.adj[u].len() {
            let i = self.iter[u];
            let Edge { to, cap, rev } = self.adj[u][i];
            if cap > EPS && self.level[u] < self.level[to] {
                let d = self.dfs(to, t, f.min(cap));
                if d > EPS {
                    self.adj[u][i].cap -= d;
                    self.adj[to][rev].cap += d;
                    return d;
                }
            }
            self.iter[u] += 1;
        }
        0.0
    }

    pub fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let mut flow = 0.0;
        loop {
            self.bfs(s);
            if self.level[t] < 0 {
                return flow;
            }
            self.iter.iter_mut().for_each(|i| *i = 0);
            loop {
                let f = self.dfs(s, t, f64::INFINITY);
                if f <= EPS {
                    break;
                }
                flow += f;
            }
        }
    }

    /// Nodes reachable from `s` in the residual graph after `max_flow`.
    pub fn source_side(&self, s: usize) -> Vec<bool> {
        let mut seen = vec![false; self.adj.len()];
        seen[s] = true;
        let mut stack = vec![s];
        while let Some(u) = stack.pop() {
            for e in &self.adj[u] {
                if e.cap > 1e-9 && !seen[e.to] {
                    seen[e.to] = true;
                    stack.push(e.to);
                }
            }
        }
        seen
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classic_instance() {
        let mut d = Dinic::new(4);
        d.add_edge(0, 1, 3.0);
        d.add_edge(0, 2, 2.0);
        d.add_edge(1, 2, 1.0);
        d.add_edge(1, 3, 2.0);
        d.add_edge(2, 3, 3.0);
        assert!((d.max_flow(0, 3) - 5.0).abs() < 1e-12);
        let side = d.source_side(0);
        assert!(side[0] && !side[3]);
    }
}
