//! Distributed subgraph selection in synchronous rounds.
//!
//! The subgradient method works on the nested-reach problem with linear
//! costs: prices live on each node's hyperarcs, every round solves one
//! shortest-path problem per sink with distributed Bellman-Ford, and primal
//! solutions are recovered by averaging. The primal-dual method works on the
//! lossless problem with an l^m-smoothed convex objective.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netmodel::{Hypernet, NodeId};
use crate::subgraph_opt::{recursive_z, ArcCost, MulticastSpec, NestedReach, SubgraphError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistError {
    #[error("sink {0} is unreachable from the source")]
    Unreachable(NodeId),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error(transparent)]
    Subgraph(#[from] SubgraphError),
}

/// Result of synchronous Bellman-Ford from a single source.
#[derive(Debug, Clone, PartialEq)]
pub struct BellmanFord {
    pub dist: Vec<f64>,
    /// Hop count of the fewest-hop shortest path.
    pub hops: Vec<usize>,
    pub pred: Vec<Option<usize>>,
    pub rounds: usize,
    pub messages: u64,
}

impl BellmanFord {
    /// Nodes on the path from the source to `t`, source first.
    pub fn path_to(&self, t: NodeId) -> Option<Vec<NodeId>> {
        if !self.dist[t].is_finite() {
            return None;
        }
        let mut path = vec![t];
        let mut v = t;
        while let Some(u) = self.pred[v] {
            path.push(u);
            v = u;
        }
        path.reverse();
        Some(path)
    }
}

/// Synchronous Bellman-Ford over arcs `(u, v, w)` with `w >= 0`. A node
/// sends its distance to each out-neighbor in the round after it changes.
/// Ties go to the predecessor with the smallest index among those one hop
/// closer to the source.
pub fn bellman_ford(n: usize, arcs: &[(NodeId, NodeId, f64)], source: NodeId) -> BellmanFord {
    let mut out: Vec<Vec<(NodeId, f64)>> = vec![Vec::new(); n];
    for &(u, v, w) in arcs {
        out[u].push((v, w));
    }
    let mut dist = vec![f64::INFINITY; n];
    dist[source] = 0.0;
    let mut changed = vec![false; n];
    changed[source] = true;
    let mut rounds = 0;
    let mut messages = 0u64;
    while changed.iter().any(|&c| c) && rounds < n {
        rounds += 1;
        let prev = dist.clone();
        let mut next = vec![false; n];
        for u in (0..n).filter(|&u| changed[u]) {
            for &(v, w) in &out[u] {
                messages += 1;
                let cand = prev[u] + w;
                if cand < dist[v] - 1e-12 * cand.abs().max(1.0) {
                    dist[v] = cand;
                    next[v] = true;
                }
            }
        }
        changed = next;
    }
    // Predecessors come from a breadth-first pass over tight arcs, which
    // keeps the tree acyclic even with zero-weight cycles.
    let tight = |u: usize, v: usize, w: f64| dist[u] + w <= dist[v] + 1e-9 * dist[v].abs().max(1.0);
    let mut pred = vec![None; n];
    let mut hops = vec![usize::MAX; n];
    hops[source] = 0;
    let mut level = 0;
    let mut grew = true;
    while grew {
        grew = false;
        for &(u, v, w) in arcs {
            if hops[u] == level && hops[v] == usize::MAX && tight(u, v, w) && pred[v].is_none_or(|p| u < p) {
                pred[v] = Some(u);
            }
        }
        for v in 0..n {
            if hops[v] == usize::MAX {
                if let Some(u) = pred[v] {
                    hops[v] = hops[u] + 1;
                    grew = true;
                }
            }
        }
        level += 1;
    }
    BellmanFord { dist, hops, pred, rounds, messages }
}

/// Euclidean projection of `u` onto `{v >= 0, Σ v = s}` by the sorted rule.
pub fn simplex_project(u: &[f64], s: f64) -> Vec<f64> {
    let n = u.len();
    if n == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| u[b].total_cmp(&u[a]).then(a.cmp(&b)));
    let mut acc = 0.0;
    let mut d = 0.0;
    for k in 1..=n {
        acc += u[order[k - 1]];
        d = (s - acc) / k as f64;
        if k == n || d <= -u[order[k]] {
            break;
        }
    }
    u.iter().map(|&v| (v + d).max(0.0)).collect()
}

/// Step sizes `θ[n]` and matching convex-combination weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSchedule {
    /// `θ[n] = a n^{-alpha}` with weights proportional to `θ[l]`.
    DivergentSeries { a: f64, alpha: f64 },
    /// `θ[n] = a / (b + c n)` with equal weights.
    Harmonic { a: f64, b: f64, c: f64 },
    /// `θ[n] = n^{-alpha}` with equal weights.
    Power { alpha: f64 },
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule::Power { alpha: 0.8 }
    }
}

impl StepSchedule {
    pub fn validate(&self) -> Result<(), DistError> {
        let ok = match *self {
            StepSchedule::DivergentSeries { a, alpha } => a > 0.0 && (0.0..=1.0).contains(&alpha) && alpha > 0.0,
            StepSchedule::Harmonic { a, b, c } => a > 0.0 && b >= 0.0 && c > 0.0,
            StepSchedule::Power { alpha } => alpha > 0.0 && alpha < 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(DistError::Param(format!("{self:?}")))
        }
    }

    pub fn theta(&self, n: usize) -> f64 {
        let n = n as f64;
        match *self {
            StepSchedule::DivergentSeries { a, alpha } => a * n.powf(-alpha),
            StepSchedule::Harmonic { a, b, c } => a / (b + c * n),
            StepSchedule::Power { alpha } => n.powf(-alpha),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Recovery {
    /// Weights from the step schedule.
    Original,
    /// Equal weights `1/n` for `n < window`, then `1/window`.
    #[default]
    Modified,
}

pub const MODIFIED_WINDOW: usize = 30;

/// Weight `μ_n[n]` of the newest iterate; `φ[n-1] = 1 - μ_n[n]`.
pub fn newest_weight(schedule: &StepSchedule, recovery: Recovery, n: usize, theta_sum: f64) -> f64 {
    match (recovery, schedule) {
        (Recovery::Modified, _) => 1.0 / n.min(MODIFIED_WINDOW) as f64,
        (Recovery::Original, StepSchedule::DivergentSeries { .. }) => schedule.theta(n) / theta_sum,
        (Recovery::Original, _) => 1.0 / n as f64,
    }
}

/// Nested-reach multicast with linear costs.
#[derive(Debug, Clone)]
pub struct SubgradProblem {
    pub net: Hypernet,
    pub reach: NestedReach,
    pub source: NodeId,
    pub sinks: Vec<(NodeId, f64)>,
    pub a: Vec<f64>,
    pub s: Vec<f64>,
}

impl SubgradProblem {
    pub fn new(net: &Hypernet, spec: &MulticastSpec) -> Result<Self, DistError> {
        spec.validate(net)?;
        let reach = NestedReach::from_net(net, &spec.cost)?;
        let s = reach.incremental_costs(&spec.cost)?;
        if s.iter().any(|&v| v <= 0.0) {
            return Err(DistError::Param("costs must be positive and strictly increasing in reach".into()));
        }
        let a = spec
            .cost
            .iter()
            .map(|c| match *c {
                ArcCost::Linear(v) => v,
                ArcCost::Power { .. } => unreachable!("checked by incremental_costs"),
            })
            .collect();
        Ok(SubgradProblem { net: net.clone(), reach, source: spec.source, sinks: spec.sink_rates(), a, s })
    }

    /// Reduced-arc lengths for sink `ti` under `prices[arc][sink]`.
    pub fn pair_lengths(&self, prices: &[Vec<f64>], ti: usize) -> Vec<f64> {
        self.reach
            .pairs
            .iter()
            .zip(&self.reach.layer)
            .map(|(&(i, _), &m)| self.reach.chains[i][..=m].iter().map(|&a| prices[a][ti]).sum())
            .collect()
    }

    pub fn primal_cost(&self, z: &[f64]) -> f64 {
        self.a.iter().zip(z).map(|(a, z)| a * z).sum()
    }
}

/// Shortest-path flows for one sink: `R_t` on every pair of the path.
pub fn shortest_path_subproblem(
    p: &SubgradProblem,
    prices: &[Vec<f64>],
    ti: usize,
) -> Result<(Vec<f64>, f64, u64), DistError> {
    let len = p.pair_lengths(prices, ti);
    let arcs: Vec<(NodeId, NodeId, f64)> =
        p.reach.pairs.iter().zip(&len).map(|(&(i, j), &w)| (i, j, w)).collect();
    let bf = bellman_ford(p.net.num_nodes(), &arcs, p.source);
    let (t, rate) = p.sinks[ti];
    let path = bf.path_to(t).ok_or(DistError::Unreachable(t))?;
    let mut x = vec![0.0; p.reach.pairs.len()];
    for w in path.windows(2) {
        x[p.reach.pair_index(w[0], w[1]).expect("path uses pairs")] += rate;
    }
    Ok((x, rate * bf.dist[t], bf.messages))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubgradState {
    pub n: usize,
    /// `prices[arc][sink]`.
    pub prices: Vec<Vec<f64>>,
    /// Latest subproblem solutions `xhat[sink][pair]`.
    pub xhat: Vec<Vec<f64>>,
    /// Recovered primal `xtilde[sink][pair]`.
    pub xtilde: Vec<Vec<f64>>,
    pub theta_sum: f64,
    pub messages: u64,
    pub schedule: StepSchedule,
    pub recovery: Recovery,
}

impl SubgradState {
    /// Prices start at `s / |T|` on every hyperarc.
    pub fn new(p: &SubgradProblem, schedule: StepSchedule, recovery: Recovery) -> Result<Self, DistError> {
        schedule.validate()?;
        let nt = p.sinks.len();
        let pairs = p.reach.pairs.len();
        Ok(SubgradState {
            n: 0,
            prices: p.s.iter().map(|&s| vec![s / nt as f64; nt]).collect(),
            xhat: vec![vec![0.0; pairs]; nt],
            xtilde: vec![vec![0.0; pairs]; nt],
            theta_sum: 0.0,
            // Initial broadcast of s and p over each hyperarc.
            messages: p.net.num_arcs() as u64,
            schedule,
            recovery,
        })
    }
}

/// One row of the per-iteration log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub n: usize,
    pub dual_value: f64,
    pub primal_cost: f64,
    pub feasibility_violation: f64,
    pub messages: u64,
}

pub const ITER_CSV_HEADER: &str = "n,dual_value,primal_cost,feasibility_violation,messages";

pub fn records_to_csv(records: &[IterRecord]) -> String {
    let mut out = String::from(ITER_CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.n, r.dual_value, r.primal_cost, r.feasibility_violation, r.messages
        ));
    }
    out
}

/// Subgradient `g_{iJ_m}^{(t)} = Σ_{k ∈ J_M \ J_{m-1}} x̂_{ik}` per arc and sink.
pub fn subgradient(p: &SubgradProblem, xhat: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut g = vec![vec![0.0; xhat.len()]; p.net.num_arcs()];
    for (ti, x) in xhat.iter().enumerate() {
        for (i, chain) in p.reach.chains.iter().enumerate() {
            for (m, v) in p.reach.suffix_sums(i, x).into_iter().enumerate() {
                g[chain[m]][ti] = v;
            }
        }
    }
    g
}

/// Largest flow-conservation residual of `x[sink][pair]`.
pub fn conservation_violation(p: &SubgradProblem, x: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for (ti, xs) in x.iter().enumerate() {
        let mut bal = vec![0.0; p.net.num_nodes()];
        for (k, &(i, j)) in p.reach.pairs.iter().enumerate() {
            bal[i] += xs[k];
            bal[j] -= xs[k];
        }
        let (t, r) = p.sinks[ti];
        bal[p.source] -= r;
        bal[t] += r;
        worst = bal.iter().fold(worst, |w, b| w.max(b.abs()));
        worst = xs.iter().fold(worst, |w, v| w.max(-v));
    }
    worst
}

/// One subgradient round: subproblems at `p[n]`, projection to `p[n+1]`,
/// and the recovery update. Returns the log row for this round.
pub fn subgradient_iterate(p: &SubgradProblem, st: &mut SubgradState) -> Result<IterRecord, DistError> {
    st.n += 1;
    let n = st.n;
    let mut dual = 0.0;
    for ti in 0..p.sinks.len() {
        let (x, q, msgs) = shortest_path_subproblem(p, &st.prices, ti)?;
        st.xhat[ti] = x;
        dual += q;
        st.messages += msgs;
    }
    let theta = st.schedule.theta(n);
    st.theta_sum += theta;
    let g = subgradient(p, &st.xhat);
    for (a, pa) in st.prices.iter_mut().enumerate() {
        let u: Vec<f64> = pa.iter().zip(&g[a]).map(|(v, gv)| v + theta * gv).collect();
        *pa = simplex_project(&u, p.s[a]);
    }
    st.messages += p.net.num_arcs() as u64;
    let mu = newest_weight(&st.schedule, st.recovery, n, st.theta_sum);
    for (xt, xh) in st.xtilde.iter_mut().zip(&st.xhat) {
        for (a, b) in xt.iter_mut().zip(xh) {
            *a = (1.0 - mu) * *a + mu * b;
        }
    }
    let z = recover_z(p, &st.xtilde)?;
    Ok(IterRecord {
        n,
        dual_value: dual,
        primal_cost: p.primal_cost(&z),
        feasibility_violation: conservation_violation(p, &st.xtilde),
        messages: st.messages,
    })
}

/// Coding subgraph from recovered flows, level by level from the outside.
pub fn recover_z(p: &SubgradProblem, xtilde: &[Vec<f64>]) -> Result<Vec<f64>, DistError> {
    Ok(recursive_z(&p.net, &p.reach, xtilde)?)
}

/// Stop once the primal cost changes by less than `rel_tol` relative over
/// `window` rounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub rel_tol: f64,
    pub window: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule { rel_tol: 1e-4, window: 20 }
    }
}

impl StopRule {
    pub fn done(&self, records: &[IterRecord]) -> bool {
        let k = records.len();
        if k <= self.window {
            return false;
        }
        let (now, then) = (records[k - 1].primal_cost, records[k - 1 - self.window].primal_cost);
        (now - then).abs() <= self.rel_tol * now.abs().max(1e-12)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubgradRun {
    pub records: Vec<IterRecord>,
    pub state: SubgradState,
    pub z: Vec<f64>,
}

pub fn run_subgradient(
    p: &SubgradProblem,
    schedule: StepSchedule,
    recovery: Recovery,
    max_iter: usize,
    stop: Option<StopRule>,
) -> Result<SubgradRun, DistError> {
    let mut st = SubgradState::new(p, schedule, recovery)?;
    let mut records = Vec::with_capacity(max_iter);
    for _ in 0..max_iter {
        records.push(subgradient_iterate(p, &mut st)?);
        if stop.is_some_and(|s| s.done(&records)) {
            break;
        }
    }
    let z = recover_z(p, &st.xtilde)?;
    Ok(SubgradRun { records, state: st, z })
}

/// Lossless multicast with smoothed cost `Σ f(z')`, where
/// `z'_{iJ} = (Σ_t |Σ_{j∈J} x^{(t)}_{iJj}|^m)^{1/m}`.
#[derive(Debug, Clone)]
pub struct PdProblem {
    pub net: Hypernet,
    pub source: NodeId,
    pub sinks: Vec<(NodeId, f64)>,
    pub cost: Vec<ArcCost>,
    pub m: f64,
}

impl PdProblem {
    pub fn new(net: &Hypernet, spec: &MulticastSpec, m: f64) -> Result<Self, DistError> {
        spec.validate(net)?;
        if !(m >= 1.0 && m.is_finite()) {
            return Err(DistError::Param("smoothing exponent must be at least 1".into()));
        }
        Ok(PdProblem { net: net.clone(), source: spec.source, sinks: spec.sink_rates(), cost: spec.cost.clone(), m })
    }

    fn sigma(&self, ti: usize, i: NodeId) -> f64 {
        let (t, r) = self.sinks[ti];
        if i == self.source {
            r
        } else if i == t {
            -r
        } else {
            0.0
        }
    }

    /// Smoothed subgraph `z'` for flows `x[sink][arc][head]`.
    pub fn zprime(&self, x: &[Vec<Vec<f64>>]) -> Vec<f64> {
        (0..self.net.num_arcs())
            .map(|a| {
                let terms: Vec<f64> = x.iter().map(|xs| xs[a].iter().sum::<f64>().abs()).collect();
                crate::subgraph_opt::power_mean(&terms, self.m)
            })
            .collect()
    }

    pub fn cost_of(&self, x: &[Vec<Vec<f64>>]) -> f64 {
        self.cost.iter().zip(self.zprime(x)).map(|(c, z)| c.eval(z)).sum()
    }

    /// `∂f(z')/∂x` for every variable; zero where `z' = 0`.
    pub fn gradient(&self, x: &[Vec<Vec<f64>>]) -> Vec<Vec<Vec<f64>>> {
        let z = self.zprime(x);
        x.iter()
            .map(|xs| {
                xs.iter()
                    .enumerate()
                    .map(|(a, heads)| {
                        let y: f64 = heads.iter().sum();
                        let d = if z[a] > 0.0 {
                            self.cost[a].deriv(z[a]) * y.signum() * (y.abs() / z[a]).powf(self.m - 1.0)
                        } else {
                            0.0
                        };
                        vec![d; heads.len()]
                    })
                    .collect()
            })
            .collect()
    }

    fn zeros(&self) -> Vec<Vec<Vec<f64>>> {
        let one: Vec<Vec<f64>> = self.net.arcs().iter().map(|a| vec![0.0; a.fanout()]).collect();
        vec![one; self.sinks.len()]
    }

    /// `y_i^{(t)} - σ_i^{(t)}` per sink and node.
    pub fn imbalance(&self, x: &[Vec<Vec<f64>>]) -> Vec<Vec<f64>> {
        x.iter()
            .enumerate()
            .map(|(ti, xs)| {
                let mut y: Vec<f64> = (0..self.net.num_nodes()).map(|i| -self.sigma(ti, i)).collect();
                for (a, arc) in self.net.arcs().iter().enumerate() {
                    for (h, &j) in arc.heads.iter().enumerate() {
                        y[arc.tail] += xs[a][h];
                        y[j] -= xs[a][h];
                    }
                }
                y
            })
            .collect()
    }
}

/// Constant step sizes for `x`, `p` and `λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for Gains {
    fn default() -> Self {
        Gains { alpha: 0.05, beta: 0.05, gamma: 0.05 }
    }
}

impl Gains {
    pub fn validate(&self) -> Result<(), DistError> {
        if [self.alpha, self.beta, self.gamma].iter().all(|g| *g > 0.0 && g.is_finite()) {
            Ok(())
        } else {
            Err(DistError::Param("gains must be positive".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdState {
    pub n: usize,
    /// `x[sink][arc][head]`.
    pub x: Vec<Vec<Vec<f64>>>,
    /// `p[sink][node]`.
    pub p: Vec<Vec<f64>>,
    /// `lambda[sink][arc][head]`, kept nonnegative.
    pub lambda: Vec<Vec<Vec<f64>>>,
    pub messages: u64,
}

impl PdState {
    pub fn zeros(prob: &PdProblem) -> Self {
        PdState {
            n: 0,
            x: prob.zeros(),
            p: vec![vec![0.0; prob.net.num_nodes()]; prob.sinks.len()],
            lambda: prob.zeros(),
            messages: prob.net.num_arcs() as u64,
        }
    }

    /// Uniform draws in `[0, scale)` for `x`, `p` and `λ`.
    pub fn random<R: rand::Rng>(prob: &PdProblem, scale: f64, rng: &mut R) -> Self {
        let mut st = PdState::zeros(prob);
        for v in st.x.iter_mut().flatten().flatten() {
            *v = rng.random::<f64>() * scale;
        }
        for v in st.p.iter_mut().flatten() {
            *v = rng.random::<f64>() * scale;
        }
        for v in st.lambda.iter_mut().flatten().flatten() {
            *v = rng.random::<f64>() * scale;
        }
        st
    }

    /// Potentials relative to each sink, which fixes the free constant.
    pub fn relative_prices(&self, prob: &PdProblem) -> Vec<Vec<f64>> {
        self.p
            .iter()
            .zip(&prob.sinks)
            .map(|(ps, &(t, _))| ps.iter().map(|v| v - ps[t]).collect())
            .collect()
    }
}

/// One synchronous round of the discretized primal-dual dynamics. All
/// updates read the previous round's values.
pub fn primal_dual_iterate(prob: &PdProblem, st: &mut PdState, gains: &Gains) -> Result<(), DistError> {
    gains.validate()?;
    let grad = prob.gradient(&st.x);
    let imb = prob.imbalance(&st.x);
    let old_x = st.x.clone();
    for (ti, xs) in st.x.iter_mut().enumerate() {
        for (a, arc) in prob.net.arcs().iter().enumerate() {
            for (h, &j) in arc.heads.iter().enumerate() {
                let q = st.p[ti][arc.tail] - st.p[ti][j];
                xs[a][h] -= gains.alpha * (grad[ti][a][h] + q - st.lambda[ti][a][h]);
            }
        }
    }
    for (ti, ps) in st.p.iter_mut().enumerate() {
        for (i, v) in ps.iter_mut().enumerate() {
            *v += gains.beta * imb[ti][i];
        }
    }
    for (ti, ls) in st.lambda.iter_mut().enumerate() {
        for (a, la) in ls.iter_mut().enumerate() {
            for (h, l) in la.iter_mut().enumerate() {
                let drive = -old_x[ti][a][h];
                let step = if *l > 0.0 { drive } else { drive.max(0.0) };
                *l = (*l + gains.gamma * step).max(0.0);
            }
        }
    }
    st.n += 1;
    st.messages += prob.net.num_arcs() as u64;
    Ok(())
}

/// Largest violation among the KKT conditions at `(x, p, λ)`.
pub fn kkt_residual(prob: &PdProblem, st: &PdState) -> f64 {
    let grad = prob.gradient(&st.x);
    let mut worst: f64 = 0.0;
    for (ti, xs) in st.x.iter().enumerate() {
        for (a, arc) in prob.net.arcs().iter().enumerate() {
            for (h, &j) in arc.heads.iter().enumerate() {
                let q = st.p[ti][arc.tail] - st.p[ti][j];
                let l = st.lambda[ti][a][h];
                let x = xs[a][h];
                worst = worst.max((grad[ti][a][h] + q - l).abs()).max(-x).max(-l).max((l * x).abs());
            }
        }
    }
    for row in prob.imbalance(&st.x) {
        worst = row.iter().fold(worst, |w, v| w.max(v.abs()));
    }
    worst
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PdRun {
    pub state: PdState,
    pub records: Vec<IterRecord>,
    pub converged: bool,
}

/// Iterates until the KKT residual drops below `tol` or `max_rounds` pass.
/// `log_every` controls how often a log row is written.
pub fn run_primal_dual(
    prob: &PdProblem,
    mut st: PdState,
    gains: &Gains,
    max_rounds: usize,
    tol: f64,
    log_every: usize,
) -> Result<PdRun, DistError> {
    let mut records = Vec::new();
    let every = log_every.max(1);
    let mut converged = false;
    for _ in 0..max_rounds {
        primal_dual_iterate(prob, &mut st, gains)?;
        let due = st.n.is_multiple_of(every);
        let check = due || st.n.is_multiple_of(100);
        if check {
            let res = kkt_residual(prob, &st);
            if due {
                records.push(pd_record(prob, &st, res));
            }
            if res <= tol {
                converged = true;
                break;
            }
        }
    }
    if records.last().is_none_or(|r| r.n != st.n) {
        records.push(pd_record(prob, &st, kkt_residual(prob, &st)));
    }
    Ok(PdRun { state: st, records, converged })
}

fn pd_record(prob: &PdProblem, st: &PdState, res: f64) -> IterRecord {
    let cost = prob.cost_of(&st.x);
    let viol = prob.imbalance(&st.x).iter().flatten().fold(0.0f64, |w, v| w.max(v.abs()));
    let neg = st.x.iter().flatten().flatten().fold(0.0f64, |w, v| w.max(-v));
    // Lagrangian at the current iterate stands in for the dual value.
    let lag = cost
        + st.p.iter().zip(prob.imbalance(&st.x)).map(|(ps, y)| ps.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>()).sum::<f64>()
        - st.lambda.iter().flatten().flatten().zip(st.x.iter().flatten().flatten()).map(|(l, x)| l * x).sum::<f64>();
    let _ = res;
    IterRecord { n: st.n, dual_value: lag, primal_cost: cost, feasibility_violation: viol.max(neg), messages: st.messages }
}

/// Frank-Wolfe on the smoothed problem; the linear oracle is one shortest
/// path per sink. Returns flows and cost after the duality gap falls below
/// `gap_tol` relative or `iters` rounds pass.
pub fn frank_wolfe(prob: &PdProblem, iters: usize, gap_tol: f64) -> Result<(Vec<Vec<Vec<f64>>>, f64), DistError> {
    let n = prob.net.num_nodes();
    let route = |w: &[Vec<Vec<f64>>]| -> Result<Vec<Vec<Vec<f64>>>, DistError> {
        let mut s = prob.zeros();
        for (ti, &(t, r)) in prob.sinks.iter().enumerate() {
            let mut arcs = Vec::new();
            let mut which = Vec::new();
            for (a, arc) in prob.net.arcs().iter().enumerate() {
                for (h, &j) in arc.heads.iter().enumerate() {
                    arcs.push((arc.tail, j, w[ti][a][h].max(0.0)));
                    which.push((a, h));
                }
            }
            let bf = bellman_ford(n, &arcs, prob.source);
            let path = bf.path_to(t).ok_or(DistError::Unreachable(t))?;
            for step in path.windows(2) {
                let k = (0..arcs.len())
                    .filter(|&k| arcs[k].0 == step[0] && arcs[k].1 == step[1])
                    .min_by(|&k, &l| arcs[k].2.total_cmp(&arcs[l].2))
                    .expect("path arc");
                let (a, h) = which[k];
                s[ti][a][h] += r;
            }
        }
        Ok(s)
    };
    let ones: Vec<Vec<Vec<f64>>> = prob.zeros().into_iter().map(|xs| xs.into_iter().map(|h| vec![1.0; h.len()]).collect()).collect();
    let mut x = route(&ones)?;
    let mut cost = prob.cost_of(&x);
    for _ in 0..iters {
        let g = prob.gradient(&x);
        let s = route(&g)?;
        let dot = |u: &[Vec<Vec<f64>>]| -> f64 {
            g.iter().flatten().flatten().zip(u.iter().flatten().flatten()).map(|(a, b)| a * b).sum()
        };
        let gap = dot(&x) - dot(&s);
        if gap <= gap_tol * cost.max(1e-12) {
            break;
        }
        let mix = |gam: f64| -> Vec<Vec<Vec<f64>>> {
            x.iter()
                .zip(&s)
                .map(|(xa, sa)| {
                    xa.iter().zip(sa).map(|(xh, sh)| xh.iter().zip(sh).map(|(u, v)| u + gam * (v - u)).collect()).collect()
                })
                .collect()
        };
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..60 {
            let c = hi - phi * (hi - lo);
            let d = lo + phi * (hi - lo);
            if prob.cost_of(&mix(c)) <= prob.cost_of(&mix(d)) {
                hi = d;
            } else {
                lo = c;
            }
        }
        x = mix(0.5 * (lo + hi));
        cost = prob.cost_of(&x);
    }
    Ok((x, cost))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::wireless_butterfly;
    use crate::subgraph_opt::{build_nested, solve_reference};
    use rand::SeedableRng;

    #[test]
    fn projection_examples() {
        assert_eq!(simplex_project(&[0.25, 0.75], 1.0), vec![0.25, 0.75]);
        let v = simplex_project(&[0.8, 0.4], 1.0);
        assert!((v[0] - 0.7).abs() < 1e-12 && (v[1] - 0.3).abs() < 1e-12);
        assert_eq!(simplex_project(&[1.5, -0.5], 1.0), vec![1.0, 0.0]);
        let v = simplex_project(&[0.1, 3.0, -2.0, 2.9], 2.0);
        assert!((v.iter().sum::<f64>() - 2.0).abs() < 1e-12);
        assert!((v[1] - 1.05).abs() < 1e-12 && (v[3] - 0.95).abs() < 1e-12 && v[0] == 0.0);
    }

    #[test]
    fn bellman_ford_ties_and_counts() {
        // Two equal paths 0-1-3 and 0-2-3: the lower-index relay wins.
        let arcs = [(0, 2, 1.0), (0, 1, 1.0), (2, 3, 1.0), (1, 3, 1.0)];
        let bf = bellman_ford(4, &arcs, 0);
        assert_eq!(bf.path_to(3).unwrap(), vec![0, 1, 3]);
        assert_eq!(bf.dist[3], 2.0);
        assert!(bf.messages >= 4);
        let line = bellman_ford(3, &[(0, 1, 0.0), (1, 2, 0.0)], 0);
        assert_eq!(line.path_to(2).unwrap(), vec![0, 1, 2]);
        assert!(bellman_ford(3, &[(0, 1, 1.0)], 0).path_to(2).is_none());
    }

    #[test]
    fn zero_cost_cycle_has_acyclic_tree() {
        let arcs = [(0, 1, 0.0), (1, 2, 0.0), (2, 1, 0.0), (2, 3, 1.0)];
        let bf = bellman_ford(4, &arcs, 0);
        assert_eq!(bf.path_to(3).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn schedules_weights() {
        let s = StepSchedule::Power { alpha: 0.8 };
        assert_eq!(newest_weight(&s, Recovery::Original, 40, 0.0), 1.0 / 40.0);
        assert_eq!(newest_weight(&s, Recovery::Modified, 40, 0.0), 1.0 / 30.0);
        assert_eq!(newest_weight(&s, Recovery::Modified, 7, 0.0), 1.0 / 7.0);
        assert!(StepSchedule::Power { alpha: 1.5 }.validate().is_err());
        let h = StepSchedule::Harmonic { a: 1.0, b: 1.0, c: 2.0 };
        assert!((h.theta(2) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn single_sink_duality() {
        let (net, s, _) = wireless_butterfly();
        let spec = MulticastSpec::linear(s, &[5], 1.0, &vec![1.0; net.num_arcs()]);
        let p = SubgradProblem::new(&net, &spec).unwrap();
        let run = run_subgradient(&p, StepSchedule::default(), Recovery::Modified, 5, None).unwrap();
        let r = run.records[0];
        assert!((r.dual_value - r.primal_cost).abs() < 1e-12);
        assert!((r.primal_cost - 2.0).abs() < 1e-12);
    }

    #[test]
    fn butterfly_converges() {
        let (net, s, ts) = wireless_butterfly();
        let spec = MulticastSpec::linear(s, &ts, 1.0, &vec![1.0; net.num_arcs()]);
        let reach = NestedReach::from_net(&net, &spec.cost).unwrap();
        let opt = solve_reference(&build_nested(&net, &spec, &reach).unwrap()).unwrap().cost;
        let p = SubgradProblem::new(&net, &spec).unwrap();
        let run = run_subgradient(&p, StepSchedule::default(), Recovery::Modified, 300, None).unwrap();
        for r in &run.records {
            assert!(r.dual_value <= opt + 1e-9);
            assert!(r.feasibility_violation < 1e-9);
        }
        let last = run.records.last().unwrap();
        assert!(last.primal_cost <= opt * 1.05, "{} vs {opt}", last.primal_cost);
        let csv = records_to_csv(&run.records);
        assert!(csv.starts_with(ITER_CSV_HEADER));
        assert_eq!(csv.lines().count(), 301);
    }

    fn two_node(a: f64) -> PdProblem {
        let mut net = Hypernet::new(2);
        net.add_arc(0, &[1]).unwrap();
        let spec = MulticastSpec {
            source: 0,
            sinks: vec![1],
            rates: vec![0.5],
            cost: vec![ArcCost::Power { a, exp: 2.0 }],
            zmax: None,
        };
        PdProblem::new(&net, &spec, 4.0).unwrap()
    }

    #[test]
    fn primal_dual_two_node() {
        let prob = two_node(1.0);
        let run = run_primal_dual(&prob, PdState::zeros(&prob), &Gains { alpha: 0.2, beta: 0.2, gamma: 0.2 }, 100_000, 1e-10, 1000)
            .unwrap();
        assert!(run.converged);
        let st = &run.state;
        assert!((st.x[0][0][0] - 0.5).abs() < 1e-8);
        // p_s - p_t equals f'(R) = 2R with the sign convention of the update.
        assert!((st.p[0][1] - st.p[0][0] - 1.0).abs() < 1e-8);
        let mut again = st.clone();
        primal_dual_iterate(&prob, &mut again, &Gains::default()).unwrap();
        assert!((again.x[0][0][0] - st.x[0][0][0]).abs() < 1e-9);
    }

    #[test]
    fn lambda_stays_nonnegative() {
        let prob = two_node(1.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut st = PdState::random(&prob, 2.0, &mut rng);
        for _ in 0..2000 {
            primal_dual_iterate(&prob, &mut st, &Gains { alpha: 0.3, beta: 0.3, gamma: 0.9 }).unwrap();
            assert!(st.lambda.iter().flatten().flatten().all(|&l| l >= 0.0));
        }
    }

    #[test]
    fn frank_wolfe_two_paths() {
        // Two parallel two-hop routes with z^2 costs split the rate evenly.
        let mut net = Hypernet::new(4);
        for (i, j) in [(0, 1), (0, 2), (1, 3), (2, 3)] {
            net.add_arc(i, &[j]).unwrap();
        }
        let spec = MulticastSpec {
            source: 0,
            sinks: vec![3],
            rates: vec![1.0],
            cost: vec![ArcCost::Power { a: 1.0, exp: 2.0 }; 4],
            zmax: None,
        };
        let prob = PdProblem::new(&net, &spec, 4.0).unwrap();
        let (x, c) = frank_wolfe(&prob, 500, 1e-9).unwrap();
        assert!((c - 1.0).abs() < 1e-3, "{c}");
        assert!((x[0][0][0] - 0.5).abs() < 1e-2);
    }
}
