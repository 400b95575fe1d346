//! Hypergraph network model: hyperarcs, loss models, reception rates, cuts
//! and flows.
//!
//! Reception subsets of a hyperarc `(i, J)` are bitmasks over the sorted head
//! list, so bit `h` stands for `heads[h]`.

use std::collections::HashMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{Cmp, LinearProgram, LpError, Sense};
use crate::maxflow::Dinic;

pub type NodeId = usize;

/// Largest hyperarc fan-out; reception subsets are `u32` masks.
pub const MAX_FANOUT: usize = 31;
/// Largest fan-out of a lossy hyperarc, whose 2^|J| reception subsets are
/// enumerated.
pub const MAX_SUBSET_FANOUT: usize = 8;
/// Networks up to this size get exact cut enumeration in [`min_cut`].
pub const ENUM_CUT_LIMIT: usize = 16;
const TOL: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("node {0} out of range")]
    BadNode(NodeId),
    #[error("hyperarc from {0} has no heads")]
    EmptyHeads(NodeId),
    #[error("hyperarc from {0} lists its tail as a head")]
    SelfLoop(NodeId),
    #[error("hyperarc fan-out {0} exceeds {MAX_FANOUT}")]
    FanOut(usize),
    #[error("duplicate hyperarc {0}")]
    Duplicate(String),
    #[error("unknown hyperarc {0}")]
    UnknownArc(usize),
    #[error("loss model does not match network: {0}")]
    LossShape(String),
    #[error("rate vector has {got} entries for {expected} hyperarcs")]
    RateShape { got: usize, expected: usize },
    #[error("invalid cut: {0}")]
    InvalidCut(String),
    #[error("flow is not conservative at node {node} (imbalance {imbalance:.3e})")]
    Nonconservative { node: NodeId, imbalance: f64 },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Lp(#[from] LpError),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Hyperarc {
    pub tail: NodeId,
    pub heads: Vec<NodeId>,
}

impl Hyperarc {
    pub fn fanout(&self) -> usize {
        self.heads.len()
    }

    pub fn full_mask(&self) -> u32 {
        (1u32 << self.heads.len()) - 1
    }

    pub fn head_index(&self, j: NodeId) -> Option<usize> {
        self.heads.iter().position(|&h| h == j)
    }

    pub fn label(&self) -> String {
        let heads: Vec<String> = self.heads.iter().map(|h| h.to_string()).collect();
        format!("{}->{}", self.tail, heads.join(","))
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Hypernet {
    n: usize,
    arcs: Vec<Hyperarc>,
    #[serde(default)]
    names: Vec<String>,
    #[serde(skip)]
    index: HashMap<Hyperarc, usize>,
}

impl Hypernet {
    pub fn new(n: usize) -> Self {
        Hypernet { n, ..Default::default() }
    }

    pub fn with_names(names: Vec<String>) -> Self {
        Hypernet { n: names.len(), names, ..Default::default() }
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn num_arcs(&self) -> usize {
        self.arcs.len()
    }

    pub fn arcs(&self) -> &[Hyperarc] {
        &self.arcs
    }

    pub fn arc(&self, a: usize) -> &Hyperarc {
        &self.arcs[a]
    }

    pub fn name(&self, i: NodeId) -> String {
        self.names.get(i).cloned().unwrap_or_else(|| i.to_string())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn node_by_name(&self, name: &str) -> Option<NodeId> {
        if self.names.is_empty() {
            name.parse().ok().filter(|&i| i < self.n)
        } else {
            self.names.iter().position(|n| n == name)
        }
    }

    /// Adds hyperarc `(tail, heads)`; heads are sorted. Returns its index.
    pub fn add_arc(&mut self, tail: NodeId, heads: &[NodeId]) -> Result<usize, NetError> {
        if tail >= self.n {
            return Err(NetError::BadNode(tail));
        }
        if heads.is_empty() {
            return Err(NetError::EmptyHeads(tail));
        }
        let mut hs = heads.to_vec();
        hs.sort_unstable();
        hs.dedup();
        if let Some(&bad) = hs.iter().find(|&&h| h >= self.n) {
            return Err(NetError::BadNode(bad));
        }
        if hs.contains(&tail) {
            return Err(NetError::SelfLoop(tail));
        }
        if hs.len() > MAX_FANOUT {
            return Err(NetError::FanOut(hs.len()));
        }
        let arc = Hyperarc { tail, heads: hs };
        if self.index.contains_key(&arc) {
            return Err(NetError::Duplicate(arc.label()));
        }
        self.index.insert(arc.clone(), self.arcs.len());
        self.arcs.push(arc);
        Ok(self.arcs.len() - 1)
    }

    pub fn find_arc(&self, tail: NodeId, heads: &[NodeId]) -> Option<usize> {
        let mut hs = heads.to_vec();
        hs.sort_unstable();
        if self.index.len() != self.arcs.len() {
            return self.arcs.iter().position(|a| a.tail == tail && a.heads == hs);
        }
        self.index.get(&Hyperarc { tail, heads: hs }).copied()
    }

    pub fn out_arcs(&self, i: NodeId) -> impl Iterator<Item = usize> + '_ {
        self.arcs.iter().enumerate().filter(move |(_, a)| a.tail == i).map(|(k, _)| k)
    }

    /// Rebuilds the lookup index, e.g. after deserialization.
    pub fn reindex(&mut self) {
        self.index = self.arcs.iter().cloned().enumerate().map(|(k, a)| (a, k)).collect();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlohaParams {
    /// Reception at the relay only.
    pub p12: f64,
    /// Reception at the destination only.
    pub p13: f64,
    /// Reception at both.
    pub p1both: f64,
    /// Relay to destination.
    pub p233: f64,
}

impl AlohaParams {
    pub fn reference() -> Self {
        AlohaParams { p12: 9.0 / 16.0, p13: 1.0 / 16.0, p1both: 3.0 / 16.0, p233: 0.75 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LossModel {
    Lossless,
    /// Independent success probability per head, indexed `[arc][head]`.
    Iid(Vec<Vec<f64>>),
    /// Fraction of injected packets received by exactly each subset, `[arc][mask]`.
    Explicit(Vec<Vec<f64>>),
    /// Two-hop relay: nodes 0, 1, 2 with hyperarcs (0, {1, 2}) and (1, {2}).
    AlohaRelay(AlohaParams),
}

/// Builds the three-node relay network used with [`LossModel::AlohaRelay`].
pub fn aloha_relay_net() -> Hypernet {
    let mut net = Hypernet::new(3);
    net.add_arc(0, &[1, 2]).unwrap();
    net.add_arc(1, &[2]).unwrap();
    net
}

/// Fractions of packets injected on arc `a` that are received by exactly
/// each nonempty subset of its heads, as `(mask, fraction)` pairs with
/// positive fraction in increasing mask order.
pub fn reception_fractions(
    net: &Hypernet,
    loss: &LossModel,
    a: usize,
    z: &[f64],
) -> Result<Vec<(u32, f64)>, NetError> {
    let arc = net.arcs.get(a).ok_or(NetError::UnknownArc(a))?;
    let d = arc.fanout();
    let dense = |frac: Vec<f64>| -> Vec<(u32, f64)> {
        frac.into_iter()
            .enumerate()
            .skip(1)
            .filter(|(_, f)| *f > 0.0)
            .map(|(m, f)| (m as u32, f))
            .collect()
    };
    match loss {
        LossModel::Lossless => Ok(vec![(arc.full_mask(), 1.0)]),
        LossModel::Iid(p) => {
            let p = p
                .get(a)
                .filter(|p| p.len() == d)
                .ok_or_else(|| NetError::LossShape(format!("iid probabilities for arc {a}")))?;
            let sure = (0..d).filter(|&h| p[h] >= 1.0).fold(0u32, |m, h| m | 1 << h);
            let open: Vec<usize> = (0..d).filter(|&h| p[h] > 0.0 && p[h] < 1.0).collect();
            if open.len() > MAX_SUBSET_FANOUT {
                return Err(NetError::FanOut(d));
            }
            let mut out: Vec<(u32, f64)> = (0u32..1 << open.len())
                .map(|bits| {
                    let mut mask = sure;
                    let mut prob = 1.0;
                    for (k, &h) in open.iter().enumerate() {
                        if bits >> k & 1 == 1 {
                            mask |= 1 << h;
                            prob *= p[h];
                        } else {
                            prob *= 1.0 - p[h];
                        }
                    }
                    (mask, prob)
                })
                .filter(|&(m, f)| m != 0 && f > 0.0)
                .collect();
            out.sort_by_key(|e| e.0);
            Ok(out)
        }
        LossModel::Explicit(t) => {
            if d > MAX_SUBSET_FANOUT {
                return Err(NetError::FanOut(d));
            }
            let row = t
                .get(a)
                .filter(|r| r.len() == 1 << d)
                .ok_or_else(|| NetError::LossShape(format!("explicit table for arc {a}")))?;
            Ok(dense(row.clone()))
        }
        LossModel::AlohaRelay(p) => {
            let src = net.find_arc(0, &[1, 2]);
            let relay = net.find_arc(1, &[2]);
            let (Some(src), Some(relay)) = (src, relay) else {
                return Err(NetError::LossShape("relay network needs arcs 0->1,2 and 1->2".into()));
            };
            let mut frac = vec![0.0; 1 << d];
            if a == src {
                let idle = 1.0 - z[relay];
                frac[0b01] = idle * p.p12;
                frac[0b10] = idle * p.p13;
                frac[0b11] = idle * p.p1both;
            } else if a == relay {
                frac[0b1] = (1.0 - z[src]) * p.p233;
            } else {
                return Err(NetError::LossShape(format!("arc {a} not part of relay")));
            }
            Ok(dense(frac))
        }
    }
}

/// Per-arc injection rates with their split over reception subsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceptionRates {
    pub z: Vec<f64>,
    /// `zk[a]` lists `(mask, rate)`: packets on arc `a` received by exactly
    /// `mask`, for masks with positive fraction.
    pub zk: Vec<Vec<(u32, f64)>>,
}

impl ReceptionRates {
    /// Rate of packets on `a` reaching at least one head in `kmask`.
    pub fn reaching(&self, a: usize, kmask: u32) -> f64 {
        self.zk[a].iter().filter(|(m, _)| m & kmask != 0).map(|(_, v)| v).sum()
    }

    /// Subsets `K` whose reception bound is not implied by the others and
    /// nonnegativity: all of them for lossy arcs, only the full head set
    /// when every received packet reaches all heads.
    pub fn bound_subsets(&self, net: &Hypernet, a: usize) -> Vec<u32> {
        let full = net.arc(a).full_mask();
        if self.zk[a].iter().all(|&(m, _)| m == full) {
            vec![full]
        } else {
            (1..=full).collect()
        }
    }

    /// Fraction of injected packets reaching `kmask`; zero rate gives zero.
    pub fn b(&self, a: usize, kmask: u32) -> f64 {
        if self.z[a] > 0.0 {
            self.reaching(a, kmask) / self.z[a]
        } else {
            0.0
        }
    }
}

pub fn reception_rates(
    net: &Hypernet,
    loss: &LossModel,
    z: &[f64],
) -> Result<ReceptionRates, NetError> {
    if z.len() != net.num_arcs() {
        return Err(NetError::RateShape { got: z.len(), expected: net.num_arcs() });
    }
    let zk = (0..net.num_arcs())
        .map(|a| {
            let frac = reception_fractions(net, loss, a, z)?;
            Ok(frac.into_iter().map(|(m, f)| (m, f * z[a])).collect())
        })
        .collect::<Result<Vec<Vec<(u32, f64)>>, NetError>>()?;
    Ok(ReceptionRates { z: z.to_vec(), zk })
}

/// Proportional-loss constants: reception rates at unit injection, so that
/// `b(a, K)` is the fraction of packets on `a` reaching `K`.
pub fn b_constants(net: &Hypernet, loss: &LossModel) -> Result<ReceptionRates, NetError> {
    reception_rates(net, loss, &vec![1.0; net.num_arcs()])
}

fn outside_mask(arc: &Hyperarc, q: &[bool]) -> u32 {
    arc.heads
        .iter()
        .enumerate()
        .filter(|(_, &h)| !q[h])
        .fold(0, |m, (i, _)| m | 1 << i)
}

fn cut_value_raw(net: &Hypernet, rr: &ReceptionRates, q: &[bool]) -> f64 {
    net.arcs
        .iter()
        .enumerate()
        .filter(|(_, arc)| q[arc.tail])
        .map(|(a, arc)| {
            let out = outside_mask(arc, q);
            if out == 0 {
                0.0
            } else {
                rr.reaching(a, out)
            }
        })
        .sum()
}

/// Capacity of the cut whose source side is `q`.
pub fn cut_value(
    net: &Hypernet,
    rr: &ReceptionRates,
    s: NodeId,
    t: NodeId,
    q: &[bool],
) -> Result<f64, NetError> {
    if q.len() != net.num_nodes() {
        return Err(NetError::InvalidCut(format!("{} flags for {} nodes", q.len(), net.n)));
    }
    if !q[s] || q[t] {
        return Err(NetError::InvalidCut("source must be inside and sink outside".into()));
    }
    Ok(cut_value_raw(net, rr, q))
}

/// Minimum s–t cut and a witness source side. Exact enumeration up to
/// [`ENUM_CUT_LIMIT`] nodes, max-flow beyond.
pub fn min_cut(
    net: &Hypernet,
    rr: &ReceptionRates,
    s: NodeId,
    t: NodeId,
) -> Result<(f64, Vec<bool>), NetError> {
    check_pair(net, s, t)?;
    if net.num_nodes() <= ENUM_CUT_LIMIT {
        Ok(min_cut_enumerate(net, rr, s, t))
    } else {
        Ok(min_cut_flow(net, rr, s, t))
    }
}

fn check_pair(net: &Hypernet, s: NodeId, t: NodeId) -> Result<(), NetError> {
    for v in [s, t] {
        if v >= net.num_nodes() {
            return Err(NetError::BadNode(v));
        }
    }
    if s == t {
        return Err(NetError::InvalidCut("source equals sink".into()));
    }
    Ok(())
}

/// Exhaustive search over the 2^(n-2) cuts separating `s` from `t`.
pub fn min_cut_enumerate(
    net: &Hypernet,
    rr: &ReceptionRates,
    s: NodeId,
    t: NodeId,
) -> (f64, Vec<bool>) {
    let n = net.num_nodes();
    let free: Vec<NodeId> = (0..n).filter(|&v| v != s && v != t).collect();
    let mut q = vec![false; n];
    q[s] = true;
    let mut best = (f64::INFINITY, q.clone());
    for bits in 0u64..(1u64 << free.len()) {
        for (k, &v) in free.iter().enumerate() {
            q[v] = bits >> k & 1 == 1;
        }
        let val = cut_value_raw(net, rr, &q);
        if val < best.0 - 1e-15 {
            best = (val, q.clone());
        }
    }
    best
}

/// Minimum cut via max-flow on the graph where each reception subset of
/// each hyperarc becomes an intermediate vertex.
pub fn min_cut_flow(net: &Hypernet, rr: &ReceptionRates, s: NodeId, t: NodeId) -> (f64, Vec<bool>) {
    let n = net.num_nodes();
    let mut extra = 0;
    let mut edges = Vec::new();
    for (a, arc) in net.arcs.iter().enumerate() {
        for &(mask, rate) in &rr.zk[a] {
            if rate > 0.0 {
                let mid = n + extra;
                extra += 1;
                edges.push((arc.tail, mid, rate));
                for (h, &j) in arc.heads.iter().enumerate() {
                    if mask >> h & 1 == 1 {
                        edges.push((mid, j, f64::INFINITY));
                    }
                }
            }
        }
    }
    let mut d = Dinic::new(n + extra);
    for (u, v, c) in edges {
        d.add_edge(u, v, c);
    }
    let val = d.max_flow(s, t);
    let mut side = d.source_side(s);
    side.truncate(n);
    (val, side)
}

/// Per-sink flows `x[sink][arc][head]` for a single multicast source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowAssignment {
    pub source: NodeId,
    pub sinks: Vec<(NodeId, f64)>,
    pub x: Vec<Vec<Vec<f64>>>,
}

impl FlowAssignment {
    pub fn zeros(net: &Hypernet, source: NodeId, sinks: &[(NodeId, f64)]) -> Self {
        let per_sink: Vec<Vec<f64>> = net.arcs.iter().map(|a| vec![0.0; a.fanout()]).collect();
        FlowAssignment { source, sinks: sinks.to_vec(), x: vec![per_sink; sinks.len()] }
    }

    /// Node-to-node flow `x̂_{ij}` of sink `ti`, summed over hyperarcs.
    pub fn reduced(&self, net: &Hypernet, ti: usize) -> HashMap<(NodeId, NodeId), f64> {
        let mut out = HashMap::new();
        for (a, arc) in net.arcs.iter().enumerate() {
            for (h, &j) in arc.heads.iter().enumerate() {
                let v = self.x[ti][a][h];
                if v != 0.0 {
                    *out.entry((arc.tail, j)).or_insert(0.0) += v;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub max_violation: f64,
    pub first_violation: Option<String>,
}

/// Checks nonnegativity, conservation and the polymatroid reception bound
/// `Σ_{j∈K} x_{iJj} ≤ Σ_{L∩K≠∅} z_{iJL}` for every sink, arc and K.
pub fn flow_feasible(net: &Hypernet, rr: &ReceptionRates, fa: &FlowAssignment) -> FeasibilityReport {
    let mut worst: f64 = 0.0;
    let mut first = None;
    let mut note = |v: f64, msg: &dyn Fn() -> String| {
        if v > worst {
            worst = v;
        }
        if v > TOL && first.is_none() {
            first = Some(msg());
        }
    };
    for (ti, &(t, rate)) in fa.sinks.iter().enumerate() {
        let mut balance = vec![0.0; net.num_nodes()];
        for (a, arc) in net.arcs.iter().enumerate() {
            let xs = &fa.x[ti][a];
            for (h, &v) in xs.iter().enumerate() {
                note(-v, &|| format!("sink {t}: negative flow on {} head {h}", arc.label()));
                balance[arc.tail] += v;
                balance[arc.heads[h]] -= v;
            }
            for kmask in rr.bound_subsets(net, a) {
                let lhs: f64 =
                    (0..arc.fanout()).filter(|h| kmask >> h & 1 == 1).map(|h| xs[h]).sum();
                let rhs = rr.reaching(a, kmask);
                note(lhs - rhs, &|| {
                    format!("sink {t}: reception bound on {} subset {kmask:#b}", arc.label())
                });
            }
        }
        for (v, &b) in balance.iter().enumerate() {
            let want = if v == fa.source {
                rate
            } else if v == t {
                -rate
            } else {
                0.0
            };
            note((b - want).abs(), &|| format!("sink {t}: conservation at node {v}"));
        }
    }
    FeasibilityReport { feasible: worst <= TOL, max_violation: worst, first_violation: first }
}

/// Maximum s–t rate under conservation and the reception bounds, by LP.
pub fn max_flow_lp(
    net: &Hypernet,
    rr: &ReceptionRates,
    s: NodeId,
    t: NodeId,
) -> Result<(f64, FlowAssignment), NetError> {
    check_pair(net, s, t)?;
    let mut lp = LinearProgram::new(Sense::Maximize);
    let r = lp.add_var("R", 1.0, 0.0, f64::INFINITY);
    let mut vars = Vec::new();
    for arc in net.arcs.iter() {
        let ids: Vec<usize> = arc
            .heads
            .iter()
            .map(|&j| lp.add_var(format!("x[{}:{}]", arc.label(), j), 0.0, 0.0, f64::INFINITY))
            .collect();
        vars.push(ids);
    }
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); net.num_nodes()];
    for (a, arc) in net.arcs.iter().enumerate() {
        for (h, &j) in arc.heads.iter().enumerate() {
            rows[arc.tail].push((vars[a][h], 1.0));
            rows[j].push((vars[a][h], -1.0));
        }
        for kmask in rr.bound_subsets(net, a) {
            let terms: Vec<(usize, f64)> = (0..arc.fanout())
                .filter(|h| kmask >> h & 1 == 1)
                .map(|h| (vars[a][h], 1.0))
                .collect();
            lp.add_row(format!("cap[{}:{kmask}]", arc.label()), &terms, Cmp::Le, rr.reaching(a, kmask));
        }
    }
    for (v, mut terms) in rows.into_iter().enumerate() {
        if v == s {
            terms.push((r, -1.0));
        } else if v == t {
            terms.push((r, 1.0));
        }
        lp.add_row(format!("flow[{v}]"), &terms, Cmp::Eq, 0.0);
    }
    let sol = lp.solve()?;
    let rate = sol.values[r].max(0.0);
    let mut fa = FlowAssignment::zeros(net, s, &[(t, rate)]);
    for (a, ids) in vars.iter().enumerate() {
        for (h, &id) in ids.iter().enumerate() {
            fa.x[0][a][h] = sol.values[id].max(0.0);
        }
    }
    Ok((rate, fa))
}

/// Splits the flow of sink `ti` into s–t paths after cancelling cycles in
/// the node-to-node reduction.
pub fn flow_path_decompose(
    net: &Hypernet,
    fa: &FlowAssignment,
    ti: usize,
) -> Result<Vec<(Vec<NodeId>, f64)>, NetError> {
    let n = net.num_nodes();
    let (t, rate) = fa.sinks[ti];
    let s = fa.source;
    let mut flow = vec![0.0; n * n];
    for ((i, j), v) in fa.reduced(net, ti) {
        flow[i * n + j] += v;
    }
    // Net opposing pairs.
    for i in 0..n {
        for j in i + 1..n {
            let m = flow[i * n + j].min(flow[j * n + i]);
            flow[i * n + j] -= m;
            flow[j * n + i] -= m;
        }
    }
    for v in 0..n {
        let out: f64 = (0..n).map(|j| flow[v * n + j]).sum();
        let inn: f64 = (0..n).map(|i| flow[i * n + v]).sum();
        let want = if v == s {
            rate
        } else if v == t {
            -rate
        } else {
            0.0
        };
        if (out - inn - want).abs() > 1e-6 {
            return Err(NetError::Nonconservative { node: v, imbalance: out - inn - want });
        }
    }
    cancel_cycles(&mut flow, n);
    let mut paths = Vec::new();
    loop {
        let mut path = vec![s];
        let mut seen = vec![false; n];
        seen[s] = true;
        let mut u = s;
        while u != t {
            let Some(j) = (0..n).find(|&j| flow[u * n + j] > 1e-12 && !seen[j]) else {
                break;
            };
            seen[j] = true;
            path.push(j);
            u = j;
        }
        if u != t {
            break;
        }
        let bottleneck = path.windows(2).map(|w| flow[w[0] * n + w[1]]).fold(f64::INFINITY, f64::min);
        for w in path.windows(2) {
            flow[w[0] * n + w[1]] -= bottleneck;
        }
        paths.push((path, bottleneck));
    }
    Ok(paths)
}

fn cancel_cycles(flow: &mut [f64], n: usize) {
    // Repeated DFS: colour 1 = on stack.
    loop {
        let mut colour = vec![0u8; n];
        let mut parent = vec![usize::MAX; n];
        let mut found = None;
        'outer: for root in 0..n {
            if colour[root] != 0 {
                continue;
            }
            let mut stack = vec![(root, 0usize)];
            colour[root] = 1;
            while let Some(&mut (u, ref mut next)) = stack.last_mut() {
                if *next == n {
                    colour[u] = 2;
                    stack.pop();
                    continue;
                }
                let j = *next;
                *next += 1;
                if flow[u * n + j] <= 1e-12 {
                    continue;
                }
                match colour[j] {
                    0 => {
                        colour[j] = 1;
                        parent[j] = u;
                        stack.push((j, 0));
                    }
                    1 => {
                        found = Some((u, j));
                        break 'outer;
                    }
                    _ => {}
                }
            }
        }
        let Some((u, j)) = found else { return };
        let mut cycle = vec![(u, j)];
        let mut v = u;
        while v != j {
            cycle.push((parent[v], v));
            v = parent[v];
        }
        let m = cycle.iter().map(|&(a, b)| flow[a * n + b]).fold(f64::INFINITY, f64::min);
        for (a, b) in cycle {
            flow[a * n + b] -= m;
        }
    }
}

/// Contents of a hypergraph text file.
#[derive(Debug, Clone, Default)]
pub struct NetFile {
    pub net: Hypernet,
    pub z: Vec<Option<f64>>,
    pub p: Vec<Option<Vec<f64>>>,
    pub cost: Vec<Option<f64>>,
}

impl NetFile {
    /// Iid losses when any arc lists probabilities, lossless otherwise.
    pub fn loss_model(&self) -> LossModel {
        if self.p.iter().all(Option::is_none) {
            return LossModel::Lossless;
        }
        LossModel::Iid(
            self.net
                .arcs()
                .iter()
                .zip(&self.p)
                .map(|(arc, p)| p.clone().unwrap_or_else(|| vec![1.0; arc.fanout()]))
                .collect(),
        )
    }

    pub fn rates(&self, default: f64) -> Vec<f64> {
        self.z.iter().map(|z| z.unwrap_or(default)).collect()
    }
}

/// Parses lines of the form `i -> j1,j2,... [z=..] [p=..,..] [a=..]`.
/// Node tokens are names, numbered in order of first appearance. `#`
/// starts a comment.
pub fn parse_hypernet(text: &str) -> Result<NetFile, NetError> {
    let mut names: Vec<String> = Vec::new();
    let mut ids: HashMap<String, NodeId> = HashMap::new();
    let mut id_of = |s: &str, names: &mut Vec<String>| -> NodeId {
        *ids.entry(s.to_string()).or_insert_with(|| {
            names.push(s.to_string());
            names.len() - 1
        })
    };
    let mut raw = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line_no = ln + 1;
        let err = |msg: String| NetError::Parse { line: line_no, msg };
        let body = line.split('#').next().unwrap().trim();
        if body.is_empty() {
            continue;
        }
        let (lhs, rhs) = body.split_once("->").ok_or_else(|| err("missing '->'".into()))?;
        let tail = lhs.trim();
        if tail.is_empty() || tail.contains(char::is_whitespace) {
            return Err(err(format!("bad tail '{tail}'")));
        }
        let mut parts = rhs.split_whitespace();
        let heads_tok = parts.next().ok_or_else(|| err("missing heads".into()))?;
        let tail_id = id_of(tail, &mut names);
        let heads: Vec<NodeId> = heads_tok
            .split(',')
            .map(|h| {
                if h.is_empty() {
                    Err(err("empty head".into()))
                } else {
                    Ok(id_of(h, &mut names))
                }
            })
            .collect::<Result<_, _>>()?;
        let (mut z, mut p, mut cost) = (None, None, None);
        for attr in parts {
            let (key, val) = attr.split_once('=').ok_or_else(|| err(format!("bad attribute '{attr}'")))?;
            let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("bad number '{s}'")));
            match key {
                "z" => z = Some(num(val)?),
                "a" => cost = Some(num(val)?),
                "p" => p = Some(val.split(',').map(num).collect::<Result<Vec<_>, _>>()?),
                _ => return Err(err(format!("unknown attribute '{key}'"))),
            }
        }
        if let Some(p) = &p {
            if p.len() != heads.len() {
                return Err(err(format!("{} probabilities for {} heads", p.len(), heads.len())));
            }
            if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(err("probability outside [0, 1]".into()));
            }
        }
        raw.push((line_no, tail_id, heads, z, p, cost));
    }
    let mut file = NetFile { net: Hypernet::with_names(names), ..Default::default() };
    for (line, tail, heads, z, p, cost) in raw {
        // Probabilities follow the order written; reorder to sorted heads.
        let p = p.map(|p| {
            let mut pairs: Vec<(NodeId, f64)> = heads.iter().copied().zip(p).collect();
            pairs.sort_by_key(|x| x.0);
            pairs.into_iter().map(|x| x.1).collect()
        });
        file.net.add_arc(tail, &heads).map_err(|e| NetError::Parse { line, msg: e.to_string() })?;
        file.z.push(z);
        file.p.push(p);
        file.cost.push(cost);
    }
    Ok(file)
}

pub fn write_hypernet(file: &NetFile) -> String {
    let mut s = String::new();
    let net = &file.net;
    for (a, arc) in net.arcs().iter().enumerate() {
        let heads: Vec<String> = arc.heads.iter().map(|&h| net.name(h)).collect();
        let _ = write!(s, "{} -> {}", net.name(arc.tail), heads.join(","));
        if let Some(z) = file.z.get(a).copied().flatten() {
            let _ = write!(s, " z={z}");
        }
        if let Some(p) = file.p.get(a).cloned().flatten() {
            let ps: Vec<String> = p.iter().map(|v| v.to_string()).collect();
            let _ = write!(s, " p={}", ps.join(","));
        }
        if let Some(c) = file.cost.get(a).copied().flatten() {
            let _ = write!(s, " a={c}");
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tandem(rates: &[f64]) -> (Hypernet, ReceptionRates) {
        let mut net = Hypernet::new(rates.len() + 1);
        for i in 0..rates.len() {
            net.add_arc(i, &[i + 1]).unwrap();
        }
        let rr = reception_rates(&net, &LossModel::Lossless, rates).unwrap();
        (net, rr)
    }

    fn butterfly() -> Hypernet {
        // s=0, t1=5, t2=6.
        let mut net = Hypernet::new(7);
        for (i, j) in [(0, 1), (0, 2), (1, 3), (2, 3), (3, 4), (1, 5), (4, 5), (2, 6), (4, 6)] {
            net.add_arc(i, &[j]).unwrap();
        }
        net
    }

    #[test]
    fn arc_validation() {
        let mut net = Hypernet::new(3);
        assert_eq!(net.add_arc(0, &[]), Err(NetError::EmptyHeads(0)));
        assert_eq!(net.add_arc(0, &[0, 1]), Err(NetError::SelfLoop(0)));
        assert_eq!(net.add_arc(0, &[7]), Err(NetError::BadNode(7)));
        net.add_arc(0, &[2, 1]).unwrap();
        assert!(matches!(net.add_arc(0, &[1, 2]), Err(NetError::Duplicate(_))));
        assert_eq!(net.find_arc(0, &[2, 1]), Some(0));
    }

    #[test]
    fn lossless_and_iid_rates() {
        let mut net = Hypernet::new(3);
        net.add_arc(0, &[1, 2]).unwrap();
        let rr = reception_rates(&net, &LossModel::Lossless, &[1.0]).unwrap();
        assert_eq!(rr.zk[0], vec![(3, 1.0)]);
        let iid = LossModel::Iid(vec![vec![0.5, 0.5]]);
        let rr = reception_rates(&net, &iid, &[1.0]).unwrap();
        assert_eq!(rr.zk[0], vec![(1, 0.25), (2, 0.25), (3, 0.25)]);
        assert!((rr.b(0, 0b01) - 0.5).abs() < 1e-15);
        assert!((rr.b(0, 0b11) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn aloha_rates() {
        let net = aloha_relay_net();
        let p = AlohaParams::reference();
        let z = [0.4, 0.3];
        let rr = reception_rates(&net, &LossModel::AlohaRelay(p), &z).unwrap();
        assert_eq!(rr.zk[0].iter().map(|e| e.0).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert!((rr.zk[0][0].1 - 0.4 * 0.7 * p.p12).abs() < 1e-15);
        assert!((rr.zk[0][1].1 - 0.4 * 0.7 * p.p13).abs() < 1e-15);
        assert!((rr.zk[0][2].1 - 0.4 * 0.7 * p.p1both).abs() < 1e-15);
        assert!((rr.zk[1][0].1 - 0.6 * 0.3 * p.p233).abs() < 1e-15);
    }

    #[test]
    fn tandem_cuts() {
        let (net, rr) = tandem(&[0.5, 0.3, 0.4]);
        assert_eq!(cut_value(&net, &rr, 0, 3, &[true, false, false, false]).unwrap(), 0.5);
        assert_eq!(cut_value(&net, &rr, 0, 3, &[true, true, false, false]).unwrap(), 0.3);
        assert!(cut_value(&net, &rr, 0, 3, &[false, true, false, false]).is_err());
        let (v, w) = min_cut(&net, &rr, 0, 3).unwrap();
        assert!((v - 0.3).abs() < 1e-15);
        assert_eq!(w, vec![true, true, false, false]);
        assert!((min_cut_flow(&net, &rr, 0, 3).0 - 0.3).abs() < 1e-12);
        let (r, fa) = max_flow_lp(&net, &rr, 0, 3).unwrap();
        assert!((r - 0.3).abs() < 1e-9);
        assert!(flow_feasible(&net, &rr, &fa).feasible);
    }

    #[test]
    fn butterfly_min_cut_two() {
        let net = butterfly();
        let rr = reception_rates(&net, &LossModel::Lossless, &vec![1.0; net.num_arcs()]).unwrap();
        for t in [5, 6] {
            assert!((min_cut(&net, &rr, 0, t).unwrap().0 - 2.0).abs() < 1e-12);
            assert!((max_flow_lp(&net, &rr, 0, t).unwrap().0 - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_forward_set() {
        let mut net = Hypernet::new(3);
        net.add_arc(1, &[2]).unwrap();
        let rr = reception_rates(&net, &LossModel::Lossless, &[1.0]).unwrap();
        assert_eq!(cut_value(&net, &rr, 0, 2, &[true, false, false]).unwrap(), 0.0);
        let (v, _) = min_cut(&net, &rr, 0, 2).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(max_flow_lp(&net, &rr, 0, 2).unwrap().0, 0.0);
    }

    #[test]
    fn feasibility_detects_bottleneck() {
        let (net, rr) = tandem(&[1.0, 0.5]);
        let mut fa = FlowAssignment::zeros(&net, 0, &[(2, 0.0)]);
        assert!(flow_feasible(&net, &rr, &fa).feasible);
        fa.sinks[0].1 = 0.5;
        fa.x[0][0][0] = 0.5;
        fa.x[0][1][0] = 0.5;
        assert!(flow_feasible(&net, &rr, &fa).feasible);
        fa.sinks[0].1 = 0.7;
        fa.x[0][0][0] = 0.7;
        fa.x[0][1][0] = 0.7;
        let rep = flow_feasible(&net, &rr, &fa);
        assert!(!rep.feasible);
        assert!(rep.first_violation.unwrap().contains("1->2"));
    }

    #[test]
    fn path_decomposition() {
        let net = butterfly();
        let mut fa = FlowAssignment::zeros(&net, 0, &[(5, 1.0)]);
        assert!(flow_path_decompose(&net, &fa, 0).is_err());
        // Half on 0-1-5, half on 0-2-3-4-5.
        let set = |fa: &mut FlowAssignment, i, j, v| {
            let a = net.find_arc(i, &[j]).unwrap();
            fa.x[0][a][0] = v;
        };
        for (i, j) in [(0, 1), (1, 5)] {
            set(&mut fa, i, j, 0.5);
        }
        for (i, j) in [(0, 2), (2, 3), (3, 4), (4, 5)] {
            set(&mut fa, i, j, 0.5);
        }
        let paths = flow_path_decompose(&net, &fa, 0).unwrap();
        let total: f64 = paths.iter().map(|p| p.1).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(paths.len(), 2);
        let zero = FlowAssignment::zeros(&net, 0, &[(5, 0.0)]);
        assert!(flow_path_decompose(&net, &zero, 0).unwrap().is_empty());
    }

    #[test]
    fn cycle_is_cancelled() {
        let mut net = Hypernet::new(4);
        for (i, j) in [(0, 1), (1, 2), (2, 1), (2, 3)] {
            net.add_arc(i, &[j]).unwrap();
        }
        let mut fa = FlowAssignment::zeros(&net, 0, &[(3, 1.0)]);
        fa.x[0][0][0] = 1.0;
        fa.x[0][1][0] = 1.5;
        fa.x[0][2][0] = 0.5;
        fa.x[0][3][0] = 1.0;
        let paths = flow_path_decompose(&net, &fa, 0).unwrap();
        assert_eq!(paths, vec![(vec![0, 1, 2, 3], 1.0)]);
    }

    #[test]
    fn text_format_round_trip() {
        let text = "# relay\nA -> B,C z=0.5 p=0.9,0.2\nB -> C a=2\n";
        let f = parse_hypernet(text).unwrap();
        assert_eq!(f.net.num_nodes(), 3);
        assert_eq!(f.z, vec![Some(0.5), None]);
        assert_eq!(f.cost, vec![None, Some(2.0)]);
        let again = parse_hypernet(&write_hypernet(&f)).unwrap();
        assert_eq!(again.net.arcs(), f.net.arcs());
        assert_eq!(again.p, f.p);
        let reordered = parse_hypernet("X -> B,C\nA -> C,B p=0.2,0.9\n").unwrap();
        assert_eq!(reordered.p[1], Some(vec![0.9, 0.2]));
        assert!(matches!(parse_hypernet("A B\n"), Err(NetError::Parse { line: 1, .. })));
        assert!(matches!(parse_hypernet("\nA -> B q=1\n"), Err(NetError::Parse { line: 2, .. })));
    }
}
