//! Routed baselines and random instances for the comparison studies.
//!
//! Three settings are covered: lossy wireless unicast under Rayleigh
//! fading, wireline multicast against a directed Steiner tree heuristic, and
//! lossless wireless multicast against multicast incremental power.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist_opt::bellman_ford;
use crate::netmodel::{Hypernet, LossModel, NetError, NodeId};
use crate::subgraph_opt::{
    build_lossless, build_lossy, build_nested, solve_reference, MulticastSpec, NestedReach, SubgraphError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("node {0} is unreachable from the source")]
    Unreachable(NodeId),
    #[error("link with zero success probability")]
    ZeroProbability,
    #[error("invalid input: {0}")]
    Input(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Subgraph(#[from] SubgraphError),
}

/// Attenuation exponent of the fading model.
pub const ALPHA: f64 = 2.0;
/// SNR threshold of the fading model.
pub const BETA: f64 = 0.25;
/// Side of the square used by the energy study.
pub const ENERGY_SIDE: f64 = 10.0;
/// Connectivity radius of the energy study.
pub const ENERGY_RADIUS: f64 = 3.0;
/// Most receivers kept per hyperarc in the lossy study.
pub const FADING_FANOUT: usize = 8;

/// `P(γ d^{-α} >= β)` for unit-mean exponential `γ`.
pub fn fading_success(d: f64) -> f64 {
    (-BETA * d.powf(ALPHA)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeoVariant {
    FadingUnicast,
    EnergyMulticast,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeometricNet {
    pub variant: GeoVariant,
    pub positions: Vec<(f64, f64)>,
    pub net: Hypernet,
    /// Per-head success for the fading variant, lossless otherwise.
    pub loss: LossModel,
    /// Per-hyperarc cost: 1 per transmission, or `d²` to the farthest head.
    pub cost: Vec<f64>,
    pub radius: Option<f64>,
}

impl GeometricNet {
    pub fn dist(&self, i: NodeId, j: NodeId) -> f64 {
        let (a, b) = (self.positions[i], self.positions[j]);
        ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
    }

    pub fn num_nodes(&self) -> usize {
        self.positions.len()
    }

    /// Undirected connectivity graph: every pair for the fading variant,
    /// pairs within the radius otherwise.
    pub fn linked(&self, i: NodeId, j: NodeId) -> bool {
        i != j && self.radius.is_none_or(|r| self.dist(i, j) <= r)
    }

    /// Nodes reachable from `s` over the connectivity graph.
    pub fn reachable(&self, s: NodeId) -> Vec<bool> {
        let n = self.num_nodes();
        let mut seen = vec![false; n];
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(u) = stack.pop() {
            for v in 0..n {
                if !seen[v] && self.linked(u, v) {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    }
}

/// Places `n` nodes uniformly at random. The fading variant uses a square of
/// area `n` and one broadcast hyperarc per node to its nearest
/// [`FADING_FANOUT`] neighbors; the energy variant uses the 10 x 10 square
/// and nested hyperarcs, one per transmit radius up to 3.
pub fn gen_geometric(n: usize, seed: u64, variant: GeoVariant) -> Result<GeometricNet, BaselineError> {
    if n < 2 {
        return Err(BaselineError::Input("need at least two nodes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = match variant {
        GeoVariant::FadingUnicast => (n as f64).sqrt(),
        GeoVariant::EnergyMulticast => ENERGY_SIDE,
    };
    let positions: Vec<(f64, f64)> = (0..n).map(|_| (rng.random::<f64>() * side, rng.random::<f64>() * side)).collect();
    geometric_from_positions(positions, variant)
}

pub fn geometric_from_positions(
    positions: Vec<(f64, f64)>,
    variant: GeoVariant,
) -> Result<GeometricNet, BaselineError> {
    let n = positions.len();
    let d = |i: usize, j: usize| {
        let (a, b) = (positions[i], positions[j]);
        ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
    };
    let mut net = Hypernet::new(n);
    let mut cost = Vec::new();
    let mut probs = Vec::new();
    for i in 0..n {
        let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        others.sort_by(|&a, &b| d(i, a).total_cmp(&d(i, b)).then(a.cmp(&b)));
        match variant {
            GeoVariant::FadingUnicast => {
                others.truncate(FADING_FANOUT);
                let a = net.add_arc(i, &others)?;
                let heads = net.arc(a).heads.clone();
                probs.push(heads.iter().map(|&j| fading_success(d(i, j))).collect());
                cost.push(1.0);
            }
            GeoVariant::EnergyMulticast => {
                others.retain(|&j| d(i, j) <= ENERGY_RADIUS);
                let mut k = 0;
                while k < others.len() {
                    // Equidistant neighbors join the same hyperarc.
                    let r = d(i, others[k]);
                    while k + 1 < others.len() && d(i, others[k + 1]) <= r {
                        k += 1;
                    }
                    net.add_arc(i, &others[..=k])?;
                    cost.push(r * r);
                    k += 1;
                }
            }
        }
    }
    let (loss, radius) = match variant {
        GeoVariant::FadingUnicast => (LossModel::Iid(probs), None),
        GeoVariant::EnergyMulticast => (LossModel::Lossless, Some(ENERGY_RADIUS)),
    };
    Ok(GeometricNet { variant, positions, net, loss, cost, radius })
}

/// Draws a source and `k` distinct sinks all reachable from the source,
/// retrying with fresh draws up to 1000 times.
pub fn pick_terminals<R: Rng>(
    geo: &GeometricNet,
    k: usize,
    rng: &mut R,
) -> Result<(NodeId, Vec<NodeId>), BaselineError> {
    let n = geo.num_nodes();
    if k + 1 > n {
        return Err(BaselineError::Input("more terminals than nodes".into()));
    }
    for _ in 0..1000 {
        let s = rng.random_range(0..n);
        let reach = geo.reachable(s);
        let pool: Vec<usize> = (0..n).filter(|&v| v != s && reach[v]).collect();
        if pool.len() >= k {
            let mut sinks: Vec<usize> = sample(rng, pool.len(), k).into_iter().map(|i| pool[i]).collect();
            sinks.sort_unstable();
            return Ok((s, sinks));
        }
    }
    Err(BaselineError::Input("no connected terminal set found".into()))
}

/// A geometric network on which `k` sinks reachable from a common source
/// exist, together with such terminals. Network seeds `seed`, `seed + 1`,
/// ... are tried in turn; terminals come from an RNG seeded with the
/// network seed. Returns the network seed that succeeded.
pub fn gen_with_terminals(
    n: usize,
    seed: u64,
    variant: GeoVariant,
    k: usize,
) -> Result<(GeometricNet, NodeId, Vec<NodeId>, u64), BaselineError> {
    if k + 1 > n {
        return Err(BaselineError::Input("more terminals than nodes".into()));
    }
    for j in 0..1000u64 {
        let net_seed = seed.wrapping_add(j);
        let geo = gen_geometric(n, net_seed, variant)?;
        let mut rng = ChaCha8Rng::seed_from_u64(net_seed);
        if let Ok((s, t)) = pick_terminals(&geo, k, &mut rng) {
            return Ok((geo, s, t, net_seed));
        }
    }
    Err(BaselineError::Input("no connected terminal set found".into()))
}

/// Minimum-energy coded multicast at unit rate via the nested formulation.
pub fn coded_energy(geo: &GeometricNet, s: NodeId, sinks: &[NodeId]) -> Result<f64, BaselineError> {
    let spec = MulticastSpec::linear(s, sinks, 1.0, &geo.cost);
    let reach = NestedReach::from_net(&geo.net, &spec.cost)?;
    Ok(solve_reference(&build_nested(&geo.net, &spec, &reach)?)?.cost)
}

/// A directed tree given by its arcs and total cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeSolution {
    pub arcs: Vec<(NodeId, NodeId)>,
    pub cost: f64,
}

impl TreeSolution {
    /// Every node has in-degree at most one, the root none, and every sink
    /// is reached.
    pub fn is_valid(&self, root: NodeId, sinks: &[NodeId]) -> bool {
        let mut parent: HashMap<NodeId, NodeId> = HashMap::new();
        for &(u, v) in &self.arcs {
            if v == root || parent.insert(v, u).is_some() {
                return false;
            }
        }
        sinks.iter().all(|&t| {
            let mut v = t;
            for _ in 0..=self.arcs.len() {
                if v == root {
                    return true;
                }
                match parent.get(&v) {
                    Some(&u) => v = u,
                    None => return false,
                }
            }
            false
        })
    }

    /// Leaves that are not sinks; empty for a pruned tree.
    pub fn prunable_leaves(&self, sinks: &[NodeId]) -> Vec<NodeId> {
        let tails: BTreeSet<NodeId> = self.arcs.iter().map(|a| a.0).collect();
        self.arcs.iter().map(|a| a.1).filter(|v| !tails.contains(v) && !sinks.contains(v)).collect()
    }
}

/// Weighted digraph for wireline studies.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Digraph {
    pub names: Vec<String>,
    pub arcs: Vec<(NodeId, NodeId, f64)>,
}

impl Digraph {
    pub fn new(n: usize) -> Self {
        Digraph { names: (0..n).map(|i| i.to_string()).collect(), arcs: Vec::new() }
    }

    pub fn num_nodes(&self) -> usize {
        self.names.len()
    }

    fn node(&mut self, name: &str, index: &mut HashMap<String, NodeId>) -> NodeId {
        *index.entry(name.to_string()).or_insert_with(|| {
            self.names.push(name.to_string());
            self.names.len() - 1
        })
    }

    /// Simple-arc hypernetwork and matching linear costs. Parallel arcs keep
    /// the cheapest weight.
    pub fn to_hypernet(&self) -> Result<(Hypernet, Vec<f64>), BaselineError> {
        let mut best: HashMap<(NodeId, NodeId), f64> = HashMap::new();
        for &(u, v, w) in &self.arcs {
            if u != v {
                let e = best.entry((u, v)).or_insert(w);
                *e = e.min(w);
            }
        }
        let mut keys: Vec<_> = best.keys().copied().collect();
        keys.sort_unstable();
        let mut net = Hypernet::with_names(self.names.clone());
        let mut cost = Vec::new();
        for (u, v) in keys {
            net.add_arc(u, &[v])?;
            cost.push(best[&(u, v)]);
        }
        Ok((net, cost))
    }

    /// All-pairs shortest distances and predecessor trees.
    fn closure(&self) -> Vec<crate::dist_opt::BellmanFord> {
        (0..self.num_nodes()).map(|s| bellman_ford(self.num_nodes(), &self.arcs, s)).collect()
    }
}

/// Parses whitespace-separated `endpoint endpoint weight` lines. Blank
/// lines and lines starting with `#` are skipped.
pub fn load_rocketfuel(text: &str) -> Result<Digraph, BaselineError> {
    let mut g = Digraph::default();
    let mut index = HashMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        let err = |msg: &str| BaselineError::Parse { line: k + 1, msg: msg.to_string() };
        if tok.len() != 3 {
            return Err(err("expected two endpoints and a weight"));
        }
        let w: f64 = tok[2].parse().map_err(|_| err("weight is not a number"))?;
        if !(w > 0.0 && w.is_finite()) {
            return Err(err("weight must be positive"));
        }
        let u = g.node(tok[0], &mut index);
        let v = g.node(tok[1], &mut index);
        g.arcs.push((u, v, w));
    }
    Ok(g)
}

pub fn write_rocketfuel(g: &Digraph) -> String {
    let mut out = String::new();
    for &(u, v, w) in &g.arcs {
        let _ = writeln!(out, "{} {} {}", g.names[u], g.names[v], w);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub nodes: usize,
    pub arcs: usize,
    pub min_weight: f64,
    pub max_weight: f64,
    pub mean_weight: f64,
}

pub fn summarize(g: &Digraph) -> GraphSummary {
    let ws: Vec<f64> = g.arcs.iter().map(|a| a.2).collect();
    let mean = if ws.is_empty() { 0.0 } else { ws.iter().sum::<f64>() / ws.len() as f64 };
    GraphSummary {
        nodes: g.num_nodes(),
        arcs: ws.len(),
        min_weight: ws.iter().copied().fold(f64::INFINITY, f64::min),
        max_weight: ws.iter().copied().fold(0.0, f64::max),
        mean_weight: mean,
    }
}

/// Connected random topology in the style of an ISP map: a random spanning
/// tree plus Waxman-like extra links, weights in 1..=10, both directions.
pub fn synthetic_isp(n: usize, extra_degree: f64, seed: u64) -> Digraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pos: Vec<(f64, f64)> = (0..n).map(|_| (rng.random(), rng.random())).collect();
    let mut links: BTreeSet<(usize, usize)> = BTreeSet::new();
    for v in 1..n {
        let u = rng.random_range(0..v);
        links.insert((u, v));
    }
    let target = (extra_degree * n as f64 / 2.0).round() as usize;
    let mut tries = 0;
    while links.len() < n.saturating_sub(1) + target && tries < 100 * n * n.max(1) {
        tries += 1;
        let (u, v) = (rng.random_range(0..n), rng.random_range(0..n));
        if u == v {
            continue;
        }
        let d = ((pos[u].0 - pos[v].0).powi(2) + (pos[u].1 - pos[v].1).powi(2)).sqrt();
        if rng.random::<f64>() < (-d / 0.3).exp() {
            links.insert((u.min(v), u.max(v)));
        }
    }
    let mut g = Digraph::new(n);
    for (u, v) in links {
        let w = rng.random_range(1..=10) as f64;
        g.arcs.push((u, v, w));
        g.arcs.push((v, u, w));
    }
    g
}

/// Coded minimum-weight multicast at unit rate.
pub fn coded_weight(g: &Digraph, s: NodeId, sinks: &[NodeId]) -> Result<f64, BaselineError> {
    let (net, cost) = g.to_hypernet()?;
    let spec = MulticastSpec::linear(s, sinks, 1.0, &cost);
    Ok(solve_reference(&build_lossless(&net, &spec)?)?.cost)
}

/// Tree over metric-closure edges, kept as `(u, v)` pairs.
#[derive(Debug, Clone, Default)]
struct ClosureTree {
    edges: Vec<(NodeId, NodeId)>,
    cost: f64,
    covered: Vec<NodeId>,
}

impl ClosureTree {
    fn density(&self) -> f64 {
        if self.covered.is_empty() {
            f64::INFINITY
        } else {
            self.cost / self.covered.len() as f64
        }
    }
}

/// Recursive greedy directed Steiner tree heuristic at level `level`
/// (level 1 joins the closest terminals by shortest paths).
pub fn dst_approx(g: &Digraph, s: NodeId, sinks: &[NodeId], level: usize) -> Result<TreeSolution, BaselineError> {
    if level == 0 {
        return Err(BaselineError::Input("level must be at least 1".into()));
    }
    if g.arcs.iter().any(|a| !(a.2 > 0.0)) {
        return Err(BaselineError::Input("arc weights must be positive".into()));
    }
    let cl = g.closure();
    for &t in sinks {
        if !cl[s].dist[t].is_finite() {
            return Err(BaselineError::Unreachable(t));
        }
    }
    let terms: Vec<NodeId> = sinks.iter().copied().filter(|&t| t != s).collect::<BTreeSet<_>>().into_iter().collect();
    let tree = greedy(&cl, level, terms.len(), s, &terms);
    // Expand closure edges into shortest paths, then keep a pruned
    // shortest-path tree of the union.
    let mut used: BTreeSet<(NodeId, NodeId)> = BTreeSet::new();
    for &(u, v) in &tree.edges {
        let path = cl[u].path_to(v).ok_or(BaselineError::Unreachable(v))?;
        for w in path.windows(2) {
            used.insert((w[0], w[1]));
        }
    }
    let weight: HashMap<(NodeId, NodeId), f64> = g.arcs.iter().fold(HashMap::new(), |mut m, &(u, v, w)| {
        let e = m.entry((u, v)).or_insert(w);
        *e = e.min(w);
        m
    });
    let sub: Vec<(NodeId, NodeId, f64)> = used.iter().map(|&(u, v)| (u, v, weight[&(u, v)])).collect();
    let bf = bellman_ford(g.num_nodes(), &sub, s);
    let mut keep: BTreeSet<(NodeId, NodeId)> = BTreeSet::new();
    for &t in &terms {
        let path = bf.path_to(t).ok_or(BaselineError::Unreachable(t))?;
        for w in path.windows(2) {
            keep.insert((w[0], w[1]));
        }
    }
    let arcs: Vec<(NodeId, NodeId)> = keep.into_iter().collect();
    let cost = arcs.iter().map(|a| weight[a]).sum();
    Ok(TreeSolution { arcs, cost })
}

fn greedy(cl: &[crate::dist_opt::BellmanFord], level: usize, k: usize, r: NodeId, x: &[NodeId]) -> ClosureTree {
    let d = |u: NodeId, v: NodeId| cl[u].dist[v];
    if level == 1 || k == 0 {
        let mut near: Vec<NodeId> = x.iter().copied().filter(|&t| d(r, t).is_finite()).collect();
        near.sort_by(|&a, &b| d(r, a).total_cmp(&d(r, b)).then(a.cmp(&b)));
        near.truncate(k);
        return ClosureTree {
            edges: near.iter().map(|&t| (r, t)).collect(),
            cost: near.iter().map(|&t| d(r, t)).sum(),
            covered: near,
        };
    }
    let mut tree = ClosureTree::default();
    let mut left: Vec<NodeId> = x.to_vec();
    let mut need = k;
    while need > 0 {
        let mut best = ClosureTree::default();
        for v in 0..cl.len() {
            if !d(r, v).is_finite() {
                continue;
            }
            for kk in 1..=need {
                let mut sub = greedy(cl, level - 1, kk, v, &left);
                if sub.covered.is_empty() {
                    continue;
                }
                if v != r {
                    sub.edges.push((r, v));
                    sub.cost += d(r, v);
                }
                if sub.density() < best.density() {
                    best = sub;
                }
            }
        }
        if best.covered.is_empty() {
            break;
        }
        need = need.saturating_sub(best.covered.len());
        left.retain(|t| !best.covered.contains(t));
        tree.edges.extend(best.edges);
        tree.cost += best.cost;
        tree.covered.extend(best.covered);
    }
    tree
}

/// Exhaustive minimum Steiner arborescence for tiny graphs (at most 20 arcs).
pub fn steiner_exact(g: &Digraph, s: NodeId, sinks: &[NodeId]) -> Result<f64, BaselineError> {
    let m = g.arcs.len();
    if m > 20 {
        return Err(BaselineError::Input("exhaustive search limited to 20 arcs".into()));
    }
    let n = g.num_nodes();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << m) {
        let cost: f64 = (0..m).filter(|&a| mask >> a & 1 == 1).map(|a| g.arcs[a].2).sum();
        if cost >= best {
            continue;
        }
        let mut seen = vec![false; n];
        seen[s] = true;
        let mut grew = true;
        while grew {
            grew = false;
            for a in (0..m).filter(|&a| mask >> a & 1 == 1) {
                let (u, v, _) = g.arcs[a];
                if seen[u] && !seen[v] {
                    seen[v] = true;
                    grew = true;
                }
            }
        }
        if sinks.iter().all(|&t| seen[t]) {
            best = cost;
        }
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(BaselineError::Unreachable(sinks[0]))
    }
}

/// Multicast incremental power on the energy network: grow a broadcast
/// tree by the cheapest incremental-power attachment, then drop
/// transmissions that feed no sink.
pub fn mip_multicast(geo: &GeometricNet, s: NodeId, sinks: &[NodeId]) -> Result<TreeSolution, BaselineError> {
    let n = geo.num_nodes();
    let mut parent: Vec<Option<NodeId>> = vec![None; n];
    let mut power = vec![0.0f64; n];
    let mut in_tree = vec![false; n];
    in_tree[s] = true;
    loop {
        let mut best: Option<(f64, NodeId, NodeId)> = None;
        for i in (0..n).filter(|&i| in_tree[i]) {
            for j in (0..n).filter(|&j| !in_tree[j] && geo.linked(i, j)) {
                let inc = (geo.dist(i, j).powi(2) - power[i]).max(0.0);
                if best.is_none_or(|b| (inc, i, j) < b) {
                    best = Some((inc, i, j));
                }
            }
        }
        let Some((_, i, j)) = best else { break };
        in_tree[j] = true;
        parent[j] = Some(i);
        power[i] = power[i].max(geo.dist(i, j).powi(2));
    }
    for &t in sinks {
        if !in_tree[t] {
            return Err(BaselineError::Unreachable(t));
        }
    }
    let mut needed = vec![false; n];
    for &t in sinks {
        let mut v = t;
        while !needed[v] && v != s {
            needed[v] = true;
            v = parent[v].expect("tree node has a parent");
        }
    }
    let mut arcs = Vec::new();
    let mut tx = vec![0.0f64; n];
    for v in (0..n).filter(|&v| needed[v]) {
        let u = parent[v].expect("tree node has a parent");
        arcs.push((u, v));
        tx[u] = tx[u].max(geo.dist(u, v).powi(2));
    }
    arcs.sort_unstable();
    Ok(TreeSolution { arcs, cost: tx.iter().sum() })
}

/// Hyperarc rates `z` implementing a MIP tree on the energy network.
pub fn mip_subgraph(geo: &GeometricNet, tree: &TreeSolution) -> Vec<f64> {
    let mut z = vec![0.0; geo.net.num_arcs()];
    let mut reach: HashMap<NodeId, f64> = HashMap::new();
    for &(u, v) in &tree.arcs {
        let e = reach.entry(u).or_insert(0.0);
        *e = e.max(geo.dist(u, v));
    }
    for (&u, &r) in &reach {
        let a = geo
            .net
            .out_arcs(u)
            .filter(|&a| geo.cost[a] >= r * r - 1e-9)
            .min_by(|&a, &b| geo.cost[a].total_cmp(&geo.cost[b]));
        if let Some(a) = a {
            z[a] = 1.0;
        }
    }
    z
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Approach {
    EndToEndRetransmission,
    EndToEndCoding,
    LinkRetransmission,
    PathCoding,
    FullCoding,
}

impl Approach {
    pub const ALL: [Approach; 5] = [
        Approach::EndToEndRetransmission,
        Approach::EndToEndCoding,
        Approach::LinkRetransmission,
        Approach::PathCoding,
        Approach::FullCoding,
    ];

    pub fn from_index(k: usize) -> Option<Self> {
        Self::ALL.get(k.checked_sub(1)?).copied()
    }

    pub fn name(&self) -> &'static str {
        match self {
            Approach::EndToEndRetransmission => "end_to_end_retransmission",
            Approach::EndToEndCoding => "end_to_end_coding",
            Approach::LinkRetransmission => "link_retransmission",
            Approach::PathCoding => "path_coding",
            Approach::FullCoding => "full_coding",
        }
    }

    /// Selector used in the study: source transmissions for the end-to-end
    /// approaches, total transmissions otherwise.
    pub fn default_selector(&self) -> PathSelector {
        match self {
            Approach::EndToEndRetransmission | Approach::EndToEndCoding => PathSelector::MinSource,
            _ => PathSelector::MinTotal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathSelector {
    MinTotal,
    MinSource,
}

/// Expected data transmissions per delivered packet on a path with
/// forward success `p[l]` and reverse (ack) success `ack[l]` per hop.
/// Acknowledgments are not counted as transmissions.
pub fn path_cost(approach: Approach, p: &[f64], ack: &[f64]) -> Result<f64, BaselineError> {
    if p.len() != ack.len() {
        return Err(BaselineError::Input("one ack probability per hop".into()));
    }
    if p.iter().chain(ack).any(|&v| v <= 0.0) {
        return Err(BaselineError::ZeroProbability);
    }
    let reach: Vec<f64> = p
        .iter()
        .scan(1.0, |acc, &v| {
            let before = *acc;
            *acc *= v;
            Some(before)
        })
        .collect();
    let per_attempt: f64 = reach.iter().sum();
    let deliver: f64 = p.iter().product();
    Ok(match approach {
        Approach::PathCoding => p.iter().map(|v| 1.0 / v).sum(),
        Approach::LinkRetransmission => p.iter().zip(ack).map(|(a, b)| 1.0 / (a * b)).sum(),
        Approach::EndToEndCoding => per_attempt / deliver,
        Approach::EndToEndRetransmission => per_attempt / (deliver * ack.iter().product::<f64>()),
        Approach::FullCoding => return Err(BaselineError::Input("full coding has no path form".into())),
    })
}

/// Transmissions by the source per delivered packet.
pub fn source_cost(approach: Approach, p: &[f64], ack: &[f64]) -> f64 {
    let deliver: f64 = p.iter().product();
    match approach {
        Approach::EndToEndRetransmission => 1.0 / (deliver * ack.iter().product::<f64>()),
        Approach::EndToEndCoding => 1.0 / deliver,
        Approach::LinkRetransmission => 1.0 / (p[0] * ack[0]),
        Approach::PathCoding | Approach::FullCoding => 1.0 / p[0],
    }
}

fn hop_probs(geo: &GeometricNet, path: &[NodeId]) -> (Vec<f64>, Vec<f64>) {
    let p: Vec<f64> = path.windows(2).map(|w| fading_success(geo.dist(w[0], w[1]))).collect();
    // Distances are symmetric, so acks see the forward success probability.
    (p.clone(), p)
}

/// Largest node count for exhaustive simple-path search.
pub const EXHAUSTIVE_PATH_NODES: usize = 12;

/// Best `s`-`t` path for an approach and selector, with its total cost.
pub fn best_path(
    geo: &GeometricNet,
    s: NodeId,
    t: NodeId,
    approach: Approach,
    selector: PathSelector,
) -> Result<(Vec<NodeId>, f64), BaselineError> {
    let n = geo.num_nodes();
    if s >= n || t >= n || s == t {
        return Err(BaselineError::Input("bad endpoints".into()));
    }
    let weighted = |w: &dyn Fn(f64) -> f64| -> Result<Vec<NodeId>, BaselineError> {
        let arcs: Vec<(NodeId, NodeId, f64)> = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .filter(|&(i, j)| geo.linked(i, j))
            .map(|(i, j)| (i, j, w(fading_success(geo.dist(i, j)))))
            .collect();
        bellman_ford(n, &arcs, s).path_to(t).ok_or(BaselineError::Unreachable(t))
    };
    let path = match (approach, selector) {
        (Approach::FullCoding, _) => return Err(BaselineError::Input("full coding has no path".into())),
        (Approach::PathCoding, PathSelector::MinTotal) => weighted(&|p| 1.0 / p)?,
        (Approach::LinkRetransmission, PathSelector::MinTotal) => weighted(&|p| 1.0 / (p * p))?,
        (Approach::EndToEndCoding, PathSelector::MinSource) => weighted(&|p| -p.ln())?,
        (Approach::EndToEndRetransmission, PathSelector::MinSource) => weighted(&|p| -2.0 * p.ln())?,
        _ => exhaustive_path(geo, s, t, approach, selector)?,
    };
    let (p, a) = hop_probs(geo, &path);
    let c = path_cost(approach, &p, &a)?;
    Ok((path, c))
}

fn exhaustive_path(
    geo: &GeometricNet,
    s: NodeId,
    t: NodeId,
    approach: Approach,
    selector: PathSelector,
) -> Result<Vec<NodeId>, BaselineError> {
    let n = geo.num_nodes();
    if n > EXHAUSTIVE_PATH_NODES {
        return Err(BaselineError::Input(format!("exhaustive path search limited to {EXHAUSTIVE_PATH_NODES} nodes")));
    }
    let mut best: Option<((f64, f64), Vec<NodeId>)> = None;
    let mut path = vec![s];
    let mut on = vec![false; n];
    on[s] = true;
    fn rec(
        geo: &GeometricNet,
        t: NodeId,
        approach: Approach,
        selector: PathSelector,
        path: &mut Vec<NodeId>,
        on: &mut Vec<bool>,
        best: &mut Option<((f64, f64), Vec<NodeId>)>,
    ) {
        let u = *path.last().unwrap();
        if u == t {
            let (p, a) = hop_probs(geo, path);
            let total = path_cost(approach, &p, &a).unwrap_or(f64::INFINITY);
            let key = match selector {
                PathSelector::MinTotal => (total, 0.0),
                PathSelector::MinSource => (source_cost(approach, &p, &a), total),
            };
            if best.as_ref().is_none_or(|b| key < b.0) {
                *best = Some((key, path.clone()));
            }
            return;
        }
        for v in 0..geo.num_nodes() {
            if !on[v] && geo.linked(u, v) {
                on[v] = true;
                path.push(v);
                rec(geo, t, approach, selector, path, on, best);
                path.pop();
                on[v] = false;
            }
        }
    }
    rec(geo, t, approach, selector, &mut path, &mut on, &mut best);
    best.map(|b| b.1).ok_or(BaselineError::Unreachable(t))
}

/// Expected transmissions per delivered packet for unicast from `s` to `t`.
pub fn unicast_cost(
    geo: &GeometricNet,
    s: NodeId,
    t: NodeId,
    approach: Approach,
    selector: PathSelector,
) -> Result<f64, BaselineError> {
    match approach {
        Approach::FullCoding => {
            let spec = MulticastSpec::linear(s, &[t], 1.0, &geo.cost);
            Ok(solve_reference(&build_lossy(&geo.net, &geo.loss, &spec)?)?.cost)
        }
        _ => Ok(best_path(geo, s, t, approach, selector)?.1),
    }
}
