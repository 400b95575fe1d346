//! Minimum-cost subgraph selection for a multicast connection.
//!
//! Builders return an [`LpProblem`] whose columns are named `z[i->J]`,
//! `x[t][i->J:j]` (per sink `t`), `xh[t][i->j]` for the nested-reach form
//! and `y[c][i->J:L]` for the multi-connection form. Convex separable costs
//! `a z^e` are piecewise-linearized with [`PWL_KNOTS`] knots on `[0, z_max]`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{Cmp, LinearProgram, LpError, Sense};
use crate::netmodel::{
    b_constants, FlowAssignment, Hypernet, LossModel, NetError, NodeId, ReceptionRates,
};

pub const PWL_KNOTS: usize = 64;
const TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SubgraphError {
    #[error("invalid multicast spec: {0}")]
    Spec(String),
    #[error("hyperarcs are not nested: {0}")]
    Nesting(String),
    #[error("infeasible problem")]
    Infeasible,
    #[error("unbounded problem")]
    Unbounded,
    #[error("input is not feasible: {0}")]
    InfeasibleInput(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Lp(LpError),
}

impl From<LpError> for SubgraphError {
    fn from(e: LpError) -> Self {
        match e {
            LpError::Infeasible => SubgraphError::Infeasible,
            LpError::Unbounded => SubgraphError::Unbounded,
            other => SubgraphError::Lp(other),
        }
    }
}

/// Cost of injecting packets at rate `z` on one hyperarc.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ArcCost {
    Linear(f64),
    /// `a z^exp` with `exp >= 1`.
    Power { a: f64, exp: f64 },
}

impl ArcCost {
    pub fn eval(&self, z: f64) -> f64 {
        match *self {
            ArcCost::Linear(a) => a * z,
            ArcCost::Power { a, exp } => a * z.max(0.0).powf(exp),
        }
    }

    pub fn deriv(&self, z: f64) -> f64 {
        match *self {
            ArcCost::Linear(a) => a,
            ArcCost::Power { a, exp } => a * exp * z.max(0.0).powf(exp - 1.0),
        }
    }

    fn valid(&self) -> bool {
        match *self {
            ArcCost::Linear(a) => a.is_finite() && a >= 0.0,
            ArcCost::Power { a, exp } => a.is_finite() && a >= 0.0 && exp >= 1.0 && exp.is_finite(),
        }
    }
}

/// A single multicast connection `(s, T, {R_t})` with per-arc costs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticastSpec {
    pub source: NodeId,
    pub sinks: Vec<NodeId>,
    pub rates: Vec<f64>,
    pub cost: Vec<ArcCost>,
    /// Optional box `z <= zmax` per arc.
    #[serde(default)]
    pub zmax: Option<Vec<f64>>,
}

impl MulticastSpec {
    /// Equal rate to every sink and linear costs.
    pub fn linear(source: NodeId, sinks: &[NodeId], rate: f64, a: &[f64]) -> Self {
        MulticastSpec {
            source,
            sinks: sinks.to_vec(),
            rates: vec![rate; sinks.len()],
            cost: a.iter().map(|&c| ArcCost::Linear(c)).collect(),
            zmax: None,
        }
    }

    pub fn sink_rates(&self) -> Vec<(NodeId, f64)> {
        self.sinks.iter().copied().zip(self.rates.iter().copied()).collect()
    }

    pub fn total_cost(&self, z: &[f64]) -> f64 {
        self.cost.iter().zip(z).map(|(c, &v)| c.eval(v)).sum()
    }

    pub fn validate(&self, net: &Hypernet) -> Result<(), SubgraphError> {
        let n = net.num_nodes();
        let bad = |m: &str| Err(SubgraphError::Spec(m.to_string()));
        if self.source >= n {
            return bad("source out of range");
        }
        if self.sinks.is_empty() {
            return bad("no sinks");
        }
        if self.rates.len() != self.sinks.len() {
            return bad("one rate per sink required");
        }
        if self.rates.iter().any(|&r| !(r >= 0.0 && r.is_finite())) {
            return bad("rates must be finite and nonnegative");
        }
        let mut seen = vec![false; n];
        for &t in &self.sinks {
            if t >= n || t == self.source || seen[t] {
                return bad("sinks must be distinct nodes other than the source");
            }
            seen[t] = true;
        }
        if self.cost.len() != net.num_arcs() {
            return bad("one cost per hyperarc required");
        }
        if self.cost.iter().any(|c| !c.valid()) {
            return bad("costs must be nonnegative, exponents at least 1");
        }
        if let Some(zm) = &self.zmax {
            if zm.len() != net.num_arcs() || zm.iter().any(|&v| !(v >= 0.0)) {
                return bad("zmax needs one nonnegative bound per hyperarc");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    Lossy,
    Lossless,
    Nested,
    MultiConnection,
}

/// One commodity: the flow of a connection toward one of its sinks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Commodity {
    pub connection: usize,
    pub source: NodeId,
    pub sink: NodeId,
    pub rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LpProblem {
    pub variant: Variant,
    pub lp: LinearProgram,
    pub z_vars: Vec<usize>,
    /// `x_vars[c][a][h]` per commodity; empty for the nested form.
    pub x_vars: Vec<Vec<Vec<usize>>>,
    /// `xhat_vars[t][p]` over `pairs`; nested form only.
    pub xhat_vars: Vec<Vec<usize>>,
    pub pairs: Vec<(NodeId, NodeId)>,
    pub commodities: Vec<Commodity>,
    pub cost: Vec<ArcCost>,
}

fn arc_name(net: &Hypernet, a: usize) -> String {
    net.arc(a).label()
}

/// Adds `z` columns with linear or piecewise-linear cost. `cap[a]` bounds
/// the linearization range when no box is given.
fn add_z_vars(
    lp: &mut LinearProgram,
    net: &Hypernet,
    cost: &[ArcCost],
    zmax: Option<&Vec<f64>>,
    cap: &[f64],
) -> Vec<usize> {
    (0..net.num_arcs())
        .map(|a| {
            let name = format!("z[{}]", arc_name(net, a));
            let hi = zmax.map_or(f64::INFINITY, |z| z[a]);
            match cost[a] {
                ArcCost::Linear(c) => lp.add_var(name, c, 0.0, hi),
                ArcCost::Power { a: coef, exp } => {
                    let top = hi.min(cap[a]).max(0.0);
                    let z = lp.add_var(name, 0.0, 0.0, top);
                    let segs = PWL_KNOTS - 1;
                    let w = top / segs as f64;
                    let mut terms = vec![(z, 1.0)];
                    if w > 0.0 {
                        for k in 0..segs {
                            let (l, r) = (k as f64 * w, (k + 1) as f64 * w);
                            let slope = coef * (r.powf(exp) - l.powf(exp)) / w;
                            let v = lp.add_var(format!("seg[{}][{k}]", arc_name(net, a)), slope, 0.0, w);
                            terms.push((v, -1.0));
                        }
                    }
                    lp.add_row(format!("pwl[{}]", arc_name(net, a)), &terms, Cmp::Eq, 0.0);
                    z
                }
            }
        })
        .collect()
}

/// Conservation rows for one commodity over per-arc head columns.
fn add_conservation(
    lp: &mut LinearProgram,
    net: &Hypernet,
    tag: &str,
    vars: &[Vec<usize>],
    c: &Commodity,
) {
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); net.num_nodes()];
    for (a, arc) in net.arcs().iter().enumerate() {
        for (h, &j) in arc.heads.iter().enumerate() {
            rows[arc.tail].push((vars[a][h], 1.0));
            rows[j].push((vars[a][h], -1.0));
        }
    }
    for (v, terms) in rows.into_iter().enumerate() {
        let rhs = if v == c.source {
            c.rate
        } else if v == c.sink {
            -c.rate
        } else {
            0.0
        };
        lp.add_row(format!("cons[{tag}][{v}]"), &terms, Cmp::Eq, rhs);
    }
}

fn add_x_vars(lp: &mut LinearProgram, net: &Hypernet, tag: &str) -> Vec<Vec<usize>> {
    net.arcs()
        .iter()
        .map(|arc| {
            arc.heads
                .iter()
                .map(|&j| lp.add_var(format!("x[{tag}][{}:{j}]", arc.label()), 0.0, 0.0, f64::INFINITY))
                .collect()
        })
        .collect()
}

fn commodities(spec: &MulticastSpec, connection: usize) -> Vec<Commodity> {
    spec.sink_rates()
        .into_iter()
        .map(|(sink, rate)| Commodity { connection, source: spec.source, sink, rate })
        .collect()
}

fn max_rate(spec: &MulticastSpec) -> f64 {
    spec.rates.iter().copied().fold(0.0, f64::max)
}

/// Lossless problem: `Σ_j x_{iJj}^{(t)} <= z_{iJ}` for every sink.
pub fn build_lossless(net: &Hypernet, spec: &MulticastSpec) -> Result<LpProblem, SubgraphError> {
    spec.validate(net)?;
    let mut lp = LinearProgram::new(Sense::Minimize);
    let cap = vec![max_rate(spec); net.num_arcs()];
    let z_vars = add_z_vars(&mut lp, net, &spec.cost, spec.zmax.as_ref(), &cap);
    let comms = commodities(spec, 0);
    let mut x_vars = Vec::new();
    for c in &comms {
        let tag = c.sink.to_string();
        let xv = add_x_vars(&mut lp, net, &tag);
        add_conservation(&mut lp, net, &tag, &xv, c);
        for (a, ids) in xv.iter().enumerate() {
            let mut terms: Vec<(usize, f64)> = ids.iter().map(|&v| (v, 1.0)).collect();
            terms.push((z_vars[a], -1.0));
            lp.add_row(format!("cap[{tag}][{}]", arc_name(net, a)), &terms, Cmp::Le, 0.0);
        }
        x_vars.push(xv);
    }
    Ok(LpProblem {
        variant: Variant::Lossless,
        lp,
        z_vars,
        x_vars,
        xhat_vars: Vec::new(),
        pairs: Vec::new(),
        commodities: comms,
        cost: spec.cost.clone(),
    })
}

fn proportional_b(net: &Hypernet, loss: &LossModel) -> Result<ReceptionRates, SubgraphError> {
    if matches!(loss, LossModel::AlohaRelay(_)) {
        return Err(SubgraphError::Spec("collision losses depend on z; use solve_aloha_relay".into()));
    }
    Ok(b_constants(net, loss)?)
}

/// Lossy problem with proportional losses: `Σ_{j∈K} x <= z b_{iJK}`.
pub fn build_lossy(
    net: &Hypernet,
    loss: &LossModel,
    spec: &MulticastSpec,
) -> Result<LpProblem, SubgraphError> {
    spec.validate(net)?;
    let b = proportional_b(net, loss)?;
    let mut lp = LinearProgram::new(Sense::Minimize);
    let cap: Vec<f64> = (0..net.num_arcs())
        .map(|a| {
            let arc = net.arc(a);
            let bmin = (0..arc.fanout())
                .map(|h| b.reaching(a, 1 << h))
                .filter(|&v| v > 0.0)
                .fold(f64::INFINITY, f64::min);
            if bmin.is_finite() {
                max_rate(spec) / bmin
            } else {
                0.0
            }
        })
        .collect();
    let z_vars = add_z_vars(&mut lp, net, &spec.cost, spec.zmax.as_ref(), &cap);
    let comms = commodities(spec, 0);
    let subsets: Vec<Vec<u32>> = (0..net.num_arcs()).map(|a| b.bound_subsets(net, a)).collect();
    let mut x_vars = Vec::new();
    for c in &comms {
        let tag = c.sink.to_string();
        let xv = add_x_vars(&mut lp, net, &tag);
        add_conservation(&mut lp, net, &tag, &xv, c);
        for (a, ids) in xv.iter().enumerate() {
            for &k in &subsets[a] {
                let mut terms: Vec<(usize, f64)> =
                    ids.iter().enumerate().filter(|(h, _)| k >> h & 1 == 1).map(|(_, &v)| (v, 1.0)).collect();
                terms.push((z_vars[a], -b.reaching(a, k)));
                lp.add_row(format!("cap[{tag}][{}:{k}]", arc_name(net, a)), &terms, Cmp::Le, 0.0);
            }
        }
        x_vars.push(xv);
    }
    Ok(LpProblem {
        variant: Variant::Lossy,
        lp,
        z_vars,
        x_vars,
        xhat_vars: Vec::new(),
        pairs: Vec::new(),
        commodities: comms,
        cost: spec.cost.clone(),
    })
}

/// Several connections sharing the subgraph: the packets received by
/// exactly `L` on each hyperarc are split among connections as `y[c][L]`.
pub fn build_multi_connection(
    net: &Hypernet,
    loss: &LossModel,
    specs: &[MulticastSpec],
    cost: &[ArcCost],
) -> Result<LpProblem, SubgraphError> {
    if specs.is_empty() {
        return Err(SubgraphError::Spec("no connections".into()));
    }
    for s in specs {
        let mut with_cost = s.clone();
        with_cost.cost = cost.to_vec();
        with_cost.validate(net)?;
    }
    let b = proportional_b(net, loss)?;
    let mut lp = LinearProgram::new(Sense::Minimize);
    let total: f64 = specs.iter().map(max_rate).sum();
    let cap: Vec<f64> = (0..net.num_arcs())
        .map(|a| {
            let bfull = b.reaching(a, net.arc(a).full_mask());
            if bfull > 0.0 {
                total / b.zk[a].iter().map(|e| e.1).fold(f64::INFINITY, f64::min).max(1e-9) * bfull
            } else {
                0.0
            }
        })
        .collect();
    let z_vars = add_z_vars(&mut lp, net, cost, None, &cap);
    // y[c][a] lists (mask, column) over masks with positive fraction.
    let mut y: Vec<Vec<Vec<(u32, usize)>>> = Vec::new();
    for c in 0..specs.len() {
        y.push(
            (0..net.num_arcs())
                .map(|a| {
                    b.zk[a]
                        .iter()
                        .map(|&(m, _)| (m, lp.add_var(format!("y[{c}][{}:{m}]", arc_name(net, a)), 0.0, 0.0, f64::INFINITY)))
                        .collect()
                })
                .collect(),
        );
    }
    for a in 0..net.num_arcs() {
        for (li, &(m, frac)) in b.zk[a].iter().enumerate() {
            let mut terms: Vec<(usize, f64)> = (0..specs.len()).map(|c| (y[c][a][li].1, 1.0)).collect();
            terms.push((z_vars[a], -frac));
            lp.add_row(format!("share[{}:{m}]", arc_name(net, a)), &terms, Cmp::Le, 0.0);
        }
    }
    let mut comms = Vec::new();
    let mut x_vars = Vec::new();
    for (ci, spec) in specs.iter().enumerate() {
        for c in commodities(spec, ci) {
            let tag = format!("{ci}][{}", c.sink);
            let xv = add_x_vars(&mut lp, net, &tag);
            add_conservation(&mut lp, net, &tag, &xv, &c);
            for (a, ids) in xv.iter().enumerate() {
                for k in b.bound_subsets(net, a) {
                    let mut terms: Vec<(usize, f64)> = ids
                        .iter()
                        .enumerate()
                        .filter(|(h, _)| k >> h & 1 == 1)
                        .map(|(_, &v)| (v, 1.0))
                        .collect();
                    for &(m, col) in &y[ci][a] {
                        if m & k != 0 {
                            terms.push((col, -1.0));
                        }
                    }
                    lp.add_row(format!("cap[{tag}][{}:{k}]", arc_name(net, a)), &terms, Cmp::Le, 0.0);
                }
            }
            x_vars.push(xv);
            comms.push(c);
        }
    }
    Ok(LpProblem {
        variant: Variant::MultiConnection,
        lp,
        z_vars,
        x_vars,
        xhat_vars: Vec::new(),
        pairs: Vec::new(),
        commodities: comms,
        cost: cost.to_vec(),
    })
}

/// Nested hyperarcs `J_1 ⊊ J_2 ⊊ ... ⊊ J_M` out of every node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedReach {
    /// `chains[i]` lists arc indices of node `i` from smallest to largest reach.
    pub chains: Vec<Vec<usize>>,
    /// Node pairs `(i, j)` with `j` in the largest reach of `i`.
    pub pairs: Vec<(NodeId, NodeId)>,
    /// `layer[p]` is the 0-based `m` with `j ∈ J_m \ J_{m-1}` for pair `p`.
    pub layer: Vec<usize>,
    #[serde(skip)]
    index: HashMap<(NodeId, NodeId), usize>,
}

const MONOTONE_PROBES: [f64; 5] = [1e-3, 1e-1, 1.0, 10.0, 1e3];

impl NestedReach {
    /// Orders every node's hyperarcs by reach and checks strict nesting and
    /// strictly increasing cost.
    pub fn from_net(net: &Hypernet, cost: &[ArcCost]) -> Result<Self, SubgraphError> {
        if cost.len() != net.num_arcs() {
            return Err(SubgraphError::Spec("one cost per hyperarc required".into()));
        }
        let mut chains = Vec::with_capacity(net.num_nodes());
        let mut pairs = Vec::new();
        let mut layer = Vec::new();
        for i in 0..net.num_nodes() {
            let mut arcs: Vec<usize> = net.out_arcs(i).collect();
            arcs.sort_by_key(|&a| net.arc(a).fanout());
            for w in arcs.windows(2) {
                let (small, big) = (&net.arc(w[0]).heads, &net.arc(w[1]).heads);
                if small.len() == big.len() || !small.iter().all(|h| big.contains(h)) {
                    return Err(SubgraphError::Nesting(format!(
                        "{} and {}",
                        net.arc(w[0]).label(),
                        net.arc(w[1]).label()
                    )));
                }
                if MONOTONE_PROBES.iter().any(|&z| cost[w[0]].eval(z) >= cost[w[1]].eval(z)) {
                    return Err(SubgraphError::Nesting(format!(
                        "cost of {} not below cost of {}",
                        net.arc(w[0]).label(),
                        net.arc(w[1]).label()
                    )));
                }
            }
            let mut prev: Vec<NodeId> = Vec::new();
            for (m, &a) in arcs.iter().enumerate() {
                for &j in &net.arc(a).heads {
                    if !prev.contains(&j) {
                        pairs.push((i, j));
                        layer.push(m);
                    }
                }
                prev = net.arc(a).heads.clone();
            }
            chains.push(arcs);
        }
        let mut r = NestedReach { chains, pairs, layer, index: HashMap::new() };
        r.reindex();
        Ok(r)
    }

    pub fn reindex(&mut self) {
        self.index = self.pairs.iter().enumerate().map(|(p, &ij)| (ij, p)).collect();
    }

    pub fn pair_index(&self, i: NodeId, j: NodeId) -> Option<usize> {
        self.index.get(&(i, j)).copied()
    }

    /// Pair indices out of node `i`.
    pub fn pairs_of(&self, i: NodeId) -> impl Iterator<Item = usize> + '_ {
        self.pairs.iter().enumerate().filter(move |(_, p)| p.0 == i).map(|(k, _)| k)
    }

    /// Incremental costs `s_{iJ_m} = a_{iJ_m} - a_{iJ_{m-1}}` for linear costs.
    pub fn incremental_costs(&self, cost: &[ArcCost]) -> Result<Vec<f64>, SubgraphError> {
        let mut s = vec![0.0; cost.len()];
        for chain in &self.chains {
            let mut prev = 0.0;
            for &a in chain {
                let ArcCost::Linear(c) = cost[a] else {
                    return Err(SubgraphError::Spec("incremental costs need linear costs".into()));
                };
                s[a] = c - prev;
                prev = c;
            }
        }
        Ok(s)
    }

    /// `Σ_{k ∈ J_M \ J_{m-1}} x̂_{ik}` for each level `m` of node `i`.
    pub fn suffix_sums(&self, i: NodeId, xhat: &[f64]) -> Vec<f64> {
        let levels = self.chains[i].len();
        let mut by_layer = vec![0.0; levels];
        for p in self.pairs_of(i) {
            by_layer[self.layer[p]] += xhat[p];
        }
        let mut out = vec![0.0; levels];
        let mut acc = 0.0;
        for m in (0..levels).rev() {
            acc += by_layer[m];
            out[m] = acc;
        }
        out
    }
}

/// Reduced problem over `x̂` on node pairs with nested reach constraints.
pub fn build_nested(
    net: &Hypernet,
    spec: &MulticastSpec,
    reach: &NestedReach,
) -> Result<LpProblem, SubgraphError> {
    spec.validate(net)?;
    let mut lp = LinearProgram::new(Sense::Minimize);
    let cap = vec![max_rate(spec); net.num_arcs()];
    let z_vars = add_z_vars(&mut lp, net, &spec.cost, spec.zmax.as_ref(), &cap);
    let comms = commodities(spec, 0);
    let mut xhat_vars = Vec::new();
    for c in &comms {
        let t = c.sink;
        let xv: Vec<usize> = reach
            .pairs
            .iter()
            .map(|&(i, j)| lp.add_var(format!("xh[{t}][{i}->{j}]"), 0.0, 0.0, f64::INFINITY))
            .collect();
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); net.num_nodes()];
        for (p, &(i, j)) in reach.pairs.iter().enumerate() {
            rows[i].push((xv[p], 1.0));
            rows[j].push((xv[p], -1.0));
        }
        for (v, terms) in rows.into_iter().enumerate() {
            let rhs = if v == c.source {
                c.rate
            } else if v == t {
                -c.rate
            } else {
                0.0
            };
            lp.add_row(format!("cons[{t}][{v}]"), &terms, Cmp::Eq, rhs);
        }
        for (i, chain) in reach.chains.iter().enumerate() {
            for m in 0..chain.len() {
                let mut terms: Vec<(usize, f64)> =
                    reach.pairs_of(i).filter(|&p| reach.layer[p] >= m).map(|p| (xv[p], 1.0)).collect();
                for &a in &chain[m..] {
                    terms.push((z_vars[a], -1.0));
                }
                lp.add_row(format!("reach[{t}][{i}:{m}]"), &terms, Cmp::Le, 0.0);
            }
        }
        xhat_vars.push(xv);
    }
    Ok(LpProblem {
        variant: Variant::Nested,
        lp,
        z_vars,
        x_vars: Vec::new(),
        xhat_vars,
        pairs: reach.pairs.clone(),
        commodities: comms,
        cost: spec.cost.clone(),
    })
}

/// Tightest `z` for given `x̂`, computed level by level from the outside:
/// `z_{iJ_m} = max_t S_m^{(t)} - Σ_{m' > m} z_{iJ_{m'}}`.
pub fn recursive_z(
    net: &Hypernet,
    reach: &NestedReach,
    xhat: &[Vec<f64>],
) -> Result<Vec<f64>, SubgraphError> {
    let mut z = vec![0.0; net.num_arcs()];
    for (i, chain) in reach.chains.iter().enumerate() {
        let levels = chain.len();
        let mut best = vec![0.0f64; levels];
        for x in xhat {
            for (m, v) in reach.suffix_sums(i, x).into_iter().enumerate() {
                best[m] = best[m].max(v);
            }
        }
        let mut above = 0.0;
        for m in (0..levels).rev() {
            let v = best[m] - above;
            if v < -TOL {
                return Err(SubgraphError::InfeasibleInput(format!("negative residue at node {i} level {m}")));
            }
            z[chain[m]] = v.max(0.0);
            above += z[chain[m]];
        }
    }
    Ok(z)
}

/// Splits reduced flows back onto hyperarcs. At each node the largest
/// hyperarc is filled first, serving the farthest layers first.
pub fn recover_x(
    net: &Hypernet,
    reach: &NestedReach,
    source: NodeId,
    sinks: &[(NodeId, f64)],
    xhat: &[Vec<f64>],
    z: &[f64],
) -> Result<FlowAssignment, SubgraphError> {
    if xhat.len() != sinks.len() || z.len() != net.num_arcs() {
        return Err(SubgraphError::InfeasibleInput("shape mismatch".into()));
    }
    let mut fa = FlowAssignment::zeros(net, source, sinks);
    for (ti, xh) in xhat.iter().enumerate() {
        if xh.len() != reach.pairs.len() || xh.iter().any(|&v| v < -TOL) {
            return Err(SubgraphError::InfeasibleInput("x̂ must be nonnegative on every pair".into()));
        }
        for (i, chain) in reach.chains.iter().enumerate() {
            let mut pairs: Vec<usize> = reach.pairs_of(i).collect();
            pairs.sort_by(|&p, &q| reach.layer[q].cmp(&reach.layer[p]).then(reach.pairs[p].1.cmp(&reach.pairs[q].1)));
            let mut rem: Vec<f64> = pairs.iter().map(|&p| xh[p].max(0.0)).collect();
            for m in (0..chain.len()).rev() {
                let a = chain[m];
                let mut cap = z[a];
                for (k, &p) in pairs.iter().enumerate() {
                    if reach.layer[p] > m || rem[k] <= 0.0 || cap <= 0.0 {
                        continue;
                    }
                    let take = rem[k].min(cap);
                    let h = net.arc(a).head_index(reach.pairs[p].1).expect("head in reach");
                    fa.x[ti][a][h] += take;
                    rem[k] -= take;
                    cap -= take;
                }
            }
            if let Some(k) = rem.iter().position(|&r| r > 1e-7) {
                return Err(SubgraphError::InfeasibleInput(format!(
                    "pair {:?} of sink {} exceeds capacity by {:.3e}",
                    reach.pairs[pairs[k]], sinks[ti].0, rem[k]
                )));
            }
        }
    }
    Ok(fa)
}

/// `z'_{iJ} = (Σ_{K,t} (Σ_{j∈K} x^{(t)}_{iJj} / b_{iJK})^m)^{1/m}` over the
/// subsets whose bounds are not redundant (only `K = J` on lossless arcs).
pub fn lm_smooth(net: &Hypernet, b: &ReceptionRates, fa: &FlowAssignment, m: f64) -> Vec<f64> {
    (0..net.num_arcs())
        .map(|a| {
            let arc = net.arc(a);
            let mut terms = Vec::new();
            for k in b.bound_subsets(net, a) {
                let bk = b.reaching(a, k);
                for xs in &fa.x {
                    let num: f64 = (0..arc.fanout()).filter(|h| k >> h & 1 == 1).map(|h| xs[a][h]).sum();
                    if num > 0.0 {
                        terms.push(if bk > 0.0 { num / bk } else { f64::INFINITY });
                    }
                }
            }
            power_mean(&terms, m)
        })
        .collect()
}

/// `(Σ v^m)^{1/m}` computed without overflow.
pub fn power_mean(terms: &[f64], m: f64) -> f64 {
    let top = terms.iter().copied().fold(0.0, f64::max);
    if top == 0.0 || top.is_infinite() {
        return top;
    }
    top * terms.iter().map(|v| (v / top).powf(m)).sum::<f64>().powf(1.0 / m)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefSolution {
    /// `Σ f(z)` evaluated exactly.
    pub cost: f64,
    /// LP objective, which differs from `cost` only through linearization.
    pub lp_objective: f64,
    pub z: Vec<f64>,
    /// `x[c][a][h]` per commodity; empty for the nested form.
    pub x: Vec<Vec<Vec<f64>>>,
    /// `xhat[t][p]`; nested form only.
    pub xhat: Vec<Vec<f64>>,
    pub commodities: Vec<Commodity>,
    pub max_violation: f64,
    /// `|primal - dual|` from an explicit dual solve.
    pub duality_gap: f64,
}

impl RefSolution {
    /// Flows of connection `conn` as a [`FlowAssignment`].
    pub fn flows(&self, net: &Hypernet, conn: usize) -> FlowAssignment {
        let idx: Vec<usize> =
            (0..self.commodities.len()).filter(|&k| self.commodities[k].connection == conn).collect();
        let sinks: Vec<(NodeId, f64)> = idx.iter().map(|&k| (self.commodities[k].sink, self.commodities[k].rate)).collect();
        let source = idx.first().map_or(0, |&k| self.commodities[k].source);
        let mut fa = FlowAssignment::zeros(net, source, &sinks);
        for (slot, &k) in idx.iter().enumerate() {
            if let Some(x) = self.x.get(k) {
                fa.x[slot] = x.clone();
            }
        }
        fa
    }
}

/// Solves a built problem exactly with the LP layer.
pub fn solve_reference(p: &LpProblem) -> Result<RefSolution, SubgraphError> {
    let sol = p.lp.solve()?;
    let v = |id: usize| sol.values[id].max(0.0);
    let z: Vec<f64> = p.z_vars.iter().map(|&id| v(id)).collect();
    let x = p.x_vars.iter().map(|xv| xv.iter().map(|ids| ids.iter().map(|&id| v(id)).collect()).collect()).collect();
    let xhat = p.xhat_vars.iter().map(|xv| xv.iter().map(|&id| v(id)).collect()).collect();
    let dual = p.lp.dual_objective()?;
    Ok(RefSolution {
        cost: p.cost.iter().zip(&z).map(|(c, &zv)| c.eval(zv)).sum(),
        lp_objective: sol.objective,
        z,
        x,
        xhat,
        commodities: p.commodities.clone(),
        max_violation: p.lp.max_violation(&sol.values),
        duality_gap: (sol.objective - dual).abs(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlohaSolution {
    /// Injection probability of the source hyperarc.
    pub z1: f64,
    /// Injection probability of the relay arc.
    pub z2: f64,
    pub cost: f64,
    /// Best cost over the certification grid.
    pub grid_cost: f64,
    /// No grid point beats the analytic optimum.
    pub certified: bool,
}

use crate::netmodel::AlohaParams;

/// Smallest feasible `z1` for a given `z2`, if any. Both constraints are
/// linear in `z1` once `z2` is fixed.
fn aloha_min_z1(p: &AlohaParams, r: f64, z2: f64) -> Option<f64> {
    let p1 = p.p12 + p.p13 + p.p1both;
    let p3 = p.p13 + p.p1both;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    if r > 0.0 {
        if z2 >= 1.0 || p1 <= 0.0 {
            return None;
        }
        lo = lo.max(r / (p1 * (1.0 - z2)));
    }
    let alpha = (1.0 - z2) * p3 - z2 * p.p233;
    let beta = r - z2 * p.p233;
    if alpha > 0.0 {
        lo = lo.max(beta / alpha);
    } else if alpha < 0.0 {
        hi = hi.min(beta / alpha);
    } else if beta > 0.0 {
        return None;
    }
    (lo <= hi + 1e-15).then_some(lo)
}

/// Slack of the two rate constraints at `(z1, z2)`.
pub fn aloha_slack(p: &AlohaParams, r: f64, z1: f64, z2: f64) -> (f64, f64) {
    let p1 = p.p12 + p.p13 + p.p1both;
    let p3 = p.p13 + p.p1both;
    let c1 = z1 * (1.0 - z2) * p1 - r;
    let c2 = z1 * (1.0 - z2) * p3 + (1.0 - z1) * z2 * p.p233 - r;
    (c1, c2)
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) <= f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (f(m) > 0.0) == (fa > 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Minimum-transmission operating point of the slotted Aloha relay for a
/// unicast rate `r` from node 0 to node 2.
pub fn solve_aloha_relay(p: &AlohaParams, r: f64) -> Result<AlohaSolution, SubgraphError> {
    if !(r >= 0.0 && r.is_finite()) {
        return Err(SubgraphError::Spec("rate must be finite and nonnegative".into()));
    }
    let probs = [p.p12, p.p13, p.p1both, p.p233];
    if probs.iter().any(|v| !(0.0..=1.0).contains(v)) || p.p12 + p.p13 + p.p1both > 1.0 + 1e-12 {
        return Err(SubgraphError::Spec("reception probabilities out of range".into()));
    }
    let p1 = p.p12 + p.p13 + p.p1both;
    let p3 = p.p13 + p.p1both;
    let cost_at = |z2: f64| aloha_min_z1(p, r, z2).map_or(f64::INFINITY, |z1| z1 + z2);
    let mut cands: Vec<f64> = vec![0.0];
    if p1 > 0.0 && p.p233 > 0.0 {
        // Both constraints tight: z1 (1 - z2) = A and (1 - z1) z2 = c.
        let a = r / p1;
        let c = r * (1.0 - p3 / p1) / p.p233;
        if a < 1.0 {
            let h = |z2: f64| (1.0 - z2 - a) * z2 / (1.0 - z2) - c;
            let top = golden_min(|z| -h(z), 0.0, 1.0 - a);
            if h(top) >= 0.0 {
                cands.push(bisect(h, 0.0, top));
                cands.push(bisect(h, top, 1.0 - a));
            }
            // Tangency with the first curve alone.
            cands.push(1.0 - a.sqrt());
        }
    }
    // Tangency with the second curve alone: scan, then refine.
    let n = 10_000;
    let scan = (0..=n).map(|k| k as f64 / n as f64).min_by(|&x, &y| cost_at(x).total_cmp(&cost_at(y))).unwrap();
    let w = 1.0 / n as f64;
    cands.push(golden_min(cost_at, (scan - w).max(0.0), (scan + w).min(1.0)));
    cands.push(scan);
    let best = cands
        .into_iter()
        .filter(|z2| (0.0..=1.0).contains(z2))
        .filter_map(|z2| aloha_min_z1(p, r, z2).map(|z1| (z1, z2)))
        .filter(|&(z1, z2)| {
            let (c1, c2) = aloha_slack(p, r, z1, z2);
            c1 >= -1e-12 && c2 >= -1e-12
        })
        .min_by(|a, b| (a.0 + a.1).total_cmp(&(b.0 + b.1)));
    let Some((z1, z2)) = best else {
        return Err(SubgraphError::Infeasible);
    };
    let grid_cost = (0..=1000).map(|k| cost_at(k as f64 * 1e-3)).fold(f64::INFINITY, f64::min);
    let cost = z1 + z2;
    Ok(AlohaSolution { z1, z2, cost, grid_cost, certified: cost <= grid_cost + 1e-12 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{butterfly, wireless_butterfly};
    use crate::netmodel::{flow_feasible, min_cut, reception_rates};

    #[test]
    fn aloha_reference_point() {
        let s = solve_aloha_relay(&AlohaParams::reference(), 0.125).unwrap();
        assert!((s.z1 - 0.179).abs() < 2e-3, "{s:?}");
        assert!((s.z2 - 0.141).abs() < 2e-3, "{s:?}");
        assert!((s.cost - 0.320).abs() < 4e-3);
        assert!(s.certified);
        let zero = solve_aloha_relay(&AlohaParams::reference(), 0.0).unwrap();
        assert!(zero.cost < 1e-9);
        assert_eq!(solve_aloha_relay(&AlohaParams::reference(), 0.9).unwrap_err(), SubgraphError::Infeasible);
    }

    #[test]
    fn butterfly_lossless() {
        let (net, s, ts) = butterfly();
        let mut spec = MulticastSpec::linear(s, &ts, 2.0, &vec![1.0; net.num_arcs()]);
        spec.zmax = Some(vec![1.0; net.num_arcs()]);
        let p = build_lossless(&net, &spec).unwrap();
        let sol = solve_reference(&p).unwrap();
        // Rate 2 to both sinks over unit capacities needs every arc.
        assert!((sol.cost - 9.0).abs() < 1e-7, "{}", sol.cost);
        assert!(sol.duality_gap < 1e-8);
        for a in 0..net.num_arcs() {
            let m = sol.x.iter().map(|x| x[a][0]).fold(0.0, f64::max);
            assert!((sol.z[a] - m).abs() < 1e-7);
        }
        let rr = reception_rates(&net, &LossModel::Lossless, &sol.z).unwrap();
        assert!(flow_feasible(&net, &rr, &sol.flows(&net, 0)).feasible);
        for &t in &ts {
            assert!(min_cut(&net, &rr, s, t).unwrap().0 >= 2.0 - 1e-7);
        }
    }

    #[test]
    fn single_sink_is_shortest_path() {
        let (net, s, _) = butterfly();
        let mut a = vec![1.0; net.num_arcs()];
        a[net.find_arc(1, &[5]).unwrap()] = 5.0;
        let spec = MulticastSpec::linear(s, &[5], 1.0, &a);
        let sol = solve_reference(&build_lossless(&net, &spec).unwrap()).unwrap();
        // 0-1-3-4-5 costs 4, 0-1-5 costs 6.
        assert!((sol.cost - 4.0).abs() < 1e-7);
    }

    #[test]
    fn lossy_unicast_closed_form() {
        let mut net = Hypernet::new(3);
        net.add_arc(0, &[1]).unwrap();
        net.add_arc(1, &[2]).unwrap();
        let loss = LossModel::Iid(vec![vec![0.5], vec![0.8]]);
        let spec = MulticastSpec::linear(0, &[2], 0.4, &[1.0, 1.0]);
        let sol = solve_reference(&build_lossy(&net, &loss, &spec).unwrap()).unwrap();
        assert!((sol.z[0] - 0.8).abs() < 1e-7 && (sol.z[1] - 0.5).abs() < 1e-7);
    }

    #[test]
    fn lossy_with_no_loss_matches_lossless() {
        let (net, s, ts) = wireless_butterfly();
        let spec = MulticastSpec::linear(s, &ts, 1.0, &vec![1.0; net.num_arcs()]);
        let a = solve_reference(&build_lossless(&net, &spec).unwrap()).unwrap();
        let ones = LossModel::Iid(net.arcs().iter().map(|arc| vec![1.0; arc.fanout()]).collect());
        let b = solve_reference(&build_lossy(&net, &ones, &spec).unwrap()).unwrap();
        assert!((a.cost - b.cost).abs() < 1e-7);
    }

    #[test]
    fn wireless_butterfly_nested_matches() {
        let (net, s, ts) = wireless_butterfly();
        let spec = MulticastSpec::linear(s, &ts, 1.0, &vec![1.0; net.num_arcs()]);
        let full = solve_reference(&build_lossless(&net, &spec).unwrap()).unwrap();
        for a in 0..net.num_arcs() {
            let m = full.x.iter().map(|x| x[a].iter().sum::<f64>()).fold(0.0, f64::max);
            assert!((full.z[a] - m).abs() < 1e-7);
        }
        let reach = NestedReach::from_net(&net, &spec.cost).unwrap();
        let red = solve_reference(&build_nested(&net, &spec, &reach).unwrap()).unwrap();
        assert!((full.cost - red.cost).abs() < 1e-7);
        let fa = recover_x(&net, &reach, s, &spec.sink_rates(), &red.xhat, &red.z).unwrap();
        let rr = reception_rates(&net, &LossModel::Lossless, &red.z).unwrap();
        assert!(flow_feasible(&net, &rr, &fa).feasible);
    }

    #[test]
    fn nesting_rules() {
        let mut net = Hypernet::new(4);
        net.add_arc(0, &[1]).unwrap();
        net.add_arc(0, &[1, 2]).unwrap();
        net.add_arc(0, &[1, 2, 3]).unwrap();
        let r = NestedReach::from_net(&net, &[ArcCost::Linear(1.0), ArcCost::Linear(2.0), ArcCost::Linear(4.0)])
            .unwrap();
        assert_eq!(r.chains[0], vec![0, 1, 2]);
        assert_eq!(r.layer, vec![0, 1, 2]);
        assert_eq!(r.incremental_costs(&[ArcCost::Linear(1.0), ArcCost::Linear(2.0), ArcCost::Linear(4.0)]).unwrap(), vec![1.0, 1.0, 2.0]);
        assert!(NestedReach::from_net(&net, &[ArcCost::Linear(1.0), ArcCost::Linear(1.0), ArcCost::Linear(4.0)]).is_err());
        let mut bad = Hypernet::new(4);
        bad.add_arc(0, &[1, 2]).unwrap();
        bad.add_arc(0, &[2, 3]).unwrap();
        assert!(matches!(
            NestedReach::from_net(&bad, &[ArcCost::Linear(1.0), ArcCost::Linear(2.0)]),
            Err(SubgraphError::Nesting(_))
        ));
    }

    #[test]
    fn recursive_z_and_recovery() {
        // Node 0 reaches {1} for 1 and {1,2} for 3; flows 0->1 and 0->2.
        let mut net = Hypernet::new(3);
        net.add_arc(0, &[1]).unwrap();
        net.add_arc(0, &[1, 2]).unwrap();
        let cost = [ArcCost::Linear(1.0), ArcCost::Linear(3.0)];
        let reach = NestedReach::from_net(&net, &cost).unwrap();
        let p01 = reach.pair_index(0, 1).unwrap();
        let p02 = reach.pair_index(0, 2).unwrap();
        let mut xh = vec![0.0; 2];
        xh[p01] = 0.5;
        xh[p02] = 0.3;
        let z = recursive_z(&net, &reach, &[xh.clone()]).unwrap();
        assert!((z[1] - 0.3).abs() < 1e-12 && (z[0] - 0.5).abs() < 1e-12);
        let fa = recover_x(&net, &reach, 0, &[(2, 0.3)], &[xh.clone()], &z).unwrap();
        assert!((fa.x[0][1][1] - 0.3).abs() < 1e-12);
        assert!((fa.x[0][0][0] - 0.5).abs() < 1e-12);
        assert!(recover_x(&net, &reach, 0, &[(2, 0.3)], &[xh], &[0.1, 0.1]).is_err());
    }

    #[test]
    fn smoothing() {
        let mut net = Hypernet::new(2);
        net.add_arc(0, &[1]).unwrap();
        let b = b_constants(&net, &LossModel::Lossless).unwrap();
        let mut fa = FlowAssignment::zeros(&net, 0, &[(1, 1.0), (1, 1.0)]);
        fa.x[0][0][0] = 1.0;
        fa.x[1][0][0] = 1.0;
        assert!((lm_smooth(&net, &b, &fa, 2.0)[0] - 2f64.sqrt()).abs() < 1e-12);
        assert!((lm_smooth(&net, &b, &fa, 30.0)[0] - 2f64.powf(1.0 / 30.0)).abs() < 1e-12);
        assert!((lm_smooth(&net, &b, &fa, 1e3)[0] - 1.0).abs() < 1e-3);
        fa.x[1][0][0] = 0.0;
        assert_eq!(lm_smooth(&net, &b, &fa, 5.0)[0], 1.0);
    }

    #[test]
    fn power_cost_is_linearized() {
        let mut net = Hypernet::new(2);
        net.add_arc(0, &[1]).unwrap();
        let spec = MulticastSpec {
            source: 0,
            sinks: vec![1],
            rates: vec![0.5],
            cost: vec![ArcCost::Power { a: 2.0, exp: 2.0 }],
            zmax: None,
        };
        let sol = solve_reference(&build_lossless(&net, &spec).unwrap()).unwrap();
        assert!((sol.z[0] - 0.5).abs() < 1e-9);
        assert!((sol.cost - 0.5).abs() < 1e-9);
        assert!((sol.lp_objective - 0.5).abs() < 1e-3);
    }

    #[test]
    fn multi_connection_shares_capacity() {
        // Two unicasts over one lossless arc need the sum of their rates.
        let mut net = Hypernet::new(3);
        net.add_arc(0, &[1]).unwrap();
        net.add_arc(1, &[2]).unwrap();
        let specs = [
            MulticastSpec::linear(0, &[1], 0.3, &[1.0, 1.0]),
            MulticastSpec::linear(0, &[2], 0.4, &[1.0, 1.0]),
        ];
        let p = build_multi_connection(&net, &LossModel::Lossless, &specs, &[ArcCost::Linear(1.0); 2]).unwrap();
        let sol = solve_reference(&p).unwrap();
        assert!((sol.z[0] - 0.7).abs() < 1e-7 && (sol.z[1] - 0.4).abs() < 1e-7);
        assert!(p.lp.to_lp_text().contains("y[0][0->1:1]"));
    }

    #[test]
    fn zero_rate_costs_nothing() {
        let (net, s, ts) = butterfly();
        let spec = MulticastSpec::linear(s, &ts, 0.0, &vec![1.0; net.num_arcs()]);
        assert!(solve_reference(&build_lossless(&net, &spec).unwrap()).unwrap().cost.abs() < 1e-12);
    }
}
