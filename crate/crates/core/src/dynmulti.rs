//! Dynamic multicast: sink sets change over time and the coding subgraph
//! may only grow or only shrink in a single epoch.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::sync::Mutex;

use rand::seq::IteratorRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::LpError;
use crate::netmodel::{max_flow_lp, min_cut, reception_rates, Hypernet, LossModel, NetError, NodeId};
use crate::subgraph_opt::{build_lossless, build_lossy, ArcCost, LpProblem, MulticastSpec, SubgraphError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynError {
    #[error("no subgraph supports the sink set {0:?}")]
    Unsupported(Vec<NodeId>),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Subgraph(#[from] SubgraphError),
}

/// Tolerance on componentwise comparisons and cut checks.
pub const TOL: f64 = 1e-7;

/// Network, loss model, source, rate and arc costs shared by all epochs.
#[derive(Debug)]
pub struct DynProblem {
    pub net: Hypernet,
    pub loss: LossModel,
    pub source: NodeId,
    pub rate: f64,
    pub cost: Vec<ArcCost>,
    pub zmax: Option<Vec<f64>>,
    cache: Mutex<HashMap<Vec<NodeId>, Vec<f64>>>,
}

impl Clone for DynProblem {
    fn clone(&self) -> Self {
        DynProblem::new(self.net.clone(), self.loss.clone(), self.source, self.rate, self.cost.clone())
            .with_zmax(self.zmax.clone())
    }
}

impl DynProblem {
    pub fn new(net: Hypernet, loss: LossModel, source: NodeId, rate: f64, cost: Vec<ArcCost>) -> Self {
        DynProblem { net, loss, source, rate, cost, zmax: None, cache: Mutex::new(HashMap::new()) }
    }

    pub fn with_zmax(mut self, zmax: Option<Vec<f64>>) -> Self {
        self.zmax = zmax;
        self
    }

    /// Nodes other than the source, the pool for joins.
    pub fn candidates(&self) -> Vec<NodeId> {
        (0..self.net.num_nodes()).filter(|&v| v != self.source).collect()
    }

    pub fn cost_of(&self, z: &[f64]) -> f64 {
        self.cost.iter().zip(z).map(|(c, &v)| c.eval(v)).sum()
    }

    /// Whether `z` delivers the rate to every sink in `sinks`.
    pub fn supports(&self, z: &[f64], sinks: &BTreeSet<NodeId>) -> Result<bool, DynError> {
        if sinks.is_empty() {
            return Ok(true);
        }
        let rr = reception_rates(&self.net, &self.loss, z)?;
        for &t in sinks {
            let (cut, _) = min_cut(&self.net, &rr, self.source, t)?;
            if cut < self.rate - TOL {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Like [`DynProblem::supports`] but through the flow LP.
    pub fn supports_lp(&self, z: &[f64], sinks: &BTreeSet<NodeId>) -> Result<bool, DynError> {
        let rr = reception_rates(&self.net, &self.loss, z)?;
        for &t in sinks {
            if max_flow_lp(&self.net, &rr, self.source, t)?.0 < self.rate - TOL {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn build(&self, sinks: &BTreeSet<NodeId>) -> Result<LpProblem, DynError> {
        let t: Vec<NodeId> = sinks.iter().copied().collect();
        let spec = MulticastSpec {
            source: self.source,
            sinks: t.clone(),
            rates: vec![self.rate; t.len()],
            cost: self.cost.clone(),
            zmax: self.zmax.clone(),
        };
        Ok(match self.loss {
            LossModel::Lossless => build_lossless(&self.net, &spec)?,
            _ => build_lossy(&self.net, &self.loss, &spec)?,
        })
    }

    fn solve_z(&self, p: &LpProblem) -> Result<Option<Vec<f64>>, DynError> {
        match p.lp.solve() {
            Ok(sol) => Ok(Some(p.z_vars.iter().map(|&id| clean(sol.values[id])).collect())),
            Err(LpError::Infeasible) => Ok(None),
            Err(e) => Err(DynError::Subgraph(e.into())),
        }
    }

    /// Minimum-cost subgraph for `sinks`, zero for the empty set.
    pub fn static_opt(&self, sinks: &BTreeSet<NodeId>) -> Result<Vec<f64>, DynError> {
        if sinks.is_empty() {
            return Ok(vec![0.0; self.net.num_arcs()]);
        }
        let key: Vec<NodeId> = sinks.iter().copied().collect();
        if let Some(z) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(z.clone());
        }
        let p = self.build(sinks)?;
        let z = self.solve_z(&p)?.ok_or_else(|| DynError::Unsupported(key.clone()))?;
        self.cache.lock().expect("cache lock").insert(key, z.clone());
        Ok(z)
    }

    /// Cheapest subgraph for `sinks` inside one cone around `z`.
    pub fn cone_opt(&self, z: &[f64], sinks: &BTreeSet<NodeId>, cone: Cone) -> Result<Option<Vec<f64>>, DynError> {
        if sinks.is_empty() {
            return Ok(match cone {
                Cone::Down => Some(vec![0.0; z.len()]),
                _ => Some(z.to_vec()),
            });
        }
        let mut p = self.build(sinks)?;
        for (a, &id) in p.z_vars.iter().enumerate() {
            let (lo, hi) = p.lp.bounds[id];
            match cone {
                Cone::Up => {
                    if z[a] > hi + TOL {
                        return Ok(None);
                    }
                    p.lp.set_bounds(id, z[a].min(hi), hi);
                }
                Cone::Down => p.lp.set_bounds(id, lo, z[a].min(hi)),
                Cone::Stay => p.lp.set_bounds(id, z[a].min(hi), z[a].min(hi)),
            }
        }
        self.solve_z(&p)
    }
}

fn clean(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < 1e-9 {
        r.max(0.0)
    } else {
        v.max(0.0)
    }
}

/// Direction of one epoch's change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cone {
    Stay,
    Up,
    Down,
}

impl Cone {
    pub fn name(&self) -> &'static str {
        match self {
            Cone::Stay => "stay",
            Cone::Up => "up",
            Cone::Down => "down",
        }
    }
}

/// Cone containing the move from `z` to `z2`, if any.
pub fn classify(z: &[f64], z2: &[f64]) -> Option<Cone> {
    let up = z.iter().zip(z2).all(|(a, b)| *b >= a - TOL);
    let down = z.iter().zip(z2).all(|(a, b)| *b <= a + TOL);
    match (up, down) {
        (true, true) => Some(Cone::Stay),
        (true, false) => Some(Cone::Up),
        (false, true) => Some(Cone::Down),
        (false, false) => None,
    }
}

/// `z2` supports `sinks` and is reachable from `z` within one cone.
pub fn admissible(prob: &DynProblem, z: &[f64], sinks: &BTreeSet<NodeId>, z2: &[f64]) -> Result<bool, DynError> {
    Ok(classify(z, z2).is_some() && prob.supports_lp(z2, sinks)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynState {
    pub z: Vec<f64>,
    pub sinks: BTreeSet<NodeId>,
    pub epoch: usize,
}

/// Joins and leaves per epoch: one join with probability `birth`, one leave
/// with probability `death`, drawn independently, the leaver from the
/// current group and the joiner from the rest. The empty group is final.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MembershipProcess {
    pub birth: f64,
    pub death: f64,
}

impl MembershipProcess {
    pub fn validate(&self) -> Result<(), DynError> {
        if !(0.0..=1.0).contains(&self.birth) || !(0.0..=1.0).contains(&self.death) {
            return Err(DynError::Param("birth and death probabilities must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Probability the group is empty after `horizon` epochs, starting from
    /// `k0` members out of `pool`, by iterating the size chain.
    pub fn absorption_probability(&self, pool: usize, k0: usize, horizon: usize) -> f64 {
        let (b, d) = (self.birth, self.death);
        let mut p = vec![0.0; pool + 1];
        p[k0.min(pool)] = 1.0;
        for _ in 0..horizon {
            let mut q = vec![0.0; pool + 1];
            q[0] = p[0];
            for k in 1..=pool {
                let bb = if k < pool { b } else { 0.0 };
                let up = bb * (1.0 - d);
                let down = d * (1.0 - bb);
                if k < pool {
                    q[k + 1] += p[k] * up;
                }
                q[k - 1] += p[k] * down;
                q[k] += p[k] * (1.0 - up - down);
            }
            p = q;
        }
        p[0]
    }
}

pub fn membership_step<R: Rng>(
    proc: &MembershipProcess,
    pool: &[NodeId],
    sinks: &BTreeSet<NodeId>,
    rng: &mut R,
) -> BTreeSet<NodeId> {
    if sinks.is_empty() {
        return BTreeSet::new();
    }
    let join = rng.random::<f64>() < proc.birth;
    let leave = rng.random::<f64>() < proc.death;
    let mut next = sinks.clone();
    if leave {
        let w = *sinks.iter().choose(rng).expect("nonempty group");
        next.remove(&w);
    }
    if join {
        if let Some(&v) = pool.iter().filter(|v| !sinks.contains(v)).choose(rng) {
            next.insert(v);
        }
    }
    next
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Move to the static optimum when it lies in a cone, otherwise to the
    /// componentwise maximum first and settle there for one epoch.
    #[default]
    Myopic,
    /// Cheapest point of the union of the two cones.
    Greedy,
    /// Keep a fixed broadcast subgraph until the group empties.
    Broadcast,
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::Myopic => "myopic",
            Policy::Greedy => "greedy",
            Policy::Broadcast => "broadcast",
        }
    }
}

/// Next subgraph under the target-tracking rule.
pub fn myopic_policy(prob: &DynProblem, state: &DynState, next: &BTreeSet<NodeId>) -> Result<Vec<f64>, DynError> {
    let target = prob.static_opt(next)?;
    Ok(match classify(&state.z, &target) {
        Some(_) => target,
        None => state.z.iter().zip(&target).map(|(a, b)| a.max(*b)).collect(),
    })
}

/// Next subgraph as the cheaper of the two cone optima; ties keep the
/// smaller subgraph.
pub fn greedy_policy(prob: &DynProblem, state: &DynState, next: &BTreeSet<NodeId>) -> Result<Vec<f64>, DynError> {
    let down = prob.cone_opt(&state.z, next, Cone::Down)?;
    let up = prob.cone_opt(&state.z, next, Cone::Up)?;
    match (down, up) {
        (Some(d), Some(u)) => Ok(if prob.cost_of(&d) <= prob.cost_of(&u) + TOL { d } else { u }),
        (Some(d), None) => Ok(d),
        (None, Some(u)) => Ok(u),
        (None, None) => Err(DynError::Unsupported(next.iter().copied().collect())),
    }
}

/// Broadcast subgraph used by [`Policy::Broadcast`].
pub fn broadcast_subgraph(prob: &DynProblem) -> Result<Vec<f64>, DynError> {
    prob.static_opt(&prob.candidates().into_iter().collect())
}

fn apply(policy: Policy, prob: &DynProblem, state: &DynState, next: &BTreeSet<NodeId>) -> Result<Vec<f64>, DynError> {
    match policy {
        Policy::Myopic => myopic_policy(prob, state, next),
        Policy::Greedy => greedy_policy(prob, state, next),
        Policy::Broadcast => broadcast_subgraph(prob),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub group_size: usize,
    pub cost: f64,
    pub cone: Option<Cone>,
    /// Surviving sinks kept service through the change and the new group
    /// is supported.
    pub min_cut_ok: bool,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub records: Vec<EpochRecord>,
    pub total_cost: f64,
    /// The horizon ended before the group emptied.
    pub truncated: bool,
}

impl Episode {
    pub fn continuity_ok(&self) -> bool {
        self.records.iter().all(|r| r.min_cut_ok && r.cone.is_some())
    }
}

pub const EPISODE_CSV_HEADER: &str = "epoch,|T|,cost,cone,min_cut_ok";

pub fn episode_csv(ep: &Episode) -> String {
    let mut out = format!("{EPISODE_CSV_HEADER}\n");
    for r in &ep.records {
        let cone = r.cone.map_or("none", |c| c.name());
        let _ = writeln!(out, "{},{},{},{},{}", r.epoch, r.group_size, r.cost, cone, r.min_cut_ok);
    }
    out
}

/// Runs one episode from group `t0`. The initial subgraph is the static
/// optimum for `t0`, or the broadcast subgraph for [`Policy::Broadcast`].
pub fn run_episode<R: Rng>(
    prob: &DynProblem,
    proc: &MembershipProcess,
    policy: Policy,
    t0: &BTreeSet<NodeId>,
    horizon: usize,
    rng: &mut R,
) -> Result<Episode, DynError> {
    proc.validate()?;
    let pool = prob.candidates();
    let z0 = match policy {
        Policy::Broadcast if !t0.is_empty() => broadcast_subgraph(prob)?,
        _ => prob.static_opt(t0)?,
    };
    let mut state = DynState { z: z0, sinks: t0.clone(), epoch: 0 };
    let mut prev = t0.clone();
    let mut records = Vec::new();
    let mut total = 0.0;
    while state.epoch < horizon && !state.sinks.is_empty() {
        let z2 = apply(policy, prob, &state, &state.sinks)?;
        let lower: Vec<f64> = state.z.iter().zip(&z2).map(|(a, b)| a.min(*b)).collect();
        let kept: BTreeSet<NodeId> = prev.intersection(&state.sinks).copied().collect();
        let ok = prob.supports(&lower, &kept)? && prob.supports(&z2, &state.sinks)?;
        let cost = prob.cost_of(&z2);
        total += cost;
        records.push(EpochRecord {
            epoch: state.epoch,
            group_size: state.sinks.len(),
            cost,
            cone: classify(&state.z, &z2),
            min_cut_ok: ok,
            z: z2.clone(),
        });
        prev = state.sinks.clone();
        let next = membership_step(proc, &pool, &state.sinks, rng);
        state = DynState { z: z2, sinks: next, epoch: state.epoch + 1 };
    }
    Ok(Episode { records, total_cost: total, truncated: !state.sinks.is_empty() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub episodes: usize,
    pub truncated: usize,
    pub continuity_failures: usize,
}

/// Monte Carlo estimate of the accumulated cost, one RNG stream per episode
/// seeded from `seed` and the episode index.
pub fn episode_cost(
    prob: &DynProblem,
    proc: &MembershipProcess,
    policy: Policy,
    t0: &BTreeSet<NodeId>,
    horizon: usize,
    episodes: usize,
    seed: u64,
) -> Result<CostEstimate, DynError> {
    let mut costs = Vec::with_capacity(episodes);
    let (mut truncated, mut broken) = (0, 0);
    for e in 0..episodes {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9).wrapping_add(e as u64));
        let ep = run_episode(prob, proc, policy, t0, horizon, &mut rng)?;
        truncated += ep.truncated as usize;
        broken += !ep.continuity_ok() as usize;
        costs.push(ep.total_cost);
    }
    let (mean, std_err) = crate::stats::mean_se(&costs);
    Ok(CostEstimate { mean, std_err, episodes, truncated, continuity_failures: broken })
}

/// Whether unit-capacity routed trees can be extended, by adding unused arcs
/// only, so that every tree reaches all `sinks`. Each unused arc goes to at
/// most one tree; all assignments are tried.
pub fn routed_extension_exists(
    net: &Hypernet,
    source: NodeId,
    trees: &[Vec<usize>],
    sinks: &[NodeId],
) -> Result<bool, DynError> {
    let used: BTreeSet<usize> = trees.iter().flatten().copied().collect();
    let free: Vec<usize> = (0..net.num_arcs()).filter(|a| !used.contains(a)).collect();
    if free.len() > 16 {
        return Err(DynError::Param("exhaustive extension search limited to 16 free arcs".into()));
    }
    let k = trees.len() + 1;
    let total = k.pow(free.len() as u32);
    for code in 0..total {
        let mut c = code;
        let mut ext: Vec<Vec<usize>> = trees.to_vec();
        for &a in &free {
            let slot = c % k;
            c /= k;
            if slot > 0 {
                ext[slot - 1].push(a);
            }
        }
        if ext.iter().all(|arcs| {
            let mut seen = vec![false; net.num_nodes()];
            seen[source] = true;
            let mut grew = true;
            while grew {
                grew = false;
                for &a in arcs {
                    let arc = net.arc(a);
                    if seen[arc.tail] {
                        for &h in &arc.heads {
                            if !seen[h] {
                                seen[h] = true;
                                grew = true;
                            }
                        }
                    }
                }
            }
            sinks.iter().all(|&t| seen[t])
        }) {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Random lossless instance whose every node is reachable from node 0.
pub fn random_instance(n: usize, seed: u64) -> Result<DynProblem, DynError> {
    use crate::baselines::{gen_geometric, GeoVariant};
    for k in 0..1000u64 {
        let geo = gen_geometric(n, seed.wrapping_mul(1000).wrapping_add(k), GeoVariant::EnergyMulticast)
            .map_err(|e| DynError::Param(e.to_string()))?;
        if geo.reachable(0).iter().all(|&r| r) {
            let cost = geo.cost.iter().map(|&c| ArcCost::Linear(c)).collect();
            return Ok(DynProblem::new(geo.net, LossModel::Lossless, 0, 1.0, cost));
        }
    }
    Err(DynError::Param("no connected instance found".into()))
}
