//! Packet-level simulation of a single coded session over a hypernet.
//!
//! Slotted traffic injects at most one packet per hyperarc per slot with the
//! arc's rate as probability. Every transmission in a slot is formed from
//! the memory held at the start of the slot, then all receptions are applied.
//! Poisson traffic runs independent injection processes per hyperarc and
//! delivers each packet immediately.

use std::fmt::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{source_init, CodecError, CodedPacket, MemoryMode, NodeMemory, SinkDecoder};
use crate::galois::{field, Elem, GfError};
use crate::netmodel::{reception_fractions, Hypernet, LossModel, NetError, NodeId};
use crate::stats::{linear_fit, wilson};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Field(#[from] GfError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Traffic {
    /// Bernoulli injection per slot with probability `z`.
    Slotted,
    /// Poisson injection process with rate `z`.
    Poisson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Connection {
    pub source: NodeId,
    pub sinks: Vec<NodeId>,
    /// Target rate; with no explicit duration the session runs `K / rate`.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub k: usize,
    /// Field degree, `q = 2^m`.
    pub m: u32,
    /// Payload symbols per packet.
    pub lambda: usize,
    /// Coding delay; `None` uses `K / rate`, infinity runs until decoding.
    pub duration: Option<f64>,
    pub traffic: Traffic,
    /// Innovation order used by the fluid instrumentation.
    pub mu: usize,
    pub seed: u64,
    #[serde(default)]
    pub memory: MemoryMode,
    /// Spacing of rank samples; zero disables the time series.
    pub sample_every: f64,
    /// End the session as soon as every sink has decoded.
    pub stop_on_decode: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            k: 32,
            m: 8,
            lambda: 4,
            duration: None,
            traffic: Traffic::Slotted,
            mu: 1,
            seed: 0,
            memory: MemoryMode::default(),
            sample_every: 0.0,
            stop_on_decode: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinkStats {
    pub node: NodeId,
    pub received: u64,
    pub innovative: u64,
    pub rank: usize,
    pub decoded: bool,
    /// Recovered payloads equal the source messages.
    pub correct: bool,
    pub decode_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStats {
    pub k: usize,
    pub duration: f64,
    /// Time the session actually ended.
    pub end_time: f64,
    pub transmissions: u64,
    /// Packets on each arc received by at least one head.
    pub arc_deliveries: Vec<u64>,
    pub sinks: Vec<SinkStats>,
    pub sample_times: Vec<f64>,
    /// `ranks[s][i]`: innovation rank of node `i` at `sample_times[s]`.
    pub ranks: Vec<Vec<usize>>,
    pub final_ranks: Vec<usize>,
}

impl SessionStats {
    pub fn all_decoded(&self) -> bool {
        self.sinks.iter().all(|s| s.decoded)
    }

    /// `tau,rank_t1,...` with one column per sink.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("tau");
        for t in &self.sinks {
            let _ = write!(s, ",rank_{}", t.node);
        }
        s.push('\n');
        for (tau, row) in self.sample_times.iter().zip(&self.ranks) {
            let _ = write!(s, "{tau}");
            for t in &self.sinks {
                let _ = write!(s, ",{}", row[t.node]);
            }
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("stats serialize")
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Draws a reception mask from cumulative fractions; 0 means lost.
fn draw_mask(cum: &[(u32, f64)], rng: &mut ChaCha8Rng) -> u32 {
    let u: f64 = rng.random();
    cum.iter().find(|&&(_, c)| u < c).map_or(0, |e| e.0)
}

struct NodeState {
    memory: Option<NodeMemory>,
    decoder: Option<SinkDecoder>,
    rng: ChaCha8Rng,
}

impl NodeState {
    fn rank(&self) -> usize {
        match (&self.memory, &self.decoder) {
            (Some(m), _) => m.innovation_rank(),
            (None, Some(d)) => d.rank(),
            _ => 0,
        }
    }
}

struct Session<'a> {
    net: &'a Hypernet,
    nodes: Vec<NodeState>,
    sinks: Vec<SinkStats>,
    messages: Vec<Vec<Elem>>,
    chan: ChaCha8Rng,
    transmissions: u64,
    arc_deliveries: Vec<u64>,
    sample_times: Vec<f64>,
    ranks: Vec<Vec<usize>>,
}

impl Session<'_> {
    fn emit(&mut self, a: usize) -> Result<Option<CodedPacket>, SimError> {
        let tail = self.net.arc(a).tail;
        let st = &mut self.nodes[tail];
        match &st.memory {
            Some(m) if !m.is_empty() => {
                self.transmissions += 1;
                Ok(Some(m.emit_coded(&mut st.rng)?))
            }
            _ => Ok(None),
        }
    }

    fn deliver(&mut self, a: usize, mask: u32, pkt: &CodedPacket, t: f64) -> Result<(), SimError> {
        if mask == 0 {
            return Ok(());
        }
        self.arc_deliveries[a] += 1;
        let heads = self.net.arc(a).heads.clone();
        for (h, &j) in heads.iter().enumerate() {
            if mask >> h & 1 == 0 {
                continue;
            }
            let st = &mut self.nodes[j];
            if let Some(mem) = st.memory.as_mut() {
                mem.receive_store(pkt.clone(), &mut st.rng)?;
            }
            if let Some(dec) = st.decoder.as_mut() {
                let si = self.sinks.iter().position(|s| s.node == j).expect("sink");
                let s = &mut self.sinks[si];
                s.received += 1;
                if dec.decode_incremental(pkt) {
                    s.innovative += 1;
                    s.rank = dec.rank();
                    if dec.is_complete() && s.decode_time.is_none() {
                        s.decode_time = Some(t);
                        s.decoded = true;
                        s.correct = dec.decoded().as_ref() == Some(&self.messages);
                    }
                }
            }
        }
        Ok(())
    }

    fn sample(&mut self, t: f64) {
        self.sample_times.push(t);
        self.ranks.push(self.nodes.iter().map(NodeState::rank).collect());
    }

    fn done(&self) -> bool {
        self.sinks.iter().all(|s| s.decoded)
    }
}

/// Runs one coded session and reports per-sink outcomes.
pub fn run_session(
    net: &Hypernet,
    loss: &LossModel,
    z: &[f64],
    conn: &Connection,
    cfg: &SimConfig,
) -> Result<SessionStats, SimError> {
    let n = net.num_nodes();
    if z.len() != net.num_arcs() {
        return Err(NetError::RateShape { got: z.len(), expected: net.num_arcs() }.into());
    }
    if z.iter().any(|&r| !(r >= 0.0 && r.is_finite())) {
        return Err(SimError::Config("rates must be finite and nonnegative".into()));
    }
    if cfg.traffic == Traffic::Slotted && z.iter().any(|&r| r > 1.0) {
        return Err(SimError::Config("slotted injection probabilities must be at most 1".into()));
    }
    if cfg.k == 0 {
        return Err(SimError::Config("generation size must be positive".into()));
    }
    if cfg.mu == 0 {
        return Err(SimError::Config("innovation order must be at least 1".into()));
    }
    if conn.source >= n || conn.sinks.iter().any(|&t| t >= n || t == conn.source) {
        return Err(SimError::Config("connection endpoints out of range".into()));
    }
    if conn.sinks.is_empty() {
        return Err(SimError::Config("connection has no sinks".into()));
    }
    let duration = match cfg.duration {
        Some(d) => d,
        None if conn.rate > 0.0 => cfg.k as f64 / conn.rate,
        None => return Err(SimError::Config("need a positive rate or a duration".into())),
    };
    if !(duration > 0.0) {
        return Err(SimError::Config("duration must be positive".into()));
    }
    let stop_on_decode = cfg.stop_on_decode || duration.is_infinite();
    let aloha = matches!(loss, LossModel::AlohaRelay(_));
    if aloha && cfg.traffic == Traffic::Poisson {
        return Err(SimError::Config("collision model needs slotted traffic".into()));
    }
    if duration.is_infinite() && z.iter().all(|&r| r == 0.0) {
        return Err(SimError::Config("rateless session with all rates zero".into()));
    }

    let f = field(cfg.m)?;
    let mut msg_rng = stream_rng(cfg.seed, u64::MAX);
    let messages: Vec<Vec<Elem>> = (0..cfg.k).map(|_| f.random_vec(&mut msg_rng, cfg.lambda)).collect();

    // Conditional reception fractions given that the packet is not collided.
    let cum: Vec<Vec<(u32, f64)>> = (0..net.num_arcs())
        .map(|a| {
            let frac = if aloha {
                reception_fractions(net, loss, a, &vec![0.0; net.num_arcs()])
            } else {
                reception_fractions(net, loss, a, z)
            }?;
            let mut acc = 0.0;
            Ok(frac
                .into_iter()
                .map(|(mask, p)| {
                    acc += p;
                    (mask, acc)
                })
                .collect())
        })
        .collect::<Result<_, NetError>>()?;

    let mut nodes = Vec::with_capacity(n);
    for i in 0..n {
        let rng = stream_rng(cfg.seed, i as u64 + 1);
        let is_sink = conn.sinks.contains(&i);
        let has_out = net.out_arcs(i).next().is_some();
        let memory = if i == conn.source {
            Some(source_init(f, cfg.seed, &messages)?)
        } else if has_out {
            Some(NodeMemory::new(f, cfg.memory, cfg.seed, cfg.k, cfg.lambda)?)
        } else {
            None
        };
        let decoder = is_sink.then(|| SinkDecoder::new(f, cfg.seed, cfg.k, cfg.lambda));
        nodes.push(NodeState { memory, decoder, rng });
    }
    let sinks = conn
        .sinks
        .iter()
        .map(|&t| SinkStats {
            node: t,
            received: 0,
            innovative: 0,
            rank: 0,
            decoded: false,
            correct: false,
            decode_time: None,
        })
        .collect();
    let mut s = Session {
        net,
        nodes,
        sinks,
        messages,
        chan: stream_rng(cfg.seed, 0),
        transmissions: 0,
        arc_deliveries: vec![0; net.num_arcs()],
        sample_times: Vec::new(),
        ranks: Vec::new(),
    };
    let sampling = cfg.sample_every > 0.0;
    if sampling {
        s.sample(0.0);
    }
    let mut next_sample = cfg.sample_every;
    let mut end_time;

    match cfg.traffic {
        Traffic::Slotted => {
            let slots = if duration.is_infinite() { u64::MAX } else { duration.floor() as u64 };
            let mut slot = 0u64;
            end_time = 0.0;
            let mut fired = vec![false; net.num_arcs()];
            while slot < slots {
                for (a, fire) in fired.iter_mut().enumerate() {
                    *fire = z[a] > 0.0 && s.chan.random_bool(z[a]);
                }
                let collided = aloha && fired.iter().filter(|&&x| x).count() > 1;
                let mut outgoing = Vec::new();
                for a in 0..net.num_arcs() {
                    if fired[a] {
                        if let Some(pkt) = s.emit(a)? {
                            let mask = if collided { 0 } else { draw_mask(&cum[a], &mut s.chan) };
                            outgoing.push((a, mask, pkt));
                        }
                    }
                }
                slot += 1;
                let t = slot as f64;
                for (a, mask, pkt) in &outgoing {
                    s.deliver(*a, *mask, pkt, t)?;
                }
                end_time = t;
                while sampling && next_sample <= t {
                    s.sample(next_sample);
                    next_sample += cfg.sample_every;
                }
                if stop_on_decode && s.done() {
                    break;
                }
            }
        }
        Traffic::Poisson => {
            let exp = |rng: &mut ChaCha8Rng, rate: f64| -> f64 {
                if rate > 0.0 {
                    -(1.0 - rng.random::<f64>()).ln() / rate
                } else {
                    f64::INFINITY
                }
            };
            let mut next: Vec<f64> = (0..net.num_arcs()).map(|a| exp(&mut s.chan, z[a])).collect();
            end_time = duration;
            loop {
                let (a, t) = next
                    .iter()
                    .copied()
                    .enumerate()
                    .fold((usize::MAX, f64::INFINITY), |b, (a, t)| if t < b.1 { (a, t) } else { b });
                if a == usize::MAX || t >= duration {
                    break;
                }
                while sampling && next_sample <= t {
                    s.sample(next_sample);
                    next_sample += cfg.sample_every;
                }
                if let Some(pkt) = s.emit(a)? {
                    let mask = draw_mask(&cum[a], &mut s.chan);
                    s.deliver(a, mask, &pkt, t)?;
                }
                next[a] = t + exp(&mut s.chan, z[a]);
                if stop_on_decode && s.done() {
                    end_time = t;
                    break;
                }
            }
            while sampling && next_sample <= end_time && end_time.is_finite() {
                s.sample(next_sample);
                next_sample += cfg.sample_every;
            }
        }
    }
    let final_ranks = s.nodes.iter().map(NodeState::rank).collect();
    Ok(SessionStats {
        k: cfg.k,
        duration,
        end_time,
        transmissions: s.transmissions,
        arc_deliveries: s.arc_deliveries,
        sinks: s.sinks,
        sample_times: s.sample_times,
        ranks: s.ranks,
        final_ranks,
    })
}

/// Builds an L-link line `0 -> 1 -> ... -> L` of simple arcs.
pub fn tandem_net(links: usize) -> Hypernet {
    let mut net = Hypernet::new(links + 1);
    for i in 0..links {
        net.add_arc(i, &[i + 1]).expect("simple arc");
    }
    net
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluidReport {
    /// `(z_in - (1 - q^-μ) z_out)^+`.
    pub theory_slope: f64,
    pub fitted_slope: f64,
    pub rel_error: f64,
    /// Largest gap between `Q(τ)/K` and the fluid line, relative to the
    /// fluid value at the end of the window.
    pub max_rel_deviation: f64,
    pub points: usize,
}

/// Compares the backlog of innovation between `up` and `down` with the
/// fluid prediction. The fit uses samples before `up` reaches 0.9 K.
pub fn track_innovation(
    stats: &SessionStats,
    up: NodeId,
    down: NodeId,
    z_in: f64,
    z_out: f64,
    mu: usize,
    q: f64,
) -> Result<FluidReport, SimError> {
    let n = stats.final_ranks.len();
    if up >= n || down >= n || up == down {
        return Err(SimError::Config("probe nodes must be two distinct nodes".into()));
    }
    if stats.ranks.len() < 3 {
        return Err(SimError::Config("need a sampled rank series".into()));
    }
    let k = stats.k as f64;
    let theory = (z_in - (1.0 - q.powi(-(mu as i32))) * z_out).max(0.0);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (t, row) in stats.sample_times.iter().zip(&stats.ranks) {
        if row[up] as f64 >= 0.9 * k {
            break;
        }
        let qv = (row[up] as f64 - row[down] as f64 - mu as f64 + 1.0).max(0.0);
        xs.push(*t);
        ys.push(qv);
    }
    if xs.len() < 3 {
        return Err(SimError::Config("too few samples before saturation".into()));
    }
    let (_, slope, _) = linear_fit(&xs, &ys);
    let tmax = *xs.last().unwrap();
    let scale = (theory * tmax / k).max(1.0 / k);
    let dev = xs
        .iter()
        .zip(&ys)
        .map(|(t, y)| (y / k - theory * t / k).abs() / scale)
        .fold(0.0, f64::max);
    let rel_error = if theory > 0.0 { (slope - theory).abs() / theory } else { slope.abs() };
    Ok(FluidReport { theory_slope: theory, fitted_slope: slope, rel_error, max_rel_deviation: dev, points: xs.len() })
}

/// `C - R - R ln(C/R)` for `0 < R <= C`.
pub fn exponent_theory(c: f64, r: f64) -> f64 {
    c - r - r * (c / r).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExponentConfig {
    pub capacity: f64,
    pub rate: f64,
    pub deltas: Vec<f64>,
    pub trials: u64,
    /// Per-head reception probability on both links.
    pub success_prob: f64,
    /// Capacity of the second link relative to the first.
    pub link2_ratio: f64,
    pub m: u32,
    pub seed: u64,
}

impl Default for ExponentConfig {
    fn default() -> Self {
        ExponentConfig {
            capacity: 1.0,
            rate: 0.5,
            deltas: vec![4.0, 8.0, 12.0, 16.0, 20.0, 24.0, 28.0, 32.0],
            trials: 20_000,
            success_prob: 0.8,
            link2_ratio: 2.0,
            m: 8,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentPoint {
    pub delta: f64,
    pub k: usize,
    pub trials: u64,
    pub failures: u64,
    pub p_e: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentReport {
    pub points: Vec<ExponentPoint>,
    /// Grid points with no observed failure, left out of the fit.
    pub dropped: Vec<f64>,
    pub slope: f64,
    pub slope_se: f64,
    pub theory: f64,
}

/// Estimates the decay rate of the decoding error probability in the coding
/// delay on a two-link line with Poisson traffic and iid losses.
pub fn estimate_error_exponent(cfg: &ExponentConfig) -> Result<ExponentReport, SimError> {
    if !(cfg.rate > 0.0 && cfg.rate <= cfg.capacity) {
        return Err(SimError::Config("need 0 < R <= C".into()));
    }
    if !(cfg.success_prob > 0.0 && cfg.success_prob <= 1.0) || cfg.link2_ratio < 1.0 {
        return Err(SimError::Config("bad link parameters".into()));
    }
    let net = tandem_net(2);
    let p = cfg.success_prob;
    let loss = LossModel::Iid(vec![vec![p], vec![p]]);
    let z = [cfg.capacity / p, cfg.capacity * cfg.link2_ratio / p];
    let conn = Connection { source: 0, sinks: vec![2], rate: cfg.rate };
    let mut points = Vec::new();
    let mut dropped = Vec::new();
    for (gi, &delta) in cfg.deltas.iter().enumerate() {
        let k = (cfg.rate * delta).round().max(1.0) as usize;
        let mut failures = 0u64;
        for trial in 0..cfg.trials {
            let sc = SimConfig {
                k,
                m: cfg.m,
                lambda: 0,
                duration: Some(delta),
                traffic: Traffic::Poisson,
                seed: cfg.seed.wrapping_mul(1_000_003).wrapping_add((gi as u64) << 40 | trial),
                ..SimConfig::default()
            };
            if !run_session(&net, &loss, &z, &conn, &sc)?.all_decoded() {
                failures += 1;
            }
        }
        let (lo, hi) = wilson(failures, cfg.trials, 1.96);
        let pt = ExponentPoint {
            delta,
            k,
            trials: cfg.trials,
            failures,
            p_e: failures as f64 / cfg.trials as f64,
            wilson_lo: lo,
            wilson_hi: hi,
        };
        if failures == 0 {
            dropped.push(delta);
        }
        points.push(pt);
    }
    let used: Vec<&ExponentPoint> = points.iter().filter(|p| p.failures > 0).collect();
    let (slope, se) = if used.len() >= 2 {
        let xs: Vec<f64> = used.iter().map(|p| p.delta).collect();
        let ys: Vec<f64> = used.iter().map(|p| -p.p_e.ln()).collect();
        let (_, b, se) = linear_fit(&xs, &ys);
        (b, se)
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(ExponentReport { points, dropped, slope, slope_se: se, theory: exponent_theory(cfg.capacity, cfg.rate) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(k: usize, seed: u64) -> SimConfig {
        SimConfig { k, seed, lambda: 3, ..SimConfig::default() }
    }

    #[test]
    fn tandem_decodes_below_capacity() {
        let net = tandem_net(2);
        let conn = Connection { source: 0, sinks: vec![2], rate: 0.7 };
        let mut ok = 0;
        for seed in 0..20 {
            let st = run_session(&net, &LossModel::Lossless, &[1.0, 1.0], &conn, &cfg(32, seed)).unwrap();
            let s = &st.sinks[0];
            if s.decoded {
                assert!(s.correct);
                ok += 1;
            }
            assert!(s.rank as u64 <= st.arc_deliveries.iter().copied().min().unwrap());
        }
        assert!(ok >= 19);
    }

    #[test]
    fn deterministic_given_seed() {
        let net = tandem_net(2);
        let conn = Connection { source: 0, sinks: vec![2], rate: 0.5 };
        let loss = LossModel::Iid(vec![vec![0.9], vec![0.7]]);
        let mut c = cfg(16, 7);
        c.traffic = Traffic::Poisson;
        c.sample_every = 1.0;
        let a = run_session(&net, &loss, &[1.0, 1.0], &conn, &c).unwrap();
        let b = run_session(&net, &loss, &[1.0, 1.0], &conn, &c).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        for w in a.ranks.windows(2) {
            assert!(w[0][2] <= w[1][2]);
        }
    }

    #[test]
    fn rateless_stops_on_decode() {
        let net = tandem_net(1);
        let conn = Connection { source: 0, sinks: vec![1], rate: 1.0 };
        let mut c = cfg(8, 3);
        c.duration = Some(f64::INFINITY);
        let st = run_session(&net, &LossModel::Iid(vec![vec![0.5]]), &[1.0], &conn, &c).unwrap();
        assert!(st.all_decoded() && st.sinks[0].correct);
        assert_eq!(st.sinks[0].decode_time, Some(st.end_time));
    }

    #[test]
    fn rejects_bad_configs() {
        let net = tandem_net(1);
        let conn = Connection { source: 0, sinks: vec![1], rate: 1.0 };
        let l = LossModel::Lossless;
        assert!(run_session(&net, &l, &[1.5], &conn, &cfg(4, 0)).is_err());
        assert!(run_session(&net, &l, &[1.0, 1.0], &conn, &cfg(4, 0)).is_err());
        let mut c = cfg(4, 0);
        c.mu = 0;
        assert!(run_session(&net, &l, &[1.0], &conn, &c).is_err());
    }

    #[test]
    fn csv_header() {
        let net = tandem_net(1);
        let conn = Connection { source: 0, sinks: vec![1], rate: 1.0 };
        let mut c = cfg(4, 0);
        c.sample_every = 2.0;
        let st = run_session(&net, &LossModel::Lossless, &[1.0], &conn, &c).unwrap();
        let csv = st.to_csv();
        assert!(csv.starts_with("tau,rank_1\n0,0\n"));
    }

    #[test]
    fn exponent_formula() {
        assert!((exponent_theory(1.0, 0.5) - 0.153426).abs() < 1e-6);
        assert_eq!(exponent_theory(1.0, 1.0), 0.0);
        assert!(exponent_theory(1.0, 0.3) > exponent_theory(1.0, 0.6));
    }

    #[test]
    fn fluid_zero_when_downstream_faster() {
        let net = tandem_net(2);
        let conn = Connection { source: 0, sinks: vec![2], rate: 0.3 };
        let mut c = cfg(200, 5);
        c.lambda = 0;
        c.sample_every = 5.0;
        let st = run_session(&net, &LossModel::Lossless, &[0.4, 0.8], &conn, &c).unwrap();
        let r = track_innovation(&st, 1, 2, 0.4, 0.8, 1, 256.0).unwrap();
        assert_eq!(r.theory_slope, 0.0);
        assert!(r.fitted_slope.abs() < 0.05);
    }
}
