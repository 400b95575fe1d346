//! Finite-memory random linear coding at a single intermediate node: closed
//! forms for the infinite-field Markov chain and epoch-level simulations.
//!
//! Within an epoch an arrival (if any) is absorbed first, then one coded
//! packet is sent on the outgoing link.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::galois::{field_of_size, Elem, Field, GfError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FinMemError {
    #[error("need 0 < r < 1 - eps (r = {r}, eps = {eps})")]
    Domain { r: f64, eps: f64 },
    #[error("memory size must be at least 1")]
    ZeroMemory,
    #[error("tandem needs 0 <= eps < delta < 1 (delta = {delta}, eps = {eps})")]
    TandemDomain { delta: f64, eps: f64 },
    #[error(transparent)]
    Field(#[from] GfError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainParams {
    pub r: f64,
    pub eps: f64,
    pub m: usize,
}

impl ChainParams {
    pub fn new(r: f64, eps: f64, m: usize) -> Result<Self, FinMemError> {
        if m == 0 {
            return Err(FinMemError::ZeroMemory);
        }
        if !(r > 0.0 && eps >= 0.0 && r < 1.0 - eps) {
            return Err(FinMemError::Domain { r, eps });
        }
        Ok(ChainParams { r, eps, m })
    }

    pub fn rho(&self) -> f64 {
        self.r * self.eps / ((1.0 - self.r) * (1.0 - self.eps))
    }

    pub fn sigma(&self) -> f64 {
        self.r / (1.0 - self.eps)
    }

    /// Up-step probability `rε`.
    pub fn alpha(&self) -> f64 {
        self.r * self.eps
    }

    /// Down-step probability `(1-r)(1-ε)` below the top state.
    pub fn beta(&self) -> f64 {
        (1.0 - self.r) * (1.0 - self.eps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TandemParams {
    pub delta: f64,
    pub eps: f64,
    pub m: usize,
}

impl TandemParams {
    pub fn new(delta: f64, eps: f64, m: usize) -> Result<Self, FinMemError> {
        if m == 0 {
            return Err(FinMemError::ZeroMemory);
        }
        if !(eps >= 0.0 && eps < delta && delta < 1.0) {
            return Err(FinMemError::TandemDomain { delta, eps });
        }
        Ok(TandemParams { delta, eps, m })
    }

    /// The node-2 occupancy chain, which sees arrivals at rate `1 - δ`.
    pub fn chain(&self) -> ChainParams {
        ChainParams { r: 1.0 - self.delta, eps: self.eps, m: self.m }
    }

    /// Min-cut rate `1 - δ`.
    pub fn min_cut(&self) -> f64 {
        1.0 - self.delta
    }
}

/// Stationary law of the occupancy chain, `π_0..π_M`.
pub fn steady_state(p: &ChainParams) -> Vec<f64> {
    let (rho, sigma, m) = (p.rho(), p.sigma(), p.m);
    let denom = 1.0 - sigma * rho.powi(m as i32);
    let mut pi: Vec<f64> = (0..m).map(|i| rho.powi(i as i32) * (1.0 - rho) / denom).collect();
    pi.push(p.eps * sigma * rho.powi(m as i32 - 1) * (1.0 - rho) / denom);
    pi
}

/// Probability of reaching state 0 from state `i` with no arrival in state M.
pub fn ruin_probs(p: &ChainParams) -> Vec<f64> {
    let (rho, sigma, m) = (p.rho(), p.sigma(), p.m as i32);
    let denom = 1.0 - sigma * rho.powi(m);
    (0..=m).map(|i| (1.0 - sigma * rho.powi(m - i)) / denom).collect()
}

/// Closed-form upper bound on the packet loss probability, clipped to [0, 1].
pub fn loss_upper_bound(p: &ChainParams) -> f64 {
    let (rho, sigma, eps) = (p.rho(), p.sigma(), p.eps);
    let m = p.m as f64;
    let mi = p.m as i32;
    let denom = (1.0 - sigma * rho.powi(mi)).powi(2);
    let poly = eps * m * sigma + (1.0 - 2.0 * sigma + m * sigma - 2.0 * eps * m * sigma) * rho
        - (1.0 - eps) * m * sigma * rho * rho
        + sigma * sigma * rho.powi(mi + 1);
    let v = rho.powi(mi - 1) * poly / denom;
    v.clamp(0.0, 1.0)
}

/// The same bound assembled from `π` and the ruin probabilities.
pub fn loss_bound_from_sums(p: &ChainParams) -> f64 {
    let pi = steady_state(p);
    let q = ruin_probs(p);
    let ok: f64 = (0..p.m).map(|i| ((1.0 - p.eps) * q[i] + p.eps * q[i + 1]) * pi[i]).sum();
    (1.0 - ok).clamp(0.0, 1.0)
}

/// Relative rate loss `1 - R/R*` of the two-link tandem, equal to `π_M`.
pub fn tandem_rate_loss(p: &TandemParams) -> f64 {
    *steady_state(&p.chain()).last().unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IsolatedMode {
    /// Exact encoding and Gaussian elimination over message indices.
    ShiftRegister,
    /// Occupancy chain with finite-field innovation probabilities.
    Accumulator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolatedResult {
    pub arrivals: u64,
    pub lost: u64,
    pub loss_rate: f64,
    /// Batch-means standard error of `loss_rate`.
    pub loss_se: f64,
    /// Mean epochs from arrival to decoding over decoded packets.
    pub mean_delay: f64,
}

fn batch_stats(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

const BATCHES: usize = 50;

fn summarize(arrival: &[u64], decoded_at: &[Option<u64>]) -> IsolatedResult {
    let n = arrival.len();
    let lost = decoded_at.iter().filter(|d| d.is_none()).count() as u64;
    let (mut dsum, mut dcount) = (0.0, 0u64);
    for (a, d) in arrival.iter().zip(decoded_at) {
        if let Some(d) = d {
            dsum += (d - a) as f64;
            dcount += 1;
        }
    }
    let batches = BATCHES.min(n.max(1));
    let per = n / batches.max(1);
    let se = if per == 0 {
        f64::NAN
    } else {
        let fr: Vec<f64> = (0..batches)
            .map(|b| {
                let slice = &decoded_at[b * per..(b + 1) * per];
                slice.iter().filter(|d| d.is_none()).count() as f64 / per as f64
            })
            .collect();
        batch_stats(&fr).1
    };
    IsolatedResult {
        arrivals: n as u64,
        lost,
        loss_rate: if n == 0 { 0.0 } else { lost as f64 / n as f64 },
        loss_se: se,
        mean_delay: if dcount == 0 { 0.0 } else { dsum / dcount as f64 },
    }
}

/// Decoder row over a contiguous range of message indices.
#[derive(Debug, Clone)]
struct BandRow {
    lo: usize,
    v: Vec<Elem>,
}

impl BandRow {
    fn get(&self, c: usize) -> Elem {
        if c < self.lo {
            0
        } else {
            self.v.get(c - self.lo).copied().unwrap_or(0)
        }
    }

    fn hi(&self) -> usize {
        self.lo + self.v.len() - 1
    }

    fn trim(&mut self) {
        while self.v.last() == Some(&0) {
            self.v.pop();
        }
        let lead = self.v.iter().take_while(|&&x| x == 0).count();
        if lead > 0 {
            self.v.drain(..lead);
            self.lo += lead;
        }
    }

    /// `self += c * other`.
    fn axpy(&mut self, f: &Field, c: Elem, other: &BandRow) {
        if self.v.is_empty() {
            self.lo = other.lo;
            self.v = other.v.clone();
            f.scale(&mut self.v, c);
            self.trim();
            return;
        }
        let lo = self.lo.min(other.lo);
        let hi = self.hi().max(other.hi());
        if lo < self.lo {
            let mut nv = vec![0; self.lo - lo];
            nv.extend_from_slice(&self.v);
            self.v = nv;
            self.lo = lo;
        }
        self.v.resize(hi - self.lo + 1, 0);
        let off = other.lo - self.lo;
        f.axpy(&mut self.v[off..off + other.v.len()], c, &other.v);
        self.trim();
    }

    fn is_unit(&self) -> bool {
        self.v.len() == 1
    }
}

/// Banded incremental RREF keyed by pivot column.
struct BandDecoder {
    rows: BTreeMap<usize, BandRow>,
}

impl BandDecoder {
    /// Inserts a row; returns the pivot columns whose rows became unit.
    fn insert(&mut self, f: &Field, mut row: BandRow) -> Vec<usize> {
        row.trim();
        if row.v.is_empty() {
            return Vec::new();
        }
        let cols: Vec<usize> = (row.lo..=row.hi()).filter(|c| self.rows.contains_key(c)).collect();
        for c in cols {
            let coef = row.get(c);
            if coef != 0 {
                row.axpy(f, coef, &self.rows[&c]);
            }
        }
        if row.v.is_empty() {
            return Vec::new();
        }
        let p = row.lo;
        let inv = f.inv(row.v[0]).expect("nonzero");
        f.scale(&mut row.v, inv);
        let mut newly = Vec::new();
        for (&pc, other) in self.rows.iter_mut() {
            let coef = other.get(p);
            if coef != 0 {
                other.axpy(f, coef, &row);
                if other.is_unit() {
                    newly.push(pc);
                }
            }
        }
        if row.is_unit() {
            newly.push(p);
        }
        self.rows.insert(p, row);
        newly
    }

    /// Drops rows that only involve messages older than `start`; no future
    /// packet can touch them.
    fn collect(&mut self, start: usize) {
        self.rows.retain(|_, r| r.hi() >= start);
    }
}

/// Simulates `n` epochs at one encoder followed by a drain phase with no
/// arrivals. Loss is the fraction of arrivals never decoded.
pub fn simulate_isolated(
    p: &ChainParams,
    q: u64,
    n: u64,
    mode: IsolatedMode,
    seed: u64,
) -> Result<IsolatedResult, FinMemError> {
    match mode {
        IsolatedMode::ShiftRegister => simulate_shift_register(p, q, n, seed),
        IsolatedMode::Accumulator => Ok(simulate_accumulator_chain(p, q as f64, n, seed)),
    }
}

fn simulate_shift_register(
    p: &ChainParams,
    q: u64,
    n: u64,
    seed: u64,
) -> Result<IsolatedResult, FinMemError> {
    let f = field_of_size(q)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = p.m;
    let mut arrival: Vec<u64> = Vec::new();
    let mut decoded: Vec<Option<u64>> = Vec::new();
    let mut dec = BandDecoder { rows: BTreeMap::new() };
    let drain = 50 * m as u64 + 200;
    for epoch in 0..n + drain {
        if epoch < n && rng.random_bool(p.r) {
            arrival.push(epoch);
            decoded.push(None);
        }
        let count = arrival.len();
        if count == 0 {
            continue;
        }
        let lo = count.saturating_sub(m);
        let coeffs: Vec<Elem> = (lo..count).map(|_| f.random(&mut rng)).collect();
        if rng.random_bool(1.0 - p.eps) {
            for c in dec.insert(f, BandRow { lo, v: coeffs }) {
                decoded[c].get_or_insert(epoch);
            }
        }
        if epoch % 64 == 0 {
            dec.collect(lo);
        }
        if epoch >= n && decoded[lo..].iter().all(Option::is_some) {
            break;
        }
    }
    Ok(summarize(&arrival, &decoded))
}

/// Occupancy-chain simulation with finite-field effects: an arrival raises
/// the state with probability `1 - q^{x-M}` and a received packet is
/// innovative with probability `1 - q^{-x}`. Packets are decoded at the next
/// return to state 0 unless an overflow happens first.
fn simulate_accumulator_chain(p: &ChainParams, q: f64, n: u64, seed: u64) -> IsolatedResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = p.m as i32;
    let mut x: i32 = 0;
    let mut arrival = Vec::new();
    let mut decoded: Vec<Option<u64>> = Vec::new();
    // Arrivals since the last return to 0 that are not yet doomed.
    let mut pending: Vec<usize> = Vec::new();
    let qpow = |e: i32| if q.is_infinite() { if e == 0 { 1.0 } else { 0.0 } } else { q.powi(e) };
    let mut epoch = 0u64;
    loop {
        let arrivals_open = epoch < n;
        if !arrivals_open && x == 0 {
            break;
        }
        if arrivals_open && rng.random_bool(p.r) {
            let idx = arrival.len();
            arrival.push(epoch);
            decoded.push(None);
            if x < m && rng.random_bool(1.0 - qpow(x - m)) {
                x += 1;
                pending.push(idx);
            } else {
                // Overflow or no innovation gain: everything pending is lost.
                pending.clear();
            }
        }
        if x > 0 && rng.random_bool(1.0 - p.eps) && rng.random_bool(1.0 - qpow(-x)) {
            x -= 1;
            if x == 0 {
                for &i in &pending {
                    decoded[i] = Some(epoch);
                }
                pending.clear();
            }
        }
        epoch += 1;
        if epoch > n + 1_000_000 {
            break;
        }
    }
    summarize(&arrival, &decoded)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TandemResult {
    pub epochs: u64,
    /// Innovative packets delivered to the sink.
    pub delivered: u64,
    /// `1 - R_e / R*` with `R_e = y_N / N`.
    pub rate_loss: f64,
    /// Batch-means standard error of `rate_loss`.
    pub std_err: f64,
}

/// Two-link tandem with an accumulator of size M at the middle node.
/// `q = f64::INFINITY` gives the infinite-field chain.
pub fn simulate_tandem(p: &TandemParams, q: f64, n: u64, seed: u64) -> TandemResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = p.m as i32;
    let qpow = |e: i32| if q.is_infinite() { if e == 0 { 1.0 } else { 0.0 } } else { q.powi(e) };
    let up: Vec<f64> = (0..=m).map(|x| 1.0 - qpow(x - m)).collect();
    let out: Vec<f64> = (0..=m).map(|x| 1.0 - qpow(-x)).collect();
    let rstar = p.min_cut();
    let batches = 100u64.min(n.max(1));
    let per = n / batches;
    let mut x = 0i32;
    let mut y = 0u64;
    let mut batch_y = 0u64;
    let mut fr = Vec::with_capacity(batches as usize);
    for t in 0..n {
        if x < m && rng.random_bool(1.0 - p.delta) && rng.random_bool(up[x as usize]) {
            x += 1;
        }
        if x > 0 && rng.random_bool(1.0 - p.eps) && rng.random_bool(out[x as usize]) {
            x -= 1;
            y += 1;
            batch_y += 1;
        }
        if per > 0 && (t + 1) % per == 0 && (fr.len() as u64) < batches {
            fr.push(1.0 - batch_y as f64 / per as f64 / rstar);
            batch_y = 0;
        }
    }
    let (_, se) = batch_stats(&fr);
    TandemResult {
        epochs: n,
        delivered: y,
        rate_loss: 1.0 - y as f64 / n as f64 / rstar,
        std_err: se,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_point() {
        let p = ChainParams::new(0.8, 0.1, 2).unwrap();
        let pi = steady_state(&p);
        // Birth-death balance solved by hand: rates 0.08 up, 0.18 down, 0.9 from the top.
        let w = [1.0, 0.08 / 0.18, 0.08 / 0.18 * 0.08 / 0.9];
        let s: f64 = w.iter().sum();
        for i in 0..3 {
            assert!((pi[i] - w[i] / s).abs() < 1e-12);
        }
        assert!((pi[0] - 0.6739).abs() < 1e-4);
        assert!((pi[1] - 0.2995).abs() < 1e-4);
        assert!((pi[2] - 0.0266).abs() < 1e-4);
        assert!((loss_upper_bound(&p) - 0.14222).abs() < 1e-4);
    }

    #[test]
    fn bound_matches_its_derivation() {
        for (r, eps) in [(0.8, 0.1), (0.6, 0.1), (0.3, 0.4), (0.5, 0.2)] {
            for m in 1..12 {
                let p = ChainParams::new(r, eps, m).unwrap();
                assert!((loss_upper_bound(&p) - loss_bound_from_sums(&p)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn throughput_identity() {
        // (1-ε)(1-δπ0) = (1-δ)(1-π_M)
        let t = TandemParams::new(0.2, 0.1, 3).unwrap();
        let pi = steady_state(&t.chain());
        let lhs = (1.0 - t.eps) * (1.0 - t.delta * pi[0]);
        let rhs = (1.0 - t.delta) * (1.0 - pi[3]);
        assert!((lhs - rhs).abs() < 1e-14);
        assert!((tandem_rate_loss(&TandemParams::new(0.2, 0.1, 2).unwrap()) - 0.02663).abs() < 1e-4);
    }

    #[test]
    fn limits() {
        let p = ChainParams::new(0.5, 0.0, 3).unwrap();
        assert_eq!(steady_state(&p)[0], 1.0);
        assert_eq!(loss_upper_bound(&p), 0.0);
        let big = TandemParams::new(0.2, 0.1, 60).unwrap();
        assert!(tandem_rate_loss(&big) < 1e-15);
        assert!(ChainParams::new(0.95, 0.1, 2).is_err());
        assert!(ChainParams::new(0.5, 0.1, 0).is_err());
        assert!(TandemParams::new(0.1, 0.2, 2).is_err());
    }

    #[test]
    fn no_erasures_no_loss() {
        let p = ChainParams::new(0.7, 0.0, 2).unwrap();
        let r = simulate_isolated(&p, 256, 5000, IsolatedMode::ShiftRegister, 1).unwrap();
        assert_eq!(r.lost, 0);
        // Only a zero coefficient on the newest packet can hold it back.
        assert!(r.mean_delay < 0.05);
        let r = simulate_isolated(&p, 65536, 5000, IsolatedMode::Accumulator, 1).unwrap();
        assert!(r.loss_rate < 1e-3);
    }

    #[test]
    fn band_decoder_resolves_chains() {
        let f = crate::galois::field(8).unwrap();
        let mut d = BandDecoder { rows: BTreeMap::new() };
        assert!(d.insert(f, BandRow { lo: 0, v: vec![1, 1] }).is_empty());
        assert!(d.insert(f, BandRow { lo: 1, v: vec![1, 1] }).is_empty());
        let mut got = d.insert(f, BandRow { lo: 2, v: vec![5] });
        got.sort();
        assert_eq!(got, vec![0, 1, 2]);
    }

    #[test]
    fn tandem_infinite_field_close_to_theory() {
        let t = TandemParams::new(0.2, 0.1, 2).unwrap();
        let r = simulate_tandem(&t, f64::INFINITY, 200_000, 3);
        assert!((r.rate_loss - tandem_rate_loss(&t)).abs() < 4.0 * r.std_err + 1e-3);
    }
}
