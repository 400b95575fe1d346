//! Random linear coding: coded packets, node memories and the sink decoder.

use std::collections::VecDeque;

use rand::Rng;
use thiserror::Error;

use crate::galois::{full_rank_prob, mat_rank, Elem, Field, FieldMatrix};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("no messages supplied")]
    NoMessages,
    #[error("message {index} has {len} symbols, expected {expected}")]
    Ragged { index: usize, len: usize, expected: usize },
    #[error("packet belongs to generation {got}, memory holds {expected}")]
    GenerationMismatch { expected: u64, got: u64 },
    #[error("packet shape (K={k}, len={len}) does not match memory (K={ek}, len={elen})")]
    ShapeMismatch { k: usize, len: usize, ek: usize, elen: usize },
    #[error("memory is empty")]
    EmptyMemory,
    #[error("memory size must be at least 1")]
    ZeroMemory,
    #[error("malformed packet bytes: {0}")]
    Wire(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodedPacket {
    pub generation_id: u64,
    pub gev: Vec<Elem>,
    pub payload: Vec<Elem>,
}

impl CodedPacket {
    pub fn k(&self) -> usize {
        self.gev.len()
    }

    /// Header size in bits excluding the fixed 11-byte prefix.
    pub fn gev_bits(&self, m: u32) -> usize {
        self.gev.len() * m as usize
    }

    /// Serializes as: generation id (u64 LE), K (u16 LE), m (u8), gev packed
    /// LSB-first into K·m bits padded to a byte, then each payload symbol in
    /// ⌈m/8⌉ little-endian bytes.
    pub fn to_bytes(&self, m: u32) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.generation_id.to_le_bytes());
        out.extend_from_slice(&(self.gev.len() as u16).to_le_bytes());
        out.push(m as u8);
        let nbits = self.gev_bits(m);
        let mut packed = vec![0u8; nbits.div_ceil(8)];
        for (k, &g) in self.gev.iter().enumerate() {
            for b in 0..m as usize {
                if (g >> b) & 1 == 1 {
                    let bit = k * m as usize + b;
                    packed[bit / 8] |= 1 << (bit % 8);
                }
            }
        }
        out.extend_from_slice(&packed);
        let width = (m as usize).div_ceil(8);
        for &s in &self.payload {
            out.extend_from_slice(&s.to_le_bytes()[..width]);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<CodedPacket, CodecError> {
        if bytes.len() < 11 {
            return Err(CodecError::Wire(format!("{} bytes, need at least 11", bytes.len())));
        }
        let generation_id = u64::from_le_bytes(bytes[0..8].try_into().unwrap());
        let k = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
        let m = bytes[10] as usize;
        if m == 0 || m > 16 {
            return Err(CodecError::Wire(format!("field degree {m}")));
        }
        let gev_len = (k * m).div_ceil(8);
        let rest = &bytes[11..];
        if rest.len() < gev_len {
            return Err(CodecError::Wire("truncated encoding vector".into()));
        }
        let mut gev = vec![0 as Elem; k];
        for (i, g) in gev.iter_mut().enumerate() {
            for b in 0..m {
                let bit = i * m + b;
                if (rest[bit / 8] >> (bit % 8)) & 1 == 1 {
                    *g |= 1 << b;
                }
            }
        }
        let width = m.div_ceil(8);
        let body = &rest[gev_len..];
        if !body.len().is_multiple_of(width) {
            return Err(CodecError::Wire("payload not a whole number of symbols".into()));
        }
        let payload = body
            .chunks(width)
            .map(|c| {
                let v = if width == 1 { c[0] as Elem } else { Elem::from_le_bytes([c[0], c[1]]) };
                if m < 16 && (v as u32) >> m != 0 {
                    Err(CodecError::Wire(format!("symbol {v} exceeds field")))
                } else {
                    Ok(v)
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(CodedPacket { generation_id, gev, payload })
    }
}

/// Rows `[gev | payload]` kept in reduced row echelon form over the gev part.
#[derive(Debug, Clone)]
pub struct RrefBasis {
    k: usize,
    width: usize,
    rows: Vec<Vec<Elem>>,
    pivot_row: Vec<Option<usize>>,
}

impl RrefBasis {
    pub fn new(k: usize, width: usize) -> Self {
        RrefBasis { k, width, rows: Vec::new(), pivot_row: vec![None; k] }
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<Elem>] {
        &self.rows
    }

    /// Reduces `row` against the basis without storing it. Returns the first
    /// nonzero gev column of the residue.
    pub fn reduce(&self, f: &Field, row: &mut [Elem]) -> Option<usize> {
        for c in 0..self.k {
            if row[c] != 0 {
                if let Some(r) = self.pivot_row[c] {
                    let coef = row[c];
                    f.axpy(row, coef, &self.rows[r]);
                }
            }
        }
        row[..self.k].iter().position(|&v| v != 0)
    }

    pub fn is_innovative(&self, f: &Field, gev: &[Elem]) -> bool {
        let mut row = gev.to_vec();
        row.resize(self.k, 0);
        for c in 0..self.k {
            if row[c] != 0 {
                if let Some(r) = self.pivot_row[c] {
                    let coef = row[c];
                    f.axpy(&mut row, coef, &self.rows[r][..self.k]);
                }
            }
        }
        row.iter().any(|&v| v != 0)
    }

    /// Inserts `row` (length `width`). Returns true if it raised the rank.
    pub fn insert(&mut self, f: &Field, mut row: Vec<Elem>) -> bool {
        debug_assert_eq!(row.len(), self.width);
        let Some(c) = self.reduce(f, &mut row) else {
            return false;
        };
        let inv = f.inv(row[c]).expect("nonzero pivot");
        f.scale(&mut row, inv);
        for other in self.rows.iter_mut() {
            let coef = other[c];
            if coef != 0 {
                f.axpy(other, coef, &row);
            }
        }
        self.pivot_row[c] = Some(self.rows.len());
        self.rows.push(row);
        true
    }

    /// Payload of message `c` once its pivot row is a unit vector.
    pub fn solved(&self, c: usize) -> Option<&[Elem]> {
        let r = self.pivot_row[c]?;
        let row = &self.rows[r];
        let unit = row[..self.k].iter().enumerate().all(|(j, &v)| (j == c) == (v != 0));
        unit.then(|| &row[self.k..])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum MemoryMode {
    /// Unlimited storage; with `filter` only innovative packets are kept.
    Unbounded { filter: bool },
    ShiftRegister(usize),
    Accumulator(usize),
}

impl Default for MemoryMode {
    fn default() -> Self {
        MemoryMode::Unbounded { filter: true }
    }
}

#[derive(Debug, Clone)]
pub struct NodeMemory {
    field: &'static Field,
    mode: MemoryMode,
    generation_id: u64,
    k: usize,
    lambda: usize,
    stored: VecDeque<CodedPacket>,
    basis: RrefBasis,
    rank: usize,
}

impl NodeMemory {
    pub fn new(
        field: &'static Field,
        mode: MemoryMode,
        generation_id: u64,
        k: usize,
        lambda: usize,
    ) -> Result<Self, CodecError> {
        let mut stored = VecDeque::new();
        match mode {
            MemoryMode::ShiftRegister(0) | MemoryMode::Accumulator(0) => {
                return Err(CodecError::ZeroMemory)
            }
            MemoryMode::Accumulator(m) => {
                for _ in 0..m {
                    stored.push_back(CodedPacket {
                        generation_id,
                        gev: vec![0; k],
                        payload: vec![0; lambda],
                    });
                }
            }
            _ => {}
        }
        Ok(NodeMemory {
            field,
            mode,
            generation_id,
            k,
            lambda,
            stored,
            basis: RrefBasis::new(k, k),
            rank: 0,
        })
    }

    pub fn mode(&self) -> MemoryMode {
        self.mode
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn stored(&self) -> impl Iterator<Item = &CodedPacket> {
        self.stored.iter()
    }

    pub fn len(&self) -> usize {
        self.stored.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stored.is_empty()
    }

    pub fn innovation_rank(&self) -> usize {
        self.rank
    }

    fn recompute_rank(&mut self) {
        let data: Vec<Elem> = self.stored.iter().flat_map(|p| p.gev.iter().copied()).collect();
        let m = FieldMatrix::new(self.stored.len(), self.k, data).expect("consistent shape");
        self.rank = mat_rank(self.field, &m);
    }

    pub fn receive_store<R: Rng + ?Sized>(
        &mut self,
        pkt: CodedPacket,
        rng: &mut R,
    ) -> Result<bool, CodecError> {
        if pkt.generation_id != self.generation_id {
            return Err(CodecError::GenerationMismatch {
                expected: self.generation_id,
                got: pkt.generation_id,
            });
        }
        if pkt.gev.len() != self.k || pkt.payload.len() != self.lambda {
            return Err(CodecError::ShapeMismatch {
                k: pkt.gev.len(),
                len: pkt.payload.len(),
                ek: self.k,
                elen: self.lambda,
            });
        }
        let before = self.rank;
        match self.mode {
            MemoryMode::Unbounded { filter } => {
                let innovative = self.basis.insert(self.field, pkt.gev.clone());
                if innovative || !filter {
                    self.stored.push_back(pkt);
                }
                self.rank = self.basis.rank();
            }
            MemoryMode::ShiftRegister(m) => {
                if self.stored.len() == m {
                    self.stored.pop_front();
                }
                self.stored.push_back(pkt);
                self.recompute_rank();
            }
            MemoryMode::Accumulator(_) => {
                let f = self.field;
                for slot in self.stored.iter_mut() {
                    let r = f.random(rng);
                    f.axpy(&mut slot.gev, r, &pkt.gev);
                    f.axpy(&mut slot.payload, r, &pkt.payload);
                }
                self.recompute_rank();
            }
        }
        Ok(self.rank > before)
    }

    /// Uniformly random linear combination of the stored packets.
    pub fn emit_coded<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<CodedPacket, CodecError> {
        if self.stored.is_empty() {
            return Err(CodecError::EmptyMemory);
        }
        let f = self.field;
        let mut gev = vec![0; self.k];
        let mut payload = vec![0; self.lambda];
        for p in &self.stored {
            let a = f.random(rng);
            f.axpy(&mut gev, a, &p.gev);
            f.axpy(&mut payload, a, &p.payload);
        }
        Ok(CodedPacket { generation_id: self.generation_id, gev, payload })
    }
}

/// Primes an unbounded memory with the K source messages under unit gevs.
pub fn source_init(
    field: &'static Field,
    generation_id: u64,
    messages: &[Vec<Elem>],
) -> Result<NodeMemory, CodecError> {
    let k = messages.len();
    if k == 0 {
        return Err(CodecError::NoMessages);
    }
    let lambda = messages[0].len();
    if let Some((index, m)) = messages.iter().enumerate().find(|(_, m)| m.len() != lambda) {
        return Err(CodecError::Ragged { index, len: m.len(), expected: lambda });
    }
    let mut mem = NodeMemory::new(field, MemoryMode::Unbounded { filter: true }, generation_id, k, lambda)?;
    for (i, w) in messages.iter().enumerate() {
        let mut gev = vec![0; k];
        gev[i] = 1;
        mem.basis.insert(field, gev.clone());
        mem.stored.push_back(CodedPacket { generation_id, gev, payload: w.clone() });
    }
    mem.rank = k;
    Ok(mem)
}

#[derive(Debug, Clone)]
pub struct SinkDecoder {
    field: &'static Field,
    generation_id: u64,
    k: usize,
    lambda: usize,
    basis: RrefBasis,
}

impl SinkDecoder {
    pub fn new(field: &'static Field, generation_id: u64, k: usize, lambda: usize) -> Self {
        SinkDecoder { field, generation_id, k, lambda, basis: RrefBasis::new(k, k + lambda) }
    }

    pub fn rank(&self) -> usize {
        self.basis.rank()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn is_complete(&self) -> bool {
        self.basis.rank() == self.k
    }

    /// Absorbs a packet; returns true if it was innovative. Packets of another
    /// generation or shape are ignored.
    pub fn decode_incremental(&mut self, pkt: &CodedPacket) -> bool {
        if pkt.generation_id != self.generation_id
            || pkt.gev.len() != self.k
            || pkt.payload.len() != self.lambda
            || self.is_complete()
        {
            return false;
        }
        let mut row = Vec::with_capacity(self.k + self.lambda);
        row.extend_from_slice(&pkt.gev);
        row.extend_from_slice(&pkt.payload);
        self.basis.insert(self.field, row)
    }

    /// The K messages, available once the rank reaches K.
    pub fn decoded(&self) -> Option<Vec<Vec<Elem>>> {
        if !self.is_complete() {
            return None;
        }
        (0..self.k).map(|c| self.basis.solved(c).map(<[Elem]>::to_vec)).collect()
    }

    pub fn is_innovative(&self, gev: &[Elem]) -> bool {
        let mut row = gev.to_vec();
        row.resize(self.k + self.lambda, 0);
        self.basis.reduce(self.field, &mut row).is_some()
    }
}

/// Probability that ⌊K(1+ε)⌋ uniform packets have full rank K.
pub fn expected_decode_count(k: usize, q: f64, eps: f64) -> f64 {
    let n = (k as f64 * (1.0 + eps)).floor() as usize;
    full_rank_prob(n, k, q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::galois::field;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn messages(f: &Field, k: usize, lambda: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<Elem>> {
        (0..k).map(|_| f.random_vec(rng, lambda)).collect()
    }

    #[test]
    fn source_holds_unit_vectors() {
        let f = field(8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = messages(f, 4, 8, &mut rng);
        let mem = source_init(f, 0, &w).unwrap();
        assert_eq!(mem.len(), 4);
        assert_eq!(mem.innovation_rank(), 4);
        let one = source_init(f, 0, &w[..1]).unwrap();
        assert_eq!(one.stored().next().unwrap().gev, vec![1]);
        assert_eq!(source_init(f, 0, &[]).unwrap_err(), CodecError::NoMessages);
        let ragged = vec![vec![1, 2], vec![3]];
        assert!(matches!(source_init(f, 0, &ragged), Err(CodecError::Ragged { index: 1, .. })));
    }

    #[test]
    fn round_trip_decode() {
        let f = field(8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = messages(f, 3, 5, &mut rng);
        let src = source_init(f, 9, &w).unwrap();
        let mut dec = SinkDecoder::new(f, 9, 3, 5);
        let mut sent = 0;
        while !dec.is_complete() {
            let p = src.emit_coded(&mut rng).unwrap();
            let mut expect = vec![0; 5];
            for (k, wk) in w.iter().enumerate() {
                f.axpy(&mut expect, p.gev[k], wk);
            }
            assert_eq!(p.payload, expect);
            dec.decode_incremental(&p);
            sent += 1;
        }
        assert!(sent >= 3);
        assert_eq!(dec.decoded().unwrap(), w);
    }

    #[test]
    fn unit_packets_and_duplicates() {
        let f = field(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = messages(f, 3, 2, &mut rng);
        let src = source_init(f, 0, &w).unwrap();
        let mut dec = SinkDecoder::new(f, 0, 3, 2);
        let pkts: Vec<_> = src.stored().cloned().collect();
        assert!(dec.decode_incremental(&pkts[0]));
        assert!(!dec.decode_incremental(&pkts[0]));
        assert_eq!(dec.rank(), 1);
        assert!(dec.decoded().is_none());
        dec.decode_incremental(&pkts[1]);
        dec.decode_incremental(&pkts[2]);
        assert_eq!(dec.decoded().unwrap(), w);
    }

    #[test]
    fn shift_register_evicts_oldest() {
        let f = field(8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut mem = NodeMemory::new(f, MemoryMode::ShiftRegister(2), 0, 3, 0).unwrap();
        let mk = |i: usize| {
            let mut gev = vec![0; 3];
            gev[i] = 1;
            CodedPacket { generation_id: 0, gev, payload: vec![] }
        };
        for i in 0..3 {
            mem.receive_store(mk(i), &mut rng).unwrap();
        }
        let held: Vec<_> = mem.stored().map(|p| p.gev.clone()).collect();
        assert_eq!(held, vec![mk(1).gev, mk(2).gev]);
        assert_eq!(mem.innovation_rank(), 2);
    }

    #[test]
    fn filter_caps_storage_at_k() {
        let f = field(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = messages(f, 4, 3, &mut rng);
        let src = source_init(f, 0, &w).unwrap();
        let mut relay = NodeMemory::new(f, MemoryMode::default(), 0, 4, 3).unwrap();
        for _ in 0..200 {
            relay.receive_store(src.emit_coded(&mut rng).unwrap(), &mut rng).unwrap();
            assert!(relay.len() <= 4);
        }
        assert_eq!(relay.innovation_rank(), 4);
        let mut open = NodeMemory::new(f, MemoryMode::Unbounded { filter: false }, 0, 4, 3).unwrap();
        for _ in 0..10 {
            open.receive_store(src.emit_coded(&mut rng).unwrap(), &mut rng).unwrap();
        }
        assert_eq!(open.len(), 10);
    }

    #[test]
    fn generation_and_empty_errors() {
        let f = field(8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut mem = NodeMemory::new(f, MemoryMode::default(), 1, 2, 0).unwrap();
        assert_eq!(mem.emit_coded(&mut rng).unwrap_err(), CodecError::EmptyMemory);
        let p = CodedPacket { generation_id: 2, gev: vec![1, 0], payload: vec![] };
        assert!(matches!(
            mem.receive_store(p, &mut rng),
            Err(CodecError::GenerationMismatch { expected: 1, got: 2 })
        ));
        assert!(NodeMemory::new(f, MemoryMode::Accumulator(0), 0, 2, 0).is_err());
    }

    #[test]
    fn wire_round_trip_and_header_size() {
        for m in [1u32, 3, 8, 12, 16] {
            let f = field(m).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(m as u64);
            let pkt = CodedPacket {
                generation_id: 0x0102_0304_0506_0708,
                gev: f.random_vec(&mut rng, 7),
                payload: f.random_vec(&mut rng, 5),
            };
            let bytes = pkt.to_bytes(m);
            let gev_bytes = (7 * m as usize).div_ceil(8);
            assert_eq!(pkt.gev_bits(m), 7 * m as usize);
            assert_eq!(bytes.len(), 11 + gev_bytes + 5 * (m as usize).div_ceil(8));
            assert_eq!(&bytes[..8], &[8, 7, 6, 5, 4, 3, 2, 1]);
            assert_eq!(CodedPacket::from_bytes(&bytes).unwrap(), pkt);
        }
        assert!(CodedPacket::from_bytes(&[0; 5]).is_err());
    }

    #[test]
    fn decode_probability_wrapper() {
        assert!((expected_decode_count(2, 2.0, 0.0) - 0.375).abs() < 1e-15);
        assert!((expected_decode_count(2, 2.0, 0.5) - 0.65625).abs() < 1e-15);
        assert!(expected_decode_count(8, 2.0, 0.5) >= expected_decode_count(8, 2.0, 0.25));
    }
}
