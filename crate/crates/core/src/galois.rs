//! Arithmetic in GF(2^m) for 1 ≤ m ≤ 16, plus dense matrices, rank and
//! Gaussian elimination.
//!
//! Elements are plain integers in `[0, 2^m)`. Addition is XOR. Multiplication
//! goes through log/antilog tables built once per extension degree.

use std::sync::OnceLock;

use rand::Rng;
use thiserror::Error;

pub type Elem = u16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GfError {
    #[error("extension degree {0} outside 1..=16")]
    BadDegree(u32),
    #[error("polynomial {poly:#x} is not irreducible of degree {m}")]
    Reducible { poly: u32, m: u32 },
    #[error("element {0} out of range for field of size {1}")]
    OutOfRange(u32, u32),
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    #[error("matrix shape mismatch: {0}")]
    Shape(String),
    #[error("system is rank deficient (rank {rank}, unknowns {unknowns})")]
    SingularSystem { rank: usize, unknowns: usize },
    #[error("system is inconsistent")]
    Inconsistent,
}

/// Reduction polynomials used when none is given. Degree 8 uses 0x11B.
pub const DEFAULT_POLYS: [u32; 17] = [
    0, 0x3, 0x7, 0xB, 0x13, 0x25, 0x43, 0x83, 0x11B, 0x211, 0x409, 0x805, 0x1053, 0x201B,
    0x4443, 0x8003, 0x1002D,
];

/// Carry-less multiply of two polynomials over GF(2).
fn clmul(a: u32, b: u32) -> u32 {
    let mut r = 0u32;
    let mut b = b;
    let mut i = 0;
    while b != 0 {
        if b & 1 == 1 {
            r ^= a << i;
        }
        b >>= 1;
        i += 1;
    }
    r
}

fn degree(p: u32) -> i32 {
    31 - p.leading_zeros() as i32
}

fn poly_mod(mut a: u32, p: u32) -> u32 {
    let dp = degree(p);
    while a != 0 && degree(a) >= dp {
        a ^= p << (degree(a) - dp);
    }
    a
}

/// Bit-serial multiply with reduction; reference for the tables.
pub fn slow_mul(a: u32, b: u32, poly: u32) -> u32 {
    poly_mod(clmul(a, b), poly)
}

/// Trial division by every polynomial of degree 1..=m/2.
pub fn is_irreducible(poly: u32, m: u32) -> bool {
    if m == 0 || m > 16 || degree(poly) != m as i32 {
        return false;
    }
    for d in 1..=m / 2 {
        for low in 0..(1u32 << d) {
            let div = (1u32 << d) | low;
            if poly_mod(poly, div) == 0 {
                return false;
            }
        }
    }
    true
}

#[derive(Debug, Clone)]
pub struct Field {
    m: u32,
    poly: u32,
    exp: Vec<Elem>,
    log: Vec<u32>,
}

impl Field {
    pub fn new(m: u32, poly: u32) -> Result<Field, GfError> {
        if m == 0 || m > 16 {
            return Err(GfError::BadDegree(m));
        }
        if !is_irreducible(poly, m) {
            return Err(GfError::Reducible { poly, m });
        }
        let q = 1u32 << m;
        let order = q - 1;
        // The polynomial need not be primitive, so search for a generator.
        let gen = (1..q)
            .find(|&g| {
                let mut x = 1u32;
                for k in 1..=order {
                    x = slow_mul(x, g, poly);
                    if x == 1 {
                        return k == order;
                    }
                }
                false
            })
            .expect("multiplicative group of a field is cyclic");
        let mut exp = vec![0 as Elem; 2 * order as usize];
        let mut log = vec![0u32; q as usize];
        let mut x = 1u32;
        for k in 0..order {
            exp[k as usize] = x as Elem;
            exp[(k + order) as usize] = x as Elem;
            log[x as usize] = k;
            x = slow_mul(x, gen, poly);
        }
        Ok(Field { m, poly, exp, log })
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn q(&self) -> u32 {
        1 << self.m
    }

    pub fn poly(&self) -> u32 {
        self.poly
    }

    pub fn check(&self, a: u32) -> Result<Elem, GfError> {
        if a < self.q() {
            Ok(a as Elem)
        } else {
            Err(GfError::OutOfRange(a, self.q()))
        }
    }

    #[inline]
    pub fn add(&self, a: Elem, b: Elem) -> Elem {
        a ^ b
    }

    #[inline]
    pub fn mul(&self, a: Elem, b: Elem) -> Elem {
        if a == 0 || b == 0 {
            0
        } else {
            self.exp[(self.log[a as usize] + self.log[b as usize]) as usize]
        }
    }

    pub fn checked_mul(&self, a: u32, b: u32) -> Result<Elem, GfError> {
        Ok(self.mul(self.check(a)?, self.check(b)?))
    }

    pub fn inv(&self, a: Elem) -> Result<Elem, GfError> {
        if a == 0 {
            return Err(GfError::ZeroInverse);
        }
        self.check(a as u32)?;
        let order = self.q() - 1;
        Ok(self.exp[((order - self.log[a as usize]) % order) as usize])
    }

    pub fn div(&self, a: Elem, b: Elem) -> Result<Elem, GfError> {
        Ok(self.mul(a, self.inv(b)?))
    }

    pub fn pow(&self, a: Elem, e: u64) -> Elem {
        if e == 0 {
            return 1;
        }
        if a == 0 {
            return 0;
        }
        let order = (self.q() - 1) as u64;
        self.exp[((self.log[a as usize] as u64 * (e % order)) % order) as usize]
    }

    /// `dst += c * src`, elementwise.
    pub fn axpy(&self, dst: &mut [Elem], c: Elem, src: &[Elem]) {
        if c == 0 {
            return;
        }
        let lc = self.log[c as usize];
        for (d, &s) in dst.iter_mut().zip(src) {
            if s != 0 {
                *d ^= self.exp[(lc + self.log[s as usize]) as usize];
            }
        }
    }

    pub fn scale(&self, v: &mut [Elem], c: Elem) {
        if c == 0 {
            v.iter_mut().for_each(|x| *x = 0);
            return;
        }
        let lc = self.log[c as usize];
        for x in v.iter_mut() {
            if *x != 0 {
                *x = self.exp[(lc + self.log[*x as usize]) as usize];
            }
        }
    }

    pub fn random<R: Rng + ?Sized>(&self, rng: &mut R) -> Elem {
        rng.random_range(0..self.q()) as Elem
    }

    pub fn random_vec<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<Elem> {
        (0..n).map(|_| self.random(rng)).collect()
    }
}

static FIELDS: [OnceLock<Field>; 17] = [const { OnceLock::new() }; 17];

/// Shared field with the default polynomial for degree `m`.
pub fn field(m: u32) -> Result<&'static Field, GfError> {
    if m == 0 || m > 16 {
        return Err(GfError::BadDegree(m));
    }
    Ok(FIELDS[m as usize]
        .get_or_init(|| Field::new(m, DEFAULT_POLYS[m as usize]).expect("default poly")))
}

/// Field of size `q`, which must be a power of two in `2..=65536`.
pub fn field_of_size(q: u64) -> Result<&'static Field, GfError> {
    if !q.is_power_of_two() || q < 2 {
        return Err(GfError::BadDegree(0));
    }
    field(q.trailing_zeros())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Elem>,
}

impl FieldMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Elem>) -> Result<Self, GfError> {
        if data.len() != rows * cols {
            return Err(GfError::Shape(format!(
                "{} entries for {rows}x{cols}",
                data.len()
            )));
        }
        Ok(FieldMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<Elem>]) -> Result<Self, GfError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(GfError::Shape("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        FieldMatrix { rows, cols, data: vec![0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1;
        }
        m
    }

    pub fn random<R: Rng + ?Sized>(f: &Field, rows: usize, cols: usize, rng: &mut R) -> Self {
        FieldMatrix { rows, cols, data: f.random_vec(rng, rows * cols) }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[Elem] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> Elem {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: Elem) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[Elem] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn validate(&self, f: &Field) -> Result<(), GfError> {
        for &v in &self.data {
            f.check(v as u32)?;
        }
        Ok(())
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.get(r, c);
            }
        }
        t
    }

    pub fn mul(&self, f: &Field, other: &FieldMatrix) -> Result<Self, GfError> {
        if self.cols != other.rows {
            return Err(GfError::Shape(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                let dst = &mut out.data[r * other.cols..(r + 1) * other.cols];
                f.axpy(dst, a, other.row(k));
            }
        }
        Ok(out)
    }

    /// In-place reduced row echelon form; returns pivot columns.
    pub fn rref(&mut self, f: &Field) -> Vec<usize> {
        rref_limited(f, &mut self.data, self.rows, self.cols, self.cols)
    }
}

/// Reduces `data` (rows × cols) choosing pivots only among the first
/// `pivot_cols` columns. Returns the pivot column of each leading row.
fn rref_limited(
    f: &Field,
    data: &mut [Elem],
    rows: usize,
    cols: usize,
    pivot_cols: usize,
) -> Vec<usize> {
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..pivot_cols {
        if r == rows {
            break;
        }
        let Some(p) = (r..rows).find(|&i| data[i * cols + c] != 0) else {
            continue;
        };
        if p != r {
            for k in 0..cols {
                data.swap(p * cols + k, r * cols + k);
            }
        }
        let inv = f.inv(data[r * cols + c]).expect("nonzero pivot");
        f.scale(&mut data[r * cols..(r + 1) * cols], inv);
        let pivot_row = data[r * cols..(r + 1) * cols].to_vec();
        for i in 0..rows {
            if i != r {
                let coef = data[i * cols + c];
                if coef != 0 {
                    f.axpy(&mut data[i * cols..(i + 1) * cols], coef, &pivot_row);
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    pivots
}

pub fn mat_rank(f: &Field, m: &FieldMatrix) -> usize {
    let mut work = m.clone();
    work.rref(f).len()
}

/// Solves `A·X = B` for `A` with full column rank.
pub fn gauss_solve(f: &Field, a: &FieldMatrix, b: &FieldMatrix) -> Result<FieldMatrix, GfError> {
    if a.rows != b.rows {
        return Err(GfError::Shape(format!("A has {} rows, B has {}", a.rows, b.rows)));
    }
    let (n, k, c) = (a.rows, a.cols, b.cols);
    let w = k + c;
    let mut aug = vec![0 as Elem; n * w];
    for r in 0..n {
        aug[r * w..r * w + k].copy_from_slice(a.row(r));
        aug[r * w + k..(r + 1) * w].copy_from_slice(b.row(r));
    }
    let pivots = rref_limited(f, &mut aug, n, w, k);
    if pivots.len() < k {
        return Err(GfError::SingularSystem { rank: pivots.len(), unknowns: k });
    }
    for r in k..n {
        if aug[r * w + k..(r + 1) * w].iter().any(|&v| v != 0) {
            return Err(GfError::Inconsistent);
        }
    }
    let mut x = FieldMatrix::zeros(k, c);
    for r in 0..k {
        x.data[r * c..(r + 1) * c].copy_from_slice(&aug[r * w + k..(r + 1) * w]);
    }
    Ok(x)
}

/// Probability that a uniform n×K matrix over GF(q) has rank K.
pub fn full_rank_prob(n: usize, k: usize, q: f64) -> f64 {
    if n < k || k == 0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    ((1 + n - k)..=n).map(|e| 1.0 - q.powi(-(e as i32))).product()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn aes_inverse_pair() {
        let f = field(8).unwrap();
        assert_eq!(f.poly(), 0x11B);
        assert_eq!(f.mul(0x53, 0xCA), 0x01);
        assert_eq!(f.inv(0xCA).unwrap(), 0x53);
        assert_eq!(f.inv(1).unwrap(), 1);
        assert_eq!(f.inv(0), Err(GfError::ZeroInverse));
    }

    #[test]
    fn out_of_range_rejected() {
        let f = field(4).unwrap();
        assert!(matches!(f.checked_mul(16, 1), Err(GfError::OutOfRange(16, 16))));
    }

    #[test]
    fn default_polys_irreducible() {
        for m in 1..=16 {
            assert!(is_irreducible(DEFAULT_POLYS[m], m as u32), "m={m}");
        }
        assert!(!is_irreducible(0x11A, 8));
        assert!(Field::new(8, 0x101).is_err());
    }

    #[test]
    fn tables_match_bit_serial() {
        for m in 1..=8u32 {
            let f = field(m).unwrap();
            let q = f.q();
            for a in 0..q {
                for b in 0..q {
                    assert_eq!(f.mul(a as Elem, b as Elem) as u32, slow_mul(a, b, f.poly()));
                }
            }
        }
        let f = field(16).unwrap();
        for (a, b) in [(0x1234u32, 0xBEEFu32), (0xFFFF, 0xFFFF), (2, 0x8000)] {
            assert_eq!(f.mul(a as Elem, b as Elem) as u32, slow_mul(a, b, f.poly()));
        }
    }

    #[test]
    fn field_axioms_small() {
        for m in [1u32, 2, 3, 4] {
            let f = field(m).unwrap();
            let q = f.q() as Elem;
            for a in 0..q {
                for b in 0..q {
                    assert_eq!(f.mul(a, b), f.mul(b, a));
                    for c in 0..q {
                        assert_eq!(f.mul(f.mul(a, b), c), f.mul(a, f.mul(b, c)));
                        assert_eq!(f.mul(a, b ^ c), f.mul(a, b) ^ f.mul(a, c));
                    }
                }
            }
        }
    }

    #[test]
    fn inverses_unique() {
        for m in 1..=8u32 {
            let f = field(m).unwrap();
            for a in 1..f.q() as Elem {
                let inv = f.inv(a).unwrap();
                assert_eq!(f.mul(a, inv), 1);
                let count = (1..f.q() as Elem).filter(|&b| f.mul(a, b) == 1).count();
                assert_eq!(count, 1);
            }
        }
    }

    #[test]
    fn rank_examples() {
        let f2 = field(1).unwrap();
        let m = FieldMatrix::from_rows(&[vec![1, 1], vec![0, 1], vec![1, 0]]).unwrap();
        assert_eq!(mat_rank(f2, &m), 2);
        let f = field(8).unwrap();
        assert_eq!(mat_rank(f, &FieldMatrix::identity(5)), 5);
        assert_eq!(mat_rank(f, &FieldMatrix::zeros(3, 4)), 0);
    }

    #[test]
    fn solve_overdetermined_gf2() {
        // x = (1, 0): rows (1,1)->1, (0,1)->0, (1,0)->1.
        let f2 = field(1).unwrap();
        let a = FieldMatrix::from_rows(&[vec![1, 1], vec![0, 1], vec![1, 0]]).unwrap();
        let b = FieldMatrix::from_rows(&[vec![1], vec![0], vec![1]]).unwrap();
        let x = gauss_solve(f2, &a, &b).unwrap();
        assert_eq!(x.data(), &[1, 0]);
        let bad = FieldMatrix::from_rows(&[vec![1], vec![1], vec![1]]).unwrap();
        assert_eq!(gauss_solve(f2, &a, &bad), Err(GfError::Inconsistent));
        let sing = FieldMatrix::from_rows(&[vec![1, 1], vec![1, 1]]).unwrap();
        let b2 = FieldMatrix::zeros(2, 1);
        assert!(matches!(
            gauss_solve(f2, &sing, &b2),
            Err(GfError::SingularSystem { rank: 1, unknowns: 2 })
        ));
    }

    #[test]
    fn solve_identity_and_random_round_trip() {
        let f = field(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let b = FieldMatrix::random(f, 4, 3, &mut rng);
        assert_eq!(gauss_solve(f, &FieldMatrix::identity(4), &b).unwrap(), b);
        let mut solved = 0;
        while solved < 20 {
            let a = FieldMatrix::random(f, 5, 5, &mut rng);
            if mat_rank(f, &a) < 5 {
                continue;
            }
            let b = FieldMatrix::random(f, 5, 2, &mut rng);
            let x = gauss_solve(f, &a, &b).unwrap();
            assert_eq!(a.mul(f, &x).unwrap(), b);
            solved += 1;
        }
    }

    #[test]
    fn full_rank_counts() {
        assert!((full_rank_prob(2, 2, 2.0) - 0.375).abs() < 1e-15);
        assert!((full_rank_prob(3, 2, 2.0) - 0.65625).abs() < 1e-15);
        assert_eq!(full_rank_prob(1, 2, 2.0), 0.0);
        assert!(full_rank_prob(10, 10, 65536.0) > 0.9999);
        // Enumerate binary matrices directly.
        let f2 = field(1).unwrap();
        for (n, k) in [(2usize, 2usize), (3, 2)] {
            let total = 1u32 << (n * k);
            let full = (0..total)
                .filter(|bits| {
                    let data = (0..n * k).map(|i| ((bits >> i) & 1) as Elem).collect();
                    mat_rank(f2, &FieldMatrix::new(n, k, data).unwrap()) == k
                })
                .count();
            assert!((full as f64 / total as f64 - full_rank_prob(n, k, 2.0)).abs() < 1e-15);
        }
    }
}
