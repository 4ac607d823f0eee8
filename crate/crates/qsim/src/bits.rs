//! Bit strings and the little GF(2) linear algebra needed for analytic
//! Hadamard-basis measurements.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

/// A fixed-length string of bits. Bit positions used in public APIs are
/// 1-indexed to match the usual x[i] notation; internal storage is 0-indexed.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Bits(Vec<bool>);

impl Bits {
    pub fn zeros(len: usize) -> Self {
        Bits(vec![false; len])
    }

    pub fn from_bools(bits: Vec<bool>) -> Self {
        Bits(bits)
    }

    /// Parse from a string of '0'/'1' characters.
    pub fn parse(s: &str) -> Result<Self, String> {
        let mut v = Vec::with_capacity(s.len());
        for ch in s.chars() {
            match ch {
                '0' => v.push(false),
                '1' => v.push(true),
                _ => return Err(format!("invalid bit character {ch:?}")),
            }
        }
        Ok(Bits(v))
    }

    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        Bits((0..len).map(|_| rng.gen_bool(0.5)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// 0-indexed access.
    pub fn bit(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn set(&mut self, i: usize, v: bool) {
        self.0[i] = v;
    }

    pub fn flip(&mut self, i: usize) {
        self.0[i] = !self.0[i];
    }

    pub fn slice(&self, start: usize, len: usize) -> Bits {
        Bits(self.0[start..start + len].to_vec())
    }

    pub fn concat(&self, other: &Bits) -> Bits {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Bits(v)
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.0.iter().copied()
    }

    /// GF(2) inner product ⊕_i a[i]b[i]. Lengths must match.
    pub fn dot(&self, other: &Bits) -> bool {
        assert_eq!(self.len(), other.len(), "inner product length mismatch");
        self.0
            .iter()
            .zip(&other.0)
            .fold(false, |acc, (a, b)| acc ^ (a & b))
    }

    pub fn xor(&self, other: &Bits) -> Bits {
        assert_eq!(self.len(), other.len(), "xor length mismatch");
        Bits(self.0.iter().zip(&other.0).map(|(a, b)| a ^ b).collect())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|b| !b)
    }

    /// Interpret as a big-endian integer (first bit most significant).
    pub fn to_index(&self) -> usize {
        assert!(self.len() <= usize::BITS as usize - 1, "bit string too wide");
        self.0.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize)
    }

    pub fn from_index(index: usize, len: usize) -> Bits {
        let mut v = vec![false; len];
        for (i, slot) in v.iter_mut().enumerate() {
            *slot = (index >> (len - 1 - i)) & 1 == 1;
        }
        Bits(v)
    }
}

impl fmt::Display for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            write!(f, "{}", if b { '1' } else { '0' })?;
        }
        Ok(())
    }
}

impl fmt::Debug for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bits({self})")
    }
}

impl TryFrom<String> for Bits {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Bits::parse(&s)
    }
}

impl From<Bits> for String {
    fn from(b: Bits) -> String {
        b.to_string()
    }
}

/// Uniformly sample a solution `s` of the GF(2) linear system
/// `⟨s, rows[j]⟩ = rhs[j]` for all j. Returns `None` if the system is
/// inconsistent. All rows must have length `width`.
pub fn sample_solution<R: Rng + ?Sized>(
    rows: &[Bits],
    rhs: &[bool],
    width: usize,
    rng: &mut R,
) -> Option<Bits> {
    assert_eq!(rows.len(), rhs.len());
    // Gaussian elimination on the augmented matrix.
    let mut mat: Vec<(Bits, bool)> = rows.iter().cloned().zip(rhs.iter().copied()).collect();
    let mut pivot_cols = Vec::new();
    let mut rank = 0usize;
    for col in 0..width {
        let Some(pivot) = (rank..mat.len()).find(|&r| mat[r].0.bit(col)) else {
            continue;
        };
        mat.swap(rank, pivot);
        for r in 0..mat.len() {
            if r != rank && mat[r].0.bit(col) {
                let (head, tail) = mat.split_at_mut(rank.max(r));
                let (a, b) = if r < rank {
                    (&mut head[r], &tail[0])
                } else {
                    (&mut tail[0], &head[rank])
                };
                a.0 = a.0.xor(&b.0);
                a.1 ^= b.1;
            }
        }
        pivot_cols.push(col);
        rank += 1;
        if rank == mat.len() {
            break;
        }
    }
    // Inconsistent iff a zero row has rhs 1.
    for (row, r) in &mat[rank..] {
        if row.is_zero() && *r {
            return None;
        }
    }
    // Free columns get uniform bits; pivot columns are back-solved.
    let mut s = Bits::zeros(width);
    let pivot_set: std::collections::HashSet<usize> = pivot_cols.iter().copied().collect();
    for col in 0..width {
        if !pivot_set.contains(&col) {
            s.set(col, rng.gen_bool(0.5));
        }
    }
    for (j, &col) in pivot_cols.iter().enumerate() {
        let (row, r) = &mat[j];
        let mut v = *r;
        for c in 0..width {
            if c != col && row.bit(c) && s.bit(c) {
                v = !v;
            }
        }
        s.set(col, v);
    }
    Some(s)
}

/// Reduce `vectors` to an independent basis (row echelon) over GF(2).
pub fn gf2_basis(vectors: &[Bits], width: usize) -> Vec<Bits> {
    let mut basis: Vec<Bits> = Vec::new();
    for v in vectors {
        let mut v = v.clone();
        for b in &basis {
            let lead = b.iter().position(|x| x).unwrap();
            if v.bit(lead) {
                v = v.xor(b);
            }
        }
        if !v.is_zero() {
            basis.push(v);
            basis.sort_by_key(|b| b.iter().position(|x| x).unwrap());
        }
    }
    let _ = width;
    basis
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn roundtrip_display_parse() {
        let b = Bits::parse("01101").unwrap();
        assert_eq!(b.to_string(), "01101");
        assert_eq!(b.len(), 5);
        assert!(!b.bit(0) && b.bit(1));
    }

    #[test]
    fn dot_product() {
        let a = Bits::parse("1101").unwrap();
        let b = Bits::parse("1011").unwrap();
        // 1&1 ^ 1&0 ^ 0&1 ^ 1&1 = 0
        assert!(!a.dot(&b));
    }

    #[test]
    fn sample_solution_satisfies_system() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let rows = vec![Bits::parse("1100").unwrap(), Bits::parse("0110").unwrap()];
        for _ in 0..50 {
            let rhs = vec![rng.gen_bool(0.5), rng.gen_bool(0.5)];
            let s = sample_solution(&rows, &rhs, 4, &mut rng).unwrap();
            assert_eq!(s.dot(&rows[0]), rhs[0]);
            assert_eq!(s.dot(&rows[1]), rhs[1]);
        }
    }

    #[test]
    fn inconsistent_system_detected() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let rows = vec![Bits::parse("1100").unwrap(), Bits::parse("1100").unwrap()];
        let rhs = vec![true, false];
        assert!(sample_solution(&rows, &rhs, 4, &mut rng).is_none());
    }
}
