//! Registered predicates over subsets of [n], encoded as bitmasks (bit c =
//! membership of block c+1). Predicate-OT instantiates string OT and
//! k-out-of-n OT by choosing the predicate; the ZKoQS layer applies the same
//! predicate to the complement (the measured set T = [n] ∖ B).

use qsim::Bits;
use serde::{Deserialize, Serialize};

use crate::error::{QotfError, Result};

/// Guard for exhaustive mask enumeration (2^n masks).
pub const MAX_ENUMERABLE_N: usize = 16;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum PredicateSpec {
    /// Exactly one selected index — the bit-OT choice shape.
    SingletonDummy { n: usize },
    /// n = 2m; the selection is the first half or the second half.
    StringOt { m: usize },
    /// `blocks` blocks of `block_len` indices each; every block all-0 or
    /// all-1, with exactly `k` all-1 blocks.
    KOutOfN { k: usize, blocks: usize, block_len: usize },
    /// Explicit allow-list of masks.
    Table { n: usize, allowed: Vec<Bits> },
}

impl PredicateSpec {
    pub fn n(&self) -> usize {
        match self {
            PredicateSpec::SingletonDummy { n } => *n,
            PredicateSpec::StringOt { m } => 2 * m,
            PredicateSpec::KOutOfN {
                blocks, block_len, ..
            } => blocks * block_len,
            PredicateSpec::Table { n, .. } => *n,
        }
    }

    /// Total, pure evaluation on a mask of length n.
    pub fn eval(&self, mask: &Bits) -> Result<bool> {
        if mask.len() != self.n() {
            return Err(QotfError::Params(format!(
                "mask of {} bits for a predicate over [{}]",
                mask.len(),
                self.n()
            )));
        }
        Ok(match self {
            PredicateSpec::SingletonDummy { .. } => mask.iter().filter(|&b| b).count() == 1,
            PredicateSpec::StringOt { m } => {
                let first = mask.slice(0, *m);
                let second = mask.slice(*m, *m);
                (first.iter().all(|b| b) && second.is_zero())
                    || (first.is_zero() && second.iter().all(|b| b))
            }
            PredicateSpec::KOutOfN {
                k,
                blocks,
                block_len,
            } => {
                let mut ones = 0usize;
                for b in 0..*blocks {
                    let chunk = mask.slice(b * block_len, *block_len);
                    if chunk.iter().all(|x| x) {
                        ones += 1;
                    } else if !chunk.is_zero() {
                        return Ok(false);
                    }
                }
                ones == *k
            }
            PredicateSpec::Table { allowed, .. } => allowed.contains(mask),
        })
    }
}

/// A predicate as used in a session: the registered spec, optionally applied
/// to the complement of the supplied mask (the ZKoQS side proves a statement
/// about T while the OT predicate talks about B = [n] ∖ T).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Predicate {
    pub spec: PredicateSpec,
    pub on_complement: bool,
}

impl Predicate {
    pub fn direct(spec: PredicateSpec) -> Predicate {
        Predicate {
            spec,
            on_complement: false,
        }
    }

    pub fn complemented(spec: PredicateSpec) -> Predicate {
        Predicate {
            spec,
            on_complement: true,
        }
    }

    pub fn n(&self) -> usize {
        self.spec.n()
    }

    pub fn eval(&self, mask: &Bits) -> Result<bool> {
        if self.on_complement {
            let flipped = Bits::from_bools(mask.iter().map(|b| !b).collect());
            self.spec.eval(&flipped)
        } else {
            self.spec.eval(mask)
        }
    }

    /// All masks satisfying the predicate, by exhaustive enumeration.
    pub fn allowed_masks(&self) -> Result<Vec<Bits>> {
        let n = self.n();
        if n > MAX_ENUMERABLE_N {
            return Err(QotfError::Capability(format!(
                "predicate enumeration limited to n ≤ {MAX_ENUMERABLE_N}, got {n}"
            )));
        }
        let mut out = Vec::new();
        for idx in 0..(1usize << n) {
            let mask = Bits::from_index(idx, n);
            if self.eval(&mask)? {
                out.push(mask);
            }
        }
        Ok(out)
    }
}

/// Mask ↔ wire encoding: little-endian bytes, bit c of the subset at byte
/// c/8, bit position c%8.
pub fn mask_to_wire(mask: &Bits) -> Vec<u8> {
    let mut out = vec![0u8; (mask.len() + 7) / 8];
    for i in 0..mask.len() {
        if mask.bit(i) {
            out[i / 8] |= 1 << (i % 8);
        }
    }
    out
}

pub fn mask_from_wire(bytes: &[u8], n: usize) -> Result<Bits> {
    if bytes.len() != (n + 7) / 8 {
        return Err(QotfError::Malformed("mask length mismatch".into()));
    }
    Ok(Bits::from_bools(
        (0..n).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn subsets(n: usize) -> impl Iterator<Item = Bits> {
        (0..(1usize << n)).map(move |i| Bits::from_index(i, n))
    }

    #[test]
    fn string_ot_truth_table() {
        for m in 1..=6usize {
            let p = PredicateSpec::StringOt { m };
            for mask in subsets(2 * m) {
                let first = mask.slice(0, m);
                let second = mask.slice(m, m);
                let expect = (first.iter().all(|b| b) && second.is_zero())
                    || (first.is_zero() && second.iter().all(|b| b));
                assert_eq!(p.eval(&mask).unwrap(), expect);
            }
            assert_eq!(Predicate::direct(p).allowed_masks().unwrap().len(), 2);
        }
    }

    #[test]
    fn k_out_of_n_truth_table() {
        for blocks in 1..=4usize {
            for block_len in 1..=3usize {
                if blocks * block_len > 12 {
                    continue;
                }
                for k in 0..=blocks {
                    let p = PredicateSpec::KOutOfN {
                        k,
                        blocks,
                        block_len,
                    };
                    let mut count = 0usize;
                    for mask in subsets(blocks * block_len) {
                        let chunks: Vec<Bits> = (0..blocks)
                            .map(|b| mask.slice(b * block_len, block_len))
                            .collect();
                        let well_formed = chunks
                            .iter()
                            .all(|c| c.is_zero() || c.iter().all(|x| x));
                        let ones = chunks.iter().filter(|c| c.iter().all(|x| x) && !c.is_zero()).count();
                        let expect = well_formed && ones == k;
                        assert_eq!(p.eval(&mask).unwrap(), expect);
                        count += expect as usize;
                    }
                    // C(blocks, k) valid selections.
                    let choose = (0..k).fold(1usize, |acc, i| acc * (blocks - i) / (i + 1));
                    assert_eq!(count, choose);
                }
            }
        }
    }

    #[test]
    fn singleton_and_complement() {
        let p = Predicate::direct(PredicateSpec::SingletonDummy { n: 2 });
        assert!(p.eval(&Bits::parse("10").unwrap()).unwrap());
        assert!(p.eval(&Bits::parse("01").unwrap()).unwrap());
        assert!(!p.eval(&Bits::parse("11").unwrap()).unwrap());
        let q = Predicate::complemented(PredicateSpec::SingletonDummy { n: 2 });
        // T = {1} ⇔ B = {2}.
        assert!(q.eval(&Bits::parse("10").unwrap()).unwrap());
        assert!(!q.eval(&Bits::parse("00").unwrap()).unwrap());
    }

    #[test]
    fn wire_mask_roundtrip() {
        for n in 1..=12usize {
            for mask in subsets(n).take(64) {
                let w = mask_to_wire(&mask);
                assert_eq!(mask_from_wire(&w, n).unwrap(), mask);
            }
        }
    }
}
