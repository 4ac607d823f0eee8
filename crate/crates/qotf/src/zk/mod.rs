//! The zero-knowledge layer: the two proved relations, an in-process ideal
//! trusted party, and a real non-interactive proof backend
//! (MPC-in-the-head, [`nizk`]). Both backends satisfy the same contract: the
//! prover contributes one message, the verifier accepts or rejects.

pub mod nizk;

use qsim::Bits;
use serde::{Deserialize, Serialize};

use crate::channel::{Channel, Frame, FrameType};
use crate::circuit::{bit_ot_relation_circuit, semicollapse_relation_circuit, Circuit};
use crate::error::{QotfError, Result};
use crate::hashfam::{eval, HashKey, Preimage, Profile};
use crate::predicate::Predicate;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatementKind {
    BitOt,
    Semicollapse,
}

/// The public statement x of the proof: the digests (h_0^(c), h_1^(c)) per
/// block, the hash key, and — for semi-collapse — the predicate on T.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZkStatement {
    pub kind: StatementKind,
    pub hash_key: HashKey,
    pub digests: Vec<(Bits, Bits)>,
    pub predicate: Option<Predicate>,
}

impl ZkStatement {
    pub fn n(&self) -> usize {
        self.digests.len()
    }

    fn check_shape(&self) -> Result<()> {
        match self.kind {
            StatementKind::BitOt => {
                if self.digests.len() != 2 || self.predicate.is_some() {
                    return Err(QotfError::Structural(
                        "bit OT statement must have exactly 2 blocks and no predicate".into(),
                    ));
                }
            }
            StatementKind::Semicollapse => {
                let pred = self.predicate.as_ref().ok_or_else(|| {
                    QotfError::Structural("semicollapse statement needs a predicate".into())
                })?;
                if pred.n() != self.digests.len() {
                    return Err(QotfError::Structural(
                        "predicate arity does not match block count".into(),
                    ));
                }
            }
        }
        for (h0, h1) in &self.digests {
            if h0.len() != self.hash_key.output_len || h1.len() != self.hash_key.output_len {
                return Err(QotfError::Structural("digest length mismatch".into()));
            }
        }
        Ok(())
    }

    /// The relation as a boolean circuit (toy profile only); input layout
    /// matches [`ZkWitness::to_circuit_input`].
    pub fn to_circuit(&self) -> Result<Circuit> {
        self.check_shape()?;
        if self.hash_key.profile != Profile::Toy {
            return Err(QotfError::Capability(
                "relation circuit available only for the toy hash profile".into(),
            ));
        }
        match self.kind {
            StatementKind::BitOt => {
                let d: [Bits; 4] = [
                    self.digests[0].0.clone(),
                    self.digests[0].1.clone(),
                    self.digests[1].0.clone(),
                    self.digests[1].1.clone(),
                ];
                bit_ot_relation_circuit(&self.hash_key, &d)
            }
            StatementKind::Semicollapse => {
                let masks = self
                    .predicate
                    .as_ref()
                    .expect("shape checked")
                    .allowed_masks()?;
                semicollapse_relation_circuit(&self.hash_key, &self.digests, &masks)
            }
        }
    }
}

/// The secret witness w: per block the two witness strings (the w in d ‖ w,
/// flag included), plus the measured set T for semi-collapse statements.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZkWitness {
    pub preimages: Vec<(Bits, Bits)>,
    pub measured_set: Option<Bits>,
    pub aux_witness: Option<Bits>,
}

impl ZkWitness {
    fn check_shape(&self, statement: &ZkStatement) -> Result<()> {
        if self.preimages.len() != statement.digests.len() {
            return Err(QotfError::Structural(
                "witness block count does not match statement".into(),
            ));
        }
        let wl = statement.hash_key.witness_len();
        for (w0, w1) in &self.preimages {
            if w0.len() != wl || w1.len() != wl {
                return Err(QotfError::Structural("witness length mismatch".into()));
            }
        }
        match statement.kind {
            StatementKind::BitOt => {
                if self.measured_set.is_some() {
                    return Err(QotfError::Structural(
                        "bit OT witness carries no measured set".into(),
                    ));
                }
            }
            StatementKind::Semicollapse => {
                let t = self.measured_set.as_ref().ok_or_else(|| {
                    QotfError::Structural("semicollapse witness needs a measured set".into())
                })?;
                if t.len() != statement.n() {
                    return Err(QotfError::Structural("measured-set length mismatch".into()));
                }
            }
        }
        Ok(())
    }

    /// Flat circuit-input encoding: (semicollapse only) the T mask, then the
    /// witnesses in slot order (c,d) = (1,0),(1,1),…,(n,1).
    pub fn to_circuit_input(&self) -> Bits {
        let mut out = self.measured_set.clone().unwrap_or_else(|| Bits::zeros(0));
        for (w0, w1) in &self.preimages {
            out = out.concat(w0).concat(w1);
        }
        out
    }

    /// Inverse of [`to_circuit_input`] given the statement shape.
    pub fn from_circuit_input(statement: &ZkStatement, input: &Bits) -> Result<ZkWitness> {
        let n = statement.n();
        let wl = statement.hash_key.witness_len();
        let t_len = match statement.kind {
            StatementKind::BitOt => 0,
            StatementKind::Semicollapse => n,
        };
        if input.len() != t_len + 2 * n * wl {
            return Err(QotfError::Structural("circuit input length mismatch".into()));
        }
        let measured_set = (t_len > 0).then(|| input.slice(0, t_len));
        let preimages = (0..n)
            .map(|c| {
                (
                    input.slice(t_len + 2 * c * wl, wl),
                    input.slice(t_len + (2 * c + 1) * wl, wl),
                )
            })
            .collect();
        Ok(ZkWitness {
            preimages,
            measured_set,
            aux_witness: None,
        })
    }
}

/// Decide x R w. Structural problems (wrong shapes) are errors, distinct
/// from an honest `false`.
pub fn relation_check(statement: &ZkStatement, witness: &ZkWitness) -> Result<bool> {
    statement.check_shape()?;
    witness.check_shape(statement)?;
    let key = &statement.hash_key;
    for (c, ((w0, w1), (h0, h1))) in witness
        .preimages
        .iter()
        .zip(&statement.digests)
        .enumerate()
    {
        let _ = c;
        for (d, w, h) in [(false, w0, h0), (true, w1, h1)] {
            let x = Bits::from_bools(vec![d]).concat(w);
            if &eval(key, &x)? != h {
                return Ok(false);
            }
        }
    }
    match statement.kind {
        StatementKind::BitOt => {
            // ∃ c,d with w_d^(c)[1] = 1.
            Ok(witness
                .preimages
                .iter()
                .any(|(w0, w1)| w0.bit(0) || w1.bit(0)))
        }
        StatementKind::Semicollapse => {
            let t = witness.measured_set.as_ref().expect("shape checked");
            let pred = statement.predicate.as_ref().expect("shape checked");
            if !pred.eval(t)? {
                return Ok(false);
            }
            // ∀ c ∈ T, ∃ d with w_d^(c)[1] = 1.
            Ok(witness
                .preimages
                .iter()
                .enumerate()
                .all(|(c, (w0, w1))| !t.bit(c) || w0.bit(0) || w1.bit(0)))
        }
    }
}

/// Convenience: the witness string w_d as a structured preimage d ‖ w.
pub fn preimage_of(d: bool, witness_part: &Bits) -> Preimage {
    Preimage {
        data_bit: d,
        flag_bit: witness_part.bit(0),
        tail: witness_part.slice(1, witness_part.len() - 1),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZkBackend {
    Ideal,
    Nizk,
}

/// What the verifier learned from the proof message.
#[derive(Clone, Debug)]
pub struct ZkVerification {
    pub accepted: bool,
    /// Ideal backend only: the witness the trusted party received, kept for
    /// extractor-style use in harness games. A real verifier never sees it.
    pub recorded_witness: Option<ZkWitness>,
}

#[derive(Serialize, Deserialize)]
struct IdealBundle {
    statement: ZkStatement,
    witness: Option<ZkWitness>,
}

/// Prover side of F_zk: produce the single proof frame for the statement.
/// The ideal backend models the trusted party by sealing (x, w) into the
/// frame; only the verifier-side functionality code opens it. `witness =
/// None` is the explicit abort input ⊥.
pub fn prover_frame(
    backend: ZkBackend,
    statement: &ZkStatement,
    witness: Option<&ZkWitness>,
    repetitions: usize,
    rng: &mut (impl rand::Rng + ?Sized),
) -> Result<Frame> {
    match backend {
        ZkBackend::Ideal => {
            let bundle = IdealBundle {
                statement: statement.clone(),
                witness: witness.cloned(),
            };
            Ok(Frame::new(
                FrameType::ZkMsg,
                serde_json::to_vec(&bundle)?,
            ))
        }
        ZkBackend::Nizk => {
            let witness = witness.ok_or_else(|| {
                QotfError::Structural("NIZK backend cannot encode an abort input".into())
            })?;
            let ro = nizk::RandomOracle::new();
            let proof = nizk::prove(statement, witness, repetitions, &ro, rng)?;
            Ok(Frame::new(FrameType::ZkProof, proof.to_bytes()))
        }
    }
}

/// Verifier side of F_zk: check the received frame against the statement the
/// verifier reconstructed from the public protocol messages.
pub fn verify_frame(
    backend: ZkBackend,
    expected_statement: &ZkStatement,
    frame: &Frame,
) -> Result<ZkVerification> {
    match backend {
        ZkBackend::Ideal => {
            if frame.frame_type != FrameType::ZkMsg {
                return Err(QotfError::Malformed("expected an ideal-ZK frame".into()));
            }
            let bundle: IdealBundle = serde_json::from_slice(&frame.payload)?;
            let Some(witness) = bundle.witness else {
                return Ok(ZkVerification {
                    accepted: false,
                    recorded_witness: None,
                });
            };
            if &bundle.statement != expected_statement {
                return Ok(ZkVerification {
                    accepted: false,
                    recorded_witness: None,
                });
            }
            let ok = relation_check(&bundle.statement, &witness)?;
            Ok(ZkVerification {
                accepted: ok,
                recorded_witness: ok.then_some(witness),
            })
        }
        ZkBackend::Nizk => {
            if frame.frame_type != FrameType::ZkProof {
                return Err(QotfError::Malformed("expected a NIZK proof frame".into()));
            }
            let ro = nizk::RandomOracle::new();
            let accepted = match nizk::NizkProof::from_bytes(&frame.payload) {
                Ok(proof) => nizk::verify(expected_statement, &proof, &ro)?,
                Err(_) => false,
            };
            Ok(ZkVerification {
                accepted,
                recorded_witness: None,
            })
        }
    }
}

/// Run F_zk prover-side over a channel (one message).
pub fn ideal_fzk_prove(
    statement: &ZkStatement,
    witness: Option<&ZkWitness>,
    channel: &mut dyn Channel,
    rng: &mut (impl rand::Rng + ?Sized),
) -> Result<()> {
    let frame = prover_frame(ZkBackend::Ideal, statement, witness, 0, rng)?;
    channel.send(frame)
}

/// Run F_zk verifier-side over a channel: returns the statement on accept,
/// None (⊥) otherwise.
pub fn ideal_fzk_verify(
    expected_statement: &ZkStatement,
    channel: &mut dyn Channel,
) -> Result<Option<ZkStatement>> {
    let frame = channel.recv()?;
    let v = verify_frame(ZkBackend::Ideal, expected_statement, &frame)?;
    Ok(v.accepted.then(|| expected_statement.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hashfam::gen;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn honest_bit_ot_instance(
        flag_slot: usize,
        rng: &mut ChaCha8Rng,
    ) -> (ZkStatement, ZkWitness) {
        let key = gen(Profile::Toy, 6, None, rng).unwrap();
        honest_instance_with_flags(&key, &[flag_slot], rng)
    }

    fn honest_instance_with_flags(
        key: &HashKey,
        flag_slots: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> (ZkStatement, ZkWitness) {
        let wl = key.witness_len();
        let mut parts: Vec<Bits> = (0..4)
            .map(|_| {
                let mut w = Bits::random(wl, rng);
                w.set(0, false);
                w
            })
            .collect();
        for &s in flag_slots {
            parts[s].set(0, true);
        }
        let digests: Vec<(Bits, Bits)> = (0..2)
            .map(|c| {
                let h0 = eval(key, &Bits::from_bools(vec![false]).concat(&parts[2 * c])).unwrap();
                let h1 = eval(key, &Bits::from_bools(vec![true]).concat(&parts[2 * c + 1])).unwrap();
                (h0, h1)
            })
            .collect();
        let statement = ZkStatement {
            kind: StatementKind::BitOt,
            hash_key: key.clone(),
            digests,
            predicate: None,
        };
        let witness = ZkWitness {
            preimages: vec![
                (parts[0].clone(), parts[1].clone()),
                (parts[2].clone(), parts[3].clone()),
            ],
            measured_set: None,
            aux_witness: None,
        };
        (statement, witness)
    }

    #[test]
    fn honest_witness_accepts() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (st, w) = honest_bit_ot_instance(3, &mut rng);
        assert!(relation_check(&st, &w).unwrap());
    }

    #[test]
    fn all_flag_patterns_match_circuit_and_check() {
        // For every 2^4 flag pattern: relation true iff ≥ 1 flag set (digests
        // always consistent by construction), and the circuit agrees.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let key = gen(Profile::Toy, 5, None, &mut rng).unwrap();
        for pattern in 0..16usize {
            let slots: Vec<usize> = (0..4).filter(|i| pattern >> i & 1 == 1).collect();
            let (st, w) = honest_instance_with_flags(&key, &slots, &mut rng);
            let expect = pattern != 0;
            assert_eq!(relation_check(&st, &w).unwrap(), expect, "pattern {pattern}");
            let circuit = st.to_circuit().unwrap();
            assert_eq!(
                circuit.eval(&w.to_circuit_input()).unwrap().bit(0),
                expect,
                "circuit, pattern {pattern}"
            );
        }
    }

    #[test]
    fn digest_bitflip_rejects() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (mut st, w) = honest_bit_ot_instance(0, &mut rng);
        let mut h = st.digests[1].0.clone();
        h.flip(2);
        st.digests[1].0 = h;
        assert!(!relation_check(&st, &w).unwrap());
    }

    #[test]
    fn malformed_shapes_are_errors_not_false() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (st, mut w) = honest_bit_ot_instance(0, &mut rng);
        w.preimages.pop();
        assert!(matches!(
            relation_check(&st, &w),
            Err(QotfError::Structural(_))
        ));
    }

    #[test]
    fn semicollapse_relation_and_circuit_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let key = gen(Profile::Toy, 4, None, &mut rng).unwrap();
        let wl = key.witness_len();
        let n = 3;
        let pred = Predicate::direct(crate::predicate::PredicateSpec::Table {
            n,
            allowed: vec![Bits::parse("110").unwrap(), Bits::parse("011").unwrap()],
        });
        for t_idx in 0..8usize {
            let t = Bits::from_index(t_idx, n);
            // Flag exactly the blocks in T (d = 1 branch dummy).
            let parts: Vec<(Bits, Bits)> = (0..n)
                .map(|c| {
                    let mut w0 = Bits::random(wl, &mut rng);
                    w0.set(0, false);
                    let mut w1 = Bits::random(wl, &mut rng);
                    w1.set(0, t.bit(c));
                    (w0, w1)
                })
                .collect();
            let digests: Vec<(Bits, Bits)> = parts
                .iter()
                .map(|(w0, w1)| {
                    (
                        eval(&key, &Bits::from_bools(vec![false]).concat(w0)).unwrap(),
                        eval(&key, &Bits::from_bools(vec![true]).concat(w1)).unwrap(),
                    )
                })
                .collect();
            let st = ZkStatement {
                kind: StatementKind::Semicollapse,
                hash_key: key.clone(),
                digests,
                predicate: Some(pred.clone()),
            };
            let w = ZkWitness {
                preimages: parts,
                measured_set: Some(t.clone()),
                aux_witness: None,
            };
            let expect = pred.eval(&t).unwrap();
            assert_eq!(relation_check(&st, &w).unwrap(), expect, "T={t}");
            let circuit = st.to_circuit().unwrap();
            assert_eq!(
                circuit.eval(&w.to_circuit_input()).unwrap().bit(0),
                expect,
                "circuit T={t}"
            );
        }
    }

    #[test]
    fn ideal_fzk_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (st, w) = honest_bit_ot_instance(1, &mut rng);
        let (mut a, mut b) = crate::channel::mem_pair();
        ideal_fzk_prove(&st, Some(&w), &mut a, &mut rng).unwrap();
        assert_eq!(ideal_fzk_verify(&st, &mut b).unwrap(), Some(st.clone()));
        // Abort input ⊥.
        ideal_fzk_prove(&st, None, &mut a, &mut rng).unwrap();
        assert_eq!(ideal_fzk_verify(&st, &mut b).unwrap(), None);
        // False statement.
        let (st2, _) = honest_bit_ot_instance(1, &mut rng);
        ideal_fzk_prove(&st2, Some(&w), &mut a, &mut rng).unwrap();
        assert_eq!(ideal_fzk_verify(&st2, &mut b).unwrap(), None);
    }

    #[test]
    fn witness_circuit_input_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (st, w) = honest_bit_ot_instance(2, &mut rng);
        let enc = w.to_circuit_input();
        let back = ZkWitness::from_circuit_input(&st, &enc).unwrap();
        assert_eq!(back.preimages, w.preimages);
    }
}
