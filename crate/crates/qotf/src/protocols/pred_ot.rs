//! Predicate oblivious transfer on top of the semi-collapse ZKoQS layer.
//! Alice picks a subset B satisfying the session predicate and feeds the
//! sub-protocol phase-encoded qubits H|r_i⟩ on B and throwaway basis states
//! elsewhere, with T = [n] ∖ B as the measured set. Bob rotates each residual
//! by Z^{m_i}, reads it in the Hadamard basis, and returns the z-vector;
//! Alice recovers m_i = r_i ⊕ ω_i ⊕ z_i exactly on B. One message on top of
//! the ZKoQS cost (3 total in CRS mode, 4 in plain mode).
//!
//! String OT and k-out-of-n OT are this protocol with the matching predicate
//! and choice mask.

use rand::Rng;
use serde::{Deserialize, Serialize};

use qsim::{Bits, SparseState};

use crate::channel::{Channel, Frame, FrameType};
use crate::error::{QotfError, Result};
use crate::hashedqubit::{rotate_and_read, DATA_REG};
use crate::predicate::Predicate;
use crate::protocols::bit_ot::{finish, PartyResult};
use crate::protocols::zkoqs::{self, qubit_layout, ProverInput};
use crate::protocols::{expect_frame, RecordingChannel, Role, SessionConfig, Transcript};

#[derive(Serialize, Deserialize)]
pub struct ZPayload {
    pub z: Vec<bool>,
}

/// The sub-protocol proves a statement about T = [n] ∖ B, so it runs with
/// the session predicate applied to the complement.
fn zk_config(config: &SessionConfig) -> Result<(Predicate, SessionConfig)> {
    let pred = config
        .predicate
        .clone()
        .ok_or_else(|| QotfError::Params("session config has no predicate".into()))?;
    let mut sub = config.clone();
    sub.predicate = Some(Predicate {
        spec: pred.spec.clone(),
        on_complement: !pred.on_complement,
    });
    Ok((pred, sub))
}

fn merge<T>(mut head: Transcript, tail: PartyResult<T>) -> PartyResult<T> {
    head.entries.extend(tail.transcript.entries);
    head.abort_site = tail.transcript.abort_site.or(head.abort_site);
    PartyResult {
        output: tail.output,
        transcript: head,
    }
}

pub fn alice<R: Rng + ?Sized>(
    b_mask: &Bits,
    config: &SessionConfig,
    channel: &mut dyn Channel,
    rng: &mut R,
) -> Result<PartyResult<Vec<Option<bool>>>> {
    let (pred, sub_config) = zk_config(config)?;
    let n = pred.n();
    if b_mask.len() != n {
        return Err(QotfError::Params("choice mask arity mismatch".into()));
    }
    let r: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
    let mut inputs = Vec::with_capacity(n);
    for i in 0..n {
        let q = if b_mask.bit(i) {
            SparseState::zero(qubit_layout())
                .apply_h(DATA_REG, 1)?
                .apply_z(DATA_REG, 1, r[i])?
        } else {
            SparseState::basis(qubit_layout(), Bits::from_bools(vec![r[i]]))?
        };
        inputs.push(q);
    }
    let t_mask = Bits::from_bools(b_mask.iter().map(|b| !b).collect());
    let sub = zkoqs::prover(&ProverInput { t_mask, inputs }, &sub_config, channel, rng)?;
    let Some(pout) = sub.output else {
        return Ok(PartyResult {
            output: None,
            transcript: sub.transcript,
        });
    };
    let mut ch = RecordingChannel::new(channel, Role::Alice);
    let run = (|| {
        let reply = expect_frame(ch.recv()?, FrameType::ZVec, "alice-zvec")?;
        let reply: ZPayload = serde_json::from_slice(&reply.payload)?;
        if reply.z.len() != n {
            return Err(QotfError::abort("alice-zvec", "z-vector arity mismatch"));
        }
        let mut out = vec![None; n];
        for i in 0..n {
            if b_mask.bit(i) {
                let omega = pout.omega[i].ok_or_else(|| {
                    QotfError::Structural("missing phase correction on B".into())
                })?;
                out[i] = Some(r[i] ^ omega ^ reply.z[i]);
            }
        }
        Ok(out)
    })();
    Ok(merge(sub.transcript, finish(ch, run)?))
}

pub fn bob<R: Rng + ?Sized>(
    messages: &[bool],
    config: &SessionConfig,
    channel: &mut dyn Channel,
    rng: &mut R,
) -> Result<PartyResult<()>> {
    let (pred, sub_config) = zk_config(config)?;
    if messages.len() != pred.n() {
        return Err(QotfError::Params("message arity mismatch".into()));
    }
    let sub = zkoqs::verifier(&sub_config, channel, rng)?;
    let Some(vout) = sub.output else {
        return Ok(PartyResult {
            output: None,
            transcript: sub.transcript,
        });
    };
    let mut ch = RecordingChannel::new(channel, Role::Bob);
    let run = (|| {
        let mut z = Vec::with_capacity(messages.len());
        for (residual, &m) in vout.residuals.iter().zip(messages) {
            z.push(rotate_and_read(residual, m, rng)?);
        }
        ch.send(Frame::new(
            FrameType::ZVec,
            serde_json::to_vec(&ZPayload { z })?,
        ))?;
        Ok(())
    })();
    Ok(merge(sub.transcript, finish(ch, run)?))
}

/// Choice mask for string OT over halves of length m: all of the first half
/// or all of the second.
pub fn string_choice_mask(m: usize, second_half: bool) -> Bits {
    Bits::from_bools(
        (0..2 * m)
            .map(|i| if second_half { i >= m } else { i < m })
            .collect(),
    )
}

/// Choice mask for k-out-of-n OT: all indices of every chosen block.
pub fn k_of_n_choice_mask(blocks: usize, block_len: usize, chosen: &[usize]) -> Bits {
    Bits::from_bools(
        (0..blocks * block_len)
            .map(|i| chosen.contains(&(i / block_len)))
            .collect(),
    )
}

/// Run both parties on an in-process channel pair.
pub fn run_local(
    b_mask: &Bits,
    messages: &[bool],
    config: &SessionConfig,
    seed: u64,
) -> Result<(PartyResult<Vec<Option<bool>>>, PartyResult<()>)> {
    let (mut ca, mut cb) = crate::channel::mem_pair();
    let config_b = config.clone();
    let messages_b = messages.to_vec();
    let bob_thread = std::thread::spawn(move || {
        let mut rng = SessionConfig::party_rng(seed, Role::Bob);
        bob(&messages_b, &config_b, &mut cb, &mut rng)
    });
    let mut rng = SessionConfig::party_rng(seed, Role::Alice);
    let alice_result = alice(b_mask, config, &mut ca, &mut rng);
    let bob_result = bob_thread.join().expect("bob thread");
    Ok((alice_result?, bob_result?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predicate::PredicateSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn config_with(pred: Predicate) -> SessionConfig {
        let mut c = SessionConfig::default_toy();
        c.n = pred.n();
        c.predicate = Some(pred);
        c
    }

    #[test]
    fn string_ot_transfers_exactly_the_chosen_half() {
        let m = 2;
        let config = config_with(Predicate::direct(PredicateSpec::StringOt { m }));
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for seed in 0..8u64 {
            let second = seed % 2 == 1;
            let mask = string_choice_mask(m, second);
            let messages: Vec<bool> = (0..2 * m).map(|_| rng.gen_bool(0.5)).collect();
            let (a, b) = run_local(&mask, &messages, &config, seed).unwrap();
            let out = a.output.expect("alice output");
            assert!(b.output.is_some());
            for i in 0..2 * m {
                if mask.bit(i) {
                    assert_eq!(out[i], Some(messages[i]), "seed={seed} i={i}");
                } else {
                    assert_eq!(out[i], None);
                }
            }
            assert_eq!(a.transcript.message_count(), 3);
        }
    }

    #[test]
    fn one_out_of_two_blocks() {
        let config = config_with(Predicate::direct(PredicateSpec::KOutOfN {
            k: 1,
            blocks: 2,
            block_len: 2,
        }));
        for (seed, chosen) in [(1u64, 0usize), (2, 1), (3, 0), (4, 1)] {
            let mask = k_of_n_choice_mask(2, 2, &[chosen]);
            let messages = vec![seed % 2 == 0, true, false, seed % 3 == 0];
            let (a, _) = run_local(&mask, &messages, &config, seed).unwrap();
            let out = a.output.expect("alice output");
            for i in 0..4 {
                if i / 2 == chosen {
                    assert_eq!(out[i], Some(messages[i]));
                } else {
                    assert_eq!(out[i], None);
                }
            }
        }
    }

    #[test]
    fn singleton_predicate_matches_bit_ot_semantics() {
        let config = config_with(Predicate::direct(PredicateSpec::SingletonDummy { n: 2 }));
        for seed in 0..6u64 {
            let b = seed % 2 == 1;
            let mask = Bits::from_bools(vec![!b, b]);
            let messages = vec![seed % 3 == 0, seed % 5 == 0];
            let (a, _) = run_local(&mask, &messages, &config, seed).unwrap();
            let out = a.output.expect("alice output");
            assert_eq!(out[b as usize], Some(messages[b as usize]));
            assert_eq!(out[!b as usize], None);
        }
    }

    #[test]
    fn invalid_choice_mask_aborts_both_parties() {
        let config = config_with(Predicate::direct(PredicateSpec::StringOt { m: 2 }));
        let mask = Bits::parse("1010").unwrap(); // neither half
        let (a, b) = run_local(&mask, &[false; 4], &config, 7).unwrap();
        assert!(a.output.is_none());
        assert!(b.output.is_none());
        assert_eq!(a.transcript.abort_site.as_deref(), Some("prover-predicate"));
    }
}
