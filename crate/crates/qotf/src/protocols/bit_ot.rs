//! Bit oblivious transfer. Alice (receiver, choice bit b) prepares one
//! superposed and one collapsed hashed-qubit block, proves the relation in
//! zero knowledge, and sends everything in one frame; Bob (sender, messages
//! m_0, m_1) checks and shrinks both blocks, rotates residual c by Z^{m_c},
//! reads it in the Hadamard basis, and returns all (s, z); Alice decodes m_b
//! from her superposed block. 2 messages in CRS mode, 3 in plain mode.

use rand::Rng;
use serde::{Deserialize, Serialize};

use qsim::Bits;

use crate::channel::{Channel, Frame, FrameType};
use crate::error::{QotfError, Result};
use crate::hashedqubit::{
    decode_phase, rotate_and_read, sample_block, verify_and_shrink, BlockMode, HashedQubitBlock,
};
use crate::hashfam::f_h_distribute;
use crate::protocols::{
    expect_frame, send_abort, OfferPayload, RecordingChannel, Role, SessionConfig, Transcript,
};
use crate::zk::{prover_frame, verify_frame, StatementKind, ZkStatement, ZkWitness};

#[derive(Serialize, Deserialize)]
pub struct ReplyPayload {
    pub s: Vec<String>,
    pub z: Vec<bool>,
}

/// A party's result: its output (None = ⊥) plus the transcript it recorded.
#[derive(Debug)]
pub struct PartyResult<T> {
    pub output: Option<T>,
    pub transcript: Transcript,
}

pub(crate) fn finish<T>(mut ch: RecordingChannel<'_>, r: Result<T>) -> Result<PartyResult<T>> {
    match r {
        Ok(v) => Ok(PartyResult {
            output: Some(v),
            transcript: ch.transcript,
        }),
        Err(e) if matches!(e, QotfError::Abort { .. } | QotfError::Malformed(_)) => {
            let site = match &e {
                QotfError::Abort { site, .. } => site.clone(),
                _ => format!("malformed: {e}"),
            };
            ch.transcript.abort_site = Some(site);
            Ok(PartyResult {
                output: None,
                transcript: ch.transcript,
            })
        }
        Err(e) => Err(e),
    }
}

/// Our own abort decision: notify the peer, then fail locally.
fn abort_here(ch: &mut RecordingChannel<'_>, site: &str, reason: &str) -> QotfError {
    send_abort(ch, site);
    QotfError::abort(site, reason)
}

pub fn alice<R: Rng + ?Sized>(
    b: bool,
    config: &SessionConfig,
    channel: &mut dyn Channel,
    rng: &mut R,
) -> Result<PartyResult<bool>> {
    let mut ch = RecordingChannel::new(channel, Role::Alice);
    let run = (|| {
        let key = f_h_distribute(
            config.fh_mode,
            false,
            config.profile,
            config.witness_len,
            config.output_len,
            &config.crs_seed()?,
            &mut ch,
            rng,
        )?;
        let mut blocks = Vec::with_capacity(2);
        let mut secrets = Vec::with_capacity(2);
        for c in 0..2usize {
            let mode = if c == b as usize {
                BlockMode::Superposed { r: rng.gen_bool(0.5) }
            } else {
                BlockMode::Collapsed { l: rng.gen_bool(0.5) }
            };
            let (block, secret) = sample_block(mode, c + 1, &key, rng)?;
            blocks.push(block);
            secrets.push(secret);
        }
        let statement = ZkStatement {
            kind: StatementKind::BitOt,
            hash_key: key.clone(),
            digests: blocks.iter().map(|bl| bl.digests.clone()).collect(),
            predicate: None,
        };
        let witness = ZkWitness {
            preimages: secrets.iter().map(|s| (s.w0.clone(), s.w1.clone())).collect(),
            measured_set: None,
            aux_witness: None,
        };
        let zk = prover_frame(
            config.zk_backend,
            &statement,
            Some(&witness),
            config.nizk_repetitions,
            rng,
        )?;
        let offer = OfferPayload {
            config_digest: config.digest_hex(),
            digests: blocks
                .iter()
                .map(|bl| (bl.digests.0.to_string(), bl.digests.1.to_string()))
                .collect(),
            zk_frame_type: zk.frame_type,
            zk_payload_hex: hex::encode(&zk.payload),
            qstates: blocks.iter().map(|bl| bl.state.to_json()).collect(),
        };
        ch.send(Frame::new(FrameType::Digests, serde_json::to_vec(&offer)?))?;

        let reply = expect_frame(ch.recv()?, FrameType::SVec, "alice-reply")?;
        let reply: ReplyPayload = serde_json::from_slice(&reply.payload)?;
        if reply.s.len() != 2 || reply.z.len() != 2 {
            return Err(QotfError::abort("alice-reply", "reply arity mismatch"));
        }
        let s_b = Bits::parse(&reply.s[b as usize]).map_err(QotfError::Malformed)?;
        if s_b.len() != key.witness_len() {
            return Err(QotfError::abort("alice-reply", "s length mismatch"));
        }
        decode_phase(&secrets[b as usize], &s_b, reply.z[b as usize])
    })();
    finish(ch, run)
}

pub fn bob<R: Rng + ?Sized>(
    m0: bool,
    m1: bool,
    config: &SessionConfig,
    channel: &mut dyn Channel,
    rng: &mut R,
) -> Result<PartyResult<()>> {
    let mut ch = RecordingChannel::new(channel, Role::Bob);
    let run = (|| {
        let key = f_h_distribute(
            config.fh_mode,
            true,
            config.profile,
            config.witness_len,
            config.output_len,
            &config.crs_seed()?,
            &mut ch,
            rng,
        )?;
        let offer = expect_frame(ch.recv()?, FrameType::Digests, "bob-offer")?;
        let offer: OfferPayload = serde_json::from_slice(&offer.payload)?;
        if offer.config_digest != config.digest_hex() {
            return Err(abort_here(&mut ch, "bob-config", "session config mismatch"));
        }
        let digests = offer.digest_bits(key.output_len)?;
        if digests.len() != 2 {
            return Err(abort_here(&mut ch, "bob-offer", "expected 2 blocks"));
        }
        let statement = ZkStatement {
            kind: StatementKind::BitOt,
            hash_key: key.clone(),
            digests: digests.clone(),
            predicate: None,
        };
        let verdict = verify_frame(config.zk_backend, &statement, &offer.zk_frame()?)?;
        if !verdict.accepted {
            return Err(abort_here(&mut ch, "bob-zk", "proof rejected"));
        }
        let states = offer.states()?;
        if states.len() != 2 {
            return Err(abort_here(&mut ch, "bob-offer", "expected 2 quantum payloads"));
        }
        let mut s_out = Vec::with_capacity(2);
        let mut z_out = Vec::with_capacity(2);
        for (c, (state, digest)) in states.into_iter().zip(digests).enumerate() {
            let block = HashedQubitBlock {
                index: c + 1,
                digests: digest,
                state,
            };
            let shrink = verify_and_shrink(&block, &key, rng)
                .map_err(|_| abort_here(&mut ch, "bob-shrink", "malformed block"))?;
            if !shrink.pass {
                return Err(abort_here(&mut ch, "bob-shrink", "membership check failed"));
            }
            let m_c = if c == 0 { m0 } else { m1 };
            let z = rotate_and_read(shrink.residual.as_ref().expect("pass"), m_c, rng)?;
            s_out.push(shrink.s.expect("pass").to_string());
            z_out.push(z);
        }
        ch.send(Frame::new(
            FrameType::SVec,
            serde_json::to_vec(&ReplyPayload { s: s_out, z: z_out })?,
        ))?;
        Ok(())
    })();
    finish(ch, run)
}

/// Run both parties on an in-process channel pair, Bob on a second thread.
pub fn run_local(
    b: bool,
    m: (bool, bool),
    config: &SessionConfig,
    seed: u64,
) -> Result<(PartyResult<bool>, PartyResult<()>)> {
    let (mut ca, mut cb) = crate::channel::mem_pair();
    let config_b = config.clone();
    let bob_thread = std::thread::spawn(move || {
        let mut rng = SessionConfig::party_rng(seed, Role::Bob);
        bob(m.0, m.1, &config_b, &mut cb, &mut rng)
    });
    let mut rng = SessionConfig::party_rng(seed, Role::Alice);
    let alice_result = alice(b, config, &mut ca, &mut rng);
    let bob_result = bob_thread.join().expect("bob thread");
    Ok((alice_result?, bob_result?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hashfam::FhMode;
    use crate::zk::ZkBackend;

    #[test]
    fn correctness_all_inputs_ideal_crs() {
        let config = SessionConfig::default_toy();
        let mut seed = 0u64;
        for b in [false, true] {
            for m0 in [false, true] {
                for m1 in [false, true] {
                    seed += 1;
                    let (a, bo) = run_local(b, (m0, m1), &config, seed).unwrap();
                    let expect = if b { m1 } else { m0 };
                    assert_eq!(a.output, Some(expect), "b={b} m=({m0},{m1})");
                    assert!(bo.output.is_some());
                    assert_eq!(a.transcript.message_count(), 2);
                    assert_eq!(a.transcript.entries, bo.transcript.entries);
                }
            }
        }
    }

    #[test]
    fn plain_mode_adds_one_message() {
        let mut config = SessionConfig::default_toy();
        config.fh_mode = FhMode::Plain;
        let (a, bo) = run_local(true, (false, true), &config, 7).unwrap();
        assert_eq!(a.output, Some(true));
        assert_eq!(a.transcript.message_count(), 3);
        assert_eq!(bo.transcript.message_count(), 3);
        assert_eq!(a.transcript.entries[0].frame_type, FrameType::HashKey);
    }

    #[test]
    fn nizk_backend_two_messages() {
        let mut config = SessionConfig::default_toy();
        config.zk_backend = ZkBackend::Nizk;
        config.nizk_repetitions = 15;
        let (a, bo) = run_local(false, (true, false), &config, 11).unwrap();
        assert_eq!(a.output, Some(true));
        assert!(bo.output.is_some());
        assert_eq!(a.transcript.message_count(), 2);
    }

    #[test]
    fn transcripts_deterministic_per_seed() {
        let config = SessionConfig::default_toy();
        let (a1, _) = run_local(true, (true, false), &config, 99).unwrap();
        let (a2, _) = run_local(true, (true, false), &config, 99).unwrap();
        assert_eq!(a1.transcript, a2.transcript);
        let (a3, _) = run_local(true, (true, false), &config, 100).unwrap();
        assert_ne!(a1.transcript.digest_hex(), a3.transcript.digest_hex());
    }

    #[test]
    fn config_mismatch_aborts_both() {
        let config_a = SessionConfig::default_toy();
        let mut config_b = SessionConfig::default_toy();
        config_b.n = 5;
        let (mut ca, mut cb) = crate::channel::mem_pair();
        let bob_thread = std::thread::spawn(move || {
            let mut rng = SessionConfig::party_rng(1, Role::Bob);
            bob(false, true, &config_b, &mut cb, &mut rng)
        });
        let mut rng = SessionConfig::party_rng(1, Role::Alice);
        let a = alice(false, &config_a, &mut ca, &mut rng).unwrap();
        let b = bob_thread.join().unwrap().unwrap();
        assert_eq!(a.output, None);
        assert_eq!(b.output, None);
        assert!(b.transcript.abort_site.is_some());
        assert!(a.transcript.abort_site.is_some());
    }

    #[test]
    fn replay_reproduces_outputs() {
        let config = SessionConfig::default_toy();
        let (a, _) = run_local(true, (false, true), &config, 42).unwrap();
        // Feed Alice's transcript back through her state machine with the
        // same seed: identical output, no divergence.
        let mut replay = crate::protocols::ReplayChannel::new(&a.transcript, Role::Alice);
        let mut rng = SessionConfig::party_rng(42, Role::Alice);
        let again = alice(true, &config, &mut replay, &mut rng).unwrap();
        assert_eq!(again.output, a.output);
        assert_eq!(again.transcript, a.transcript);
    }

    #[test]
    fn transcript_jsonl_roundtrip() {
        let config = SessionConfig::default_toy();
        let (a, _) = run_local(false, (true, true), &config, 5).unwrap();
        let text = a.transcript.to_jsonl();
        let back = Transcript::from_jsonl(&text).unwrap();
        assert_eq!(back, a.transcript);
    }
}
