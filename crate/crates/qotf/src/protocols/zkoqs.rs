//! Zero-knowledge over quantum states for the semi-collapsing relation.
//! The prover holds n single input qubits and a measured set T; she measures
//! the qubits indexed by T, attaches hashed witness registers to every block,
//! and proves in ZK that T satisfies the registered predicate and that every
//! measured block carries a dummy branch. The verifier checks and shrinks
//! every block and returns the Hadamard outcomes s; the prover folds them
//! into per-block phase corrections ω. 2 messages in CRS mode, 3 in plain.

use rand::Rng;
use serde::{Deserialize, Serialize};

use qsim::{measure_computational, Bits, RegisterLayout, SparseState};

use crate::channel::{Channel, Frame, FrameType};
use crate::error::{QotfError, Result};
use crate::hashedqubit::{
    block_layout, decode_phase, sample_block, verify_and_shrink, BlockMode, BlockSecrets,
    HashedQubitBlock, DATA_REG, WITNESS_REG,
};
use crate::hashfam::{eval, f_h_distribute, HashKey};
use crate::predicate::Predicate;
use crate::protocols::bit_ot::PartyResult;
use crate::protocols::{
    expect_frame, send_abort, OfferPayload, RecordingChannel, Role, SessionConfig,
};
use crate::zk::{prover_frame, verify_frame, StatementKind, ZkStatement, ZkWitness};

#[derive(Serialize, Deserialize)]
pub struct SPayload {
    pub s: Vec<String>,
}

/// The prover's quantum input: n single-qubit states (register `d`) plus the
/// set of indices she commits to measuring.
pub struct ProverInput {
    pub t_mask: Bits,
    pub inputs: Vec<SparseState>,
}

#[derive(Clone, Debug)]
pub struct ProverOutput {
    /// Measurement outcome l_i for every i ∈ T.
    pub measured: Vec<Option<bool>>,
    /// Phase correction ω_i = r'_i ⊕ ⟨s_i, w_0 ⊕ w_1⟩ for every i ∉ T.
    pub omega: Vec<Option<bool>>,
}

#[derive(Debug)]
pub struct VerifierOutput {
    pub s: Vec<Bits>,
    /// One residual data qubit per block; semi-collapsed when the prover is
    /// honest (basis states on T, the phase-shifted inputs elsewhere).
    pub residuals: Vec<SparseState>,
}

pub fn qubit_layout() -> RegisterLayout {
    RegisterLayout::single(DATA_REG, 1).expect("fixed layout")
}

fn clean_witness<R: Rng + ?Sized>(wl: usize, rng: &mut R) -> Bits {
    let mut w = Bits::random(wl, rng);
    w.set(0, false);
    w
}

/// Attach a witness register to an input qubit: apply Z^{r'}, tensor |0…0⟩,
/// and XOR in w_d conditioned on the data qubit.
fn superposed_block<R: Rng + ?Sized>(
    input: &SparseState,
    index: usize,
    key: &HashKey,
    rng: &mut R,
) -> Result<(HashedQubitBlock, BlockSecrets)> {
    let wl = key.witness_len();
    let r = rng.gen_bool(0.5);
    let w0 = clean_witness(wl, rng);
    let w1 = clean_witness(wl, rng);
    let h0 = eval(key, &Bits::from_bools(vec![false]).concat(&w0))?;
    let h1 = eval(key, &Bits::from_bools(vec![true]).concat(&w1))?;
    let blank = SparseState::zero(RegisterLayout::single(WITNESS_REG, wl)?);
    let (w0c, w1c) = (w0.clone(), w1.clone());
    let state = input
        .apply_z(DATA_REG, 1, r)?
        .tensor(&blank)?
        .apply_classical_oracle(&[DATA_REG], WITNESS_REG, move |d: &Bits| {
            if d.bit(0) {
                w1c.clone()
            } else {
                w0c.clone()
            }
        })?;
    debug_assert_eq!(state.layout(), &block_layout(wl));
    Ok((
        HashedQubitBlock {
            index,
            digests: (h0, h1),
            state,
        },
        BlockSecrets {
            mode: BlockMode::Superposed { r },
            w0,
            w1,
        },
    ))
}

fn session_predicate(config: &SessionConfig) -> Result<Predicate> {
    config
        .predicate
        .clone()
        .ok_or_else(|| QotfError::Params("session config has no predicate".into()))
}

pub fn prover<R: Rng + ?Sized>(
    input: &ProverInput,
    config: &SessionConfig,
    channel: &mut dyn Channel,
    rng: &mut R,
) -> Result<PartyResult<ProverOutput>> {
    let mut ch = RecordingChannel::new(channel, Role::Alice);
    let run = (|| {
        let pred = session_predicate(config)?;
        let n = pred.n();
        if input.t_mask.len() != n || input.inputs.len() != n {
            return Err(QotfError::Params("prover input arity mismatch".into()));
        }
        for q in &input.inputs {
            if q.layout() != &qubit_layout() {
                return Err(QotfError::Structural("input qubits must live on `d`".into()));
            }
        }
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
        // Abort-first: if T violates the predicate the prover sends nothing
        // quantum at all.
        if !pred.eval(&input.t_mask)? {
            send_abort(&mut ch, "prover-predicate");
            return Err(QotfError::abort("prover-predicate", "T violates the predicate"));
        }
        let mut blocks = Vec::with_capacity(n);
        let mut secrets = Vec::with_capacity(n);
        let mut measured = vec![None; n];
        for (i, q) in input.inputs.iter().enumerate() {
            if input.t_mask.bit(i) {
                let (rec, _) = measure_computational(q, DATA_REG, rng)?;
                let l = rec.outcome.bit(0);
                measured[i] = Some(l);
                let (block, sec) = sample_block(BlockMode::Collapsed { l }, i + 1, &key, rng)?;
                blocks.push(block);
                secrets.push(sec);
            } else {
                let (block, sec) = superposed_block(q, i + 1, &key, rng)?;
                blocks.push(block);
                secrets.push(sec);
            }
        }
        let statement = ZkStatement {
            kind: StatementKind::Semicollapse,
            hash_key: key.clone(),
            digests: blocks.iter().map(|b| b.digests.clone()).collect(),
            predicate: Some(pred),
        };
        let witness = ZkWitness {
            preimages: secrets.iter().map(|s| (s.w0.clone(), s.w1.clone())).collect(),
            measured_set: Some(input.t_mask.clone()),
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
                .map(|b| (b.digests.0.to_string(), b.digests.1.to_string()))
                .collect(),
            zk_frame_type: zk.frame_type,
            zk_payload_hex: hex::encode(&zk.payload),
            qstates: blocks.iter().map(|b| b.state.to_json()).collect(),
        };
        ch.send(Frame::new(FrameType::Digests, serde_json::to_vec(&offer)?))?;

        let reply = expect_frame(ch.recv()?, FrameType::SVec, "prover-svec")?;
        let reply: SPayload = serde_json::from_slice(&reply.payload)?;
        if reply.s.len() != n {
            return Err(QotfError::abort("prover-svec", "s-vector arity mismatch"));
        }
        let mut omega = vec![None; n];
        for i in 0..n {
            if input.t_mask.bit(i) {
                continue;
            }
            let s_i = Bits::parse(&reply.s[i]).map_err(QotfError::Malformed)?;
            if s_i.len() != key.witness_len() {
                return Err(QotfError::abort("prover-svec", "s length mismatch"));
            }
            // decode_phase with z = 0 is exactly r' ⊕ ⟨s, w_0 ⊕ w_1⟩.
            omega[i] = Some(decode_phase(&secrets[i], &s_i, false)?);
        }
        Ok(ProverOutput { measured, omega })
    })();
    super::bit_ot::finish(ch, run)
}

pub fn verifier<R: Rng + ?Sized>(
    config: &SessionConfig,
    channel: &mut dyn Channel,
    rng: &mut R,
) -> Result<PartyResult<VerifierOutput>> {
    let mut ch = RecordingChannel::new(channel, Role::Bob);
    let run = (|| {
        let pred = session_predicate(config)?;
        let n = pred.n();
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
        let offer = expect_frame(ch.recv()?, FrameType::Digests, "verifier-offer")?;
        let offer: OfferPayload = serde_json::from_slice(&offer.payload)?;
        if offer.config_digest != config.digest_hex() {
            send_abort(&mut ch, "verifier-config");
            return Err(QotfError::abort("verifier-config", "session config mismatch"));
        }
        let digests = offer.digest_bits(key.output_len)?;
        if digests.len() != n {
            send_abort(&mut ch, "verifier-offer");
            return Err(QotfError::abort("verifier-offer", "block count mismatch"));
        }
        let statement = ZkStatement {
            kind: StatementKind::Semicollapse,
            hash_key: key.clone(),
            digests: digests.clone(),
            predicate: Some(pred),
        };
        let verdict = verify_frame(config.zk_backend, &statement, &offer.zk_frame()?)?;
        if !verdict.accepted {
            send_abort(&mut ch, "verifier-zk");
            return Err(QotfError::abort("verifier-zk", "proof rejected"));
        }
        let states = offer.states()?;
        if states.len() != n {
            send_abort(&mut ch, "verifier-offer");
            return Err(QotfError::abort("verifier-offer", "quantum payload count mismatch"));
        }
        let mut s_out = Vec::with_capacity(n);
        let mut residuals = Vec::with_capacity(n);
        for (i, (state, digest)) in states.into_iter().zip(digests).enumerate() {
            let block = HashedQubitBlock {
                index: i + 1,
                digests: digest,
                state,
            };
            let shrink = verify_and_shrink(&block, &key, rng).map_err(|_| {
                send_abort(&mut ch, "verifier-shrink");
                QotfError::abort("verifier-shrink", "malformed block")
            })?;
            if !shrink.pass {
                send_abort(&mut ch, "verifier-shrink");
                return Err(QotfError::abort("verifier-shrink", "membership check failed"));
            }
            s_out.push(shrink.s.expect("pass"));
            residuals.push(shrink.residual.expect("pass"));
        }
        ch.send(Frame::new(
            FrameType::SVec,
            serde_json::to_vec(&SPayload {
                s: s_out.iter().map(|s| s.to_string()).collect(),
            })?,
        ))?;
        Ok(VerifierOutput {
            s: s_out,
            residuals,
        })
    })();
    super::bit_ot::finish(ch, run)
}

/// Run prover and verifier over an in-process channel pair.
pub fn run_local(
    input: ProverInput,
    config: &SessionConfig,
    seed: u64,
) -> Result<(PartyResult<ProverOutput>, PartyResult<VerifierOutput>)> {
    let (mut ca, mut cb) = crate::channel::mem_pair();
    let config_b = config.clone();
    let verifier_thread = std::thread::spawn(move || {
        let mut rng = SessionConfig::party_rng(seed, Role::Bob);
        verifier(&config_b, &mut cb, &mut rng)
    });
    let mut rng = SessionConfig::party_rng(seed, Role::Alice);
    let prover_result = prover(&input, config, &mut ca, &mut rng);
    let verifier_result = verifier_thread.join().expect("verifier thread");
    Ok((prover_result?, verifier_result?))
}
