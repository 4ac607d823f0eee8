//! The protocol layer: session configuration, transcripts, and the three
//! protocol state machines (bit OT, semi-collapse ZKoQS, and the
//! ZKoQS-to-predicate-OT compiler).
//!
//! Message accounting: a "message" is one wire frame. The prover's digests,
//! proof, and quantum payloads travel in a single combined offer frame, and
//! the session-config digest rides inside it, so bit OT costs exactly 2
//! messages in CRS mode and 3 in plain mode (the extra hash-key message).

pub mod bit_ot;
pub mod pred_ot;
pub mod zkoqs;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use qsim::{Bits, SparseState};

use crate::channel::{Channel, Frame, FrameType};
use crate::error::{QotfError, Result};
use crate::hashfam::{FhMode, Profile};
use crate::predicate::Predicate;
use crate::zk::ZkBackend;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Alice,
    Bob,
}

impl Role {
    pub fn peer(self) -> Role {
        match self {
            Role::Alice => Role::Bob,
            Role::Bob => Role::Alice,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub zk_backend: ZkBackend,
    pub fh_mode: FhMode,
    pub profile: Profile,
    pub witness_len: usize,
    pub output_len: Option<usize>,
    pub n: usize,
    pub predicate: Option<Predicate>,
    pub nizk_repetitions: usize,
    pub crs_seed_hex: String,
}

impl SessionConfig {
    pub fn default_toy() -> SessionConfig {
        SessionConfig {
            zk_backend: ZkBackend::Ideal,
            fh_mode: FhMode::Crs,
            profile: Profile::Toy,
            witness_len: 8,
            output_len: None,
            n: 2,
            predicate: None,
            nizk_repetitions: crate::zk::nizk::DEFAULT_REPETITIONS,
            crs_seed_hex: hex::encode([0u8; 32]),
        }
    }

    pub fn crs_seed(&self) -> Result<[u8; 32]> {
        let bytes = hex::decode(&self.crs_seed_hex).map_err(|e| QotfError::Serde(e.to_string()))?;
        bytes
            .try_into()
            .map_err(|_| QotfError::Params("CRS seed must be 32 bytes".into()))
    }

    /// Identity of the config, embedded in the first protocol frame so both
    /// sides can check they run the same session without an extra message.
    pub fn digest_hex(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"qotf-session-config");
        h.update(serde_json::to_vec(self).expect("serialize"));
        hex::encode(h.finalize())
    }

    /// Per-role RNG derived from a session seed; both derivations are
    /// independent streams so thread interleaving cannot leak randomness
    /// across parties.
    pub fn party_rng(seed: u64, role: Role) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(b"qotf-party-rng");
        h.update(seed.to_be_bytes());
        h.update(match role {
            Role::Alice => b"alice".as_slice(),
            Role::Bob => b"bob".as_slice(),
        });
        ChaCha8Rng::from_seed(h.finalize().into())
    }
}

/// One recorded wire message.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    /// "a->b" or "b->a".
    pub direction: String,
    pub frame_type: FrameType,
    pub payload_hex: String,
    pub byte_len: usize,
}

/// Ordered record of a session from one party's viewpoint (both parties
/// record the same messages, so honest transcripts agree byte for byte).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
    /// Site of the abort, when one happened.
    pub abort_site: Option<String>,
}

impl Transcript {
    pub fn message_count(&self) -> usize {
        self.entries.len()
    }

    pub fn total_bytes(&self) -> usize {
        self.entries.iter().map(|e| e.byte_len).sum()
    }

    pub fn digest_hex(&self) -> String {
        let mut h = Sha256::new();
        for e in &self.entries {
            h.update(&e.direction);
            h.update(e.payload_hex.as_bytes());
        }
        hex::encode(h.finalize())
    }

    /// JSON-lines serialization (one entry per line, abort marker last).
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("serialize"));
            out.push('\n');
        }
        if let Some(site) = &self.abort_site {
            out.push_str(
                &serde_json::to_string(&serde_json::json!({ "abort_site": site }))
                    .expect("serialize"),
            );
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(s: &str) -> Result<Transcript> {
        let mut t = Transcript::default();
        for line in s.lines().filter(|l| !l.trim().is_empty()) {
            if let Ok(e) = serde_json::from_str::<TranscriptEntry>(line) {
                t.entries.push(e);
            } else {
                let v: serde_json::Value = serde_json::from_str(line)?;
                t.abort_site = v["abort_site"].as_str().map(String::from);
            }
        }
        Ok(t)
    }
}

/// Channel wrapper that records every frame into a transcript.
pub struct RecordingChannel<'a> {
    inner: &'a mut dyn Channel,
    role: Role,
    pub transcript: Transcript,
}

impl<'a> RecordingChannel<'a> {
    pub fn new(inner: &'a mut dyn Channel, role: Role) -> Self {
        RecordingChannel {
            inner,
            role,
            transcript: Transcript::default(),
        }
    }

    fn record(&mut self, outgoing: bool, frame: &Frame) {
        let direction = match (self.role, outgoing) {
            (Role::Alice, true) | (Role::Bob, false) => "a->b",
            _ => "b->a",
        };
        self.transcript.entries.push(TranscriptEntry {
            direction: direction.to_string(),
            frame_type: frame.frame_type,
            payload_hex: hex::encode(&frame.payload),
            byte_len: frame.wire_len(),
        });
    }
}

impl Channel for RecordingChannel<'_> {
    fn send(&mut self, frame: Frame) -> Result<()> {
        self.record(true, &frame);
        self.inner.send(frame)
    }

    fn recv(&mut self) -> Result<Frame> {
        let frame = self.inner.recv()?;
        self.record(false, &frame);
        Ok(frame)
    }
}

/// Channel that replays a recorded transcript: outgoing frames must match the
/// record byte for byte; incoming frames are served from it.
pub struct ReplayChannel {
    entries: std::collections::VecDeque<TranscriptEntry>,
    own_outgoing: &'static str,
}

impl ReplayChannel {
    pub fn new(transcript: &Transcript, role: Role) -> ReplayChannel {
        ReplayChannel {
            entries: transcript.entries.iter().cloned().collect(),
            own_outgoing: match role {
                Role::Alice => "a->b",
                Role::Bob => "b->a",
            },
        }
    }
}

impl Channel for ReplayChannel {
    fn send(&mut self, frame: Frame) -> Result<()> {
        let expected = self
            .entries
            .pop_front()
            .ok_or_else(|| QotfError::Malformed("replay exhausted".into()))?;
        if expected.direction != self.own_outgoing
            || expected.frame_type != frame.frame_type
            || expected.payload_hex != hex::encode(&frame.payload)
        {
            return Err(QotfError::Malformed("replay divergence on send".into()));
        }
        Ok(())
    }

    fn recv(&mut self) -> Result<Frame> {
        let entry = self
            .entries
            .pop_front()
            .ok_or_else(|| QotfError::Malformed("replay exhausted".into()))?;
        if entry.direction == self.own_outgoing {
            return Err(QotfError::Malformed("replay divergence on recv".into()));
        }
        Ok(Frame::new(
            entry.frame_type,
            hex::decode(&entry.payload_hex).map_err(|e| QotfError::Serde(e.to_string()))?,
        ))
    }
}

/// The prover's combined first protocol frame: config identity, per-block
/// digests, the ZK message, and the quantum payloads.
#[derive(Serialize, Deserialize)]
pub struct OfferPayload {
    pub config_digest: String,
    pub digests: Vec<(String, String)>,
    pub zk_frame_type: FrameType,
    pub zk_payload_hex: String,
    pub qstates: Vec<String>,
}

impl OfferPayload {
    pub fn digest_bits(&self, output_len: usize) -> Result<Vec<(Bits, Bits)>> {
        self.digests
            .iter()
            .map(|(a, b)| {
                let h0 = Bits::parse(a).map_err(QotfError::Malformed)?;
                let h1 = Bits::parse(b).map_err(QotfError::Malformed)?;
                if h0.len() != output_len || h1.len() != output_len {
                    return Err(QotfError::Malformed("digest length mismatch".into()));
                }
                Ok((h0, h1))
            })
            .collect()
    }

    pub fn states(&self) -> Result<Vec<SparseState>> {
        self.qstates
            .iter()
            .map(|s| SparseState::from_json(s).map_err(QotfError::from))
            .collect()
    }

    pub fn zk_frame(&self) -> Result<Frame> {
        Ok(Frame::new(
            self.zk_frame_type,
            hex::decode(&self.zk_payload_hex).map_err(|e| QotfError::Serde(e.to_string()))?,
        ))
    }
}

/// Send an abort frame naming the site; best-effort (the peer may be gone).
pub fn send_abort(channel: &mut dyn Channel, site: &str) {
    let _ = channel.send(Frame::new(FrameType::Abort, site.as_bytes().to_vec()));
}

/// Interpret a received frame that may be an abort.
pub fn expect_frame(frame: Frame, wanted: FrameType, site: &str) -> Result<Frame> {
    if frame.frame_type == FrameType::Abort {
        return Err(QotfError::abort(
            site,
            format!(
                "peer aborted: {}",
                String::from_utf8_lossy(&frame.payload)
            ),
        ));
    }
    if frame.frame_type != wanted {
        return Err(QotfError::abort(site, "unexpected frame type"));
    }
    Ok(frame)
}
