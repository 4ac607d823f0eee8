//! Non-interactive proof backend: MPC-in-the-head over the relation circuit.
//!
//! The witness is XOR-shared among 3 simulated parties. XOR gates and
//! constants are local; an AND gate produces party i's output share
//!
//!   z_i = x_i·y_i ⊕ x_{i+1}·y_i ⊕ x_i·y_{i+1} ⊕ R_i ⊕ R_{i+1}
//!
//! (indices mod 3, R from the party's random tape), so recomputing party i's
//! share needs exactly the views of parties i and i+1. Per repetition the
//! prover commits to all three views through the random oracle, derives a
//! challenge e ∈ {0,1,2} by Fiat–Shamir, and opens views e and e+1. Each
//! repetition caught-with-probability ≥ 1/3; the default 40 repetitions give
//! soundness error ≤ (2/3)^40.
//!
//! The "programmable/extractable" oracle of the security proofs is modeled
//! only through query logging: the extractor looks up the unopened
//! commitment's preimage among the prover's logged queries.

use std::sync::Mutex;

use qsim::Bits;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::circuit::{Circuit, Gate};
use crate::error::{QotfError, Result};
use crate::zk::{relation_check, ZkStatement, ZkWitness};

pub const DEFAULT_REPETITIONS: usize = 40;

const PROOF_MAGIC: &[u8; 4] = b"QZKP";
const PROOF_VERSION: u8 = 1;

/// Domain-separated random oracle over SHA-256, with a query log.
pub struct RandomOracle {
    log: Mutex<Vec<(String, Vec<u8>)>>,
}

impl Default for RandomOracle {
    fn default() -> Self {
        Self::new()
    }
}

impl RandomOracle {
    pub fn new() -> RandomOracle {
        RandomOracle {
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn query(&self, tag: &str, data: &[u8]) -> [u8; 32] {
        self.log
            .lock()
            .expect("single-writer log")
            .push((tag.to_string(), data.to_vec()));
        ro_hash(tag, data)
    }

    pub fn query_log(&self) -> Vec<(String, Vec<u8>)> {
        self.log.lock().expect("single-writer log").clone()
    }
}

/// The oracle's function (pure; used by verification, which needs no log).
pub fn ro_hash(tag: &str, data: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"qotf-ro-v1");
    h.update((tag.len() as u32).to_be_bytes());
    h.update(tag.as_bytes());
    h.update(data);
    h.finalize().into()
}

/// One simulated party's view: everything needed to replay its computation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct View {
    pub party: u8,
    pub input_share: Bits,
    pub tape_seed_hex: String,
    /// Output shares of the AND gates, in gate order.
    pub and_outputs: Bits,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepCommitments {
    pub commitments: [String; 3],
    /// Each party's shares of the circuit output wires.
    pub output_shares: [String; 3],
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepOpening {
    pub salts: [String; 2],
    pub views: [View; 2],
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NizkProof {
    pub commitments: Vec<RepCommitments>,
    pub challenges: Vec<u8>,
    pub openings: Vec<RepOpening>,
}

fn strict_hex_decode(s: &str) -> Result<Vec<u8>> {
    if !s.chars().all(|c| matches!(c, '0'..='9' | 'a'..='f')) {
        return Err(QotfError::Malformed("non-canonical hex".into()));
    }
    hex::decode(s).map_err(|e| QotfError::Malformed(e.to_string()))
}

impl NizkProof {
    /// magic ‖ version ‖ three length-prefixed sections
    /// (commitments, challenges, openings), each JSON-encoded.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(PROOF_MAGIC);
        out.push(PROOF_VERSION);
        for section in [
            serde_json::to_vec(&self.commitments).expect("serialize"),
            serde_json::to_vec(&self.challenges).expect("serialize"),
            serde_json::to_vec(&self.openings).expect("serialize"),
        ] {
            out.extend_from_slice(&(section.len() as u32).to_be_bytes());
            out.extend_from_slice(&section);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<NizkProof> {
        if bytes.len() < 5 || &bytes[..4] != PROOF_MAGIC || bytes[4] != PROOF_VERSION {
            return Err(QotfError::Malformed("bad proof header".into()));
        }
        let mut pos = 5;
        let mut sections = Vec::new();
        for _ in 0..3 {
            if pos + 4 > bytes.len() {
                return Err(QotfError::Malformed("truncated proof".into()));
            }
            let len = u32::from_be_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
            pos += 4;
            if pos + len > bytes.len() {
                return Err(QotfError::Malformed("truncated proof section".into()));
            }
            sections.push(&bytes[pos..pos + len]);
            pos += len;
        }
        if pos != bytes.len() {
            return Err(QotfError::Malformed("trailing proof bytes".into()));
        }
        let proof = NizkProof {
            commitments: serde_json::from_slice(sections[0])?,
            challenges: serde_json::from_slice(sections[1])?,
            openings: serde_json::from_slice(sections[2])?,
        };
        // Strict hex everywhere so re-encodings cannot alias.
        for rep in &proof.commitments {
            for c in &rep.commitments {
                if strict_hex_decode(c)?.len() != 32 {
                    return Err(QotfError::Malformed("bad commitment".into()));
                }
            }
        }
        for op in &proof.openings {
            for s in &op.salts {
                if strict_hex_decode(s)?.len() != 32 {
                    return Err(QotfError::Malformed("bad salt".into()));
                }
            }
            for v in &op.views {
                if strict_hex_decode(&v.tape_seed_hex)?.len() != 32 {
                    return Err(QotfError::Malformed("bad tape seed".into()));
                }
            }
        }
        Ok(proof)
    }

    pub fn to_debug_json(&self) -> String {
        serde_json::to_string_pretty(&serde_json::json!({
            "commitments": self.commitments,
            "challenges": self.challenges,
            "openings": self.openings,
        }))
        .expect("serialize")
    }
}

/// Tape bits for one party: one bit per AND gate, derived from the seed.
fn tape_bits(seed: &[u8; 32], and_count: usize) -> Bits {
    use rand::SeedableRng;
    let mut h = Sha256::new();
    h.update(b"qotf-nizk-tape");
    h.update(seed);
    let derived: [u8; 32] = h.finalize().into();
    let mut rng = rand_chacha::ChaCha8Rng::from_seed(derived);
    Bits::random(and_count, &mut rng)
}

/// Run the 3-party simulation. Returns per-party AND-gate output shares and
/// per-party output-wire shares.
fn simulate(
    circuit: &Circuit,
    input_shares: &[Bits; 3],
    tapes: &[Bits; 3],
) -> ([Bits; 3], [Bits; 3]) {
    let mut wires: [Vec<bool>; 3] = [
        Vec::with_capacity(circuit.num_wires()),
        Vec::with_capacity(circuit.num_wires()),
        Vec::with_capacity(circuit.num_wires()),
    ];
    for p in 0..3 {
        wires[p].extend(input_shares[p].iter());
    }
    let mut and_outputs: [Vec<bool>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut and_idx = 0usize;
    for gate in &circuit.gates {
        match *gate {
            Gate::Const(c) => {
                wires[0].push(c);
                wires[1].push(false);
                wires[2].push(false);
            }
            Gate::Xor(a, b) => {
                for w in wires.iter_mut() {
                    let v = w[a] ^ w[b];
                    w.push(v);
                }
            }
            Gate::And(a, b) => {
                let mut zs = [false; 3];
                for p in 0..3 {
                    let q = (p + 1) % 3;
                    zs[p] = (wires[p][a] & wires[p][b])
                        ^ (wires[q][a] & wires[p][b])
                        ^ (wires[p][a] & wires[q][b])
                        ^ tapes[p].bit(and_idx)
                        ^ tapes[q].bit(and_idx);
                }
                for p in 0..3 {
                    wires[p].push(zs[p]);
                    and_outputs[p].push(zs[p]);
                }
                and_idx += 1;
            }
        }
    }
    let outputs: [Bits; 3] = std::array::from_fn(|p| {
        Bits::from_bools(circuit.outputs.iter().map(|&w| wires[p][w]).collect())
    });
    (
        std::array::from_fn(|p| Bits::from_bools(and_outputs[p].clone())),
        outputs,
    )
}

/// Replay parties e and e+1 from their views, verifying every AND-gate output
/// share of party e against its view. Returns the two parties' output-wire
/// shares, or None on any inconsistency.
fn replay_pair(circuit: &Circuit, views: &[View; 2]) -> Option<(Bits, Bits)> {
    let e = views[0].party as usize;
    if views[1].party as usize != (e + 1) % 3 {
        return None;
    }
    let seeds: Vec<[u8; 32]> = views
        .iter()
        .map(|v| {
            strict_hex_decode(&v.tape_seed_hex)
                .ok()
                .and_then(|b| <[u8; 32]>::try_from(b).ok())
        })
        .collect::<Option<Vec<_>>>()?;
    let and_count = circuit.and_count();
    let tapes: Vec<Bits> = seeds.iter().map(|s| tape_bits(s, and_count)).collect();
    if views.iter().any(|v| v.and_outputs.len() != and_count) {
        return None;
    }
    let input_len_share = circuit.num_inputs;
    if views.iter().any(|v| v.input_share.len() != input_len_share) {
        return None;
    }
    let mut w0: Vec<bool> = views[0].input_share.iter().collect();
    let mut w1: Vec<bool> = views[1].input_share.iter().collect();
    let mut and_idx = 0usize;
    for gate in &circuit.gates {
        match *gate {
            Gate::Const(c) => {
                w0.push(if e == 0 { c } else { false });
                w1.push(if (e + 1) % 3 == 0 { c } else { false });
            }
            Gate::Xor(a, b) => {
                w0.push(w0[a] ^ w0[b]);
                w1.push(w1[a] ^ w1[b]);
            }
            Gate::And(a, b) => {
                let z0 = (w0[a] & w0[b])
                    ^ (w1[a] & w0[b])
                    ^ (w0[a] & w1[b])
                    ^ tapes[0].bit(and_idx)
                    ^ tapes[1].bit(and_idx);
                if z0 != views[0].and_outputs.bit(and_idx) {
                    return None;
                }
                // Party e+1's share cannot be recomputed without the third
                // view; it is read from the committed view.
                let z1 = views[1].and_outputs.bit(and_idx);
                w0.push(z0);
                w1.push(z1);
                and_idx += 1;
            }
        }
    }
    Some((
        Bits::from_bools(circuit.outputs.iter().map(|&w| w0[w]).collect()),
        Bits::from_bools(circuit.outputs.iter().map(|&w| w1[w]).collect()),
    ))
}

fn commit_data(salt: &[u8; 32], view: &View) -> Vec<u8> {
    let mut data = salt.to_vec();
    data.extend_from_slice(&serde_json::to_vec(view).expect("serialize"));
    data
}

fn statement_digest(statement: &ZkStatement) -> [u8; 32] {
    ro_hash(
        "statement",
        &serde_json::to_vec(statement).expect("serialize"),
    )
}

/// Fiat–Shamir challenges, one trit per repetition.
fn derive_challenges(
    statement_dig: &[u8; 32],
    commitments: &[RepCommitments],
    reps: usize,
) -> Vec<u8> {
    let mut data = statement_dig.to_vec();
    data.extend_from_slice(&serde_json::to_vec(commitments).expect("serialize"));
    let seed = ro_hash("fs", &data);
    let mut out = Vec::with_capacity(reps);
    for rep in 0..reps {
        let mut ctr = 0u32;
        loop {
            let mut d = seed.to_vec();
            d.extend_from_slice(&(rep as u32).to_be_bytes());
            d.extend_from_slice(&ctr.to_be_bytes());
            let h = ro_hash("fs-rep", &d);
            // Rejection-sample an unbiased trit.
            if let Some(&b) = h.iter().find(|&&b| b < 252) {
                out.push(b % 3);
                break;
            }
            ctr += 1;
        }
    }
    out
}

pub fn prove(
    statement: &ZkStatement,
    witness: &ZkWitness,
    repetitions: usize,
    ro: &RandomOracle,
    rng: &mut (impl Rng + ?Sized),
) -> Result<NizkProof> {
    if repetitions == 0 {
        return Err(QotfError::Params("repetitions must be ≥ 1".into()));
    }
    if !relation_check(statement, witness)? {
        return Err(QotfError::Structural(
            "refusing to prove with an invalid witness".into(),
        ));
    }
    let circuit = statement.to_circuit()?;
    let input = witness.to_circuit_input();
    let st_dig = statement_digest(statement);
    ro.query("statement", &serde_json::to_vec(statement)?);

    let mut all_commitments = Vec::with_capacity(repetitions);
    let mut per_rep: Vec<([[u8; 32]; 3], [View; 3])> = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let share0 = Bits::random(input.len(), rng);
        let share1 = Bits::random(input.len(), rng);
        let share2 = input.xor(&share0).xor(&share1);
        let input_shares = [share0, share1, share2];
        let seeds: [[u8; 32]; 3] = std::array::from_fn(|_| {
            let mut s = [0u8; 32];
            rng.fill_bytes(&mut s);
            s
        });
        let tapes: [Bits; 3] =
            std::array::from_fn(|p| tape_bits(&seeds[p], circuit.and_count()));
        let (and_outputs, output_shares) = simulate(&circuit, &input_shares, &tapes);
        let views: [View; 3] = std::array::from_fn(|p| View {
            party: p as u8,
            input_share: input_shares[p].clone(),
            tape_seed_hex: hex::encode(seeds[p]),
            and_outputs: and_outputs[p].clone(),
        });
        let salts: [[u8; 32]; 3] = std::array::from_fn(|_| {
            let mut s = [0u8; 32];
            rng.fill_bytes(&mut s);
            s
        });
        let commitments: [[u8; 32]; 3] =
            std::array::from_fn(|p| ro.query("commit", &commit_data(&salts[p], &views[p])));
        all_commitments.push(RepCommitments {
            commitments: std::array::from_fn(|p| hex::encode(commitments[p])),
            output_shares: std::array::from_fn(|p| output_shares[p].to_string()),
        });
        per_rep.push((salts, views));
    }
    let challenges = derive_challenges(&st_dig, &all_commitments, repetitions);
    let openings = per_rep
        .iter()
        .zip(&challenges)
        .map(|((salts, views), &e)| {
            let e = e as usize;
            RepOpening {
                salts: [hex::encode(salts[e]), hex::encode(salts[(e + 1) % 3])],
                views: [views[e].clone(), views[(e + 1) % 3].clone()],
            }
        })
        .collect();
    Ok(NizkProof {
        commitments: all_commitments,
        challenges,
        openings,
    })
}

/// Deterministic verification; total (never errors on malformed content,
/// returns false instead), except for statements without a circuit.
pub fn verify(statement: &ZkStatement, proof: &NizkProof, _ro: &RandomOracle) -> Result<bool> {
    let circuit = statement.to_circuit()?;
    let reps = proof.commitments.len();
    if reps == 0
        || proof.challenges.len() != reps
        || proof.openings.len() != reps
    {
        return Ok(false);
    }
    let st_dig = statement_digest(statement);
    let expected = derive_challenges(&st_dig, &proof.commitments, reps);
    if expected != proof.challenges {
        return Ok(false);
    }
    for ((rep, opening), &e) in proof
        .commitments
        .iter()
        .zip(&proof.openings)
        .zip(&proof.challenges)
    {
        let e = e as usize;
        if opening.views[0].party as usize != e
            || opening.views[1].party as usize != (e + 1) % 3
        {
            return Ok(false);
        }
        for (j, view) in opening.views.iter().enumerate() {
            let Ok(salt_bytes) = strict_hex_decode(&opening.salts[j]) else {
                return Ok(false);
            };
            let Ok(salt) = <[u8; 32]>::try_from(salt_bytes) else {
                return Ok(false);
            };
            let recomputed = ro_hash("commit", &commit_data(&salt, view));
            if hex::encode(recomputed) != rep.commitments[(e + j) % 3] {
                return Ok(false);
            }
        }
        let Some((out_e, out_e1)) = replay_pair(&circuit, &opening.views) else {
            return Ok(false);
        };
        let shares: Vec<Bits> = match rep
            .output_shares
            .iter()
            .map(|s| Bits::parse(s))
            .collect::<std::result::Result<Vec<_>, _>>()
        {
            Ok(s) => s,
            Err(_) => return Ok(false),
        };
        if shares.iter().any(|s| s.len() != circuit.outputs.len()) {
            return Ok(false);
        }
        if shares[e] != out_e || shares[(e + 1) % 3] != out_e1 {
            return Ok(false);
        }
        let total = shares[0].xor(&shares[1]).xor(&shares[2]);
        if !total.iter().all(|b| b) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Witness extraction from a verifying proof plus the prover's RO query log.
/// Looks up the unopened commitment's preimage among the logged "commit"
/// queries; if any repetition yields three consistent views whose combined
/// input satisfies the relation, that witness is returned. Proofs whose
/// commitments never went through a logged oracle are out of model → None.
pub fn extract(
    statement: &ZkStatement,
    proof: &NizkProof,
    ro_query_log: &[(String, Vec<u8>)],
) -> Result<Option<ZkWitness>> {
    let mut by_hash: std::collections::HashMap<[u8; 32], &[u8]> =
        std::collections::HashMap::new();
    for (tag, data) in ro_query_log {
        if tag == "commit" {
            by_hash.insert(ro_hash(tag, data), data);
        }
    }
    for (rep, opening) in proof.commitments.iter().zip(&proof.openings) {
        let e = opening.views[0].party as usize;
        let unopened = (e + 2) % 3;
        let Ok(target) = strict_hex_decode(&rep.commitments[unopened]) else {
            continue;
        };
        let Ok(target) = <[u8; 32]>::try_from(target) else {
            continue;
        };
        let Some(data) = by_hash.get(&target) else {
            continue;
        };
        if data.len() <= 32 {
            continue;
        }
        let Ok(view) = serde_json::from_slice::<View>(&data[32..]) else {
            continue;
        };
        let input = opening.views[0]
            .input_share
            .xor(&opening.views[1].input_share)
            .xor(&view.input_share);
        let Ok(witness) = ZkWitness::from_circuit_input(statement, &input) else {
            continue;
        };
        if relation_check(statement, &witness)? {
            return Ok(Some(witness));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hashfam::{eval, gen, Profile};
    use crate::zk::StatementKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn instance(rng: &mut ChaCha8Rng) -> (ZkStatement, ZkWitness) {
        let key = gen(Profile::Toy, 5, None, rng).unwrap();
        let wl = key.witness_len();
        let mut parts: Vec<Bits> = (0..4)
            .map(|_| {
                let mut w = Bits::random(wl, rng);
                w.set(0, false);
                w
            })
            .collect();
        parts[1].set(0, true);
        let digests: Vec<(Bits, Bits)> = (0..2)
            .map(|c| {
                (
                    eval(&key, &Bits::from_bools(vec![false]).concat(&parts[2 * c])).unwrap(),
                    eval(&key, &Bits::from_bools(vec![true]).concat(&parts[2 * c + 1])).unwrap(),
                )
            })
            .collect();
        (
            ZkStatement {
                kind: StatementKind::BitOt,
                hash_key: key,
                digests,
                predicate: None,
            },
            ZkWitness {
                preimages: vec![
                    (parts[0].clone(), parts[1].clone()),
                    (parts[2].clone(), parts[3].clone()),
                ],
                measured_set: None,
                aux_witness: None,
            },
        )
    }

    #[test]
    fn completeness() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5 {
            let (st, w) = instance(&mut rng);
            let ro = RandomOracle::new();
            let proof = prove(&st, &w, 10, &ro, &mut rng).unwrap();
            assert!(verify(&st, &proof, &ro).unwrap());
        }
    }

    #[test]
    fn serialization_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (st, w) = instance(&mut rng);
        let ro = RandomOracle::new();
        let proof = prove(&st, &w, 5, &ro, &mut rng).unwrap();
        let bytes = proof.to_bytes();
        let back = NizkProof::from_bytes(&bytes).unwrap();
        assert_eq!(back, proof);
        assert!(verify(&st, &back, &ro).unwrap());
        assert!(!proof.to_debug_json().is_empty());
    }

    #[test]
    fn bit_flips_reject() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (st, w) = instance(&mut rng);
        let ro = RandomOracle::new();
        let proof = prove(&st, &w, 10, &ro, &mut rng).unwrap();
        let bytes = proof.to_bytes();
        for _ in 0..100 {
            let mut mutated = bytes.clone();
            let byte = rng.gen_range(0..mutated.len());
            let bit = rng.gen_range(0..8);
            mutated[byte] ^= 1 << bit;
            let accepted = match NizkProof::from_bytes(&mutated) {
                Ok(p) => verify(&st, &p, &ro).unwrap(),
                Err(_) => false,
            };
            assert!(!accepted, "mutation at byte {byte} bit {bit} accepted");
        }
    }

    #[test]
    fn invalid_witness_refused() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (st, mut w) = instance(&mut rng);
        w.preimages[0].0.flip(1);
        let ro = RandomOracle::new();
        assert!(matches!(
            prove(&st, &w, 5, &ro, &mut rng),
            Err(QotfError::Structural(_))
        ));
    }

    #[test]
    fn extractor_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (st, w) = instance(&mut rng);
        let ro = RandomOracle::new();
        let proof = prove(&st, &w, 10, &ro, &mut rng).unwrap();
        let extracted = extract(&st, &proof, &ro.query_log()).unwrap().unwrap();
        assert!(relation_check(&st, &extracted).unwrap());
        // Extraction without the log is out of model.
        assert_eq!(extract(&st, &proof, &[]).unwrap(), None);
    }

    #[test]
    fn wrong_statement_rejects() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (st, w) = instance(&mut rng);
        let (st2, _) = instance(&mut rng);
        let ro = RandomOracle::new();
        let proof = prove(&st, &w, 10, &ro, &mut rng).unwrap();
        assert!(!verify(&st2, &proof, &ro).unwrap());
    }
}
