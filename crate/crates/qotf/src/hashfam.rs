//! The keyed hash family h_k and its distribution functionality.
//!
//! Two profiles:
//!   * `demo` — a keyed compression built on SHA-256 with counter-mode output
//!     expansion; output defaults to 2·witness_len bits. Not brute-forceable.
//!   * `toy` — a 3-round substitution–permutation network over at most 24
//!     input bits. Every preimage question about it can be answered by
//!     exhaustive search, which is exactly what the test oracles and the
//!     zero-knowledge circuit need. Output length is configurable to toggle
//!     between injective (≥ input_len) and compressing regimes.
//!
//! Inputs are bit strings d ‖ w of length input_len = 1 + witness_len, where
//! w = flag ‖ tail and the flag bit marks a dummy preimage.

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use qsim::Bits;

use crate::channel::{Channel, Frame, FrameType};
use crate::error::{QotfError, Result};

pub const TOY_MAX_INPUT_LEN: usize = 24;

/// PRESENT cipher S-box; any 4-bit permutation works here.
pub const SBOX: [u8; 16] = [
    0xC, 0x5, 0x6, 0xB, 0x9, 0x0, 0xA, 0xD, 0x3, 0xE, 0xF, 0x8, 0x4, 0x7, 0x1, 0x2,
];

pub const TOY_ROUNDS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Demo,
    Toy,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "KeyWire", into = "KeyWire")]
pub struct HashKey {
    pub profile: Profile,
    pub input_len: usize,
    pub output_len: usize,
    pub key_bytes: Vec<u8>,
}

impl HashKey {
    pub fn witness_len(&self) -> usize {
        self.input_len - 1
    }

    /// Decidable membership check "k ∈ K".
    pub fn is_valid(&self) -> bool {
        self.key_bytes.len() == 32
            && self.input_len >= 2
            && self.output_len >= 1
            && (self.profile != Profile::Toy || self.input_len <= TOY_MAX_INPUT_LEN)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&KeyWire {
            profile: self.profile,
            input_len: self.input_len,
            output_len: self.output_len,
            key_hex: hex::encode(&self.key_bytes),
        })
        .expect("key serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<HashKey> {
        let w: KeyWire = serde_json::from_str(s)?;
        let key_bytes = hex::decode(&w.key_hex).map_err(|e| QotfError::Serde(e.to_string()))?;
        Ok(HashKey {
            profile: w.profile,
            input_len: w.input_len,
            output_len: w.output_len,
            key_bytes,
        })
    }
}

#[derive(Clone, Serialize, Deserialize)]
struct KeyWire {
    profile: Profile,
    input_len: usize,
    output_len: usize,
    key_hex: String,
}

impl From<HashKey> for KeyWire {
    fn from(k: HashKey) -> KeyWire {
        KeyWire {
            profile: k.profile,
            input_len: k.input_len,
            output_len: k.output_len,
            key_hex: hex::encode(&k.key_bytes),
        }
    }
}

impl TryFrom<KeyWire> for HashKey {
    type Error = String;
    fn try_from(w: KeyWire) -> std::result::Result<HashKey, String> {
        Ok(HashKey {
            profile: w.profile,
            input_len: w.input_len,
            output_len: w.output_len,
            key_bytes: hex::decode(&w.key_hex).map_err(|e| e.to_string())?,
        })
    }
}

/// A structured preimage d ‖ w with w = flag ‖ tail.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Preimage {
    pub data_bit: bool,
    pub flag_bit: bool,
    pub tail: Bits,
}

impl Preimage {
    pub fn to_bits(&self) -> Bits {
        let mut head = Bits::from_bools(vec![self.data_bit, self.flag_bit]);
        head = head.concat(&self.tail);
        head
    }

    /// The witness part w = flag ‖ tail.
    pub fn witness_bits(&self) -> Bits {
        Bits::from_bools(vec![self.flag_bit]).concat(&self.tail)
    }

    pub fn from_bits(x: &Bits) -> Result<Preimage> {
        if x.len() < 2 {
            return Err(QotfError::Structural("preimage shorter than 2 bits".into()));
        }
        Ok(Preimage {
            data_bit: x.bit(0),
            flag_bit: x.bit(1),
            tail: x.slice(2, x.len() - 2),
        })
    }
}

/// Sample a key. `output_len` defaults to 2·witness_len for demo and to
/// witness_len (compressing by one bit) for toy.
pub fn gen<R: Rng + ?Sized>(
    profile: Profile,
    witness_len: usize,
    output_len: Option<usize>,
    rng: &mut R,
) -> Result<HashKey> {
    if witness_len < 1 {
        return Err(QotfError::Params("witness_len must be ≥ 1".into()));
    }
    let input_len = 1 + witness_len;
    if profile == Profile::Toy && input_len > TOY_MAX_INPUT_LEN {
        return Err(QotfError::Params(format!(
            "toy profile limited to input_len ≤ {TOY_MAX_INPUT_LEN}, got {input_len}"
        )));
    }
    let output_len = output_len.unwrap_or(match profile {
        Profile::Demo => 2 * witness_len,
        Profile::Toy => witness_len,
    });
    if output_len == 0 {
        return Err(QotfError::Params("output_len must be ≥ 1".into()));
    }
    let mut key_bytes = vec![0u8; 32];
    rng.fill_bytes(&mut key_bytes);
    Ok(HashKey {
        profile,
        input_len,
        output_len,
        key_bytes,
    })
}

fn bits_to_bytes(bits: &Bits) -> Vec<u8> {
    let mut out = vec![0u8; (bits.len() + 7) / 8];
    for i in 0..bits.len() {
        if bits.bit(i) {
            out[i / 8] |= 1 << (7 - i % 8);
        }
    }
    out
}

fn bytes_to_bits(bytes: &[u8], len: usize) -> Bits {
    Bits::from_bools((0..len).map(|i| bytes[i / 8] >> (7 - i % 8) & 1 == 1).collect())
}

/// Round keys (TOY_ROUNDS + 1 of them) and, when the output is longer than
/// the permutation width, the constant pad bits — all derived from the key.
pub fn toy_round_keys(key: &HashKey) -> Vec<Bits> {
    (0..=TOY_ROUNDS)
        .map(|r| {
            let mut h = Sha256::new();
            h.update(&key.key_bytes);
            h.update(b"toy-round-key");
            h.update([r as u8]);
            bytes_to_bits(&h.finalize(), key.input_len)
        })
        .collect()
}

pub fn toy_pad_bits(key: &HashKey) -> Bits {
    if key.output_len <= key.input_len {
        return Bits::zeros(0);
    }
    let extra = key.output_len - key.input_len;
    let mut h = Sha256::new();
    h.update(&key.key_bytes);
    h.update(b"toy-pad");
    let mut stream = Vec::new();
    let mut ctr = 0u8;
    while stream.len() * 8 < extra {
        let mut h2 = h.clone();
        h2.update([ctr]);
        stream.extend_from_slice(&h2.finalize());
        ctr += 1;
    }
    bytes_to_bits(&stream, extra)
}

/// Rotation amount of the toy permutation for a given width.
pub fn toy_rotation(width: usize) -> usize {
    let r = 7 % width;
    if r == 0 {
        1
    } else {
        r
    }
}

fn toy_eval(key: &HashKey, x: &Bits) -> Bits {
    let width = key.input_len;
    let rks = toy_round_keys(key);
    let rot = toy_rotation(width);
    let mut state = x.clone();
    for rk in rks.iter().take(TOY_ROUNDS) {
        state = state.xor(rk);
        // S-box on each full nibble; trailing bits (width mod 4) untouched.
        for nib in 0..width / 4 {
            let v = state.slice(4 * nib, 4).to_index();
            let s = Bits::from_index(SBOX[v] as usize, 4);
            for j in 0..4 {
                state.set(4 * nib + j, s.bit(j));
            }
        }
        // Rotate left.
        let rotated: Vec<bool> = (0..width).map(|i| state.bit((i + rot) % width)).collect();
        state = Bits::from_bools(rotated);
    }
    state = state.xor(&rks[TOY_ROUNDS]);
    if key.output_len <= width {
        state.slice(0, key.output_len)
    } else {
        state.concat(&toy_pad_bits(key))
    }
}

fn demo_eval(key: &HashKey, x: &Bits) -> Bits {
    let packed = bits_to_bytes(x);
    let mut stream = Vec::new();
    let mut ctr = 0u32;
    while stream.len() * 8 < key.output_len {
        let mut h = Sha256::new();
        h.update(&key.key_bytes);
        h.update(b"demo-eval");
        h.update((x.len() as u64).to_be_bytes());
        h.update(&packed);
        h.update(ctr.to_be_bytes());
        stream.extend_from_slice(&h.finalize());
        ctr += 1;
    }
    bytes_to_bits(&stream, key.output_len)
}

/// The digest h_k(x). Pure in (key, x).
pub fn eval(key: &HashKey, x: &Bits) -> Result<Bits> {
    if x.len() != key.input_len {
        return Err(QotfError::Params(format!(
            "input of {} bits does not match input_len {}",
            x.len(),
            key.input_len
        )));
    }
    Ok(match key.profile {
        Profile::Demo => demo_eval(key, x),
        Profile::Toy => toy_eval(key, x),
    })
}

/// Exhaustive collision search over the full toy domain.
pub fn find_collision_bruteforce(key: &HashKey) -> Result<Option<(Bits, Bits)>> {
    if key.profile != Profile::Toy {
        return Err(QotfError::Capability(
            "brute-force search requires the toy profile".into(),
        ));
    }
    let mut seen: std::collections::HashMap<Bits, Bits> = std::collections::HashMap::new();
    for idx in 0..(1usize << key.input_len) {
        let x = Bits::from_index(idx, key.input_len);
        let d = eval(key, &x)?;
        if let Some(prev) = seen.get(&d) {
            return Ok(Some((prev.clone(), x)));
        }
        seen.insert(d, x);
    }
    Ok(None)
}

/// All preimages of `digest` over the full toy domain.
pub fn preimages_bruteforce(key: &HashKey, digest: &Bits) -> Result<Vec<Bits>> {
    if key.profile != Profile::Toy {
        return Err(QotfError::Capability(
            "brute-force search requires the toy profile".into(),
        ));
    }
    let mut out = Vec::new();
    for idx in 0..(1usize << key.input_len) {
        let x = Bits::from_index(idx, key.input_len);
        if &eval(key, &x)? == digest {
            out.push(x);
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FhMode {
    Crs,
    Plain,
}

/// Derive the CRS-mode key deterministically from the shared seed.
pub fn key_from_crs(
    profile: Profile,
    witness_len: usize,
    output_len: Option<usize>,
    crs_seed: &[u8; 32],
) -> Result<HashKey> {
    use rand::SeedableRng;
    let mut h = Sha256::new();
    h.update(b"qotf-crs-hash-key");
    h.update(crs_seed);
    let seed: [u8; 32] = h.finalize().into();
    let mut rng = rand_chacha::ChaCha8Rng::from_seed(seed);
    gen(profile, witness_len, output_len, &mut rng)
}

/// The F_h distribution step. In CRS mode both parties derive the key locally
/// from the shared seed (zero messages). In plain mode the party with
/// `samples_key` set draws the key and sends it; the peer validates k ∈ K and
/// that the parameters match the session, aborting otherwise.
pub fn f_h_distribute<R: Rng + ?Sized>(
    mode: FhMode,
    samples_key: bool,
    profile: Profile,
    witness_len: usize,
    output_len: Option<usize>,
    crs_seed: &[u8; 32],
    channel: &mut dyn Channel,
    rng: &mut R,
) -> Result<HashKey> {
    match mode {
        FhMode::Crs => key_from_crs(profile, witness_len, output_len, crs_seed),
        FhMode::Plain => {
            if samples_key {
                let key = gen(profile, witness_len, output_len, rng)?;
                channel.send(Frame::new(
                    FrameType::HashKey,
                    key.to_json().into_bytes(),
                ))?;
                Ok(key)
            } else {
                let frame = channel.recv()?;
                if frame.frame_type != FrameType::HashKey {
                    return Err(QotfError::abort("f_h", "expected a hash-key message"));
                }
                let key = HashKey::from_json(
                    std::str::from_utf8(&frame.payload)
                        .map_err(|_| QotfError::Malformed("non-utf8 key frame".into()))?,
                )?;
                let expected_output =
                    output_len.unwrap_or(match profile {
                        Profile::Demo => 2 * witness_len,
                        Profile::Toy => witness_len,
                    });
                if !key.is_valid()
                    || key.profile != profile
                    || key.input_len != 1 + witness_len
                    || key.output_len != expected_output
                {
                    return Err(QotfError::abort("f_h", "received key is not in K"));
                }
                Ok(key)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gen_parameter_plumbing() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k = gen(Profile::Toy, 16, None, &mut rng).unwrap();
        assert_eq!(k.input_len, 17);
        assert_eq!(k.output_len, 16);
        let k = gen(Profile::Demo, 160, None, &mut rng).unwrap();
        assert_eq!(k.input_len, 161);
        assert_eq!(k.output_len, 320);
        assert!(gen(Profile::Toy, 24, None, &mut rng).is_err());
    }

    #[test]
    fn gen_is_deterministic_per_seed() {
        let k1 = gen(Profile::Toy, 8, None, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let k2 = gen(Profile::Toy, 8, None, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(k1, k2);
    }

    #[test]
    fn eval_is_pure_and_length_checked() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for profile in [Profile::Toy, Profile::Demo] {
            let k = gen(profile, 8, None, &mut rng).unwrap();
            let x = Bits::random(k.input_len, &mut rng);
            let d1 = eval(&k, &x).unwrap();
            let d2 = eval(&k, &x).unwrap();
            assert_eq!(d1, d2);
            assert_eq!(d1.len(), k.output_len);
            assert!(eval(&k, &Bits::zeros(k.input_len + 1)).is_err());
        }
    }

    #[test]
    fn injective_toy_instance_has_no_collision() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // output_len = input_len: truncation of a permutation, injective.
        let k = gen(Profile::Toy, 9, Some(10), &mut rng).unwrap();
        assert_eq!(find_collision_bruteforce(&k).unwrap(), None);
        // Wider than input: constant padding keeps injectivity.
        let k = gen(Profile::Toy, 9, Some(14), &mut rng).unwrap();
        assert_eq!(find_collision_bruteforce(&k).unwrap(), None);
    }

    #[test]
    fn compressing_toy_instance_has_collision() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let k = gen(Profile::Toy, 9, Some(8), &mut rng).unwrap();
        let (x, y) = find_collision_bruteforce(&k).unwrap().expect("pigeonhole");
        assert_ne!(x, y);
        assert_eq!(eval(&k, &x).unwrap(), eval(&k, &y).unwrap());
    }

    #[test]
    fn bruteforce_preimages_are_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let k = gen(Profile::Toy, 7, Some(6), &mut rng).unwrap();
        let x = Bits::random(k.input_len, &mut rng);
        let d = eval(&k, &x).unwrap();
        let pre = preimages_bruteforce(&k, &d).unwrap();
        assert!(pre.contains(&x));
        for p in &pre {
            assert_eq!(eval(&k, p).unwrap(), d);
        }
    }

    #[test]
    fn demo_profile_refuses_bruteforce() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let k = gen(Profile::Demo, 8, None, &mut rng).unwrap();
        assert!(matches!(
            find_collision_bruteforce(&k),
            Err(QotfError::Capability(_))
        ));
    }

    #[test]
    fn key_json_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let k = gen(Profile::Demo, 64, None, &mut rng).unwrap();
        let j = k.to_json();
        assert_eq!(HashKey::from_json(&j).unwrap(), k);
    }

    #[test]
    fn crs_mode_agrees_without_messages() {
        let seed = [7u8; 32];
        let (mut a, mut b) = crate::channel::mem_pair();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let ka = f_h_distribute(
            FhMode::Crs, false, Profile::Toy, 8, None, &seed, &mut a, &mut rng,
        )
        .unwrap();
        let kb = f_h_distribute(
            FhMode::Crs, true, Profile::Toy, 8, None, &seed, &mut b, &mut rng,
        )
        .unwrap();
        assert_eq!(ka, kb);
    }

    #[test]
    fn plain_mode_sends_one_message_and_validates() {
        let seed = [0u8; 32];
        let (mut a, mut b) = crate::channel::mem_pair();
        let sender = std::thread::spawn(move || {
            let mut rng = ChaCha8Rng::seed_from_u64(10);
            f_h_distribute(
                FhMode::Plain, true, Profile::Toy, 8, None, &seed, &mut b, &mut rng,
            )
            .unwrap()
        });
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ka = f_h_distribute(
            FhMode::Plain, false, Profile::Toy, 8, None, &seed, &mut a, &mut rng,
        )
        .unwrap();
        let kb = sender.join().unwrap();
        assert_eq!(ka, kb);
    }

    #[test]
    fn plain_mode_rejects_wrong_parameters() {
        let seed = [0u8; 32];
        let (mut a, mut b) = crate::channel::mem_pair();
        // Peer sends a key with mismatched witness_len.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let bad = gen(Profile::Toy, 9, None, &mut rng).unwrap();
        b.send(Frame::new(FrameType::HashKey, bad.to_json().into_bytes()))
            .unwrap();
        let err = f_h_distribute(
            FhMode::Plain, false, Profile::Toy, 8, None, &seed, &mut a, &mut rng,
        )
        .unwrap_err();
        assert!(err.is_abort());
    }

    #[test]
    fn second_bit_balance_sanity() {
        // No linear functional of the digest should predict the flag bit with
        // large advantage on random inputs. Soft sanity check: examine each
        // single digest bit as a predictor.
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let k = gen(Profile::Toy, 11, None, &mut rng).unwrap();
        let per_flag = 4096;
        let mut counts = vec![[0usize; 2]; k.output_len];
        for flag in [false, true] {
            for _ in 0..per_flag {
                let mut x = Bits::random(k.input_len, &mut rng);
                x.set(1, flag);
                let d = eval(&k, &x).unwrap();
                for (j, c) in counts.iter_mut().enumerate() {
                    if d.bit(j) {
                        c[flag as usize] += 1;
                    }
                }
            }
        }
        for c in counts {
            let adv = (c[0] as f64 - c[1] as f64).abs() / per_flag as f64;
            assert!(adv < 0.1, "digest bit predicts flag with advantage {adv}");
        }
    }
}
