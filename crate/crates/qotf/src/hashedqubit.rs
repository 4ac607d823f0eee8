//! Hashed-qubit blocks: a data qubit entangled with a witness register whose
//! branches hash to published digests. The sender's classical secrets stay in
//! [`BlockSecrets`]; the verifier's check-and-shrink procedure reduces a
//! received block to a single residual qubit.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use qsim::{measure_computational, measure_hadamard_register, Bits, RegisterLayout, SparseState};

use crate::error::{QotfError, Result};
use crate::hashfam::{eval, HashKey};

pub const DATA_REG: &str = "d";
pub const WITNESS_REG: &str = "w";
const FLAG_REG: &str = "f";

/// One block as Bob receives it: the two digests plus the quantum part on
/// registers `d` (1 qubit) and `w` (witness_len qubits).
#[derive(Clone, Debug)]
pub struct HashedQubitBlock {
    pub index: usize,
    pub digests: (Bits, Bits),
    pub state: SparseState,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockMode {
    /// (|0⟩|w_0⟩ + (−1)^r |1⟩|w_1⟩)/√2 — both witnesses clean.
    Superposed { r: bool },
    /// |l⟩|w_l⟩ — the off-branch digest is a dummy (flag bit 1).
    Collapsed { l: bool },
}

/// Alice's classical record of a block.
#[derive(Clone, Debug)]
pub struct BlockSecrets {
    pub mode: BlockMode,
    pub w0: Bits,
    pub w1: Bits,
}

impl BlockSecrets {
    pub fn w(&self, d: bool) -> &Bits {
        if d {
            &self.w1
        } else {
            &self.w0
        }
    }
}

pub fn block_layout(witness_len: usize) -> RegisterLayout {
    RegisterLayout::new(vec![
        (DATA_REG.to_string(), 1),
        (WITNESS_REG.to_string(), witness_len),
    ])
    .expect("fixed block layout")
}

fn clean_witness<R: Rng + ?Sized>(wl: usize, rng: &mut R) -> Bits {
    let mut w = Bits::random(wl, rng);
    w.set(0, false);
    w
}

fn dummy_witness<R: Rng + ?Sized>(wl: usize, rng: &mut R) -> Bits {
    let mut w = Bits::random(wl, rng);
    w.set(0, true);
    w
}

/// Sample a fresh block. Both modes publish exactly two digests of identical
/// shape, so the classical message does not betray the mode.
pub fn sample_block<R: Rng + ?Sized>(
    mode: BlockMode,
    index: usize,
    key: &HashKey,
    rng: &mut R,
) -> Result<(HashedQubitBlock, BlockSecrets)> {
    let wl = key.witness_len();
    let (w0, w1) = match mode {
        BlockMode::Superposed { .. } => (clean_witness(wl, rng), clean_witness(wl, rng)),
        BlockMode::Collapsed { l } => {
            if l {
                (dummy_witness(wl, rng), clean_witness(wl, rng))
            } else {
                (clean_witness(wl, rng), dummy_witness(wl, rng))
            }
        }
    };
    let h0 = eval(key, &Bits::from_bools(vec![false]).concat(&w0))?;
    let h1 = eval(key, &Bits::from_bools(vec![true]).concat(&w1))?;
    let layout = block_layout(wl);
    let state = match mode {
        BlockMode::Superposed { r } => {
            let a = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
            SparseState::from_amplitudes(
                layout,
                vec![
                    (Bits::from_bools(vec![false]).concat(&w0), a),
                    (
                        Bits::from_bools(vec![true]).concat(&w1),
                        if r { -a } else { a },
                    ),
                ],
            )?
        }
        BlockMode::Collapsed { l } => {
            let w = if l { &w1 } else { &w0 };
            SparseState::basis(layout, Bits::from_bools(vec![l]).concat(w))?
        }
    };
    Ok((
        HashedQubitBlock {
            index,
            digests: (h0, h1),
            state,
        },
        BlockSecrets { mode, w0, w1 },
    ))
}

/// Result of the verifier's per-block procedure.
#[derive(Clone, Debug)]
pub struct ShrinkOutcome {
    pub pass: bool,
    /// Hadamard-basis outcome on the witness register (present iff pass).
    pub s: Option<Bits>,
    /// The residual data qubit (register `d`), present iff pass.
    pub residual: Option<SparseState>,
}

/// Bob's check-and-shrink: XOR the membership bit
/// `[w[1] ≠ 1 ∧ eval(d ‖ w) ∈ {h_0, h_1}]` into a fresh flag qubit, measure
/// it (strictly before anything else), and on flag = 1 Hadamard-measure the
/// witness register, leaving the lone residual data qubit. Flag = 0 is the
/// abort path: the block's registers are discarded.
pub fn verify_and_shrink<R: Rng + ?Sized>(
    block: &HashedQubitBlock,
    key: &HashKey,
    rng: &mut R,
) -> Result<ShrinkOutcome> {
    let wl = key.witness_len();
    if block.state.layout() != &block_layout(wl) {
        return Err(QotfError::Structural("unexpected block layout".into()));
    }
    if block.digests.0.len() != key.output_len || block.digests.1.len() != key.output_len {
        return Err(QotfError::Structural("digest length mismatch".into()));
    }
    let flag = SparseState::zero(RegisterLayout::single(FLAG_REG, 1)?);
    let joint = block.state.tensor(&flag)?;
    let (h0, h1) = (block.digests.0.clone(), block.digests.1.clone());
    let key_cl = key.clone();
    let oracle = move |x: &Bits| -> Bits {
        let clean = !x.bit(1);
        let digest = eval(&key_cl, x).expect("length fixed by layout");
        Bits::from_bools(vec![clean && (digest == h0 || digest == h1)])
    };
    let checked = joint.apply_classical_oracle(&[DATA_REG, WITNESS_REG], FLAG_REG, oracle)?;
    let (record, collapsed) = measure_computational(&checked, FLAG_REG, rng)?;
    if !record.outcome.bit(0) {
        return Ok(ShrinkOutcome {
            pass: false,
            s: None,
            residual: None,
        });
    }
    let kept = collapsed.drop_register(FLAG_REG)?;
    let (s_record, residual) = measure_hadamard_register(&kept, WITNESS_REG, rng)?;
    Ok(ShrinkOutcome {
        pass: true,
        s: Some(s_record.outcome),
        residual: Some(residual),
    })
}

/// Alice's phase correction: α ⊕ z with α = r ⊕ ⟨s, w_0 ⊕ w_1⟩.
pub fn decode_phase(secrets: &BlockSecrets, s: &Bits, z: bool) -> Result<bool> {
    let BlockMode::Superposed { r } = secrets.mode else {
        return Err(QotfError::Structural(
            "decode_phase applies only to superposed blocks".into(),
        ));
    };
    if s.len() != secrets.w0.len() {
        return Err(QotfError::Structural("s length mismatch".into()));
    }
    Ok(r ^ s.dot(&secrets.w0.xor(&secrets.w1)) ^ z)
}

/// Bob's read-out of a residual qubit: apply Z^m, then measure in the
/// Hadamard basis (outcome z).
pub fn rotate_and_read<R: Rng + ?Sized>(
    residual: &SparseState,
    m: bool,
    rng: &mut R,
) -> Result<bool> {
    let rotated = residual.apply_z(DATA_REG, 1, m)?;
    let (rec, _) = measure_hadamard_register(&rotated, DATA_REG, rng)?;
    Ok(rec.outcome.bit(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hashfam::{gen, Profile};
    use qsim::DensityMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn honest_blocks_pass_and_residuals_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for wl in [4usize, 8, 16, 64, 160] {
            let profile = if wl <= 16 { Profile::Toy } else { Profile::Demo };
            let key = gen(profile, wl, None, &mut rng).unwrap();
            for trial in 0..40 {
                let mode = if trial % 2 == 0 {
                    BlockMode::Superposed {
                        r: rng.gen_bool(0.5),
                    }
                } else {
                    BlockMode::Collapsed {
                        l: rng.gen_bool(0.5),
                    }
                };
                let (block, secrets) = sample_block(mode, 1, &key, &mut rng).unwrap();
                let out = verify_and_shrink(&block, &key, &mut rng).unwrap();
                assert!(out.pass, "wl={wl} trial={trial}");
                let s = out.s.unwrap();
                let residual = out.residual.unwrap();
                match mode {
                    BlockMode::Superposed { r } => {
                        let alpha = r ^ s.dot(&secrets.w0.xor(&secrets.w1));
                        let expected = SparseState::zero(RegisterLayout::single(DATA_REG, 1).unwrap())
                            .apply_h(DATA_REG, 1)
                            .unwrap()
                            .apply_z(DATA_REG, 1, alpha)
                            .unwrap();
                        assert!(residual.approx_eq_global_phase(&expected, 1e-9));
                    }
                    BlockMode::Collapsed { l } => {
                        let expected = SparseState::basis(
                            RegisterLayout::single(DATA_REG, 1).unwrap(),
                            Bits::from_bools(vec![l]),
                        )
                        .unwrap();
                        assert!(residual.approx_eq_global_phase(&expected, 1e-9));
                    }
                }
            }
        }
    }

    #[test]
    fn end_to_end_phase_decoding() {
        // Z^m before the Hadamard read-out always decodes to m.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let key = gen(Profile::Toy, 8, None, &mut rng).unwrap();
        for _ in 0..100 {
            let r = rng.gen_bool(0.5);
            let m = rng.gen_bool(0.5);
            let (block, secrets) =
                sample_block(BlockMode::Superposed { r }, 1, &key, &mut rng).unwrap();
            let out = verify_and_shrink(&block, &key, &mut rng).unwrap();
            let z = rotate_and_read(out.residual.as_ref().unwrap(), m, &mut rng).unwrap();
            assert_eq!(decode_phase(&secrets, &out.s.unwrap(), z).unwrap(), m);
        }
    }

    #[test]
    fn trivial_decode_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let key = gen(Profile::Toy, 8, None, &mut rng).unwrap();
        let (_, secrets) =
            sample_block(BlockMode::Superposed { r: true }, 1, &key, &mut rng).unwrap();
        // s = 0…0 → decode = r ⊕ z.
        let zeros = Bits::zeros(8);
        assert_eq!(decode_phase(&secrets, &zeros, false).unwrap(), true);
        assert_eq!(decode_phase(&secrets, &zeros, true).unwrap(), false);
        // Collapsed mode has nothing to decode.
        let (_, collapsed) =
            sample_block(BlockMode::Collapsed { l: false }, 1, &key, &mut rng).unwrap();
        assert!(decode_phase(&collapsed, &zeros, false).is_err());
    }

    #[test]
    fn collapsed_block_readout_is_uniform_and_independent_of_m() {
        // The residual of a collapsed block is diagonal; the Hadamard
        // read-out z is a fresh coin whatever rotation Bob applies.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let key = gen(Profile::Toy, 8, None, &mut rng).unwrap();
        let (block, _) = sample_block(BlockMode::Collapsed { l: true }, 1, &key, &mut rng).unwrap();
        let out = verify_and_shrink(&block, &key, &mut rng).unwrap();
        let residual = out.residual.unwrap();
        let dm = DensityMatrix::pure(&residual).unwrap();
        assert!(dm.matrix()[(0, 1)].norm() < 1e-12);
        assert!(dm.matrix()[(1, 0)].norm() < 1e-12);
        // Exact: for a basis-state residual, P(z = 0) = 1/2 under either m.
        for m in [false, true] {
            let rotated = residual.apply_z(DATA_REG, 1, m).unwrap();
            let (p0, _) =
                qsim::project_hadamard(&rotated, DATA_REG, &Bits::from_bools(vec![false])).unwrap();
            assert!((p0 - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn digest_shapes_identical_across_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let key = gen(Profile::Toy, 8, None, &mut rng).unwrap();
        let (sup, _) =
            sample_block(BlockMode::Superposed { r: false }, 1, &key, &mut rng).unwrap();
        let (col, _) = sample_block(BlockMode::Collapsed { l: false }, 1, &key, &mut rng).unwrap();
        assert_eq!(sup.digests.0.len(), col.digests.0.len());
        assert_eq!(sup.digests.1.len(), col.digests.1.len());
        assert_eq!(sup.state.layout(), col.state.layout());
    }

    #[test]
    fn adversarial_dual_support_passes_half_and_collapses() {
        // |0⟩|w_0⟩ + |1⟩|w'⟩ with w' a dummy: the membership bit fires only
        // on the clean branch, so pass probability is 1/2 and the
        // conditional residual is exactly |0⟩.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let key = gen(Profile::Toy, 8, None, &mut rng).unwrap();
        let wl = key.witness_len();
        let mut passes = 0usize;
        let trials = 400;
        for _ in 0..trials {
            let w0 = clean_witness(wl, &mut rng);
            let wd = dummy_witness(wl, &mut rng);
            let h0 = eval(&key, &Bits::from_bools(vec![false]).concat(&w0)).unwrap();
            let h1 = eval(&key, &Bits::from_bools(vec![true]).concat(&wd)).unwrap();
            let a = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
            let state = SparseState::from_amplitudes(
                block_layout(wl),
                vec![
                    (Bits::from_bools(vec![false]).concat(&w0), a),
                    (Bits::from_bools(vec![true]).concat(&wd), a),
                ],
            )
            .unwrap();
            let block = HashedQubitBlock {
                index: 1,
                digests: (h0, h1),
                state,
            };
            let out = verify_and_shrink(&block, &key, &mut rng).unwrap();
            if out.pass {
                passes += 1;
                let expected = SparseState::basis(
                    RegisterLayout::single(DATA_REG, 1).unwrap(),
                    Bits::from_bools(vec![false]),
                )
                .unwrap();
                assert!(out
                    .residual
                    .unwrap()
                    .approx_eq_global_phase(&expected, 1e-9));
            }
        }
        let rate = passes as f64 / trials as f64;
        assert!((rate - 0.5).abs() < 0.08, "pass rate {rate}");
    }
}
