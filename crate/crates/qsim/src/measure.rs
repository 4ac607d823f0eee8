//! Measurements on sparse states.
//!
//! Computational-basis measurements collapse the support directly. For
//! Hadamard-basis measurements of a whole register the naive approach would
//! enumerate 2^k outcomes; instead we exploit that a sparse state restricted
//! to a register is supported on finitely many strings, so the outcome
//! distribution is uniform over cosets of the GF(2) span of their pairwise
//! differences. Sampling reduces to choosing one of 2^rank sign patterns and
//! then solving a small linear system.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bits::{gf2_basis, sample_solution, Bits};
use crate::error::{QsimError, Result};
use crate::state::SparseState;
use crate::tol;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Basis {
    Computational,
    Hadamard,
    Bell,
}

/// Outcome of a single measurement, with the Born probability of the branch
/// that was taken.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub register: String,
    pub basis: Basis,
    pub outcome: Bits,
    pub probability: f64,
}

/// Distinct computational-basis values of `register` over the support, with
/// their probabilities.
pub fn computational_distribution(
    state: &SparseState,
    register: &str,
) -> Result<Vec<(Bits, f64)>> {
    let off = state.layout().offset_of(register)?;
    let w = state.layout().width_of(register)?;
    let mut dist: std::collections::BTreeMap<Bits, f64> = std::collections::BTreeMap::new();
    for (bits, amp) in state.amplitudes() {
        *dist.entry(bits.slice(off, w)).or_insert(0.0) += amp.norm_sqr();
    }
    Ok(dist.into_iter().collect())
}

/// Project `register` onto the basis value `outcome`. Returns the Born
/// probability and, when it is nonzero, the renormalized post-measurement
/// state. The register is kept (collapsed) in the result.
pub fn project_computational(
    state: &SparseState,
    register: &str,
    outcome: &Bits,
) -> Result<(f64, Option<SparseState>)> {
    let off = state.layout().offset_of(register)?;
    let w = state.layout().width_of(register)?;
    if outcome.len() != w {
        return Err(QsimError::BasisLengthMismatch {
            got: outcome.len(),
            want: w,
        });
    }
    let entries: Vec<(Bits, Complex64)> = state
        .amplitudes()
        .filter(|(bits, _)| &bits.slice(off, w) == outcome)
        .map(|(b, a)| (b.clone(), *a))
        .collect();
    let prob: f64 = entries.iter().map(|(_, a)| a.norm_sqr()).sum();
    if prob < tol::PRUNE {
        return Ok((0.0, None));
    }
    let post = SparseState::from_amplitudes(state.layout().clone(), entries)?;
    Ok((prob, Some(post)))
}

/// Sample a computational-basis measurement of `register`. Non-destructive:
/// the register stays in the layout, collapsed to the outcome.
pub fn measure_computational<R: Rng + ?Sized>(
    state: &SparseState,
    register: &str,
    rng: &mut R,
) -> Result<(MeasurementRecord, SparseState)> {
    let dist = computational_distribution(state, register)?;
    let mut roll = rng.gen::<f64>();
    let mut chosen = dist.last().expect("nonempty support").clone();
    for (outcome, p) in &dist {
        if roll < *p {
            chosen = (outcome.clone(), *p);
            break;
        }
        roll -= p;
    }
    let (prob, post) = project_computational(state, register, &chosen.0)?;
    Ok((
        MeasurementRecord {
            register: register.to_string(),
            basis: Basis::Computational,
            outcome: chosen.0,
            probability: prob,
        },
        post.expect("sampled outcome has positive probability"),
    ))
}

/// Decomposition of the support by register value, for the Hadamard-basis
/// coset analysis: `reg_vals[i]` and, for each remaining string y, the list of
/// (support index, amplitude) pairs that share y.
struct RegisterSplit {
    reg_vals: Vec<Bits>,
    groups: Vec<(Bits, Vec<(usize, Complex64)>)>,
}

fn split_by_register(state: &SparseState, register: &str) -> Result<RegisterSplit> {
    let off = state.layout().offset_of(register)?;
    let w = state.layout().width_of(register)?;
    let total = state.layout().total_width();
    let mut reg_vals = Vec::new();
    let mut groups: std::collections::BTreeMap<Bits, Vec<(usize, Complex64)>> =
        std::collections::BTreeMap::new();
    for (bits, amp) in state.amplitudes() {
        let rv = bits.slice(off, w);
        let rest = bits.slice(0, off).concat(&bits.slice(off + w, total - off - w));
        let idx = reg_vals.len();
        reg_vals.push(rv);
        groups.entry(rest).or_default().push((idx, *amp));
    }
    Ok(RegisterSplit {
        reg_vals,
        groups: groups.into_iter().collect(),
    })
}

/// Coordinates of `v` in the row-echelon `basis` (panics if not in span —
/// callers only pass differences used to build the basis).
fn coordinates(v: &Bits, basis: &[Bits]) -> Vec<bool> {
    let mut v = v.clone();
    let mut coords = vec![false; basis.len()];
    for (j, b) in basis.iter().enumerate() {
        let lead = b.iter().position(|x| x).unwrap();
        if v.bit(lead) {
            coords[j] = true;
            v = v.xor(b);
        }
    }
    assert!(v.is_zero(), "vector outside span of basis");
    coords
}

/// Measure a whole register in the Hadamard basis and remove it from the
/// state (the protocol reads the outcome and discards the qubits). The
/// outcome `s` is distributed per the Born rule:
///
///   p(s) = 2^{-k} Σ_y |Σ_i amp_i (−1)^{⟨s, v_i⟩}|²
///
/// where v_i is the register value of support element i. Since the phase only
/// depends on ⟨s, v_i ⊕ v_1⟩ up to a global sign, p(s) is constant on cosets
/// of the orthogonal complement of span{v_i ⊕ v_1}. We sample the sign
/// pattern on a basis of that span, then draw s uniformly from the matching
/// coset.
pub fn measure_hadamard_register<R: Rng + ?Sized>(
    state: &SparseState,
    register: &str,
    rng: &mut R,
) -> Result<(MeasurementRecord, SparseState)> {
    let w = state.layout().width_of(register)?;
    let split = split_by_register(state, register)?;
    let v1 = split.reg_vals[0].clone();
    let diffs: Vec<Bits> = split.reg_vals.iter().map(|v| v.xor(&v1)).collect();
    let basis = gf2_basis(&diffs, w);
    let r = basis.len();
    let coords: Vec<Vec<bool>> = diffs.iter().map(|d| coordinates(d, &basis)).collect();

    // Weight of each sign pattern p ∈ {0,1}^r.
    let mut weights = Vec::with_capacity(1 << r);
    for p_idx in 0u64..(1 << r) {
        let p: Vec<bool> = (0..r).map(|j| (p_idx >> j) & 1 == 1).collect();
        let mut weight = 0.0;
        for (_, members) in &split.groups {
            let mut sum = Complex64::new(0.0, 0.0);
            for &(i, amp) in members {
                let phase = coords[i]
                    .iter()
                    .zip(&p)
                    .fold(false, |acc, (c, pj)| acc ^ (c & pj));
                sum += if phase { -amp } else { amp };
            }
            weight += sum.norm_sqr();
        }
        weights.push(weight);
    }
    let total: f64 = weights.iter().sum();
    let mut roll = rng.gen::<f64>() * total;
    let mut chosen = weights.len() - 1;
    for (idx, wt) in weights.iter().enumerate() {
        if roll < *wt {
            chosen = idx;
            break;
        }
        roll -= wt;
    }
    let pattern: Vec<bool> = (0..r).map(|j| (chosen >> j) & 1 == 1).collect();

    // Uniform s in the coset {s : ⟨s, basis_j⟩ = pattern_j}.
    let s = sample_solution(&basis, &pattern, w, rng).expect("echelon basis system is consistent");

    // Post-measurement state on the remaining registers.
    let mut prob = 0.0;
    let mut entries = Vec::new();
    for (rest, members) in &split.groups {
        let mut sum = Complex64::new(0.0, 0.0);
        for &(i, amp) in members {
            sum += if s.dot(&split.reg_vals[i]) { -amp } else { amp };
        }
        prob += sum.norm_sqr() * (0.5f64).powi(w as i32);
        if sum.norm() >= tol::PRUNE {
            entries.push((rest.clone(), sum));
        }
    }
    let post = SparseState::from_amplitudes(state.layout().without(register)?, entries)?;
    Ok((
        MeasurementRecord {
            register: register.to_string(),
            basis: Basis::Hadamard,
            outcome: s,
            probability: prob,
        },
        post,
    ))
}

/// Born probability of Hadamard-basis outcome `s` on `register` and the
/// post-measurement state (register removed), for exhaustive checks.
pub fn project_hadamard(
    state: &SparseState,
    register: &str,
    s: &Bits,
) -> Result<(f64, Option<SparseState>)> {
    let w = state.layout().width_of(register)?;
    if s.len() != w {
        return Err(QsimError::BasisLengthMismatch { got: s.len(), want: w });
    }
    let split = split_by_register(state, register)?;
    let mut prob = 0.0;
    let mut entries = Vec::new();
    for (rest, members) in &split.groups {
        let mut sum = Complex64::new(0.0, 0.0);
        for &(i, amp) in members {
            sum += if s.dot(&split.reg_vals[i]) { -amp } else { amp };
        }
        prob += sum.norm_sqr() * (0.5f64).powi(w as i32);
        if sum.norm() >= tol::PRUNE {
            entries.push((rest.clone(), sum));
        }
    }
    if prob < tol::PRUNE {
        return Ok((0.0, None));
    }
    let post = SparseState::from_amplitudes(state.layout().without(register)?, entries)?;
    Ok((prob, Some(post)))
}

/// EPR pair (|00⟩ + |11⟩)/√2 on two fresh 1-qubit registers.
pub fn bell_pair(name_a: &str, name_b: &str) -> Result<SparseState> {
    let layout = crate::layout::RegisterLayout::new(vec![
        (name_a.to_string(), 1),
        (name_b.to_string(), 1),
    ])?;
    let a = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    SparseState::from_amplitudes(
        layout,
        vec![
            (Bits::parse("00").unwrap(), a),
            (Bits::parse("11").unwrap(), a),
        ],
    )
}

/// Project two qubits onto the Bell state
/// |β_{x,z}⟩ = (|0, x⟩ + (−1)^z |1, 1⊕x⟩)/√2 and remove them. Returns the
/// Born probability and the renormalized residual state when nonzero.
pub fn bell_project(
    state: &SparseState,
    qubit_a: (&str, usize),
    qubit_b: (&str, usize),
    x: bool,
    z: bool,
) -> Result<(f64, Option<SparseState>)> {
    let pa = state.layout().bit_position(qubit_a.0, qubit_a.1)?;
    let pb = state.layout().bit_position(qubit_b.0, qubit_b.1)?;
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    let keep: Vec<usize> = (0..state.layout().total_width())
        .filter(|&p| p != pa && p != pb)
        .collect();
    let mut amps: std::collections::BTreeMap<Bits, Complex64> = std::collections::BTreeMap::new();
    for (bits, amp) in state.amplitudes() {
        let (a, b) = (bits.bit(pa), bits.bit(pb));
        // ⟨β_{x,z}| component for local bits (a, b).
        let coeff = if !a && b == x {
            inv_sqrt2
        } else if a && b == !x {
            if z { -inv_sqrt2 } else { inv_sqrt2 }
        } else {
            continue;
        };
        let rest = Bits::from_bools(keep.iter().map(|&p| bits.bit(p)).collect());
        *amps.entry(rest).or_insert(Complex64::new(0.0, 0.0)) += amp * coeff;
    }
    let prob: f64 = amps.values().map(|a| a.norm_sqr()).sum();
    if prob < tol::PRUNE {
        return Ok((0.0, None));
    }
    let layout = state.layout().without_bits(&[pa, pb]);
    let post = SparseState::from_amplitudes(layout, amps)?;
    Ok((prob, Some(post)))
}

/// Sample a Bell-basis measurement of two qubits; both are removed from the
/// state. The outcome is the pair (x, z) identifying |β_{x,z}⟩.
pub fn bell_measure<R: Rng + ?Sized>(
    state: &SparseState,
    qubit_a: (&str, usize),
    qubit_b: (&str, usize),
    rng: &mut R,
) -> Result<((bool, bool), f64, SparseState)> {
    let mut branches = Vec::new();
    for x in [false, true] {
        for z in [false, true] {
            let (p, post) = bell_project(state, qubit_a, qubit_b, x, z)?;
            if let Some(post) = post {
                branches.push(((x, z), p, post));
            }
        }
    }
    let total: f64 = branches.iter().map(|(_, p, _)| *p).sum();
    let mut roll = rng.gen::<f64>() * total;
    for (outcome, p, post) in &branches {
        if roll < *p {
            return Ok((*outcome, *p, post.clone()));
        }
        roll -= p;
    }
    let (outcome, p, post) = branches.pop().expect("nonempty branch list");
    Ok((outcome, p, post))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::RegisterLayout;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn computational_measurement_collapses() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layout = RegisterLayout::single("q", 1).unwrap();
        let plus = SparseState::zero(layout).apply_h("q", 1).unwrap();
        let mut seen = [false, false];
        for _ in 0..64 {
            let (rec, post) = measure_computational(&plus, "q", &mut rng).unwrap();
            assert!((rec.probability - 0.5).abs() < 1e-12);
            seen[rec.outcome.bit(0) as usize] = true;
            assert_eq!(post.support_size(), 1);
        }
        assert!(seen[0] && seen[1]);
    }

    #[test]
    fn hadamard_measurement_of_superposed_block() {
        // (|0⟩|w0⟩ + (−1)^r |1⟩|w1⟩)/√2 with witness register measured in the
        // Hadamard basis leaves |0⟩ + (−1)^{r ⊕ ⟨s, w0⊕w1⟩} |1⟩ on the data bit.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w0 = Bits::parse("0110").unwrap();
        let w1 = Bits::parse("1011").unwrap();
        for r in [false, true] {
            let layout =
                RegisterLayout::new(vec![("d".into(), 1), ("w".into(), 4)]).unwrap();
            let a = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
            let state = SparseState::from_amplitudes(
                layout,
                vec![
                    (Bits::parse("0").unwrap().concat(&w0), a),
                    (Bits::parse("1").unwrap().concat(&w1), if r { -a } else { a }),
                ],
            )
            .unwrap();
            for _ in 0..40 {
                let (rec, post) = measure_hadamard_register(&state, "w", &mut rng).unwrap();
                assert!((rec.probability - 1.0 / 16.0).abs() < 1e-12);
                let alpha = r ^ rec.outcome.dot(&w0.xor(&w1));
                let expected = {
                    let l = RegisterLayout::single("d", 1).unwrap();
                    let s = SparseState::zero(l).apply_h("d", 1).unwrap();
                    s.apply_z("d", 1, alpha).unwrap()
                };
                assert!(post.approx_eq_global_phase(&expected, 1e-9));
            }
        }
    }

    #[test]
    fn hadamard_measurement_of_collapsed_block_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let layout = RegisterLayout::new(vec![("d".into(), 1), ("w".into(), 3)]).unwrap();
        let state = SparseState::basis(layout, Bits::parse("1101").unwrap()).unwrap();
        let mut counts = [0usize; 8];
        for _ in 0..4000 {
            let (rec, _) = measure_hadamard_register(&state, "w", &mut rng).unwrap();
            assert!((rec.probability - 0.125).abs() < 1e-12);
            counts[rec.outcome.to_index()] += 1;
        }
        for c in counts {
            assert!((c as f64 - 500.0).abs() < 120.0, "counts {counts:?}");
        }
    }

    #[test]
    fn project_hadamard_probabilities_sum_to_one() {
        let layout = RegisterLayout::new(vec![("d".into(), 1), ("w".into(), 3)]).unwrap();
        let a = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let state = SparseState::from_amplitudes(
            layout,
            vec![
                (Bits::parse("0010").unwrap(), a),
                (Bits::parse("1111").unwrap(), -a),
            ],
        )
        .unwrap();
        let mut total = 0.0;
        for idx in 0..8 {
            let s = Bits::from_index(idx, 3);
            let (p, _) = project_hadamard(&state, "w", &s).unwrap();
            total += p;
        }
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bell_projectors_are_complete() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let layout = RegisterLayout::new(vec![("a".into(), 1), ("b".into(), 1), ("c".into(), 1)])
            .unwrap();
        for _ in 0..20 {
            let entries: Vec<(Bits, Complex64)> = (0..8)
                .map(|i| {
                    (
                        Bits::from_index(i, 3),
                        Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5),
                    )
                })
                .collect();
            let state = SparseState::from_amplitudes(layout.clone(), entries).unwrap();
            let mut total = 0.0;
            for x in [false, true] {
                for z in [false, true] {
                    let (p, _) = bell_project(&state, ("a", 1), ("b", 1), x, z).unwrap();
                    total += p;
                }
            }
            assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn teleportation_identity() {
        // Teleporting an arbitrary qubit through a Bell pair yields
        // X^x Z^z applied to the input, for Bell outcome (x, z).
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..30 {
            let theta: f64 = rng.gen::<f64>() * std::f64::consts::PI;
            let phi: f64 = rng.gen::<f64>() * std::f64::consts::TAU;
            let layout = RegisterLayout::single("in", 1).unwrap();
            let input = SparseState::from_amplitudes(
                layout,
                vec![
                    (Bits::parse("0").unwrap(), Complex64::new(theta.cos(), 0.0)),
                    (
                        Bits::parse("1").unwrap(),
                        Complex64::from_polar(theta.sin(), phi),
                    ),
                ],
            )
            .unwrap();
            let joint = input.tensor(&bell_pair("e1", "e2").unwrap()).unwrap();
            let ((x, z), _, residual) =
                bell_measure(&joint, ("in", 1), ("e1", 1), &mut rng).unwrap();
            // Undo the Pauli correction and compare with the input.
            let mut fixed = residual.apply_z("e2", 1, z).unwrap();
            if x {
                fixed = fixed.apply_x("e2", 1).unwrap();
            }
            let expected = SparseState::from_amplitudes(
                RegisterLayout::single("e2", 1).unwrap(),
                input.amplitudes().map(|(b, a)| (b.clone(), *a)),
            )
            .unwrap();
            assert!(fixed.approx_eq_global_phase(&expected, 1e-9));
        }
    }
}
