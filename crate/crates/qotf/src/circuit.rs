//! Boolean circuits over {XOR, AND, CONST}, the gate set of the
//! MPC-in-the-head proof system (XOR and constants are free; AND gates cost
//! communication). Includes a circuit compiler for the toy hash that mirrors
//! `hashfam::eval` gate for gate, and builders for the two proved relations.

use qsim::Bits;

use crate::error::{QotfError, Result};
use crate::hashfam::{
    toy_pad_bits, toy_round_keys, toy_rotation, HashKey, Profile, SBOX, TOY_ROUNDS,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gate {
    Const(bool),
    Xor(usize, usize),
    And(usize, usize),
}

/// Wires 0..num_inputs are the inputs; gate i defines wire num_inputs + i.
#[derive(Clone, Debug)]
pub struct Circuit {
    pub num_inputs: usize,
    pub gates: Vec<Gate>,
    pub outputs: Vec<usize>,
}

impl Circuit {
    pub fn num_wires(&self) -> usize {
        self.num_inputs + self.gates.len()
    }

    pub fn and_count(&self) -> usize {
        self.gates.iter().filter(|g| matches!(g, Gate::And(_, _))).count()
    }

    pub fn eval(&self, inputs: &Bits) -> Result<Bits> {
        if inputs.len() != self.num_inputs {
            return Err(QotfError::Params(format!(
                "circuit expects {} inputs, got {}",
                self.num_inputs,
                inputs.len()
            )));
        }
        let mut wires = Vec::with_capacity(self.num_wires());
        wires.extend(inputs.iter());
        for gate in &self.gates {
            let v = match *gate {
                Gate::Const(c) => c,
                Gate::Xor(a, b) => wires[a] ^ wires[b],
                Gate::And(a, b) => wires[a] & wires[b],
            };
            wires.push(v);
        }
        Ok(Bits::from_bools(
            self.outputs.iter().map(|&w| wires[w]).collect(),
        ))
    }
}

/// Incremental circuit builder.
pub struct Builder {
    num_inputs: usize,
    gates: Vec<Gate>,
}

impl Builder {
    pub fn new(num_inputs: usize) -> Builder {
        Builder {
            num_inputs,
            gates: Vec::new(),
        }
    }

    pub fn input(&self, i: usize) -> usize {
        assert!(i < self.num_inputs);
        i
    }

    fn push(&mut self, gate: Gate) -> usize {
        self.gates.push(gate);
        self.num_inputs + self.gates.len() - 1
    }

    pub fn constant(&mut self, v: bool) -> usize {
        self.push(Gate::Const(v))
    }

    pub fn xor(&mut self, a: usize, b: usize) -> usize {
        self.push(Gate::Xor(a, b))
    }

    pub fn and(&mut self, a: usize, b: usize) -> usize {
        self.push(Gate::And(a, b))
    }

    pub fn not(&mut self, a: usize) -> usize {
        let one = self.constant(true);
        self.xor(a, one)
    }

    pub fn xor_const(&mut self, a: usize, c: bool) -> usize {
        if c {
            self.not(a)
        } else {
            a
        }
    }

    pub fn or(&mut self, a: usize, b: usize) -> usize {
        let x = self.xor(a, b);
        let y = self.and(a, b);
        self.xor(x, y)
    }

    pub fn and_reduce(&mut self, wires: &[usize]) -> usize {
        let mut acc = match wires.first() {
            Some(&w) => w,
            None => return self.constant(true),
        };
        for &w in &wires[1..] {
            acc = self.and(acc, w);
        }
        acc
    }

    pub fn or_reduce(&mut self, wires: &[usize]) -> usize {
        let mut acc = match wires.first() {
            Some(&w) => w,
            None => return self.constant(false),
        };
        for &w in &wires[1..] {
            acc = self.or(acc, w);
        }
        acc
    }

    /// Wire that is 1 iff the wire vector equals the constant bit string.
    pub fn equals_const(&mut self, wires: &[usize], value: &Bits) -> usize {
        assert_eq!(wires.len(), value.len());
        let matches: Vec<usize> = wires
            .iter()
            .enumerate()
            .map(|(i, &w)| self.xor_const(w, !value.bit(i)))
            .collect();
        self.and_reduce(&matches)
    }

    /// The 4-bit S-box on `x` (x[0] most significant), synthesized from its
    /// truth table: each minterm is an AND chain of literals; since minterms
    /// are mutually exclusive, each output bit is the XOR of its minterms.
    pub fn sbox(&mut self, x: [usize; 4]) -> [usize; 4] {
        let mut minterms = Vec::with_capacity(16);
        for v in 0..16usize {
            let literals: Vec<usize> = (0..4)
                .map(|i| {
                    let want = (v >> (3 - i)) & 1 == 1;
                    self.xor_const(x[i], !want)
                })
                .collect();
            minterms.push(self.and_reduce(&literals));
        }
        let mut out = [0usize; 4];
        for (j, slot) in out.iter_mut().enumerate() {
            let terms: Vec<usize> = (0..16)
                .filter(|&v| (SBOX[v] as usize >> (3 - j)) & 1 == 1)
                .map(|v| minterms[v])
                .collect();
            *slot = terms
                .iter()
                .skip(1)
                .fold(terms[0], |acc, &t| self.xor(acc, t));
        }
        out
    }

    /// Append the toy-hash computation on the given input wires; returns the
    /// digest wires. Mirrors `hashfam::toy_eval` exactly.
    pub fn toy_hash(&mut self, key: &HashKey, input: &[usize]) -> Result<Vec<usize>> {
        if key.profile != Profile::Toy {
            return Err(QotfError::Capability(
                "hash circuit available only for the toy profile".into(),
            ));
        }
        let width = key.input_len;
        assert_eq!(input.len(), width);
        let rks = toy_round_keys(key);
        let rot = toy_rotation(width);
        let mut state: Vec<usize> = input.to_vec();
        for rk in rks.iter().take(TOY_ROUNDS) {
            state = state
                .iter()
                .enumerate()
                .map(|(i, &w)| self.xor_const(w, rk.bit(i)))
                .collect();
            for nib in 0..width / 4 {
                let x = [
                    state[4 * nib],
                    state[4 * nib + 1],
                    state[4 * nib + 2],
                    state[4 * nib + 3],
                ];
                let y = self.sbox(x);
                state[4 * nib..4 * nib + 4].copy_from_slice(&y);
            }
            state = (0..width).map(|i| state[(i + rot) % width]).collect();
        }
        state = state
            .iter()
            .enumerate()
            .map(|(i, &w)| self.xor_const(w, rks[TOY_ROUNDS].bit(i)))
            .collect();
        if key.output_len <= width {
            state.truncate(key.output_len);
        } else {
            for b in toy_pad_bits(key).iter() {
                let w = self.constant(b);
                state.push(w);
            }
        }
        Ok(state)
    }

    pub fn finish(self, outputs: Vec<usize>) -> Circuit {
        Circuit {
            num_inputs: self.num_inputs,
            gates: self.gates,
            outputs,
        }
    }
}

/// Circuit computing the toy digest itself (for cross-checking against eval).
pub fn toy_hash_circuit(key: &HashKey) -> Result<Circuit> {
    let mut b = Builder::new(key.input_len);
    let inputs: Vec<usize> = (0..key.input_len).collect();
    let out = b.toy_hash(key, &inputs)?;
    Ok(b.finish(out))
}

/// Relation circuit for bit OT. Inputs: 4 witnesses w_d^(c) of witness_len
/// bits each, ordered (c,d) = (1,0),(1,1),(2,0),(2,1). Single output: 1 iff
/// every digest matches and at least one flag bit is set.
pub fn bit_ot_relation_circuit(key: &HashKey, digests: &[Bits; 4]) -> Result<Circuit> {
    let wl = key.witness_len();
    let mut b = Builder::new(4 * wl);
    let mut eqs = Vec::new();
    let mut flags = Vec::new();
    for (slot, digest) in digests.iter().enumerate() {
        let d = slot % 2 == 1;
        let witness: Vec<usize> = (slot * wl..(slot + 1) * wl).collect();
        flags.push(witness[0]);
        let d_wire = b.constant(d);
        let mut preimage = vec![d_wire];
        preimage.extend(&witness);
        let digest_wires = b.toy_hash(key, &preimage)?;
        eqs.push(b.equals_const(&digest_wires, digest));
    }
    let all_eq = b.and_reduce(&eqs);
    let any_flag = b.or_reduce(&flags);
    let out = b.and(all_eq, any_flag);
    Ok(b.finish(vec![out]))
}

/// Relation circuit for the semi-collapse statement. Inputs: the T mask
/// (n bits, bit c = 1 iff block c+1 is measured) followed by 2n witnesses
/// ordered (c,d) = (1,0),(1,1),...,(n,1). Output 1 iff Pred(T) holds (T is
/// one of `allowed_masks`), every digest matches, and every block in T has a
/// flagged preimage.
pub fn semicollapse_relation_circuit(
    key: &HashKey,
    digests: &[(Bits, Bits)],
    allowed_masks: &[Bits],
) -> Result<Circuit> {
    let n = digests.len();
    let wl = key.witness_len();
    let mut b = Builder::new(n + 2 * n * wl);
    let t_wires: Vec<usize> = (0..n).collect();
    let pred_terms: Vec<usize> = allowed_masks
        .iter()
        .map(|m| b.equals_const(&t_wires, m))
        .collect();
    let pred_ok = b.or_reduce(&pred_terms);
    let mut conds = vec![pred_ok];
    for c in 0..n {
        let mut flags = Vec::new();
        for (d, digest) in [false, true].into_iter().zip([&digests[c].0, &digests[c].1]) {
            let slot = 2 * c + d as usize;
            let witness: Vec<usize> = (n + slot * wl..n + (slot + 1) * wl).collect();
            flags.push(witness[0]);
            let d_wire = b.constant(d);
            let mut preimage = vec![d_wire];
            preimage.extend(&witness);
            let digest_wires = b.toy_hash(key, &preimage)?;
            conds.push(b.equals_const(&digest_wires, digest));
        }
        // T_c ⇒ (flag_0 ∨ flag_1), i.e. 1 ⊕ T_c·¬(flag_0 ∨ flag_1).
        let any = b.or(flags[0], flags[1]);
        let not_any = b.not(any);
        let bad = b.and(t_wires[c], not_any);
        conds.push(b.not(bad));
    }
    let out = b.and_reduce(&conds);
    Ok(b.finish(vec![out]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hashfam::{eval, gen};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn toy_circuit_matches_eval() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for (wl, out_len) in [(7, None), (9, Some(8)), (9, Some(14)), (16, None), (4, Some(5))] {
            let key = gen(Profile::Toy, wl, out_len, &mut rng).unwrap();
            let circuit = toy_hash_circuit(&key).unwrap();
            for _ in 0..50 {
                let x = Bits::random(key.input_len, &mut rng);
                assert_eq!(circuit.eval(&x).unwrap(), eval(&key, &x).unwrap());
            }
        }
    }

    #[test]
    fn sbox_circuit_matches_table() {
        let mut b = Builder::new(4);
        let out = b.sbox([0, 1, 2, 3]);
        let c = b.finish(out.to_vec());
        for v in 0..16usize {
            let x = Bits::from_index(v, 4);
            let y = c.eval(&x).unwrap();
            assert_eq!(y.to_index(), SBOX[v] as usize, "v={v}");
        }
    }

    #[test]
    fn equals_and_reduce_helpers() {
        let mut b = Builder::new(3);
        let eq = b.equals_const(&[0, 1, 2], &Bits::parse("101").unwrap());
        let c = b.finish(vec![eq]);
        for v in 0..8usize {
            let got = c.eval(&Bits::from_index(v, 3)).unwrap().bit(0);
            assert_eq!(got, v == 0b101);
        }
    }

    #[test]
    fn bit_ot_relation_circuit_semantics() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let key = gen(Profile::Toy, 6, None, &mut rng).unwrap();
        let wl = key.witness_len();
        // Build four witnesses, one flagged.
        let mut witnesses: Vec<Bits> = (0..4).map(|_| {
            let mut w = Bits::random(wl, &mut rng);
            w.set(0, false);
            w
        }).collect();
        witnesses[2].set(0, true);
        let digests: Vec<Bits> = witnesses
            .iter()
            .enumerate()
            .map(|(slot, w)| {
                let d = slot % 2 == 1;
                eval(&key, &Bits::from_bools(vec![d]).concat(w)).unwrap()
            })
            .collect();
        let digests: [Bits; 4] = digests.try_into().unwrap();
        let circuit = bit_ot_relation_circuit(&key, &digests).unwrap();
        let input = witnesses
            .iter()
            .fold(Bits::zeros(0), |acc, w| acc.concat(w));
        assert!(circuit.eval(&input).unwrap().bit(0));
        // Clearing the flag makes the relation fail (digest mismatch too,
        // so also try recomputing digests with all flags 0).
        let mut no_flag = witnesses.clone();
        no_flag[2].set(0, false);
        let digests0: Vec<Bits> = no_flag
            .iter()
            .enumerate()
            .map(|(slot, w)| {
                let d = slot % 2 == 1;
                eval(&key, &Bits::from_bools(vec![d]).concat(w)).unwrap()
            })
            .collect();
        let digests0: [Bits; 4] = digests0.try_into().unwrap();
        let c0 = bit_ot_relation_circuit(&key, &digests0).unwrap();
        let input0 = no_flag.iter().fold(Bits::zeros(0), |acc, w| acc.concat(w));
        assert!(!c0.eval(&input0).unwrap().bit(0));
        // Wrong witness fails on the original statement.
        let mut bad = input.clone();
        bad.flip(wl + 1);
        assert!(!circuit.eval(&bad).unwrap().bit(0));
    }
}
