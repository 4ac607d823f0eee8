use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bits::Bits;
use crate::error::{QsimError, Result};
use crate::layout::RegisterLayout;
use crate::tol;

/// Pure quantum state stored as a finite map from basis bit strings to
/// amplitudes. Honest protocol states have at most a handful of branches, so
/// the map stays tiny regardless of register width.
#[derive(Clone, Debug)]
pub struct SparseState {
    layout: RegisterLayout,
    amps: BTreeMap<Bits, Complex64>,
}

impl SparseState {
    /// Computational basis state |bits⟩.
    pub fn basis(layout: RegisterLayout, bits: Bits) -> Result<Self> {
        if bits.len() != layout.total_width() {
            return Err(QsimError::BasisLengthMismatch {
                got: bits.len(),
                want: layout.total_width(),
            });
        }
        let mut amps = BTreeMap::new();
        amps.insert(bits, Complex64::new(1.0, 0.0));
        Ok(SparseState { layout, amps })
    }

    /// All-zero basis state.
    pub fn zero(layout: RegisterLayout) -> Self {
        let width = layout.total_width();
        SparseState::basis(layout, Bits::zeros(width)).expect("zero string matches layout")
    }

    /// Build from explicit amplitudes; normalizes and prunes.
    pub fn from_amplitudes(
        layout: RegisterLayout,
        entries: impl IntoIterator<Item = (Bits, Complex64)>,
    ) -> Result<Self> {
        let width = layout.total_width();
        let mut amps = BTreeMap::new();
        for (bits, amp) in entries {
            if bits.len() != width {
                return Err(QsimError::BasisLengthMismatch {
                    got: bits.len(),
                    want: width,
                });
            }
            *amps.entry(bits).or_insert(Complex64::new(0.0, 0.0)) += amp;
        }
        let mut state = SparseState { layout, amps };
        state.renormalize()?;
        Ok(state)
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn amplitudes(&self) -> impl Iterator<Item = (&Bits, &Complex64)> {
        self.amps.iter()
    }

    pub fn support_size(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitude(&self, bits: &Bits) -> Complex64 {
        self.amps
            .get(bits)
            .copied()
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.values().map(|a| a.norm_sqr()).sum()
    }

    pub(crate) fn renormalize(&mut self) -> Result<()> {
        let n = self.norm_sqr();
        if n < tol::PRUNE {
            return Err(QsimError::NotNormalized(1.0));
        }
        let scale = 1.0 / n.sqrt();
        for amp in self.amps.values_mut() {
            *amp *= scale;
        }
        self.prune();
        Ok(())
    }

    fn prune(&mut self) {
        self.amps.retain(|_, a| a.norm() >= tol::PRUNE);
    }

    pub fn check_normalized(&self) -> Result<()> {
        let dev = (self.norm_sqr() - 1.0).abs();
        if dev > tol::NORM {
            return Err(QsimError::NotNormalized(dev));
        }
        Ok(())
    }

    /// Z^exponent on one qubit: amplitude of x picks up (−1)^{exponent·x[bit]}.
    pub fn apply_z(&self, register: &str, bit_index: usize, exponent: bool) -> Result<SparseState> {
        let pos = self.layout.bit_position(register, bit_index)?;
        if !exponent {
            return Ok(self.clone());
        }
        let mut out = self.clone();
        for (bits, amp) in out.amps.iter_mut() {
            if bits.bit(pos) {
                *amp = -*amp;
            }
        }
        Ok(out)
    }

    /// X (bit flip) on one qubit.
    pub fn apply_x(&self, register: &str, bit_index: usize) -> Result<SparseState> {
        let pos = self.layout.bit_position(register, bit_index)?;
        let mut amps = BTreeMap::new();
        for (bits, amp) in &self.amps {
            let mut b = bits.clone();
            b.flip(pos);
            amps.insert(b, *amp);
        }
        Ok(SparseState {
            layout: self.layout.clone(),
            amps,
        })
    }

    /// Hadamard on one qubit. Doubles the support in the worst case.
    pub fn apply_h(&self, register: &str, bit_index: usize) -> Result<SparseState> {
        let pos = self.layout.bit_position(register, bit_index)?;
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        let mut amps: BTreeMap<Bits, Complex64> = BTreeMap::new();
        for (bits, amp) in &self.amps {
            let mut flipped = bits.clone();
            flipped.flip(pos);
            let sign = if bits.bit(pos) { -1.0 } else { 1.0 };
            *amps.entry(bits.clone()).or_insert(Complex64::new(0.0, 0.0)) +=
                amp * inv_sqrt2 * sign;
            *amps.entry(flipped).or_insert(Complex64::new(0.0, 0.0)) += amp * inv_sqrt2;
        }
        let mut out = SparseState {
            layout: self.layout.clone(),
            amps,
        };
        out.prune();
        out.check_normalized()?;
        Ok(out)
    }

    /// Reversible classical oracle: XORs `f(inputs)` into `output_register`
    /// for every basis element of the support. The usual contract is that the
    /// output register is |0…0⟩ on the whole support, so the XOR writes `f`
    /// directly; the XOR semantics keep the map unitary either way.
    pub fn apply_classical_oracle(
        &self,
        input_registers: &[&str],
        output_register: &str,
        f: impl Fn(&Bits) -> Bits,
    ) -> Result<SparseState> {
        let out_off = self.layout.offset_of(output_register)?;
        let out_width = self.layout.width_of(output_register)?;
        let mut in_spans = Vec::new();
        for reg in input_registers {
            in_spans.push((self.layout.offset_of(reg)?, self.layout.width_of(reg)?));
        }
        let mut amps = BTreeMap::new();
        for (bits, amp) in &self.amps {
            let mut input = Bits::zeros(0);
            for &(off, w) in &in_spans {
                input = input.concat(&bits.slice(off, w));
            }
            let image = f(&input);
            if image.len() != out_width {
                return Err(QsimError::OracleContract(format!(
                    "oracle returned {} bits for a {}-bit register",
                    image.len(),
                    out_width
                )));
            }
            let mut b = bits.clone();
            for i in 0..out_width {
                if image.bit(i) {
                    b.flip(out_off + i);
                }
            }
            *amps.entry(b).or_insert(Complex64::new(0.0, 0.0)) += amp;
        }
        let mut out = SparseState {
            layout: self.layout.clone(),
            amps,
        };
        out.prune();
        out.check_normalized()?;
        Ok(out)
    }

    /// Tensor product with another state on a disjoint layout (self first).
    pub fn tensor(&self, other: &SparseState) -> Result<SparseState> {
        let layout = self.layout.joined(&other.layout)?;
        let mut amps = BTreeMap::new();
        for (a_bits, a_amp) in &self.amps {
            for (b_bits, b_amp) in &other.amps {
                amps.insert(a_bits.concat(b_bits), a_amp * b_amp);
            }
        }
        Ok(SparseState { layout, amps })
    }

    /// Value of a register if it is the same basis string in every branch.
    pub fn constant_register_value(&self, register: &str) -> Result<Option<Bits>> {
        let off = self.layout.offset_of(register)?;
        let w = self.layout.width_of(register)?;
        let mut iter = self.amps.keys();
        let first = match iter.next() {
            Some(b) => b.slice(off, w),
            None => return Ok(None),
        };
        for b in iter {
            if b.slice(off, w) != first {
                return Ok(None);
            }
        }
        Ok(Some(first))
    }

    /// Remove a register that is in a constant basis state across the support
    /// (e.g. after a computational measurement).
    pub fn drop_register(&self, register: &str) -> Result<SparseState> {
        let off = self.layout.offset_of(register)?;
        let w = self.layout.width_of(register)?;
        if self.constant_register_value(register)?.is_none() {
            return Err(QsimError::DropEntangled(register.to_string()));
        }
        let positions: Vec<usize> = (off..off + w).collect();
        self.drop_bits(&positions)
    }

    /// Remove the given absolute bit positions. The caller must ensure the
    /// removed bits are unentangled with the rest (constant across support),
    /// otherwise the result would not be a pure state.
    pub(crate) fn drop_bits(&self, positions: &[usize]) -> Result<SparseState> {
        let layout = self.layout.without_bits(positions);
        let keep: Vec<usize> = (0..self.layout.total_width())
            .filter(|p| !positions.contains(p))
            .collect();
        let mut amps = BTreeMap::new();
        for (bits, amp) in &self.amps {
            let kept = Bits::from_bools(keep.iter().map(|&p| bits.bit(p)).collect());
            *amps.entry(kept).or_insert(Complex64::new(0.0, 0.0)) += amp;
        }
        let mut out = SparseState { layout, amps };
        out.prune();
        out.check_normalized()?;
        Ok(out)
    }

    /// Equality up to a global phase, amplitude-wise within `eps`.
    pub fn approx_eq_global_phase(&self, other: &SparseState, eps: f64) -> bool {
        if self.layout != other.layout {
            return false;
        }
        // Find the reference phase from the largest amplitude of self.
        let Some((ref_bits, ref_amp)) = self
            .amps
            .iter()
            .max_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap())
        else {
            return other.amps.is_empty();
        };
        let other_amp = other.amplitude(ref_bits);
        if other_amp.norm() < eps {
            return false;
        }
        let phase = other_amp / other_amp.norm() * (ref_amp.conj() / ref_amp.norm());
        let keys: std::collections::BTreeSet<&Bits> =
            self.amps.keys().chain(other.amps.keys()).collect();
        keys.into_iter()
            .all(|k| (self.amplitude(k) * phase - other.amplitude(k)).norm() <= eps)
    }

    /// Serialize per the wire format: layout plus lexicographically sorted
    /// amplitudes with 17-significant-digit floats.
    pub fn to_json(&self) -> String {
        let ser = SerializedState {
            layout: self
                .layout
                .registers()
                .iter()
                .map(|(n, w)| (n.clone(), *w))
                .collect(),
            amps: self
                .amps
                .iter()
                .map(|(b, a)| (b.to_string(), Fmt17(a.re), Fmt17(a.im)))
                .collect(),
        };
        serde_json::to_string(&ser).expect("state serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<SparseState> {
        let ser: SerializedState =
            serde_json::from_str(s).map_err(|e| QsimError::Serialization(e.to_string()))?;
        let layout = RegisterLayout::new(ser.layout)?;
        let entries: Result<Vec<(Bits, Complex64)>> = ser
            .amps
            .into_iter()
            .map(|(b, re, im)| {
                Bits::parse(&b)
                    .map_err(QsimError::Serialization)
                    .map(|bits| (bits, Complex64::new(re.0, im.0)))
            })
            .collect();
        let state = SparseState::from_amplitudes(layout, entries?)?;
        state.check_normalized()?;
        Ok(state)
    }
}

#[derive(Serialize, Deserialize)]
struct SerializedState {
    layout: Vec<(String, usize)>,
    amps: Vec<(String, Fmt17, Fmt17)>,
}

/// f64 printed with 17 significant digits (round-trip exact).
struct Fmt17(f64);

impl Serialize for Fmt17 {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        serde_json::Number::from_f64(self.0)
            .ok_or_else(|| serde::ser::Error::custom("non-finite amplitude"))?
            .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Fmt17 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(Fmt17(f64::deserialize(d)?))
    }
}
