use serde::{Deserialize, Serialize};

use crate::error::{QsimError, Result};

/// Ordered collection of named registers. Bit positions within a register are
/// 1-indexed in the public API; the basis string concatenates registers in
/// declaration order with bit 1 of each register first (most significant).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterLayout {
    registers: Vec<(String, usize)>,
}

impl RegisterLayout {
    pub fn new(registers: Vec<(String, usize)>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for (name, width) in &registers {
            if *width == 0 {
                return Err(QsimError::EmptyRegister);
            }
            if !seen.insert(name.clone()) {
                return Err(QsimError::DuplicateRegister(name.clone()));
            }
        }
        Ok(RegisterLayout { registers })
    }

    pub fn single(name: &str, width: usize) -> Result<Self> {
        Self::new(vec![(name.to_string(), width)])
    }

    pub fn registers(&self) -> &[(String, usize)] {
        &self.registers
    }

    pub fn total_width(&self) -> usize {
        self.registers.iter().map(|(_, w)| w).sum()
    }

    pub fn width_of(&self, name: &str) -> Result<usize> {
        self.registers
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, w)| *w)
            .ok_or_else(|| QsimError::UnknownRegister(name.to_string()))
    }

    /// Offset of the first bit of `name` in the concatenated basis string.
    pub fn offset_of(&self, name: &str) -> Result<usize> {
        let mut offset = 0;
        for (n, w) in &self.registers {
            if n == name {
                return Ok(offset);
            }
            offset += w;
        }
        Err(QsimError::UnknownRegister(name.to_string()))
    }

    /// Absolute (0-indexed) position of the 1-indexed `bit_index` of `name`.
    pub fn bit_position(&self, name: &str, bit_index: usize) -> Result<usize> {
        let width = self.width_of(name)?;
        if bit_index == 0 || bit_index > width {
            return Err(QsimError::BitIndexOutOfRange {
                register: name.to_string(),
                index: bit_index,
                width,
            });
        }
        Ok(self.offset_of(name)? + bit_index - 1)
    }

    /// Concatenation of two disjoint layouts (self first).
    pub fn joined(&self, other: &RegisterLayout) -> Result<RegisterLayout> {
        let mut regs = self.registers.clone();
        regs.extend(other.registers.iter().cloned());
        RegisterLayout::new(regs)
    }

    /// Layout with one register removed.
    pub fn without(&self, name: &str) -> Result<RegisterLayout> {
        self.width_of(name)?;
        RegisterLayout::new(
            self.registers
                .iter()
                .filter(|(n, _)| n != name)
                .cloned()
                .collect(),
        )
    }

    /// Layout with the given absolute bit positions removed. Registers whose
    /// width drops to zero disappear.
    pub fn without_bits(&self, positions: &[usize]) -> RegisterLayout {
        let mut regs = Vec::new();
        let mut offset = 0;
        for (n, w) in &self.registers {
            let removed = positions
                .iter()
                .filter(|&&p| p >= offset && p < offset + w)
                .count();
            if w - removed > 0 {
                regs.push((n.clone(), w - removed));
            }
            offset += w;
        }
        RegisterLayout { registers: regs }
    }
}
