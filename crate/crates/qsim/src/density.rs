//! Dense density matrices for small subsystems.
//!
//! Sparse states carry the protocol; density matrices only appear when we need
//! basis-independent comparisons (trace distance, reduced states of single
//! qubits). The dense path is capped at [`DENSE_CAP`] qubits.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::bits::Bits;
use crate::error::{QsimError, Result};
use crate::state::SparseState;

/// Maximum number of qubits representable on the dense path (2^12 × 2^12).
pub const DENSE_CAP: usize = 12;

#[derive(Clone, Debug)]
pub struct DensityMatrix {
    mat: DMatrix<Complex64>,
    qubits: usize,
}

impl DensityMatrix {
    pub fn from_matrix(mat: DMatrix<Complex64>) -> Result<Self> {
        let dim = mat.nrows();
        if mat.ncols() != dim || !dim.is_power_of_two() {
            return Err(QsimError::DimensionMismatch(mat.nrows(), mat.ncols()));
        }
        let qubits = dim.trailing_zeros() as usize;
        if qubits > DENSE_CAP {
            return Err(QsimError::CapacityExceeded(qubits, DENSE_CAP));
        }
        Ok(DensityMatrix { mat, qubits })
    }

    /// |ψ⟩⟨ψ| for a pure state over the whole layout.
    pub fn pure(state: &SparseState) -> Result<Self> {
        let qubits = state.layout().total_width();
        if qubits > DENSE_CAP {
            return Err(QsimError::CapacityExceeded(qubits, DENSE_CAP));
        }
        let dim = 1usize << qubits;
        let mut vec = vec![Complex64::new(0.0, 0.0); dim];
        for (bits, amp) in state.amplitudes() {
            vec[bits.to_index()] = *amp;
        }
        let mut mat = DMatrix::from_element(dim, dim, Complex64::new(0.0, 0.0));
        for i in 0..dim {
            for j in 0..dim {
                mat[(i, j)] = vec[i] * vec[j].conj();
            }
        }
        Ok(DensityMatrix { mat, qubits })
    }

    /// Reduced state of `keep` (register names in their layout order),
    /// tracing out everything else.
    pub fn reduced(state: &SparseState, keep: &[&str]) -> Result<Self> {
        let layout = state.layout();
        let mut keep_positions = Vec::new();
        for name in keep {
            let off = layout.offset_of(name)?;
            let w = layout.width_of(name)?;
            keep_positions.extend(off..off + w);
        }
        Self::reduced_bits(state, &keep_positions)
    }

    /// Reduced state of the given absolute bit positions.
    pub fn reduced_bits(state: &SparseState, keep_positions: &[usize]) -> Result<Self> {
        let k = keep_positions.len();
        if k > DENSE_CAP {
            return Err(QsimError::CapacityExceeded(k, DENSE_CAP));
        }
        let total = state.layout().total_width();
        let traced: Vec<usize> = (0..total)
            .filter(|p| !keep_positions.contains(p))
            .collect();
        let dim = 1usize << k;
        let mut mat = DMatrix::from_element(dim, dim, Complex64::new(0.0, 0.0));
        // ρ_keep[i, j] = Σ_e ⟨i, e|ψ⟩⟨ψ|j, e⟩ — group the sparse support by
        // the traced-out part so the sum stays linear in the support size.
        let mut by_env: std::collections::BTreeMap<Bits, Vec<(usize, Complex64)>> =
            std::collections::BTreeMap::new();
        for (bits, amp) in state.amplitudes() {
            let env = Bits::from_bools(traced.iter().map(|&p| bits.bit(p)).collect());
            let kept = Bits::from_bools(keep_positions.iter().map(|&p| bits.bit(p)).collect());
            by_env.entry(env).or_default().push((kept.to_index(), *amp));
        }
        for members in by_env.values() {
            for &(i, a) in members {
                for &(j, b) in members {
                    mat[(i, j)] += a * b.conj();
                }
            }
        }
        Ok(DensityMatrix { mat, qubits: k })
    }

    /// Reduced state of a single qubit.
    pub fn single_qubit(state: &SparseState, register: &str, bit_index: usize) -> Result<Self> {
        let pos = state.layout().bit_position(register, bit_index)?;
        Self::reduced_bits(state, &[pos])
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.mat
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn trace(&self) -> Complex64 {
        self.mat.trace()
    }

    /// Apply Z on one qubit (0-indexed within this matrix): ρ → ZρZ.
    pub fn conjugate_z(&self, qubit: usize) -> DensityMatrix {
        let dim = self.dim();
        let mut mat = self.mat.clone();
        let mask = 1usize << (self.qubits - 1 - qubit);
        for i in 0..dim {
            for j in 0..dim {
                let sign = ((i & mask != 0) as i32 + (j & mask != 0) as i32) % 2;
                if sign == 1 {
                    mat[(i, j)] = -mat[(i, j)];
                }
            }
        }
        DensityMatrix {
            mat,
            qubits: self.qubits,
        }
    }

    pub fn approx_eq(&self, other: &DensityMatrix, eps: f64) -> bool {
        self.dim() == other.dim()
            && (&self.mat - &other.mat).iter().all(|c| c.norm() <= eps)
    }
}

/// Eigenvalues of a Hermitian matrix, via the cyclic Jacobi method on the
/// real 2n×2n embedding [[Re, −Im], [Im, Re]] (its spectrum is that of the
/// Hermitian matrix, doubled).
pub fn hermitian_eigenvalues(m: &DMatrix<Complex64>) -> Vec<f64> {
    let n = m.nrows();
    let mut a = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = m[(i, j)].re;
            a[(i + n, j + n)] = m[(i, j)].re;
            a[(i + n, j)] = m[(i, j)].im;
            a[(i, j + n)] = -m[(i, j)].im;
        }
    }
    let eig = nalgebra::SymmetricEigen::new(a);
    // Each eigenvalue of m appears twice in the embedding; take every other
    // one after sorting.
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|x, y| x.partial_cmp(y).unwrap());
    vals.into_iter().step_by(2).collect()
}

/// Trace distance ½‖ρ − σ‖₁ = ½ Σ |λ_i(ρ − σ)|.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(QsimError::DimensionMismatch(a.dim(), b.dim()));
    }
    let diff = &a.mat - &b.mat;
    Ok(hermitian_eigenvalues(&diff).iter().map(|l| l.abs()).sum::<f64>() / 2.0)
}
