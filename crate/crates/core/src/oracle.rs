//! Dense reference engine: statevectors, density operators, partial traces,
//! post-selection and Hermitian eigensystems.
//!
//! Bit convention: in a state over the ordered qubit list `q`, `q[0]` is
//! the most significant bit of the amplitude index.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::geomcircuit::{CutRegions, LatticeCircuit, QubitSet};
use crate::synthesis::{CutOp, Synthesis};

pub const DEFAULT_CAP: usize = 22;
pub const HERMITIAN_TOL: f64 = 1e-10;

const C0: Complex64 = Complex64::new(0.0, 0.0);
const C1: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("oracle capacity exceeded: {needed} qubits > cap {cap}")]
    Capacity { needed: usize, cap: usize },
    #[error("qubit {0} is not part of the state")]
    MissingQubit(usize),
    #[error("bitstring has length {got}, circuit has {expected} qubits")]
    BitstringLength { got: usize, expected: usize },
    #[error("operator is not Hermitian (deviation {0:.3e})")]
    NotHermitian(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    pub qubits: Vec<usize>,
    pub amps: Vec<Complex64>,
}

impl StateVector {
    pub fn zero(qubits: Vec<usize>) -> Self {
        let mut amps = vec![C0; 1 << qubits.len()];
        amps[0] = C1;
        StateVector { qubits, amps }
    }

    pub fn basis(qubits: Vec<usize>, index: usize) -> Self {
        let mut amps = vec![C0; 1 << qubits.len()];
        amps[index] = C1;
        StateVector { qubits, amps }
    }

    pub fn len_qubits(&self) -> usize {
        self.qubits.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    fn bit_of(&self, q: usize) -> Result<usize, OracleError> {
        let pos = self.qubits.iter().position(|&x| x == q).ok_or(OracleError::MissingQubit(q))?;
        Ok(self.qubits.len() - 1 - pos)
    }

    /// Applies a 1- or 2-qubit matrix (row-major, first id most significant).
    pub fn apply_gate(&mut self, matrix: &[Complex64], ids: &[usize]) -> Result<(), OracleError> {
        match ids.len() {
            1 => {
                let b = 1usize << self.bit_of(ids[0])?;
                let (m00, m01, m10, m11) = (matrix[0], matrix[1], matrix[2], matrix[3]);
                for i in 0..self.amps.len() {
                    if i & b == 0 {
                        let (a0, a1) = (self.amps[i], self.amps[i | b]);
                        self.amps[i] = m00 * a0 + m01 * a1;
                        self.amps[i | b] = m10 * a0 + m11 * a1;
                    }
                }
            }
            2 => {
                let hi = 1usize << self.bit_of(ids[0])?;
                let lo = 1usize << self.bit_of(ids[1])?;
                for i in 0..self.amps.len() {
                    if i & hi == 0 && i & lo == 0 {
                        let idx = [i, i | lo, i | hi, i | hi | lo];
                        let v = idx.map(|k| self.amps[k]);
                        for r in 0..4 {
                            let row = &matrix[r * 4..r * 4 + 4];
                            self.amps[idx[r]] = row[0] * v[0] + row[1] * v[1] + row[2] * v[2] + row[3] * v[3];
                        }
                    }
                }
            }
            n => panic!("gates act on 1 or 2 qubits, got {n}"),
        }
        Ok(())
    }

    /// Amplitudes arranged as a matrix: row index over `rows` (in that
    /// order), column index over every other qubit in state order.
    pub fn split(&self, rows: &[usize]) -> Result<(DMatrix<Complex64>, Vec<usize>), OracleError> {
        let row_bits: Vec<usize> = rows.iter().map(|&q| self.bit_of(q)).collect::<Result<_, _>>()?;
        let cols: Vec<usize> = self.qubits.iter().copied().filter(|q| !rows.contains(q)).collect();
        let col_bits: Vec<usize> = cols.iter().map(|&q| self.bit_of(q).unwrap()).collect();
        let (nr, nc) = (1usize << rows.len(), 1usize << cols.len());
        let row_off = offsets(&row_bits);
        let col_off = offsets(&col_bits);
        let mut m = DMatrix::zeros(nr, nc);
        for c in 0..nc {
            for r in 0..nr {
                m[(r, c)] = self.amps[row_off[r] | col_off[c]];
            }
        }
        Ok((m, cols))
    }

    /// Inverse of [`split`]: rebuilds a state over `rows ++ cols`.
    pub fn from_split(m: &DMatrix<Complex64>, rows: &[usize], cols: &[usize]) -> StateVector {
        let mut qubits = rows.to_vec();
        qubits.extend_from_slice(cols);
        let nc = 1usize << cols.len();
        let mut amps = vec![C0; 1 << qubits.len()];
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                amps[r * nc + c] = m[(r, c)];
            }
        }
        StateVector { qubits, amps }
    }

    /// Projects `register` onto |0…0⟩ and drops it from the state.
    pub fn postselect_zero(&self, register: &[usize]) -> Result<StateVector, OracleError> {
        if register.is_empty() {
            return Ok(self.clone());
        }
        let mask = register.iter().map(|&q| self.bit_of(q).map(|b| 1usize << b)).sum::<Result<usize, _>>()?;
        let rest: Vec<usize> = self.qubits.iter().copied().filter(|q| !register.contains(q)).collect();
        let rest_bits: Vec<usize> = rest.iter().map(|&q| self.bit_of(q).unwrap()).collect();
        let off = offsets(&rest_bits);
        let amps = off.iter().map(|&o| {
            debug_assert_eq!(o & mask, 0);
            self.amps[o]
        });
        Ok(StateVector { qubits: rest, amps: amps.collect() })
    }

    /// Applies `op` to the qubits `support` (in that order).
    pub fn apply_operator(&mut self, support: &[usize], op: &DMatrix<Complex64>) -> Result<(), OracleError> {
        let (m, cols) = self.split(support)?;
        let out = op * m;
        *self = StateVector::from_split(&out, support, &cols);
        Ok(())
    }
}

/// Amplitude offsets for every assignment of the given bit positions, in
/// big-endian order of the list.
fn offsets(bits: &[usize]) -> Vec<usize> {
    let n = bits.len();
    (0..1usize << n)
        .map(|v| (0..n).filter(|j| v >> (n - 1 - j) & 1 == 1).map(|j| 1usize << bits[j]).sum())
        .collect()
}

pub fn apply_circuit(state: &StateVector, circuit: &LatticeCircuit) -> Result<StateVector, OracleError> {
    let mut out = state.clone();
    for layer in &circuit.layers {
        for g in layer {
            let ids = circuit.gate_ids(g);
            out.apply_gate(&g.matrix, &ids)?;
        }
    }
    Ok(out)
}

/// |⟨x|C|0ⁿ⟩|², `x[q]` being the bit of row-major qubit `q`.
pub fn output_probability(circuit: &LatticeCircuit, x: &[bool]) -> Result<f64, OracleError> {
    let n = circuit.num_qubits();
    if x.len() != n {
        return Err(OracleError::BitstringLength { got: x.len(), expected: n });
    }
    if n > DEFAULT_CAP {
        return Err(OracleError::Capacity { needed: n, cap: DEFAULT_CAP });
    }
    let psi = apply_circuit(&StateVector::zero((0..n).collect()), circuit)?;
    let idx = x.iter().fold(0usize, |acc, &b| acc << 1 | b as usize);
    Ok(psi.amps[idx].norm_sqr())
}

/// Full 2ⁿ×2ⁿ unitary assembled by multiplying embedded gate matrices.
/// Independent of the statevector kernel; meant for cross-checks.
pub fn full_unitary(circuit: &LatticeCircuit) -> DMatrix<Complex64> {
    let n = circuit.num_qubits();
    let dim = 1usize << n;
    let mut u = DMatrix::<Complex64>::identity(dim, dim);
    for layer in &circuit.layers {
        for g in layer {
            let ids = circuit.gate_ids(g);
            u = embed(n, &g.matrix, &ids) * u;
        }
    }
    u
}

/// Gate matrix embedded in the full space of `n` row-major qubits.
pub fn embed(n: usize, matrix: &[Complex64], ids: &[usize]) -> DMatrix<Complex64> {
    let dim = 1usize << n;
    let k = ids.len();
    let local = 1usize << k;
    let mask: usize = ids.iter().map(|&q| 1usize << (n - 1 - q)).sum();
    let sub = |i: usize| (0..k).fold(0usize, |acc, j| acc << 1 | (i >> (n - 1 - ids[j]) & 1));
    let mut m = DMatrix::zeros(dim, dim);
    for r in 0..dim {
        for c in 0..dim {
            if r & !mask == c & !mask {
                m[(r, c)] = matrix[sub(r) * local + sub(c)];
            }
        }
    }
    m
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    pub qubits: Vec<usize>,
    pub matrix: DMatrix<Complex64>,
}

impl DensityOperator {
    pub fn new(qubits: Vec<usize>, matrix: DMatrix<Complex64>) -> Self {
        assert_eq!(matrix.nrows(), 1 << qubits.len());
        DensityOperator { qubits, matrix }
    }

    /// Reduced operator of `state` on `keep` (in that order).
    pub fn reduced(state: &StateVector, keep: &[usize]) -> Result<Self, OracleError> {
        let (m, _) = state.split(keep)?;
        Ok(DensityOperator { qubits: keep.to_vec(), matrix: &m * m.adjoint() })
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn hermitian_deviation(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `register` positions in `self.qubits`, as big-endian bit shifts.
    fn shifts(&self, register: &[usize]) -> Result<Vec<usize>, OracleError> {
        let n = self.qubits.len();
        register
            .iter()
            .map(|q| self.qubits.iter().position(|x| x == q).map(|p| n - 1 - p).ok_or(OracleError::MissingQubit(*q)))
            .collect()
    }

    /// Traces out `register`; remaining qubits keep their order.
    pub fn partial_trace(&self, register: &[usize]) -> Result<DensityOperator, OracleError> {
        let traced = self.shifts(register)?;
        let rest: Vec<usize> = self.qubits.iter().copied().filter(|q| !register.contains(q)).collect();
        let kept = self.shifts(&rest)?;
        let ko = offsets(&kept);
        let to = offsets(&traced);
        let mut m = DMatrix::zeros(ko.len(), ko.len());
        for (r, &ro) in ko.iter().enumerate() {
            for (c, &co) in ko.iter().enumerate() {
                m[(r, c)] = to.iter().map(|&t| self.matrix[(ro | t, co | t)]).sum();
            }
        }
        Ok(DensityOperator { qubits: rest, matrix: m })
    }

    /// ⟨0_reg| op |0_reg⟩ on the remaining qubits.
    pub fn postselect_zero(&self, register: &[usize]) -> Result<DensityOperator, OracleError> {
        self.shifts(register)?;
        let rest: Vec<usize> = self.qubits.iter().copied().filter(|q| !register.contains(q)).collect();
        let ko = offsets(&self.shifts(&rest)?);
        let m = DMatrix::from_fn(ko.len(), ko.len(), |r, c| self.matrix[(ko[r], ko[c])]);
        Ok(DensityOperator { qubits: rest, matrix: m })
    }

    /// Operator with qubits reordered to `order`.
    pub fn reorder(&self, order: &[usize]) -> Result<DensityOperator, OracleError> {
        let off = offsets(&self.shifts(order)?);
        let m = DMatrix::from_fn(off.len(), off.len(), |r, c| self.matrix[(off[r], off[c])]);
        Ok(DensityOperator { qubits: order.to_vec(), matrix: m })
    }

    pub fn power(&self, k: u32) -> DensityOperator {
        DensityOperator { qubits: self.qubits.clone(), matrix: matrix_power(&self.matrix, k) }
    }

    /// Eigenpairs in descending eigenvalue order.
    pub fn spectral(&self) -> Result<Vec<(f64, DVector<Complex64>)>, OracleError> {
        let scale = self.matrix.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let dev = self.hermitian_deviation();
        if dev > HERMITIAN_TOL * scale {
            return Err(OracleError::NotHermitian(dev));
        }
        let herm = (&self.matrix + self.matrix.adjoint()) * Complex64::new(0.5, 0.0);
        let eig = herm.symmetric_eigen();
        let mut pairs: Vec<(f64, DVector<Complex64>)> =
            eig.eigenvalues.iter().enumerate().map(|(i, &l)| (l, eig.eigenvectors.column(i).into_owned())).collect();
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        Ok(pairs)
    }
}

/// Eigenpairs of the reduced state on `keep` with non-zero eigenvalue, in
/// descending order. Diagonalises whichever Gram matrix is smaller.
pub fn reduced_spectrum(state: &StateVector, keep: &[usize]) -> Result<Vec<(f64, DVector<Complex64>)>, OracleError> {
    let (a, cols) = state.split(keep)?;
    let mut pairs: Vec<(f64, DVector<Complex64>)> = if cols.len() < keep.len() {
        let g = a.adjoint() * &a;
        let g = (&g + g.adjoint()) * Complex64::new(0.5, 0.0);
        let eig = g.symmetric_eigen();
        eig.eigenvalues
            .iter()
            .enumerate()
            .filter(|(_, &l)| l > 0.0)
            .filter_map(|(i, &l)| {
                let v = &a * eig.eigenvectors.column(i);
                let norm = v.norm();
                (norm > 0.0).then(|| (l, v / Complex64::new(norm, 0.0)))
            })
            .collect()
    } else {
        let rho = DensityOperator { qubits: keep.to_vec(), matrix: &a * a.adjoint() };
        rho.spectral()?.into_iter().filter(|(l, _)| *l > 0.0).collect()
    };
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
    Ok(pairs)
}

pub fn matrix_power(m: &DMatrix<Complex64>, k: u32) -> DMatrix<Complex64> {
    let mut acc = DMatrix::identity(m.nrows(), m.ncols());
    let mut base = m.clone();
    let mut e = k;
    while e > 0 {
        if e & 1 == 1 {
            acc = &acc * &base;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    acc
}

/// Largest singular value, via the top eigenvalue of A†A.
pub fn spectral_norm(m: &DMatrix<Complex64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let g = m.adjoint() * m;
    let g = (&g + g.adjoint()) * Complex64::new(0.5, 0.0);
    g.symmetric_eigen().eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b)).max(0.0).sqrt()
}

/// σ on the middle and front regions (ascending qubit order), back traced.
pub fn reduced_state(circuit: &LatticeCircuit, regions: &CutRegions) -> Result<DensityOperator, OracleError> {
    let n = circuit.num_qubits();
    if n > DEFAULT_CAP {
        return Err(OracleError::Capacity { needed: n, cap: DEFAULT_CAP });
    }
    let psi = apply_circuit(&StateVector::zero((0..n).collect()), circuit)?;
    let keep: Vec<usize> = regions.middle.union(&regions.front).copied().collect();
    DensityOperator::reduced(&psi, &keep)
}

pub fn postselect_zero(op: &DensityOperator, register: &QubitSet) -> Result<DensityOperator, OracleError> {
    op.postselect_zero(&register.iter().copied().collect::<Vec<_>>())
}

pub fn spectral(op: &DensityOperator) -> Result<Vec<(f64, DVector<Complex64>)>, OracleError> {
    op.spectral()
}

/// Output of a synthesis after Γ, the post-selection of M and the cut
/// operators: an unnormalized vector over the active traced and output
/// qubits. Traced qubits untouched by Γ are omitted (they stay |0⟩).
#[derive(Clone, Debug)]
pub struct SynthesisState {
    pub state: StateVector,
    pub traced: Vec<usize>,
    pub output: Vec<usize>,
}

impl SynthesisState {
    /// ⟨0_N|φ|0_N⟩.
    pub fn value(&self) -> f64 {
        match self.state.postselect_zero(&self.output) {
            Ok(v) => v.norm_sqr(),
            Err(_) => unreachable!("output qubits belong to the state"),
        }
    }
}

pub fn evolve_synthesis(s: &Synthesis, cap: usize) -> Result<SynthesisState, OracleError> {
    let mut region: QubitSet = s.postselected.union(&s.output).copied().collect();
    for op in &s.ops {
        region.extend(op.support.iter().copied());
    }
    let gamma = s.gamma.restrict_to_past_cone(&region);
    let mut active = region.clone();
    active.extend(gamma.touched());
    if active.len() > cap {
        return Err(OracleError::Capacity { needed: active.len(), cap });
    }
    let order: Vec<usize> = active.iter().copied().collect();
    let psi = apply_circuit(&StateVector::zero(order), &gamma)?;
    let post: Vec<usize> = s.postselected.iter().copied().collect();
    let mut state = psi.postselect_zero(&post)?;
    for op in &s.ops {
        apply_cut_op(&mut state, op)?;
    }
    let traced = state.qubits.iter().copied().filter(|q| s.traced.contains(q)).collect();
    let output = s.output.iter().copied().collect();
    Ok(SynthesisState { state, traced, output })
}

fn apply_cut_op(state: &mut StateVector, op: &CutOp) -> Result<(), OracleError> {
    match &op.kind {
        crate::synthesis::CutOpKind::Dense(m) => state.apply_operator(&op.support, m),
        crate::synthesis::CutOpKind::LowRank { scale, vectors } => {
            let (m, cols) = state.split(&op.support)?;
            let mut out = DMatrix::zeros(m.nrows(), m.ncols());
            for v in vectors {
                let overlaps = v.adjoint() * &m;
                out += v * overlaps;
            }
            out *= Complex64::new(*scale, 0.0);
            *state = StateVector::from_split(&out, &op.support, &cols);
            Ok(())
        }
    }
}

pub fn synthesis_value_exact(s: &Synthesis) -> Result<f64, OracleError> {
    synthesis_value_with_cap(s, DEFAULT_CAP)
}

pub fn synthesis_value_with_cap(s: &Synthesis, cap: usize) -> Result<f64, OracleError> {
    Ok(evolve_synthesis(s, cap)?.value())
}

/// Brute-force ⟨0_N|φ|0_N⟩ from the full unitary, with cut operators
/// embedded densely. Shares no kernel with [`evolve_synthesis`].
pub fn synthesis_value_unitary(s: &Synthesis) -> f64 {
    let n = s.gamma.num_qubits();
    let u = full_unitary(&s.gamma);
    let mut psi: DVector<Complex64> = u.column(0).into_owned();
    let pos: HashMap<usize, usize> = (0..n).map(|q| (q, n - 1 - q)).collect();
    // post-select M by zeroing amplitudes with any M bit set
    let mmask: usize = s.postselected.iter().map(|q| 1usize << pos[q]).sum();
    for (i, a) in psi.iter_mut().enumerate() {
        if i & mmask != 0 {
            *a = C0;
        }
    }
    for op in &s.ops {
        let dense = op.dense_matrix();
        let mut full = DMatrix::zeros(1 << n, 1 << n);
        let smask: usize = op.support.iter().map(|q| 1usize << pos[q]).sum();
        let sub = |i: usize| op.support.iter().fold(0usize, |acc, q| acc << 1 | (i >> pos[q] & 1));
        for r in 0..1usize << n {
            for c in 0..1usize << n {
                if r & !smask == c & !smask {
                    full[(r, c)] = dense[(sub(r), sub(c))];
                }
            }
        }
        psi = full * psi;
    }
    let nmask: usize = s.output.iter().map(|q| 1usize << pos[q]).sum();
    psi.iter().enumerate().filter(|(i, _)| i & (nmask | mmask) == 0).map(|(_, a)| a.norm_sqr()).sum()
}
