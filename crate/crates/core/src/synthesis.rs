//! Syntheses (Γ, L, M, N) and the cut machinery used by the recursive
//! estimator.
//!
//! A synthesis may carry an ordered list of cut operators applied to its
//! output after Γ and before the final read-out. Each is a non-unitary
//! operator realized as a block with one post-selected flag, so it fits the
//! (Γ, L, M, N) picture with the flag counted in M.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geomcircuit::{LatticeCircuit, QubitSet, Slice};
use crate::oracle::{self, DensityOperator, OracleError, StateVector, DEFAULT_CAP};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("non-heavy slice {0:?}: post-selected weight is zero")]
    NonHeavy(Slice),
    #[error("slice {0:?} is not inside the output register")]
    SliceOutside(Slice),
    #[error("slices {0:?} and {1:?} overlap or are out of order")]
    SliceOrder(Slice, Slice),
    #[error("registers do not partition the lattice: {0}")]
    BadPartition(String),
    #[error("invalid cut calculus: {0}")]
    BadCalculus(String),
}

#[derive(Clone, Debug, PartialEq)]
pub enum CutOpKind {
    /// `scale · Σ |v⟩⟨v|` over orthonormal `vectors`.
    LowRank { scale: f64, vectors: Vec<DVector<Complex64>> },
    Dense(DMatrix<Complex64>),
}

/// Operator on `support` (ascending qubit order) applied to the amplitude.
#[derive(Clone, Debug, PartialEq)]
pub struct CutOp {
    pub support: Vec<usize>,
    pub kind: CutOpKind,
}

impl CutOp {
    pub fn dense_matrix(&self) -> DMatrix<Complex64> {
        match &self.kind {
            CutOpKind::Dense(m) => m.clone(),
            CutOpKind::LowRank { scale, vectors } => {
                let d = 1usize << self.support.len();
                let mut m = DMatrix::zeros(d, d);
                for v in vectors {
                    m += v * v.adjoint();
                }
                m * Complex64::new(*scale, 0.0)
            }
        }
    }

    pub fn rank(&self) -> usize {
        match &self.kind {
            CutOpKind::LowRank { vectors, .. } => vectors.len(),
            CutOpKind::Dense(m) => m.nrows(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Synthesis {
    pub gamma: LatticeCircuit,
    /// L: traced out.
    pub traced: QubitSet,
    /// M: post-selected onto |0⟩.
    pub postselected: QubitSet,
    /// N: output register.
    pub output: QubitSet,
    pub ops: Vec<CutOp>,
    /// Declared site lattice; its length is the working dimension.
    pub dims: Vec<usize>,
    /// Widths absorbed by dimension reduction, oldest first.
    pub thickness: Vec<usize>,
}

impl Synthesis {
    pub fn dimension(&self) -> usize {
        self.dims.len()
    }

    pub fn cut_axis(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn depth(&self) -> usize {
        self.gamma.depth
    }

    pub fn num_qubits(&self) -> usize {
        self.gamma.num_qubits()
    }

    /// Bounding interval of the output register along `axis`.
    pub fn output_extent(&self, axis: usize) -> Option<(usize, usize)> {
        self.gamma.extent(&self.output, axis)
    }

    /// Output width along the current cut axis; 0 when the output is empty.
    pub fn width(&self) -> usize {
        self.output_extent(self.cut_axis()).map_or(0, |(lo, hi)| hi - lo)
    }

    pub fn check(&self) -> Result<(), SynthError> {
        let n = self.num_qubits();
        let total = self.traced.len() + self.postselected.len() + self.output.len();
        let union: QubitSet = self.traced.iter().chain(&self.postselected).chain(&self.output).copied().collect();
        if total != n || union.len() != n || union.iter().any(|&q| q >= n) {
            return Err(SynthError::BadPartition(format!("{total} tagged qubits on a lattice of {n}")));
        }
        if self.dims.len() > self.gamma.rank() || self.dims[..] != self.gamma.dims[..self.dims.len()] {
            return Err(SynthError::BadPartition("declared dims are not a prefix of the lattice".into()));
        }
        Ok(())
    }

    /// Same Γ, L, M, N declared one dimension lower; the absorbed width goes
    /// onto the thickness ledger.
    pub fn reduce_dimension(&self) -> Synthesis {
        let mut out = self.clone();
        let w = self.width();
        out.dims.pop();
        out.thickness.push(w);
        out
    }

    /// Output qubits whose coordinate along the cut axis lies below, inside
    /// and above `slice`.
    pub fn partition_output(&self, slice: &Slice) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
        let (mut b, mut m, mut f) = (Vec::new(), Vec::new(), Vec::new());
        for &q in &self.output {
            let x = self.gamma.axis_coord(q, slice.axis);
            if x < slice.lo {
                b.push(q);
            } else if x < slice.hi {
                m.push(q);
            } else {
                f.push(q);
            }
        }
        (b, m, f)
    }

    fn contains_slice(&self, slice: &Slice) -> bool {
        slice.axis == self.cut_axis()
            && self.output_extent(slice.axis).is_some_and(|(lo, hi)| slice.within(lo, hi))
    }

    /// Moves `qs` into M.
    fn postselect_more(&mut self, qs: &[usize]) {
        for q in qs {
            self.output.remove(q);
            self.traced.remove(q);
            self.postselected.insert(*q);
        }
    }

    /// Moves `qs` into L.
    fn trace_more(&mut self, qs: &[usize]) {
        for q in qs {
            self.output.remove(q);
            self.traced.insert(*q);
        }
    }
}

/// L = M = ∅, N = every qubit.
pub fn synthesis_of_circuit(circuit: &LatticeCircuit) -> Synthesis {
    Synthesis {
        gamma: circuit.clone(),
        traced: QubitSet::new(),
        postselected: QubitSet::new(),
        output: circuit.all_qubits(),
        ops: Vec::new(),
        dims: circuit.dims.clone(),
        thickness: Vec::new(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum CalculusMode {
    /// Π projects onto the eigenvectors of ρ whose eigenvalue is within a
    /// relative distance `tau` of the largest one.
    ExactSpectral { tau: f64 },
    /// Cut operators are powers of ρ.
    PowerEncoding,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutCalculus {
    pub mode: CalculusMode,
    pub k: u32,
    pub t: u32,
}

impl CutCalculus {
    pub fn exact(k: u32, t: u32) -> Self {
        CutCalculus { mode: CalculusMode::ExactSpectral { tau: 1e-6 }, k, t }
    }

    pub fn power(k: u32, t: u32) -> Self {
        CutCalculus { mode: CalculusMode::PowerEncoding, k, t }
    }

    pub fn check(&self) -> Result<(), SynthError> {
        if self.k == 0 || self.t == 0 {
            return Err(SynthError::BadCalculus("K and T must be at least 1".into()));
        }
        if let CalculusMode::ExactSpectral { tau } = self.mode {
            if !(tau > 0.0 && tau < 1.0) {
                return Err(SynthError::BadCalculus(format!("tau {tau} outside (0,1)")));
            }
        }
        Ok(())
    }
}

/// Eigenpairs with non-zero eigenvalue, descending.
pub type Spectrum = Vec<(f64, DVector<Complex64>)>;

/// Reduced cut states of one slice of a synthesis and the derived cut
/// operators.
#[derive(Clone, Debug)]
pub struct CutData {
    pub slice: Slice,
    pub back: Vec<usize>,
    pub middle: Vec<usize>,
    pub front: Vec<usize>,
    /// Evolved state with the slice post-selected.
    pub post: StateVector,
    pub kappa: f64,
    /// Operator for the left child, on `back`.
    pub back_op: CutOp,
    /// Operator for the right child, on `front`.
    pub front_op: CutOp,
    /// Projector-like operator Π^K on `front`.
    pub front_projector: CutOp,
}

impl CutData {
    pub fn rho_back(&self) -> Result<DensityOperator, SynthError> {
        Ok(DensityOperator::reduced(&self.post, &self.back)?)
    }

    pub fn rho_front(&self) -> Result<DensityOperator, SynthError> {
        Ok(DensityOperator::reduced(&self.post, &self.front)?)
    }
}

/// Eigenpairs of `rho`, clamped at zero.
fn eigen(rho: &DensityOperator) -> Result<Spectrum, SynthError> {
    if rho.dim() == 1 {
        return Ok(vec![(rho.trace().max(0.0), DVector::from_element(1, Complex64::new(1.0, 0.0)))]);
    }
    Ok(rho.spectral()?.into_iter().map(|(l, v)| (l.max(0.0), v)).collect())
}

/// (tr ρ^{2T})^{1/2T}, evaluated relative to the top eigenvalue.
pub fn kappa_of(rho: &DensityOperator, t: u32) -> Result<f64, SynthError> {
    kappa_of_spectrum(&eigen(rho)?, t)
}

pub fn kappa_of_spectrum(eig: &Spectrum, t: u32) -> Result<f64, SynthError> {
    let top = eig.first().map_or(0.0, |e| e.0);
    if top <= 0.0 {
        return Err(SynthError::BadCalculus("zero operator".into()));
    }
    let p = 2.0 * t as f64;
    let s: f64 = eig.iter().map(|(l, _)| (l / top).powf(p)).sum();
    Ok(top * s.powf(1.0 / p))
}

fn dominant_vectors(eig: &Spectrum, tau: f64) -> Vec<DVector<Complex64>> {
    let top = eig.first().map_or(0.0, |e| e.0);
    eig.iter().filter(|(l, _)| *l >= top * (1.0 - tau) && *l > 0.0).map(|(_, v)| v.clone()).collect()
}

/// The three cut operators of one side in the chosen calculus.
fn side_ops(
    support: &[usize],
    post: &StateVector,
    eig: &Spectrum,
    kappa: f64,
    calc: &CutCalculus,
) -> Result<(CutOp, CutOp), SynthError> {
    let op = |kind| CutOp { support: support.to_vec(), kind };
    Ok(match calc.mode {
        CalculusMode::ExactSpectral { tau } => {
            let v = dominant_vectors(eig, tau);
            (
                op(CutOpKind::LowRank { scale: kappa.powi(calc.k as i32), vectors: v.clone() }),
                op(CutOpKind::LowRank { scale: 1.0, vectors: v }),
            )
        }
        CalculusMode::PowerEncoding => {
            let rho = DensityOperator::reduced(post, support)?;
            let scaled = &rho.matrix * Complex64::new(1.0 / kappa, 0.0);
            (op(CutOpKind::Dense(oracle::matrix_power(&rho.matrix, calc.k))), op(CutOpKind::Dense(oracle::matrix_power(&scaled, 2 * calc.k))))
        }
    })
}

pub fn cut_data(s: &Synthesis, slice: &Slice, calc: &CutCalculus) -> Result<CutData, SynthError> {
    calc.check()?;
    if !s.contains_slice(slice) {
        return Err(SynthError::SliceOutside(*slice));
    }
    let (back, middle, front) = s.partition_output(slice);
    let evolved = oracle::evolve_synthesis(s, DEFAULT_CAP)?;
    let post = evolved.state.postselect_zero(&middle)?;
    if post.norm_sqr() <= f64::MIN_POSITIVE {
        return Err(SynthError::NonHeavy(*slice));
    }
    let eig_front = oracle::reduced_spectrum(&post, &front)?;
    let eig_back = oracle::reduced_spectrum(&post, &back)?;
    let kappa = kappa_of_spectrum(&eig_front, calc.t)?;
    let (back_op, _) = side_ops(&back, &post, &eig_back, kappa, calc)?;
    let (front_op, front_projector) = side_ops(&front, &post, &eig_front, kappa, calc)?;
    Ok(CutData { slice: *slice, back, middle, front, post, kappa, back_op, front_op, front_projector })
}

/// Cut operator Π^K on the front side of `slice`.
pub fn cut_projector(s: &Synthesis, slice: &Slice, calc: &CutCalculus) -> Result<CutOp, SynthError> {
    Ok(cut_data(s, slice, calc)?.front_projector)
}

pub fn kappa(s: &Synthesis, slice: &Slice, t: u32, _eps: f64) -> Result<f64, SynthError> {
    let calc = CutCalculus::exact(1, t);
    Ok(cut_data(s, slice, &calc)?.kappa)
}

/// S_{L,i}: output = back of the cut, front traced.
pub fn left_child(s: &Synthesis, cut: &CutData) -> Synthesis {
    let mut c = s.clone();
    c.postselect_more(&cut.middle);
    c.trace_more(&cut.front);
    c.ops.push(cut.back_op.clone());
    c
}

/// S_{i,R}: output = front of the cut, back traced.
pub fn right_child(s: &Synthesis, cut: &CutData) -> Synthesis {
    let mut c = s.clone();
    c.postselect_more(&cut.middle);
    c.trace_more(&cut.back);
    c.ops.push(cut.front_op.clone());
    c
}

/// Middle segment between two cuts with cut operators on both ends.
#[derive(Clone, Debug)]
pub struct MiddleSegment {
    pub synth: Synthesis,
    pub left: Slice,
    pub right: Slice,
}

pub fn middle_segment(s: &Synthesis, left: &CutData, right: &CutData) -> Result<MiddleSegment, SynthError> {
    if left.slice.hi > right.slice.lo {
        return Err(SynthError::SliceOrder(left.slice, right.slice));
    }
    let mut c = s.clone();
    c.postselect_more(&left.middle);
    c.postselect_more(&right.middle);
    c.trace_more(&left.back);
    c.trace_more(&right.front);
    c.ops.push(left.back_op.clone());
    c.ops.push(right.front_op.clone());
    Ok(MiddleSegment { synth: c, left: left.slice, right: right.slice })
}

impl MiddleSegment {
    /// The σ-term synthesis: every slice in `sigma` post-selected and its
    /// front projector applied, in ascending order. Each projector is
    /// computed from the plain middle segment.
    pub fn with_cuts(&self, sigma: &[Slice], calc: &CutCalculus) -> Result<Synthesis, SynthError> {
        let mut sorted = sigma.to_vec();
        sorted.sort();
        for w in sorted.windows(2) {
            if w[0].hi > w[1].lo {
                return Err(SynthError::SliceOrder(w[0], w[1]));
            }
        }
        let mut out = self.synth.clone();
        for k in &sorted {
            let cd = cut_data(&self.synth, k, calc)?;
            out.postselect_more(&cd.middle);
            out.ops.push(cd.front_projector);
        }
        Ok(out)
    }
}

#[derive(Clone, Debug)]
pub struct Split {
    pub left: Synthesis,
    pub middle: Option<MiddleSegment>,
    pub right: Synthesis,
    pub kappa_left: f64,
    pub kappa_right: Option<f64>,
}

/// With `j = None`: (S_{L,i}, S_{i,R}). Otherwise (S_{L,i}, S_{i,j}, S_{j,R}).
pub fn split_at_cuts(s: &Synthesis, i: &Slice, j: Option<&Slice>, calc: &CutCalculus) -> Result<Split, SynthError> {
    let ci = cut_data(s, i, calc)?;
    match j {
        None => Ok(Split {
            left: left_child(s, &ci),
            middle: None,
            right: right_child(s, &ci),
            kappa_left: ci.kappa,
            kappa_right: None,
        }),
        Some(j) => {
            if i.hi > j.lo {
                return Err(SynthError::SliceOrder(*i, *j));
            }
            let cj = cut_data(s, j, calc)?;
            Ok(Split {
                left: left_child(s, &ci),
                middle: Some(middle_segment(s, &ci, &cj)?),
                right: right_child(s, &cj),
                kappa_left: ci.kappa,
                kappa_right: Some(cj.kappa),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geomcircuit::Gate;
    use approx::assert_abs_diff_eq;

    fn h_all(n: usize) -> LatticeCircuit {
        let mut c = LatticeCircuit::identity(vec![n], 1);
        for q in 0..n {
            c.layers[0].push(Gate::named("H", vec![vec![q]]).unwrap());
        }
        c
    }

    #[test]
    fn trivial_synthesis_values() {
        let id = synthesis_of_circuit(&LatticeCircuit::identity(vec![2, 2], 1));
        assert!(id.check().is_ok());
        assert_eq!(oracle::synthesis_value_exact(&id).unwrap(), 1.0);
        let hh = synthesis_of_circuit(&h_all(2));
        assert_abs_diff_eq!(oracle::synthesis_value_exact(&hh).unwrap(), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn definition_examples() {
        // H on the single output qubit
        let s = synthesis_of_circuit(&h_all(1));
        assert_abs_diff_eq!(oracle::synthesis_value_exact(&s).unwrap(), 0.5, epsilon = 1e-15);
        // H on a post-selected qubit, untouched output qubit
        let mut c = LatticeCircuit::identity(vec![2], 1);
        c.layers[0].push(Gate::named("H", vec![vec![0]]).unwrap());
        let mut s = synthesis_of_circuit(&c);
        s.output.remove(&0);
        s.postselected.insert(0);
        assert!(s.check().is_ok());
        assert_abs_diff_eq!(oracle::synthesis_value_exact(&s).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn kappa_examples() {
        let one = Complex64::new(1.0, 0.0);
        let pure = DensityOperator::new(vec![0], DMatrix::from_row_slice(2, 2, &[one * 0.3, one * 0.0, one * 0.0, one * 0.0]));
        for t in 1..5 {
            assert_abs_diff_eq!(kappa_of(&pure, t).unwrap(), 0.3, epsilon = 1e-15);
        }
        let half = DensityOperator::new(vec![0], DMatrix::identity(2, 2) * Complex64::new(0.5, 0.0));
        assert_abs_diff_eq!(kappa_of(&half, 1).unwrap(), std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-15);
        let p = dominant_vectors(&eigen(&half).unwrap(), 1e-6);
        assert_eq!(p.len(), 2);
        let p = dominant_vectors(&eigen(&pure).unwrap(), 1e-6);
        assert_eq!(p.len(), 1);
        assert_abs_diff_eq!(p[0][0].norm(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn product_split_is_exact() {
        // H on every qubit: ρ_F is rank one everywhere
        let c = h_all(6);
        let s = synthesis_of_circuit(&c);
        let calc = CutCalculus::exact(2, 2);
        let sp = split_at_cuts(&s, &Slice::new(0, 2, 4), None, &calc).unwrap();
        let vl = oracle::synthesis_value_exact(&sp.left).unwrap();
        let vr = oracle::synthesis_value_exact(&sp.right).unwrap();
        let k = sp.kappa_left;
        assert_abs_diff_eq!(k, 0.25, epsilon = 1e-14);
        let est = vl * vr / k.powi(4 * 2 + 1);
        assert_abs_diff_eq!(est, oracle::synthesis_value_exact(&s).unwrap(), epsilon = 1e-14);

        let id = synthesis_of_circuit(&LatticeCircuit::identity(vec![6], 1));
        let sp = split_at_cuts(&id, &Slice::new(0, 2, 4), None, &calc).unwrap();
        assert_abs_diff_eq!(oracle::synthesis_value_exact(&sp.left).unwrap(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(oracle::synthesis_value_exact(&sp.right).unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn split_rejects_bad_slices() {
        let s = synthesis_of_circuit(&LatticeCircuit::identity(vec![6], 1));
        let calc = CutCalculus::exact(1, 1);
        assert!(matches!(
            split_at_cuts(&s, &Slice::new(0, 5, 7), None, &calc),
            Err(SynthError::SliceOutside(_))
        ));
        assert!(matches!(
            split_at_cuts(&s, &Slice::new(0, 2, 4), Some(&Slice::new(0, 3, 5)), &calc),
            Err(SynthError::SliceOrder(..))
        ));
    }

    #[test]
    fn non_heavy_slice() {
        let mut c = LatticeCircuit::identity(vec![4], 1);
        for q in 0..4 {
            c.layers[0].push(Gate::named("X", vec![vec![q]]).unwrap());
        }
        let s = synthesis_of_circuit(&c);
        assert!(matches!(kappa(&s, &Slice::new(0, 1, 3), 2, 0.0), Err(SynthError::NonHeavy(_))));
    }

    #[test]
    fn reduce_dimension_keeps_value() {
        let s = synthesis_of_circuit(&h_all(3).embed(3));
        let r = s.reduce_dimension();
        assert_eq!(r.dims, vec![1, 1]);
        assert_eq!(r.thickness, vec![3]);
        assert_eq!(oracle::synthesis_value_exact(&r).unwrap(), oracle::synthesis_value_exact(&s).unwrap());
    }
}
