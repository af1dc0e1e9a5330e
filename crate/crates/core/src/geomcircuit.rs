//! Layered circuits on rectangular qubit lattices.
//!
//! Qubits are addressed either by coordinate or by their row-major index
//! (last axis fastest). Register sets throughout the crate are sets of
//! row-major indices.

use std::collections::BTreeSet;
use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Coord = Vec<usize>;
pub type QubitSet = BTreeSet<usize>;

const C0: Complex64 = Complex64::new(0.0, 0.0);
const C1: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("insufficient light-cone separation: slice width {width} < 2d = {min}")]
    InsufficientSeparation { width: usize, min: usize },
    #[error("slice [{lo},{hi}) on axis {axis} is outside the lattice")]
    SliceOutOfRange { axis: usize, lo: usize, hi: usize },
    #[error("unknown gate name `{0}`")]
    UnknownGate(String),
    #[error("gate matrix has {got} entries, expected {expected}")]
    MatrixShape { got: usize, expected: usize },
    #[error("coordinate {0:?} has wrong rank or lies outside the lattice")]
    BadCoord(Coord),
    #[error("circuit file: {0}")]
    Parse(String),
}

/// A 1- or 2-qubit gate. `matrix` is row-major, first listed qubit is the
/// most significant bit.
#[derive(Clone, Debug, PartialEq)]
pub struct Gate {
    pub matrix: Vec<Complex64>,
    pub qubits: Vec<Coord>,
    pub label: Option<String>,
}

impl Gate {
    pub fn new(matrix: Vec<Complex64>, qubits: Vec<Coord>) -> Self {
        Gate { matrix, qubits, label: None }
    }

    pub fn named(name: &str, qubits: Vec<Coord>) -> Result<Self, GeomError> {
        let matrix = named_matrix(name)?;
        Ok(Gate { matrix, qubits, label: Some(name.to_string()) })
    }

    pub fn arity(&self) -> usize {
        self.qubits.len()
    }

    pub fn dagger(&self) -> Gate {
        let dim = 1usize << self.qubits.len();
        let mut m = vec![C0; dim * dim];
        for r in 0..dim {
            for c in 0..dim {
                m[c * dim + r] = self.matrix[r * dim + c].conj();
            }
        }
        Gate { matrix: m, qubits: self.qubits.clone(), label: self.label.as_ref().map(|l| format!("{l}†")) }
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        let dim = 1usize << self.qubits.len();
        if self.matrix.len() != dim * dim {
            return false;
        }
        for r in 0..dim {
            for c in 0..dim {
                let mut acc = C0;
                for k in 0..dim {
                    acc += self.matrix[k * dim + r].conj() * self.matrix[k * dim + c];
                }
                let want = if r == c { C1 } else { C0 };
                if (acc - want).norm() > tol {
                    return false;
                }
            }
        }
        true
    }
}

pub fn swap_matrix() -> Vec<Complex64> {
    let mut m = vec![C0; 16];
    m[0] = C1;
    m[1 * 4 + 2] = C1;
    m[2 * 4 + 1] = C1;
    m[15] = C1;
    m
}

pub fn identity_matrix(qubits: usize) -> Vec<Complex64> {
    let dim = 1usize << qubits;
    let mut m = vec![C0; dim * dim];
    for i in 0..dim {
        m[i * dim + i] = C1;
    }
    m
}

/// Matrix for a named gate.
pub fn named_matrix(name: &str) -> Result<Vec<Complex64>, GeomError> {
    let r = |x: f64| Complex64::new(x, 0.0);
    let h = FRAC_1_SQRT_2;
    let m = match name.to_ascii_uppercase().as_str() {
        "I" | "ID" => identity_matrix(1),
        "H" => vec![r(h), r(h), r(h), r(-h)],
        "X" => vec![C0, C1, C1, C0],
        "Y" => vec![C0, Complex64::new(0.0, -1.0), Complex64::new(0.0, 1.0), C0],
        "Z" => vec![C1, C0, C0, r(-1.0)],
        "S" => vec![C1, C0, C0, Complex64::new(0.0, 1.0)],
        "T" => vec![C1, C0, C0, Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_4)],
        "CZ" => {
            let mut m = identity_matrix(2);
            m[15] = r(-1.0);
            m
        }
        "CNOT" | "CX" => {
            let mut m = identity_matrix(2);
            m[10] = C0;
            m[15] = C0;
            m[11] = C1;
            m[14] = C1;
            m
        }
        "SWAP" => swap_matrix(),
        _ => return Err(GeomError::UnknownGate(name.to_string())),
    };
    Ok(m)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatticeCircuit {
    pub dims: Vec<usize>,
    /// Declared depth; `validate` checks it against the layer count.
    pub depth: usize,
    pub layers: Vec<Vec<Gate>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    OutOfLattice { layer: usize, gate: usize, coord: Coord },
    NonLocalGate { layer: usize, gate: usize, distance: usize },
    OverlappingSupports { layer: usize, coord: Coord },
    DepthMismatch { declared: usize, layers: usize },
    BadGateShape { layer: usize, gate: usize },
    NonUnitary { layer: usize, gate: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::OutOfLattice { layer, gate, coord } => {
                write!(f, "layer {layer} gate {gate}: coordinate {coord:?} outside lattice")
            }
            Violation::NonLocalGate { layer, gate, distance } => {
                write!(f, "layer {layer} gate {gate}: non-local gate (L-inf distance {distance})")
            }
            Violation::OverlappingSupports { layer, coord } => {
                write!(f, "layer {layer}: overlapping supports at {coord:?}")
            }
            Violation::DepthMismatch { declared, layers } => {
                write!(f, "declared depth {declared} but {layers} layers")
            }
            Violation::BadGateShape { layer, gate } => {
                write!(f, "layer {layer} gate {gate}: matrix size does not match qubit count")
            }
            Violation::NonUnitary { layer, gate } => write!(f, "layer {layer} gate {gate}: matrix not unitary"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Half-open interval `[lo, hi)` along one lattice axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Slice {
    pub axis: usize,
    pub lo: usize,
    pub hi: usize,
}

impl Slice {
    pub fn new(axis: usize, lo: usize, hi: usize) -> Self {
        Slice { axis, lo, hi }
    }
    pub fn width(&self) -> usize {
        self.hi - self.lo
    }
    pub fn within(&self, lo: usize, hi: usize) -> bool {
        self.lo >= lo && self.hi <= hi
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CutRegions {
    pub slice: Slice,
    pub back: QubitSet,
    pub middle: QubitSet,
    pub front: QubitSet,
}

impl LatticeCircuit {
    /// Depth-`depth` circuit with no gates.
    pub fn identity(dims: Vec<usize>, depth: usize) -> Self {
        LatticeCircuit { dims, depth, layers: vec![Vec::new(); depth] }
    }

    pub fn from_layers(dims: Vec<usize>, layers: Vec<Vec<Gate>>) -> Self {
        LatticeCircuit { depth: layers.len(), dims, layers }
    }

    pub fn num_qubits(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn gate_count(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    pub fn contains(&self, c: &[usize]) -> bool {
        c.len() == self.dims.len() && c.iter().zip(&self.dims).all(|(x, w)| x < w)
    }

    pub fn index_of(&self, c: &[usize]) -> Result<usize, GeomError> {
        if !self.contains(c) {
            return Err(GeomError::BadCoord(c.to_vec()));
        }
        Ok(c.iter().zip(&self.dims).fold(0, |acc, (x, w)| acc * w + x))
    }

    pub fn coord_of(&self, mut idx: usize) -> Coord {
        let mut c = vec![0; self.dims.len()];
        for a in (0..self.dims.len()).rev() {
            c[a] = idx % self.dims[a];
            idx /= self.dims[a];
        }
        c
    }

    pub fn all_qubits(&self) -> QubitSet {
        (0..self.num_qubits()).collect()
    }

    /// Row-major indices of a gate's qubits. Panics on coordinates outside
    /// the lattice; callers should `validate` first.
    pub fn gate_ids(&self, g: &Gate) -> Vec<usize> {
        g.qubits.iter().map(|c| self.index_of(c).expect("gate coordinate outside lattice")).collect()
    }

    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        if self.depth != self.layers.len() {
            violations.push(Violation::DepthMismatch { declared: self.depth, layers: self.layers.len() });
        }
        for (li, layer) in self.layers.iter().enumerate() {
            let mut used: BTreeSet<Coord> = BTreeSet::new();
            for (gi, g) in layer.iter().enumerate() {
                let dim = 1usize << g.qubits.len();
                if g.qubits.is_empty() || g.qubits.len() > 2 || g.matrix.len() != dim * dim {
                    violations.push(Violation::BadGateShape { layer: li, gate: gi });
                } else if !g.is_unitary(1e-10) {
                    violations.push(Violation::NonUnitary { layer: li, gate: gi });
                }
                for c in &g.qubits {
                    if !self.contains(c) {
                        violations.push(Violation::OutOfLattice { layer: li, gate: gi, coord: c.clone() });
                    }
                    if !used.insert(c.clone()) {
                        violations.push(Violation::OverlappingSupports { layer: li, coord: c.clone() });
                    }
                }
                if g.qubits.len() == 2 {
                    let d = linf(&g.qubits[0], &g.qubits[1]);
                    if d > 1 || d == 0 && g.qubits[0].len() != g.qubits[1].len() {
                        violations.push(Violation::NonLocalGate { layer: li, gate: gi, distance: d });
                    }
                }
            }
        }
        ValidationReport { violations }
    }

    /// Qubits reachable from `seed` through gate supports.
    pub fn light_cone(&self, seed: &QubitSet, direction: Direction) -> QubitSet {
        let mut cone = seed.clone();
        let visit = |layer: &Vec<Gate>, cone: &mut QubitSet| {
            for g in layer {
                let ids = self.gate_ids(g);
                if ids.iter().any(|q| cone.contains(q)) {
                    cone.extend(ids);
                }
            }
        };
        match direction {
            Direction::Forward => self.layers.iter().for_each(|l| visit(l, &mut cone)),
            Direction::Backward => self.layers.iter().rev().for_each(|l| visit(l, &mut cone)),
        }
        cone
    }

    /// Drops every gate outside the past light cone of `region`. The
    /// reduced state on `region` is unchanged.
    pub fn restrict_to_past_cone(&self, region: &QubitSet) -> LatticeCircuit {
        let mut cone = region.clone();
        let mut layers: Vec<Vec<Gate>> = vec![Vec::new(); self.layers.len()];
        for (li, layer) in self.layers.iter().enumerate().rev() {
            for g in layer {
                let ids = self.gate_ids(g);
                if ids.iter().any(|q| cone.contains(q)) {
                    cone.extend(ids);
                    layers[li].push(g.clone());
                }
            }
        }
        LatticeCircuit { dims: self.dims.clone(), depth: self.depth, layers }
    }

    /// Qubits touched by at least one gate.
    pub fn touched(&self) -> QubitSet {
        self.layers.iter().flatten().flat_map(|g| self.gate_ids(g)).collect()
    }

    pub fn dagger(&self) -> LatticeCircuit {
        let layers = self.layers.iter().rev().map(|l| l.iter().map(Gate::dagger).collect()).collect();
        LatticeCircuit { dims: self.dims.clone(), depth: self.depth, layers }
    }

    /// Coordinate along `axis` of a row-major index.
    pub fn axis_coord(&self, idx: usize, axis: usize) -> usize {
        let stride: usize = self.dims[axis + 1..].iter().product();
        (idx / stride) % self.dims[axis]
    }

    /// Bounding interval of `set` along `axis`, or `None` for the empty set.
    pub fn extent(&self, set: &QubitSet, axis: usize) -> Option<(usize, usize)> {
        let mut it = set.iter().map(|&q| self.axis_coord(q, axis));
        let first = it.next()?;
        let (lo, hi) = it.fold((first, first), |(lo, hi), x| (lo.min(x), hi.max(x)));
        Some((lo, hi + 1))
    }

    pub fn cut_regions(&self, slice: &Slice) -> Result<CutRegions, GeomError> {
        if slice.axis >= self.rank() || slice.hi > self.dims[slice.axis] || slice.lo >= slice.hi {
            return Err(GeomError::SliceOutOfRange { axis: slice.axis, lo: slice.lo, hi: slice.hi });
        }
        if slice.width() < 2 * self.depth {
            return Err(GeomError::InsufficientSeparation { width: slice.width(), min: 2 * self.depth });
        }
        let mut regions =
            CutRegions { slice: *slice, back: QubitSet::new(), middle: QubitSet::new(), front: QubitSet::new() };
        for q in 0..self.num_qubits() {
            let x = self.axis_coord(q, slice.axis);
            if x < slice.lo {
                regions.back.insert(q);
            } else if x < slice.hi {
                regions.middle.insert(q);
            } else {
                regions.front.insert(q);
            }
        }
        Ok(regions)
    }

    /// Slices tiling the whole `axis`; see [`slices_in`].
    pub fn enumerate_slices(&self, axis: usize, slice_width: usize, max_gap: usize) -> Vec<Slice> {
        slices_in(axis, 0, self.dims[axis], slice_width, max_gap)
    }

    /// Order-sensitive fingerprint of dims, layers and matrix bits.
    pub fn fingerprint(&self) -> u64 {
        use std::collections::hash_map::DefaultHasher;
        use std::hash::{Hash, Hasher};
        let mut h = DefaultHasher::new();
        self.dims.hash(&mut h);
        self.depth.hash(&mut h);
        for layer in &self.layers {
            layer.len().hash(&mut h);
            for g in layer {
                g.qubits.hash(&mut h);
                for z in &g.matrix {
                    z.re.to_bits().hash(&mut h);
                    z.im.to_bits().hash(&mut h);
                }
            }
        }
        h.finish()
    }

    /// Same circuit on a lattice with extra leading axes of extent 1.
    /// Row-major indices are unchanged.
    pub fn embed(&self, rank: usize) -> LatticeCircuit {
        if rank <= self.rank() {
            return self.clone();
        }
        let pad = rank - self.rank();
        let mut dims = vec![1; pad];
        dims.extend(&self.dims);
        let lift = |c: &Coord| {
            let mut v = vec![0; pad];
            v.extend(c);
            v
        };
        let layers = self
            .layers
            .iter()
            .map(|l| {
                l.iter()
                    .map(|g| Gate { matrix: g.matrix.clone(), qubits: g.qubits.iter().map(lift).collect(), label: g.label.clone() })
                    .collect()
            })
            .collect();
        LatticeCircuit { dims, depth: self.depth, layers }
    }
}

pub fn linf(a: &[usize], b: &[usize]) -> usize {
    a.iter().zip(b).map(|(x, y)| x.abs_diff(*y)).max().unwrap_or(0)
}

/// Slices of `slice_width` inside `[lo, hi)` starting at `lo`, spaced
/// edge-to-edge by `max_gap`.
pub fn slices_in(axis: usize, lo: usize, hi: usize, slice_width: usize, max_gap: usize) -> Vec<Slice> {
    let mut out = Vec::new();
    if slice_width == 0 {
        return out;
    }
    let mut start = lo;
    while start + slice_width <= hi {
        out.push(Slice::new(axis, start, start + slice_width));
        start += slice_width + max_gap;
    }
    out
}

// ---- file format ----

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum GateSpec {
    Name(String),
    Matrix(Vec<[f64; 2]>),
}

#[derive(Serialize, Deserialize)]
struct GateRecord {
    gate: GateSpec,
    qubits: Vec<Coord>,
}

#[derive(Serialize, Deserialize)]
struct CircuitFile {
    dims: Vec<usize>,
    depth: usize,
    layers: Vec<Vec<GateRecord>>,
}

impl LatticeCircuit {
    pub fn from_json(text: &str) -> Result<LatticeCircuit, GeomError> {
        let file: CircuitFile = serde_json::from_str(text).map_err(|e| GeomError::Parse(e.to_string()))?;
        let mut layers = Vec::with_capacity(file.layers.len());
        for layer in file.layers {
            let mut gates = Vec::with_capacity(layer.len());
            for rec in layer {
                let g = match rec.gate {
                    GateSpec::Name(name) => Gate::named(&name, rec.qubits)?,
                    GateSpec::Matrix(entries) => {
                        let expected = 1usize << (2 * rec.qubits.len());
                        if entries.len() != expected {
                            return Err(GeomError::MatrixShape { got: entries.len(), expected });
                        }
                        Gate::new(entries.iter().map(|[re, im]| Complex64::new(*re, *im)).collect(), rec.qubits)
                    }
                };
                gates.push(g);
            }
            layers.push(gates);
        }
        Ok(LatticeCircuit { dims: file.dims, depth: file.depth, layers })
    }

    pub fn to_json(&self) -> String {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                l.iter()
                    .map(|g| GateRecord {
                        gate: match &g.label {
                            Some(name) if named_matrix(name).map(|m| m == g.matrix).unwrap_or(false) => {
                                GateSpec::Name(name.clone())
                            }
                            _ => GateSpec::Matrix(g.matrix.iter().map(|z| [z.re, z.im]).collect()),
                        },
                        qubits: g.qubits.clone(),
                    })
                    .collect()
            })
            .collect();
        let file = CircuitFile { dims: self.dims.clone(), depth: self.depth, layers };
        serde_json::to_string_pretty(&file).expect("circuit serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cz_brick_2d(n: usize) -> LatticeCircuit {
        let mut layer = Vec::new();
        for r in 0..n {
            for c in (0..n - 1).step_by(2) {
                layer.push(Gate::named("CZ", vec![vec![r, c], vec![r, c + 1]]).unwrap());
            }
        }
        LatticeCircuit::from_layers(vec![n, n], vec![layer])
    }

    fn brick_1d(n: usize, depth: usize) -> LatticeCircuit {
        let layers = (0..depth)
            .map(|t| {
                (t % 2..n - 1).step_by(2).map(|i| Gate::named("CZ", vec![vec![i], vec![i + 1]]).unwrap()).collect()
            })
            .collect();
        LatticeCircuit::from_layers(vec![n], layers)
    }

    #[test]
    fn validate_examples() {
        let c = cz_brick_2d(4);
        assert!(c.validate().ok());

        let mut bad = c.clone();
        bad.layers[0].push(Gate::named("CZ", vec![vec![0, 0], vec![2, 0]]).unwrap());
        let rep = bad.validate();
        assert!(rep.violations.iter().any(|v| matches!(v, Violation::NonLocalGate { distance: 2, .. })));

        let mut overlap = LatticeCircuit::identity(vec![4, 4], 1);
        overlap.layers[0].push(Gate::named("CZ", vec![vec![1, 1], vec![1, 2]]).unwrap());
        overlap.layers[0].push(Gate::named("H", vec![vec![1, 1]]).unwrap());
        let rep = overlap.validate();
        assert!(rep.violations.iter().any(|v| matches!(v, Violation::OverlappingSupports { .. })));
    }

    #[test]
    fn validate_depth_and_bounds() {
        let mut c = brick_1d(4, 2);
        c.depth = 3;
        c.layers[0].push(Gate::named("H", vec![vec![9]]).unwrap());
        let rep = c.validate();
        assert!(rep.violations.contains(&Violation::DepthMismatch { declared: 3, layers: 2 }));
        assert!(rep.violations.iter().any(|v| matches!(v, Violation::OutOfLattice { .. })));
    }

    #[test]
    fn light_cone_examples() {
        let id = LatticeCircuit::identity(vec![3, 3], 2);
        let seed: QubitSet = [4].into();
        assert_eq!(id.light_cone(&seed, Direction::Forward), seed);

        let c = cz_brick_2d(4);
        let seed: QubitSet = [c.index_of(&[0, 0]).unwrap()].into();
        let want: QubitSet = [c.index_of(&[0, 0]).unwrap(), c.index_of(&[0, 1]).unwrap()].into();
        assert_eq!(c.light_cone(&seed, Direction::Forward), want);

        // layer 0 pairs (2,3); layer 1 pairs (1,2) and (3,4)
        let b = brick_1d(8, 2);
        let fwd = b.light_cone(&[3].into(), Direction::Forward);
        assert_eq!(fwd, [1, 2, 3, 4].into());
        let back = b.light_cone(&[3].into(), Direction::Backward);
        assert_eq!(back, [2, 3, 4, 5].into());
        assert!(fwd.is_subset(&(1..=5).collect()));
    }

    #[test]
    fn cut_regions_examples() {
        let c = brick_1d(10, 1);
        let r = c.cut_regions(&Slice::new(0, 4, 6)).unwrap();
        assert_eq!(r.back, (0..4).collect());
        assert_eq!(r.middle, [4, 5].into());
        assert_eq!(r.front, (6..10).collect());

        let r = c.cut_regions(&Slice::new(0, 0, 2)).unwrap();
        assert!(r.back.is_empty());
        assert_eq!(r.front, (2..10).collect());

        let c2 = brick_1d(10, 2);
        assert!(matches!(c2.cut_regions(&Slice::new(0, 4, 6)), Err(GeomError::InsufficientSeparation { .. })));
    }

    #[test]
    fn enumerate_examples() {
        let c = LatticeCircuit::identity(vec![40], 1);
        let s = c.enumerate_slices(0, 10, 10);
        assert_eq!(s, vec![Slice::new(0, 0, 10), Slice::new(0, 20, 30)]);
        let c = LatticeCircuit::identity(vec![10], 1);
        assert_eq!(c.enumerate_slices(0, 10, 0), vec![Slice::new(0, 0, 10)]);
        let c = LatticeCircuit::identity(vec![4], 1);
        assert!(c.enumerate_slices(0, 10, 0).is_empty());
    }

    #[test]
    fn index_roundtrip_and_embed() {
        let c = LatticeCircuit::identity(vec![2, 3, 4], 1);
        for q in 0..c.num_qubits() {
            assert_eq!(c.index_of(&c.coord_of(q)).unwrap(), q);
        }
        let b = brick_1d(6, 2);
        let e = b.embed(3);
        assert_eq!(e.dims, vec![1, 1, 6]);
        assert!(e.validate().ok());
        for (l0, l1) in b.layers.iter().zip(&e.layers) {
            for (g0, g1) in l0.iter().zip(l1) {
                assert_eq!(b.gate_ids(g0), e.gate_ids(g1));
            }
        }
    }

    #[test]
    fn json_roundtrip() {
        let mut c = brick_1d(5, 2);
        c.layers[0].push(Gate::new(named_matrix("H").unwrap(), vec![vec![4]]));
        let back = LatticeCircuit::from_json(&c.to_json()).unwrap();
        assert_eq!(back.fingerprint(), c.fingerprint());
        let text = r#"{"dims":[2],"depth":1,"layers":[[{"gate":"CNOT","qubits":[[0],[1]]}]]}"#;
        let parsed = LatticeCircuit::from_json(text).unwrap();
        assert!(parsed.validate().ok());
        assert!(LatticeCircuit::from_json(r#"{"dims":[2],"depth":1,"layers":[[{"gate":"FOO","qubits":[[0]]}]]}"#)
            .is_err());
    }

    #[test]
    fn restrict_keeps_cone_gates() {
        let b = brick_1d(8, 2);
        let r = b.restrict_to_past_cone(&[0].into());
        assert_eq!(r.gate_count(), 1);
    }
}
