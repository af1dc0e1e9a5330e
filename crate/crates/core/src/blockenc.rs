//! Block-encodings of reduced cut states and their powers, built as
//! circuits on an enlarged lattice holding the register copies.
//!
//! Layout: every site `c` of the source lattice gets two extra coordinates
//! `(r, q)`, with `r ∈ [0, k]` the copy index and `q ∈ {0, 1}`. Copy `i`
//! of the whole source lattice (B_i, M'_i, F'_i) sits at `(i, 0)`. The
//! fresh middle register M_i sits at `(i − 1, 1)`. The data region stays
//! at `(0, 0)`, except middle data, which is M_1 at `(0, 1)`.

use std::collections::{BTreeSet, HashMap};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geomcircuit::{swap_matrix, Coord, CutRegions, Gate, LatticeCircuit};
use crate::oracle::{self, DensityOperator, OracleError, StateVector, DEFAULT_CAP};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BlockEncError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("power must be at least 1")]
    ZeroPower,
    #[error("qubit {0} is touched by a gate but is neither data nor ancilla")]
    StrayQubit(usize),
    #[error("simulation needs {needed} live qubits, cap is {cap}")]
    Capacity { needed: usize, cap: usize },
}

pub type Result<T> = std::result::Result<T, BlockEncError>;

/// Which side of the cut carries the data register.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Front,
    Back,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Target {
    /// σ on the middle and data-side regions.
    Sigma { side: Side },
    /// ρ^k on the data side, the middle post-selected.
    RhoPower { k: u32, side: Side },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// Factors applied one after another with physical swaps.
    Literal,
    /// Copies run in parallel, swaps replaced by relabelling plus a final
    /// chain of nearest-neighbour swaps.
    Interleaved,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockEncoding {
    pub circuit: LatticeCircuit,
    /// Data qubits (enlarged-lattice ids), ordered as the target's basis.
    pub data: Vec<usize>,
    pub ancilla: Vec<usize>,
    pub alpha: f64,
    pub epsilon_claim: f64,
    pub target: Target,
    pub layout: Layout,
    pub source: LatticeCircuit,
    pub regions: CutRegions,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Role {
    Data,
    Middle,
    Other,
}

struct Plan<'a> {
    source: &'a LatticeCircuit,
    regions: &'a CutRegions,
    side: Side,
    copies: usize,
}

impl Plan<'_> {
    fn role(&self, q: usize) -> Role {
        let (data, other) = match self.side {
            Side::Front => (&self.regions.front, &self.regions.back),
            Side::Back => (&self.regions.back, &self.regions.front),
        };
        if data.contains(&q) {
            Role::Data
        } else if other.contains(&q) {
            Role::Other
        } else {
            Role::Middle
        }
    }

    fn dims(&self) -> Vec<usize> {
        let mut d = self.source.dims.clone();
        d.extend([self.copies + 1, 2]);
        d
    }

    fn coord(&self, q: usize, r: usize, sub: usize) -> Coord {
        let mut c = self.source.coord_of(q);
        c.extend([r, sub]);
        c
    }

    fn id(&self, q: usize, r: usize, sub: usize) -> usize {
        let dims = self.dims();
        self.coord(q, r, sub).iter().zip(&dims).fold(0, |acc, (&x, &n)| acc * n + x)
    }

    fn sites(&self, role: Role) -> Vec<usize> {
        (0..self.source.num_qubits()).filter(|&q| self.role(q) == role).collect()
    }

    /// Layers of the source circuit with each qubit placed by `place`.
    fn mapped(&self, dagger: bool, place: &dyn Fn(usize) -> (usize, usize)) -> Vec<Vec<Gate>> {
        let src = if dagger { self.source.dagger() } else { self.source.clone() };
        src.layers
            .iter()
            .map(|layer| {
                layer
                    .iter()
                    .map(|g| {
                        let qubits = g
                            .qubits
                            .iter()
                            .map(|c| {
                                let q = self.source.index_of(c).expect("source gate inside lattice");
                                let (r, s) = place(q);
                                self.coord(q, r, s)
                            })
                            .collect();
                        Gate { matrix: g.matrix.clone(), qubits, label: g.label.clone() }
                    })
                    .collect()
            })
            .collect()
    }

    fn swap(&self, q: usize, a: (usize, usize), b: (usize, usize)) -> Gate {
        Gate { matrix: swap_matrix(), qubits: vec![self.coord(q, a.0, a.1), self.coord(q, b.0, b.1)], label: Some("SWAP".into()) }
    }
}

fn merge(into: &mut Vec<Vec<Gate>>, offset: usize, layers: Vec<Vec<Gate>>) {
    for (i, l) in layers.into_iter().enumerate() {
        if into.len() <= offset + i {
            into.resize(offset + i + 1, Vec::new());
        }
        into[offset + i].extend(l);
    }
}

fn build(source: &LatticeCircuit, regions: &CutRegions, target: Target, layout: Layout) -> Result<BlockEncoding> {
    let (k, side, middle_is_data) = match target {
        Target::Sigma { side } => (1usize, side, true),
        Target::RhoPower { k, side } => (k as usize, side, false),
    };
    if k == 0 {
        return Err(BlockEncError::ZeroPower);
    }
    let plan = Plan { source, regions, side, copies: k };
    let data_sites = plan.sites(Role::Data);
    let middle_sites = plan.sites(Role::Middle);
    let d = source.layers.len();
    let mut layers: Vec<Vec<Gate>> = Vec::new();
    match layout {
        Layout::Literal => {
            for i in 1..=k {
                let start = layers.len();
                merge(&mut layers, start, plan.mapped(false, &|_| (i, 0)));
                let mut sw: Vec<Gate> = data_sites.iter().map(|&q| plan.swap(q, (0, 0), (i, 0))).collect();
                sw.extend(middle_sites.iter().map(|&q| plan.swap(q, (i - 1, 1), (i, 0))));
                layers.push(sw);
                let start = layers.len();
                merge(&mut layers, start, plan.mapped(true, &|_| (i, 0)));
            }
        }
        Layout::Interleaved => {
            for i in 1..=k {
                merge(&mut layers, 0, plan.mapped(false, &|_| (i, 0)));
                let place = |q: usize| match plan.role(q) {
                    Role::Other => (i, 0),
                    Role::Middle => (i - 1, 1),
                    Role::Data => (i - 1, 0),
                };
                merge(&mut layers, d, plan.mapped(true, &place));
            }
            layers.resize(2 * d, Vec::new());
            // data now sits in copy k; walk it back one copy per layer
            for step in 0..k {
                let r = k - step;
                let mut sw: Vec<Gate> = data_sites.iter().map(|&q| plan.swap(q, (r, 0), (r - 1, 0))).collect();
                if middle_is_data && step == 0 {
                    sw.extend(middle_sites.iter().map(|&q| plan.swap(q, (0, 1), (1, 0))));
                }
                layers.push(sw);
            }
        }
    }
    let circuit = LatticeCircuit::from_layers(plan.dims(), layers);

    let mut data: Vec<(usize, usize)> = data_sites.iter().map(|&q| (q, plan.id(q, 0, 0))).collect();
    if middle_is_data {
        data.extend(middle_sites.iter().map(|&q| (q, plan.id(q, 0, 1))));
    }
    data.sort();
    let data: Vec<usize> = data.into_iter().map(|(_, id)| id).collect();

    let mut ancilla = BTreeSet::new();
    for i in 1..=k {
        ancilla.extend((0..source.num_qubits()).map(|q| plan.id(q, i, 0)));
        ancilla.extend(middle_sites.iter().map(|&q| plan.id(q, i - 1, 1)));
    }
    if middle_is_data {
        for &q in &middle_sites {
            ancilla.remove(&plan.id(q, 0, 1));
        }
    }
    Ok(BlockEncoding {
        circuit,
        data,
        ancilla: ancilla.into_iter().collect(),
        alpha: 1.0,
        epsilon_claim: 0.0,
        target,
        layout,
        source: source.clone(),
        regions: regions.clone(),
    })
}

/// (C† ⊗ I)(I_B ⊗ SWAP)(C ⊗ I) encoding σ on the middle and front regions.
pub fn build_sigma_encoding(circuit: &LatticeCircuit, regions: &CutRegions) -> Result<BlockEncoding> {
    build(circuit, regions, Target::Sigma { side: Side::Front }, Layout::Literal)
}

/// The σ encoding with the middle data moved into the ancilla register,
/// which encodes ρ_F.
pub fn postselect_middle(enc: &BlockEncoding) -> BlockEncoding {
    let Target::Sigma { side } = enc.target else {
        return enc.clone();
    };
    let keep: BTreeSet<usize> = match side {
        Side::Front => enc.regions.front.clone(),
        Side::Back => enc.regions.back.clone(),
    };
    let rank = enc.source.rank();
    let mut out = enc.clone();
    let (data, moved): (Vec<usize>, Vec<usize>) = enc.data.iter().partition(|&&id| {
        let c = enc.circuit.coord_of(id);
        let src = enc.source.index_of(&c[..rank]).expect("data inside source lattice");
        keep.contains(&src)
    });
    out.data = data;
    out.ancilla.extend(moved);
    out.ancilla.sort_unstable();
    out.target = Target::RhoPower { k: 1, side };
    out
}

/// k-fold product of ρ encodings on the given side.
pub fn build_rho_power_encoding(circuit: &LatticeCircuit, regions: &CutRegions, k: u32, side: Side) -> Result<BlockEncoding> {
    build(circuit, regions, Target::RhoPower { k, side }, Layout::Literal)
}

/// Same block, nearest-neighbour gates only, depth 2d + k.
pub fn interleave(enc: &BlockEncoding) -> Result<BlockEncoding> {
    let mut out = build(&enc.source, &enc.regions, enc.target, Layout::Interleaved)?;
    out.alpha = enc.alpha;
    out.epsilon_claim = enc.epsilon_claim;
    Ok(out)
}

/// The operator the encoding claims, computed by the oracle.
pub fn target_operator(enc: &BlockEncoding) -> Result<DMatrix<Complex64>> {
    let n = enc.source.num_qubits();
    if n > DEFAULT_CAP {
        return Err(OracleError::Capacity { needed: n, cap: DEFAULT_CAP }.into());
    }
    let psi = oracle::apply_circuit(&StateVector::zero((0..n).collect()), &enc.source)?;
    let r = &enc.regions;
    Ok(match enc.target {
        Target::Sigma { side } => {
            let data = match side {
                Side::Front => &r.front,
                Side::Back => &r.back,
            };
            let keep: Vec<usize> = r.middle.union(data).copied().collect();
            DensityOperator::reduced(&psi, &keep)?.matrix
        }
        Target::RhoPower { k, side } => {
            let post = psi.postselect_zero(&r.middle.iter().copied().collect::<Vec<_>>())?;
            let keep: Vec<usize> = match side {
                Side::Front => r.front.iter().copied().collect(),
                Side::Back => r.back.iter().copied().collect(),
            };
            oracle::matrix_power(&DensityOperator::reduced(&post, &keep)?.matrix, k)
        }
    })
}

/// Gate order that keeps few qubits alive: ready gates on lower copies
/// first, then those allocating fewer fresh qubits.
fn schedule(circuit: &LatticeCircuit, copy_axis: usize) -> Vec<(Vec<usize>, Vec<Complex64>)> {
    let gates: Vec<(Vec<usize>, Vec<Complex64>, usize)> = circuit
        .layers
        .iter()
        .flatten()
        .map(|g| {
            let ids = circuit.gate_ids(g);
            let r = g.qubits.iter().map(|c| c[copy_axis]).min().unwrap_or(0);
            (ids, g.matrix.clone(), r)
        })
        .collect();
    let mut queue: HashMap<usize, std::collections::VecDeque<usize>> = HashMap::new();
    for (i, (ids, _, _)) in gates.iter().enumerate() {
        for &q in ids {
            queue.entry(q).or_default().push_back(i);
        }
    }
    let mut alive: BTreeSet<usize> = BTreeSet::new();
    let mut done = vec![false; gates.len()];
    let mut order = Vec::with_capacity(gates.len());
    for _ in 0..gates.len() {
        let best = (0..gates.len())
            .filter(|&i| !done[i] && gates[i].0.iter().all(|q| queue[q].front() == Some(&i)))
            .min_by_key(|&i| (gates[i].2, gates[i].0.iter().filter(|q| !alive.contains(q)).count(), i))
            .expect("layered circuits always have a ready gate");
        done[best] = true;
        for q in &gates[best].0 {
            queue.get_mut(q).unwrap().pop_front();
            alive.insert(*q);
        }
        order.push(best);
    }
    order.into_iter().map(|i| (gates[i].0.clone(), gates[i].1.clone())).collect()
}

fn add_zero_qubit(state: &mut StateVector, q: usize) {
    state.qubits.push(q);
    let old = std::mem::take(&mut state.amps);
    state.amps = old.into_iter().flat_map(|a| [a, Complex64::new(0.0, 0.0)]).collect();
}

/// (⟨0|^{⊗a} ⊗ I) U (|0⟩^{⊗a} ⊗ I) on the data register.
///
/// SWAP gates are applied as relabellings of wires. A wire is allocated at
/// its first non-swap gate and, if it ends on an ancilla site,
/// post-selected right after its last one, so only a few copies are ever
/// live.
pub fn extract_block(circuit: &LatticeCircuit, data: &[usize], ancilla: &[usize], cap: usize) -> Result<DMatrix<Complex64>> {
    let copy_axis = circuit.rank().saturating_sub(2);
    let order = schedule(circuit, copy_axis);
    let swap = swap_matrix();
    let data_set: BTreeSet<usize> = data.iter().copied().collect();
    let anc_set: BTreeSet<usize> = ancilla.iter().copied().collect();

    // wires are named by the site they start on
    let mut wire_at: HashMap<usize, usize> = HashMap::new();
    let mut steps: Vec<Option<Vec<usize>>> = Vec::with_capacity(order.len());
    let mut last_real: HashMap<usize, usize> = HashMap::new();
    for (i, (ids, m)) in order.iter().enumerate() {
        for &q in ids {
            if !data_set.contains(&q) && !anc_set.contains(&q) {
                return Err(BlockEncError::StrayQubit(q));
            }
        }
        let wires: Vec<usize> = ids.iter().map(|q| *wire_at.get(q).unwrap_or(q)).collect();
        if ids.len() == 2 && *m == swap {
            wire_at.insert(ids[0], wires[1]);
            wire_at.insert(ids[1], wires[0]);
            steps.push(None);
        } else {
            for &w in &wires {
                last_real.insert(w, i);
            }
            steps.push(Some(wires));
        }
    }
    let final_wire = |site: usize| *wire_at.get(&site).unwrap_or(&site);
    let out_wires: Vec<usize> = data.iter().map(|&q| final_wire(q)).collect();
    let kept: BTreeSet<usize> = out_wires.iter().copied().collect();
    // data inputs that only get moved onto ancilla sites are projected at once
    let dropped_inputs: Vec<usize> = data.iter().copied().filter(|w| !kept.contains(w) && !last_real.contains_key(w)).collect();

    let dim = 1usize << data.len();
    let mut block = DMatrix::zeros(dim, dim);
    for col in 0..dim {
        let mut state = StateVector::basis(data.to_vec(), col);
        if !dropped_inputs.is_empty() {
            state = state.postselect_zero(&dropped_inputs)?;
        }
        for (i, step) in steps.iter().enumerate() {
            let Some(wires) = step else { continue };
            for &w in wires {
                if !state.qubits.contains(&w) {
                    if state.qubits.len() + 1 > cap {
                        return Err(BlockEncError::Capacity { needed: state.qubits.len() + 1, cap });
                    }
                    add_zero_qubit(&mut state, w);
                }
            }
            state.apply_gate(&order[i].1, wires)?;
            let done: Vec<usize> = wires.iter().copied().filter(|w| !kept.contains(w) && last_real[w] == i).collect();
            if !done.is_empty() {
                state = state.postselect_zero(&done)?;
            }
        }
        for &w in &out_wires {
            if !state.qubits.contains(&w) {
                add_zero_qubit(&mut state, w);
            }
        }
        let (column, _) = state.split(&out_wires)?;
        for row in 0..dim {
            block[(row, col)] = column[(row, 0)];
        }
    }
    Ok(block)
}

/// Spectral-norm distance between the target and α times the block.
pub fn verify_encoding(enc: &BlockEncoding) -> Result<f64> {
    let block = extract_block(&enc.circuit, &enc.data, &enc.ancilla, DEFAULT_CAP)?;
    let target = target_operator(enc)?;
    Ok(oracle::spectral_norm(&(target - block * Complex64::new(enc.alpha, 0.0))))
}

/// Depth and locality summary of an encoding circuit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accounting {
    pub depth: usize,
    pub source_depth: usize,
    pub ancillas: usize,
    pub nonlocal_gates: usize,
}

pub fn accounting(enc: &BlockEncoding) -> Accounting {
    let nonlocal = enc
        .circuit
        .layers
        .iter()
        .flatten()
        .filter(|g| g.qubits.len() == 2 && crate::geomcircuit::linf(&g.qubits[0], &g.qubits[1]) > 1)
        .count();
    Accounting { depth: enc.circuit.layers.len(), source_depth: enc.source.layers.len(), ancillas: enc.ancilla.len(), nonlocal_gates: nonlocal }
}
