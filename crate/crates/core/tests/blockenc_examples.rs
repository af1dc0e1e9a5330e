use nalgebra::DMatrix;
use num_complex::Complex64;

use geodnc::blockenc::{
    accounting, build_rho_power_encoding, build_sigma_encoding, extract_block, interleave, postselect_middle,
    target_operator, verify_encoding, Side,
};
use geodnc::geomcircuit::{Gate, LatticeCircuit, Slice};
use geodnc::harness::{generate_circuit, GateSet, GeneratorSpec};
use geodnc::oracle::{self, DensityOperator, StateVector, DEFAULT_CAP};

fn haar(dims: Vec<usize>, depth: usize, seed: u64) -> LatticeCircuit {
    generate_circuit(&GeneratorSpec { dims, depth, gate_set: GateSet::Haar, seed, embed_rank: None }).unwrap()
}

fn block(enc: &geodnc::blockenc::BlockEncoding) -> DMatrix<Complex64> {
    extract_block(&enc.circuit, &enc.data, &enc.ancilla, DEFAULT_CAP).unwrap() * Complex64::new(enc.alpha, 0.0)
}

fn ry(theta: f64) -> Vec<Complex64> {
    let (s, c) = (theta / 2.0).sin_cos();
    [c, -s, s, c].iter().map(|&x| Complex64::new(x, 0.0)).collect()
}

#[test]
fn sigma_on_small_grid_is_reduced_state() {
    let c = haar(vec![2, 3], 1, 11);
    let r = c.cut_regions(&Slice::new(1, 0, 2)).unwrap();
    let enc = build_sigma_encoding(&c, &r).unwrap();
    let want = oracle::reduced_state(&c, &r).unwrap().matrix;
    assert!(oracle::spectral_norm(&(want - block(&enc))) <= 1e-10);
}

#[test]
fn rank_one_power_scales_by_trace() {
    // middle qubit rotated away from |0>, front qubit in |+>
    let probe = LatticeCircuit::identity(vec![6], 1);
    let theta = 0.8;
    let layer = vec![Gate::new(ry(theta), vec![probe.coord_of(2)]), Gate::named("H", vec![probe.coord_of(4)]).unwrap()];
    let c = LatticeCircuit::from_layers(vec![6], vec![layer]);
    let r = c.cut_regions(&Slice::new(0, 2, 4)).unwrap();
    let t = (theta / 2.0).cos().powi(2);
    let rho = target_operator(&build_rho_power_encoding(&c, &r, 1, Side::Front).unwrap()).unwrap();
    assert!((rho.trace().re - t).abs() <= 1e-12);
    for k in 1..=3u32 {
        let enc = build_rho_power_encoding(&c, &r, k, Side::Front).unwrap();
        let want = &rho * Complex64::new(t.powi(k as i32 - 1), 0.0);
        assert!(oracle::spectral_norm(&(want - block(&enc))) <= 1e-10, "k = {k}");
    }
}

#[test]
fn square_of_front_state_on_eight_qubits() {
    let c = haar(vec![8], 1, 3);
    let r = c.cut_regions(&Slice::new(0, 3, 5)).unwrap();
    let psi = oracle::apply_circuit(&StateVector::zero((0..8).collect()), &c).unwrap();
    let middle: Vec<usize> = r.middle.iter().copied().collect();
    let front: Vec<usize> = r.front.iter().copied().collect();
    let rho = DensityOperator::reduced(&psi.postselect_zero(&middle).unwrap(), &front).unwrap().power(2);
    let enc = build_rho_power_encoding(&c, &r, 2, Side::Front).unwrap();
    assert!(oracle::spectral_norm(&(rho.matrix - block(&enc))) <= 1e-9);
}

#[test]
fn postselected_sigma_is_first_power() {
    let c = haar(vec![2, 4], 2, 5);
    let r = c.cut_regions(&Slice::new(1, 0, 4)).unwrap();
    let sigma = build_sigma_encoding(&c, &r).unwrap();
    assert_eq!(postselect_middle(&sigma), build_rho_power_encoding(&c, &r, 1, Side::Front).unwrap());
}

#[test]
fn interleaving_keeps_the_block() {
    let c = haar(vec![8], 1, 7);
    let r = c.cut_regions(&Slice::new(0, 2, 4)).unwrap();
    let encs = [
        build_sigma_encoding(&c, &r).unwrap(),
        build_rho_power_encoding(&c, &r, 2, Side::Front).unwrap(),
        build_rho_power_encoding(&c, &r, 3, Side::Back).unwrap(),
    ];
    for e in &encs {
        let il = interleave(e).unwrap();
        assert!(oracle::spectral_norm(&(block(e) - block(&il))) <= 1e-12);
    }
}

#[test]
fn depth_bounds() {
    let c = haar(vec![6], 1, 1);
    let r = c.cut_regions(&Slice::new(0, 2, 4)).unwrap();
    let acc = accounting(&interleave(&build_rho_power_encoding(&c, &r, 1, Side::Front).unwrap()).unwrap());
    assert!(acc.depth <= 3, "{acc:?}");
    assert_eq!(acc.nonlocal_gates, 0);

    let c = haar(vec![8], 2, 1);
    let r = c.cut_regions(&Slice::new(0, 2, 6)).unwrap();
    let acc = accounting(&interleave(&build_rho_power_encoding(&c, &r, 2, Side::Front).unwrap()).unwrap());
    assert!(acc.depth <= 10, "{acc:?}");
    assert_eq!(acc.nonlocal_gates, 0);
}

#[test]
fn corrupted_gate_is_detected() {
    let empty = LatticeCircuit::identity(vec![6], 1);
    let r = empty.cut_regions(&Slice::new(0, 2, 4)).unwrap();
    assert_eq!(verify_encoding(&build_rho_power_encoding(&empty, &r, 2, Side::Front).unwrap()).unwrap(), 0.0);

    let c = haar(vec![6], 1, 9);
    let mut enc = build_rho_power_encoding(&c, &r, 2, Side::Front).unwrap();
    assert!(verify_encoding(&enc).unwrap() <= 1e-10);
    let g = enc.circuit.layers.iter_mut().flatten().find(|g| g.qubits.len() == 2).unwrap();
    g.matrix = geodnc::geomcircuit::named_matrix("CZ").unwrap();
    assert!(verify_encoding(&enc).unwrap() > 1e-3);
}
