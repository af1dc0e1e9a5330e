use std::cell::RefCell;

use geodnc::dnc::{
    self, heavy_slices, select_region_z, slice_weight_synthesis, BaseSolver, Branch, DeskOverrides, Estimator, ExactBase,
    ParameterSchedule, Profile, TraceNode,
};
use geodnc::geomcircuit::{Gate, LatticeCircuit, Slice};
use geodnc::harness::{generate_circuit, GateSet, GeneratorSpec};
use geodnc::oracle;
use geodnc::synthesis::{self, synthesis_of_circuit, CutCalculus, Synthesis};

/// Returns a fixed value and records what it was asked.
struct Recorder {
    value: f64,
    calls: RefCell<Vec<(Synthesis, f64)>>,
}

impl BaseSolver for Recorder {
    fn solve(&self, s: &Synthesis, delta: f64) -> dnc::Result<f64> {
        self.calls.borrow_mut().push((s.clone(), delta));
        Ok(self.value)
    }
}

fn chain(len: usize, depth: usize, set: GateSet, seed: u64) -> LatticeCircuit {
    generate_circuit(&GeneratorSpec { dims: vec![len], depth, gate_set: set, seed, embed_rank: Some(3) }).unwrap()
}

fn all_h(dims: Vec<usize>) -> LatticeCircuit {
    let probe = LatticeCircuit::identity(dims.clone(), 1);
    let layer = (0..probe.num_qubits()).map(|q| Gate::named("H", vec![probe.coord_of(q)]).unwrap()).collect();
    LatticeCircuit::from_layers(dims, vec![layer])
}

#[test]
fn half_for_large_delta() {
    let s = synthesis_of_circuit(&chain(14, 1, GateSet::Haar, 1));
    let out = dnc::a_full(&s, &ExactBase, 0.7, 3, Profile::desk(), 1).unwrap();
    assert_eq!(out.value, 0.5);
    assert_eq!(out.trace.node_count(), 1);
}

#[test]
fn identity_cube() {
    let s = synthesis_of_circuit(&LatticeCircuit::identity(vec![2, 2, 2], 1));
    let out = dnc::a_full(&s, &ExactBase, 0.1, 3, Profile::desk(), 1).unwrap();
    assert!((out.value - 1.0).abs() <= 0.1);
}

#[test]
fn hadamard_cube() {
    let s = synthesis_of_circuit(&all_h(vec![2, 2, 2]));
    let out = dnc::a_full(&s, &ExactBase, 0.1, 3, Profile::desk(), 1).unwrap();
    assert!((out.value - 0.00390625).abs() <= 0.1);
}

#[test]
fn base_call_is_forwarded() {
    let c = chain(6, 1, GateSet::Haar, 2);
    let s = synthesis_of_circuit(&c);
    let base = Recorder { value: 0.123, calls: RefCell::new(Vec::new()) };
    let out = dnc::a_full(&s, &base, 0.2, 2, Profile::desk(), 1).unwrap();
    assert_eq!(out.value, 0.123);
    let calls = base.calls.borrow();
    assert_eq!(calls.len(), 1);
    assert_eq!(calls[0].0, s);
    assert_eq!(calls[0].1, 0.2);
}

#[test]
fn heavy_slice_examples() {
    let sched = dnc::schedule(14, 1, 3, 0.1, Profile::desk()).unwrap();
    let exact = |w: &Synthesis| -> dnc::Result<f64> { Ok(oracle::synthesis_value_exact(w)?) };
    let s = synthesis_of_circuit(&LatticeCircuit::identity(vec![1, 1, 14], 1));
    let slices = s.gamma.enumerate_slices(2, 2, 0);
    let rep = heavy_slices(&s, &slices, &sched, &mut exact.clone()).unwrap();
    assert_eq!(rep.heavy.len(), slices.len());
    assert!(rep.enough);

    let probe = LatticeCircuit::identity(vec![1, 1, 14], 1);
    let xs = (0..14).map(|q| Gate::named("X", vec![probe.coord_of(q)]).unwrap()).collect();
    let s = synthesis_of_circuit(&LatticeCircuit::from_layers(vec![1, 1, 14], vec![xs]));
    let rep = heavy_slices(&s, &slices, &sched, &mut exact.clone()).unwrap();
    assert!(rep.heavy.is_empty());
    assert!(!rep.enough);

    // seeded instance: classification equals thresholded oracle weights
    let s = synthesis_of_circuit(&chain(14, 1, GateSet::Weak { strength: 0.5 }, 4));
    let rep = heavy_slices(&s, &slices, &sched, &mut exact.clone()).unwrap();
    for (sl, w) in slices.iter().zip(&rep.weights) {
        let direct = oracle::synthesis_value_exact(&slice_weight_synthesis(&s, sl)).unwrap();
        assert_eq!(*w, direct);
        assert_eq!(rep.heavy.contains(sl), direct >= sched.heavy_threshold());
    }
}

fn paper_like(width: usize) -> ParameterSchedule {
    ParameterSchedule {
        profile: Profile::Paper,
        n: width,
        d: 1,
        dim: 3,
        delta: 0.1,
        eps: 0.01,
        h: 1,
        eta: 3,
        cuts: 2,
        k: 2,
        t: 2,
        w0: 100,
        slice_width: 10,
        max_gap: 10,
        z_width: 50,
    }
}

#[test]
fn region_z_examples() {
    let s = synthesis_of_circuit(&LatticeCircuit::identity(vec![1, 1, 100], 1));
    let sched = paper_like(100);
    let dense: Vec<Slice> = (0..=90).map(|lo| Slice::new(2, lo, lo + 10)).collect();
    let (z, chosen) = select_region_z(&s, &sched, &dense).unwrap();
    assert_eq!((z.lo, z.hi), (25, 75));
    assert_eq!(chosen, vec![Slice::new(2, 25, 35), Slice::new(2, 26, 36)]);

    // pitch-12 heavy slices with one missing still leave Δ inside Z
    let spaced: Vec<Slice> = (0..8).map(|i| Slice::new(2, 12 * i + 1, 12 * i + 11)).filter(|k| k.lo != 49).collect();
    let (_, chosen) = select_region_z(&s, &sched, &spaced).unwrap();
    assert_eq!(chosen, vec![Slice::new(2, 25, 35), Slice::new(2, 37, 47)]);

    let sparse = vec![Slice::new(2, 30, 40)];
    assert!(matches!(select_region_z(&s, &sched, &sparse), Err(dnc::DncError::Spacing { .. })));
}

#[test]
fn narrow_synthesis_delegates() {
    let s = synthesis_of_circuit(&chain(12, 1, GateSet::Weak { strength: 0.3 }, 5));
    let base = ExactBase;
    let est = Estimator::new(Profile::desk(), 1, &base);
    let sched = dnc::schedule(12, 1, 3, 0.1, Profile::desk()).unwrap();
    assert!(s.width() < sched.w0);
    let rec = est.a_recursive(&s, &sched, sched.eta, &[], 3).unwrap();
    let direct = est.a_full(&s.reduce_dimension(), sched.eps, 2).unwrap();
    assert_eq!(rec.value, direct.value);
    assert_eq!(rec.trace.children[0].branch, Branch::Stop);
}

#[test]
fn single_cut_reduces_to_product() {
    let s = synthesis_of_circuit(&chain(14, 1, GateSet::Weak { strength: 0.3 }, 6));
    let base = ExactBase;
    let o = DeskOverrides { cuts: Some(1), w0: Some(14), ..Default::default() };
    let est = Estimator::new(Profile::Desk(o), 1, &base);
    let sched = dnc::schedule(14, 1, 3, 0.1, Profile::Desk(o)).unwrap();
    let slices = s.gamma.enumerate_slices(2, 2, 0);
    let out = est.a_recursive(&s, &sched, 1, &slices, 3).unwrap();
    let (_, chosen) = select_region_z(&s, &sched, &slices).unwrap();
    let cd = synthesis::cut_data(&s, &chosen[0], &CutCalculus::exact(2, 2)).unwrap();
    let l = oracle::synthesis_value_exact(&synthesis::left_child(&s, &cd)).unwrap();
    let r = oracle::synthesis_value_exact(&synthesis::right_child(&s, &cd)).unwrap();
    let want = l * r / cd.kappa.powi(9);
    assert!((out.value - want).abs() <= 1e-12 * want.max(1.0));
    assert_eq!(out.trace.branch_count(Branch::Middle), 0);
    assert_eq!(out.trace.branch_count(Branch::Multi), 0);
}

fn check_branch_counts(t: &TraceNode, cuts: usize) {
    t.walk(&mut |n, _| {
        if n.branch_count(Branch::Kappa) > 0 {
            let multis: usize = (0..cuts).flat_map(|i| (i + 2..cuts).map(move |j| (1usize << (j - i - 1)) - 1)).sum();
            assert_eq!(n.branch_count(Branch::Single), 2 * cuts);
            assert_eq!(n.branch_count(Branch::Middle), cuts * (cuts - 1) / 2);
            assert_eq!(n.branch_count(Branch::Multi), multis);
            assert_eq!(n.branch_count(Branch::Kappa), cuts);
        }
    });
}

#[test]
fn seeded_chains_within_delta() {
    for seed in 0..3 {
        for (depth, o) in [
            (1, DeskOverrides::default()),
            (1, DeskOverrides { cuts: Some(3), w0: Some(14), ..Default::default() }),
            (2, DeskOverrides { w0: Some(16), ..Default::default() }),
        ] {
            let s = synthesis_of_circuit(&chain(16, depth, GateSet::Weak { strength: 0.3 }, seed));
            let truth = oracle::synthesis_value_exact(&s).unwrap();
            let out = dnc::a_full(&s, &ExactBase, 0.05, 3, Profile::Desk(o), depth).unwrap();
            assert!((out.value - truth).abs() <= 0.05, "seed {seed} depth {depth}: {} vs {truth}", out.value);
            check_branch_counts(&out.trace, o.cuts.unwrap_or(2));
            // bit-identical on a re-run
            let again = dnc::a_full(&s, &ExactBase, 0.05, 3, Profile::Desk(o), depth).unwrap();
            assert_eq!(out.trace, again.trace);
        }
    }
}

/// Spectral weight of ρ_F outside the dominant eigenspace, relative to tr ρ_F.
fn residual_weight(cd: &synthesis::CutData, tau: f64) -> f64 {
    let eig = oracle::reduced_spectrum(&cd.post, &cd.front).unwrap();
    let top = eig[0].0;
    let total: f64 = eig.iter().map(|e| e.0).sum();
    eig.iter().filter(|e| e.0 < top * (1.0 - tau)).map(|e| e.0).sum::<f64>() / total
}

#[test]
fn oracle_substitution_residual() {
    use geodnc::errmodel::{self, ErrorModel};
    let base = ExactBase;
    for seed in 0..4 {
        for (len, traced, o) in [
            (14, vec![], DeskOverrides { eta: Some(1), ..Default::default() }),
            (14, vec![], DeskOverrides { eta: Some(1), cuts: Some(3), w0: Some(14), ..Default::default() }),
            // traced front qubits make ρ_F mixed
            (14, vec![9, 11], DeskOverrides { eta: Some(1), ..Default::default() }),
            (14, vec![7, 10, 12], DeskOverrides { eta: Some(1), ..Default::default() }),
        ] {
            let mut s = synthesis_of_circuit(&chain(len, 1, GateSet::Weak { strength: 0.3 }, 60 + seed));
            for q in traced {
                s.output.remove(&q);
                s.traced.insert(q);
            }
            let truth = oracle::synthesis_value_exact(&s).unwrap();
            let sched = dnc::schedule(len, 1, 3, 0.1, Profile::Desk(o)).unwrap();
            let est = Estimator::new(Profile::Desk(o), 1, &base);
            let slices = s.gamma.enumerate_slices(2, sched.slice_width, sched.max_gap);
            // η = 1: children stop at once, so every sub-value is the exact base value
            let out = est.a_recursive(&s, &sched, 1, &slices, 3).unwrap();
            let (_, chosen) = select_region_z(&s, &sched, &slices).unwrap();
            let e = chosen
                .iter()
                .map(|sl| residual_weight(&synthesis::cut_data(&s, sl, &CutCalculus::exact(2, 2)).unwrap(), 1e-6))
                .fold(0.0, f64::max);
            let model = ErrorModel { eta: 1, e_of_n: e, g_of_n: 0.0, ..ErrorModel::from_schedule(&sched) };
            let bound = errmodel::predicted_error(&model, 0.0);
            let residual = (out.value - truth).abs();
            eprintln!("seed {seed} Δ={}: residual {residual:.3e}, measured e {e:.3e}, bound {bound:.3e}", sched.cuts);
            assert!(residual <= 0.1);
            assert!(residual <= bound.max(1e-12));
        }
    }
}

#[test]
fn power_projector_residual_is_reported() {
    let mut s = synthesis_of_circuit(&chain(10, 1, GateSet::Weak { strength: 0.3 }, 70));
    for q in [7, 9] {
        s.output.remove(&q);
        s.traced.insert(q);
    }
    let sl = Slice::new(2, 4, 6);
    let mut prev = f64::INFINITY;
    for k in [1, 2, 4, 8] {
        let exact = synthesis::cut_data(&s, &sl, &CutCalculus::exact(k, k)).unwrap();
        let power = synthesis::cut_data(&s, &sl, &CutCalculus::power(k, k)).unwrap();
        let rho = exact.rho_front().unwrap().matrix;
        let diff = power.front_projector.dense_matrix() * &rho - exact.front_projector.dense_matrix() * &rho;
        let r = oracle::spectral_norm(&diff) / oracle::spectral_norm(&rho);
        eprintln!("K={k}: |Π_power ρ − Π_exact ρ| / |ρ| = {r:.3e}");
        assert!(r < prev);
        prev = r;
    }
}

#[test]
fn predictor_unrolls_one_level() {
    // root + 8 slice weights (a_full + base each) + dispatch + κ + 2 stopped children
    let c = LatticeCircuit::identity(vec![1, 1, 16], 1);
    let s = synthesis_of_circuit(&c);
    let o = DeskOverrides { eta: Some(1), cuts: Some(1), ..Default::default() };
    let pred = geodnc::errmodel::predict_synthesis(&s, 0.1, 3, Profile::Desk(o), 1).unwrap();
    assert_eq!(pred.calls, 1 + 8 * 2 + 1 + 1 + 2 * 3);
    assert_eq!(pred.base_calls, 8 + 2);
    let out = dnc::a_full(&s, &ExactBase, 0.1, 3, Profile::Desk(o), 1).unwrap();
    assert_eq!(out.trace.node_count(), pred.calls);
}
