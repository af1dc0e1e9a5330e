//! Divide-and-conquer estimator: the driver (`a_full`), the recursive
//! cut-and-combine routine (`a_recursive`), parameter schedules and
//! recursion traces.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::errmodel;
use crate::geomcircuit::{slices_in, Slice};
use crate::oracle::{self, OracleError};
use crate::synthesis::{self, CutCalculus, CutData, SynthError, Synthesis};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DncError {
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("spacing precondition violated: {found} heavy slices inside Z=[{lo},{hi}), need {needed}")]
    Spacing { needed: usize, found: usize, lo: usize, hi: usize },
    #[error("missing sub-value for {0}")]
    MissingValue(String),
    #[error("base solver: {0}")]
    Base(String),
}

pub type Result<T> = std::result::Result<T, DncError>;

/// Knobs that may replace desk defaults.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeskOverrides {
    pub h: Option<u32>,
    pub eta: Option<u32>,
    pub cuts: Option<usize>,
    pub k: Option<u32>,
    pub t: Option<u32>,
    pub w0: Option<usize>,
    pub slice_width: Option<usize>,
    pub max_gap: Option<usize>,
    pub z_width: Option<usize>,
    /// ε as a fraction of δ.
    pub eps_ratio: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "lowercase")]
pub enum Profile {
    Paper,
    Desk(DeskOverrides),
}

impl Profile {
    pub fn desk() -> Self {
        Profile::Desk(DeskOverrides::default())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterSchedule {
    pub profile: Profile,
    pub n: usize,
    pub d: usize,
    pub dim: usize,
    pub delta: f64,
    pub eps: f64,
    pub h: u32,
    pub eta: u32,
    /// Δ: cuts per recursion level.
    pub cuts: usize,
    pub k: u32,
    pub t: u32,
    pub w0: usize,
    pub slice_width: usize,
    pub max_gap: usize,
    /// Width of the central region Z.
    pub z_width: usize,
}

fn log2n(n: usize) -> f64 {
    (n as f64).log2()
}

fn ceil_u32(x: f64) -> u32 {
    x.ceil().max(0.0) as u32
}

/// ⌈log n / (D log(4/3))⌉.
pub fn eta_for(n: usize, dim: usize) -> u32 {
    ceil_u32(log2n(n) / (dim as f64 * (4.0f64 / 3.0).log2()))
}

pub fn schedule(n: usize, d: usize, dim: usize, delta: f64, profile: Profile) -> Result<ParameterSchedule> {
    if n < 2 || d < 1 || dim < 2 || !(delta > 0.0) {
        return Err(DncError::Schedule(format!("need n>=2, d>=1, D>=2, delta>0; got n={n} d={d} D={dim} delta={delta}")));
    }
    let ln = log2n(n);
    let sched = match profile {
        Profile::Paper => {
            let h = ceil_u32(ln.powi(7)).max(1);
            let cuts = (ceil_u32(ln) as usize).max(1);
            let kt = ceil_u32(ln.powi(3)).max(1);
            let eps = if n >= 4 { errmodel::e2(delta, n).map_err(|e| DncError::Schedule(e.to_string()))? } else { delta };
            let w0 = 20 * d * (cuts + h as usize + 2);
            ParameterSchedule {
                profile,
                n,
                d,
                dim,
                delta,
                eps,
                h,
                eta: eta_for(n, dim),
                cuts,
                k: kt,
                t: kt,
                w0,
                slice_width: 10 * d,
                max_gap: 10 * d,
                z_width: w0 / 2,
            }
        }
        Profile::Desk(o) => {
            let h = o.h.unwrap_or(1);
            let cuts = o.cuts.unwrap_or(2);
            let slice_width = o.slice_width.unwrap_or(2 * d);
            let max_gap = o.max_gap.unwrap_or(0);
            let pitch = slice_width + max_gap;
            // any window this wide holds at least Δ + h whole slices
            let z_width = o.z_width.unwrap_or((cuts + h as usize) * pitch + pitch - 1);
            let w0 = o.w0.unwrap_or(2 * z_width);
            ParameterSchedule {
                profile,
                n,
                d,
                dim,
                delta,
                eps: delta * o.eps_ratio.unwrap_or(0.25),
                h,
                eta: o.eta.unwrap_or_else(|| eta_for(n, dim).max(1)),
                cuts,
                k: o.k.unwrap_or(2),
                t: o.t.unwrap_or(2),
                w0,
                slice_width,
                max_gap,
                z_width,
            }
        }
    };
    sched.check()?;
    Ok(sched)
}

impl ParameterSchedule {
    pub fn check(&self) -> Result<()> {
        let fail = |m: String| Err(DncError::Schedule(m));
        if self.slice_width < 2 * self.d {
            return fail(format!("slice width {} below minimum 2d = {}", self.slice_width, 2 * self.d));
        }
        if self.cuts < 1 {
            return fail("at least one cut per level is required".into());
        }
        if self.k < 1 || self.t < 1 || self.h < 1 {
            return fail("K, T and h must be at least 1".into());
        }
        if !(self.eps > 0.0 && self.eps <= self.delta) {
            return fail(format!("eps {} must lie in (0, delta]", self.eps));
        }
        if self.z_width < self.slice_width {
            return fail(format!("region Z width {} cannot hold a slice of width {}", self.z_width, self.slice_width));
        }
        if self.z_width > self.w0 {
            return fail(format!("region Z width {} exceeds stopping width {}", self.z_width, self.w0));
        }
        // keeps each child at most 3/4 of its parent plus one slice
        if 2 * (self.z_width + 1) > self.w0 + 8 * self.slice_width {
            return fail(format!("region Z width {} too large for stopping width {}", self.z_width, self.w0));
        }
        Ok(())
    }

    pub fn calculus(&self) -> CutCalculus {
        CutCalculus::exact(self.k, self.t)
    }

    /// (2^{log δ/(2h)} + 2^{log δ/h}) / 2.
    pub fn heavy_threshold(&self) -> f64 {
        let l = self.delta.log2();
        let h = self.h as f64;
        (2f64.powf(l / (2.0 * h)) + 2f64.powf(l / h)) / 2.0
    }
}

/// True when δ ≤ 1/n^{log² n}.
pub fn brute_force_regime(delta: f64, n: usize) -> bool {
    delta.log2() <= -log2n(n).powi(3)
}

pub trait BaseSolver {
    fn solve(&self, s: &Synthesis, delta: f64) -> Result<f64>;
    fn name(&self) -> &str {
        "base"
    }
}

/// Dense evaluation with zero error.
#[derive(Clone, Copy, Debug, Default)]
pub struct ExactBase;

impl BaseSolver for ExactBase {
    fn solve(&self, s: &Synthesis, _delta: f64) -> Result<f64> {
        Ok(oracle::synthesis_value_exact(s)?)
    }
    fn name(&self) -> &str {
        "exact"
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CallKind {
    AFull,
    Recursive,
    Base,
    BruteForce,
    Kappa,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    Root,
    SliceWeight,
    Dispatch,
    Stop,
    Leaf,
    Single,
    Middle,
    Multi,
    Kappa,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceNode {
    pub kind: CallKind,
    pub branch: Branch,
    pub dim: usize,
    pub width: usize,
    pub eta: Option<u32>,
    /// Error parameter of the call.
    pub delta: f64,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slice: Option<Slice>,
    pub children: Vec<TraceNode>,
}

impl TraceNode {
    fn new(kind: CallKind, branch: Branch, dim: usize, width: usize, delta: f64) -> Self {
        TraceNode { kind, branch, dim, width, eta: None, delta, value: 0.0, note: None, slice: None, children: Vec::new() }
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(TraceNode::node_count).sum::<usize>()
    }

    pub fn max_depth(&self) -> usize {
        1 + self.children.iter().map(TraceNode::max_depth).max().unwrap_or(0)
    }

    pub fn branch_count(&self, b: Branch) -> usize {
        self.children.iter().filter(|c| c.branch == b).count()
    }

    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a TraceNode, Option<&'a TraceNode>)) {
        fn go<'a>(n: &'a TraceNode, parent: Option<&'a TraceNode>, f: &mut dyn FnMut(&'a TraceNode, Option<&'a TraceNode>)) {
            f(n, parent);
            for c in &n.children {
                go(c, Some(n), f);
            }
        }
        go(self, None, f);
    }

    /// Node totals per call kind.
    pub fn kind_counts(&self) -> BTreeMap<CallKind, usize> {
        let mut m = BTreeMap::new();
        self.walk(&mut |n, _| *m.entry(n.kind).or_insert(0) += 1);
        m
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeavyReport {
    pub heavy: Vec<Slice>,
    pub weights: Vec<f64>,
    pub enough: bool,
}

/// Classifies `slices` by comparing `subsolver`'s weight estimates with the
/// schedule's midpoint threshold.
pub fn heavy_slices(
    s: &Synthesis,
    slices: &[Slice],
    sched: &ParameterSchedule,
    subsolver: &mut dyn FnMut(&Synthesis) -> Result<f64>,
) -> Result<HeavyReport> {
    let threshold = sched.heavy_threshold();
    let mut heavy = Vec::new();
    let mut weights = Vec::with_capacity(slices.len());
    for sl in slices {
        let w = subsolver(&slice_weight_synthesis(s, sl))?;
        weights.push(w);
        if w >= threshold {
            heavy.push(*sl);
        }
    }
    let enough = heavy.len() + sched.h as usize >= slices.len();
    Ok(HeavyReport { heavy, weights, enough })
}

/// The weight tr⟨0_{M_i}|φ|0_{M_i}⟩ as a synthesis: the slice's output
/// qubits post-selected, every other output qubit traced.
pub fn slice_weight_synthesis(s: &Synthesis, slice: &Slice) -> Synthesis {
    let (b, m, f) = s.partition_output(slice);
    let mut w = s.clone();
    for q in m {
        w.output.remove(&q);
        w.postselected.insert(q);
    }
    for q in b.into_iter().chain(f) {
        w.output.remove(&q);
        w.traced.insert(q);
    }
    w
}

pub fn dimension_reduce(s: &Synthesis) -> Synthesis {
    s.reduce_dimension()
}

/// Z and the Δ left-most heavy slices fully inside it.
pub fn select_region_z(s: &Synthesis, sched: &ParameterSchedule, heavy: &[Slice]) -> Result<(Slice, Vec<Slice>)> {
    let axis = s.cut_axis();
    let (lo, hi) = s.output_extent(axis).unwrap_or((0, 0));
    let ell = hi - lo;
    let z = sched.z_width.min(ell);
    let z_lo = lo + (ell - z) / 2;
    let region = Slice::new(axis, z_lo, z_lo + z);
    let mut inside: Vec<Slice> = heavy.iter().filter(|k| k.axis == axis && k.within(region.lo, region.hi)).copied().collect();
    inside.sort();
    if inside.len() < sched.cuts {
        return Err(DncError::Spacing { needed: sched.cuts, found: inside.len(), lo: region.lo, hi: region.hi });
    }
    inside.truncate(sched.cuts);
    Ok((region, inside))
}

/// Sub-values for the signed combination. Indices are 0-based cut
/// positions; `multi` is keyed by (i, j, σ).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CombineInputs {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub double: BTreeMap<(usize, usize), f64>,
    pub multi: BTreeMap<(usize, usize, Vec<usize>), f64>,
    pub kappas: Vec<f64>,
}

/// Non-empty subsets of `lo..hi` in lexicographic order.
pub fn interior_subsets(lo: usize, hi: usize) -> Vec<Vec<usize>> {
    let items: Vec<usize> = (lo..hi).collect();
    let mut out: Vec<Vec<usize>> = (1u64..1 << items.len())
        .map(|mask| items.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).map(|(_, &x)| x).collect())
        .collect();
    out.sort();
    out
}

/// Σᵢ Lᵢ Rᵢ/κᵢ^{4K+1} − Σ_{i<j} Lᵢ Mᵢⱼ Rⱼ/(κᵢκⱼ)^{4K+1}
/// + Σ_{j≥i+2} Σ_{σ≠∅} (−1)^{|σ|+1} Lᵢ M_{iσj} Rⱼ/(κᵢκⱼ)^{4K+1}.
pub fn inclusion_exclusion_combine(inp: &CombineInputs, k: u32, cuts: usize) -> Result<f64> {
    let missing = |what: String| DncError::MissingValue(what);
    if inp.left.len() < cuts || inp.right.len() < cuts || inp.kappas.len() < cuts {
        return Err(missing(format!("single-cut values for {cuts} cuts")));
    }
    let e = 4 * k as i32 + 1;
    let mut total = 0.0;
    for i in 0..cuts {
        total += inp.left[i] * inp.right[i] / inp.kappas[i].powi(e);
    }
    for i in 0..cuts {
        for j in i + 1..cuts {
            let coeff = inp.left[i] * inp.right[j] / (inp.kappas[i] * inp.kappas[j]).powi(e);
            let mid = inp.double.get(&(i, j)).ok_or_else(|| missing(format!("double ({i},{j})")))?;
            total -= coeff * mid;
            for sigma in interior_subsets(i + 1, j) {
                let v = inp
                    .multi
                    .get(&(i, j, sigma.clone()))
                    .ok_or_else(|| missing(format!("multi ({i},{j},{sigma:?})")))?;
                let sign = if sigma.len() % 2 == 1 { 1.0 } else { -1.0 };
                total += sign * coeff * v;
            }
        }
    }
    Ok(total)
}

#[derive(Clone, Debug)]
pub struct Estimate {
    pub value: f64,
    pub trace: TraceNode,
}

/// Holds the schedule profile and base solver shared by all calls.
pub struct Estimator<'a> {
    pub profile: Profile,
    pub d: usize,
    pub base: &'a dyn BaseSolver,
    /// Overrides the calculus derived from each call's schedule.
    pub calculus: Option<CutCalculus>,
}

impl<'a> Estimator<'a> {
    pub fn new(profile: Profile, d: usize, base: &'a dyn BaseSolver) -> Self {
        Estimator { profile, d, base, calculus: None }
    }

    pub fn schedule_for(&self, s: &Synthesis, delta: f64, dim: usize) -> Result<ParameterSchedule> {
        schedule(s.num_qubits(), self.d, dim, delta, self.profile)
    }

    pub fn a_full(&self, s: &Synthesis, delta: f64, dim: usize) -> Result<Estimate> {
        let mut node = self.a_full_node(s, delta, dim, Branch::Root)?;
        node.branch = Branch::Root;
        Ok(Estimate { value: node.value, trace: node })
    }

    fn a_full_node(&self, s: &Synthesis, delta: f64, dim: usize, branch: Branch) -> Result<TraceNode> {
        let mut node = TraceNode::new(CallKind::AFull, branch, dim, s.width(), delta);
        if brute_force_regime(delta, s.num_qubits()) {
            let v = oracle::synthesis_value_exact(s)?;
            let mut leaf = TraceNode::new(CallKind::BruteForce, Branch::Leaf, dim, s.width(), delta);
            leaf.value = v;
            node.children.push(leaf);
            node.value = v;
            return Ok(node);
        }
        if delta >= 0.5 {
            node.value = 0.5;
            node.note = Some("half".into());
            return Ok(node);
        }
        if dim <= 2 {
            let v = self.base.solve(s, delta)?;
            let mut leaf = TraceNode::new(CallKind::Base, Branch::Leaf, dim, s.width(), delta);
            leaf.value = v;
            leaf.note = Some(self.base.name().to_string());
            node.children.push(leaf);
            node.value = v;
            return Ok(node);
        }
        let sched = self.schedule_for(s, delta, dim)?;
        let axis = dim - 1;
        let slices = match s.output_extent(axis) {
            Some((lo, hi)) => slices_in(axis, lo, hi, sched.slice_width, sched.max_gap),
            None => Vec::new(),
        };
        let sub_delta = errmodel::e1(delta, sched.h as f64).map_err(|e| DncError::Schedule(e.to_string()))?;
        let mut weight_nodes = Vec::new();
        let report = heavy_slices(s, &slices, &sched, &mut |w: &Synthesis| {
            let child = self.a_full_node(&dimension_reduce(w), sub_delta, dim - 1, Branch::SliceWeight)?;
            let v = child.value;
            weight_nodes.push(child);
            Ok(v)
        })?;
        for (n, sl) in weight_nodes.iter_mut().zip(&slices) {
            n.slice = Some(*sl);
        }
        node.children.extend(weight_nodes);
        if !report.enough {
            node.value = 0.0;
            node.note = Some(format!("{} of {} slices heavy", report.heavy.len(), slices.len()));
            return Ok(node);
        }
        let child = self.a_recursive_node(s, &sched, sched.eta, &report.heavy, dim, Branch::Dispatch)?;
        node.value = child.value;
        node.children.push(child);
        Ok(node)
    }

    pub fn a_recursive(
        &self,
        s: &Synthesis,
        sched: &ParameterSchedule,
        eta: u32,
        heavy: &[Slice],
        dim: usize,
    ) -> Result<Estimate> {
        let node = self.a_recursive_node(s, sched, eta, heavy, dim, Branch::Root)?;
        Ok(Estimate { value: node.value, trace: node })
    }

    fn a_recursive_node(
        &self,
        s: &Synthesis,
        sched: &ParameterSchedule,
        eta: u32,
        heavy: &[Slice],
        dim: usize,
        branch: Branch,
    ) -> Result<TraceNode> {
        let ell = s.width();
        let mut node = TraceNode::new(CallKind::Recursive, branch, dim, ell, sched.eps);
        node.eta = Some(eta);
        if ell < sched.w0 || eta < 1 {
            let child = self.a_full_node(&dimension_reduce(s), sched.eps, dim - 1, Branch::Stop)?;
            node.value = child.value;
            node.children.push(child);
            return Ok(node);
        }
        let calc = self.calculus.unwrap_or_else(|| sched.calculus());
        let (_, chosen) = select_region_z(s, sched, heavy)?;
        let cuts: Vec<CutData> = chosen.iter().map(|sl| synthesis::cut_data(s, sl, &calc)).collect::<std::result::Result<_, _>>()?;
        let mut inputs = CombineInputs::default();
        for cd in &cuts {
            let mut leaf = TraceNode::new(CallKind::Kappa, Branch::Kappa, dim, ell, sched.eps);
            leaf.value = cd.kappa;
            leaf.slice = Some(cd.slice);
            node.children.push(leaf);
            inputs.kappas.push(cd.kappa);
        }
        for cd in &cuts {
            let mut l = self.a_recursive_node(&synthesis::left_child(s, cd), sched, eta - 1, heavy, dim, Branch::Single)?;
            let mut r = self.a_recursive_node(&synthesis::right_child(s, cd), sched, eta - 1, heavy, dim, Branch::Single)?;
            l.slice = Some(cd.slice);
            r.slice = Some(cd.slice);
            inputs.left.push(l.value);
            inputs.right.push(r.value);
            node.children.push(l);
            node.children.push(r);
        }
        let multi_eps = errmodel::e3(sched.eps, sched.cuts as u32);
        for i in 0..cuts.len() {
            for j in i + 1..cuts.len() {
                let seg = synthesis::middle_segment(s, &cuts[i], &cuts[j])?;
                let m = self.a_full_node(&dimension_reduce(&seg.synth), sched.eps, dim - 1, Branch::Middle)?;
                inputs.double.insert((i, j), m.value);
                node.children.push(m);
                for sigma in interior_subsets(i + 1, j) {
                    let slices: Vec<Slice> = sigma.iter().map(|&k| cuts[k].slice).collect();
                    let syn = seg.with_cuts(&slices, &calc)?;
                    let m = self.a_full_node(&dimension_reduce(&syn), multi_eps, dim - 1, Branch::Multi)?;
                    inputs.multi.insert((i, j, sigma), m.value);
                    node.children.push(m);
                }
            }
        }
        node.value = inclusion_exclusion_combine(&inputs, calc.k, cuts.len())?;
        Ok(node)
    }
}

/// Runs the driver on `s` with the dimension taken from its declared dims.
pub fn a_full(s: &Synthesis, base: &dyn BaseSolver, delta: f64, dim: usize, profile: Profile, d: usize) -> Result<Estimate> {
    Estimator::new(profile, d, base).a_full(s, delta, dim)
}
