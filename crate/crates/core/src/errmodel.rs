//! Error-propagation functions, the composed error bound and the call-count
//! and cost predictor for the divide-and-conquer estimator.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dnc::{self, ParameterSchedule, Profile};
use crate::geomcircuit::{slices_in, Slice};
use crate::synthesis::Synthesis;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ErrModelError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("non-terminating parameters: {0}")]
    NonTerminating(String),
    #[error("output register is not a box product; cannot mirror its geometry")]
    NonProduct,
    #[error("schedule: {0}")]
    Schedule(String),
}

pub type Result<T> = std::result::Result<T, ErrModelError>;

fn domain(msg: String) -> ErrModelError {
    ErrModelError::Domain(msg)
}

/// 2^{log δ/(2h) − 1} − 2^{log δ/h − 1}.
pub fn e1(delta: f64, h: f64) -> Result<f64> {
    if !(delta > 0.0 && delta <= 1.0) || !(h >= 1.0) {
        return Err(domain(format!("e1 needs delta in (0,1] and h >= 1, got delta={delta} h={h}")));
    }
    let l = delta.log2();
    Ok(2f64.powf(l / (2.0 * h) - 1.0) - 2f64.powf(l / h - 1.0))
}

/// −log δ · ln 2 · 2^{log δ/h} / (4h), a lower bound on `e1` over (0,1).
pub fn e1_lower_bound(delta: f64, h: f64) -> f64 {
    let l = delta.log2();
    -l * std::f64::consts::LN_2 * 2f64.powf(l / h) / (4.0 * h)
}

/// δ · 2^{−10 log n · log log n}.
pub fn e2(delta: f64, n: usize) -> Result<f64> {
    if n < 4 {
        return Err(domain(format!("e2 needs n >= 4, got {n}")));
    }
    if delta < 0.0 {
        return Err(domain(format!("e2 needs delta >= 0, got {delta}")));
    }
    let ln = (n as f64).log2();
    Ok(delta * 2f64.powf(-10.0 * ln * ln.log2()))
}

pub fn e3(eps: f64, cuts: u32) -> f64 {
    eps / 2f64.powi(cuts as i32)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorModel {
    pub h: f64,
    pub cuts: u32,
    pub k: u32,
    pub t: u32,
    pub eta: u32,
    pub dim: usize,
    pub n: usize,
    pub d: usize,
    pub e_of_n: f64,
    pub g_of_n: f64,
    /// Multiplier on the multi-cut bound; `None` means 10K.
    pub multi_constant: Option<f64>,
}

/// 1 − 2^{log δ/log⁷ n}.
pub fn default_e_of_n(delta: f64, n: usize) -> f64 {
    let l7 = (n as f64).log2().powi(7);
    1.0 - 2f64.powf(delta.log2() / l7)
}

/// (2e)^K / 6.
pub fn default_g_of_n(e: f64, k: u32) -> f64 {
    (2.0 * e).powi(k as i32) / 6.0
}

impl ErrorModel {
    pub fn from_schedule(s: &ParameterSchedule) -> Self {
        let e = default_e_of_n(s.delta, s.n);
        ErrorModel {
            h: s.h as f64,
            cuts: s.cuts as u32,
            k: s.k,
            t: s.t,
            eta: s.eta,
            dim: s.dim,
            n: s.n,
            d: s.d,
            e_of_n: e,
            g_of_n: default_g_of_n(e, s.k),
            multi_constant: None,
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.e_of_n) || self.g_of_n < 0.0 {
            return Err(domain(format!("e(n)={} must lie in [0,1] and g(n)={} be non-negative", self.e_of_n, self.g_of_n)));
        }
        if self.k < 1 || self.t < 1 || self.h < 1.0 {
            return Err(domain("K, T and h must be at least 1".into()));
        }
        Ok(())
    }
}

/// E₃ ∘ E₂ ∘ E₁^{(D)}.
pub fn e5(delta: f64, model: &ErrorModel) -> Result<f64> {
    let mut x = delta;
    for _ in 0..model.dim {
        x = e1(x, model.h)?;
    }
    Ok(e3(e2(x, model.n)?, model.cuts))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptBounds {
    pub single: f64,
    pub double: f64,
    pub multi: f64,
}

/// Bounds for the single-cut, two-cut and multi-cut error scripts.
pub fn script_bounds(model: &ErrorModel, eps: f64) -> ScriptBounds {
    let k = model.k as f64;
    let e2t = model.e_of_n.powi(2 * model.t as i32);
    let g6 = 6.0 * model.g_of_n;
    let single = 10.0 * k * (e2t + g6 + eps);
    let double = single + eps;
    let p = 2f64.powi(model.cuts as i32);
    let c = model.multi_constant.unwrap_or(10.0 * k);
    let multi = c * (p * g6 + p * k * (e2t + eps) + eps);
    ScriptBounds { single, double, multi }
}

/// η(20Δ²)^η ((2e + 2g)^Δ + 3Δ² ℰ₃).
pub fn predicted_error(model: &ErrorModel, eps: f64) -> f64 {
    let dl = model.cuts as f64;
    let eta = model.eta as f64;
    let b = script_bounds(model, eps);
    eta * (20.0 * dl * dl).powf(eta) * ((2.0 * model.e_of_n + 2.0 * model.g_of_n).powi(model.cuts as i32) + 3.0 * dl * dl * b.multi)
}

// ---- call-count and cost prediction ----

/// Per-axis coverage of the output register as sorted half-open intervals.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Shape {
    pub cover: Vec<Vec<(usize, usize)>>,
}

impl Shape {
    pub fn full(dims: &[usize]) -> Self {
        Shape { cover: dims.iter().map(|&x| if x == 0 { vec![] } else { vec![(0, x)] }).collect() }
    }

    pub fn is_empty(&self) -> bool {
        self.cover.iter().any(|c| c.is_empty())
    }

    pub fn extent(&self, axis: usize) -> Option<(usize, usize)> {
        if self.is_empty() {
            return None;
        }
        let c = &self.cover[axis];
        Some((c[0].0, c[c.len() - 1].1))
    }

    pub fn width(&self, axis: usize) -> usize {
        self.extent(axis).map_or(0, |(lo, hi)| hi - lo)
    }

    /// Keeps coordinates in [lo, hi) along `axis`.
    pub fn clip(&self, axis: usize, lo: usize, hi: usize) -> Shape {
        let mut out = self.clone();
        out.cover[axis] = self.cover[axis]
            .iter()
            .filter_map(|&(a, b)| {
                let (a, b) = (a.max(lo), b.min(hi));
                (a < b).then_some((a, b))
            })
            .collect();
        out
    }

    /// Removes coordinates in [lo, hi) along `axis`.
    pub fn remove(&self, axis: usize, lo: usize, hi: usize) -> Shape {
        let mut out = self.clone();
        out.cover[axis] = self.cover[axis]
            .iter()
            .flat_map(|&(a, b)| [(a, b.min(lo)), (a.max(hi), b)])
            .filter(|&(a, b)| a < b)
            .collect();
        out
    }

    pub fn empty(rank: usize) -> Shape {
        Shape { cover: vec![vec![]; rank] }
    }

    /// Reads the output register of `s`; fails unless it is a box product.
    pub fn of_synthesis(s: &Synthesis) -> Result<Shape> {
        let rank = s.gamma.rank();
        if s.output.is_empty() {
            return Ok(Shape::empty(rank));
        }
        let mut cover = Vec::with_capacity(rank);
        let mut size = 1usize;
        for axis in 0..rank {
            let coords: std::collections::BTreeSet<usize> = s.output.iter().map(|&q| s.gamma.axis_coord(q, axis)).collect();
            size *= coords.len();
            let mut iv: Vec<(usize, usize)> = Vec::new();
            for x in coords {
                match iv.last_mut() {
                    Some(last) if last.1 == x => last.1 = x + 1,
                    _ => iv.push((x, x + 1)),
                }
            }
            cover.push(iv);
        }
        if size != s.output.len() {
            return Err(ErrModelError::NonProduct);
        }
        Ok(Shape { cover })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Total trace nodes.
    pub calls: usize,
    pub base_calls: usize,
    pub brute_force_calls: usize,
    /// Unit cost per call plus base and brute-force leaf costs.
    pub cost: f64,
}

impl Prediction {
    fn add(&mut self, o: Prediction) {
        self.calls += o.calls;
        self.base_calls += o.base_calls;
        self.brute_force_calls += o.brute_force_calls;
        self.cost += o.cost;
    }
}

/// Mirrors the estimator's recursion shape assuming every slice is heavy.
pub struct Predictor<'a> {
    pub profile: Profile,
    pub n: usize,
    pub d: usize,
    /// Cost of a 2D base call given (δ, width).
    pub base_cost: &'a dyn Fn(f64, usize) -> f64,
}

/// δ^{−2} · 2^{d³ √w}.
pub fn default_base_cost(d: usize) -> impl Fn(f64, usize) -> f64 {
    move |delta: f64, w: usize| delta.powi(-2) * 2f64.powf((d as f64).powi(3) * (w as f64).sqrt())
}

fn sched_err(e: dnc::DncError) -> ErrModelError {
    ErrModelError::Schedule(e.to_string())
}

impl Predictor<'_> {
    pub fn a_full(&self, shape: &Shape, delta: f64, dim: usize) -> Result<Prediction> {
        let mut p = Prediction { calls: 1, cost: 1.0, ..Default::default() };
        if dnc::brute_force_regime(delta, self.n) {
            p.calls += 1;
            p.brute_force_calls += 1;
            p.cost += 2f64.powi(self.n as i32);
            return Ok(p);
        }
        if delta >= 0.5 {
            return Ok(p);
        }
        let axis = dim - 1;
        if dim <= 2 {
            p.calls += 1;
            p.base_calls += 1;
            p.cost += (self.base_cost)(delta, shape.width(axis));
            return Ok(p);
        }
        let sched = dnc::schedule(self.n, self.d, dim, delta, self.profile).map_err(sched_err)?;
        let slices = match shape.extent(axis) {
            Some((lo, hi)) => slices_in(axis, lo, hi, sched.slice_width, sched.max_gap),
            None => Vec::new(),
        };
        let sub = e1(delta, sched.h as f64)?;
        let weight = self.a_full(&Shape::empty(shape.cover.len()), sub, dim - 1)?;
        for _ in &slices {
            p.add(weight);
        }
        p.add(self.a_recursive(shape, &sched, sched.eta, &slices, dim)?);
        Ok(p)
    }

    pub fn a_recursive(&self, shape: &Shape, sched: &ParameterSchedule, eta: u32, heavy: &[Slice], dim: usize) -> Result<Prediction> {
        let axis = dim - 1;
        let ell = shape.width(axis);
        let mut p = Prediction { calls: 1, cost: 1.0, ..Default::default() };
        if ell < sched.w0 || eta < 1 {
            p.add(self.a_full(shape, sched.eps, dim - 1)?);
            return Ok(p);
        }
        let (lo, hi) = shape.extent(axis).expect("non-empty when wide");
        let z = sched.z_width.min(ell);
        let z_lo = lo + (ell - z) / 2;
        let mut chosen: Vec<Slice> = heavy.iter().filter(|k| k.axis == axis && k.within(z_lo, z_lo + z)).copied().collect();
        chosen.sort();
        if chosen.len() < sched.cuts {
            return Err(ErrModelError::NonTerminating(format!(
                "only {} slices inside Z=[{z_lo},{}), need {}",
                chosen.len(),
                z_lo + z,
                sched.cuts
            )));
        }
        chosen.truncate(sched.cuts);
        p.calls += chosen.len();
        p.cost += chosen.len() as f64;
        for c in &chosen {
            p.add(self.a_recursive(&shape.clip(axis, lo, c.lo), sched, eta - 1, heavy, dim)?);
            p.add(self.a_recursive(&shape.clip(axis, c.hi, hi), sched, eta - 1, heavy, dim)?);
        }
        let multi_eps = e3(sched.eps, sched.cuts as u32);
        for i in 0..chosen.len() {
            for j in i + 1..chosen.len() {
                let mid = shape.clip(axis, chosen[i].hi, chosen[j].lo);
                p.add(self.a_full(&mid, sched.eps, dim - 1)?);
                for sigma in dnc::interior_subsets(i + 1, j) {
                    let shaped = sigma.iter().fold(mid.clone(), |acc, &k| acc.remove(axis, chosen[k].lo, chosen[k].hi));
                    p.add(self.a_full(&shaped, multi_eps, dim - 1)?);
                }
            }
        }
        Ok(p)
    }
}

/// Prediction for the estimator run on `s` at (δ, D).
pub fn predict_synthesis(s: &Synthesis, delta: f64, dim: usize, profile: Profile, d: usize) -> Result<Prediction> {
    let cost = default_base_cost(d);
    let pred = Predictor { profile, n: s.num_qubits(), d, base_cost: &cost };
    pred.a_full(&Shape::of_synthesis(s)?, delta, dim)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuntimeReport {
    pub prediction: Prediction,
    /// log₂ of δ^{−2}·2^{c (d log² n)^{D·3^D} w^{1/3}} at c = `envelope_constant`.
    pub log2_envelope: f64,
    pub envelope_constant: f64,
}

/// Prediction on a lattice of side `w` in the first D−1 axes and `l` along
/// the cut axis.
pub fn predicted_runtime(l: usize, dim: usize, d: usize, w: usize, delta: f64, profile: Profile) -> Result<RuntimeReport> {
    if dim < 2 || l == 0 || w == 0 {
        return Err(domain(format!("need D >= 2 and positive widths, got D={dim} l={l} w={w}")));
    }
    let mut dims = vec![w; dim - 1];
    dims.push(l);
    let n: usize = dims.iter().product();
    if dim > 2 {
        let sched = dnc::schedule(n, d, dim, delta, profile).map_err(sched_err)?;
        if sched.eta < 1 && sched.w0 == usize::MAX {
            return Err(ErrModelError::NonTerminating("neither η nor the width floor is reachable".into()));
        }
    }
    let cost = default_base_cost(d);
    let pred = Predictor { profile, n, d, base_cost: &cost };
    let prediction = pred.a_full(&Shape::full(&dims), delta, dim)?;
    let ln = (n as f64).log2().max(1.0);
    let c = 1.0;
    let exponent = (d as f64 * ln * ln).powf(dim as f64 * 3f64.powi(dim as i32)) * (w as f64).cbrt();
    Ok(RuntimeReport { prediction, log2_envelope: -2.0 * delta.log2() + c * exponent, envelope_constant: c })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn model() -> ErrorModel {
        ErrorModel { h: 1.0, cuts: 2, k: 2, t: 2, eta: 1, dim: 1, n: 16, d: 1, e_of_n: 0.0, g_of_n: 0.0, multi_constant: None }
    }

    #[test]
    fn e1_examples() {
        assert_eq!(e1(0.25, 1.0).unwrap(), 0.125);
        assert_eq!(e1(1.0, 1.0).unwrap(), 0.0);
        assert_relative_eq!(e1(0.01, 2.0).unwrap(), (0.01f64.powf(0.25) - 0.1) / 2.0, epsilon = 1e-15);
        assert_relative_eq!(e1(0.01, 2.0).unwrap(), 0.10811, epsilon = 1e-5);
        assert!(e1(0.0, 1.0).is_err());
        assert!(e1(0.5, 0.5).is_err());
    }

    #[test]
    fn e2_e3_examples() {
        assert_eq!(e2(1.0, 16).unwrap(), 2f64.powi(-80));
        assert_eq!(e2(0.0, 16).unwrap(), 0.0);
        assert_eq!(e2(0.2, 16).unwrap(), 2.0 * e2(0.1, 16).unwrap());
        assert!(e2(0.1, 3).is_err());
        assert_relative_eq!(e3(0.08, 3), 0.01, epsilon = 1e-17);
        assert_eq!(e3(0.08, 0), 0.08);
        assert_eq!(e3(0.0, 5), 0.0);
    }

    #[test]
    fn e5_examples() {
        let mut m = model();
        m.dim = 0;
        assert_eq!(e5(0.25, &m).unwrap(), e3(e2(0.25, 16).unwrap(), 2));
        m.dim = 1;
        assert_eq!(e5(0.25, &m).unwrap(), 0.125 * 2f64.powi(-80) / 4.0);
    }

    #[test]
    fn script_bound_examples() {
        let b = script_bounds(&model(), 0.01);
        assert_relative_eq!(b.single, 0.2, epsilon = 1e-15);
        assert_relative_eq!(b.double, 0.21, epsilon = 1e-15);
        assert!(b.multi >= b.double);
    }

    #[test]
    fn predicted_error_examples() {
        assert_eq!(predicted_error(&model(), 0.0), 0.0);
        let mut m = model();
        m.cuts = 1;
        let b = script_bounds(&m, 0.01);
        assert_relative_eq!(predicted_error(&m, 0.01), 20.0 * 3.0 * b.multi, epsilon = 1e-14);
    }

    #[test]
    fn paper_scale_bound_below_delta() {
        let n = 1 << 10;
        let s = dnc::schedule(n, 1, 3, 0.1, Profile::Paper).unwrap();
        let m = ErrorModel::from_schedule(&s);
        let err = predicted_error(&m, s.eps);
        assert!(err.is_finite() && err <= 0.1, "bound {err}");
    }

    #[test]
    fn lower_bound_on_grid() {
        for k in 1..40 {
            let delta = 2f64.powi(-k);
            for h in [1.0, 2.0, 5.0] {
                assert!(e1(delta, h).unwrap() >= e1_lower_bound(delta, h) - 1e-15);
            }
        }
    }

    #[test]
    fn shape_ops() {
        let s = Shape::full(&[2, 10]);
        assert_eq!(s.width(1), 10);
        assert_eq!(s.clip(1, 3, 5).extent(1), Some((3, 5)));
        assert_eq!(s.remove(1, 0, 2).extent(1), Some((2, 10)));
        assert!(s.clip(1, 4, 4).is_empty());
        assert_eq!(s.remove(1, 4, 6).cover[1], vec![(0, 4), (6, 10)]);
    }

    #[test]
    fn runtime_floor_is_base() {
        let r = predicted_runtime(8, 2, 1, 1, 0.1, Profile::desk()).unwrap();
        assert_eq!(r.prediction.calls, 2);
        assert_eq!(r.prediction.base_calls, 1);
        assert_relative_eq!(r.prediction.cost, 1.0 + 100.0 * 2f64.powf(8f64.sqrt()), epsilon = 1e-9);
    }
}
