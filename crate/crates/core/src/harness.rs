//! Seeded circuit generators, the experiment runner and report emission.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dnc::{self, Branch, CallKind, DncError, Estimator, ExactBase, ParameterSchedule, Profile, TraceNode};
use crate::errmodel::{self, ErrorModel};
use crate::geomcircuit::{Gate, GeomError, LatticeCircuit};
use crate::oracle::{self, OracleError};
use crate::synthesis::{synthesis_of_circuit, CalculusMode, CutCalculus};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid generator spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Dnc(#[from] DncError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Config(String),
    #[error("unsupported schema_version {0}")]
    Schema(u32),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GateSet {
    /// Haar-random two-qubit unitaries.
    Haar,
    /// Random unitaries within roughly `strength` of the identity.
    Weak { strength: f64 },
    /// One named two-qubit gate everywhere.
    Named { name: String },
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub dims: Vec<usize>,
    pub depth: usize,
    pub gate_set: GateSet,
    pub seed: u64,
    /// Pads the lattice with leading extent-1 axes up to this rank.
    #[serde(default)]
    pub embed_rank: Option<usize>,
}

/// Q from the QR factorisation of `m`, with the phases of R's diagonal
/// pushed into Q so the distribution is Haar for Gaussian `m`.
fn unitary_from(m: DMatrix<Complex64>) -> DMatrix<Complex64> {
    let qr = m.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..q.ncols() {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        for i in 0..q.nrows() {
            q[(i, j)] *= phase;
        }
    }
    q
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(n, n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im) / std::f64::consts::SQRT_2
    })
}

fn row_major(m: &DMatrix<Complex64>) -> Vec<Complex64> {
    (0..m.nrows()).flat_map(|r| (0..m.ncols()).map(move |c| m[(r, c)])).collect()
}

fn two_qubit_gate(set: &GateSet, rng: &mut ChaCha8Rng) -> Result<Vec<Complex64>> {
    Ok(match set {
        GateSet::Haar => row_major(&unitary_from(gaussian(rng, 4))),
        GateSet::Weak { strength } => {
            let m = DMatrix::identity(4, 4) + gaussian(rng, 4) * Complex64::new(*strength, 0.0);
            row_major(&unitary_from(m))
        }
        GateSet::Named { name } => crate::geomcircuit::named_matrix(name)?,
        GateSet::Identity => crate::geomcircuit::identity_matrix(2),
    })
}

/// Brickwork: layer ℓ pairs neighbours along the (ℓ mod A)-th non-trivial
/// axis, starting at even or odd offsets on alternating sweeps.
pub fn generate_circuit(spec: &GeneratorSpec) -> Result<LatticeCircuit> {
    if spec.dims.is_empty() || spec.dims.contains(&0) {
        return Err(HarnessError::Spec(format!("dims must be non-empty and positive, got {:?}", spec.dims)));
    }
    if spec.depth == 0 {
        return Err(HarnessError::Spec("depth must be at least 1".into()));
    }
    if let GateSet::Named { name } = &spec.gate_set {
        let m = crate::geomcircuit::named_matrix(name)?;
        if m.len() != 16 {
            return Err(HarnessError::Spec(format!("gate {name} is not a two-qubit gate")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let axes: Vec<usize> = (0..spec.dims.len()).filter(|&a| spec.dims[a] > 1).collect();
    let probe = LatticeCircuit::identity(spec.dims.clone(), 0);
    let mut layers = Vec::with_capacity(spec.depth);
    for l in 0..spec.depth {
        let mut layer = Vec::new();
        if !axes.is_empty() {
            let axis = axes[l % axes.len()];
            let parity = (l / axes.len()) % 2;
            for q in 0..probe.num_qubits() {
                let c = probe.coord_of(q);
                if c[axis] % 2 != parity || c[axis] + 1 >= spec.dims[axis] {
                    continue;
                }
                let mut other = c.clone();
                other[axis] += 1;
                let mut g = Gate::new(two_qubit_gate(&spec.gate_set, &mut rng)?, vec![c, other]);
                if let GateSet::Named { name } = &spec.gate_set {
                    g.label = Some(name.clone());
                }
                layer.push(g);
            }
        }
        layers.push(layer);
    }
    let circuit = LatticeCircuit::from_layers(spec.dims.clone(), layers);
    Ok(match spec.embed_rank {
        Some(r) => circuit.embed(r),
        None => circuit,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CircuitSource {
    File { path: PathBuf },
    Generated(GeneratorSpec),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalculusKind {
    #[default]
    Exact,
    Power,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseKind {
    #[default]
    Exact,
}

fn default_profile() -> Profile {
    Profile::desk()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub circuits: Vec<CircuitSource>,
    pub deltas: Vec<f64>,
    #[serde(default = "default_profile")]
    pub profile: Profile,
    #[serde(default)]
    pub calculus: CalculusKind,
    #[serde(default)]
    pub base: BaseKind,
    /// Lattice dimension handed to the estimator; defaults to the rank.
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub output_json: Option<PathBuf>,
    #[serde(default)]
    pub output_csv: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.into(), source })?;
        let cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| HarnessError::Config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(HarnessError::Schema(cfg.schema_version));
        }
        // relative paths resolve against the config's directory
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: PathBuf| if p.is_relative() { base.join(p) } else { p };
        let circuits = cfg
            .circuits
            .into_iter()
            .map(|c| match c {
                CircuitSource::File { path } => CircuitSource::File { path: rebase(path) },
                other => other,
            })
            .collect();
        Ok(ExperimentConfig {
            circuits,
            output_json: cfg.output_json.map(rebase),
            output_csv: cfg.output_csv.map(rebase),
            ..cfg
        })
    }
}

pub fn load_circuit(source: &CircuitSource) -> Result<LatticeCircuit> {
    match source {
        CircuitSource::File { path } => {
            let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.clone(), source })?;
            Ok(LatticeCircuit::from_json(&text)?)
        }
        CircuitSource::Generated(spec) => generate_circuit(spec),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub nodes: usize,
    pub max_depth: usize,
    pub by_kind: BTreeMap<CallKind, usize>,
    pub by_branch: BTreeMap<Branch, usize>,
}

impl TraceSummary {
    pub fn of(trace: &TraceNode) -> Self {
        let mut by_branch = BTreeMap::new();
        trace.walk(&mut |n, _| *by_branch.entry(n.branch).or_insert(0) += 1);
        TraceSummary { nodes: trace.node_count(), max_depth: trace.max_depth(), by_kind: trace.kind_counts(), by_branch }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub circuit_index: usize,
    pub fingerprint: String,
    pub num_qubits: usize,
    pub dim: usize,
    pub delta: f64,
    pub oracle: f64,
    pub estimate: f64,
    pub error: f64,
    pub within_delta: bool,
    pub predicted_bound: Option<f64>,
    pub predicted_calls: Option<usize>,
    pub schedule: Option<ParameterSchedule>,
    pub trace: TraceSummary,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub records: Vec<Record>,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    circuit_index: usize,
    fingerprint: &'a str,
    num_qubits: usize,
    dim: usize,
    delta: f64,
    oracle: f64,
    estimate: f64,
    error: f64,
    within_delta: bool,
    trace_nodes: usize,
    wall_time_s: f64,
}

impl Report {
    pub fn all_within(&self) -> bool {
        self.records.iter().all(|r| r.within_delta)
    }

    pub fn exit_code(&self) -> i32 {
        if self.all_within() {
            0
        } else {
            1
        }
    }

    /// Stored errors agree with the stored oracle and estimate columns.
    pub fn self_consistent(&self) -> bool {
        self.records.iter().all(|r| r.error == (r.oracle - r.estimate).abs() && r.within_delta == (r.error <= r.delta))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(CsvRow {
                circuit_index: r.circuit_index,
                fingerprint: &r.fingerprint,
                num_qubits: r.num_qubits,
                dim: r.dim,
                delta: r.delta,
                oracle: r.oracle,
                estimate: r.estimate,
                error: r.error,
                within_delta: r.within_delta,
                trace_nodes: r.trace.nodes,
                wall_time_s: r.wall_time_s,
            })
            .expect("csv row serializes");
        }
        String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
    }

    pub fn write(&self, json: Option<&Path>, csv: Option<&Path>) -> Result<()> {
        let put = |path: &Path, text: String| std::fs::write(path, text).map_err(|source| HarnessError::Io { path: path.into(), source });
        if let Some(p) = json {
            put(p, self.to_json())?;
        }
        if let Some(p) = csv {
            put(p, self.to_csv())?;
        }
        Ok(())
    }
}

/// Runs the estimator and the oracle on one circuit at one δ.
pub fn run_one(circuit: &LatticeCircuit, index: usize, delta: f64, config: &ExperimentConfig) -> Result<Record> {
    let dim = config.dim.unwrap_or(circuit.rank());
    let d = circuit.depth.max(1);
    let s = synthesis_of_circuit(circuit);
    let base = match config.base {
        BaseKind::Exact => ExactBase,
    };
    let schedule = if dim > 2 { dnc::schedule(s.num_qubits(), d, dim, delta, config.profile).ok() } else { None };
    let mut est = Estimator::new(config.profile, d, &base);
    if config.calculus == CalculusKind::Power {
        let (k, t) = schedule.map_or((2, 2), |s| (s.k, s.t));
        est.calculus = Some(CutCalculus { mode: CalculusMode::PowerEncoding, k, t });
    }
    let started = Instant::now();
    let out = est.a_full(&s, delta, dim)?;
    let wall_time_s = started.elapsed().as_secs_f64();
    let oracle = oracle::synthesis_value_exact(&s)?;
    let error = (oracle - out.value).abs();
    let predicted_bound = schedule.map(|sc| errmodel::predicted_error(&ErrorModel::from_schedule(&sc), sc.eps));
    let predicted_calls = errmodel::predict_synthesis(&s, delta, dim, config.profile, d).ok().map(|p| p.calls);
    Ok(Record {
        circuit_index: index,
        fingerprint: format!("{:016x}", circuit.fingerprint()),
        num_qubits: s.num_qubits(),
        dim,
        delta,
        oracle,
        estimate: out.value,
        error,
        within_delta: error <= delta,
        predicted_bound,
        predicted_calls,
        schedule,
        trace: TraceSummary::of(&out.trace),
        wall_time_s,
    })
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<Report> {
    if config.schema_version != SCHEMA_VERSION {
        return Err(HarnessError::Schema(config.schema_version));
    }
    let mut records = Vec::new();
    for (i, src) in config.circuits.iter().enumerate() {
        let circuit = load_circuit(src)?;
        for &delta in &config.deltas {
            records.push(run_one(&circuit, i, delta, config)?);
        }
    }
    Ok(Report { schema_version: SCHEMA_VERSION, records })
}
