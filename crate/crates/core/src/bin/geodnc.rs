use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use geodnc::blockenc::{self, Side};
use geodnc::dnc::{self, Estimator, ExactBase, Profile};
use geodnc::errmodel::{self, ErrorModel};
use geodnc::geomcircuit::{LatticeCircuit, Slice};
use geodnc::harness::{self, ExperimentConfig};
use geodnc::oracle;
use geodnc::synthesis::{synthesis_of_circuit, CalculusMode, CutCalculus};

#[derive(Parser)]
#[command(name = "geodnc", version, about = "Divide-and-conquer output-probability estimation for shallow lattice circuits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Desk,
    Paper,
}

impl From<ProfileArg> for Profile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Desk => Profile::desk(),
            ProfileArg::Paper => Profile::Paper,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CalculusArg {
    Exact,
    Power,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaseArg {
    Exact,
}

#[derive(Subcommand)]
enum Command {
    /// Check geometric locality and gate shapes.
    Validate { circuit: PathBuf },
    /// Estimate |<0|C|0>|^2 and compare with the dense oracle.
    Simulate {
        circuit: PathBuf,
        #[arg(long)]
        delta: f64,
        #[arg(long, value_enum, default_value = "desk")]
        profile: ProfileArg,
        /// Lattice dimension; defaults to the circuit's rank.
        #[arg(long = "dim", alias = "D")]
        dim: Option<usize>,
        #[arg(long, value_enum, default_value = "exact")]
        base: BaseArg,
        #[arg(long, value_enum, default_value = "exact")]
        calculus: CalculusArg,
        /// Write the recursion trace as JSON.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Build and check the cut-state block-encodings for one cut.
    VerifyEncodings {
        circuit: PathBuf,
        /// Cut slice as axis:lo:hi.
        #[arg(long)]
        cut: String,
        #[arg(long, default_value_t = 2)]
        k: u32,
    },
    /// Run an experiment config and write its report.
    Experiment { config: PathBuf },
    /// Print the schedule, error bound and predicted cost.
    Predict {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long = "D")]
        dim: usize,
        #[arg(long)]
        delta: f64,
        /// Side length of the non-cut axes.
        #[arg(long)]
        w: usize,
        #[arg(long, value_enum, default_value = "paper")]
        profile: ProfileArg,
    },
}

type CliResult = Result<ExitCode, Box<dyn std::error::Error>>;

fn load(path: &Path) -> Result<LatticeCircuit, Box<dyn std::error::Error>> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(LatticeCircuit::from_json(&text)?)
}

fn parse_cut(s: &str) -> Result<Slice, String> {
    let parts: Vec<usize> = s
        .split(':')
        .map(|p| p.parse::<usize>().map_err(|e| format!("bad cut {s:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [axis, lo, hi] => Ok(Slice::new(axis, lo, hi)),
        _ => Err(format!("cut must be axis:lo:hi, got {s:?}")),
    }
}

fn validate(path: &Path) -> CliResult {
    let c = load(path)?;
    let report = c.validate();
    println!("qubits {}  dims {:?}  depth {}  gates {}", c.num_qubits(), c.dims, c.depth, c.gate_count());
    for v in &report.violations {
        println!("violation: {v:?}");
    }
    println!("{}", if report.ok() { "valid" } else { "invalid" });
    Ok(if report.ok() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn simulate(
    path: &Path,
    delta: f64,
    profile: Profile,
    dim: Option<usize>,
    calculus: CalculusArg,
    trace: Option<&Path>,
) -> CliResult {
    let c = load(path)?;
    let dim = dim.unwrap_or(c.rank());
    let d = c.depth.max(1);
    let s = synthesis_of_circuit(&c);
    let base = ExactBase;
    let mut est = Estimator::new(profile, d, &base);
    if let CalculusArg::Power = calculus {
        let sched = dnc::schedule(s.num_qubits(), d, dim.max(2), delta, profile)?;
        est.calculus = Some(CutCalculus { mode: CalculusMode::PowerEncoding, k: sched.k, t: sched.t });
    }
    let out = est.a_full(&s, delta, dim)?;
    println!("estimate {:.12}", out.value);
    match oracle::synthesis_value_exact(&s) {
        Ok(v) => println!("oracle   {v:.12}\nerror    {:.3e}  (delta {delta})", (v - out.value).abs()),
        Err(e) => println!("oracle   unavailable: {e}"),
    }
    println!("trace    {} nodes, depth {}", out.trace.node_count(), out.trace.max_depth());
    if let Some(p) = trace {
        std::fs::write(p, serde_json::to_string_pretty(&out.trace)?)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn verify_encodings(path: &Path, cut: &str, k: u32) -> CliResult {
    let c = load(path)?;
    let regions = c.cut_regions(&parse_cut(cut)?)?;
    let mut worst: f64 = 0.0;
    let mut row = |name: &str, enc: &blockenc::BlockEncoding| -> Result<(), Box<dyn std::error::Error>> {
        let dev = blockenc::verify_encoding(enc)?;
        let acc = blockenc::accounting(enc);
        worst = worst.max(dev);
        println!(
            "{name:<28} deviation {dev:.3e}  depth {:>3}  ancillas {:>3}  nonlocal {}",
            acc.depth, acc.ancillas, acc.nonlocal_gates
        );
        Ok(())
    };
    let sigma = blockenc::build_sigma_encoding(&c, &regions)?;
    row("sigma", &sigma)?;
    row("sigma interleaved", &blockenc::interleave(&sigma)?)?;
    row("rho_F", &blockenc::postselect_middle(&sigma))?;
    for side in [Side::Front, Side::Back] {
        let e = blockenc::build_rho_power_encoding(&c, &regions, k, side)?;
        let tag = if side == Side::Front { "F" } else { "B" };
        row(&format!("rho_{tag}^{k}"), &e)?;
        row(&format!("rho_{tag}^{k} interleaved"), &blockenc::interleave(&e)?)?;
    }
    Ok(if worst <= 1e-9 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn experiment(path: &Path) -> CliResult {
    let cfg = ExperimentConfig::from_file(path)?;
    let report = harness::run_experiment(&cfg)?;
    report.write(cfg.output_json.as_deref(), cfg.output_csv.as_deref())?;
    print!("{}", report.to_csv());
    Ok(if report.exit_code() == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn predict(n: usize, d: usize, dim: usize, delta: f64, w: usize, profile: Profile) -> CliResult {
    let sched = dnc::schedule(n, d, dim, delta, profile)?;
    println!("{}", serde_json::to_string_pretty(&sched)?);
    let model = ErrorModel::from_schedule(&sched);
    println!("predicted error bound {:.6e}", errmodel::predicted_error(&model, sched.eps));
    let side = w.max(1).pow(dim as u32 - 1);
    let l = (n / side).max(1);
    match errmodel::predicted_runtime(l, dim, d, w, delta, profile) {
        Ok(r) => println!(
            "predicted calls {}  base calls {}  cost {:.6e}  log2 envelope {:.6e} (c = {})",
            r.prediction.calls, r.prediction.base_calls, r.prediction.cost, r.log2_envelope, r.envelope_constant
        ),
        Err(e) => println!("predicted cost unavailable: {e}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { circuit } => validate(&circuit),
        Command::Simulate { circuit, delta, profile, dim, base: BaseArg::Exact, calculus, trace } => {
            simulate(&circuit, delta, profile.into(), dim, calculus, trace.as_deref())
        }
        Command::VerifyEncodings { circuit, cut, k } => verify_encodings(&circuit, &cut, k),
        Command::Experiment { config } => experiment(&config),
        Command::Predict { n, d, dim, delta, w, profile } => predict(n, d, dim, delta, w, profile.into()),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
