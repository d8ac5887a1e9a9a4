//! Command-line entry point: argument parsing, configuration resolution,
//! subcommand dispatch and persistence.

pub mod config;
pub mod identities;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::constitutive::{MaterialParams, ThermoState};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::hyperbolic::{asymmetry, assemble_a, assemble_j_and_cal_a, boundary_matrix_eigencheck, LiftDerivs};
use crate::interface::{rigidity_probe, ProbeOptions};
use crate::linearized::BoundaryBasicJet;
use crate::solver::probes::{jump_family_probe, tame_estimate_probe, trace_inequality_probe};
use crate::solver::{write_snapshot, Solver};
use crate::stability::{evaluate, evaluate_stretches, sweep, write_sweep_csv, Stretches, SweepSpec};

pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "elastocontact", version, about = "Thermoelastic contact discontinuity toolkit")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory overriding the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for data-parallel loops.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the background state as JSON.
    Background,
    /// Evaluate the stability condition (JSON) or a sweep (CSV).
    Stability(StabilityArgs),
    /// Symmetry, positivity and boundary eigenstructure on random states.
    CheckHyperbolicity,
    /// Newton probe of the jump system; one JSON line per trial.
    Rigidity,
    /// Identity residual suites; one JSON line per identity.
    VerifyIdentities,
    /// Run the linearized solver and write the ledger.
    Simulate,
    /// Stability sweep from the `[sweep]` section, written as CSV.
    Sweep,
    /// Energy ratio under grid refinement and the `[F_11]` family.
    ProbeTame,
    /// Trace inequalities on random band-limited fields.
    ProbeTrace,
}

#[derive(Debug, Args)]
struct StabilityArgs {
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    f11p: Option<f64>,
    #[arg(long)]
    f11m: Option<f64>,
    #[arg(long)]
    f22: Option<f64>,
    #[arg(long)]
    f33: Option<f64>,
    /// Sweep specification file (TOML or JSON).
    #[arg(long)]
    sweep_spec: Option<PathBuf>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Background => "background",
            Command::Stability(_) => "stability",
            Command::CheckHyperbolicity => "check-hyperbolicity",
            Command::Rigidity => "rigidity",
            Command::VerifyIdentities => "verify-identities",
            Command::Simulate => "simulate",
            Command::Sweep => "sweep",
            Command::ProbeTame => "probe-tame",
            Command::ProbeTrace => "probe-trace",
        }
    }
}

/// Exit code for an error: 2 for numerical aborts, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical_abort() {
        2
    } else {
        1
    }
}

/// One-line machine-readable error.
pub fn error_line(e: &Error) -> String {
    json!({ "error": e.kind(), "code": e.code(), "message": e.to_string() }).to_string()
}

/// Parse `argv`, run the subcommand and return the process exit code.
pub fn dispatch<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{}", e.render());
                return 0;
            }
            let _ = write!(err, "{}", e.render());
            let line = json!({ "error": "Usage", "code": 0, "message": e.kind().to_string() });
            let _ = writeln!(err, "{line}");
            return 1;
        }
    };
    match run(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "{}", error_line(&e));
            exit_code(&e)
        }
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output.dir = o.clone();
    }
    cfg.command = Some(cli.command.name().to_string());
    cfg.validate()?;
    Ok(cfg)
}

fn emit<T: Serialize>(out: &mut dyn Write, v: &T) -> Result<()> {
    let s = serde_json::to_string(v).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(out, "{s}")?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let s = serde_json::to_string_pretty(v).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(path, s + "\n")?;
    Ok(())
}

fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidParameter("--threads must be positive".into()));
        }
        // the global pool can only be set once per process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cfg = resolve(&cli)?;
    match &cli.command {
        Command::Background => emit(out, &cfg.background()?),
        Command::Stability(a) => stability(&cfg, a, out),
        Command::CheckHyperbolicity => emit(out, &check_hyperbolicity(&cfg.params()?, cfg.hyperbolicity.samples, cfg.seed)?),
        Command::Rigidity => rigidity(&cfg, out),
        Command::VerifyIdentities => {
            for line in identities::verify_identities(cfg.seed)? {
                emit(out, &line)?;
            }
            Ok(())
        }
        Command::Simulate => simulate(&cfg, out),
        Command::Sweep => {
            let spec = cfg.sweep.ok_or_else(|| Error::Config("missing [sweep] section".into()))?;
            let rows = sweep(&spec)?;
            let dir = &cfg.output.dir;
            cfg.write_resolved(dir)?;
            write_sweep_csv(&rows, std::fs::File::create(dir.join("sweep.csv"))?)?;
            write_sweep_csv(&rows, out)
        }
        Command::ProbeTame => {
            let spec = cfg.tame_spec()?;
            let tame = tame_estimate_probe(&spec)?;
            let family = if cfg.probe.f11_family.is_empty() || cfg.perturbation.is_some() {
                None
            } else {
                let b = &cfg.background;
                Some(jump_family_probe(&spec, b.f_plus, b.s_plus, &cfg.probe.f11_family)?)
            };
            let report = json!({ "tame": tame, "family": family });
            cfg.write_resolved(&cfg.output.dir)?;
            write_json(&cfg.output.dir.join("tame.json"), &report)?;
            emit(out, &report)
        }
        Command::ProbeTrace => {
            let t = &cfg.trace;
            let grid = Grid::new(cfg.dim, t.n1, t.x_max, t.n_tan)?;
            let report = trace_inequality_probe(&grid, t.samples, cfg.seed)?;
            cfg.write_resolved(&cfg.output.dir)?;
            write_json(&cfg.output.dir.join("trace.json"), &report)?;
            emit(out, &report)
        }
    }
}

fn stability(cfg: &RunConfig, a: &StabilityArgs, out: &mut dyn Write) -> Result<()> {
    if let Some(path) = &a.sweep_spec {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let spec: SweepSpec = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(e.message().replace('\n', " ")))?
        };
        return write_sweep_csv(&sweep(&spec)?, out);
    }
    let flags = a.dim.is_some() || a.f11p.is_some() || a.f11m.is_some() || a.f22.is_some() || a.f33.is_some();
    let verdict = if flags {
        let b = &cfg.background;
        let st = Stretches {
            dim: a.dim.unwrap_or(cfg.dim),
            f11_plus: a.f11p.unwrap_or(b.f_plus[0]),
            f11_minus: a.f11m.unwrap_or(b.f11_minus),
            f22: a.f22.unwrap_or(b.f_plus[1]),
            f33: a.f33.unwrap_or(b.f_plus[2]),
        };
        evaluate_stretches(&st)?
    } else {
        evaluate(&cfg.background()?)?
    };
    emit(out, &verdict)
}

#[derive(Serialize)]
struct TrialLine<'a> {
    trial: &'a crate::interface::RigidityTrial,
}

fn rigidity(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let params = cfg.params()?;
    let bg = cfg.background()?;
    let opts = ProbeOptions {
        trials: cfg.rigidity.trials,
        seed: cfg.seed,
        spread: cfg.rigidity.spread,
        s_minus: cfg.rigidity.s_minus,
        ..ProbeOptions::default()
    };
    let rep = rigidity_probe(&bg.plus_state(), &crate::hyperbolic::FrontGeometry::flat(cfg.dim), &params, &opts)?;
    for t in &rep.trials {
        emit(out, &TrialLine { trial: t })?;
    }
    emit(
        out,
        &json!({ "summary": {
            "dim": rep.dim,
            "s_jump": rep.s_jump,
            "converged": rep.converged,
            "non_converged": rep.non_converged,
            "max_root_distance": rep.max_root_distance,
            "no_nontrivial_root_found": rep.no_nontrivial_root_found,
        }}),
    )
}

fn simulate(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let dir = cfg.output.dir.clone();
    let solver = Solver::new(cfg.run_setup()?)?;
    let grid = solver.grid.clone();
    let res = solver.run()?;
    cfg.write_resolved(&dir)?;
    res.ledger.write_csv(std::fs::File::create(dir.join("ledger.csv"))?)?;
    write_json(&dir.join("summary.json"), &res.summary)?;
    if cfg.output.snapshot {
        write_snapshot(&dir, "final", &grid, res.summary.t_final, &res.w)?;
    }
    emit(out, &res.summary)
}

/// Structure checks on random states.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HyperbolicityReport {
    pub dim: usize,
    pub samples: usize,
    /// Largest `|M - M^T|` entry over all `A_i`.
    pub max_asymmetry_a: f64,
    /// Largest `|M - M^T|` entry over all `cal A_i`.
    pub max_asymmetry_cal_a: f64,
    /// Samples where `A_0` or `cal A_0` failed Cholesky.
    pub not_positive_definite: usize,
    /// Constrained samples whose boundary spectrum missed the predicted pattern.
    pub eigen_failures: usize,
    /// Doubled signatures different from `(2d, 2d, 2(d^2-d+2))`.
    pub signature_failures: usize,
}

fn random_state(rng: &mut ChaCha8Rng, params: &MaterialParams) -> Result<ThermoState> {
    let d = params.dim;
    let mut f = [[0.0; 3]; 3];
    loop {
        for (i, row) in f.iter_mut().enumerate().take(d) {
            for (j, x) in row.iter_mut().enumerate().take(d) {
                *x = if i == j { rng.gen_range(0.6..1.5) } else { rng.gen_range(-0.4..0.4) };
            }
        }
        if crate::constitutive::det(&f, d) > 0.2 && f[0][0] > 0.2 {
            break;
        }
    }
    let mut st = ThermoState::at_rest(d, f, rng.gen_range(-0.5..0.5), params)?;
    for x in st.v.iter_mut().take(d) {
        *x = rng.gen_range(-1.0..1.0);
    }
    Ok(st)
}

/// Symmetry of `A_i` and `cal A_i`, positivity of `A_0` and `cal A_0`, and the
/// boundary eigenstructure on constrained states.
pub fn check_hyperbolicity(params: &MaterialParams, samples: usize, seed: u64) -> Result<HyperbolicityReport> {
    let d = params.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = HyperbolicityReport {
        dim: d,
        samples,
        max_asymmetry_a: 0.0,
        max_asymmetry_cal_a: 0.0,
        not_positive_definite: 0,
        eigen_failures: 0,
        signature_failures: 0,
    };
    let pd = |m: &DMatrix<f64>| m.clone().cholesky().is_some();
    for _ in 0..samples {
        let st = random_state(&mut rng, params)?;
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let lift = LiftDerivs {
            dt: rng.gen_range(-0.5..0.5),
            d1: sign * rng.gen_range(0.5..2.0),
            dtan: [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)],
        };
        let sys = assemble_a(&st, params)?;
        let cm = assemble_j_and_cal_a(&st, &lift, sign, params)?;
        rep.max_asymmetry_a = sys.a.iter().chain([&sys.a0]).map(asymmetry).fold(rep.max_asymmetry_a, f64::max);
        rep.max_asymmetry_cal_a = cm.cal_a.iter().map(asymmetry).fold(rep.max_asymmetry_cal_a, f64::max);
        if !pd(&sys.a0) || !pd(&cm.cal_a[0]) {
            rep.not_positive_definite += 1;
        }
        let b = BoundaryBasicJet::random(&mut rng, params)?;
        match boundary_matrix_eigencheck(&b.plus, &b.minus, &b.front(), params) {
            Ok(e) => {
                let k = d * d - d + 2;
                if e.doubled_signature != (2 * d, 2 * d, 2 * k) {
                    rep.signature_failures += 1;
                }
            }
            Err(Error::MultiplicityMismatch(_)) => rep.eigen_failures += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(rep)
}
