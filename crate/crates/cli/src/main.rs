use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use immreg::continuation::{
    epsilon_continuation, newton_solve, procrustes, ContinuationOptions, NewtonOptions, TargetData,
};
use immreg::fredholm::{
    based_report, identify_modes, killing_modes, svd_report, SpectralReport, DEFAULT_GAP_MIN,
};
use immreg::geometry::{darboux_residual, gauss_check, ImmersionMap, MetricField};
use immreg::io::{
    write_geometry_csv, write_immersion, write_json, write_trace_csv, ErrorRecord, Report,
    ShapeSpec,
};
use immreg::operator::{apply_phi, assemble_linearization, symbol_scan, Variant};
use immreg::spectral::{SpectralBases, SphereGrid};
use immreg::uniformization::{uniformize, LiouvilleOptions};
use immreg::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Numerical experiments with the regularized isometric-immersion operator
/// on the 2-sphere.
#[derive(Parser, Debug)]
#[command(name = "immreg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Flags,
}

#[derive(clap::Args, Debug, Default)]
struct Flags {
    /// Spectral truncation degree.
    #[arg(long = "L", global = true)]
    l: Option<usize>,
    /// Regularization parameter in [0, 1].
    #[arg(long, global = true, allow_negative_numbers = true)]
    epsilon: Option<f64>,
    /// additive | multiplicative
    #[arg(long, global = true)]
    variant: Option<String>,
    /// sphere:<r> | ellipsoid:<a>,<b>,<c> | perturbed:<r>;<l>,<m>,<amp>[;...] | file:<path>
    #[arg(long, global = true)]
    shape: Option<String>,
    /// Output directory for report.json and CSV files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// TOML file with defaults for any of these flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for the random directions of check-darboux.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Pass threshold for the checks, or the solver tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Number of covector directions per node.
    #[arg(long, global = true)]
    directions: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Intrinsic versus extrinsic Gauss curvature.
    CheckGauss,
    /// Residual of the Darboux equation for e_z and two random directions.
    CheckDarboux,
    /// Conformal class and factor of the induced metric.
    Uniformize,
    /// Principal symbol scan over nodes and directions.
    Symbol,
    /// Kernel, cokernel and index of the linearization.
    Index,
    /// Index data over a list of ε values.
    KernelSweep,
    /// Recover an immersion from its own data, starting at the round sphere.
    Solve,
    /// ε-continuation toward the isometric limit for the metric of the shape.
    Continue,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::CheckGauss => "check-gauss",
            Command::CheckDarboux => "check-darboux",
            Command::Uniformize => "uniformize",
            Command::Symbol => "symbol",
            Command::Index => "index",
            Command::KernelSweep => "kernel-sweep",
            Command::Solve => "solve",
            Command::Continue => "continue",
        }
    }
}

/// Contents of `--config`.
#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(rename = "L")]
    l: Option<usize>,
    epsilon: Option<f64>,
    variant: Option<String>,
    shape: Option<String>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    tol: Option<f64>,
    directions: Option<usize>,
    /// ε values for `kernel-sweep` and `continue`.
    schedule: Option<Vec<f64>>,
    gap_min: Option<f64>,
    max_iter: Option<usize>,
}

struct Settings {
    l: usize,
    epsilon: f64,
    variant: Variant,
    shape: ShapeSpec,
    out: Option<PathBuf>,
    seed: u64,
    tol: Option<f64>,
    directions: usize,
    schedule: Option<Vec<f64>>,
    gap_min: f64,
    max_iter: Option<usize>,
}

impl Settings {
    fn resolve(flags: Flags) -> Result<Self> {
        let file = match &flags.config {
            Some(path) => {
                let text = fs::read_to_string(path)?;
                toml::from_str::<FileConfig>(&text)
                    .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
            }
            None => FileConfig::default(),
        };
        let variant = flags.variant.or(file.variant).unwrap_or_else(|| "additive".into());
        let shape = flags.shape.or(file.shape).unwrap_or_else(|| "sphere:1".into());
        Ok(Self {
            l: flags.l.or(file.l).unwrap_or(12),
            epsilon: flags.epsilon.or(file.epsilon).unwrap_or(1.0),
            variant: variant.parse()?,
            shape: shape.parse()?,
            out: flags.out.or(file.out),
            seed: flags.seed.or(file.seed).unwrap_or(0),
            tol: flags.tol.or(file.tol),
            directions: flags.directions.or(file.directions).unwrap_or(36),
            schedule: file.schedule,
            gap_min: file.gap_min.unwrap_or(DEFAULT_GAP_MIN),
            max_iter: file.max_iter,
        })
    }

    fn grid(&self) -> Result<Arc<SphereGrid>> {
        SphereGrid::new(self.l)
    }

    fn immersion(&self) -> Result<ImmersionMap> {
        self.shape.build(&self.grid()?)
    }

    fn out_file(&self, name: &str) -> Option<PathBuf> {
        self.out.as_ref().map(|d| d.join(name))
    }
}

/// Outcome of a subcommand: the report body and whether its own check passed.
struct Outcome {
    data: Value,
    ok: bool,
}

fn passed(data: Value) -> Outcome {
    Outcome { data, ok: true }
}

fn spectral_json(r: &SpectralReport) -> Value {
    serde_json::to_value(r).expect("serializable")
}

fn check_gauss(s: &Settings) -> Result<Outcome> {
    let f = s.immersion()?;
    let tol = s.tol.unwrap_or(1e-6);
    let disc = gauss_check(&f)?;
    Ok(Outcome {
        data: json!({ "L": s.l, "max_discrepancy": disc, "tol": tol }),
        ok: disc <= tol,
    })
}

fn check_darboux(s: &Settings) -> Result<Outcome> {
    let f = s.immersion()?;
    let tol = s.tol.unwrap_or(1e-6);
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let mut dirs = vec![[0.0, 0.0, 1.0]];
    for _ in 0..2 {
        let z: f64 = rng.gen_range(-1.0..1.0);
        let p: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let r = (1.0 - z * z).sqrt();
        dirs.push([r * p.cos(), r * p.sin(), z]);
    }
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for e in dirs {
        let res = darboux_residual(&f, e)?;
        worst = worst.max(res);
        rows.push(json!({ "e": e, "residual": res }));
    }
    Ok(Outcome {
        data: json!({ "L": s.l, "directions": rows, "max_residual": worst, "tol": tol }),
        ok: worst <= tol,
    })
}

fn uniformize_cmd(s: &Settings) -> Result<Outcome> {
    let f = s.immersion()?;
    let metric = MetricField::from_immersion(&f);
    let opts = LiouvilleOptions {
        tol: s.tol.unwrap_or(1e-11),
        max_iters: s.max_iter.unwrap_or(40),
        ..Default::default()
    };
    let data = uniformize(&metric, &opts)?;
    if let Some(path) = s.out_file("geometry.csv") {
        let geo = f.geometry();
        write_geometry_csv(fs::File::create(path)?, f.grid(), &geo.mean, &metric.gauss_curvature(), &data.lambda2)?;
    }
    Ok(passed(json!({
        "L": s.l,
        "iterations": data.iterations(),
        "residual_history": data.residual_history,
        "nodal_residual": data.nodal_residual,
        "gauge": data.gauge,
        "gauge_parameters": data.gauge.parameters(),
        "lambda2_min": data.lambda2.iter().copied().fold(f64::INFINITY, f64::min),
        "lambda2_max": data.lambda2.iter().copied().fold(0.0, f64::max),
    })))
}

fn symbol_cmd(s: &Settings) -> Result<Outcome> {
    let f = s.immersion()?;
    let scan = symbol_scan(&f, s.epsilon, s.directions, None)?;
    let threshold = 1e-12;
    let characteristic = scan.max_singular_value_min <= threshold;
    Ok(passed(json!({
        "L": s.l,
        "scan": scan,
        "elliptic": scan.min_singular_value > threshold,
        "characteristic_in_all_sampled_directions": characteristic,
        "flag": if characteristic { "characteristic in all sampled directions" } else if scan.min_singular_value > threshold { "elliptic at all sampled covectors" } else { "characteristic in some sampled directions" },
    })))
}

fn index_report(f: &ImmersionMap, bases: &Arc<SpectralBases>, eps: f64, s: &Settings) -> Result<Value> {
    let op = assemble_linearization(f, bases, eps, s.variant)?;
    let mut report = svd_report(&op.matrix, eps, s.gap_min)?;
    identify_modes(&mut report, &op, f, bases);
    let based = based_report(&op, &killing_modes(f, bases), s.gap_min)?;
    Ok(json!({ "unbased": spectral_json(&report), "based": spectral_json(&based) }))
}

fn index_cmd(s: &Settings) -> Result<Outcome> {
    let f = s.immersion()?;
    let bases = Arc::new(SpectralBases::new(f.grid()));
    Ok(passed(index_report(&f, &bases, s.epsilon, s)?))
}

fn kernel_sweep(s: &Settings) -> Result<Outcome> {
    let f = s.immersion()?;
    let bases = Arc::new(SpectralBases::new(f.grid()));
    let eps = s.schedule.clone().unwrap_or_else(|| vec![1.0, 0.5, 0.25, 0.1]);
    let reports = eps
        .iter()
        .map(|&e| {
            let op = assemble_linearization(&f, &bases, e, s.variant)?;
            Ok(spectral_json(&svd_report(&op.matrix, e, s.gap_min)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(passed(json!({ "L": s.l, "variant": s.variant, "reports": reports })))
}

fn newton_options(s: &Settings, default_tol: f64) -> NewtonOptions {
    let mut o = NewtonOptions { tol: s.tol.unwrap_or(default_tol), gap_min: s.gap_min, ..Default::default() };
    if let Some(m) = s.max_iter {
        o.max_iter = m;
    }
    o
}

fn solve_cmd(s: &Settings) -> Result<Outcome> {
    let f = s.immersion()?;
    let target = TargetData::from_immersion(&f, s.epsilon, s.variant)?;
    let area = MetricField::from_immersion(&f).area();
    let f0 = ImmersionMap::sphere(f.grid(), (area / (4.0 * std::f64::consts::PI)).sqrt())?;
    let sol = newton_solve(&f0, &target, &newton_options(s, 1e-10))?;
    let fit = procrustes(&sol.immersion.positions(), &f.positions())?;
    if let Some(path) = s.out_file("solution.json") {
        write_immersion(&path, &sol.immersion)?;
    }
    if let Some(path) = s.out_file("geometry.csv") {
        let data = apply_phi(&sol.immersion, s.epsilon, s.variant)?;
        write_geometry_csv(fs::File::create(path)?, f.grid(), &data.mean, &data.gauss, &data.lambda2)?;
    }
    Ok(passed(json!({
        "L": s.l,
        "epsilon": s.epsilon,
        "variant": s.variant,
        "solution": sol,
        "procrustes": fit,
    })))
}

fn continue_cmd(s: &Settings) -> Result<Outcome> {
    let f = s.immersion()?;
    let metric = MetricField::from_immersion(&f);
    let mut opts = ContinuationOptions { variant: s.variant, newton: newton_options(s, 1e-6), ..Default::default() };
    if let Some(sched) = &s.schedule {
        opts.schedule = sched.clone();
    }
    let trace = epsilon_continuation(&metric, &opts)?;
    if let Some(path) = s.out_file("trace.csv") {
        write_trace_csv(fs::File::create(path)?, &trace)?;
    }
    if let Some(path) = s.out_file("geometry.csv") {
        let last = trace.accepted().last().map(|r| r.epsilon).unwrap_or(1.0);
        let data = apply_phi(&trace.immersion, last, s.variant)?;
        write_geometry_csv(fs::File::create(path)?, f.grid(), &data.mean, &data.gauss, &data.lambda2)?;
    }
    if let Some(path) = s.out_file("solution.json") {
        write_immersion(&path, &trace.immersion)?;
    }
    let ok = trace.status == immreg::continuation::TraceStatus::ReachedEpsMin;
    Ok(Outcome { data: json!({ "L": s.l, "trace": trace }), ok })
}

#[derive(Serialize)]
struct Envelope {
    ok: bool,
    #[serde(flatten)]
    body: Value,
}

fn run(cli: Cli) -> Result<bool> {
    let command = cli.command;
    let s = Settings::resolve(cli.common)?;
    if let Some(dir) = &s.out {
        fs::create_dir_all(dir)?;
    }
    let outcome = match command {
        Command::CheckGauss => check_gauss(&s)?,
        Command::CheckDarboux => check_darboux(&s)?,
        Command::Uniformize => uniformize_cmd(&s)?,
        Command::Symbol => symbol_cmd(&s)?,
        Command::Index => index_cmd(&s)?,
        Command::KernelSweep => kernel_sweep(&s)?,
        Command::Solve => solve_cmd(&s)?,
        Command::Continue => continue_cmd(&s)?,
    };
    let report = Report::new(command.name(), Envelope { ok: outcome.ok, body: outcome.data });
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(path) = s.out_file("report.json") {
        write_json(&path, &report)?;
    }
    Ok(outcome.ok)
}

fn write_error(out: Option<&Path>, e: &Error) {
    let record = ErrorRecord::from(e);
    eprintln!("{}", serde_json::to_string(&record).expect("serializable"));
    if let Some(dir) = out {
        let _ = fs::create_dir_all(dir).and_then(|_| {
            fs::write(dir.join("error.json"), serde_json::to_string_pretty(&record).expect("serializable"))
        });
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = cli.common.out.clone();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            write_error(out.as_deref(), &e);
            ExitCode::from(2)
        }
    }
}
