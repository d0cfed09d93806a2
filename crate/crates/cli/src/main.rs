//! `quadland` command-line entry point.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 numerical failure.

mod config;
mod output;

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use quadland::certifier::dual_certificate_with;
use quadland::certifier::CertTolerances;
use quadland::convex_oracle::solve_convex;
use quadland::experiments::{
    gen_synthetic, run_gap_experiment, run_landscape_suite, DataSpec, GapConfig,
    InputDistribution, LandscapeConfig, Teacher,
};
use quadland::io::{read_dataset_csv, read_weights_csv, write_dataset_csv, write_weights_csv};
use quadland::optimizer::{
    init_weights, run_gd, run_perturbed_gd, EscapeConfig, OptimConfig, StepRule,
};
use quadland::perturb::sample_psd;
use quadland::rademacher::{report, Expectation, RademacherReport};
use quadland::rng::derive_seed;
use quadland::{Dataset, Objective, QuadError, Weights};

use config::{Distribution, Format, LossName, RunConfig, TaskName};

#[derive(Parser)]
#[command(name = "quadland", version, about = "Quadratic-activation network laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate a synthetic dataset (CSV)
    Gen,
    /// Train by (perturbed) gradient descent; emits final weights and optional trace
    Train,
    /// Certify a weight matrix on a dataset
    Certify,
    /// Solve the convex reference problem
    Oracle,
    /// Empirical Rademacher complexity and closed-form bounds
    Rademacher,
    /// Generalization-gap experiment over seeds
    Gengap,
    /// Landscape suite: train, certify and compare with the convex oracle
    Landscape,
}

#[derive(Args)]
struct Flags {
    /// TOML config file; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    lambda: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    delta: Option<f64>,
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true)]
    d: Option<usize>,
    #[arg(long, global = true)]
    n: Option<usize>,
    #[arg(long, global = true, value_enum)]
    loss: Option<LossName>,
    #[arg(long, global = true)]
    mc_draws: Option<usize>,
    /// Dataset CSV (header x_0,…,x_{d-1},y)
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Weights CSV (header k=..,d=..)
    #[arg(long, global = true)]
    weights: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    task: Option<TaskName>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Per-iteration trace CSV for `train`
    #[arg(long, global = true)]
    trace: Option<PathBuf>,
    /// Use perturbed gradient descent
    #[arg(long, global = true)]
    perturbed: bool,
}

impl Flags {
    fn as_config(&self) -> RunConfig {
        RunConfig {
            seed: self.seed,
            out: self.out.clone(),
            format: self.format,
            lambda: self.lambda,
            delta: self.delta,
            k: self.k,
            d: self.d,
            n: self.n,
            loss: self.loss,
            mc_draws: self.mc_draws,
            data: self.data.clone(),
            weights: self.weights.clone(),
            task: self.task,
            trials: self.trials,
            trace: self.trace.clone(),
            perturbed: self.perturbed.then_some(true),
            ..RunConfig::default()
        }
    }
}

enum Failure {
    Invalid(String),
    Numerical(String),
}

impl From<QuadError> for Failure {
    fn from(e: QuadError) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Invalid(e.to_string())
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Invalid(e.to_string())
    }
}

type Outcome<T = ()> = std::result::Result<T, Failure>;

fn invalid<T>(msg: impl Into<String>) -> Outcome<T> {
    Err(Failure::Invalid(msg.into()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(2)
        }
    }
}

fn configure_threads() -> Outcome {
    let Ok(raw) = std::env::var("QUADLAND_THREADS") else {
        return Ok(());
    };
    let n: usize = match raw.trim().parse() {
        Ok(n) if n >= 1 => n,
        _ => return invalid(format!("QUADLAND_THREADS must be a positive integer, got `{raw}`")),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Invalid(e.to_string()))
}

fn run(cli: &Cli) -> Outcome {
    configure_threads()?;
    let file = match &cli.flags.config {
        Some(path) => RunConfig::load(path).map_err(Failure::Invalid)?,
        None => RunConfig::default(),
    };
    let cfg = file.overlay(cli.flags.as_config());
    // open every output before doing any work
    let out = open_output(cfg.out.as_deref())?;
    let trace = match &cfg.trace {
        Some(p) => Some(create(p)?),
        None => None,
    };
    match cli.command {
        Command::Gen => gen(&cfg, out),
        Command::Train => train(&cfg, out, trace),
        Command::Certify => certify(&cfg, out),
        Command::Oracle => oracle(&cfg, out),
        Command::Rademacher => rademacher(&cfg, out),
        Command::Gengap => gengap(&cfg, out),
        Command::Landscape => landscape(&cfg, out),
    }
}

fn create(path: &Path) -> Outcome<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Invalid(format!("cannot write {}: {e}", path.display())))
}

fn open_output(path: Option<&Path>) -> Outcome<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn format(cfg: &RunConfig, default: Format) -> Format {
    cfg.format.unwrap_or(default)
}

fn emit_json<T: Serialize>(mut out: Box<dyn Write>, value: &T) -> Outcome {
    output::write_json(&mut out, value)?;
    out.flush()?;
    Ok(())
}

fn positive(name: &str, v: f64) -> Outcome<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        invalid(format!("`{name}` must be a positive number, got {v}"))
    }
}

fn load_dataset(cfg: &RunConfig) -> Outcome<Dataset> {
    let Some(path) = &cfg.data else {
        return invalid("this subcommand needs `data` (a dataset CSV)");
    };
    let f = File::open(path).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
    Ok(read_dataset_csv(BufReader::new(f), cfg.task())?)
}

fn load_weights(cfg: &RunConfig) -> Outcome<Weights> {
    let Some(path) = &cfg.weights else {
        return invalid("this subcommand needs `weights` (a weights CSV)");
    };
    let f = File::open(path).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
    Ok(read_weights_csv(BufReader::new(f))?)
}

fn data_spec(cfg: &RunConfig, n: usize) -> Outcome<DataSpec> {
    let d = cfg.d.unwrap_or(5);
    if d == 0 {
        return invalid("`d` must be ≥ 1");
    }
    let distribution = match cfg.distribution.unwrap_or(Distribution::Gaussian) {
        Distribution::Gaussian => InputDistribution::GaussianStandard,
        Distribution::Sphere => InputDistribution::BoundedSphere {
            b: positive("b", cfg.b.unwrap_or(1.0))?,
        },
    };
    let k0 = cfg.k0.unwrap_or(2.min(d));
    let teacher = if k0 == 0 {
        None
    } else {
        let norm = positive("teacher_norm", cfg.teacher_norm.unwrap_or(1.0))?;
        Some(Teacher::random(k0, d, norm, derive_seed(cfg.seed(), 0x7EAC)))
    };
    Ok(DataSpec {
        n,
        d,
        distribution,
        teacher,
        noise_std: cfg.noise_std.unwrap_or(0.0),
        task: cfg.task(),
        seed: cfg.seed(),
    })
}

fn objective(cfg: &RunConfig, data: Dataset) -> Outcome<Objective> {
    let d = data.d();
    let mut obj = Objective::new(data, cfg.loss(), cfg.lambda())?;
    if let Some(delta) = cfg.delta {
        obj = obj.with_perturbation(sample_psd(d, delta, derive_seed(cfg.seed(), 12))?)?;
    }
    Ok(obj)
}

/// Training settings; `base` supplies whatever the config leaves unset.
fn optim_config(cfg: &RunConfig, base: OptimConfig) -> OptimConfig {
    let escape = if cfg.perturbed.unwrap_or(false) || cfg.delta.is_some() {
        let d = EscapeConfig::default();
        Some(EscapeConfig {
            radius: cfg.escape_radius.unwrap_or(d.radius),
            patience: cfg.patience.unwrap_or(d.patience),
            hess_tol: cfg.hess_tol.unwrap_or(d.hess_tol),
        })
    } else {
        base.escape
    };
    OptimConfig {
        step: cfg.step_size.map(|eta| StepRule::Fixed { eta }).unwrap_or(base.step),
        max_iters: cfg.max_iters.unwrap_or(base.max_iters),
        grad_tol: cfg.grad_tol.unwrap_or(base.grad_tol),
        escape,
        init_scale: cfg.init_scale.unwrap_or(base.init_scale),
        seed: derive_seed(cfg.seed(), 13),
    }
}

fn rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

// ---------------------------------------------------------------------------

fn gen(cfg: &RunConfig, mut out: Box<dyn Write>) -> Outcome {
    let data = gen_synthetic(&data_spec(cfg, cfg.n.unwrap_or(100))?)?;
    match format(cfg, Format::Csv) {
        Format::Csv => write_dataset_csv(&data, &mut out)?,
        Format::Json => {
            #[derive(Serialize)]
            struct DatasetJson {
                n: usize,
                d: usize,
                inputs: Vec<Vec<f64>>,
                labels: Vec<f64>,
            }
            let json = DatasetJson {
                n: data.n(),
                d: data.d(),
                inputs: rows(data.inputs()),
                labels: data.labels().iter().copied().collect(),
            };
            return emit_json(out, &json);
        }
    }
    out.flush()?;
    Ok(())
}

fn train(cfg: &RunConfig, mut out: Box<dyn Write>, trace: Option<BufWriter<File>>) -> Outcome {
    let data = load_dataset(cfg)?;
    let (d, k) = (data.d(), cfg.k.unwrap_or(data.d()));
    let obj = objective(cfg, data)?;
    let ocfg = optim_config(cfg, OptimConfig::default());
    let w0 = match &cfg.weights {
        Some(_) => load_weights(cfg)?,
        None => init_weights(k, d, ocfg.init_scale, derive_seed(cfg.seed(), 14)),
    };
    let res = if ocfg.escape.is_some() {
        run_perturbed_gd(&w0, &obj, &ocfg)?
    } else {
        run_gd(&w0, &obj, &ocfg)?
    };
    if let Some(mut t) = trace {
        res.write_trace_csv(&mut t)?;
        t.flush()?;
    }
    match format(cfg, Format::Json) {
        Format::Csv => {
            write_weights_csv(&res.final_weights, &mut out)?;
            out.flush()?;
            Ok(())
        }
        Format::Json => {
            #[derive(Serialize)]
            struct TrainJson {
                final_value: f64,
                final_grad_norm: f64,
                iterations: usize,
                converged: bool,
                escapes: usize,
                k: usize,
                d: usize,
                weights: Vec<Vec<f64>>,
            }
            emit_json(
                out,
                &TrainJson {
                    final_value: res.final_value,
                    final_grad_norm: res.final_grad_norm(),
                    iterations: res.iterations,
                    converged: res.converged,
                    escapes: res.escapes,
                    k: res.final_weights.k(),
                    d: res.final_weights.d(),
                    weights: rows(res.final_weights.matrix()),
                },
            )
        }
    }
}

fn certify(cfg: &RunConfig, mut out: Box<dyn Write>) -> Outcome {
    let data = load_dataset(cfg)?;
    let w = load_weights(cfg)?;
    let obj = objective(cfg, data)?;
    let defaults = CertTolerances::default();
    let tols = CertTolerances {
        eps: cfg.eps.unwrap_or(defaults.eps),
        grad_tol: cfg.grad_tol.unwrap_or(defaults.grad_tol),
        hess_tol: cfg.hess_tol.unwrap_or(defaults.hess_tol),
        ..defaults
    };
    let cert = dual_certificate_with(&w, &obj, &tols)?;
    match format(cfg, Format::Json) {
        Format::Json => emit_json(out, &cert),
        Format::Csv => {
            let json = serde_json::to_value(&cert).map_err(io::Error::other)?;
            write_flat_csv(&mut out, &json)?;
            out.flush()?;
            Ok(())
        }
    }
}

fn oracle(cfg: &RunConfig, mut out: Box<dyn Write>) -> Outcome {
    let data = load_dataset(cfg)?;
    let tol = positive("tol", cfg.tol.unwrap_or(1e-8))?;
    let sol = solve_convex(&data, cfg.loss(), cfg.lambda(), tol, cfg.max_iters.unwrap_or(200_000))?;
    #[derive(Serialize)]
    struct OracleJson {
        value: f64,
        kkt_residual: f64,
        fixed_point_residual: f64,
        trace: f64,
        iterations: usize,
        converged: bool,
        m: Vec<Vec<f64>>,
    }
    let json = OracleJson {
        value: sol.value,
        kkt_residual: sol.kkt_residual,
        fixed_point_residual: sol.fixed_point_residual,
        trace: sol.trace(),
        iterations: sol.iterations,
        converged: sol.converged,
        m: rows(&sol.m),
    };
    if !sol.converged {
        eprintln!("warning: oracle stopped after {} iterations without reaching tol", sol.iterations);
    }
    match format(cfg, Format::Json) {
        Format::Json => emit_json(out, &json),
        Format::Csv => {
            let mut v = serde_json::to_value(&json).map_err(io::Error::other)?;
            if let Some(obj) = v.as_object_mut() {
                obj.remove("m");
            }
            write_flat_csv(&mut out, &v)?;
            out.flush()?;
            Ok(())
        }
    }
}

fn rademacher(cfg: &RunConfig, mut out: Box<dyn Write>) -> Outcome {
    let data = match &cfg.data {
        Some(_) => load_dataset(cfg)?,
        // inputs only; labels are irrelevant here
        None => gen_synthetic(&data_spec(
            &RunConfig { k0: Some(0), ..cfg.clone() },
            cfg.n.unwrap_or(200),
        )?)?,
    };
    let mode = if cfg.enumerate.unwrap_or(false) {
        Expectation::Enumerate
    } else {
        Expectation::Auto
    };
    let (rep, vacuous) = report(
        &data,
        positive("frob_budget", cfg.frob_budget.unwrap_or(1.0))?,
        cfg.mc_draws.unwrap_or(1000),
        derive_seed(cfg.seed(), 21),
        mode,
        positive("c_gauss", cfg.c_gauss.unwrap_or(1.0))?,
    )?;
    if vacuous {
        eprintln!("warning: d = 1, so ln d = 0 and the logarithmic bounds are vacuous");
    }
    match format(cfg, Format::Json) {
        Format::Json => emit_json(out, &rep),
        Format::Csv => {
            writeln!(out, "{}", RademacherReport::CSV_HEADER)?;
            writeln!(out, "{}", rep.csv_row())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn gengap(cfg: &RunConfig, mut out: Box<dyn Write>) -> Outcome {
    let ns = match &cfg.n_values {
        Some(v) if !v.is_empty() => v.clone(),
        Some(_) => return invalid("`n_values` must not be empty"),
        None => vec![cfg.n.unwrap_or(200)],
    };
    let seeds: Vec<u64> = (0..cfg.seeds.unwrap_or(10) as u64)
        .map(|i| derive_seed(cfg.seed(), i))
        .collect();
    if seeds.is_empty() {
        return invalid("`seeds` must be ≥ 1");
    }
    let noisy = RunConfig {
        noise_std: Some(cfg.noise_std.unwrap_or(0.5)),
        ..cfg.clone()
    };
    let mut reports = Vec::new();
    for &n in &ns {
        let spec = data_spec(&noisy, n)?;
        let gap_cfg = GapConfig {
            k: cfg.k.unwrap_or(spec.d),
            data: spec,
            loss: cfg.loss(),
            lambda: cfg.lambda(),
            test_n: cfg.test_n.unwrap_or(10 * n),
            seeds: seeds.clone(),
            train: optim_config(cfg, OptimConfig::default()),
        };
        let rep = run_gap_experiment(&gap_cfg)?;
        for (seed, why) in &rep.failed_seeds {
            eprintln!("warning: n={n} seed {seed} failed and was excluded: {why}");
        }
        reports.push(rep);
    }
    match format(cfg, Format::Json) {
        Format::Json => emit_json(out, &reports),
        Format::Csv => {
            for (i, rep) in reports.iter().enumerate() {
                let mut buf = Vec::new();
                rep.write_csv(&mut buf)?;
                let text = String::from_utf8_lossy(&buf);
                let skip = if i == 0 { 0 } else { 1 };
                for line in text.lines().skip(skip) {
                    writeln!(out, "{line}")?;
                }
            }
            out.flush()?;
            Ok(())
        }
    }
}

fn landscape(cfg: &RunConfig, mut out: Box<dyn Write>) -> Outcome {
    let d = cfg.d.unwrap_or(5);
    let mut lc = LandscapeConfig::new(
        d,
        cfg.k.unwrap_or(d),
        cfg.n.unwrap_or(30),
        cfg.lambda(),
        cfg.loss(),
        cfg.trials.unwrap_or(20),
    );
    lc.smoothed_delta = cfg.delta;
    lc.perturbed = cfg.perturbed.unwrap_or(false);
    lc.base_seed = cfg.seed();
    if let Some(k0) = cfg.k0 {
        lc.teacher_k0 = k0;
    }
    if let Some(s) = cfg.noise_std {
        lc.noise_std = s;
    }
    if let Some(tol) = cfg.tol {
        lc.oracle_tol = positive("tol", tol)?;
    }
    lc.train = OptimConfig {
        escape: lc.train.escape,
        ..optim_config(&RunConfig { perturbed: None, delta: None, ..cfg.clone() }, lc.train)
    };
    let summary = run_landscape_suite(&lc)?;
    match format(cfg, Format::Json) {
        Format::Json => emit_json(out, &summary),
        Format::Csv => {
            summary.write_csv(&mut out)?;
            out.flush()?;
            Ok(())
        }
    }
}

/// Header and one row from the scalar fields of a JSON object.
fn write_flat_csv(out: &mut dyn Write, v: &serde_json::Value) -> io::Result<()> {
    let Some(obj) = v.as_object() else {
        return Ok(());
    };
    let keys: Vec<&String> = obj.keys().collect();
    let vals: Vec<String> = obj
        .values()
        .map(|x| match x {
            serde_json::Value::Number(num) => match num.as_f64() {
                Some(f) if num.is_f64() => quadland::io::fmt_f64(f),
                _ => num.to_string(),
            },
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        })
        .collect();
    writeln!(out, "{}", keys.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(","))?;
    writeln!(out, "{}", vals.join(","))
}
