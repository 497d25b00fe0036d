//! Command-line driver.
//!
//! Subcommands: `simulate` (one trajectory plus time-series/spectra
//! artifacts), `couple` (synchronously coupled pairs and a mixing-rate
//! fit), `uniqueness` (time-averaged observables from two initial
//! conditions), `sweep` (a parameter ladder of simulations plus an
//! aggregate index), and `selftest` (the built-in verification battery).
//!
//! Every run writes its artifacts under `<output.directory>/<config-hash>/`
//! together with a normalized copy of the configuration and a manifest
//! listing each emitted file with its checksum. Exit codes: 0 success,
//! 2 configuration error, 3 blow-up, 4 failed statistical check, 1 other.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use gclm_lab::config::{ConfigFile, Resolved};
use gclm_lab::diagnostics::{
    kb_average, AttractorSampler, Histogram3, KbEstimate, MomentTracker, SpectrumObserver,
};
use gclm_lab::ensemble::configure_threads;
use gclm_lab::ergodicity::{mixing_experiment, uniqueness_probe, MixingFit, RegimeReport};
use gclm_lab::forcing::NoiseStream;
use gclm_lab::integrator::{run, Observer, RunOptions, Stepper, TrajectoryState};
use gclm_lab::io::{
    hex, read_checkpoint_file, write_attractor_csv, write_checkpoint_file, write_flux_csv,
    write_json, write_kb_csv, write_mixing_csv, write_moments_csv, write_spectrum_csv, Checkpoint,
    Manifest,
};
use gclm_lab::selftest::{run_selftest, SelftestOptions};
use gclm_lab::spectral::SobolevIndex;
use gclm_lab::{Error, Result};

/// Environment variable consulted for the worker-thread count when the
/// `--threads` flag is absent (the flag wins).
const THREADS_ENV: &str = "GCLM_THREADS";

#[derive(Parser)]
#[command(
    name = "gclm-lab",
    version,
    about = "Spectral simulator and ergodicity laboratory for a stochastic \
             generalized Constantin-Lax-Majda model on the circle"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory; write observables, moments, spectra, and a checkpoint.
    Simulate(RunArgs),
    /// Drive coupled trajectory pairs with shared noise and fit the mixing rate.
    Couple(RunArgs),
    /// Compare time-averaged observables started from two initial conditions.
    Uniqueness(RunArgs),
    /// Run `simulate` across [experiment].sweep_values and write an aggregate index.
    Sweep(RunArgs),
    /// Run the built-in verification battery (no configuration needed).
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the TOML configuration file.
    #[arg(short, long)]
    config: PathBuf,
    /// Override [experiment].seed (participates in the config hash).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; beats the GCLM_THREADS variable and [experiment].threads.
    #[arg(long)]
    threads: Option<usize>,
    /// Resume from a checkpoint even if its solver/forcing hash disagrees.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct SelftestArgs {
    /// Also run conservation and small-ensemble checks (~minutes).
    #[arg(long)]
    slow: bool,
    /// Also run the long inertial-range spectrum check (much slower).
    #[arg(long)]
    inertial_range: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            report(&failure);
            ExitCode::from(exit_code(&failure.error))
        }
    }
}

/// An error plus the config hash it happened under (when one was already
/// computed), so every failure message can name the run it belongs to.
struct Failure {
    error: Error,
    config_hash: Option<String>,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        Failure { error, config_hash: None }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 2,
        Error::BlowUp { .. } => 3,
        Error::Statistical(_) => 4,
        _ => 1,
    }
}

fn report(failure: &Failure) {
    match &failure.config_hash {
        Some(hash) => eprintln!("gclm-lab [config {hash}]: {}", failure.error),
        None => eprintln!("gclm-lab: {}", failure.error),
    }
    if let Error::BlowUp { history, .. } = &failure.error {
        eprintln!("  recent L2 history before the event:");
        for (t, norm) in history {
            eprintln!("    t = {t:.6}  ||w|| = {norm:.6e}");
        }
    }
}

fn dispatch(command: &Command) -> std::result::Result<(), Failure> {
    match command {
        Command::Simulate(args) => with_config(args, "simulate", |rs, args| {
            cmd_simulate(rs, args.force, "simulate").map(|_| ())
        }),
        Command::Couple(args) => with_config(args, "couple", |rs, _| cmd_couple(rs)),
        Command::Uniqueness(args) => {
            with_config(args, "uniqueness", |rs, _| cmd_uniqueness(rs))
        }
        Command::Sweep(args) => {
            with_config(args, "sweep", |rs, args| cmd_sweep(rs, args.force))
        }
        Command::Selftest(args) => {
            let opts = SelftestOptions {
                slow: args.slow,
                inertial_range: args.inertial_range,
            };
            let mut stdout = std::io::stdout().lock();
            run_selftest(opts, &mut stdout).map_err(Failure::from)?;
            Ok(())
        }
    }
}

/// Loads and resolves the configuration (applying CLI overrides first so
/// the hashes reflect what actually runs), checks that the file's declared
/// mode matches the subcommand, then hands it to `body`; any error past
/// resolution is tagged with the config hash.
fn with_config<F>(args: &RunArgs, mode: &str, body: F) -> std::result::Result<(), Failure>
where
    F: FnOnce(&Resolved, &RunArgs) -> Result<()>,
{
    let rs = load_config(args)?;
    if rs.file.experiment.mode != mode {
        return Err(Failure {
            error: Error::config(format!(
                "configuration declares mode '{}'; run `gclm-lab {}` (or change [experiment].mode)",
                rs.file.experiment.mode, rs.file.experiment.mode
            )),
            config_hash: Some(rs.config_hash.clone()),
        });
    }
    body(&rs, args).map_err(|error| Failure {
        error,
        config_hash: Some(rs.config_hash.clone()),
    })
}

fn load_config(args: &RunArgs) -> Result<Resolved> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| {
        Error::config(format!("cannot read config '{}': {e}", args.config.display()))
    })?;
    let mut file: ConfigFile = toml::from_str(&text)
        .map_err(|e| Error::config(format!("{}: {e}", args.config.display())))?;
    if let Some(seed) = args.seed {
        file.experiment.seed = seed;
    }
    if let Some(threads) = thread_override(args.threads)? {
        file.experiment.threads = Some(threads);
    }
    let base_dir = args
        .config
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| std::path::Path::new("."))
        .to_path_buf();
    Resolved::resolve(file, base_dir)
}

/// Thread-count precedence: `--threads` flag, then the `GCLM_THREADS`
/// variable, then `[experiment].threads`, then one worker per core.
fn thread_override(flag: Option<usize>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(THREADS_ENV) {
        Ok(value) => {
            let n: usize = value.parse().map_err(|_| {
                Error::config(format!("{THREADS_ENV} must be a positive integer, got '{value}'"))
            })?;
            Ok(Some(n))
        }
        Err(_) => Ok(None),
    }
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateOutcome {
    out_dir: PathBuf,
    kb: Vec<(f64, String, KbEstimate)>,
}

fn cmd_simulate(rs: &Resolved, force: bool, command: &str) -> Result<SimulateOutcome> {
    let started = Instant::now();
    let workers = configure_threads(rs.file.experiment.threads)?;
    let out_dir = rs.out_dir();
    std::fs::create_dir_all(&out_dir)?;
    let mut manifest = Manifest::new(
        command,
        &rs.config_hash,
        &hex(&rs.dynamics_hash),
        rs.file.experiment.seed,
    );

    // Initial state: a fresh trajectory, or a checkpoint to resume (the
    // horizon then counts from the checkpoint's time onward).
    let mut state = match &rs.file.experiment.restart_from {
        Some(rel) => {
            let path = rs.base_dir().join(rel);
            let ckpt = read_checkpoint_file(&path)?;
            ckpt.verify(&rs.dynamics_hash, force)?;
            manifest.resumed = true;
            ckpt.state
        }
        None => TrajectoryState::new(
            rs.initial_field()?,
            NoiseStream::new(rs.file.experiment.seed, 0),
            false,
        ),
    };

    let mut stepper = Stepper::new(rs.solver.clone(), rs.forcing.clone())?;
    let output = &rs.file.output;

    let mut samplers: Vec<_> = rs
        .observables
        .iter()
        .cloned()
        .map(gclm_lab::diagnostics::ObservableSampler::new)
        .collect();
    let mut moments = output.moments.then(|| MomentTracker::new(SobolevIndex::L2));
    let mut spectra = output
        .spectra
        .then(|| SpectrumObserver::new(stepper.transform().clone(), rs.solver.a));
    let mut attractor = output.attractor.then(AttractorSampler::default);

    {
        let mut observers: Vec<&mut dyn Observer> = Vec::new();
        observers.extend(samplers.iter_mut().map(|s| s as &mut dyn Observer));
        if let Some(m) = moments.as_mut() {
            observers.push(m);
        }
        if let Some(s) = spectra.as_mut() {
            observers.push(s);
        }
        if let Some(a) = attractor.as_mut() {
            observers.push(a);
        }
        let opts = RunOptions::new(rs.file.experiment.horizon, output.stride)?;
        run(&mut stepper, &mut state, &opts, &mut observers)?;
    }

    let mut kb = Vec::with_capacity(samplers.len());
    for sampler in &samplers {
        let est = kb_average(&sampler.samples, output.burn_in)?;
        kb.push((rs.file.experiment.horizon, sampler.observable.to_string(), est));
    }
    let kb_path = out_dir.join("kb.csv");
    write_kb_csv(&kb_path, &kb)?;
    manifest.add_file(&out_dir, &kb_path)?;

    if let Some(tracker) = &moments {
        let path = out_dir.join("moments.csv");
        write_moments_csv(&path, SobolevIndex::L2.get(), &tracker.rows)?;
        manifest.add_file(&out_dir, &path)?;
    }
    if let Some(observer) = &spectra {
        if let Some(err) = &observer.error {
            return Err(Error::Numerical(format!("spectrum diagnostics failed: {err}")));
        }
        let spectrum_path = out_dir.join("spectrum.csv");
        write_spectrum_csv(&spectrum_path, &observer.rows)?;
        manifest.add_file(&out_dir, &spectrum_path)?;
        let flux_path = out_dir.join("flux.csv");
        write_flux_csv(&flux_path, &observer.rows)?;
        manifest.add_file(&out_dir, &flux_path)?;
    }
    if let Some(sampler) = &attractor {
        let path = out_dir.join("attractor.csv");
        write_attractor_csv(&path, &sampler.modes, &sampler.rows)?;
        manifest.add_file(&out_dir, &path)?;
        if output.histogram_bins > 0 {
            let hist = Histogram3::from_rows(&sampler.rows, output.histogram_bins)?;
            let path = out_dir.join("histogram.json");
            write_json(&path, &hist)?;
            manifest.add_file(&out_dir, &path)?;
        }
    }
    if output.checkpoint {
        let ckpt_dir = out_dir.join("checkpoints");
        std::fs::create_dir_all(&ckpt_dir)?;
        let path = ckpt_dir.join("final.ckpt");
        write_checkpoint_file(&path, &Checkpoint::new(rs.dynamics_hash, state))?;
        manifest.add_file(&out_dir, &path)?;
    }

    write_config_copy(rs, &out_dir, &mut manifest)?;
    manifest.wall_time_secs = started.elapsed().as_secs_f64();
    manifest.write(&out_dir)?;

    println!(
        "{command}: config {} done in {:.2}s on {workers} worker(s); {} file(s) in {}",
        &rs.config_hash[..12],
        manifest.wall_time_secs,
        manifest.files.len(),
        out_dir.display()
    );
    Ok(SimulateOutcome { out_dir, kb })
}

/// Writes the normalized configuration next to the artifacts it produced.
fn write_config_copy(rs: &Resolved, out_dir: &std::path::Path, manifest: &mut Manifest) -> Result<()> {
    let text = toml::to_string_pretty(&rs.file)
        .map_err(|e| Error::Serialization(e.to_string()))?;
    let path = out_dir.join("config.toml");
    std::fs::write(&path, text)?;
    manifest.add_file(out_dir, &path)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// couple / uniqueness
// ---------------------------------------------------------------------------

/// `fit.json` payload: the mixing fit together with the parameter-regime
/// report it should be read against.
#[derive(Serialize)]
struct MixingSummary {
    fit: MixingFit,
    regime: RegimeReport,
}

fn require_initial2(rs: &Resolved) -> Result<gclm_lab::spectral::Field> {
    rs.initial2_field()?.ok_or_else(|| {
        Error::config("this command compares two initial conditions; add an [initial2] section")
    })
}

fn cmd_couple(rs: &Resolved) -> Result<()> {
    let started = Instant::now();
    let workers = configure_threads(rs.file.experiment.threads)?;
    let out_dir = rs.out_dir();
    std::fs::create_dir_all(&out_dir)?;
    let w1 = rs.initial_field()?;
    let w2 = require_initial2(rs)?;
    let opts = rs.coupling_options();
    let (curve, fit, regime) = mixing_experiment(&rs.solver, &rs.forcing, &w1, &w2, &opts)?;

    let mut manifest = Manifest::new(
        "couple",
        &rs.config_hash,
        &hex(&rs.dynamics_hash),
        rs.file.experiment.seed,
    );
    let mixing_path = out_dir.join("mixing.csv");
    write_mixing_csv(&mixing_path, &curve)?;
    manifest.add_file(&out_dir, &mixing_path)?;
    let fit_path = out_dir.join("fit.json");
    write_json(&fit_path, &MixingSummary { fit: fit.clone(), regime: regime.clone() })?;
    manifest.add_file(&out_dir, &fit_path)?;
    write_config_copy(rs, &out_dir, &mut manifest)?;
    manifest.wall_time_secs = started.elapsed().as_secs_f64();
    manifest.write(&out_dir)?;

    println!(
        "couple: {} pair(s) on {workers} worker(s); fitted rate {:.4} \
         (reference {:.4}, mixing regime: {}); artifacts in {}",
        curve.n_alive,
        fit.rate,
        regime.reference_rate,
        regime.mixing_regime,
        out_dir.display()
    );
    Ok(())
}

fn cmd_uniqueness(rs: &Resolved) -> Result<()> {
    let started = Instant::now();
    let workers = configure_threads(rs.file.experiment.threads)?;
    let out_dir = rs.out_dir();
    std::fs::create_dir_all(&out_dir)?;
    let w1 = rs.initial_field()?;
    let w2 = require_initial2(rs)?;
    let report = uniqueness_probe(&rs.solver, &rs.forcing, &w1, &w2, &rs.uniqueness_options())?;

    let mut manifest = Manifest::new(
        "uniqueness",
        &rs.config_hash,
        &hex(&rs.dynamics_hash),
        rs.file.experiment.seed,
    );
    let path = out_dir.join("uniqueness.json");
    write_json(&path, &report)?;
    manifest.add_file(&out_dir, &path)?;
    write_config_copy(rs, &out_dir, &mut manifest)?;
    manifest.wall_time_secs = started.elapsed().as_secs_f64();
    manifest.write(&out_dir)?;

    for cmp in &report.comparisons {
        println!(
            "uniqueness: {:<12} {:.6e} +- {:.1e}  vs  {:.6e} +- {:.1e}  overlap: {}",
            cmp.observable,
            cmp.mean1,
            cmp.ci1.1 - cmp.mean1,
            cmp.mean2,
            cmp.ci2.1 - cmp.mean2,
            cmp.overlap
        );
    }
    println!(
        "uniqueness: {}+{} surviving trajectories on {workers} worker(s); \
         all intervals overlap: {}; artifacts in {}",
        report.n_alive.0,
        report.n_alive.1,
        report.all_overlap(),
        out_dir.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SweepEntry {
    value: f64,
    config_hash: String,
    directory: String,
    kb: Vec<SweepKb>,
}

#[derive(Serialize)]
struct SweepKb {
    observable: String,
    value: f64,
    stderr: f64,
}

#[derive(Serialize)]
struct SweepIndex {
    parameter: String,
    entries: Vec<SweepEntry>,
}

fn cmd_sweep(rs: &Resolved, force: bool) -> Result<()> {
    let started = Instant::now();
    let parameter = rs.file.experiment.sweep_parameter.clone().ok_or_else(|| {
        Error::config("sweep needs [experiment].sweep_parameter and sweep_values")
    })?;
    let values = rs.file.experiment.sweep_values.clone().ok_or_else(|| {
        Error::config("sweep needs [experiment].sweep_values")
    })?;

    let mut entries = Vec::with_capacity(values.len());
    for &value in &values {
        let leaf = rs.with_sweep_value(&parameter, value)?;
        let outcome = cmd_simulate(&leaf, force, "sweep")?;
        entries.push(SweepEntry {
            value,
            config_hash: leaf.config_hash.clone(),
            directory: outcome
                .out_dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            kb: outcome
                .kb
                .iter()
                .map(|(_, name, est)| SweepKb {
                    observable: name.clone(),
                    value: est.value,
                    stderr: est.stderr,
                })
                .collect(),
        });
    }
    // Sorted by parameter value so the index does not depend on the order
    // the values were listed in.
    entries.sort_by(|a, b| a.value.total_cmp(&b.value));

    let out_dir = rs.out_dir();
    std::fs::create_dir_all(&out_dir)?;
    let mut manifest = Manifest::new(
        "sweep",
        &rs.config_hash,
        &hex(&rs.dynamics_hash),
        rs.file.experiment.seed,
    );
    let index_path = out_dir.join("index.json");
    write_json(&index_path, &SweepIndex { parameter: parameter.clone(), entries })?;
    manifest.add_file(&out_dir, &index_path)?;
    write_config_copy(rs, &out_dir, &mut manifest)?;
    manifest.wall_time_secs = started.elapsed().as_secs_f64();
    manifest.write(&out_dir)?;

    println!(
        "sweep: {} value(s) of {parameter} in {:.2}s; index in {}",
        values.len(),
        manifest.wall_time_secs,
        out_dir.display()
    );
    Ok(())
}
