//! TOML configuration: schema, defaults, validation, and hashing
//!
//! A run is described by one TOML file with sections `[solver]`,
//! `[forcing]`, `[initial]`, optional `[initial2]`, `[output]`, and
//! `[experiment]`. Unknown keys are rejected everywhere, and validation
//! collects *every* violation before reporting, so a bad file is fixed in
//! one round trip.
//!
//! Two hashes identify a run:
//!
//! * the **config hash** covers everything that affects produced numbers
//!   (it excludes the output directory, thread count, and restart path);
//!   output trees are keyed by it, so identical configurations land in the
//!   same directory and reruns are byte-identical;
//! * the **dynamics hash** covers only `[solver]` + `[forcing]` — the law
//!   of the process. It is embedded in checkpoints, letting a resumed run
//!   change horizons or output settings while refusing silent changes to
//!   the dynamics.

use std::path::{Path, PathBuf};

use rand::rngs::StdRng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{exp_moment_guard, Observable, DEFAULT_BURN_IN};
use crate::ergodicity::{CouplingOptions, UniquenessOptions};
use crate::error::{Error, Result};
use crate::forcing::{ForcingProfile, ForcingSpec};
use crate::integrator::{Scheme, SolverConfig, DEFAULT_BLOWUP_THRESHOLD};
use crate::io::{hex, sha256_bytes};
use crate::spectral::{Field, GridSpec, SobolevIndex};

fn default_true() -> bool {
    true
}
fn default_blowup() -> f64 {
    DEFAULT_BLOWUP_THRESHOLD
}
fn default_directory() -> PathBuf {
    PathBuf::from("out")
}
fn default_stride() -> usize {
    10
}
fn default_burn_in() -> f64 {
    DEFAULT_BURN_IN
}
fn default_observables() -> Vec<String> {
    vec!["h0".to_string(), "h1".to_string()]
}
fn default_mode() -> String {
    "simulate".into()
}

fn default_n_traj() -> usize {
    32
}
fn default_fit_window() -> (f64, f64) {
    (0.05, 0.8)
}

// ---------------------------------------------------------------------------
// Schema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub nu: f64,
    pub a: f64,
    pub cutoff: usize,
    pub dt: f64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default = "default_true")]
    pub nonlinearity: bool,
    #[serde(default = "default_blowup")]
    pub blowup_threshold: f64,
    /// Collocation points; omitted = smallest padded grid for `cutoff`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub physical_points: Option<usize>,
    /// Dealias cutoff; omitted = `floor(2 cutoff / 3)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dealias_cutoff: Option<usize>,
}

/// Initial data constructors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialSection {
    Zero,
    Cosine { mode: usize, amplitude: f64 },
    Sine { mode: usize, amplitude: f64 },
    /// Gaussian coefficients on `1 <= |k| <= band`, rescaled to `norm` in
    /// `H^m`; `seed` is independent of the forcing streams.
    RandomBand {
        band: usize,
        norm: f64,
        #[serde(default)]
        m: u32,
        #[serde(default)]
        seed: u64,
    },
    /// A binary field file (path relative to the configuration file).
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    /// Observer cadence in steps.
    #[serde(default = "default_stride")]
    pub stride: usize,
    /// Fraction of each series discarded before time-averaging.
    #[serde(default = "default_burn_in")]
    pub burn_in: f64,
    #[serde(default = "default_observables")]
    pub observables: Vec<String>,
    /// Write spectrum.csv / flux.csv snapshots.
    #[serde(default)]
    pub spectra: bool,
    /// Write attractor.csv (modes 4, 8, 16 projection).
    #[serde(default)]
    pub attractor: bool,
    /// When nonzero, also write a 3-d histogram of the attractor samples.
    #[serde(default)]
    pub histogram_bins: usize,
    /// Write a final checkpoint.
    #[serde(default = "default_true")]
    pub checkpoint: bool,
    /// Write moments.csv (norm + dissipation-integral ledger).
    #[serde(default = "default_true")]
    pub moments: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: default_directory(),
            stride: default_stride(),
            burn_in: default_burn_in(),
            observables: default_observables(),
            spectra: false,
            attractor: false,
            histogram_bins: 0,
            checkpoint: true,
            moments: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    /// What this file drives: simulate | couple | uniqueness | sweep. Part
    /// of the run identity, so each mode gets its own output directory.
    #[serde(default = "default_mode")]
    pub mode: String,
    pub horizon: f64,
    #[serde(default)]
    pub seed: u64,
    /// Ensemble size for couple/uniqueness experiments.
    #[serde(default = "default_n_traj")]
    pub n_traj: usize,
    /// Worker threads; omitted = one per core (or 1 without the
    /// `parallel` feature).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Resume from this checkpoint instead of `[initial]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restart_from: Option<PathBuf>,
    /// Log-linear fit window for mixing rates, as horizon fractions.
    #[serde(default = "default_fit_window")]
    pub fit_window: (f64, f64),
    /// Sobolev index of the coupling gap norm.
    #[serde(default)]
    pub gap_norm: u32,
    /// Parameter swept by the `sweep` command: nu | beta | a | dt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_parameter: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub solver: SolverSection,
    /// Omitted = single-band forcing on `|k| = 1` with the default beta.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forcing: Option<ForcingProfile>,
    pub initial: InitialSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial2: Option<InitialSection>,
    #[serde(default)]
    pub output: OutputSection,
    pub experiment: ExperimentSection,
}

// ---------------------------------------------------------------------------
// Resolution
// ---------------------------------------------------------------------------

/// Everything derived from a parsed file: validated solver/forcing
/// objects, parsed observables, and the two identity hashes.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub file: ConfigFile,
    pub solver: SolverConfig,
    pub forcing: ForcingSpec,
    pub observables: Vec<Observable>,
    pub gap_norm: SobolevIndex,
    /// Hex sha-256 over the run-identity view of the file.
    pub config_hash: String,
    /// sha-256 over `[solver]` + `[forcing]` only.
    pub dynamics_hash: [u8; 32],
    /// Directory the configuration file lives in (for relative paths).
    base_dir: PathBuf,
}

/// The solver section with the grid options replaced by the resolved
/// grid, so spelling out the defaults does not change the hash.
#[derive(Serialize)]
struct SolverIdentity {
    nu: f64,
    a: f64,
    cutoff: usize,
    dt: f64,
    scheme: Scheme,
    nonlinearity: bool,
    blowup_threshold: f64,
}

impl From<&SolverSection> for SolverIdentity {
    fn from(s: &SolverSection) -> Self {
        SolverIdentity {
            nu: s.nu,
            a: s.a,
            cutoff: s.cutoff,
            dt: s.dt,
            scheme: s.scheme,
            nonlinearity: s.nonlinearity,
            blowup_threshold: s.blowup_threshold,
        }
    }
}

/// The run-identity view: every field that changes produced numbers, and
/// nothing else.
#[derive(Serialize)]
struct IdentityView<'a> {
    solver: SolverIdentity,
    grid: GridSpec,
    forcing: &'a ForcingProfile,
    initial: &'a InitialSection,
    initial2: &'a Option<InitialSection>,
    stride: usize,
    burn_in: f64,
    observables: &'a [String],
    spectra: bool,
    attractor: bool,
    histogram_bins: usize,
    checkpoint: bool,
    moments: bool,
    mode: &'a str,
    horizon: f64,
    seed: u64,
    n_traj: usize,
    fit_window: (f64, f64),
    gap_norm: u32,
    sweep_parameter: &'a Option<String>,
    sweep_values: &'a Option<Vec<f64>>,
}

#[derive(Serialize)]
struct DynamicsView<'a> {
    solver: SolverIdentity,
    grid: GridSpec,
    forcing: &'a ForcingProfile,
}

fn hash_json<T: Serialize>(value: &T) -> Result<[u8; 32]> {
    let text = serde_json::to_string(value).map_err(|e| Error::Serialization(e.to_string()))?;
    Ok(sha256_bytes(text.as_bytes()))
}

impl Resolved {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(vec![format!("cannot read {}: {e}", path.display())])
        })?;
        let base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Self::from_toml(&text, base_dir)
    }

    pub fn from_toml(text: &str, base_dir: PathBuf) -> Result<Self> {
        let file: ConfigFile =
            toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))?;
        Self::resolve(file, base_dir)
    }

    pub fn resolve(file: ConfigFile, base_dir: PathBuf) -> Result<Self> {
        let mut problems: Vec<String> = Vec::new();
        fn note(problems: &mut Vec<String>, r: Error) {
            match r {
                Error::Config(list) => problems.extend(list),
                other => problems.push(other.to_string()),
            }
        }

        // Grid.
        let s = &file.solver;
        let grid = match (s.physical_points, s.dealias_cutoff) {
            (None, None) => GridSpec::two_thirds(s.cutoff),
            (points, dealias) => {
                let base = GridSpec::two_thirds(s.cutoff);
                match base {
                    Ok(b) => GridSpec::custom(
                        s.cutoff,
                        points.unwrap_or_else(|| b.physical_points()),
                        dealias.unwrap_or_else(|| b.dealias_cutoff()),
                    ),
                    Err(e) => Err(e),
                }
            }
        };
        let grid = match grid {
            Ok(g) => g,
            Err(e) => {
                note(&mut problems, e);
                // Placeholder so later checks can proceed; never escapes
                // because `problems` is nonempty.
                GridSpec::two_thirds(1).expect("minimal grid")
            }
        };

        // Forcing.
        let profile = file
            .forcing
            .clone()
            .unwrap_or(ForcingProfile::SingleBand {
                beta: ForcingSpec::DEFAULT_BETA,
            });
        let forcing = match ForcingSpec::from_profile(&profile) {
            Ok(f) => f,
            Err(e) => {
                note(&mut problems, e);
                ForcingSpec::zero()
            }
        };

        // Solver + cross-checks.
        let solver = SolverConfig {
            nu: s.nu,
            a: s.a,
            cutoff: s.cutoff,
            dt: s.dt,
            scheme: s.scheme,
            grid,
            nonlinearity: s.nonlinearity,
            blowup_threshold: s.blowup_threshold,
        };
        if let Err(e) = solver.validate(&forcing) {
            note(&mut problems, e);
        }
        if forcing.max_mode() > s.cutoff {
            problems.push(format!(
                "forcing acts on modes up to {} beyond the cutoff {}",
                forcing.max_mode(),
                s.cutoff
            ));
        }

        // Initial sections.
        for (name, section) in [("initial", Some(&file.initial)), ("initial2", file.initial2.as_ref().map(|x| x as _))] {
            if let Some(sec) = section {
                if let Err(e) = validate_initial(sec, s.cutoff) {
                    match e {
                        Error::Config(list) => {
                            problems.extend(list.into_iter().map(|p| format!("[{name}] {p}")))
                        }
                        other => problems.push(format!("[{name}] {other}")),
                    }
                }
            }
        }

        // Output.
        let o = &file.output;
        if o.stride == 0 {
            problems.push("output stride must be at least 1".into());
        }
        if !(0.0..1.0).contains(&o.burn_in) {
            problems.push(format!("burn-in must lie in [0, 1), got {}", o.burn_in));
        }
        let mut observables = Vec::new();
        for name in &o.observables {
            match Observable::parse(name) {
                Ok(obs) => {
                    if let Some(eps) = obs.exp_rate() {
                        if let Err(e) = exp_moment_guard(eps, s.nu, forcing.spectral_mass(0)) {
                            note(&mut problems, e);
                        }
                    }
                    observables.push(obs);
                }
                Err(e) => note(&mut problems, e),
            }
        }

        // Experiment.
        let e = &file.experiment;
        if !matches!(e.mode.as_str(), "simulate" | "couple" | "uniqueness" | "sweep") {
            problems.push(format!(
                "unknown mode '{}' (expected simulate, couple, uniqueness, or sweep)",
                e.mode
            ));
        }
        if matches!(e.mode.as_str(), "couple" | "uniqueness") && file.initial2.is_none() {
            problems.push(format!(
                "mode '{}' compares two initial conditions; add an [initial2] section",
                e.mode
            ));
        }
        if !(e.horizon.is_finite() && e.horizon > 0.0) {
            problems.push(format!("horizon must be finite and > 0, got {}", e.horizon));
        }
        if e.n_traj == 0 {
            problems.push("n_traj must be at least 1".into());
        }
        if e.threads == Some(0) {
            problems.push("threads must be omitted or at least 1".into());
        }
        let (lo, hi) = e.fit_window;
        if !(0.0..1.0).contains(&lo) || !(lo < hi && hi <= 1.0) {
            problems.push(format!(
                "fit window must satisfy 0 <= lo < hi <= 1, got ({lo}, {hi})"
            ));
        }
        let gap_norm = match SobolevIndex::new(e.gap_norm) {
            Ok(m) => m,
            Err(err) => {
                note(&mut problems, err);
                SobolevIndex::L2
            }
        };
        match (&e.sweep_parameter, &e.sweep_values) {
            (Some(p), Some(vals)) => {
                if e.mode != "sweep" {
                    problems.push(format!(
                        "sweep_parameter/sweep_values require mode = \"sweep\", got '{}'",
                        e.mode
                    ));
                }
                if !matches!(p.as_str(), "nu" | "beta" | "a" | "dt") {
                    problems.push(format!(
                        "unknown sweep parameter '{p}' (expected nu, beta, a, or dt)"
                    ));
                }
                if vals.is_empty() {
                    problems.push("sweep_values must be nonempty".into());
                }
                if !vals.iter().all(|v| v.is_finite()) {
                    problems.push("sweep_values must be finite".into());
                }
            }
            (Some(_), None) => problems.push("sweep_parameter given without sweep_values".into()),
            (None, Some(_)) => problems.push("sweep_values given without sweep_parameter".into()),
            (None, None) => {
                if e.mode == "sweep" {
                    problems.push(
                        "mode 'sweep' needs sweep_parameter and sweep_values".into(),
                    );
                }
            }
        }

        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }

        // Hashes over the normalized views.
        let mut normalized = file;
        normalized.forcing = Some(profile.clone());
        let identity = IdentityView {
            solver: SolverIdentity::from(&normalized.solver),
            grid,
            forcing: &profile,
            initial: &normalized.initial,
            initial2: &normalized.initial2,
            stride: normalized.output.stride,
            burn_in: normalized.output.burn_in,
            observables: &normalized.output.observables,
            spectra: normalized.output.spectra,
            attractor: normalized.output.attractor,
            histogram_bins: normalized.output.histogram_bins,
            checkpoint: normalized.output.checkpoint,
            moments: normalized.output.moments,
            mode: &normalized.experiment.mode,
            horizon: normalized.experiment.horizon,
            seed: normalized.experiment.seed,
            n_traj: normalized.experiment.n_traj,
            fit_window: normalized.experiment.fit_window,
            gap_norm: normalized.experiment.gap_norm,
            sweep_parameter: &normalized.experiment.sweep_parameter,
            sweep_values: &normalized.experiment.sweep_values,
        };
        let config_hash = hex(&hash_json(&identity)?);
        let dynamics_hash = hash_json(&DynamicsView {
            solver: SolverIdentity::from(&normalized.solver),
            grid,
            forcing: &profile,
        })?;

        Ok(Resolved {
            solver,
            forcing,
            observables,
            gap_norm,
            config_hash,
            dynamics_hash,
            base_dir,
            file: normalized,
        })
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    /// Output directory for this run: `<output.directory>/<config-hash>`.
    pub fn out_dir(&self) -> PathBuf {
        let dir = &self.file.output.directory;
        let root = if dir.is_absolute() {
            dir.clone()
        } else {
            self.base_dir.join(dir)
        };
        root.join(&self.config_hash)
    }

    pub fn build_initial(&self, section: &InitialSection) -> Result<Field> {
        let n = self.solver.cutoff;
        match section {
            InitialSection::Zero => Ok(Field::zeros(n)),
            InitialSection::Cosine { mode, amplitude } => Ok(Field::cosine(n, *mode, *amplitude)),
            InitialSection::Sine { mode, amplitude } => Ok(Field::sine(n, *mode, *amplitude)),
            InitialSection::RandomBand {
                band,
                norm,
                m,
                seed,
            } => {
                let mut rng = StdRng::seed_from_u64(*seed);
                Field::random_band(&mut rng, n, *band, SobolevIndex::with_max(*m, 8)?, *norm)
            }
            InitialSection::File { path } => {
                let full = if path.is_absolute() {
                    path.clone()
                } else {
                    self.base_dir.join(path)
                };
                let f = crate::io::read_field_file(&full)?;
                Ok(f.project(n))
            }
        }
    }

    pub fn initial_field(&self) -> Result<Field> {
        self.build_initial(&self.file.initial)
    }

    pub fn initial2_field(&self) -> Result<Option<Field>> {
        self.file
            .initial2
            .as_ref()
            .map(|s| self.build_initial(s))
            .transpose()
    }

    pub fn coupling_options(&self) -> CouplingOptions {
        let e = &self.file.experiment;
        CouplingOptions {
            n_pairs: e.n_traj,
            horizon: e.horizon,
            stride: self.file.output.stride,
            m: self.gap_norm,
            seed: e.seed,
            fit_window: e.fit_window,
        }
    }

    pub fn uniqueness_options(&self) -> UniquenessOptions {
        let e = &self.file.experiment;
        UniquenessOptions {
            n_traj: e.n_traj,
            horizon: e.horizon,
            stride: self.file.output.stride,
            burn_in: self.file.output.burn_in,
            observables: self.observables.clone(),
            seeds: (e.seed, e.seed.wrapping_add(0x9e37_79b9_7f4a_7c15)),
        }
    }

    /// A copy with one swept parameter replaced; used by the sweep driver.
    pub fn with_sweep_value(&self, parameter: &str, value: f64) -> Result<Resolved> {
        let mut file = self.file.clone();
        match parameter {
            "nu" => file.solver.nu = value,
            "a" => file.solver.a = value,
            "dt" => file.solver.dt = value,
            "beta" => {
                file.forcing = Some(match file.forcing.unwrap_or(ForcingProfile::SingleBand {
                    beta: ForcingSpec::DEFAULT_BETA,
                }) {
                    ForcingProfile::Zero => ForcingProfile::SingleBand { beta: value },
                    ForcingProfile::SingleBand { .. } => {
                        ForcingProfile::SingleBand { beta: value }
                    }
                    ForcingProfile::PowerLaw { q, k_max, .. } => ForcingProfile::PowerLaw {
                        beta: value,
                        q,
                        k_max,
                    },
                    ForcingProfile::Explicit { .. } => {
                        return Err(Error::config(
                            "cannot sweep beta over an explicit forcing profile",
                        ))
                    }
                });
            }
            other => {
                return Err(Error::config(format!(
                    "unknown sweep parameter '{other}' (expected nu, beta, a, or dt)"
                )))
            }
        }
        // Sweep leaves are plain runs; their configs re-run standalone.
        file.experiment.mode = "simulate".into();
        file.experiment.sweep_parameter = None;
        file.experiment.sweep_values = None;
        Resolved::resolve(file, self.base_dir.clone())
    }
}

fn validate_initial(section: &InitialSection, cutoff: usize) -> Result<()> {
    let mut problems = Vec::new();
    match section {
        InitialSection::Zero => {}
        InitialSection::Cosine { mode, amplitude } | InitialSection::Sine { mode, amplitude } => {
            if *mode < 1 || *mode > cutoff {
                problems.push(format!(
                    "mode {mode} must satisfy 1 <= mode <= cutoff {cutoff}"
                ));
            }
            if !amplitude.is_finite() {
                problems.push(format!("amplitude must be finite, got {amplitude}"));
            }
        }
        InitialSection::RandomBand { band, norm, m, .. } => {
            if *band < 1 || *band > cutoff {
                problems.push(format!(
                    "band {band} must satisfy 1 <= band <= cutoff {cutoff}"
                ));
            }
            if !(norm.is_finite() && *norm > 0.0) {
                problems.push(format!("norm must be finite and > 0, got {norm}"));
            }
            if SobolevIndex::new(*m).is_err() {
                problems.push(format!("Sobolev index m = {m} out of range"));
            }
        }
        InitialSection::File { path } => {
            if path.as_os_str().is_empty() {
                problems.push("file path must be nonempty".into());
            }
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(problems))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [solver]
        nu = 1.0
        a = -2.0
        cutoff = 32
        dt = 0.01

        [initial]
        kind = "cosine"
        mode = 1
        amplitude = 1.0

        [experiment]
        horizon = 10.0
    "#;

    fn resolve(text: &str) -> Result<Resolved> {
        Resolved::from_toml(text, PathBuf::from("."))
    }

    #[test]
    fn minimal_config_fills_documented_defaults() {
        let r = resolve(MINIMAL).unwrap();
        assert_eq!(r.solver.scheme, Scheme::ExpEulerMaruyama);
        assert!(r.solver.nonlinearity);
        assert_eq!(r.solver.blowup_threshold, DEFAULT_BLOWUP_THRESHOLD);
        assert_eq!(r.solver.grid.dealias_cutoff(), 21);
        assert_eq!(
            r.file.forcing,
            Some(ForcingProfile::SingleBand { beta: 0.1 })
        );
        assert!((r.forcing.spectral_mass(0) - 0.02).abs() < 1e-15);
        assert_eq!(r.file.output.stride, 10);
        assert_eq!(r.file.output.burn_in, 0.2);
        assert_eq!(r.observables.len(), 2);
        assert_eq!(r.file.experiment.n_traj, 32);
        assert_eq!(r.config_hash.len(), 64);
        assert!(r.config_hash.chars().all(|c| c.is_ascii_hexdigit()));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("dt = 0.01", "dt = 0.01\n        timestep = 2.0");
        let err = resolve(&text).unwrap_err();
        assert!(err.to_string().contains("timestep"), "{err}");

        let text = format!("{MINIMAL}\n[outputs]\nstride = 5\n");
        assert!(resolve(&text).is_err());
    }

    #[test]
    fn validation_collects_every_violation() {
        let text = r#"
            [solver]
            nu = -1.0
            a = -2.0
            cutoff = 32
            dt = 0.0

            [initial]
            kind = "random-band"
            band = 64
            norm = 1.0

            [output]
            observables = ["h0", "nonsense"]

            [experiment]
            horizon = -5.0
        "#;
        let err = resolve(text).unwrap_err();
        match err {
            Error::Config(problems) => {
                assert!(problems.len() >= 4, "got {problems:?}");
                let all = problems.join("\n");
                assert!(all.contains("nu"), "{all}");
                assert!(all.contains("dt"), "{all}");
                assert!(all.contains("band"), "{all}");
                assert!(all.contains("nonsense"), "{all}");
                assert!(all.contains("horizon"), "{all}");
            }
            other => panic!("expected config error, got {other}"),
        }
    }

    #[test]
    fn config_hash_ignores_runtime_knobs_only() {
        let base = resolve(MINIMAL).unwrap();

        // Output directory and threads do not change the identity.
        let text = format!("{MINIMAL}\n[output]\ndirectory = \"elsewhere\"\n");
        let moved = resolve(&text).unwrap();
        assert_eq!(moved.config_hash, base.config_hash);

        let text = MINIMAL.replace("horizon = 10.0", "horizon = 10.0\nthreads = 4");
        let threaded = resolve(&text).unwrap();
        assert_eq!(threaded.config_hash, base.config_hash);

        // The horizon changes the identity but not the dynamics.
        let text = MINIMAL.replace("horizon = 10.0", "horizon = 20.0");
        let longer = resolve(&text).unwrap();
        assert_ne!(longer.config_hash, base.config_hash);
        assert_eq!(longer.dynamics_hash, base.dynamics_hash);

        // Viscosity changes both.
        let text = MINIMAL.replace("nu = 1.0", "nu = 2.0");
        let thicker = resolve(&text).unwrap();
        assert_ne!(thicker.config_hash, base.config_hash);
        assert_ne!(thicker.dynamics_hash, base.dynamics_hash);
    }

    #[test]
    fn explicit_default_grid_hashes_like_the_implicit_one() {
        let base = resolve(MINIMAL).unwrap();
        let text = MINIMAL.replace(
            "dt = 0.01",
            &format!(
                "dt = 0.01\n        physical_points = {}\n        dealias_cutoff = {}",
                base.solver.grid.physical_points(),
                base.solver.grid.dealias_cutoff()
            ),
        );
        let explicit = resolve(&text).unwrap();
        assert_eq!(explicit.config_hash, base.config_hash);
        assert_eq!(explicit.dynamics_hash, base.dynamics_hash);
    }

    #[test]
    fn initial_fields_are_deterministic() {
        let text = MINIMAL.replace(
            "kind = \"cosine\"\n        mode = 1\n        amplitude = 1.0",
            "kind = \"random-band\"\n        band = 10\n        norm = 1.5\n        seed = 9",
        );
        let r1 = resolve(&text).unwrap();
        let r2 = resolve(&text).unwrap();
        let f1 = r1.initial_field().unwrap();
        let f2 = r2.initial_field().unwrap();
        assert_eq!(f1.coeffs(), f2.coeffs());
        assert!((f1.sobolev_norm(SobolevIndex::L2) - 1.5).abs() < 1e-12);
        assert!(r1.initial2_field().unwrap().is_none());
    }

    #[test]
    fn initial_file_paths_resolve_relative_to_the_config() {
        let dir = tempfile::tempdir().unwrap();
        let field = Field::cosine(8, 2, 0.5);
        crate::io::write_field_file(&dir.path().join("data.bin"), &field).unwrap();
        let text = MINIMAL.replace(
            "kind = \"cosine\"\n        mode = 1\n        amplitude = 1.0",
            "kind = \"file\"\n        path = \"data.bin\"",
        );
        let r = Resolved::from_toml(&text, dir.path().to_path_buf()).unwrap();
        let f = r.initial_field().unwrap();
        assert_eq!(f.cutoff(), 32); // projected up to the solver cutoff
        assert_eq!(f.coeff(2), field.coeff(2));

        let missing = text.replace("data.bin", "nope.bin");
        let r = Resolved::from_toml(&missing, dir.path().to_path_buf()).unwrap();
        assert!(r.initial_field().is_err());
    }

    #[test]
    fn exponential_observables_respect_the_moment_guard() {
        // nu = 1, B0 = 0.02: eps = 20 gives 2 eps B0 = 0.8 <= 1 (ok);
        // eps = 30 gives 1.2 > 1 (rejected).
        let ok = MINIMAL.replace(
            "[experiment]",
            "[output]\nobservables = [\"exp:20\"]\n\n[experiment]",
        );
        assert!(resolve(&ok).is_ok());
        let bad = ok.replace("exp:20", "exp:30");
        let err = resolve(&bad).unwrap_err();
        assert!(err.to_string().contains("guard"));
    }

    #[test]
    fn sweep_section_coherence() {
        let both = MINIMAL.replace(
            "horizon = 10.0",
            "mode = \"sweep\"\nhorizon = 10.0\nsweep_parameter = \"nu\"\nsweep_values = [0.5, 1.0]",
        );
        let r = resolve(&both).unwrap();
        let leaf = r.with_sweep_value("nu", 0.5).unwrap();
        assert_eq!(leaf.solver.nu, 0.5);
        assert_eq!(leaf.file.experiment.mode, "simulate");
        assert!(leaf.file.experiment.sweep_parameter.is_none());
        assert_ne!(leaf.config_hash, r.config_hash);

        let missing = MINIMAL.replace(
            "horizon = 10.0",
            "mode = \"sweep\"\nhorizon = 10.0\nsweep_parameter = \"nu\"",
        );
        assert!(resolve(&missing).is_err());
        let unknown = MINIMAL.replace(
            "horizon = 10.0",
            "mode = \"sweep\"\nhorizon = 10.0\nsweep_parameter = \"gamma\"\nsweep_values = [1.0]",
        );
        assert!(resolve(&unknown).is_err());
        // Sweep keys under a non-sweep mode are a coherence error too.
        let stray = MINIMAL.replace(
            "horizon = 10.0",
            "horizon = 10.0\nsweep_parameter = \"nu\"\nsweep_values = [0.5]",
        );
        assert!(resolve(&stray).is_err());
    }

    #[test]
    fn paired_modes_require_initial2() {
        let couple = MINIMAL.replace("horizon = 10.0", "mode = \"couple\"\nhorizon = 10.0");
        let err = resolve(&couple).unwrap_err();
        assert!(err.to_string().contains("initial2"));
        let with_pair = couple.replace(
            "[experiment]",
            "[initial2]\nkind = \"sine\"\nmode = 2\namplitude = 0.5\n\n[experiment]",
        );
        let r = resolve(&with_pair).unwrap();
        assert_eq!(r.file.experiment.mode, "couple");
        assert!(r.initial2_field().unwrap().is_some());
    }

    #[test]
    fn restart_key_round_trips() {
        let text = MINIMAL.replace(
            "horizon = 10.0",
            "horizon = 10.0\nrestart_from = \"prev/checkpoint.bin\"",
        );
        let r = resolve(&text).unwrap();
        assert_eq!(
            r.file.experiment.restart_from.as_deref(),
            Some(Path::new("prev/checkpoint.bin"))
        );
        // The restart path is a runtime knob: identity unchanged.
        let base = resolve(MINIMAL).unwrap();
        assert_eq!(r.config_hash, base.config_hash);
    }

    #[test]
    fn normalized_file_reserializes_to_the_same_identity() {
        let r = resolve(MINIMAL).unwrap();
        let text = toml::to_string_pretty(&r.file).unwrap();
        let again = resolve(&text).unwrap();
        assert_eq!(again.config_hash, r.config_hash);
        assert_eq!(again.dynamics_hash, r.dynamics_hash);
    }

    #[test]
    fn rk4_with_forcing_is_rejected_at_resolve_time() {
        let text = MINIMAL.replace("dt = 0.01", "dt = 0.0001\n        scheme = \"deterministic-rk4\"");
        let err = resolve(&text).unwrap_err();
        assert!(err.to_string().contains("forcing"), "{err}");
        let fixed = format!("{text}\n[forcing]\nprofile = \"zero\"\n");
        assert!(resolve(&fixed).is_ok());
    }
}
