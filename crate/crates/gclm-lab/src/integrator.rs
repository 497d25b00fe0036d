//! Time integration of the spectral model
//!
//! ```text
//! dw_k = [ -nu k^2 w_k + B_a(w)_k ] dt + b_k dbeta_k,
//! ```
//!
//! with three schemes:
//!
//! * `exp-euler-maruyama` (default): exponential integrator. The linear
//!   part is advanced by the exact heat factor, the nonlinearity enters
//!   through `dt * phi1(-nu k^2 dt)`, and the noise uses the *exact*
//!   Ornstein–Uhlenbeck convolution increment, so the linear problem's law
//!   is exact at any step size:
//!   `w_k <- e^{-nu k^2 dt} w_k + dt phi1(-nu k^2 dt) B_k + eta_k`.
//! * `imex-euler`: implicit Euler diffusion, explicit nonlinearity and
//!   plain Euler–Maruyama noise:
//!   `w_k <- (w_k + dt B_k + b_k sqrt(dt) z) / (1 + nu k^2 dt)`.
//! * `deterministic-rk4`: classical RK4 on the full deterministic
//!   right-hand side (requires zero forcing); used for the inviscid
//!   conservation checks.
//!
//! A trajectory optionally tracks the stochastic convolution `v` (the OU
//! part of the mild solution) alongside `w`, driven by the *same* noise
//! draws, so the remainder `w - v` is available to observers.

use std::borrow::Cow;
use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forcing::{heat_decay, ou_increment_std, ForcingSpec, NoiseStream};
use crate::spectral::{Field, GridSpec, SobolevIndex, Transform};

/// `phi1(z) = (e^z - 1)/z`, continuously extended by `phi1(0) = 1`.
#[inline]
pub fn phi1(z: f64) -> f64 {
    if z == 0.0 {
        1.0
    } else {
        z.exp_m1() / z
    }
}

/// Time-stepping scheme selector.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    ExpEulerMaruyama,
    ImexEuler,
    DeterministicRk4,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Scheme::ExpEulerMaruyama => "exp-euler-maruyama",
            Scheme::ImexEuler => "imex-euler",
            Scheme::DeterministicRk4 => "deterministic-rk4",
        };
        f.write_str(s)
    }
}

/// Default blow-up threshold on the L^2 norm.
pub const DEFAULT_BLOWUP_THRESHOLD: f64 = 1e12;
/// Startup guard for `imex-euler`: beyond this parabolic number the implicit
/// diffusion is stable but hopelessly inaccurate, so the run is refused.
const IMEX_PARABOLIC_GUARD: f64 = 1e3;
/// Explicit-diffusion stability bound for RK4 (real-axis stability
/// interval of classical RK4 is about 2.785; a margin is kept).
const RK4_PARABOLIC_GUARD: f64 = 2.5;

/// Static description of a solver run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Viscosity `nu >= 0`.
    pub nu: f64,
    /// Advection-strength parameter `a` (the norm identities of the
    /// diagnostics hold in the `a = -2` regime).
    pub a: f64,
    /// Galerkin cutoff `N`.
    pub cutoff: usize,
    /// Time step.
    pub dt: f64,
    pub scheme: Scheme,
    /// Collocation grid (defaults to the two-thirds grid for `cutoff`).
    pub grid: GridSpec,
    /// When false the nonlinear term is skipped (linear/OU runs).
    pub nonlinearity: bool,
    /// Blow-up threshold on the L^2 norm.
    pub blowup_threshold: f64,
}

impl SolverConfig {
    pub fn new(nu: f64, a: f64, cutoff: usize, dt: f64) -> Result<Self> {
        let cfg = SolverConfig {
            nu,
            a,
            cutoff,
            dt,
            scheme: Scheme::default(),
            grid: GridSpec::two_thirds(cutoff)?,
            nonlinearity: true,
            blowup_threshold: DEFAULT_BLOWUP_THRESHOLD,
        };
        cfg.validate(&ForcingSpec::zero())?;
        Ok(cfg)
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_nonlinearity(mut self, on: bool) -> Self {
        self.nonlinearity = on;
        self
    }

    /// Validates the configuration against a forcing spec, collecting every
    /// violation rather than stopping at the first.
    pub fn validate(&self, forcing: &ForcingSpec) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.nu.is_finite() && self.nu >= 0.0) {
            problems.push(format!("viscosity nu must be finite and >= 0, got {}", self.nu));
        }
        if !self.a.is_finite() {
            problems.push(format!("parameter a must be finite, got {}", self.a));
        }
        if self.cutoff < 1 {
            problems.push("Galerkin cutoff must be at least 1".to_string());
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            problems.push(format!("time step dt must be finite and > 0, got {}", self.dt));
        }
        if !(self.blowup_threshold.is_finite() && self.blowup_threshold > 0.0) {
            problems.push(format!(
                "blow-up threshold must be finite and > 0, got {}",
                self.blowup_threshold
            ));
        }
        if self.grid.cutoff() != self.cutoff {
            problems.push(format!(
                "grid cutoff {} does not match solver cutoff {}",
                self.grid.cutoff(),
                self.cutoff
            ));
        }
        if self.nonlinearity && self.grid.dealias_cutoff() == 0 {
            problems.push(
                "nonlinearity enabled on a grid with dealias cutoff 0 (the term would vanish)"
                    .to_string(),
            );
        }
        let parabolic = self.dt * self.nu * (self.cutoff * self.cutoff) as f64;
        match self.scheme {
            Scheme::ImexEuler => {
                if parabolic > IMEX_PARABOLIC_GUARD {
                    problems.push(format!(
                        "imex-euler parabolic number dt*nu*N^2 = {parabolic:.3e} exceeds the \
                         startup guard {IMEX_PARABOLIC_GUARD:.0e} (stable but inaccurate)"
                    ));
                }
            }
            Scheme::DeterministicRk4 => {
                if !forcing.is_zero() {
                    problems.push(
                        "deterministic-rk4 cannot be combined with nonzero forcing".to_string(),
                    );
                }
                if parabolic > RK4_PARABOLIC_GUARD {
                    problems.push(format!(
                        "rk4 explicit diffusion unstable: dt*nu*N^2 = {parabolic:.3e} > \
                         {RK4_PARABOLIC_GUARD}"
                    ));
                }
            }
            Scheme::ExpEulerMaruyama => {}
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

/// Evolving state of one trajectory.
#[derive(Debug, Clone)]
pub struct TrajectoryState {
    /// Current time.
    pub t: f64,
    /// The solution coefficients.
    pub omega: Field,
    /// Optional stochastic-convolution tracker (OU part), driven by the
    /// same draws as `omega`.
    pub v: Option<Field>,
    /// The trajectory's noise stream.
    pub stream: NoiseStream,
}

impl TrajectoryState {
    pub fn new(omega: Field, stream: NoiseStream, track_v: bool) -> Self {
        let v = track_v.then(|| Field::zeros(omega.cutoff()));
        TrajectoryState {
            t: 0.0,
            omega,
            v,
            stream,
        }
    }

    pub fn from_parts(t: f64, omega: Field, v: Option<Field>, stream: NoiseStream) -> Self {
        TrajectoryState { t, omega, v, stream }
    }
}

/// Observation hook, invoked by [`run`] at its configured stride.
pub trait Observer {
    fn record(&mut self, t: f64, state: &TrajectoryState);
}

/// Per-step Gaussian draws in the documented fixed order
/// (k = 1..=max forced mode; cosine part, then sine part).
#[derive(Debug, Clone)]
pub struct NoiseDraw {
    dt: f64,
    z: Vec<(f64, f64)>,
}

/// Cached per-mode linear factors for one step size.
#[derive(Debug, Clone)]
struct LinearTables {
    dt: f64,
    /// `exp(-nu k^2 dt)`; index k (entry 0 unused).
    decay: Vec<f64>,
    /// `dt * phi1(-nu k^2 dt)`.
    phi_dt: Vec<f64>,
    /// Noise amplitude per mode: exact-OU std for the exponential scheme,
    /// `b_k sqrt(dt)` for imex.
    amp: Vec<f64>,
    /// `1 / (1 + nu k^2 dt)` for imex.
    imex_div: Vec<f64>,
}

/// A configured time stepper bound to one grid/forcing pair.
#[derive(Debug, Clone)]
pub struct Stepper {
    cfg: SolverConfig,
    forcing: ForcingSpec,
    transform: Transform,
    tables: LinearTables,
}

impl Stepper {
    pub fn new(cfg: SolverConfig, forcing: ForcingSpec) -> Result<Self> {
        cfg.validate(&forcing)?;
        let transform = Transform::new(cfg.grid);
        let tables = Self::build_tables(&cfg, &forcing, cfg.dt);
        Ok(Stepper {
            cfg,
            forcing,
            transform,
            tables,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn forcing(&self) -> &ForcingSpec {
        &self.forcing
    }

    pub fn transform(&self) -> &Transform {
        &self.transform
    }

    pub fn transform_mut(&mut self) -> &mut Transform {
        &mut self.transform
    }

    fn build_tables(cfg: &SolverConfig, forcing: &ForcingSpec, dt: f64) -> LinearTables {
        let n = cfg.cutoff;
        let mut decay = vec![1.0; n + 1];
        let mut phi_dt = vec![dt; n + 1];
        let mut amp = vec![0.0; n + 1];
        let mut imex_div = vec![1.0; n + 1];
        for k in 1..=n {
            let z = cfg.nu * (k * k) as f64 * dt;
            decay[k] = heat_decay(cfg.nu, k, dt);
            phi_dt[k] = dt * phi1(-z);
            amp[k] = forcing.amplitude(k)
                * match cfg.scheme {
                    Scheme::ImexEuler => dt.sqrt(),
                    _ => ou_increment_std(cfg.nu, k, dt),
                };
            imex_div[k] = 1.0 / (1.0 + z);
        }
        LinearTables {
            dt,
            decay,
            phi_dt,
            amp,
            imex_div,
        }
    }

    fn tables_for(&self, dt: f64) -> Cow<'_, LinearTables> {
        if dt == self.tables.dt {
            Cow::Borrowed(&self.tables)
        } else {
            Cow::Owned(Self::build_tables(&self.cfg, &self.forcing, dt))
        }
    }

    /// Draws the step's Gaussians from `stream` in the fixed order. The
    /// number of draws depends only on the forcing support, never on the
    /// cutoff, so noise is shared exactly across Galerkin levels.
    pub fn draw_noise(&self, dt: f64, stream: &mut NoiseStream) -> NoiseDraw {
        let nf = self.forcing.max_mode();
        let mut z = Vec::with_capacity(nf);
        for _ in 0..nf {
            let zc = stream.standard_normal();
            let zs = stream.standard_normal();
            z.push((zc, zs));
        }
        NoiseDraw { dt, z }
    }

    /// Advances `state.omega` (and `state.v` when tracked) by `draw.dt`
    /// using the pre-drawn Gaussians; does not touch `state.stream` or
    /// `state.t`. Shared-noise couplings call this with one draw for
    /// several states.
    pub fn step_with_draw(&mut self, state: &mut TrajectoryState, draw: &NoiseDraw) -> Result<()> {
        match self.cfg.scheme {
            Scheme::ExpEulerMaruyama => self.step_exponential(state, draw),
            Scheme::ImexEuler => self.step_imex(state, draw),
            Scheme::DeterministicRk4 => self.step_rk4(state, draw.dt),
        }?;
        self.check_blowup(state)
    }

    /// One step of size `dt` drawing from the state's own stream; updates
    /// `state.t` by one floating-point increment (the [`run`] driver
    /// re-derives stamps from the segment start instead).
    pub fn step_dt(&mut self, state: &mut TrajectoryState, dt: f64) -> Result<()> {
        let draw = self.draw_noise(dt, &mut state.stream);
        self.step_with_draw(state, &draw)?;
        state.t += dt;
        Ok(())
    }

    /// One step at the configured `dt`.
    pub fn step(&mut self, state: &mut TrajectoryState) -> Result<()> {
        self.step_dt(state, self.cfg.dt)
    }

    fn nonlinear(&mut self, omega: &Field) -> Result<Field> {
        if self.cfg.nonlinearity {
            self.transform.nonlinear_term(omega, self.cfg.a)
        } else {
            Ok(Field::zeros(omega.cutoff()))
        }
    }

    fn step_exponential(&mut self, state: &mut TrajectoryState, draw: &NoiseDraw) -> Result<()> {
        let b = self.nonlinear(&state.omega)?;
        let tables = self.tables_for(draw.dt);
        let n = state.omega.cutoff();
        for k in 1..=n {
            let (wc, ws) = state.omega.pair(k);
            let (bc, bs) = b.pair(k);
            let (zc, zs) = draw.gaussians(k);
            let d = tables.decay[k];
            let p = tables.phi_dt[k];
            let amp = tables.amp[k];
            state
                .omega
                .set_pair(k, d * wc + p * bc + amp * zc, d * ws + p * bs + amp * zs);
            if let Some(v) = state.v.as_mut() {
                let (vc, vs) = v.pair(k);
                v.set_pair(k, d * vc + amp * zc, d * vs + amp * zs);
            }
        }
        Ok(())
    }

    fn step_imex(&mut self, state: &mut TrajectoryState, draw: &NoiseDraw) -> Result<()> {
        let b = self.nonlinear(&state.omega)?;
        let tables = self.tables_for(draw.dt);
        let dt = draw.dt;
        let n = state.omega.cutoff();
        for k in 1..=n {
            let (wc, ws) = state.omega.pair(k);
            let (bc, bs) = b.pair(k);
            let (zc, zs) = draw.gaussians(k);
            let div = tables.imex_div[k];
            let amp = tables.amp[k];
            state.omega.set_pair(
                k,
                (wc + dt * bc + amp * zc) * div,
                (ws + dt * bs + amp * zs) * div,
            );
            if let Some(v) = state.v.as_mut() {
                let (vc, vs) = v.pair(k);
                v.set_pair(k, (vc + amp * zc) * div, (vs + amp * zs) * div);
            }
        }
        Ok(())
    }

    /// Full deterministic right-hand side `nu w_xx + B_a(w)`.
    fn deterministic_rhs(&mut self, omega: &Field) -> Result<Field> {
        let mut f = self.nonlinear(omega)?;
        let nu = self.cfg.nu;
        if nu > 0.0 {
            for k in 1..=omega.cutoff() {
                let (wc, ws) = omega.pair(k);
                let (fc, fs) = f.pair(k);
                let lam = -nu * (k * k) as f64;
                f.set_pair(k, fc + lam * wc, fs + lam * ws);
            }
        }
        Ok(f)
    }

    fn step_rk4(&mut self, state: &mut TrajectoryState, dt: f64) -> Result<()> {
        let w = &state.omega;
        let k1 = self.deterministic_rhs(w)?;
        let mut w2 = w.clone();
        w2.add_scaled(dt / 2.0, &k1);
        let k2 = self.deterministic_rhs(&w2)?;
        let mut w3 = w.clone();
        w3.add_scaled(dt / 2.0, &k2);
        let k3 = self.deterministic_rhs(&w3)?;
        let mut w4 = w.clone();
        w4.add_scaled(dt, &k3);
        let k4 = self.deterministic_rhs(&w4)?;
        let omega = &mut state.omega;
        omega.add_scaled(dt / 6.0, &k1);
        omega.add_scaled(dt / 3.0, &k2);
        omega.add_scaled(dt / 3.0, &k3);
        omega.add_scaled(dt / 6.0, &k4);
        Ok(())
    }

    fn check_blowup(&self, state: &TrajectoryState) -> Result<()> {
        let norm = state.omega.l2_norm();
        if !norm.is_finite() || norm > self.cfg.blowup_threshold {
            return Err(Error::BlowUp {
                t: state.t,
                norm,
                history: vec![(state.t, norm)],
            });
        }
        Ok(())
    }
}

impl NoiseDraw {
    #[inline]
    fn gaussians(&self, k: usize) -> (f64, f64) {
        if k >= 1 && k <= self.z.len() {
            self.z[k - 1]
        } else {
            (0.0, 0.0)
        }
    }
}

/// Options for [`run`].
#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Integration horizon (duration from the state's current time).
    pub horizon: f64,
    /// Observers fire every `stride` steps (and always at the segment's
    /// start and end).
    pub stride: usize,
}

impl RunOptions {
    pub fn new(horizon: f64, stride: usize) -> Result<Self> {
        let mut problems = Vec::new();
        if !(horizon.is_finite() && horizon > 0.0) {
            problems.push(format!("horizon must be finite and > 0, got {horizon}"));
        }
        if stride == 0 {
            problems.push("observer stride must be at least 1".to_string());
        }
        if problems.is_empty() {
            Ok(RunOptions { horizon, stride })
        } else {
            Err(Error::Config(problems))
        }
    }
}

/// Size of the norm-history window attached to blow-up errors.
const BLOWUP_HISTORY: usize = 16;

/// Advances `state` over `opts.horizon` with the stepper's `dt`, firing
/// observers at the stride, and lands exactly on the final time. Time stamps
/// are derived from the segment start (`t0 + i * dt`), so a run split into
/// checkpointed segments reproduces a single run bit-exactly.
pub fn run(
    stepper: &mut Stepper,
    state: &mut TrajectoryState,
    opts: &RunOptions,
    observers: &mut [&mut dyn Observer],
) -> Result<()> {
    let dt = stepper.config().dt;
    let t0 = state.t;
    let ratio = opts.horizon / dt;
    let full_steps = ratio.floor() as u64;
    let remainder = opts.horizon - full_steps as f64 * dt;
    let has_partial = remainder > dt * 1e-9;

    let mut history: VecDeque<(f64, f64)> = VecDeque::with_capacity(BLOWUP_HISTORY);
    let push_history = |h: &mut VecDeque<(f64, f64)>, t: f64, norm: f64| {
        if h.len() == BLOWUP_HISTORY {
            h.pop_front();
        }
        h.push_back((t, norm));
    };
    push_history(&mut history, t0, state.omega.l2_norm());

    for obs in observers.iter_mut() {
        obs.record(t0, state);
    }

    let enrich = |e: Error, history: &VecDeque<(f64, f64)>| match e {
        Error::BlowUp { t, norm, .. } => Error::BlowUp {
            t,
            norm,
            history: history.iter().copied().collect(),
        },
        other => other,
    };

    for i in 1..=full_steps {
        let draw = stepper.draw_noise(dt, &mut state.stream);
        state.t = t0 + i as f64 * dt;
        stepper
            .step_with_draw(state, &draw)
            .map_err(|e| enrich(e, &history))?;
        push_history(&mut history, state.t, state.omega.l2_norm());
        if i % opts.stride as u64 == 0 && !(i == full_steps && !has_partial) {
            for obs in observers.iter_mut() {
                obs.record(state.t, state);
            }
        }
    }
    if has_partial {
        let draw = stepper.draw_noise(remainder, &mut state.stream);
        state.t = t0 + opts.horizon;
        stepper
            .step_with_draw(state, &draw)
            .map_err(|e| enrich(e, &history))?;
    } else {
        state.t = t0 + opts.horizon;
    }
    for obs in observers.iter_mut() {
        obs.record(state.t, state);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Refinement studies
// ---------------------------------------------------------------------------

/// Options for [`refine_study`].
#[derive(Debug, Clone)]
pub struct RefineOptions {
    /// Galerkin levels (ascending), e.g. `[32, 64, 128]`.
    pub cutoffs: Vec<usize>,
    /// Step sizes (descending), e.g. `[1e-2, 5e-3, 2.5e-3]`.
    pub dts: Vec<f64>,
    pub horizon: f64,
    /// Snapshot stride (in steps of each level's own dt).
    pub stride: usize,
    /// Regularity index of the comparison norm (sup over snapshot times).
    pub m: SobolevIndex,
}

/// One gap in a refinement ladder: the sup-over-time Sobolev distance
/// between consecutive levels.
#[derive(Debug, Clone, Serialize)]
pub struct RefineGap {
    pub coarse: String,
    pub fine: String,
    pub sup_diff: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RefineReport {
    pub cutoff_gaps: Vec<RefineGap>,
    /// log2 ratios of consecutive cutoff gaps (empirical order).
    pub cutoff_orders: Vec<f64>,
    pub dt_gaps: Vec<RefineGap>,
    pub dt_orders: Vec<f64>,
}

fn snapshots_for(
    cfg: &SolverConfig,
    forcing: &ForcingSpec,
    omega0: &Field,
    horizon: f64,
    stride: usize,
    seed: u64,
) -> Result<Vec<(f64, Field)>> {
    struct Snap {
        frames: Vec<(f64, Field)>,
    }
    impl Observer for Snap {
        fn record(&mut self, t: f64, state: &TrajectoryState) {
            self.frames.push((t, state.omega.clone()));
        }
    }
    let mut stepper = Stepper::new(cfg.clone(), forcing.clone())?;
    let mut state = TrajectoryState::new(
        omega0.project(cfg.cutoff),
        NoiseStream::new(seed, 0),
        false,
    );
    let mut snap = Snap { frames: Vec::new() };
    let opts = RunOptions::new(horizon, stride)?;
    {
        let mut obs: [&mut dyn Observer; 1] = [&mut snap];
        run(&mut stepper, &mut state, &opts, &mut obs)?;
    }
    Ok(snap.frames)
}

fn sup_distance(
    coarse: &[(f64, Field)],
    fine: &[(f64, Field)],
    m: SobolevIndex,
) -> Result<f64> {
    if coarse.len() != fine.len() {
        return Err(Error::Numerical(format!(
            "snapshot grids differ in length ({} vs {}): use matching stride/horizon",
            coarse.len(),
            fine.len()
        )));
    }
    let mut sup: f64 = 0.0;
    for ((tc, fc), (tf, ff)) in coarse.iter().zip(fine) {
        if (tc - tf).abs() > 1e-9 * (1.0 + tc.abs()) {
            return Err(Error::Numerical(format!(
                "snapshot times diverge: {tc} vs {tf}"
            )));
        }
        sup = sup.max(fc.difference(ff).sobolev_norm(m));
    }
    Ok(sup)
}

/// Shared-noise refinement study.
///
/// Galerkin refinement runs every cutoff level with the *same* noise stream
/// (draw counts depend only on the forcing support, so increments agree on
/// shared modes) and reports the sup-over-snapshots `H^m` distance between
/// consecutive levels. Time-step refinement reruns the finest cutoff at
/// each `dt`; those gaps measure the strong time error only for
/// deterministic (unforced) runs, since halving `dt` re-partitions the
/// noise draws.
pub fn refine_study(
    base: &SolverConfig,
    forcing: &ForcingSpec,
    omega0: &Field,
    opts: &RefineOptions,
    seed: u64,
) -> Result<RefineReport> {
    if opts.cutoffs.len() < 2 && opts.dts.len() < 2 {
        return Err(Error::config(
            "refinement study needs at least two cutoffs or two step sizes",
        ));
    }
    let mut cutoff_gaps = Vec::new();
    if opts.cutoffs.len() >= 2 {
        let mut levels = Vec::new();
        for &n in &opts.cutoffs {
            let cfg = SolverConfig {
                cutoff: n,
                grid: GridSpec::two_thirds(n)?,
                ..base.clone()
            };
            cfg.validate(forcing)?;
            levels.push((n, snapshots_for(&cfg, forcing, omega0, opts.horizon, opts.stride, seed)?));
        }
        for pair in levels.windows(2) {
            let (nc, fc) = &pair[0];
            let (nf, ff) = &pair[1];
            cutoff_gaps.push(RefineGap {
                coarse: format!("N={nc}"),
                fine: format!("N={nf}"),
                sup_diff: sup_distance(fc, ff, opts.m)?,
            });
        }
    }

    let mut dt_gaps = Vec::new();
    if opts.dts.len() >= 2 {
        let n = *opts.cutoffs.last().unwrap_or(&base.cutoff);
        let mut levels = Vec::new();
        for &dt in &opts.dts {
            let cfg = SolverConfig {
                cutoff: n,
                grid: GridSpec::two_thirds(n)?,
                dt,
                ..base.clone()
            };
            cfg.validate(forcing)?;
            // Keep the *time* grid of snapshots aligned across dt levels:
            // scale the stride with 1/dt.
            let stride = ((opts.stride as f64 * opts.dts[0] / dt).round() as usize).max(1);
            levels.push((dt, snapshots_for(&cfg, forcing, omega0, opts.horizon, stride, seed)?));
        }
        for pair in levels.windows(2) {
            let (dc, fc) = &pair[0];
            let (df, ff) = &pair[1];
            dt_gaps.push(RefineGap {
                coarse: format!("dt={dc}"),
                fine: format!("dt={df}"),
                sup_diff: sup_distance(fc, ff, opts.m)?,
            });
        }
    }

    let orders = |gaps: &[RefineGap]| {
        gaps.windows(2)
            .map(|w| (w[0].sup_diff / w[1].sup_diff).log2())
            .collect::<Vec<f64>>()
    };
    Ok(RefineReport {
        cutoff_orders: orders(&cutoff_gaps),
        dt_orders: orders(&dt_gaps),
        cutoff_gaps,
        dt_gaps,
    })
}
