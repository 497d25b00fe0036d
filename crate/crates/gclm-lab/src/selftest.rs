//! Built-in verification battery (`gclm-lab selftest`)
//!
//! Re-runs the library's key identities end to end in a release binary:
//! exact checks (transform round trips, closed-form nonlinearities, bit
//! reproducibility) and statistical checks (noise moments, stationarity,
//! moment bounds) with generous fixed-seed tolerances. One line per check;
//! the `slow` tier adds conservation runs and ensemble experiments.
//!
//! A failing statistical check surfaces as a statistical error (exit code
//! 4 at the CLI) so flaky hardware or a miscompiled RNG is distinguishable
//! from configuration mistakes.

use std::io::Write;

use rand::rngs::StdRng;
use rand::SeedableRng;

use crate::diagnostics::{enstrophy_flux, kb_average, transfer_spectrum, SpectrumObserver};
use crate::ergodicity::{
    exp_moment_ensemble, mixing_experiment, regime_report, CouplingOptions, CSTAR_PROXY,
};
use crate::error::{Error, Result};
use crate::forcing::{ou_increment_std, ForcingSpec, NoiseStream};
use crate::integrator::{
    phi1, refine_study, run, RefineOptions, RunOptions, Scheme, SolverConfig, Stepper,
    TrajectoryState,
};
use crate::io::{read_checkpoint, write_checkpoint, Checkpoint};
use crate::spectral::{Field, GridSpec, SobolevIndex, Transform};

enum Kind {
    Exact,
    Statistical,
}

struct Check {
    name: &'static str,
    kind: Kind,
    run: fn() -> Result<String>,
}

/// Outcome of one check, as printed.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn exact_err(name: &str, detail: String) -> Error {
    Error::Numerical(format!("selftest '{name}' failed: {detail}"))
}

fn stat_err(name: &str, detail: String) -> Error {
    Error::Statistical(format!("selftest '{name}' failed: {detail}"))
}

fn ensure(ok: bool, detail: String) -> Result<String> {
    if ok {
        Ok(detail)
    } else {
        Err(Error::Numerical(detail))
    }
}

fn check_transform_round_trip() -> Result<String> {
    let grid = GridSpec::two_thirds(32)?;
    let mut tf = Transform::new(grid);
    let mut rng = StdRng::seed_from_u64(1);
    let f = Field::random_band(&mut rng, 32, 32, SobolevIndex::L2, 2.0)?;
    let vals = tf.to_physical(&f)?;
    let back = tf.to_coefficients(&vals)?;
    let err = f
        .coeffs()
        .iter()
        .zip(back.coeffs())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    ensure(err <= 1e-12, format!("max round-trip error {err:.3e}"))
}

fn check_hilbert_isometry() -> Result<String> {
    let mut rng = StdRng::seed_from_u64(2);
    let f = Field::random_band(&mut rng, 24, 24, SobolevIndex::L2, 3.0)?;
    let h = f.hilbert();
    let rel = (h.l2_norm() - f.l2_norm()).abs() / f.l2_norm();
    let hh = h.hilbert();
    let mut flip = f.clone();
    flip.scale(-1.0);
    let inv = hh.difference(&flip).l2_norm();
    ensure(
        rel <= 1e-14 && inv <= 1e-14,
        format!("isometry defect {rel:.3e}, H^2+I defect {inv:.3e}"),
    )
}

fn check_nonlinear_closed_form() -> Result<String> {
    let grid = GridSpec::two_thirds(8)?;
    let mut tf = Transform::new(grid);
    let w = Field::cosine(8, 1, 1.0);
    let b = tf.nonlinear_term(&w, -2.0)?;
    let err = b.difference(&Field::sine(8, 2, 1.5)).l2_norm();
    ensure(err <= 1e-12, format!("closed-form defect {err:.3e}"))
}

fn check_energy_identity() -> Result<String> {
    let grid = GridSpec::two_thirds(32)?;
    let mut tf = Transform::new(grid);
    let mut rng = StdRng::seed_from_u64(3);
    let w = Field::random_band(&mut rng, 32, grid.dealias_cutoff(), SobolevIndex::L2, 2.0)?
        .project(32);
    let b = tf.nonlinear_term(&w, -2.0)?;
    let pairing = w.l2_inner(&b).abs();
    let scale = w.l2_norm().powi(3);
    ensure(
        pairing <= 1e-12 * scale,
        format!("|<B(w), w>| = {pairing:.3e} (scale {scale:.3e})"),
    )
}

fn check_one_step_oracle() -> Result<String> {
    let cfg = SolverConfig::new(1.0, -2.0, 8, 0.01)?;
    let mut stepper = Stepper::new(cfg, ForcingSpec::zero())?;
    let mut state = TrajectoryState::new(Field::cosine(8, 1, 1.0), NoiseStream::new(0, 0), false);
    stepper.step(&mut state)?;
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let c1 = ((-0.01f64).exp()) * sqrt_pi;
    let s2 = 0.01 * phi1(-0.04) * 1.5 * sqrt_pi;
    let e1 = (state.omega.coeff(1) - c1).abs();
    let e2 = (state.omega.coeff(-2) - s2).abs();
    ensure(
        e1 <= 1e-13 && e2 <= 1e-13,
        format!("coefficient errors {e1:.3e}, {e2:.3e}"),
    )
}

fn check_ou_stationarity() -> Result<String> {
    // One exact OU step from the stationary variance must preserve it.
    let nu = 0.8f64;
    let dt = 0.3;
    let b1 = 0.5f64;
    let var_stat = b1 * b1 / (2.0 * nu);
    let n = 20_000usize;
    let mut stream = NoiseStream::new(7, 0);
    let decay = (-nu * dt).exp();
    let amp = b1 * ou_increment_std(nu, 1, dt);
    let mut sum_sq = 0.0;
    for _ in 0..n {
        let x0 = var_stat.sqrt() * stream.standard_normal();
        let x1 = decay * x0 + amp * stream.standard_normal();
        sum_sq += x1 * x1;
    }
    let est = sum_sq / n as f64;
    let se = var_stat * (2.0 / n as f64).sqrt();
    let dev = (est - var_stat).abs();
    if dev <= 5.0 * se {
        Ok(format!("variance {est:.5} vs {var_stat:.5} ({:.1} se)", dev / se))
    } else {
        Err(Error::Statistical(format!(
            "stationary variance drifted: {est:.5} vs {var_stat:.5} ({:.1} se)",
            dev / se
        )))
    }
}

fn check_gaussian_moments() -> Result<String> {
    let n = 50_000usize;
    let mut stream = NoiseStream::new(11, 3);
    let (mut s1, mut s2, mut s4) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..n {
        let z = stream.standard_normal();
        s1 += z;
        s2 += z * z;
        s4 += z * z * z * z;
    }
    let nf = n as f64;
    let mean = s1 / nf;
    let var = s2 / nf;
    let kurt = s4 / nf / (var * var) - 3.0;
    let ok = mean.abs() <= 5.0 / nf.sqrt()
        && (var - 1.0).abs() <= 5.0 * (2.0 / nf).sqrt()
        && kurt.abs() <= 5.0 * (24.0 / nf).sqrt();
    let detail = format!("mean {mean:.2e}, var-1 {:.2e}, kurtosis {kurt:.2e}", var - 1.0);
    if ok {
        Ok(detail)
    } else {
        Err(Error::Statistical(detail))
    }
}

fn check_restart_bit_exact() -> Result<String> {
    let dt = 1.0 / 64.0;
    let cfg = SolverConfig::new(1.0, -2.0, 8, dt)?;
    let forcing = ForcingSpec::single_band(0.2)?;
    let w0 = Field::cosine(8, 1, 0.5);
    let mut st_split = TrajectoryState::new(w0.clone(), NoiseStream::new(5, 0), false);
    let mut stepper = Stepper::new(cfg.clone(), forcing.clone())?;
    let opts = RunOptions::new(0.5, 8)?;
    run(&mut stepper, &mut st_split, &opts, &mut [])?;
    run(&mut stepper, &mut st_split, &opts, &mut [])?;
    let mut st_whole = TrajectoryState::new(w0, NoiseStream::new(5, 0), false);
    let mut stepper2 = Stepper::new(cfg, forcing)?;
    run(&mut stepper2, &mut st_whole, &RunOptions::new(1.0, 8)?, &mut [])?;
    ensure(
        st_split.omega.coeffs() == st_whole.omega.coeffs() && st_split.t == st_whole.t,
        "split and whole runs agree bit-for-bit".to_string(),
    )
}

fn check_kb_constant() -> Result<String> {
    let samples: Vec<(f64, f64)> = (0..64).map(|i| (i as f64, 4.25)).collect();
    let est = kb_average(&samples, 0.25)?;
    ensure(
        est.value == 4.25 && est.stderr == 0.0,
        format!("value {}, stderr {}", est.value, est.stderr),
    )
}

fn check_flux_closure() -> Result<String> {
    let grid = GridSpec::two_thirds(32)?;
    let mut tf = Transform::new(grid);
    let mut rng = StdRng::seed_from_u64(13);
    let w = Field::random_band(&mut rng, 32, grid.dealias_cutoff(), SobolevIndex::L2, 1.5)?
        .project(32);
    let b = tf.nonlinear_term(&w, -2.0)?;
    let flux = enstrophy_flux(&transfer_spectrum(&w, &b));
    let tail = flux.last().copied().unwrap_or(f64::NAN).abs();
    ensure(tail <= 1e-12, format!("|Pi(N)| = {tail:.3e}"))
}

fn check_checkpoint_round_trip() -> Result<String> {
    let mut stream = NoiseStream::new(21, 4);
    for _ in 0..57 {
        stream.standard_normal();
    }
    let mut w = Field::zeros(6);
    w.set_coeff(1, 1.0 / 3.0);
    w.set_coeff(-5, -2.5e-300);
    let state = TrajectoryState::from_parts(1.75, w, None, stream);
    let ckpt = Checkpoint::new([7u8; 32], state);
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, &ckpt)?;
    let back = read_checkpoint(&mut std::io::Cursor::new(&buf))?;
    ensure(
        back.state.omega.coeffs() == ckpt.state.omega.coeffs()
            && back.state.t == ckpt.state.t
            && back.state.stream.counter() == 57,
        format!("{} bytes round-tripped", buf.len()),
    )
}

fn check_noise_stream_restore() -> Result<String> {
    let mut a = NoiseStream::new(31, 2);
    for _ in 0..1000 {
        a.standard_normal();
    }
    let mut b = NoiseStream::restore(31, 2, a.counter());
    for i in 0..8 {
        let (x, y) = (a.standard_normal(), b.standard_normal());
        if x != y {
            return Err(Error::Numerical(format!(
                "restored stream diverged at draw {i}: {x} vs {y}"
            )));
        }
    }
    Ok("restored stream continues the draw sequence exactly".to_string())
}

fn check_regime_scale_covariance() -> Result<String> {
    let base = regime_report(1.1, 0.04, CSTAR_PROXY)?;
    let lam = 3.0;
    let scaled = regime_report(lam * 1.1, lam.powi(3) * 0.04, CSTAR_PROXY)?;
    let rate_defect =
        (scaled.reference_rate - lam * base.reference_rate).abs() / base.reference_rate.abs();
    ensure(
        scaled.mixing_regime == base.mixing_regime
            && scaled.uniqueness_regime == base.uniqueness_regime
            && rate_defect <= 1e-12,
        format!("rate covariance defect {rate_defect:.3e}"),
    )
}

// --- slow tier -------------------------------------------------------------

fn check_inviscid_l2_conservation() -> Result<String> {
    let cfg = SolverConfig::new(0.0, -2.0, 64, 1e-3)?.with_scheme(Scheme::DeterministicRk4);
    let band = cfg.grid.dealias_cutoff() / 2;
    let mut rng = StdRng::seed_from_u64(17);
    let w0 = Field::random_band(&mut rng, 64, band, SobolevIndex::L2, 1.0)?.project(64);
    let mut stepper = Stepper::new(cfg, ForcingSpec::zero())?;
    let mut state = TrajectoryState::new(w0, NoiseStream::new(0, 0), false);
    let n0 = state.omega.l2_norm();
    for _ in 0..500 {
        stepper.step(&mut state)?;
    }
    let drift = (state.omega.l2_norm() - n0).abs() / n0;
    ensure(drift <= 1e-9, format!("relative L2 drift {drift:.3e} over T=0.5"))
}

fn check_inviscid_l3_conservation() -> Result<String> {
    let cfg = SolverConfig::new(0.0, -3.0, 64, 1e-3)?.with_scheme(Scheme::DeterministicRk4);
    let mut stepper = Stepper::new(cfg, ForcingSpec::zero())?;
    let mut state = TrajectoryState::new(Field::cosine(64, 1, 1.0), NoiseStream::new(0, 0), false);
    let n0 = stepper.transform_mut().lp_norm(&state.omega, 3.0)?;
    for _ in 0..100 {
        stepper.step(&mut state)?;
    }
    let n1 = stepper.transform_mut().lp_norm(&state.omega, 3.0)?;
    let drift = (n1 - n0).abs() / n0;
    ensure(drift <= 1e-5, format!("relative L3 drift {drift:.3e} over T=0.1"))
}

fn check_coupling_contraction() -> Result<String> {
    let cfg = SolverConfig::new(2.0, -2.0, 16, 0.01)?;
    let forcing = ForcingSpec::single_band(ForcingSpec::DEFAULT_BETA)?;
    let opts = CouplingOptions {
        n_pairs: 12,
        horizon: 3.0,
        stride: 20,
        seed: 23,
        fit_window: (0.0, 0.7),
        ..CouplingOptions::default()
    };
    let (curve, fit, regime) = mixing_experiment(
        &cfg,
        &forcing,
        &Field::cosine(16, 1, 1.0),
        &Field::sine(16, 3, 0.8),
        &opts,
    )?;
    let detail = format!(
        "rate {:.3} (reference {:.3}), final/initial gap {:.2e}",
        fit.rate,
        regime.reference_rate,
        curve.mean_sq_diff.last().unwrap() / curve.mean_sq_diff[0]
    );
    if regime.uniqueness_regime && fit.rate < regime.reference_rate {
        Ok(detail)
    } else {
        Err(Error::Statistical(detail))
    }
}

fn check_exp_moment_bound() -> Result<String> {
    let cfg = SolverConfig::new(1.0, -2.0, 8, 0.01)?;
    let forcing = ForcingSpec::single_band(ForcingSpec::DEFAULT_BETA)?;
    let report = exp_moment_ensemble(
        &cfg,
        &forcing,
        &Field::cosine(8, 1, 0.2),
        10.0,
        50,
        2.0,
        20,
        29,
    )?;
    let detail = format!(
        "max empirical/bound ratio {:.4}",
        report
            .empirical
            .iter()
            .zip(&report.bound)
            .map(|(e, b)| e / b)
            .fold(0.0f64, f64::max)
    );
    if report.within_bound(2.0) {
        Ok(detail)
    } else {
        Err(Error::Statistical(detail))
    }
}

/// Inertial-range proxy: a long, weakly damped run whose time-averaged
/// energy spectrum should show a power law near `k^-3` over `4 <= k <= 40`
/// with a positive mean enstrophy flux through that band. Runs for a long
/// wall-clock time, hence its own opt-in tier.
fn check_inertial_range() -> Result<String> {
    let band = 4usize..=40;
    // dt is set by the advective CFL at the dealiased top mode (~682):
    // dt * 2 ||u||_inf * k_max must stay well below 1 as the cascade fills.
    let cfg = SolverConfig::new(1e-3, -2.0, 1024, 1e-4)?;
    let forcing = ForcingSpec::single_band(ForcingSpec::DEFAULT_BETA)?;
    let mut stepper = Stepper::new(cfg, forcing)?;
    let mut state =
        TrajectoryState::new(Field::cosine(1024, 1, 1.0), NoiseStream::new(97, 0), false);
    let mut spectra = SpectrumObserver::new(stepper.transform().clone(), -2.0);
    let horizon = 200.0;
    let mut observers: [&mut dyn crate::integrator::Observer; 1] = [&mut spectra];
    run(&mut stepper, &mut state, &RunOptions::new(horizon, 5000)?, &mut observers)?;
    if let Some(err) = spectra.error {
        return Err(Error::Numerical(err));
    }
    let kept: Vec<_> = spectra
        .rows
        .iter()
        .filter(|row| row.t >= 0.5 * horizon)
        .collect();
    if kept.len() < 4 {
        return Err(Error::Statistical("too few spectrum snapshots".into()));
    }
    let nk = kept[0].energy.len();
    let mut mean_energy = vec![0.0f64; nk];
    let mut mean_flux = vec![0.0f64; nk];
    for row in &kept {
        for k in 0..nk {
            mean_energy[k] += row.energy[k] / kept.len() as f64;
            mean_flux[k] += row.flux[k] / kept.len() as f64;
        }
    }
    let xs: Vec<f64> = band.clone().map(|k| (k as f64).ln()).collect();
    let ys: Vec<f64> = band
        .clone()
        .map(|k| mean_energy[k].max(f64::MIN_POSITIVE).ln())
        .collect();
    let (slope, _) = crate::util::linear_fit(&xs, &ys)
        .ok_or_else(|| Error::Statistical("degenerate spectrum fit".into()))?;
    let min_flux = band
        .clone()
        .map(|k| mean_flux[k])
        .fold(f64::INFINITY, f64::min);
    let detail = format!("spectrum slope {slope:.2}, min flux in band {min_flux:.3e}");
    if (-3.8..=-2.3).contains(&slope) && min_flux > 0.0 {
        Ok(detail)
    } else {
        Err(Error::Statistical(detail))
    }
}

fn check_dt_refinement_order() -> Result<String> {
    let base = SolverConfig::new(0.4, -2.0, 32, 0.02)?;
    let opts = RefineOptions {
        cutoffs: vec![32],
        dts: vec![0.02, 0.01, 0.005],
        horizon: 1.0,
        stride: 5,
        m: SobolevIndex::L2,
    };
    let report = refine_study(
        &base,
        &ForcingSpec::zero(),
        &Field::cosine(32, 1, 1.0),
        &opts,
        0,
    )?;
    let ratio = report.dt_gaps[0].sup_diff / report.dt_gaps[1].sup_diff;
    ensure(
        (1.6..=2.4).contains(&ratio),
        format!("first-order dt ratio {ratio:.3}"),
    )
}

const FAST_CHECKS: &[Check] = &[
    Check { name: "transform-round-trip", kind: Kind::Exact, run: check_transform_round_trip },
    Check { name: "hilbert-isometry", kind: Kind::Exact, run: check_hilbert_isometry },
    Check { name: "nonlinear-closed-form", kind: Kind::Exact, run: check_nonlinear_closed_form },
    Check { name: "energy-identity", kind: Kind::Exact, run: check_energy_identity },
    Check { name: "one-step-oracle", kind: Kind::Exact, run: check_one_step_oracle },
    Check { name: "ou-stationarity", kind: Kind::Statistical, run: check_ou_stationarity },
    Check { name: "gaussian-moments", kind: Kind::Statistical, run: check_gaussian_moments },
    Check { name: "restart-bit-exact", kind: Kind::Exact, run: check_restart_bit_exact },
    Check { name: "kb-constant", kind: Kind::Exact, run: check_kb_constant },
    Check { name: "flux-closure", kind: Kind::Exact, run: check_flux_closure },
    Check { name: "checkpoint-round-trip", kind: Kind::Exact, run: check_checkpoint_round_trip },
    Check { name: "noise-stream-restore", kind: Kind::Exact, run: check_noise_stream_restore },
    Check { name: "regime-scale-covariance", kind: Kind::Exact, run: check_regime_scale_covariance },
];

const SLOW_CHECKS: &[Check] = &[
    Check { name: "inviscid-l2-conservation", kind: Kind::Exact, run: check_inviscid_l2_conservation },
    Check { name: "inviscid-l3-conservation", kind: Kind::Exact, run: check_inviscid_l3_conservation },
    Check { name: "coupling-contraction", kind: Kind::Statistical, run: check_coupling_contraction },
    Check { name: "exp-moment-bound", kind: Kind::Statistical, run: check_exp_moment_bound },
    Check { name: "dt-refinement-order", kind: Kind::Exact, run: check_dt_refinement_order },
];

const INERTIAL_CHECKS: &[Check] = &[
    Check { name: "inertial-range-spectrum", kind: Kind::Statistical, run: check_inertial_range },
];

/// Which tiers of the battery to run. The fast tier always runs.
#[derive(Debug, Clone, Copy, Default)]
pub struct SelftestOptions {
    /// Conservation runs and small ensemble experiments (~minutes).
    pub slow: bool,
    /// The long inertial-range spectrum run (long wall-clock time).
    pub inertial_range: bool,
}

/// Runs the battery, printing one line per check; returns all results, or
/// an error summarizing the failures (statistical if every failure was in
/// a statistical check, so the caller can exit 4).
pub fn run_selftest<W: Write>(opts: SelftestOptions, out: &mut W) -> Result<Vec<CheckResult>> {
    let mut checks: Vec<&Check> = FAST_CHECKS.iter().collect();
    if opts.slow {
        checks.extend(SLOW_CHECKS.iter());
    }
    if opts.inertial_range {
        checks.extend(INERTIAL_CHECKS.iter());
    }
    let mut results = Vec::with_capacity(checks.len());
    let mut exact_failures = Vec::new();
    let mut stat_failures = Vec::new();
    for check in checks {
        let outcome = (check.run)();
        let (passed, detail) = match outcome {
            Ok(detail) => (true, detail),
            Err(e) => {
                let detail = e.to_string();
                match check.kind {
                    Kind::Exact => exact_failures.push(check.name),
                    Kind::Statistical => stat_failures.push(check.name),
                }
                (false, detail)
            }
        };
        writeln!(
            out,
            "{} {:<28} {}",
            if passed { "  ok" } else { "FAIL" },
            check.name,
            detail
        )?;
        results.push(CheckResult { name: check.name, passed, detail });
    }
    let n_fail = exact_failures.len() + stat_failures.len();
    writeln!(out, "selftest: {} passed, {} failed", results.len() - n_fail, n_fail)?;
    if n_fail == 0 {
        Ok(results)
    } else if exact_failures.is_empty() {
        Err(stat_err(
            &stat_failures.join(", "),
            "statistical check(s) out of tolerance".to_string(),
        ))
    } else {
        let mut all = exact_failures;
        all.extend(stat_failures);
        Err(exact_err(&all.join(", "), "check(s) failed".to_string()))
    }
}
