//! Spectral diagnostics, observables, and time-averaging
//!
//! Per-shell quantities, all indexed by wavenumber `k` (entry 0 unused):
//!
//! * energy `E(k) = (1/2) k^{-2} (w_k^2 + w_{-k}^2)` (velocity energy),
//! * enstrophy `Q(k) = (1/2) (w_k^2 + w_{-k}^2)`, so `sum_k Q(k) =
//!   (1/2) ||w||^2`,
//! * nonlinear transfer `T(k) = w_k B_k + w_{-k} B_{-k}` with `B = B_a(w)`,
//! * enstrophy flux `Pi(k) = -sum_{k' <= k} T(k')`; for `a = -2` the
//!   nonlinearity moves enstrophy between shells without creating it, so
//!   `Pi(N) = 0` (to round-off) whenever the state is band-limited to the
//!   dealias cutoff.
//!
//! [`Observable`] is a small grammar of scalar functionals used by the
//! time-average (Krylov–Bogolyubov) machinery, with batch-means error bars.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrator::{Observer, TrajectoryState};
use crate::spectral::{Field, SobolevIndex, Transform};
use crate::util::{kahan_sum, KahanSum};

// ---------------------------------------------------------------------------
// Shell spectra
// ---------------------------------------------------------------------------

/// Velocity-energy spectrum by shell; index `k`, entry 0 is zero.
pub fn energy_spectrum(w: &Field) -> Vec<f64> {
    let n = w.cutoff();
    let mut e = vec![0.0; n + 1];
    for (k, ek) in e.iter_mut().enumerate().skip(1) {
        let (c, s) = w.pair(k);
        *ek = 0.5 * (c * c + s * s) / (k * k) as f64;
    }
    e
}

/// Enstrophy spectrum by shell; `sum_k Q(k) = (1/2) ||w||_{L^2}^2`.
pub fn enstrophy_spectrum(w: &Field) -> Vec<f64> {
    let n = w.cutoff();
    let mut q = vec![0.0; n + 1];
    for (k, qk) in q.iter_mut().enumerate().skip(1) {
        let (c, s) = w.pair(k);
        *qk = 0.5 * (c * c + s * s);
    }
    q
}

/// Shell-by-shell enstrophy transfer `T(k) = w_k B_k + w_{-k} B_{-k}` for a
/// precomputed nonlinear term `b`.
pub fn transfer_spectrum(w: &Field, b: &Field) -> Vec<f64> {
    let n = w.cutoff().max(b.cutoff());
    let mut t = vec![0.0; n + 1];
    for (k, tk) in t.iter_mut().enumerate().skip(1) {
        let (wc, ws) = if k <= w.cutoff() { w.pair(k) } else { (0.0, 0.0) };
        let (bc, bs) = if k <= b.cutoff() { b.pair(k) } else { (0.0, 0.0) };
        *tk = wc * bc + ws * bs;
    }
    t
}

/// Cumulative enstrophy flux `Pi(k) = -sum_{k' <= k} T(k')`, compensated
/// summation; `Pi(0) = 0`.
pub fn enstrophy_flux(transfer: &[f64]) -> Vec<f64> {
    let mut flux = vec![0.0; transfer.len()];
    let mut acc = KahanSum::new();
    for (k, &t) in transfer.iter().enumerate().skip(1) {
        acc.add(-t);
        flux[k] = acc.value();
    }
    flux
}

// ---------------------------------------------------------------------------
// Observables
// ---------------------------------------------------------------------------

/// Scalar functionals of the state, with a compact string grammar used in
/// configuration files:
///
/// * `const:<c>` — the constant `c`,
/// * `h<m>` — squared Sobolev norm `||w||_{H^m}^2` (`h0` is `||w||_{L^2}^2`),
/// * `w<k>` — the coefficient of the basis mode `k` (negative `k` selects
///   the sine partner, e.g. `w-3`),
/// * `exp:<eps>` — `exp(eps ||w||_{L^2}^2)`; this one needs the moment
///   guard `2 eps B_0 <= nu` (see [`exp_moment_guard`]).
#[derive(Debug, Clone, PartialEq)]
pub enum Observable {
    Constant(f64),
    SobolevNormSq(SobolevIndex),
    Coefficient(i32),
    ExpNormSq(f64),
}

impl Observable {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(c) = s.strip_prefix("const:") {
            let c: f64 = c
                .parse()
                .map_err(|_| Error::config(format!("bad constant observable '{s}'")))?;
            if !c.is_finite() {
                return Err(Error::config(format!("constant observable must be finite: '{s}'")));
            }
            return Ok(Observable::Constant(c));
        }
        if let Some(eps) = s.strip_prefix("exp:") {
            let eps: f64 = eps
                .parse()
                .map_err(|_| Error::config(format!("bad exponential observable '{s}'")))?;
            if !(eps.is_finite() && eps > 0.0) {
                return Err(Error::config(format!(
                    "exponential observable needs eps > 0: '{s}'"
                )));
            }
            return Ok(Observable::ExpNormSq(eps));
        }
        if let Some(m) = s.strip_prefix('h') {
            let m: u32 = m
                .parse()
                .map_err(|_| Error::config(format!("bad Sobolev observable '{s}'")))?;
            return Ok(Observable::SobolevNormSq(SobolevIndex::new(m)?));
        }
        if let Some(k) = s.strip_prefix('w') {
            let k: i32 = k
                .parse()
                .map_err(|_| Error::config(format!("bad coefficient observable '{s}'")))?;
            if k == 0 {
                return Err(Error::config("coefficient observable 'w0' is outside the zero-mean basis"));
            }
            return Ok(Observable::Coefficient(k));
        }
        Err(Error::config(format!(
            "unknown observable '{s}' (expected const:<c>, h<m>, w<k>, or exp:<eps>)"
        )))
    }

    pub fn evaluate(&self, w: &Field) -> f64 {
        match *self {
            Observable::Constant(c) => c,
            Observable::SobolevNormSq(m) => w.sobolev_norm_sq(m),
            Observable::Coefficient(k) => {
                if k.unsigned_abs() as usize > w.cutoff() {
                    0.0
                } else {
                    w.coeff(k)
                }
            }
            Observable::ExpNormSq(eps) => (eps * w.sobolev_norm_sq(SobolevIndex::L2)).exp(),
        }
    }

    /// The `eps` of an exponential observable, if any (callers must check
    /// the moment guard before averaging it).
    pub fn exp_rate(&self) -> Option<f64> {
        match *self {
            Observable::ExpNormSq(eps) => Some(eps),
            _ => None,
        }
    }
}

impl std::fmt::Display for Observable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            Observable::Constant(c) => write!(f, "const:{c}"),
            Observable::SobolevNormSq(m) => write!(f, "h{m}"),
            Observable::Coefficient(k) => write!(f, "w{k}"),
            Observable::ExpNormSq(eps) => write!(f, "exp:{eps}"),
        }
    }
}

impl std::str::FromStr for Observable {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Observable::parse(s)
    }
}

/// Exponential moments stay bounded along the flow only while
/// `2 eps B_0 <= nu`; outside that regime the average is meaningless and
/// the request is refused.
pub fn exp_moment_guard(eps: f64, nu: f64, b0: f64) -> Result<()> {
    if 2.0 * eps * b0 <= nu {
        Ok(())
    } else {
        Err(Error::config(format!(
            "exponential moment guard violated: 2*eps*B0 = {:.3e} > nu = {:.3e}",
            2.0 * eps * b0,
            nu
        )))
    }
}

/// A priori bound on the exponential moment at time `t` started from data
/// with squared norm `x0_sq`: `exp(eps (x0_sq + B0 t))`.
pub fn exp_moment_bound(eps: f64, x0_sq: f64, b0: f64, t: f64) -> f64 {
    (eps * (x0_sq + b0 * t)).exp()
}

// ---------------------------------------------------------------------------
// Time averages (Krylov–Bogolyubov)
// ---------------------------------------------------------------------------

/// Default fraction of a time series discarded as burn-in.
pub const DEFAULT_BURN_IN: f64 = 0.2;
/// Target number of batches for batch-means error bars.
pub const KB_BATCHES: usize = 20;

/// A time average with a batch-means standard error.
#[derive(Debug, Clone, Serialize)]
pub struct KbEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub n_batches: usize,
}

/// Averages equally spaced samples `(t, value)` after discarding the first
/// `burn_in` fraction of the observation window. The standard error comes
/// from `min(20, n/2)` contiguous batch means, which absorbs the serial
/// correlation a naive i.i.d. error bar would ignore.
pub fn kb_average(samples: &[(f64, f64)], burn_in: f64) -> Result<KbEstimate> {
    if !(0.0..1.0).contains(&burn_in) {
        return Err(Error::config(format!(
            "burn-in fraction must lie in [0, 1), got {burn_in}"
        )));
    }
    if samples.len() < 4 {
        return Err(Error::Statistical(format!(
            "need at least 4 samples for a time average, got {}",
            samples.len()
        )));
    }
    let t0 = samples.first().unwrap().0;
    let t1 = samples.last().unwrap().0;
    let t_cut = t0 + burn_in * (t1 - t0);
    let kept: Vec<f64> = samples
        .iter()
        .filter(|(t, _)| *t >= t_cut)
        .map(|&(_, v)| v)
        .collect();
    if kept.len() < 4 {
        return Err(Error::Statistical(format!(
            "only {} samples remain after burn-in; lengthen the run or lower the cadence",
            kept.len()
        )));
    }
    let n = kept.len();
    let value = kahan_sum(kept.iter().copied()) / n as f64;
    let n_batches = KB_BATCHES.min(n / 2);
    let batch_len = n / n_batches;
    // Drop the ragged prefix so all batches have equal length.
    let start = n - n_batches * batch_len;
    let means: Vec<f64> = (0..n_batches)
        .map(|b| {
            let lo = start + b * batch_len;
            kahan_sum(kept[lo..lo + batch_len].iter().copied()) / batch_len as f64
        })
        .collect();
    let grand = kahan_sum(means.iter().copied()) / n_batches as f64;
    let var = kahan_sum(means.iter().map(|m| (m - grand) * (m - grand)))
        / (n_batches as f64 - 1.0);
    Ok(KbEstimate {
        value,
        stderr: (var / n_batches as f64).sqrt(),
        n_samples: n,
        n_batches,
    })
}

// ---------------------------------------------------------------------------
// Observers
// ---------------------------------------------------------------------------

/// Samples one observable along a run.
#[derive(Debug, Clone)]
pub struct ObservableSampler {
    pub observable: Observable,
    pub samples: Vec<(f64, f64)>,
}

impl ObservableSampler {
    pub fn new(observable: Observable) -> Self {
        ObservableSampler {
            observable,
            samples: Vec::new(),
        }
    }
}

impl Observer for ObservableSampler {
    fn record(&mut self, t: f64, state: &TrajectoryState) {
        self.samples.push((t, self.observable.evaluate(&state.omega)));
    }
}

/// One row of the moment ledger: the squared `H^m` norm and the running
/// trapezoid integral of the squared `H^{m+1}` norm (the dissipation
/// functional in the energy balance).
#[derive(Debug, Clone, Serialize)]
pub struct MomentRow {
    pub t: f64,
    pub h_m_sq: f64,
    pub int_h_m1_sq: f64,
}

/// Tracks `||w(t)||_{H^m}^2` and `int_0^t ||w||_{H^{m+1}}^2 ds` (trapezoid
/// rule on the recorded time grid).
#[derive(Debug, Clone)]
pub struct MomentTracker {
    m: SobolevIndex,
    m1: SobolevIndex,
    pub rows: Vec<MomentRow>,
    prev: Option<(f64, f64)>,
    integral: KahanSum,
}

impl MomentTracker {
    pub fn new(m: SobolevIndex) -> Self {
        MomentTracker {
            m,
            m1: m.succ(),
            rows: Vec::new(),
            prev: None,
            integral: KahanSum::new(),
        }
    }

    pub fn index(&self) -> SobolevIndex {
        self.m
    }
}

impl Observer for MomentTracker {
    fn record(&mut self, t: f64, state: &TrajectoryState) {
        let h_m_sq = state.omega.sobolev_norm_sq(self.m);
        let h_m1_sq = state.omega.sobolev_norm_sq(self.m1);
        if let Some((tp, hp)) = self.prev {
            self.integral.add(0.5 * (h_m1_sq + hp) * (t - tp));
        }
        self.prev = Some((t, h_m1_sq));
        self.rows.push(MomentRow {
            t,
            h_m_sq,
            int_h_m1_sq: self.integral.value(),
        });
    }
}

/// One spectrum snapshot.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumRow {
    pub t: f64,
    pub energy: Vec<f64>,
    pub enstrophy: Vec<f64>,
    pub flux: Vec<f64>,
}

/// Records energy/enstrophy spectra and the enstrophy flux along a run.
/// Owns its own transform clone (FFT plans are shared) so it can evaluate
/// the nonlinear term independently of the stepper.
#[derive(Debug, Clone)]
pub struct SpectrumObserver {
    transform: Transform,
    a: f64,
    pub rows: Vec<SpectrumRow>,
    pub error: Option<String>,
}

impl SpectrumObserver {
    pub fn new(transform: Transform, a: f64) -> Self {
        SpectrumObserver {
            transform,
            a,
            rows: Vec::new(),
            error: None,
        }
    }
}

impl Observer for SpectrumObserver {
    fn record(&mut self, t: f64, state: &TrajectoryState) {
        if self.error.is_some() {
            return;
        }
        match self.transform.nonlinear_term(&state.omega, self.a) {
            Ok(b) => {
                let transfer = transfer_spectrum(&state.omega, &b);
                self.rows.push(SpectrumRow {
                    t,
                    energy: energy_spectrum(&state.omega),
                    enstrophy: enstrophy_spectrum(&state.omega),
                    flux: enstrophy_flux(&transfer),
                });
            }
            Err(e) => self.error = Some(e.to_string()),
        }
    }
}

/// Samples a low-dimensional projection of the state (default: the cosine
/// coefficients of modes 4, 8, 16) as a proxy for the invariant measure.
#[derive(Debug, Clone)]
pub struct AttractorSampler {
    pub modes: [i32; 3],
    pub rows: Vec<(f64, [f64; 3])>,
}

impl AttractorSampler {
    pub fn new(modes: [i32; 3]) -> Self {
        AttractorSampler {
            modes,
            rows: Vec::new(),
        }
    }
}

impl Default for AttractorSampler {
    fn default() -> Self {
        AttractorSampler::new([4, 8, 16])
    }
}

impl Observer for AttractorSampler {
    fn record(&mut self, t: f64, state: &TrajectoryState) {
        let get = |k: i32| {
            if k.unsigned_abs() as usize > state.omega.cutoff() {
                0.0
            } else {
                state.omega.coeff(k)
            }
        };
        self.rows
            .push((t, [get(self.modes[0]), get(self.modes[1]), get(self.modes[2])]));
    }
}

/// Equal-width 3-d histogram of attractor samples (a coarse empirical
/// measure for eyeballing convergence of the law).
#[derive(Debug, Clone, Serialize)]
pub struct Histogram3 {
    pub bins: usize,
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    /// Row-major counts, `bins^3` entries.
    pub counts: Vec<u32>,
}

impl Histogram3 {
    pub fn from_rows(rows: &[(f64, [f64; 3])], bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::config("histogram needs at least one bin"));
        }
        if rows.is_empty() {
            return Err(Error::Statistical("histogram needs at least one sample".into()));
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for (_, x) in rows {
            for d in 0..3 {
                lo[d] = lo[d].min(x[d]);
                hi[d] = hi[d].max(x[d]);
            }
        }
        for d in 0..3 {
            if hi[d] <= lo[d] {
                hi[d] = lo[d] + 1.0;
            }
        }
        let mut counts = vec![0u32; bins * bins * bins];
        for (_, x) in rows {
            let mut idx = 0usize;
            for d in 0..3 {
                let frac = (x[d] - lo[d]) / (hi[d] - lo[d]);
                let b = ((frac * bins as f64) as usize).min(bins - 1);
                idx = idx * bins + b;
            }
            counts[idx] += 1;
        }
        Ok(Histogram3 {
            bins,
            lo,
            hi,
            counts,
        })
    }
}
