//! Stochastic forcing: amplitude profiles, reproducible counter-based noise
//! streams, and the exact Ornstein–Uhlenbeck (stochastic heat) update.
//!
//! The forcing is `xi(t, x) = sum_k b_k beta_k(t) e_k(x)` with independent
//! standard Brownian motions `beta_k` and mode amplitudes `b_k >= 0` that
//! are symmetric in `+-k`. Its spectral mass at regularity `m` is
//! `B_m = sum_k |k|^{2m} b_k^2` (the sum running over both signs).

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::Field;
use crate::util::KahanSum;

/// Declarative forcing profile, as written in run configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "kebab-case")]
pub enum ForcingProfile {
    /// No forcing.
    Zero,
    /// `b_{+-1} = beta`, all other modes silent. `B_m = 2 beta^2` for all m.
    SingleBand { beta: f64 },
    /// `b_k = beta |k|^{-q}` for `1 <= |k| <= k_max`.
    PowerLaw { beta: f64, q: f64, k_max: usize },
    /// Explicit per-|k| amplitudes: `amplitudes[i]` drives modes `+-(i+1)`.
    Explicit { amplitudes: Vec<f64> },
}

/// Resolved per-mode amplitudes `b_k` for `k = 1..=max_mode` (applied
/// symmetrically to `+k` and `-k`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcingSpec {
    amplitudes: Vec<f64>,
}

impl ForcingSpec {
    /// The crate-wide default: single-band forcing on `k = +-1` with
    /// `beta = 0.1`, i.e. `B_0 = 0.02`.
    pub const DEFAULT_BETA: f64 = 0.1;

    pub fn from_profile(profile: &ForcingProfile) -> Result<Self> {
        let mut problems = Vec::new();
        let amplitudes = match profile {
            ForcingProfile::Zero => Vec::new(),
            ForcingProfile::SingleBand { beta } => {
                if !(beta.is_finite() && *beta >= 0.0) {
                    problems.push(format!("single-band beta must be finite and >= 0, got {beta}"));
                }
                vec![*beta]
            }
            ForcingProfile::PowerLaw { beta, q, k_max } => {
                if !(beta.is_finite() && *beta >= 0.0) {
                    problems.push(format!("power-law beta must be finite and >= 0, got {beta}"));
                }
                if !q.is_finite() {
                    problems.push(format!("power-law exponent q must be finite, got {q}"));
                }
                if *k_max < 1 {
                    problems.push("power-law k_max must be at least 1".to_string());
                }
                (1..=*k_max.max(&1))
                    .map(|k| beta * (k as f64).powf(-q))
                    .collect()
            }
            ForcingProfile::Explicit { amplitudes } => {
                if amplitudes.is_empty() {
                    problems.push("explicit amplitude list must not be empty".to_string());
                }
                for (i, b) in amplitudes.iter().enumerate() {
                    if !(b.is_finite() && *b >= 0.0) {
                        problems.push(format!(
                            "explicit amplitude b_{} must be finite and >= 0, got {b}",
                            i + 1
                        ));
                    }
                }
                amplitudes.clone()
            }
        };
        if problems.is_empty() {
            Ok(ForcingSpec { amplitudes })
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn zero() -> Self {
        ForcingSpec { amplitudes: Vec::new() }
    }

    pub fn single_band(beta: f64) -> Result<Self> {
        Self::from_profile(&ForcingProfile::SingleBand { beta })
    }

    /// Largest forced mode (0 when unforced).
    pub fn max_mode(&self) -> usize {
        self.amplitudes.len()
    }

    /// `b_k` for `k >= 1`; zero beyond the profile.
    pub fn amplitude(&self, k: usize) -> f64 {
        if k >= 1 && k <= self.amplitudes.len() {
            self.amplitudes[k - 1]
        } else {
            0.0
        }
    }

    pub fn is_zero(&self) -> bool {
        self.amplitudes.iter().all(|b| *b == 0.0)
    }

    /// Spectral mass `B_m = sum_{k in Z*} |k|^{2m} b_k^2
    /// = 2 sum_{k>=1} k^{2m} b_k^2`.
    pub fn spectral_mass(&self, m: u32) -> f64 {
        let mut acc = KahanSum::new();
        for (i, b) in self.amplitudes.iter().enumerate() {
            let k = (i + 1) as f64;
            acc.add(2.0 * k.powi(2 * m as i32) * b * b);
        }
        acc.value()
    }

    /// `B_0`, the energy injection rate appearing in the Ito balance.
    pub fn b0(&self) -> f64 {
        self.spectral_mass(0)
    }
}

/// Counter-based, splittable source of standard normal draws.
///
/// A stream is addressed by `(seed, trajectory)` — independent trajectories
/// of an ensemble use the same seed with distinct trajectory indices — and
/// its position is a plain draw counter, so checkpoints can restore the
/// stream in O(1) and continuation is bit-exact.
///
/// Gaussians come from Box–Muller (cosine branch only): every draw consumes
/// exactly two 64-bit words from the underlying ChaCha block cipher, keeping
/// the counter arithmetic trivial and the sequence stable across releases.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    seed: u64,
    trajectory: u64,
    counter: u64,
    rng: ChaCha12Rng,
}

/// ChaCha words consumed per normal draw (two `u64`s = four 32-bit words).
const WORDS_PER_DRAW: u128 = 4;

impl NoiseStream {
    pub fn new(seed: u64, trajectory: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(trajectory);
        NoiseStream {
            seed,
            trajectory,
            counter: 0,
            rng,
        }
    }

    /// Reconstructs a stream at an arbitrary counter position (O(1)).
    pub fn restore(seed: u64, trajectory: u64, counter: u64) -> Self {
        let mut s = NoiseStream::new(seed, trajectory);
        s.rng.set_word_pos(counter as u128 * WORDS_PER_DRAW);
        s.counter = counter;
        s
    }

    /// A fresh stream with the same seed and a different trajectory index.
    pub fn derive(&self, trajectory: u64) -> Self {
        NoiseStream::new(self.seed, trajectory)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn trajectory(&self) -> u64 {
        self.trajectory
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// One standard normal draw.
    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        let a = self.rng.next_u64();
        let b = self.rng.next_u64();
        let u1 = ((a >> 11) + 1) as f64 * SCALE; // in (0, 1]
        let u2 = (b >> 11) as f64 * SCALE; // in [0, 1)
        self.counter += 1;
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// Per-mode decay factor `exp(-nu k^2 dt)` of the heat semigroup.
#[inline]
pub fn heat_decay(nu: f64, k: usize, dt: f64) -> f64 {
    (-nu * (k * k) as f64 * dt).exp()
}

/// Standard deviation (without the `b_k` factor) of the exact OU increment
/// over one step: `sqrt( (1 - exp(-2 nu k^2 dt)) / (2 nu k^2) )`, with the
/// continuous limit `sqrt(dt)` as `nu k^2 dt -> 0`.
#[inline]
pub fn ou_increment_std(nu: f64, k: usize, dt: f64) -> f64 {
    let z = nu * (k * k) as f64 * dt;
    let g = if z < 1e-12 {
        1.0 - z // (1 - e^{-2z})/(2z) = 1 - z + O(z^2)
    } else {
        -(-2.0 * z).exp_m1() / (2.0 * z)
    };
    (dt * g).sqrt()
}

/// Draws the plain Gaussian forcing increment `xi(t + dt) - xi(t)` as a
/// field with cutoff `max(max_mode, 1)`: independent `N(0, b_k^2 dt)` on
/// every forced mode.
///
/// Draw order is fixed (k ascending, cosine part then sine part) and one
/// pair is consumed for every `k <= max_mode` even if `b_k = 0`, so streams
/// stay aligned across profiles with equal support.
pub fn sample_increment(spec: &ForcingSpec, dt: f64, stream: &mut NoiseStream) -> Field {
    let n = spec.max_mode().max(1);
    let mut f = Field::zeros(n);
    let sqrt_dt = dt.sqrt();
    for k in 1..=spec.max_mode() {
        let zc = stream.standard_normal();
        let zs = stream.standard_normal();
        let b = spec.amplitude(k) * sqrt_dt;
        f.set_pair(k, b * zc, b * zs);
    }
    f
}

/// Advances the stochastic convolution `v` (the OU process
/// `dv_k = -nu k^2 v_k dt + b_k dbeta_k`) by `dt` using the exact
/// distributional update
///
/// ```text
/// v_k <- exp(-nu k^2 dt) v_k + b_k sqrt((1 - exp(-2 nu k^2 dt))/(2 nu k^2)) z,
/// ```
///
/// so the sampled law is exact at any step size (stationary variance
/// `b_k^2 / (2 nu k^2)`). Modes beyond the forcing support decay
/// deterministically; draws are consumed for every forced mode even when it
/// lies above `v`'s cutoff, keeping streams aligned across Galerkin levels.
pub fn ou_exact_step(v: &mut Field, spec: &ForcingSpec, nu: f64, dt: f64, stream: &mut NoiseStream) {
    let n = v.cutoff();
    for k in 1..=n.max(spec.max_mode()) {
        let (zc, zs) = if k <= spec.max_mode() {
            (stream.standard_normal(), stream.standard_normal())
        } else {
            (0.0, 0.0)
        };
        if k > n {
            continue;
        }
        let d = heat_decay(nu, k, dt);
        let amp = spec.amplitude(k) * ou_increment_std(nu, k, dt);
        let (c, s) = v.pair(k);
        v.set_pair(k, d * c + amp * zc, d * s + amp * zs);
    }
}

/// Expected squared H^m norm of the OU process started from zero:
/// `E ||v(t)||_{H^m}^2 = sum_k |k|^{2m} b_k^2 (1 - e^{-2 nu k^2 t})/(2 nu k^2)`.
pub fn ou_expected_norm_sq(spec: &ForcingSpec, nu: f64, m: u32, t: f64) -> f64 {
    let mut acc = KahanSum::new();
    for k in 1..=spec.max_mode() {
        let b = spec.amplitude(k);
        let kk = (k * k) as f64;
        let var = if nu == 0.0 {
            b * b * t
        } else {
            b * b * (-(-2.0 * nu * kk * t).exp_m1()) / (2.0 * nu * kk)
        };
        acc.add(2.0 * (k as f64).powi(2 * m as i32) * var);
    }
    acc.value()
}
