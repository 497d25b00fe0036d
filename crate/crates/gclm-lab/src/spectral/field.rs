//! Coefficient storage and exact (FFT-free) spectral operators.

use crate::error::{Error, Result};
use crate::util::KahanSum;
use serde::{Deserialize, Serialize};

/// Validated homogeneous Sobolev regularity index `m` for `H^m` norms.
///
/// Large `m` amplifies high-mode round-off (weights grow like `|k|^{2m}`),
/// so the range is capped; the default maximum is
/// [`SobolevIndex::DEFAULT_MAX`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SobolevIndex(u32);

impl SobolevIndex {
    /// Default maximum accepted regularity.
    pub const DEFAULT_MAX: u32 = 8;
    /// The L^2 norm (m = 0).
    pub const L2: SobolevIndex = SobolevIndex(0);
    /// The H^1 seminorm (m = 1).
    pub const H1: SobolevIndex = SobolevIndex(1);

    /// Validates `m <= DEFAULT_MAX`.
    pub fn new(m: u32) -> Result<Self> {
        Self::with_max(m, Self::DEFAULT_MAX)
    }

    /// Validates against a caller-supplied maximum.
    pub fn with_max(m: u32, max: u32) -> Result<Self> {
        if m > max {
            return Err(Error::config(format!(
                "Sobolev index m = {m} exceeds the configured maximum {max}"
            )));
        }
        Ok(SobolevIndex(m))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    /// m + 1, for dissipation integrals; may exceed the validated maximum by
    /// one, which is intentional (the (m+1)-norm of the state is tracked
    /// alongside every m-norm).
    pub fn succ(self) -> SobolevIndex {
        SobolevIndex(self.0 + 1)
    }
}

impl std::fmt::Display for SobolevIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A real, zero-mean spectral field with Galerkin cutoff `N`.
///
/// Stores the `2N` coefficients `f_k` for `k = -N..-1, 1..N` (that index
/// order is also the serialization order). The mean mode `k = 0` does not
/// exist in this representation.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    cutoff: usize,
    coeffs: Vec<f64>,
}

impl Field {
    /// The zero field with cutoff `n >= 1`.
    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1, "field cutoff must be at least 1");
        Field {
            cutoff: n,
            coeffs: vec![0.0; 2 * n],
        }
    }

    /// Builds a field from coefficients in index order `-N..-1, 1..N`.
    pub fn from_coeffs(n: usize, coeffs: Vec<f64>) -> Result<Self> {
        if n < 1 || coeffs.len() != 2 * n {
            return Err(Error::config(format!(
                "coefficient vector of length {} does not match cutoff {n} (expected {})",
                coeffs.len(),
                2 * n
            )));
        }
        Ok(Field { cutoff: n, coeffs })
    }

    /// A single basis mode: `amplitude * e_k`. For `k >= 1` this is
    /// `amplitude * cos(kx)/sqrt(pi)`; for `k <= -1`,
    /// `amplitude * sin(|k|x)/sqrt(pi)`.
    pub fn mode(n: usize, k: i32, amplitude: f64) -> Self {
        let mut f = Field::zeros(n);
        f.set_coeff(k, amplitude);
        f
    }

    /// `amplitude * cos(k x)` as a field (k >= 1); needs cutoff >= k.
    pub fn cosine(n: usize, k: usize, amplitude: f64) -> Self {
        Field::mode(n, k as i32, amplitude * std::f64::consts::PI.sqrt())
    }

    /// `amplitude * sin(k x)` as a field (k >= 1); needs cutoff >= k.
    pub fn sine(n: usize, k: usize, amplitude: f64) -> Self {
        Field::mode(n, -(k as i32), amplitude * std::f64::consts::PI.sqrt())
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// Raw coefficients in index order `-N..-1, 1..N`.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    #[inline]
    fn idx(&self, k: i32) -> usize {
        let n = self.cutoff as i32;
        debug_assert!(k != 0 && k.abs() <= n, "mode index {k} out of range");
        if k < 0 {
            (k + n) as usize
        } else {
            (n + k - 1) as usize
        }
    }

    /// Coefficient of `e_k`; zero for `|k|` beyond the cutoff.
    #[inline]
    pub fn coeff(&self, k: i32) -> f64 {
        assert!(k != 0, "mode k = 0 is excluded (zero-mean subspace)");
        if k.unsigned_abs() as usize > self.cutoff {
            0.0
        } else {
            self.coeffs[self.idx(k)]
        }
    }

    #[inline]
    pub fn set_coeff(&mut self, k: i32, value: f64) {
        assert!(k != 0, "mode k = 0 is excluded (zero-mean subspace)");
        assert!(
            k.unsigned_abs() as usize <= self.cutoff,
            "mode {k} beyond cutoff {}",
            self.cutoff
        );
        let i = self.idx(k);
        self.coeffs[i] = value;
    }

    /// The (cosine, sine) coefficient pair `(f_k, f_{-k})` for `k >= 1`.
    #[inline]
    pub fn pair(&self, k: usize) -> (f64, f64) {
        (self.coeff(k as i32), self.coeff(-(k as i32)))
    }

    #[inline]
    pub fn set_pair(&mut self, k: usize, cos_part: f64, sin_part: f64) {
        self.set_coeff(k as i32, cos_part);
        self.set_coeff(-(k as i32), sin_part);
    }

    /// True when every coefficient is finite.
    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    /// Hilbert transform: the Fourier multiplier `-i sgn(k)` on complex
    /// exponentials, i.e. `(f_k, f_{-k}) -> (-f_{-k}, f_k)` per pair, so
    /// `H(cos kx) = sin kx` and `H(sin kx) = -cos kx`.
    pub fn hilbert(&self) -> Field {
        let mut out = Field::zeros(self.cutoff);
        for k in 1..=self.cutoff {
            let (c, s) = self.pair(k);
            out.set_pair(k, -s, c);
        }
        out
    }

    /// Spectral derivative of the given order; `(i k)^order` per complex
    /// mode. Order 0 is the identity.
    pub fn derivative(&self, order: u32) -> Field {
        let mut out = Field::zeros(self.cutoff);
        for k in 1..=self.cutoff {
            let (c, s) = self.pair(k);
            let scale = (k as f64).powi(order as i32);
            let (nc, ns) = match order % 4 {
                0 => (c, s),
                1 => (s, -c),
                2 => (-c, -s),
                _ => (-s, c),
            };
            out.set_pair(k, scale * nc, scale * ns);
        }
        out
    }

    /// Velocity recovery `u = -(-d^2/dx^2)^{-1/2} w`: each coefficient is
    /// scaled by `-1/|k|`. With this sign, `u_x` equals the Hilbert
    /// transform of the input (e.g. `w = cos x` gives `u = -cos x`,
    /// `u_x = sin x = H(w)`).
    pub fn velocity_from_vorticity(&self) -> Field {
        let mut out = Field::zeros(self.cutoff);
        for k in 1..=self.cutoff {
            let (c, s) = self.pair(k);
            let inv = -1.0 / k as f64;
            out.set_pair(k, inv * c, inv * s);
        }
        out
    }

    /// Galerkin projection / resize: returns a field with cutoff exactly
    /// `n`, keeping the shared modes (truncating above, zero-padding when
    /// `n` exceeds the current cutoff). `project(f, f.cutoff())` is the
    /// identity.
    pub fn project(&self, n: usize) -> Field {
        let mut out = Field::zeros(n);
        for k in 1..=n.min(self.cutoff) {
            let (c, s) = self.pair(k);
            out.set_pair(k, c, s);
        }
        out
    }

    /// Squared homogeneous Sobolev norm `sum_k |k|^{2m} f_k^2`
    /// (compensated summation).
    pub fn sobolev_norm_sq(&self, m: SobolevIndex) -> f64 {
        let two_m = 2 * m.get() as i32;
        let mut acc = KahanSum::new();
        for k in 1..=self.cutoff {
            let (c, s) = self.pair(k);
            let w = (k as f64).powi(two_m);
            acc.add(w * c * c);
            acc.add(w * s * s);
        }
        acc.value()
    }

    pub fn sobolev_norm(&self, m: SobolevIndex) -> f64 {
        self.sobolev_norm_sq(m).sqrt()
    }

    /// `||f||_{L^2}` (same as the m = 0 Sobolev norm).
    pub fn l2_norm(&self) -> f64 {
        self.sobolev_norm(SobolevIndex::L2)
    }

    /// L^2 inner product over the shared modes of the two fields
    /// (coefficients beyond either cutoff are zero).
    pub fn l2_inner(&self, other: &Field) -> f64 {
        let n = self.cutoff.min(other.cutoff);
        let mut acc = KahanSum::new();
        for k in 1..=n {
            let (c1, s1) = self.pair(k);
            let (c2, s2) = other.pair(k);
            acc.add(c1 * c2);
            acc.add(s1 * s2);
        }
        acc.value()
    }

    /// In-place `self += alpha * other`; requires other's cutoff to not
    /// exceed self's.
    pub fn add_scaled(&mut self, alpha: f64, other: &Field) {
        assert!(
            other.cutoff <= self.cutoff,
            "add_scaled: other cutoff {} exceeds self cutoff {}",
            other.cutoff,
            self.cutoff
        );
        for k in 1..=other.cutoff {
            let (c, s) = other.pair(k);
            let (sc, ss) = self.pair(k);
            self.set_pair(k, sc + alpha * c, ss + alpha * s);
        }
    }

    /// In-place multiplication by a scalar.
    pub fn scale(&mut self, alpha: f64) {
        for c in &mut self.coeffs {
            *c *= alpha;
        }
    }

    /// `self - other`, promoted to the larger cutoff.
    pub fn difference(&self, other: &Field) -> Field {
        let n = self.cutoff.max(other.cutoff);
        let mut out = self.project(n);
        out.add_scaled(-1.0, &other.project(n));
        out
    }

    /// Random field: i.i.d. standard normal coefficients on `1 <= |k| <=
    /// band`, then rescaled to the requested Sobolev norm. Used for
    /// random-band initial data; deterministic given the generator state.
    pub fn random_band<R: rand::Rng>(
        rng: &mut R,
        cutoff: usize,
        band: usize,
        m: SobolevIndex,
        norm: f64,
    ) -> Result<Self> {
        if band > cutoff || band < 1 {
            return Err(Error::config(format!(
                "random band {band} must satisfy 1 <= band <= cutoff {cutoff}"
            )));
        }
        let mut f = Field::zeros(cutoff);
        for k in 1..=band {
            // Box-Muller on the caller's generator; draws two uniforms per
            // normal to keep consumption deterministic.
            let normal = |rng: &mut R| -> f64 {
                let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..=1.0);
                let u2: f64 = rng.gen::<f64>();
                (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            };
            let c = normal(rng);
            let s = normal(rng);
            f.set_pair(k, c, s);
        }
        let current = f.sobolev_norm(m);
        if current == 0.0 {
            return Err(Error::Numerical(
                "degenerate random draw: zero field cannot be normalized".into(),
            ));
        }
        f.scale(norm / current);
        Ok(f)
    }
}
