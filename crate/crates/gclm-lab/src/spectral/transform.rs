//! FFT bridge between coefficient space and the collocation grid, plus the
//! dealiased pseudo-spectral nonlinear term.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::spectral::{Field, GridSpec};
use crate::util::KahanSum;

/// FFT plans and work buffers bound to one [`GridSpec`].
///
/// The complex-spectrum convention: a field with real-basis pair
/// `(f_k, f_{-k})` corresponds to the complex exponential coefficient
/// `c_k = (f_k - i f_{-k}) / (2 sqrt(pi))` at frequency `+k` (and its
/// conjugate at `-k`), so the inverse DFT of the `c_k` evaluates the field at
/// the collocation points.
///
/// Cloning shares the (immutable, thread-safe) FFT plans and allocates fresh
/// work buffers, so each trajectory worker can own an independent
/// `Transform` cheaply.
pub struct Transform {
    grid: GridSpec,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    buf: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
    phys: PhysBuffers,
}

/// Reusable physical-space buffers for the nonlinear term.
#[derive(Default)]
struct PhysBuffers {
    velocity: Vec<f64>,
    omega: Vec<f64>,
    hilbert: Vec<f64>,
    deriv: Vec<f64>,
    product: Vec<f64>,
}

impl Clone for Transform {
    fn clone(&self) -> Self {
        Transform::from_plans(self.grid, self.fwd.clone(), self.inv.clone())
    }
}

impl std::fmt::Debug for Transform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Transform").field("grid", &self.grid).finish()
    }
}

impl Transform {
    pub fn new(grid: GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        let m = grid.physical_points();
        let fwd = planner.plan_fft_forward(m);
        let inv = planner.plan_fft_inverse(m);
        Transform::from_plans(grid, fwd, inv)
    }

    fn from_plans(grid: GridSpec, fwd: Arc<dyn Fft<f64>>, inv: Arc<dyn Fft<f64>>) -> Self {
        let m = grid.physical_points();
        let scratch_len = fwd
            .get_inplace_scratch_len()
            .max(inv.get_inplace_scratch_len());
        Transform {
            grid,
            fwd,
            inv,
            buf: vec![Complex::default(); m],
            scratch: vec![Complex::default(); scratch_len],
            phys: PhysBuffers::default(),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    fn check_cutoff(&self, f: &Field) -> Result<()> {
        if f.cutoff() > self.grid.cutoff() {
            return Err(Error::config(format!(
                "field cutoff {} exceeds grid cutoff {}",
                f.cutoff(),
                self.grid.cutoff()
            )));
        }
        Ok(())
    }

    /// Evaluates the field at the `M` collocation points.
    pub fn to_physical(&mut self, f: &Field) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.grid.physical_points()];
        self.fill_physical(f, &mut out)?;
        Ok(out)
    }

    fn fill_physical(&mut self, f: &Field, out: &mut [f64]) -> Result<()> {
        self.check_cutoff(f)?;
        let m = self.grid.physical_points();
        assert_eq!(out.len(), m, "output slice must have M entries");
        let half_inv_sqrt_pi = 0.5 / std::f64::consts::PI.sqrt();
        self.buf.fill(Complex::default());
        for k in 1..=f.cutoff() {
            let (c, s) = f.pair(k);
            let ck = Complex::new(c * half_inv_sqrt_pi, -s * half_inv_sqrt_pi);
            self.buf[k] = ck;
            self.buf[m - k] = ck.conj();
        }
        self.inv.process_with_scratch(&mut self.buf, &mut self.scratch);
        for (o, z) in out.iter_mut().zip(&self.buf) {
            *o = z.re;
        }
        Ok(())
    }

    /// Projects `M` sample values onto the basis, returning coefficients up
    /// to the grid cutoff (a plain L^2 projection; content beyond the
    /// cutoff, including any mean, is discarded). Errors on non-finite
    /// samples or a length mismatch.
    pub fn to_coefficients(&mut self, samples: &[f64]) -> Result<Field> {
        let m = self.grid.physical_points();
        if samples.len() != m {
            return Err(Error::config(format!(
                "sample count {} does not match grid M = {m}",
                samples.len()
            )));
        }
        if !samples.iter().all(|s| s.is_finite()) {
            return Err(Error::Numerical(
                "non-finite sample passed to to_coefficients".into(),
            ));
        }
        for (z, s) in self.buf.iter_mut().zip(samples) {
            *z = Complex::new(*s, 0.0);
        }
        self.fwd.process_with_scratch(&mut self.buf, &mut self.scratch);
        let n = self.grid.cutoff();
        let mut f = Field::zeros(n);
        let two_sqrt_pi_over_m = 2.0 * std::f64::consts::PI.sqrt() / m as f64;
        for k in 1..=n {
            let ck = self.buf[k];
            f.set_pair(k, two_sqrt_pi_over_m * ck.re, -two_sqrt_pi_over_m * ck.im);
        }
        Ok(f)
    }

    /// Physical-space L^p norm `( (2 pi / M) sum_j |f(x_j)|^p )^{1/p}`.
    ///
    /// The quadrature is exact (to round-off) for band-limited integrands
    /// whose total degree stays below the grid's alias-free range; for the
    /// conserved-quantity checks (p = 2, 3) use a grid comfortably larger
    /// than the field band.
    pub fn lp_norm(&mut self, f: &Field, p: f64) -> Result<f64> {
        if p.is_nan() || p < 1.0 {
            return Err(Error::config(format!("L^p norm needs p >= 1, got {p}")));
        }
        let vals = self.to_physical(f)?;
        let mut acc = KahanSum::new();
        for v in &vals {
            acc.add(v.abs().powf(p));
        }
        let m = self.grid.physical_points() as f64;
        Ok((std::f64::consts::TAU / m * acc.value()).powf(1.0 / p))
    }

    /// The pseudo-spectral nonlinear term
    ///
    /// ```text
    /// B_a(w) = u_x w - a u w_x,   u_x = H(w),  u_k = -w_k/|k|,
    /// ```
    ///
    /// which is the non-diffusive right-hand-side contribution of the model
    /// `w_t = nu w_xx + B_a(w) + noise`. Products are formed on the
    /// collocation grid, transformed back, truncated at the dealias cutoff
    /// `K_d` (exact for the retained band thanks to `M >= 3N + 1`), and
    /// returned at the input's cutoff. The zero mode is excluded by
    /// construction, so the result is mean-free.
    pub fn nonlinear_term(&mut self, omega: &Field, a: f64) -> Result<Field> {
        self.check_cutoff(omega)?;
        let m = self.grid.physical_points();
        // Borrow the buffers out of self so the &mut self FFT calls below
        // don't conflict.
        let mut phys = std::mem::take(&mut self.phys);
        let result = (|| -> Result<Field> {
            for b in [
                &mut phys.velocity,
                &mut phys.omega,
                &mut phys.hilbert,
                &mut phys.deriv,
                &mut phys.product,
            ] {
                b.resize(m, 0.0);
            }
            self.fill_physical(&omega.velocity_from_vorticity(), &mut phys.velocity)?;
            self.fill_physical(omega, &mut phys.omega)?;
            self.fill_physical(&omega.hilbert(), &mut phys.hilbert)?;
            self.fill_physical(&omega.derivative(1), &mut phys.deriv)?;
            for j in 0..m {
                phys.product[j] =
                    phys.hilbert[j] * phys.omega[j] - a * phys.velocity[j] * phys.deriv[j];
            }
            let full = self.to_coefficients(&phys.product)?;
            // K_d = 0 means dealiasing truncates everything: the nonlinear
            // term of such a degenerate grid is identically zero.
            let kd = self.grid.dealias_cutoff();
            let dealiased = if kd == 0 { Field::zeros(1) } else { full.project(kd) };
            Ok(dealiased.project(omega.cutoff()))
        })();
        self.phys = phys;
        result
    }
}
