//! Collocation grid description and its validity rules.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Pseudo-spectral grid: Galerkin cutoff `N`, number of equispaced physical
/// points `M` (at `x_j = 2 pi j / M`), and the dealiasing cutoff `K_d`
/// applied to quadratic products.
///
/// Validity rules (checked by every constructor):
///
/// * `M` is even and `M >= 2N + 2`, so all modes `|k| <= N` are uniquely
///   resolved with no Nyquist ambiguity;
/// * `K_d <= N`;
/// * when dealiasing is active (`K_d >= 1`), `M >= 3N + 1`, which makes the
///   retained coefficients `|k| <= K_d` of a product of two cutoff-`N`
///   fields exact (no aliased images land inside the retained band).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    cutoff: usize,
    physical_points: usize,
    dealias_cutoff: usize,
}

impl GridSpec {
    /// Standard two-thirds-rule grid for cutoff `n`: `K_d = floor(2n/3)` and
    /// `M` the smallest multiple of 8 at least `3n + 1` (multiples of 8 keep
    /// the FFT sizes friendly without changing any guarantee).
    pub fn two_thirds(n: usize) -> Result<Self> {
        let m = (3 * n + 1).next_multiple_of(8);
        Self::custom(n, m, (2 * n) / 3)
    }

    /// Fully explicit grid; validates all rules above.
    pub fn custom(cutoff: usize, physical_points: usize, dealias_cutoff: usize) -> Result<Self> {
        let g = GridSpec {
            cutoff,
            physical_points,
            dealias_cutoff,
        };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let (n, m, kd) = (self.cutoff, self.physical_points, self.dealias_cutoff);
        if n < 1 {
            problems.push("grid cutoff N must be at least 1".to_string());
        }
        if m % 2 != 0 {
            problems.push(format!("physical point count M = {m} must be even"));
        }
        if m < 2 * n + 2 {
            problems.push(format!(
                "M = {m} too small to resolve cutoff N = {n} (need M >= 2N + 2 = {})",
                2 * n + 2
            ));
        }
        if kd > n {
            problems.push(format!(
                "dealias cutoff K_d = {kd} exceeds the Galerkin cutoff N = {n}"
            ));
        }
        if kd >= 1 && m < 3 * n + 1 {
            problems.push(format!(
                "M = {m} violates the dealiasing requirement M >= 3N + 1 = {}",
                3 * n + 1
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn physical_points(&self) -> usize {
        self.physical_points
    }

    pub fn dealias_cutoff(&self) -> usize {
        self.dealias_cutoff
    }

    /// The physical collocation points `x_j = 2 pi j / M`.
    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        let m = self.physical_points as f64;
        (0..self.physical_points).map(move |j| std::f64::consts::TAU * j as f64 / m)
    }
}
