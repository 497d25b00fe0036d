//! Small numeric helpers: compensated summation and least-squares fits.

/// Kahan–Neumaier compensated accumulator.
///
/// Used wherever long sums of heterogeneous magnitudes feed an acceptance
/// tolerance (Sobolev norms with large `|k|^{2m}` weights, time integrals,
/// ensemble reductions), so results are reproducible to ~1 ulp regardless of
/// summation length.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Sum an iterator with compensation.
pub fn kahan_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut acc = KahanSum::new();
    for x in xs {
        acc.add(x);
    }
    acc.value()
}

/// Ordinary least squares for y = intercept + slope * x.
///
/// Returns `(slope, intercept)`. Requires at least two distinct abscissae.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = kahan_sum(xs.iter().copied()) / n;
    let my = kahan_sum(ys.iter().copied()) / n;
    let sxx = kahan_sum(xs.iter().map(|x| (x - mx) * (x - mx)));
    let sxy = kahan_sum(xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)));
    if sxx <= 0.0 || !sxx.is_finite() || !sxy.is_finite() {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Sample mean and (unbiased) standard error of the mean.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = kahan_sum(xs.iter().copied()) / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let var = kahan_sum(xs.iter().map(|x| (x - mean) * (x - mean))) / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

/// Percentile of a sample by linear interpolation (p in [0, 1]).
/// Sorts a copy; intended for small bootstrap vectors.
pub fn percentile(xs: &[f64], p: f64) -> f64 {
    assert!(!xs.is_empty(), "percentile of empty sample");
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("non-finite sample in percentile"));
    let pos = p.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        v[lo]
    } else {
        let w = pos - lo as f64;
        v[lo] * (1.0 - w) + v[hi] * w
    }
}
