//! Small descriptive-statistics helpers shared by the harness and the tests.

use serde::{Deserialize, Serialize};

/// Linear-interpolation quantile (R type 7) of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation.
pub fn std_dev(values: &[f64]) -> f64 {
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m).powi(2)).sum();
    (ss / (values.len() as f64 - 1.0)).sqrt()
}

/// Pearson correlation; NaN for fewer than two points or zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    if n < 2 {
        return f64::NAN;
    }
    let (mx, my) = (mean(&x[..n]), mean(&y[..n]));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (dx, dy) = (x[i] - mx, y[i] - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    sxy / (sxx * syy).sqrt()
}

/// Equal-width histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub width: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn edges(&self) -> Vec<f64> {
        (0..=self.counts.len()).map(|i| self.lo + i as f64 * self.width).collect()
    }
}

const MAX_BINS: usize = 400;

/// Freedman–Diaconis bin count over `[min, max]`.
pub fn fd_bins(values: &[f64]) -> (f64, f64, usize) {
    let s = sorted(values);
    let (lo, hi) = (s[0], s[s.len() - 1]);
    let iqr = quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25);
    let h = 2.0 * iqr / (s.len() as f64).cbrt();
    let bins = if h > 0.0 && hi > lo {
        (((hi - lo) / h).ceil() as usize).clamp(1, MAX_BINS)
    } else {
        1
    };
    (lo, hi, bins)
}

fn bin_index(v: f64, lo: f64, width: f64, bins: usize) -> usize {
    if width <= 0.0 {
        return 0;
    }
    (((v - lo) / width) as usize).min(bins - 1)
}

pub fn histogram_fd(values: &[f64]) -> Histogram {
    if values.is_empty() {
        return Histogram { lo: 0.0, width: 0.0, counts: vec![] };
    }
    let (lo, hi, bins) = fd_bins(values);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 0.0 };
    let mut counts = vec![0; bins];
    for &v in values {
        counts[bin_index(v, lo, width, bins)] += 1;
    }
    Histogram { lo, width, counts }
}

/// Two-dimensional histogram with Freedman–Diaconis bins on each axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram2d {
    pub x_lo: f64,
    pub x_width: f64,
    pub y_lo: f64,
    pub y_width: f64,
    /// `counts[i][j]` for x-bin `i`, y-bin `j`.
    pub counts: Vec<Vec<usize>>,
}

pub fn histogram2d_fd(x: &[f64], y: &[f64]) -> Histogram2d {
    let n = x.len().min(y.len());
    if n == 0 {
        return Histogram2d { x_lo: 0.0, x_width: 0.0, y_lo: 0.0, y_width: 0.0, counts: vec![] };
    }
    let (xl, xh, xb) = fd_bins(&x[..n]);
    let (yl, yh, yb) = fd_bins(&y[..n]);
    let xb = xb.min(60);
    let yb = yb.min(60);
    let xw = if xh > xl { (xh - xl) / xb as f64 } else { 0.0 };
    let yw = if yh > yl { (yh - yl) / yb as f64 } else { 0.0 };
    let mut counts = vec![vec![0; yb]; xb];
    for i in 0..n {
        counts[bin_index(x[i], xl, xw, xb)][bin_index(y[i], yl, yw, yb)] += 1;
    }
    Histogram2d { x_lo: xl, x_width: xw, y_lo: yl, y_width: yw, counts }
}

/// Kolmogorov distance between the empirical CDF of `values` and `cdf`.
pub fn ks_distance(values: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let s = sorted(values);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}
