//! Scan-line edge detection: each row is split at every admissible column and
//! the split whose two-parameter test has the smallest permutation p-value wins.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mle::{fit_values, FeasibilityBox, FitConfig};
use crate::model::Sample;
use crate::perm::{self, PermutationConfig};
use crate::rng;
use crate::stats::StatisticKind;

/// Smallest segment on either side of a split.
pub const MIN_SEGMENT: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageStrip {
    rows: usize,
    cols: usize,
    pixels: Vec<f64>,
    looks: f64,
}

impl ImageStrip {
    pub fn new(rows: usize, cols: usize, pixels: Vec<f64>, looks: f64) -> Result<Self> {
        if rows == 0 {
            return Err(Error::domain("image strip needs at least one row"));
        }
        if cols < 2 * MIN_SEGMENT + 1 {
            return Err(Error::domain(format!("image strip needs at least 7 columns, got {cols}")));
        }
        if pixels.len() != rows * cols {
            return Err(Error::domain(format!(
                "expected {} pixels for {rows}x{cols}, got {}",
                rows * cols,
                pixels.len()
            )));
        }
        if let Some(p) = pixels.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::domain(format!("pixel value {p} is not a nonnegative finite number")));
        }
        if !(looks.is_finite() && looks >= 1.0) {
            return Err(Error::domain(format!("looks must be >= 1, got {looks}")));
        }
        Ok(Self { rows, cols, pixels, looks })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn looks(&self) -> f64 {
        self.looks
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.pixels[i * self.cols..(i + 1) * self.cols]
    }

    /// Candidate split columns `3..=cols-3`.
    pub fn splits(&self) -> std::ops::RangeInclusive<usize> {
        MIN_SEGMENT..=self.cols - MIN_SEGMENT
    }
}

/// Replacement for zero-valued pixels, which lie outside the model support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ZeroFloor {
    /// Half the smallest positive value in the row.
    #[default]
    HalfRowMinimum,
    Fixed(f64),
}

/// How equal p-values across splits are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    /// Leftmost minimizing split.
    #[default]
    SmallestK,
    /// Among minimizing splits, the one with the largest observed statistic
    /// (then leftmost). Useful when many splits share `p = 0`.
    LargestStatistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeConfig {
    pub permutation: PermutationConfig,
    pub zero_floor: ZeroFloor,
    pub tie_break: TieBreak,
    /// Fit box for every split; `None` uses the default around each row's mean.
    pub bounds: Option<FeasibilityBox>,
}

impl EdgeConfig {
    pub fn new(kind: StatisticKind, perm: usize, seed: u64) -> Self {
        Self {
            permutation: PermutationConfig { kind, perm, seed, ..PermutationConfig::default() },
            zero_floor: ZeroFloor::default(),
            tie_break: TieBreak::default(),
            bounds: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitDiagnostics {
    pub k: usize,
    pub p_value: f64,
    /// Observed statistic; absent when the split could not be fitted.
    pub observed: Option<f64>,
    pub left: Option<(f64, f64)>,
    pub right: Option<(f64, f64)>,
    pub skipped: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowEdge {
    pub row: usize,
    /// Absent when the row is degenerate.
    pub col_hat: Option<usize>,
    pub min_p: f64,
    pub p_profile: Vec<(usize, f64)>,
    pub splits: Vec<SplitDiagnostics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<Error>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeResult {
    pub statistic: StatisticKind,
    pub cols: usize,
    pub rows: Vec<RowEdge>,
}

impl EdgeResult {
    pub fn col_hats(&self) -> Vec<Option<usize>> {
        self.rows.iter().map(|r| r.col_hat).collect()
    }
}

/// Row values with zeros replaced by the configured floor.
pub fn clip_zeros(row: &[f64], floor: ZeroFloor) -> Option<Vec<f64>> {
    let fill = match floor {
        ZeroFloor::Fixed(v) => v,
        ZeroFloor::HalfRowMinimum => 0.5 * row.iter().copied().filter(|&v| v > 0.0).reduce(f64::min)?,
    };
    if !(fill > 0.0 && fill.is_finite()) {
        return None;
    }
    Some(row.iter().map(|&v| if v > 0.0 { v } else { fill }).collect())
}

fn fit_split(left: &[f64], right: &[f64], cfg: &FitConfig) -> Result<((f64, f64), (f64, f64))> {
    let a = fit_values(left, cfg)?.require_feasible()?;
    let b = fit_values(right, cfg)?.require_feasible()?;
    Ok(((a.alpha, a.gamma), (b.alpha, b.gamma)))
}

fn is_split_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::FitFailure(_) | Error::NonConvergence { .. } | Error::DegenerateSample { .. } | Error::DegenerateStatistic
    )
}

fn analyze_split(values: &[f64], k: usize, seed: u64, looks: f64, cfg: &EdgeConfig) -> Result<SplitDiagnostics> {
    let (left, right) = values.split_at(k);
    let failed = |e: &Error| SplitDiagnostics {
        k,
        p_value: 1.0,
        observed: None,
        left: None,
        right: None,
        skipped: 0,
        failure: Some(e.to_string()),
    };
    let bounds = match cfg.bounds {
        Some(b) => b,
        None => FeasibilityBox::default_for_mean(values.iter().sum::<f64>() / values.len() as f64)?,
    };
    let mut fit_cfg = FitConfig::both(looks, bounds);
    fit_cfg.gradient = cfg.permutation.gradient;
    let (fit_left, fit_right) = match fit_split(left, right, &fit_cfg) {
        Ok(f) => f,
        Err(e) if is_split_failure(&e) => return Ok(failed(&e)),
        Err(e) => return Err(e),
    };
    let pcfg = PermutationConfig { seed, bounds: Some(bounds), ..cfg.permutation };
    let kind = cfg.permutation.kind;
    let metric = cfg.permutation.metric_alpha;
    let (z1, z2) = (Sample::new(left.to_vec())?, Sample::new(right.to_vec())?);
    let outcome = perm::permutation_test_with(&z1, &z2, looks, &pcfg, &[kind], |a, b, m, n| {
        Ok(vec![crate::stats::statistic(kind, a, b, m, n, looks, metric)?])
    });
    match outcome {
        Ok(mut rs) => {
            let r = rs.remove(0);
            Ok(SplitDiagnostics {
                k,
                p_value: r.p_value,
                observed: Some(r.observed),
                left: Some(fit_left),
                right: Some(fit_right),
                skipped: r.skipped,
                failure: None,
            })
        }
        Err(e) if is_split_failure(&e) && cfg.permutation.on_fit_failure != perm::OnFitFailure::Abort => Ok(failed(&e)),
        Err(e) => Err(e),
    }
}

fn select(splits: &[SplitDiagnostics], tie: TieBreak) -> Option<&SplitDiagnostics> {
    let ok = splits.iter().filter(|s| s.observed.is_some());
    let min_p = ok.clone().map(|s| s.p_value).reduce(f64::min)?;
    let mut best = ok.filter(|s| s.p_value == min_p);
    match tie {
        TieBreak::SmallestK => best.next(),
        TieBreak::LargestStatistic => best.fold(None, |acc: Option<&SplitDiagnostics>, s| match acc {
            Some(a) if a.observed >= s.observed => Some(a),
            _ => Some(s),
        }),
    }
}

/// Detect the transition column of one row of values.
pub fn detect_row(values: &[f64], row: usize, looks: f64, cfg: &EdgeConfig) -> Result<RowEdge> {
    let degenerate = || RowEdge {
        row,
        col_hat: None,
        min_p: 1.0,
        p_profile: vec![],
        splits: vec![],
        error: Some(Error::RowDegenerate { row }),
    };
    let Some(values) = clip_zeros(values, cfg.zero_floor) else { return Ok(degenerate()) };
    let n = values.len();
    let splits: Vec<SplitDiagnostics> = (MIN_SEGMENT..=n - MIN_SEGMENT)
        .into_par_iter()
        .map(|k| analyze_split(&values, k, rng::derive_path(cfg.permutation.seed, &[row as u64, k as u64]), looks, cfg))
        .collect::<Result<_>>()?;
    let Some(best) = select(&splits, cfg.tie_break) else {
        return Ok(RowEdge { splits, ..degenerate() });
    };
    Ok(RowEdge {
        row,
        col_hat: Some(best.k),
        min_p: best.p_value,
        p_profile: splits.iter().map(|s| (s.k, s.p_value)).collect(),
        splits,
        error: None,
    })
}

/// Run the detector on every row; rows are independent and processed in parallel.
pub fn detect_edges(strip: &ImageStrip, cfg: &EdgeConfig) -> Result<EdgeResult> {
    cfg.permutation.validate()?;
    let rows = (0..strip.rows())
        .into_par_iter()
        .map(|i| detect_row(strip.row(i), i, strip.looks(), cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(EdgeResult { statistic: cfg.permutation.kind, cols: strip.cols(), rows })
}
