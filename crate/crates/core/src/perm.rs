//! Random-permutation calibration for statistics without a known null law.
//!
//! The pooled sample is reshuffled `perm` times, split back into groups of the
//! original sizes, refitted, and the statistic recomputed. The p-value is the
//! fraction of permuted statistics at least as large as the observed one, with
//! no `+1` correction, so it can be exactly zero.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mle::{fit_values, FeasibilityBox, FitConfig, FitResult};
use crate::model::Sample;
use crate::optim::GradientMode;
use crate::rng;
use crate::stats::{self, MetricAlpha, StatisticKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum OnFitFailure {
    /// Drop the replicate and shrink the denominator.
    #[default]
    Skip,
    /// Reshuffle once, then skip.
    Retry,
    /// Fail the whole test.
    Abort,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationConfig {
    pub perm: usize,
    pub eta: f64,
    pub seed: u64,
    pub kind: StatisticKind,
    pub on_fit_failure: OnFitFailure,
    pub metric_alpha: MetricAlpha,
    /// Acceptance box for every fit; `None` uses the observed-data default
    /// around the pooled mean.
    pub bounds: Option<FeasibilityBox>,
    pub gradient: GradientMode,
}

impl Default for PermutationConfig {
    fn default() -> Self {
        Self {
            perm: 1000,
            eta: 0.05,
            seed: 0,
            kind: StatisticKind::T1,
            on_fit_failure: OnFitFailure::Skip,
            metric_alpha: MetricAlpha::PooledMean,
            bounds: None,
            gradient: GradientMode::CentralDifference,
        }
    }
}

impl PermutationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.perm == 0 {
            return Err(Error::InvalidConfig("perm must be at least 1".into()));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::InvalidConfig(format!("eta must lie in (0, 1), got {}", self.eta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    pub statistic: StatisticKind,
    pub observed: f64,
    /// Statistics of the successful replicates, in replicate order.
    pub permuted: Vec<f64>,
    pub p_value: f64,
    pub rejected: bool,
    pub skipped: usize,
}

impl PermutationResult {
    pub fn effective(&self) -> usize {
        self.permuted.len()
    }
}

/// Shuffle the pooled values uniformly and split into the first `m` and the rest.
pub fn shuffle_split<R: Rng + ?Sized>(pooled: &[f64], m: usize, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let mut v = pooled.to_vec();
    v.shuffle(rng);
    let tail = v.split_off(m);
    (v, tail)
}

/// Fits of both groups under the two-parameter regime.
fn fit_pair(x: &[f64], y: &[f64], cfg: &FitConfig) -> Result<(FitResult, FitResult)> {
    let a = fit_values(x, cfg)?.require_feasible()?;
    let b = fit_values(y, cfg)?.require_feasible()?;
    Ok((a, b))
}

/// General engine: `stat` maps a pair of feasible fits and their sizes to one
/// value per reported statistic.
pub fn permutation_test_with<S>(
    z1: &Sample,
    z2: &Sample,
    looks: f64,
    cfg: &PermutationConfig,
    kinds: &[StatisticKind],
    stat: S,
) -> Result<Vec<PermutationResult>>
where
    S: Fn(&FitResult, &FitResult, usize, usize) -> Result<Vec<f64>> + Sync,
{
    cfg.validate()?;
    let (m, n) = (z1.len(), z2.len());
    if m < 3 || n < 3 {
        return Err(Error::domain(format!("permutation test needs groups of at least 3, got {m} and {n}")));
    }
    let mut pooled = Vec::with_capacity(m + n);
    pooled.extend_from_slice(z1.values());
    pooled.extend_from_slice(z2.values());
    let mean = pooled.iter().sum::<f64>() / pooled.len() as f64;
    let bounds = match cfg.bounds {
        Some(b) => b,
        None => FeasibilityBox::default_for_mean(mean)?,
    };
    let mut fit_cfg = FitConfig::both(looks, bounds);
    fit_cfg.gradient = cfg.gradient;

    let (f1, f2) = fit_pair(z1.values(), z2.values(), &fit_cfg)?;
    let observed = stat(&f1, &f2, m, n)?;
    if observed.len() != kinds.len() {
        return Err(Error::InvalidConfig("statistic arity does not match the requested kinds".into()));
    }

    let attempts = if cfg.on_fit_failure == OnFitFailure::Retry { 2 } else { 1 };
    let replicates: Vec<Result<Option<Vec<f64>>>> = (0..cfg.perm as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng::stream_at(cfg.seed, &[k]);
            let mut last_err = None;
            for _ in 0..attempts {
                let (x, y) = shuffle_split(&pooled, m, &mut rng);
                match fit_pair(&x, &y, &fit_cfg).and_then(|(a, b)| stat(&a, &b, m, n)) {
                    Ok(v) => return Ok(Some(v)),
                    Err(e) => last_err = Some(e),
                }
            }
            match cfg.on_fit_failure {
                OnFitFailure::Abort => Err(last_err.unwrap()),
                _ => Ok(None),
            }
        })
        .collect();

    let mut permuted: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.perm); kinds.len()];
    let mut skipped = 0;
    for r in replicates {
        match r? {
            Some(v) => {
                for (dst, x) in permuted.iter_mut().zip(v) {
                    dst.push(x);
                }
            }
            None => skipped += 1,
        }
    }
    let effective = cfg.perm - skipped;
    if effective == 0 {
        return Err(Error::FitFailure("every permutation replicate failed to fit".into()));
    }

    Ok(kinds
        .iter()
        .zip(observed)
        .zip(permuted)
        .map(|((&kind, obs), perms)| {
            let hits = perms.iter().filter(|&&t| t >= obs).count();
            let p_value = hits as f64 / effective as f64;
            PermutationResult {
                statistic: kind,
                observed: obs,
                permuted: perms,
                p_value,
                rejected: p_value < cfg.eta,
                skipped,
            }
        })
        .collect())
}

/// Permutation test for several statistics sharing the same shuffles and fits.
pub fn permutation_test_multi(
    z1: &Sample,
    z2: &Sample,
    looks: f64,
    cfg: &PermutationConfig,
    kinds: &[StatisticKind],
) -> Result<Vec<PermutationResult>> {
    let metric = cfg.metric_alpha;
    permutation_test_with(z1, z2, looks, cfg, kinds, |a, b, m, n| {
        let (t_a, t_g) = stats::components(a, b, m, n, looks, metric)?;
        kinds.iter().map(|&k| stats::combine(k, t_a, t_g)).collect()
    })
}

/// Permutation test for `cfg.kind`.
pub fn permutation_test(z1: &Sample, z2: &Sample, looks: f64, cfg: &PermutationConfig) -> Result<PermutationResult> {
    Ok(permutation_test_multi(z1, z2, looks, cfg, &[cfg.kind])?.remove(0))
}
