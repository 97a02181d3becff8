//! Monte Carlo harness: estimator studies, empirical test sizes, joint
//! dependence of the two-parameter estimates.
//!
//! Every replicate draws from a stream keyed by its cell parameters and
//! replicate index, never by grid position or worker, so reports do not depend
//! on execution order or thread count.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mle::{fit_values, FeasibilityBox, FitConfig, FitResult, Regime};
use crate::model::{self, G0Params};
use crate::perm::{self, OnFitFailure, PermutationConfig};
use crate::rng;
use crate::stats::{self, MetricAlpha, StatisticKind};
use crate::summary::{self, Histogram, Histogram2d};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReplicationRule {
    /// `R` replications in every cell.
    Fixed(usize),
    /// `⌊R_max / n⌋` replications for sample size `n`.
    Budget(usize),
}

impl ReplicationRule {
    pub fn replications(&self, n: usize) -> usize {
        match *self {
            ReplicationRule::Fixed(r) => r,
            ReplicationRule::Budget(r_max) => r_max / n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GammaRule {
    /// `γ = −α − 1`, giving unit mean.
    UnitMean,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Study {
    Estimator,
    Size,
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Full replication budget (hours on one core).
    Full,
    /// Same structure at roughly 1% of the budget (minutes).
    Quick,
}

fn default_eta() -> f64 {
    0.05
}
fn default_perm() -> usize {
    1000
}
fn default_box_factor() -> f64 {
    15.0
}
fn default_thresholds() -> Vec<f64> {
    vec![0.10, 0.11, 0.12, 0.13]
}
fn default_gamma() -> GammaRule {
    GammaRule::UnitMean
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub study: Study,
    pub alphas: Vec<f64>,
    pub looks_set: Vec<f64>,
    pub sample_sizes: Vec<usize>,
    pub replication_rule: ReplicationRule,
    pub seed: u64,
    pub regime: Regime,
    #[serde(default)]
    pub statistics: Vec<StatisticKind>,
    #[serde(default = "default_gamma")]
    pub gamma: GammaRule,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_perm")]
    pub perm: usize,
    /// Feasibility box `[f·α, 0) × (0, f·γ]` for two-parameter fits.
    #[serde(default = "default_box_factor")]
    pub box_factor: f64,
    /// Error thresholds `τ` for `P(|θ̂ − θ| > τ)`.
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.alphas.is_empty() || self.looks_set.is_empty() || self.sample_sizes.is_empty() {
            return bad("plan needs at least one alpha, looks value and sample size".into());
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a < 0.0)) {
            return bad(format!("alpha {a} is not negative"));
        }
        if let Some(n) = self.sample_sizes.iter().find(|n| **n < 3) {
            return bad(format!("sample size {n} is below 3"));
        }
        for &n in &self.sample_sizes {
            if self.replication_rule.replications(n) == 0 {
                return bad(format!("replication rule yields R = 0 at n = {n}"));
            }
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return bad(format!("eta must lie in (0, 1), got {}", self.eta));
        }
        for &a in &self.alphas {
            for &l in &self.looks_set {
                self.params(a, l)?;
            }
        }
        if self.study == Study::Size {
            if self.statistics.is_empty() {
                return bad("size study needs at least one statistic".into());
            }
            for &k in &self.statistics {
                let ok = match self.regime {
                    Regime::AlphaOnly => k == StatisticKind::TAlpha,
                    Regime::GammaOnly => k == StatisticKind::TGamma,
                    Regime::Both => true,
                };
                if !ok {
                    return bad(format!("statistic {k} is not defined under regime {:?}", self.regime));
                }
            }
            if self.regime == Regime::Both && self.perm == 0 {
                return bad("perm must be at least 1".into());
            }
        }
        if self.study == Study::Joint && self.regime != Regime::Both {
            return bad("joint dependence study needs regime Both".into());
        }
        Ok(())
    }

    pub fn params(&self, alpha: f64, looks: f64) -> Result<G0Params> {
        let gamma = match self.gamma {
            GammaRule::UnitMean => model::unit_mean_gamma(alpha)?,
            GammaRule::Fixed(g) => g,
        };
        G0Params::new(alpha, gamma, looks)
    }

    /// Planned `Σ n·R(n)` over all cells.
    pub fn budget(&self) -> usize {
        let per_grid: usize = self.sample_sizes.iter().map(|&n| n * self.replication_rule.replications(n)).sum();
        per_grid * self.alphas.len() * self.looks_set.len()
    }

    fn cell_fit_config(&self, p: &G0Params) -> Result<FitConfig> {
        Ok(match self.regime {
            Regime::AlphaOnly => FitConfig::alpha_only(p.gamma(), p.looks(), FeasibilityBox::unbounded()),
            Regime::GammaOnly => FitConfig::gamma_only(p.alpha(), p.looks(), FeasibilityBox::unbounded()),
            Regime::Both => FitConfig::both(
                p.looks(),
                FeasibilityBox::around_truth(p.alpha(), p.gamma(), self.box_factor)?,
            ),
        })
    }

    /// Rejection-rate grid of the two-parameter tests.
    pub fn table_one(preset: Preset) -> Self {
        let (reps, perm) = match preset {
            Preset::Full => (500, 1000),
            Preset::Quick => (50, 200),
        };
        Self {
            study: Study::Size,
            alphas: vec![-1.5, -4.0],
            looks_set: vec![1.0, 2.0],
            sample_sizes: vec![50, 550, 5000],
            replication_rule: ReplicationRule::Fixed(reps),
            seed: 2019,
            regime: Regime::Both,
            statistics: StatisticKind::COMPOSITE.to_vec(),
            gamma: GammaRule::UnitMean,
            eta: 0.05,
            perm,
            box_factor: 15.0,
            thresholds: default_thresholds(),
        }
    }

    /// Two-parameter estimator densities over the full grid with `R = ⌊R_max/n⌋`.
    pub fn two_parameter_estimators(preset: Preset) -> Self {
        let r_max = match preset {
            Preset::Full => 5_000_000,
            Preset::Quick => 50_000,
        };
        let mut sizes: Vec<usize> = (0..10).map(|i| 50 + 100 * i).collect();
        sizes.push(5000);
        Self {
            study: Study::Estimator,
            alphas: vec![-1.5, -3.0, -4.0],
            looks_set: vec![1.0, 2.0],
            sample_sizes: sizes,
            replication_rule: ReplicationRule::Budget(r_max),
            seed: 2019,
            regime: Regime::Both,
            statistics: vec![],
            gamma: GammaRule::UnitMean,
            eta: 0.05,
            perm: 1000,
            box_factor: 15.0,
            thresholds: default_thresholds(),
        }
    }

    /// One-parameter estimator study at `α = −1.5`, `γ = 1`, `L = 1`.
    pub fn one_parameter_estimators(regime: Regime, preset: Preset) -> Self {
        let reps = match preset {
            Preset::Full => 5000,
            Preset::Quick => 500,
        };
        Self {
            study: Study::Estimator,
            alphas: vec![-1.5],
            looks_set: vec![1.0],
            sample_sizes: (1..=20).map(|i| 50 * i).collect(),
            replication_rule: ReplicationRule::Fixed(reps),
            seed: 2019,
            regime,
            statistics: vec![],
            gamma: GammaRule::Fixed(1.0),
            eta: 0.05,
            perm: 1000,
            box_factor: 15.0,
            thresholds: default_thresholds(),
        }
    }

    /// Empirical size of `T_α` (regime `AlphaOnly`) or `T_γ` (`GammaOnly`).
    pub fn one_parameter_sizes(regime: Regime, preset: Preset) -> Self {
        let kind = if regime == Regime::GammaOnly { StatisticKind::TGamma } else { StatisticKind::TAlpha };
        Self {
            study: Study::Size,
            statistics: vec![kind],
            ..Self::one_parameter_estimators(regime, preset)
        }
    }

    /// Joint `(α̂, γ̂)` dependence at `n = 50`.
    pub fn joint_dependence(preset: Preset) -> Self {
        let reps = match preset {
            Preset::Full => 100_000,
            Preset::Quick => 2000,
        };
        Self {
            study: Study::Joint,
            alphas: vec![-1.5, -3.0, -4.0],
            looks_set: vec![1.0, 2.0],
            sample_sizes: vec![50],
            replication_rule: ReplicationRule::Fixed(reps),
            seed: 2019,
            regime: Regime::Both,
            statistics: vec![],
            gamma: GammaRule::UnitMean,
            eta: 0.05,
            perm: 1000,
            box_factor: 15.0,
            thresholds: default_thresholds(),
        }
    }
}

/// Summary of one estimated parameter in one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub parameter: String,
    pub truth: f64,
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub sd: f64,
    /// `(τ, P(|θ̂ − θ| > τ))`.
    pub error_proportions: Vec<(f64, f64)>,
    pub histogram: Histogram,
}

/// Rejection behaviour of one statistic in one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeSummary {
    pub statistic: StatisticKind,
    pub calibration: stats::Calibration,
    pub effective: usize,
    pub rejections: usize,
    pub empirical_size: f64,
    /// `|size − η| / η`.
    pub relative_deviation: f64,
    /// Quantiles `(p, value)` of the observed statistic.
    pub quantiles: Vec<(f64, f64)>,
    /// Permutation p-values (empty for χ² calibration).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub p_values: Vec<f64>,
    /// Observed statistic values, replicate order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSummary {
    pub corr_alpha_gamma: f64,
    pub corr_t_alpha_t_gamma: f64,
    /// `corr(α̂₁, γ̂₂)` across independent samples of each pair.
    pub corr_control: f64,
    pub points: usize,
    pub estimates: Histogram2d,
    pub statistics: Histogram2d,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub alpha: f64,
    pub gamma: f64,
    pub looks: f64,
    pub n: usize,
    pub planned: usize,
    pub feasible: usize,
    pub infeasible: usize,
    pub failed: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub estimators: Vec<EstimatorSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sizes: Vec<SizeSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint: Option<JointSummary>,
}

impl CellReport {
    pub fn estimator(&self, parameter: &str) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|e| e.parameter == parameter)
    }

    pub fn size(&self, kind: StatisticKind) -> Option<&SizeSummary> {
        self.sizes.iter().find(|s| s.statistic == kind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub plan: ExperimentPlan,
    pub cells: Vec<CellReport>,
}

impl ExperimentReport {
    pub fn cell(&self, alpha: f64, looks: f64, n: usize) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.alpha == alpha && c.looks == looks && c.n == n)
    }
}

enum Replicate<T> {
    Feasible(T),
    Infeasible,
    Failed,
}

fn classify<T>(r: Result<Option<T>>) -> Replicate<T> {
    match r {
        Ok(Some(t)) => Replicate::Feasible(t),
        Ok(None) => Replicate::Infeasible,
        Err(_) => Replicate::Failed,
    }
}

struct Cell {
    params: G0Params,
    n: usize,
    planned: usize,
    key: [u64; 3],
}

fn cells(plan: &ExperimentPlan) -> Result<Vec<Cell>> {
    let mut out = Vec::new();
    for &looks in &plan.looks_set {
        for &alpha in &plan.alphas {
            let params = plan.params(alpha, looks)?;
            for &n in &plan.sample_sizes {
                out.push(Cell {
                    params,
                    n,
                    planned: plan.replication_rule.replications(n),
                    key: [looks.to_bits(), alpha.to_bits(), n as u64],
                });
            }
        }
    }
    Ok(out)
}

fn replicate_seed(plan: &ExperimentPlan, cell: &Cell, i: usize, stream: u64) -> u64 {
    rng::derive_path(plan.seed, &[cell.key[0], cell.key[1], cell.key[2], i as u64, stream])
}

fn draw_pair(plan: &ExperimentPlan, cell: &Cell, i: usize) -> Result<(model::Sample, model::Sample)> {
    let a = model::sample(&cell.params, cell.n, replicate_seed(plan, cell, i, 0))?;
    let b = model::sample(&cell.params, cell.n, replicate_seed(plan, cell, i, 1))?;
    Ok((a, b))
}

fn fit_feasible(values: &[f64], cfg: &FitConfig) -> Result<Option<FitResult>> {
    let f = fit_values(values, cfg)?;
    Ok(if f.converged && f.feasible { Some(f) } else { None })
}

fn fit_both_feasible(
    a: &model::Sample,
    b: &model::Sample,
    cfg: &FitConfig,
) -> Result<Option<(FitResult, FitResult)>> {
    let Some(fa) = fit_feasible(a.values(), cfg)? else { return Ok(None) };
    let Some(fb) = fit_feasible(b.values(), cfg)? else { return Ok(None) };
    Ok(Some((fa, fb)))
}

fn tally<T>(reps: Vec<Replicate<T>>) -> (Vec<T>, usize, usize) {
    let mut ok = Vec::new();
    let (mut infeasible, mut failed) = (0, 0);
    for r in reps {
        match r {
            Replicate::Feasible(t) => ok.push(t),
            Replicate::Infeasible => infeasible += 1,
            Replicate::Failed => failed += 1,
        }
    }
    (ok, infeasible, failed)
}

fn summarize_estimates(parameter: &str, truth: f64, values: &[f64], thresholds: &[f64]) -> EstimatorSummary {
    let s = summary::sorted(values);
    let count = s.len();
    let (q1, q3) = (summary::quantile_sorted(&s, 0.25), summary::quantile_sorted(&s, 0.75));
    let error_proportions = thresholds
        .iter()
        .map(|&tau| {
            let over = values.iter().filter(|v| (*v - truth).abs() > tau).count();
            (tau, if count > 0 { over as f64 / count as f64 } else { f64::NAN })
        })
        .collect();
    EstimatorSummary {
        parameter: parameter.to_string(),
        truth,
        count,
        mean: if count > 0 { summary::mean(values) } else { f64::NAN },
        median: summary::quantile_sorted(&s, 0.5),
        q1,
        q3,
        iqr: q3 - q1,
        sd: if count > 1 { summary::std_dev(values) } else { f64::NAN },
        error_proportions,
        histogram: summary::histogram_fd(values),
    }
}

const REPORTED_QUANTILES: [f64; 5] = [0.25, 0.5, 0.75, 0.9, 0.95];

fn stat_quantiles(values: &[f64]) -> Vec<(f64, f64)> {
    let s = summary::sorted(values);
    REPORTED_QUANTILES.iter().map(|&p| (p, summary::quantile_sorted(&s, p))).collect()
}

/// Estimates for each replicate pair; records densities and error proportions.
pub fn run_estimator_study(plan: &ExperimentPlan) -> Result<ExperimentReport> {
    plan.validate()?;
    let mut out = Vec::new();
    for cell in cells(plan)? {
        let cfg = plan.cell_fit_config(&cell.params)?;
        let reps: Vec<Replicate<(FitResult, FitResult)>> = (0..cell.planned)
            .into_par_iter()
            .map(|i| {
                classify(draw_pair(plan, &cell, i).and_then(|(a, b)| fit_both_feasible(&a, &b, &cfg)))
            })
            .collect();
        let (fits, infeasible, failed) = tally(reps);
        let mut estimators = Vec::new();
        let pool = |f: fn(&FitResult) -> f64| -> Vec<f64> { fits.iter().flat_map(|(a, b)| [f(a), f(b)]).collect() };
        if plan.regime != Regime::GammaOnly {
            estimators.push(summarize_estimates("alpha", cell.params.alpha(), &pool(|f| f.alpha), &plan.thresholds));
        }
        if plan.regime != Regime::AlphaOnly {
            estimators.push(summarize_estimates("gamma", cell.params.gamma(), &pool(|f| f.gamma), &plan.thresholds));
        }
        log::info!(
            "estimator cell alpha={} looks={} n={}: {} feasible / {} planned",
            cell.params.alpha(),
            cell.params.looks(),
            cell.n,
            fits.len(),
            cell.planned
        );
        out.push(CellReport {
            alpha: cell.params.alpha(),
            gamma: cell.params.gamma(),
            looks: cell.params.looks(),
            n: cell.n,
            planned: cell.planned,
            feasible: fits.len(),
            infeasible,
            failed,
            estimators,
            sizes: vec![],
            joint: None,
        });
    }
    Ok(ExperimentReport { plan: plan.clone(), cells: out })
}

/// Per-replicate observation for the size study: statistic values and their p-values.
struct SizeObs {
    values: Vec<f64>,
    p_values: Vec<f64>,
}

/// Empirical rejection rates under the null hypothesis.
///
/// One-parameter regimes use the χ²₁ reference; the two-parameter regime calibrates
/// every requested statistic with one shared permutation run per replicate.
pub fn run_size_study(plan: &ExperimentPlan) -> Result<ExperimentReport> {
    plan.validate()?;
    let kinds = plan.statistics.clone();
    let calibration = if plan.regime == Regime::Both {
        stats::Calibration::Permutation
    } else {
        stats::Calibration::Chi2Asymptotic
    };
    let mut out = Vec::new();
    for cell in cells(plan)? {
        let cfg = plan.cell_fit_config(&cell.params)?;
        let looks = cell.params.looks();
        let reps: Vec<Replicate<SizeObs>> = (0..cell.planned)
            .into_par_iter()
            .map(|i| {
                let run = || -> Result<Option<SizeObs>> {
                    let (a, b) = draw_pair(plan, &cell, i)?;
                    match plan.regime {
                        Regime::Both => {
                            let pcfg = PermutationConfig {
                                perm: plan.perm,
                                eta: plan.eta,
                                seed: replicate_seed(plan, &cell, i, 2),
                                kind: kinds[0],
                                on_fit_failure: OnFitFailure::Skip,
                                metric_alpha: MetricAlpha::PooledMean,
                                bounds: Some(cfg.bounds),
                                gradient: cfg.gradient,
                            };
                            match perm::permutation_test_multi(&a, &b, looks, &pcfg, &kinds) {
                                Ok(rs) => Ok(Some(SizeObs {
                                    values: rs.iter().map(|r| r.observed).collect(),
                                    p_values: rs.iter().map(|r| r.p_value).collect(),
                                })),
                                // Observed fits outside the box: replicate excluded.
                                Err(Error::FitFailure(_)) => Ok(None),
                                Err(e) => Err(e),
                            }
                        }
                        _ => {
                            let Some((fa, fb)) = fit_both_feasible(&a, &b, &cfg)? else { return Ok(None) };
                            let values: Vec<f64> = kinds
                                .iter()
                                .map(|&k| stats::statistic(k, &fa, &fb, a.len(), b.len(), looks, MetricAlpha::PooledMean))
                                .collect::<Result<_>>()?;
                            let p_values = values.iter().map(|&t| stats::p_value_chi2(t)).collect::<Result<_>>()?;
                            Ok(Some(SizeObs { values, p_values }))
                        }
                    }
                };
                classify(run())
            })
            .collect();
        let (obs, infeasible, failed) = tally(reps);
        let sizes = kinds
            .iter()
            .enumerate()
            .map(|(j, &kind)| {
                let values: Vec<f64> = obs.iter().map(|o| o.values[j]).collect();
                let p_values: Vec<f64> = obs.iter().map(|o| o.p_values[j]).collect();
                let rejections = p_values.iter().filter(|&&p| p < plan.eta).count();
                let effective = obs.len();
                let empirical_size = if effective > 0 { rejections as f64 / effective as f64 } else { f64::NAN };
                SizeSummary {
                    statistic: kind,
                    calibration,
                    effective,
                    rejections,
                    empirical_size,
                    relative_deviation: (empirical_size - plan.eta).abs() / plan.eta,
                    quantiles: stat_quantiles(&values),
                    p_values: if calibration == stats::Calibration::Permutation { p_values } else { vec![] },
                    values,
                }
            })
            .collect();
        log::info!(
            "size cell alpha={} looks={} n={}: {} usable / {} planned",
            cell.params.alpha(),
            looks,
            cell.n,
            obs.len(),
            cell.planned
        );
        out.push(CellReport {
            alpha: cell.params.alpha(),
            gamma: cell.params.gamma(),
            looks,
            n: cell.n,
            planned: cell.planned,
            feasible: obs.len(),
            infeasible,
            failed,
            estimators: vec![],
            sizes,
            joint: None,
        });
    }
    Ok(ExperimentReport { plan: plan.clone(), cells: out })
}

/// Correlation of `(α̂, γ̂)` and of `(T_α, T_γ)` under the two-parameter regime.
pub fn run_joint_dependence_study(plan: &ExperimentPlan) -> Result<ExperimentReport> {
    plan.validate()?;
    let mut out = Vec::new();
    for cell in cells(plan)? {
        let cfg = plan.cell_fit_config(&cell.params)?;
        let looks = cell.params.looks();
        let reps: Vec<Replicate<(FitResult, FitResult, f64, f64)>> = (0..cell.planned)
            .into_par_iter()
            .map(|i| {
                classify(draw_pair(plan, &cell, i).and_then(|(a, b)| {
                    let Some((fa, fb)) = fit_both_feasible(&a, &b, &cfg)? else { return Ok(None) };
                    let (ta, tg) = stats::components(&fa, &fb, a.len(), b.len(), looks, MetricAlpha::PooledMean)?;
                    Ok(Some((fa, fb, ta, tg)))
                }))
            })
            .collect();
        let (rows, infeasible, failed) = tally(reps);
        let a1: Vec<f64> = rows.iter().map(|r| r.0.alpha).collect();
        let g1: Vec<f64> = rows.iter().map(|r| r.0.gamma).collect();
        let g2: Vec<f64> = rows.iter().map(|r| r.1.gamma).collect();
        let ta: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let tg: Vec<f64> = rows.iter().map(|r| r.3).collect();
        let all_a: Vec<f64> = rows.iter().flat_map(|r| [r.0.alpha, r.1.alpha]).collect();
        let all_g: Vec<f64> = rows.iter().flat_map(|r| [r.0.gamma, r.1.gamma]).collect();
        let joint = JointSummary {
            corr_alpha_gamma: summary::pearson(&a1, &g1),
            corr_t_alpha_t_gamma: summary::pearson(&ta, &tg),
            corr_control: summary::pearson(&a1, &g2),
            points: rows.len(),
            estimates: summary::histogram2d_fd(&all_a, &all_g),
            statistics: summary::histogram2d_fd(&ta, &tg),
        };
        let thresholds = &plan.thresholds;
        out.push(CellReport {
            alpha: cell.params.alpha(),
            gamma: cell.params.gamma(),
            looks,
            n: cell.n,
            planned: cell.planned,
            feasible: rows.len(),
            infeasible,
            failed,
            estimators: vec![
                summarize_estimates("alpha", cell.params.alpha(), &all_a, thresholds),
                summarize_estimates("gamma", cell.params.gamma(), &all_g, thresholds),
            ],
            sizes: vec![],
            joint: Some(joint),
        });
    }
    Ok(ExperimentReport { plan: plan.clone(), cells: out })
}

pub fn run(plan: &ExperimentPlan) -> Result<ExperimentReport> {
    match plan.study {
        Study::Estimator => run_estimator_study(plan),
        Study::Size => run_size_study(plan),
        Study::Joint => run_joint_dependence_study(plan),
    }
}

/// Write plot-ready CSV tables and `report.json` into `dir`; returns the files written.
pub fn write_report(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut emit = |name: &str, body: String| -> Result<()> {
        let p = dir.join(name);
        crate::io::write_atomic(&p, body.as_bytes())?;
        files.push(p);
        Ok(())
    };

    let mut cells = String::from("looks,alpha,gamma,n,planned,feasible,infeasible,failed\n");
    for c in &report.cells {
        cells += &format!(
            "{},{},{},{},{},{},{},{}\n",
            c.looks, c.alpha, c.gamma, c.n, c.planned, c.feasible, c.infeasible, c.failed
        );
    }
    emit("cells.csv", cells)?;

    if report.cells.iter().any(|c| !c.estimators.is_empty()) {
        let mut summary = String::from("looks,alpha,gamma,n,parameter,truth,count,mean,median,q1,q3,iqr,sd\n");
        let mut errors = String::from("looks,alpha,gamma,n,parameter,tau,proportion\n");
        let mut hist = String::from("looks,alpha,gamma,n,parameter,bin_lo,bin_hi,count,density\n");
        for c in &report.cells {
            for e in &c.estimators {
                let head = format!("{},{},{},{},{}", c.looks, c.alpha, c.gamma, c.n, e.parameter);
                summary += &format!(
                    "{head},{},{},{},{},{},{},{},{}\n",
                    e.truth, e.count, e.mean, e.median, e.q1, e.q3, e.iqr, e.sd
                );
                for (tau, p) in &e.error_proportions {
                    errors += &format!("{head},{tau},{p}\n");
                }
                let edges = e.histogram.edges();
                let total = e.histogram.counts.iter().sum::<usize>().max(1) as f64;
                for (i, &k) in e.histogram.counts.iter().enumerate() {
                    let w = e.histogram.width;
                    let density = if w > 0.0 { k as f64 / (total * w) } else { f64::NAN };
                    hist += &format!("{head},{},{},{k},{density}\n", edges[i], edges[i + 1]);
                }
            }
        }
        emit("estimator_summary.csv", summary)?;
        emit("error_proportions.csv", errors)?;
        emit("estimator_histograms.csv", hist)?;
    }

    if report.cells.iter().any(|c| !c.sizes.is_empty()) {
        let mut rates = String::from(
            "looks,alpha,gamma,n,statistic,calibration,effective,rejections,empirical_size,relative_deviation\n",
        );
        let mut quants = String::from("looks,alpha,gamma,n,statistic,p,value\n");
        for c in &report.cells {
            for s in &c.sizes {
                let head = format!("{},{},{},{},{}", c.looks, c.alpha, c.gamma, c.n, s.statistic);
                rates += &format!(
                    "{head},{:?},{},{},{},{}\n",
                    s.calibration, s.effective, s.rejections, s.empirical_size, s.relative_deviation
                );
                for (p, v) in &s.quantiles {
                    quants += &format!("{head},{p},{v}\n");
                }
            }
        }
        emit("rejection_rates.csv", rates)?;
        emit("statistic_quantiles.csv", quants)?;
    }

    if report.cells.iter().any(|c| c.joint.is_some()) {
        let mut corr = String::from("looks,alpha,gamma,n,points,corr_alpha_gamma,corr_t_alpha_t_gamma,corr_control\n");
        let mut grid = String::from("looks,alpha,gamma,n,kind,x_lo,x_hi,y_lo,y_hi,count\n");
        for c in &report.cells {
            let Some(j) = &c.joint else { continue };
            let head = format!("{},{},{},{}", c.looks, c.alpha, c.gamma, c.n);
            corr += &format!(
                "{head},{},{},{},{}\n",
                j.points, j.corr_alpha_gamma, j.corr_t_alpha_t_gamma, j.corr_control
            );
            for (kind, h) in [("estimates", &j.estimates), ("statistics", &j.statistics)] {
                for (i, row) in h.counts.iter().enumerate() {
                    for (k, &count) in row.iter().enumerate() {
                        let x0 = h.x_lo + i as f64 * h.x_width;
                        let y0 = h.y_lo + k as f64 * h.y_width;
                        grid += &format!(
                            "{head},{kind},{x0},{},{y0},{},{count}\n",
                            x0 + h.x_width,
                            y0 + h.y_width
                        );
                    }
                }
            }
        }
        emit("joint_correlation.csv", corr)?;
        emit("joint_histograms.csv", grid)?;
    }

    emit("report.json", serde_json::to_string_pretty(report)?)?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_plan(study: Study, regime: Regime) -> ExperimentPlan {
        ExperimentPlan {
            study,
            alphas: vec![-3.0],
            looks_set: vec![1.0],
            sample_sizes: vec![30, 60],
            replication_rule: ReplicationRule::Fixed(40),
            seed: 5,
            regime,
            statistics: vec![],
            gamma: GammaRule::UnitMean,
            eta: 0.05,
            perm: 20,
            box_factor: 15.0,
            thresholds: default_thresholds(),
        }
    }

    #[test]
    fn budget_rule() {
        let r = ReplicationRule::Budget(5_000_000);
        assert_eq!(r.replications(50), 100_000);
        assert_eq!(r.replications(950), 5263);
        assert_eq!(r.replications(5000), 1000);
        let mut plan = small_plan(Study::Estimator, Regime::Both);
        plan.replication_rule = ReplicationRule::Budget(1000);
        assert_eq!(plan.budget(), 30 * 33 + 60 * 16);
        let report = run(&plan).unwrap();
        let used: usize = report.cells.iter().map(|c| c.n * c.feasible).sum();
        assert!(used <= plan.budget());
    }

    #[test]
    fn validation() {
        let mut p = small_plan(Study::Size, Regime::AlphaOnly);
        assert!(p.validate().is_err(), "size study without statistics");
        p.statistics = vec![StatisticKind::TGamma];
        assert!(p.validate().is_err(), "Tgamma under AlphaOnly");
        p.statistics = vec![StatisticKind::TAlpha];
        assert!(p.validate().is_ok());
        p.sample_sizes = vec![2];
        assert!(p.validate().is_err());
        let mut q = small_plan(Study::Estimator, Regime::Both);
        q.alphas = vec![-0.5];
        assert!(q.validate().is_err(), "unit-mean scale undefined for alpha > -1");
        q.replication_rule = ReplicationRule::Budget(10);
        q.alphas = vec![-2.0];
        assert!(q.validate().is_err(), "R = 0");
    }

    #[test]
    fn totals_and_determinism() {
        let plan = small_plan(Study::Estimator, Regime::Both);
        let a = run(&plan).unwrap();
        for c in &a.cells {
            assert_eq!(c.feasible + c.infeasible + c.failed, c.planned);
        }
        assert_eq!(a, run(&plan).unwrap());
    }

    #[test]
    fn cell_results_do_not_depend_on_grid() {
        let plan = small_plan(Study::Estimator, Regime::Both);
        let mut sub = plan.clone();
        sub.sample_sizes = vec![60];
        let full = run(&plan).unwrap();
        let part = run(&sub).unwrap();
        assert_eq!(full.cell(-3.0, 1.0, 60), part.cell(-3.0, 1.0, 60));
    }

    #[test]
    fn size_study_one_parameter() {
        let mut plan = small_plan(Study::Size, Regime::GammaOnly);
        plan.statistics = vec![StatisticKind::TGamma];
        let r = run(&plan).unwrap();
        let s = r.cells[0].size(StatisticKind::TGamma).unwrap();
        assert_eq!(s.calibration, stats::Calibration::Chi2Asymptotic);
        assert!(s.empirical_size >= 0.0 && s.empirical_size <= 1.0);
        assert_eq!(s.values.len(), s.effective);
    }

    #[test]
    fn size_study_permutation_and_report_files() {
        let mut plan = small_plan(Study::Size, Regime::Both);
        plan.statistics = StatisticKind::COMPOSITE.to_vec();
        plan.replication_rule = ReplicationRule::Fixed(6);
        plan.sample_sizes = vec![30];
        let r = run(&plan).unwrap();
        let c = &r.cells[0];
        assert_eq!(c.sizes.len(), 3);
        assert!(c.sizes.iter().all(|s| s.p_values.len() == s.effective));
        let dir = tempfile::tempdir().unwrap();
        let files = write_report(&r, dir.path()).unwrap();
        let names: Vec<String> = files.iter().map(|f| f.file_name().unwrap().to_string_lossy().into_owned()).collect();
        assert!(names.contains(&"rejection_rates.csv".to_string()));
        let back: ExperimentReport =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
        assert_eq!(back.cells.len(), 1);
    }

    #[test]
    fn joint_study_reports_histograms() {
        let plan = small_plan(Study::Joint, Regime::Both);
        let r = run(&plan).unwrap();
        let j = r.cells[0].joint.as_ref().unwrap();
        assert_eq!(j.points, r.cells[0].feasible);
        assert_eq!(j.estimates.counts.iter().flatten().sum::<usize>(), 2 * j.points);
        let dir = tempfile::tempdir().unwrap();
        write_report(&r, dir.path()).unwrap();
        assert!(dir.path().join("joint_histograms.csv").exists());
    }

    #[test]
    fn plan_json_defaults() {
        let json = r#"{
            "study": "size", "alphas": [-1.5], "looks_set": [1], "sample_sizes": [50],
            "replication_rule": {"Fixed": 10}, "seed": 1, "regime": "Both", "statistics": ["T1"]
        }"#;
        let p: ExperimentPlan = serde_json::from_str(json).unwrap();
        assert_eq!(p.perm, 1000);
        assert_eq!(p.eta, 0.05);
        assert_eq!(p.gamma, GammaRule::UnitMean);
        assert!(p.validate().is_ok());
        assert!(ExperimentPlan::table_one(Preset::Full).validate().is_ok());
        assert!(ExperimentPlan::two_parameter_estimators(Preset::Quick).validate().is_ok());
        assert!(ExperimentPlan::one_parameter_sizes(Regime::GammaOnly, Preset::Quick).validate().is_ok());
        assert!(ExperimentPlan::joint_dependence(Preset::Quick).validate().is_ok());
    }
}
