use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use g0geo::edge::{self, EdgeConfig, TieBreak};
use g0geo::io::{self, SampleFormat, SampleMeta};
use g0geo::mc::{self, ExperimentPlan, Preset};
use g0geo::mle::{self, FeasibilityBox, FitConfig, Regime};
use g0geo::perm::{self, OnFitFailure, PermutationConfig};
use g0geo::stats::{self, Calibration, MetricAlpha, StatisticKind, TestOutcome};
use g0geo::{geodesic, model, G0Params, Sample};

use crate::args::*;
use crate::manifest::{FileDigest, RunManifest, SeedSource};
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(CliError::Usage(msg.into()))
}

/// Collects outputs and writes them, with the manifest, once the command succeeds.
struct Run<'a> {
    cli: &'a Cli,
    manifest: RunManifest,
}

impl<'a> Run<'a> {
    fn resolve_seed(&mut self, seed: Option<u64>) -> Result<u64> {
        let (seed, source) = match seed {
            Some(s) => (s, SeedSource::Flag),
            None if self.cli.ci => return usage("--ci requires an explicit --seed"),
            None => (rand::random::<u64>(), SeedSource::Entropy),
        };
        if source == SeedSource::Entropy {
            log::warn!("no --seed given; using {seed}");
        }
        self.manifest.seed = Some(seed);
        self.manifest.seed_source = Some(source);
        Ok(seed)
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        self.manifest.inputs.push(FileDigest::of(path).map_err(|e| g0geo::Error::Io(format!("{}: {e}", path.display())))?);
        Ok(())
    }

    fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        io::write_atomic(path, bytes)?;
        self.manifest.outputs.push(FileDigest::of(path)?);
        Ok(())
    }

    /// Write to `out` or print to stdout.
    fn emit(&mut self, out: Option<&Path>, body: String) -> Result<()> {
        match out {
            Some(p) => self.write(p, body.as_bytes()),
            None => {
                print!("{body}");
                if !body.ends_with('\n') {
                    println!();
                }
                Ok(())
            }
        }
    }

    fn finish(mut self, default_location: Option<PathBuf>) -> Result<()> {
        self.manifest.finish();
        let location = self.cli.manifest.clone().or(default_location);
        match location {
            Some(path) => io::write_atomic(&path, serde_json::to_string_pretty(&self.manifest)?.as_bytes())?,
            None if self.manifest.seed_source == Some(SeedSource::Entropy) => {
                eprintln!("{}", serde_json::json!({ "seed": self.manifest.seed }));
            }
            None => {}
        }
        Ok(())
    }
}

fn manifest_beside(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn render_json<T: Serialize>(value: &T, format: Format) -> Result<String> {
    match format {
        Format::Json | Format::Text => Ok(serde_json::to_string_pretty(value)? + "\n"),
        Format::Csv => {
            let v = serde_json::to_value(value)?;
            let Value::Object(map) = v else { return usage("result cannot be rendered as CSV") };
            let cell = |v: &Value| match v {
                Value::String(s) => s.clone(),
                Value::Null => String::new(),
                other => other.to_string().replace(',', ";"),
            };
            let header: Vec<&str> = map.keys().map(String::as_str).collect();
            let row: Vec<String> = map.values().map(cell).collect();
            Ok(format!("{}\n{}\n", header.join(","), row.join(",")))
        }
    }
}

fn parse_stat(s: &str) -> Result<StatisticKind> {
    s.parse::<StatisticKind>().map_err(|e| CliError::Usage(e.to_string()))
}

fn build_box(args: &BoxArgs, mean: f64) -> Result<Option<FeasibilityBox>> {
    if args.alpha_lo.is_none() && args.alpha_hi.is_none() && args.gamma_lo.is_none() && args.gamma_hi.is_none() {
        return Ok(None);
    }
    let d = FeasibilityBox::default_for_mean(mean)?;
    Ok(Some(FeasibilityBox::new(
        args.alpha_lo.unwrap_or(d.alpha_lo),
        args.alpha_hi.unwrap_or(d.alpha_hi),
        args.gamma_lo.unwrap_or(d.gamma_lo),
        args.gamma_hi.unwrap_or(d.gamma_hi),
    )?))
}

fn read_sample(run: &mut Run, path: &Path) -> Result<Sample> {
    run.input(path)?;
    Ok(io::read_sample(path)?)
}

pub fn run(cli: &Cli, command_line: Vec<String>, threads: usize) -> Result<()> {
    let name = match &cli.command {
        Command::Sample { .. } => "sample",
        Command::Fit { .. } => "fit",
        Command::Distance { .. } => "distance",
        Command::Test { .. } => "test",
        Command::Mc { .. } => "mc",
        Command::Edges { .. } => "edges",
    };
    let mut run = Run { cli, manifest: RunManifest::begin(command_line, name, threads) };
    match &cli.command {
        Command::Sample { alpha, gamma, looks, n, seed, out } => {
            let params = G0Params::new(*alpha, *gamma, *looks)?;
            let seed = run.resolve_seed(*seed)?;
            let sample = model::sample(&params, *n, seed)?;
            let format = match cli.format.unwrap_or(Format::Csv) {
                Format::Csv => SampleFormat::Csv,
                Format::Text => SampleFormat::Text,
                Format::Json => return usage("sample output is tabular; use --format csv or text"),
            };
            run.emit(out.as_deref(), io::format_sample(&sample, format))?;
            if let Some(path) = out {
                let meta = SampleMeta { params, seed, n: *n };
                run.write(&io::sidecar_path(path), serde_json::to_string_pretty(&meta)?.as_bytes())?;
            }
            run.finish(out.as_deref().map(manifest_beside))
        }

        Command::Fit { input, looks, regime, gamma_known, alpha_known, bounds, out } => {
            let sample = read_sample(&mut run, input)?;
            let cfg = match regime {
                RegimeArg::Both => {
                    let b = match build_box(bounds, sample.mean())? {
                        Some(b) => b,
                        None => FeasibilityBox::default_for_mean(sample.mean())?,
                    };
                    FitConfig::both(*looks, b)
                }
                RegimeArg::Alpha => {
                    let Some(g) = gamma_known else { return usage("--regime alpha needs --gamma-known") };
                    FitConfig::alpha_only(*g, *looks, FeasibilityBox::unbounded())
                }
                RegimeArg::Gamma => {
                    let Some(a) = alpha_known else { return usage("--regime gamma needs --alpha-known") };
                    FitConfig::gamma_only(*a, *looks, FeasibilityBox::unbounded())
                }
            };
            let fit = mle::fit(&sample, &cfg)?;
            if !fit.converged {
                return Err(g0geo::Error::FitFailure("optimizer stalled before convergence".into()).into());
            }
            run.emit(out.as_deref(), render_json(&fit, cli.format.unwrap_or(Format::Json))?)?;
            run.finish(out.as_deref().map(manifest_beside))
        }

        Command::Distance { alpha1, alpha2, gamma1, gamma2, alpha, looks, out } => {
            let d = match (alpha1, alpha2, gamma1, gamma2) {
                (Some(a1), Some(a2), None, None) => geodesic::dist_alpha_detailed(*a1, *a2, *looks)?,
                (None, None, Some(g1), Some(g2)) => {
                    let Some(a) = alpha else { return usage("scale distance needs --alpha") };
                    geodesic::Distance {
                        value: geodesic::dist_gamma(*g1, *g2, *a, *looks)?,
                        branch: geodesic::Branch::ClosedFormScale,
                        looks: *looks,
                    }
                }
                _ => return usage("give either --alpha1 and --alpha2, or --gamma1, --gamma2 and --alpha"),
            };
            #[derive(Serialize)]
            struct Out {
                value: f64,
                branch: geodesic::Branch,
                looks: f64,
            }
            let body = render_json(&Out { value: d.value, branch: d.branch, looks: d.looks }, cli.format.unwrap_or(Format::Json))?;
            run.emit(out.as_deref(), body)?;
            run.finish(out.as_deref().map(manifest_beside))
        }

        Command::Test {
            first,
            second,
            stat,
            looks,
            gamma_known,
            alpha_known,
            calibration,
            perm,
            eta,
            seed,
            on_fit_failure,
            metric_alpha,
            bounds,
            dump_permuted,
            out,
        } => {
            let kind = parse_stat(stat)?;
            let z1 = read_sample(&mut run, first)?;
            let z2 = read_sample(&mut run, second)?;
            let calibration = calibration.unwrap_or(if kind.is_composite() {
                CalibrationArg::Permutation
            } else {
                CalibrationArg::Chi2
            });
            let format = cli.format.unwrap_or(Format::Json);
            let body = match calibration {
                CalibrationArg::Chi2 => {
                    let known = match kind {
                        StatisticKind::TAlpha => gamma_known.ok_or(()).or_else(|_| usage("Talpha needs --gamma-known"))?,
                        StatisticKind::TGamma => alpha_known.ok_or(()).or_else(|_| usage("Tgamma needs --alpha-known"))?,
                        _ => return usage(format!("{kind} has no chi-squared reference; use --calibration permutation")),
                    };
                    render_json(&stats::chi2_test(&z1, &z2, kind, known, *looks)?, format)?
                }
                CalibrationArg::Permutation => {
                    let seed = run.resolve_seed(*seed)?;
                    let pooled_mean = (z1.mean() * z1.len() as f64 + z2.mean() * z2.len() as f64)
                        / (z1.len() + z2.len()) as f64;
                    let cfg = PermutationConfig {
                        perm: *perm,
                        eta: *eta,
                        seed,
                        kind,
                        on_fit_failure: match on_fit_failure {
                            FailurePolicyArg::Skip => OnFitFailure::Skip,
                            FailurePolicyArg::Retry => OnFitFailure::Retry,
                            FailurePolicyArg::Abort => OnFitFailure::Abort,
                        },
                        metric_alpha: match metric_alpha {
                            MetricAlphaArg::PooledMean => MetricAlpha::PooledMean,
                            MetricAlphaArg::First => MetricAlpha::First,
                            MetricAlphaArg::Second => MetricAlpha::Second,
                        },
                        bounds: build_box(bounds, pooled_mean)?,
                        ..PermutationConfig::default()
                    };
                    cfg.validate()?;
                    let r = perm::permutation_test(&z1, &z2, *looks, &cfg)?;
                    if let Some(path) = dump_permuted {
                        let mut csv = String::from("replicate,statistic\n");
                        for (i, t) in r.permuted.iter().enumerate() {
                            csv.push_str(&format!("{i},{t}\n"));
                        }
                        run.write(path, csv.as_bytes())?;
                    }
                    #[derive(Serialize)]
                    struct PermutationOut {
                        #[serde(flatten)]
                        outcome: TestOutcome,
                        eta: f64,
                        rejected: bool,
                        effective: usize,
                        skipped: usize,
                    }
                    render_json(
                        &PermutationOut {
                            outcome: TestOutcome {
                                statistic: kind,
                                value: r.observed,
                                m: z1.len(),
                                n: z2.len(),
                                p_value: r.p_value,
                                calibration: Calibration::Permutation,
                            },
                            eta: *eta,
                            rejected: r.rejected,
                            effective: r.effective(),
                            skipped: r.skipped,
                        },
                        format,
                    )?
                }
            };
            run.emit(out.as_deref(), body)?;
            let beside = out.as_deref().or(dump_permuted.as_deref()).map(manifest_beside);
            run.finish(beside)
        }

        Command::Mc { plan, preset, scale, seed, out } => {
            let mut plan = match (plan, preset) {
                (Some(path), _) => {
                    run.input(path)?;
                    let text = fs::read_to_string(path)?;
                    serde_json::from_str::<ExperimentPlan>(&text)
                        .map_err(|e| CliError::Usage(format!("invalid plan {}: {e}", path.display())))?
                }
                (None, Some(p)) => {
                    let s = match scale {
                        ScaleArg::Full => Preset::Full,
                        ScaleArg::Quick => Preset::Quick,
                    };
                    match p {
                        PresetArg::Table1 => ExperimentPlan::table_one(s),
                        PresetArg::Estimators => ExperimentPlan::two_parameter_estimators(s),
                        PresetArg::EstimatorsAlpha => ExperimentPlan::one_parameter_estimators(Regime::AlphaOnly, s),
                        PresetArg::EstimatorsGamma => ExperimentPlan::one_parameter_estimators(Regime::GammaOnly, s),
                        PresetArg::SizesAlpha => ExperimentPlan::one_parameter_sizes(Regime::AlphaOnly, s),
                        PresetArg::SizesGamma => ExperimentPlan::one_parameter_sizes(Regime::GammaOnly, s),
                        PresetArg::Joint => ExperimentPlan::joint_dependence(s),
                    }
                }
                (None, None) => return usage("mc needs --plan or --preset"),
            };
            match seed {
                Some(s) => {
                    plan.seed = *s;
                    run.manifest.seed = Some(*s);
                    run.manifest.seed_source = Some(SeedSource::Flag);
                }
                None if cli.ci => return usage("--ci requires an explicit --seed"),
                None => {
                    run.manifest.seed = Some(plan.seed);
                    run.manifest.seed_source = Some(SeedSource::Plan);
                }
            }
            plan.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let report = mc::run(&plan)?;
            for path in mc::write_report(&report, out)? {
                run.manifest.outputs.push(FileDigest::of(&path)?);
            }
            run.finish(Some(out.join("manifest.json")))
        }

        Command::Edges { image, looks, stat, perm, eta, seed, tie_break, bounds, out, profiles } => {
            let kind = parse_stat(stat)?;
            if !kind.is_composite() {
                return usage("edge detection uses the two-parameter statistics T1, T2 or T3");
            }
            run.input(image)?;
            let sidecar = io::sidecar_path(image);
            if sidecar.exists() && !image.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")) {
                run.input(&sidecar)?;
            }
            let strip = io::read_image(image, *looks)?;
            let seed = run.resolve_seed(*seed)?;
            let mean = strip.pixels().iter().sum::<f64>() / strip.pixels().len() as f64;
            let mut cfg = EdgeConfig::new(kind, *perm, seed);
            cfg.permutation.eta = *eta;
            cfg.tie_break = match tie_break {
                TieBreakArg::SmallestK => TieBreak::SmallestK,
                TieBreakArg::LargestStatistic => TieBreak::LargestStatistic,
            };
            cfg.bounds = build_box(bounds, mean)?;
            let result = edge::detect_edges(&strip, &cfg)?;
            let body = match cli.format.unwrap_or(Format::Csv) {
                Format::Csv | Format::Text => io::format_edges(&result),
                Format::Json => serde_json::to_string_pretty(&result)? + "\n",
            };
            run.emit(out.as_deref(), body)?;
            if let Some(path) = profiles {
                run.write(path, io::format_profiles(&result).as_bytes())?;
            }
            let beside = out.as_deref().or(profiles.as_deref()).map(manifest_beside);
            run.finish(beside)
        }
    }
}
