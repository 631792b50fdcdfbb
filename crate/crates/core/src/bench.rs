//! Simulation benchmark harness and the eight-schools report.

use std::fmt;
use std::io::{self, Write};

use rayon::prelude::*;

use crate::error::Result;
use crate::fit::ebnm;
use crate::model::{EbnmResult, FittedPrior, Mode, PriorFamily, PriorFamilySpec};
use crate::posterior::credible_interval;
use crate::sim::{simulate_scenario, Scenario, SimulationTruth};
use crate::validate_observations;

/// Families fitted by default in the benchmark.
pub const DEFAULT_FAMILIES: [PriorFamily; 6] = [
    PriorFamily::Normal,
    PriorFamily::PointNormal,
    PriorFamily::PointLaplace,
    PriorFamily::NormalScaleMixture,
    PriorFamily::UnimodalSymmetric,
    PriorFamily::Npmle,
];

pub const DEFAULT_NSAMP: usize = 10_000;
pub const INTERVAL_LEVEL: f64 = 0.9;

/// Metrics of one family on one simulated dataset; `None` marks a failed fit.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub rep: usize,
    pub family: PriorFamily,
    pub rel_loglik: Option<f64>,
    pub rmse: Option<f64>,
    pub coverage90: Option<f64>,
}

/// A fit together with its 90% credible intervals.
#[derive(Debug, Clone)]
pub struct FitWithIntervals {
    pub result: EbnmResult,
    pub intervals: Vec<(f64, f64)>,
}

/// `sqrt((1/n) sum_i (estimate_i - truth_i)^2)`.
pub fn rmse(truth: &[f64], estimate: &[f64]) -> f64 {
    let n = truth.len() as f64;
    (truth
        .iter()
        .zip(estimate)
        .map(|(t, e)| (e - t).powi(2))
        .sum::<f64>()
        / n)
        .sqrt()
}

/// Fraction of true values inside their (closed) intervals.
pub fn coverage(truth: &[f64], intervals: &[(f64, f64)]) -> f64 {
    let hits = truth
        .iter()
        .zip(intervals)
        .filter(|(t, (lo, hi))| lo <= *t && *t <= hi)
        .count();
    hits as f64 / truth.len() as f64
}

/// One metrics row per entry of `results`; log-likelihoods are reported
/// relative to `reference_loglik` (the NPMLE fit).
pub fn compute_metrics(
    truth: &SimulationTruth,
    rep: usize,
    results: &[(PriorFamily, Option<FitWithIntervals>)],
    reference_loglik: Option<f64>,
) -> Vec<MetricsRow> {
    results
        .iter()
        .map(|(family, fit)| match fit {
            Some(f) => MetricsRow {
                rep,
                family: *family,
                rel_loglik: reference_loglik.map(|r| f.result.log_likelihood - r),
                rmse: Some(rmse(&truth.theta, &f.result.posterior.mean)),
                coverage90: Some(coverage(&truth.theta, &f.intervals)),
            },
            None => MetricsRow {
                rep,
                family: *family,
                rel_loglik: None,
                rmse: None,
                coverage90: None,
            },
        })
        .collect()
}

/// Fits `family` with mode zero and default grids, then builds sampler-based
/// 90% intervals.
pub fn fit_with_intervals(
    truth: &SimulationTruth,
    family: PriorFamily,
    nsamp: usize,
    seed: u64,
) -> Result<FitWithIntervals> {
    let obs = truth.observations();
    let result = ebnm(&obs, &PriorFamilySpec::new(family).with_mode(Mode::Fixed(0.0)))?;
    let draws = result.sampler(seed).draw(nsamp);
    let intervals = credible_interval(&draws, INTERVAL_LEVEL)?;
    Ok(FitWithIntervals { result, intervals })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub scenario: Scenario,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub families: Vec<PriorFamily>,
    pub nsamp: usize,
    /// Worker threads; `None` uses `EBNM_THREADS` or all logical cores.
    pub threads: Option<usize>,
}

impl BenchmarkConfig {
    pub fn new(scenario: Scenario) -> Self {
        Self {
            scenario,
            n: 1000,
            reps: 10,
            seed: 1,
            families: DEFAULT_FAMILIES.to_vec(),
            nsamp: DEFAULT_NSAMP,
            threads: None,
        }
    }
}

/// Rows for one replicate: simulate with `seed + rep`, fit every family
/// (and the NPMLE reference), record metrics.
pub fn run_replicate(config: &BenchmarkConfig, rep: usize) -> Result<Vec<MetricsRow>> {
    let seed = config.seed.wrapping_add(rep as u64);
    let truth = simulate_scenario(config.scenario, config.n, seed)?;
    let results: Vec<(PriorFamily, Option<FitWithIntervals>)> = config
        .families
        .iter()
        .map(|&f| (f, fit_with_intervals(&truth, f, config.nsamp, seed).ok()))
        .collect();
    let reference = match results.iter().find(|(f, _)| *f == PriorFamily::Npmle) {
        Some((_, fit)) => fit.as_ref().map(|f| f.result.log_likelihood),
        None => {
            let obs = truth.observations();
            ebnm(&obs, &PriorFamilySpec::new(PriorFamily::Npmle))
                .ok()
                .map(|r| r.log_likelihood)
        }
    };
    Ok(compute_metrics(&truth, rep, &results, reference))
}

fn thread_count(config: &BenchmarkConfig) -> usize {
    config
        .threads
        .or_else(|| std::env::var("EBNM_THREADS").ok()?.parse().ok())
        .filter(|&t| t > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs every replicate; rows come back ordered by replicate, then family.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<Vec<MetricsRow>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count(config))
        .build()
        .map_err(|e| crate::EbnmError::InvalidArgument(e.to_string()))?;
    let per_rep: Vec<Result<Vec<MetricsRow>>> = pool.install(|| {
        (0..config.reps)
            .into_par_iter()
            .map(|rep| run_replicate(config, rep))
            .collect()
    });
    let mut rows = Vec::new();
    for r in per_rep {
        rows.extend(r?);
    }
    Ok(rows)
}

/// Per-family means over replicates; failed fits are skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub family: PriorFamily,
    pub succeeded: usize,
    pub rel_loglik: Option<f64>,
    pub rmse: Option<f64>,
    pub coverage90: Option<f64>,
}

fn mean_of(v: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let vals: Vec<f64> = v.flatten().collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

pub fn summarize(rows: &[MetricsRow]) -> Vec<SummaryRow> {
    let mut families: Vec<PriorFamily> = Vec::new();
    for r in rows {
        if !families.contains(&r.family) {
            families.push(r.family);
        }
    }
    families
        .into_iter()
        .map(|family| {
            let mine: Vec<&MetricsRow> = rows.iter().filter(|r| r.family == family).collect();
            SummaryRow {
                family,
                succeeded: mine.iter().filter(|r| r.rmse.is_some()).count(),
                rel_loglik: mean_of(mine.iter().map(|r| r.rel_loglik)),
                rmse: mean_of(mine.iter().map(|r| r.rmse)),
                coverage90: mean_of(mine.iter().map(|r| r.coverage90)),
            }
        })
        .collect()
}

fn na(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

pub const METRICS_HEADER: &str = "rep,family,rel_loglik,rmse,coverage90";
pub const SUMMARY_HEADER: &str = "family,succeeded,rel_loglik,rmse,coverage90";

pub fn write_metrics_csv<W: Write>(mut w: W, rows: &[MetricsRow]) -> io::Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.rep,
            r.family.cli_name(),
            na(r.rel_loglik),
            na(r.rmse),
            na(r.coverage90)
        )?;
    }
    Ok(())
}

pub fn write_summary_csv<W: Write>(mut w: W, rows: &[SummaryRow]) -> io::Result<()> {
    writeln!(w, "{SUMMARY_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.family.cli_name(),
            r.succeeded,
            na(r.rel_loglik),
            na(r.rmse),
            na(r.coverage90)
        )?;
    }
    Ok(())
}

pub const EIGHT_SCHOOLS_X: [f64; 8] = [28.0, 8.0, -3.0, 7.0, -1.0, 1.0, 18.0, 12.0];
pub const EIGHT_SCHOOLS_S: [f64; 8] = [15.0, 10.0, 16.0, 11.0, 9.0, 11.0, 10.0, 18.0];

/// Point-normal fits to the eight-schools data with the mode at zero and
/// with the mode estimated.
#[derive(Debug, Clone)]
pub struct EightSchoolsReport {
    pub mode_zero: EbnmResult,
    pub mode_estimated: EbnmResult,
}

impl EightSchoolsReport {
    pub fn loglik_difference(&self) -> f64 {
        self.mode_estimated.log_likelihood - self.mode_zero.log_likelihood
    }

    pub fn likelihood_ratio(&self) -> f64 {
        self.loglik_difference().exp()
    }

    pub fn estimated_mode(&self) -> f64 {
        self.mode_estimated
            .fitted_prior
            .as_parametric()
            .map_or(f64::NAN, |p| p.mu)
    }
}

pub fn eight_schools() -> Result<EightSchoolsReport> {
    let obs = validate_observations(&EIGHT_SCHOOLS_X, EIGHT_SCHOOLS_S.to_vec())?;
    let spec = PriorFamilySpec::new(PriorFamily::PointNormal);
    Ok(EightSchoolsReport {
        mode_zero: ebnm(&obs, &spec.clone().with_mode(Mode::Fixed(0.0)))?,
        mode_estimated: ebnm(&obs, &spec.with_mode(Mode::Estimate))?,
    })
}

fn describe(g: &FittedPrior) -> String {
    match g.as_parametric() {
        Some(p) if p.is_point_mass() => format!("point mass at {}", p.mu),
        Some(p) => format!("pi0 = {}, mu = {}, scale = {}", p.pi0, p.mu, p.scale),
        None => "mixture".to_string(),
    }
}

impl fmt::Display for EightSchoolsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "eight schools, point-normal prior")?;
        writeln!(
            f,
            "mode 0:         {}  loglik {:.6}",
            describe(&self.mode_zero.fitted_prior),
            self.mode_zero.log_likelihood
        )?;
        writeln!(
            f,
            "mode estimated: {}  loglik {:.6}",
            describe(&self.mode_estimated.fitted_prior),
            self.mode_estimated.log_likelihood
        )?;
        writeln!(f, "mu_hat = {:.6}", self.estimated_mode())?;
        writeln!(f, "loglik difference = {:.6}", self.loglik_difference())?;
        writeln!(f, "likelihood ratio = {:.6}", self.likelihood_ratio())
    }
}
