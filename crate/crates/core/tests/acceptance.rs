//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use ebnm::bench::{self, compute_metrics, fit_with_intervals, summarize, FitWithIntervals, DEFAULT_FAMILIES, DEFAULT_NSAMP};
use ebnm::param_fit::{fit_normal, fit_normal_numeric};
use ebnm::sim::{simulate_scenario, Scenario};
use ebnm::{ebnm, FitDiagnostics, Mode, ObservationSet, PriorFamily, PriorFamilySpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn eight_schools() -> Outcome {
    let start = Instant::now();
    let report = bench::eight_schools().expect("eight-schools fits");
    let elapsed = start.elapsed();
    let point_masses = [&report.mode_zero, &report.mode_estimated]
        .iter()
        .all(|r| r.fitted_prior.as_parametric().is_some_and(|p| p.is_point_mass()));
    let mu = report.estimated_mode();
    let delta = report.loglik_difference();
    let ratio = report.likelihood_ratio();
    let pass = point_masses
        && (7.5..=7.9).contains(&mu)
        && (1.6..=2.0).contains(&delta)
        && (5.0..=7.5).contains(&ratio)
        && elapsed < Duration::from_secs(1);
    outcome(
        pass,
        format!(
            "point masses {point_masses}, mu_hat {mu:.4}, loglik difference {delta:.4}, likelihood ratio {ratio:.3}, {:.3}s",
            secs(elapsed)
        ),
    )
}

/// Closed-form maximum likelihood for `theta ~ N(mu, sigma2)`, `x ~ N(theta, s^2)`.
fn normal_oracle(x: &[f64], s: f64, estimate_mode: bool) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mu = if estimate_mode { x.iter().sum::<f64>() / n } else { 0.0 };
    let sigma2 = (x.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n - s * s).max(0.0);
    let v = sigma2 + s * s;
    let loglik = x
        .iter()
        .map(|xi| -0.5 * (2.0 * std::f64::consts::PI * v).ln() - 0.5 * (xi - mu).powi(2) / v)
        .sum();
    (mu, sigma2, loglik)
}

fn closed_form_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_param, mut worst_ll) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let s = rng.random_range(0.5..2.0);
        let sd = rng.random_range(0.0..3.0);
        let center = rng.random_range(-2.0..2.0);
        let x: Vec<f64> = (0..500)
            .map(|_| center + sd * rng.sample::<f64, _>(StandardNormal) + s * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let obs = ebnm::validate_observations(&x, s).unwrap();
        for estimate in [false, true] {
            let mode = if estimate { Mode::Estimate } else { Mode::Fixed(0.0) };
            let fit = fit_normal_numeric(&obs, mode).expect("numeric normal fit");
            let (mu, sigma2, ll) = normal_oracle(&x, s, estimate);
            let p = fit.prior;
            let fitted_var = if p.pi0 >= 1.0 { 0.0 } else { p.scale };
            worst_param = worst_param.max((p.mu - mu).abs()).max((fitted_var - sigma2).abs());
            worst_ll = worst_ll.max((fit.log_likelihood - ll).abs());
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst_param <= 1e-6 && worst_ll <= 1e-8 && elapsed < Duration::from_secs(10),
        format!(
            "worst |param error| {worst_param:.2e}, worst |loglik error| {worst_ll:.2e}, {:.2}s",
            secs(elapsed)
        ),
    )
}

fn kernel_oracles() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    for (i, kind) in common::KERNEL_KINDS.iter().enumerate() {
        failures.extend(common::kernel_oracle_failures(kind, 1000, 300 + i as u64, 1e-8));
    }
    let elapsed = start.elapsed();
    let mut detail = format!(
        "{} failing cases out of {}, {:.1}s",
        failures.len(),
        1000 * common::KERNEL_KINDS.len(),
        secs(elapsed)
    );
    if let Some(first) = failures.first() {
        detail.push_str(&format!("; first: {first}"));
    }
    outcome(failures.is_empty() && elapsed < Duration::from_secs(60), detail)
}

/// One benchmark replicate with the fits kept, mirroring `bench::run_replicate`.
struct Replicate {
    scenario: Scenario,
    rows: Vec<bench::MetricsRow>,
    residuals: Vec<(PriorFamily, f64)>,
}

fn run_replicate(scenario: Scenario, rep: usize) -> Replicate {
    let seed = 1 + rep as u64;
    let truth = simulate_scenario(scenario, 1000, seed).unwrap();
    let results: Vec<(PriorFamily, Option<FitWithIntervals>)> = DEFAULT_FAMILIES
        .iter()
        .map(|&f| (f, fit_with_intervals(&truth, f, DEFAULT_NSAMP, seed).ok()))
        .collect();
    let reference = results
        .iter()
        .find(|(f, _)| *f == PriorFamily::Npmle)
        .and_then(|(_, fit)| fit.as_ref())
        .map(|f| f.result.log_likelihood);
    let residuals = results
        .iter()
        .filter_map(|(f, fit)| match &fit.as_ref()?.result.diagnostics {
            FitDiagnostics::MixtureWeights(cert) => Some((*f, cert.max_dual_residual)),
            _ => None,
        })
        .collect();
    Replicate {
        scenario,
        rows: compute_metrics(&truth, rep, &results, reference),
        residuals,
    }
}

fn kkt_certification(replicates: &[Replicate]) -> Outcome {
    let residuals: Vec<f64> = replicates.iter().flat_map(|r| r.residuals.iter().map(|(_, v)| *v)).collect();
    let expected = replicates.len() * 3;
    let worst_residual = residuals.iter().copied().fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_gap = 0.0f64;
    for _ in 0..20 {
        let n = rng.random_range(10..=50);
        let k = rng.random_range(2..=5);
        let l = common::small_weight_problem(&mut rng, n, k);
        worst_gap = worst_gap.max(common::long_em_gap(&l).abs());
    }
    outcome(
        residuals.len() == expected && worst_residual <= 1e-8 && worst_gap <= 1e-6,
        format!(
            "{} of {expected} benchmark mixture fits certified, worst dual residual {worst_residual:.2e}; \
             worst |objective - long EM| on 20 small instances {worst_gap:.2e}",
            residuals.len()
        ),
    )
}

fn loglik(obs: &ObservationSet, family: PriorFamily) -> f64 {
    ebnm(obs, &PriorFamilySpec::new(family)).expect("nesting fit").log_likelihood
}

fn nesting() -> Outcome {
    let mut total_violation = 0.0;
    let mut parts = Vec::new();
    for scenario in Scenario::ALL {
        let obs = simulate_scenario(scenario, 1000, 1).unwrap().observations();
        let chain = [
            fit_normal(&obs, Mode::Fixed(0.0)).unwrap().log_likelihood,
            loglik(&obs, PriorFamily::PointNormal),
            loglik(&obs, PriorFamily::NormalScaleMixture),
            loglik(&obs, PriorFamily::UnimodalSymmetric),
            loglik(&obs, PriorFamily::Npmle),
        ];
        let violation: f64 = chain.windows(2).map(|w| (w[0] - w[1]).max(0.0)).sum();
        total_violation += violation;
        let steps: Vec<String> = chain.windows(2).map(|w| format!("{:+.3}", w[1] - w[0])).collect();
        parts.push(format!("{scenario} steps [{}]", steps.join(" ")));
    }
    outcome(
        total_violation <= 1.0,
        format!("total violation {total_violation:.3} log-units; {}", parts.join("; ")),
    )
}

fn simulation_study(replicates: &[Replicate], elapsed: Duration) -> Outcome {
    let symmetric = [
        PriorFamily::Normal,
        PriorFamily::PointNormal,
        PriorFamily::PointLaplace,
        PriorFamily::NormalScaleMixture,
        PriorFamily::UnimodalSymmetric,
    ];
    let mut problems = Vec::new();
    let mut lines = Vec::new();
    for scenario in Scenario::ALL {
        let rows: Vec<bench::MetricsRow> = replicates
            .iter()
            .filter(|r| r.scenario == scenario)
            .flat_map(|r| r.rows.iter().cloned())
            .collect();
        let summary = summarize(&rows);
        let normal_rmse = summary.iter().find(|s| s.family == PriorFamily::Normal).and_then(|s| s.rmse);
        for s in &summary {
            let name = s.family.cli_name();
            if s.succeeded != 10 {
                problems.push(format!("{scenario}/{name}: {} of 10 fits succeeded", s.succeeded));
            }
            let rmse = s.rmse.unwrap_or(f64::NAN);
            let cover = s.coverage90.unwrap_or(f64::NAN);
            let rel = s.rel_loglik.unwrap_or(f64::NAN);
            lines.push(format!("{scenario}/{name} rmse {rmse:.3} cov {cover:.3} rel {rel:.1}"));
            if !(rmse < 1.0) {
                problems.push(format!("(a) {scenario}/{name} mean rmse {rmse:.3}"));
            }
            if scenario != Scenario::PointNormal && s.family != PriorFamily::Normal && !(rmse < normal_rmse.unwrap_or(f64::NAN)) {
                problems.push(format!("(b) {scenario}/{name} rmse {rmse:.3} not below normal"));
            }
            if s.family != PriorFamily::Npmle && !(0.80..=0.97).contains(&cover) {
                problems.push(format!("(c) {scenario}/{name} coverage {cover:.3}"));
            }
            if scenario == Scenario::Tophat && symmetric.contains(&s.family) && !(rel < -10.0) {
                problems.push(format!("(d) tophat/{name} rel_loglik {rel:.2}"));
            }
        }
    }
    if elapsed >= Duration::from_secs(600) {
        problems.push(format!("runtime {:.0}s", secs(elapsed)));
    }
    let mut detail = format!("30 replicates in {:.0}s", secs(elapsed));
    if problems.is_empty() {
        detail.push_str(&format!("; {}", lines.join("; ")));
    } else {
        detail.push_str(&format!("; {}", problems.join("; ")));
    }
    outcome(problems.is_empty(), detail)
}

fn gradient_check() -> Outcome {
    let mut worst = Vec::new();
    let mut pass = true;
    for (k, (name, slab, layout)) in common::gradient_layouts().into_iter().enumerate() {
        let err = common::worst_gradient_error(slab, layout, 100, 700 + k as u64);
        pass &= err <= 1e-5;
        worst.push(format!("{name} {err:.1e}"));
    }
    outcome(pass, format!("worst relative error per objective: {}", worst.join(", ")))
}

fn sampler_agreement() -> Outcome {
    let failures: Vec<String> = PriorFamily::ALL
        .iter()
        .flat_map(|f| common::sampler_agreement_failures(*f, 200, 20_000, 21, Some(0.01)))
        .collect();
    let mut detail = format!("{} disagreements over 10 families x 200 observations", failures.len());
    if !failures.is_empty() {
        detail.push_str(&format!(": {}", failures.join("; ")));
    }
    outcome(failures.is_empty(), detail)
}

fn main() {
    let start = Instant::now();
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut report = |id: u32, name: &'static str, o: Outcome| {
        println!("criterion {id} {name}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((id, name, o));
    };
    report(1, "eight schools", eight_schools());
    report(2, "closed-form equivalence", closed_form_equivalence());
    report(3, "kernel oracle suite", kernel_oracles());

    let bench_start = Instant::now();
    let jobs: Vec<(Scenario, usize)> = Scenario::ALL.iter().flat_map(|&s| (0..10).map(move |r| (s, r))).collect();
    let replicates: Vec<Replicate> = jobs.par_iter().map(|&(s, r)| run_replicate(s, r)).collect();
    let bench_elapsed = bench_start.elapsed();

    report(4, "KKT certification", kkt_certification(&replicates));
    report(5, "nesting", nesting());
    report(6, "simulation study", simulation_study(&replicates, bench_elapsed));
    report(7, "gradient check", gradient_check());
    report(8, "sampler agreement", sampler_agreement());

    let failed: Vec<u32> = results.iter().filter(|(_, _, o)| !o.pass).map(|(id, _, _)| *id).collect();
    println!(
        "acceptance: {} of {} criteria passed in {:.0}s",
        results.len() - failed.len(),
        results.len(),
        secs(start.elapsed())
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
