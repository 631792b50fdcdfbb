//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use ebnm::kernels::Component;
use ebnm::{validate_observations, ObservationSet};

// 15-point Kronrod nodes on [0, 1] half of [-1, 1]; odd indices are the
// 7-point Gauss nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let d = h * XGK[j];
        let s = f(c - d) + f(c + d);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss-Kronrod (7/15) integration over `[a, b]` split at
/// `breaks`; bisects the worst interval until the error estimate drops
/// below `tol` relative to the integral.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, breaks: &[f64], tol: f64) -> f64 {
    let mut pts: Vec<f64> = vec![a, b];
    pts.extend(breaks.iter().copied().filter(|p| *p > a && *p < b));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    // Start from a uniform subdivision so narrow peaks are not missed.
    let mut segs: Vec<(f64, f64, f64, f64)> = Vec::new();
    for w in pts.windows(2) {
        let m = 32;
        for i in 0..m {
            let lo = w[0] + (w[1] - w[0]) * i as f64 / m as f64;
            let hi = w[0] + (w[1] - w[0]) * (i + 1) as f64 / m as f64;
            let (v, e) = gk15(f, lo, hi);
            segs.push((lo, hi, v, e));
        }
    }
    for _ in 0..20_000 {
        let total: f64 = segs.iter().map(|s| s.2).sum();
        let err: f64 = segs.iter().map(|s| s.3).sum();
        if err <= tol * total.abs() {
            break;
        }
        let (idx, _) = segs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .3.total_cmp(&b.1 .3))
            .unwrap();
        let (lo, hi, _, _) = segs.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(f, lo, mid);
        let (v2, e2) = gk15(f, mid, hi);
        segs.push((lo, mid, v1, e1));
        segs.push((mid, hi, v2, e2));
    }
    segs.iter().map(|s| s.2).sum()
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

fn log_normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - LN_SQRT_2PI - sd.ln()
}

/// Log prior density, integration window, and breakpoints of a continuous
/// component, written directly from the textbook densities.
struct Continuous {
    log_density: Box<dyn Fn(f64) -> f64>,
    lo: f64,
    hi: f64,
    breaks: Vec<f64>,
}

fn continuous(x: f64, s: f64, c: &Component) -> Option<Continuous> {
    let reach = 14.0 * s;
    match *c {
        Component::Point { .. } => None,
        Component::Normal { mean, var } => {
            let sd = var.sqrt();
            // posterior mean and sd
            let pm = mean + var / (var + s * s) * (x - mean);
            let psd = (var * s * s / (var + s * s)).sqrt();
            Some(Continuous {
                log_density: Box::new(move |t| log_normal_pdf(t, mean, sd)),
                lo: (mean - 12.0 * (sd + s)).min(pm - 14.0 * psd),
                hi: (mean + 12.0 * (sd + s)).max(pm + 14.0 * psd),
                breaks: vec![pm, pm - 3.0 * psd, pm + 3.0 * psd],
            })
        }
        Component::Laplace { loc, rate } => {
            let shift = rate * s * s;
            let lo = (loc.min(x) - shift) - reach - 12.0 / rate;
            let hi = (loc.max(x) + shift) + reach + 12.0 / rate;
            Some(Continuous {
                log_density: Box::new(move |t| (0.5 * rate).ln() - rate * (t - loc).abs()),
                lo,
                hi,
                breaks: vec![loc, x - shift, x + shift],
            })
        }
        Component::Exponential { loc, rate } => {
            let shift = rate * s * s;
            let hi = loc.max(x) + reach + 12.0 / rate;
            Some(Continuous {
                log_density: Box::new(move |t| {
                    if t < loc {
                        f64::NEG_INFINITY
                    } else {
                        rate.ln() - rate * (t - loc)
                    }
                }),
                lo: loc,
                hi,
                breaks: vec![x - shift, loc + reach],
            })
        }
        Component::Uniform { lo, hi } => {
            let a = lo.max(x.min(hi) - 40.0 * s);
            let b = hi.min(x.max(lo) + 40.0 * s);
            let width = hi - lo;
            Some(Continuous {
                log_density: Box::new(move |_| -width.ln()),
                lo: a,
                hi: b,
                breaks: vec![x],
            })
        }
    }
}

/// Quadrature reference for a component: log marginal, posterior mean,
/// posterior second moment, and the posterior probabilities of
/// `theta < 0`, `theta = 0`, `theta > 0`.
#[derive(Debug, Clone, Copy)]
pub struct OracleValues {
    pub log_marginal: f64,
    pub mean: f64,
    pub second_moment: f64,
    pub fourth_moment: f64,
    pub prob_negative: f64,
    pub prob_zero: f64,
    pub prob_positive: f64,
}

pub fn oracle(x: f64, s: f64, c: &Component) -> OracleValues {
    let Some(k) = continuous(x, s, c) else {
        let Component::Point { loc } = *c else { unreachable!() };
        return OracleValues {
            log_marginal: log_normal_pdf(x, loc, s),
            mean: loc,
            second_moment: loc * loc,
            fourth_moment: loc.powi(4),
            prob_negative: (loc < 0.0) as u8 as f64,
            prob_zero: (loc == 0.0) as u8 as f64,
            prob_positive: (loc > 0.0) as u8 as f64,
        };
    };
    let log_f = |t: f64| (k.log_density)(t) + log_normal_pdf(x, t, s);
    // shift by the largest log-integrand seen on a fine scan
    let mut shift = f64::NEG_INFINITY;
    let m = 4000;
    for i in 0..=m {
        let t = k.lo + (k.hi - k.lo) * i as f64 / m as f64;
        shift = shift.max(log_f(t));
    }
    for &b in &k.breaks {
        if b >= k.lo && b <= k.hi {
            shift = shift.max(log_f(b));
        }
    }
    let tol = 1e-13;
    let mass = integrate(&|t| (log_f(t) - shift).exp(), k.lo, k.hi, &k.breaks, tol);
    let first = integrate(&|t| t * (log_f(t) - shift).exp(), k.lo, k.hi, &k.breaks, tol);
    let mean = first / mass;
    // second moment via the centered integral to avoid cancellation
    let centered = integrate(&|t| (t - mean).powi(2) * (log_f(t) - shift).exp(), k.lo, k.hi, &k.breaks, tol);
    let var = centered / mass;
    let fourth = integrate(&|t| t.powi(4) * (log_f(t) - shift).exp(), k.lo, k.hi, &k.breaks, tol) / mass;
    let neg = if k.lo < 0.0 {
        integrate(&|t| (log_f(t) - shift).exp(), k.lo, k.hi.min(0.0), &k.breaks, tol) / mass
    } else {
        0.0
    };
    let pos = if k.hi > 0.0 {
        integrate(&|t| (log_f(t) - shift).exp(), k.lo.max(0.0), k.hi, &k.breaks, tol) / mass
    } else {
        0.0
    };
    OracleValues {
        log_marginal: shift + mass.ln(),
        mean,
        second_moment: var + mean * mean,
        fourth_moment: fourth,
        prob_negative: neg,
        prob_zero: 0.0,
        prob_positive: pos,
    }
}

pub fn eight_schools() -> ObservationSet {
    validate_observations(
        &[28.0, 8.0, -3.0, 7.0, -1.0, 1.0, 18.0, 12.0],
        vec![15.0, 10.0, 16.0, 11.0, 9.0, 11.0, 10.0, 18.0],
    )
    .unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

use ebnm::kernels::{component_posterior, posterior_pieces, PosteriorPiece};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const KERNEL_KINDS: [&str; 5] = ["point", "normal", "laplace", "exponential", "uniform"];

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

/// Random `(x, s, component)` cases for one kernel; about a third of them
/// put `x` between 8 and 50 standard errors away from the component.
pub fn kernel_cases(kind: &str, count: usize, seed: u64) -> Vec<(f64, f64, Component)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let s = log_uniform(&mut rng, 0.1, 10.0);
            let loc = rng.random_range(-3.0..3.0);
            let dist = if rng.random::<f64>() < 0.35 {
                rng.random_range(8.0..50.0)
            } else {
                rng.random_range(0.0..8.0)
            };
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let x = loc + sign * dist * s;
            let c = match kind {
                "point" => Component::Point { loc },
                "normal" => Component::Normal {
                    mean: loc,
                    var: log_uniform(&mut rng, 1e-2, 1e2) * s * s,
                },
                "laplace" => Component::Laplace {
                    loc,
                    rate: log_uniform(&mut rng, 0.05, 20.0) / s,
                },
                "exponential" => Component::Exponential {
                    loc,
                    rate: log_uniform(&mut rng, 0.05, 20.0) / s,
                },
                "uniform" => {
                    let w = log_uniform(&mut rng, 0.01, 50.0) * s;
                    let left = loc - rng.random_range(0.0..1.0) * w;
                    Component::Uniform { lo: left, hi: left + w }
                }
                _ => panic!("unknown kernel {kind}"),
            };
            (x, s, c)
        })
        .collect()
}

/// Compares the kernels with the quadrature oracle; returns a description
/// of every case that misses the relative tolerance.
pub fn kernel_oracle_failures(kind: &str, count: usize, seed: u64, tol: f64) -> Vec<String> {
    let mut failures = Vec::new();
    for (x, s, c) in kernel_cases(kind, count, seed) {
        let want = oracle(x, s, &c);
        let got_lm = c.log_marginal(x, s);
        let got = component_posterior(x, s, &c);
        // exp(a) / exp(b) - 1 for the marginal density itself
        let lm_err = (got_lm - want.log_marginal).exp_m1().abs();
        let sd = (want.second_moment - want.mean * want.mean).max(0.0).sqrt();
        let mean_err = (got.mean - want.mean).abs() / want.mean.abs().max(sd).max(f64::MIN_POSITIVE);
        let m2_err = rel_err(got.second_moment, want.second_moment);
        let sign_err = (got.prob_negative - want.prob_negative)
            .abs()
            .max((got.prob_positive - want.prob_positive).abs());
        if !(lm_err <= tol && mean_err <= tol && m2_err <= tol && sign_err <= tol) {
            failures.push(format!(
                "{kind} x={x} s={s} {c:?}: marginal {lm_err:.2e} mean {mean_err:.2e} m2 {m2_err:.2e} sign {sign_err:.2e}"
            ));
        }
    }
    failures
}

use ebnm::model::SlabKind;
use ebnm::optimize::Objective;
use ebnm::param_fit::{ParamLayout, SpikeSlabObjective};
use rand_distr::StandardNormal;

/// Simulated spike-and-slab data with unit standard errors scaled by a
/// random heteroskedastic factor.
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize) -> ObservationSet {
    let mut x = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    for _ in 0..n {
        let si = rng.random_range(0.5..2.0);
        let theta = if rng.random::<f64>() < 0.6 {
            0.0
        } else {
            3.0 * rng.sample::<f64, _>(StandardNormal)
        };
        x.push(theta + si * rng.sample::<f64, _>(StandardNormal));
        s.push(si);
    }
    validate_observations(&x, s).unwrap()
}

/// Every parametric objective layout exercised by the gradient checks.
pub fn gradient_layouts() -> Vec<(&'static str, SlabKind, ParamLayout)> {
    let free = ParamLayout {
        pi0: None,
        scale: None,
        mode: Some(0.0),
    };
    let with_mode = ParamLayout { mode: None, ..free };
    let normal = ParamLayout {
        pi0: Some(0.0),
        ..free
    };
    vec![
        ("normal", SlabKind::Normal, normal),
        ("normal, mode estimated", SlabKind::Normal, ParamLayout { mode: None, ..normal }),
        ("point-normal", SlabKind::Normal, free),
        ("point-normal, mode estimated", SlabKind::Normal, with_mode),
        ("point-laplace", SlabKind::Laplace, free),
        ("point-laplace, mode estimated", SlabKind::Laplace, with_mode),
        ("point-exponential", SlabKind::Exponential, free),
    ]
}

/// Worst relative discrepancy between the analytic gradient and finite
/// differences over `points` random parameter vectors.
///
/// Each component is compared with a Richardson-extrapolated central
/// difference (steps 1e-3 and 2e-3) and with a plain central difference
/// at step 1e-6; the latter is only held to 1e-5 relative where its own
/// rounding noise `8 eps |f| / h` allows.
pub fn worst_gradient_error(slab: SlabKind, layout: ParamLayout, points: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let obs = random_dataset(&mut rng, 60);
    let obj = SpikeSlabObjective::new(&obs, slab, layout);
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let mut p = Vec::new();
        if layout.pi0.is_none() {
            p.push(rng.random_range(-4.0..4.0));
        }
        if layout.scale.is_none() {
            p.push(rng.random_range(-2.0..2.5));
        }
        if layout.mode.is_none() {
            p.push(rng.random_range(-2.0..2.0));
        }
        let (f, g) = obj.value_grad(&p);
        for j in 0..p.len() {
            let central = |h: f64| {
                let mut q = p.clone();
                q[j] = p[j] + h;
                let fp = obj.value(&q);
                q[j] = p[j] - h;
                (fp - obj.value(&q)) / (2.0 * h)
            };
            let richardson = (4.0 * central(1e-3) - central(2e-3)) / 3.0;
            let scale = g[j].abs().max(1e-12);
            worst = worst.max((richardson - g[j]).abs() / scale);
            let h = 1e-6;
            let noise = 8.0 * f64::EPSILON * f.abs() / h;
            let err = ((central(h) - g[j]).abs() - noise).max(0.0) / scale;
            worst = worst.max(err);
        }
    }
    worst
}

use ebnm::mix_fit::{em_iterations, optimize_weights, LikelihoodMatrix};

/// Small random weight problem: `n` observations and `k` point masses.
pub fn small_weight_problem(rng: &mut ChaCha8Rng, n: usize, k: usize) -> LikelihoodMatrix {
    let locs: Vec<f64> = (0..k).map(|_| rng.random_range(-4.0..4.0)).collect();
    let x: Vec<f64> = (0..n)
        .map(|_| locs[rng.random_range(0..k)] + rng.sample::<f64, _>(StandardNormal))
        .collect();
    let comps: Vec<Component> = locs.iter().map(|&loc| Component::Point { loc }).collect();
    let obs = validate_observations(&x, 1.0).unwrap();
    ebnm::mix_fit::likelihood_matrix(&obs, &comps).unwrap()
}

/// Average log-likelihood at `w`, on the original scale.
pub fn mean_loglik(l: &LikelihoodMatrix, w: &[f64]) -> f64 {
    let n = l.nrows();
    (0..n)
        .map(|i| {
            let terms: Vec<f64> = (0..l.ncols())
                .filter(|&k| w[k] > 0.0)
                .map(|k| w[k].ln() + l.log_value(i, k))
                .collect();
            ebnm::special::log_sum_exp(&terms)
        })
        .sum::<f64>()
        / n as f64
}

/// Gap between the solver's objective and a 1e5-iteration EM run from
/// uniform weights (positive when the solver is better).
pub fn long_em_gap(l: &LikelihoodMatrix) -> f64 {
    let k = l.ncols();
    let (w, cert) = optimize_weights(l, None).unwrap();
    let (em, _) = em_iterations(l, &vec![1.0 / k as f64; k], 100_000);
    let solver = mean_loglik(l, &w);
    assert!((solver - cert.objective).abs() < 1e-12);
    solver - mean_loglik(l, &em)
}

/// `E theta^4` under one posterior piece, by quadrature for truncated pieces.
fn piece_fourth_moment(p: &PosteriorPiece) -> f64 {
    match *p {
        PosteriorPiece::Point(a) => a.powi(4),
        PosteriorPiece::Normal { mean, sd } => {
            let v = sd * sd;
            mean.powi(4) + 6.0 * mean * mean * v + 3.0 * v * v
        }
        PosteriorPiece::Truncated { m, sd, lo, hi, .. } => {
            let (a, b) = ((lo - m) / sd, (hi - m) / sd);
            let peak = 0.0f64.clamp(a, b);
            let (a, b) = (a.max(peak - 40.0), b.min(peak + 40.0));
            let w = |u: f64| (-0.5 * (u * u - peak * peak)).exp();
            let mass = integrate(&w, a, b, &[], 1e-10);
            integrate(&|u| (m + sd * u).powi(4) * w(u), a, b, &[], 1e-10) / mass
        }
    }
}

/// `P(theta < 0)` and `E theta^4` for each observation, mixing
/// component oracles by their responsibilities.
pub fn negative_prob_and_fourth_moment(obs: &ObservationSet, g: &ebnm::FittedPrior) -> Vec<(f64, f64)> {
    let comps = g.weighted_components();
    obs.iter()
        .map(|(x, s)| {
            let logs: Vec<f64> = comps
                .iter()
                .map(|(w, c)| if *w > 0.0 { w.ln() + c.log_marginal(x, s) } else { f64::NEG_INFINITY })
                .collect();
            let total = ebnm::special::log_sum_exp(&logs);
            let (mut neg, mut fourth) = (0.0, 0.0);
            for ((_, c), l) in comps.iter().zip(&logs) {
                let r = (l - total).exp();
                if r > 0.0 {
                    neg += r * component_posterior(x, s, c).prob_negative;
                    fourth += r * posterior_pieces(x, s, c)
                        .as_slice()
                        .iter()
                        .map(|(w, p)| w * piece_fourth_moment(p))
                        .sum::<f64>();
                }
            }
            (neg.clamp(0.0, 1.0), fourth)
        })
        .collect()
}

/// Compares `nsamp` sampler draws with the analytic summaries for `family`
/// fitted to a fixed random dataset of size `n`. Returns one message per
/// disagreement: means, second moments and `P(theta < 0)` within 5 Monte
/// Carlo standard errors, and the local false sign rate within `lfsr_tol`
/// (5 Monte Carlo standard errors when `None`).
pub fn sampler_agreement_failures(
    family: ebnm::PriorFamily,
    n: usize,
    nsamp: usize,
    seed: u64,
    lfsr_tol: Option<f64>,
) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let obs = random_dataset(&mut rng, n);
    let fit = ebnm::ebnm(&obs, &ebnm::PriorFamilySpec::new(family)).unwrap();
    let draws = fit.sampler(seed).draw(nsamp);
    let exact = negative_prob_and_fourth_moment(&obs, &fit.fitted_prior);
    let post = &fit.posterior;
    let root_n = (nsamp as f64).sqrt();
    let mut failures = Vec::new();
    for i in 0..n {
        let col = draws.column(i);
        let mean = col.iter().sum::<f64>() / nsamp as f64;
        let sq: Vec<f64> = col.iter().map(|t| t * t).collect();
        let m2 = sq.iter().sum::<f64>() / nsamp as f64;
        let (neg, fourth) = exact[i];
        let lfsr = post.lfsr[i];
        let lfsr_se = 5.0 * (lfsr * (1.0 - lfsr)).max(0.0).sqrt() / root_n + 1.0 / nsamp as f64;
        let m2_sd = (fourth - post.second_moment[i].powi(2)).max(0.0).sqrt();
        let below = col.iter().filter(|t| **t < 0.0).count() as f64 / nsamp as f64;
        let nonpos = col.iter().filter(|t| **t <= 0.0).count() as f64 / nsamp as f64;
        let nonneg = col.iter().filter(|t| **t >= 0.0).count() as f64 / nsamp as f64;
        let floor = 1e-12 * post.second_moment[i].sqrt().max(1.0);
        let checks = [
            ("mean", mean, post.mean[i], 5.0 * post.sd[i] / root_n + floor),
            ("second moment", m2, post.second_moment[i], 5.0 * m2_sd / root_n + floor),
            ("P(theta < 0)", below, neg, 5.0 * (neg * (1.0 - neg)).sqrt() / root_n + 1.0 / nsamp as f64),
            ("lfsr", nonpos.min(nonneg), post.lfsr[i], lfsr_tol.unwrap_or(lfsr_se)),
        ];
        for (what, empirical, analytic, tol) in checks {
            if !((empirical - analytic).abs() <= tol) {
                failures.push(format!(
                    "{} obs {i}: {what} empirical {empirical} vs analytic {analytic} (tol {tol})",
                    family.name()
                ));
            }
        }
    }
    failures
}
