//! Maximum marginal likelihood for the parametric families: normal,
//! point-normal, point-Laplace and point-exponential, with optional mode
//! estimation.
//!
//! Parameters are optimized on an unconstrained scale: the slab weight
//! `w = 1 - pi0` through its logit (`alpha`), the slab scale (variance or
//! rate) through its log (`beta`), and the mode untransformed (`gamma`).
//! Boundary solutions (pure point mass, pure slab) are fitted separately and
//! compared with the interior optimum.

use crate::error::{EbnmError, Result};
use crate::kernels::{log_marginal_exp, log_marginal_laplace, log_marginal_normal};
use crate::model::{Mode, ObservationSet, ParametricPrior, PriorFamily, ScaleSpec, SlabKind};
use crate::optimize::{optimize_transformed, Objective};
use crate::special::{inv_mills, log_add_exp, log_normal_density};

/// Improvement over the point-mass fit (log units) below which a fit is
/// reported as the point mass.
pub const POINT_MASS_TOL: f64 = 1e-6;

/// Unconstrained parameters of a spike-and-slab prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformedParams {
    /// logit of the slab weight `1 - pi0`.
    pub alpha: f64,
    /// log of the slab scale.
    pub beta: f64,
    /// mode, present only when it is estimated.
    pub gamma: Option<f64>,
}

impl TransformedParams {
    pub fn from_prior(p: &ParametricPrior, estimate_mode: bool) -> Self {
        let w = (1.0 - p.pi0).clamp(1e-12, 1.0 - 1e-12);
        Self {
            alpha: (w / (1.0 - w)).ln(),
            beta: p.scale.ln(),
            gamma: estimate_mode.then_some(p.mu),
        }
    }

    /// Back-transform; `mu` is used when the mode is not estimated.
    pub fn to_prior(&self, mu: f64) -> ParametricPrior {
        ParametricPrior {
            mu: self.gamma.unwrap_or(mu),
            pi0: sigmoid(-self.alpha),
            scale: self.beta.exp(),
        }
    }
}

#[inline]
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `ln sigmoid(t)`.
#[inline]
fn log_sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        -(-t).exp().ln_1p()
    } else {
        t - t.exp().ln_1p()
    }
}

/// Which spike-and-slab parameters are free.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamLayout {
    /// `None`: free. `Some(pi0)`: fixed weight on the point mass.
    pub pi0: Option<f64>,
    /// `None`: free. `Some(scale)`: fixed slab scale.
    pub scale: Option<f64>,
    /// `None`: estimated. `Some(mu)`: fixed mode.
    pub mode: Option<f64>,
}

impl ParamLayout {
    pub fn dim(&self) -> usize {
        [self.pi0.is_none(), self.scale.is_none(), self.mode.is_none()]
            .iter()
            .filter(|b| **b)
            .count()
    }

    /// Free-parameter vector for a prior.
    pub fn pack(&self, p: &ParametricPrior) -> Vec<f64> {
        let t = TransformedParams::from_prior(p, self.mode.is_none());
        let mut v = Vec::with_capacity(3);
        if self.pi0.is_none() {
            v.push(t.alpha);
        }
        if self.scale.is_none() {
            v.push(t.beta);
        }
        if let Some(g) = t.gamma {
            v.push(g);
        }
        v
    }

    pub fn unpack(&self, v: &[f64]) -> ParametricPrior {
        let mut it = v.iter().copied();
        let pi0 = match self.pi0 {
            Some(p) => p,
            None => sigmoid(-it.next().expect("alpha")),
        };
        let scale = match self.scale {
            Some(s) => s,
            None => it.next().expect("beta").exp(),
        };
        let mu = match self.mode {
            Some(m) => m,
            None => it.next().expect("gamma"),
        };
        ParametricPrior { mu, pi0, scale }
    }
}

/// Negative marginal log-likelihood of a spike-and-slab prior as a function
/// of the free transformed parameters.
pub struct SpikeSlabObjective<'a> {
    obs: &'a ObservationSet,
    slab: SlabKind,
    layout: ParamLayout,
}

/// Slab log marginal and its derivatives with respect to `ln scale` and `mu`.
#[inline]
fn slab_terms(slab: SlabKind, x: f64, s: f64, mu: f64, scale: f64) -> (f64, f64, f64) {
    let y = x - mu;
    match slab {
        SlabKind::Normal => {
            let v = scale + s * s;
            let f = log_marginal_normal(x, s, mu, scale);
            let d_var = -0.5 / v + 0.5 * y * y / (v * v);
            (f, scale * d_var, y / v)
        }
        SlabKind::Laplace => {
            let a = scale;
            let z = y / s;
            let u1 = z - a * s;
            let u2 = -z - a * s;
            let t1 = -a * y + crate::special::log_norm_cdf(u1);
            let t2 = a * y + crate::special::log_norm_cdf(u2);
            let lse = log_add_exp(t1, t2);
            let q1 = (t1 - lse).exp();
            let q2 = (t2 - lse).exp();
            let f = log_marginal_laplace(x, s, mu, a);
            let (m1, m2) = (inv_mills(u1), inv_mills(u2));
            let d_a = 1.0 / a + a * s * s + q1 * (-y - s * m1) + q2 * (y - s * m2);
            let d_y = q1 * (-a + m1 / s) + q2 * (a - m2 / s);
            (f, a * d_a, -d_y)
        }
        SlabKind::Exponential => {
            let a = scale;
            let u = y / s - a * s;
            let m = inv_mills(u);
            let f = log_marginal_exp(y, s, a);
            let d_a = 1.0 / a + a * s * s - y - s * m;
            let d_y = -a + m / s;
            (f, a * d_a, -d_y)
        }
    }
}

impl<'a> SpikeSlabObjective<'a> {
    pub fn new(obs: &'a ObservationSet, slab: SlabKind, layout: ParamLayout) -> Self {
        Self { obs, slab, layout }
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    /// Marginal log-likelihood of a prior (no derivatives).
    pub fn log_likelihood(&self, p: &ParametricPrior) -> f64 {
        spike_slab_log_likelihood(self.obs, self.slab, p)
    }
}

/// Marginal log-likelihood of a spike-and-slab prior.
pub fn spike_slab_log_likelihood(obs: &ObservationSet, slab: SlabKind, p: &ParametricPrior) -> f64 {
    obs.iter()
        .map(|(x, s)| {
            let spike = log_normal_density(x, p.mu, s);
            if p.is_point_mass() {
                return spike;
            }
            let (ls, _, _) = slab_terms(slab, x, s, p.mu, p.scale);
            if p.pi0 == 0.0 {
                ls
            } else {
                log_add_exp(p.pi0.ln() + spike, (1.0 - p.pi0).ln() + ls)
            }
        })
        .sum()
}

impl Objective for SpikeSlabObjective<'_> {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn value_grad(&self, v: &[f64]) -> (f64, Vec<f64>) {
        let lay = &self.layout;
        let mut it = v.iter().copied();
        let (log_pi0, log_w, w) = match lay.pi0 {
            None => {
                let alpha = it.next().expect("alpha");
                (log_sigmoid(-alpha), log_sigmoid(alpha), sigmoid(alpha))
            }
            Some(p0) => ((p0).ln(), (1.0 - p0).ln(), 1.0 - p0),
        };
        let scale = match lay.scale {
            Some(s) => s,
            None => it.next().expect("beta").exp(),
        };
        let mu = match lay.mode {
            Some(m) => m,
            None => it.next().expect("gamma"),
        };
        let mut total = 0.0;
        let (mut g_alpha, mut g_beta, mut g_gamma) = (0.0, 0.0, 0.0);
        for (x, s) in self.obs.iter() {
            let (ls, d_beta, d_mu) = slab_terms(self.slab, x, s, mu, scale);
            let slab_part = log_w + ls;
            let (li, r) = if log_pi0 == f64::NEG_INFINITY {
                (slab_part, 1.0)
            } else {
                let spike_part = log_pi0 + log_normal_density(x, mu, s);
                let li = log_add_exp(spike_part, slab_part);
                (li, (slab_part - li).exp())
            };
            total += li;
            g_alpha += r - w;
            g_beta += r * d_beta;
            g_gamma += (1.0 - r) * (x - mu) / (s * s) + r * d_mu;
        }
        let mut grad = Vec::with_capacity(3);
        if lay.pi0.is_none() {
            grad.push(-g_alpha);
        }
        if lay.scale.is_none() {
            grad.push(-g_beta);
        }
        if lay.mode.is_none() {
            grad.push(-g_gamma);
        }
        (-total, grad)
    }
}

/// Result of a parametric fit.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricFit {
    pub prior: ParametricPrior,
    pub log_likelihood: f64,
    pub iterations: usize,
}

/// Precision-weighted mean: the maximum-likelihood location of a point mass.
pub fn precision_weighted_mean(obs: &ObservationSet) -> f64 {
    let (num, den) = obs.iter().fold((0.0, 0.0), |(n, d), (x, s)| {
        let w = 1.0 / (s * s);
        (n + w * x, d + w)
    });
    num / den
}

/// Median of `x` with weights `1 / s^2`.
pub fn weighted_median(obs: &ObservationSet) -> f64 {
    let mut pairs: Vec<(f64, f64)> = obs.iter().map(|(x, s)| (x, 1.0 / (s * s))).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let mut acc = 0.0;
    for (x, w) in &pairs {
        acc += w;
        if acc >= 0.5 * total {
            return *x;
        }
    }
    pairs.last().map(|p| p.0).unwrap_or(0.0)
}

fn point_mass_fit(obs: &ObservationSet, mode: Mode) -> ParametricFit {
    let mu = match mode {
        Mode::Fixed(m) => m,
        Mode::Estimate => precision_weighted_mean(obs),
    };
    let prior = ParametricPrior::point_mass(mu);
    ParametricFit {
        log_likelihood: obs.iter().map(|(x, s)| log_normal_density(x, mu, s)).sum(),
        prior,
        iterations: 0,
    }
}

/// Second moment of the slab implied by the data about `center`, floored
/// relative to the noise level.
fn moment_matched_second_moment(obs: &ObservationSet, center: f64) -> f64 {
    let n = obs.len() as f64;
    let excess = obs.iter().map(|(x, s)| (x - center).powi(2) - s * s).sum::<f64>() / n;
    let noise = obs.iter().map(|(_, s)| s * s).sum::<f64>() / n;
    excess.max(1e-2 * noise)
}

fn slab_scale_from_variance(slab: SlabKind, var: f64) -> f64 {
    match slab {
        SlabKind::Normal => var,
        // Laplace(a) and Exp(a) both have second moment 2 / a^2.
        SlabKind::Laplace | SlabKind::Exponential => (2.0 / var).sqrt(),
    }
}

/// Fits a spike-and-slab family by maximum marginal likelihood.
///
/// `pi0` fixes the point-mass weight (0 for the normal family); `None`
/// estimates it.
pub fn fit_spike_slab(
    obs: &ObservationSet,
    slab: SlabKind,
    pi0: Option<f64>,
    mode: Mode,
    scale: &ScaleSpec,
    init: Option<&ParametricPrior>,
) -> Result<ParametricFit> {
    let fixed_scale = match scale {
        ScaleSpec::Default => None,
        ScaleSpec::Fixed(v) => Some(*v),
        ScaleSpec::Grid(_) => {
            return Err(EbnmError::InvalidSpec(
                "parametric families take a single scale value".into(),
            ))
        }
    };
    let fixed_mode = match mode {
        Mode::Fixed(m) => Some(m),
        Mode::Estimate => None,
    };
    let delta = point_mass_fit(obs, mode);
    let mode_start = fixed_mode.unwrap_or_else(|| weighted_median(obs));
    let m2 = moment_matched_second_moment(obs, mode_start);

    let mut candidates: Vec<(ParametricFit, bool)> = vec![(delta.clone(), true)];
    let mut failure = None;

    // Pure slab boundary, or the whole fit when pi0 is fixed.
    let slab_layout = ParamLayout {
        pi0: Some(pi0.unwrap_or(0.0)),
        scale: fixed_scale,
        mode: fixed_mode,
    };
    let slab_fit = run_layout(obs, slab, slab_layout, mode_start, m2, &[1.0 - pi0.unwrap_or(0.0)], init);
    match slab_fit {
        Ok(f) => candidates.push((f, false)),
        Err(e) => failure = Some(e),
    }

    if pi0.is_none() {
        let layout = ParamLayout {
            pi0: None,
            scale: fixed_scale,
            mode: fixed_mode,
        };
        match run_layout(obs, slab, layout, mode_start, m2, &[0.5, 0.05], init) {
            Ok(f) => candidates.push((f, false)),
            Err(e) => failure = Some(e),
        }
    }

    if candidates.len() == 1 {
        if let Some(e) = failure {
            return Err(e);
        }
    }

    let best = candidates
        .iter()
        .max_by(|a, b| a.0.log_likelihood.total_cmp(&b.0.log_likelihood))
        .expect("at least the point mass");
    let iterations = candidates.iter().map(|c| c.0.iterations).sum();
    let mut chosen = best.0.clone();
    if !best.1
        && (chosen.prior.pi0 > 1.0 - 1e-6
            || chosen.log_likelihood - delta.log_likelihood < POINT_MASS_TOL)
        && pi0.is_none()
    {
        chosen = delta;
    } else if pi0.is_none() {
        // prefer the exact pure-slab boundary when the interior fit has
        // collapsed onto it
        if let Some((pure, _)) = candidates.get(1) {
            if chosen.prior.pi0 < 1e-6 && pure.log_likelihood >= chosen.log_likelihood - 1e-9 {
                chosen = pure.clone();
            }
        }
    }
    chosen.prior = chosen.prior.canonical();
    chosen.iterations = iterations;
    Ok(chosen)
}

fn run_layout(
    obs: &ObservationSet,
    slab: SlabKind,
    layout: ParamLayout,
    mode_start: f64,
    m2: f64,
    slab_weights: &[f64],
    init: Option<&ParametricPrior>,
) -> Result<ParametricFit> {
    let objective = SpikeSlabObjective::new(obs, slab, layout);
    if layout.dim() == 0 {
        let prior = layout.unpack(&[]);
        return Ok(ParametricFit {
            log_likelihood: objective.log_likelihood(&prior),
            prior,
            iterations: 0,
        });
    }
    let mut starts: Vec<Vec<f64>> = slab_weights
        .iter()
        .map(|&w| {
            let w = w.clamp(1e-3, 1.0);
            let p = ParametricPrior {
                mu: mode_start,
                pi0: 1.0 - w,
                scale: slab_scale_from_variance(slab, m2 / w),
            };
            layout.pack(&p)
        })
        .collect();
    if let Some(g) = init {
        if !g.is_point_mass() && g.pi0 > 0.0 && g.pi0 < 1.0 {
            starts.push(layout.pack(g));
        }
    }
    let best = optimize_transformed(&objective, &starts)?;
    let prior = layout.unpack(&best.params);
    Ok(ParametricFit {
        log_likelihood: -best.value,
        prior,
        iterations: best.iterations,
    })
}

/// Closed-form normal fit for homoskedastic data.
pub fn fit_normal_closed_form(obs: &ObservationSet, mode: Mode) -> Option<ParametricFit> {
    let s = obs.common_se()?;
    let n = obs.len() as f64;
    let mu = match mode {
        Mode::Fixed(m) => m,
        Mode::Estimate => obs.x().iter().sum::<f64>() / n,
    };
    let ss = obs.x().iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n;
    let sigma2 = (ss - s * s).max(0.0);
    let prior = if sigma2 == 0.0 {
        ParametricPrior::point_mass(mu)
    } else {
        ParametricPrior {
            mu,
            pi0: 0.0,
            scale: sigma2,
        }
    };
    Some(ParametricFit {
        log_likelihood: spike_slab_log_likelihood(obs, SlabKind::Normal, &prior),
        prior,
        iterations: 0,
    })
}

/// Normal family fitted numerically, whatever the standard errors.
pub fn fit_normal_numeric(obs: &ObservationSet, mode: Mode) -> Result<ParametricFit> {
    let delta = point_mass_fit(obs, mode);
    // At sigma^2 = 0 the likelihood is flat in pi0 and its sigma^2-slope
    // decides whether the point mass is a local optimum.
    let mu0 = delta.prior.mu;
    let slope: f64 = obs
        .iter()
        .map(|(x, s)| {
            let v = s * s;
            -0.5 / v + 0.5 * (x - mu0).powi(2) / (v * v)
        })
        .sum();
    let fixed_mode = match mode {
        Mode::Fixed(m) => Some(m),
        Mode::Estimate => None,
    };
    let layout = ParamLayout {
        pi0: Some(0.0),
        scale: None,
        mode: fixed_mode,
    };
    let start_mu = fixed_mode.unwrap_or(mu0);
    let m2 = moment_matched_second_moment(obs, start_mu);
    let interior = run_layout(obs, SlabKind::Normal, layout, start_mu, m2, &[1.0], None);
    let mut fit = match interior {
        Ok(f) if f.log_likelihood > delta.log_likelihood => f,
        Ok(_) => delta,
        Err(e) if slope > 0.0 => return Err(e),
        Err(_) => delta,
    };
    fit.prior = fit.prior.canonical();
    Ok(fit)
}

/// Normal family: closed form when all standard errors agree, numeric
/// otherwise.
pub fn fit_normal(obs: &ObservationSet, mode: Mode) -> Result<ParametricFit> {
    match fit_normal_closed_form(obs, mode) {
        Some(f) => Ok(f),
        None => fit_normal_numeric(obs, mode),
    }
}

pub fn fit_point_normal(obs: &ObservationSet, mode: Mode) -> Result<ParametricFit> {
    fit_spike_slab(obs, SlabKind::Normal, None, mode, &ScaleSpec::Default, None)
}

pub fn fit_point_laplace(obs: &ObservationSet, mode: Mode) -> Result<ParametricFit> {
    fit_spike_slab(obs, SlabKind::Laplace, None, mode, &ScaleSpec::Default, None)
}

/// Point-exponential with the point mass (and slab origin) at zero.
pub fn fit_point_exponential(obs: &ObservationSet) -> Result<ParametricFit> {
    fit_spike_slab(obs, SlabKind::Exponential, None, Mode::Fixed(0.0), &ScaleSpec::Default, None)
}

/// Dispatch for any parametric family.
pub fn fit_parametric(
    obs: &ObservationSet,
    family: PriorFamily,
    mode: Mode,
    scale: &ScaleSpec,
    init: Option<&ParametricPrior>,
) -> Result<ParametricFit> {
    let slab = family
        .slab()
        .ok_or_else(|| EbnmError::InvalidSpec(format!("{family} is not a parametric family")))?;
    match family {
        PriorFamily::Normal => match scale {
            ScaleSpec::Default if init.is_none() => fit_normal(obs, mode),
            ScaleSpec::Default => fit_normal_numeric(obs, mode),
            _ => fit_spike_slab(obs, slab, Some(0.0), mode, scale, init),
        },
        _ => fit_spike_slab(obs, slab, None, mode, scale, init),
    }
}
