//! Marginal log-densities of prior components convolved with Gaussian noise,
//! and the matching component-conditional posteriors.
//!
//! All densities are returned on the log scale. Laplace, exponential and
//! uniform components produce truncated-normal posteriors; their tail
//! probabilities are handled with the `erfcx`-based helpers in
//! [`crate::special`].

use std::f64::consts::FRAC_1_SQRT_2;

use crate::special::{
    erfcx, log_add_exp, log_norm_cdf, log_norm_cdf_diff, log_norm_pdf, log_normal_density, norm_cdf,
    norm_quantile_log,
};

/// A single prior component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Component {
    Point { loc: f64 },
    Normal { mean: f64, var: f64 },
    /// Two-sided exponential with density `(rate / 2) exp(-rate |t - loc|)`.
    Laplace { loc: f64, rate: f64 },
    /// `loc + Exp(rate)`.
    Exponential { loc: f64, rate: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl Component {
    /// `ln p(x | s, component)`.
    pub fn log_marginal(&self, x: f64, s: f64) -> f64 {
        match *self {
            Component::Point { loc } => log_marginal_point(x, s, loc),
            Component::Normal { mean, var } => log_marginal_normal(x, s, mean, var),
            Component::Laplace { loc, rate } => log_marginal_laplace(x, s, loc, rate),
            Component::Exponential { loc, rate } => log_marginal_exp(x - loc, s, rate),
            Component::Uniform { lo, hi } => log_marginal_uniform(x, s, lo, hi),
        }
    }
}

/// `ln N(x; mu, s^2)`.
pub fn log_marginal_point(x: f64, s: f64, mu: f64) -> f64 {
    log_normal_density(x, mu, s)
}

/// `ln N(x; mu, sigma2 + s^2)`.
pub fn log_marginal_normal(x: f64, s: f64, mu: f64, sigma2: f64) -> f64 {
    log_normal_density(x, mu, (sigma2 + s * s).sqrt())
}

/// `ln Phi(-u) + u^2 / 2`, which stays moderate for large positive `u`.
fn log_norm_sf_scaled(u: f64) -> f64 {
    if u >= 0.0 {
        (0.5 * erfcx(u * FRAC_1_SQRT_2)).ln()
    } else {
        log_norm_cdf(-u) + 0.5 * u * u
    }
}

/// Log-weights of the positive and negative branches of a Laplace slab
/// convolved with `N(0, s^2)`, without the common `ln(a/2) - y^2 / (2 s^2)`.
#[inline]
fn laplace_branches(y: f64, s: f64, a: f64) -> (f64, f64) {
    let z = y / s;
    (log_norm_sf_scaled(a * s - z), log_norm_sf_scaled(a * s + z))
}

/// Log marginal density of `x` under a Laplace(`mu`, rate `a`) prior and
/// `N(0, s^2)` noise.
pub fn log_marginal_laplace(x: f64, s: f64, mu: f64, a: f64) -> f64 {
    let z = (x - mu) / s;
    let (pos, neg) = laplace_branches(x - mu, s, a);
    (0.5 * a).ln() - 0.5 * z * z + log_add_exp(pos, neg)
}

/// Log marginal density of `x` under an Exp(rate `a`) prior on `[0, inf)`
/// and `N(0, s^2)` noise.
pub fn log_marginal_exp(x: f64, s: f64, a: f64) -> f64 {
    a.ln() + 0.5 * a * a * s * s - a * x + log_norm_cdf(x / s - a * s)
}

/// Log marginal density under `Unif[l, r]`; a zero-width interval is a
/// point mass.
pub fn log_marginal_uniform(x: f64, s: f64, l: f64, r: f64) -> f64 {
    if l == r {
        return log_marginal_point(x, s, l);
    }
    log_norm_cdf_diff((x - r) / s, (x - l) / s) - (r - l).ln()
}

/// Moments of a truncated normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncNormMoments {
    pub mean: f64,
    pub var: f64,
    /// `ln P(l <= Z <= r)` for `Z ~ N(m, s^2)`.
    pub log_mass: f64,
}

/// Mean, variance and log-mass of `N(m, s^2)` restricted to `[l, r]`.
pub fn truncnorm_moments(m: f64, s: f64, l: f64, r: f64) -> TruncNormMoments {
    let alpha = (l - m) / s;
    let beta = (r - m) / s;
    let (mean_std, var_std, log_mass) = std_truncnorm(alpha, beta);
    let mean = (m + s * mean_std).clamp(l, r);
    TruncNormMoments {
        mean,
        var: (s * s * var_std).max(0.0),
        log_mass,
    }
}

/// Standardized truncated-normal moments on `[a, b]`.
fn std_truncnorm(a: f64, b: f64) -> (f64, f64, f64) {
    if a == f64::NEG_INFINITY && b == f64::INFINITY {
        return (0.0, 1.0, 0.0);
    }
    // Work on the side of zero holding most of the interval so the density
    // ratios below are computed from the smaller tail.
    if a + b > 0.0 {
        let (mean, var, lm) = std_truncnorm(-b, -a);
        return (-mean, var, lm);
    }
    let log_z = log_norm_cdf_diff(a, b);
    let width = b - a;
    if width < 1e-7 * a.abs().max(1.0) {
        return (0.5 * (a + b), width * width / 12.0, log_z);
    }
    if b <= -1.0 {
        let (offset, var) = left_tail_offset_moments(-b, width);
        return ((b - offset).clamp(a, b), var, log_z);
    }
    let ratio = |t: f64| {
        if t.is_infinite() {
            (0.0, 0.0)
        } else {
            let r = (log_norm_pdf(t) - log_z).exp();
            (r, t * r)
        }
    };
    let (pa, tpa) = ratio(a);
    let (pb, tpb) = ratio(b);
    let mean = pa - pb;
    let var = 1.0 + tpa - tpb - mean * mean;
    let mean = mean.clamp(a, b);
    (mean, var.clamp(0.0, 1.0), log_z)
}

/// `sqrt(pi / 2)`
const SQRT_HALF_PI: f64 = 1.253_314_137_315_500_3;

/// Mills ratio `(1 - Phi(c)) / phi(c)`.
fn mills(c: f64) -> f64 {
    SQRT_HALF_PI * erfcx(c * FRAC_1_SQRT_2)
}

/// Mean and variance of `u` under the density proportional to
/// `exp(-c u - u^2 / 2)` on `[0, w]`, for `c >= 1`.
///
/// This is a standard normal on `[b - w, b]` seen from its right end
/// (`c = -b`); measuring from the end keeps both moments small.
fn left_tail_offset_moments(c: f64, w: f64) -> (f64, f64) {
    let lambda = c * w + 0.5 * w * w;
    if lambda < 2.0 {
        // Gauss-Legendre on [0, w]; the integrand is nearly polynomial here.
        let (mut i0, mut i1, mut i2) = (0.0, 0.0, 0.0);
        for (node, weight) in GAUSS_LEGENDRE_16 {
            for sign in [-1.0, 1.0] {
                let u = 0.5 * w * (1.0 + sign * node);
                let f = weight * (-c * u - 0.5 * u * u).exp();
                i0 += f;
                i1 += f * u;
                i2 += f * u * u;
            }
        }
        let mean = i1 / i0;
        return (mean, (i2 / i0 - mean * mean).max(0.0));
    }
    let m_c = mills(c);
    let d_c = 1.0 - c * m_c;
    let (mut i0, mut i1, mut i2) = (m_c, d_c, 0.0);
    let e = (-lambda).exp();
    if e > 0.0 {
        // contributions of the far end at c + w
        let m_cw = mills(c + w);
        let d_cw = 1.0 - (c + w) * m_cw;
        i0 -= e * m_cw;
        i1 -= e * d_cw + e * w * m_cw;
        i2 -= w * e;
    }
    i2 += i0 - c * i1;
    let mean = i1 / i0;
    (mean, (i2 / i0 - mean * mean).max(0.0))
}

/// Positive nodes of the 16-point Gauss-Legendre rule with their weights.
const GAUSS_LEGENDRE_16: [(f64, f64); 8] = [
    (0.095_012_509_837_637_44, 0.189_450_610_455_068_5),
    (0.281_603_550_779_258_9, 0.182_603_415_044_923_6),
    (0.458_016_777_657_227_4, 0.169_156_519_395_002_5),
    (0.617_876_244_402_643_7, 0.149_595_988_816_576_7),
    (0.755_404_408_355_003_0, 0.124_628_971_255_533_9),
    (0.865_631_202_387_831_7, 0.095_158_511_682_492_78),
    (0.944_575_023_073_232_6, 0.062_253_523_938_647_89),
    (0.989_400_934_991_649_9, 0.027_152_459_411_754_09),
];

/// One piece of a component posterior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PosteriorPiece {
    Point(f64),
    Normal { mean: f64, sd: f64 },
    /// `N(m, sd^2)` truncated to `[lo, hi]`.
    Truncated {
        m: f64,
        sd: f64,
        lo: f64,
        hi: f64,
        moments: TruncNormMoments,
    },
}

/// Sign probabilities `(P(t < 0), P(t = 0), P(t > 0))`.
pub type SignProbs = (f64, f64, f64);

impl PosteriorPiece {
    fn truncated(m: f64, sd: f64, lo: f64, hi: f64) -> Self {
        PosteriorPiece::Truncated {
            m,
            sd,
            lo,
            hi,
            moments: truncnorm_moments(m, sd, lo, hi),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            PosteriorPiece::Point(v) => v,
            PosteriorPiece::Normal { mean, .. } => mean,
            PosteriorPiece::Truncated { moments, .. } => moments.mean,
        }
    }

    pub fn second_moment(&self) -> f64 {
        match *self {
            PosteriorPiece::Point(v) => v * v,
            PosteriorPiece::Normal { mean, sd } => mean * mean + sd * sd,
            PosteriorPiece::Truncated { moments, .. } => moments.mean * moments.mean + moments.var,
        }
    }

    pub fn sign_probs(&self) -> SignProbs {
        match *self {
            PosteriorPiece::Point(v) => {
                if v < 0.0 {
                    (1.0, 0.0, 0.0)
                } else if v > 0.0 {
                    (0.0, 0.0, 1.0)
                } else {
                    (0.0, 1.0, 0.0)
                }
            }
            PosteriorPiece::Normal { mean, sd } => {
                if sd == 0.0 {
                    return PosteriorPiece::Point(mean).sign_probs();
                }
                let z = mean / sd;
                complement_pair(norm_cdf(-z), norm_cdf(z))
            }
            PosteriorPiece::Truncated {
                m,
                sd,
                lo,
                hi,
                moments,
            } => {
                if hi <= 0.0 {
                    return (1.0, 0.0, 0.0);
                }
                if lo >= 0.0 {
                    return (0.0, 0.0, 1.0);
                }
                let a = (lo - m) / sd;
                let b = (hi - m) / sd;
                let z = -m / sd;
                let neg = (log_norm_cdf_diff(a, z) - moments.log_mass).exp();
                let pos = (log_norm_cdf_diff(z, b) - moments.log_mass).exp();
                complement_pair(neg, pos)
            }
        }
    }

    /// Draw given a uniform variate `u` in (0, 1) and a standard normal `z`.
    pub fn draw(&self, u: f64, z: f64) -> f64 {
        match *self {
            PosteriorPiece::Point(v) => v,
            PosteriorPiece::Normal { mean, sd } => mean + sd * z,
            PosteriorPiece::Truncated {
                m,
                sd,
                lo,
                hi,
                moments,
            } => {
                let a = (lo - m) / sd;
                let b = (hi - m) / sd;
                let t = if a + b > 0.0 {
                    -truncated_std_quantile(-b, -a, moments.log_mass, u)
                } else {
                    truncated_std_quantile(a, b, moments.log_mass, u)
                };
                (m + sd * t).clamp(lo, hi)
            }
        }
    }
}

/// Keeps the smaller probability as computed and derives the other from it.
fn complement_pair(neg: f64, pos: f64) -> SignProbs {
    if neg <= pos {
        (neg, 0.0, 1.0 - neg)
    } else {
        (1.0 - pos, 0.0, pos)
    }
}

/// Inverse CDF of the standard normal truncated to `[a, b]` (`a + b <= 0`),
/// evaluated on the log-probability scale.
fn truncated_std_quantile(a: f64, b: f64, log_mass: f64, u: f64) -> f64 {
    let log_target = log_add_exp(log_norm_cdf(a), u.ln() + log_mass);
    norm_quantile_log(log_target.min(0.0)).clamp(a, b)
}

/// At most two weighted posterior pieces per component.
#[derive(Debug, Clone, Copy)]
pub struct ComponentPieces {
    items: [(f64, PosteriorPiece); 2],
    len: usize,
}

impl ComponentPieces {
    fn one(p: PosteriorPiece) -> Self {
        Self {
            items: [(1.0, p), (0.0, p)],
            len: 1,
        }
    }

    fn two(a: (f64, PosteriorPiece), b: (f64, PosteriorPiece)) -> Self {
        Self {
            items: [a, b],
            len: 2,
        }
    }

    pub fn as_slice(&self) -> &[(f64, PosteriorPiece)] {
        &self.items[..self.len]
    }
}

/// Posterior of `theta` given `x ~ N(theta, s^2)` and `theta ~ component`,
/// as weighted pieces (two for a Laplace slab, one otherwise).
pub fn posterior_pieces(x: f64, s: f64, comp: &Component) -> ComponentPieces {
    match *comp {
        Component::Point { loc } => ComponentPieces::one(PosteriorPiece::Point(loc)),
        Component::Normal { mean, var } => {
            if var == 0.0 {
                return ComponentPieces::one(PosteriorPiece::Point(mean));
            }
            let s2 = s * s;
            let shrink = var / (var + s2);
            ComponentPieces::one(PosteriorPiece::Normal {
                mean: mean + shrink * (x - mean),
                sd: (shrink * s2).sqrt(),
            })
        }
        Component::Exponential { loc, rate } => ComponentPieces::one(PosteriorPiece::truncated(
            x - rate * s * s,
            s,
            loc,
            f64::INFINITY,
        )),
        Component::Laplace { loc, rate } => {
            let (pos, neg) = laplace_branches(x - loc, s, rate);
            let total = log_add_exp(pos, neg);
            let s2 = s * s;
            ComponentPieces::two(
                (
                    (pos - total).exp(),
                    PosteriorPiece::truncated(x - rate * s2, s, loc, f64::INFINITY),
                ),
                (
                    (neg - total).exp(),
                    PosteriorPiece::truncated(x + rate * s2, s, f64::NEG_INFINITY, loc),
                ),
            )
        }
        Component::Uniform { lo, hi } => {
            if lo == hi {
                ComponentPieces::one(PosteriorPiece::Point(lo))
            } else {
                ComponentPieces::one(PosteriorPiece::truncated(x, s, lo, hi))
            }
        }
    }
}

/// Posterior moments and sign probabilities for a single component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentPosterior {
    pub mean: f64,
    pub second_moment: f64,
    pub prob_negative: f64,
    pub prob_zero: f64,
    pub prob_positive: f64,
}

pub fn component_posterior(x: f64, s: f64, comp: &Component) -> ComponentPosterior {
    let pieces = posterior_pieces(x, s, comp);
    let mut out = ComponentPosterior {
        mean: 0.0,
        second_moment: 0.0,
        prob_negative: 0.0,
        prob_zero: 0.0,
        prob_positive: 0.0,
    };
    for &(w, piece) in pieces.as_slice() {
        if w == 0.0 {
            continue;
        }
        let (neg, zero, pos) = piece.sign_probs();
        out.mean += w * piece.mean();
        out.second_moment += w * piece.second_moment();
        out.prob_negative += w * neg;
        out.prob_zero += w * zero;
        out.prob_positive += w * pos;
    }
    out
}
