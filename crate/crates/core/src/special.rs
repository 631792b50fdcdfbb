//! Normal-distribution special functions built on the scaled complementary
//! error function `erfcx(x) = exp(x^2) erfc(x)`.
//!
//! Everything that touches a normal tail (log CDF, CDF differences, inverse
//! Mills ratios, truncated-normal quantiles) goes through [`erfcx`], so the
//! far tails never underflow.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2};

/// `0.5 * ln(2 pi)`
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;
const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

/// Scaled complementary error function `exp(x^2) * erfc(x)`.
pub fn erfcx(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        if x < -26.7 {
            return f64::INFINITY;
        }
        return 2.0 * (x * x).exp() - erfcx(-x);
    }
    if x < 12.0 {
        (x * x).exp() * libm::erfc(x)
    } else if x.is_infinite() {
        0.0
    } else {
        // Continued fraction, evaluated bottom-up; 40 levels are far more
        // than needed for x >= 12.
        let mut t = x;
        for k in (1..=40).rev() {
            t = x + 0.5 * k as f64 / t;
        }
        FRAC_1_SQRT_PI / t
    }
}

/// Standard normal log density.
#[inline]
pub fn log_norm_pdf(z: f64) -> f64 {
    -0.5 * z * z - HALF_LN_2PI
}

/// Log density of `N(mean, sd^2)` at `x`.
#[inline]
pub fn log_normal_density(x: f64, mean: f64, sd: f64) -> f64 {
    log_norm_pdf((x - mean) / sd) - sd.ln()
}

/// Standard normal CDF.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// `ln Phi(z)`, accurate in both tails.
pub fn log_norm_cdf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    if z == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if z >= 0.0 {
        (-0.5 * libm::erfc(z * FRAC_1_SQRT_2)).ln_1p()
    } else {
        (0.5 * erfcx(-z * FRAC_1_SQRT_2)).ln() - 0.5 * z * z
    }
}

/// Inverse Mills ratio `phi(z) / Phi(z)`, the derivative of `ln Phi(z)`.
pub fn inv_mills(z: f64) -> f64 {
    if z < 0.0 {
        SQRT_2_OVER_PI / erfcx(-z * FRAC_1_SQRT_2)
    } else {
        (log_norm_pdf(z) - log_norm_cdf(z)).exp()
    }
}

/// `ln(1 - exp(d))` for `d <= 0`.
#[inline]
pub fn log1mexp(d: f64) -> f64 {
    if d > -LN_2 {
        (-d.exp_m1()).ln()
    } else {
        (-d.exp()).ln_1p()
    }
}

/// `ln(exp(a) + exp(b))`.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `ln sum exp(v_i)`.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || m == f64::INFINITY {
        return m;
    }
    m + v.iter().map(|&t| (t - m).exp()).sum::<f64>().ln()
}

/// `ln(Phi(b) - Phi(a))` for `a <= b`, without cancellation in either tail.
pub fn log_norm_cdf_diff(a: f64, b: f64) -> f64 {
    debug_assert!(a <= b, "log_norm_cdf_diff needs a <= b ({a} > {b})");
    if a >= b {
        return f64::NEG_INFINITY;
    }
    if b <= 0.0 {
        let lb = log_norm_cdf(b);
        lb + log1mexp(log_norm_cdf(a) - lb)
    } else if a >= 0.0 {
        log_norm_cdf_diff(-b, -a)
    } else {
        // Straddles zero: both erf terms are nonnegative.
        (0.5 * (libm::erf(b * FRAC_1_SQRT_2) + libm::erf(-a * FRAC_1_SQRT_2))).ln()
    }
}

/// Standard normal quantile of `exp(log_p)`.
///
/// A rational initial guess is polished by Newton steps on `ln Phi`, which
/// keeps full accuracy when `exp(log_p)` underflows.
pub fn norm_quantile_log(log_p: f64) -> f64 {
    if log_p.is_nan() {
        return f64::NAN;
    }
    if log_p == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if log_p >= 0.0 {
        return f64::INFINITY;
    }
    let mut t = acklam_initial(log_p);
    for _ in 0..4 {
        let f = log_norm_cdf(t) - log_p;
        let step = f / inv_mills(t);
        t -= step;
        if step.abs() <= 1e-15 * t.abs().max(1.0) {
            break;
        }
    }
    t
}

/// Standard normal quantile.
pub fn norm_quantile(p: f64) -> f64 {
    norm_quantile_log(p.ln())
}

fn acklam_initial(log_p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if log_p < P_LOW.ln() {
        return tail((-2.0 * log_p).sqrt());
    }
    let p = log_p.exp();
    if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let upper = -log_p.exp_m1();
        -tail((-2.0 * upper.ln()).sqrt())
    }
}
