//! Nonparametric families: grid construction and mixture-weight estimation
//! on the probability simplex.
//!
//! The weight problem maximizes `(1/n) sum_i ln (L pi)_i` over the simplex.
//! A short EM run warms up the weights, then sequential quadratic
//! programming steps (an active-set QP on the nonnegative orthant, with the
//! sum constraint handled by the `+ sum(x)` reformulation) finish the job.
//! Success is certified by the KKT dual residual.

use rayon::prelude::*;

use crate::error::{EbnmError, Result};
use crate::kernels::Component;
use crate::model::{
    MixtureComponents, MixturePrior, Mode, NormalComponent, ObservationSet, PriorFamily,
    PriorFamilySpec, ScaleSpec,
};
use crate::optimize::cholesky_solve;

pub const KKT_TOL: f64 = 1e-8;
pub const SUPPORT_TOL: f64 = 1e-6;
pub const EM_WARM_START: usize = 20;
pub const MAX_SQP_ITER: usize = 500;
pub const PRUNE_THRESHOLD: f64 = 1e-10;
const DUPLICATE_TOL: f64 = 1e-14;
/// Ratio between consecutive default scales, `2^(1/8)`. Coarser grids lose
/// whole log-likelihood units against a single well-placed normal slab.
pub const SCALE_GRID_RATIO: f64 = 1.090_507_732_665_257_7;

/// Optimality certificate for the mixture-weight problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktCertificate {
    /// `max_k (1/n) sum_i L_ik / (L pi)_i - 1`.
    pub max_dual_residual: f64,
    /// Average log-likelihood `(1/n) sum_i ln p(x_i | g)`.
    pub objective: f64,
    pub iterations: usize,
}

/// Component log-likelihoods `ln l_ik`, stored with each row shifted by its
/// maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodMatrix {
    n: usize,
    k: usize,
    /// Row-major `ln l_ik - row_max_i`.
    shifted: Vec<f64>,
    row_max: Vec<f64>,
}

impl LikelihoodMatrix {
    pub fn from_log_values(n: usize, k: usize, log_values: Vec<f64>) -> Result<Self> {
        assert_eq!(log_values.len(), n * k, "matrix shape");
        let mut shifted = log_values;
        let mut row_max = Vec::with_capacity(n);
        for (i, row) in shifted.chunks_mut(k).enumerate() {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !m.is_finite() {
                return Err(EbnmError::UnsupportedByGrid { index: i });
            }
            row.iter_mut().for_each(|v| *v -= m);
            row_max.push(m);
        }
        Ok(Self {
            n,
            k,
            shifted,
            row_max,
        })
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.k
    }

    pub fn row_max(&self) -> &[f64] {
        &self.row_max
    }

    /// `ln l_ik` on the original scale.
    pub fn log_value(&self, i: usize, k: usize) -> f64 {
        self.shifted[i * self.k + k] + self.row_max[i]
    }

    /// Row-normalized likelihoods `l_ik / max_j l_ij`, row-major.
    pub fn normalized(&self) -> Vec<f64> {
        self.shifted.iter().map(|v| v.exp()).collect()
    }
}

/// Builds `ln l_ik` for every observation and component.
pub fn likelihood_matrix(obs: &ObservationSet, components: &[Component]) -> Result<LikelihoodMatrix> {
    let k = components.len();
    let rows: Vec<Vec<f64>> = obs
        .x()
        .par_iter()
        .zip(obs.s().par_iter())
        .map(|(&x, &s)| components.iter().map(|c| c.log_marginal(x, s)).collect())
        .collect();
    LikelihoodMatrix::from_log_values(obs.len(), k, rows.concat())
}

fn geometric_grid(lo: f64, hi: f64) -> Vec<f64> {
    let mut grid = vec![lo];
    while *grid.last().expect("nonempty") < hi {
        let next = grid.last().expect("nonempty") * SCALE_GRID_RATIO;
        grid.push(next);
    }
    grid
}

/// Default geometric scale grid around `mode`.
pub fn default_scale_grid(obs: &ObservationSet, mode: f64) -> Vec<f64> {
    let lo = obs.min_se() / 10.0;
    let excess = obs
        .iter()
        .map(|(x, s)| (x - mode).powi(2) - s * s)
        .fold(0.0, f64::max);
    let hi = (2.0 * excess.sqrt()).max(2.0 * lo);
    geometric_grid(lo, hi)
}

/// Number of point masses in the default NPMLE grid.
pub fn npmle_grid_size(n: usize, range: f64, min_se: f64) -> usize {
    let raw = (n as f64).powf(0.25) * range / (4.0 * min_se);
    // absorb rounding in the boundary case where raw is an integer
    let k = (raw - 1e-9).ceil();
    (k.max(2.0) as usize).min(300)
}

/// Grid of components (uniform weights) for a nonparametric family.
///
/// Every unimodal grid, the scale mixture of normals included, starts with
/// a point mass at the mode.
pub fn build_grid(spec: &PriorFamilySpec, obs: &ObservationSet) -> Result<MixturePrior> {
    let mode = match spec.mode {
        Mode::Fixed(m) => m,
        Mode::Estimate => {
            return Err(EbnmError::InvalidSpec(format!(
                "mode estimation is not available for the {} family",
                spec.family
            )))
        }
    };
    let scales = || match &spec.scale {
        ScaleSpec::Default => default_scale_grid(obs, mode),
        ScaleSpec::Fixed(v) => vec![*v],
        ScaleSpec::Grid(g) => g.clone(),
    };
    let components = match spec.family {
        PriorFamily::NormalScaleMixture => MixtureComponents::Normal(
            std::iter::once(0.0)
                .chain(scales())
                .map(|sd| NormalComponent {
                    mean: mode,
                    var: sd * sd,
                })
                .collect(),
        ),
        PriorFamily::UnimodalSymmetric => MixtureComponents::Uniform(
            std::iter::once([mode, mode])
                .chain(scales().into_iter().map(|a| [mode - a, mode + a]))
                .collect(),
        ),
        PriorFamily::UnimodalNonnegative => MixtureComponents::Uniform(
            std::iter::once([mode, mode])
                .chain(scales().into_iter().map(|a| [mode, mode + a]))
                .collect(),
        ),
        PriorFamily::UnimodalNonpositive => MixtureComponents::Uniform(
            std::iter::once([mode, mode])
                .chain(scales().into_iter().map(|a| [mode - a, mode]))
                .collect(),
        ),
        PriorFamily::Unimodal => {
            let a = scales();
            MixtureComponents::Uniform(
                std::iter::once([mode, mode])
                    .chain(a.iter().map(|&a| [mode - a, mode]))
                    .chain(a.iter().map(|&a| [mode, mode + a]))
                    .collect(),
            )
        }
        PriorFamily::Npmle => {
            let locations = match &spec.scale {
                ScaleSpec::Default => {
                    let lo = obs.x().iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = obs.x().iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    if lo == hi {
                        vec![lo]
                    } else {
                        let k = npmle_grid_size(obs.len(), hi - lo, obs.min_se());
                        (0..k)
                            .map(|j| lo + (hi - lo) * j as f64 / (k - 1) as f64)
                            .collect()
                    }
                }
                ScaleSpec::Fixed(v) => vec![*v],
                ScaleSpec::Grid(g) => g.clone(),
            };
            MixtureComponents::PointMass(locations)
        }
        f => {
            return Err(EbnmError::InvalidSpec(format!(
                "{f} is not a nonparametric family"
            )))
        }
    };
    MixturePrior::with_uniform_weights(components)
}

/// Dense column-major view of the row-normalized matrix, restricted to a
/// set of columns.
struct Design {
    n: usize,
    cols: Vec<Vec<f64>>,
}

impl Design {
    fn fitted(&self, x: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.n];
        for (col, &w) in self.cols.iter().zip(x) {
            if w != 0.0 {
                for (ui, c) in u.iter_mut().zip(col) {
                    *ui += w * c;
                }
            }
        }
        u
    }

    /// `(1/n) sum_i L_ik / u_i` for every column.
    fn ratios(&self, u: &[f64]) -> Vec<f64> {
        let inv: Vec<f64> = u.iter().map(|v| 1.0 / v).collect();
        let n = self.n as f64;
        self.cols
            .iter()
            .map(|col| col.iter().zip(&inv).map(|(a, b)| a * b).sum::<f64>() / n)
            .collect()
    }

    /// `-(1/n) sum_i ln u_i`, infinite if any `u_i <= 0`.
    fn neg_mean_log(&self, u: &[f64]) -> f64 {
        if u.iter().any(|v| !(*v > 0.0)) {
            return f64::INFINITY;
        }
        -u.iter().map(|v| v.ln()).sum::<f64>() / self.n as f64
    }
}

/// Groups of identical columns (max absolute difference below 1e-14).
fn duplicate_groups(cols: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    'outer: for (k, col) in cols.iter().enumerate() {
        for g in groups.iter_mut() {
            let rep = &cols[g[0]];
            if rep
                .iter()
                .zip(col)
                .all(|(a, b)| (a - b).abs() <= DUPLICATE_TOL)
            {
                g.push(k);
                continue 'outer;
            }
        }
        groups.push(vec![k]);
    }
    groups
}

fn columns(l: &LikelihoodMatrix) -> Vec<Vec<f64>> {
    let norm = l.normalized();
    (0..l.k)
        .map(|k| (0..l.n).map(|i| norm[i * l.k + k]).collect())
        .collect()
}

/// Plain EM updates `pi_k <- pi_k * (1/n) sum_i L_ik / (L pi)_i`.
///
/// Returns the weights and the average log-likelihood (row-normalized
/// scale) before each update and after the last one.
pub fn em_iterations(l: &LikelihoodMatrix, init: &[f64], iterations: usize) -> (Vec<f64>, Vec<f64>) {
    let design = Design {
        n: l.n,
        cols: columns(l),
    };
    let mut x = init.to_vec();
    let mut trace = Vec::with_capacity(iterations + 1);
    for _ in 0..iterations {
        let u = design.fitted(&x);
        trace.push(-design.neg_mean_log(&u));
        let r = design.ratios(&u);
        x.iter_mut().zip(&r).for_each(|(w, ri)| *w *= ri);
    }
    let u = design.fitted(&x);
    trace.push(-design.neg_mean_log(&u));
    (x, trace)
}

/// Minimizes `0.5 y'Hy + b'y` over `y >= 0` (Lawson-Hanson style active set).
fn nonneg_qp(h: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let k = b.len();
    let mut y = vec![0.0; k];
    let mut free: Vec<usize> = Vec::new();
    let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-13 * scale;
    for _ in 0..(3 * k + 10) {
        // negative gradient at y
        let w: Vec<f64> = (0..k)
            .map(|i| -(b[i] + (0..k).map(|j| h[i][j] * y[j]).sum::<f64>()))
            .collect();
        let candidate = (0..k)
            .filter(|i| !free.contains(i))
            .max_by(|&a, &c| w[a].total_cmp(&w[c]));
        match candidate {
            Some(j) if w[j] > tol => free.push(j),
            _ => break,
        }
        for _ in 0..(k + 5) {
            let sub: Vec<Vec<f64>> = free
                .iter()
                .map(|&i| free.iter().map(|&j| h[i][j]).collect())
                .collect();
            let rhs: Vec<f64> = free.iter().map(|&i| -b[i]).collect();
            let Some(z) = cholesky_solve(&sub, &rhs) else {
                // singular restriction: drop the newest column
                let last = free.pop().expect("nonempty");
                y[last] = 0.0;
                break;
            };
            if z.iter().all(|v| *v > 0.0) {
                for (&i, &zi) in free.iter().zip(&z) {
                    y[i] = zi;
                }
                break;
            }
            let mut alpha = 1.0f64;
            for (&i, &zi) in free.iter().zip(&z) {
                if zi <= 0.0 {
                    alpha = alpha.min(y[i] / (y[i] - zi));
                }
            }
            for (&i, &zi) in free.iter().zip(&z) {
                y[i] += alpha * (zi - y[i]);
            }
            free.retain(|&i| y[i] > 1e-300);
            for i in 0..k {
                if !free.contains(&i) {
                    y[i] = 0.0;
                }
            }
        }
    }
    y
}

fn certificate(design: &Design, x: &[f64], row_max_mean: f64, iterations: usize) -> (KktCertificate, Vec<f64>) {
    let u = design.fitted(x);
    let r = design.ratios(&u);
    let max_ratio = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (
        KktCertificate {
            max_dual_residual: max_ratio - 1.0,
            objective: -design.neg_mean_log(&u) + row_max_mean,
            iterations,
        },
        r,
    )
}

fn kkt_ok(cert: &KktCertificate, ratios: &[f64], x: &[f64]) -> bool {
    cert.max_dual_residual <= KKT_TOL
        && x
            .iter()
            .zip(ratios)
            .all(|(&w, &r)| w <= 1e-8 || r >= 1.0 - SUPPORT_TOL)
}

/// Maximizes the average log-likelihood over the simplex.
///
/// `init` defaults to uniform weights. Returns the weights and their KKT
/// certificate; fails with the best iterate if the certificate is not
/// reached within the iteration cap.
pub fn optimize_weights(l: &LikelihoodMatrix, init: Option<&[f64]>) -> Result<(Vec<f64>, KktCertificate)> {
    let k = l.k;
    let row_max_mean = l.row_max.iter().sum::<f64>() / l.n as f64;
    let all_cols = columns(l);
    let groups = duplicate_groups(&all_cols);
    let design = Design {
        n: l.n,
        cols: groups.iter().map(|g| all_cols[g[0]].clone()).collect(),
    };
    let uniform = vec![1.0 / k as f64; k];
    let init = init.unwrap_or(&uniform);
    if init.len() != k || init.iter().any(|w| !(*w >= 0.0)) || init.iter().sum::<f64>() <= 0.0 {
        return Err(EbnmError::InvalidArgument("initial weights must be a nonnegative vector of length K".into()));
    }
    let total: f64 = init.iter().sum();
    let mut x: Vec<f64> = groups
        .iter()
        .map(|g| g.iter().map(|&j| init[j]).sum::<f64>() / total)
        .collect();
    // keep every column reachable by the EM warm start
    if x.iter().all(|w| *w > 0.0) || design.neg_mean_log(&design.fitted(&x)).is_infinite() {
        let floor = 1e-6 / x.len() as f64;
        x.iter_mut().for_each(|w| *w = (*w).max(floor));
        let s: f64 = x.iter().sum();
        x.iter_mut().for_each(|w| *w /= s);
    }

    for _ in 0..EM_WARM_START {
        let u = design.fitted(&x);
        let r = design.ratios(&u);
        x.iter_mut().zip(&r).for_each(|(w, ri)| *w *= ri);
    }

    let kr = design.cols.len();
    let mut iterations = 0;
    let (mut cert, mut ratios) = certificate(&design, &normalize(&x), row_max_mean, 0);
    while !kkt_ok(&cert, &ratios, &normalize(&x)) && iterations < MAX_SQP_ITER {
        iterations += 1;
        let u = design.fitted(&x);
        let f = design.neg_mean_log(&u) + x.iter().sum::<f64>();
        let grad: Vec<f64> = design.ratios(&u).iter().map(|r| 1.0 - r).collect();
        // Hessian (1/n) A' diag(1/u^2) A
        let n = l.n as f64;
        let w2: Vec<f64> = u.iter().map(|v| 1.0 / (v * v)).collect();
        let mut h = vec![vec![0.0; kr]; kr];
        for a in 0..kr {
            let ca = &design.cols[a];
            let wa: Vec<f64> = ca.iter().zip(&w2).map(|(c, w)| c * w).collect();
            for b in a..kr {
                let v = wa.iter().zip(&design.cols[b]).map(|(p, q)| p * q).sum::<f64>() / n;
                h[a][b] = v;
                h[b][a] = v;
            }
        }
        let trace: f64 = (0..kr).map(|a| h[a][a]).sum::<f64>() / kr as f64;
        let ridge = 1e-10 * trace.max(1e-300);
        for (a, row) in h.iter_mut().enumerate() {
            row[a] += ridge;
        }
        let hx: Vec<f64> = (0..kr)
            .map(|a| (0..kr).map(|b| h[a][b] * x[b]).sum::<f64>())
            .collect();
        let lin: Vec<f64> = (0..kr).map(|a| grad[a] - hx[a]).collect();
        let y = nonneg_qp(&h, &lin);
        let p: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
        let slope: f64 = grad.iter().zip(&p).map(|(g, d)| g * d).sum();
        let mut step = 1.0;
        let mut moved = false;
        if slope < 0.0 {
            for _ in 0..50 {
                let cand: Vec<f64> = x
                    .iter()
                    .zip(&p)
                    .map(|(a, d)| (a + step * d).max(0.0))
                    .collect();
                let fc = design.neg_mean_log(&design.fitted(&cand)) + cand.iter().sum::<f64>();
                // near the optimum the predicted decrease drops below the roundoff
                // in f, so the full Newton step is accepted within that roundoff
                let noise = if step == 1.0 { 64.0 * f64::EPSILON * f.abs().max(1.0) } else { 0.0 };
                if fc <= f + 1e-2 * step * slope || (-slope < noise && fc <= f + noise) {
                    x = cand;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
        }
        if !moved {
            // fall back to an EM step, which never decreases the objective
            let r = design.ratios(&u);
            x.iter_mut().zip(&r).for_each(|(w, ri)| *w *= ri);
        }
        (cert, ratios) = certificate(&design, &normalize(&x), row_max_mean, iterations);
    }

    let reduced = normalize(&x);
    let mut weights = vec![0.0; k];
    for (g, &w) in groups.iter().zip(&reduced) {
        let share = w / g.len() as f64;
        for &j in g {
            weights[j] = share;
        }
    }
    cert.iterations = iterations;
    if !kkt_ok(&cert, &ratios, &reduced) {
        return Err(EbnmError::WeightSolverFailed {
            weights,
            residual: cert.max_dual_residual,
            iterations,
        });
    }
    Ok((weights, cert))
}

fn normalize(x: &[f64]) -> Vec<f64> {
    let s: f64 = x.iter().sum();
    x.iter().map(|v| v / s).collect()
}

/// Result of a nonparametric fit.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureFit {
    pub prior: MixturePrior,
    pub certificate: KktCertificate,
}

/// Builds the grid (or reuses the one in `g_init`), then estimates and
/// prunes the mixture weights.
pub fn fit_nonparametric(obs: &ObservationSet, spec: &PriorFamilySpec) -> Result<MixtureFit> {
    let (grid, init) = match spec.g_init.as_ref().and_then(|g| g.as_mixture()) {
        Some(m) => (m.clone(), Some(m.weights.clone())),
        None => (build_grid(spec, obs)?, None),
    };
    let components = grid.components.to_components();
    let l = likelihood_matrix(obs, &components)?;
    let (weights, certificate) = optimize_weights(&l, init.as_deref())?;
    let fitted = MixturePrior {
        components: grid.components,
        weights,
    };
    Ok(MixtureFit {
        prior: fitted.pruned(PRUNE_THRESHOLD),
        certificate,
    })
}
