//! Posterior summaries, data log-likelihood, sampling, and credible
//! intervals for any fitted prior.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Open01, StandardNormal};

use crate::error::{EbnmError, Result};
use crate::kernels::{posterior_pieces, Component, PosteriorPiece};
use crate::model::{FittedPrior, ObservationSet, PosteriorSummary};
use crate::special::log_sum_exp;

/// Log-likelihood contributions `ln p(x_i | s_i, g)`.
pub fn log_marginals(obs: &ObservationSet, g: &FittedPrior) -> Vec<f64> {
    let comps = g.weighted_components();
    let mut terms = Vec::with_capacity(comps.len());
    obs.iter()
        .map(|(x, s)| {
            terms.clear();
            terms.extend(comps.iter().map(|(w, c)| w.ln() + c.log_marginal(x, s)));
            log_sum_exp(&terms)
        })
        .collect()
}

/// `sum_i ln p(x_i | s_i, g)`.
pub fn log_likelihood(obs: &ObservationSet, g: &FittedPrior) -> f64 {
    log_marginals(obs, g).iter().sum()
}

/// Posterior of one observation as weighted pieces; weights sum to 1.
fn posterior_mixture(x: f64, s: f64, comps: &[(f64, Component)]) -> Vec<(f64, PosteriorPiece)> {
    let logw: Vec<f64> = comps
        .iter()
        .map(|(w, c)| w.ln() + c.log_marginal(x, s))
        .collect();
    let total = log_sum_exp(&logw);
    let mut out = Vec::with_capacity(comps.len() + 1);
    for ((_, c), lw) in comps.iter().zip(&logw) {
        let r = (lw - total).exp();
        if r == 0.0 {
            continue;
        }
        for &(w, piece) in posterior_pieces(x, s, c).as_slice() {
            if w > 0.0 {
                out.push((r * w, piece));
            }
        }
    }
    out
}

fn piece_variance(p: &PosteriorPiece) -> f64 {
    match *p {
        PosteriorPiece::Point(_) => 0.0,
        PosteriorPiece::Normal { sd, .. } => sd * sd,
        PosteriorPiece::Truncated { moments, .. } => moments.var,
    }
}

/// Posterior means, SDs, second moments, and local false sign rates.
///
/// A point mass at zero counts towards both `P(theta <= 0)` and
/// `P(theta >= 0)`.
pub fn posterior_summary(obs: &ObservationSet, g: &FittedPrior) -> PosteriorSummary {
    let comps = g.weighted_components();
    let n = obs.len();
    let mut out = PosteriorSummary {
        mean: Vec::with_capacity(n),
        sd: Vec::with_capacity(n),
        second_moment: Vec::with_capacity(n),
        lfsr: Vec::with_capacity(n),
    };
    for (x, s) in obs.iter() {
        let pieces = posterior_mixture(x, s, &comps);
        let mean: f64 = pieces.iter().map(|(w, p)| w * p.mean()).sum();
        let var: f64 = pieces
            .iter()
            .map(|(w, p)| w * (piece_variance(p) + (p.mean() - mean).powi(2)))
            .sum();
        let (mut neg, mut zero, mut pos) = (0.0, 0.0, 0.0);
        for (w, p) in &pieces {
            let (a, b, c) = p.sign_probs();
            neg += w * a;
            zero += w * b;
            pos += w * c;
        }
        let lfsr = (neg + zero).min(pos + zero).clamp(0.0, 1.0);
        out.mean.push(mean);
        out.sd.push(var.max(0.0).sqrt());
        out.second_moment.push(var.max(0.0) + mean * mean);
        out.lfsr.push(lfsr);
    }
    out
}

/// Draws stored row-major: row `j` is draw `j` for every observation.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawMatrix {
    nsamp: usize,
    n: usize,
    values: Vec<f64>,
}

impl DrawMatrix {
    pub fn nsamp(&self) -> usize {
        self.nsamp
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, draw: usize, obs: usize) -> f64 {
        self.values[draw * self.n + obs]
    }

    pub fn row(&self, draw: usize) -> &[f64] {
        &self.values[draw * self.n..(draw + 1) * self.n]
    }

    /// All draws for one observation.
    pub fn column(&self, obs: usize) -> Vec<f64> {
        (0..self.nsamp).map(|j| self.get(j, obs)).collect()
    }
}

struct ObservationPosterior {
    cumulative: Vec<f64>,
    pieces: Vec<PosteriorPiece>,
}

impl ObservationPosterior {
    fn pick(&self, u: f64) -> &PosteriorPiece {
        let total = *self.cumulative.last().expect("nonempty posterior");
        let k = self.cumulative.partition_point(|&c| c < u * total);
        &self.pieces[k.min(self.pieces.len() - 1)]
    }
}

/// Seeded posterior sampler bound to one dataset and prior.
///
/// Observation `i` draws from its own stream of a ChaCha8 generator, so the
/// draws for one observation do not depend on `n`. Successive calls to
/// [`PosteriorSampler::draw`] continue the streams.
pub struct PosteriorSampler {
    posteriors: Vec<ObservationPosterior>,
    rngs: Vec<ChaCha8Rng>,
}

impl PosteriorSampler {
    pub fn new(obs: &ObservationSet, g: &FittedPrior, seed: u64) -> Self {
        let comps = g.weighted_components();
        let posteriors = obs
            .iter()
            .map(|(x, s)| {
                let mix = posterior_mixture(x, s, &comps);
                let mut acc = 0.0;
                let cumulative = mix
                    .iter()
                    .map(|(w, _)| {
                        acc += w;
                        acc
                    })
                    .collect();
                ObservationPosterior {
                    cumulative,
                    pieces: mix.into_iter().map(|(_, p)| p).collect(),
                }
            })
            .collect();
        let rngs = (0..obs.len())
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                rng
            })
            .collect();
        Self { posteriors, rngs }
    }

    pub fn n(&self) -> usize {
        self.posteriors.len()
    }

    /// `nsamp` joint draws of `(theta_1, ..., theta_n)`.
    pub fn draw(&mut self, nsamp: usize) -> DrawMatrix {
        let n = self.n();
        let mut values = vec![0.0; nsamp * n];
        for (i, (post, rng)) in self.posteriors.iter().zip(self.rngs.iter_mut()).enumerate() {
            for j in 0..nsamp {
                let piece = post.pick(rng.sample(Open01));
                let theta = match piece {
                    PosteriorPiece::Point(v) => *v,
                    PosteriorPiece::Normal { .. } => piece.draw(0.5, rng.sample(StandardNormal)),
                    PosteriorPiece::Truncated { .. } => piece.draw(rng.sample(Open01), 0.0),
                };
                values[j * n + i] = theta;
            }
        }
        DrawMatrix { nsamp, n, values }
    }
}

/// Convenience wrapper: a fresh sampler with `seed`, drawn once.
pub fn posterior_sample(obs: &ObservationSet, g: &FittedPrior, nsamp: usize, seed: u64) -> DrawMatrix {
    PosteriorSampler::new(obs, g, seed).draw(nsamp)
}

/// Sample quantile with linear interpolation between order statistics
/// (the "type 7" definition). Reorders `v`.
pub fn quantile(v: &mut [f64], p: f64) -> f64 {
    let len = v.len();
    let h = (len - 1) as f64 * p;
    let lo = h.floor() as usize;
    let (_, &mut a, rest) = v.select_nth_unstable_by(lo, f64::total_cmp);
    if lo + 1 >= len || h == lo as f64 {
        return a;
    }
    let b = rest.iter().copied().fold(f64::INFINITY, f64::min);
    a + (h - lo as f64) * (b - a)
}

/// Equal-tailed empirical interval `[q((1-level)/2), q(1-(1-level)/2)]` for
/// every observation.
pub fn credible_interval(draws: &DrawMatrix, level: f64) -> Result<Vec<(f64, f64)>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(EbnmError::InvalidArgument(format!(
            "credible level {level} must lie in (0, 1)"
        )));
    }
    if draws.nsamp < 100 {
        return Err(EbnmError::InvalidArgument(format!(
            "credible intervals need at least 100 draws, got {}",
            draws.nsamp
        )));
    }
    let tail = 0.5 * (1.0 - level);
    Ok((0..draws.n)
        .map(|i| {
            let mut col = draws.column(i);
            let lo = quantile(&mut col, tail);
            let hi = quantile(&mut col, 1.0 - tail);
            (lo, hi)
        })
        .collect())
}
