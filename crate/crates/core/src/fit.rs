//! Top-level EBNM solver: fit the prior, then summarize the posteriors.

use crate::error::{EbnmError, Result};
use crate::mix_fit::fit_nonparametric;
use crate::model::{EbnmResult, FitDiagnostics, FittedPrior, ObservationSet, PriorFamilySpec};
use crate::param_fit::fit_parametric;
use crate::posterior::{log_likelihood, posterior_summary, PosteriorSampler};

/// Estimates `g` from `obs` within the requested family (or takes `g_init`
/// as given when `fix_g` is set) and computes posterior summaries.
pub fn ebnm(obs: &ObservationSet, spec: &PriorFamilySpec) -> Result<EbnmResult> {
    spec.validate()?;
    let family = spec.family;
    let (fitted_prior, diagnostics) = match &spec.g_init {
        Some(g) if spec.fix_g => (g.clone(), FitDiagnostics::None),
        _ if family.is_parametric() => {
            let init = spec.g_init.as_ref().and_then(|g| g.as_parametric());
            let fit = fit_parametric(obs, family, spec.mode, &spec.scale, init)?;
            let diagnostics = if fit.iterations == 0 {
                FitDiagnostics::None
            } else {
                FitDiagnostics::Optimizer {
                    iterations: fit.iterations,
                }
            };
            (FittedPrior::parametric(family, fit.prior), diagnostics)
        }
        _ => {
            let fit = fit_nonparametric(obs, spec)?;
            (
                FittedPrior::mixture(family, fit.prior),
                FitDiagnostics::MixtureWeights(fit.certificate),
            )
        }
    };
    let log_likelihood = log_likelihood(obs, &fitted_prior);
    if !log_likelihood.is_finite() {
        return Err(EbnmError::InvalidPrior(
            "the prior assigns zero likelihood to the data".into(),
        ));
    }
    Ok(EbnmResult {
        observations: obs.clone(),
        posterior: posterior_summary(obs, &fitted_prior),
        fitted_prior,
        log_likelihood,
        diagnostics,
    })
}

impl EbnmResult {
    /// Posterior sampler for this fit.
    pub fn sampler(&self, seed: u64) -> PosteriorSampler {
        PosteriorSampler::new(&self.observations, &self.fitted_prior, seed)
    }
}
