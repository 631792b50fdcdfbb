//! Shared data model: observations, prior family specifications, fitted
//! priors and result bundles.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{EbnmError, Result};
use crate::kernels::Component;
use crate::mix_fit::KktCertificate;

/// Observations `x_i ~ N(theta_i, s_i^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    x: Vec<f64>,
    s: Vec<f64>,
}

/// Standard errors as supplied by the caller: one per observation or a
/// single value shared by all of them.
#[derive(Debug, Clone, PartialEq)]
pub enum StandardErrors {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl From<f64> for StandardErrors {
    fn from(s: f64) -> Self {
        StandardErrors::Scalar(s)
    }
}

impl From<Vec<f64>> for StandardErrors {
    fn from(s: Vec<f64>) -> Self {
        StandardErrors::Vector(s)
    }
}

impl From<&[f64]> for StandardErrors {
    fn from(s: &[f64]) -> Self {
        StandardErrors::Vector(s.to_vec())
    }
}

/// Checks and broadcasts raw observations.
pub fn validate_observations(x: &[f64], s: impl Into<StandardErrors>) -> Result<ObservationSet> {
    if x.is_empty() {
        return Err(EbnmError::Empty);
    }
    let s = match s.into() {
        StandardErrors::Scalar(v) => vec![v; x.len()],
        StandardErrors::Vector(v) => {
            if v.len() != x.len() {
                return Err(EbnmError::LengthMismatch {
                    x_len: x.len(),
                    s_len: v.len(),
                });
            }
            v
        }
    };
    if let Some(index) = x.iter().position(|v| !v.is_finite()) {
        return Err(EbnmError::NonFiniteObservation { index });
    }
    if let Some(index) = s.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(EbnmError::NonPositiveStandardError { index });
    }
    Ok(ObservationSet { x: x.to_vec(), s })
}

impl ObservationSet {
    pub fn new(x: Vec<f64>, s: impl Into<StandardErrors>) -> Result<Self> {
        validate_observations(&x, s)
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn s(&self) -> &[f64] {
        &self.s
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.x.iter().copied().zip(self.s.iter().copied())
    }

    /// The common standard error when all `s_i` agree to 1e-12 relative.
    pub fn common_se(&self) -> Option<f64> {
        let s0 = self.s[0];
        self.s
            .iter()
            .all(|&s| (s - s0).abs() <= 1e-12 * s0)
            .then_some(s0)
    }

    pub fn min_se(&self) -> f64 {
        self.s.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `(c * x, c * s)` for `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let x: Vec<f64> = self.x.iter().map(|v| v * c).collect();
        let s: Vec<f64> = self.s.iter().map(|v| v * c).collect();
        validate_observations(&x, s)
    }
}

/// Prior families. The serialized names are the snake-case identifiers; the
/// short command-line aliases are accepted when parsing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorFamily {
    Normal,
    PointNormal,
    PointLaplace,
    PointExponential,
    NormalScaleMixture,
    UnimodalSymmetric,
    Unimodal,
    UnimodalNonnegative,
    UnimodalNonpositive,
    Npmle,
}

impl PriorFamily {
    pub const ALL: [PriorFamily; 10] = [
        PriorFamily::Normal,
        PriorFamily::PointNormal,
        PriorFamily::PointLaplace,
        PriorFamily::PointExponential,
        PriorFamily::NormalScaleMixture,
        PriorFamily::UnimodalSymmetric,
        PriorFamily::Unimodal,
        PriorFamily::UnimodalNonnegative,
        PriorFamily::UnimodalNonpositive,
        PriorFamily::Npmle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PriorFamily::Normal => "normal",
            PriorFamily::PointNormal => "point_normal",
            PriorFamily::PointLaplace => "point_laplace",
            PriorFamily::PointExponential => "point_exponential",
            PriorFamily::NormalScaleMixture => "normal_scale_mixture",
            PriorFamily::UnimodalSymmetric => "unimodal_symmetric",
            PriorFamily::Unimodal => "unimodal",
            PriorFamily::UnimodalNonnegative => "unimodal_nonnegative",
            PriorFamily::UnimodalNonpositive => "unimodal_nonpositive",
            PriorFamily::Npmle => "npmle",
        }
    }

    pub fn cli_name(self) -> &'static str {
        match self {
            PriorFamily::Normal => "normal",
            PriorFamily::PointNormal => "point-normal",
            PriorFamily::PointLaplace => "point-laplace",
            PriorFamily::PointExponential => "point-exponential",
            PriorFamily::NormalScaleMixture => "smn",
            PriorFamily::UnimodalSymmetric => "symm-u",
            PriorFamily::Unimodal => "unimodal",
            PriorFamily::UnimodalNonnegative => "unimodal-nn",
            PriorFamily::UnimodalNonpositive => "unimodal-np",
            PriorFamily::Npmle => "npmle",
        }
    }

    pub fn is_parametric(self) -> bool {
        matches!(
            self,
            PriorFamily::Normal
                | PriorFamily::PointNormal
                | PriorFamily::PointLaplace
                | PriorFamily::PointExponential
        )
    }

    pub fn supports_mode_estimation(self) -> bool {
        matches!(
            self,
            PriorFamily::Normal | PriorFamily::PointNormal | PriorFamily::PointLaplace
        )
    }

    /// Families whose members are all symmetric about the mode.
    pub fn is_symmetric(self) -> bool {
        matches!(
            self,
            PriorFamily::Normal
                | PriorFamily::PointNormal
                | PriorFamily::PointLaplace
                | PriorFamily::NormalScaleMixture
                | PriorFamily::UnimodalSymmetric
        )
    }

    /// Slab shape for the spike-and-slab families.
    pub fn slab(self) -> Option<SlabKind> {
        match self {
            PriorFamily::Normal | PriorFamily::PointNormal => Some(SlabKind::Normal),
            PriorFamily::PointLaplace => Some(SlabKind::Laplace),
            PriorFamily::PointExponential => Some(SlabKind::Exponential),
            _ => None,
        }
    }
}

impl fmt::Display for PriorFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PriorFamily {
    type Err = EbnmError;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        PriorFamily::ALL
            .iter()
            .copied()
            .find(|f| f.name() == t || f.cli_name() == t)
            .ok_or_else(|| EbnmError::InvalidSpec(format!("unknown prior family '{s}'")))
    }
}

/// Continuous slab used by the spike-and-slab families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlabKind {
    /// `N(mu, scale)`, scale is a variance.
    Normal,
    /// `Laplace(mu, scale)`, scale is a rate.
    Laplace,
    /// `mu + Exp(scale)`, scale is a rate.
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Fixed(f64),
    Estimate,
}

impl Default for Mode {
    fn default() -> Self {
        Mode::Fixed(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum ScaleSpec {
    #[default]
    Default,
    Fixed(f64),
    Grid(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorFamilySpec {
    pub family: PriorFamily,
    pub mode: Mode,
    pub scale: ScaleSpec,
    pub g_init: Option<FittedPrior>,
    pub fix_g: bool,
}

impl PriorFamilySpec {
    pub fn new(family: PriorFamily) -> Self {
        Self {
            family,
            mode: Mode::default(),
            scale: ScaleSpec::Default,
            g_init: None,
            fix_g: false,
        }
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_scale(mut self, scale: ScaleSpec) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_g_init(mut self, g: FittedPrior, fix_g: bool) -> Self {
        self.g_init = Some(g);
        self.fix_g = fix_g;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            Mode::Estimate if !self.family.supports_mode_estimation() => {
                return Err(EbnmError::InvalidSpec(format!(
                    "mode estimation is not available for the {} family",
                    self.family
                )));
            }
            Mode::Fixed(m) if !m.is_finite() => {
                return Err(EbnmError::InvalidSpec("mode must be finite".into()));
            }
            _ => {}
        }
        if self.fix_g && self.g_init.is_none() {
            return Err(EbnmError::InvalidSpec("fix_g requires g_init".into()));
        }
        match &self.scale {
            ScaleSpec::Fixed(v) if !(v.is_finite() && *v > 0.0) => {
                return Err(EbnmError::InvalidSpec("fixed scale must be positive".into()));
            }
            ScaleSpec::Grid(g) => {
                if g.is_empty() || g.iter().any(|v| !v.is_finite()) {
                    return Err(EbnmError::InvalidSpec("scale grid must be finite and nonempty".into()));
                }
                if self.family.is_parametric() {
                    return Err(EbnmError::InvalidSpec(format!(
                        "a scale grid is not meaningful for the parametric {} family",
                        self.family
                    )));
                }
                if self.family != PriorFamily::Npmle && g.iter().any(|v| *v <= 0.0) {
                    return Err(EbnmError::InvalidSpec("scale grid entries must be positive".into()));
                }
            }
            _ => {}
        }
        if let Some(g) = &self.g_init {
            g.validate()?;
            if g.family != self.family {
                return Err(EbnmError::InvalidSpec(format!(
                    "g_init was fit under {} but the requested family is {}",
                    g.family, self.family
                )));
            }
        }
        Ok(())
    }
}

/// Spike-and-slab record `pi0 * delta_mu + (1 - pi0) * slab(mu, scale)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParametricPrior {
    pub mu: f64,
    pub pi0: f64,
    pub scale: f64,
}

impl ParametricPrior {
    pub fn point_mass(mu: f64) -> Self {
        Self { mu, pi0: 1.0, scale: 0.0 }
    }

    pub fn is_point_mass(&self) -> bool {
        self.pi0 >= 1.0 || self.scale == 0.0
    }

    pub fn canonical(self) -> Self {
        if self.is_point_mass() {
            Self::point_mass(self.mu)
        } else {
            self
        }
    }

    fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() {
            return Err(EbnmError::InvalidPrior("mu must be finite".into()));
        }
        if !(0.0..=1.0).contains(&self.pi0) {
            return Err(EbnmError::InvalidPrior("pi0 must lie in [0, 1]".into()));
        }
        if !(self.scale >= 0.0 && self.scale.is_finite()) {
            return Err(EbnmError::InvalidPrior("scale must be finite and nonnegative".into()));
        }
        Ok(())
    }

    /// Weighted components of the prior (zero-weight components omitted).
    pub fn components(&self, slab: SlabKind) -> Vec<(f64, Component)> {
        if self.is_point_mass() {
            return vec![(1.0, Component::Point { loc: self.mu })];
        }
        let slab_component = match slab {
            SlabKind::Normal => Component::Normal {
                mean: self.mu,
                var: self.scale,
            },
            SlabKind::Laplace => Component::Laplace {
                loc: self.mu,
                rate: self.scale,
            },
            SlabKind::Exponential => Component::Exponential {
                loc: self.mu,
                rate: self.scale,
            },
        };
        let mut out = Vec::with_capacity(2);
        if self.pi0 > 0.0 {
            out.push((self.pi0, Component::Point { loc: self.mu }));
        }
        out.push((1.0 - self.pi0, slab_component));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixtureKind {
    PointMass,
    ZeroMeanNormal,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalComponent {
    pub mean: f64,
    pub var: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MixtureComponents {
    PointMass(Vec<f64>),
    Normal(Vec<NormalComponent>),
    /// Closed intervals `[lo, hi]`; a zero-width interval is a point mass.
    Uniform(Vec<[f64; 2]>),
}

impl MixtureComponents {
    pub fn kind(&self) -> MixtureKind {
        match self {
            MixtureComponents::PointMass(_) => MixtureKind::PointMass,
            MixtureComponents::Normal(_) => MixtureKind::ZeroMeanNormal,
            MixtureComponents::Uniform(_) => MixtureKind::Uniform,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            MixtureComponents::PointMass(v) => v.len(),
            MixtureComponents::Normal(v) => v.len(),
            MixtureComponents::Uniform(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn component(&self, k: usize) -> Component {
        match self {
            MixtureComponents::PointMass(v) => Component::Point { loc: v[k] },
            MixtureComponents::Normal(v) => Component::Normal {
                mean: v[k].mean,
                var: v[k].var,
            },
            MixtureComponents::Uniform(v) => {
                let [lo, hi] = v[k];
                if lo == hi {
                    Component::Point { loc: lo }
                } else {
                    Component::Uniform { lo, hi }
                }
            }
        }
    }

    pub fn to_components(&self) -> Vec<Component> {
        (0..self.len()).map(|k| self.component(k)).collect()
    }

    fn select(&self, keep: &[usize]) -> Self {
        match self {
            MixtureComponents::PointMass(v) => {
                MixtureComponents::PointMass(keep.iter().map(|&k| v[k]).collect())
            }
            MixtureComponents::Normal(v) => {
                MixtureComponents::Normal(keep.iter().map(|&k| v[k]).collect())
            }
            MixtureComponents::Uniform(v) => {
                MixtureComponents::Uniform(keep.iter().map(|&k| v[k]).collect())
            }
        }
    }

    /// Component permutation that sorts by location (point masses), by
    /// variance then mean (normals), or by width then left end (uniforms).
    fn sort_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        match self {
            MixtureComponents::PointMass(v) => idx.sort_by(|&a, &b| v[a].total_cmp(&v[b])),
            MixtureComponents::Normal(v) => idx.sort_by(|&a, &b| {
                v[a].var
                    .total_cmp(&v[b].var)
                    .then(v[a].mean.total_cmp(&v[b].mean))
            }),
            MixtureComponents::Uniform(v) => idx.sort_by(|&a, &b| {
                let wa = v[a][1] - v[a][0];
                let wb = v[b][1] - v[b][0];
                wa.total_cmp(&wb).then(v[a][0].total_cmp(&v[b][0]))
            }),
        }
        idx
    }
}

/// Finite mixture prior on a fixed grid of components.
#[derive(Debug, Clone, PartialEq)]
pub struct MixturePrior {
    pub components: MixtureComponents,
    pub weights: Vec<f64>,
}

impl MixturePrior {
    /// Builds a mixture with components sorted into canonical order.
    pub fn new(components: MixtureComponents, weights: Vec<f64>) -> Result<Self> {
        let m = Self { components, weights };
        m.validate()?;
        Ok(m.sorted())
    }

    pub fn with_uniform_weights(components: MixtureComponents) -> Result<Self> {
        let k = components.len();
        if k == 0 {
            return Err(EbnmError::InvalidPrior("mixture has no components".into()));
        }
        Self::new(components, vec![1.0 / k as f64; k])
    }

    pub fn kind(&self) -> MixtureKind {
        self.components.kind()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn sorted(self) -> Self {
        let order = self.components.sort_order();
        let weights = order.iter().map(|&k| self.weights[k]).collect();
        Self {
            components: self.components.select(&order),
            weights,
        }
    }

    /// Drops components with weight below `threshold` and renormalizes.
    pub fn pruned(&self, threshold: f64) -> Self {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&k| self.weights[k] >= threshold)
            .collect();
        let total: f64 = keep.iter().map(|&k| self.weights[k]).sum();
        Self {
            components: self.components.select(&keep),
            weights: keep.iter().map(|&k| self.weights[k] / total).collect(),
        }
    }

    pub fn weighted_components(&self) -> Vec<(f64, Component)> {
        self.weights
            .iter()
            .copied()
            .zip(self.components.to_components())
            .filter(|(w, _)| *w > 0.0)
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(EbnmError::InvalidPrior("mixture has no components".into()));
        }
        if self.components.len() != self.weights.len() {
            return Err(EbnmError::InvalidPrior(format!(
                "{} components but {} weights",
                self.components.len(),
                self.weights.len()
            )));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(EbnmError::InvalidPrior("weights must be finite and nonnegative".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(EbnmError::InvalidPrior(format!("weights sum to {total}, not 1")));
        }
        let ok = match &self.components {
            MixtureComponents::PointMass(v) => v.iter().all(|m| m.is_finite()),
            MixtureComponents::Normal(v) => v
                .iter()
                .all(|c| c.mean.is_finite() && c.var.is_finite() && c.var >= 0.0),
            MixtureComponents::Uniform(v) => v
                .iter()
                .all(|[l, r]| l.is_finite() && r.is_finite() && l <= r),
        };
        if !ok {
            return Err(EbnmError::InvalidPrior("malformed mixture component".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PriorForm {
    Parametric(ParametricPrior),
    Mixture(MixturePrior),
}

/// An estimated prior together with the family it was fit under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "repr::FittedPriorRepr", into = "repr::FittedPriorRepr")]
pub struct FittedPrior {
    pub family: PriorFamily,
    pub form: PriorForm,
}

impl FittedPrior {
    pub fn parametric(family: PriorFamily, prior: ParametricPrior) -> Self {
        Self {
            family,
            form: PriorForm::Parametric(prior),
        }
    }

    pub fn mixture(family: PriorFamily, prior: MixturePrior) -> Self {
        Self {
            family,
            form: PriorForm::Mixture(prior),
        }
    }

    pub fn as_parametric(&self) -> Option<&ParametricPrior> {
        match &self.form {
            PriorForm::Parametric(p) => Some(p),
            PriorForm::Mixture(_) => None,
        }
    }

    pub fn as_mixture(&self) -> Option<&MixturePrior> {
        match &self.form {
            PriorForm::Mixture(m) => Some(m),
            PriorForm::Parametric(_) => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.form, self.family.slab()) {
            (PriorForm::Parametric(p), Some(_)) => p.validate(),
            (PriorForm::Mixture(m), None) => m.validate(),
            _ => Err(EbnmError::InvalidPrior(format!(
                "prior form does not match the {} family",
                self.family
            ))),
        }
    }

    /// Weighted prior components, the common currency of the posterior code.
    pub fn weighted_components(&self) -> Vec<(f64, Component)> {
        match &self.form {
            PriorForm::Parametric(p) => p.components(self.family.slab().unwrap_or(SlabKind::Normal)),
            PriorForm::Mixture(m) => m.weighted_components(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fitted prior serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| EbnmError::InvalidPrior(e.to_string()))
    }
}

mod repr {
    use super::*;

    #[derive(Serialize, Deserialize)]
    #[serde(rename_all = "snake_case")]
    pub enum FormTag {
        Parametric,
        Mixture,
    }

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    pub enum ComponentRepr {
        Point(f64),
        Interval([f64; 2]),
        Normal(NormalComponent),
    }

    #[derive(Serialize, Deserialize)]
    pub struct MixtureRepr {
        pub kind: MixtureKind,
        pub components: Vec<ComponentRepr>,
        pub weights: Vec<f64>,
    }

    #[derive(Serialize, Deserialize)]
    pub struct FittedPriorRepr {
        pub family: PriorFamily,
        #[serde(rename = "type")]
        pub form: FormTag,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pub parametric: Option<ParametricPrior>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pub mixture: Option<MixtureRepr>,
    }

    impl From<FittedPrior> for FittedPriorRepr {
        fn from(g: FittedPrior) -> Self {
            match g.form {
                PriorForm::Parametric(p) => FittedPriorRepr {
                    family: g.family,
                    form: FormTag::Parametric,
                    parametric: Some(p),
                    mixture: None,
                },
                PriorForm::Mixture(m) => {
                    let kind = m.kind();
                    let components = match m.components {
                        MixtureComponents::PointMass(v) => {
                            v.into_iter().map(ComponentRepr::Point).collect()
                        }
                        MixtureComponents::Normal(v) => {
                            v.into_iter().map(ComponentRepr::Normal).collect()
                        }
                        MixtureComponents::Uniform(v) => {
                            v.into_iter().map(ComponentRepr::Interval).collect()
                        }
                    };
                    FittedPriorRepr {
                        family: g.family,
                        form: FormTag::Mixture,
                        parametric: None,
                        mixture: Some(MixtureRepr {
                            kind,
                            components,
                            weights: m.weights,
                        }),
                    }
                }
            }
        }
    }

    impl TryFrom<FittedPriorRepr> for FittedPrior {
        type Error = EbnmError;

        fn try_from(r: FittedPriorRepr) -> Result<Self> {
            let form = match (r.form, r.parametric, r.mixture) {
                (FormTag::Parametric, Some(p), _) => PriorForm::Parametric(p),
                (FormTag::Mixture, _, Some(m)) => {
                    let bad = || EbnmError::InvalidPrior(format!("components do not match kind {:?}", m.kind));
                    let components = match m.kind {
                        MixtureKind::PointMass => MixtureComponents::PointMass(
                            m.components
                                .iter()
                                .map(|c| match c {
                                    ComponentRepr::Point(v) => Ok(*v),
                                    _ => Err(bad()),
                                })
                                .collect::<Result<_>>()?,
                        ),
                        MixtureKind::ZeroMeanNormal => MixtureComponents::Normal(
                            m.components
                                .iter()
                                .map(|c| match c {
                                    ComponentRepr::Normal(n) => Ok(*n),
                                    _ => Err(bad()),
                                })
                                .collect::<Result<_>>()?,
                        ),
                        MixtureKind::Uniform => MixtureComponents::Uniform(
                            m.components
                                .iter()
                                .map(|c| match c {
                                    ComponentRepr::Interval(v) => Ok(*v),
                                    _ => Err(bad()),
                                })
                                .collect::<Result<_>>()?,
                        ),
                    };
                    PriorForm::Mixture(MixturePrior {
                        components,
                        weights: m.weights,
                    })
                }
                (FormTag::Parametric, None, _) => {
                    return Err(EbnmError::InvalidPrior("missing 'parametric' record".into()))
                }
                (FormTag::Mixture, _, None) => {
                    return Err(EbnmError::InvalidPrior("missing 'mixture' record".into()))
                }
            };
            let g = FittedPrior {
                family: r.family,
                form,
            };
            g.validate()?;
            Ok(g)
        }
    }
}

/// Per-observation posterior summaries.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct PosteriorSummary {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub lfsr: Vec<f64>,
}

/// How the prior was obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum FitDiagnostics {
    /// Closed form or supplied by the caller; nothing was optimized.
    None,
    Optimizer { iterations: usize },
    MixtureWeights(KktCertificate),
}

/// Everything produced by one EBNM fit.
#[derive(Debug, Clone)]
pub struct EbnmResult {
    pub observations: ObservationSet,
    pub fitted_prior: FittedPrior,
    pub log_likelihood: f64,
    pub posterior: PosteriorSummary,
    pub diagnostics: FitDiagnostics,
}
