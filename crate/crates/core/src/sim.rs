//! Simulation scenarios: sparse true means plus unit-variance noise.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, StandardNormal};

use crate::error::{EbnmError, Result};
use crate::model::{validate_observations, ObservationSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    /// `0.9 delta_0 + 0.1 N(0, 2^2)`
    PointNormal,
    /// `0.8 delta_0 + 0.2 * 1.5 t_5`
    PointT,
    /// `0.5 delta_0 + 0.5 U[-5, 10]`
    Tophat,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::PointNormal, Scenario::PointT, Scenario::Tophat];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::PointNormal => "point-normal",
            Scenario::PointT => "point-t",
            Scenario::Tophat => "tophat",
        }
    }

    /// Weight of the point mass at zero.
    pub fn null_fraction(self) -> f64 {
        match self {
            Scenario::PointNormal => 0.9,
            Scenario::PointT => 0.8,
            Scenario::Tophat => 0.5,
        }
    }

    fn draw_nonnull(self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Scenario::PointNormal => 2.0 * rng.sample::<f64, _>(StandardNormal),
            Scenario::PointT => {
                let z: f64 = rng.sample(StandardNormal);
                let chi2: f64 = rng.sample(ChiSquared::new(5.0).expect("valid dof"));
                1.5 * z / (chi2 / 5.0).sqrt()
            }
            Scenario::Tophat => rng.random_range(-5.0..10.0),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = EbnmError;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| EbnmError::UnknownScenario(s.to_string()))
    }
}

/// True means and observations of one simulated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTruth {
    pub theta: Vec<f64>,
    pub x: Vec<f64>,
    pub s: Vec<f64>,
    pub scenario: Scenario,
    pub seed: u64,
}

impl SimulationTruth {
    pub fn observations(&self) -> ObservationSet {
        validate_observations(&self.x, self.s.clone()).expect("simulated data are valid")
    }
}

/// Simulates `n` true means from `scenario` and adds `N(0, 1)` noise.
pub fn simulate_scenario(scenario: Scenario, n: usize, seed: u64) -> Result<SimulationTruth> {
    if n == 0 {
        return Err(EbnmError::InvalidArgument("n must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    for _ in 0..n {
        let t = if rng.random::<f64>() < scenario.null_fraction() {
            0.0
        } else {
            scenario.draw_nonnull(&mut rng)
        };
        let noise: f64 = rng.sample(StandardNormal);
        theta.push(t);
        x.push(t + noise);
    }
    Ok(SimulationTruth {
        theta,
        x,
        s: vec![1.0; n],
        scenario,
        seed,
    })
}
