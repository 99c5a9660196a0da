//! Seeded load perturbations: multiplicative Gaussian noise on active demand
//! and reactive demand rebuilt from a random power factor.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::grid::NetworkCase;

/// Recorded with every result so runs can be replayed.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng(seed, stream = sample index)";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// Standard deviation of the demand multiplier.
    pub sigma: f64,
    pub pf_min: f64,
    pub pf_max: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            sigma: 0.05,
            pf_min: 0.95,
            pf_max: 1.0,
            n_samples: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(ScenarioError::InvalidConfig(format!("sigma = {}", self.sigma)));
        }
        if !(0.0 < self.pf_min && self.pf_min <= self.pf_max && self.pf_max <= 1.0) {
            return Err(ScenarioError::InvalidConfig(format!(
                "power factor range [{}, {}] must satisfy 0 < min <= max <= 1",
                self.pf_min, self.pf_max
            )));
        }
        Ok(())
    }
}

/// One perturbed load instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub index: usize,
    /// Positions (in `case.buses`) of the perturbed buses, those with `p_d > 0`.
    pub load_buses: Vec<usize>,
    pub multipliers: Vec<f64>,
    pub power_factors: Vec<f64>,
    /// Demand at every bus after perturbation.
    pub p_d: Vec<f64>,
    pub q_d: Vec<f64>,
    /// SHA-256 over the power factor draws.
    pub pf_digest: String,
}

impl Scenario {
    /// The case with this scenario's demand.
    pub fn apply(&self, case: &NetworkCase) -> NetworkCase {
        case.with_demand(&self.p_d, &self.q_d)
    }
}

/// Draws scenario `index`. Depends only on `(config.seed, index)`.
pub fn generate_scenario(case: &NetworkCase, config: &ScenarioConfig, index: usize) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);
    let noise = Normal::new(1.0, config.sigma).expect("validated sigma");
    let pf_dist = Uniform::new_inclusive(config.pf_min, config.pf_max).expect("validated pf range");

    let mut p_d: Vec<f64> = case.buses.iter().map(|b| b.p_d).collect();
    let mut q_d: Vec<f64> = case.buses.iter().map(|b| b.q_d).collect();
    let mut load_buses = Vec::new();
    let mut multipliers = Vec::new();
    let mut power_factors = Vec::new();
    let mut hasher = Sha256::new();
    for (i, bus) in case.buses.iter().enumerate() {
        if bus.p_d <= 0.0 {
            continue;
        }
        let xi = loop {
            let x = noise.sample(&mut rng);
            if x > 0.0 {
                break x;
            }
        };
        let pf: f64 = rng.sample(pf_dist);
        hasher.update(pf.to_le_bytes());
        let sign = if bus.q_d < 0.0 { -1.0 } else { 1.0 };
        p_d[i] = bus.p_d * xi;
        q_d[i] = sign * p_d[i] * pf.acos().tan();
        load_buses.push(i);
        multipliers.push(xi);
        power_factors.push(pf);
    }
    Scenario {
        index,
        load_buses,
        multipliers,
        power_factors,
        p_d,
        q_d,
        pf_digest: hex::encode(hasher.finalize()),
    }
}

/// Scenarios `0..n_samples`, generated in parallel; the result does not
/// depend on scheduling.
pub fn generate_batch(case: &NetworkCase, config: &ScenarioConfig) -> Result<Vec<Scenario>, ScenarioError> {
    config.validate()?;
    Ok((0..config.n_samples)
        .into_par_iter()
        .map(|k| generate_scenario(case, config, k))
        .collect())
}
