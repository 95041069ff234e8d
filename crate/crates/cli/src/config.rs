//! TOML run configuration shared by all subcommands.

use std::path::Path;

use anyhow::Context;
use panoloc_core::localization::FilterConfig;
use panoloc_core::sim::{NoiseSpec, ScenarioSpec};
use panoloc_core::AggregationStrategy;
use serde::{Deserialize, Serialize};

/// Everything a run can be parameterized with. Every section and field is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioSpec,
    pub filter: FilterConfig,
    pub experiment: ExperimentConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Number of localization seeds per configuration; seed `i` is `seed + i`.
    pub seeds: usize,
    /// Aggregation strategy of the reference map used for localization.
    pub map_strategy: AggregationStrategy,
    /// Perception noise while localizing; the scenario noise when absent.
    pub localization_noise: Option<NoiseSpec>,
    /// Regularizer values of the `regularizer` ablation.
    pub regularizers: Vec<f64>,
    /// Transient flip probability of the noisy run in the `strategies` ablation.
    pub noisy_flip_probability: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seeds: 5,
            map_strategy: AggregationStrategy::Evidential,
            localization_noise: None,
            regularizers: vec![1.0, 5.0, 10.0, 15.0, 20.0],
            noisy_flip_probability: 0.3,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.filter.validate()?;
        self.scenario.noise.validate()?;
        if let Some(n) = &self.experiment.localization_noise {
            n.validate()?;
        }
        anyhow::ensure!(self.experiment.seeds > 0, "experiment.seeds must be at least 1");
        anyhow::ensure!(
            (0.0..=1.0).contains(&self.experiment.noisy_flip_probability),
            "experiment.noisy_flip_probability must lie in [0, 1]"
        );
        Ok(())
    }

    /// Perception noise during localization.
    pub fn localization_noise(&self) -> &NoiseSpec {
        self.experiment.localization_noise.as_ref().unwrap_or(&self.scenario.noise)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let cfg: RunConfig = toml::from_str(
            "[filter]\nparticles = 50\n[filter.weights]\nregularizer = 15.0\n[experiment]\nseeds = 2\n",
        )
        .unwrap();
        assert_eq!(cfg.filter.particles, 50);
        assert_eq!(cfg.filter.weights.regularizer, 15.0);
        assert!(cfg.filter.weights.use_instances);
        assert_eq!(cfg.experiment.seeds, 2);
        assert_eq!(cfg.scenario, ScenarioSpec::default());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[filter]\nparticle = 5\n").is_err());
        assert!(toml::from_str::<RunConfig>("[bogus]\n").is_err());
    }
}
