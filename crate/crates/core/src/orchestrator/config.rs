use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::selection::{selection_size, CapabilityFilter, SelectionStrategy};
use super::transport::TransportKind;
use crate::crypto::Hostname;
use crate::fl::{LocalTrainer, PartitionLaw};
use crate::masking::ModulusConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    #[default]
    Uniform,
    Capability,
}

/// Orchestrator settings, read from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// K, registered and subscribed NFs
    pub population: usize,
    /// C
    pub fraction: f64,
    /// d
    pub dim: usize,
    pub modulus_bits: u32,
    /// f
    pub frac_bits: u32,
    pub max_abs_component: f64,
    pub max_count: u64,
    pub max_clients: u64,
    /// theta
    pub threshold: usize,
    pub timeout_ms: u64,
    pub strategy: StrategyKind,
    pub capability: CapabilityFilter,
    pub seed: u64,
    pub transport: TransportKind,
    pub rounds: u64,
    pub samples_per_nf: usize,
    pub noise_std: f64,
    pub partition: PartitionLaw,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub domain: String,
    /// simulated one-way link latency range
    pub min_latency_us: u64,
    pub max_latency_us: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        let m = ModulusConfig::default();
        let t = LocalTrainer::default();
        Self {
            population: 8,
            fraction: 0.5,
            dim: 16,
            modulus_bits: m.modulus_bits,
            frac_bits: m.frac_bits,
            max_abs_component: m.max_abs_component,
            max_count: m.max_count,
            max_clients: m.max_clients,
            threshold: 2,
            timeout_ms: 2000,
            strategy: StrategyKind::Uniform,
            capability: CapabilityFilter::default(),
            seed: 1,
            transport: TransportKind::Bus,
            rounds: 10,
            samples_per_nf: 64,
            noise_std: 0.0,
            partition: PartitionLaw::Iid,
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            batch_size: t.batch_size,
            domain: "myran.example.com".into(),
            min_latency_us: 200,
            max_latency_us: 5000,
        }
    }
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn modulus(&self) -> ModulusConfig {
        ModulusConfig {
            modulus_bits: self.modulus_bits,
            frac_bits: self.frac_bits,
            max_abs_component: self.max_abs_component,
            max_count: self.max_count,
            max_clients: self.max_clients,
        }
    }

    pub fn trainer(&self) -> LocalTrainer {
        LocalTrainer {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
        }
    }

    pub fn strategy(&self) -> SelectionStrategy {
        match self.strategy {
            StrategyKind::Uniform => SelectionStrategy::Uniform,
            StrategyKind::Capability => SelectionStrategy::Capability(self.capability.clone()),
        }
    }

    pub fn selection_size(&self) -> usize {
        selection_size(self.fraction, self.population)
    }

    /// Largest local dataset any NF gets under the partition law.
    pub fn max_local_samples(&self) -> usize {
        match self.partition {
            PartitionLaw::Iid => self.samples_per_nf,
            // the first NF takes the largest share, at most everything
            PartitionLaw::SizeSkewed { .. } => self.samples_per_nf * self.population,
        }
    }

    /// Rejects configs that cannot run, naming the violated bound.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.population < 1 {
            return Err(invalid("population must be at least 1"));
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(invalid(format!(
                "fraction C={} must lie in (0, 1]",
                self.fraction
            )));
        }
        if self.dim < 1 {
            return Err(invalid("dim must be at least 1"));
        }
        if self.threshold < 2 {
            return Err(invalid("threshold must be at least 2"));
        }
        let k_s = self.selection_size();
        if self.strategy == StrategyKind::Uniform && k_s < self.threshold {
            return Err(invalid(format!(
                "threshold: ceil(C*K) = {k_s} is below threshold {} (C={}, K={})",
                self.threshold, self.fraction, self.population
            )));
        }
        self.modulus()
            .validate()
            .map_err(|e| invalid(format!("modulus: {e}")))?;
        if self.population as u64 > self.max_clients {
            return Err(invalid(format!(
                "max_clients: population {} exceeds {}",
                self.population, self.max_clients
            )));
        }
        if self.samples_per_nf < 1 {
            return Err(invalid("samples_per_nf must be at least 1"));
        }
        if self.max_local_samples() as u64 > self.max_count {
            return Err(invalid(format!(
                "max_count: an NF may hold {} samples, above {}",
                self.max_local_samples(),
                self.max_count
            )));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid(format!("learning_rate={}", self.learning_rate)));
        }
        if self.batch_size < 1 {
            return Err(invalid("batch_size must be at least 1"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(invalid(format!("noise_std={}", self.noise_std)));
        }
        if self.timeout_ms == 0 {
            return Err(invalid("timeout_ms must be positive"));
        }
        if self.min_latency_us > self.max_latency_us {
            return Err(invalid("min_latency_us exceeds max_latency_us"));
        }
        if self.max_latency_us * 2 >= self.timeout_ms * 1000 {
            return Err(invalid(
                "timeout_ms must exceed a round trip at max_latency_us",
            ));
        }
        Hostname::for_index(0, &self.domain).map_err(|e| invalid(format!("domain: {e}")))?;
        if self.population as u64 > u32::MAX as u64 {
            return Err(invalid("population exceeds the NF id space"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid_and_roundtrips() {
        let c = SimConfig::default();
        c.validate().unwrap();
        assert_eq!(SimConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn partial_toml_uses_defaults() {
        let c = SimConfig::from_toml(
            "population = 4\nfraction = 1.0\ndim = 8\ntransport = \"socket\"\n",
        )
        .unwrap();
        assert_eq!(c.population, 4);
        assert_eq!(c.transport, TransportKind::Socket);
        assert_eq!(c.frac_bits, 24);
        assert!(SimConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn violations_name_the_bound() {
        let msg = |c: SimConfig| c.validate().unwrap_err().to_string();
        assert!(msg(SimConfig {
            fraction: 0.1,
            population: 10,
            ..Default::default()
        })
        .contains("threshold"));
        assert!(msg(SimConfig {
            max_abs_component: 1e12,
            ..Default::default()
        })
        .contains("modulus"));
        assert!(msg(SimConfig {
            population: 2000,
            ..Default::default()
        })
        .contains("max_clients"));
        assert!(msg(SimConfig {
            samples_per_nf: 100_000,
            ..Default::default()
        })
        .contains("max_count"));
        assert!(msg(SimConfig {
            domain: "short".into(),
            ..Default::default()
        })
        .contains("domain"));
        assert!(msg(SimConfig {
            fraction: 0.0,
            ..Default::default()
        })
        .contains("fraction"));
    }
}
