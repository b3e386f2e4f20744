use rand::seq::index::sample;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::registry::{NfProfile, Registry};
use crate::sigma::SelectionList;

#[derive(Debug, Error, PartialEq)]
pub enum SelectionError {
    #[error("fraction C={0} must lie in (0, 1]")]
    InvalidFraction(f64),
    #[error("{size} selected NFs are below threshold {threshold}")]
    BelowThreshold { size: usize, threshold: usize },
}

/// Predicates over advertised capabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CapabilityFilter {
    pub require_gpu: bool,
    pub max_traffic_load: u8,
    pub model_kind: Option<String>,
}

impl Default for CapabilityFilter {
    fn default() -> Self {
        Self {
            require_gpu: false,
            max_traffic_load: 100,
            model_kind: None,
        }
    }
}

impl CapabilityFilter {
    pub fn admits(&self, p: &NfProfile) -> bool {
        let c = &p.capabilities;
        (!self.require_gpu || c.has_gpu)
            && c.traffic_load <= self.max_traffic_load
            && self
                .model_kind
                .as_ref()
                .is_none_or(|k| c.supported_model_kinds.contains(k))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionStrategy {
    Uniform,
    Capability(CapabilityFilter),
}

/// `ceil(C * K)`, treating products within float noise of an integer as that
/// integer so that e.g. `0.07 * 100000` gives 7000.
pub fn selection_size(c: f64, k: usize) -> usize {
    let x = c * k as f64;
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r as usize
    } else {
        x.ceil() as usize
    }
}

/// Samples `ceil(C * K)` of the eligible subscribers without replacement.
/// For the capability strategy, `K` counts only subscribers passing the filter.
pub fn select_clients<R: RngCore>(
    registry: &Registry,
    strategy: &SelectionStrategy,
    c: f64,
    threshold: usize,
    rng: &mut R,
) -> Result<SelectionList, SelectionError> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(SelectionError::InvalidFraction(c));
    }
    let eligible: Vec<_> = match strategy {
        SelectionStrategy::Uniform => registry.subscribers(),
        SelectionStrategy::Capability(f) => registry
            .subscribed_profiles()
            .into_iter()
            .filter(|p| f.admits(p))
            .map(|p| p.hostname)
            .collect(),
    };
    let k_s = selection_size(c, eligible.len());
    if k_s < threshold || k_s == 0 {
        return Err(SelectionError::BelowThreshold {
            size: k_s,
            threshold,
        });
    }
    let picked = sample(rng, eligible.len(), k_s)
        .into_iter()
        .map(|i| eligible[i])
        .collect();
    Ok(SelectionList::sorted(picked).expect("indices are distinct"))
}
