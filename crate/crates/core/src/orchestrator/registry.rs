//! NRF emulation: NF profiles and analytics subscriptions.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::Hostname;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RegistryError {
    #[error("{0} is already registered")]
    Duplicate(Hostname),
    #[error("{0} has no issued identity")]
    NotIssued(Hostname),
    #[error("{0} is not registered")]
    Unknown(Hostname),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub has_gpu: bool,
    pub supported_model_kinds: Vec<String>,
    /// percent, 0..=100
    pub traffic_load: u8,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NfProfile {
    pub hostname: Hostname,
    pub capabilities: Capabilities,
}

#[derive(Clone, Debug)]
pub struct Registry {
    issued: BTreeSet<Hostname>,
    profiles: BTreeMap<Hostname, NfProfile>,
    subscribed: BTreeSet<Hostname>,
}

impl Registry {
    pub fn new(issued: impl IntoIterator<Item = Hostname>) -> Self {
        Self {
            issued: issued.into_iter().collect(),
            profiles: BTreeMap::new(),
            subscribed: BTreeSet::new(),
        }
    }

    pub fn register(&mut self, profile: NfProfile) -> Result<(), RegistryError> {
        let h = profile.hostname;
        if !self.issued.contains(&h) {
            return Err(RegistryError::NotIssued(h));
        }
        if self.profiles.contains_key(&h) {
            return Err(RegistryError::Duplicate(h));
        }
        self.profiles.insert(h, profile);
        Ok(())
    }

    pub fn discover(&self, h: &Hostname) -> Option<&NfProfile> {
        self.profiles.get(h)
    }

    pub fn profiles(&self) -> impl Iterator<Item = &NfProfile> {
        self.profiles.values()
    }

    /// Idempotent.
    pub fn subscribe(&mut self, h: Hostname) -> Result<(), RegistryError> {
        if !self.profiles.contains_key(&h) {
            return Err(RegistryError::Unknown(h));
        }
        self.subscribed.insert(h);
        Ok(())
    }

    pub fn unsubscribe(&mut self, h: Hostname) -> Result<(), RegistryError> {
        if !self.profiles.contains_key(&h) {
            return Err(RegistryError::Unknown(h));
        }
        self.subscribed.remove(&h);
        Ok(())
    }

    pub fn is_subscribed(&self, h: &Hostname) -> bool {
        self.subscribed.contains(h)
    }

    /// Subscribed NFs in hostname order.
    pub fn subscribers(&self) -> Vec<Hostname> {
        self.subscribed.iter().copied().collect()
    }

    pub fn subscribed_profiles(&self) -> Vec<&NfProfile> {
        self.subscribed.iter().map(|h| &self.profiles[h]).collect()
    }
}
