use std::collections::BTreeMap;

use super::messages::Container;
use super::state::SelectionList;
use super::SessionError;
use crate::crypto::Hostname;

/// Builds the Key Setup Request fan-out for a session: one `(dst, S, t)` per member.
pub fn begin_session(
    selection: &SelectionList,
    t0: u64,
    threshold: usize,
) -> Result<Vec<(Hostname, SelectionList, u64)>, SessionError> {
    if selection.len() < threshold {
        return Err(SessionError::BelowThreshold {
            size: selection.len(),
            threshold,
        });
    }
    Ok(selection
        .iter()
        .map(|h| (*h, selection.clone(), t0))
        .collect())
}

/// One leg of NWDAF container forwarding.
///
/// Batches are collected from every selected NF before anything is
/// forwarded; routing is a permutation of the collected containers.
#[derive(Debug)]
pub struct ContainerRouter {
    members: SelectionList,
    received: BTreeMap<Hostname, Vec<Container>>,
}

impl ContainerRouter {
    pub fn new(members: SelectionList) -> Self {
        Self {
            members,
            received: BTreeMap::new(),
        }
    }

    /// Records the batch sent by `from`.
    pub fn accept(&mut self, from: Hostname, batch: Vec<Container>) -> Result<(), SessionError> {
        if !self.members.contains(&from) {
            return Err(SessionError::NotMember(from));
        }
        if self.received.contains_key(&from) {
            return Err(SessionError::DuplicateBatch(from));
        }
        for c in &batch {
            if c.src != from {
                return Err(SessionError::ForgedSource {
                    claimed: c.src,
                    sender: from,
                });
            }
            if !self.members.contains(&c.dst) {
                return Err(SessionError::NotMember(c.dst));
            }
        }
        self.received.insert(from, batch);
        Ok(())
    }

    pub fn is_complete(&self) -> bool {
        self.received.len() == self.members.len()
    }

    /// Members that have not yet responded.
    pub fn missing(&self) -> Vec<Hostname> {
        self.members
            .iter()
            .filter(|h| !self.received.contains_key(h))
            .copied()
            .collect()
    }

    pub fn container_count(&self) -> usize {
        self.received.values().map(Vec::len).sum()
    }

    /// Releases the barrier: every member gets a (possibly empty) batch of the
    /// containers addressed to it, ordered by sender position.
    pub fn route(self) -> Result<Vec<(Hostname, Vec<Container>)>, SessionError> {
        if !self.is_complete() {
            return Err(SessionError::BarrierIncomplete(self.missing()));
        }
        let mut out: BTreeMap<Hostname, Vec<Container>> =
            self.members.iter().map(|h| (*h, Vec::new())).collect();
        for src in self.members.iter() {
            for c in self.received.get(src).into_iter().flatten() {
                out.get_mut(&c.dst)
                    .expect("dst checked on accept")
                    .push(c.clone());
            }
        }
        Ok(self
            .members
            .iter()
            .map(|h| (*h, out.remove(h).unwrap_or_default()))
            .collect())
    }
}
