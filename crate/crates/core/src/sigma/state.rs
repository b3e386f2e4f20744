use std::collections::BTreeSet;

use super::SessionError;
use crate::crypto::Hostname;

/// The NWDAF-ordered list of selected NFs; positions are list indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SelectionList(Vec<Hostname>);

impl SelectionList {
    pub fn new(hosts: Vec<Hostname>) -> Result<Self, SessionError> {
        let mut seen = BTreeSet::new();
        for h in &hosts {
            if !seen.insert(*h) {
                return Err(SessionError::DuplicateMember(*h));
            }
        }
        Ok(Self(hosts))
    }

    /// Selection list in ascending hostname order.
    pub fn sorted(mut hosts: Vec<Hostname>) -> Result<Self, SessionError> {
        hosts.sort();
        Self::new(hosts)
    }

    pub fn position(&self, h: &Hostname) -> Option<usize> {
        self.0.iter().position(|x| x == h)
    }

    pub fn contains(&self, h: &Hostname) -> bool {
        self.0.contains(h)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn hosts(&self) -> &[Hostname] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = &Hostname> {
        self.0.iter()
    }
}

/// Highest round number an NF has accepted; `None` means no round yet
/// (the `-1` sentinel).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ReplayCounter {
    last: Option<u64>,
}

impl ReplayCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn last(&self) -> Option<u64> {
        self.last
    }

    /// `true` iff `t` is strictly greater than every accepted round.
    pub fn is_fresh(&self, t: u64) -> bool {
        self.last.is_none_or(|last| t > last)
    }

    /// Accepts `t` and advances the counter, or aborts on reuse of a lower
    /// or equal value.
    pub fn check(&mut self, t: u64) -> Result<(), SessionError> {
        if !self.is_fresh(t) {
            return Err(SessionError::Replay {
                t,
                last: self.last.expect("non-fresh implies a last value"),
            });
        }
        self.last = Some(t);
        Ok(())
    }
}

/// A cached SIGMA-established secret shared with `peer`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairwiseSecret {
    pub peer: Hostname,
    pub secret: [u8; 32],
    pub last_round: Option<u64>,
}

impl PairwiseSecret {
    /// Records use of the secret for round `t`; refuses rounds that are not
    /// strictly newer than the last use.
    pub fn advance(&mut self, t: u64) -> Result<(), SessionError> {
        match self.last_round {
            Some(last) if t <= last => Err(SessionError::Replay { t, last }),
            _ => {
                self.last_round = Some(t);
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replay_examples() {
        let mut c = ReplayCounter::new();
        assert!(c.check(0).is_ok());
        let mut c = ReplayCounter { last: Some(5) };
        assert_eq!(c.check(5), Err(SessionError::Replay { t: 5, last: 5 }));
        assert_eq!(c.check(4), Err(SessionError::Replay { t: 4, last: 5 }));
        assert!(c.check(7).is_ok());
        assert_eq!(c.last(), Some(7));
    }

    #[test]
    fn replay_exhaustive_pairs() {
        for first in 0u64..=10 {
            for second in 0u64..=10 {
                let mut c = ReplayCounter::new();
                c.check(first).unwrap();
                assert_eq!(
                    c.check(second).is_ok(),
                    second > first,
                    "{first} then {second}"
                );
            }
        }
    }

    #[test]
    fn selection_rejects_duplicates() {
        let h = Hostname::for_index(1, "myran.example.com").unwrap();
        assert!(matches!(
            SelectionList::new(vec![h, h]),
            Err(SessionError::DuplicateMember(_))
        ));
    }

    #[test]
    fn pair_secret_is_monotone() {
        let mut s = PairwiseSecret {
            peer: Hostname::for_index(1, "myran.example.com").unwrap(),
            secret: [0; 32],
            last_round: None,
        };
        s.advance(3).unwrap();
        assert!(s.advance(3).is_err());
        s.advance(9).unwrap();
        assert_eq!(s.last_round, Some(9));
    }
}
