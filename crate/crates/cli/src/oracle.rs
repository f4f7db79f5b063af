//! Brute-force reference model for randomized runs.
//!
//! Holds nothing but the log of operations the server acknowledged. Every
//! query replays the whole log from the start, so it shares no state or data
//! structure with the store it is checked against.

use std::collections::BTreeSet;

use watn_core::{CheckIn, FeedEntry, ParticipantId};

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    Register(ParticipantId),
    CheckIn(ParticipantId, CheckIn),
    /// `sharer` shares to `reader`.
    Edge(ParticipantId, ParticipantId),
    Revoke(ParticipantId, ParticipantId),
    Delete(ParticipantId),
}

#[derive(Debug, Clone)]
pub struct Oracle {
    log: Vec<Event>,
    history_cap: usize,
}

impl Oracle {
    pub fn new(history_cap: usize) -> Self {
        Oracle {
            log: Vec::new(),
            history_cap,
        }
    }

    pub fn record(&mut self, e: Event) {
        self.log.push(e);
    }

    pub fn log(&self) -> &[Event] {
        &self.log
    }

    pub fn alive(&self, id: &ParticipantId) -> bool {
        self.log.iter().fold(false, |alive, e| match e {
            Event::Register(x) if x == id => true,
            Event::Delete(x) if x == id => false,
            _ => alive,
        })
    }

    pub fn edges(&self) -> BTreeSet<(ParticipantId, ParticipantId)> {
        let mut edges = BTreeSet::new();
        for e in &self.log {
            match e {
                Event::Edge(s, r) => {
                    edges.insert((s.clone(), r.clone()));
                }
                Event::Revoke(s, r) => {
                    edges.remove(&(s.clone(), r.clone()));
                }
                Event::Delete(x) => edges.retain(|(s, r)| s != x && r != x),
                _ => {}
            }
        }
        edges
    }

    pub fn has_edge(&self, sharer: &ParticipantId, reader: &ParticipantId) -> bool {
        self.edges().contains(&(sharer.clone(), reader.clone()))
    }

    pub fn history(&self, id: &ParticipantId) -> Vec<CheckIn> {
        let mut h = Vec::new();
        for e in &self.log {
            match e {
                Event::CheckIn(x, c) if x == id => h.push(c.clone()),
                Event::Delete(x) if x == id => h.clear(),
                _ => {}
            }
        }
        let skip = h.len().saturating_sub(self.history_cap);
        h.split_off(skip)
    }

    /// What `caller` should get for `history(target, limit)`; `None` means
    /// access denied.
    pub fn history_for(
        &self,
        caller: &ParticipantId,
        target: &ParticipantId,
        limit: usize,
    ) -> Option<Vec<CheckIn>> {
        if caller != target && !self.has_edge(target, caller) {
            return None;
        }
        let h = self.history(target);
        let skip = h.len().saturating_sub(limit);
        Some(h[skip..].to_vec())
    }

    pub fn readers(&self, sharer: &ParticipantId) -> Vec<ParticipantId> {
        let set: BTreeSet<_> = self
            .edges()
            .into_iter()
            .filter(|(s, _)| s == sharer)
            .map(|(_, r)| r)
            .collect();
        set.into_iter().collect()
    }

    pub fn sharers(&self, reader: &ParticipantId) -> Vec<ParticipantId> {
        let set: BTreeSet<_> = self
            .edges()
            .into_iter()
            .filter(|(_, r)| r == reader)
            .map(|(s, _)| s)
            .collect();
        set.into_iter().collect()
    }

    pub fn feed(&self, reader: &ParticipantId) -> Vec<FeedEntry> {
        self.sharers(reader)
            .into_iter()
            .filter_map(|s| {
                let latest = self.history(&s).pop()?;
                Some(FeedEntry::new(s, &latest))
            })
            .collect()
    }
}
