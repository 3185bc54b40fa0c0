use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

/// An established, authenticated association with a peer device.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Session {
    pub session_id: u64,
    /// Index of the peer device in its world.
    pub peer: usize,
    pub session_key: u64,
    pub established_tick: u64,
    pub peer_capabilities: Vec<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("session {0:#018x} already registered")]
pub struct DuplicateSession(pub u64);

/// Per-device session registry, keyed by session id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SessionTable {
    sessions: BTreeMap<u64, Session>,
}

impl SessionTable {
    pub fn register(&mut self, session: Session) -> Result<(), DuplicateSession> {
        if self.sessions.contains_key(&session.session_id) {
            return Err(DuplicateSession(session.session_id));
        }
        self.sessions.insert(session.session_id, session);
        Ok(())
    }

    pub fn by_id(&self, id: u64) -> Option<&Session> {
        self.sessions.get(&id)
    }

    /// Most recently established session with `peer`.
    pub fn by_peer(&self, peer: usize) -> Option<&Session> {
        self.sessions
            .values()
            .filter(|s| s.peer == peer)
            .max_by_key(|s| (s.established_tick, s.session_id))
    }

    pub fn remove(&mut self, id: u64) -> Option<Session> {
        self.sessions.remove(&id)
    }

    /// Removes every session whose age (`now - established_tick`) is at
    /// least `max_age` and returns how many were removed.
    pub fn evict_expired(&mut self, now: u64, max_age: u64) -> usize {
        let before = self.sessions.len();
        self.sessions
            .retain(|_, s| now.saturating_sub(s.established_tick) < max_age);
        before - self.sessions.len()
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Session> {
        self.sessions.values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn session(id: u64, peer: usize, tick: u64) -> Session {
        Session {
            session_id: id,
            peer,
            session_key: id ^ 0xFF,
            established_tick: tick,
            peer_capabilities: vec!["sensor.read".into()],
        }
    }

    #[test]
    fn register_then_lookup() {
        let mut t = SessionTable::default();
        t.register(session(1, 1, 0)).unwrap();
        assert_eq!(t.by_peer(1).unwrap().peer_capabilities, vec!["sensor.read"]);
        assert_eq!(t.register(session(1, 1, 5)), Err(DuplicateSession(1)));
    }

    #[test]
    fn evict_zero_removes_everything() {
        let mut t = SessionTable::default();
        t.register(session(1, 1, 0)).unwrap();
        t.register(session(2, 1, 7)).unwrap();
        assert_eq!(t.evict_expired(7, 0), 2);
        assert!(t.is_empty());
    }

    #[test]
    fn evict_removes_exactly_the_stale_subset() {
        let mut t = SessionTable::default();
        for (id, tick) in [(1, 0), (2, 10), (3, 20), (4, 35), (5, 40)] {
            t.register(session(id, 1, tick)).unwrap();
        }
        // At tick 40 with max_age 20, ages are 40, 30, 20, 5, 0.
        assert_eq!(t.evict_expired(40, 20), 3);
        let left: Vec<u64> = t.iter().map(|s| s.session_id).collect();
        assert_eq!(left, vec![4, 5]);
    }
}
