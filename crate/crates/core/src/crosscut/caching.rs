//! Read-through cache with LRU eviction and a time-to-live.
//!
//! Entries remember a version stamp of their source. A lookup whose stamp
//! no longer matches is treated as invalidated by a write.

use std::collections::BTreeMap;

use serde_json::Value;

use crate::aop::{AopError, JoinPoint};
use crate::middleware::{Call, Request, Response};
use crate::sim::trace::{EventKind, Source};
use crate::sim::world::detail;
use crate::sim::World;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheConfig {
    pub capacity: usize,
    pub ttl_ticks: u64,
}

impl Default for CacheConfig {
    fn default() -> Self {
        Self {
            capacity: 64,
            ttl_ticks: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheEntry<V> {
    pub value: V,
    pub inserted_tick: u64,
    pub stamp: u64,
    last_used: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Lookup<V> {
    Hit { value: V, age: u64 },
    /// An entry existed but may not be served; it has been removed.
    Invalidated { reason: &'static str },
    Absent,
}

#[derive(Debug, Clone)]
pub struct LruCache<K, V> {
    config: CacheConfig,
    entries: BTreeMap<K, CacheEntry<V>>,
    clock: u64,
}

impl<K: Ord + Clone, V: Clone> LruCache<K, V> {
    pub fn new(config: CacheConfig) -> Self {
        Self {
            config,
            entries: BTreeMap::new(),
            clock: 0,
        }
    }

    pub fn config(&self) -> CacheConfig {
        self.config
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, key: &K) -> bool {
        self.entries.contains_key(key)
    }

    fn touch(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    /// Serves `key` if present, younger than the ttl and stamped `stamp`.
    pub fn lookup(&mut self, key: &K, now: u64, stamp: u64) -> Lookup<V> {
        let Some(entry) = self.entries.get(key) else {
            return Lookup::Absent;
        };
        let age = now.saturating_sub(entry.inserted_tick);
        let reason = if age >= self.config.ttl_ticks {
            "ttl"
        } else if entry.stamp != stamp {
            "write"
        } else {
            let value = entry.value.clone();
            let used = self.touch();
            if let Some(e) = self.entries.get_mut(key) {
                e.last_used = used;
            }
            return Lookup::Hit { value, age };
        };
        self.entries.remove(key);
        Lookup::Invalidated { reason }
    }

    /// Stores a value, evicting the least recently used entry when full.
    /// Returns the evicted key.
    pub fn insert(&mut self, key: K, value: V, now: u64, stamp: u64) -> Option<K> {
        let mut evicted = None;
        if !self.entries.contains_key(&key) && self.entries.len() >= self.config.capacity {
            evicted = self
                .entries
                .iter()
                .min_by_key(|(_, e)| e.last_used)
                .map(|(k, _)| k.clone());
            if let Some(k) = &evicted {
                self.entries.remove(k);
            }
        }
        let last_used = self.touch();
        self.entries.insert(
            key,
            CacheEntry {
                value,
                inserted_tick: now,
                stamp,
                last_used,
            },
        );
        evicted
    }
}

/// Cached item: a peer's sensor reading or its capability list.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct CacheKey {
    pub peer: usize,
    pub item: String,
}

pub const CAPABILITIES_ITEM: &str = "@capabilities";

pub type ReadingCache = LruCache<CacheKey, Response>;

fn key_of(call: &Call) -> Option<CacheKey> {
    match &call.request {
        Request::GetReading { peer, sensor } => Some(CacheKey {
            peer: *peer,
            item: sensor.clone(),
        }),
        Request::LookupCapabilities { peer } => Some(CacheKey {
            peer: *peer,
            item: CAPABILITIES_ITEM.into(),
        }),
        _ => None,
    }
}

/// Current version of the cached item's source: the peer's write counter
/// for a reading, the current session id for capabilities.
fn source_stamp(w: &World, actor: usize, key: &CacheKey) -> u64 {
    if key.item == CAPABILITIES_ITEM {
        return w.devices[actor]
            .sessions
            .by_peer(key.peer)
            .map_or(0, |s| s.session_id);
    }
    w.devices
        .get(key.peer)
        .and_then(|d| d.store.get(&key.item))
        .map_or(0, |r| r.version)
}

fn cacheable(r: &Response) -> bool {
    matches!(r, Response::Reading(Some(_)) | Response::Capabilities(_))
}

/// Caching behavior around one read operation.
pub fn around(
    w: &mut World,
    jp: &JoinPoint,
    call: &Call,
    source: Source,
    proceed: &mut dyn FnMut(&mut World) -> Result<Response, AopError>,
) -> Result<Response, AopError> {
    let Some(key) = key_of(call) else {
        return proceed(w);
    };
    let actor = call.actor;
    let now = w.clock();
    let stamp = source_stamp(w, actor, &key);
    let peer = Value::from(w.devices.get(key.peer).map(|d| d.name.clone()).unwrap_or_default());
    let item = Value::from(key.item.as_str());
    let (module, op) = (jp.module().to_string(), jp.op().to_string());
    match w.devices[actor].cache.lookup(&key, now, stamp) {
        Lookup::Hit { value, age } => {
            let d = detail([("peer", peer), ("key", item), ("age", Value::from(age))]);
            w.emit(actor, EventKind::CacheHit, &module, &op, source, d);
            return Ok(value);
        }
        Lookup::Invalidated { reason } => {
            let d = detail([("peer", peer.clone()), ("key", item.clone()), ("reason", Value::from(reason))]);
            w.emit(actor, EventKind::CacheInvalidate, &module, &op, source, d);
        }
        Lookup::Absent => {}
    }
    let d = detail([("peer", peer), ("key", item)]);
    w.emit(actor, EventKind::CacheMiss, &module, &op, source, d);
    let result = proceed(w)?;
    if cacheable(&result) {
        let stamp = source_stamp(w, actor, &key);
        if let Some(old) = w.devices[actor].cache.insert(key, result.clone(), now, stamp) {
            let peer = Value::from(w.devices.get(old.peer).map(|d| d.name.clone()).unwrap_or_default());
            let d = detail([
                ("peer", peer),
                ("key", Value::from(old.item)),
                ("reason", Value::from("lru")),
            ]);
            w.emit(actor, EventKind::CacheInvalidate, &module, &op, source, d);
        }
    }
    Ok(result)
}
