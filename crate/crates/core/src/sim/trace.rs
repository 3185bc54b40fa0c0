//! Trace events and their JSONL form.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    HelloSent,
    ChallengeSent,
    ConfirmSent,
    SessionEstablished,
    Rejected,
    FrameSent,
    FrameDropped,
    Data,
    Ack,
    Nak,
    Delivered,
    TransferFailed,
    CacheHit,
    CacheMiss,
    CacheInvalidate,
    GuardAcquire,
    GuardRelease,
    Log,
    NotFound,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::HelloSent => "hello_sent",
            EventKind::ChallengeSent => "challenge_sent",
            EventKind::ConfirmSent => "confirm_sent",
            EventKind::SessionEstablished => "session_established",
            EventKind::Rejected => "rejected",
            EventKind::FrameSent => "frame_sent",
            EventKind::FrameDropped => "frame_dropped",
            EventKind::Data => "data",
            EventKind::Ack => "ack",
            EventKind::Nak => "nak",
            EventKind::Delivered => "delivered",
            EventKind::TransferFailed => "transfer_failed",
            EventKind::CacheHit => "cache_hit",
            EventKind::CacheMiss => "cache_miss",
            EventKind::CacheInvalidate => "cache_invalidate",
            EventKind::GuardAcquire => "guard_acquire",
            EventKind::GuardRelease => "guard_release",
            EventKind::Log => "log",
            EventKind::NotFound => "not_found",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Who produced an event: core middleware code, a cross-cutting concern
/// inlined into a tangled build, or the same concern applied by an aspect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Inline,
    Aspect,
    Core,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Inline => "inline",
            Source::Aspect => "aspect",
            Source::Core => "core",
        }
    }
}

/// Field order is the serialization order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub tick: u64,
    pub actor: String,
    pub kind: EventKind,
    pub module: String,
    pub op: String,
    pub source: Source,
    pub detail: Map<String, Value>,
}

impl TraceEvent {
    pub fn detail_str(&self, key: &str) -> Option<&str> {
        self.detail.get(key).and_then(Value::as_str)
    }

    pub fn detail_u64(&self, key: &str) -> Option<u64> {
        self.detail.get(key).and_then(Value::as_u64)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("trace events always serialize")
    }
}

/// One JSON object per line, each line terminated by `\n`.
pub fn to_jsonl(events: &[TraceEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&e.to_json_line());
        out.push('\n');
    }
    out
}

pub fn parse_jsonl(text: &str) -> Result<Vec<TraceEvent>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

/// Serializes events without their `source` field, for comparing builds.
pub fn without_source(events: &[TraceEvent]) -> Vec<String> {
    events
        .iter()
        .map(|e| {
            let mut v = serde_json::to_value(e).expect("trace events always serialize");
            if let Value::Object(map) = &mut v {
                map.remove("source");
            }
            v.to_string()
        })
        .collect()
}

/// Index of the first event that differs once `source` is ignored, if any.
pub fn first_divergence(a: &[TraceEvent], b: &[TraceEvent]) -> Option<usize> {
    let (a, b) = (without_source(a), without_source(b));
    let common = a.iter().zip(&b).position(|(x, y)| x != y);
    match common {
        Some(i) => Some(i),
        None if a.len() != b.len() => Some(a.len().min(b.len())),
        None => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn event(source: Source) -> TraceEvent {
        let mut detail = Map::new();
        detail.insert("seq".into(), Value::from(3));
        TraceEvent {
            tick: 5,
            actor: "A".into(),
            kind: EventKind::FrameSent,
            module: "Transport".into(),
            op: "send_frame".into(),
            source,
            detail,
        }
    }

    #[test]
    fn field_order_is_fixed() {
        assert_eq!(
            event(Source::Core).to_json_line(),
            r#"{"tick":5,"actor":"A","kind":"frame_sent","module":"Transport","op":"send_frame","source":"core","detail":{"seq":3}}"#
        );
    }

    #[test]
    fn jsonl_roundtrip() {
        let events = vec![event(Source::Inline), event(Source::Aspect)];
        assert_eq!(parse_jsonl(&to_jsonl(&events)).unwrap(), events);
    }

    #[test]
    fn source_is_ignored_by_divergence_check() {
        assert_eq!(first_divergence(&[event(Source::Inline)], &[event(Source::Aspect)]), None);
        assert_eq!(first_divergence(&[event(Source::Inline)], &[]), Some(0));
        let mut other = event(Source::Aspect);
        other.tick = 6;
        assert_eq!(first_divergence(&[event(Source::Inline)], &[other]), Some(0));
    }
}
