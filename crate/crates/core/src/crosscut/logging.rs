use std::fmt;

use serde_json::Value;

use crate::aop::{AopError, JoinPoint, Phase};
use crate::middleware::{Call, Response};
use crate::sim::trace::{EventKind, Source, TraceEvent};
use crate::sim::world::detail;
use crate::sim::World;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Level {
    Debug,
    Info,
    Warn,
    Error,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::Debug => "DEBUG",
            Level::Info => "INFO",
            Level::Warn => "WARN",
            Level::Error => "ERROR",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "DEBUG" => Level::Debug,
            "INFO" => Level::Info,
            "WARN" => Level::Warn,
            "ERROR" => Level::Error,
            _ => return None,
        })
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A log line as recorded in a trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord {
    pub tick: u64,
    pub level: Level,
    pub module: String,
    pub op: String,
    pub phase: Phase,
    pub detail: String,
    pub source: Source,
}

impl LogRecord {
    /// Recovers the record from a `log` trace event.
    pub fn from_event(e: &TraceEvent) -> Option<Self> {
        if e.kind != EventKind::Log {
            return None;
        }
        let phase = match e.detail_str("phase")? {
            "before" => Phase::Before,
            "after" => Phase::After,
            "around" => Phase::Around,
            _ => return None,
        };
        Some(Self {
            tick: e.tick,
            level: Level::parse(e.detail_str("level")?)?,
            module: e.module.clone(),
            op: e.op.clone(),
            phase,
            detail: e.detail_str("detail")?.to_string(),
            source: e.source,
        })
    }
}

fn record(w: &mut World, jp: &JoinPoint, actor: usize, source: Source, level: Level, phase: Phase, text: String) {
    let d = detail([
        ("level", Value::from(level.as_str())),
        ("phase", Value::from(phase.as_str())),
        ("detail", Value::from(text)),
    ]);
    w.emit(actor, EventKind::Log, jp.module(), jp.op(), source, d);
}

pub fn before(w: &mut World, jp: &JoinPoint, call: &Call, source: Source) {
    record(w, jp, call.actor, source, Level::Info, Phase::Before, jp.args_summary().to_string());
}

pub fn after(w: &mut World, jp: &JoinPoint, call: &Call, result: &Result<Response, AopError>, source: Source) {
    let (level, text) = match result {
        Ok(r @ Response::Refused(_)) => (Level::Warn, r.summary()),
        Ok(r) => (Level::Info, r.summary()),
        Err(e) => (Level::Error, e.to_string()),
    };
    record(w, jp, call.actor, source, level, Phase::After, text);
}
