//! Guard protocol standing in for locks in the single-threaded simulation.
//! Each actor holds a stack of guards; the depth is the stack height.

use serde_json::Value;

use crate::aop::{AopError, JoinPoint};
use crate::middleware::{Call, Response};
use crate::sim::trace::{EventKind, Source, TraceEvent};
use crate::sim::world::detail;
use crate::sim::World;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuardAction {
    Acquire,
    Release,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GuardEvent {
    pub tick: u64,
    pub actor: String,
    pub guard_name: String,
    pub action: GuardAction,
    pub depth: u64,
}

impl GuardEvent {
    pub fn from_event(e: &TraceEvent) -> Option<Self> {
        let action = match e.kind {
            EventKind::GuardAcquire => GuardAction::Acquire,
            EventKind::GuardRelease => GuardAction::Release,
            _ => return None,
        };
        Some(Self {
            tick: e.tick,
            actor: e.actor.clone(),
            guard_name: e.detail_str("guard")?.to_string(),
            action,
            depth: e.detail_u64("depth")?,
        })
    }
}

pub fn acquire(w: &mut World, actor: usize, guard: &str, jp: &JoinPoint, source: Source) {
    let guards = &mut w.devices[actor].guards;
    guards.push(guard.to_string());
    let depth = guards.len();
    let d = detail([("guard", Value::from(guard)), ("depth", Value::from(depth))]);
    w.emit(actor, EventKind::GuardAcquire, jp.module(), jp.op(), source, d);
}

pub fn release(w: &mut World, actor: usize, guard: &str, jp: &JoinPoint, source: Source) -> Result<(), AopError> {
    let guards = &mut w.devices[actor].guards;
    match guards.last() {
        Some(top) if top == guard => {
            guards.pop();
        }
        Some(top) => {
            return Err(AopError::fault(format!(
                "release of guard {guard} while {top} is innermost"
            )))
        }
        None => return Err(AopError::fault(format!("release of guard {guard} without acquire"))),
    }
    let depth = guards.len();
    let d = detail([("guard", Value::from(guard)), ("depth", Value::from(depth))]);
    w.emit(actor, EventKind::GuardRelease, jp.module(), jp.op(), source, d);
    Ok(())
}

/// Holds the target module's guard for the duration of the call.
pub fn around(
    w: &mut World,
    jp: &JoinPoint,
    call: &Call,
    source: Source,
    proceed: &mut dyn FnMut(&mut World) -> Result<Response, AopError>,
) -> Result<Response, AopError> {
    let guard = jp.module().to_string();
    acquire(w, call.actor, &guard, jp, source);
    let result = proceed(w);
    release(w, call.actor, &guard, jp, source)?;
    result
}
