//! Bare behavior of every service operation.

use std::sync::Arc;

use serde_json::{Map, Value};

use crate::aop::{AopError, CoreFn};
use crate::sim::trace::{EventKind, Source};
use crate::sim::world::detail;
use crate::sim::World;

use super::frame::{chunk_payload, Frame, FrameKind};
use super::handshake::{self, is_legal_transition, HandshakeEnv, StepNote, TimeoutOutcome};
use super::transfer::{AckOutcome, DataOutcome, OutboundTransfer, RetryOutcome};
use super::{Call, Op, Request, Response, Session, SessionKey};

type Behavior = CoreFn<World, Call, Response>;

pub(super) fn behavior(op: Op) -> Behavior {
    match op {
        Op::Initiate => Arc::new(initiate),
        Op::HandleHandshake => Arc::new(handle_handshake),
        Op::HandshakeTimeout => Arc::new(handshake_timeout),
        Op::LookupCapabilities => Arc::new(lookup_capabilities),
        Op::SendReading => Arc::new(send_reading),
        Op::HandleFrame => Arc::new(handle_frame),
        Op::OnTimeout => Arc::new(on_timeout),
        Op::GetReading => Arc::new(get_reading),
        Op::PutReading => Arc::new(put_reading),
        Op::Authenticate => Arc::new(authenticate),
        Op::VerifyToken => Arc::new(verify_token),
        Op::SignFrame => Arc::new(sign_frame),
        Op::VerifyFrame => Arc::new(verify_frame),
        Op::RegisterSession => Arc::new(register_session),
        Op::FindSession => Arc::new(find_session),
        Op::EvictExpired => Arc::new(evict_expired),
    }
}

fn mismatch(op: Op) -> AopError {
    AopError::fault(format!("{}.{} called with foreign arguments", op.module(), op.name()))
}

fn emit(w: &mut World, actor: usize, op: Op, kind: EventKind, d: Map<String, Value>) {
    w.emit(actor, kind, op.module(), op.name(), Source::Core, d);
}

fn peer_name(w: &World, peer: usize) -> Value {
    Value::from(w.devices.get(peer).map(|d| d.name.clone()).unwrap_or_default())
}

fn hex(v: u64) -> Value {
    Value::from(format!("{v:016x}"))
}

fn send(w: &mut World, from: usize, to: usize, frame: Frame, extra: Map<String, Value>) -> Result<(), AopError> {
    w.send_frame(from, to, frame, extra)
        .map_err(|e| AopError::fault(e.to_string()))
}

fn valid_peer(w: &World, actor: usize, peer: usize) -> bool {
    peer != actor && peer < w.devices.len()
}

fn session_for(w: &mut World, actor: usize, key: SessionKey) -> Result<Option<Session>, AopError> {
    match w.call(Op::FindSession, actor, Request::FindSession { key })? {
        Response::Session(s) => Ok(s),
        other => Err(AopError::fault(format!("find_session answered {}", other.summary()))),
    }
}

fn sign(w: &mut World, actor: usize, frame: Frame, key: u64) -> Result<Frame, AopError> {
    match w.call(Op::SignFrame, actor, Request::SignFrame { frame, key })? {
        Response::Signed(f) => Ok(f),
        other => Err(AopError::fault(format!("sign_frame answered {}", other.summary()))),
    }
}

fn verified(r: Response, what: &str) -> Result<bool, AopError> {
    match r {
        Response::Verified(v) => Ok(v),
        other => Err(AopError::fault(format!("{what} answered {}", other.summary()))),
    }
}

/// Routes the state machine's needs through the security service.
struct WorldEnv<'a> {
    w: &'a mut World,
    actor: usize,
}

impl HandshakeEnv for WorldEnv<'_> {
    fn fresh_nonce(&mut self) -> u64 {
        self.w.fresh_nonce()
    }

    fn shared_key(&self) -> u64 {
        self.w.shared_key()
    }

    fn capabilities(&self) -> Vec<String> {
        self.w.devices[self.actor].capabilities.clone()
    }

    fn auth_token(&mut self, nonce_a: u64, nonce_b: u64) -> Result<u64, AopError> {
        match self
            .w
            .call(Op::Authenticate, self.actor, Request::Authenticate { nonce_a, nonce_b })?
        {
            Response::Token(t) => Ok(t),
            other => Err(AopError::fault(format!("authenticate answered {}", other.summary()))),
        }
    }

    fn verify_token(&mut self, nonce_a: u64, nonce_b: u64, token: u64) -> Result<bool, AopError> {
        let r = self.w.call(
            Op::VerifyToken,
            self.actor,
            Request::VerifyToken { nonce_a, nonce_b, token },
        )?;
        verified(r, "verify_token")
    }
}

fn initiate(w: &mut World, call: &Call) -> Result<Response, AopError> {
    let (actor, op) = (call.actor, Op::Initiate);
    let Request::Initiate { peer } = call.request else {
        return Err(mismatch(op));
    };
    if !valid_peer(w, actor, peer) {
        emit(w, actor, op, EventKind::Rejected, detail([("reason", Value::from("unknown_peer"))]));
        return Ok(Response::Refused("unknown_peer".into()));
    }
    let state = w.devices[actor].handshake(peer);
    let mut env = WorldEnv { w: &mut *w, actor };
    match handshake::initiate(&state, &mut env) {
        Err(e) => {
            let d = detail([("peer", peer_name(w, peer)), ("reason", Value::from(e.reason()))]);
            emit(w, actor, op, EventKind::Rejected, d);
            Ok(Response::Refused(e.reason().into()))
        }
        Ok((next, hello)) => {
            if !is_legal_transition(state.phase, next.phase) {
                return Err(AopError::fault("illegal handshake transition on initiate"));
            }
            let d = detail([("peer", peer_name(w, peer)), ("nonce", hex(next.nonce_local))]);
            w.devices[actor].handshakes.insert(peer, next);
            emit(w, actor, op, EventKind::HelloSent, d);
            send(w, actor, peer, hello, Map::new())?;
            w.schedule_handshake_timeout(actor, peer, 0);
            Ok(Response::Done)
        }
    }
}

fn handle_handshake(w: &mut World, call: &Call) -> Result<Response, AopError> {
    let (actor, op) = (call.actor, Op::HandleHandshake);
    let Request::HandleHandshake { from, frame } = &call.request else {
        return Err(mismatch(op));
    };
    let from = *from;
    if !valid_peer(w, actor, from) {
        return Err(AopError::fault(format!("handshake frame from unknown device {from}")));
    }
    let state = w.devices[actor].handshake(from);
    let mut env = WorldEnv { w: &mut *w, actor };
    let out = handshake::step(&state, frame, &mut env)?;
    if !is_legal_transition(state.phase, out.state.phase) {
        return Err(AopError::fault(format!(
            "illegal handshake transition {} -> {}",
            state.phase.as_str(),
            out.state.phase.as_str()
        )));
    }
    w.devices[actor].handshakes.insert(from, out.state);
    let peer = peer_name(w, from);
    match &out.note {
        StepNote::ChallengeSent => emit(w, actor, op, EventKind::ChallengeSent, detail([("peer", peer)])),
        StepNote::ConfirmSent => emit(w, actor, op, EventKind::ConfirmSent, detail([("peer", peer)])),
        StepNote::ConfirmResent => {
            let d = detail([("peer", peer), ("repeat", Value::from(true))]);
            emit(w, actor, op, EventKind::ConfirmSent, d);
        }
        StepNote::Established => {}
        StepNote::Rejected { reason } => {
            let d = detail([("peer", peer), ("reason", Value::from(reason.as_str())), ("by", Value::from("local"))]);
            emit(w, actor, op, EventKind::Rejected, d);
        }
        StepNote::RejectedByPeer { reason } => {
            let d = detail([("peer", peer), ("reason", Value::from(reason.as_str())), ("by", Value::from("peer"))]);
            emit(w, actor, op, EventKind::Rejected, d);
        }
        StepNote::Dropped { reason } => {
            let d = detail([
                ("frame", Value::from(frame.kind.as_str())),
                ("reason", Value::from(*reason)),
            ]);
            emit(w, actor, op, EventKind::FrameDropped, d);
        }
    }
    for f in out.outgoing {
        send(w, actor, from, f, Map::new())?;
    }
    if out.note == StepNote::ChallengeSent {
        w.schedule_handshake_timeout(actor, from, 0);
    }
    if let Some(params) = out.session {
        let session = Session {
            session_id: params.session_id,
            peer: from,
            session_key: params.session_key,
            established_tick: w.clock(),
            peer_capabilities: params.peer_capabilities,
        };
        let r = w.call(Op::RegisterSession, actor, Request::RegisterSession { session })?;
        if let Response::Refused(reason) = r {
            return Err(AopError::fault(format!("session registration failed: {reason}")));
        }
        let d = detail([("peer", peer_name(w, from)), ("session_id", hex(params.session_id))]);
        emit(w, actor, op, EventKind::SessionEstablished, d);
    }
    Ok(Response::Done)
}

fn handshake_timeout(w: &mut World, call: &Call) -> Result<Response, AopError> {
    let (actor, op) = (call.actor, Op::HandshakeTimeout);
    let Request::HandshakeTimeout { peer, attempt } = call.request else {
        return Err(mismatch(op));
    };
    let state = w.devices[actor].handshake(peer);
    match handshake::on_timeout(&state, attempt, w.config.transfer.max_retries) {
        TimeoutOutcome::Stale => {}
        TimeoutOutcome::Retransmit { state, frame, attempt } => {
            w.devices[actor].handshakes.insert(peer, state);
            send(w, actor, peer, frame, detail([("retry", Value::from(attempt))]))?;
            w.schedule_handshake_timeout(actor, peer, attempt);
        }
        TimeoutOutcome::GiveUp { state: next } => {
            if !is_legal_transition(state.phase, next.phase) {
                return Err(AopError::fault("illegal handshake transition on timeout"));
            }
            w.devices[actor].handshakes.insert(peer, next);
            let d = detail([("peer", peer_name(w, peer)), ("reason", Value::from("timeout"))]);
            emit(w, actor, op, EventKind::Rejected, d);
        }
    }
    Ok(Response::Done)
}

fn lookup_capabilities(w: &mut World, call: &Call) -> Result<Response, AopError> {
    let (actor, op) = (call.actor, Op::LookupCapabilities);
    let Request::LookupCapabilities { peer } = call.request else {
        return Err(mismatch(op));
    };
    match session_for(w, actor, SessionKey::Peer(peer))? {
        Some(s) => Ok(Response::Capabilities(s.peer_capabilities)),
        None => {
            let d = detail([("peer", peer_name(w, peer)), ("reason", Value::from("no_session"))]);
            emit(w, actor, op, EventKind::NotFound, d);
            Ok(Response::Refused("no_session".into()))
        }
    }
}

fn send_reading(w: &mut World, call: &Call) -> Result<Response, AopError> {
    let (actor, op) = (call.actor, Op::SendReading);
    let Request::SendReading { peer, sensor, payload } = &call.request else {
        return Err(mismatch(op));
    };
    let peer = *peer;
    let refuse = |w: &mut World, reason: &str| -> Result<Response, AopError> {
        let d = detail([
            ("peer", peer_name(w, peer)),
            ("sensor", Value::from(sensor.as_str())),
            ("reason", Value::from(reason)),
        ]);
        emit(w, actor, op, EventKind::TransferFailed, d);
        Ok(Response::Refused(reason.into()))
    };
    if payload.is_empty() {
        return refuse(w, "empty_payload");
    }
    let Some(session) = session_for(w, actor, SessionKey::Peer(peer))? else {
        return refuse(w, "unknown_session");
    };
    let id = w.next_transfer_id();
    let chunks = chunk_payload(payload, w.config.transfer.chunk_size);
    w.devices[actor]
        .outbound
        .entry(peer)
        .or_default()
        .enqueue(OutboundTransfer::new(id, sensor.clone(), chunks));
    pump(w, actor, &session)?;
    Ok(Response::Transfer(id))
}

/// Sends the next DATA frame towards the session's peer if the link is free.
fn pump(w: &mut World, actor: usize, session: &Session) -> Result<(), AopError> {
    let peer = session.peer;
    let Some(frame) = w.devices[actor]
        .outbound
        .entry(peer)
        .or_default()
        .next_frame(session.session_id)
    else {
        return Ok(());
    };
    let frame = sign(w, actor, frame, session.session_key)?;
    let seq = frame.seq;
    if let Some(state) = w.devices[actor].outbound.get_mut(&peer) {
        state.set_in_flight(frame.clone());
    }
    send(w, actor, peer, frame, detail([("retry", Value::from(0))]))?;
    w.schedule_timeout(actor, peer, seq, 0);
    Ok(())
}

fn retry(w: &mut World, actor: usize, peer: usize, op: Op, outcome: RetryOutcome) -> Result<(), AopError> {
    match outcome {
        RetryOutcome::Stale => Ok(()),
        RetryOutcome::Retransmit { frame, attempt } => {
            let seq = frame.seq;
            send(w, actor, peer, frame, detail([("retry", Value::from(attempt))]))?;
            w.schedule_timeout(actor, peer, seq, attempt);
            Ok(())
        }
        RetryOutcome::Failed { transfer, sensor, seq } => {
            let d = detail([
                ("peer", peer_name(w, peer)),
                ("sensor", Value::from(sensor)),
                ("transfer", Value::from(transfer)),
                ("seq", Value::from(seq)),
                ("reason", Value::from("retries_exhausted")),
            ]);
            emit(w, actor, op, EventKind::TransferFailed, d);
            // Later queued transfers still get their turn.
            if let Some(session) = session_for(w, actor, SessionKey::Peer(peer))? {
                pump(w, actor, &session)?;
            }
            Ok(())
        }
    }
}

fn handle_frame(w: &mut World, call: &Call) -> Result<Response, AopError> {
    let (actor, op) = (call.actor, Op::HandleFrame);
    let Request::HandleFrame { from, frame } = &call.request else {
        return Err(mismatch(op));
    };
    let from = *from;
    let dropped = |w: &mut World, reason: &str| -> Result<Response, AopError> {
        let d = detail([
            ("frame", Value::from(frame.kind.as_str())),
            ("seq", Value::from(frame.seq)),
            ("reason", Value::from(reason)),
        ]);
        emit(w, actor, op, EventKind::FrameDropped, d);
        Ok(Response::Done)
    };
    let session = match session_for(w, actor, SessionKey::Id(frame.session_id))? {
        Some(s) if s.peer == from => s,
        _ => return dropped(w, "unknown_session"),
    };
    if frame.kind.is_handshake() {
        return dropped(w, "not_data");
    }
    let r = w.call(
        Op::VerifyFrame,
        actor,
        Request::VerifyFrame {
            frame: frame.clone(),
            key: session.session_key,
        },
    )?;
    let valid = verified(r, "verify_frame")?;
    let reply = |w: &mut World, kind: FrameKind, seq: u32| -> Result<(), AopError> {
        let f = Frame::new(session.session_id, seq, kind, Vec::new()).expect("empty payload");
        let f = sign(w, actor, f, session.session_key)?;
        send(w, actor, from, f, Map::new())
    };
    match frame.kind {
        FrameKind::Data if !valid => {
            emit(w, actor, op, EventKind::Nak, detail([("seq", Value::from(frame.seq))]));
            reply(w, FrameKind::Nak, frame.seq)?;
        }
        FrameKind::Data => {
            let outcome = w.devices[actor].inbound.entry(session.session_id).or_default().accept(frame);
            match outcome {
                DataOutcome::Gap => return dropped(w, "gap"),
                DataOutcome::Duplicate => {
                    let d = detail([("seq", Value::from(frame.seq)), ("duplicate", Value::from(true))]);
                    emit(w, actor, op, EventKind::Data, d);
                    reply(w, FrameKind::Ack, frame.seq)?;
                }
                DataOutcome::Accepted { delivered } => {
                    let d = detail([
                        ("seq", Value::from(frame.seq)),
                        ("bytes", Value::from(frame.payload().len())),
                    ]);
                    emit(w, actor, op, EventKind::Data, d);
                    reply(w, FrameKind::Ack, frame.seq)?;
                    if let Some((sensor, payload)) = delivered {
                        let d = detail([
                            ("from", peer_name(w, from)),
                            ("sensor", Value::from(sensor.as_str())),
                            ("bytes", Value::from(payload.len())),
                        ]);
                        emit(w, actor, op, EventKind::Delivered, d);
                        w.devices[actor].inbox.insert((from, sensor), payload);
                    }
                }
            }
        }
        FrameKind::Ack | FrameKind::Nak if !valid => return dropped(w, "bad_mac"),
        FrameKind::Ack => {
            let outcome = w.devices[actor].outbound.entry(from).or_default().on_ack(frame.seq);
            if let AckOutcome::Advanced { completed } = outcome {
                let mut d = detail([("seq", Value::from(frame.seq))]);
                if let Some(id) = completed {
                    d.insert("completed".into(), Value::from(id));
                }
                emit(w, actor, op, EventKind::Ack, d);
                pump(w, actor, &session)?;
            }
        }
        FrameKind::Nak => {
            let max = w.config.transfer.max_retries;
            let outcome = w.devices[actor].outbound.entry(from).or_default().on_retry(frame.seq, None, max);
            retry(w, actor, from, op, outcome)?;
        }
        _ => unreachable!("handshake kinds handled above"),
    }
    Ok(Response::Done)
}

fn on_timeout(w: &mut World, call: &Call) -> Result<Response, AopError> {
    let (actor, op) = (call.actor, Op::OnTimeout);
    let Request::OnTimeout { peer, seq, attempt } = call.request else {
        return Err(mismatch(op));
    };
    let max = w.config.transfer.max_retries;
    let outcome = w.devices[actor]
        .outbound
        .entry(peer)
        .or_default()
        .on_retry(seq, Some(attempt), max);
    retry(w, actor, peer, op, outcome)?;
    Ok(Response::Done)
}

/// Reads the peer's latest stored reading. The exchange is modeled as a
/// synchronous request answered within the same tick.
fn get_reading(w: &mut World, call: &Call) -> Result<Response, AopError> {
    let (actor, op) = (call.actor, Op::GetReading);
    let Request::GetReading { peer, sensor } = &call.request else {
        return Err(mismatch(op));
    };
    let peer = *peer;
    let not_found = |w: &mut World, reason: &str| -> Result<Response, AopError> {
        let d = detail([
            ("peer", peer_name(w, peer)),
            ("sensor", Value::from(sensor.as_str())),
            ("reason", Value::from(reason)),
        ]);
        emit(w, actor, op, EventKind::NotFound, d);
        Ok(Response::Reading(None))
    };
    if session_for(w, actor, SessionKey::Peer(peer))?.is_none() {
        return not_found(w, "no_session");
    }
    let Some(stored) = w.devices[peer].store.get(sensor).cloned() else {
        return not_found(w, "unknown_sensor");
    };
    let d = detail([
        ("peer", peer_name(w, peer)),
        ("sensor", Value::from(sensor.as_str())),
        ("bytes", Value::from(stored.payload.len())),
        ("version", Value::from(stored.version)),
    ]);
    emit(w, actor, op, EventKind::Data, d);
    Ok(Response::Reading(Some(stored.payload)))
}

fn put_reading(w: &mut World, call: &Call) -> Result<Response, AopError> {
    let Request::PutReading { sensor, payload } = &call.request else {
        return Err(mismatch(Op::PutReading));
    };
    let version = w.next_write_version();
    w.devices[call.actor].store.insert(
        sensor.clone(),
        crate::sim::world::StoredReading {
            payload: payload.clone(),
            version,
        },
    );
    Ok(Response::Done)
}

fn authenticate(w: &mut World, call: &Call) -> Result<Response, AopError> {
    let Request::Authenticate { nonce_a, nonce_b } = call.request else {
        return Err(mismatch(Op::Authenticate));
    };
    Ok(Response::Token(handshake::auth_token(w.shared_key(), nonce_a, nonce_b)))
}

fn verify_token(w: &mut World, call: &Call) -> Result<Response, AopError> {
    let Request::VerifyToken { nonce_a, nonce_b, token } = call.request else {
        return Err(mismatch(Op::VerifyToken));
    };
    Ok(Response::Verified(
        handshake::auth_token(w.shared_key(), nonce_a, nonce_b) == token,
    ))
}

fn sign_frame(_: &mut World, call: &Call) -> Result<Response, AopError> {
    let Request::SignFrame { frame, key } = &call.request else {
        return Err(mismatch(Op::SignFrame));
    };
    Ok(Response::Signed(frame.clone().signed(*key)))
}

fn verify_frame(_: &mut World, call: &Call) -> Result<Response, AopError> {
    let Request::VerifyFrame { frame, key } = &call.request else {
        return Err(mismatch(Op::VerifyFrame));
    };
    Ok(Response::Verified(frame.verify(*key)))
}

fn register_session(w: &mut World, call: &Call) -> Result<Response, AopError> {
    let Request::RegisterSession { session } = &call.request else {
        return Err(mismatch(Op::RegisterSession));
    };
    match w.devices[call.actor].sessions.register(session.clone()) {
        Ok(()) => Ok(Response::Done),
        Err(e) => Ok(Response::Refused(e.to_string())),
    }
}

fn find_session(w: &mut World, call: &Call) -> Result<Response, AopError> {
    let Request::FindSession { key } = &call.request else {
        return Err(mismatch(Op::FindSession));
    };
    let table = &w.devices[call.actor].sessions;
    let found = match key {
        SessionKey::Peer(p) => table.by_peer(*p),
        SessionKey::Id(id) => table.by_id(*id),
    };
    Ok(Response::Session(found.cloned()))
}

fn evict_expired(w: &mut World, call: &Call) -> Result<Response, AopError> {
    let Request::EvictExpired { max_age } = call.request else {
        return Err(mismatch(Op::EvictExpired));
    };
    let now = w.clock();
    Ok(Response::Evicted(
        w.devices[call.actor].sessions.evict_expired(now, max_age),
    ))
}
