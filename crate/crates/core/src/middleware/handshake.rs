//! Three-message session establishment with a nonce challenge.
//!
//! ```text
//! initiator                          responder
//!   HELLO   {v, nonce_a, caps}   ->
//!           <-  CHALLENGE {nonce_a, nonce_b, caps}
//!   CONFIRM {mac(k, nonce_a||nonce_b)} ->
//! ```
//!
//! The state machine here is pure: token computation goes through a
//! [`HandshakeEnv`], which the middleware implements by invoking the
//! security service so those calls remain interceptable.

use thiserror::Error;

use crate::aop::AopError;

use super::frame::{Frame, FrameKind};
use super::mac::mac64;

pub const PROTOCOL_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HandshakePhase {
    #[default]
    Idle,
    HelloSent,
    ChallengeSent,
    Established,
    Rejected,
}

impl HandshakePhase {
    pub fn as_str(self) -> &'static str {
        match self {
            HandshakePhase::Idle => "idle",
            HandshakePhase::HelloSent => "hello_sent",
            HandshakePhase::ChallengeSent => "challenge_sent",
            HandshakePhase::Established => "established",
            HandshakePhase::Rejected => "rejected",
        }
    }
}

/// The declared transition set. Staying in the same phase is always legal.
pub fn is_legal_transition(from: HandshakePhase, to: HandshakePhase) -> bool {
    use HandshakePhase::*;
    from == to
        || matches!(
            (from, to),
            (Idle, HelloSent)
                | (HelloSent, Established)
                | (Idle, ChallengeSent)
                | (ChallengeSent, Established)
                | (Idle, Rejected)
                | (HelloSent, Rejected)
                | (ChallengeSent, Rejected)
                | (Established, Rejected)
        )
}

/// One side's view of the handshake with one peer.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct HandshakeState {
    pub phase: HandshakePhase,
    pub nonce_local: u64,
    pub nonce_remote: u64,
    pub peer_capabilities: Vec<String>,
    /// Retransmissions of `last_sent` so far.
    pub retries: u8,
    /// HELLO or CHALLENGE awaiting an answer.
    pub last_sent: Option<Frame>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TimeoutOutcome {
    Stale,
    Retransmit { state: HandshakeState, frame: Frame, attempt: u8 },
    /// Retry budget exhausted; the state has moved to `Rejected`.
    GiveUp { state: HandshakeState },
}

/// Handles a retransmission timer set for `attempt`.
pub fn on_timeout(state: &HandshakeState, attempt: u8, max_retries: u8) -> TimeoutOutcome {
    let waiting = matches!(state.phase, HandshakePhase::HelloSent | HandshakePhase::ChallengeSent);
    let Some(frame) = state.last_sent.clone().filter(|_| waiting && state.retries == attempt) else {
        return TimeoutOutcome::Stale;
    };
    if state.retries >= max_retries {
        return TimeoutOutcome::GiveUp {
            state: HandshakeState {
                phase: HandshakePhase::Rejected,
                last_sent: None,
                ..state.clone()
            },
        };
    }
    let attempt = state.retries + 1;
    TimeoutOutcome::Retransmit {
        state: HandshakeState {
            retries: attempt,
            ..state.clone()
        },
        frame,
        attempt,
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HandshakeError {
    #[error("session already established")]
    AlreadyEstablished,
    #[error("handshake already in flight")]
    InFlight,
    #[error("handshake was rejected")]
    Rejected,
}

impl HandshakeError {
    pub fn reason(&self) -> &'static str {
        match self {
            HandshakeError::AlreadyEstablished => "already_established",
            HandshakeError::InFlight => "in_flight",
            HandshakeError::Rejected => "previously_rejected",
        }
    }
}

/// Services the state machine needs from its host.
pub trait HandshakeEnv {
    fn fresh_nonce(&mut self) -> u64;
    fn shared_key(&self) -> u64;
    fn capabilities(&self) -> Vec<String>;
    fn auth_token(&mut self, nonce_a: u64, nonce_b: u64) -> Result<u64, AopError>;
    fn verify_token(&mut self, nonce_a: u64, nonce_b: u64, token: u64) -> Result<bool, AopError>;
}

/// `mac(k, nonce_a || nonce_b)`.
pub fn auth_token(key: u64, nonce_a: u64, nonce_b: u64) -> u64 {
    mac64(key, &nonce_pair(nonce_a, nonce_b))
}

/// `mac(k, nonce_b || nonce_a)`.
pub fn session_key(key: u64, nonce_a: u64, nonce_b: u64) -> u64 {
    mac64(key, &nonce_pair(nonce_b, nonce_a))
}

pub fn session_id(key: u64, nonce_a: u64, nonce_b: u64) -> u64 {
    let mut data = b"sid".to_vec();
    data.extend_from_slice(&nonce_pair(nonce_a, nonce_b));
    mac64(key, &data)
}

fn nonce_pair(first: u64, second: u64) -> [u8; 16] {
    let mut out = [0u8; 16];
    out[..8].copy_from_slice(&first.to_le_bytes());
    out[8..].copy_from_slice(&second.to_le_bytes());
    out
}

/// Session material produced when a side reaches `Established`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionParams {
    pub session_id: u64,
    pub session_key: u64,
    pub peer_capabilities: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepNote {
    ChallengeSent,
    ConfirmSent,
    /// A repeated CHALLENGE for the established session; CONFIRM sent again.
    ConfirmResent,
    Established,
    /// This side refused the peer and sent REJECT.
    Rejected { reason: String },
    /// The peer refused us.
    RejectedByPeer { reason: String },
    Dropped { reason: &'static str },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepOutcome {
    pub state: HandshakeState,
    pub outgoing: Vec<Frame>,
    pub session: Option<SessionParams>,
    pub note: StepNote,
}

fn encode_caps(caps: &[String]) -> Vec<u8> {
    caps.join(",").into_bytes()
}

fn decode_caps(bytes: &[u8]) -> Vec<String> {
    let text = String::from_utf8_lossy(bytes);
    if text.is_empty() {
        Vec::new()
    } else {
        text.split(',').map(str::to_string).collect()
    }
}

fn read_u64(bytes: &[u8], at: usize) -> Option<u64> {
    bytes
        .get(at..at + 8)
        .map(|b| u64::from_le_bytes(b.try_into().expect("slice of eight")))
}

fn frame(session_id: u64, kind: FrameKind, payload: Vec<u8>) -> Frame {
    let mut payload = payload;
    payload.truncate(super::frame::MAX_PAYLOAD);
    Frame::new(session_id, 0, kind, payload).expect("payload truncated to the frame limit")
}

pub fn hello_frame(version: u8, nonce_a: u64, caps: &[String]) -> Frame {
    let mut p = vec![version];
    p.extend_from_slice(&nonce_a.to_le_bytes());
    p.extend_from_slice(&encode_caps(caps));
    frame(0, FrameKind::Hello, p)
}

fn challenge_frame(nonce_a: u64, nonce_b: u64, caps: &[String]) -> Frame {
    let mut p = nonce_pair(nonce_a, nonce_b).to_vec();
    p.extend_from_slice(&encode_caps(caps));
    frame(0, FrameKind::Challenge, p)
}

pub fn confirm_frame(session_id: u64, token: u64) -> Frame {
    frame(session_id, FrameKind::Confirm, token.to_le_bytes().to_vec())
}

fn reject_frame(nonce_a: u64, reason: &str) -> Frame {
    let mut p = nonce_a.to_le_bytes().to_vec();
    p.extend_from_slice(reason.as_bytes());
    frame(0, FrameKind::Reject, p)
}

/// Starts a handshake from `Idle`, producing the HELLO to send.
pub fn initiate(state: &HandshakeState, env: &mut dyn HandshakeEnv) -> Result<(HandshakeState, Frame), HandshakeError> {
    match state.phase {
        HandshakePhase::Idle => {}
        HandshakePhase::Established => return Err(HandshakeError::AlreadyEstablished),
        HandshakePhase::HelloSent | HandshakePhase::ChallengeSent => return Err(HandshakeError::InFlight),
        HandshakePhase::Rejected => return Err(HandshakeError::Rejected),
    }
    let nonce = env.fresh_nonce();
    let caps = env.capabilities();
    let hello = hello_frame(PROTOCOL_VERSION, nonce, &caps);
    let next = HandshakeState {
        phase: HandshakePhase::HelloSent,
        nonce_local: nonce,
        last_sent: Some(hello.clone()),
        ..HandshakeState::default()
    };
    Ok((next, hello))
}

/// Advances the state machine on one incoming handshake frame.
///
/// Frames that do not fit the current phase are dropped, not treated as
/// failures.
pub fn step(state: &HandshakeState, incoming: &Frame, env: &mut dyn HandshakeEnv) -> Result<StepOutcome, AopError> {
    use HandshakePhase::*;
    let keep = |reason: &'static str| StepOutcome {
        state: state.clone(),
        outgoing: Vec::new(),
        session: None,
        note: StepNote::Dropped { reason },
    };
    let p = incoming.payload();
    match incoming.kind {
        FrameKind::Hello => {
            let (Some(&version), Some(nonce_a)) = (p.first(), read_u64(p, 1)) else {
                return Ok(keep("malformed"));
            };
            match state.phase {
                Established if state.nonce_remote == nonce_a => Ok(StepOutcome {
                    state: state.clone(),
                    outgoing: vec![reject_frame(nonce_a, "replay")],
                    session: None,
                    note: StepNote::Rejected {
                        reason: "replay".into(),
                    },
                }),
                Idle if version != PROTOCOL_VERSION => Ok(StepOutcome {
                    state: HandshakeState {
                        phase: Rejected,
                        nonce_remote: nonce_a,
                        ..state.clone()
                    },
                    outgoing: vec![reject_frame(nonce_a, "version")],
                    session: None,
                    note: StepNote::Rejected {
                        reason: "version".into(),
                    },
                }),
                Idle => {
                    let nonce_b = env.fresh_nonce();
                    let caps = env.capabilities();
                    let challenge = challenge_frame(nonce_a, nonce_b, &caps);
                    Ok(StepOutcome {
                        state: HandshakeState {
                            phase: ChallengeSent,
                            nonce_local: nonce_b,
                            nonce_remote: nonce_a,
                            peer_capabilities: decode_caps(&p[9..]),
                            retries: 0,
                            last_sent: Some(challenge.clone()),
                        },
                        outgoing: vec![challenge],
                        session: None,
                        note: StepNote::ChallengeSent,
                    })
                }
                _ => Ok(keep("out_of_order")),
            }
        }
        FrameKind::Challenge => {
            let (Some(nonce_a), Some(nonce_b)) = (read_u64(p, 0), read_u64(p, 8)) else {
                return Ok(keep("malformed"));
            };
            let repeated = state.phase == Established && nonce_b == state.nonce_remote;
            if !(state.phase == HelloSent || repeated) || nonce_a != state.nonce_local {
                return Ok(keep("out_of_order"));
            }
            let key = env.shared_key();
            let token = env.auth_token(nonce_a, nonce_b)?;
            let sid = session_id(key, nonce_a, nonce_b);
            if repeated {
                return Ok(StepOutcome {
                    state: state.clone(),
                    outgoing: vec![confirm_frame(sid, token)],
                    session: None,
                    note: StepNote::ConfirmResent,
                });
            }
            let caps = decode_caps(&p[16..]);
            Ok(StepOutcome {
                state: HandshakeState {
                    phase: Established,
                    nonce_local: nonce_a,
                    nonce_remote: nonce_b,
                    peer_capabilities: caps.clone(),
                    retries: 0,
                    last_sent: None,
                },
                outgoing: vec![confirm_frame(sid, token)],
                session: Some(SessionParams {
                    session_id: sid,
                    session_key: session_key(key, nonce_a, nonce_b),
                    peer_capabilities: caps,
                }),
                note: StepNote::ConfirmSent,
            })
        }
        FrameKind::Confirm => {
            if state.phase != ChallengeSent {
                return Ok(keep("out_of_order"));
            }
            let Some(token) = read_u64(p, 0) else {
                return Ok(keep("malformed"));
            };
            let (nonce_a, nonce_b) = (state.nonce_remote, state.nonce_local);
            let key = env.shared_key();
            let sid = session_id(key, nonce_a, nonce_b);
            let valid = incoming.session_id == sid && env.verify_token(nonce_a, nonce_b, token)?;
            if !valid {
                return Ok(StepOutcome {
                    state: HandshakeState {
                        phase: Rejected,
                        ..state.clone()
                    },
                    outgoing: vec![reject_frame(nonce_a, "bad_token")],
                    session: None,
                    note: StepNote::Rejected {
                        reason: "bad_token".into(),
                    },
                });
            }
            Ok(StepOutcome {
                state: HandshakeState {
                    phase: Established,
                    last_sent: None,
                    ..state.clone()
                },
                outgoing: Vec::new(),
                session: Some(SessionParams {
                    session_id: sid,
                    session_key: session_key(key, nonce_a, nonce_b),
                    peer_capabilities: state.peer_capabilities.clone(),
                }),
                note: StepNote::Established,
            })
        }
        FrameKind::Reject => {
            let Some(nonce_a) = read_u64(p, 0) else {
                return Ok(keep("malformed"));
            };
            let reason = String::from_utf8_lossy(&p[8..]).into_owned();
            // A replay rejection is addressed to whoever the HELLO claimed to
            // be; it must not tear down a live session.
            let applies = nonce_a == state.nonce_local
                && match state.phase {
                    HelloSent => true,
                    Established => reason == "bad_token",
                    _ => false,
                };
            if !applies {
                return Ok(keep("out_of_order"));
            }
            Ok(StepOutcome {
                state: HandshakeState {
                    phase: Rejected,
                    last_sent: None,
                    ..state.clone()
                },
                outgoing: Vec::new(),
                session: None,
                note: StepNote::RejectedByPeer { reason },
            })
        }
        FrameKind::Data | FrameKind::Ack | FrameKind::Nak => Ok(keep("not_handshake")),
    }
}
