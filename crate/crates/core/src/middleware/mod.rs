//! The core middleware services: handshaking, data transfer, security and
//! the session registry. Each service operation is a registered join point;
//! the services themselves contain no logging, caching or synchronization.

pub mod frame;
pub mod handshake;
pub mod mac;
pub mod sessions;
mod services;
pub mod transfer;

use std::fmt;
use std::sync::Arc;

use crate::aop::{emit_manifest, weave, AopError, Aspect, EmitMode, OpHandle, OperationRegistry, Woven};
use crate::crosscut;
use crate::manifest::{ConcernManifest, ConcernTag};
use crate::sim::World;

pub use frame::{Frame, FrameKind};
pub use sessions::Session;

pub type Registry = OperationRegistry<World, Call, Response>;
pub type MiddlewareAspect = Aspect<World, Call, Response>;

/// Name of a device in a simulation world.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DeviceId(pub String);

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Every middleware operation that is exposed as a join point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Op {
    Initiate,
    HandleHandshake,
    HandshakeTimeout,
    LookupCapabilities,
    SendReading,
    HandleFrame,
    OnTimeout,
    GetReading,
    PutReading,
    Authenticate,
    VerifyToken,
    SignFrame,
    VerifyFrame,
    RegisterSession,
    FindSession,
    EvictExpired,
}

impl Op {
    pub const ALL: [Op; 16] = [
        Op::Initiate,
        Op::HandleHandshake,
        Op::HandshakeTimeout,
        Op::LookupCapabilities,
        Op::SendReading,
        Op::HandleFrame,
        Op::OnTimeout,
        Op::GetReading,
        Op::PutReading,
        Op::Authenticate,
        Op::VerifyToken,
        Op::SignFrame,
        Op::VerifyFrame,
        Op::RegisterSession,
        Op::FindSession,
        Op::EvictExpired,
    ];

    pub fn module(self) -> &'static str {
        match self {
            Op::Initiate | Op::HandleHandshake | Op::HandshakeTimeout | Op::LookupCapabilities => HANDSHAKING,
            Op::SendReading | Op::HandleFrame | Op::OnTimeout | Op::GetReading | Op::PutReading => DATA_TRANSFER,
            Op::Authenticate | Op::VerifyToken | Op::SignFrame | Op::VerifyFrame => SECURITY,
            Op::RegisterSession | Op::FindSession | Op::EvictExpired => SESSION_REGISTRY,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Op::Initiate => "initiate",
            Op::HandleHandshake => "handle_handshake",
            Op::HandshakeTimeout => "on_handshake_timeout",
            Op::LookupCapabilities => "lookup_capabilities",
            Op::SendReading => "send_reading",
            Op::HandleFrame => "handle_frame",
            Op::OnTimeout => "on_timeout",
            Op::GetReading => "get_reading",
            Op::PutReading => "put_reading",
            Op::Authenticate => "authenticate",
            Op::VerifyToken => "verify_token",
            Op::SignFrame => "sign_frame",
            Op::VerifyFrame => "verify_frame",
            Op::RegisterSession => "register_session",
            Op::FindSession => "find_session",
            Op::EvictExpired => "evict_expired",
        }
    }
}

pub const HANDSHAKING: &str = "Handshaking";
pub const DATA_TRANSFER: &str = "DataTransfer";
pub const SECURITY: &str = "Security";
pub const SESSION_REGISTRY: &str = "SessionRegistry";

/// Core functionalities of each class module, in declaration order.
pub const CORE_MODULES: [(&str, &[&str]); 4] = [
    (HANDSHAKING, &["handshake_core", "session_mgmt"]),
    (DATA_TRANSFER, &["transfer_core", "integrity", "flow_control"]),
    (SECURITY, &["security_core", "key_mgmt", "audit"]),
    (SESSION_REGISTRY, &["registry_core", "lookup", "eviction"]),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SessionKey {
    Peer(usize),
    Id(u64),
}

/// Arguments of a middleware operation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Request {
    Initiate { peer: usize },
    HandleHandshake { from: usize, frame: Frame },
    HandshakeTimeout { peer: usize, attempt: u8 },
    LookupCapabilities { peer: usize },
    SendReading { peer: usize, sensor: String, payload: Vec<u8> },
    HandleFrame { from: usize, frame: Frame },
    OnTimeout { peer: usize, seq: u32, attempt: u8 },
    GetReading { peer: usize, sensor: String },
    PutReading { sensor: String, payload: Vec<u8> },
    Authenticate { nonce_a: u64, nonce_b: u64 },
    VerifyToken { nonce_a: u64, nonce_b: u64, token: u64 },
    SignFrame { frame: Frame, key: u64 },
    VerifyFrame { frame: Frame, key: u64 },
    RegisterSession { session: Session },
    FindSession { key: SessionKey },
    EvictExpired { max_age: u64 },
}

impl fmt::Display for Request {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Request::Initiate { peer } | Request::LookupCapabilities { peer } => write!(f, "peer={peer}"),
            Request::HandleHandshake { from, frame } | Request::HandleFrame { from, frame } => {
                write!(f, "from={from} kind={} seq={}", frame.kind, frame.seq)
            }
            Request::SendReading { peer, sensor, payload } => {
                write!(f, "peer={peer} sensor={sensor} bytes={}", payload.len())
            }
            Request::HandshakeTimeout { peer, attempt } => write!(f, "peer={peer} attempt={attempt}"),
            Request::OnTimeout { peer, seq, attempt } => write!(f, "peer={peer} seq={seq} attempt={attempt}"),
            Request::GetReading { peer, sensor } => write!(f, "peer={peer} sensor={sensor}"),
            Request::PutReading { sensor, payload } => write!(f, "sensor={sensor} bytes={}", payload.len()),
            Request::Authenticate { .. } => f.write_str("token"),
            Request::VerifyToken { .. } => f.write_str("token"),
            Request::SignFrame { frame, .. } | Request::VerifyFrame { frame, .. } => {
                write!(f, "kind={} seq={}", frame.kind, frame.seq)
            }
            Request::RegisterSession { session } => write!(f, "peer={}", session.peer),
            Request::FindSession { key: SessionKey::Peer(p) } => write!(f, "peer={p}"),
            Request::FindSession { key: SessionKey::Id(_) } => f.write_str("by_id"),
            Request::EvictExpired { max_age } => write!(f, "max_age={max_age}"),
        }
    }
}

/// An operation invocation: who is calling, with what.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Call {
    pub actor: usize,
    pub request: Request,
}

impl fmt::Display for Call {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.request.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Response {
    Done,
    Transfer(u64),
    Token(u64),
    Verified(bool),
    Signed(Frame),
    Reading(Option<Vec<u8>>),
    Capabilities(Vec<String>),
    Session(Option<Session>),
    Evicted(usize),
    /// The operation declined the request; the reason is also traced.
    Refused(String),
}

impl Response {
    pub fn summary(&self) -> String {
        match self {
            Response::Done => "done".into(),
            Response::Transfer(id) => format!("transfer={id}"),
            Response::Token(_) => "token".into(),
            Response::Verified(v) => format!("verified={v}"),
            Response::Signed(f) => format!("signed seq={}", f.seq),
            Response::Reading(Some(b)) => format!("reading bytes={}", b.len()),
            Response::Reading(None) => "reading absent".into(),
            Response::Capabilities(c) => format!("capabilities={}", c.len()),
            Response::Session(s) => format!("session={}", s.is_some()),
            Response::Evicted(n) => format!("evicted={n}"),
            Response::Refused(r) => format!("refused: {r}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BuildMode {
    /// Cross-cutting behavior inlined into every service operation.
    Tangled,
    /// Cross-cutting behavior attached by aspects.
    Woven,
}

impl BuildMode {
    /// Version label used for manifests emitted from this build.
    pub fn label(self) -> &'static str {
        match self {
            BuildMode::Tangled => "iot-java",
            BuildMode::Woven => "iot-aspectj",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BuildMode::Tangled => "tangled",
            BuildMode::Woven => "woven",
        }
    }
}

impl std::str::FromStr for BuildMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tangled" => Ok(BuildMode::Tangled),
            "woven" => Ok(BuildMode::Woven),
            other => Err(format!("unknown build mode `{other}` (expected tangled or woven)")),
        }
    }
}

/// Registry of the bare service operations.
pub fn core_registry() -> Registry {
    let mut r = Registry::new();
    for (module, tags) in CORE_MODULES {
        let tags = tags
            .iter()
            .map(|t| ConcernTag::new(*t).expect("built-in tags are identifiers"))
            .collect();
        r.declare_module(module, tags).expect("built-in modules are unique");
    }
    for op in Op::ALL {
        r.register_shared(op.module(), op.name(), services::behavior(op))
            .expect("built-in operations are unique");
    }
    r
}

/// Concern manifest of the reference build in `mode`, labeled with the
/// mode's version label.
pub fn reference_manifest(mode: BuildMode) -> ConcernManifest {
    let emit_mode = match mode {
        BuildMode::Tangled => EmitMode::Tangled,
        BuildMode::Woven => EmitMode::Woven,
    };
    let mut m = emit_manifest(&core_registry(), &crosscut::reference_aspects(), emit_mode)
        .expect("the reference build has well-formed modules");
    m.set_version_label(mode.label());
    m
}

/// A built middleware: the invocation table plus handles for every [`Op`].
pub struct Middleware {
    mode: BuildMode,
    woven: Woven<World, Call, Response>,
    handles: Vec<OpHandle>,
}

impl Middleware {
    pub fn build(mode: BuildMode) -> Result<Self, AopError> {
        let core = core_registry();
        let woven = match mode {
            BuildMode::Woven => weave(&core, &crosscut::reference_aspects())?,
            BuildMode::Tangled => weave(&crosscut::wrap_tangled(&core)?, &[])?,
        };
        let handles = Op::ALL
            .iter()
            .map(|op| {
                woven
                    .lookup(op.module(), op.name())
                    .ok_or_else(|| AopError::UnknownOperation(format!("{}.{}", op.module(), op.name())))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { mode, woven, handles })
    }

    pub fn mode(&self) -> BuildMode {
        self.mode
    }

    pub fn woven(&self) -> &Woven<World, Call, Response> {
        &self.woven
    }

    pub fn invoke(&self, op: Op, world: &mut World, call: &Call) -> Result<Response, AopError> {
        self.woven.invoke(self.handles[op as usize], world, call)
    }
}

/// Shared handle stored inside a world so core operations can make nested
/// calls through the same chains.
pub type SharedMiddleware = Arc<Middleware>;
