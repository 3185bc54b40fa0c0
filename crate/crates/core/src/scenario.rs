//! Scenario scripts.
//!
//! ```text
//! devices A B
//! link delay=1 drop=0.1 seed=42
//! key 0x5EED
//! at 0 A handshake B
//! at 3 B put temp "23.5"
//! at 5 A send B temp 0x0102ff
//! at 9 A read B temp
//! run 200
//! ```

use thiserror::Error;

use crate::middleware::DeviceId;
use crate::sim::{LinkConfig, SimError};

pub const DEFAULT_SHARED_KEY: u64 = 0x5EED;
pub const DEFAULT_RUN_LIMIT: u64 = 1000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: device `{name}` is not declared")]
    UndeclaredDevice { line: usize, name: String },
    #[error("line {line}: tick must not be negative")]
    NegativeTick { line: usize },
}

impl ScenarioError {
    pub fn line(&self) -> usize {
        match self {
            ScenarioError::Syntax { line, .. }
            | ScenarioError::UndeclaredDevice { line, .. }
            | ScenarioError::NegativeTick { line } => *line,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verb {
    Handshake { peer: usize },
    Put { sensor: String, payload: Vec<u8> },
    Send { peer: usize, sensor: String, payload: Vec<u8> },
    Read { peer: usize, sensor: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioAction {
    pub at_tick: u64,
    /// Index into [`Scenario::devices`].
    pub actor: usize,
    pub verb: Verb,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub devices: Vec<DeviceId>,
    pub link: LinkConfig,
    pub shared_key: u64,
    /// Sorted by tick, then by position in the script.
    pub actions: Vec<ScenarioAction>,
    pub run_limit: u64,
}

impl Scenario {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.link.seed = seed;
        self
    }
}

fn syntax(line: usize, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Syntax {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Word(String),
    Quoted(String),
}

fn tokenize(text: &str, line: usize) -> Result<Vec<Token>, ScenarioError> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '#' {
            break;
        } else if c == '"' {
            chars.next();
            let mut s = String::new();
            loop {
                match chars.next() {
                    None => return Err(syntax(line, "unterminated string")),
                    Some('"') => break,
                    Some('\\') => match chars.next() {
                        Some(e @ ('"' | '\\')) => s.push(e),
                        Some('n') => s.push('\n'),
                        _ => return Err(syntax(line, "bad escape in string")),
                    },
                    Some(ch) => s.push(ch),
                }
            }
            out.push(Token::Quoted(s));
        } else {
            let mut s = String::new();
            while let Some(&ch) = chars.peek() {
                if ch.is_whitespace() || ch == '#' || ch == '"' {
                    break;
                }
                s.push(ch);
                chars.next();
            }
            out.push(Token::Word(s));
        }
    }
    Ok(out)
}

fn word<'a>(tok: Option<&'a Token>, line: usize, what: &str) -> Result<&'a str, ScenarioError> {
    match tok {
        Some(Token::Word(w)) => Ok(w),
        Some(Token::Quoted(_)) => Err(syntax(line, format!("expected {what}, found a string"))),
        None => Err(syntax(line, format!("expected {what}"))),
    }
}

fn parse_u64(s: &str, line: usize, what: &str) -> Result<u64, ScenarioError> {
    let parsed = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => s.parse(),
    };
    parsed.map_err(|_| syntax(line, format!("invalid {what} `{s}`")))
}

fn parse_payload(tok: Option<&Token>, line: usize) -> Result<Vec<u8>, ScenarioError> {
    match tok {
        Some(Token::Quoted(s)) => Ok(s.as_bytes().to_vec()),
        Some(Token::Word(w)) => {
            let hex = w
                .strip_prefix("0x")
                .ok_or_else(|| syntax(line, "payload must be a quoted string or 0x-prefixed hex"))?;
            if hex.len() % 2 != 0 {
                return Err(syntax(line, "hex payload needs an even number of digits"));
            }
            (0..hex.len())
                .step_by(2)
                .map(|i| u8::from_str_radix(&hex[i..i + 2], 16))
                .collect::<Result<_, _>>()
                .map_err(|_| syntax(line, format!("invalid hex payload `{w}`")))
        }
        None => Err(syntax(line, "expected payload")),
    }
}

struct RawAction {
    line: usize,
    at_tick: u64,
    actor: String,
    verb: RawVerb,
}

enum RawVerb {
    Handshake(String),
    Put(String, Vec<u8>),
    Send(String, String, Vec<u8>),
    Read(String, String),
}

fn parse_link(toks: &[Token], line: usize) -> Result<LinkConfig, ScenarioError> {
    let mut link = LinkConfig::default();
    let mut seen = Vec::new();
    for t in toks {
        let w = word(Some(t), line, "key=value")?;
        let (k, v) = w
            .split_once('=')
            .ok_or_else(|| syntax(line, format!("expected key=value, found `{w}`")))?;
        if seen.contains(&k) {
            return Err(syntax(line, format!("`{k}` given twice")));
        }
        seen.push(k);
        match k {
            "delay" => link.delay_ticks = parse_u64(v, line, "delay")?,
            "drop" => {
                link.drop_probability = v
                    .parse()
                    .map_err(|_| syntax(line, format!("invalid drop probability `{v}`")))?
            }
            "seed" => link.seed = parse_u64(v, line, "seed")?,
            other => return Err(syntax(line, format!("unknown link setting `{other}`"))),
        }
    }
    LinkConfig::new(link.delay_ticks, link.drop_probability, link.seed).map_err(|e| match e {
        SimError::ZeroDelay => syntax(line, "delay must be at least 1"),
        other => syntax(line, other.to_string()),
    })
}

fn parse_at(toks: &[Token], line: usize) -> Result<RawAction, ScenarioError> {
    let tick = word(toks.get(1), line, "tick")?;
    let at_tick = match tick.parse::<i64>() {
        Ok(t) if t < 0 => return Err(ScenarioError::NegativeTick { line }),
        Ok(t) => t as u64,
        Err(_) => parse_u64(tick, line, "tick")?,
    };
    let actor = word(toks.get(2), line, "device")?.to_string();
    let verb_name = word(toks.get(3), line, "verb")?;
    let (verb, arity) = match verb_name {
        "handshake" => (RawVerb::Handshake(word(toks.get(4), line, "peer device")?.into()), 5),
        "put" => (
            RawVerb::Put(
                word(toks.get(4), line, "sensor")?.into(),
                parse_payload(toks.get(5), line)?,
            ),
            6,
        ),
        "send" => (
            RawVerb::Send(
                word(toks.get(4), line, "peer device")?.into(),
                word(toks.get(5), line, "sensor")?.into(),
                parse_payload(toks.get(6), line)?,
            ),
            7,
        ),
        "read" => (
            RawVerb::Read(
                word(toks.get(4), line, "peer device")?.into(),
                word(toks.get(5), line, "sensor")?.into(),
            ),
            6,
        ),
        other => return Err(syntax(line, format!("unknown verb `{other}`"))),
    };
    if toks.len() > arity {
        return Err(syntax(line, "trailing input"));
    }
    Ok(RawAction {
        line,
        at_tick,
        actor,
        verb,
    })
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let mut devices: Option<(usize, Vec<DeviceId>)> = None;
    let mut link = None;
    let mut key = None;
    let mut run = None;
    let mut raw = Vec::new();
    let mut last_line = 0;

    for (i, text) in text.lines().enumerate() {
        let line = i + 1;
        last_line = line;
        let toks = tokenize(text, line)?;
        let Some(first) = toks.first() else { continue };
        let head = word(Some(first), line, "statement")?;
        let once = |slot: bool, what: &str| {
            if slot {
                Err(syntax(line, format!("`{what}` given twice")))
            } else {
                Ok(())
            }
        };
        match head {
            "devices" => {
                once(devices.is_some(), "devices")?;
                let names = toks[1..]
                    .iter()
                    .map(|t| word(Some(t), line, "device name").map(str::to_string))
                    .collect::<Result<Vec<_>, _>>()?;
                if names.len() != 2 {
                    return Err(syntax(line, "exactly two devices are required"));
                }
                if names[0] == names[1] {
                    return Err(syntax(line, "device names must differ"));
                }
                if let Some(bad) = names.iter().find(|n| !crate::aop::is_name(n)) {
                    return Err(syntax(line, format!("invalid device name `{bad}`")));
                }
                devices = Some((line, names.into_iter().map(DeviceId).collect()));
            }
            "link" => {
                once(link.is_some(), "link")?;
                link = Some(parse_link(&toks[1..], line)?);
            }
            "key" => {
                once(key.is_some(), "key")?;
                key = Some(parse_u64(word(toks.get(1), line, "key")?, line, "key")?);
                if toks.len() > 2 {
                    return Err(syntax(line, "trailing input"));
                }
            }
            "run" => {
                once(run.is_some(), "run")?;
                let limit = word(toks.get(1), line, "tick")?;
                if limit.starts_with('-') {
                    return Err(ScenarioError::NegativeTick { line });
                }
                run = Some(parse_u64(limit, line, "tick")?);
                if toks.len() > 2 {
                    return Err(syntax(line, "trailing input"));
                }
            }
            "at" => raw.push(parse_at(&toks, line)?),
            other => return Err(syntax(line, format!("unknown statement `{other}`"))),
        }
    }

    let Some((_, devices)) = devices else {
        return Err(syntax(last_line.max(1), "missing `devices` statement"));
    };
    let resolve = |name: &str, line: usize| {
        devices
            .iter()
            .position(|d| d.0 == name)
            .ok_or_else(|| ScenarioError::UndeclaredDevice {
                line,
                name: name.to_string(),
            })
    };
    let mut actions = Vec::with_capacity(raw.len());
    for a in raw {
        let actor = resolve(&a.actor, a.line)?;
        let verb = match a.verb {
            RawVerb::Handshake(p) => Verb::Handshake { peer: resolve(&p, a.line)? },
            RawVerb::Put(sensor, payload) => Verb::Put { sensor, payload },
            RawVerb::Send(p, sensor, payload) => Verb::Send {
                peer: resolve(&p, a.line)?,
                sensor,
                payload,
            },
            RawVerb::Read(p, sensor) => Verb::Read {
                peer: resolve(&p, a.line)?,
                sensor,
            },
        };
        actions.push(ScenarioAction {
            at_tick: a.at_tick,
            actor,
            verb,
        });
    }
    actions.sort_by_key(|a| a.at_tick);
    Ok(Scenario {
        devices,
        link: link.unwrap_or_default(),
        shared_key: key.unwrap_or(DEFAULT_SHARED_KEY),
        actions,
        run_limit: run.unwrap_or(DEFAULT_RUN_LIMIT),
    })
}
