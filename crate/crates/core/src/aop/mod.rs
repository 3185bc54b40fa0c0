//! A small aspect-oriented runtime.
//!
//! Core behavior is registered per `(module, operation)` in an
//! [`OperationRegistry`]. [`weave`] attaches the advice of a list of
//! [`Aspect`]s to every operation whose join point matches the advice's
//! pointcut, producing a static interceptor chain per operation. Invoking an
//! operation through the [`Woven`] table runs that chain.

mod emit;
mod glob;
mod pointcut;
mod runtime;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub use emit::{emit_manifest, EmitMode};
pub use glob::{is_name, Glob};
pub use pointcut::{matches, parse_pointcut, PointcutError, PointcutExpr};
pub use runtime::{
    weave, Advice, AdviceError, AfterFn, AroundFn, Aspect, AttachedAdvice, BeforeFn, CoreFn,
    ModuleInfo, OpHandle, OperationRegistry, Proceed, WeaveReport, Woven,
};

/// The execution of a registered operation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinPoint {
    module: Arc<str>,
    op: Arc<str>,
    args_summary: String,
}

impl JoinPoint {
    pub const KIND: &'static str = "execution";

    pub fn new(module: impl Into<Arc<str>>, op: impl Into<Arc<str>>, args_summary: impl Into<String>) -> Self {
        Self {
            module: module.into(),
            op: op.into(),
            args_summary: args_summary.into(),
        }
    }

    pub fn module(&self) -> &str {
        &self.module
    }

    pub fn op(&self) -> &str {
        &self.op
    }

    pub fn kind(&self) -> &'static str {
        Self::KIND
    }

    pub fn args_summary(&self) -> &str {
        &self.args_summary
    }
}

impl fmt::Display for JoinPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.module, self.op)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    Before,
    After,
    Around,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Before => "before",
            Phase::After => "after",
            Phase::Around => "around",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AopError {
    #[error("invalid name `{0}`")]
    InvalidName(String),
    #[error("module `{0}` declared twice")]
    DuplicateModule(String),
    #[error("module `{0}` was never declared")]
    UnknownModule(String),
    #[error("operation {module}.{op} registered twice")]
    DuplicateOperation { module: String, op: String },
    #[error("no operation {0}")]
    UnknownOperation(String),
    #[error("aspect `{0}` appears twice")]
    DuplicateAspect(String),
    #[error("aspect `{aspect}` called proceed more than once at {join_point}")]
    DoubleProceed { aspect: String, join_point: String },
    #[error("advice of aspect `{aspect}` failed at {join_point}: {message}")]
    Advice {
        aspect: String,
        join_point: String,
        message: String,
    },
    #[error("{0}")]
    Fault(String),
}

impl AopError {
    pub fn fault(message: impl Into<String>) -> Self {
        AopError::Fault(message.into())
    }
}
