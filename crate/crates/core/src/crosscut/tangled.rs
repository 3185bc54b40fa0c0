//! The tangled build: every service operation carries its concerns inline,
//! listed by hand per operation.

use std::sync::Arc;

use crate::aop::{AopError, JoinPoint, Phase};
use crate::middleware::{Call, Registry, Response, DATA_TRANSFER, HANDSHAKING, SECURITY, SESSION_REGISTRY};
use crate::sim::trace::Source;
use crate::sim::World;

use super::{caching, logging, sync};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InlineStep {
    Guard,
    LogBefore,
    LogAfter,
    Cache,
}

impl InlineStep {
    /// The aspect advice this step stands in for.
    pub fn counterpart(self) -> (&'static str, Phase) {
        match self {
            InlineStep::Guard => (super::SYNCHRONIZATION_ASPECT, Phase::Around),
            InlineStep::LogBefore => (super::LOGGING_ASPECT, Phase::Before),
            InlineStep::LogAfter => (super::LOGGING_ASPECT, Phase::After),
            InlineStep::Cache => (super::CACHING_ASPECT, Phase::Around),
        }
    }
}

/// Inline concern code of one operation, outermost first.
pub fn inline_plan(module: &str, op: &str) -> Vec<InlineStep> {
    use InlineStep::*;
    match (module, op) {
        (HANDSHAKING, "lookup_capabilities") | (DATA_TRANSFER, "get_reading") => {
            vec![Guard, LogBefore, LogAfter, Cache]
        }
        (HANDSHAKING | DATA_TRANSFER | SECURITY | SESSION_REGISTRY, _) => vec![Guard, LogBefore, LogAfter],
        _ => Vec::new(),
    }
}

type Core = Arc<dyn Fn(&mut World, &Call) -> Result<Response, AopError> + Send + Sync>;

fn run(plan: &[InlineStep], core: &Core, w: &mut World, jp: &JoinPoint, call: &Call) -> Result<Response, AopError> {
    let Some((step, rest)) = plan.split_first() else {
        return core(w, call);
    };
    let src = Source::Inline;
    match step {
        InlineStep::Guard => sync::around(w, jp, call, src, &mut |w| run(rest, core, w, jp, call)),
        InlineStep::LogBefore => {
            logging::before(w, jp, call, src);
            run(rest, core, w, jp, call)
        }
        InlineStep::LogAfter => {
            let result = run(rest, core, w, jp, call);
            logging::after(w, jp, call, &result, src);
            result
        }
        InlineStep::Cache => caching::around(w, jp, call, src, &mut |w| run(rest, core, w, jp, call)),
    }
}

/// Same modules and operations as `core`, each behavior wrapped with its
/// inline concern code.
pub fn wrap_tangled(core: &Registry) -> Result<Registry, AopError> {
    let mut out = Registry::new();
    for m in core.modules() {
        out.declare_module(&m.name, m.core_tags.clone())?;
    }
    for (module, op) in core.operations() {
        let handle = core.lookup(module, op).expect("listed operation");
        let inner = Arc::clone(core.behavior(handle));
        let plan = inline_plan(module, op);
        let (m, o): (Arc<str>, Arc<str>) = (Arc::from(module), Arc::from(op));
        out.register_operation(module, op, move |w: &mut World, call: &Call| {
            let jp = JoinPoint::new(Arc::clone(&m), Arc::clone(&o), call.to_string());
            run(&plan, &inner, w, &jp, call)
        })?;
    }
    Ok(out)
}
