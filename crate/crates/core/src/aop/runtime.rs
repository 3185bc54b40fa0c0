use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use crate::manifest::ConcernTag;

use super::glob::is_name;
use super::{AopError, JoinPoint, Phase, PointcutExpr};

pub type CoreFn<C, A, R> = Arc<dyn Fn(&mut C, &A) -> Result<R, AopError> + Send + Sync>;
pub type BeforeFn<C, A> = Arc<dyn Fn(&mut C, &JoinPoint, &A) -> Result<(), AdviceError> + Send + Sync>;
pub type AfterFn<C, A, R> =
    Arc<dyn Fn(&mut C, &JoinPoint, &A, &Result<R, AopError>) -> Result<(), AdviceError> + Send + Sync>;
pub type AroundFn<C, A, R> =
    Arc<dyn Fn(&mut C, &JoinPoint, &A, &mut Proceed<'_, C, A, R>) -> Result<R, AdviceError> + Send + Sync>;

/// Failure inside an advice body.
///
/// `Chain` carries errors that came out of `proceed` untouched; `Failed` is
/// the advice's own failure and gets attributed to its aspect.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AdviceError {
    Chain(AopError),
    Failed(String),
}

impl From<AopError> for AdviceError {
    fn from(e: AopError) -> Self {
        AdviceError::Chain(e)
    }
}

pub enum Advice<C, A, R> {
    Before(BeforeFn<C, A>),
    After(AfterFn<C, A, R>),
    Around(AroundFn<C, A, R>),
}

impl<C, A, R> Advice<C, A, R> {
    pub fn before(f: impl Fn(&mut C, &JoinPoint, &A) -> Result<(), AdviceError> + Send + Sync + 'static) -> Self {
        Advice::Before(Arc::new(f))
    }

    pub fn after(
        f: impl Fn(&mut C, &JoinPoint, &A, &Result<R, AopError>) -> Result<(), AdviceError> + Send + Sync + 'static,
    ) -> Self {
        Advice::After(Arc::new(f))
    }

    pub fn around(
        f: impl Fn(&mut C, &JoinPoint, &A, &mut Proceed<'_, C, A, R>) -> Result<R, AdviceError> + Send + Sync + 'static,
    ) -> Self {
        Advice::Around(Arc::new(f))
    }

    pub fn phase(&self) -> Phase {
        match self {
            Advice::Before(_) => Phase::Before,
            Advice::After(_) => Phase::After,
            Advice::Around(_) => Phase::Around,
        }
    }
}

impl<C, A, R> Clone for Advice<C, A, R> {
    fn clone(&self) -> Self {
        match self {
            Advice::Before(f) => Advice::Before(Arc::clone(f)),
            Advice::After(f) => Advice::After(Arc::clone(f)),
            Advice::Around(f) => Advice::Around(Arc::clone(f)),
        }
    }
}

impl<C, A, R> fmt::Debug for Advice<C, A, R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Advice::{:?}", self.phase())
    }
}

/// One cross-cutting concern: a single concern tag plus its advice.
pub struct Aspect<C, A, R> {
    name: String,
    concern_tag: ConcernTag,
    precedence: i32,
    advice: Vec<(PointcutExpr, Advice<C, A, R>)>,
}

impl<C, A, R> Aspect<C, A, R> {
    /// Lower precedence values sit further out in the chain.
    pub fn new(name: impl Into<String>, concern_tag: ConcernTag, precedence: i32) -> Self {
        Self {
            name: name.into(),
            concern_tag,
            precedence,
            advice: Vec::new(),
        }
    }

    pub fn with_advice(mut self, pointcut: PointcutExpr, advice: Advice<C, A, R>) -> Self {
        self.advice.push((pointcut, advice));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn concern_tag(&self) -> &ConcernTag {
        &self.concern_tag
    }

    pub fn precedence(&self) -> i32 {
        self.precedence
    }

    pub fn advice(&self) -> &[(PointcutExpr, Advice<C, A, R>)] {
        &self.advice
    }

    /// True when any of this aspect's pointcuts matches `jp`.
    pub fn applies_to(&self, jp: &JoinPoint) -> bool {
        self.advice.iter().any(|(p, _)| p.matches(jp))
    }
}

impl<C, A, R> Clone for Aspect<C, A, R> {
    fn clone(&self) -> Self {
        Self {
            name: self.name.clone(),
            concern_tag: self.concern_tag.clone(),
            precedence: self.precedence,
            advice: self.advice.clone(),
        }
    }
}

impl<C, A, R> fmt::Debug for Aspect<C, A, R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Aspect")
            .field("name", &self.name)
            .field("concern_tag", &self.concern_tag)
            .field("precedence", &self.precedence)
            .field("advice", &self.advice)
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OpHandle(usize);

impl OpHandle {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModuleInfo {
    pub name: String,
    pub core_tags: Vec<ConcernTag>,
}

struct OperationEntry<C, A, R> {
    module: Arc<str>,
    op: Arc<str>,
    behavior: CoreFn<C, A, R>,
}

/// Declared modules and their registered operations.
pub struct OperationRegistry<C, A, R> {
    modules: Vec<ModuleInfo>,
    ops: Vec<OperationEntry<C, A, R>>,
}

impl<C, A, R> Default for OperationRegistry<C, A, R> {
    fn default() -> Self {
        Self {
            modules: Vec::new(),
            ops: Vec::new(),
        }
    }
}

impl<C, A, R> OperationRegistry<C, A, R> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares a class module and the core functionalities it owns.
    pub fn declare_module(&mut self, name: &str, core_tags: Vec<ConcernTag>) -> Result<(), AopError> {
        if !is_name(name) {
            return Err(AopError::InvalidName(name.to_string()));
        }
        if self.modules.iter().any(|m| m.name == name) {
            return Err(AopError::DuplicateModule(name.to_string()));
        }
        self.modules.push(ModuleInfo {
            name: name.to_string(),
            core_tags,
        });
        Ok(())
    }

    pub fn register_operation(
        &mut self,
        module: &str,
        op: &str,
        behavior: impl Fn(&mut C, &A) -> Result<R, AopError> + Send + Sync + 'static,
    ) -> Result<OpHandle, AopError> {
        self.register_shared(module, op, Arc::new(behavior))
    }

    pub fn register_shared(&mut self, module: &str, op: &str, behavior: CoreFn<C, A, R>) -> Result<OpHandle, AopError> {
        if !is_name(op) {
            return Err(AopError::InvalidName(op.to_string()));
        }
        let Some(info) = self.modules.iter().find(|m| m.name == module) else {
            return Err(AopError::UnknownModule(module.to_string()));
        };
        if self.lookup(module, op).is_some() {
            return Err(AopError::DuplicateOperation {
                module: module.to_string(),
                op: op.to_string(),
            });
        }
        let module: Arc<str> = Arc::from(info.name.as_str());
        self.ops.push(OperationEntry {
            module,
            op: Arc::from(op),
            behavior,
        });
        Ok(OpHandle(self.ops.len() - 1))
    }

    pub fn lookup(&self, module: &str, op: &str) -> Option<OpHandle> {
        self.ops
            .iter()
            .position(|e| &*e.module == module && &*e.op == op)
            .map(OpHandle)
    }

    /// Core behavior registered under `handle`.
    pub fn behavior(&self, handle: OpHandle) -> &CoreFn<C, A, R> {
        &self.ops[handle.0].behavior
    }

    pub fn modules(&self) -> &[ModuleInfo] {
        &self.modules
    }

    /// `(module, op)` of every registered operation, in registration order.
    pub fn operations(&self) -> impl Iterator<Item = (&str, &str)> {
        self.ops.iter().map(|e| (&*e.module, &*e.op))
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Join points of one module's operations, with empty argument summaries.
    pub fn join_points_of<'a>(&'a self, module: &'a str) -> impl Iterator<Item = JoinPoint> + 'a {
        self.ops
            .iter()
            .filter(move |e| &*e.module == module)
            .map(|e| JoinPoint::new(Arc::clone(&e.module), Arc::clone(&e.op), ""))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttachedAdvice {
    pub aspect: String,
    pub phase: Phase,
    pub precedence: i32,
    /// Position in the operation's chain, 0 = outermost.
    pub rank: usize,
}

/// For every operation (registration order) the advice attached to it,
/// outermost first.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WeaveReport {
    pub operations: Vec<(String, String, Vec<AttachedAdvice>)>,
}

impl WeaveReport {
    pub fn advice_for(&self, module: &str, op: &str) -> Option<&[AttachedAdvice]> {
        self.operations
            .iter()
            .find(|(m, o, _)| m == module && o == op)
            .map(|(_, _, a)| a.as_slice())
    }

    /// Operations carrying at least one advice of `aspect`.
    pub fn operations_advised_by(&self, aspect: &str) -> Vec<String> {
        self.operations
            .iter()
            .filter(|(_, _, a)| a.iter().any(|x| x.aspect == aspect))
            .map(|(m, o, _)| format!("{m}.{o}"))
            .collect()
    }
}

struct ChainLink<C, A, R> {
    aspect: Arc<str>,
    advice: Advice<C, A, R>,
}

struct WovenOp<C, A, R> {
    module: Arc<str>,
    op: Arc<str>,
    core: CoreFn<C, A, R>,
    chain: Vec<ChainLink<C, A, R>>,
}

/// The composed interceptor chains, ready to invoke.
pub struct Woven<C, A, R> {
    ops: Vec<WovenOp<C, A, R>>,
    report: WeaveReport,
}

/// Attaches the advice of `aspects` to every matching operation of `registry`.
///
/// Advice on one operation is ordered by aspect precedence (ascending) and
/// then by registration order: aspect position in `aspects`, then advice
/// position within the aspect.
pub fn weave<C, A, R>(
    registry: &OperationRegistry<C, A, R>,
    aspects: &[Aspect<C, A, R>],
) -> Result<Woven<C, A, R>, AopError> {
    let mut names = HashSet::new();
    for a in aspects {
        if !names.insert(a.name()) {
            return Err(AopError::DuplicateAspect(a.name().to_string()));
        }
    }

    let mut ordered: Vec<_> = aspects
        .iter()
        .enumerate()
        .flat_map(|(ai, aspect)| {
            aspect
                .advice
                .iter()
                .enumerate()
                .map(move |(vi, (pc, adv))| (aspect.precedence, ai, vi, aspect, pc, adv))
        })
        .collect();
    ordered.sort_by_key(|(p, ai, vi, ..)| (*p, *ai, *vi));

    let mut ops = Vec::with_capacity(registry.ops.len());
    let mut report = WeaveReport::default();
    for entry in &registry.ops {
        let jp = JoinPoint::new(Arc::clone(&entry.module), Arc::clone(&entry.op), "");
        let mut chain = Vec::new();
        let mut attached = Vec::new();
        for (prec, _, _, aspect, pc, adv) in &ordered {
            if pc.matches(&jp) {
                attached.push(AttachedAdvice {
                    aspect: aspect.name.clone(),
                    phase: adv.phase(),
                    precedence: *prec,
                    rank: chain.len(),
                });
                chain.push(ChainLink {
                    aspect: Arc::from(aspect.name.as_str()),
                    advice: (*adv).clone(),
                });
            }
        }
        report
            .operations
            .push((entry.module.to_string(), entry.op.to_string(), attached));
        ops.push(WovenOp {
            module: Arc::clone(&entry.module),
            op: Arc::clone(&entry.op),
            core: Arc::clone(&entry.behavior),
            chain,
        });
    }
    Ok(Woven { ops, report })
}

impl<C, A: fmt::Display, R> Woven<C, A, R> {
    pub fn report(&self) -> &WeaveReport {
        &self.report
    }

    pub fn lookup(&self, module: &str, op: &str) -> Option<OpHandle> {
        self.ops
            .iter()
            .position(|e| &*e.module == module && &*e.op == op)
            .map(OpHandle)
    }

    /// Runs the operation's chain and core behavior.
    pub fn invoke(&self, handle: OpHandle, ctx: &mut C, args: &A) -> Result<R, AopError> {
        let op = self
            .ops
            .get(handle.0)
            .ok_or_else(|| AopError::UnknownOperation(format!("#{}", handle.0)))?;
        let jp = JoinPoint::new(Arc::clone(&op.module), Arc::clone(&op.op), args.to_string());
        run_chain(op, 0, &jp, ctx, args)
    }
}

fn attribute(link_aspect: &str, jp: &JoinPoint, e: AdviceError) -> AopError {
    match e {
        AdviceError::Chain(inner) => inner,
        AdviceError::Failed(message) => AopError::Advice {
            aspect: link_aspect.to_string(),
            join_point: jp.to_string(),
            message,
        },
    }
}

fn run_chain<C, A, R>(op: &WovenOp<C, A, R>, idx: usize, jp: &JoinPoint, ctx: &mut C, args: &A) -> Result<R, AopError> {
    let Some(link) = op.chain.get(idx) else {
        return (op.core)(ctx, args);
    };
    match &link.advice {
        Advice::Before(f) => {
            f(ctx, jp, args).map_err(|e| attribute(&link.aspect, jp, e))?;
            run_chain(op, idx + 1, jp, ctx, args)
        }
        Advice::After(f) => {
            let result = run_chain(op, idx + 1, jp, ctx, args);
            f(ctx, jp, args, &result).map_err(|e| attribute(&link.aspect, jp, e))?;
            result
        }
        Advice::Around(f) => {
            let mut proceed = Proceed {
                op,
                next: idx + 1,
                jp,
                aspect: &link.aspect,
                calls: 0,
            };
            let out = f(ctx, jp, args, &mut proceed);
            if proceed.calls > 1 {
                return Err(AopError::DoubleProceed {
                    aspect: link.aspect.to_string(),
                    join_point: jp.to_string(),
                });
            }
            out.map_err(|e| attribute(&link.aspect, jp, e))
        }
    }
}

/// Continuation handed to around advice. Calling it runs the rest of the
/// chain; it may be called at most once.
pub struct Proceed<'a, C, A, R> {
    op: &'a WovenOp<C, A, R>,
    next: usize,
    jp: &'a JoinPoint,
    aspect: &'a str,
    calls: u32,
}

impl<C, A, R> Proceed<'_, C, A, R> {
    pub fn proceed(&mut self, ctx: &mut C, args: &A) -> Result<R, AopError> {
        self.calls += 1;
        if self.calls > 1 {
            return Err(AopError::DoubleProceed {
                aspect: self.aspect.to_string(),
                join_point: self.jp.to_string(),
            });
        }
        run_chain(self.op, self.next, self.jp, ctx, args)
    }

    pub fn join_point(&self) -> &JoinPoint {
        self.jp
    }

    pub fn was_called(&self) -> bool {
        self.calls > 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aop::parse_pointcut;

    type Log = Vec<String>;
    type Reg = OperationRegistry<Log, u32, u32>;

    fn tag(s: &str) -> ConcernTag {
        ConcernTag::new(s).unwrap()
    }

    fn registry() -> Reg {
        let mut r = Reg::new();
        r.declare_module("M", vec![tag("m_core")]).unwrap();
        r.register_operation("M", "op", |log: &mut Log, x: &u32| {
            log.push("core".into());
            Ok(x + 1)
        })
        .unwrap();
        r
    }

    fn pc(s: &str) -> PointcutExpr {
        parse_pointcut(s).unwrap()
    }

    fn tracing_around(label: &'static str) -> Advice<Log, u32, u32> {
        Advice::around(move |log: &mut Log, _jp, a, p| {
            log.push(format!("{label}:in"));
            let r = p.proceed(log, a)?;
            log.push(format!("{label}:out"));
            Ok(r)
        })
    }

    #[test]
    fn zero_aspects_is_identity() {
        let r = registry();
        let w = weave(&r, &[]).unwrap();
        let mut log = Log::new();
        let h = w.lookup("M", "op").unwrap();
        assert_eq!(w.invoke(h, &mut log, &41).unwrap(), 42);
        assert_eq!(log, vec!["core"]);
    }

    #[test]
    fn duplicate_registration() {
        let mut r = registry();
        let err = r.register_operation("M", "op", |_: &mut Log, x: &u32| Ok(*x)).unwrap_err();
        assert_eq!(
            err,
            AopError::DuplicateOperation {
                module: "M".into(),
                op: "op".into()
            }
        );
        assert!(matches!(
            r.register_operation("Nope", "op", |_: &mut Log, x: &u32| Ok(*x)),
            Err(AopError::UnknownModule(_))
        ));
        assert!(r.operations().any(|(m, o)| m == "M" && o == "op"));
    }

    #[test]
    fn precedence_orders_chain() {
        let r = registry();
        let a20 = Aspect::new("B", tag("b"), 20).with_advice(pc("execution(*.*)"), tracing_around("p20"));
        let a10 = Aspect::new("A", tag("a"), 10).with_advice(pc("execution(*.*)"), tracing_around("p10"));
        let w = weave(&r, &[a20, a10]).unwrap();
        let mut log = Log::new();
        w.invoke(OpHandle(0), &mut log, &0).unwrap();
        assert_eq!(log, vec!["p10:in", "p20:in", "core", "p20:out", "p10:out"]);
        let ranks: Vec<_> = w.report().advice_for("M", "op").unwrap().iter().map(|a| a.aspect.clone()).collect();
        assert_eq!(ranks, vec!["A", "B"]);
    }

    #[test]
    fn equal_precedence_uses_registration_order() {
        let r = registry();
        let l = Aspect::new("L", tag("l"), 5).with_advice(pc("execution(M.op)"), tracing_around("L"));
        let c = Aspect::new("C", tag("c"), 5).with_advice(pc("execution(M.op)"), tracing_around("C"));
        let w = weave(&r, &[l, c]).unwrap();
        let mut log = Log::new();
        w.invoke(OpHandle(0), &mut log, &0).unwrap();
        assert_eq!(log[0], "L:in");
        assert_eq!(log[1], "C:in");
    }

    #[test]
    fn short_circuit_skips_inner_chain() {
        let r = registry();
        let cache = Aspect::new("Cache", tag("caching"), 30).with_advice(
            pc("execution(M.op)"),
            Advice::around(|log: &mut Log, _, _, _| {
                log.push("cache_hit".into());
                Ok(7)
            }),
        );
        let inner = Aspect::new("Inner", tag("inner"), 40).with_advice(pc("execution(M.op)"), tracing_around("inner"));
        let w = weave(&r, &[cache, inner]).unwrap();
        let mut log = Log::new();
        assert_eq!(w.invoke(OpHandle(0), &mut log, &0).unwrap(), 7);
        assert_eq!(log, vec!["cache_hit"]);
    }

    #[test]
    fn double_proceed_is_an_error() {
        let r = registry();
        let bad = Aspect::new("Bad", tag("bad"), 1).with_advice(
            pc("execution(*.*)"),
            Advice::around(|log: &mut Log, _, a, p| {
                let _ = p.proceed(log, a);
                // Swallowing the second error must not hide it.
                let _ = p.proceed(log, a);
                Ok(0)
            }),
        );
        let w = weave(&r, &[bad]).unwrap();
        let mut log = Log::new();
        let err = w.invoke(OpHandle(0), &mut log, &0).unwrap_err();
        assert_eq!(
            err,
            AopError::DoubleProceed {
                aspect: "Bad".into(),
                join_point: "M.op".into()
            }
        );
        assert_eq!(log, vec!["core"]);
    }

    #[test]
    fn advice_failures_are_attributed() {
        let r = registry();
        let failing = Aspect::new("Guard", tag("g"), 1).with_advice(
            pc("execution(*.*)"),
            Advice::before(|_: &mut Log, _, _| Err(AdviceError::Failed("boom".into()))),
        );
        let w = weave(&r, &[failing]).unwrap();
        let err = w.invoke(OpHandle(0), &mut Log::new(), &0).unwrap_err();
        assert_eq!(
            err,
            AopError::Advice {
                aspect: "Guard".into(),
                join_point: "M.op".into(),
                message: "boom".into()
            }
        );
    }

    #[test]
    fn core_errors_pass_through_around_unchanged() {
        let mut r = Reg::new();
        r.declare_module("M", vec![tag("x")]).unwrap();
        r.register_operation("M", "op", |_: &mut Log, _: &u32| Err(AopError::fault("core broke")))
            .unwrap();
        let w = weave(&r, &[Aspect::new("A", tag("a"), 1).with_advice(pc("execution(*.*)"), tracing_around("a"))]).unwrap();
        assert_eq!(
            w.invoke(OpHandle(0), &mut Log::new(), &0).unwrap_err(),
            AopError::fault("core broke")
        );
    }

    #[test]
    fn before_around_after_composition() {
        let r = registry();
        let logging = Aspect::new("Logging", tag("logging"), 20)
            .with_advice(
                pc("execution(*.*)"),
                Advice::before(|log: &mut Log, _, _| {
                    log.push("log-before".into());
                    Ok(())
                }),
            )
            .with_advice(
                pc("execution(*.*)"),
                Advice::after(|log: &mut Log, _, _, _| {
                    log.push("log-after".into());
                    Ok(())
                }),
            );
        let caching = Aspect::new("Caching", tag("caching"), 30).with_advice(
            pc("execution(*.*)"),
            Advice::around(|log: &mut Log, _, a, p| {
                log.push("cache_miss".into());
                Ok(p.proceed(log, a)?)
            }),
        );
        let w = weave(&r, &[caching, logging]).unwrap();
        let mut log = Log::new();
        w.invoke(OpHandle(0), &mut log, &0).unwrap();
        assert_eq!(log, vec!["log-before", "cache_miss", "core", "log-after"]);
    }

    #[test]
    fn duplicate_aspect_names() {
        let r = registry();
        let a = Aspect::new("A", tag("a"), 1);
        assert_eq!(
            weave(&r, &[a.clone(), a]).err(),
            Some(AopError::DuplicateAspect("A".into()))
        );
    }

    #[test]
    fn unmatched_operations_have_no_advice() {
        let r = registry();
        let a = Aspect::new("A", tag("a"), 1).with_advice(pc("execution(Other.*)"), tracing_around("a"));
        let w = weave(&r, &[a]).unwrap();
        assert!(w.report().advice_for("M", "op").unwrap().is_empty());
    }
}
