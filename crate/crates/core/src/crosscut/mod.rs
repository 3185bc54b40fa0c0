//! Logging, caching and synchronization. Each concern is written once and
//! exposed two ways: as an aspect for the woven build, and as inline
//! wrappers around each service operation for the tangled build.

pub mod caching;
pub mod logging;
pub mod sync;
mod tangled;

use crate::aop::{parse_pointcut, Advice, AdviceError, PointcutExpr};
use crate::manifest::ConcernTag;
use crate::middleware::MiddlewareAspect;
use crate::sim::trace::Source;

pub use tangled::{inline_plan, wrap_tangled, InlineStep};

pub const SYNCHRONIZATION_ASPECT: &str = "SynchronizationAspect";
pub const LOGGING_ASPECT: &str = "LoggingAspect";
pub const CACHING_ASPECT: &str = "CachingAspect";

pub const SYNCHRONIZATION_PRECEDENCE: i32 = 10;
pub const LOGGING_PRECEDENCE: i32 = 20;
pub const CACHING_PRECEDENCE: i32 = 30;

/// Every service operation of the four class modules.
pub const SERVICE_POINTCUT: &str =
    "execution(Handshaking.*) || execution(DataTransfer.*) || execution(Security.*) || execution(SessionRegistry.*)";
pub const CACHED_POINTCUT: &str = "execution(DataTransfer.get_reading) || execution(Handshaking.lookup_capabilities)";

fn pointcut(text: &str) -> PointcutExpr {
    parse_pointcut(text).expect("built-in pointcuts parse")
}

fn tag(name: &str) -> ConcernTag {
    ConcernTag::new(name).expect("built-in tags are identifiers")
}

pub fn logging_aspect() -> MiddlewareAspect {
    let services = pointcut(SERVICE_POINTCUT);
    MiddlewareAspect::new(LOGGING_ASPECT, tag("logging"), LOGGING_PRECEDENCE)
        .with_advice(
            services.clone(),
            Advice::before(|w, jp, call| {
                logging::before(w, jp, call, Source::Aspect);
                Ok(())
            }),
        )
        .with_advice(
            services,
            Advice::after(|w, jp, call, result| {
                logging::after(w, jp, call, result, Source::Aspect);
                Ok(())
            }),
        )
}

pub fn caching_aspect() -> MiddlewareAspect {
    MiddlewareAspect::new(CACHING_ASPECT, tag("caching"), CACHING_PRECEDENCE).with_advice(
        pointcut(CACHED_POINTCUT),
        Advice::around(|w, jp, call, p| {
            caching::around(w, jp, call, Source::Aspect, &mut |w| p.proceed(w, call)).map_err(AdviceError::from)
        }),
    )
}

pub fn synchronization_aspect() -> MiddlewareAspect {
    MiddlewareAspect::new(SYNCHRONIZATION_ASPECT, tag("synchronization"), SYNCHRONIZATION_PRECEDENCE).with_advice(
        pointcut(SERVICE_POINTCUT),
        Advice::around(|w, jp, call, p| {
            sync::around(w, jp, call, Source::Aspect, &mut |w| p.proceed(w, call)).map_err(AdviceError::from)
        }),
    )
}

/// The three reference aspects in registration order.
pub fn reference_aspects() -> Vec<MiddlewareAspect> {
    vec![synchronization_aspect(), logging_aspect(), caching_aspect()]
}
