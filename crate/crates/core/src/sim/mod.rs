//! Deterministic discrete-tick simulation of two devices and the link
//! between them.

pub mod prng;
pub mod trace;
pub mod world;

pub use prng::{prng_next, SplitMix64};
pub use trace::{EventKind, Source, TraceEvent};
pub use world::{Device, FaultTarget, FrameFault, LinkConfig, SentFrame, SimError, World, WorldConfig};

use crate::middleware::BuildMode;
use crate::scenario::Scenario;

/// Builds the reference middleware in `mode`, runs the scenario to its
/// run limit and returns the final world.
pub fn simulate(scenario: &Scenario, mode: BuildMode) -> Result<World, SimError> {
    let mut world = World::from_scenario(scenario, mode)?;
    world.run_until(scenario.run_limit)?;
    Ok(world)
}
