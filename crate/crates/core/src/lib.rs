//! Agent runtime for clinical workflows.
//!
//! The crate is organised by subsystem:
//!
//! - [`store`]: filesystem patient record store with journaled folder moves
//!   and keyword search.
//! - [`gateway`]: chat completion and embedding backends (remote HTTP and
//!   deterministic offline ones).
//! - [`grounding`]: key term extraction and reference lookups (Wikipedia,
//!   PubMed, DailyMed) with a cache and offline fixtures.
//! - [`docs`]: structured reports, update explanations, referrals and
//!   medication plans.
//! - [`viewer`]: document navigation.
//! - [`workflow`]: the per-episode clinical state machine.
//! - [`react`]: the Thought/Action/Observation tool loop.
//! - [`bench`]: dataset loading, the simulated episode driver and metrics.

pub mod bench;
pub mod docs;
pub mod gateway;
pub mod grounding;
pub mod react;
pub mod sim;
pub mod store;
pub mod text;
pub mod viewer;
pub mod workflow;
#[cfg(test)]
mod testutil;
