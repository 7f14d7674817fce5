//! Edge-side building blocks for serving desensitized page snapshots.
//!
//! The crate is split along the request path:
//!
//! * [`model`] holds the shared domain types and DS POST payload codec.
//! * [`proxy`] is the client-facing forwarding proxy that injects the
//!   harvesting hook and serves interstitial pages.
//! * [`server`] exposes DS GET / DS POST / purge over HTTP and owns the
//!   background desensitization queue.
//! * [`harvester`] stores crowd-sourced snapshots and decides when a group
//!   is ready (or stale).
//! * [`desensitizer`] computes difference masks and blanks changed pixels.
//! * [`html`] renders the interstitial clickmap page.

pub mod clock;
pub mod desensitizer;
pub mod harvester;
pub mod html;
pub mod model;
pub mod proxy;
pub mod server;

pub use clock::{Clock, ManualClock, SharedClock, SystemClock, Timestamp};
