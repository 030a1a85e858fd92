//! Deterministic federated authentication and authorisation simulator.
//!
//! Topologies of identity providers, attribute authorities, proxies,
//! token translation services and service providers are loaded from TOML,
//! and login flows over them produce replayable traces.
//!
//! # Features
//!
//! - `parallel` (default): batch runs and property suites fan out over a
//!   rayon pool. Without it every batch runs on the calling thread. Output
//!   is identical either way.

pub mod authority;
pub mod diagram;
pub mod flow;
pub mod idp;
mod issuance;
pub mod model;
pub mod par;
pub mod proxy;
pub mod suites;
pub mod topology;
pub mod translation;

pub use model::{AttributeStatement, Credential, Delivery, EntityId, LoALevel, ScopedId, Technology, Timestamp};
pub use topology::Topology;
