//! A miniature digital-twin middleware stack.
//!
//! The pieces mirror a classic smart-city reference architecture:
//!
//! - [`model`]: context entities, their JSON encodings and schema validation
//! - [`broker`]: latest-state context store with publish-subscribe over HTTP
//! - [`agent`]: Ultralight 2.0 IoT agent turning device measures into context
//!   updates and context changes into actuator commands
//! - [`dataflow`]: periodic HTTP polling with a declarative JSON transform, and
//!   an append-only historical store fed by notifications
//! - [`analytics`]: live occupancy aggregates and an hour-of-day forecast
//! - [`auth`]: identity service issuing bearer tokens and a policy-enforcement
//!   proxy in front of the broker
//! - [`sim`]: the parking digital twin scenario, its device stubs and the
//!   conformance check tying everything together
//!
//! See the `examples/` directory of this crate for one runnable program per
//! capability.

pub mod agent;
pub mod analytics;
pub mod auth;
pub mod broker;
pub mod clock;
pub mod dataflow;
pub mod model;
pub mod service;
pub mod sim;
