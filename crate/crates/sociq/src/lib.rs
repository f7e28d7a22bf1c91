//! Slotted-time queueing analytics for device communities that trade relay
//! service for virtual credit.
//!
//! The crate models per-slot arrival/service processes ([`processes`]), capped
//! Lindley queues and their exact finite-chain oracles ([`queueing`]),
//! large-deviation tail analysis via effective bandwidth / effective capacity
//! ([`effective`]), social-metric state machines built on the same queue
//! algebra — credit, reputation, centrality ([`social`]) — and a three-device
//! relay scenario with interference-limited power control and credit-aware
//! spending schemes ([`d2dsim`]).
//!
//! All randomness flows through seedable, splittable counter-based generators
//! ([`rng`]); every simulation is reproducible from `(master seed, stream id)`.

pub mod d2dsim;
pub mod effective;
pub mod error;
pub mod processes;
pub mod queueing;
pub mod rng;
pub mod social;

pub use error::{Error, Result};
