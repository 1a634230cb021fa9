//! Deterministic simulation of BB84 quantum key distribution.
//!
//! The crate is `no_std` (with `alloc`) and covers the whole stack: faint-pulse
//! photonics, eavesdropping strategies, the BB84 session engine, classical
//! post-processing (Cascade reconciliation and Toeplitz privacy amplification),
//! Wegman-Carter authentication of the public channel, and trusted-node key relay.
//!
//! Every random choice is drawn from an explicit [`rng::SimRng`], so a session is a
//! pure function of its configuration and seed.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod adversary;
pub mod auth;
pub mod bits;
pub mod netsim;
pub mod photonics;
pub mod postprocess;
pub mod protocol;
pub mod rng;

pub use adversary::{EveLedger, EveStrategy};
pub use auth::{AuthKeyPool, AuthenticatedMessage, KeyLedger};
pub use photonics::{Basis, ClickOutcome, DetectorPair, FiberChannel, Pulse, SourceModel};
pub use postprocess::{AttackModel, CorrectionResult, HashSeed, SecretKey};
pub use protocol::{SessionConfig, SessionOutcome, SessionReport, SiftedKeys};
pub use rng::SimRng;
