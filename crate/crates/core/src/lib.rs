//! Secure-key-rate engine for measurement-device-independent QKD driven by an
//! untrusted pulse source.
//!
//! Both users receive strong pulses from the untrusted relay, monitor them with
//! a classical intensity detector, attenuate, encode and send them back for a
//! Bell-state measurement. The engine assembles the full chain of certified
//! bounds needed to extract a key rate from that setup:
//!
//! * sampling statistics for the monitored ("untagged") pulses ([`monitor`]),
//! * interval bounds on gains and error rates of untagged pulses
//!   ([`observables`]),
//! * envelope bounds on the emitted photon-number distribution ([`pnd`]),
//! * decoy-state estimation of single-photon quantities by linear programming
//!   and by closed-form bounds ([`decoy`], [`lp`]),
//! * a fiber channel model with a Monte Carlo photon-counting oracle used to
//!   validate it ([`channel`]),
//! * key-rate assembly, signal-intensity optimization and distance sweeps
//!   ([`keyrate`]).
//!
//! Run configuration lives in [`params`]; self-contained validation suites
//! (used by the CLI `validate` subcommand and the acceptance tests) live in
//! [`checks`].

pub mod channel;
pub mod checks;
pub mod decoy;
pub mod error;
pub mod keyrate;
pub mod lp;
pub mod monitor;
pub mod observables;
pub mod params;
pub mod pnd;
pub mod stats;

pub use error::Error;
pub use params::{ExperimentParams, SideParams};

/// Crate result alias.
pub type Result<T> = std::result::Result<T, Error>;
