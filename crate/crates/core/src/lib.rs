//! Magnetic conveyor-belt transport of ultracold atoms into a cryostat.
//!
//! The crate covers the full design chain of a stationary-coil magnetic
//! transport line:
//!
//! * [`field`] — fields, gradients and second derivatives of circular-coil
//!   assemblies (closed form in complete elliptic integrals),
//! * [`trapsolve`] — per-channel currents satisfying the quadrupole trap
//!   constraints at every point of the transport path,
//! * [`motion`] / [`waveform`] — jerk-limited motion profiles and the mapping
//!   of spatial current profiles onto time-domain waveforms,
//! * [`cloudsim`] — test-particle transport simulation with retention and
//!   round-trip efficiency,
//! * [`lossmodel`] — background-gas collision loss rates, trap lifetime and
//!   pressure inference,
//! * [`config`] — declarative TOML run configuration.

pub mod cloudsim;
pub mod coil;
pub mod config;
pub mod consts;
pub mod elliptic;
pub mod field;
pub mod lossmodel;
pub mod motion;
pub mod quadrature;
pub mod trapsolve;
pub mod waveform;

pub use coil::{CoilArray, CoilSpec};
pub use field::{assembly_field, find_field_zero, loop_field, FieldSample};
