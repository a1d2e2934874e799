//! Simulation of a two-photon, linear-optical Deutsch protocol.
//!
//! An EPR photon pair feeds two polarisation/path interferometers, each
//! hiding an unknown one-bit function (balanced or constant). Detector
//! correlations in the `z` and `x` polarisation bases give the mean of a
//! two-setting Bell operator per arm; its sign decides the function and its
//! magnitude bounds the fidelity to the ideal output state.
//!
//! Modules, bottom-up:
//!
//! - [`linalg`]: dense complex kernel (Kronecker products, unitary
//!   application, expectations, partial traces).
//! - [`qoptics`]: Jones/permutation unitaries for wave plates, beam splitters
//!   and the dove-prism CNOT, plus detector observables.
//! - [`protocol`]: EPR source, Werner noise, arm circuits, exact output states
//!   and seeded shot sampling.
//! - [`bellstats`]: Bell-operator estimators, violation tests, fidelity
//!   bounds, decisions and the speed-up figure.

pub mod bellstats;
pub mod error;
pub mod linalg;
pub mod protocol;
pub mod qoptics;

pub use error::{Error, Result};
