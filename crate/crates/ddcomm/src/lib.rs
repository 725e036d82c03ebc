//! Delay-Doppler signaling built on the Zak transform.
//!
//! The crate is organised bottom-up: [`zak`] holds the grids, frames and
//! transforms; [`pulses`] builds windows and DD basis functions; [`ambiguity`]
//! evaluates cross-ambiguity surfaces; [`channel`] models sparse doubly-dispersive
//! channels; [`modem`] is the IDZT + CP + pulse-shaping transceiver with its
//! effective channel matrices; [`ofdm`] is the DMT baseline; [`detect`] and
//! [`metrics`] close the link-level loop.

pub mod ambiguity;
pub mod channel;
pub mod detect;
mod error;
pub mod metrics;
pub mod modem;
pub mod ofdm;
pub mod pulses;
pub mod zak;

pub use error::{Error, Result};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Complex sample type used throughout.
pub type C64 = num_complex::Complex64;

pub(crate) fn cis(theta: f64) -> C64 {
    C64::from_polar(1.0, theta)
}

/// `e^{j 2 pi x}` with `x` reduced to [-0.5, 0.5) first so large arguments
/// keep full phase accuracy.
pub(crate) fn cis_cycles(x: f64) -> C64 {
    let r = x - x.round();
    cis(std::f64::consts::TAU * r)
}

/// Integer index of `x` on a lattice of spacing `step`, if it lies on one.
pub(crate) fn lattice_index(x: f64, step: f64) -> Option<i64> {
    let q = x / step;
    let r = q.round();
    if (q - r).abs() <= 1e-9 * r.abs().max(1.0) {
        Some(r as i64)
    } else {
        None
    }
}
