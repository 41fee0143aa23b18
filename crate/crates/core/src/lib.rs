//! Learning unitary sparsifying transforms for beamspace processing.
//!
//! The crate maximizes the expected l4 "norm" `E ||A y||_4^4` over unitary
//! `A`, either by projected gradient ascent with infinite step size
//! ([`learn::learn_msp`]) or by Givens/phase coordinate ascent
//! ([`learn::learn_ca`]). It also provides numerical checks of the DFT's
//! stationarity and local optimality for the uniform single-path channel
//! ([`optimality`]), and an uplink MU-MIMO BER harness ([`sim`]) to compare
//! transforms in beamspace detection.

pub mod channel;
pub mod error;
pub mod io;
pub mod learn;
pub mod linalg;
pub mod objective;
pub mod optimality;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector, UnitaryTransform};
