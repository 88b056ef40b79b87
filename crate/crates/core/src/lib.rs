//! OTSM (orthogonal time sequency multiplexing) link simulator.
//!
//! Symbols live on an M×N delay-sequency grid, are spread along the
//! sequency axis with a Walsh–Hadamard transform and sent as a single
//! carrier. The crate models a doubly-spread channel plus transmitter and
//! receiver hardware impairments, builds the matching effective I/O
//! operators, evaluates pairwise/union error bounds and runs Monte-Carlo
//! BER sweeps.

pub mod analysis;
pub mod channel;
pub mod config;
pub mod detect;
pub mod dump;
pub mod effective;
pub mod error;
pub mod framing;
pub mod harness;
pub mod impairments;
pub mod linalg;
pub mod pipeline;
pub mod rng;
pub mod transforms;
pub mod verify;

pub use error::{OtsmError, Result};
pub use num_complex::Complex64 as C64;
