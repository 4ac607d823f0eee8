//! Two-party quantum oblivious transfer laboratory: hashed-qubit encoding,
//! classical-ZK-to-quantum-OT compilation, ideal functionalities, and an
//! adversary/hybrid-game harness.

pub mod channel;
pub mod error;
pub mod circuit;
pub mod cli;
pub mod functionalities;
pub mod harness;
pub mod hashedqubit;
pub mod hashfam;
pub mod predicate;
pub mod protocols;
pub mod zk;

pub use error::{QotfError, Result};
