//! Superpositions of Lévy-driven CAR(2) processes.
//!
//! A supCAR(2) process is a mixed moving average
//! `X(t) = ∫∫ g(v, t - s) Λ(dv, ds)` whose kernel `g` is one of three CAR(2)
//! kernels, randomized over a mixing law `π(dv)`. The crate covers
//!
//! * the driving noise ([`levy_noise`]),
//! * mixing laws and their existence conditions ([`mixing`]),
//! * kernel classification and evaluation ([`kernels`]),
//! * moments, correlations and cumulants ([`analytics`]),
//! * path simulation by finite superposition ([`simulate`]),
//! * a JSON-driven command line front end ([`cli`]).

pub mod analytics;
pub mod cli;
pub mod error;
pub mod kernels;
pub mod levy_noise;
pub mod mixing;
pub mod quad;
pub mod simulate;

pub use error::{Error, Result};
