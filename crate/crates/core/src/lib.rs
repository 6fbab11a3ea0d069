//! Computational toolkit for multiplicative functions in short intervals.
//!
//! The crate is organised bottom-up:
//!
//! - [`arith`]: primes, windowed factorization and multiplicative functions.
//! - [`pretence`]: pretentious distances, minimizing twists and Euler products.
//! - [`dirpoly`]: Dirichlet polynomials, mean squares, large values, Perron averages
//!   and the Buchstab/Ramaré split.
//! - [`sieve`]: linear sieve support, Brun–Hooley blocks and sieve majorants.
//! - [`intervals`]: the prime-interval system and its inclusion–exclusion identity.
//! - [`normform`]: prime splitting in small number fields and norm-form indicators.
//! - [`lab`]: scans, gap moments, bound measurements, configs and report output.

pub mod arith;
pub mod dirpoly;
pub mod error;
pub mod intervals;
pub mod lab;
pub mod normform;
pub mod numeric;
pub mod pretence;
pub mod sieve;

pub use error::{Error, Result};
