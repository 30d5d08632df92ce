//! Multi-level, multi-objective supervised autoencoders whose bottleneck
//! latents are the only thing allowed across a trust boundary, together with
//! the attack harness used to test that those latents do not leak.

pub mod attacks;
pub mod cli;
pub mod error;
pub mod io;
pub mod data;
pub mod diagnostics;
pub mod downstream;
pub mod losses;
pub mod numeric;
pub mod scrae;
pub mod service;

pub use error::{Result, VeilError};
