//! Quantum energy-transport simulation of a double-gate MOSFET: subband
//! ladders from per-slice Schrödinger problems, a mixed-hybrid energy-transport
//! solver along the channel, and a 2D Poisson equation, coupled by a Gummel loop.

pub mod banded;
pub mod cli;
pub mod config;
pub mod coupler;
pub mod error;
pub mod et;
pub mod gamma;
pub mod mesh;
pub mod moments;
pub mod output;
pub mod poisson;
pub mod quadrature;
pub mod schrodinger;

pub use config::DeviceSpec;
pub use error::{Error, Result};
