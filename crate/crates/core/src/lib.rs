//! Allocation-only core of the homeopt pipeline.
//!
//! Power traces are clustered twice with Growing Neural Gas: first per device
//! into operating modes, then across devices into domain states. User behavior
//! over domain states feeds a two-action MDP that recommends low-power next
//! states and adapts online whenever it clashes with states the user insists on.
//!
//! The crate is `no_std` and needs only `alloc`; file formats, the command
//! line and parallel fitting live in the `homeopt` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod behavior;
pub mod error;
pub mod gng;
pub mod planner;
pub mod seed;
pub mod sim;
pub mod states;
pub mod synth;
pub mod trace;

pub use error::{Error, Result};
