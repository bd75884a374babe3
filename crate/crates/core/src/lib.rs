//! Whole-program attack-surface analysis over textual SSA IR.
//!
//! The crate is `no_std` (with `alloc`): every analysis is a pure function of
//! an in-memory [`ir::IrModule`]. File formats, process execution and the
//! command line live in the `surfmap` companion crate.
//!
//! Pipeline, in order:
//!
//! 1. [`ir`] — parse and link modules.
//! 2. [`extraction`] — build plans, asm-block detection, lifted-IR integration.
//! 3. [`vtable`] — discover trait-object dispatch tables.
//! 4. [`callgraph`] — classify call sites and resolve indirect targets to a fixed point.
//! 5. [`surface`] — entry points, sink reachability, taint and constant recovery.
//! 6. [`strategy`] — map findings onto resource-exhaustion strategies.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod callgraph;
pub mod dataflow;
pub mod error;
pub mod extraction;
pub mod ir;
pub mod strategy;
pub mod surface;
pub mod vtable;

pub use error::{ConfigError, ExtractError, IrError};
