//! Path tracing with progressive spatio-temporal filtering of the light field.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, the command line
//! and the multi-threaded driver live in the `pstf` crate.

#![no_std]
// `!(x >= 0.0)` is how NaN is rejected throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bsdf;
pub mod directional;
pub mod estimators;
pub mod field;
pub mod fixtures;
pub mod math;
pub mod pathtracer;
pub mod render;
pub mod sampling;
pub mod scene;
