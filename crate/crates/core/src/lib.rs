//! Streaming semantic 3D mapping from monocular frames.
//!
//! Frames arrive in blocks. Each block is aligned to the global map using
//! keyframes carried over from the previous block, its trajectory is
//! smoothed, object masks are tracked and merged into persistent objects,
//! and object states are updated from visibility.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod geom;
pub mod stream;
pub mod smooth;
pub mod align;
pub mod map;
pub mod change;
pub mod kdtree;
pub mod query;
pub mod tracker;
pub mod eval;
pub mod ply;
pub mod pipeline;
