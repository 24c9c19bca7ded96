//! Instruction-conditioned dual-stream token compression for dense feature grids.
//!
//! Given an H×W grid of patch-token features and a task policy `(λ, ρ)` — either
//! predicted from an instruction by a small MLP router or supplied explicitly —
//! the pipeline splits a retention budget between two streams and fuses their
//! outputs into one ordered token sequence:
//!
//! * **semantic stream** ([`scsa`]): spatially contiguous clustering of locally
//!   similar tokens, CLS-attention cluster scoring, and size-aware cluster
//!   representation;
//! * **geometric stream** ([`igsr`]): a local-difference structural cost field,
//!   coverage-guaranteeing anchors, and greedy Chebyshev-decreasing path tracing
//!   that reconnects them.
//!
//! [`scene`] provides a seeded synthetic scene benchmark with ground truth and
//! fidelity metrics; [`io`] holds the on-disk formats; the `dualcomp` binary is
//! the command-line surface.

pub mod config;
pub mod error;
pub mod fusion;
pub mod grid;
pub mod igsr;
pub mod io;
pub mod lexicon;
pub mod pipeline;
pub mod rng;
pub mod router;
pub mod scene;
pub mod scsa;

pub use error::{Error, Result};
pub use grid::{Coord, FeatureGrid, TokenSource};
pub use router::{TaskPolicy, TokenBudget};
