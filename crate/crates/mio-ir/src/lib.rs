//! Desk-scale multiple-in-one image restoration experiments.
//!
//! Seven synthetic degradation tasks share common ground-truth images; a
//! miniature prompt-injected restoration network is trained under mixed or
//! sequential schedules and evaluated with PSNR tables, a degradation
//! classifier, and prompt-feature clustering diagnostics.

pub mod dataio;
pub mod degrade;
pub mod error;
pub mod eval;
pub mod imagebuf;
pub mod model;
pub mod nncore;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
