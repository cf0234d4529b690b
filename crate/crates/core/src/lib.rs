//! Dense numerical toolkit for multipartite quantum Markov states.
//!
//! Tensor products follow the most-significant-left convention: for a layout
//! `[(A, dA), (B, dB)]` the basis index of `|a>|b>` is `a * dB + b`.
//! Entropies and conditional mutual information are in bits.

pub mod channels;
pub mod error;
pub mod json;
pub mod linalg;
pub mod markov;
pub mod measures;
pub mod random;
pub mod revival;
pub mod state;

pub use channels::{KrausChannel, StinespringDilation};
pub use error::{Error, Result, StateInvariant};
pub use linalg::{CMatrix, Spectrum};
pub use markov::{BlockSpec, MarkovDecomposition, MarkovReport, Partition};
pub use state::{MultipartiteState, SubsystemLayout, Tolerances};
