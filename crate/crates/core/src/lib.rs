//! Segmentation of categorical sequences with an infinite mixture of Markov
//! chains.
//!
//! Each latent super state is a Markov chain over the observed symbols with
//! its own entry and exit distributions. A truncated blocked Gibbs sampler
//! splits a corpus of sequences into segments and assigns every segment to a
//! super state. The crate is `no_std` and only needs `alloc`; file formats,
//! timing and the command-line front end live in the `immc` crate.

#![no_std]

extern crate alloc;

pub mod baselines;
pub mod corpus;
pub mod dist;
pub mod error;
pub mod eval;
pub mod generator;
pub mod math;
pub mod model;
pub mod sampler;

pub use corpus::{Alphabet, ConcatenatedStream, Corpus, Sequence};
pub use error::{Error, Result};
pub use model::{Hyperparams, LatentState, ModelParams, SufficientStats};
pub use sampler::FitReport;
