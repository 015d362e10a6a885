//! Output-length prediction from recorded LLM activations, plus a batching
//! scheduler simulator that measures what accurate predictions buy.
//!
//! The pipeline: [`dataio`] reads/writes activation dumps (or synthesizes a
//! planted-signal dataset), [`pooling`] turns per-token hidden states into
//! one feature vector (entropy-guided by default), [`head`] maps features to
//! a soft distribution over length bins and decodes an expected length,
//! [`trainer`] fits the head with AdamW, [`plp`] predicts the *remaining*
//! length at every decoding step, and [`schedsim`] scores scheduling
//! policies fed by the resulting predictions.

pub mod dataio;
pub mod error;
pub mod head;
pub mod numerics;
pub mod plp;
pub mod pooling;
pub mod schedsim;
pub mod trainer;

pub use error::{Error, Result};
