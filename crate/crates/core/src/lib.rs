//! Privacy-preserving feature extraction for RF sensing data.
//!
//! The crate synthesises RF-like datasets whose samples carry both an identity
//! and a behavior label, builds contrastive training pairs from them, trains a
//! weight-shared Siamese CNN with a joint contrastive/identity objective and
//! audits the extracted features with a suite of classic classifiers.

pub mod dataset;
pub mod error;
pub mod harness;
pub mod model;
pub mod nn;
pub mod pairing;
pub mod store;
pub mod preprocess;
pub mod synth;
pub mod tensor;
pub mod validators;

pub use error::{Error, ErrorKind, Result};
pub use tensor::{Scalar, Tensor};
