//! Saliency-supervised pain intensity regression.
//!
//! A small strided-convolution encoder maps a grayscale face crop to a
//! bottleneck feature. A decoder that reuses the encoder's kernels through
//! the exact convolution adjoint turns the feature back into a saliency map.
//! Training organizes frames into triplets by pain level and combines
//!
//! * a global triplet loss on the normalized bottleneck feature, and
//! * a local loss comparing 1-D histograms of saliency patches around action
//!   unit landmarks, where each triplet decides per action unit whether the
//!   patch should discriminate or stay indifferent,
//!
//! before a scaled-sigmoid regression head is finetuned with smooth L1 plus
//! an L1 center loss. [`synth`] produces data whose pain-relevant regions are
//! known, which is what the test suites use to check the whole pipeline.

pub mod attention;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod gradcheck;
pub mod losses;
pub mod network;
pub mod ops;
pub mod pgm;
pub mod synth;
pub mod tensor;
pub mod training;
pub mod verify;

pub use error::{Error, Result};
pub use tensor::{ParamSet, Tensor};
