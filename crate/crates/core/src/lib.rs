//! Adaptive clip-aware video compression and frame selection.
//!
//! A recurrent feature extractor walks a video while a small policy network
//! decides how many upcoming frames to fuse into one and at which
//! resolution to process the result. The policy is trained end-to-end with
//! a Gumbel-Softmax straight-through estimator under a FLOPs penalty; its
//! per-step distributions double as frame-importance scores for building
//! short distilled videos. A separate toolkit covers detection math:
//! attention layers, box losses and mAP evaluation.

pub mod config;
pub mod detection;
pub mod engine;
pub mod error;
pub mod numerics;
pub mod policy;
pub mod selection;
pub mod training;
pub mod video;

pub use error::{Error, Result};
