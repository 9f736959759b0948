//! Detection, affine tracking, view augmentation and subspace matching of
//! ground targets in aerial image sequences.

pub mod augment;
pub mod detect;
pub mod error;
pub mod imgcore;
pub mod motion;
pub mod recognize;
pub mod subspace;
pub mod synthgen;
pub mod track;

pub use error::{Error, Result};
