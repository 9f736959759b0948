//! Moving-target localization: global registration, frame differencing,
//! morphological cleanup and largest-component selection.

mod detector;
mod mask;
mod register;

pub use self::detector::{
    detect_pair, detect_sequence, find_seed, refine_seed, DetectConfig, Detection,
    SequenceDetections,
};
pub use self::mask::{
    abs_difference, connected_components, difference_mask, largest_component, morphological_clean,
    morphological_close, BinaryMask, Component,
};
pub use self::register::{register_global, register_pyramids, RegistrationConfig};
