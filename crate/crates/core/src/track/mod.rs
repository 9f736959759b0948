//! Affine Lucas-Kanade tracking of a detected target through a burst.

mod burst;
mod lk;

pub use self::burst::{
    seed_region, track_burst, track_region, BurstTrack, Termination, TrackConfig, TrackState,
    TrackedTemplate,
};
pub use self::lk::{lk_align, lk_step, steepest_descent_images, LkConfig, LkResult};
