//! Gallery enrollment, rank-1 identification and the evaluation protocols.

mod confusion;
mod gallery;
mod protocol;

pub use self::confusion::{evaluate_confusion, ConfusionMatrix};
pub use self::gallery::{views_matrix, Fingerprint, Gallery, MatchReport, RecognitionConfig};
pub use self::protocol::{
    data_reduction_sweep, kept_count, labels_of, leave_one_burst_out, subsample, sweep_csv,
    BurstSamples, Evaluation, SweepPoint,
};
