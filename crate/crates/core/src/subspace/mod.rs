//! Linear appearance subspaces and principal-angle comparison.

mod cca;
mod estimate;
mod persist;

pub use self::cca::{
    canonical_correlations, canonical_correlations_with_vectors, correlate, similarity,
    CanonicalCorrelations,
};
pub use self::estimate::{
    data_matrix, estimate_from_matrix, estimate_subspace, orthonormalize, Subspace, SubspaceConfig,
    ZERO_TOLERANCE,
};
pub use self::persist::{
    load_subspace, read_subspace, save_subspace, write_subspace, SubspaceHeader, MAGIC,
};
