//! Orbit/slice constructions at a base metric γ: the orthogonal splitting of
//! symmetric tensors, slice membership, the slice chart and its inverse,
//! horizontal lifts of paths, and lattice isometry detection.

mod chart;
mod isometry;
mod split;

pub use chart::{
    horizontal_lift, slice_decompose, slice_membership, DecomposeOptions, HorizontalLift, Membership,
    MembershipOptions, MetricPath, SliceDecomposition,
};
pub use isometry::{
    conjugate_isometries, isometry_candidates, isometry_defect, lattice_maps, ConjugationCheck,
    ConjugationOptions, ConjugationReport,
};
pub use split::{normal_part, orbit_split, orbit_split_with, SplitResult, DEFAULT_SPLIT_TOL};
