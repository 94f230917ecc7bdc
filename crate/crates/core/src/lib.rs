//! Vessel mask refinement, centerline graphs, rule-based artery labeling and
//! topology-aware evaluation on 3D voxel volumes.
//!
//! The crate is organised bottom-up:
//!
//! * [`volume`]: grids, masks, label volumes and file I/O.
//! * [`connectivity`]: connected components and the largest-component constraint.
//! * [`growth`]: iterative trunk growth driven by a pluggable [`growth::BranchProposer`].
//! * [`skeleton`]: topology-preserving thinning and the exact distance transform.
//! * [`graph`]: skeleton graphs, minimum spanning trees and tree paths.
//! * [`labeling`]: rule-based artery branch labeling and radius post-processing.
//! * [`metrics`]: Dice, FPSR/FNSR, clDice, NCC and branch-wise scores.
//! * [`phantom`]: deterministic synthetic vessel trees with exact ground truth.

pub mod connectivity;
pub mod graph;
pub mod growth;
pub mod labeling;
pub mod metrics;
pub mod phantom;
pub mod skeleton;
pub mod volume;

pub use connectivity::{
    connected_components, largest_connected_component, ncc, ComponentLabeling, Connectivity,
};
pub use volume::{
    mask_difference, mask_union, AnyVolume, Axis, AxisConvention, BinaryVolume, BranchLabel,
    BranchLabelVolume, Grid, IntensityVolume, Volume, VolumeError,
};
