//! Iterative trunk growth.
//!
//! One growth step merges a branch proposal into the current trunk and keeps
//! the largest connected component of the result (26-connected by default):
//!
//! ```text
//! trunk[i + 1] = LCC(propose(trunk[i], image) ∪ trunk[i])
//! ```
//!
//! Proposals are hard masks. A proposed voxel survives only if it lands in the
//! largest component, so isolated false positives are discarded.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::connectivity::{connected_components, largest_connected_component, Connectivity};
use crate::volume::{BinaryVolume, IntensityVolume, Volume};

#[derive(Debug, Error, PartialEq)]
pub enum GrowthError {
    #[error("trunk is empty")]
    EmptyTrunk,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid hysteresis thresholds: low {low}, high {high}, band {band}")]
    InvalidThresholds { low: f32, high: f32, band: usize },
}

/// Proposes candidate branch voxels for a trunk. Implementations take `&self`
/// and must not depend on call order, so one proposer can serve concurrent callers.
pub trait BranchProposer {
    fn propose(
        &self,
        trunk: &BinaryVolume,
        image: &IntensityVolume,
    ) -> Result<BinaryVolume, GrowthError>;
}

impl<P: BranchProposer + ?Sized> BranchProposer for &P {
    fn propose(
        &self,
        trunk: &BinaryVolume,
        image: &IntensityVolume,
    ) -> Result<BinaryVolume, GrowthError> {
        (**self).propose(trunk, image)
    }
}

impl<P: BranchProposer + ?Sized> BranchProposer for Box<P> {
    fn propose(
        &self,
        trunk: &BinaryVolume,
        image: &IntensityVolume,
    ) -> Result<BinaryVolume, GrowthError> {
        (**self).propose(trunk, image)
    }
}

/// Proposes nothing.
#[derive(Clone, Copy, Debug, Default)]
pub struct EmptyProposer;

impl BranchProposer for EmptyProposer {
    fn propose(
        &self,
        trunk: &BinaryVolume,
        _image: &IntensityVolume,
    ) -> Result<BinaryVolume, GrowthError> {
        Ok(BinaryVolume::empty(*trunk.grid()))
    }
}

/// Proposes exactly the ground-truth voxels the trunk is missing.
#[derive(Clone, Debug)]
pub struct OracleProposer {
    ground_truth: BinaryVolume,
}

pub fn oracle_proposer(ground_truth: BinaryVolume) -> OracleProposer {
    OracleProposer { ground_truth }
}

impl BranchProposer for OracleProposer {
    fn propose(
        &self,
        trunk: &BinaryVolume,
        _image: &IntensityVolume,
    ) -> Result<BinaryVolume, GrowthError> {
        self.ground_truth
            .difference(trunk)
            .map_err(|e| GrowthError::ShapeMismatch(e.to_string()))
    }
}

/// Intensity hysteresis around the trunk: seeds are non-trunk voxels with
/// intensity `>= high` within `band` voxels (Chebyshev) of the trunk; the
/// proposal is everything 26-connected to a seed through non-trunk voxels
/// with intensity `>= low`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HysteresisProposer {
    pub low: f32,
    pub high: f32,
    pub band: usize,
}

pub fn hysteresis_proposer(
    low: f32,
    high: f32,
    band: usize,
) -> Result<HysteresisProposer, GrowthError> {
    if !(low.is_finite() && high.is_finite()) || low > high || band < 1 {
        return Err(GrowthError::InvalidThresholds { low, high, band });
    }
    Ok(HysteresisProposer { low, high, band })
}

/// Chebyshev dilation by `radius` voxels, as three separable running-max passes.
fn dilate_cube(mask: &BinaryVolume, radius: usize) -> BinaryVolume {
    let grid = *mask.grid();
    let dims = grid.dims();
    let mut cur: Vec<bool> = mask.data().to_vec();
    let strides = [1, dims[0], dims[0] * dims[1]];
    for axis in 0..3 {
        let n = dims[axis];
        let mut next = vec![false; cur.len()];
        for base in 0..cur.len() {
            // visit each line once, from its first voxel
            if grid.coords(base)[axis] != 0 {
                continue;
            }
            let mut last_on: Option<usize> = None;
            let mut line_on = vec![false; n];
            for k in 0..n {
                if cur[base + k * strides[axis]] {
                    last_on = Some(k);
                }
                line_on[k] = last_on.is_some_and(|l| k - l <= radius);
            }
            let mut next_on: Option<usize> = None;
            for k in (0..n).rev() {
                if cur[base + k * strides[axis]] {
                    next_on = Some(k);
                }
                next[base + k * strides[axis]] =
                    line_on[k] || next_on.is_some_and(|l| l - k <= radius);
            }
        }
        cur = next;
    }
    Volume::from_vec(grid, cur).expect("same grid")
}

impl BranchProposer for HysteresisProposer {
    fn propose(
        &self,
        trunk: &BinaryVolume,
        image: &IntensityVolume,
    ) -> Result<BinaryVolume, GrowthError> {
        check_shapes(trunk, image)?;
        let grid = *trunk.grid();
        let near = dilate_cube(trunk, self.band);
        let t = trunk.data();
        let img = image.data();
        let mut grown = vec![false; grid.len()];
        let mut queue: VecDeque<usize> = (0..grid.len())
            .filter(|&i| near.data()[i] && !t[i] && img[i] >= self.high)
            .collect();
        for &i in &queue {
            grown[i] = true;
        }
        let offsets = Connectivity::TwentySix.offsets();
        while let Some(i) = queue.pop_front() {
            let p = grid.coords(i);
            for &o in &offsets {
                if let Some(j) = grid.offset(p, o) {
                    if !grown[j] && !t[j] && img[j] >= self.low {
                        grown[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        Ok(Volume::from_vec(grid, grown).expect("same grid"))
    }
}

fn check_shapes(trunk: &BinaryVolume, image: &IntensityVolume) -> Result<(), GrowthError> {
    trunk
        .grid()
        .ensure_same(image.grid())
        .map_err(|e| GrowthError::ShapeMismatch(e.to_string()))
}

/// One growth stage of [`grow_iterative`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrowthStage {
    /// 0 for the initial trunk, then 1, 2, ... per growth step.
    pub iteration: usize,
    /// Voxels in the input to this stage (seed, or previous trunk).
    pub trunk_voxels: usize,
    /// Voxels proposed (0 for the initial stage).
    pub proposal_voxels: usize,
    /// Components of the merged mask before the largest-component constraint.
    pub ncc_before_lcc: usize,
    pub post_lcc_voxels: usize,
    pub ncc_after_lcc: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrowthTrace {
    pub stages: Vec<GrowthStage>,
}

/// Merge a proposal into the trunk and keep the largest 26-connected component.
pub fn grow_once<P: BranchProposer + ?Sized>(
    trunk: &BinaryVolume,
    image: &IntensityVolume,
    proposer: &P,
) -> Result<BinaryVolume, GrowthError> {
    grow_once_with(trunk, image, proposer, Connectivity::TwentySix)
}

/// [`grow_once`] with an explicit connectivity for the component step.
pub fn grow_once_with<P: BranchProposer + ?Sized>(
    trunk: &BinaryVolume,
    image: &IntensityVolume,
    proposer: &P,
    connectivity: Connectivity,
) -> Result<BinaryVolume, GrowthError> {
    grow_step(trunk, image, proposer, 0, connectivity).map(|(mask, _)| mask)
}

fn count(mask: &BinaryVolume, connectivity: Connectivity) -> usize {
    connected_components(mask, connectivity).count()
}

fn grow_step<P: BranchProposer + ?Sized>(
    trunk: &BinaryVolume,
    image: &IntensityVolume,
    proposer: &P,
    iteration: usize,
    connectivity: Connectivity,
) -> Result<(BinaryVolume, GrowthStage), GrowthError> {
    if trunk.is_blank() {
        return Err(GrowthError::EmptyTrunk);
    }
    check_shapes(trunk, image)?;
    let proposal = proposer.propose(trunk, image)?;
    let merged = proposal
        .union(trunk)
        .map_err(|e| GrowthError::ShapeMismatch(e.to_string()))?;
    let out = largest_connected_component(&merged, connectivity);
    let stage = GrowthStage {
        iteration,
        trunk_voxels: trunk.count(),
        proposal_voxels: proposal.count(),
        ncc_before_lcc: count(&merged, connectivity),
        post_lcc_voxels: out.count(),
        ncc_after_lcc: count(&out, connectivity),
    };
    Ok((out, stage))
}

/// Largest component of the seed, then `iterations` growth steps.
pub fn grow_iterative<P: BranchProposer + ?Sized>(
    seed: &BinaryVolume,
    image: &IntensityVolume,
    proposer: &P,
    iterations: usize,
) -> Result<(BinaryVolume, GrowthTrace), GrowthError> {
    grow_iterative_observed(
        seed,
        image,
        proposer,
        iterations,
        Connectivity::TwentySix,
        |_, _| {},
    )
}

/// [`grow_iterative`], calling `on_stage(iteration, trunk)` after every stage.
pub fn grow_iterative_observed<P: BranchProposer + ?Sized>(
    seed: &BinaryVolume,
    image: &IntensityVolume,
    proposer: &P,
    iterations: usize,
    connectivity: Connectivity,
    mut on_stage: impl FnMut(usize, &BinaryVolume),
) -> Result<(BinaryVolume, GrowthTrace), GrowthError> {
    check_shapes(seed, image)?;
    let mut trunk = largest_connected_component(seed, connectivity);
    if trunk.is_blank() {
        return Err(GrowthError::EmptyTrunk);
    }
    let mut trace = GrowthTrace {
        stages: vec![GrowthStage {
            iteration: 0,
            trunk_voxels: seed.count(),
            proposal_voxels: 0,
            ncc_before_lcc: count(seed, connectivity),
            post_lcc_voxels: trunk.count(),
            ncc_after_lcc: 1,
        }],
    };
    on_stage(0, &trunk);
    for it in 1..=iterations {
        let (next, stage) = grow_step(&trunk, image, proposer, it, connectivity)?;
        trace.stages.push(stage);
        trunk = next;
        on_stage(it, &trunk);
    }
    Ok((trunk, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Grid;

    fn line(dims: [usize; 3], xs: std::ops::Range<usize>) -> BinaryVolume {
        let mut v = BinaryVolume::empty(Grid::unit(dims).unwrap());
        for x in xs {
            v.set([x, 2, 2], true);
        }
        v
    }

    fn zeros(dims: [usize; 3]) -> IntensityVolume {
        IntensityVolume::filled(Grid::unit(dims).unwrap(), 0.0)
    }

    #[test]
    fn empty_proposal_is_a_fixed_point() {
        let t = line([12, 5, 5], 2..8);
        let img = zeros([12, 5, 5]);
        assert_eq!(grow_once(&t, &img, &EmptyProposer).unwrap(), t);
        let (out, trace) = grow_iterative(&t, &img, &EmptyProposer, 3).unwrap();
        assert_eq!(out, t);
        assert_eq!(trace.stages.len(), 4);
    }

    #[test]
    fn distant_small_blob_is_discarded() {
        let t = line([20, 5, 5], 0..8);
        let blob = line([20, 5, 5], 12..15);
        let img = zeros([20, 5, 5]);
        let p = oracle_proposer(t.union(&blob).unwrap());
        assert_eq!(grow_once(&t, &img, &p).unwrap(), t);
    }

    #[test]
    fn adjacent_branch_is_absorbed() {
        let gt = line([20, 5, 5], 0..15);
        let t = line([20, 5, 5], 0..8);
        let img = zeros([20, 5, 5]);
        assert_eq!(
            grow_once(&t, &img, &oracle_proposer(gt.clone())).unwrap(),
            gt
        );
    }

    #[test]
    fn errors() {
        let img = zeros([6, 5, 5]);
        let empty = BinaryVolume::empty(*img.grid());
        assert_eq!(
            grow_once(&empty, &img, &EmptyProposer),
            Err(GrowthError::EmptyTrunk)
        );
        assert_eq!(
            grow_iterative(&empty, &img, &EmptyProposer, 1).unwrap_err(),
            GrowthError::EmptyTrunk
        );
        let t = line([7, 5, 5], 0..3);
        assert!(matches!(
            grow_once(&t, &img, &EmptyProposer),
            Err(GrowthError::ShapeMismatch(_))
        ));
        let p = oracle_proposer(line([6, 5, 5], 0..3));
        let img7 = zeros([7, 5, 5]);
        assert!(matches!(
            p.propose(&t, &img7),
            Err(GrowthError::ShapeMismatch(_))
        ));
        assert!(hysteresis_proposer(0.6, 0.3, 2).is_err());
        assert!(hysteresis_proposer(0.3, 0.6, 0).is_err());
        assert!(hysteresis_proposer(f32::NAN, 0.6, 1).is_err());
    }

    #[test]
    fn iterations_zero_returns_lcc_of_seed() {
        let mut seed = line([20, 5, 5], 0..8);
        seed.set([15, 2, 2], true);
        let (out, trace) = grow_iterative(&seed, &zeros([20, 5, 5]), &EmptyProposer, 0).unwrap();
        assert_eq!(out, line([20, 5, 5], 0..8));
        assert_eq!(trace.stages.len(), 1);
        assert_eq!(trace.stages[0].ncc_before_lcc, 2);
        assert_eq!(trace.stages[0].post_lcc_voxels, 8);
    }

    #[test]
    fn oracle_trunk_equal_gt_proposes_nothing() {
        let gt = line([10, 5, 5], 0..6);
        assert!(oracle_proposer(gt.clone())
            .propose(&gt, &zeros([10, 5, 5]))
            .unwrap()
            .is_blank());
    }

    #[test]
    fn hysteresis_on_zero_image_is_empty() {
        let t = line([10, 5, 5], 0..4);
        let p = hysteresis_proposer(0.3, 0.6, 2).unwrap();
        assert!(p.propose(&t, &zeros([10, 5, 5])).unwrap().is_blank());
    }

    #[test]
    fn hysteresis_follows_the_tube() {
        let dims = [30, 5, 5];
        let tube = line(dims, 0..30);
        let img = tube.map(|&b| if b { 1.0 } else { 0.0 });
        let trunk = line(dims, 0..15);
        let p = hysteresis_proposer(0.5, 0.5, 2).unwrap();
        assert_eq!(p.propose(&trunk, &img).unwrap(), line(dims, 15..30));
        let too_high = hysteresis_proposer(0.5, 1.5, 2).unwrap();
        assert!(too_high.propose(&trunk, &img).unwrap().is_blank());
    }

    #[test]
    fn hysteresis_seeds_only_inside_band() {
        let dims = [30, 5, 5];
        let trunk = line(dims, 0..10);
        // bright segment separated from the trunk by a 3-voxel dark gap
        let bright = line(dims, 13..20);
        let img = bright.map(|&b| if b { 1.0 } else { 0.0 });
        assert!(hysteresis_proposer(0.5, 0.5, 2)
            .unwrap()
            .propose(&trunk, &img)
            .unwrap()
            .is_blank());
        assert_eq!(
            hysteresis_proposer(0.5, 0.5, 4)
                .unwrap()
                .propose(&trunk, &img)
                .unwrap(),
            bright
        );
    }

    #[test]
    fn dilation_matches_brute_force() {
        let mut m = BinaryVolume::empty(Grid::unit([7, 6, 5]).unwrap());
        m.set([1, 1, 1], true);
        m.set([6, 5, 4], true);
        let d = dilate_cube(&m, 2);
        let g = *m.grid();
        for i in 0..g.len() {
            let p = g.coords(i);
            let expect = m.foreground().any(|j| {
                let q = g.coords(j);
                (0..3).all(|k| (p[k] as i64 - q[k] as i64).abs() <= 2)
            });
            assert_eq!(d.data()[i], expect, "{p:?}");
        }
    }
}
