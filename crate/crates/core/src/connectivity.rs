//! Connected-component labeling and the largest-connected-component constraint.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::volume::{BinaryVolume, Volume};

/// Voxel adjacency: faces (6), faces and edges (18), or faces, edges and corners (26).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    Six,
    Eighteen,
    #[default]
    TwentySix,
}

impl Connectivity {
    /// Neighbour offsets, in a fixed order.
    pub fn offsets(self) -> Vec<[i64; 3]> {
        let mut out = Vec::with_capacity(26);
        for dz in -1i64..=1 {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let nonzero = (dx != 0) as u8 + (dy != 0) as u8 + (dz != 0) as u8;
                    let keep = match self {
                        Connectivity::Six => nonzero == 1,
                        Connectivity::Eighteen => (1..=2).contains(&nonzero),
                        Connectivity::TwentySix => nonzero >= 1,
                    };
                    if keep {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }

    pub fn value(self) -> u8 {
        match self {
            Connectivity::Six => 6,
            Connectivity::Eighteen => 18,
            Connectivity::TwentySix => 26,
        }
    }
}

impl TryFrom<u8> for Connectivity {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            6 => Ok(Connectivity::Six),
            18 => Ok(Connectivity::Eighteen),
            26 => Ok(Connectivity::TwentySix),
            _ => Err(format!("connectivity must be 6, 18 or 26, got {v}")),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        c.value()
    }
}

impl FromStr for Connectivity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let v: u8 = s
            .trim()
            .parse()
            .map_err(|_| format!("connectivity must be 6, 18 or 26, got {s:?}"))?;
        Connectivity::try_from(v)
    }
}

impl fmt::Display for Connectivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// Per-voxel component ids. Id 0 is background; ids `1..=count` are ordered
/// by descending size, ties broken by the smallest linear index in the component.
#[derive(Clone, Debug, PartialEq)]
pub struct ComponentLabeling {
    pub labels: Volume<u32>,
    /// `sizes[k]` is the voxel count of component `k + 1`.
    pub sizes: Vec<usize>,
}

impl ComponentLabeling {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    /// Mask of a single component id (1-based).
    pub fn component(&self, id: u32) -> BinaryVolume {
        self.labels.map(|&l| l == id)
    }
}

pub fn connected_components(mask: &BinaryVolume, connectivity: Connectivity) -> ComponentLabeling {
    let grid = *mask.grid();
    let offsets = connectivity.offsets();
    let data = mask.data();
    let mut raw = vec![0u32; grid.len()];
    // (size, first index) per provisional id; ids are assigned in scan order,
    // so the seed of each flood fill is its component's smallest index.
    let mut found: Vec<(usize, usize)> = Vec::new();
    let mut queue = VecDeque::new();

    for seed in 0..grid.len() {
        if !data[seed] || raw[seed] != 0 {
            continue;
        }
        let id = found.len() as u32 + 1;
        raw[seed] = id;
        queue.push_back(seed);
        let mut size = 0;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let p = grid.coords(i);
            for &o in &offsets {
                if let Some(j) = grid.offset(p, o) {
                    if data[j] && raw[j] == 0 {
                        raw[j] = id;
                        queue.push_back(j);
                    }
                }
            }
        }
        found.push((size, seed));
    }

    let mut order: Vec<usize> = (0..found.len()).collect();
    order.sort_by(|&a, &b| {
        found[b]
            .0
            .cmp(&found[a].0)
            .then(found[a].1.cmp(&found[b].1))
    });
    let mut remap = vec![0u32; found.len() + 1];
    for (rank, &prov) in order.iter().enumerate() {
        remap[prov + 1] = rank as u32 + 1;
    }
    let labels = raw.into_iter().map(|l| remap[l as usize]).collect();
    ComponentLabeling {
        labels: Volume::from_vec(grid, labels).expect("label buffer matches grid"),
        sizes: order.iter().map(|&k| found[k].0).collect(),
    }
}

/// Keep only component 1 of [`connected_components`]; empty in, empty out.
pub fn largest_connected_component(
    mask: &BinaryVolume,
    connectivity: Connectivity,
) -> BinaryVolume {
    let cc = connected_components(mask, connectivity);
    if cc.count() == 0 {
        return mask.clone();
    }
    cc.component(1)
}

/// Number of 26-connected foreground components.
pub fn ncc(mask: &BinaryVolume) -> usize {
    connected_components(mask, Connectivity::TwentySix).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Grid;

    fn mask(dims: [usize; 3], on: &[[usize; 3]]) -> BinaryVolume {
        let mut v = BinaryVolume::empty(Grid::unit(dims).unwrap());
        for &p in on {
            v.set(p, true);
        }
        v
    }

    #[test]
    fn offset_counts() {
        assert_eq!(Connectivity::Six.offsets().len(), 6);
        assert_eq!(Connectivity::Eighteen.offsets().len(), 18);
        assert_eq!(Connectivity::TwentySix.offsets().len(), 26);
        assert!("7".parse::<Connectivity>().is_err());
    }

    #[test]
    fn empty_mask_has_no_components() {
        let m = mask([3, 3, 3], &[]);
        assert_eq!(connected_components(&m, Connectivity::TwentySix).count(), 0);
        assert_eq!(ncc(&m), 0);
        assert!(largest_connected_component(&m, Connectivity::TwentySix).is_blank());
    }

    #[test]
    fn one_voxel_gap_separates() {
        let m = mask([3, 1, 1], &[[0, 0, 0], [2, 0, 0]]);
        assert_eq!(connected_components(&m, Connectivity::TwentySix).count(), 2);
    }

    #[test]
    fn diagonal_contact_depends_on_connectivity() {
        let m = mask([2, 2, 2], &[[0, 0, 0], [1, 1, 1]]);
        assert_eq!(connected_components(&m, Connectivity::TwentySix).count(), 1);
        assert_eq!(connected_components(&m, Connectivity::Eighteen).count(), 2);
        let m = mask([2, 2, 1], &[[0, 0, 0], [1, 1, 0]]);
        assert_eq!(connected_components(&m, Connectivity::Eighteen).count(), 1);
        assert_eq!(connected_components(&m, Connectivity::Six).count(), 2);
    }

    #[test]
    fn blob_beats_isolated_voxel() {
        let mut on: Vec<[usize; 3]> = (0..10).map(|x| [x, 0, 0]).collect();
        on.push([5, 4, 4]);
        let m = mask([10, 5, 5], &on);
        let lcc = largest_connected_component(&m, Connectivity::TwentySix);
        assert_eq!(lcc.count(), 10);
        assert!(!lcc.get([5, 4, 4]));
        assert_eq!(
            largest_connected_component(&lcc, Connectivity::TwentySix),
            lcc
        );
    }

    #[test]
    fn size_ties_go_to_smallest_index() {
        let m = mask([6, 1, 1], &[[4, 0, 0], [5, 0, 0], [0, 0, 0], [1, 0, 0]]);
        let cc = connected_components(&m, Connectivity::TwentySix);
        assert_eq!(cc.sizes, vec![2, 2]);
        assert_eq!(*cc.labels.get([0, 0, 0]), 1);
        assert_eq!(*cc.labels.get([4, 0, 0]), 2);
        let lcc = largest_connected_component(&m, Connectivity::TwentySix);
        assert!(lcc.get([0, 0, 0]) & lcc.get([1, 0, 0]) & !lcc.get([4, 0, 0]));
    }

    #[test]
    fn k_separated_cubes() {
        let mut on = Vec::new();
        for k in 0..4 {
            for dx in 0..2 {
                for dy in 0..2 {
                    for dz in 0..2 {
                        on.push([k * 4 + dx, dy, dz]);
                    }
                }
            }
        }
        assert_eq!(ncc(&mask([16, 2, 2], &on)), 4);
    }
}
