//! Volumetric data model shared by every other module.
//!
//! A [`Volume`] couples a [`Grid`] (voxel counts, millimetre spacing and the
//! declared anatomical orientation) with one value per voxel stored in
//! x-fastest order: `index = x + nx * (y + ny * z)`.

mod io;

pub use io::{
    load_volume, load_volume_with_meta, save_volume, save_volume_with, AnyVolume, ElementType,
    SaveOptions, VolumeMeta,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("invalid dimensions {0:?}: every axis needs at least one voxel")]
    InvalidDims([usize; 3]),
    #[error("invalid spacing {0:?}: every axis needs a positive finite spacing")]
    InvalidSpacing([f64; 3]),
    #[error("head axis {head} and right axis {right} are not orthogonal")]
    NonOrthogonalAxes { head: Axis, right: Axis },
    #[error("unknown axis {0:?}, expected one of +x,-x,+y,-y,+z,-z")]
    UnknownAxis(String),
    #[error("payload holds {actual} elements, header requires {expected}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("volumes differ in shape: {0}")]
    ShapeMismatch(String),
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt header: {0}")]
    CorruptHeader(String),
    #[error("invalid payload: {0}")]
    InvalidPayload(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = VolumeError> = std::result::Result<T, E>;

/// A signed image axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    #[serde(rename = "+x")]
    PosX,
    #[serde(rename = "-x")]
    NegX,
    #[serde(rename = "+y")]
    PosY,
    #[serde(rename = "-y")]
    NegY,
    #[serde(rename = "+z")]
    PosZ,
    #[serde(rename = "-z")]
    NegZ,
}

impl Axis {
    pub const ALL: [Axis; 6] = [
        Axis::PosX,
        Axis::NegX,
        Axis::PosY,
        Axis::NegY,
        Axis::PosZ,
        Axis::NegZ,
    ];

    /// Array axis (0 = x, 1 = y, 2 = z).
    pub fn index(self) -> usize {
        match self {
            Axis::PosX | Axis::NegX => 0,
            Axis::PosY | Axis::NegY => 1,
            Axis::PosZ | Axis::NegZ => 2,
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Axis::PosX | Axis::PosY | Axis::PosZ => 1.0,
            _ => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Axis::PosX => "+x",
            Axis::NegX => "-x",
            Axis::PosY => "+y",
            Axis::NegY => "-y",
            Axis::PosZ => "+z",
            Axis::NegZ => "-z",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Axis {
    type Err = VolumeError;

    fn from_str(s: &str) -> Result<Self> {
        Axis::ALL
            .into_iter()
            .find(|a| a.as_str() == s.trim())
            .ok_or_else(|| VolumeError::UnknownAxis(s.to_string()))
    }
}

/// Which image axes point toward the patient's head and anatomical right.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawConvention", into = "RawConvention")]
pub struct AxisConvention {
    head: Axis,
    right: Axis,
}

#[derive(Serialize, Deserialize)]
struct RawConvention {
    head_axis: Axis,
    right_axis: Axis,
}

impl TryFrom<RawConvention> for AxisConvention {
    type Error = VolumeError;

    fn try_from(raw: RawConvention) -> Result<Self> {
        AxisConvention::new(raw.head_axis, raw.right_axis)
    }
}

impl From<AxisConvention> for RawConvention {
    fn from(c: AxisConvention) -> Self {
        RawConvention {
            head_axis: c.head,
            right_axis: c.right,
        }
    }
}

impl AxisConvention {
    pub fn new(head: Axis, right: Axis) -> Result<Self> {
        if head.index() == right.index() {
            return Err(VolumeError::NonOrthogonalAxes { head, right });
        }
        Ok(AxisConvention { head, right })
    }

    pub fn head(&self) -> Axis {
        self.head
    }

    pub fn right(&self) -> Axis {
        self.right
    }
}

impl Default for AxisConvention {
    /// Head toward +z, patient right toward -x.
    fn default() -> Self {
        AxisConvention {
            head: Axis::PosZ,
            right: Axis::NegX,
        }
    }
}

/// Voxel lattice geometry: counts, millimetre spacing and orientation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dims: [usize; 3],
    spacing: [f64; 3],
    orientation: AxisConvention,
}

impl Grid {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], orientation: AxisConvention) -> Result<Self> {
        if dims.contains(&0) {
            return Err(VolumeError::InvalidDims(dims));
        }
        if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(VolumeError::InvalidSpacing(spacing));
        }
        dims.iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or(VolumeError::InvalidDims(dims))?;
        Ok(Grid {
            dims,
            spacing,
            orientation,
        })
    }

    /// Unit-spacing grid with the default orientation.
    pub fn unit(dims: [usize; 3]) -> Result<Self> {
        Grid::new(dims, [1.0; 3], AxisConvention::default())
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn orientation(&self) -> AxisConvention {
        self.orientation
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, [x, y, z]: [usize; 3]) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims;
        [index % nx, (index / nx) % ny, index / (nx * ny)]
    }

    #[inline]
    pub fn contains(&self, p: [i64; 3]) -> bool {
        (0..3).all(|a| p[a] >= 0 && (p[a] as usize) < self.dims[a])
    }

    /// Linear index of `p + offset`, or `None` outside the grid.
    #[inline]
    pub fn offset(&self, p: [usize; 3], offset: [i64; 3]) -> Option<usize> {
        let q = [
            p[0] as i64 + offset[0],
            p[1] as i64 + offset[1],
            p[2] as i64 + offset[2],
        ];
        self.contains(q)
            .then(|| self.index([q[0] as usize, q[1] as usize, q[2] as usize]))
    }

    /// Physical position in millimetres, with voxel (0,0,0) at the origin.
    pub fn physical(&self, index: usize) -> [f64; 3] {
        let c = self.coords(index);
        [
            c[0] as f64 * self.spacing[0],
            c[1] as f64 * self.spacing[1],
            c[2] as f64 * self.spacing[2],
        ]
    }

    /// Physical coordinate along the head direction; larger is closer to the head.
    pub fn head_coord(&self, index: usize) -> f64 {
        let h = self.orientation.head;
        self.physical(index)[h.index()] * h.sign()
    }

    /// Physical coordinate along the patient-right direction; larger is further right.
    pub fn right_coord(&self, index: usize) -> f64 {
        let r = self.orientation.right;
        self.physical(index)[r.index()] * r.sign()
    }

    /// Squared physical distance between two voxel centres.
    pub fn dist2(&self, a: usize, b: usize) -> f64 {
        let (ca, cb) = (self.coords(a), self.coords(b));
        (0..3)
            .map(|k| {
                let d = (ca[k] as f64 - cb[k] as f64) * self.spacing[k];
                d * d
            })
            .sum()
    }

    pub fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(VolumeError::ShapeMismatch(format!(
                "{:?}@{:?} vs {:?}@{:?}",
                self.dims, self.spacing, other.dims, other.spacing
            )))
        }
    }
}

/// Anatomical branch labels. The discriminant is the on-disk value.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[repr(u8)]
pub enum BranchLabel {
    #[default]
    #[serde(rename = "UNLABELED")]
    Unlabeled = 0,
    #[serde(rename = "AO")]
    Ao = 1,
    #[serde(rename = "CA")]
    Ca = 2,
    #[serde(rename = "SMA")]
    Sma = 3,
    #[serde(rename = "SA")]
    Sa = 4,
    #[serde(rename = "CHA")]
    Cha = 5,
    #[serde(rename = "LGA")]
    Lga = 6,
    #[serde(rename = "GDA")]
    Gda = 7,
}

impl BranchLabel {
    /// The seven target branches, in reporting order.
    pub const BRANCHES: [BranchLabel; 7] = [
        BranchLabel::Ao,
        BranchLabel::Ca,
        BranchLabel::Sma,
        BranchLabel::Sa,
        BranchLabel::Cha,
        BranchLabel::Lga,
        BranchLabel::Gda,
    ];

    pub fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            0 => BranchLabel::Unlabeled,
            1 => BranchLabel::Ao,
            2 => BranchLabel::Ca,
            3 => BranchLabel::Sma,
            4 => BranchLabel::Sa,
            5 => BranchLabel::Cha,
            6 => BranchLabel::Lga,
            7 => BranchLabel::Gda,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            BranchLabel::Unlabeled => "UNLABELED",
            BranchLabel::Ao => "AO",
            BranchLabel::Ca => "CA",
            BranchLabel::Sma => "SMA",
            BranchLabel::Sa => "SA",
            BranchLabel::Cha => "CHA",
            BranchLabel::Lga => "LGA",
            BranchLabel::Gda => "GDA",
        }
    }
}

impl fmt::Display for BranchLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BranchLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let up = s.trim().to_ascii_uppercase();
        (0..8u8)
            .filter_map(BranchLabel::from_u8)
            .find(|l| l.name() == up)
            .ok_or_else(|| format!("unknown branch label {s:?}"))
    }
}

/// A dense voxel volume.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume<T> {
    grid: Grid,
    data: Vec<T>,
}

pub type BinaryVolume = Volume<bool>;
pub type IntensityVolume = Volume<f32>;
pub type BranchLabelVolume = Volume<BranchLabel>;

impl<T: Clone> Volume<T> {
    pub fn filled(grid: Grid, value: T) -> Self {
        Volume {
            data: vec![value; grid.len()],
            grid,
        }
    }
}

impl<T> Volume<T> {
    pub fn from_vec(grid: Grid, data: Vec<T>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(VolumeError::SizeMismatch {
                expected: grid.len(),
                actual: data.len(),
            });
        }
        Ok(Volume { grid, data })
    }

    pub fn from_fn(grid: Grid, f: impl FnMut(usize) -> T) -> Self {
        Volume {
            data: (0..grid.len()).map(f).collect(),
            grid,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dims(&self) -> [usize; 3] {
        self.grid.dims
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, p: [usize; 3]) -> &T {
        &self.data[self.grid.index(p)]
    }

    pub fn set(&mut self, p: [usize; 3], value: T) {
        let i = self.grid.index(p);
        self.data[i] = value;
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Volume<U> {
        Volume {
            grid: self.grid,
            data: self.data.iter().map(f).collect(),
        }
    }

    fn zip_with<U, V>(
        &self,
        other: &Volume<U>,
        mut f: impl FnMut(&T, &U) -> V,
    ) -> Result<Volume<V>> {
        self.grid.ensure_same(&other.grid)?;
        Ok(Volume {
            grid: self.grid,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| f(a, b))
                .collect(),
        })
    }
}

impl BinaryVolume {
    pub fn empty(grid: Grid) -> Self {
        Volume::filled(grid, false)
    }

    /// Number of foreground voxels.
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn is_blank(&self) -> bool {
        !self.data.iter().any(|&v| v)
    }

    /// Linear indices of foreground voxels in ascending order.
    pub fn foreground(&self) -> impl Iterator<Item = usize> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(|(i, _)| i)
    }

    pub fn union(&self, other: &BinaryVolume) -> Result<BinaryVolume> {
        self.zip_with(other, |a, b| *a || *b)
    }

    pub fn difference(&self, other: &BinaryVolume) -> Result<BinaryVolume> {
        self.zip_with(other, |a, b| *a && !*b)
    }

    pub fn intersection(&self, other: &BinaryVolume) -> Result<BinaryVolume> {
        self.zip_with(other, |a, b| *a && *b)
    }

    /// `true` when every foreground voxel of `self` is foreground in `other`.
    pub fn is_subset_of(&self, other: &BinaryVolume) -> Result<bool> {
        self.grid.ensure_same(&other.grid)?;
        Ok(self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b))
    }
}

impl BranchLabelVolume {
    pub fn unlabeled(grid: Grid) -> Self {
        Volume::filled(grid, BranchLabel::Unlabeled)
    }

    pub fn mask_of(&self, label: BranchLabel) -> BinaryVolume {
        self.map(|&l| l == label)
    }

    pub fn foreground_mask(&self) -> BinaryVolume {
        self.map(|&l| l != BranchLabel::Unlabeled)
    }

    /// Voxel count per label, indexed by the label's discriminant.
    pub fn histogram(&self) -> [usize; 8] {
        let mut h = [0usize; 8];
        for &l in &self.data {
            h[l as usize] += 1;
        }
        h
    }
}

/// Voxelwise logical OR of two masks on the same grid.
pub fn mask_union(a: &BinaryVolume, b: &BinaryVolume) -> Result<BinaryVolume> {
    a.union(b)
}

/// Voxels of `a` that are not in `b`.
pub fn mask_difference(a: &BinaryVolume, b: &BinaryVolume) -> Result<BinaryVolume> {
    a.difference(b)
}
