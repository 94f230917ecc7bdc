//! Curve skeletons and radii.
//!
//! [`skeletonize`] is a border-peeling thinning in the style of Lee, Kashyap
//! and Chu: six directional sub-iterations, each collecting border voxels that
//! are not curve endpoints, whose deletion leaves the Euler characteristic
//! unchanged and whose 26-neighbourhood stays one object, then deleting them
//! one by one while re-checking that the neighbourhood stays one object.
//!
//! [`distance_transform`] is an exact separable Euclidean transform (lower
//! envelope of parabolas) with per-axis spacing.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use thiserror::Error;

use crate::volume::{BinaryVolume, Grid, Volume};

#[derive(Debug, Error, PartialEq)]
pub enum SkeletonError {
    #[error("skeleton voxel {0} lies outside the mask")]
    SkeletonNotSubset(usize),
    #[error("skeleton and mask grids differ")]
    ShapeMismatch,
}

/// Border directions in sub-iteration order: -y, +y, +x, -x, +z, -z.
const BORDERS: [[i64; 3]; 6] = [
    [0, -1, 0],
    [0, 1, 0],
    [1, 0, 0],
    [-1, 0, 0],
    [0, 0, 1],
    [0, 0, -1],
];

/// Bit position of a neighbourhood offset in a 27-bit word (centre is bit 13).
#[inline]
const fn bit(dx: i64, dy: i64, dz: i64) -> u32 {
    ((dx + 1) + 3 * (dy + 1) + 9 * (dz + 1)) as u32
}

const CENTER: u32 = 1 << 13;

/// Eight times the Euler characteristic contribution of one lattice vertex,
/// given the occupancy of the 2x2x2 voxels around it (bit `x + 2y + 4z`).
fn vertex_euler8(config: u8) -> i32 {
    let has = |b: usize| config >> b & 1 == 1;
    let any = |pred: &dyn Fn(usize) -> bool| (0..8).any(|b| pred(b) && has(b));
    let v = (config != 0) as i32;
    let mut e = 0;
    for axis in 0..3 {
        for side in 0..2 {
            e += any(&|b| (b >> axis) & 1 == side) as i32;
        }
    }
    let mut f = 0;
    for axis in 0..3 {
        let (a1, a2) = ((axis + 1) % 3, (axis + 2) % 3);
        for q1 in 0..2 {
            for q2 in 0..2 {
                f += any(&|b| (b >> a1) & 1 == q1 && (b >> a2) & 1 == q2) as i32;
            }
        }
    }
    let c = config.count_ones() as i32;
    8 * v - 4 * e + 2 * f - c
}

fn euler_table() -> &'static [i32; 256] {
    static TABLE: OnceLock<[i32; 256]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [0; 256];
        for (cfg, slot) in t.iter_mut().enumerate() {
            *slot = vertex_euler8(cfg as u8);
        }
        t
    })
}

/// For each of the centre voxel's 8 corners: the 8 neighbourhood bits of the
/// 2x2x2 window around that corner, and which window bit is the centre.
fn corner_windows() -> &'static [([u32; 8], u8); 8] {
    static WINDOWS: OnceLock<[([u32; 8], u8); 8]> = OnceLock::new();
    WINDOWS.get_or_init(|| {
        let mut out = [([0u32; 8], 0u8); 8];
        for (corner, slot) in out.iter_mut().enumerate() {
            let o = [
                (corner & 1) as i64,
                (corner >> 1 & 1) as i64,
                (corner >> 2 & 1) as i64,
            ];
            for b in 0..8usize {
                let w = [(b & 1) as i64, (b >> 1 & 1) as i64, (b >> 2 & 1) as i64];
                // window voxel at neighbourhood offset (o + w - 1)
                let d = [o[0] + w[0] - 1, o[1] + w[1] - 1, o[2] + w[2] - 1];
                slot.0[b] = bit(d[0], d[1], d[2]);
                if d == [0, 0, 0] {
                    slot.1 = b as u8;
                }
            }
        }
        out
    })
}

/// `true` when removing the centre leaves the Euler characteristic unchanged.
pub(crate) fn is_euler_invariant(neighbourhood: u32) -> bool {
    let table = euler_table();
    let mut delta = 0;
    for (bits, centre) in corner_windows() {
        let mut cfg = 0u8;
        for (b, &nb) in bits.iter().enumerate() {
            if neighbourhood >> nb & 1 == 1 {
                cfg |= 1 << b;
            }
        }
        let with = cfg | (1 << centre);
        let without = cfg & !(1 << centre);
        delta += table[with as usize] - table[without as usize];
    }
    delta == 0
}

/// Adjacency masks of the 26 neighbours restricted to the neighbourhood.
fn neighbour_adjacency() -> &'static [u32; 27] {
    static ADJ: OnceLock<[u32; 27]> = OnceLock::new();
    ADJ.get_or_init(|| {
        let mut adj = [0u32; 27];
        for (i, slot) in adj.iter_mut().enumerate() {
            let p = [(i % 3) as i64, (i / 3 % 3) as i64, (i / 9) as i64];
            for j in 0..27usize {
                let q = [(j % 3) as i64, (j / 3 % 3) as i64, (j / 9) as i64];
                let cheb = (0..3).map(|k| (p[k] - q[k]).abs()).max().unwrap();
                if i != j && i != 13 && j != 13 && cheb == 1 {
                    *slot |= 1 << j;
                }
            }
        }
        adj
    })
}

/// `true` when the 26-neighbours (centre excluded) form at most one 26-connected object.
pub(crate) fn neighbours_form_one_object(neighbourhood: u32) -> bool {
    let others = neighbourhood & !CENTER;
    if others == 0 {
        return true;
    }
    let adj = neighbour_adjacency();
    let start = others.trailing_zeros();
    let mut seen = 1u32 << start;
    let mut frontier = seen;
    while frontier != 0 {
        let i = frontier.trailing_zeros();
        frontier &= frontier - 1;
        let fresh = adj[i as usize] & others & !seen;
        seen |= fresh;
        frontier |= fresh;
    }
    seen == others
}

/// Simple point test used by the thinning: Euler invariance plus single-object neighbourhood.
pub(crate) fn is_simple(neighbourhood: u32) -> bool {
    is_euler_invariant(neighbourhood) && neighbours_form_one_object(neighbourhood)
}

/// Padded working copy with one voxel of background on every side.
struct Padded {
    dims: [usize; 3],
    data: Vec<u8>,
}

impl Padded {
    fn new(mask: &BinaryVolume) -> Self {
        let [nx, ny, nz] = mask.dims();
        let dims = [nx + 2, ny + 2, nz + 2];
        let mut data = vec![0u8; dims[0] * dims[1] * dims[2]];
        for (i, &v) in mask.data().iter().enumerate() {
            if v {
                let [x, y, z] = mask.grid().coords(i);
                data[(x + 1) + dims[0] * ((y + 1) + dims[1] * (z + 1))] = 1;
            }
        }
        Padded { dims, data }
    }

    #[inline]
    fn stride(&self, d: [i64; 3]) -> isize {
        d[0] as isize
            + self.dims[0] as isize * (d[1] as isize + self.dims[1] as isize * d[2] as isize)
    }

    fn neighbourhood(&self, i: usize, strides: &[isize; 27]) -> u32 {
        let mut n = 0u32;
        for (b, &s) in strides.iter().enumerate() {
            if self.data[(i as isize + s) as usize] != 0 {
                n |= 1 << b;
            }
        }
        n
    }

    fn unpad(&self, grid: Grid) -> BinaryVolume {
        Volume::from_fn(grid, |i| {
            let [x, y, z] = grid.coords(i);
            self.data[(x + 1) + self.dims[0] * ((y + 1) + self.dims[1] * (z + 1))] != 0
        })
    }
}

/// Thin a mask to one-voxel-wide curves while preserving its topology.
pub fn skeletonize(mask: &BinaryVolume) -> BinaryVolume {
    let mut img = Padded::new(mask);
    let mut strides = [0isize; 27];
    for (b, s) in strides.iter_mut().enumerate() {
        *s = img.stride([
            (b % 3) as i64 - 1,
            (b / 3 % 3) as i64 - 1,
            (b / 9) as i64 - 1,
        ]);
    }
    let [px, py, pz] = img.dims;
    let mut candidates = Vec::new();
    let mut unchanged = 0;
    while unchanged < BORDERS.len() {
        unchanged = 0;
        for border in BORDERS {
            let border_stride = img.stride(border);
            candidates.clear();
            for z in 1..pz - 1 {
                for y in 1..py - 1 {
                    let row = px * (y + py * z);
                    for x in 1..px - 1 {
                        let i = row + x;
                        if img.data[i] == 0 || img.data[(i as isize + border_stride) as usize] != 0
                        {
                            continue;
                        }
                        let n = img.neighbourhood(i, &strides);
                        // curve endpoint: exactly one neighbour
                        if (n & !CENTER).count_ones() == 1 {
                            continue;
                        }
                        if is_simple(n) {
                            candidates.push(i);
                        }
                    }
                }
            }
            let mut changed = false;
            for &i in &candidates {
                let n = img.neighbourhood(i, &strides);
                if neighbours_form_one_object(n) {
                    img.data[i] = 0;
                    changed = true;
                }
            }
            if !changed {
                unchanged += 1;
            }
        }
    }
    img.unpad(*mask.grid())
}

/// Exact Euclidean distance (mm) from each foreground voxel centre to the
/// nearest background voxel centre; voxels outside the grid count as background.
/// Background voxels get 0.
pub fn distance_transform(mask: &BinaryVolume) -> Volume<f64> {
    let grid = *mask.grid();
    let [nx, ny, nz] = grid.dims();
    let dims = [nx + 2, ny + 2, nz + 2];
    let sp = grid.spacing();
    let len = dims[0] * dims[1] * dims[2];
    let idx = |x: usize, y: usize, z: usize| x + dims[0] * (y + dims[1] * z);
    let mut fg = vec![false; len];
    for i in mask.foreground() {
        let [x, y, z] = grid.coords(i);
        fg[idx(x + 1, y + 1, z + 1)] = true;
    }

    // Pass along x: squared distance to the nearest background in the same row.
    let mut d2 = vec![0.0f64; len];
    let mut line = vec![0usize; dims[0]];
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            let base = idx(0, y, z);
            let mut last: Option<usize> = None;
            for x in 0..dims[0] {
                if !fg[base + x] {
                    last = Some(x);
                }
                line[x] = last.map_or(usize::MAX, |l| x - l);
            }
            last = None;
            for x in (0..dims[0]).rev() {
                if !fg[base + x] {
                    last = Some(x);
                }
                if let Some(l) = last {
                    line[x] = line[x].min(l - x);
                }
                let steps = line[x] as f64 * sp[0];
                d2[base + x] = steps * steps;
            }
        }
    }

    let mut f = vec![0.0; dims.iter().copied().max().unwrap()];
    let mut out = f.clone();
    let mut env = EnvelopeScratch::new(f.len());
    for (axis, s) in [(1usize, sp[1]), (2, sp[2])] {
        let (a1, a2) = match axis {
            1 => (0, 2),
            _ => (0, 1),
        };
        let n = dims[axis];
        for u in 0..dims[a1] {
            for w in 0..dims[a2] {
                let at = |k: usize| {
                    let mut c = [0usize; 3];
                    c[axis] = k;
                    c[a1] = u;
                    c[a2] = w;
                    idx(c[0], c[1], c[2])
                };
                for k in 0..n {
                    f[k] = d2[at(k)];
                }
                env.transform(&f[..n], s * s, &mut out[..n]);
                for k in 0..n {
                    d2[at(k)] = out[k];
                }
            }
        }
    }

    Volume::from_fn(grid, |i| {
        if !mask.data()[i] {
            return 0.0;
        }
        let [x, y, z] = grid.coords(i);
        d2[idx(x + 1, y + 1, z + 1)].sqrt()
    })
}

struct EnvelopeScratch {
    v: Vec<usize>,
    z: Vec<f64>,
}

impl EnvelopeScratch {
    fn new(n: usize) -> Self {
        EnvelopeScratch {
            v: vec![0; n],
            z: vec![0.0; n + 1],
        }
    }

    /// `out[q] = min_p f[p] + w * (q - p)^2` via the lower envelope of parabolas.
    fn transform(&mut self, f: &[f64], w: f64, out: &mut [f64]) {
        let n = f.len();
        let (v, z) = (&mut self.v, &mut self.z);
        let mut k = 0usize;
        v[0] = 0;
        z[0] = f64::NEG_INFINITY;
        z[1] = f64::INFINITY;
        for q in 1..n {
            loop {
                let p = v[k];
                let s = ((f[q] + w * (q * q) as f64) - (f[p] + w * (p * p) as f64))
                    / (2.0 * w * (q - p) as f64);
                if s <= z[k] && k > 0 {
                    k -= 1;
                    continue;
                }
                if s <= z[k] {
                    // k == 0: the new parabola dominates everywhere
                    v[0] = q;
                    z[0] = f64::NEG_INFINITY;
                    z[1] = f64::INFINITY;
                } else {
                    k += 1;
                    v[k] = q;
                    z[k] = s;
                    z[k + 1] = f64::INFINITY;
                }
                break;
            }
        }
        k = 0;
        for (q, o) in out.iter_mut().enumerate() {
            while z[k + 1] < q as f64 {
                k += 1;
            }
            let d = q as f64 - v[k] as f64;
            *o = f[v[k]] + w * d * d;
        }
    }
}

/// Radius (mm) at each skeleton voxel, keyed by linear index.
#[derive(Clone, Debug, PartialEq)]
pub struct RadiusMap {
    radii: BTreeMap<usize, f64>,
}

impl RadiusMap {
    pub fn from_map(radii: BTreeMap<usize, f64>) -> Self {
        RadiusMap { radii }
    }

    pub fn get(&self, index: usize) -> Option<f64> {
        self.radii.get(&index).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.radii.iter().map(|(&i, &r)| (i, r))
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }
}

/// Sample the distance transform of `mask` at every skeleton voxel.
pub fn radius_map(
    skeleton: &BinaryVolume,
    mask: &BinaryVolume,
) -> Result<RadiusMap, SkeletonError> {
    if skeleton.grid() != mask.grid() {
        return Err(SkeletonError::ShapeMismatch);
    }
    if let Some(i) = skeleton.foreground().find(|&i| !mask.data()[i]) {
        return Err(SkeletonError::SkeletonNotSubset(i));
    }
    let dt = distance_transform(mask);
    Ok(RadiusMap {
        radii: skeleton.foreground().map(|i| (i, dt.data()[i])).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connectivity::ncc;
    use crate::volume::AxisConvention;

    fn mask(dims: [usize; 3], on: impl IntoIterator<Item = [usize; 3]>) -> BinaryVolume {
        let mut v = BinaryVolume::empty(Grid::unit(dims).unwrap());
        for p in on {
            v.set(p, true);
        }
        v
    }

    fn word(on: &[[i64; 3]]) -> u32 {
        on.iter()
            .fold(CENTER, |w, d| w | 1 << bit(d[0], d[1], d[2]))
    }

    #[test]
    fn euler_vertex_table_sanity() {
        // single cube: V=8 E=12 F=6 C=1 -> chi = 1, spread over 8 vertices
        let total: i32 = (0..8).map(|b| vertex_euler8(1 << b)).sum();
        assert_eq!(total, 8);
        assert_eq!(vertex_euler8(0), 0);
        assert_eq!(vertex_euler8(0xff), 0);
    }

    #[test]
    fn simple_point_cases() {
        // isolated voxel: deleting it removes an object
        assert!(!is_euler_invariant(CENTER));
        // end of a line: deletable topologically
        assert!(is_simple(word(&[[1, 0, 0]])));
        // middle of a line: would split it
        assert!(!is_simple(word(&[[1, 0, 0], [-1, 0, 0]])));
        // centre of a 3x3 plate: would punch a hole
        let plate: Vec<[i64; 3]> = (-1..=1)
            .flat_map(|x| (-1..=1).map(move |y| [x, y, 0]))
            .filter(|d| *d != [0, 0, 0])
            .collect();
        assert!(!is_simple(word(&plate)));
        // corner of a filled cube
        let cube: Vec<[i64; 3]> = (0..=1)
            .flat_map(|x| (0..=1).flat_map(move |y| (0..=1).map(move |z| [x, y, z])))
            .filter(|d| *d != [0, 0, 0])
            .collect();
        assert!(is_simple(word(&cube)));
        // inside a full 3x3x3 block: deleting makes a cavity
        assert!(!is_euler_invariant(u32::MAX >> 5));
    }

    #[test]
    fn single_voxel_survives() {
        let m = mask([3, 3, 3], [[1, 1, 1]]);
        assert_eq!(skeletonize(&m), m);
    }

    #[test]
    fn thin_line_is_unchanged() {
        let m = mask([12, 3, 3], (1..11).map(|x| [x, 1, 1]));
        assert_eq!(skeletonize(&m), m);
    }

    #[test]
    fn empty_in_empty_out() {
        let m = mask([4, 4, 4], []);
        assert!(skeletonize(&m).is_blank());
        assert!(distance_transform(&m).data().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn solid_tube_thins_to_a_curve() {
        // radius-3 disc cross-section (7 voxels across), 30 slices long
        let m = mask(
            [9, 9, 32],
            (0..9 * 9 * 32)
                .map(|i| [i % 9, i / 9 % 9, i / 81])
                .filter(|p| {
                    let (dx, dy) = (p[0] as i64 - 4, p[1] as i64 - 4);
                    dx * dx + dy * dy <= 9 && (1..31).contains(&p[2])
                }),
        );
        let s = skeletonize(&m);
        assert!(s.is_subset_of(&m).unwrap());
        assert_eq!(ncc(&s), 1);
        let n = s.count();
        assert!((28..=40).contains(&n), "skeleton has {n} voxels");
        assert_eq!(skeletonize(&s), s);
    }

    #[test]
    fn single_voxel_distance_is_one() {
        let m = mask([3, 3, 3], [[1, 1, 1]]);
        let dt = distance_transform(&m);
        assert_eq!(*dt.get([1, 1, 1]), 1.0);
        let r = radius_map(&m, &m).unwrap();
        assert_eq!(r.get(m.grid().index([1, 1, 1])), Some(1.0));
    }

    #[test]
    fn whole_grid_foreground_measures_to_outside() {
        let m = mask([5, 1, 1], (0..5).map(|x| [x, 0, 0]));
        let dt = distance_transform(&m);
        assert_eq!(dt.data(), &[1.0; 5]);
        let m = mask([5, 5, 5], (0..125).map(|i| [i % 5, i / 5 % 5, i / 25]));
        assert_eq!(*distance_transform(&m).get([2, 2, 2]), 3.0);
    }

    #[test]
    fn anisotropic_slab() {
        let g = Grid::new([7, 7, 3], [1.0, 1.0, 2.0], AxisConvention::default()).unwrap();
        let mut m = BinaryVolume::empty(g);
        for x in 0..7 {
            for y in 0..7 {
                m.set([x, y, 1], true);
            }
        }
        // nearest background is one z step (2 mm) away
        assert_eq!(*distance_transform(&m).get([3, 3, 1]), 2.0);
    }

    #[test]
    fn radius_requires_subset() {
        let m = mask([3, 3, 3], [[1, 1, 1]]);
        let s = mask([3, 3, 3], [[0, 0, 0]]);
        assert_eq!(radius_map(&s, &m), Err(SkeletonError::SkeletonNotSubset(0)));
    }
}
