//! Deterministic synthetic artery phantoms.
//!
//! A phantom is a tree of capsules (spheres swept along polyline centerlines)
//! laid out like the abdominal arteries: an aorta running foot-ward along the
//! head axis, the celiac trunk splitting into splenic, common hepatic and left
//! gastric arteries, the gastroduodenal artery off the hepatic artery, the
//! superior mesenteric artery, and, for whole-abdomen cases, two iliac arteries
//! at the aortic bifurcation.
//!
//! Coordinates are physical millimetres from the centre of voxel `(0, 0, 0)`.
//! The default grid is 96 × 80 × 160 mm with head `+z`, patient right `-x`
//! and anterior `+y`.
//!
//! Besides the ground truth, a phantom carries a `mask`: the ground truth with
//! segmentation defects applied (dropped branches, cuts), standing in for an
//! imperfect basic segmentation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labeling::CaseKind;
use crate::volume::{
    AxisConvention, BinaryVolume, BranchLabel, BranchLabelVolume, Grid, IntensityVolume,
};

#[derive(Debug, Error, PartialEq)]
pub enum PhantomError {
    #[error("invalid phantom spec: {0}")]
    SpecInvalid(String),
}

fn invalid(msg: impl Into<String>) -> PhantomError {
    PhantomError::SpecInvalid(msg.into())
}

/// A segmentation defect applied to the phantom.
///
/// `Drop` and `Split` only affect [`Phantom::mask`]. `Disk` changes the
/// anatomy itself: a spherical bulge of aortic tissue at the celiac origin,
/// labeled AO in the ground truth.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Defect {
    /// Remove a branch and everything downstream of it.
    Drop(BranchLabel),
    /// Cut `k - 1` terminal branches so the mask has `k` components.
    Split(usize),
    Disk,
}

impl fmt::Display for Defect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Defect::Drop(b) => write!(f, "drop:{b}"),
            Defect::Split(k) => write!(f, "split:{k}"),
            Defect::Disk => f.write_str("disk"),
        }
    }
}

impl FromStr for Defect {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        match s.split_once(':') {
            None if s.eq_ignore_ascii_case("disk") => Ok(Defect::Disk),
            Some((kind, arg)) if kind.eq_ignore_ascii_case("drop") => {
                Ok(Defect::Drop(arg.parse()?))
            }
            Some((kind, arg)) if kind.eq_ignore_ascii_case("split") => arg
                .trim()
                .parse()
                .map(Defect::Split)
                .map_err(|_| format!("bad split count {arg:?}")),
            _ => Err(format!(
                "unknown defect {s:?}; expected drop:<branch>, split:<k> or disk"
            )),
        }
    }
}

impl TryFrom<String> for Defect {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<Defect> for String {
    fn from(d: Defect) -> String {
        d.to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VesselParams {
    pub radius: f64,
    /// Multiplier on the template length of the vessel.
    pub length_scale: f64,
}

impl VesselParams {
    pub fn new(radius: f64) -> Self {
        VesselParams {
            radius,
            length_scale: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VesselSet {
    pub ao: VesselParams,
    pub iliac: VesselParams,
    pub ca: VesselParams,
    pub sma: VesselParams,
    pub sa: VesselParams,
    pub cha: VesselParams,
    pub lga: VesselParams,
    pub gda: VesselParams,
}

impl Default for VesselSet {
    fn default() -> Self {
        VesselSet {
            ao: VesselParams::new(8.0),
            iliac: VesselParams::new(4.0),
            ca: VesselParams::new(3.0),
            sma: VesselParams::new(3.0),
            sa: VesselParams::new(2.5),
            cha: VesselParams::new(2.5),
            lga: VesselParams::new(2.0),
            gda: VesselParams::new(2.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub seed: u64,
    pub kind: CaseKind,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    #[serde(default)]
    pub vessels: VesselSet,
    /// Standard deviation of additive Gaussian intensity noise.
    #[serde(default)]
    pub noise_sigma: f64,
    /// Uniform perturbation (mm) of branch directions and take-off heights.
    #[serde(default)]
    pub jitter_mm: f64,
    #[serde(default)]
    pub defects: Vec<Defect>,
}

impl PhantomSpec {
    pub fn new(kind: CaseKind, seed: u64) -> Self {
        PhantomSpec {
            seed,
            kind,
            dims: [96, 80, 160],
            spacing: [1.0; 3],
            vessels: VesselSet::default(),
            noise_sigma: 0.0,
            jitter_mm: 0.0,
            defects: Vec::new(),
        }
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn with_jitter(mut self, mm: f64) -> Self {
        self.jitter_mm = mm;
        self
    }

    pub fn with_defects(mut self, defects: impl IntoIterator<Item = Defect>) -> Self {
        self.defects = defects.into_iter().collect();
        self
    }
}

/// A named ground-truth point and the radius of the thickest vessel meeting there.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub position_mm: [f64; 3],
    pub radius_mm: f64,
}

/// Landmarks A to I. B is the right iliac end and C the left one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Landmarks {
    pub kind: CaseKind,
    pub points: BTreeMap<String, Landmark>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Phantom {
    pub spec: PhantomSpec,
    pub intensity: IntensityVolume,
    pub gt: BinaryVolume,
    pub gt_labels: BranchLabelVolume,
    /// Ground truth with `Drop` and `Split` defects applied.
    pub mask: BinaryVolume,
    pub landmarks: Landmarks,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Vessel {
    pub name: &'static str,
    pub label: BranchLabel,
    pub parent: Option<usize>,
    pub points: Vec<[f64; 3]>,
    pub radius: f64,
}

impl Vessel {
    fn segments(&self) -> impl Iterator<Item = ([f64; 3], [f64; 3])> + '_ {
        let single = (self.points.len() == 1).then(|| (self.points[0], self.points[0]));
        self.points.windows(2).map(|w| (w[0], w[1])).chain(single)
    }

    fn end(&self) -> [f64; 3] {
        *self.points.last().expect("vessel has points")
    }
}

fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn scale(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn lerp(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    add(a, scale(sub(b, a), t))
}

/// Squared distance from `p` to the segment `a`–`b`.
pub(crate) fn segment_dist2(p: [f64; 3], a: [f64; 3], b: [f64; 3]) -> f64 {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    let t = if len2 > 0.0 {
        (dot(sub(p, a), ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let d = sub(p, lerp(a, b, t));
    dot(d, d)
}

fn segments_distance(a: &Vessel, b: &Vessel) -> f64 {
    let mut best = f64::INFINITY;
    for (p0, p1) in a.segments() {
        let len = dot(sub(p1, p0), sub(p1, p0)).sqrt();
        let steps = (len / 0.25).ceil().max(1.0) as usize;
        for k in 0..=steps {
            let p = lerp(p0, p1, k as f64 / steps as f64);
            for (q0, q1) in b.segments() {
                best = best.min(segment_dist2(p, q0, q1));
            }
        }
    }
    best.sqrt()
}

const AO: usize = 0;

/// Vessel tree in rasterization priority order: a voxel covered by several
/// capsules takes the label of the first one.
fn build_vessels(spec: &PhantomSpec) -> Vec<Vessel> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let j = spec.jitter_mm;
    let mut u = move || {
        if j > 0.0 {
            rng.random_range(-j..=j)
        } else {
            0.0
        }
    };
    let v = &spec.vessels;
    let axis = [48.0, 24.0];
    let on_axis = |z: f64| [axis[0], axis[1], z];
    let ao_bottom = match spec.kind {
        CaseKind::WholeAbdomen => 40.0,
        CaseKind::UpperAbdomen => 14.0,
    };
    let e = on_axis(100.0 + u());
    let f = on_axis(86.0 + u());
    let mut vec3 = |t: [f64; 3], p: &VesselParams| scale(add(t, [u(), u(), u()]), p.length_scale);

    let mut out = vec![Vessel {
        name: "aorta",
        label: BranchLabel::Ao,
        parent: None,
        points: vec![on_axis(150.0), on_axis(ao_bottom)],
        radius: v.ao.radius,
    }];
    if spec.kind == CaseKind::WholeAbdomen {
        let d = on_axis(ao_bottom);
        for (name, dx) in [("right iliac", -22.0), ("left iliac", 22.0)] {
            let end = add(d, vec3([dx, 0.0, -32.0], &v.iliac));
            out.push(Vessel {
                name,
                label: BranchLabel::Ao,
                parent: Some(AO),
                points: vec![d, end],
                radius: v.iliac.radius,
            });
        }
    }
    let i = add(e, vec3([0.0, 36.0, 0.0], &v.ca));
    let ca = out.len();
    out.push(Vessel {
        name: "celiac",
        label: BranchLabel::Ca,
        parent: Some(AO),
        points: vec![e, i],
        radius: v.ca.radius,
    });
    let sma_mid = add(f, vec3([0.0, 20.0, -6.0], &v.sma));
    let sma_end = add(sma_mid, vec3([2.0, 12.0, -24.0], &v.sma));
    out.push(Vessel {
        name: "superior mesenteric",
        label: BranchLabel::Sma,
        parent: Some(AO),
        points: vec![f, sma_mid, sma_end],
        radius: v.sma.radius,
    });
    let h = add(i, vec3([40.0, 4.0, 4.0], &v.sa));
    out.push(Vessel {
        name: "splenic",
        label: BranchLabel::Sa,
        parent: Some(ca),
        points: vec![i, h],
        radius: v.sa.radius,
    });
    let g = add(i, vec3([-34.0, 2.0, -2.0], &v.cha));
    let cha = out.len();
    out.push(Vessel {
        name: "common hepatic",
        label: BranchLabel::Cha,
        parent: Some(ca),
        points: vec![i, g],
        radius: v.cha.radius,
    });
    let lga_start = lerp(e, i, 16.0 / 36.0);
    let lga_end = add(lga_start, vec3([8.0, 6.0, 22.0], &v.lga));
    out.push(Vessel {
        name: "left gastric",
        label: BranchLabel::Lga,
        parent: Some(ca),
        points: vec![lga_start, lga_end],
        radius: v.lga.radius,
    });
    let gda_start = lerp(i, g, 20.0 / 34.0);
    let gda_end = add(gda_start, vec3([-2.0, 9.0, -23.0], &v.gda));
    out.push(Vessel {
        name: "gastroduodenal",
        label: BranchLabel::Gda,
        parent: Some(cha),
        points: vec![gda_start, gda_end],
        radius: v.gda.radius,
    });
    if spec.defects.contains(&Defect::Disk) {
        let dir = sub(i, e);
        let dir = scale(dir, 1.0 / dot(dir, dir).sqrt());
        let centre = add(e, scale(dir, v.ao.radius + 1.0));
        // sits right after the iliacs so it outranks the celiac capsule
        let at = if spec.kind == CaseKind::WholeAbdomen {
            3
        } else {
            1
        };
        let disk = Vessel {
            name: "disk",
            label: BranchLabel::Ao,
            parent: Some(AO),
            points: vec![centre],
            radius: (v.ao.radius * 0.75).max(v.ca.radius + 1.0),
        };
        out.insert(at, disk);
        for vessel in out.iter_mut().skip(at + 1) {
            if let Some(p) = vessel.parent.as_mut() {
                if *p >= at {
                    *p += 1;
                }
            }
        }
    }
    out
}

fn landmarks_of(kind: CaseKind, vessels: &[Vessel]) -> Landmarks {
    let by_name = |n: &str| {
        vessels
            .iter()
            .find(|v| v.name == n)
            .expect("vessel present")
    };
    let ao = by_name("aorta");
    let ca = by_name("celiac");
    let sma = by_name("superior mesenteric");
    let mut points = BTreeMap::new();
    let mut put = |k: &str, p: [f64; 3], r: f64| {
        points.insert(
            k.to_string(),
            Landmark {
                position_mm: p,
                radius_mm: r,
            },
        );
    };
    put("A", ao.points[0], ao.radius);
    put("D", ao.end(), ao.radius);
    if kind == CaseKind::WholeAbdomen {
        let r = by_name("right iliac");
        let l = by_name("left iliac");
        put("B", r.end(), r.radius);
        put("C", l.end(), l.radius);
    }
    put("E", ca.points[0], ao.radius);
    put("F", sma.points[0], ao.radius);
    put("I", ca.end(), ca.radius);
    let cha = by_name("common hepatic");
    let sa = by_name("splenic");
    put("G", cha.end(), cha.radius);
    put("H", sa.end(), sa.radius);
    Landmarks { kind, points }
}

fn is_ancestor(vessels: &[Vessel], a: usize, mut b: usize) -> bool {
    while let Some(p) = vessels[b].parent {
        if p == a {
            return true;
        }
        b = p;
    }
    false
}

fn validate(spec: &PhantomSpec, grid: &Grid, vessels: &[Vessel]) -> Result<(), PhantomError> {
    let v = &spec.vessels;
    let all = [v.ao, v.iliac, v.ca, v.sma, v.sa, v.cha, v.lga, v.gda];
    if all
        .iter()
        .any(|p| !(p.radius.is_finite() && p.radius > 0.0))
    {
        return Err(invalid("radii must be positive"));
    }
    if all
        .iter()
        .any(|p| !(p.length_scale.is_finite() && p.length_scale > 0.0))
    {
        return Err(invalid("length scales must be positive"));
    }
    if all[1..].iter().any(|p| p.radius >= v.ao.radius) {
        return Err(invalid("aorta radius must exceed every branch radius"));
    }
    if !(spec.noise_sigma.is_finite() && spec.noise_sigma >= 0.0) {
        return Err(invalid("noise sigma must be finite and non-negative"));
    }
    if !(spec.jitter_mm.is_finite() && spec.jitter_mm >= 0.0) {
        return Err(invalid("jitter must be finite and non-negative"));
    }
    for d in &spec.defects {
        match d {
            Defect::Drop(BranchLabel::Ao | BranchLabel::Unlabeled) => {
                return Err(invalid(format!("cannot apply {d}")));
            }
            Defect::Split(0) => return Err(invalid("split count must be at least 1")),
            _ => {}
        }
    }
    let extent: Vec<f64> = (0..3)
        .map(|k| (grid.dims()[k] - 1) as f64 * grid.spacing()[k])
        .collect();
    for vessel in vessels {
        for p in &vessel.points {
            if (0..3).any(|k| p[k] - vessel.radius < 0.0 || p[k] + vessel.radius > extent[k]) {
                return Err(invalid(format!("{} leaves the grid", vessel.name)));
            }
        }
    }
    let margin = grid.spacing().iter().cloned().fold(0.0, f64::max);
    for a in 0..vessels.len() {
        for b in a + 1..vessels.len() {
            let (va, vb) = (&vessels[a], &vessels[b]);
            if va.name == "disk"
                || vb.name == "disk"
                || is_ancestor(vessels, a, b)
                || is_ancestor(vessels, b, a)
            {
                continue;
            }
            let shared_start = va.parent == vb.parent
                && dot(
                    sub(va.points[0], vb.points[0]),
                    sub(va.points[0], vb.points[0]),
                ) < 1e-18;
            if shared_start {
                continue;
            }
            if segments_distance(va, vb) <= va.radius + vb.radius + margin {
                return Err(invalid(format!("{} and {} overlap", va.name, vb.name)));
            }
        }
    }
    Ok(())
}

/// Label of the first capsule covering each voxel.
pub(crate) fn rasterize(
    grid: &Grid,
    vessels: &[Vessel],
    keep: impl Fn(usize) -> bool,
) -> BranchLabelVolume {
    let mut out = BranchLabelVolume::unlabeled(*grid);
    let dims = grid.dims();
    let sp = grid.spacing();
    for (vi, vessel) in vessels.iter().enumerate() {
        if !keep(vi) {
            continue;
        }
        let r2 = vessel.radius * vessel.radius;
        for (a, b) in vessel.segments() {
            let mut lo = [0usize; 3];
            let mut hi = [0usize; 3];
            for k in 0..3 {
                let min = a[k].min(b[k]) - vessel.radius;
                let max = a[k].max(b[k]) + vessel.radius;
                lo[k] = (min / sp[k]).floor().max(0.0) as usize;
                hi[k] = ((max / sp[k]).ceil().max(0.0) as usize).min(dims[k] - 1);
            }
            for z in lo[2]..=hi[2] {
                for y in lo[1]..=hi[1] {
                    for x in lo[0]..=hi[0] {
                        let idx = grid.index([x, y, z]);
                        if out.data()[idx] != BranchLabel::Unlabeled {
                            continue;
                        }
                        let p = [x as f64 * sp[0], y as f64 * sp[1], z as f64 * sp[2]];
                        if segment_dist2(p, a, b) <= r2 {
                            out.data_mut()[idx] = vessel.label;
                        }
                    }
                }
            }
        }
    }
    out
}

fn descendants(vessels: &[Vessel], root: usize) -> Vec<bool> {
    (0..vessels.len())
        .map(|v| v == root || is_ancestor(vessels, root, v))
        .collect()
}

/// Terminal branches eligible for cuts, in the order they are cut.
const SPLIT_ORDER: [&str; 6] = [
    "splenic",
    "superior mesenteric",
    "gastroduodenal",
    "left gastric",
    "right iliac",
    "left iliac",
];

fn apply_mask_defects(
    spec: &PhantomSpec,
    grid: &Grid,
    vessels: &[Vessel],
    gt: &BinaryVolume,
) -> Result<BinaryVolume, PhantomError> {
    let mut removed = vec![false; vessels.len()];
    let mut mask = gt.clone();
    for d in &spec.defects {
        match *d {
            Defect::Drop(label) => {
                let Some(root) = vessels
                    .iter()
                    .position(|v| v.label == label && v.name != "disk")
                else {
                    return Err(invalid(format!("no {label} branch to drop")));
                };
                for (r, gone) in removed.iter_mut().zip(descendants(vessels, root)) {
                    *r |= gone;
                }
                let kept = rasterize(grid, vessels, |v| !removed[v]).foreground_mask();
                mask = mask.intersection(&kept).expect("same grid");
            }
            Defect::Split(k) => {
                let candidates: Vec<usize> = SPLIT_ORDER
                    .iter()
                    .filter_map(|n| vessels.iter().position(|v| v.name == *n))
                    .filter(|&v| !removed[v])
                    .collect();
                if k - 1 > candidates.len() {
                    return Err(invalid(format!(
                        "split:{k} needs {} terminal branches, {} available",
                        k - 1,
                        candidates.len()
                    )));
                }
                let h = grid.spacing().iter().cloned().fold(0.0, f64::max);
                for &v in &candidates[..k - 1] {
                    let vessel = &vessels[v];
                    let n = vessel.points.len();
                    let (a, b) = (vessel.points[n - 2], vessel.points[n - 1]);
                    let m = lerp(a, b, 0.5);
                    let dir = sub(b, a);
                    let dir = scale(dir, 1.0 / dot(dir, dir).sqrt());
                    let reach2 = (vessel.radius + 2.0 * h).powi(2);
                    let fg: Vec<usize> = mask.foreground().collect();
                    for idx in fg {
                        let d = sub(grid.physical(idx), m);
                        let along = dot(d, dir);
                        if along.abs() <= h && dot(d, d) - along * along <= reach2 {
                            mask.data_mut()[idx] = false;
                        }
                    }
                }
            }
            Defect::Disk => {}
        }
    }
    Ok(mask)
}

/// Ground-truth landmarks of a spec, without rasterizing.
pub fn expected_landmarks(spec: &PhantomSpec) -> Result<Landmarks, PhantomError> {
    let grid = Grid::new(spec.dims, spec.spacing, AxisConvention::default())
        .map_err(|e| invalid(e.to_string()))?;
    let vessels = build_vessels(spec);
    validate(spec, &grid, &vessels)?;
    Ok(landmarks_of(spec.kind, &vessels))
}

pub fn generate_phantom(spec: &PhantomSpec) -> Result<Phantom, PhantomError> {
    let grid = Grid::new(spec.dims, spec.spacing, AxisConvention::default())
        .map_err(|e| invalid(e.to_string()))?;
    let vessels = build_vessels(spec);
    validate(spec, &grid, &vessels)?;
    let gt_labels = rasterize(&grid, &vessels, |_| true);
    let gt = gt_labels.foreground_mask();
    let mask = apply_mask_defects(spec, &grid, &vessels, &gt)?;
    let mut intensity: IntensityVolume = gt.map(|&b| if b { 1.0 } else { 0.0 });
    if spec.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(1);
        let normal = Normal::new(0.0, spec.noise_sigma).map_err(|e| invalid(e.to_string()))?;
        for v in intensity.data_mut() {
            *v += normal.sample(&mut rng) as f32;
        }
    }
    Ok(Phantom {
        spec: spec.clone(),
        intensity,
        gt,
        gt_labels,
        mask,
        landmarks: landmarks_of(spec.kind, &vessels),
    })
}

/// The fixed evaluation suite: both case kinds, clean, noisy, defective and
/// with a disk artifact.
pub fn canonical_suite() -> Vec<(String, PhantomSpec)> {
    use CaseKind::{UpperAbdomen as Upper, WholeAbdomen as Whole};
    let mut out = Vec::new();
    for (i, (prefix, kind)) in [("whole", Whole), ("upper", Upper)].into_iter().enumerate() {
        let seed = 100 * (i as u64 + 1);
        let defective = match kind {
            Whole => vec![Defect::Drop(BranchLabel::Lga), Defect::Split(3)],
            Upper => vec![Defect::Drop(BranchLabel::Gda), Defect::Split(2)],
        };
        out.push((format!("{prefix}_clean"), PhantomSpec::new(kind, seed)));
        out.push((
            format!("{prefix}_noisy"),
            PhantomSpec::new(kind, seed + 1).with_noise(0.1),
        ));
        out.push((
            format!("{prefix}_defective"),
            PhantomSpec::new(kind, seed + 2).with_defects(defective),
        ));
        out.push((
            format!("{prefix}_disk"),
            PhantomSpec::new(kind, seed + 3).with_defects([Defect::Disk]),
        ));
    }
    out
}

impl Phantom {
    /// Per-branch voxel counts of the ground truth.
    pub fn label_counts(&self) -> BTreeMap<BranchLabel, usize> {
        let h = self.gt_labels.histogram();
        BranchLabel::BRANCHES
            .iter()
            .map(|&b| (b, h[b as usize]))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connectivity::ncc;

    fn small_grid() -> Grid {
        Grid::new([12, 10, 9], [1.0, 0.8, 1.5], AxisConvention::default()).unwrap()
    }

    #[test]
    fn defect_strings() {
        for s in ["drop:SA", "split:3", "disk"] {
            let d: Defect = s.parse().unwrap();
            assert_eq!(d.to_string(), s);
        }
        assert_eq!(
            "DROP:lga".parse::<Defect>(),
            Ok(Defect::Drop(BranchLabel::Lga))
        );
        assert!("split:x".parse::<Defect>().is_err());
        assert!("bend:2".parse::<Defect>().is_err());
    }

    #[test]
    fn rasterize_matches_brute_force() {
        let grid = small_grid();
        let vessels = vec![
            Vessel {
                name: "a",
                label: BranchLabel::Ao,
                parent: None,
                points: vec![[2.0, 2.0, 2.0], [9.0, 5.0, 9.0]],
                radius: 2.2,
            },
            Vessel {
                name: "b",
                label: BranchLabel::Sa,
                parent: Some(0),
                points: vec![[5.0, 4.0, 5.0]],
                radius: 3.1,
            },
            Vessel {
                name: "c",
                label: BranchLabel::Ca,
                parent: Some(0),
                points: vec![[1.0, 6.0, 3.0], [6.0, 6.0, 3.0], [6.0, 1.0, 10.0]],
                radius: 1.3,
            },
        ];
        let raster = rasterize(&grid, &vessels, |_| true);
        for idx in 0..grid.len() {
            let p = grid.physical(idx);
            let expect = vessels
                .iter()
                .find(|v| {
                    v.segments()
                        .any(|(a, b)| segment_dist2(p, a, b) <= v.radius * v.radius)
                })
                .map_or(BranchLabel::Unlabeled, |v| v.label);
            assert_eq!(raster.data()[idx], expect, "voxel {idx}");
        }
    }

    #[test]
    fn clean_phantom_construction() {
        for kind in [CaseKind::WholeAbdomen, CaseKind::UpperAbdomen] {
            let p = generate_phantom(&PhantomSpec::new(kind, 1)).unwrap();
            assert_eq!(p.intensity.map(|&v| v > 0.5), p.gt);
            assert_eq!(p.mask, p.gt);
            assert_eq!(ncc(&p.gt), 1);
            assert_eq!(p.gt_labels.foreground_mask(), p.gt);
            assert!(p.label_counts().values().all(|&n| n > 0), "{kind:?}");
            let names: Vec<&str> = p.landmarks.points.keys().map(String::as_str).collect();
            match kind {
                CaseKind::WholeAbdomen => {
                    assert_eq!(names, ["A", "B", "C", "D", "E", "F", "G", "H", "I"])
                }
                CaseKind::UpperAbdomen => assert_eq!(names, ["A", "D", "E", "F", "G", "H", "I"]),
            }
        }
    }

    #[test]
    fn drop_keeps_connectivity_and_subset() {
        for b in [
            BranchLabel::Lga,
            BranchLabel::Sa,
            BranchLabel::Gda,
            BranchLabel::Sma,
            BranchLabel::Cha,
        ] {
            let spec = PhantomSpec::new(CaseKind::UpperAbdomen, 3).with_defects([Defect::Drop(b)]);
            let p = generate_phantom(&spec).unwrap();
            assert_eq!(ncc(&p.mask), 1, "{b}");
            assert!(p.mask.is_subset_of(&p.gt).unwrap() && p.mask != p.gt, "{b}");
        }
    }

    #[test]
    fn split_gives_k_components() {
        for k in 1..=5 {
            let spec = PhantomSpec::new(CaseKind::WholeAbdomen, 4).with_defects([Defect::Split(k)]);
            assert_eq!(ncc(&generate_phantom(&spec).unwrap().mask), k);
        }
        let too_many = PhantomSpec::new(CaseKind::UpperAbdomen, 4).with_defects([Defect::Split(6)]);
        assert!(matches!(
            generate_phantom(&too_many),
            Err(PhantomError::SpecInvalid(_))
        ));
    }

    #[test]
    fn invalid_specs() {
        let base = PhantomSpec::new(CaseKind::WholeAbdomen, 5);
        let mut s = base.clone();
        s.vessels.sa.radius = 0.0;
        assert!(generate_phantom(&s).is_err());
        let mut s = base.clone();
        s.vessels.sma.radius = 9.0;
        assert!(generate_phantom(&s).is_err());
        let mut s = base.clone();
        s.dims = [60, 80, 160];
        assert!(generate_phantom(&s).is_err());
        let mut s = base.clone();
        // celiac and mesenteric trunks thick enough to touch
        s.vessels.ca.radius = 7.0;
        s.vessels.sma.radius = 7.0;
        assert!(generate_phantom(&s).is_err());
        assert!(
            generate_phantom(&base.clone().with_defects([Defect::Drop(BranchLabel::Ao)])).is_err()
        );
    }

    #[test]
    fn deterministic_for_seed() {
        let spec = PhantomSpec::new(CaseKind::WholeAbdomen, 9)
            .with_noise(0.05)
            .with_jitter(2.0);
        assert_eq!(
            generate_phantom(&spec).unwrap(),
            generate_phantom(&spec).unwrap()
        );
        let other = PhantomSpec {
            seed: 10,
            ..spec.clone()
        };
        assert_ne!(
            generate_phantom(&spec).unwrap().intensity,
            generate_phantom(&other).unwrap().intensity
        );
    }

    #[test]
    fn suite_shape() {
        let suite = canonical_suite();
        assert!(suite.len() >= 6);
        for (name, spec) in &suite {
            assert_eq!(
                expected_landmarks(spec).unwrap(),
                generate_phantom(spec).unwrap().landmarks,
                "{name}"
            );
        }
    }

    #[test]
    fn disk_is_labeled_aorta() {
        let clean = generate_phantom(&PhantomSpec::new(CaseKind::UpperAbdomen, 7)).unwrap();
        let disk = generate_phantom(
            &PhantomSpec::new(CaseKind::UpperAbdomen, 7).with_defects([Defect::Disk]),
        )
        .unwrap();
        assert!(clean.gt.is_subset_of(&disk.gt).unwrap());
        assert!(disk.label_counts()[&BranchLabel::Ao] > clean.label_counts()[&BranchLabel::Ao]);
        assert!(disk.label_counts()[&BranchLabel::Ca] < clean.label_counts()[&BranchLabel::Ca]);
        assert_eq!(ncc(&disk.gt), 1);
    }
}
