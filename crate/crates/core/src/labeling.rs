//! Rule-based artery branch labeling.
//!
//! The centerline tree of an artery mask is labeled with a fixed sequence of
//! geometric rules, then the labels are spread back to the voxels:
//!
//! 1. Whole- vs upper-abdomen: thin vessels at the foot end mean iliacs are present.
//! 2. Aorta: from the head-most endpoint A down to the iliac bifurcation D
//!    (or to the foot-most endpoint when there are no iliacs).
//! 3. The two head-most junctions E and F on the aorta feed the celiac
//!    subtree and the superior mesenteric artery.
//! 4. In the celiac subtree the right-most and left-most endpoints G and H
//!    end the hepatic and splenic arteries; their paths from E part at I.
//!    The endpoint sharing the least of the celiac trunk is the left gastric
//!    artery; whatever remains is the gastroduodenal artery.
//! 5. Every mask voxel takes the label of its nearest labeled centerline node.
//! 6. A two-cluster K-Means on celiac node radii moves the thick cluster,
//!    centerline that actually runs inside the aorta, back to AO.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{build_graph, common_prefix, prim_mst, GraphError, TreePath, VesselTree};
use crate::skeleton::{radius_map, skeletonize, RadiusMap, SkeletonError};
use crate::volume::{BinaryVolume, BranchLabel, BranchLabelVolume, Grid};

/// Whether the scan reaches the iliac bifurcation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseKind {
    WholeAbdomen,
    UpperAbdomen,
}

#[derive(Debug, Error, PartialEq)]
pub enum LabelingError {
    #[error("centerline tree is empty")]
    EmptyTree,
    #[error("need at least 2 endpoints, found {0}")]
    InsufficientEndpoints(usize),
    #[error("need at least 2 junctions on the aorta, found {0}")]
    MissingJunctions(usize),
    #[error("need at least 2 endpoints in the celiac subtree, found {0}")]
    InsufficientCeliacsEndpoints(usize),
    #[error("no labeled centerline nodes")]
    EmptyCenterline,
    #[error("branch {0} has no centerline nodes")]
    EmptyTargetBranch(BranchLabel),
    #[error("no radius for centerline voxel {0}")]
    MissingRadius(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Skeleton(#[from] SkeletonError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Pipeline stage, used to tag errors from [`label_case`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Skeletonize,
    DetectCaseKind,
    LabelAo,
    LabelCaSma,
    LabelCeliacSubtree,
    CenterlineToVolume,
    Postprocess,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Skeletonize => "skeletonize",
            Stage::DetectCaseKind => "detect_case_kind",
            Stage::LabelAo => "label_ao",
            Stage::LabelCaSma => "label_ca_sma",
            Stage::LabelCeliacSubtree => "label_celiac_subtree",
            Stage::CenterlineToVolume => "centerline_to_volume",
            Stage::Postprocess => "adaptive_radius_postprocess",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("{stage}: {source}")]
pub struct StageError {
    pub stage: Stage,
    pub source: LabelingError,
}

fn at(stage: Stage) -> impl FnOnce(LabelingError) -> StageError {
    move |source| StageError { stage, source }
}

/// Non-fatal fallbacks taken while labeling.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    /// Whole-abdomen case without two foot-side endpoints; the upper-abdomen rule was used.
    MissingIliacEndpoints,
    /// The paths from A to B and C share only A; the upper-abdomen rule was used.
    NoConjunction,
    /// Several endpoints tie for the least celiac overlap; the one with the
    /// longest path to E was taken.
    AmbiguousArgmin {
        candidates: Vec<usize>,
        chosen: usize,
    },
    /// The celiac subtree has only the hepatic and splenic endpoints.
    NoGastricBranches,
    /// Everything outside the main tree component is left unlabeled.
    ExtraComponents { count: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelingConfig {
    /// Foot/head radius ratio below which iliacs are assumed present.
    pub iliac_ratio: f64,
    /// Fraction of nodes averaged at each end for the iliac test.
    pub end_fraction: f64,
    /// Fraction of the endpoint head-coordinate range searched for the iliac endpoints.
    pub foot_fraction: f64,
    pub kmeans_max_iterations: usize,
    /// Branch to run the radius post-processing on; `None` disables it.
    pub postprocess: Option<BranchLabel>,
}

impl Default for LabelingConfig {
    fn default() -> Self {
        LabelingConfig {
            iliac_ratio: 0.6,
            end_fraction: 0.1,
            foot_fraction: 0.25,
            kmeans_max_iterations: 100,
            postprocess: Some(BranchLabel::Ca),
        }
    }
}

fn radius_of(tree: &VesselTree, radii: &RadiusMap, node: usize) -> Result<f64, LabelingError> {
    let v = tree.voxel(node);
    radii.get(v).ok_or(LabelingError::MissingRadius(v))
}

/// Nodes of the largest tree component; ties go to the component with the smaller root.
fn main_component(tree: &VesselTree) -> (usize, usize) {
    let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
    for n in 0..tree.len() {
        *sizes.entry(tree.root_of(n)).or_default() += 1;
    }
    let count = sizes.len();
    let root = sizes
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map_or(0, |(&r, _)| r);
    (root, count)
}

/// Iliacs are present when the thinnest end of the tree (foot side) is much
/// thinner than the head side. Looks at the main component only.
pub fn detect_case_kind(
    tree: &VesselTree,
    radii: &RadiusMap,
    cfg: &LabelingConfig,
) -> Result<CaseKind, LabelingError> {
    if tree.is_empty() {
        return Err(LabelingError::EmptyTree);
    }
    let (root, _) = main_component(tree);
    let mut nodes: Vec<usize> = (0..tree.len())
        .filter(|&n| tree.root_of(n) == root)
        .collect();
    if nodes.len() < 2 {
        return Ok(CaseKind::UpperAbdomen);
    }
    nodes.sort_by(|&a, &b| {
        tree.head_coord(a)
            .total_cmp(&tree.head_coord(b))
            .then(a.cmp(&b))
    });
    let k = ((nodes.len() as f64 * cfg.end_fraction).ceil() as usize).clamp(1, nodes.len() / 2);
    let mean = |ns: &[usize]| -> Result<f64, LabelingError> {
        let mut s = 0.0;
        for &n in ns {
            s += radius_of(tree, radii, n)?;
        }
        Ok(s / ns.len() as f64)
    };
    let foot = mean(&nodes[..k])?;
    let head = mean(&nodes[nodes.len() - k..])?;
    Ok(if foot < cfg.iliac_ratio * head {
        CaseKind::WholeAbdomen
    } else {
        CaseKind::UpperAbdomen
    })
}

/// Mean radius from an endpoint up to, not including, the first junction.
fn terminal_radius(tree: &VesselTree, radii: &RadiusMap, end: usize) -> Result<f64, LabelingError> {
    let (mut prev, mut cur) = (usize::MAX, end);
    let (mut sum, mut n) = (0.0, 0usize);
    loop {
        sum += radius_of(tree, radii, cur)?;
        n += 1;
        let next: Vec<usize> = tree
            .neighbours(cur)
            .into_iter()
            .filter(|&m| m != prev)
            .collect();
        if next.len() != 1 || tree.degree(next[0]) >= 3 {
            break;
        }
        prev = cur;
        cur = next[0];
    }
    Ok(sum / n as f64)
}

/// Larger head coordinate first, then smaller id.
fn head_most(tree: &VesselTree, nodes: impl Iterator<Item = usize>) -> Option<usize> {
    nodes.max_by(|&a, &b| {
        tree.head_coord(a)
            .total_cmp(&tree.head_coord(b))
            .then(b.cmp(&a))
    })
}

fn foot_most(tree: &VesselTree, nodes: impl Iterator<Item = usize>) -> Option<usize> {
    nodes.min_by(|&a, &b| {
        tree.head_coord(a)
            .total_cmp(&tree.head_coord(b))
            .then(a.cmp(&b))
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AoResult {
    pub a: usize,
    pub b: Option<usize>,
    pub c: Option<usize>,
    pub d: usize,
    pub path: TreePath,
    pub warnings: Vec<Warning>,
}

fn main_endpoints(tree: &VesselTree) -> Vec<usize> {
    let (root, _) = main_component(tree);
    tree.keypoints()
        .endpoints
        .iter()
        .copied()
        .filter(|&n| tree.root_of(n) == root)
        .collect()
}

pub fn label_ao(
    tree: &VesselTree,
    radii: &RadiusMap,
    kind: CaseKind,
    cfg: &LabelingConfig,
) -> Result<AoResult, LabelingError> {
    let endpoints = main_endpoints(tree);
    if endpoints.len() < 2 {
        return Err(LabelingError::InsufficientEndpoints(endpoints.len()));
    }
    let a = head_most(tree, endpoints.iter().copied()).expect("non-empty");
    let others = || endpoints.iter().copied().filter(move |&n| n != a);
    let mut warnings = Vec::new();
    if kind == CaseKind::WholeAbdomen {
        let lo = endpoints
            .iter()
            .map(|&n| tree.head_coord(n))
            .fold(f64::INFINITY, f64::min);
        let hi = tree.head_coord(a);
        let limit = lo + cfg.foot_fraction * (hi - lo);
        let mut feet = Vec::new();
        for n in others().filter(|&n| tree.head_coord(n) <= limit) {
            feet.push((terminal_radius(tree, radii, n)?, n));
        }
        feet.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
        if feet.len() >= 2 {
            let (mut b, mut c) = (feet[0].1, feet[1].1);
            if tree
                .right_coord(c)
                .total_cmp(&tree.right_coord(b))
                .then(b.cmp(&c))
                .is_gt()
            {
                std::mem::swap(&mut b, &mut c);
            }
            let (prefix, d) = common_prefix(tree, &tree.path(a, b)?, &tree.path(a, c)?)?;
            if prefix.nodes.len() > 1 {
                return Ok(AoResult {
                    a,
                    b: Some(b),
                    c: Some(c),
                    d,
                    path: tree.path(a, d)?,
                    warnings,
                });
            }
            warnings.push(Warning::NoConjunction);
        } else {
            warnings.push(Warning::MissingIliacEndpoints);
        }
    }
    let d = foot_most(tree, others()).expect("at least two endpoints");
    Ok(AoResult {
        a,
        b: None,
        c: None,
        d,
        path: tree.path(a, d)?,
        warnings,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CaSmaResult {
    pub e: usize,
    pub f: usize,
    /// Celiac subtree nodes, E excluded.
    pub cas: BTreeSet<usize>,
    pub sma: BTreeSet<usize>,
}

/// Nodes reachable from `start` without touching `blocked`, `start` excluded.
fn hanging_off(tree: &VesselTree, start: usize, blocked: &BTreeSet<usize>) -> BTreeSet<usize> {
    let mut seen = BTreeSet::new();
    let mut queue: VecDeque<usize> = tree
        .neighbours(start)
        .into_iter()
        .filter(|n| !blocked.contains(n))
        .collect();
    seen.extend(queue.iter().copied());
    while let Some(u) = queue.pop_front() {
        for m in tree.neighbours(u) {
            if m != start && !blocked.contains(&m) && seen.insert(m) {
                queue.push_back(m);
            }
        }
    }
    seen
}

pub fn label_ca_sma(tree: &VesselTree, ao: &TreePath) -> Result<CaSmaResult, LabelingError> {
    let inner = &ao.nodes[1..ao.nodes.len().saturating_sub(1).max(1)];
    let mut junctions: Vec<usize> = inner
        .iter()
        .copied()
        .filter(|&n| tree.degree(n) >= 3)
        .collect();
    if junctions.len() < 2 {
        return Err(LabelingError::MissingJunctions(junctions.len()));
    }
    junctions.sort_by(|&a, &b| {
        tree.head_coord(b)
            .total_cmp(&tree.head_coord(a))
            .then(a.cmp(&b))
    });
    let (e, f) = (junctions[0], junctions[1]);
    let on_ao: BTreeSet<usize> = ao.nodes.iter().copied().collect();
    Ok(CaSmaResult {
        e,
        f,
        cas: hanging_off(tree, e, &on_ao),
        sma: hanging_off(tree, f, &on_ao),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CeliacResult {
    pub g: usize,
    pub h: usize,
    pub i: usize,
    /// E to I, E excluded.
    pub ca: Vec<usize>,
    /// I to H, I excluded.
    pub sa: Vec<usize>,
    /// I to G, I excluded.
    pub cha: Vec<usize>,
    pub lga: Vec<usize>,
    pub gda: Vec<usize>,
    pub lga_endpoint: Option<usize>,
    pub warnings: Vec<Warning>,
}

pub fn label_celiac_subtree(
    tree: &VesselTree,
    cas: &BTreeSet<usize>,
    e: usize,
) -> Result<CeliacResult, LabelingError> {
    let ends: Vec<usize> = cas
        .iter()
        .copied()
        .filter(|&n| tree.degree(n) == 1)
        .collect();
    if ends.len() < 2 {
        return Err(LabelingError::InsufficientCeliacsEndpoints(ends.len()));
    }
    let right = |n: usize| tree.right_coord(n);
    let g = ends
        .iter()
        .copied()
        .max_by(|&a, &b| right(a).total_cmp(&right(b)).then(b.cmp(&a)))
        .expect("non-empty");
    let h = ends
        .iter()
        .copied()
        .filter(|&n| n != g)
        .min_by(|&a, &b| right(a).total_cmp(&right(b)).then(a.cmp(&b)))
        .expect("two endpoints");
    let to_g = tree.path(e, g)?;
    let to_h = tree.path(e, h)?;
    let (ca_path, i) = common_prefix(tree, &to_g, &to_h)?;
    let ca: Vec<usize> = ca_path.nodes[1..].to_vec();
    let split = ca_path.nodes.len();
    let cha: Vec<usize> = to_g.nodes[split..].to_vec();
    let sa: Vec<usize> = to_h.nodes[split..].to_vec();
    let ca_set: BTreeSet<usize> = ca.iter().copied().collect();
    let mut labeled: BTreeSet<usize> = ca.iter().chain(&sa).chain(&cha).copied().collect();

    let mut warnings = Vec::new();
    let rest: Vec<usize> = ends.iter().copied().filter(|&n| n != g && n != h).collect();
    if rest.is_empty() {
        warnings.push(Warning::NoGastricBranches);
        return Ok(CeliacResult {
            g,
            h,
            i,
            ca,
            sa,
            cha,
            lga: vec![],
            gda: vec![],
            lga_endpoint: None,
            warnings,
        });
    }
    let mut scored = Vec::with_capacity(rest.len());
    for &n in &rest {
        let p = tree.path(n, e)?;
        let overlap = p.nodes.iter().filter(|m| ca_set.contains(m)).count();
        scored.push((overlap, p));
    }
    let best = scored.iter().map(|s| s.0).min().expect("non-empty");
    let tied: Vec<&TreePath> = scored
        .iter()
        .filter(|s| s.0 == best)
        .map(|s| &s.1)
        .collect();
    let chosen = tied
        .iter()
        .max_by(|p, q| {
            p.length
                .total_cmp(&q.length)
                .then(q.first().cmp(&p.first()))
        })
        .expect("non-empty");
    if tied.len() > 1 {
        warnings.push(Warning::AmbiguousArgmin {
            candidates: tied.iter().map(|p| p.first()).collect(),
            chosen: chosen.first(),
        });
    }
    let lga: Vec<usize> = chosen
        .nodes
        .iter()
        .copied()
        .take_while(|n| !labeled.contains(n) && *n != e)
        .collect();
    labeled.extend(lga.iter().copied());
    let gda: Vec<usize> = cas
        .iter()
        .copied()
        .filter(|n| !labeled.contains(n))
        .collect();
    Ok(CeliacResult {
        g,
        h,
        i,
        ca,
        sa,
        cha,
        lga,
        gda,
        lga_endpoint: Some(chosen.first()),
        warnings,
    })
}

/// Per-node branch labels of a centerline tree.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledCenterline {
    pub grid: Grid,
    /// Voxel index of each node, ascending.
    pub voxels: Vec<usize>,
    pub labels: Vec<BranchLabel>,
    pub kind: CaseKind,
    /// Landmark letter to node id.
    pub landmarks: BTreeMap<String, usize>,
    pub warnings: Vec<Warning>,
}

impl LabeledCenterline {
    /// A bare centerline without landmarks, e.g. for tests.
    pub fn from_nodes(grid: Grid, nodes: &[(usize, BranchLabel)]) -> Self {
        let mut nodes = nodes.to_vec();
        nodes.sort_by_key(|n| n.0);
        LabeledCenterline {
            grid,
            voxels: nodes.iter().map(|n| n.0).collect(),
            labels: nodes.iter().map(|n| n.1).collect(),
            kind: CaseKind::UpperAbdomen,
            landmarks: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    pub fn nodes_with(&self, label: BranchLabel) -> impl Iterator<Item = usize> + '_ {
        (0..self.labels.len()).filter(move |&n| self.labels[n] == label)
    }
}

/// Labels every node of the main tree component.
pub fn label_tree(
    tree: &VesselTree,
    radii: &RadiusMap,
    cfg: &LabelingConfig,
) -> Result<LabeledCenterline, StageError> {
    let kind = detect_case_kind(tree, radii, cfg).map_err(at(Stage::DetectCaseKind))?;
    let ao = label_ao(tree, radii, kind, cfg).map_err(at(Stage::LabelAo))?;
    let cs = label_ca_sma(tree, &ao.path).map_err(at(Stage::LabelCaSma))?;
    let cel = label_celiac_subtree(tree, &cs.cas, cs.e).map_err(at(Stage::LabelCeliacSubtree))?;

    let mut labels = vec![BranchLabel::Unlabeled; tree.len()];
    let mut put = |nodes: &mut dyn Iterator<Item = usize>, l: BranchLabel| {
        for n in nodes {
            labels[n] = l;
        }
    };
    put(&mut ao.path.nodes.iter().copied(), BranchLabel::Ao);
    put(&mut cs.sma.iter().copied(), BranchLabel::Sma);
    put(&mut cel.ca.iter().copied(), BranchLabel::Ca);
    put(&mut cel.sa.iter().copied(), BranchLabel::Sa);
    put(&mut cel.cha.iter().copied(), BranchLabel::Cha);
    put(&mut cel.lga.iter().copied(), BranchLabel::Lga);
    put(&mut cel.gda.iter().copied(), BranchLabel::Gda);

    let mut landmarks = BTreeMap::new();
    let named = [
        ("A", Some(ao.a)),
        ("B", ao.b),
        ("C", ao.c),
        ("D", Some(ao.d)),
        ("E", Some(cs.e)),
        ("F", Some(cs.f)),
    ];
    let named2 = [("G", Some(cel.g)), ("H", Some(cel.h)), ("I", Some(cel.i))];
    for (k, n) in named.into_iter().chain(named2) {
        if let Some(n) = n {
            landmarks.insert(k.to_string(), n);
        }
    }
    let mut warnings = ao.warnings;
    warnings.extend(cel.warnings);
    let (_, components) = main_component(tree);
    if components > 1 {
        warnings.push(Warning::ExtraComponents {
            count: components - 1,
        });
    }
    Ok(LabeledCenterline {
        grid: *tree.grid(),
        voxels: (0..tree.len()).map(|n| tree.voxel(n)).collect(),
        labels,
        kind,
        landmarks,
        warnings,
    })
}

/// Each foreground voxel takes the label of the nearest labeled node
/// (physical distance; ties to the node with the smaller voxel index).
pub fn centerline_to_volume(
    labeled: &LabeledCenterline,
    mask: &BinaryVolume,
) -> Result<BranchLabelVolume, LabelingError> {
    labeled
        .grid
        .ensure_same(mask.grid())
        .map_err(|e| LabelingError::ShapeMismatch(e.to_string()))?;
    let grid = *mask.grid();
    let sx = grid.spacing()[0];
    // labeled nodes sorted by x so the scan can stop once dx alone is too far;
    // dx is computed exactly as in Grid::dist2 so the bound never cuts a tie
    let mut nodes: Vec<(usize, usize, BranchLabel)> = (0..labeled.voxels.len())
        .filter(|&n| labeled.labels[n] != BranchLabel::Unlabeled)
        .map(|n| {
            (
                grid.coords(labeled.voxels[n])[0],
                labeled.voxels[n],
                labeled.labels[n],
            )
        })
        .collect();
    if nodes.is_empty() {
        return Err(LabelingError::EmptyCenterline);
    }
    nodes.sort_by_key(|n| (n.0, n.1));
    let mut out = BranchLabelVolume::unlabeled(grid);
    for v in mask.foreground() {
        let x = grid.coords(v)[0];
        let start = nodes.partition_point(|n| n.0 < x);
        let mut best = (f64::INFINITY, usize::MAX, BranchLabel::Unlabeled);
        let consider = |best: &mut (f64, usize, BranchLabel), n: &(usize, usize, BranchLabel)| {
            let d = grid.dist2(v, n.1);
            if d < best.0 || (d == best.0 && n.1 < best.1) {
                *best = (d, n.1, n.2);
            }
        };
        let beyond = |best: &(f64, usize, BranchLabel), nx: usize| {
            let dx = (nx as f64 - x as f64) * sx;
            dx * dx > best.0
        };
        for n in &nodes[start..] {
            if beyond(&best, n.0) {
                break;
            }
            consider(&mut best, n);
        }
        for n in nodes[..start].iter().rev() {
            if beyond(&best, n.0) {
                break;
            }
            consider(&mut best, n);
        }
        out.data_mut()[v] = best.2;
    }
    Ok(out)
}

/// Result of the two-cluster radius split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSplit {
    pub centroids: [f64; 2],
    /// Node voxel indices in the thin and thick cluster.
    pub low: Vec<usize>,
    pub high: Vec<usize>,
    pub iterations: usize,
    /// Centroids closer than 1e-6 mm: nothing was reassigned.
    pub skipped: bool,
}

/// 1-D K-Means with k = 2, initialised at the minimum and maximum.
/// Values equidistant from both centroids go to the low cluster.
pub fn kmeans2(values: &[f64], max_iterations: usize) -> ([f64; 2], Vec<bool>, usize) {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut c = [lo, hi];
    let mut high: Vec<bool> = vec![false; values.len()];
    let mut iterations = 0;
    while iterations < max_iterations {
        iterations += 1;
        let next: Vec<bool> = values
            .iter()
            .map(|&v| (v - c[1]).abs() < (v - c[0]).abs())
            .collect();
        let changed = next != high || iterations == 1;
        high = next;
        for (k, want) in [(0, false), (1, true)] {
            let members: Vec<f64> = values
                .iter()
                .zip(&high)
                .filter(|(_, &h)| h == want)
                .map(|(&v, _)| v)
                .collect();
            if !members.is_empty() {
                c[k] = members.iter().sum::<f64>() / members.len() as f64;
            }
        }
        if !changed {
            break;
        }
    }
    (c, high, iterations)
}

/// Moves the thick-radius cluster of `target` nodes to AO and relabels the
/// voxels previously labeled `target` or AO.
pub fn adaptive_radius_postprocess(
    volume_labels: &BranchLabelVolume,
    labeled: &LabeledCenterline,
    radii: &RadiusMap,
    target: BranchLabel,
    max_iterations: usize,
) -> Result<(BranchLabelVolume, LabeledCenterline, ClusterSplit), LabelingError> {
    let nodes: Vec<usize> = labeled.nodes_with(target).collect();
    if nodes.is_empty() || !volume_labels.data().contains(&target) {
        return Err(LabelingError::EmptyTargetBranch(target));
    }
    let mut values = Vec::with_capacity(nodes.len());
    for &n in &nodes {
        let v = labeled.voxels[n];
        values.push(radii.get(v).ok_or(LabelingError::MissingRadius(v))?);
    }
    let (centroids, high, iterations) = kmeans2(&values, max_iterations);
    let skipped = (centroids[1] - centroids[0]).abs() < 1e-6;
    let split = ClusterSplit {
        centroids,
        low: nodes
            .iter()
            .zip(&high)
            .filter(|(_, &h)| !h || skipped)
            .map(|(&n, _)| labeled.voxels[n])
            .collect(),
        high: nodes
            .iter()
            .zip(&high)
            .filter(|(_, &h)| h && !skipped)
            .map(|(&n, _)| labeled.voxels[n])
            .collect(),
        iterations,
        skipped,
    };
    if skipped {
        return Ok((volume_labels.clone(), labeled.clone(), split));
    }
    let mut relabeled = labeled.clone();
    for (&n, &h) in nodes.iter().zip(&high) {
        if h {
            relabeled.labels[n] = BranchLabel::Ao;
        }
    }
    let region = volume_labels.map(|&l| l == target || l == BranchLabel::Ao);
    let redone = centerline_to_volume(&relabeled, &region)?;
    let mut out = volume_labels.clone();
    for v in region.foreground() {
        out.data_mut()[v] = redone.data()[v];
    }
    Ok((out, relabeled, split))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandmarkEntry {
    pub node: usize,
    pub voxel: [usize; 3],
    pub position_mm: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchSummary {
    pub nodes: usize,
    pub length_mm: f64,
    pub voxels: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandmarkReport {
    pub kind: CaseKind,
    pub landmarks: BTreeMap<String, LandmarkEntry>,
    pub branches: BTreeMap<BranchLabel, BranchSummary>,
    pub warnings: Vec<Warning>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub postprocess: Option<ClusterSplit>,
}

#[derive(Clone, Debug)]
pub struct CaseLabeling {
    pub labels: BranchLabelVolume,
    /// Labels before post-processing.
    pub raw_labels: BranchLabelVolume,
    pub centerline: LabeledCenterline,
    pub tree: VesselTree,
    pub radii: RadiusMap,
    pub report: LandmarkReport,
}

fn report(
    tree: &VesselTree,
    labeled: &LabeledCenterline,
    volume: &BranchLabelVolume,
    post: Option<ClusterSplit>,
) -> LandmarkReport {
    let grid = labeled.grid;
    let landmarks = labeled
        .landmarks
        .iter()
        .map(|(k, &n)| {
            let v = labeled.voxels[n];
            (
                k.clone(),
                LandmarkEntry {
                    node: n,
                    voxel: grid.coords(v),
                    position_mm: grid.physical(v),
                },
            )
        })
        .collect();
    let hist = volume.histogram();
    let mut branches: BTreeMap<BranchLabel, BranchSummary> = BranchLabel::BRANCHES
        .iter()
        .map(|&b| {
            (
                b,
                BranchSummary {
                    nodes: 0,
                    length_mm: 0.0,
                    voxels: hist[b as usize],
                },
            )
        })
        .collect();
    for l in &labeled.labels {
        if let Some(s) = branches.get_mut(l) {
            s.nodes += 1;
        }
    }
    for e in tree.edges() {
        let l = labeled.labels[e.a];
        if l == labeled.labels[e.b] {
            if let Some(s) = branches.get_mut(&l) {
                s.length_mm += e.weight;
            }
        }
    }
    LandmarkReport {
        kind: labeled.kind,
        landmarks,
        branches,
        warnings: labeled.warnings.clone(),
        postprocess: post,
    }
}

/// Full pipeline from an artery mask to a branch label volume.
pub fn label_case(mask: &BinaryVolume, cfg: &LabelingConfig) -> Result<CaseLabeling, StageError> {
    if mask.is_blank() {
        return Err(StageError {
            stage: Stage::DetectCaseKind,
            source: LabelingError::EmptyTree,
        });
    }
    let skeleton = skeletonize(mask);
    let radii = radius_map(&skeleton, mask).map_err(|e| at(Stage::Skeletonize)(e.into()))?;
    let tree = prim_mst(&build_graph(&skeleton));
    let centerline = label_tree(&tree, &radii, cfg)?;
    let raw_labels =
        centerline_to_volume(&centerline, mask).map_err(at(Stage::CenterlineToVolume))?;
    let (labels, centerline, post) = match cfg.postprocess {
        Some(target) => {
            let (v, c, s) = adaptive_radius_postprocess(
                &raw_labels,
                &centerline,
                &radii,
                target,
                cfg.kmeans_max_iterations,
            )
            .map_err(at(Stage::Postprocess))?;
            (v, c, Some(s))
        }
        None => (raw_labels.clone(), centerline, None),
    };
    let report = report(&tree, &centerline, &labels, post);
    Ok(CaseLabeling {
        labels,
        raw_labels,
        centerline,
        tree,
        radii,
        report,
    })
}
