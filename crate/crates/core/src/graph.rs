//! Skeleton graphs, their minimum spanning forests and tree path queries.
//!
//! Node ids are positions in ascending voxel-index order, so "smaller node id"
//! and "smaller linear voxel index" are the same tie-break everywhere.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::connectivity::Connectivity;
use crate::skeleton::RadiusMap;
use crate::volume::{BinaryVolume, Grid};

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("node {0} is not part of the tree")]
    UnknownNode(usize),
    #[error("nodes {0} and {1} lie in different tree components")]
    DisconnectedEndpoints(usize, usize),
    #[error("paths start at different nodes ({0} vs {1})")]
    DifferentOrigins(usize, usize),
    #[error("edge ({0}, {1}) references a missing node")]
    BadEdge(usize, usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Endpoints (degree 1) and junctions (degree >= 3), as ascending node ids.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Keypoints {
    pub endpoints: Vec<usize>,
    pub junctions: Vec<usize>,
}

impl Keypoints {
    fn from_degrees(degrees: impl Iterator<Item = usize>) -> Self {
        let mut k = Keypoints::default();
        for (id, d) in degrees.enumerate() {
            match d {
                1 => k.endpoints.push(id),
                d if d >= 3 => k.junctions.push(id),
                _ => {}
            }
        }
        k
    }

    pub fn is_endpoint(&self, node: usize) -> bool {
        self.endpoints.binary_search(&node).is_ok()
    }

    pub fn is_junction(&self, node: usize) -> bool {
        self.junctions.binary_search(&node).is_ok()
    }
}

/// Undirected weighted graph on skeleton voxels.
#[derive(Clone, Debug)]
pub struct SkeletonGraph {
    grid: Grid,
    voxels: Vec<usize>,
    lookup: HashMap<usize, usize>,
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl SkeletonGraph {
    /// Graph over arbitrary voxel nodes with explicit edges. Parallel edges keep the lighter one.
    pub fn from_edges(grid: Grid, voxels: &[usize], edges: &[Edge]) -> Result<Self, GraphError> {
        let mut voxels = voxels.to_vec();
        voxels.sort_unstable();
        voxels.dedup();
        let lookup: HashMap<usize, usize> =
            voxels.iter().enumerate().map(|(id, &v)| (v, id)).collect();
        let mut adjacency = vec![Vec::new(); voxels.len()];
        for e in edges {
            if e.a >= voxels.len() || e.b >= voxels.len() || e.a == e.b {
                return Err(GraphError::BadEdge(e.a, e.b));
            }
            for (u, v) in [(e.a, e.b), (e.b, e.a)] {
                let list: &mut Vec<(usize, f64)> = &mut adjacency[u];
                match list.iter_mut().find(|(n, _)| *n == v) {
                    Some(slot) => slot.1 = slot.1.min(e.weight),
                    None => list.push((v, e.weight)),
                }
            }
        }
        for list in &mut adjacency {
            list.sort_by_key(|&(n, _)| n);
        }
        Ok(SkeletonGraph {
            grid,
            voxels,
            lookup,
            adjacency,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    /// Linear voxel index of a node.
    pub fn voxel(&self, node: usize) -> usize {
        self.voxels[node]
    }

    pub fn node_at(&self, voxel: usize) -> Option<usize> {
        self.lookup.get(&voxel).copied()
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn neighbours(&self, node: usize) -> &[(usize, f64)] {
        &self.adjacency[node]
    }

    /// Each undirected edge once, with `a < b`, ordered by `(a, b)`.
    pub fn edges(&self) -> Vec<Edge> {
        let mut out = Vec::new();
        for (a, list) in self.adjacency.iter().enumerate() {
            for &(b, weight) in list {
                if a < b {
                    out.push(Edge { a, b, weight });
                }
            }
        }
        out
    }

    pub fn keypoints(&self) -> Keypoints {
        Keypoints::from_degrees(self.adjacency.iter().map(Vec::len))
    }
}

/// Graph whose nodes are the skeleton voxels and whose edges join 26-adjacent
/// voxels, weighted by physical centre-to-centre distance.
pub fn build_graph(skeleton: &BinaryVolume) -> SkeletonGraph {
    let grid = *skeleton.grid();
    let voxels: Vec<usize> = skeleton.foreground().collect();
    let lookup: HashMap<usize, usize> = voxels.iter().enumerate().map(|(id, &v)| (v, id)).collect();
    let offsets = Connectivity::TwentySix.offsets();
    let sp = grid.spacing();
    let adjacency = voxels
        .iter()
        .map(|&v| {
            let p = grid.coords(v);
            let mut list: Vec<(usize, f64)> = offsets
                .iter()
                .filter_map(|&o| {
                    let j = grid.offset(p, o)?;
                    let n = *lookup.get(&j)?;
                    let w = (0..3)
                        .map(|k| (o[k] as f64 * sp[k]).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    Some((n, w))
                })
                .collect();
            list.sort_by_key(|&(n, _)| n);
            list
        })
        .collect();
    SkeletonGraph {
        grid,
        voxels,
        lookup,
        adjacency,
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Candidate {
    weight: f64,
    node: usize,
    parent: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.weight
            .total_cmp(&other.weight)
            .then(self.node.cmp(&other.node))
            .then(self.parent.cmp(&other.parent))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Minimum spanning forest of a skeleton graph, rooted per component.
#[derive(Clone, Debug)]
pub struct VesselTree {
    grid: Grid,
    voxels: Vec<usize>,
    lookup: HashMap<usize, usize>,
    parent: Vec<Option<usize>>,
    parent_weight: Vec<f64>,
    children: Vec<Vec<usize>>,
    depth: Vec<usize>,
    root: Vec<usize>,
    keypoints: Keypoints,
}

/// Prim's algorithm per connected component. Each component is grown from its
/// smallest node id; among equal-weight candidate edges the one reaching the
/// smaller node id (then from the smaller parent id) is taken first.
pub fn prim_mst(graph: &SkeletonGraph) -> VesselTree {
    let n = graph.len();
    let mut parent = vec![None; n];
    let mut parent_weight = vec![0.0; n];
    let mut done = vec![false; n];
    let mut root = vec![usize::MAX; n];
    let mut heap = BinaryHeap::new();

    for start in 0..n {
        if done[start] {
            continue;
        }
        heap.push(Reverse(Candidate {
            weight: 0.0,
            node: start,
            parent: usize::MAX,
        }));
        while let Some(Reverse(c)) = heap.pop() {
            if done[c.node] {
                continue;
            }
            done[c.node] = true;
            root[c.node] = start;
            if c.parent != usize::MAX {
                parent[c.node] = Some(c.parent);
                parent_weight[c.node] = c.weight;
            }
            for &(m, w) in graph.neighbours(c.node) {
                if !done[m] {
                    heap.push(Reverse(Candidate {
                        weight: w,
                        node: m,
                        parent: c.node,
                    }));
                }
            }
        }
    }

    let mut children = vec![Vec::new(); n];
    for (v, p) in parent.iter().enumerate() {
        if let Some(p) = *p {
            children[p].push(v);
        }
    }
    // depth via parents; parents are always discovered before children in Prim order,
    // but ids are not, so resolve iteratively.
    let mut depth = vec![usize::MAX; n];
    for v in 0..n {
        let mut chain = Vec::new();
        let mut u = v;
        while depth[u] == usize::MAX {
            match parent[u] {
                Some(p) => {
                    chain.push(u);
                    u = p;
                }
                None => {
                    depth[u] = 0;
                    break;
                }
            }
        }
        let mut d = depth[u];
        while let Some(w) = chain.pop() {
            d += 1;
            depth[w] = d;
        }
    }
    let degrees = (0..n).map(|v| children[v].len() + parent[v].is_some() as usize);
    let keypoints = Keypoints::from_degrees(degrees);
    VesselTree {
        grid: graph.grid,
        voxels: graph.voxels.clone(),
        lookup: graph.lookup.clone(),
        parent,
        parent_weight,
        children,
        depth,
        root,
        keypoints,
    }
}

/// Ordered node sequence between two tree nodes and its physical length.
#[derive(Clone, Debug, PartialEq)]
pub struct TreePath {
    pub nodes: Vec<usize>,
    pub length: f64,
}

impl TreePath {
    pub fn first(&self) -> usize {
        self.nodes[0]
    }

    pub fn last(&self) -> usize {
        *self.nodes.last().expect("paths are never empty")
    }

    pub fn contains(&self, node: usize) -> bool {
        self.nodes.contains(&node)
    }

    pub fn reversed(&self) -> TreePath {
        TreePath {
            nodes: self.nodes.iter().rev().copied().collect(),
            length: self.length,
        }
    }
}

impl VesselTree {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn voxel(&self, node: usize) -> usize {
        self.voxels[node]
    }

    pub fn node_at(&self, voxel: usize) -> Option<usize> {
        self.lookup.get(&voxel).copied()
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        self.parent[node]
    }

    pub fn root_of(&self, node: usize) -> usize {
        self.root[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.children[node].len() + self.parent[node].is_some() as usize
    }

    /// Tree neighbours in ascending id order.
    pub fn neighbours(&self, node: usize) -> Vec<usize> {
        let mut out = self.children[node].clone();
        out.extend(self.parent[node]);
        out.sort_unstable();
        out
    }

    /// Keypoints computed on tree degrees.
    pub fn keypoints(&self) -> &Keypoints {
        &self.keypoints
    }

    /// Edges as `(child, parent, weight)`, ordered by child id.
    pub fn edges(&self) -> Vec<Edge> {
        (0..self.len())
            .filter_map(|v| {
                self.parent[v].map(|p| Edge {
                    a: v,
                    b: p,
                    weight: self.parent_weight[v],
                })
            })
            .collect()
    }

    pub fn total_weight(&self) -> f64 {
        self.parent_weight.iter().sum()
    }

    pub fn component_count(&self) -> usize {
        self.parent.iter().filter(|p| p.is_none()).count()
    }

    /// Physical position of a node in millimetres.
    pub fn position(&self, node: usize) -> [f64; 3] {
        self.grid.physical(self.voxels[node])
    }

    pub fn head_coord(&self, node: usize) -> f64 {
        self.grid.head_coord(self.voxels[node])
    }

    pub fn right_coord(&self, node: usize) -> f64 {
        self.grid.right_coord(self.voxels[node])
    }

    fn check(&self, node: usize) -> Result<(), GraphError> {
        if node < self.len() {
            Ok(())
        } else {
            Err(GraphError::UnknownNode(node))
        }
    }

    /// The unique tree path from `a` to `b`.
    pub fn path(&self, a: usize, b: usize) -> Result<TreePath, GraphError> {
        self.check(a)?;
        self.check(b)?;
        if self.root[a] != self.root[b] {
            return Err(GraphError::DisconnectedEndpoints(a, b));
        }
        let (mut u, mut v) = (a, b);
        let (mut up, mut down) = (vec![a], vec![b]);
        while self.depth[u] > self.depth[v] {
            u = self.parent[u].expect("non-root has a parent");
            up.push(u);
        }
        while self.depth[v] > self.depth[u] {
            v = self.parent[v].expect("non-root has a parent");
            down.push(v);
        }
        while u != v {
            u = self.parent[u].expect("same component");
            v = self.parent[v].expect("same component");
            up.push(u);
            down.push(v);
        }
        down.pop();
        up.extend(down.into_iter().rev());
        let length = self.path_length(&up);
        Ok(TreePath { nodes: up, length })
    }

    /// Sum of edge weights along consecutive path nodes, accumulated in child-id
    /// order so a path and its reverse have bit-identical lengths.
    pub fn path_length(&self, nodes: &[usize]) -> f64 {
        let mut children: Vec<usize> = nodes
            .windows(2)
            .map(|w| {
                if self.parent[w[0]] == Some(w[1]) {
                    w[0]
                } else {
                    w[1]
                }
            })
            .collect();
        children.sort_unstable();
        children.iter().map(|&c| self.parent_weight[c]).sum()
    }

    /// JSON-friendly export of the forest.
    pub fn export(&self, radii: Option<&RadiusMap>) -> TreeExport {
        let nodes = (0..self.len())
            .map(|id| ExportNode {
                id,
                voxel: self.grid.coords(self.voxels[id]),
                position_mm: self.position(id),
                radius_mm: radii.and_then(|r| r.get(self.voxels[id])),
            })
            .collect();
        let edges = self
            .edges()
            .into_iter()
            .map(|e| (e.a, e.b, e.weight))
            .collect();
        TreeExport {
            nodes,
            edges,
            keypoints: self.keypoints.clone(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExportNode {
    pub id: usize,
    pub voxel: [usize; 3],
    pub position_mm: [f64; 3],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius_mm: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TreeExport {
    pub nodes: Vec<ExportNode>,
    pub edges: Vec<(usize, usize, f64)>,
    pub keypoints: Keypoints,
}

pub fn tree_path(tree: &VesselTree, a: usize, b: usize) -> Result<TreePath, GraphError> {
    tree.path(a, b)
}

/// Maximal shared prefix of two paths that start at the same node, and its last node.
pub fn common_prefix(
    tree: &VesselTree,
    p: &TreePath,
    q: &TreePath,
) -> Result<(TreePath, usize), GraphError> {
    if p.first() != q.first() {
        return Err(GraphError::DifferentOrigins(p.first(), q.first()));
    }
    let shared = p
        .nodes
        .iter()
        .zip(&q.nodes)
        .take_while(|(a, b)| a == b)
        .count();
    let nodes = p.nodes[..shared].to_vec();
    let length = tree.path_length(&nodes);
    let last = nodes[shared - 1];
    Ok((TreePath { nodes, length }, last))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn skeleton(dims: [usize; 3], on: &[[usize; 3]]) -> BinaryVolume {
        let mut v = BinaryVolume::empty(Grid::unit(dims).unwrap());
        for &p in on {
            v.set(p, true);
        }
        v
    }

    fn y_shape() -> BinaryVolume {
        // junction at (4,4,0); arms of 4 voxels toward -x, +x+y and +x-y,
        // spread so that no two arms touch diagonally
        let mut on = vec![[4, 4, 0]];
        for k in 1..=4 {
            on.push([4 - k, 4, 0]);
            on.push([4 + k, 4 + k, 0]);
            on.push([4 + k, 4 - k, 0]);
        }
        skeleton([9, 9, 1], &on)
    }

    #[test]
    fn straight_line_graph() {
        let s = skeleton(
            [1, 1, 5],
            &[[0, 0, 0], [0, 0, 1], [0, 0, 2], [0, 0, 3], [0, 0, 4]],
        );
        let g = build_graph(&s);
        assert_eq!(g.len(), 5);
        let edges = g.edges();
        assert_eq!(edges.len(), 4);
        assert!(edges.iter().all(|e| e.weight == 1.0));
        assert_eq!(
            g.keypoints(),
            Keypoints {
                endpoints: vec![0, 4],
                junctions: vec![]
            }
        );
        let t = prim_mst(&g);
        let p = tree_path(&t, 0, 4).unwrap();
        assert_eq!(p.nodes, vec![0, 1, 2, 3, 4]);
        assert_eq!(p.length, 4.0);
    }

    #[test]
    fn y_shape_keypoints() {
        let s = y_shape();
        let g = build_graph(&s);
        let k = g.keypoints();
        assert_eq!(k.endpoints.len(), 3);
        assert_eq!(k.junctions.len(), 1);
        assert_eq!(g.voxel(k.junctions[0]), s.grid().index([4, 4, 0]));
        assert_eq!(g.degree(k.junctions[0]), 3);
    }

    #[test]
    fn diagonal_weights_use_spacing() {
        let g = Grid::new([2, 2, 2], [1.0, 2.0, 3.0], Default::default()).unwrap();
        let mut s = BinaryVolume::empty(g);
        s.set([0, 0, 0], true);
        s.set([1, 1, 1], true);
        let e = build_graph(&s).edges();
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].weight, 14f64.sqrt());
    }

    #[test]
    fn acyclic_graph_is_its_own_tree() {
        let g = build_graph(&y_shape());
        let t = prim_mst(&g);
        let mut te: Vec<(usize, usize)> = t
            .edges()
            .iter()
            .map(|e| (e.a.min(e.b), e.a.max(e.b)))
            .collect();
        te.sort_unstable();
        let ge: Vec<(usize, usize)> = g.edges().iter().map(|e| (e.a, e.b)).collect();
        assert_eq!(te, ge);
        assert_eq!(t.keypoints(), &g.keypoints());
    }

    #[test]
    fn four_cycle_drops_heavy_edge() {
        let grid = Grid::unit([4, 1, 1]).unwrap();
        let edges = [
            Edge {
                a: 0,
                b: 1,
                weight: 1.0,
            },
            Edge {
                a: 1,
                b: 2,
                weight: 1.0,
            },
            Edge {
                a: 2,
                b: 3,
                weight: 1.0,
            },
            Edge {
                a: 3,
                b: 0,
                weight: 5.0,
            },
        ];
        let g = SkeletonGraph::from_edges(grid, &[0, 1, 2, 3], &edges).unwrap();
        let t = prim_mst(&g);
        assert_eq!(t.total_weight(), 3.0);
        assert!(t.edges().iter().all(|e| e.weight == 1.0));
    }

    #[test]
    fn forest_has_one_root_per_component() {
        let s = skeleton(
            [7, 1, 1],
            &[[0, 0, 0], [1, 0, 0], [4, 0, 0], [5, 0, 0], [6, 0, 0]],
        );
        let t = prim_mst(&build_graph(&s));
        assert_eq!(t.component_count(), 2);
        assert_eq!(t.edges().len(), 5 - 2);
        assert_eq!(
            tree_path(&t, 0, 3),
            Err(GraphError::DisconnectedEndpoints(0, 3))
        );
        assert_eq!(tree_path(&t, 0, 9), Err(GraphError::UnknownNode(9)));
    }

    #[test]
    fn trivial_and_reversed_paths() {
        let t = prim_mst(&build_graph(&y_shape()));
        let p = tree_path(&t, 2, 2).unwrap();
        assert_eq!(p.nodes, vec![2]);
        assert_eq!(p.length, 0.0);
        let ab = tree_path(&t, 0, t.len() - 1).unwrap();
        let ba = tree_path(&t, t.len() - 1, 0).unwrap();
        assert_eq!(ab.reversed(), ba);
    }

    #[test]
    fn prefix_of_y_ends_at_junction() {
        let s = y_shape();
        let t = prim_mst(&build_graph(&s));
        let at = |p: [usize; 3]| t.node_at(s.grid().index(p)).unwrap();
        let root = at([0, 4, 0]);
        let p = tree_path(&t, root, at([8, 8, 0])).unwrap();
        let q = tree_path(&t, root, at([8, 0, 0])).unwrap();
        let (prefix, conj) = common_prefix(&t, &p, &q).unwrap();
        assert_eq!(conj, at([4, 4, 0]));
        assert_eq!(prefix.nodes.len(), 5);
        assert_eq!(prefix.length, 4.0);

        let (same, end) = common_prefix(&t, &p, &p).unwrap();
        assert_eq!(same, p);
        assert_eq!(end, p.last());

        let centre = at([4, 4, 0]);
        let r = tree_path(&t, centre, at([8, 8, 0])).unwrap();
        let u = tree_path(&t, centre, at([8, 0, 0])).unwrap();
        let (origin_only, o) = common_prefix(&t, &r, &u).unwrap();
        assert_eq!(origin_only.nodes, vec![centre]);
        assert_eq!(o, centre);
        assert_eq!(
            common_prefix(&t, &p, &r),
            Err(GraphError::DifferentOrigins(root, centre))
        );
    }

    #[test]
    fn export_lists_every_node() {
        let s = y_shape();
        let t = prim_mst(&build_graph(&s));
        let r = crate::skeleton::radius_map(&s, &s).unwrap();
        let e = t.export(Some(&r));
        assert_eq!(e.nodes.len(), 13);
        assert_eq!(e.edges.len(), 12);
        assert!(e.nodes.iter().all(|n| n.radius_mm == Some(1.0)));
        let json = serde_json::to_string(&e).unwrap();
        assert!(json.contains("\"junctions\""));
    }
}
