//! Library results against slow, independent reference implementations.

use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vesseltk::graph::{prim_mst, tree_path, Edge, SkeletonGraph};
use vesseltk::labeling::{centerline_to_volume, LabeledCenterline};
use vesseltk::metrics::confusion;
use vesseltk::skeleton::distance_transform;
use vesseltk::{
    connected_components, AxisConvention, BinaryVolume, BranchLabel, Connectivity, Grid,
};

fn random_mask(rng: &mut ChaCha8Rng, max: usize, density: f64) -> BinaryVolume {
    let dims = [
        rng.random_range(1..=max),
        rng.random_range(1..=max),
        rng.random_range(1..=max),
    ];
    let spacing = [
        rng.random_range(0.5..2.0),
        rng.random_range(0.5..2.0),
        rng.random_range(0.5..2.0),
    ];
    let grid = Grid::new(dims, spacing, AxisConvention::default()).unwrap();
    BinaryVolume::from_fn(grid, |_| rng.random_bool(density))
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn adjacent(a: [usize; 3], b: [usize; 3], conn: Connectivity) -> bool {
    let d: Vec<usize> = (0..3).map(|k| a[k].abs_diff(b[k])).collect();
    if d.iter().any(|&x| x > 1) {
        return false;
    }
    let n = d.iter().sum::<usize>();
    n > 0
        && match conn {
            Connectivity::Six => n == 1,
            Connectivity::Eighteen => n <= 2,
            Connectivity::TwentySix => true,
        }
}

#[test]
fn components_match_union_find() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..150 {
        let m = random_mask(&mut rng, 9, 0.3);
        let g = *m.grid();
        let fg: Vec<usize> = m.foreground().collect();
        for conn in [
            Connectivity::Six,
            Connectivity::Eighteen,
            Connectivity::TwentySix,
        ] {
            let mut parent: Vec<usize> = (0..g.len()).collect();
            for (i, &a) in fg.iter().enumerate() {
                for &b in &fg[i + 1..] {
                    if adjacent(g.coords(a), g.coords(b), conn) {
                        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                        parent[ra] = rb;
                    }
                }
            }
            let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for &v in &fg {
                let r = find(&mut parent, v);
                groups.entry(r).or_default().push(v);
            }
            let mut comps: Vec<Vec<usize>> = groups.into_values().collect();
            comps.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
            let mut expect = vec![0u32; g.len()];
            for (id, c) in comps.iter().enumerate() {
                for &v in c {
                    expect[v] = id as u32 + 1;
                }
            }
            let got = connected_components(&m, conn);
            assert_eq!(got.labels.data(), &expect[..], "{conn}");
            assert_eq!(got.sizes, comps.iter().map(Vec::len).collect::<Vec<_>>());
        }
    }
}

#[test]
fn distance_transform_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..60 {
        let m = random_mask(&mut rng, 10, 0.75);
        let g = *m.grid();
        let sp = g.spacing();
        let dims = g.dims();
        let dt = distance_transform(&m);
        let bg: Vec<usize> = (0..g.len()).filter(|&i| !m.data()[i]).collect();
        for v in m.foreground() {
            let p = g.coords(v);
            // nearest voxel of the one-voxel background frame around the grid
            let mut best = (0..3)
                .map(|k| ((p[k] + 1).min(dims[k] - p[k]) as f64 * sp[k]).powi(2))
                .fold(f64::INFINITY, f64::min);
            for &b in &bg {
                best = best.min(g.dist2(v, b));
            }
            let got = dt.data()[v];
            assert!(
                (got - best.sqrt()).abs() < 1e-9,
                "voxel {p:?}: {got} vs {}",
                best.sqrt()
            );
        }
        for &b in &bg {
            assert_eq!(dt.data()[b], 0.0);
        }
    }
}

fn kruskal_weights(n: usize, edges: &[Edge]) -> Vec<f64> {
    let mut sorted = edges.to_vec();
    sorted.sort_by(|a, b| a.weight.total_cmp(&b.weight));
    let mut parent: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    for e in sorted {
        let (ra, rb) = (find(&mut parent, e.a), find(&mut parent, e.b));
        if ra != rb {
            parent[ra] = rb;
            out.push(e.weight);
        }
    }
    out
}

fn random_graph(rng: &mut ChaCha8Rng, integer: bool) -> (SkeletonGraph, Vec<Edge>) {
    let n = rng.random_range(1..=12);
    let grid = Grid::unit([n, 1, 1]).unwrap();
    let voxels: Vec<usize> = (0..n).collect();
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random_bool(0.35) {
                let weight = if integer {
                    rng.random_range(1..=5) as f64
                } else {
                    [1.0, 2f64.sqrt(), 3f64.sqrt()][rng.random_range(0..3)]
                };
                edges.push(Edge { a, b, weight });
            }
        }
    }
    (
        SkeletonGraph::from_edges(grid, &voxels, &edges).unwrap(),
        edges,
    )
}

#[test]
fn mst_matches_kruskal() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..500 {
        let (g, edges) = random_graph(&mut rng, i % 2 == 0);
        let tree = prim_mst(&g);
        let mut got: Vec<f64> = tree.edges().iter().map(|e| e.weight).collect();
        got.sort_by(f64::total_cmp);
        let mut expect = kruskal_weights(g.len(), &edges);
        expect.sort_by(f64::total_cmp);
        assert_eq!(got, expect);
        if i % 2 == 0 {
            assert_eq!(tree.total_weight(), expect.iter().sum::<f64>());
        }
    }
}

#[test]
fn tree_paths_match_bfs() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let (g, _) = random_graph(&mut rng, true);
        let tree = prim_mst(&g);
        let n = tree.len();
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        // BFS over tree edges
        let mut prev = vec![usize::MAX; n];
        let mut seen = vec![false; n];
        let mut q = VecDeque::from([a]);
        seen[a] = true;
        while let Some(u) = q.pop_front() {
            for m in tree.neighbours(u) {
                if !seen[m] {
                    seen[m] = true;
                    prev[m] = u;
                    q.push_back(m);
                }
            }
        }
        match tree_path(&tree, a, b) {
            Ok(p) => {
                assert!(seen[b]);
                let mut expect = vec![b];
                while *expect.last().unwrap() != a {
                    expect.push(prev[*expect.last().unwrap()]);
                }
                expect.reverse();
                assert_eq!(p.nodes, expect);
                let rev = tree_path(&tree, b, a).unwrap();
                assert_eq!(rev.length, p.length);
            }
            Err(_) => assert!(!seen[b]),
        }
    }
}

#[test]
fn confusion_matches_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..300 {
        let density = rng.random_range(0.0..1.0);
        let a = random_mask(&mut rng, 16, density);
        let b = BinaryVolume::from_fn(*a.grid(), |_| rng.random_bool(0.4));
        let c = confusion(&a, &b).unwrap();
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for i in 0..a.grid().len() {
            let (p, g) = (a.data()[i], b.data()[i]);
            tp += (p && g) as usize;
            fp += (p && !g) as usize;
            fn_ += (!p && g) as usize;
        }
        assert_eq!((c.tp, c.fp, c.fn_), (tp, fp, fn_));
    }
}

fn brute_force_nearest(labeled: &LabeledCenterline, mask: &BinaryVolume) -> Vec<BranchLabel> {
    let g = *mask.grid();
    (0..g.len())
        .map(|v| {
            if !mask.data()[v] {
                return BranchLabel::Unlabeled;
            }
            let mut best: Option<(f64, usize, BranchLabel)> = None;
            for (n, &node) in labeled.voxels.iter().enumerate() {
                let l = labeled.labels[n];
                if l == BranchLabel::Unlabeled {
                    continue;
                }
                let d = g.dist2(v, node);
                if best.is_none_or(|b| d < b.0 || (d == b.0 && node < b.1)) {
                    best = Some((d, node, l));
                }
            }
            best.unwrap().2
        })
        .collect()
}

#[test]
fn centerline_mapping_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..100 {
        let mask = random_mask(&mut rng, 10, 0.5);
        let g = *mask.grid();
        let fg: Vec<usize> = mask.foreground().collect();
        if fg.is_empty() {
            continue;
        }
        let mut nodes: Vec<(usize, BranchLabel)> = Vec::new();
        for &v in &fg {
            if rng.random_bool(0.15) {
                nodes.push((v, BranchLabel::from_u8(rng.random_range(1..=7)).unwrap()));
            }
        }
        nodes.push((fg[rng.random_range(0..fg.len())], BranchLabel::Ao));
        nodes.sort_by_key(|n| n.0);
        nodes.dedup_by_key(|n| n.0);
        let labeled = LabeledCenterline::from_nodes(g, &nodes);
        let got = centerline_to_volume(&labeled, &mask).unwrap();
        assert_eq!(got.data(), &brute_force_nearest(&labeled, &mask)[..]);
    }
}
