//! HDBSCAN over flattened Koopman operators.
//!
//! Core distances count the point itself as its first neighbour, so the core distance is the
//! distance to the `min_cluster_size`-th entry of the sorted distance list that includes the
//! zero self-distance. Mutual-reachability distances below `SNAP_RELATIVE · s`, where `s` is
//! the larger of the largest spanning-tree weight and the largest row norm, are treated as
//! exact duplicates and given density `λ = 1 / (SNAP_RELATIVE · s)`.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::koopman::KoopmanOperator;

const SNAP_RELATIVE: f64 = 1e-9;

/// Rows of uniform dimension `D` to be clustered.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    dim: usize,
    data: Vec<f64>,
    ids: Vec<usize>,
}

impl FeatureMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let ids = (0..rows.len()).collect();
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(Error::invalid(alloc::format!(
                    "row {i} has length {} (expected {dim})",
                    r.len()
                )));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(alloc::format!(
                    "row {i} has non-finite entries"
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { dim, data, ids })
    }

    /// One row per operator, flattened row-major into `ℝ^{N²}`.
    pub fn from_operators(ops: &[KoopmanOperator]) -> Result<Self> {
        Self::new(ops.iter().map(KoopmanOperator::flatten).collect())
    }

    pub fn with_ids(mut self, ids: Vec<usize>) -> Result<Self> {
        if ids.len() != self.len() {
            return Err(Error::invalid("id count does not match row count"));
        }
        self.ids = ids;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn distance(&self, a: usize, b: usize) -> f64 {
        let (ra, rb) = (self.row(a), self.row(b));
        let s: f64 = ra.iter().zip(rb).map(|(x, y)| (x - y) * (x - y)).sum();
        libm::sqrt(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    /// Class per row; `None` is noise.
    pub labels: Vec<Option<usize>>,
    /// Membership probability per row; zero for noise.
    pub membership: Vec<f64>,
    pub num_classes: usize,
}

impl ClusterResult {
    pub fn new(labels: Vec<Option<usize>>, membership: Vec<f64>) -> Result<Self> {
        if labels.len() != membership.len() {
            return Err(Error::invalid("labels and memberships differ in length"));
        }
        if membership.iter().any(|m| !(0.0..=1.0).contains(m)) {
            return Err(Error::invalid("membership outside [0, 1]"));
        }
        let num_classes = labels.iter().flatten().map(|&l| l + 1).max().unwrap_or(0);
        Ok(Self {
            labels,
            membership,
            num_classes,
        })
    }

    /// Row indices carrying label `class`, in input order.
    pub fn class_members(&self, class: usize) -> Result<Vec<usize>> {
        if class >= self.num_classes {
            return Err(Error::invalid(alloc::format!(
                "class {class} out of range (have {} classes)",
                self.num_classes
            )));
        }
        Ok(self
            .labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == Some(class))
            .map(|(i, _)| i)
            .collect())
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_none()).count()
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_classes];
        for l in self.labels.iter().flatten() {
            sizes[*l] += 1;
        }
        sizes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HdbscanParams {
    pub min_cluster_size: usize,
    /// Permit the root of the condensed tree to be selected as the only cluster.
    pub allow_single_cluster: bool,
}

impl HdbscanParams {
    pub fn new(min_cluster_size: usize) -> Self {
        Self {
            min_cluster_size,
            allow_single_cluster: false,
        }
    }
}

/// One edge of the condensed tree: `child` is a point index (< n) or a cluster id (≥ n).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CondensedRow {
    pub parent: usize,
    pub child: usize,
    pub lambda: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub id: usize,
    pub parent: Option<usize>,
    pub birth_lambda: f64,
    pub stability: f64,
    pub size: usize,
    pub selected: bool,
    pub label: Option<usize>,
}

/// Diagnostic view of the condensed cluster hierarchy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondensedTree {
    pub num_points: usize,
    pub lambda_cap: f64,
    pub clusters: Vec<ClusterSummary>,
    pub rows: Vec<CondensedRow>,
}

pub fn hdbscan(points: &FeatureMatrix, min_cluster_size: usize) -> Result<ClusterResult> {
    hdbscan_with(points, HdbscanParams::new(min_cluster_size)).map(|(r, _)| r)
}

/// Default minimum cluster size: 5% of the point count, at least 3.
pub fn default_min_cluster_size(count: usize) -> usize {
    (count / 20).max(3)
}

pub fn hdbscan_with(
    points: &FeatureMatrix,
    params: HdbscanParams,
) -> Result<(ClusterResult, CondensedTree)> {
    let mcs = params.min_cluster_size;
    if mcs < 2 {
        return Err(Error::invalid("min_cluster_size must be at least 2"));
    }
    let n = points.len();
    if n == 0 {
        return Err(Error::invalid("cannot cluster an empty feature matrix"));
    }
    if n == 1 {
        let tree = CondensedTree {
            num_points: 1,
            lambda_cap: 1.0,
            clusters: Vec::new(),
            rows: Vec::new(),
        };
        return Ok((ClusterResult::new(vec![None], vec![0.0])?, tree));
    }

    let dist = PairwiseDistances::new(points);
    let core = core_distances(&dist, mcs);
    let mut edges = prim_mst(&dist, &core);
    edges.sort_by(|a, b| a.2.total_cmp(&b.2));

    let w_max = edges.last().map_or(0.0, |e| e.2);
    let norm_max = (0..n)
        .map(|i| libm::sqrt(points.row(i).iter().map(|v| v * v).sum()))
        .fold(0.0, f64::max);
    let snap = SNAP_RELATIVE * w_max.max(norm_max);
    for e in edges.iter_mut() {
        if e.2 <= snap {
            e.2 = 0.0;
        }
    }
    let min_positive = edges
        .iter()
        .map(|e| e.2)
        .filter(|&w| w > 0.0)
        .fold(f64::INFINITY, f64::min);
    // a snapped edge behaves as if it had the largest weight that would have been snapped
    let lambda_cap = if min_positive.is_finite() {
        1.0 / snap
    } else {
        1.0
    };
    let lambda_of = |w: f64| if w > 0.0 { 1.0 / w } else { lambda_cap };

    let hierarchy = single_linkage(n, &edges);
    let (rows, num_clusters) = condense(n, &hierarchy, mcs, lambda_of);
    let sel = select_clusters(n, &rows, num_clusters, params.allow_single_cluster);
    let (result, labels_by_cluster) = label_points(n, &rows, &sel);

    let clusters = (0..num_clusters)
        .map(|c| ClusterSummary {
            id: n + c,
            parent: sel.parent[c].map(|p| p + n),
            birth_lambda: sel.birth[c],
            stability: sel.stability[c],
            size: sel.size[c],
            selected: sel.is_cluster[c],
            label: labels_by_cluster[c],
        })
        .collect();
    let tree = CondensedTree {
        num_points: n,
        lambda_cap,
        clusters,
        rows,
    };
    Ok((result, tree))
}

struct PairwiseDistances {
    n: usize,
    upper: Vec<f64>,
}

impl PairwiseDistances {
    fn new(points: &FeatureMatrix) -> Self {
        let n = points.len();
        let mut upper = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                upper.push(points.distance(i, j));
            }
        }
        Self { n, upper }
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        // offset of row a in the packed upper triangle
        let offset = a * (2 * self.n - a - 1) / 2;
        self.upper[offset + (b - a - 1)]
    }
}

fn core_distances(dist: &PairwiseDistances, k: usize) -> Vec<f64> {
    let n = dist.n;
    let kth = k.min(n) - 1;
    let mut buf = vec![0.0; n];
    (0..n)
        .map(|i| {
            for (j, slot) in buf.iter_mut().enumerate() {
                *slot = dist.get(i, j);
            }
            let (_, v, _) = buf.select_nth_unstable_by(kth, f64::total_cmp);
            *v
        })
        .collect()
}

/// Prim's algorithm on the dense mutual-reachability graph, starting from row 0.
/// Ties go to the lowest index.
fn prim_mst(dist: &PairwiseDistances, core: &[f64]) -> Vec<(usize, usize, f64)> {
    let n = dist.n;
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut from = vec![0usize; n];
    let mut edges = Vec::with_capacity(n - 1);
    let mut current = 0;
    for _ in 1..n {
        in_tree[current] = true;
        let mut next = usize::MAX;
        let mut next_d = f64::INFINITY;
        for v in 0..n {
            if in_tree[v] {
                continue;
            }
            let d = dist.get(current, v).max(core[current]).max(core[v]);
            if d < best[v] {
                best[v] = d;
                from[v] = current;
            }
            if best[v] < next_d || next == usize::MAX {
                next_d = best[v];
                next = v;
            }
        }
        edges.push((from[next], next, best[next]));
        current = next;
    }
    edges
}

/// Internal dendrogram node. Leaves are `0..n`; node `i` of the hierarchy has id `n + i`.
/// Components joined at exactly the same distance share one node, which keeps the tree
/// independent of the order in which tied edges are visited.
struct Merge {
    children: Vec<usize>,
    weight: f64,
    size: usize,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    let mut root = x;
    while parent[root] != root {
        root = parent[root];
    }
    while parent[x] != root {
        let up = parent[x];
        parent[x] = root;
        x = up;
    }
    root
}

fn single_linkage(n: usize, sorted_edges: &[(usize, usize, f64)]) -> Vec<Merge> {
    let mut parent: Vec<usize> = (0..n).collect();
    // dendrogram node currently represented by each point-level root
    let mut node_of: Vec<usize> = (0..n).collect();
    let mut merges: Vec<Merge> = Vec::with_capacity(n - 1);
    let mut start = 0;
    while start < sorted_edges.len() {
        let w = sorted_edges[start].2;
        let mut end = start;
        while end < sorted_edges.len() && sorted_edges[end].2 == w {
            end += 1;
        }
        let batch = &sorted_edges[start..end];
        let mut old: Vec<(usize, usize)> = Vec::with_capacity(2 * batch.len());
        for &(a, b, _) in batch {
            for x in [a, b] {
                let r = find(&mut parent, x);
                old.push((x, node_of[r]));
            }
        }
        for &(a, b, _) in batch {
            let ra = find(&mut parent, a);
            let rb = find(&mut parent, b);
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
        let mut grouped: Vec<(usize, usize)> = old
            .iter()
            .map(|&(x, node)| (find(&mut parent, x), node))
            .collect();
        grouped.sort_unstable();
        grouped.dedup();
        let mut i = 0;
        while i < grouped.len() {
            let root = grouped[i].0;
            let mut j = i;
            while j < grouped.len() && grouped[j].0 == root {
                j += 1;
            }
            let children: Vec<usize> = grouped[i..j].iter().map(|g| g.1).collect();
            let size = children
                .iter()
                .map(|&c| if c < n { 1 } else { merges[c - n].size })
                .sum();
            node_of[root] = n + merges.len();
            merges.push(Merge {
                children,
                weight: w,
                size,
            });
            i = j;
        }
        start = end;
    }
    merges
}

fn subtree_leaves(n: usize, hierarchy: &[Merge], root: usize, out: &mut Vec<usize>) {
    let mut stack = vec![root];
    while let Some(node) = stack.pop() {
        if node < n {
            out.push(node);
        } else {
            stack.extend(hierarchy[node - n].children.iter().rev());
        }
    }
}

/// Condenses the dendrogram. Returns rows with cluster ids offset by `n`, and the number of
/// clusters (the root is cluster id `n`).
fn condense(
    n: usize,
    hierarchy: &[Merge],
    mcs: usize,
    lambda_of: impl Fn(f64) -> f64,
) -> (Vec<CondensedRow>, usize) {
    let root = n + hierarchy.len() - 1;
    let node_size = |node: usize| {
        if node < n {
            1
        } else {
            hierarchy[node - n].size
        }
    };
    let mut relabel = vec![usize::MAX; n + hierarchy.len()];
    relabel[root] = n;
    let mut next_label = n + 1;
    let mut rows = Vec::new();
    let mut leaves = Vec::new();

    // breadth-first over internal nodes that still belong to some cluster
    let mut queue = alloc::collections::VecDeque::from([root]);
    while let Some(node) = queue.pop_front() {
        if node < n {
            continue;
        }
        let merge = &hierarchy[node - n];
        let lambda = lambda_of(merge.weight);
        let parent = relabel[node];
        let big = merge
            .children
            .iter()
            .filter(|&&c| node_size(c) >= mcs)
            .count();

        for &child in &merge.children {
            let size = node_size(child);
            if size < mcs {
                leaves.clear();
                subtree_leaves(n, hierarchy, child, &mut leaves);
                for &p in leaves.iter() {
                    rows.push(CondensedRow {
                        parent,
                        child: p,
                        lambda,
                        size: 1,
                    });
                }
            } else if big == 1 {
                relabel[child] = parent;
                queue.push_back(child);
            } else {
                relabel[child] = next_label;
                rows.push(CondensedRow {
                    parent,
                    child: next_label,
                    lambda,
                    size,
                });
                next_label += 1;
                queue.push_back(child);
            }
        }
    }
    (rows, next_label - n)
}

struct Selection {
    parent: Vec<Option<usize>>,
    birth: Vec<f64>,
    stability: Vec<f64>,
    size: Vec<usize>,
    is_cluster: Vec<bool>,
}

/// Excess-of-mass selection. Cluster indices here are relative (`id - n`).
fn select_clusters(
    n: usize,
    rows: &[CondensedRow],
    num_clusters: usize,
    allow_single_cluster: bool,
) -> Selection {
    let mut parent = vec![None; num_clusters];
    let mut birth = vec![0.0; num_clusters];
    let mut size = vec![0usize; num_clusters];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); num_clusters];
    size[0] = n;
    for r in rows.iter().filter(|r| r.child >= n) {
        let c = r.child - n;
        parent[c] = Some(r.parent - n);
        birth[c] = r.lambda;
        size[c] = r.size;
        children[r.parent - n].push(c);
    }
    let mut stability = vec![0.0; num_clusters];
    for r in rows {
        let p = r.parent - n;
        stability[p] += (r.lambda - birth[p]) * r.size as f64;
    }
    let raw_stability = stability.clone();

    let first = if allow_single_cluster { 0 } else { 1 };
    let mut is_cluster = vec![false; num_clusters];
    is_cluster[first..].fill(true);
    // children always carry larger ids than their parent
    for c in (first..num_clusters).rev() {
        let child_sum: f64 = children[c].iter().map(|&k| stability[k]).sum();
        if !children[c].is_empty() && child_sum > stability[c] {
            is_cluster[c] = false;
            stability[c] = child_sum;
        } else {
            let mut stack = children[c].clone();
            while let Some(d) = stack.pop() {
                is_cluster[d] = false;
                stack.extend_from_slice(&children[d]);
            }
        }
    }
    Selection {
        parent,
        birth,
        stability: raw_stability,
        size,
        is_cluster,
    }
}

fn label_points(
    n: usize,
    rows: &[CondensedRow],
    sel: &Selection,
) -> (ClusterResult, Vec<Option<usize>>) {
    let num_clusters = sel.is_cluster.len();
    let mut max_lambda = vec![0.0f64; num_clusters];
    for r in rows {
        let p = r.parent - n;
        max_lambda[p] = max_lambda[p].max(r.lambda);
    }

    // selected ancestor of every cluster (or None)
    let mut owner: Vec<Option<usize>> = vec![None; num_clusters];
    for (c, slot) in owner.iter_mut().enumerate() {
        let mut cur = Some(c);
        while let Some(k) = cur {
            if sel.is_cluster[k] {
                *slot = Some(k);
                break;
            }
            cur = sel.parent[k];
        }
    }

    let mut point_row: Vec<Option<(usize, f64)>> = vec![None; n];
    for r in rows.iter().filter(|r| r.child < n) {
        point_row[r.child] = Some((r.parent - n, r.lambda));
    }

    let mut label_of_cluster: Vec<Option<usize>> = vec![None; num_clusters];
    let mut next_label = 0;
    let mut labels = vec![None; n];
    let mut membership = vec![0.0; n];
    for p in 0..n {
        let Some((c, lambda)) = point_row[p] else {
            continue;
        };
        let Some(sc) = owner[c] else { continue };
        let label = *label_of_cluster[sc].get_or_insert_with(|| {
            next_label += 1;
            next_label - 1
        });
        labels[p] = Some(label);
        let ml = max_lambda[sc];
        membership[p] = if ml > 0.0 && ml.is_finite() {
            (lambda.min(ml) / ml).clamp(0.0, 1.0)
        } else {
            1.0
        };
    }
    let result = ClusterResult {
        labels,
        membership,
        num_classes: next_label,
    };
    (result, label_of_cluster)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_blob(center: &[f64], count: usize, spacing: f64) -> Vec<Vec<f64>> {
        // deterministic jitter without an RNG
        (0..count)
            .map(|k| {
                center
                    .iter()
                    .enumerate()
                    .map(|(d, c)| {
                        let phase = (k * 7 + d * 13) % 11;
                        c + spacing * (phase as f64 - 5.0) / 5.0
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn class_members_by_label() {
        let r = ClusterResult::new(
            vec![Some(0), Some(1), Some(0), None],
            vec![1.0, 1.0, 0.5, 0.0],
        )
        .unwrap();
        assert_eq!(r.num_classes, 2);
        assert_eq!(r.class_members(0).unwrap(), vec![0, 2]);
        assert_eq!(r.class_members(1).unwrap(), vec![1]);
        assert!(r.class_members(2).is_err());
    }

    #[test]
    fn too_few_points_are_all_noise() {
        let rows = grid_blob(&[0.0, 0.0], 10, 0.01);
        let r = hdbscan(&FeatureMatrix::new(rows).unwrap(), 15).unwrap();
        assert!(r.labels.iter().all(Option::is_none));
        assert!(r.membership.iter().all(|&m| m == 0.0));
        assert_eq!(r.num_classes, 0);
    }

    #[test]
    fn two_separated_groups() {
        let mut rows = grid_blob(&[0.0, 0.0], 20, 0.1);
        rows.extend(grid_blob(&[10.0, 10.0], 20, 0.1));
        let r = hdbscan(&FeatureMatrix::new(rows).unwrap(), 5).unwrap();
        assert_eq!(r.num_classes, 2);
        assert!(r.labels[..20].iter().all(|l| *l == Some(0)));
        assert!(r.labels[20..].iter().all(|l| *l == Some(1)));
    }

    #[test]
    fn exact_duplicates_form_one_cluster_each() {
        let mut rows = vec![vec![1.0, 2.0]; 12];
        rows.extend(vec![vec![5.0, -1.0]; 12]);
        let r = hdbscan(&FeatureMatrix::new(rows).unwrap(), 3).unwrap();
        assert_eq!(r.num_classes, 2);
        assert_eq!(r.noise_count(), 0);
        assert!(r.membership.iter().all(|&m| m == 1.0));
    }

    #[test]
    fn single_group_needs_allow_single_cluster() {
        let rows = vec![vec![0.5; 3]; 10];
        let fm = FeatureMatrix::new(rows).unwrap();
        assert_eq!(hdbscan(&fm, 3).unwrap().num_classes, 0);
        let params = HdbscanParams {
            min_cluster_size: 3,
            allow_single_cluster: true,
        };
        let (r, tree) = hdbscan_with(&fm, params).unwrap();
        assert_eq!(r.num_classes, 1);
        assert!(tree.clusters[0].selected);
    }

    #[test]
    fn packed_distance_indexing() {
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 * i as f64]).collect();
        let fm = FeatureMatrix::new(rows).unwrap();
        let d = PairwiseDistances::new(&fm);
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(d.get(i, j), fm.distance(i, j));
            }
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let fm = FeatureMatrix::new(vec![vec![0.0]; 4]).unwrap();
        assert!(hdbscan(&fm, 1).is_err());
        assert!(FeatureMatrix::new(vec![vec![0.0], vec![0.0, 1.0]]).is_err());
        assert!(FeatureMatrix::new(vec![vec![f64::NAN]]).is_err());
        assert!(hdbscan(&FeatureMatrix::new(Vec::new()).unwrap(), 3).is_err());
    }

    #[test]
    fn default_min_cluster_size_floor() {
        assert_eq!(default_min_cluster_size(10), 3);
        assert_eq!(default_min_cluster_size(1710), 85);
    }
}
