//! Agglomerative clustering with average linkage (UPGMA) under cosine
//! distance. Produces the initial node set for a class topology.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::feature_set::FeatureSet;
use crate::geometry::{dot, normalize_slice, UnitVector, DEFAULT_EPS_NORM};
use crate::SampleId;

/// One agglomeration step. Leaves are clusters `0..leaf_count` in row
/// order; the cluster created by step `s` has id `leaf_count + s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub distance: f64,
    pub new_id: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    pub merges: Vec<Merge>,
    pub leaf_ids: Vec<SampleId>,
}

impl Dendrogram {
    pub fn leaf_count(&self) -> usize {
        self.leaf_ids.len()
    }
}

/// Partition of the samples of a [`FeatureSet`] into `k` nonempty clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub labels: BTreeMap<SampleId, usize>,
    pub k: usize,
}

impl ClusterAssignment {
    /// Sample ids per cluster, in ascending cluster index.
    pub fn members(&self) -> Vec<Vec<SampleId>> {
        let mut out = vec![Vec::new(); self.k];
        for (&id, &c) in &self.labels {
            out[c].push(id);
        }
        out
    }
}

pub fn cosine_distance(a: &UnitVector, b: &UnitVector) -> f64 {
    1.0 - dot(a.as_slice(), b.as_slice()).clamp(-1.0, 1.0)
}

/// Builds the full UPGMA merge tree. Inter-cluster distances are kept
/// exact with the Lance-Williams average update
/// `d(k, i+j) = (n_i d(k,i) + n_j d(k,j)) / (n_i + n_j)`.
///
/// When several pairs share the minimal distance, the pair with the
/// lexicographically smallest `(min id, max id)` is merged.
pub fn upgma_cosine_linkage(z: &FeatureSet) -> Result<Dendrogram> {
    let n = z.len();
    if n == 0 {
        return Err(Error::EmptyInput("feature set"));
    }
    let rows = z.rows();
    let mut dist = vec![0.0f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = cosine_distance(&rows[i].vector, &rows[j].vector);
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }

    // slot -> (cluster id, size); `None` once absorbed.
    let mut slots: Vec<Option<(usize, usize)>> = (0..n).map(|i| Some((i, 1))).collect();
    let mut active: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));

    for step in 0..n.saturating_sub(1) {
        let mut best: Option<(f64, (usize, usize), usize, usize)> = None;
        for (ai, &a) in active.iter().enumerate() {
            let id_a = slots[a].unwrap().0;
            for &b in &active[ai + 1..] {
                let id_b = slots[b].unwrap().0;
                let d = dist[a * n + b];
                let key = (id_a.min(id_b), id_a.max(id_b));
                let better = match best {
                    None => true,
                    Some((bd, bkey, _, _)) => d < bd || (d == bd && key < bkey),
                };
                if better {
                    best = Some((d, key, a, b));
                }
            }
        }
        let (d, (left, right), a, b) = best.expect("at least two active clusters");
        let (_, size_a) = slots[a].unwrap();
        let (_, size_b) = slots[b].unwrap();
        let new_id = n + step;
        merges.push(Merge {
            left,
            right,
            distance: d.clamp(0.0, 2.0),
            new_id,
        });

        let (wa, wb) = (size_a as f64, size_b as f64);
        for &k in &active {
            if k == a || k == b {
                continue;
            }
            let nd = (wa * dist[k * n + a] + wb * dist[k * n + b]) / (wa + wb);
            dist[k * n + a] = nd;
            dist[a * n + k] = nd;
        }
        slots[a] = Some((new_id, size_a + size_b));
        slots[b] = None;
        active.retain(|&s| s != b);
    }

    Ok(Dendrogram {
        merges,
        leaf_ids: rows.iter().map(|s| s.id).collect(),
    })
}

/// Cuts the tree into `k_init` clusters by undoing the last `k_init - 1`
/// merges. With no more leaves than `k_init`, every leaf is its own cluster.
/// Cluster indices follow the position of each cluster's first leaf.
pub fn cut_to_k(dendrogram: &Dendrogram, k_init: usize) -> Result<ClusterAssignment> {
    if k_init == 0 {
        return Err(Error::InvalidParameter("k_init must be at least 1".into()));
    }
    let n = dendrogram.leaf_count();
    let applied = n.saturating_sub(k_init);

    let mut parent: Vec<usize> = (0..(2 * n).max(1)).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for m in &dendrogram.merges[..applied] {
        let l = find(&mut parent, m.left);
        let r = find(&mut parent, m.right);
        parent[l] = m.new_id;
        parent[r] = m.new_id;
    }

    let mut index_of_root: BTreeMap<usize, usize> = BTreeMap::new();
    let mut labels = BTreeMap::new();
    for (leaf, &id) in dendrogram.leaf_ids.iter().enumerate() {
        let root = find(&mut parent, leaf);
        let next = index_of_root.len();
        let c = *index_of_root.entry(root).or_insert(next);
        labels.insert(id, c);
    }
    Ok(ClusterAssignment {
        labels,
        k: index_of_root.len(),
    })
}

/// Normalized member mean of each cluster, in ascending cluster index.
pub fn cluster_centers(assignment: &ClusterAssignment, z: &FeatureSet) -> Result<Vec<UnitVector>> {
    let dim = z.dim();
    let mut sums = vec![vec![0.0; dim]; assignment.k];
    let mut counts = vec![0usize; assignment.k];
    for s in z.rows() {
        let c = *assignment.labels.get(&s.id).ok_or_else(|| {
            Error::InvalidParameter(format!("sample {} has no cluster label", s.id))
        })?;
        for (acc, x) in sums[c].iter_mut().zip(s.vector.as_slice()) {
            *acc += x;
        }
        counts[c] += 1;
    }
    sums.iter_mut()
        .zip(&counts)
        .map(|(sum, &count)| {
            if count == 0 {
                return Err(Error::EmptyInput("cluster"));
            }
            sum.iter_mut().for_each(|x| *x /= count as f64);
            normalize_slice(sum, DEFAULT_EPS_NORM)
        })
        .collect()
}
