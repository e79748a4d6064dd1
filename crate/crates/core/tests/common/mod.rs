#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use topo_proto::{FeatureSet, SampleId, UnitVector};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn unit(rng: &mut ChaCha8Rng, dim: usize) -> UnitVector {
    loop {
        let v = gaussian_vec(rng, dim);
        if let Ok(u) = UnitVector::from_raw(&v) {
            return u;
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn random_set(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> FeatureSet {
    FeatureSet::from_vectors((0..n).map(|_| unit(rng, dim)).collect()).unwrap()
}

/// Naive average linkage: every step rescans all cluster pairs and averages
/// the raw pairwise cosine distances between their members.
/// Returns `(min id, max id, distance)` per merge.
pub fn upgma_oracle(z: &FeatureSet) -> Vec<(usize, usize, f64)> {
    let rows = z.rows();
    let n = rows.len();
    let d = |i: usize, j: usize| 1.0 - dot(rows[i].vector.as_slice(), rows[j].vector.as_slice()).clamp(-1.0, 1.0);
    let mut clusters: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![i])).collect();
    let mut out = Vec::new();
    for step in 0..n.saturating_sub(1) {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in (a + 1)..clusters.len() {
                let (ia, ma) = &clusters[a];
                let (ib, mb) = &clusters[b];
                let total: f64 = ma.iter().flat_map(|&i| mb.iter().map(move |&j| d(i, j))).sum();
                let avg = total / (ma.len() * mb.len()) as f64;
                let key = ((*ia).min(*ib), (*ia).max(*ib));
                let better = match best {
                    None => true,
                    Some((bd, lo, hi, _, _)) => {
                        (avg - bd).abs() > 1e-12 && avg < bd || ((avg - bd).abs() <= 1e-12 && key < (lo, hi))
                    }
                };
                if better {
                    best = Some((avg, key.0, key.1, a, b));
                }
            }
        }
        let (avg, lo, hi, a, b) = best.unwrap();
        out.push((lo, hi, avg));
        let mut merged = clusters[a].1.clone();
        merged.extend(clusters[b].1.iter().copied());
        clusters.remove(b);
        clusters[a] = (n + step, merged);
    }
    out
}

/// Flat partition after applying the first `n - k` oracle merges, as
/// sorted member lists sorted by first member.
pub fn oracle_cut(z: &FeatureSet, k: usize) -> Vec<Vec<SampleId>> {
    let n = z.len();
    let merges = upgma_oracle(z);
    let mut groups: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![i])).collect();
    for (step, (lo, hi, _)) in merges.iter().take(n.saturating_sub(k)).enumerate() {
        let a = groups.iter().position(|g| g.0 == *lo).unwrap();
        let mut members = groups[a].1.clone();
        let b = groups.iter().position(|g| g.0 == *hi).unwrap();
        members.extend(groups[b].1.iter().copied());
        groups.retain(|g| g.0 != *lo && g.0 != *hi);
        groups.push((n + step, members));
    }
    let mut out: Vec<Vec<SampleId>> = groups
        .into_iter()
        .map(|(_, m)| {
            let mut ids: Vec<SampleId> = m.into_iter().map(|i| z.rows()[i].id).collect();
            ids.sort_unstable();
            ids
        })
        .collect();
    out.sort();
    out
}

fn standardized(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let d = rows[0].len();
    let mut m = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    for j in 0..d {
        let mean = (0..n).map(|i| m[(i, j)]).sum::<f64>() / n as f64;
        for i in 0..n {
            m[(i, j)] -= mean;
        }
    }
    let norm = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    m / norm
}

/// Procrustes distance from the spectrum of `M^T M` with `M = A^T B`:
/// the optimal orthogonal fit leaves `2 - 2 * sum sqrt(eig)`.
pub fn procrustes_oracle(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let a = standardized(a);
    let b = standardized(b);
    let m = a.transpose() * b;
    let eig = SymmetricEigen::new(m.transpose() * &m);
    let nuclear: f64 = eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).sum();
    (2.0 - 2.0 * nuclear).max(0.0).sqrt()
}

/// Random orthogonal matrix, possibly with a reflection.
pub fn random_orthogonal(rng: &mut ChaCha8Rng, dim: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    g.qr().q()
}
