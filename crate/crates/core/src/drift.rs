//! Deformation diagnostics: full Procrustes distance between two
//! embeddings of the same samples, and the global/local radii that bound
//! drift error for a fitted class.

use std::collections::{BTreeMap, HashSet};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::classifier::ClassModel;
use crate::error::{Error, Result};
use crate::feature_set::FeatureSet;
use crate::geometry::{check_dims, dot, euclidean, RawVector};
use crate::{ClassId, NodeId, SampleId};

/// Rows of raw features keyed by sample id.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: Vec<(SampleId, RawVector)>,
    dim: usize,
}

impl FeatureMatrix {
    pub fn new(rows: Vec<(SampleId, RawVector)>) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "feature matrix needs at least 2 rows, got {}",
                rows.len()
            )));
        }
        let dim = rows[0].1.dim();
        let mut seen = HashSet::with_capacity(rows.len());
        for (id, v) in &rows {
            check_dims(dim, v.dim())?;
            if !seen.insert(*id) {
                return Err(Error::InvalidParameter(format!("duplicate sample id {id}")));
            }
        }
        Ok(Self { rows, dim })
    }

    pub fn from_feature_set(z: &FeatureSet) -> Result<Self> {
        Self::new(z.rows().iter().map(|s| (s.id, RawVector::from(&s.vector))).collect())
    }

    pub fn rows(&self) -> &[(SampleId, RawVector)] {
        &self.rows
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Rows sorted by sample id as an `n x d` matrix.
    fn sorted_matrix(&self) -> (Vec<SampleId>, DMatrix<f64>) {
        let mut order: Vec<&(SampleId, RawVector)> = self.rows.iter().collect();
        order.sort_by_key(|(id, _)| *id);
        let ids = order.iter().map(|(id, _)| *id).collect();
        let m = DMatrix::from_fn(order.len(), self.dim, |i, j| order[i].1.as_slice()[j]);
        (ids, m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcrustesResult {
    pub distance: f64,
    /// Orthogonal map taking the normalized first configuration onto the
    /// second.
    pub rotation: DMatrix<f64>,
}

/// Centers columns and scales to unit Frobenius norm.
pub(crate) fn standardize(mut m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows() as f64;
    for mut col in m.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
    }
    let norm = m.norm();
    if norm.is_nan() || norm <= 1e-12 {
        return Err(Error::DegenerateMatrix);
    }
    Ok(m / norm)
}

/// Full Procrustes distance: both configurations centered and scaled to
/// unit norm, then the best orthogonal map (rotation or reflection) from
/// the SVD of the cross-covariance aligns the first onto the second. The
/// distance is the Frobenius norm of what is left, in `[0, sqrt 2]`.
pub fn procrustes_distance(h1: &FeatureMatrix, h2: &FeatureMatrix) -> Result<ProcrustesResult> {
    check_dims(h1.dim(), h2.dim())?;
    let (ids1, a) = h1.sorted_matrix();
    let (ids2, b) = h2.sorted_matrix();
    if ids1 != ids2 {
        return Err(Error::SampleMismatch);
    }
    let a = standardize(a)?;
    let b = standardize(b)?;
    if a == b {
        let d = a.ncols();
        return Ok(ProcrustesResult {
            distance: 0.0,
            rotation: DMatrix::identity(d, d),
        });
    }

    let cross = a.transpose() * &b;
    let svd = cross.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let rotation = u * v_t;
    let residual = &a * &rotation - &b;
    Ok(ProcrustesResult {
        distance: residual.norm().min(std::f64::consts::SQRT_2),
        rotation,
    })
}

/// Mean Procrustes distance over the listed classes.
pub fn average_procrustes(
    class_ids: &[ClassId],
    h_ref: &BTreeMap<ClassId, FeatureMatrix>,
    h_cur: &BTreeMap<ClassId, FeatureMatrix>,
) -> Result<f64> {
    if class_ids.is_empty() {
        return Err(Error::EmptyInput("class list"));
    }
    let distances: Vec<Result<f64>> = class_ids
        .par_iter()
        .map(|c| {
            let r = h_ref.get(c).ok_or(Error::MissingClass(*c))?;
            let t = h_cur.get(c).ok_or(Error::MissingClass(*c))?;
            Ok(procrustes_distance(r, t)?.distance)
        })
        .collect();
    let mut total = 0.0;
    for d in distances {
        total += d?;
    }
    Ok(total / class_ids.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadiusReport {
    /// Largest sample distance to the class mean direction.
    pub global_radius: f64,
    /// Largest sample distance to its nearest (by cosine) node.
    pub local_radius: f64,
    pub per_node_radii: Vec<(NodeId, f64)>,
}

impl RadiusReport {
    pub fn ratio(&self) -> f64 {
        if self.global_radius > 0.0 {
            self.local_radius / self.global_radius
        } else {
            0.0
        }
    }
}

/// Nearest node by cosine similarity; ties go to the lowest id.
pub fn nearest_node(model: &ClassModel, x: &[f64]) -> NodeId {
    let mut best: Option<(f64, NodeId)> = None;
    for n in model.topology.nodes() {
        let c = dot(n.unit.as_slice(), x);
        if best.is_none_or(|(bc, _)| c > bc) {
            best = Some((c, n.id));
        }
    }
    best.expect("topology is nonempty").1
}

/// Euclidean radii of a class. Samples are assigned to nodes by cosine.
pub fn manifold_radii(z: &FeatureSet, model: &ClassModel) -> Result<RadiusReport> {
    if z.is_empty() {
        return Err(Error::EmptyInput("class features"));
    }
    check_dims(model.mean_unit.dim(), z.dim())?;
    let mut global: f64 = 0.0;
    let mut per_node: BTreeMap<NodeId, f64> = model.topology.node_ids().into_iter().map(|id| (id, 0.0)).collect();
    for s in z.rows() {
        let x = s.vector.as_slice();
        global = global.max(euclidean(x, model.mean_unit.as_slice()));
        let k = nearest_node(model, x);
        let node = model.topology.node(k).expect("nearest node exists");
        let r = per_node.get_mut(&k).expect("node tracked");
        *r = r.max(euclidean(x, node.unit.as_slice()));
    }
    let local = per_node.values().copied().fold(0.0, f64::max);
    Ok(RadiusReport {
        global_radius: global,
        local_radius: local,
        per_node_radii: per_node.into_iter().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::UnitVector;
    use crate::topology::init_from_centers;

    fn matrix(rows: &[&[f64]]) -> FeatureMatrix {
        FeatureMatrix::new(
            rows.iter()
                .enumerate()
                .map(|(i, r)| (i as SampleId, RawVector::new(r.to_vec()).unwrap()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn identical_configurations_have_zero_distance() {
        let h = matrix(&[&[1.0, 0.0, 0.5], &[0.0, 1.0, 0.2], &[0.3, 0.3, 1.0]]);
        assert_eq!(procrustes_distance(&h, &h).unwrap().distance, 0.0);
    }

    #[test]
    fn rows_are_matched_by_id() {
        let a = matrix(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]);
        let mut rows = a.rows().to_vec();
        rows.reverse();
        let b = FeatureMatrix::new(rows).unwrap();
        assert!(procrustes_distance(&a, &b).unwrap().distance < 1e-12);
    }

    #[test]
    fn mismatched_ids_fail() {
        let a = matrix(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let b = FeatureMatrix::new(vec![
            (0, RawVector::new(vec![1.0, 0.0]).unwrap()),
            (5, RawVector::new(vec![0.0, 1.0]).unwrap()),
        ])
        .unwrap();
        assert!(matches!(procrustes_distance(&a, &b), Err(Error::SampleMismatch)));
    }

    #[test]
    fn constant_matrix_is_degenerate() {
        let a = matrix(&[&[1.0, 2.0], &[1.0, 2.0]]);
        let b = matrix(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert!(matches!(procrustes_distance(&a, &b), Err(Error::DegenerateMatrix)));
    }

    #[test]
    fn matrix_needs_two_rows() {
        assert!(FeatureMatrix::new(vec![(0, RawVector::new(vec![1.0, 0.0]).unwrap())]).is_err());
    }

    #[test]
    fn average_of_two_classes() {
        // Build two classes whose distances are known by construction:
        // a class compared with itself gives 0.
        let a = matrix(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]);
        let refs: BTreeMap<ClassId, FeatureMatrix> = [(0, a.clone()), (1, a.clone())].into_iter().collect();
        assert_eq!(average_procrustes(&[0, 1], &refs, &refs).unwrap(), 0.0);
        assert!(matches!(
            average_procrustes(&[2], &refs, &refs),
            Err(Error::MissingClass(2))
        ));
    }

    fn model_with(mean: UnitVector, nodes: &[UnitVector]) -> ClassModel {
        ClassModel {
            class_id: 0,
            topology: init_from_centers(nodes).unwrap(),
            mean_raw: RawVector::from(&mean),
            mean_unit: mean,
        }
    }

    #[test]
    fn radii_of_single_sample_at_mean() {
        let mu = UnitVector::from_raw(&[1.0, 2.0, 2.0]).unwrap();
        let z = FeatureSet::from_vectors(vec![mu.clone()]).unwrap();
        let r = manifold_radii(&z, &model_with(mu.clone(), &[mu])).unwrap();
        assert_eq!((r.global_radius, r.local_radius), (0.0, 0.0));
    }

    #[test]
    fn radii_with_nodes_on_samples() {
        let e1 = UnitVector::basis(3, 0);
        let e2 = UnitVector::basis(3, 1);
        let mean = UnitVector::from_raw(&[1.0, 1.0, 0.0]).unwrap();
        let z = FeatureSet::from_vectors(vec![e1.clone(), e2.clone()]).unwrap();
        let r = manifold_radii(&z, &model_with(mean, &[e1, e2])).unwrap();
        assert_eq!(r.local_radius, 0.0);
        assert!(r.global_radius > 0.7);
        assert_eq!(r.ratio(), 0.0);
    }
}
