//! Per-class model fitting and dual-view inference.
//!
//! Each class keeps a global mean direction and a topology of
//! sub-prototypes. The class score for a query `x` is
//! `alpha * cos(x, mean) + (1 - alpha) * max_v cos(x, v)`; `alpha = 1`
//! reduces to the nearest-class-mean rule.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::cluster::{cluster_centers, cut_to_k, upgma_cosine_linkage};
use crate::error::{Error, Result};
use crate::feature_set::FeatureSet;
use crate::geometry::{check_dims, dot, normalize, RawVector, UnitVector};
use crate::topology::{init_from_centers, refine, ClassTopology, SoinnParams};
use crate::ClassId;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    /// Weight of the global-mean term.
    pub alpha: f64,
    pub k_init: usize,
    pub soinn: SoinnParams,
    /// Drift-tracking momentum used by alignment.
    pub lambda: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            k_init: 60,
            soinn: SoinnParams::default(),
            lambda: 0.999,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidParameter(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::InvalidParameter(format!("lambda {} outside (0, 1]", self.lambda)));
        }
        if self.k_init < 1 {
            return Err(Error::InvalidParameter("k_init must be at least 1".into()));
        }
        self.soinn.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassModel {
    pub class_id: ClassId,
    pub topology: ClassTopology,
    pub mean_unit: UnitVector,
    pub mean_raw: RawVector,
}

/// Per-class scores keyed by class id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreVector(pub BTreeMap<ClassId, f64>);

impl ScoreVector {
    pub fn get(&self, class_id: ClassId) -> Option<f64> {
        self.0.get(&class_id).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Highest-scoring class; ties go to the lowest class id.
    pub fn argmax(&self) -> Option<ClassId> {
        let mut best: Option<(ClassId, f64)> = None;
        for (&c, &s) in &self.0 {
            if best.is_none_or(|(_, bs)| s > bs) {
                best = Some((c, s));
            }
        }
        best.map(|(c, _)| c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierState {
    pub classes: BTreeMap<ClassId, ClassModel>,
    pub config: ClassifierConfig,
    pub dimension: usize,
}

impl ClassifierState {
    pub fn new(config: ClassifierConfig, dimension: usize) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            classes: BTreeMap::new(),
            config,
            dimension,
        })
    }

    /// Adds a fitted model. Class ids must be new.
    pub fn insert(&mut self, model: ClassModel) -> Result<()> {
        check_dims(self.dimension, model.mean_unit.dim())?;
        if self.classes.contains_key(&model.class_id) {
            return Err(Error::InvalidParameter(format!(
                "class {} is already present",
                model.class_id
            )));
        }
        self.classes.insert(model.class_id, model);
        Ok(())
    }

    /// Fits several classes in parallel and inserts them in class-id order.
    pub fn fit_classes(&mut self, classes: &[(ClassId, FeatureSet)]) -> Result<()> {
        let config = &self.config;
        let models: Vec<Result<ClassModel>> = classes
            .par_iter()
            .map(|(id, z)| fit_class(*id, z, config))
            .collect();
        for m in models {
            self.insert(m?)?;
        }
        Ok(())
    }

    fn check_query(&self, x: &UnitVector) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::EmptyState);
        }
        check_dims(self.dimension, x.dim())
    }
}

/// Fits one class: normalized mean, UPGMA initialization cut to `k_init`
/// clusters, then SOINN refinement over the same features.
pub fn fit_class(class_id: ClassId, z: &FeatureSet, config: &ClassifierConfig) -> Result<ClassModel> {
    config.validate()?;
    if z.is_empty() {
        return Err(Error::EmptyInput("class features"));
    }
    let mean_raw = RawVector::from_vec_unchecked(z.mean());
    let mean_unit = normalize(&mean_raw)?;

    let dendrogram = upgma_cosine_linkage(z)?;
    let assignment = cut_to_k(&dendrogram, config.k_init)?;
    let centers = cluster_centers(&assignment, z)?;
    let mut topology = init_from_centers(&centers)?;
    let soinn = SoinnParams {
        rng_seed: config.soinn.rng_seed ^ u64::from(class_id).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        ..config.soinn.clone()
    };
    refine(&mut topology, z, &soinn)?;

    Ok(ClassModel {
        class_id,
        topology,
        mean_unit,
        mean_raw,
    })
}

/// Cosine to each class mean.
pub fn ncm_score(x: &UnitVector, state: &ClassifierState) -> Result<ScoreVector> {
    state.check_query(x)?;
    Ok(ScoreVector(
        state
            .classes
            .iter()
            .map(|(&c, m)| (c, dot(x.as_slice(), m.mean_unit.as_slice()).clamp(-1.0, 1.0)))
            .collect(),
    ))
}

/// Blend of global-mean cosine and best sub-prototype cosine per class.
pub fn dual_view_score(x: &UnitVector, state: &ClassifierState) -> Result<ScoreVector> {
    dual_view_score_with(x, state, state.config.alpha)
}

/// [`dual_view_score`] with an explicit balance factor.
pub fn dual_view_score_with(x: &UnitVector, state: &ClassifierState, alpha: f64) -> Result<ScoreVector> {
    state.check_query(x)?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!("alpha {alpha} outside [0, 1]")));
    }
    Ok(ScoreVector(
        state
            .classes
            .iter()
            .map(|(&c, m)| {
                let global = dot(x.as_slice(), m.mean_unit.as_slice()).clamp(-1.0, 1.0);
                let local = m.topology.max_cosine(x);
                (c, alpha * global + (1.0 - alpha) * local)
            })
            .collect(),
    ))
}

/// Class with the highest dual-view score; ties go to the lowest id.
pub fn predict(x: &UnitVector, state: &ClassifierState) -> Result<ClassId> {
    Ok(dual_view_score(x, state)?.argmax().expect("state is nonempty"))
}

/// Per-class convex combination `(1 - w) * hc + w * ext`.
pub fn fuse_scores(s_hc: &ScoreVector, s_ext: &ScoreVector, w: f64) -> Result<ScoreVector> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::InvalidParameter(format!("fusion weight {w} outside [0, 1]")));
    }
    if s_hc.0.len() != s_ext.0.len() || s_hc.0.keys().zip(s_ext.0.keys()).any(|(a, b)| a != b) {
        return Err(Error::ClassSetMismatch);
    }
    Ok(ScoreVector(
        s_hc.0
            .iter()
            .zip(s_ext.0.values())
            .map(|((&c, &h), &e)| (c, (1.0 - w) * h + w * e))
            .collect(),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeStats {
    pub avg_nodes_per_class: f64,
    pub per_class: BTreeMap<ClassId, usize>,
}

pub fn node_stats(state: &ClassifierState) -> Result<NodeStats> {
    if state.classes.is_empty() {
        return Err(Error::EmptyState);
    }
    let per_class: BTreeMap<ClassId, usize> = state
        .classes
        .iter()
        .map(|(&c, m)| (c, m.topology.node_count()))
        .collect();
    let avg = per_class.values().sum::<usize>() as f64 / per_class.len() as f64;
    Ok(NodeStats {
        avg_nodes_per_class: avg,
        per_class,
    })
}
