//! Residual drift alignment. Every topology node is paired with one stored
//! anchor sample. At a task boundary each anchor is re-embedded, its drift
//! against the stored reference is smoothed with an exponential moving
//! average, and the smoothed drift transports the node's raw coordinates.
//! The class mean moves by the average smoothed drift of its nodes.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::classifier::{ClassModel, ClassifierState};
use crate::error::{Error, Result};
use crate::feature_set::FeatureSet;
use crate::geometry::{check_dims, dot, normalize, RawVector};
use crate::{ClassId, NodeId, SampleId};

/// Anything that can re-embed a stored sample with the current backbone.
pub trait FeatureExtractor: Sync {
    fn embed(&self, sample: SampleId) -> Result<RawVector>;
}

impl<F> FeatureExtractor for F
where
    F: Fn(SampleId) -> Result<RawVector> + Sync,
{
    fn embed(&self, sample: SampleId) -> Result<RawVector> {
        self(sample)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Anchor {
    pub node_id: NodeId,
    pub sample_ref: SampleId,
    pub h_ref: RawVector,
    /// Smoothed drift, persisted across rounds.
    pub delta: RawVector,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnchorStore {
    pub per_class: BTreeMap<ClassId, BTreeMap<NodeId, Anchor>>,
}

impl AnchorStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_class(&mut self, class_id: ClassId, anchors: BTreeMap<NodeId, Anchor>) {
        self.per_class.insert(class_id, anchors);
    }

    pub fn is_empty(&self) -> bool {
        self.per_class.is_empty()
    }

    /// Every sample id referenced by any anchor.
    pub fn sample_refs(&self) -> Vec<SampleId> {
        let mut ids: Vec<SampleId> = self
            .per_class
            .values()
            .flat_map(|m| m.values().map(|a| a.sample_ref))
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

/// For each node, the training sample with the largest cosine to it
/// (ties: lowest sample id). A sample may anchor several nodes.
pub fn select_anchors(model: &ClassModel, z: &FeatureSet) -> Result<BTreeMap<NodeId, Anchor>> {
    if z.is_empty() {
        return Err(Error::EmptyInput("class features"));
    }
    check_dims(model.mean_unit.dim(), z.dim())?;
    let dim = z.dim();
    Ok(model
        .topology
        .nodes()
        .map(|node| {
            let mut best: Option<(f64, SampleId, &[f64])> = None;
            for s in z.rows() {
                let c = dot(node.unit.as_slice(), s.vector.as_slice());
                let better = match best {
                    None => true,
                    Some((bc, bid, _)) => c > bc || (c == bc && s.id < bid),
                };
                if better {
                    best = Some((c, s.id, s.vector.as_slice()));
                }
            }
            let (_, sample_ref, h) = best.expect("nonempty feature set");
            (
                node.id,
                Anchor {
                    node_id: node.id,
                    sample_ref,
                    h_ref: RawVector::from_vec_unchecked(h.to_vec()),
                    delta: RawVector::zeros(dim),
                },
            )
        })
        .collect())
}

/// Outcome of aligning one class.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AlignReport {
    pub class_id: ClassId,
    pub nodes_moved: usize,
    /// Nodes whose transported raw vector vanished; they keep their
    /// previous coordinates.
    pub skipped_nodes: Vec<NodeId>,
    pub mean_skipped: bool,
}

/// Aligns one class against the current extractor. Per node:
/// `d = embed(x) - h_ref`, `delta = (1 - lambda) delta + lambda d`,
/// `raw += delta`, `unit = normalize(raw)`, `h_ref = embed(x)`. Then
/// `mean_raw += mean(delta)` and the mean direction is renormalized.
pub fn align_class(
    class_id: ClassId,
    state: &mut ClassifierState,
    store: &mut AnchorStore,
    extractor: &dyn FeatureExtractor,
    lambda: f64,
) -> Result<AlignReport> {
    let model = state.classes.get_mut(&class_id).ok_or(Error::MissingClass(class_id))?;
    let anchors = store.per_class.get_mut(&class_id).ok_or(Error::MissingClass(class_id))?;
    align_model(model, anchors, extractor, lambda)
}

fn align_model(
    model: &mut ClassModel,
    anchors: &mut BTreeMap<NodeId, Anchor>,
    extractor: &dyn FeatureExtractor,
    lambda: f64,
) -> Result<AlignReport> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::InvalidParameter(format!("lambda {lambda} outside (0, 1]")));
    }
    let dim = model.mean_unit.dim();
    let mut report = AlignReport {
        class_id: model.class_id,
        ..Default::default()
    };
    let mut drift_sum = vec![0.0; dim];
    let mut tracked = 0usize;

    for node_id in model.topology.node_ids() {
        let anchor = anchors.get_mut(&node_id).ok_or_else(|| {
            Error::InvalidParameter(format!(
                "class {} node {node_id} has no anchor",
                model.class_id
            ))
        })?;
        let current = extractor.embed(anchor.sample_ref)?;
        check_dims(dim, current.dim())?;

        for ((d, h), r) in anchor
            .delta
            .as_mut_slice()
            .iter_mut()
            .zip(current.as_slice())
            .zip(anchor.h_ref.as_slice())
        {
            *d = (1.0 - lambda) * *d + lambda * (h - r);
        }

        let node = model.topology.node_mut(node_id).expect("node listed");
        if anchor.delta.as_slice().iter().all(|&d| d == 0.0) {
            anchor.h_ref = current;
            tracked += 1;
            continue;
        }
        let moved: Vec<f64> = node
            .raw
            .as_slice()
            .iter()
            .zip(anchor.delta.as_slice())
            .map(|(r, d)| r + d)
            .collect();
        let moved = RawVector::from_vec_unchecked(moved);
        match normalize(&moved) {
            Ok(unit) => {
                node.raw = moved;
                node.unit = unit;
                report.nodes_moved += 1;
            }
            Err(Error::ZeroNorm { .. }) => report.skipped_nodes.push(node_id),
            Err(e) => return Err(e),
        }
        anchor.h_ref = current;

        for (acc, d) in drift_sum.iter_mut().zip(anchor.delta.as_slice()) {
            *acc += d;
        }
        tracked += 1;
    }

    if tracked > 0 && drift_sum.iter().any(|&d| d != 0.0) {
        let k = tracked as f64;
        let moved: Vec<f64> = model
            .mean_raw
            .as_slice()
            .iter()
            .zip(&drift_sum)
            .map(|(m, s)| m + s / k)
            .collect();
        let moved = RawVector::from_vec_unchecked(moved);
        match normalize(&moved) {
            Ok(unit) => {
                model.mean_raw = moved;
                model.mean_unit = unit;
            }
            Err(Error::ZeroNorm { .. }) => report.mean_skipped = true,
            Err(e) => return Err(e),
        }
    }
    Ok(report)
}

/// Aligns every class tracked in `store`, in parallel. Classes are
/// independent; all per-class failures are collected.
pub fn align_all(
    state: &mut ClassifierState,
    store: &mut AnchorStore,
    extractor: &dyn FeatureExtractor,
    lambda: f64,
) -> std::result::Result<Vec<AlignReport>, Vec<(ClassId, Error)>> {
    let mut missing = Vec::new();
    let mut jobs = Vec::new();
    let mut models: BTreeMap<ClassId, &mut ClassModel> = state.classes.iter_mut().map(|(&c, m)| (c, m)).collect();
    for (&class_id, anchors) in store.per_class.iter_mut() {
        match models.remove(&class_id) {
            Some(model) => jobs.push((model, anchors)),
            None => missing.push((class_id, Error::MissingClass(class_id))),
        }
    }
    let results: Vec<(ClassId, Result<AlignReport>)> = jobs
        .into_par_iter()
        .map(|(model, anchors)| (model.class_id, align_model(model, anchors, extractor, lambda)))
        .collect();

    let mut reports = Vec::new();
    let mut errors = missing;
    for (c, r) in results {
        match r {
            Ok(rep) => reports.push(rep),
            Err(e) => errors.push((c, e)),
        }
    }
    if errors.is_empty() {
        Ok(reports)
    } else {
        errors.sort_by_key(|(c, _)| *c);
        Err(errors)
    }
}
