//! Topology-aware prototype classification for class-incremental learning
//! on the unit hypersphere.
//!
//! Each class is represented by its mean direction plus a small graph of
//! sub-prototypes, built by average-linkage clustering and refined with a
//! spherical SOINN pass. Old-class graphs follow backbone drift through
//! per-node anchor samples with exponentially smoothed residuals.

pub mod classifier;
pub mod cluster;
pub mod drift;
pub mod error;
pub mod feature_set;
pub mod geometry;
pub mod harness;
pub mod io;
pub mod star;
pub mod synth;
pub mod topology;

pub type ClassId = u32;
pub type NodeId = u32;
pub type SampleId = u64;

pub use classifier::{
    dual_view_score, fit_class, fuse_scores, ncm_score, node_stats, predict, ClassModel, ClassifierConfig,
    ClassifierState, NodeStats, ScoreVector,
};
pub use error::{Error, Result};
pub use feature_set::{FeatureSet, Sample};
pub use geometry::{cosine_sim, geodesic_angle, normalize, slerp, RawVector, UnitVector};
pub use star::{align_all, align_class, select_anchors, Anchor, AnchorStore, FeatureExtractor};
pub use topology::{ClassTopology, SoinnParams, TopoNode};
