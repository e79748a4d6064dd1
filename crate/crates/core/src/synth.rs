//! Seeded synthetic class-incremental feature streams on the unit sphere.
//!
//! Classes are drawn as von Mises-Fisher blobs, great-circle "crescents" or
//! two-lobe "dumbbells". A [`DriftMap`] stands in for an evolving backbone:
//! every task re-embeds the pristine latent vectors through its own map.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::feature_set::{FeatureSet, Sample};
use crate::geometry::{dot, normalize_slice, RawVector, UnitVector, DEFAULT_EPS_NORM};
use crate::star::FeatureExtractor;
use crate::{ClassId, SampleId};

/// Seeded ChaCha8 generator on an independent stream.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

/// Uniformly random direction on S^{dim-1}.
pub fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> UnitVector {
    loop {
        let g = gaussian_vec(rng, dim);
        if let Ok(u) = normalize_slice(&g, 1e-8) {
            return u;
        }
    }
}

/// Uniformly random unit vector orthogonal to `mu`.
pub fn random_tangent(rng: &mut ChaCha8Rng, mu: &UnitVector) -> UnitVector {
    loop {
        let mut g = gaussian_vec(rng, mu.dim());
        let proj = dot(&g, mu.as_slice());
        g.iter_mut().zip(mu.as_slice()).for_each(|(x, m)| *x -= proj * m);
        if let Ok(u) = normalize_slice(&g, 1e-8) {
            return u;
        }
    }
}

/// Cosine-to-mean component of a vMF draw (Wood's rejection sampler).
fn sample_vmf_cosine(rng: &mut ChaCha8Rng, kappa: f64, dim: usize) -> f64 {
    let dm1 = (dim - 1) as f64;
    let b = dm1 / (2.0 * kappa + (4.0 * kappa * kappa + dm1 * dm1).sqrt());
    let x0 = (1.0 - b) / (1.0 + b);
    let c = kappa * x0 + dm1 * (1.0 - x0 * x0).ln();
    let beta = Beta::new(dm1 / 2.0, dm1 / 2.0).expect("positive shape");
    loop {
        let z: f64 = beta.sample(rng);
        let w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
        let u: f64 = rng.gen();
        if kappa * w + dm1 * (1.0 - x0 * w).ln() - c >= u.ln() {
            return w.clamp(-1.0, 1.0);
        }
    }
}

fn draw_vmf(rng: &mut ChaCha8Rng, mu: &UnitVector, kappa: f64) -> UnitVector {
    let w = sample_vmf_cosine(rng, kappa, mu.dim());
    let t = random_tangent(rng, mu);
    let s = (1.0 - w * w).max(0.0).sqrt();
    let v: Vec<f64> = mu
        .as_slice()
        .iter()
        .zip(t.as_slice())
        .map(|(m, t)| w * m + s * t)
        .collect();
    normalize_slice(&v, DEFAULT_EPS_NORM).expect("unit combination")
}

/// `n` draws from vMF(mu, kappa); sample ids are `0..n`.
pub fn sample_vmf(mu: &UnitVector, kappa: f64, n: usize, seed: u64) -> Result<FeatureSet> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    if !kappa.is_finite() || kappa < 0.0 {
        return Err(Error::InvalidParameter(format!("kappa {kappa} must be finite and >= 0")));
    }
    let mut rng = rng_for(seed, 0);
    FeatureSet::from_vectors((0..n).map(|_| draw_vmf(&mut rng, mu, kappa)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub enum ManifoldShape {
    Vmf,
    /// Points spread uniformly along a great-circle arc of `arc_angle`
    /// radians centred on the mean direction, blurred by vMF noise.
    Crescent { arc_angle: f64 },
    /// Two vMF lobes `lobe_separation` radians apart on a great circle
    /// through the mean direction.
    Dumbbell { lobe_separation: f64, lobe_weights: (f64, f64) },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldSpec {
    pub shape: ManifoldShape,
    pub mean_direction: UnitVector,
    /// Concentration of the vMF noise around each point of the shape.
    pub kappa: f64,
    /// In-plane direction of the arc or lobe axis; random when `None`.
    pub tangent: Option<UnitVector>,
}

impl ManifoldSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.kappa.is_finite() || self.kappa < 0.0 {
            return Err(Error::InvalidParameter(format!("kappa {} must be >= 0", self.kappa)));
        }
        match self.shape {
            ManifoldShape::Vmf => {}
            ManifoldShape::Crescent { arc_angle } => {
                if !(arc_angle > 0.0 && arc_angle <= PI) {
                    return Err(Error::InvalidParameter(format!("arc angle {arc_angle} outside (0, pi]")));
                }
            }
            ManifoldShape::Dumbbell {
                lobe_separation,
                lobe_weights: (a, b),
            } => {
                if !(lobe_separation > 0.0 && lobe_separation < PI) {
                    return Err(Error::InvalidParameter(format!(
                        "lobe separation {lobe_separation} outside (0, pi)"
                    )));
                }
                if !(a >= 0.0 && b >= 0.0 && a + b > 0.0) {
                    return Err(Error::InvalidParameter("lobe weights must be >= 0 and not both 0".into()));
                }
            }
        }
        if let Some(t) = &self.tangent {
            if dot(t.as_slice(), self.mean_direction.as_slice()).abs() > 1e-9 {
                return Err(Error::InvalidParameter("tangent is not orthogonal to the mean".into()));
            }
        }
        Ok(())
    }

    fn tangent_or_random(&self, seed: u64) -> UnitVector {
        self.tangent
            .clone()
            .unwrap_or_else(|| random_tangent(&mut rng_for(seed, 1), &self.mean_direction))
    }
}

fn great_circle_point(mu: &UnitVector, tangent: &UnitVector, theta: f64) -> UnitVector {
    let (s, c) = theta.sin_cos();
    let v: Vec<f64> = mu
        .as_slice()
        .iter()
        .zip(tangent.as_slice())
        .map(|(m, t)| c * m + s * t)
        .collect();
    normalize_slice(&v, DEFAULT_EPS_NORM).expect("unit combination")
}

/// `n` samples from a shape; ids are `0..n`.
pub fn sample_manifold(spec: &ManifoldSpec, n: usize, seed: u64) -> Result<FeatureSet> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    let mu = &spec.mean_direction;
    let mut rng = rng_for(seed, 0);
    let vectors: Vec<UnitVector> = match spec.shape {
        ManifoldShape::Vmf => return sample_vmf(mu, spec.kappa, n, seed),
        ManifoldShape::Crescent { arc_angle } => {
            let tangent = spec.tangent_or_random(seed);
            (0..n)
                .map(|_| {
                    let theta = rng.gen_range(-0.5..=0.5) * arc_angle;
                    let centre = great_circle_point(mu, &tangent, theta);
                    draw_vmf(&mut rng, &centre, spec.kappa)
                })
                .collect()
        }
        ManifoldShape::Dumbbell {
            lobe_separation,
            lobe_weights: (w1, w2),
        } => {
            let tangent = spec.tangent_or_random(seed);
            let lobes = [
                great_circle_point(mu, &tangent, -lobe_separation / 2.0),
                great_circle_point(mu, &tangent, lobe_separation / 2.0),
            ];
            let p_first = w1 / (w1 + w2);
            (0..n)
                .map(|_| {
                    let lobe = if w2 == 0.0 {
                        0
                    } else if w1 == 0.0 {
                        1
                    } else if rng.gen::<f64>() < p_first {
                        0
                    } else {
                        1
                    };
                    draw_vmf(&mut rng, &lobes[lobe], spec.kappa)
                })
                .collect()
        }
    };
    FeatureSet::from_vectors(vectors)
}

/// Lobe centres of a dumbbell spec (first lobe first).
pub fn dumbbell_lobes(spec: &ManifoldSpec, seed: u64) -> Option<[UnitVector; 2]> {
    match spec.shape {
        ManifoldShape::Dumbbell { lobe_separation, .. } => {
            let tangent = spec.tangent_or_random(seed);
            Some([
                great_circle_point(&spec.mean_direction, &tangent, -lobe_separation / 2.0),
                great_circle_point(&spec.mean_direction, &tangent, lobe_separation / 2.0),
            ])
        }
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftKind {
    None,
    RigidRotation,
    TranslationThenRenormalize,
    NonlinearWarp,
}

impl std::str::FromStr for DriftKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(DriftKind::None),
            "rigid_rotation" | "rigid" => Ok(DriftKind::RigidRotation),
            "translation_then_renormalize" | "translation" => Ok(DriftKind::TranslationThenRenormalize),
            "nonlinear_warp" | "nonlinear" => Ok(DriftKind::NonlinearWarp),
            other => Err(Error::UnknownKind(other.to_string())),
        }
    }
}

impl std::fmt::Display for DriftKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DriftKind::None => "none",
            DriftKind::RigidRotation => "rigid_rotation",
            DriftKind::TranslationThenRenormalize => "translation_then_renormalize",
            DriftKind::NonlinearWarp => "nonlinear_warp",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftSpec {
    pub kind: DriftKind,
    /// Upper bound every per-task map must certify.
    pub lipschitz_bound: f64,
    /// Intensity per task, starting with the first task.
    pub schedule: Vec<f64>,
    /// Angular frequency of the warp field.
    pub frequency: f64,
    pub rng_seed: u64,
}

impl DriftSpec {
    pub fn none(tasks: usize) -> Self {
        Self {
            kind: DriftKind::None,
            lipschitz_bound: 1.0,
            schedule: vec![0.0; tasks],
            frequency: 0.0,
            rng_seed: 0,
        }
    }

    /// Intensity `step * t` for task index `t`, so the first task is
    /// undistorted.
    pub fn linear(kind: DriftKind, tasks: usize, step: f64, seed: u64) -> Self {
        Self {
            kind,
            lipschitz_bound: 10.0,
            schedule: (0..tasks).map(|t| step * t as f64).collect(),
            frequency: 4.0,
            rng_seed: seed,
        }
    }
}

/// One task's drift map, applied to pristine latent vectors.
#[derive(Debug, Clone)]
pub struct DriftMap {
    kind: DriftKind,
    intensity: f64,
    dim: usize,
    /// Random orthonormal basis, rows are basis vectors.
    basis: DMatrix<f64>,
    angles: Vec<f64>,
    phases: Vec<f64>,
    frequency: f64,
    offset: Vec<f64>,
    lipschitz: f64,
}

fn random_orthogonal(rng: &mut ChaCha8Rng, dim: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    // Fix column signs so the factorization is unique.
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

impl DriftMap {
    fn build(spec: &DriftSpec, t: usize, dim: usize) -> Result<Self> {
        let intensity = *spec.schedule.get(t).ok_or_else(|| {
            Error::InvalidParameter(format!("task {t} outside a drift schedule of {}", spec.schedule.len()))
        })?;
        if !intensity.is_finite() || intensity < 0.0 {
            return Err(Error::InvalidParameter(format!("drift intensity {intensity} must be >= 0")));
        }
        let mut rng = rng_for(spec.rng_seed, 7);
        let basis = random_orthogonal(&mut rng, dim).transpose();
        let angles: Vec<f64> = (0..dim / 2).map(|_| rng.gen_range(0.1..0.6)).collect();
        let phases: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
        let offset = random_unit(&mut rng, dim).into_inner();

        let lipschitz = match spec.kind {
            DriftKind::None | DriftKind::RigidRotation => 1.0,
            DriftKind::TranslationThenRenormalize => {
                if intensity >= 1.0 {
                    return Err(Error::InvalidParameter(format!(
                        "translation intensity {intensity} must be < 1"
                    )));
                }
                1.0 / (1.0 - intensity)
            }
            DriftKind::NonlinearWarp => {
                // |F| <= 1 and |J_F| <= w / sqrt(d), so |x + s F(x)| >= 1 - s
                // and the radial projection costs at most 1 / (1 - s).
                if intensity >= 1.0 {
                    return Err(Error::InvalidParameter(format!(
                        "warp intensity {intensity} must be < 1"
                    )));
                }
                (1.0 + intensity * spec.frequency / (dim as f64).sqrt()) / (1.0 - intensity)
            }
        };
        if lipschitz > spec.lipschitz_bound {
            return Err(Error::InvalidParameter(format!(
                "drift at task {t} has Lipschitz constant {lipschitz}, above the bound {}",
                spec.lipschitz_bound
            )));
        }
        Ok(Self {
            kind: spec.kind,
            intensity,
            dim,
            basis,
            angles,
            phases,
            frequency: spec.frequency,
            offset,
            lipschitz,
        })
    }

    pub fn kind(&self) -> DriftKind {
        self.kind
    }

    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    /// Certified Lipschitz constant on the unit sphere.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn to_basis(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| self.basis.row(i).iter().zip(x).map(|(b, v)| b * v).sum())
            .collect()
    }

    fn out_of_basis(&self, y: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|j| (0..self.dim).map(|i| self.basis[(i, j)] * y[i]).sum())
            .collect()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        if self.intensity == 0.0 || self.kind == DriftKind::None {
            return x.to_vec();
        }
        match self.kind {
            DriftKind::None => x.to_vec(),
            DriftKind::RigidRotation => {
                let mut y = self.to_basis(x);
                for (k, &a) in self.angles.iter().enumerate() {
                    let (s, c) = (a * self.intensity).sin_cos();
                    let (p, q) = (y[2 * k], y[2 * k + 1]);
                    y[2 * k] = c * p - s * q;
                    y[2 * k + 1] = s * p + c * q;
                }
                self.out_of_basis(&y)
            }
            DriftKind::TranslationThenRenormalize => {
                let v: Vec<f64> = x.iter().zip(&self.offset).map(|(a, o)| a + self.intensity * o).collect();
                renormalize(v)
            }
            DriftKind::NonlinearWarp => {
                let y = self.to_basis(x);
                let field: Vec<f64> = y
                    .iter()
                    .zip(&self.phases)
                    .map(|(v, p)| (self.frequency * v + p).sin())
                    .collect();
                let back = self.out_of_basis(&field);
                let scale = self.intensity / (self.dim as f64).sqrt();
                let v: Vec<f64> = x.iter().zip(&back).map(|(a, f)| a + scale * f).collect();
                renormalize(v)
            }
        }
    }

    pub fn apply_unit(&self, x: &UnitVector) -> UnitVector {
        let v = self.apply(x.as_slice());
        normalize_slice(&v, DEFAULT_EPS_NORM).expect("drift maps stay away from the origin")
    }

    /// Extractor that re-embeds the given latent samples through this map.
    pub fn extractor(&self, latents: HashMap<SampleId, UnitVector>) -> DriftExtractor {
        DriftExtractor {
            map: self.clone(),
            latents,
        }
    }
}

fn renormalize(v: Vec<f64>) -> Vec<f64> {
    let n = crate::geometry::norm(&v);
    v.into_iter().map(|x| x / n).collect()
}

/// The drift map for task index `t` (0-based) in `dim` dimensions.
pub fn apply_drift(spec: &DriftSpec, t: usize, dim: usize) -> Result<DriftMap> {
    DriftMap::build(spec, t, dim)
}

/// Feature extractor backed by a drift map and retained latent samples.
pub struct DriftExtractor {
    map: DriftMap,
    latents: HashMap<SampleId, UnitVector>,
}

impl DriftExtractor {
    pub fn map(&self) -> &DriftMap {
        &self.map
    }
}

impl FeatureExtractor for DriftExtractor {
    fn embed(&self, sample: SampleId) -> Result<RawVector> {
        let latent = self.latents.get(&sample).ok_or(Error::UnknownSample(sample))?;
        Ok(RawVector::from(&self.map.apply_unit(latent)))
    }
}

/// Generative parameters of one class under the hybrid vMF model.
#[derive(Debug, Clone, PartialEq)]
pub struct VmfClassParams {
    pub mu_g: UnitVector,
    pub kappa_g: f64,
    pub nodes: Vec<UnitVector>,
    pub kappa_l: f64,
}

/// MAP class under the hybrid model:
/// `argmax_c kappa_g cos(x, mu_c) + kappa_l max_v cos(x, v)`.
/// Ties go to the lowest class id.
pub fn vmf_map_oracle(x: &UnitVector, class_params: &BTreeMap<ClassId, VmfClassParams>) -> Result<ClassId> {
    let mut best: Option<(ClassId, f64)> = None;
    for (&c, p) in class_params {
        let local = p
            .nodes
            .iter()
            .map(|v| dot(x.as_slice(), v.as_slice()))
            .fold(f64::NEG_INFINITY, f64::max);
        let local = if p.nodes.is_empty() { 0.0 } else { local };
        let score = p.kappa_g * dot(x.as_slice(), p.mu_g.as_slice()) + p.kappa_l * local;
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((c, score));
        }
    }
    best.map(|(c, _)| c).ok_or(Error::EmptyInput("class parameters"))
}

/// A sample together with its pristine latent vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSample {
    pub id: SampleId,
    pub latent: UnitVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamSpec {
    pub n_classes: usize,
    pub classes_per_task: usize,
    pub samples_per_class: usize,
    pub heldout_per_class: usize,
    pub dim: usize,
    /// Shapes assigned to classes round-robin. The mean direction and
    /// tangent of each entry are ignored; every class draws its own.
    pub shapes: Vec<ManifoldShape>,
    pub kappa: f64,
    /// Concentration of class mean directions around a shared centre;
    /// 0 spreads them uniformly.
    pub mean_concentration: f64,
    pub drift: DriftSpec,
    pub k_init_hint: usize,
    pub seed: u64,
}

impl StreamSpec {
    /// Default non-convex benchmark: crescents and dumbbells under a
    /// nonlinear warp.
    pub fn benchmark(n_classes: usize, tasks: usize, seed: u64) -> Self {
        Self {
            n_classes,
            classes_per_task: n_classes / tasks.max(1),
            samples_per_class: 200,
            heldout_per_class: 100,
            dim: 16,
            shapes: vec![
                ManifoldShape::Crescent { arc_angle: 2.2 },
                ManifoldShape::Dumbbell {
                    lobe_separation: 1.6,
                    lobe_weights: (1.0, 1.0),
                },
            ],
            kappa: 150.0,
            mean_concentration: 4.0,
            drift: DriftSpec {
                lipschitz_bound: 30.0,
                frequency: 8.0,
                ..DriftSpec::linear(DriftKind::NonlinearWarp, tasks, 0.1, seed ^ 0xD81F)
            },
            k_init_hint: 60,
            seed,
        }
    }
}

/// One task: the classes it introduces, their training features as
/// embedded at this task, and held-out features of every class seen so
/// far as embedded at this task.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamTask {
    pub task_id: usize,
    pub train: Vec<(ClassId, FeatureSet)>,
    pub heldout: BTreeMap<ClassId, FeatureSet>,
}

/// How anchor samples are re-embedded at each task.
#[derive(Debug, Clone)]
pub enum Reembedding {
    Drift {
        spec: DriftSpec,
        latents: HashMap<SampleId, UnitVector>,
    },
    /// Per task, the re-embedded feature of every stored sample.
    Table(Vec<HashMap<SampleId, RawVector>>),
}

#[derive(Debug, Clone)]
pub struct TaskStream {
    pub dim: usize,
    pub tasks: Vec<StreamTask>,
    pub reembedding: Reembedding,
}

/// Extractor over a table of precomputed embeddings.
pub struct TableExtractor<'a> {
    table: &'a HashMap<SampleId, RawVector>,
    allowed: Option<std::collections::HashSet<SampleId>>,
}

impl FeatureExtractor for TableExtractor<'_> {
    fn embed(&self, sample: SampleId) -> Result<RawVector> {
        if let Some(allowed) = &self.allowed {
            if !allowed.contains(&sample) {
                return Err(Error::UnknownSample(sample));
            }
        }
        self.table.get(&sample).cloned().ok_or(Error::UnknownSample(sample))
    }
}

impl TaskStream {
    /// Extractor for task index `t` restricted to the given retained samples.
    pub fn extractor(&self, t: usize, retained: &[SampleId]) -> Result<Box<dyn FeatureExtractor + '_>> {
        match &self.reembedding {
            Reembedding::Drift { spec, latents } => {
                let map = apply_drift(spec, t, self.dim)?;
                let kept = retained
                    .iter()
                    .map(|id| {
                        latents
                            .get(id)
                            .map(|v| (*id, v.clone()))
                            .ok_or(Error::UnknownSample(*id))
                    })
                    .collect::<Result<HashMap<_, _>>>()?;
                Ok(Box::new(map.extractor(kept)))
            }
            Reembedding::Table(tables) => {
                let table = tables.get(t).ok_or_else(|| {
                    Error::InvalidParameter(format!("no re-embedding table for task index {t}"))
                })?;
                Ok(Box::new(TableExtractor {
                    table,
                    allowed: Some(retained.iter().copied().collect()),
                }))
            }
        }
    }

    pub fn n_classes(&self) -> usize {
        self.tasks.iter().map(|t| t.train.len()).sum()
    }
}

/// Builds a seeded stream. Class `c` belongs to task `c / classes_per_task`.
pub fn make_stream(spec: &StreamSpec) -> Result<TaskStream> {
    if spec.classes_per_task == 0 || spec.n_classes == 0 || !spec.n_classes.is_multiple_of(spec.classes_per_task) {
        return Err(Error::InvalidPartition(format!(
            "{} classes cannot be split into tasks of {}",
            spec.n_classes, spec.classes_per_task
        )));
    }
    if spec.shapes.is_empty() {
        return Err(Error::InvalidParameter("at least one shape is required".into()));
    }
    if spec.samples_per_class == 0 || spec.heldout_per_class < 2 {
        return Err(Error::InvalidParameter(
            "need at least one training and two held-out samples per class".into(),
        ));
    }
    if spec.dim < 2 {
        return Err(Error::InvalidParameter("dimension must be at least 2".into()));
    }
    let n_tasks = spec.n_classes / spec.classes_per_task;
    if spec.drift.schedule.len() < n_tasks {
        return Err(Error::InvalidParameter(format!(
            "drift schedule covers {} tasks, stream has {n_tasks}",
            spec.drift.schedule.len()
        )));
    }
    let maps: Vec<DriftMap> = (0..n_tasks)
        .map(|t| apply_drift(&spec.drift, t, spec.dim))
        .collect::<Result<_>>()?;

    let mut rng = rng_for(spec.seed, 3);
    let centre = random_unit(&mut rng, spec.dim);
    let mut next_id: SampleId = 0;
    let mut train_latent: Vec<Vec<LatentSample>> = Vec::with_capacity(spec.n_classes);
    let mut heldout_latent: Vec<Vec<LatentSample>> = Vec::with_capacity(spec.n_classes);
    for c in 0..spec.n_classes {
        let mean_direction = if spec.mean_concentration > 0.0 {
            draw_vmf(&mut rng, &centre, spec.mean_concentration)
        } else {
            random_unit(&mut rng, spec.dim)
        };
        let tangent = random_tangent(&mut rng, &mean_direction);
        let class_seed: u64 = rng.gen();
        let manifold = ManifoldSpec {
            shape: spec.shapes[c % spec.shapes.len()].clone(),
            mean_direction,
            kappa: spec.kappa,
            tangent: Some(tangent),
        };
        let total = spec.samples_per_class + spec.heldout_per_class;
        let drawn = sample_manifold(&manifold, total, class_seed)?;
        let mut latents: Vec<LatentSample> = drawn
            .rows()
            .iter()
            .map(|s| {
                let id = next_id;
                next_id += 1;
                LatentSample {
                    id,
                    latent: s.vector.clone(),
                }
            })
            .collect();
        let held = latents.split_off(spec.samples_per_class);
        train_latent.push(latents);
        heldout_latent.push(held);
    }

    let embed = |map: &DriftMap, rows: &[LatentSample]| -> Result<FeatureSet> {
        FeatureSet::new(
            rows.iter()
                .map(|s| Sample {
                    id: s.id,
                    vector: map.apply_unit(&s.latent),
                })
                .collect(),
        )
    };

    let mut tasks = Vec::with_capacity(n_tasks);
    for (t, map) in maps.iter().enumerate() {
        let first = t * spec.classes_per_task;
        let train = (first..first + spec.classes_per_task)
            .map(|c| Ok((c as ClassId, embed(map, &train_latent[c])?)))
            .collect::<Result<Vec<_>>>()?;
        let heldout = (0..first + spec.classes_per_task)
            .map(|c| Ok((c as ClassId, embed(map, &heldout_latent[c])?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        tasks.push(StreamTask {
            task_id: t + 1,
            train,
            heldout,
        });
    }

    let latents = train_latent
        .into_iter()
        .flatten()
        .map(|s| (s.id, s.latent))
        .collect();
    Ok(TaskStream {
        dim: spec.dim,
        tasks,
        reembedding: Reembedding::Drift {
            spec: spec.drift.clone(),
            latents,
        },
    })
}
