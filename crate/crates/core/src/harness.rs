//! Class-incremental sessions, reports and parameter sweeps.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;

use crate::classifier::{node_stats, predict, ClassifierConfig, ClassifierState, NodeStats};
use crate::drift::{average_procrustes, FeatureMatrix};
use crate::error::{Error, Result};
use crate::feature_set::FeatureSet;
use crate::io::load_stream;
use crate::star::{align_all, select_anchors, AnchorStore};
use crate::synth::{make_stream, StreamSpec, TaskStream};
use crate::ClassId;

#[derive(Debug, Clone)]
pub enum StreamSource {
    Synthetic(StreamSpec),
    /// Directory holding `train.csv`, `test.csv` and optionally `reembed.csv`.
    Directory(PathBuf),
}

impl StreamSource {
    pub fn load(&self) -> Result<TaskStream> {
        match self {
            StreamSource::Synthetic(spec) => make_stream(spec),
            StreamSource::Directory(dir) => load_stream(dir),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub classifier: ClassifierConfig,
    pub star_enabled: bool,
    pub source: StreamSource,
}

impl RunConfig {
    pub fn new(classifier: ClassifierConfig, star_enabled: bool, source: StreamSource) -> Self {
        Self {
            classifier,
            star_enabled,
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskTiming {
    pub task_id: usize,
    pub fit_ms: f64,
    pub align_ms: f64,
    pub eval_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskRecord {
    pub task_id: usize,
    pub accuracy: f64,
    pub avg_nodes: f64,
    /// Mean Procrustes distance of the first task's classes between their
    /// first embedding and this task's.
    pub procrustes: f64,
    pub skipped_nodes: usize,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub tasks: Vec<TaskRecord>,
    pub a_avg: f64,
    pub a_last: f64,
    pub nodes: NodeStats,
    pub timings: Vec<TaskTiming>,
}

impl Report {
    pub fn per_task_accuracy(&self) -> Vec<f64> {
        self.tasks.iter().map(|t| t.accuracy).collect()
    }

    pub fn procrustes_curve(&self) -> Vec<f64> {
        self.tasks.iter().map(|t| t.procrustes).collect()
    }

    /// Deterministic tab-separated table. Timings are left out so that
    /// identical runs produce identical bytes.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("#topo-proto-report v1\nmetric\tkey\tvalue\n");
        for t in &self.tasks {
            writeln!(out, "accuracy\t{}\t{:?}", t.task_id, t.accuracy).unwrap();
        }
        for t in &self.tasks {
            writeln!(out, "procrustes\t{}\t{:?}", t.task_id, t.procrustes).unwrap();
        }
        for t in &self.tasks {
            writeln!(out, "avg_nodes\t{}\t{:?}", t.task_id, t.avg_nodes).unwrap();
        }
        for t in &self.tasks {
            writeln!(out, "skipped_nodes\t{}\t{}", t.task_id, t.skipped_nodes).unwrap();
        }
        writeln!(out, "a_avg\t-\t{:?}", self.a_avg).unwrap();
        writeln!(out, "a_last\t-\t{:?}", self.a_last).unwrap();
        writeln!(out, "avg_nodes_per_class\t-\t{:?}", self.nodes.avg_nodes_per_class).unwrap();
        for (c, n) in &self.nodes.per_class {
            writeln!(out, "class_nodes\t{c}\t{n}").unwrap();
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "task  accuracy  procrustes  avg_nodes  fit_ms  align_ms  eval_ms").unwrap();
        for (t, tm) in self.tasks.iter().zip(&self.timings) {
            writeln!(
                out,
                "{:>4}  {:>8.4}  {:>10.4}  {:>9.2}  {:>6.1}  {:>8.1}  {:>7.1}",
                t.task_id, t.accuracy, t.procrustes, t.avg_nodes, tm.fit_ms, tm.align_ms, tm.eval_ms
            )
            .unwrap();
        }
        writeln!(out, "A_avg  {:.4}", self.a_avg).unwrap();
        writeln!(out, "A_last {:.4}", self.a_last).unwrap();
        writeln!(out, "nodes per class {:.2}", self.nodes.avg_nodes_per_class).unwrap();
        out
    }
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Fraction of held-out samples whose predicted class matches.
pub fn evaluate(state: &ClassifierState, heldout: &BTreeMap<ClassId, FeatureSet>) -> Result<f64> {
    let jobs: Vec<(ClassId, &crate::feature_set::Sample)> = heldout
        .iter()
        .flat_map(|(c, z)| z.rows().iter().map(move |s| (*c, s)))
        .collect();
    if jobs.is_empty() {
        return Err(Error::EmptyInput("held-out set"));
    }
    let correct = jobs
        .par_iter()
        .map(|(c, s)| predict(&s.vector, state).map(|p| usize::from(p == *c)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(correct as f64 / jobs.len() as f64)
}

fn matrices(heldout: &BTreeMap<ClassId, FeatureSet>, classes: &[ClassId]) -> Result<BTreeMap<ClassId, FeatureMatrix>> {
    classes
        .iter()
        .map(|c| {
            let z = heldout.get(c).ok_or(Error::MissingClass(*c))?;
            Ok((*c, FeatureMatrix::from_feature_set(z)?))
        })
        .collect()
}

/// Runs one class-incremental session over a loaded stream.
pub fn run_stream(stream: &TaskStream, classifier: &ClassifierConfig, star_enabled: bool) -> Result<(Report, ClassifierState, AnchorStore)> {
    classifier.validate()?;
    if stream.tasks.is_empty() {
        return Err(Error::EmptyInput("task stream"));
    }
    let mut state = ClassifierState::new(classifier.clone(), stream.dim)?;
    let mut store = AnchorStore::new();
    let mut records = Vec::with_capacity(stream.tasks.len());
    let mut timings = Vec::with_capacity(stream.tasks.len());

    let first_classes: Vec<ClassId> = stream.tasks[0].train.iter().map(|(c, _)| *c).collect();
    let first_refs = matrices(&stream.tasks[0].heldout, &first_classes)?;

    for (t, task) in stream.tasks.iter().enumerate() {
        let start = Instant::now();
        state.fit_classes(&task.train)?;
        let fresh = task
            .train
            .par_iter()
            .map(|(c, z)| Ok((*c, select_anchors(&state.classes[c], z)?)))
            .collect::<Result<Vec<_>>>()?;
        let fit_ms = ms(start);

        let start = Instant::now();
        let mut skipped = 0;
        if star_enabled && !store.is_empty() {
            let retained = store.sample_refs();
            let extractor = stream.extractor(t, &retained)?;
            let reports = align_all(&mut state, &mut store, extractor.as_ref(), classifier.lambda)
                .map_err(|mut errs| errs.remove(0).1)?;
            skipped = reports.iter().map(|r| r.skipped_nodes.len()).sum();
        }
        for (c, anchors) in fresh {
            store.insert_class(c, anchors);
        }
        let align_ms = ms(start);

        let start = Instant::now();
        let accuracy = evaluate(&state, &task.heldout)?;
        let cur = matrices(&task.heldout, &first_classes)?;
        let procrustes = average_procrustes(&first_classes, &first_refs, &cur)?;
        let eval_ms = ms(start);

        records.push(TaskRecord {
            task_id: task.task_id,
            accuracy,
            avg_nodes: node_stats(&state)?.avg_nodes_per_class,
            procrustes,
            skipped_nodes: skipped,
        });
        timings.push(TaskTiming {
            task_id: task.task_id,
            fit_ms,
            align_ms,
            eval_ms,
        });
    }

    let a_avg = records.iter().map(|r| r.accuracy).sum::<f64>() / records.len() as f64;
    let a_last = records.last().expect("at least one task").accuracy;
    let report = Report {
        tasks: records,
        a_avg,
        a_last,
        nodes: node_stats(&state)?,
        timings,
    };
    Ok((report, state, store))
}

pub fn run_session(config: &RunConfig) -> Result<Report> {
    let stream = config.source.load()?;
    Ok(run_stream(&stream, &config.classifier, config.star_enabled)?.0)
}

/// Cartesian grid over classifier hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub alpha: Vec<f64>,
    pub k_init: Vec<usize>,
    pub age_max: Vec<u32>,
    pub t_soinn: Vec<u32>,
    pub lambda: Vec<f64>,
}

impl SweepGrid {
    /// A grid holding only the values of `base`.
    pub fn single(base: &ClassifierConfig) -> Self {
        Self {
            alpha: vec![base.alpha],
            k_init: vec![base.k_init],
            age_max: vec![base.soinn.age_max],
            t_soinn: vec![base.soinn.t_soinn],
            lambda: vec![base.lambda],
        }
    }

    pub fn configs(&self, base: &ClassifierConfig) -> Vec<ClassifierConfig> {
        let mut out = Vec::new();
        for &alpha in &self.alpha {
            for &k_init in &self.k_init {
                for &age_max in &self.age_max {
                    for &t_soinn in &self.t_soinn {
                        for &lambda in &self.lambda {
                            let mut c = base.clone();
                            c.alpha = alpha;
                            c.k_init = k_init;
                            c.soinn.age_max = age_max;
                            c.soinn.t_soinn = t_soinn;
                            c.lambda = lambda;
                            out.push(c);
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub config: ClassifierConfig,
    pub a_avg: f64,
    pub a_last: f64,
    pub avg_nodes: f64,
}

/// Runs every grid point over the same stream.
pub fn sweep(source: &StreamSource, base: &ClassifierConfig, grid: &SweepGrid, star_enabled: bool) -> Result<Vec<SweepRow>> {
    let stream = source.load()?;
    let configs = grid.configs(base);
    if configs.is_empty() {
        return Err(Error::EmptyInput("sweep grid"));
    }
    configs
        .into_iter()
        .map(|config| {
            let (report, _, _) = run_stream(&stream, &config, star_enabled)?;
            Ok(SweepRow {
                a_avg: report.a_avg,
                a_last: report.a_last,
                avg_nodes: report.nodes.avg_nodes_per_class,
                config,
            })
        })
        .collect()
}

pub fn sweep_tsv(rows: &[SweepRow]) -> String {
    let mut out = String::from("alpha\tk_init\tage_max\tt_soinn\tlambda\ta_avg\ta_last\tavg_nodes\n");
    for r in rows {
        let c = &r.config;
        writeln!(
            out,
            "{:?}\t{}\t{}\t{}\t{:?}\t{:?}\t{:?}\t{:?}",
            c.alpha, c.k_init, c.soinn.age_max, c.soinn.t_soinn, c.lambda, r.a_avg, r.a_last, r.avg_nodes
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{DriftKind, DriftSpec};

    fn small_spec(seed: u64) -> StreamSpec {
        let mut spec = StreamSpec::benchmark(6, 3, seed);
        spec.samples_per_class = 40;
        spec.heldout_per_class = 20;
        spec.dim = 8;
        spec
    }

    fn small_config() -> ClassifierConfig {
        ClassifierConfig {
            k_init: 8,
            ..Default::default()
        }
    }

    #[test]
    fn session_reports_each_task() {
        let config = RunConfig::new(small_config(), true, StreamSource::Synthetic(small_spec(3)));
        let r = run_session(&config).unwrap();
        assert_eq!(r.tasks.len(), 3);
        assert_eq!(r.tasks[0].task_id, 1);
        assert_eq!(r.tasks[0].procrustes, 0.0);
        assert!(r.per_task_accuracy().iter().all(|a| (0.0..=1.0).contains(a)));
        assert_eq!(r.a_last, r.tasks[2].accuracy);
        assert_eq!(r.nodes.per_class.len(), 6);
    }

    #[test]
    fn tsv_is_reproducible() {
        let config = RunConfig::new(small_config(), true, StreamSource::Synthetic(small_spec(9)));
        let a = run_session(&config).unwrap().to_tsv();
        let b = run_session(&config).unwrap().to_tsv();
        assert_eq!(a, b);
    }

    #[test]
    fn star_is_inert_without_drift() {
        let mut spec = small_spec(5);
        spec.drift = DriftSpec::none(3);
        let with = run_session(&RunConfig::new(small_config(), true, StreamSource::Synthetic(spec.clone()))).unwrap();
        let without = run_session(&RunConfig::new(small_config(), false, StreamSource::Synthetic(spec))).unwrap();
        assert_eq!(with.to_tsv(), without.to_tsv());
        assert!(with.procrustes_curve().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn grid_is_cartesian() {
        let mut grid = SweepGrid::single(&small_config());
        grid.alpha = vec![0.0, 0.5, 1.0];
        grid.lambda = vec![0.9, 0.999];
        assert_eq!(grid.configs(&small_config()).len(), 6);
        let mut spec = small_spec(1);
        spec.drift = DriftSpec::linear(DriftKind::RigidRotation, 3, 0.1, 4);
        let rows = sweep(&StreamSource::Synthetic(spec), &small_config(), &grid, true).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(sweep_tsv(&rows).lines().count(), 7);
    }
}
