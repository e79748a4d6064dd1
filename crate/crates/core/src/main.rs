use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use topo_proto::classifier::{dual_view_score, fuse_scores, ClassifierConfig, ScoreVector};
use topo_proto::drift::{average_procrustes, FeatureMatrix};
use topo_proto::harness::{run_stream, sweep, sweep_tsv, StreamSource, SweepGrid};
use topo_proto::io::{load_features, load_state, load_stream, save_state, save_stream};
use topo_proto::synth::{make_stream, DriftKind, DriftSpec, StreamSpec};
use topo_proto::topology::SoinnParams;
use topo_proto::{ClassId, Error, Result, SampleId};

#[derive(Parser)]
#[command(name = "topo-proto", version, about = "Topology-aware prototype classifier toolkit")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic task stream as feature files.
    Gen {
        #[command(flatten)]
        stream: StreamArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a classifier over every task of a stream and save its state.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        state: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Classify a feature file with a saved state.
    Predict {
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Optional `sample_id,class_id,score` file from another head.
        #[arg(long)]
        ext_scores: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        fusion_w: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a class-incremental session and report accuracy and drift.
    Bench {
        /// Stream directory; a synthetic stream is generated when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        stream: StreamArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Machine-readable report path.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Procrustes drift curve of the first task's classes.
    Drift {
        #[arg(long)]
        data: PathBuf,
    },
    /// Grid search over classifier hyperparameters.
    Sweep {
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        stream: StreamArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_delimiter = ',')]
        alphas: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        k_inits: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        age_maxes: Vec<u32>,
        #[arg(long, value_delimiter = ',')]
        t_soinns: Vec<u32>,
        #[arg(long, value_delimiter = ',')]
        lambdas: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct StreamArgs {
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 10)]
    tasks: usize,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value_t = 100)]
    heldout: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 150.0)]
    kappa: f64,
    #[arg(long, default_value = "nonlinear_warp")]
    drift: String,
    #[arg(long)]
    drift_step: Option<f64>,
    #[arg(long)]
    drift_frequency: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl StreamArgs {
    fn spec(&self) -> Result<StreamSpec> {
        if self.tasks == 0 || !self.classes.is_multiple_of(self.tasks) {
            return Err(Error::Config(format!(
                "{} classes cannot be split evenly into {} tasks",
                self.classes, self.tasks
            )));
        }
        let mut spec = StreamSpec::benchmark(self.classes, self.tasks, self.seed);
        spec.samples_per_class = self.samples;
        spec.heldout_per_class = self.heldout;
        spec.dim = self.dim;
        spec.kappa = self.kappa;
        let kind: DriftKind = self.drift.parse()?;
        if kind == DriftKind::None {
            spec.drift = DriftSpec::none(self.tasks);
        } else if kind != DriftKind::NonlinearWarp || self.drift_step.is_some() {
            let base = spec.drift.clone();
            let step = self.drift_step.unwrap_or(match kind {
                DriftKind::TranslationThenRenormalize => 0.05,
                _ => 0.1,
            });
            spec.drift = DriftSpec {
                kind,
                ..DriftSpec::linear(kind, self.tasks, step, base.rng_seed)
            };
            if kind == DriftKind::NonlinearWarp {
                spec.drift.frequency = base.frequency;
                spec.drift.lipschitz_bound = base.lipschitz_bound;
            }
        }
        if let Some(f) = self.drift_frequency {
            spec.drift.frequency = f;
        }
        Ok(spec)
    }
}

#[derive(Args, Clone)]
struct ModelArgs {
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 60)]
    k_init: usize,
    #[arg(long, default_value_t = 20)]
    age_max: u32,
    #[arg(long, default_value_t = 1)]
    t_soinn: u32,
    #[arg(long, default_value_t = 0.1)]
    eta1: f64,
    #[arg(long, default_value_t = 0.01)]
    eta2: f64,
    #[arg(long, default_value_t = 0.999)]
    lambda: f64,
    #[arg(long, default_value_t = 0)]
    model_seed: u64,
    #[arg(long, overrides_with = "no_star")]
    star: bool,
    #[arg(long = "no-star")]
    no_star: bool,
}

impl ModelArgs {
    fn config(&self) -> ClassifierConfig {
        ClassifierConfig {
            alpha: self.alpha,
            k_init: self.k_init,
            soinn: SoinnParams {
                eta1: self.eta1,
                eta2: self.eta2,
                age_max: self.age_max,
                t_soinn: self.t_soinn,
                rng_seed: self.model_seed,
            },
            lambda: self.lambda,
        }
    }

    fn star_enabled(&self) -> bool {
        !self.no_star
    }
}

fn source(data: &Option<PathBuf>, stream: &StreamArgs) -> Result<StreamSource> {
    Ok(match data {
        Some(dir) => StreamSource::Directory(dir.clone()),
        None => StreamSource::Synthetic(stream.spec()?),
    })
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn load_external(path: &Path) -> Result<BTreeMap<SampleId, ScoreVector>> {
    let text = fs::read_to_string(path)?;
    let mut out: BTreeMap<SampleId, ScoreVector> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let bad = || Error::Parse {
            line: i + 1,
            message: format!("expected sample_id,class_id,score, found '{line}'"),
        };
        if fields.len() != 3 {
            return Err(bad());
        }
        let id: SampleId = fields[0].trim().parse().map_err(|_| bad())?;
        let class: ClassId = fields[1].trim().parse().map_err(|_| bad())?;
        let score: f64 = fields[2].trim().parse().map_err(|_| bad())?;
        out.entry(id).or_insert_with(|| ScoreVector(BTreeMap::new())).0.insert(class, score);
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Gen { stream, out } => {
            let s = make_stream(&stream.spec()?)?;
            save_stream(&out, &s)?;
            eprintln!("wrote {} tasks, {} classes to {}", s.tasks.len(), s.n_classes(), out.display());
        }
        Command::Fit { data, state, model } => {
            let stream = load_stream(&data)?;
            let (report, fitted, anchors) = run_stream(&stream, &model.config(), model.star_enabled())?;
            save_state(&state, &fitted, &anchors)?;
            print!("{}", report.to_text());
        }
        Command::Predict {
            state,
            features,
            ext_scores,
            fusion_w,
            out,
        } => {
            let (state, _) = load_state(&state)?;
            let file = load_features(&features)?;
            let external = ext_scores.as_deref().map(load_external).transpose()?;
            if fusion_w != 0.0 && external.is_none() {
                return Err(Error::Config("--fusion-w needs --ext-scores".into()));
            }
            let mut text = String::from("sample_id,class_id,predicted\n");
            let mut correct = 0;
            for r in &file.records {
                let mut scores = dual_view_score(&r.vector, &state)?;
                if let Some(ext) = &external {
                    let e = ext.get(&r.sample_id).ok_or(Error::UnknownSample(r.sample_id))?;
                    scores = fuse_scores(&scores, e, fusion_w)?;
                }
                let p = scores.argmax().ok_or(Error::EmptyState)?;
                correct += usize::from(p == r.class_id);
                text.push_str(&format!("{},{},{}\n", r.sample_id, r.class_id, p));
            }
            write_or_print(out.as_deref(), &text)?;
            if !file.records.is_empty() {
                eprintln!("accuracy {:.4}", correct as f64 / file.records.len() as f64);
            }
        }
        Command::Bench {
            data,
            stream,
            model,
            report,
        } => {
            let s = source(&data, &stream)?.load()?;
            let (r, _, _) = run_stream(&s, &model.config(), model.star_enabled())?;
            print!("{}", r.to_text());
            if let Some(path) = report {
                fs::write(path, r.to_tsv())?;
            }
        }
        Command::Drift { data } => {
            let s = load_stream(&data)?;
            let first = &s.tasks[0];
            let classes: Vec<ClassId> = first.train.iter().map(|(c, _)| *c).collect();
            let as_matrices = |task: &topo_proto::synth::StreamTask| -> Result<BTreeMap<ClassId, FeatureMatrix>> {
                classes
                    .iter()
                    .map(|c| {
                        let z = task.heldout.get(c).ok_or(Error::MissingClass(*c))?;
                        Ok((*c, FeatureMatrix::from_feature_set(z)?))
                    })
                    .collect()
            };
            let reference = as_matrices(first)?;
            println!("task\tprocrustes");
            for task in &s.tasks {
                let d = average_procrustes(&classes, &reference, &as_matrices(task)?)?;
                println!("{}\t{d:?}", task.task_id);
            }
        }
        Command::Sweep {
            data,
            stream,
            model,
            alphas,
            k_inits,
            age_maxes,
            t_soinns,
            lambdas,
            out,
        } => {
            let base = model.config();
            let mut grid = SweepGrid::single(&base);
            if !alphas.is_empty() {
                grid.alpha = alphas;
            }
            if !k_inits.is_empty() {
                grid.k_init = k_inits;
            }
            if !age_maxes.is_empty() {
                grid.age_max = age_maxes;
            }
            if !t_soinns.is_empty() {
                grid.t_soinn = t_soinns;
            }
            if !lambdas.is_empty() {
                grid.lambda = lambdas;
            }
            let rows = sweep(&source(&data, &stream)?, &base, &grid, model.star_enabled())?;
            write_or_print(out.as_deref(), &sweep_tsv(&rows))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
