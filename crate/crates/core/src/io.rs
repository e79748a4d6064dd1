//! Text file formats.
//!
//! Feature files:
//!
//! ```text
//! #topo-proto-features v1 d=<dim>
//! sample_id,task_id,class_id,f_1,...,f_d
//! ```
//!
//! Vectors are normalized on load. A sample id may appear once per task.
//!
//! State files hold the classifier configuration, every class model
//! (mean, nodes, edges) and the anchor store, with floats written in
//! shortest round-trip form so a reload reproduces scores bit for bit.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::classifier::{ClassModel, ClassifierConfig, ClassifierState};
use crate::error::{Error, Result};
use crate::feature_set::{FeatureSet, Sample};
use crate::geometry::{RawVector, UnitVector};
use crate::star::{Anchor, AnchorStore};
use crate::synth::{Reembedding, StreamTask, TaskStream};
use crate::topology::{ClassTopology, SoinnParams, TopoNode};
use crate::{ClassId, NodeId, SampleId};

pub const FEATURE_MAGIC: &str = "#topo-proto-features";
pub const STATE_MAGIC: &str = "#topo-proto-state";
pub const FORMAT_VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub sample_id: SampleId,
    pub task_id: usize,
    pub class_id: ClassId,
    pub vector: UnitVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFile {
    pub dim: usize,
    pub records: Vec<FeatureRecord>,
}

impl FeatureFile {
    /// Records grouped by task id, in file order within each task.
    pub fn by_task(&self) -> BTreeMap<usize, Vec<&FeatureRecord>> {
        let mut out: BTreeMap<usize, Vec<&FeatureRecord>> = BTreeMap::new();
        for r in &self.records {
            out.entry(r.task_id).or_default().push(r);
        }
        out
    }

    /// Per task, one feature set per class in ascending class id.
    pub fn task_class_sets(&self) -> Result<BTreeMap<usize, BTreeMap<ClassId, FeatureSet>>> {
        let mut out = BTreeMap::new();
        for (task, records) in self.by_task() {
            let mut classes: BTreeMap<ClassId, Vec<Sample>> = BTreeMap::new();
            for r in records {
                classes.entry(r.class_id).or_default().push(Sample {
                    id: r.sample_id,
                    vector: r.vector.clone(),
                });
            }
            let sets = classes
                .into_iter()
                .map(|(c, rows)| Ok((c, FeatureSet::new(rows)?)))
                .collect::<Result<BTreeMap<_, _>>>()?;
            out.insert(task, sets);
        }
        Ok(out)
    }
}

fn parse_header(line: Option<&str>, magic: &str) -> Result<Vec<String>> {
    let line = line.ok_or_else(|| Error::parse(1, "file is empty"))?;
    let mut parts = line.split_whitespace();
    if parts.next() != Some(magic) {
        return Err(Error::parse(1, format!("expected header starting with '{magic}'")));
    }
    let version = parts.next().ok_or_else(|| Error::parse(1, "missing format version"))?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            expected: FORMAT_VERSION.into(),
            found: version.into(),
        });
    }
    Ok(parts.map(str::to_string).collect())
}

fn parse_num<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::parse(line, format!("invalid {what} '{}'", s.trim())))
}

fn parse_floats(s: &str, line: usize) -> Result<Vec<f64>> {
    s.split(',').map(|x| parse_num(x, line, "number")).collect()
}

fn join_floats(v: &[f64]) -> String {
    let mut out = String::with_capacity(v.len() * 20);
    for (i, x) in v.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write!(out, "{x:?}").unwrap();
    }
    out
}

/// Vectors already unit length to rounding are kept as written, so a
/// save/load cycle is lossless.
fn load_unit(raw: Vec<f64>) -> Result<UnitVector> {
    let n = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (n - 1.0).abs() <= 4.0 * f64::EPSILON {
        UnitVector::new(raw)
    } else {
        UnitVector::from_raw(&raw)
    }
}

pub fn parse_features(text: &str) -> Result<FeatureFile> {
    let mut lines = text.lines();
    let header = parse_header(lines.next(), FEATURE_MAGIC)?;
    let dim = header
        .iter()
        .find_map(|p| p.strip_prefix("d="))
        .ok_or_else(|| Error::parse(1, "header lacks d=<dim>"))?;
    let dim: usize = parse_num(dim, 1, "dimension")?;
    if dim < 2 {
        return Err(Error::parse(1, "dimension must be at least 2"));
    }

    let mut records = Vec::new();
    let mut seen: HashSet<(usize, SampleId)> = HashSet::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 3 {
            return Err(Error::parse(
                lineno,
                format!("expected {} fields, found {}", dim + 3, fields.len()),
            ));
        }
        let sample_id: SampleId = parse_num(fields[0], lineno, "sample id")?;
        let task_id: usize = parse_num(fields[1], lineno, "task id")?;
        let class_id: ClassId = parse_num(fields[2], lineno, "class id")?;
        let raw = fields[3..]
            .iter()
            .map(|x| parse_num::<f64>(x, lineno, "feature"))
            .collect::<Result<Vec<_>>>()?;
        let vector = load_unit(raw).map_err(|e| Error::parse(lineno, e.to_string()))?;
        if !seen.insert((task_id, sample_id)) {
            return Err(Error::parse(
                lineno,
                format!("duplicate sample id {sample_id} in task {task_id}"),
            ));
        }
        records.push(FeatureRecord {
            sample_id,
            task_id,
            class_id,
            vector,
        });
    }
    Ok(FeatureFile { dim, records })
}

pub fn load_features(path: &Path) -> Result<FeatureFile> {
    parse_features(&fs::read_to_string(path)?)
}

pub fn format_features<'a>(dim: usize, records: impl IntoIterator<Item = (SampleId, usize, ClassId, &'a [f64])>) -> String {
    let mut out = format!("{FEATURE_MAGIC} {FORMAT_VERSION} d={dim}\n");
    for (id, task, class, v) in records {
        writeln!(out, "{id},{task},{class},{}", join_floats(v)).unwrap();
    }
    out
}

pub fn save_features(path: &Path, file: &FeatureFile) -> Result<()> {
    let text = format_features(
        file.dim,
        file.records
            .iter()
            .map(|r| (r.sample_id, r.task_id, r.class_id, r.vector.as_slice())),
    );
    fs::write(path, text)?;
    Ok(())
}

pub const TRAIN_FILE: &str = "train.csv";
pub const TEST_FILE: &str = "test.csv";
pub const REEMBED_FILE: &str = "reembed.csv";

/// Writes a stream as `train.csv` (training features at their task),
/// `test.csv` (held-out features of seen classes at every task) and, for
/// drift-backed streams, `reembed.csv` (training samples of every seen
/// class re-embedded at every task).
pub fn save_stream(dir: &Path, stream: &TaskStream) -> Result<()> {
    fs::create_dir_all(dir)?;
    let dim = stream.dim;
    let train = format_features(
        dim,
        stream.tasks.iter().flat_map(|t| {
            t.train.iter().flat_map(move |(c, z)| {
                z.rows().iter().map(move |s| (s.id, t.task_id, *c, s.vector.as_slice()))
            })
        }),
    );
    fs::write(dir.join(TRAIN_FILE), train)?;
    let test = format_features(
        dim,
        stream.tasks.iter().flat_map(|t| {
            t.heldout.iter().flat_map(move |(c, z)| {
                z.rows().iter().map(move |s| (s.id, t.task_id, *c, s.vector.as_slice()))
            })
        }),
    );
    fs::write(dir.join(TEST_FILE), test)?;

    if let Reembedding::Drift { spec, latents } = &stream.reembedding {
        let mut owner: Vec<(SampleId, ClassId)> = Vec::new();
        let mut out = format!("{FEATURE_MAGIC} {FORMAT_VERSION} d={dim}\n");
        for (t, task) in stream.tasks.iter().enumerate() {
            for (c, z) in &task.train {
                owner.extend(z.rows().iter().map(|s| (s.id, *c)));
            }
            let map = crate::synth::apply_drift(spec, t, dim)?;
            for (id, c) in &owner {
                let v = map.apply_unit(&latents[id]);
                writeln!(out, "{id},{},{c},{}", task.task_id, join_floats(v.as_slice())).unwrap();
            }
        }
        fs::write(dir.join(REEMBED_FILE), out)?;
    }
    Ok(())
}

/// Reads a stream written by [`save_stream`] (or assembled by hand in the
/// same layout). `reembed.csv` is optional.
pub fn load_stream(dir: &Path) -> Result<TaskStream> {
    let train = load_features(&dir.join(TRAIN_FILE))?;
    let test = load_features(&dir.join(TEST_FILE))?;
    if train.dim != test.dim {
        return Err(Error::DimensionMismatch {
            expected: train.dim,
            found: test.dim,
        });
    }
    let reembed_path = dir.join(REEMBED_FILE);
    let reembed = if reembed_path.exists() {
        Some(load_features(&reembed_path)?)
    } else {
        None
    };
    stream_from_files(&train, &test, reembed.as_ref())
}

pub fn stream_from_files(train: &FeatureFile, test: &FeatureFile, reembed: Option<&FeatureFile>) -> Result<TaskStream> {
    let dim = train.dim;
    let train_sets = train.task_class_sets()?;
    let mut test_sets = test.task_class_sets()?;
    if train_sets.is_empty() {
        return Err(Error::InvalidPartition("training file has no tasks".into()));
    }
    let mut owner: HashMap<ClassId, usize> = HashMap::new();
    let mut tasks = Vec::with_capacity(train_sets.len());
    for (task_id, classes) in train_sets {
        for &c in classes.keys() {
            if let Some(prev) = owner.insert(c, task_id) {
                return Err(Error::InvalidPartition(format!(
                    "class {c} appears in tasks {prev} and {task_id}"
                )));
            }
        }
        let heldout = test_sets.remove(&task_id).unwrap_or_default();
        for c in heldout.keys() {
            if !owner.contains_key(c) {
                return Err(Error::InvalidPartition(format!(
                    "held-out class {c} at task {task_id} has not been introduced yet"
                )));
            }
        }
        tasks.push(StreamTask {
            task_id,
            train: classes.into_iter().collect(),
            heldout,
        });
    }

    let tables = match reembed {
        Some(file) => {
            if file.dim != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: file.dim,
                });
            }
            let by_task = file.by_task();
            tasks
                .iter()
                .map(|t| {
                    by_task
                        .get(&t.task_id)
                        .map(|rows| {
                            rows.iter()
                                .map(|r| (r.sample_id, RawVector::from(&r.vector)))
                                .collect::<HashMap<_, _>>()
                        })
                        .unwrap_or_default()
                })
                .collect()
        }
        None => Vec::new(),
    };
    Ok(TaskStream {
        dim,
        tasks,
        reembedding: Reembedding::Table(tables),
    })
}

/// Writes the classifier state and anchors.
pub fn format_state(state: &ClassifierState, anchors: &AnchorStore) -> String {
    let c = &state.config;
    let mut out = format!("{STATE_MAGIC} {FORMAT_VERSION}\n[meta]\n");
    writeln!(out, "dim {}", state.dimension).unwrap();
    writeln!(out, "alpha {:?}", c.alpha).unwrap();
    writeln!(out, "k_init {}", c.k_init).unwrap();
    writeln!(out, "eta1 {:?}", c.soinn.eta1).unwrap();
    writeln!(out, "eta2 {:?}", c.soinn.eta2).unwrap();
    writeln!(out, "age_max {}", c.soinn.age_max).unwrap();
    writeln!(out, "t_soinn {}", c.soinn.t_soinn).unwrap();
    writeln!(out, "seed {}", c.soinn.rng_seed).unwrap();
    writeln!(out, "lambda {:?}", c.lambda).unwrap();
    for (id, m) in &state.classes {
        writeln!(out, "[class {id}]").unwrap();
        writeln!(out, "mean_raw {}", join_floats(m.mean_raw.as_slice())).unwrap();
        writeln!(out, "mean_unit {}", join_floats(m.mean_unit.as_slice())).unwrap();
        for n in m.topology.nodes() {
            writeln!(
                out,
                "node {} raw={} unit={}",
                n.id,
                join_floats(n.raw.as_slice()),
                join_floats(n.unit.as_slice())
            )
            .unwrap();
        }
        for ((a, b), age) in m.topology.edges() {
            writeln!(out, "edge {a} {b} {age}").unwrap();
        }
        if let Some(anchors) = anchors.per_class.get(id) {
            for a in anchors.values() {
                writeln!(
                    out,
                    "anchor {} {} h_ref={} delta={}",
                    a.node_id,
                    a.sample_ref,
                    join_floats(a.h_ref.as_slice()),
                    join_floats(a.delta.as_slice())
                )
                .unwrap();
            }
        }
    }
    out
}

pub fn save_state(path: &Path, state: &ClassifierState, anchors: &AnchorStore) -> Result<()> {
    fs::write(path, format_state(state, anchors))?;
    Ok(())
}

#[derive(Default)]
struct ClassBlock {
    header_line: usize,
    mean_raw: Option<Vec<f64>>,
    mean_unit: Option<Vec<f64>>,
    nodes: Vec<TopoNode>,
    edges: Vec<((NodeId, NodeId), u32)>,
    anchors: BTreeMap<NodeId, Anchor>,
}

fn keyed<'a>(token: &'a str, key: &str, line: usize) -> Result<&'a str> {
    token
        .strip_prefix(key)
        .and_then(|t| t.strip_prefix('='))
        .ok_or_else(|| Error::parse(line, format!("expected '{key}=...'")))
}

fn unit_from(v: Vec<f64>, line: usize) -> Result<UnitVector> {
    UnitVector::new(v).map_err(|e| Error::parse(line, e.to_string()))
}

fn raw_from(v: Vec<f64>, line: usize) -> Result<RawVector> {
    RawVector::new(v).map_err(|e| Error::parse(line, e.to_string()))
}

pub fn parse_state(text: &str) -> Result<(ClassifierState, AnchorStore)> {
    let mut lines = text.lines();
    parse_header(lines.next(), STATE_MAGIC)?;
    let mut meta: HashMap<String, (String, usize)> = HashMap::new();
    let mut classes: BTreeMap<ClassId, ClassBlock> = BTreeMap::new();
    let mut current: Option<ClassId> = None;
    let mut in_meta = false;

    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line == "[meta]" {
            in_meta = true;
            current = None;
            continue;
        }
        if let Some(rest) = line.strip_prefix("[class ").and_then(|r| r.strip_suffix(']')) {
            let id: ClassId = parse_num(rest, lineno, "class id")?;
            if classes.contains_key(&id) {
                return Err(Error::parse(lineno, format!("class {id} listed twice")));
            }
            classes.insert(
                id,
                ClassBlock {
                    header_line: lineno,
                    ..Default::default()
                },
            );
            current = Some(id);
            in_meta = false;
            continue;
        }
        let mut tokens = line.split_whitespace();
        let key = tokens.next().unwrap();
        let rest: Vec<&str> = tokens.collect();
        if in_meta {
            if rest.len() != 1 {
                return Err(Error::parse(lineno, format!("malformed meta entry '{line}'")));
            }
            meta.insert(key.to_string(), (rest[0].to_string(), lineno));
            continue;
        }
        let block = current
            .and_then(|c| classes.get_mut(&c))
            .ok_or_else(|| Error::parse(lineno, "entry outside any section"))?;
        match (key, rest.as_slice()) {
            ("mean_raw", [v]) => block.mean_raw = Some(parse_floats(v, lineno)?),
            ("mean_unit", [v]) => block.mean_unit = Some(parse_floats(v, lineno)?),
            ("node", [id, raw, unit]) => block.nodes.push(TopoNode {
                id: parse_num(id, lineno, "node id")?,
                raw: raw_from(parse_floats(keyed(raw, "raw", lineno)?, lineno)?, lineno)?,
                unit: unit_from(parse_floats(keyed(unit, "unit", lineno)?, lineno)?, lineno)?,
            }),
            ("edge", [a, b, age]) => block.edges.push((
                (parse_num(a, lineno, "node id")?, parse_num(b, lineno, "node id")?),
                parse_num(age, lineno, "edge age")?,
            )),
            ("anchor", [node, sample, h_ref, delta]) => {
                let node_id: NodeId = parse_num(node, lineno, "node id")?;
                block.anchors.insert(
                    node_id,
                    Anchor {
                        node_id,
                        sample_ref: parse_num(sample, lineno, "sample ref")?,
                        h_ref: raw_from(parse_floats(keyed(h_ref, "h_ref", lineno)?, lineno)?, lineno)?,
                        delta: RawVector::from_vec_unchecked(parse_floats(keyed(delta, "delta", lineno)?, lineno)?),
                    },
                );
            }
            _ => return Err(Error::parse(lineno, format!("unrecognized entry '{line}'"))),
        }
    }

    let get = |k: &str| -> Result<(String, usize)> {
        meta.get(k)
            .cloned()
            .ok_or_else(|| Error::parse(1, format!("meta section lacks '{k}'")))
    };
    macro_rules! meta_num {
        ($k:expr) => {{
            let (v, l) = get($k)?;
            parse_num(&v, l, $k)?
        }};
    }
    let dim: usize = meta_num!("dim");
    let config = ClassifierConfig {
        alpha: meta_num!("alpha"),
        k_init: meta_num!("k_init"),
        soinn: SoinnParams {
            eta1: meta_num!("eta1"),
            eta2: meta_num!("eta2"),
            age_max: meta_num!("age_max"),
            t_soinn: meta_num!("t_soinn"),
            rng_seed: meta_num!("seed"),
        },
        lambda: meta_num!("lambda"),
    };
    let mut state = ClassifierState::new(config, dim)?;
    let mut store = AnchorStore::new();
    for (id, block) in classes {
        let line = block.header_line;
        let mean_raw = raw_from(
            block.mean_raw.ok_or_else(|| Error::parse(line, format!("class {id} lacks mean_raw")))?,
            line,
        )?;
        let mean_unit = unit_from(
            block.mean_unit.ok_or_else(|| Error::parse(line, format!("class {id} lacks mean_unit")))?,
            line,
        )?;
        let topology = ClassTopology::from_parts(block.nodes, block.edges).map_err(|e| Error::parse(line, e.to_string()))?;
        if topology.dim() != dim || mean_raw.dim() != dim || mean_unit.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: topology.dim(),
            });
        }
        if !block.anchors.is_empty() {
            for a in block.anchors.values() {
                if a.h_ref.dim() != dim || a.delta.dim() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        found: a.h_ref.dim(),
                    });
                }
            }
            store.insert_class(id, block.anchors);
        }
        state.insert(ClassModel {
            class_id: id,
            topology,
            mean_unit,
            mean_raw,
        })?;
    }
    Ok((state, store))
}

pub fn load_state(path: &Path) -> Result<(ClassifierState, AnchorStore)> {
    parse_state(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_normalizes_features() {
        let f = parse_features("#topo-proto-features v1 d=2\n1,1,0,3,4\n2,1,1,0,2\n").unwrap();
        assert_eq!(f.records.len(), 2);
        assert_eq!(f.records[0].vector.as_slice(), &[0.6, 0.8]);
        assert_eq!(f.records[1].class_id, 1);
    }

    #[test]
    fn truncated_line_names_its_number() {
        let err = parse_features("#topo-proto-features v1 d=3\n1,1,0,0.1,0.2,0.3\n2,1,0,0.5").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn duplicate_sample_in_task_is_rejected() {
        let text = "#topo-proto-features v1 d=2\n1,1,0,1,0\n1,1,0,0,1\n";
        assert!(matches!(parse_features(text), Err(Error::Parse { line: 3, .. })));
        let ok = "#topo-proto-features v1 d=2\n1,1,0,1,0\n1,2,0,0,1\n";
        assert!(parse_features(ok).is_ok());
    }

    #[test]
    fn zero_vector_is_rejected() {
        let text = "#topo-proto-features v1 d=2\n1,1,0,0,0\n";
        assert!(matches!(parse_features(text), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn version_and_header_checks() {
        assert!(matches!(
            parse_features("#topo-proto-features v2 d=2\n"),
            Err(Error::VersionMismatch { .. })
        ));
        assert!(matches!(parse_features("hello\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_features(""), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            parse_state("#topo-proto-state v9\n"),
            Err(Error::VersionMismatch { .. })
        ));
    }

    #[test]
    fn state_errors_carry_line_numbers() {
        let text = "#topo-proto-state v1\n[meta]\ndim 2\n[class 0]\nmean_raw 1.0,0.0\nbogus line\n";
        assert!(matches!(parse_state(text), Err(Error::Parse { line: 6, .. })));
    }

    #[test]
    fn class_reuse_across_tasks_is_rejected() {
        let train = parse_features("#topo-proto-features v1 d=2\n1,1,0,1,0\n2,2,0,0,1\n").unwrap();
        let test = parse_features("#topo-proto-features v1 d=2\n").unwrap();
        assert!(matches!(
            stream_from_files(&train, &test, None),
            Err(Error::InvalidPartition(_))
        ));
    }
}
