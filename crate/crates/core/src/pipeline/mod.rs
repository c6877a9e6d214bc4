//! File-based workflow over a working directory:
//!
//! ```text
//! mutate   sources              -> mutants.jsonl
//! matrix   sources, mutants     -> coverage.json, matrix.jsonl
//! encode   sources, matrix      -> dataset.jsonl, vocab.json
//! split    dataset              -> train.jsonl, val.jsonl, test.jsonl
//! train    train, val, vocab    -> model.ckpt, training_log.json
//! predict  checkpoint, test     -> predictions.jsonl
//! evaluate predictions, matrix  -> report.json, report.md, buckets.csv [, sweep.csv]
//! ```
//!
//! Every output gets a `.lineage.json` sidecar (see [`lineage`]).

pub mod lineage;
pub mod nodiff;
pub mod split;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::corpus::Project;
use crate::encoding::{
    encode_line_diff, encode_no_diff, encode_token_diff, feature_inputs, tokenize, tokenize_with, EncodeError,
    EncodedExample, MethodSource, Representation, TestSource, Vocabulary, DEFAULT_WINDOW,
};
use crate::eval::{self, EvalError, MetricsReport, PredictionEntry, PredictionMatrix, PredictionRecord, DEFAULT_THRESHOLD};
use crate::groundtruth::{build_coverage, build_kill_matrix, qualify, CoverageMap, GroundTruthError, KillMatrix, MatrixRecord};
use crate::minilang::{ParseError, DEFAULT_STEP_BUDGET};
use crate::model::{score_no_diff_pairs, Classifier, ClassifierConfig, ModelError, ModelKind, TrainConfig};
use crate::mutation::{generate_project_mutants, Mutant};

pub use split::{SplitAssignment, SplitMode, SplitName, SplitSpec};

pub const MUTANTS_FILE: &str = "mutants.jsonl";
pub const COVERAGE_FILE: &str = "coverage.json";
pub const MATRIX_FILE: &str = "matrix.jsonl";
pub const DATASET_FILE: &str = "dataset.jsonl";
pub const VOCAB_FILE: &str = "vocab.json";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const TRAINING_LOG_FILE: &str = "training_log.json";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const PREDICT_LOG_FILE: &str = "predict_log.json";
pub const REPORT_JSON_FILE: &str = "report.json";
pub const REPORT_MD_FILE: &str = "report.md";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const BUCKETS_FILE: &str = "buckets.csv";

pub const DEFAULT_VOCAB_SIZE: usize = 2048;
pub const DEFAULT_FLOPS_PER_STEP: u64 = 50;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Format { path: PathBuf, line: usize, message: String },
    #[error("project {project}: {source}")]
    Parse { project: String, source: ParseError },
    #[error("{0}")]
    Data(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("split: {0}")]
    Split(String),
    #[error("lineage check failed: {0}")]
    Lineage(String),
    #[error(transparent)]
    GroundTruth(#[from] GroundTruthError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl PipelineError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io { path: path.to_path_buf(), source }
    }

    /// Process exit code: 3 for training divergence, 2 for every other
    /// data or configuration failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Model(ModelError::Divergence { .. }) => 3,
            _ => 2,
        }
    }
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

// ---------------------------------------------------------------------------
// Configuration

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoDiffMode {
    /// Score the mutated half directly.
    #[default]
    Direct,
    /// Score `P(mutated) − P(original)` against a validation-chosen threshold.
    Subtract,
}

impl std::str::FromStr for NoDiffMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "direct" => Ok(NoDiffMode::Direct),
            "subtract" => Ok(NoDiffMode::Subtract),
            other => Err(format!("unknown no-diff mode `{other}` (expected direct or subtract)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub threshold: f64,
    pub sweep: bool,
    pub time_model: bool,
    pub flops_per_step: u64,
    pub no_diff_mode: NoDiffMode,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            threshold: DEFAULT_THRESHOLD,
            sweep: true,
            time_model: true,
            flops_per_step: DEFAULT_FLOPS_PER_STEP,
            no_diff_mode: NoDiffMode::Direct,
        }
    }
}

/// Everything one end-to-end run depends on besides the sources themselves.
/// Read from TOML; every key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectConfig {
    /// `.mini` files or directories of them, relative to the config file.
    pub sources: Vec<PathBuf>,
    /// Seeds the split, the initialization and the training order.
    pub seed: u64,
    pub budget: u64,
    pub window: usize,
    pub representation: Representation,
    pub vocab_size: usize,
    pub split: SplitSpec,
    pub classifier: ClassifierConfig,
    pub train: TrainConfig,
    pub evaluate: EvaluateConfig,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        ProjectConfig {
            sources: Vec::new(),
            seed: 0,
            budget: DEFAULT_STEP_BUDGET,
            window: DEFAULT_WINDOW,
            representation: Representation::TokenDiff,
            vocab_size: DEFAULT_VOCAB_SIZE,
            split: SplitSpec::default(),
            classifier: ClassifierConfig::default(),
            train: TrainConfig::default(),
            evaluate: EvaluateConfig::default(),
        }
    }
}

impl ProjectConfig {
    pub fn from_toml(text: &str) -> Result<ProjectConfig> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.message().to_string()))
    }

    /// Reads a config file; relative source paths are resolved against its
    /// directory and must exist.
    pub fn load(path: &Path) -> Result<ProjectConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            PipelineError::Config(m) => PipelineError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for s in &mut cfg.sources {
            if s.is_relative() {
                *s = base.join(&*s);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for s in &self.sources {
            if !s.exists() {
                return Err(PipelineError::Config(format!("source {} does not exist", s.display())));
            }
        }
        if self.budget == 0 {
            return Err(PipelineError::Config("budget must be positive".into()));
        }
        self.classifier.validate()?;
        Ok(())
    }

    /// The classifier settings with the run's seed and window applied.
    pub fn classifier_config(&self) -> ClassifierConfig {
        ClassifierConfig { seed: self.seed, window: self.window, ..self.classifier.clone() }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seed, ..self.train.clone() }
    }
}

// ---------------------------------------------------------------------------
// Files

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        }
    }
    std::fs::write(path, bytes).map_err(|e| PipelineError::io(path, e))
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, &item).expect("records serialize");
        buf.push(b'\n');
    }
    write_file(path, &buf)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| PipelineError::Format { path: path.to_path_buf(), line: i + 1, message: e.to_string() })
        })
        .collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, (serde_json::to_string_pretty(value).expect("serializes") + "\n").as_bytes())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Format { path: path.to_path_buf(), line: e.line(), message: e.to_string() })
}

// ---------------------------------------------------------------------------
// Sources

/// A parsed project and the file it came from.
#[derive(Debug, Clone)]
pub struct SourceProject {
    pub project: Project,
    pub path: PathBuf,
}

fn valid_project_name(name: &str) -> bool {
    let mut chars = name.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

/// Loads `.mini` files, or every `.mini` file directly inside a directory.
/// The project name is the file stem. Result is sorted by name.
pub fn load_projects(paths: &[PathBuf]) -> Result<Vec<SourceProject>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let entries = std::fs::read_dir(p).map_err(|e| PipelineError::io(p, e))?;
            let mut found: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "mini"))
                .collect();
            if found.is_empty() {
                return Err(PipelineError::Data(format!("{} holds no .mini files", p.display())));
            }
            found.sort();
            files.extend(found);
        } else if p.is_file() {
            files.push(p.clone());
        } else {
            return Err(PipelineError::Data(format!("source {} does not exist", p.display())));
        }
    }
    if files.is_empty() {
        return Err(PipelineError::Data("no source files given".into()));
    }
    let mut out: Vec<SourceProject> = Vec::new();
    for f in files {
        let name = f.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        if !valid_project_name(&name) {
            return Err(PipelineError::Data(format!("{}: `{name}` is not a valid project name", f.display())));
        }
        if out.iter().any(|p| p.project.name == name) {
            return Err(PipelineError::Data(format!("two source files define project `{name}`")));
        }
        let text = std::fs::read_to_string(&f).map_err(|e| PipelineError::io(&f, e))?;
        let project = Project::parse(name.clone(), &text).map_err(|source| PipelineError::Parse { project: name, source })?;
        let path = std::fs::canonicalize(&f).map_err(|e| PipelineError::io(&f, e))?;
        out.push(SourceProject { project, path });
    }
    out.sort_by(|a, b| a.project.name.cmp(&b.project.name));
    Ok(out)
}

fn source_paths(projects: &[SourceProject]) -> Vec<PathBuf> {
    projects.iter().map(|p| p.path.clone()).collect()
}

fn find_project<'a>(projects: &'a [SourceProject], name: &str) -> Result<&'a SourceProject> {
    projects
        .iter()
        .find(|p| p.project.name == name)
        .ok_or_else(|| PipelineError::Data(format!("project `{name}` is not among the given sources")))
}

// ---------------------------------------------------------------------------
// Steps

/// A directory holding one run's artifacts.
#[derive(Debug, Clone)]
pub struct Workdir {
    root: PathBuf,
}

impl Workdir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Workdir { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.root.join(file)
    }

    fn require(&self, file: &str, producer: &str) -> Result<PathBuf> {
        let p = self.path(file);
        if p.exists() {
            Ok(p)
        } else {
            Err(PipelineError::Data(format!("{} is missing; run `{producer}` first", p.display())))
        }
    }

    pub fn read_mutants(&self) -> Result<Vec<Mutant>> {
        read_jsonl(&self.require(MUTANTS_FILE, "mutate")?)
    }

    pub fn read_matrix(&self) -> Result<KillMatrix> {
        Ok(KillMatrix::from_records(read_jsonl::<MatrixRecord>(&self.require(MATRIX_FILE, "matrix")?)?))
    }

    pub fn read_vocab(&self) -> Result<Vocabulary> {
        let p = self.require(VOCAB_FILE, "encode")?;
        let text = std::fs::read_to_string(&p).map_err(|e| PipelineError::io(&p, e))?;
        Ok(Vocabulary::from_json(&text)?)
    }

    pub fn read_split(&self, name: SplitName) -> Result<Vec<EncodedExample>> {
        read_jsonl(&self.require(name.file_name(), "split")?)
    }

    pub fn read_predictions(&self) -> Result<PredictionMatrix> {
        Ok(PredictionMatrix::from_records(read_jsonl::<PredictionRecord>(&self.require(PREDICTIONS_FILE, "predict")?)?)?)
    }

    pub fn read_report(&self) -> Result<MetricsReport> {
        read_json(&self.require(REPORT_JSON_FILE, "evaluate")?)
    }
}

/// Generates every mutant of every project, in project-name order.
pub fn mutate(work: &Workdir, projects: &[SourceProject]) -> Result<Vec<Mutant>> {
    let mutants: Vec<Mutant> =
        projects.iter().flat_map(|p| generate_project_mutants(&p.project.name, &p.project.program)).collect();
    let out = work.path(MUTANTS_FILE);
    write_jsonl(&out, &mutants)?;
    lineage::record(&out, &source_paths(projects))?;
    Ok(mutants)
}

/// Coverage and kill matrix with qualified test ids. Mutates first when
/// `mutants.jsonl` is absent.
pub fn matrix(work: &Workdir, projects: &[SourceProject], budget: u64) -> Result<KillMatrix> {
    let mutants = if work.path(MUTANTS_FILE).exists() { work.read_mutants()? } else { mutate(work, projects)? };
    let mut by_project: BTreeMap<String, Vec<Mutant>> = BTreeMap::new();
    for m in mutants {
        find_project(projects, &m.project)?;
        by_project.entry(m.project.clone()).or_default().push(m);
    }
    let mut coverage = CoverageMap::default();
    let mut km = KillMatrix::default();
    for p in projects {
        let program = &p.project.program;
        let cov = build_coverage(program, budget)
            .map_err(|e| PipelineError::Data(format!("project {}: {e}", p.project.name)))?;
        let ms = by_project.get(&p.project.name).map(Vec::as_slice).unwrap_or_default();
        km.extend(build_kill_matrix(program, ms, &cov, budget)?.qualified(&p.project.name));
        coverage.extend(cov.qualified(&p.project.name));
    }
    let mut inputs = source_paths(projects);
    inputs.push(work.path(MUTANTS_FILE));
    let cov_path = work.path(COVERAGE_FILE);
    write_json(&cov_path, &coverage)?;
    lineage::record(&cov_path, &inputs)?;
    let out = work.path(MATRIX_FILE);
    write_jsonl(&out, km.records())?;
    lineage::record(&out, &inputs)?;
    Ok(km)
}

/// Token lists the vocabulary is built from: every function and test text,
/// every replacement text, and split function and test names.
fn vocabulary_corpus(projects: &[SourceProject], mutants: &[Mutant]) -> Vec<Vec<String>> {
    let mut docs = Vec::new();
    for p in projects {
        let prog = &p.project.program;
        for f in &prog.functions {
            docs.push(tokenize(prog.slice(f.span)));
            docs.push(tokenize_with(&f.name, 0));
        }
        for t in &prog.tests {
            docs.push(tokenize(prog.slice(t.span)));
            docs.push(tokenize_with(&t.name, 0));
        }
    }
    for m in mutants {
        docs.push(tokenize(&m.after_text));
    }
    docs
}

/// Encodes every covering pair of the kill matrix, labelled with its
/// outcome. No-diff yields an (original, mutated) example pair per covering
/// pair.
pub fn encode(
    work: &Workdir,
    projects: &[SourceProject],
    representation: Representation,
    window: usize,
    vocab_size: usize,
) -> Result<(Vocabulary, Vec<EncodedExample>)> {
    let mutants = work.read_mutants()?;
    let km = work.read_matrix()?;
    let vocab = Vocabulary::build(&vocabulary_corpus(projects, &mutants), vocab_size)?;
    let by_id: HashMap<&str, &Mutant> = mutants.iter().map(|m| (m.id.as_str(), m)).collect();
    let mut examples = Vec::with_capacity(km.len());
    for (mutant_id, test_id, entry) in km.iter() {
        let m = by_id
            .get(mutant_id)
            .ok_or_else(|| PipelineError::Data(format!("matrix mentions mutant {mutant_id}, absent from {MUTANTS_FILE}")))?;
        let sp = find_project(projects, &m.project)?;
        let prog = &sp.project.program;
        let func = prog
            .function(&m.function)
            .ok_or_else(|| PipelineError::Data(format!("mutant {mutant_id}: no function `{}` in {}", m.function, m.project)))?;
        let bare = test_id
            .strip_prefix(&qualify(&m.project, ""))
            .ok_or_else(|| PipelineError::Data(format!("test {test_id} does not belong to project {}", m.project)))?;
        let test = prog
            .test(bare)
            .ok_or_else(|| PipelineError::Data(format!("no test `{bare}` in project {}", m.project)))?;
        let method = MethodSource { text: prog.slice(func.span), offset: func.span.start };
        let test_src = TestSource { id: test_id, text: prog.slice(test.span) };
        let label = crate::groundtruth::Verdict::from_detected(entry.detected);
        let features = feature_inputs(method, m, bare, &vocab)?;
        match representation {
            Representation::TokenDiff | Representation::LineDiff => {
                let mut ex = if representation == Representation::TokenDiff {
                    encode_token_diff(method, m, test_src, &vocab, window)?
                } else {
                    encode_line_diff(method, m, test_src, &vocab, window)?
                };
                ex.label = Some(label);
                ex.features = Some(features);
                examples.push(ex);
            }
            Representation::NoDiff => {
                let (mut original, mut mutated) = encode_no_diff(method, m, test_src, &vocab, window)?;
                mutated.label = Some(label);
                original.features = Some(features.clone());
                mutated.features = Some(features);
                examples.push(original);
                examples.push(mutated);
            }
        }
    }
    let mut inputs = source_paths(projects);
    inputs.extend([work.path(MUTANTS_FILE), work.path(MATRIX_FILE)]);
    let vocab_path = work.path(VOCAB_FILE);
    write_file(&vocab_path, vocab.to_json().as_bytes())?;
    lineage::record(&vocab_path, &inputs)?;
    let out = work.path(DATASET_FILE);
    write_jsonl(&out, &examples)?;
    lineage::record(&out, &inputs)?;
    Ok((vocab, examples))
}

/// Splits `dataset.jsonl` by mutant (or by project) into three files.
pub fn split_dataset(work: &Workdir, spec: &SplitSpec, seed: u64) -> Result<SplitAssignment> {
    let dataset_path = work.require(DATASET_FILE, "encode")?;
    let examples: Vec<EncodedExample> = read_jsonl(&dataset_path)?;
    let units: Vec<(String, String)> = examples.iter().map(|e| (e.mutant_id.clone(), e.project.clone())).collect();
    let assignment = split::split(&units, spec, seed)?;
    split::check_integrity(&assignment, &units, spec.mode)?;
    for name in SplitName::ALL {
        let ids = assignment.get(name);
        let out = work.path(name.file_name());
        write_jsonl(&out, examples.iter().filter(|e| ids.contains(&e.mutant_id)))?;
        lineage::record(&out, &[dataset_path.clone()])?;
    }
    Ok(assignment)
}

/// Trains on `train.jsonl`, selecting the epoch by `val.jsonl`.
pub fn train(work: &Workdir, cc: &ClassifierConfig, tc: &TrainConfig) -> Result<(Classifier, crate::model::TrainingLog)> {
    let vocab = work.read_vocab()?;
    let train_set = work.read_split(SplitName::Train)?;
    let val_set = work.read_split(SplitName::Val)?;
    let (classifier, log) = crate::model::train(&train_set, &val_set, tc, cc, &vocab)?;
    let inputs = [work.path(VOCAB_FILE), work.path(SplitName::Train.file_name()), work.path(SplitName::Val.file_name())];
    let ckpt = work.path(CHECKPOINT_FILE);
    write_file(&ckpt, &classifier.to_bytes())?;
    lineage::record(&ckpt, &inputs)?;
    let log_path = work.path(TRAINING_LOG_FILE);
    write_json(&log_path, &log)?;
    lineage::record(&log_path, &inputs)?;
    Ok((classifier, log))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictLog {
    pub representation: Representation,
    pub model_kind: ModelKind,
    pub mode: NoDiffMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<nodiff::TauChoice>,
    pub pairs: usize,
}

/// Scores every pair of `test.jsonl` with a checkpoint. No-diff data in
/// subtraction mode first fixes its threshold on `val.jsonl`.
pub fn predict(work: &Workdir, checkpoint: &Path, mode: NoDiffMode) -> Result<PredictionMatrix> {
    let classifier = Classifier::from_bytes(&std::fs::read(checkpoint).map_err(|e| PipelineError::io(checkpoint, e))?)?;
    classifier.check_vocab(&work.read_vocab()?)?;
    let test_set = work.read_split(SplitName::Test)?;
    let representation = test_set
        .first()
        .map(|e| e.representation)
        .ok_or_else(|| PipelineError::Data("test split is empty".into()))?;
    let mut inputs = vec![checkpoint.to_path_buf(), work.path(VOCAB_FILE), work.path(SplitName::Test.file_name())];
    let mut tau = None;
    let pred = if representation == Representation::NoDiff && mode == NoDiffMode::Subtract {
        let choice = nodiff::choose_tau(&score_no_diff_pairs(&classifier, &work.read_split(SplitName::Val)?)?);
        inputs.push(work.path(SplitName::Val.file_name()));
        let mut pred = PredictionMatrix::new();
        for s in score_no_diff_pairs(&classifier, &test_set)? {
            let p = nodiff::subtraction_probability(s.mutated - s.original, choice.tau);
            pred.insert(s.mutant_id, s.test_id, PredictionEntry { probability: p, inference_cost: s.inference_cost })?;
        }
        tau = Some(choice);
        pred
    } else {
        crate::model::predict_matrix(&classifier, &test_set)?
    };
    let out = work.path(PREDICTIONS_FILE);
    write_jsonl(&out, pred.records())?;
    lineage::record(&out, &inputs)?;
    let log = PredictLog { representation, model_kind: classifier.config().model_kind, mode, tau, pairs: pred.len() };
    let log_path = work.path(PREDICT_LOG_FILE);
    write_json(&log_path, &log)?;
    lineage::record(&log_path, &inputs)?;
    Ok(pred)
}

/// Predictions and the ground truth restricted to the predicted mutants,
/// after checking both lineages.
fn checked_inputs(work: &Workdir) -> Result<(PredictionMatrix, KillMatrix)> {
    let pred_path = work.require(PREDICTIONS_FILE, "predict")?;
    let matrix_path = work.require(MATRIX_FILE, "matrix")?;
    lineage::verify(&pred_path)?;
    lineage::verify(&matrix_path)?;
    let matrix_hash = lineage::hash_file(&matrix_path)?;
    let dataset = work.path(DATASET_FILE);
    let built_from_this_matrix = lineage::read(&dataset)?.inputs.iter().any(|i| i.path == MATRIX_FILE && i.sha256 == matrix_hash);
    if !built_from_this_matrix {
        return Err(PipelineError::Lineage(format!("{DATASET_FILE} was not encoded from the current {MATRIX_FILE}")));
    }
    let pred = work.read_predictions()?;
    let mutants: BTreeSet<String> = pred.iter().map(|(m, _, _)| m.to_string()).collect();
    let truth = work.read_matrix()?.restrict_to(&mutants);
    Ok((pred, truth))
}

fn write_report(work: &Workdir, report: &MetricsReport) -> Result<()> {
    let inputs = [work.path(PREDICTIONS_FILE), work.path(MATRIX_FILE)];
    let json = work.path(REPORT_JSON_FILE);
    write_json(&json, report)?;
    lineage::record(&json, &inputs)?;
    let md = work.path(REPORT_MD_FILE);
    write_file(&md, report.to_markdown().as_bytes())?;
    lineage::record(&md, &inputs)?;
    let buckets = work.path(BUCKETS_FILE);
    write_file(&buckets, report.buckets_csv().as_bytes())?;
    lineage::record(&buckets, &inputs)?;
    if let Some(csv) = report.sweep_csv() {
        let sweep = work.path(SWEEP_FILE);
        write_file(&sweep, csv.as_bytes())?;
        lineage::record(&sweep, &inputs)?;
    }
    Ok(())
}

/// Scores `predictions.jsonl` against the kill matrix.
pub fn evaluate(work: &Workdir, threshold: f64, sweep: bool) -> Result<MetricsReport> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(PipelineError::Config(format!("threshold {threshold} is outside [0, 1]")));
    }
    let (pred, truth) = checked_inputs(work)?;
    let report = eval::evaluate(&pred, &truth, threshold, sweep)?;
    write_report(work, &report)?;
    Ok(report)
}

/// Adds the checking-time model to an existing report, at its threshold.
pub fn report_time_model(work: &Workdir, flops_per_step: u64) -> Result<MetricsReport> {
    if flops_per_step == 0 {
        return Err(PipelineError::Config("flops_per_step must be positive".into()));
    }
    let mut report = work.read_report()?;
    let (pred, truth) = checked_inputs(work)?;
    let mutants: Vec<String> = truth.suite_verdicts().into_keys().collect();
    let verdicts = eval::aggregate_for(&pred, &mutants, report.threshold)?;
    report.time_model = Some(eval::checking_time(&verdicts.verdicts, &truth, pred.total_inference_cost(), flops_per_step)?);
    write_report(work, &report)?;
    Ok(report)
}

/// Runs every step in order.
pub fn run(work: &Workdir, cfg: &ProjectConfig) -> Result<MetricsReport> {
    cfg.validate()?;
    let projects = load_projects(&cfg.sources)?;
    std::fs::create_dir_all(work.root()).map_err(|e| PipelineError::io(work.root(), e))?;
    mutate(work, &projects)?;
    matrix(work, &projects, cfg.budget)?;
    encode(work, &projects, cfg.representation, cfg.window, cfg.vocab_size)?;
    split_dataset(work, &cfg.split, cfg.seed)?;
    train(work, &cfg.classifier_config(), &cfg.train_config())?;
    predict(work, &work.path(CHECKPOINT_FILE), cfg.evaluate.no_diff_mode)?;
    let report = evaluate(work, cfg.evaluate.threshold, cfg.evaluate.sweep)?;
    if cfg.evaluate.time_model {
        return report_time_model(work, cfg.evaluate.flops_per_step);
    }
    Ok(report)
}
