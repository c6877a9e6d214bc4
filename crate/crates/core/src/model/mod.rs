//! Binary classifiers over encoded (mutant, test) pairs.
//!
//! Two model kinds share one container, [`Classifier`]:
//!
//! * a small transformer encoder trained from scratch; it classifies from the
//!   final hidden state of the `<CLS>` position
//! * a feature baseline that only sees the method name, the test name, the
//!   mutated line before and after, and the operator
//!
//! All arithmetic is `f64`. Parameters are kept representable as `f32` so a
//! checkpoint (little-endian `f32`) reloads bit-identically.

mod baseline;
mod checkpoint;
mod gradcheck;
mod ops;
pub mod synthetic;
mod train;
mod transformer;

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use std::collections::HashMap;

use rayon::prelude::*;

use crate::encoding::{CodeVersion, EncodedExample, Vocabulary, PAD};
use crate::eval::{PredictionEntry, PredictionMatrix};
use crate::groundtruth::Verdict;

pub use checkpoint::{CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use train::{class_weights, lr_at, train, EpochLog, TrainConfig, TrainingLog};

/// Probability that a pair is detected.
pub type Probability = f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Transformer,
    FeatureBaseline,
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "transformer" => Ok(ModelKind::Transformer),
            "baseline" | "feature_baseline" | "feature-baseline" => Ok(ModelKind::FeatureBaseline),
            other => Err(format!("unknown model `{other}` (expected transformer or baseline)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub model_kind: ModelKind,
    pub layers: usize,
    pub heads: usize,
    pub embed_dim: usize,
    pub ff_dim: usize,
    pub window: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            model_kind: ModelKind::Transformer,
            layers: 2,
            heads: 4,
            embed_dim: 64,
            ff_dim: 256,
            window: crate::encoding::DEFAULT_WINDOW,
            dropout: 0.1,
            seed: 0,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.embed_dim == 0 || self.ff_dim == 0 {
            return bad("embed_dim and ff_dim must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if self.model_kind == ModelKind::Transformer {
            if self.layers == 0 || self.heads == 0 {
                return bad("layers and heads must be positive".into());
            }
            if self.embed_dim % self.heads != 0 {
                return bad(format!("embed_dim {} is not divisible by heads {}", self.embed_dim, self.heads));
            }
            if self.window == 0 || self.window > crate::encoding::MAX_WINDOW {
                return bad(format!("window must be in 1..={}, got {}", crate::encoding::MAX_WINDOW, self.window));
            }
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("token id {id} is outside the vocabulary of size {vocab_size}")]
    IdOutOfRange { id: u32, vocab_size: usize },
    #[error("sequence of {len} tokens exceeds the window of {window}")]
    TooLong { len: usize, window: usize },
    #[error("empty token sequence")]
    EmptySequence,
    #[error("pair ({mutant_id}, {test_id}) has no baseline features")]
    MissingFeatures { mutant_id: String, test_id: String },
    #[error("pair ({mutant_id}, {test_id}) has no label")]
    MissingLabel { mutant_id: String, test_id: String },
    #[error("{0} dataset is empty")]
    EmptyDataset(&'static str),
    #[error("training diverged at epoch {epoch}, step {step}: loss is {loss}")]
    Divergence { epoch: usize, step: usize, loss: f64 },
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A named contiguous slice of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamGroup {
    pub name: String,
    pub offset: usize,
    pub len: usize,
    /// Whether weight decay applies.
    pub decay: bool,
}

impl ParamGroup {
    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len
    }
}

#[derive(Default)]
pub(crate) struct LayoutBuilder {
    groups: Vec<ParamGroup>,
    total: usize,
}

impl LayoutBuilder {
    pub(crate) fn push(&mut self, name: impl Into<String>, len: usize, decay: bool) -> Range<usize> {
        let r = self.total..self.total + len;
        self.groups.push(ParamGroup { name: name.into(), offset: self.total, len, decay });
        self.total += len;
        r
    }
}

/// How a group is initialized.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Init {
    Zero,
    One,
    /// Uniform in `[-a, a]`.
    Uniform(f64),
}

pub(crate) enum Net {
    Transformer(transformer::Index),
    Baseline(baseline::Index),
}

pub struct Classifier {
    config: ClassifierConfig,
    vocab_size: usize,
    vocab_hash: String,
    params: Vec<f64>,
    groups: Vec<ParamGroup>,
    net: Net,
}

impl std::fmt::Debug for Classifier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Classifier")
            .field("config", &self.config)
            .field("vocab_size", &self.vocab_size)
            .field("params", &self.params.len())
            .finish()
    }
}

impl Clone for Classifier {
    fn clone(&self) -> Self {
        let (net, groups, _) = build_net(&self.config, self.vocab_size);
        Classifier {
            config: self.config.clone(),
            vocab_size: self.vocab_size,
            vocab_hash: self.vocab_hash.clone(),
            params: self.params.clone(),
            groups,
            net,
        }
    }
}

fn build_net(config: &ClassifierConfig, vocab_size: usize) -> (Net, Vec<ParamGroup>, Vec<Init>) {
    let mut b = LayoutBuilder::default();
    let mut inits = Vec::new();
    let net = match config.model_kind {
        ModelKind::Transformer => Net::Transformer(transformer::Index::build(config, vocab_size, &mut b, &mut inits)),
        ModelKind::FeatureBaseline => Net::Baseline(baseline::Index::build(config, vocab_size, &mut b, &mut inits)),
    };
    (net, b.groups, inits)
}

/// Rounds to the nearest `f32` so checkpoints are lossless.
pub(crate) fn to_f32_grid(v: f64) -> f64 {
    v as f32 as f64
}

impl Classifier {
    /// Fresh parameters for `vocab`. The classification head starts at zero,
    /// so every prediction of an untrained model is exactly 0.5.
    pub fn init(config: &ClassifierConfig, vocab: &Vocabulary) -> Result<Classifier, ModelError> {
        Self::init_sized(config, vocab.len(), vocab.hash())
    }

    pub fn init_sized(config: &ClassifierConfig, vocab_size: usize, vocab_hash: impl Into<String>) -> Result<Classifier, ModelError> {
        config.validate()?;
        if vocab_size <= PAD as usize {
            return Err(ModelError::Config("vocabulary is empty".into()));
        }
        let (net, groups, inits) = build_net(config, vocab_size);
        let total = groups.last().map(|g| g.offset + g.len).unwrap_or(0);
        let mut params = vec![0.0; total];
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        for (g, init) in groups.iter().zip(&inits) {
            for p in &mut params[g.range()] {
                *p = match *init {
                    Init::Zero => 0.0,
                    Init::One => 1.0,
                    Init::Uniform(a) => to_f32_grid(rng.gen_range(-a..=a)),
                };
            }
        }
        Ok(Classifier { config: config.clone(), vocab_size, vocab_hash: vocab_hash.into(), params, groups, net })
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.config
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn vocab_hash(&self) -> &str {
        &self.vocab_hash
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn groups(&self) -> &[ParamGroup] {
        &self.groups
    }

    pub fn group(&self, name: &str) -> Option<&ParamGroup> {
        self.groups.iter().find(|g| g.name == name)
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Fails unless the model was built for exactly this vocabulary.
    pub fn check_vocab(&self, vocab: &Vocabulary) -> Result<(), ModelError> {
        if vocab.len() != self.vocab_size {
            return Err(ModelError::Dimension(format!(
                "checkpoint expects a vocabulary of {} tokens, got {}",
                self.vocab_size,
                vocab.len()
            )));
        }
        if vocab.hash() != self.vocab_hash {
            return Err(ModelError::Dimension("vocabulary content differs from the one the model was trained with".into()));
        }
        Ok(())
    }

    /// Token ids with trailing padding removed, validated.
    pub(crate) fn tokens<'a>(&self, example: &'a EncodedExample) -> Result<&'a [u32], ModelError> {
        let mut ids = &example.ids[..];
        while let [rest @ .., PAD] = ids {
            ids = rest;
        }
        if ids.is_empty() {
            return Err(ModelError::EmptySequence);
        }
        if ids.len() > self.config.window {
            return Err(ModelError::TooLong { len: ids.len(), window: self.config.window });
        }
        if let Some(&id) = ids.iter().find(|&&id| id as usize >= self.vocab_size) {
            return Err(ModelError::IdOutOfRange { id, vocab_size: self.vocab_size });
        }
        Ok(ids)
    }

    fn logits(&self, example: &EncodedExample) -> Result<[f64; 2], ModelError> {
        match &self.net {
            Net::Transformer(idx) => {
                let ids = self.tokens(example)?;
                Ok(idx.forward(&self.params, &self.config, ids, None).logits)
            }
            Net::Baseline(idx) => {
                let inputs = idx.inputs(self, example)?;
                Ok(idx.forward(&self.params, &self.config, &inputs, None).logits)
            }
        }
    }

    /// `[P(undetected), P(detected)]` in inference mode.
    pub fn class_probabilities(&self, example: &EncodedExample) -> Result<[f64; 2], ModelError> {
        Ok(ops::softmax2(self.logits(example)?))
    }

    /// Probability that the pair is detected.
    pub fn predict(&self, example: &EncodedExample) -> Result<Probability, ModelError> {
        Ok(self.class_probabilities(example)?[1])
    }

    /// Multiply-add count of one forward pass, used as the inference cost.
    pub fn inference_cost(&self, example: &EncodedExample) -> u64 {
        match &self.net {
            Net::Transformer(_) => {
                let n = example.ids.iter().rposition(|&id| id != PAD).map_or(0, |p| p + 1) as u64;
                let d = self.config.embed_dim as u64;
                let f = self.config.ff_dim as u64;
                let per_layer = n * (4 * d * d + 2 * d * f) + 2 * n * n * d;
                self.config.layers as u64 * per_layer + 2 * d
            }
            Net::Baseline(idx) => idx.cost(&self.config),
        }
    }

    /// Loss of one labelled example scaled by `weight`, with its gradient
    /// added into `grad`. `dropout_seed: None` disables dropout.
    pub(crate) fn accumulate_gradient(
        &self,
        example: &EncodedExample,
        weight: f64,
        dropout_seed: Option<u64>,
        grad: &mut [f64],
    ) -> Result<f64, ModelError> {
        let label = example
            .is_detected()
            .ok_or_else(|| ModelError::MissingLabel { mutant_id: example.mutant_id.clone(), test_id: example.test_id.clone() })?;
        let y = usize::from(label);
        match &self.net {
            Net::Transformer(idx) => {
                let ids = self.tokens(example)?;
                let fwd = idx.forward(&self.params, &self.config, ids, dropout_seed);
                let (loss, dz) = weighted_ce(fwd.logits, y, weight);
                idx.backward(&self.params, &self.config, ids, &fwd, dz, grad);
                Ok(loss)
            }
            Net::Baseline(idx) => {
                let inputs = idx.inputs(self, example)?;
                let fwd = idx.forward(&self.params, &self.config, &inputs, dropout_seed);
                let (loss, dz) = weighted_ce(fwd.logits, y, weight);
                idx.backward(&self.params, &self.config, &inputs, &fwd, dz, grad);
                Ok(loss)
            }
        }
    }

    /// Unscaled cross-entropy of one labelled example in inference mode.
    pub fn loss(&self, example: &EncodedExample) -> Result<f64, ModelError> {
        let label = example
            .is_detected()
            .ok_or_else(|| ModelError::MissingLabel { mutant_id: example.mutant_id.clone(), test_id: example.test_id.clone() })?;
        Ok(weighted_ce(self.logits(example)?, usize::from(label), 1.0).0)
    }

    /// Loss and full gradient of one labelled example in inference mode;
    /// groups named in `frozen` get a zero gradient.
    pub fn loss_gradient(&self, example: &EncodedExample, frozen: &[String]) -> Result<(f64, Vec<f64>), ModelError> {
        let mut grad = vec![0.0; self.params.len()];
        let loss = self.accumulate_gradient(example, 1.0, None, &mut grad)?;
        self.zero_frozen(frozen, &mut grad);
        Ok((loss, grad))
    }

    pub(crate) fn zero_frozen(&self, frozen: &[String], grad: &mut [f64]) {
        for g in self.groups.iter().filter(|g| frozen.contains(&g.name)) {
            grad[g.range()].fill(0.0);
        }
    }
}

/// Probabilities for every pair of `dataset`. For no-diff data only the
/// mutated half of each pair is scored.
pub fn predict_matrix(classifier: &Classifier, dataset: &[EncodedExample]) -> Result<PredictionMatrix, ModelError> {
    let scored: Vec<&EncodedExample> = dataset.iter().filter(|e| e.version != Some(CodeVersion::Original)).collect();
    let probs: Vec<Result<f64, ModelError>> = scored.par_iter().map(|e| classifier.predict(e)).collect();
    let mut matrix = PredictionMatrix::new();
    for (e, p) in scored.into_iter().zip(probs) {
        let entry = PredictionEntry { probability: p?, inference_cost: classifier.inference_cost(e) };
        matrix.insert(e.mutant_id.clone(), e.test_id.clone(), entry).expect("softmax output lies in [0, 1]");
    }
    Ok(matrix)
}

/// Both halves of one no-diff pair, scored.
#[derive(Debug, Clone, PartialEq)]
pub struct NoDiffScore {
    pub mutant_id: String,
    pub test_id: String,
    pub original: f64,
    pub mutated: f64,
    pub inference_cost: u64,
    pub label: Option<Verdict>,
}

/// Scores original and mutated halves of every no-diff pair, in the order of
/// the mutated examples.
pub fn score_no_diff_pairs(classifier: &Classifier, dataset: &[EncodedExample]) -> Result<Vec<NoDiffScore>, ModelError> {
    let mut originals: HashMap<(&str, &str), &EncodedExample> = HashMap::new();
    for e in dataset.iter().filter(|e| e.version == Some(CodeVersion::Original)) {
        originals.insert((e.mutant_id.as_str(), e.test_id.as_str()), e);
    }
    let mutated: Vec<&EncodedExample> = dataset.iter().filter(|e| e.version == Some(CodeVersion::Mutated)).collect();
    mutated
        .par_iter()
        .map(|m| {
            let o = originals.get(&(m.mutant_id.as_str(), m.test_id.as_str())).ok_or_else(|| {
                ModelError::Dimension(format!("no-diff pair ({}, {}) lacks its original half", m.mutant_id, m.test_id))
            })?;
            Ok(NoDiffScore {
                mutant_id: m.mutant_id.clone(),
                test_id: m.test_id.clone(),
                original: classifier.predict(o)?,
                mutated: classifier.predict(m)?,
                inference_cost: classifier.inference_cost(o) + classifier.inference_cost(m),
                label: m.label,
            })
        })
        .collect()
}

/// `weight · −log softmax(z)[y]` and its gradient with respect to `z`.
fn weighted_ce(z: [f64; 2], y: usize, weight: f64) -> (f64, [f64; 2]) {
    let p = ops::softmax2(z);
    let m = z[0].max(z[1]);
    let lse = m + ((z[0] - m).exp() + (z[1] - m).exp()).ln();
    let loss = weight * (lse - z[y]);
    let mut dz = [weight * p[0], weight * p[1]];
    dz[y] -= weight;
    (loss, dz)
}

/// Inverted-dropout mask source for one example.
pub(crate) struct Dropout {
    rng: ChaCha8Rng,
    p: f64,
}

impl Dropout {
    pub(crate) fn new(seed: Option<u64>, p: f64) -> Option<Dropout> {
        match seed {
            Some(s) if p > 0.0 => Some(Dropout { rng: ChaCha8Rng::seed_from_u64(s), p }),
            _ => None,
        }
    }

    /// Applies a fresh mask to `x` and returns it (scaled keep factors).
    pub(crate) fn apply(&mut self, x: &mut [f64]) -> Vec<f64> {
        let keep = 1.0 / (1.0 - self.p);
        let mask: Vec<f64> = (0..x.len()).map(|_| if self.rng.gen::<f64>() < self.p { 0.0 } else { keep }).collect();
        for (v, m) in x.iter_mut().zip(&mask) {
            *v *= m;
        }
        mask
    }
}

pub(crate) fn apply_mask(mask: Option<&Vec<f64>>, g: &mut [f64]) {
    if let Some(mask) = mask {
        for (v, m) in g.iter_mut().zip(mask) {
            *v *= m;
        }
    }
}
