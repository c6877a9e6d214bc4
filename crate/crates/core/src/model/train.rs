//! Mini-batch training: class-weighted cross-entropy, AdamW, linear warmup
//! followed by cosine decay, best-validation-F1 checkpoint selection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{to_f32_grid, Classifier, ClassifierConfig, ModelError};
use crate::encoding::{EncodedExample, Vocabulary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Peak learning rate, reached at the end of warmup.
    pub learning_rate: f64,
    pub warmup_steps: usize,
    pub weight_decay: f64,
    /// Global gradient-norm clip; `0` disables clipping.
    pub grad_clip: f64,
    /// `[w_detected, w_undetected]`; inverse class frequency when absent.
    pub class_weights: Option<[f64; 2]>,
    pub seed: u64,
    /// Parameter groups kept fixed.
    pub frozen: Vec<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 16,
            learning_rate: 1e-3,
            warmup_steps: 1000,
            weight_decay: 0.01,
            grad_clip: 1.0,
            class_weights: None,
            seed: 0,
            frozen: Vec::new(),
        }
    }
}

impl TrainConfig {
    pub fn steps_per_epoch(&self, examples: usize) -> usize {
        examples.div_ceil(self.batch_size.max(1))
    }

    pub fn total_steps(&self, examples: usize) -> usize {
        self.epochs * self.steps_per_epoch(examples)
    }

    pub fn validate(&self, examples: usize) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive".into());
        }
        if !(self.learning_rate > 0.0) || self.weight_decay < 0.0 || self.grad_clip < 0.0 {
            return bad("learning_rate must be positive; weight_decay and grad_clip non-negative".into());
        }
        let total = self.total_steps(examples);
        if self.warmup_steps > total {
            return bad(format!("warmup_steps {} exceeds the {total} total training steps", self.warmup_steps));
        }
        if let Some(w) = self.class_weights {
            if !(w[0] > 0.0 && w[1] > 0.0) {
                return bad("class weights must be positive".into());
            }
        }
        Ok(())
    }
}

/// Learning rate of update `step` (0-based).
pub fn lr_at(step: usize, total: usize, warmup: usize, peak: f64) -> f64 {
    if step < warmup {
        return peak * (step + 1) as f64 / warmup as f64;
    }
    let span = total.saturating_sub(warmup).max(1) as f64;
    let progress = ((step - warmup) as f64 / span).min(1.0);
    peak * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

/// Inverse class frequency normalized to mean 1: `w_c = N / (2·n_c)`.
/// Returns `[w_detected, w_undetected]`; an absent class gets weight 1.
pub fn class_weights(examples: &[EncodedExample]) -> [f64; 2] {
    let n = examples.len() as f64;
    let detected = examples.iter().filter(|e| e.is_detected() == Some(true)).count() as f64;
    let undetected = examples.iter().filter(|e| e.is_detected() == Some(false)).count() as f64;
    let w = |c: f64| if c > 0.0 { n / (2.0 * c) } else { 1.0 };
    [w(detected), w(undetected)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_precision: f64,
    pub val_recall: f64,
    pub val_f1: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub classifier: ClassifierConfig,
    pub train: TrainConfig,
    pub class_weights: [f64; 2],
    pub train_examples: usize,
    pub val_examples: usize,
    pub total_steps: usize,
    pub epochs: Vec<EpochLog>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_f1: f64,
}

/// Trains a freshly initialized classifier for `vocab`.
pub fn train(
    train_set: &[EncodedExample],
    val_set: &[EncodedExample],
    tc: &TrainConfig,
    cc: &ClassifierConfig,
    vocab: &Vocabulary,
) -> Result<(Classifier, TrainingLog), ModelError> {
    Classifier::init(cc, vocab)?.train(train_set, val_set, tc)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Examples per gradient accumulator; fixes the summation order independently
/// of the worker count.
const CHUNK: usize = 4;

struct AdamW {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Classifier {
    /// Continues training from the current parameters.
    pub fn train(
        mut self,
        train_set: &[EncodedExample],
        val_set: &[EncodedExample],
        tc: &TrainConfig,
    ) -> Result<(Classifier, TrainingLog), ModelError> {
        if train_set.is_empty() {
            return Err(ModelError::EmptyDataset("training"));
        }
        if val_set.is_empty() {
            return Err(ModelError::EmptyDataset("validation"));
        }
        tc.validate(train_set.len())?;
        for ex in train_set.iter().chain(val_set) {
            if ex.label.is_none() {
                return Err(ModelError::MissingLabel { mutant_id: ex.mutant_id.clone(), test_id: ex.test_id.clone() });
            }
        }
        let weights = tc.class_weights.unwrap_or_else(|| class_weights(train_set));
        let weight_of = |ex: &EncodedExample| if ex.is_detected() == Some(true) { weights[0] } else { weights[1] };
        let total = tc.total_steps(train_set.len());
        let decay: Vec<bool> = {
            let mut d = vec![false; self.params.len()];
            for g in self.groups.iter().filter(|g| g.decay) {
                d[g.range()].fill(true);
            }
            d
        };
        let mut opt = AdamW { m: vec![0.0; self.params.len()], v: vec![0.0; self.params.len()], t: 0 };
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        let mut epochs = Vec::new();
        // (epoch, val F1, val loss, parameters)
        let mut best: Option<(usize, f64, f64, Vec<f64>)> = None;
        let mut step = 0usize;
        let mut lr = 0.0;

        for epoch in 1..=tc.epochs {
            let mut rng = ChaCha8Rng::seed_from_u64(splitmix(tc.seed ^ (epoch as u64).rotate_left(32)));
            order.shuffle(&mut rng);
            let mut loss_sum = 0.0;
            let mut weight_sum = 0.0;
            for batch in order.chunks(tc.batch_size) {
                let model = &self;
                let parts: Vec<Result<(f64, Vec<f64>), ModelError>> = batch
                    .chunks(CHUNK)
                    .enumerate()
                    .collect::<Vec<_>>()
                    .into_par_iter()
                    .map(|(ci, chunk)| {
                        let mut g = vec![0.0; model.params.len()];
                        let mut l = 0.0;
                        for (k, &i) in chunk.iter().enumerate() {
                            let ex = &train_set[i];
                            let seed = splitmix(tc.seed ^ splitmix(step as u64) ^ ((ci * CHUNK + k) as u64) << 40);
                            l += model.accumulate_gradient(ex, weight_of(ex), Some(seed), &mut g)?;
                        }
                        Ok((l, g))
                    })
                    .collect();
                let mut grad = vec![0.0; self.params.len()];
                let mut batch_loss = 0.0;
                for part in parts {
                    let (l, g) = part?;
                    batch_loss += l;
                    for (a, b) in grad.iter_mut().zip(&g) {
                        *a += b;
                    }
                }
                let batch_weight: f64 = batch.iter().map(|&i| weight_of(&train_set[i])).sum();
                if !batch_loss.is_finite() {
                    return Err(ModelError::Divergence { epoch, step, loss: batch_loss });
                }
                loss_sum += batch_loss;
                weight_sum += batch_weight;
                for g in &mut grad {
                    *g /= batch_weight;
                }
                self.zero_frozen(&tc.frozen, &mut grad);
                if tc.grad_clip > 0.0 {
                    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                    if !norm.is_finite() {
                        return Err(ModelError::Divergence { epoch, step, loss: norm });
                    }
                    if norm > tc.grad_clip {
                        let s = tc.grad_clip / norm;
                        grad.iter_mut().for_each(|g| *g *= s);
                    }
                }
                lr = lr_at(step, total, tc.warmup_steps, tc.learning_rate);
                opt.t += 1;
                let bc1 = 1.0 - BETA1.powi(opt.t);
                let bc2 = 1.0 - BETA2.powi(opt.t);
                for i in 0..self.params.len() {
                    let g = grad[i];
                    if g == 0.0 && opt.m[i] == 0.0 && opt.v[i] == 0.0 {
                        continue;
                    }
                    opt.m[i] = BETA1 * opt.m[i] + (1.0 - BETA1) * g;
                    opt.v[i] = BETA2 * opt.v[i] + (1.0 - BETA2) * g * g;
                    let mut update = (opt.m[i] / bc1) / ((opt.v[i] / bc2).sqrt() + ADAM_EPS);
                    if decay[i] {
                        update += tc.weight_decay * self.params[i];
                    }
                    self.params[i] = to_f32_grid(self.params[i] - lr * update);
                }
                step += 1;
            }

            let (val_loss, counts) = self.evaluate(val_set, &weights)?;
            let (precision, recall, f1) = counts.prf();
            epochs.push(EpochLog {
                epoch,
                train_loss: loss_sum / weight_sum,
                val_loss,
                val_precision: precision,
                val_recall: recall,
                val_f1: f1,
                learning_rate: lr,
            });
            // Ties on F1 go to the lower validation loss.
            if best.as_ref().map_or(true, |b| f1 > b.1 || (f1 == b.1 && val_loss < b.2)) {
                best = Some((epoch, f1, val_loss, self.params.clone()));
            }
        }

        let (best_epoch, best_val_f1, _, params) = best.expect("at least one epoch");
        self.params = params;
        let log = TrainingLog {
            classifier: self.config.clone(),
            train: tc.clone(),
            class_weights: weights,
            train_examples: train_set.len(),
            val_examples: val_set.len(),
            total_steps: total,
            epochs,
            best_epoch,
            best_val_f1,
        };
        Ok((self, log))
    }

    /// Weighted validation loss and detected-positive confusion counts at the
    /// 0.5 cutoff.
    fn evaluate(&self, set: &[EncodedExample], weights: &[f64; 2]) -> Result<(f64, Counts), ModelError> {
        let results: Vec<Result<([f64; 2], bool), ModelError>> = set
            .par_iter()
            .map(|ex| Ok((self.class_probabilities(ex)?, ex.is_detected() == Some(true))))
            .collect();
        let mut counts = Counts::default();
        let mut loss = 0.0;
        let mut wsum = 0.0;
        for r in results {
            let (p, truth) = r?;
            let w = if truth { weights[0] } else { weights[1] };
            loss += -w * p[usize::from(truth)].max(f64::MIN_POSITIVE).ln();
            wsum += w;
            counts.add(p[1] > 0.5, truth);
        }
        Ok((loss / wsum, counts))
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct Counts {
    tp: usize,
    fp: usize,
    fn_: usize,
}

impl Counts {
    fn add(&mut self, predicted: bool, truth: bool) {
        match (predicted, truth) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => {}
        }
    }

    fn prf(&self) -> (f64, f64, f64) {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let p = ratio(self.tp, self.tp + self.fp);
        let r = ratio(self.tp, self.tp + self.fn_);
        let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        (p, r, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::{CLS, SEP};
    use crate::groundtruth::Verdict;
    use crate::model::tests::example;

    fn tiny() -> ClassifierConfig {
        ClassifierConfig { layers: 1, heads: 2, embed_dim: 8, ff_dim: 16, window: 16, dropout: 0.1, ..Default::default() }
    }

    #[test]
    fn schedule_shape() {
        assert_eq!(lr_at(0, 100, 10, 1.0), 0.1);
        assert_eq!(lr_at(9, 100, 10, 1.0), 1.0);
        assert_eq!(lr_at(10, 100, 10, 1.0), 1.0);
        assert!((lr_at(55, 100, 10, 1.0) - 0.5).abs() < 1e-12);
        assert!(lr_at(99, 100, 10, 1.0) < 0.01);
        assert_eq!(lr_at(0, 10, 0, 2.0), 2.0);
    }

    #[test]
    fn inverse_frequency_weights() {
        let mut set = vec![example(vec![CLS], Some(Verdict::Detected)); 3];
        set.push(example(vec![CLS], Some(Verdict::Undetected)));
        assert_eq!(class_weights(&set), [4.0 / 6.0, 2.0]);
        let mean = (3.0 * class_weights(&set)[0] + class_weights(&set)[1]) / 4.0;
        assert!((mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn warmup_longer_than_training_is_rejected() {
        let set = vec![example(vec![CLS, 7], Some(Verdict::Detected))];
        let tc = TrainConfig { epochs: 2, warmup_steps: 3, ..Default::default() };
        let c = Classifier::init_sized(&tiny(), 10, "v").unwrap();
        assert!(matches!(c.train(&set, &set, &tc), Err(ModelError::Config(_))));
    }

    #[test]
    fn memorizes_a_repeated_example() {
        let set = vec![example(vec![CLS, 7, SEP, 8], Some(Verdict::Detected)); 8];
        let tc = TrainConfig { epochs: 30, batch_size: 8, warmup_steps: 3, learning_rate: 0.05, ..Default::default() };
        let c = Classifier::init_sized(&ClassifierConfig { dropout: 0.0, ..tiny() }, 10, "v").unwrap();
        let (c, log) = c.train(&set, &set, &tc).unwrap();
        assert!(log.epochs.last().unwrap().train_loss < 0.01, "{:?}", log.epochs.last());
        assert!(c.predict(&set[0]).unwrap() > 0.99);
    }

    #[test]
    fn training_is_deterministic() {
        let mut set = Vec::new();
        for i in 0..24u32 {
            let label = if i % 3 == 0 { Verdict::Detected } else { Verdict::Undetected };
            set.push(example(vec![CLS, 7 + i % 3, SEP, 7 + i % 2], Some(label)));
        }
        let tc = TrainConfig { epochs: 3, batch_size: 5, warmup_steps: 2, ..Default::default() };
        let run = || Classifier::init_sized(&tiny(), 10, "v").unwrap().train(&set, &set[..6], &tc).unwrap();
        let (a, la) = run();
        let (b, lb) = run();
        assert_eq!(la, lb);
        assert_eq!(a.params(), b.params());
        assert_eq!(a.to_bytes(), b.to_bytes());
    }

    #[test]
    fn divergence_is_reported() {
        let set = vec![example(vec![CLS, 7], Some(Verdict::Detected))];
        let tc = TrainConfig { epochs: 1, warmup_steps: 0, grad_clip: 0.0, ..Default::default() };
        let mut c = Classifier::init_sized(&tiny(), 10, "v").unwrap();
        let head = c.group("head_w").unwrap().range();
        c.params_mut()[head].fill(f64::NAN);
        assert!(matches!(c.train(&set, &set, &tc), Err(ModelError::Divergence { .. })));
    }
}
