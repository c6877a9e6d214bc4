//! Name-and-line feature classifier.
//!
//! Four token groups (method name, test name, mutated line before, mutated
//! line after) share one embedding table and are mean-pooled; the pooled
//! vectors are concatenated with one-hot operator and sub-operator codes and
//! fed to a two-layer feed-forward head. Method and test bodies are never
//! read.

use std::ops::Range;

use super::ops::{gelu, gelu_grad, linear, linear_backward};
use super::transformer::split2;
use super::{apply_mask, Classifier, ClassifierConfig, Dropout, Init, LayoutBuilder, ModelError};
use crate::encoding::EncodedExample;
use crate::mutation::{OperatorKind, SUB_OPERATOR_COUNT};

pub(crate) const GROUPS: usize = 4;
const OPERATORS: usize = OperatorKind::ALL.len();

pub(crate) struct Index {
    emb: Range<usize>,
    w1: Range<usize>,
    b1: Range<usize>,
    w2: Range<usize>,
    b2: Range<usize>,
}

pub(crate) struct Inputs<'a> {
    groups: [&'a [u32]; GROUPS],
    operator: usize,
    sub_operator: usize,
}

pub(crate) struct Forward {
    pub logits: [f64; 2],
    input: Vec<f64>,
    u: Vec<f64>,
    h: Vec<f64>,
    mask: Option<Vec<f64>>,
}

impl Index {
    fn input_dim(cfg: &ClassifierConfig) -> usize {
        GROUPS * cfg.embed_dim + OPERATORS + SUB_OPERATOR_COUNT
    }

    pub(crate) fn build(cfg: &ClassifierConfig, vocab_size: usize, b: &mut LayoutBuilder, inits: &mut Vec<Init>) -> Index {
        let d = cfg.embed_dim;
        let f = cfg.ff_dim;
        let i = Self::input_dim(cfg);
        let mut push = |name: &str, len: usize, decay: bool, init: Init| {
            inits.push(init);
            b.push(name, len, decay)
        };
        Index {
            emb: push("tok_emb", vocab_size * d, false, Init::Uniform(0.1 * 3f64.sqrt())),
            w1: push("hidden_w", i * f, true, Init::Uniform((6.0 / (i + f) as f64).sqrt())),
            b1: push("hidden_b", f, false, Init::Zero),
            w2: push("head_w", f * 2, true, Init::Zero),
            b2: push("head_b", 2, false, Init::Zero),
        }
    }

    pub(crate) fn inputs<'a>(&self, c: &Classifier, ex: &'a EncodedExample) -> Result<Inputs<'a>, ModelError> {
        let feats = ex
            .features
            .as_ref()
            .ok_or_else(|| ModelError::MissingFeatures { mutant_id: ex.mutant_id.clone(), test_id: ex.test_id.clone() })?;
        let groups = [&feats.method_name[..], &feats.test_name[..], &feats.before_line[..], &feats.after_line[..]];
        for g in groups {
            if let Some(&id) = g.iter().find(|&&id| id as usize >= c.vocab_size) {
                return Err(ModelError::IdOutOfRange { id, vocab_size: c.vocab_size });
            }
        }
        if feats.operator >= OPERATORS || feats.sub_operator >= SUB_OPERATOR_COUNT {
            return Err(ModelError::Dimension(format!(
                "operator code ({}, {}) out of range",
                feats.operator, feats.sub_operator
            )));
        }
        Ok(Inputs { groups, operator: feats.operator, sub_operator: feats.sub_operator })
    }

    pub(crate) fn forward(&self, p: &[f64], cfg: &ClassifierConfig, x: &Inputs, dropout_seed: Option<u64>) -> Forward {
        let d = cfg.embed_dim;
        let f = cfg.ff_dim;
        let i = Self::input_dim(cfg);
        let emb = &p[self.emb.clone()];
        let mut input = vec![0.0; i];
        for (g, ids) in x.groups.iter().enumerate() {
            if ids.is_empty() {
                continue;
            }
            let inv = 1.0 / ids.len() as f64;
            let slot = &mut input[g * d..(g + 1) * d];
            for &id in ids.iter() {
                for (s, &e) in slot.iter_mut().zip(&emb[id as usize * d..(id as usize + 1) * d]) {
                    *s += e * inv;
                }
            }
        }
        input[GROUPS * d + x.operator] = 1.0;
        input[GROUPS * d + OPERATORS + x.sub_operator] = 1.0;
        let u = linear(&input, 1, i, &p[self.w1.clone()], &p[self.b1.clone()], f);
        let mut h: Vec<f64> = u.iter().map(|&v| gelu(v)).collect();
        let mask = Dropout::new(dropout_seed, cfg.dropout).map(|mut m| m.apply(&mut h));
        let z = linear(&h, 1, f, &p[self.w2.clone()], &p[self.b2.clone()], 2);
        Forward { logits: [z[0], z[1]], input, u, h, mask }
    }

    pub(crate) fn backward(&self, p: &[f64], cfg: &ClassifierConfig, x: &Inputs, fwd: &Forward, dz: [f64; 2], grad: &mut [f64]) {
        let d = cfg.embed_dim;
        let f = cfg.ff_dim;
        let i = Self::input_dim(cfg);
        let (dw2, db2) = split2(grad, &self.w2, &self.b2);
        let mut dh = linear_backward(&fwd.h, 1, f, &p[self.w2.clone()], 2, &dz, dw2, db2);
        apply_mask(fwd.mask.as_ref(), &mut dh);
        for (g, &u) in dh.iter_mut().zip(&fwd.u) {
            *g *= gelu_grad(u);
        }
        let (dw1, db1) = split2(grad, &self.w1, &self.b1);
        let dinput = linear_backward(&fwd.input, 1, i, &p[self.w1.clone()], f, &dh, dw1, db1);
        for (g, ids) in x.groups.iter().enumerate() {
            if ids.is_empty() {
                continue;
            }
            let inv = 1.0 / ids.len() as f64;
            let src = &dinput[g * d..(g + 1) * d];
            for &id in ids.iter() {
                let o = self.emb.start + id as usize * d;
                for (gv, &s) in grad[o..o + d].iter_mut().zip(src) {
                    *gv += s * inv;
                }
            }
        }
    }

    pub(crate) fn cost(&self, cfg: &ClassifierConfig) -> u64 {
        let i = Self::input_dim(cfg) as u64;
        let f = cfg.ff_dim as u64;
        i * f + 2 * f
    }
}
