//! Analytic gradients against central finite differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Classifier, ClassifierConfig, ModelError};
use crate::encoding::EncodedExample;

pub const FD_EPSILON: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// `(group name, relative error)`.
    pub groups: Vec<(String, f64)>,
    pub max_relative_error: f64,
    pub loss: f64,
}

/// Relative error `‖a − n‖ / (‖a‖ + ‖n‖)`, zero when both vanish.
fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, n)| a - n));
    let scale = norm(&mut analytic.iter().copied()) + norm(&mut numeric.iter().copied());
    if scale < 1e-10 {
        0.0
    } else {
        diff / scale
    }
}

/// Compares analytic and finite-difference gradients of one labelled example
/// for every parameter group. All parameters, including the zero-initialized
/// head, are first perturbed from `config.seed` so every path carries signal.
/// Dropout is off.
pub fn gradient_check(config: &ClassifierConfig, vocab_size: usize, example: &EncodedExample) -> Result<GradCheckReport, ModelError> {
    let mut c = Classifier::init_sized(config, vocab_size, "gradient-check")?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    for p in c.params_mut() {
        *p += rng.gen_range(-0.3..0.3);
    }
    let (loss, analytic) = c.loss_gradient(example, &[])?;
    let mut groups = Vec::new();
    let mut max = 0.0f64;
    for g in c.groups.clone() {
        let mut numeric = vec![0.0; g.len];
        for (k, slot) in numeric.iter_mut().enumerate() {
            let i = g.offset + k;
            if analytic[i] == 0.0 && is_untouched(&c, &g.name, k, example) {
                continue;
            }
            let orig = c.params[i];
            c.params[i] = orig + FD_EPSILON;
            let up = c.loss(example)?;
            c.params[i] = orig - FD_EPSILON;
            let down = c.loss(example)?;
            c.params[i] = orig;
            *slot = (up - down) / (2.0 * FD_EPSILON);
        }
        let err = relative_error(&analytic[g.range()], &numeric);
        max = max.max(err);
        groups.push((g.name.clone(), err));
    }
    Ok(GradCheckReport { groups, max_relative_error: max, loss })
}

/// Embedding rows of tokens or positions the example never reads; their
/// true gradient is exactly zero, so the finite difference is skipped.
fn is_untouched(c: &Classifier, group: &str, k: usize, ex: &EncodedExample) -> bool {
    let d = c.config.embed_dim;
    match group {
        "tok_emb" => {
            let id = (k / d) as u32;
            let in_ids = ex.ids.contains(&id);
            let in_feats = ex.features.as_ref().is_some_and(|f| {
                [&f.method_name, &f.test_name, &f.before_line, &f.after_line].iter().any(|g| g.contains(&id))
            });
            !in_ids && !in_feats
        }
        "pos_emb" => k / d >= ex.ids.len(),
        _ => false,
    }
}
