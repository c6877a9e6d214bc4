//! Trains both classifiers on the generated rule dataset and prints held-out
//! F1 per epoch.
//!
//! cargo run --release --example learnability [seed]

use std::time::Instant;

use killmatrix::encoding::EncodedExample;
use killmatrix::eval::Prf;
use killmatrix::model::synthetic::{generate, SyntheticConfig};
use killmatrix::model::{train, Classifier, ClassifierConfig, ModelKind, TrainConfig};

fn f1(c: &Classifier, set: &[EncodedExample]) -> f64 {
    Prf::from_pairs(set.iter().map(|e| (c.predict(e).unwrap() > 0.5, e.is_detected() == Some(true)))).f1
}

fn main() {
    let seed: u64 = std::env::args().nth(1).map_or(0, |s| s.parse().expect("seed is an integer"));
    let set = generate(&SyntheticConfig { seed, ..Default::default() });
    let tc = TrainConfig { epochs: 20, batch_size: 16, learning_rate: 3e-3, warmup_steps: 125, seed, ..Default::default() };
    for kind in [ModelKind::FeatureBaseline, ModelKind::Transformer] {
        let cc = ClassifierConfig { model_kind: kind, layers: 2, heads: 4, embed_dim: 32, ff_dim: 64, window: 128, dropout: 0.0, seed };
        let t = Instant::now();
        let (c, log) = train(&set.train, &set.val, &tc, &cc, &set.vocab).unwrap();
        for e in &log.epochs {
            println!("  {kind:?} epoch {:2} loss {:.4} val F1 {:.3}", e.epoch, e.train_loss, e.val_f1);
        }
        println!("{kind:?}: test F1 {:.3}, best epoch {}, {:.1}s", f1(&c, &set.test), log.best_epoch, t.elapsed().as_secs_f64());
    }
}
