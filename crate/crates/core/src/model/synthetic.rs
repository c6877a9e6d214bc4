//! A generated dataset with a known labelling rule, for checking that a
//! classifier can use the test body.
//!
//! Each example is a real MiniLang function, one of its real mutants, and a
//! test block. The label is *detected* iff the mutant is an arithmetic
//! operator replacement **and** the test calls the mutated function. The
//! second condition lives only in the test body, so a model that sees names
//! but not bodies cannot recover it when test names are uninformative.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoding::{encode_token_diff, feature_inputs, tokenize, EncodedExample, MethodSource, TestSource, Vocabulary};
use crate::groundtruth::Verdict;
use crate::minilang::parse;
use crate::mutation::{generate_mutants, OperatorKind};

pub const FUNCTION_NAMES: [&str; 12] =
    ["scale", "shift", "clamp", "blend", "merge", "total", "limit", "delta", "pivot", "score", "round", "wrap"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestNames {
    /// `test_<first callee>`.
    Informative,
    /// `case<k>` with a random `k`, unrelated to the body.
    Opaque,
}

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub seed: u64,
    pub test_names: TestNames,
    pub window: usize,
    /// Probability that the chosen mutant is an arithmetic replacement.
    pub p_arithmetic: f64,
    /// Probability that the test calls the mutated function.
    pub p_mention: f64,
    /// How many of [`FUNCTION_NAMES`] are used.
    pub names: usize,
    /// Functions called by each test.
    pub callees: usize,
    /// Statements between the first `let` and the final `return`, at most.
    pub max_statements: usize,
    /// Whether integer literals vary between examples.
    pub random_literals: bool,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            train: 2000,
            val: 250,
            test: 250,
            seed: 0,
            test_names: TestNames::Opaque,
            window: 128,
            p_arithmetic: 0.5,
            p_mention: 0.4,
            names: 4,
            callees: 1,
            max_statements: 1,
            random_literals: false,
        }
    }
}

pub struct SyntheticSet {
    pub vocab: Vocabulary,
    pub train: Vec<EncodedExample>,
    pub val: Vec<EncodedExample>,
    pub test: Vec<EncodedExample>,
}

struct Raw {
    method: String,
    test_name: String,
    test: String,
    mutant: crate::mutation::Mutant,
    label: bool,
}

fn pick<'a, R: Rng>(rng: &mut R, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).copied().expect("non-empty")
}

const ARITH: [&str; 5] = ["+", "-", "*", "/", "%"];
const REL: [&str; 6] = ["==", "!=", "<", "<=", ">", ">="];

fn method_source<R: Rng>(rng: &mut R, name: &str, cfg: &SyntheticConfig) -> String {
    let mut body = vec![format!("  let r = a {} b;", pick(rng, &ARITH))];
    let extra = rng.gen_range(1..=cfg.max_statements.max(1));
    for s in 0..extra {
        let k = if cfg.random_literals { rng.gen_range(0..10) } else { 5 };
        // The first extra statement holds a condition, so both mutant kinds exist.
        let kind = if s == 0 { rng.gen_range(0..3) } else { rng.gen_range(0..4) };
        body.push(match kind {
            0 => format!("  if (a {} b) {{ return r {} {k}; }}", pick(rng, &REL), pick(rng, &ARITH)),
            1 => format!("  if (r {} {k} && b {} a) {{ r = r {} 1; }}", pick(rng, &REL), pick(rng, &REL), pick(rng, &ARITH)),
            2 => format!("  while (r < {k}) {{ r = r {} a; }}", pick(rng, &["+", "*"])),
            _ => format!("  r = r {} b;", pick(rng, &ARITH)),
        });
    }
    body.push("  return r;".into());
    format!("fn {name}(a, b) {{\n{}\n}}", body.join("\n"))
}

fn raw_example<R: Rng>(rng: &mut R, cfg: &SyntheticConfig) -> Raw {
    let names = &FUNCTION_NAMES[..cfg.names.clamp(2, FUNCTION_NAMES.len())];
    let name = pick(rng, names);
    let method = method_source(rng, name, cfg);
    let program = parse(&method).expect("generated function parses");
    let mutants = generate_mutants(&program);
    let want_arith = rng.gen_bool(cfg.p_arithmetic);
    let pool: Vec<_> = mutants.iter().filter(|m| (m.operator.kind == OperatorKind::Aor) == want_arith).collect();
    let mutant = (*pool.choose(rng).expect("every generated function has both mutant kinds")).clone();

    let others: Vec<&str> = names.iter().copied().filter(|n| *n != name).collect();
    let mention = rng.gen_bool(cfg.p_mention);
    let mut callees: Vec<&str> = others.choose_multiple(rng, cfg.callees.clamp(1, others.len())).copied().collect();
    if mention {
        let slot = rng.gen_range(0..callees.len());
        callees[slot] = name;
    }
    let test_name = match cfg.test_names {
        TestNames::Informative => format!("test_{}", callees[0]),
        TestNames::Opaque => format!("case{}", rng.gen_range(0..50)),
    };
    let asserts: Vec<String> = callees
        .iter()
        .map(|c| {
            let (x, y, z) = if cfg.random_literals { (rng.gen_range(0..10), rng.gen_range(0..10), rng.gen_range(0..100)) } else { (1, 2, 3) };
            format!("  assert_eq({c}({x}, {y}), {z});")
        })
        .collect();
    let test = format!("test {test_name} {{\n{}\n}}", asserts.join("\n"));
    let label = mutant.operator.kind == OperatorKind::Aor && mention;
    Raw { method, test_name, test, mutant, label }
}

/// Generates train/val/test splits and a vocabulary over all of them.
pub fn generate(cfg: &SyntheticConfig) -> SyntheticSet {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let total = cfg.train + cfg.val + cfg.test;
    let raws: Vec<Raw> = (0..total).map(|_| raw_example(&mut rng, cfg)).collect();
    let corpus: Vec<Vec<String>> = raws
        .iter()
        .flat_map(|r| [tokenize(&r.method), tokenize(&r.mutant.after_text), tokenize(&r.test)])
        .chain([FUNCTION_NAMES.iter().map(|s| s.to_string()).collect()])
        .chain(raws.iter().map(|r| crate::encoding::tokenize_with(&r.test_name, 0)))
        .collect();
    let vocab = Vocabulary::build(&corpus, 4096).expect("size above reserved");
    let mut examples: Vec<EncodedExample> = raws
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let method = MethodSource { text: &r.method, offset: 0 };
            let test_id = format!("synthetic::{}#{i}", r.test_name);
            let test = TestSource { id: &test_id, text: &r.test };
            let mut ex = encode_token_diff(method, &r.mutant, test, &vocab, cfg.window).expect("span inside method");
            ex.mutant_id = format!("{}#{i}", r.mutant.id);
            ex.label = Some(Verdict::from_detected(r.label));
            ex.features = Some(feature_inputs(method, &r.mutant, &r.test_name, &vocab).expect("span inside method"));
            ex
        })
        .collect();
    let test = examples.split_off(cfg.train + cfg.val);
    let val = examples.split_off(cfg.train);
    SyntheticSet { vocab, train: examples, val, test }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_follow_the_rule() {
        let set = generate(&SyntheticConfig { train: 200, val: 20, test: 20, ..Default::default() });
        assert_eq!(set.train.len(), 200);
        let positives = set.train.iter().filter(|e| e.is_detected() == Some(true)).count();
        assert!((20..=70).contains(&positives), "{positives}");
        assert!(set.train.iter().all(|e| !e.truncated));
        // Regenerating is deterministic.
        let again = generate(&SyntheticConfig { train: 200, val: 20, test: 20, ..Default::default() });
        assert_eq!(set.train, again.train);
        assert_eq!(set.vocab, again.vocab);
    }
}
