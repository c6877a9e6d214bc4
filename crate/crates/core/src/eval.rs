//! From pair probabilities to suite verdicts, and everything measured on them.
//!
//! A mutant is predicted *detected* when the largest probability among its
//! covering tests is strictly greater than the threshold. Pair-level metrics
//! treat *detected* as the positive class; suite-level metrics treat
//! *undetected* as positive, since the undetected mutants are what a developer
//! is shown.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::groundtruth::{KillMatrix, Verdict};

pub const SWEEP_THRESHOLDS: [f64; 5] = [0.10, 0.25, 0.50, 0.75, 0.90];
pub const DEFAULT_THRESHOLD: f64 = 0.25;
/// Pair-level cutoff for matrix metrics (the argmax of a two-class head).
pub const PAIR_CUTOFF: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("mutant {0} has no predictions")]
    NoEntries(String),
    #[error("prediction and ground-truth key sets differ: {0}")]
    KeyMismatch(String),
    #[error("probability {probability} for ({mutant_id}, {test_id}) is outside [0, 1]")]
    BadProbability { mutant_id: String, test_id: String, probability: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionEntry {
    pub probability: f64,
    /// Inference cost in multiply-adds.
    pub inference_cost: u64,
}

/// One line of `predictions.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub mutant_id: String,
    pub test_id: String,
    pub probability: f64,
    pub inference_cost: u64,
}

/// Predicted detection probability per covering pair, ordered by
/// (mutant_id, test_id).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictionMatrix {
    entries: BTreeMap<(String, String), PredictionEntry>,
}

impl PredictionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, mutant_id: impl Into<String>, test_id: impl Into<String>, entry: PredictionEntry) -> Result<(), EvalError> {
        let (mutant_id, test_id) = (mutant_id.into(), test_id.into());
        if !(0.0..=1.0).contains(&entry.probability) {
            return Err(EvalError::BadProbability { mutant_id, test_id, probability: entry.probability });
        }
        self.entries.insert((mutant_id, test_id), entry);
        Ok(())
    }

    /// The ground truth as a predictor: 1 for detected pairs, 0 otherwise.
    pub fn from_truth(truth: &KillMatrix) -> PredictionMatrix {
        let entries = truth
            .iter()
            .map(|(m, t, e)| {
                let p = if e.detected { 1.0 } else { 0.0 };
                ((m.to_string(), t.to_string()), PredictionEntry { probability: p, inference_cost: 0 })
            })
            .collect();
        PredictionMatrix { entries }
    }

    pub fn get(&self, mutant_id: &str, test_id: &str) -> Option<&PredictionEntry> {
        self.entries.get(&(mutant_id.to_string(), test_id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, &PredictionEntry)> {
        self.entries.iter().map(|((m, t), e)| (m.as_str(), t.as_str(), e))
    }

    /// Highest probability per mutant.
    pub fn max_per_mutant(&self) -> BTreeMap<&str, f64> {
        let mut out: BTreeMap<&str, f64> = BTreeMap::new();
        for (m, _, e) in self.iter() {
            let slot = out.entry(m).or_insert(f64::NEG_INFINITY);
            *slot = slot.max(e.probability);
        }
        out
    }

    pub fn total_inference_cost(&self) -> u64 {
        self.entries.values().map(|e| e.inference_cost).sum()
    }

    pub fn records(&self) -> impl Iterator<Item = PredictionRecord> + '_ {
        self.iter().map(|(m, t, e)| PredictionRecord {
            mutant_id: m.to_string(),
            test_id: t.to_string(),
            probability: e.probability,
            inference_cost: e.inference_cost,
        })
    }

    pub fn from_records(records: impl IntoIterator<Item = PredictionRecord>) -> Result<PredictionMatrix, EvalError> {
        let mut m = PredictionMatrix::new();
        for r in records {
            m.insert(r.mutant_id, r.test_id, PredictionEntry { probability: r.probability, inference_cost: r.inference_cost })?;
        }
        Ok(m)
    }
}

/// Aggregated verdict per mutant and the threshold that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteVerdicts {
    pub threshold: f64,
    pub verdicts: BTreeMap<String, Verdict>,
}

/// Every mutant in `pred`: detected iff `max p > threshold`.
pub fn aggregate(pred: &PredictionMatrix, threshold: f64) -> SuiteVerdicts {
    let verdicts = pred
        .max_per_mutant()
        .into_iter()
        .map(|(m, p)| (m.to_string(), Verdict::from_detected(p > threshold)))
        .collect();
    SuiteVerdicts { threshold, verdicts }
}

/// As [`aggregate`], for exactly `mutants`; fails if one has no entries.
pub fn aggregate_for(pred: &PredictionMatrix, mutants: &[String], threshold: f64) -> Result<SuiteVerdicts, EvalError> {
    let maxima = pred.max_per_mutant();
    let verdicts = mutants
        .iter()
        .map(|m| {
            let p = maxima.get(m.as_str()).ok_or_else(|| EvalError::NoEntries(m.clone()))?;
            Ok((m.clone(), Verdict::from_detected(*p > threshold)))
        })
        .collect::<Result<_, EvalError>>()?;
    Ok(SuiteVerdicts { threshold, verdicts })
}

/// Confusion counts with precision, recall and F1 of the positive class.
/// Empty denominators give 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Prf {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        Prf { tp, fp, fn_, tn, precision, recall, f1 }
    }

    /// Counts `(predicted, actual)` pairs.
    pub fn from_pairs(pairs: impl Iterator<Item = (bool, bool)>) -> Prf {
        let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
        for (predicted, actual) in pairs {
            match (predicted, actual) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => tn += 1,
            }
        }
        Prf::from_counts(tp, fp, fn_, tn)
    }
}

fn describe_diff<'a>(left: impl Iterator<Item = &'a str>, right: &std::collections::BTreeSet<&'a str>, what: &str) -> Option<String> {
    left.into_iter().find(|k| !right.contains(k)).map(|k| format!("{k} only in {what}"))
}

/// Pair-level P/R/F1 with detected as positive; a pair is predicted detected
/// when its probability exceeds 0.5.
pub fn matrix_metrics(pred: &PredictionMatrix, truth: &KillMatrix) -> Result<Prf, EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::KeyMismatch(format!("{} predicted pairs, {} ground-truth pairs", pred.len(), truth.len())));
    }
    let mut pairs = Vec::with_capacity(pred.len());
    for (m, t, e) in truth.iter() {
        let p = pred.get(m, t).ok_or_else(|| EvalError::KeyMismatch(format!("({m}, {t}) has no prediction")))?;
        pairs.push((p.probability > PAIR_CUTOFF, e.detected));
    }
    Ok(Prf::from_pairs(pairs.into_iter()))
}

/// Suite-level P/R/F1 with *undetected* as positive.
pub fn suite_metrics(pred: &BTreeMap<String, Verdict>, truth: &BTreeMap<String, Verdict>) -> Result<Prf, EvalError> {
    if pred.len() != truth.len() || pred.keys().ne(truth.keys()) {
        let pk: std::collections::BTreeSet<&str> = pred.keys().map(String::as_str).collect();
        let tk: std::collections::BTreeSet<&str> = truth.keys().map(String::as_str).collect();
        let msg = describe_diff(pk.iter().copied(), &tk, "predictions")
            .or_else(|| describe_diff(tk.iter().copied(), &pk, "ground truth"))
            .unwrap_or_default();
        return Err(EvalError::KeyMismatch(msg));
    }
    Ok(Prf::from_pairs(pred.values().zip(truth.values()).map(|(p, t)| (!p.is_detected(), !t.is_detected()))))
}

/// Detected mutants over all mutants; 0 for an empty set.
pub fn mutation_score(verdicts: &BTreeMap<String, Verdict>) -> f64 {
    if verdicts.is_empty() {
        return 0.0;
    }
    verdicts.values().filter(|v| v.is_detected()).count() as f64 / verdicts.len() as f64
}

pub fn score_error(pred: &BTreeMap<String, Verdict>, truth: &BTreeMap<String, Verdict>) -> f64 {
    (mutation_score(pred) - mutation_score(truth)).abs()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub suite: Prf,
    pub predicted_detected: usize,
    pub mutation_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub rows: Vec<SweepRow>,
    /// Highest F1, ties to higher precision, then to the lower threshold.
    pub best_threshold: f64,
}

pub fn threshold_sweep(pred: &PredictionMatrix, truth: &KillMatrix, thresholds: &[f64]) -> Result<Sweep, EvalError> {
    let truth_verdicts = truth.suite_verdicts();
    let mutants: Vec<String> = truth_verdicts.keys().cloned().collect();
    let mut rows = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        let v = aggregate_for(pred, &mutants, t)?;
        rows.push(SweepRow {
            threshold: t,
            suite: suite_metrics(&v.verdicts, &truth_verdicts)?,
            predicted_detected: v.verdicts.values().filter(|v| v.is_detected()).count(),
            mutation_score: mutation_score(&v.verdicts),
        });
    }
    let mut best: Option<&SweepRow> = None;
    for r in &rows {
        let better = match best {
            None => true,
            Some(b) => r.suite.f1 > b.suite.f1 || (r.suite.f1 == b.suite.f1 && r.suite.precision > b.suite.precision),
        };
        if better {
            best = Some(r);
        }
    }
    let best_threshold = best.map_or(DEFAULT_THRESHOLD, |r| r.threshold);
    Ok(Sweep { rows, best_threshold })
}

/// Upper edges (inclusive) of the detection-fraction buckets after `[0%]`.
pub const BUCKET_EDGES: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub label: String,
    pub count: usize,
    pub correct: usize,
    /// `correct / count`; 0 for an empty bucket.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceBuckets {
    pub buckets: Vec<Bucket>,
}

/// Bucket index of a mutant detected by `fraction` of its covering tests.
pub fn bucket_of(fraction: f64) -> usize {
    if fraction <= 0.0 {
        return 0;
    }
    1 + BUCKET_EDGES.iter().position(|&e| fraction <= e + 1e-12).unwrap_or(BUCKET_EDGES.len() - 1)
}

/// Suite-verdict accuracy grouped by the share of covering tests that detect
/// each mutant in the ground truth.
pub fn importance_buckets(pred: &BTreeMap<String, Verdict>, truth: &KillMatrix) -> Result<ImportanceBuckets, EvalError> {
    let mut labels = vec!["0%".to_string()];
    let mut lo = 0;
    for e in BUCKET_EDGES {
        let hi = (e * 100.0).round() as u32;
        labels.push(format!("({lo}%, {hi}%]"));
        lo = hi;
    }
    let mut buckets: Vec<Bucket> = labels.into_iter().map(|label| Bucket { label, count: 0, correct: 0, accuracy: 0.0 }).collect();
    for (m, row) in truth.rows() {
        let detecting = row.iter().filter(|(_, e)| e.detected).count();
        let fraction = detecting as f64 / row.len() as f64;
        let predicted = pred.get(m).ok_or_else(|| EvalError::NoEntries(m.to_string()))?;
        let b = &mut buckets[bucket_of(fraction)];
        b.count += 1;
        if predicted.is_detected() == (detecting > 0) {
            b.correct += 1;
        }
    }
    for b in &mut buckets {
        b.accuracy = if b.count == 0 { 0.0 } else { b.correct as f64 / b.count as f64 };
    }
    Ok(ImportanceBuckets { buckets })
}

/// Costs in interpreter steps. Model inference cost is converted from
/// multiply-adds at `flops_per_step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeModelReport {
    /// Running every covering pair.
    pub full_execution_cost: u64,
    /// Running the model on every covering pair.
    pub prediction_cost: u64,
    /// Re-running the covering tests of every predicted-undetected mutant.
    pub confirmation_cost: u64,
    pub checking_cost: u64,
    pub predicted_undetected: usize,
    /// Predicted-undetected mutants the confirmation run shows are detected.
    pub filtered_false_positives: usize,
    /// `1 − prediction_cost / full_execution_cost`.
    pub prediction_savings: f64,
    /// `1 − checking_cost / full_execution_cost`; negative when checking
    /// costs more than running everything.
    pub checking_savings: f64,
}

pub fn checking_time(
    pred: &BTreeMap<String, Verdict>,
    truth: &KillMatrix,
    inference_cost: u64,
    flops_per_step: u64,
) -> Result<TimeModelReport, EvalError> {
    let full: u64 = truth.iter().map(|(_, _, e)| e.cost_steps).sum();
    let prediction_cost = inference_cost.div_ceil(flops_per_step.max(1));
    let mut confirmation = 0u64;
    let mut predicted_undetected = 0;
    let mut filtered = 0;
    for (m, row) in truth.rows() {
        let v = pred.get(m).ok_or_else(|| EvalError::NoEntries(m.to_string()))?;
        if !v.is_detected() {
            predicted_undetected += 1;
            confirmation += row.iter().map(|(_, e)| e.cost_steps).sum::<u64>();
            if row.iter().any(|(_, e)| e.detected) {
                filtered += 1;
            }
        }
    }
    let checking = prediction_cost + confirmation;
    let savings = |c: u64| if full == 0 { 0.0 } else { 1.0 - c as f64 / full as f64 };
    Ok(TimeModelReport {
        full_execution_cost: full,
        prediction_cost,
        confirmation_cost: confirmation,
        checking_cost: checking,
        predicted_undetected,
        filtered_false_positives: filtered,
        prediction_savings: savings(prediction_cost),
        checking_savings: savings(checking),
    })
}

/// Everything `evaluate` writes to `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub threshold: f64,
    pub mutants: usize,
    pub pairs: usize,
    pub matrix: Prf,
    pub suite: Prf,
    pub predicted_mutation_score: f64,
    pub gold_mutation_score: f64,
    pub score_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    pub buckets: ImportanceBuckets,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_model: Option<TimeModelReport>,
}

/// Scores `pred` against `truth` at `threshold`.
pub fn evaluate(pred: &PredictionMatrix, truth: &KillMatrix, threshold: f64, sweep: bool) -> Result<MetricsReport, EvalError> {
    let truth_verdicts = truth.suite_verdicts();
    let mutants: Vec<String> = truth_verdicts.keys().cloned().collect();
    let matrix = matrix_metrics(pred, truth)?;
    let verdicts = aggregate_for(pred, &mutants, threshold)?;
    Ok(MetricsReport {
        threshold,
        mutants: mutants.len(),
        pairs: truth.len(),
        matrix,
        suite: suite_metrics(&verdicts.verdicts, &truth_verdicts)?,
        predicted_mutation_score: mutation_score(&verdicts.verdicts),
        gold_mutation_score: mutation_score(&truth_verdicts),
        score_error: score_error(&verdicts.verdicts, &truth_verdicts),
        sweep: if sweep { Some(threshold_sweep(pred, truth, &SWEEP_THRESHOLDS)?) } else { None },
        buckets: importance_buckets(&verdicts.verdicts, truth)?,
        time_model: None,
    })
}

impl MetricsReport {
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let prf = |p: &Prf| format!("{:.3} | {:.3} | {:.3}", p.precision, p.recall, p.f1);
        writeln!(s, "# Evaluation report\n").unwrap();
        writeln!(s, "{} mutants, {} covering pairs, threshold {:.2}.\n", self.mutants, self.pairs, self.threshold).unwrap();
        writeln!(s, "| level | precision | recall | F1 |\n|---|---|---|---|").unwrap();
        writeln!(s, "| matrix (detected positive) | {} |", prf(&self.matrix)).unwrap();
        writeln!(s, "| suite (undetected positive) | {} |\n", prf(&self.suite)).unwrap();
        writeln!(
            s,
            "Mutation score: predicted {:.3}, gold {:.3}, error {:.3}.\n",
            self.predicted_mutation_score, self.gold_mutation_score, self.score_error
        )
        .unwrap();
        if let Some(sweep) = &self.sweep {
            writeln!(s, "## Threshold sweep\n\n| threshold | precision | recall | F1 | predicted detected |\n|---|---|---|---|---|").unwrap();
            for r in &sweep.rows {
                writeln!(s, "| {:.2} | {} | {} |", r.threshold, prf(&r.suite), r.predicted_detected).unwrap();
            }
            writeln!(s, "\nBest threshold: {:.2}.\n", sweep.best_threshold).unwrap();
        }
        writeln!(s, "## Accuracy by share of detecting tests\n\n| bucket | mutants | accuracy |\n|---|---|---|").unwrap();
        for b in &self.buckets.buckets {
            writeln!(s, "| {} | {} | {:.3} |", b.label, b.count, b.accuracy).unwrap();
        }
        if let Some(t) = &self.time_model {
            writeln!(s, "\n## Checking cost (interpreter steps)\n").unwrap();
            writeln!(s, "| quantity | value |\n|---|---|").unwrap();
            writeln!(s, "| full execution | {} |", t.full_execution_cost).unwrap();
            writeln!(s, "| prediction only | {} |", t.prediction_cost).unwrap();
            writeln!(s, "| confirmation runs | {} |", t.confirmation_cost).unwrap();
            writeln!(s, "| prediction + confirmation | {} |", t.checking_cost).unwrap();
            writeln!(s, "| savings, prediction only | {:.3} |", t.prediction_savings).unwrap();
            writeln!(s, "| savings, with confirmation | {:.3} |", t.checking_savings).unwrap();
        }
        s
    }

    pub fn sweep_csv(&self) -> Option<String> {
        let sweep = self.sweep.as_ref()?;
        let mut s = String::from("threshold,precision,recall,f1,predicted_detected,mutation_score\n");
        for r in &sweep.rows {
            writeln!(
                s,
                "{},{},{},{},{},{}",
                r.threshold, r.suite.precision, r.suite.recall, r.suite.f1, r.predicted_detected, r.mutation_score
            )
            .unwrap();
        }
        Some(s)
    }

    pub fn buckets_csv(&self) -> String {
        let mut s = String::from("bucket,count,correct,accuracy\n");
        for b in &self.buckets.buckets {
            writeln!(s, "\"{}\",{},{},{}", b.label, b.count, b.correct, b.accuracy).unwrap();
        }
        s
    }
}
