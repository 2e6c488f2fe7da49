use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{init, softmax, Graph};
use crate::corpus::{CandidatePair, Label};
use crate::error::{Error, Result};
use crate::model::{Model, NUM_CLASSES};
use crate::rules::{postprocess, RuleSet};

use super::data::{Dataset, Encoder};
use super::metrics::{error_report, ErrorReport, Metrics};

/// Model output for one example, after optional rule post-processing.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredExample {
    pub index: usize,
    pub gold: Option<Label>,
    /// Argmax of the model alone.
    pub model_label: Label,
    pub predicted: Label,
    pub probabilities: [f64; NUM_CLASSES],
    /// Cross-entropy against `gold`; 0 without a gold label.
    pub loss: f64,
    pub rule_cue: Option<String>,
}

/// One line of a predictions file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    #[serde(flatten)]
    pub pair: CandidatePair,
    pub model_predicted: Option<Label>,
    pub probabilities: Vec<f64>,
    pub rule_cue: Option<String>,
}

fn argmax(p: &[f64]) -> Label {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    Label::from_index(best).expect("three classes")
}

/// Evaluation-mode logits.
pub fn logits(model: &Model, input: &crate::features::PairInput) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let pass = model.forward_graph(&mut g, input, false, &mut init::seeded(0))?;
    Ok(g.value(pass.logits).data().to_vec())
}

fn cross_entropy(logits: &[f64], gold: usize) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    lse - logits[gold]
}

/// Scores every example of `data` in parallel; order follows the dataset.
pub fn score_dataset(
    model: &Model,
    encoder: &Encoder,
    data: &Dataset,
    rules: Option<&RuleSet>,
) -> Result<Vec<ScoredExample>> {
    (0..data.len())
        .into_par_iter()
        .map(|i| {
            let input = data.encode(encoder, i)?;
            let z = logits(model, &input)?;
            let p = softmax(&z);
            let probabilities = [p[0], p[1], p[2]];
            let model_label = argmax(&p);
            let gold = data.examples[i].pair.gold;
            let rule = rules.and_then(|r| {
                let s = data.sentence(i);
                let surfaces: Vec<&str> = s.surfaces().collect();
                r.find_match(&surfaces, s.attribute_mentions[data.examples[i].pair.attribute].span)
            });
            Ok(ScoredExample {
                index: i,
                gold,
                model_label,
                predicted: postprocess(model_label, rule.as_ref().map(|m| m.label)),
                probabilities,
                loss: gold.map_or(0.0, |g| cross_entropy(&z, g.index())),
                rule_cue: rule.map(|m| m.cue),
            })
        })
        .collect()
}

fn gold_pairs(data: &Dataset, predicted: impl Fn(usize) -> Label) -> Result<Vec<(Label, Label)>> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    (0..data.len()).map(|i| Ok((data.gold(i)?, predicted(i)))).collect()
}

/// Gold and predicted label of every example; the model's argmax, overridden
/// by a firing rule when `rules` is given.
pub fn model_predictions(
    model: &Model,
    encoder: &Encoder,
    data: &Dataset,
    rules: Option<&RuleSet>,
) -> Result<Vec<(Label, Label)>> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let scored = score_dataset(model, encoder, data, rules)?;
    gold_pairs(data, |i| scored[i].predicted)
}

/// Gold and rule-only label (Relevant unless a rule fires).
pub fn rule_predictions(data: &Dataset, rules: &RuleSet) -> Result<Vec<(Label, Label)>> {
    gold_pairs(data, |i| {
        crate::rules::rule_classify(data.sentence(i), &data.examples[i].pair, rules)
    })
}

pub fn evaluate(model: &Model, encoder: &Encoder, data: &Dataset, rules: Option<&RuleSet>) -> Result<Metrics> {
    Ok(Metrics::from_pairs(model_predictions(model, encoder, data, rules)?))
}

pub fn evaluate_rules(data: &Dataset, rules: &RuleSet) -> Result<Metrics> {
    Ok(Metrics::from_pairs(rule_predictions(data, rules)?))
}

pub fn model_error_report(
    model: &Model,
    encoder: &Encoder,
    data: &Dataset,
    rules: Option<&RuleSet>,
) -> Result<ErrorReport> {
    Ok(error_report(model_predictions(model, encoder, data, rules)?))
}

pub fn prediction_records(data: &Dataset, scored: &[ScoredExample]) -> Vec<PredictionRecord> {
    scored
        .iter()
        .map(|s| {
            let mut pair = data.examples[s.index].pair.clone();
            pair.predicted = Some(s.predicted);
            PredictionRecord {
                pair,
                model_predicted: Some(s.model_label),
                probabilities: s.probabilities.to_vec(),
                rule_cue: s.rule_cue.clone(),
            }
        })
        .collect()
}

pub fn write_predictions(mut w: impl Write, records: &[PredictionRecord]) -> Result<()> {
    for r in records {
        let line = serde_json::to_string(r)?;
        writeln!(w, "{line}").map_err(|e| Error::io("<predictions>", e))?;
    }
    Ok(())
}

/// Scores every candidate pair of `data` (labelled or not) and writes one
/// JSON line per pair to `out`. Returns the number of lines.
pub fn predict_to_file(
    model: &Model,
    encoder: &Encoder,
    data: &Dataset,
    rules: Option<&RuleSet>,
    out: &Path,
) -> Result<usize> {
    let scored = score_dataset(model, encoder, data, rules)?;
    let records = prediction_records(data, &scored);
    let f = File::create(out).map_err(|e| Error::io(out, e))?;
    let mut w = BufWriter::new(f);
    write_predictions(&mut w, &records)?;
    w.flush().map_err(|e| Error::io(out, e))?;
    Ok(records.len())
}

pub fn read_predictions(text: &str) -> Result<Vec<PredictionRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            serde_json::from_str(l).map_err(|e| Error::Malformed {
                line: k + 1,
                message: e.to_string(),
            })
        })
        .collect()
}
