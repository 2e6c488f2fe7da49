//! Sentence data model, corpus files, attribute matching, candidate pairs
//! and dataset splitting.

mod io;
mod types;
mod vocab;

use log::warn;
use rand::seq::SliceRandom;

pub use io::{load_corpus, parse_corpus, save_corpus, sentence_to_json, write_corpus, LoadedCorpus};
pub use types::{
    AttributeMention, Bookmark, BookmarkRole, CandidatePair, Category, GoldPair, Label, NeTag,
    Sentence, Span, Token,
};
pub use vocab::{
    canonical_phrase, lemmatize, load_lemma_table, parse_lemma_table, Vocabulary,
    DEFAULT_LEMMAS, DEFAULT_VOCABULARY,
};

use crate::autodiff::init;
use crate::error::{Error, Result};

/// Greedy longest-match of vocabulary phrases over the lemmatized,
/// lowercased tokens, scanning left to right. Tokens inside bookmark spans
/// never take part in a match.
pub fn match_attributes(sentence: &Sentence, vocabulary: &Vocabulary) -> Vec<AttributeMention> {
    let lemmas: Vec<String> = sentence
        .tokens
        .iter()
        .map(|t| {
            if t.lemma.is_empty() {
                lemmatize(&t.surface, vocabulary.lemma_table())
            } else {
                t.lemma.to_lowercase()
            }
        })
        .collect();
    let in_bookmark = |i: usize| sentence.bookmarks.iter().any(|b| b.span.contains(i));
    let n = lemmas.len();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let longest = vocabulary.max_words().min(n - i);
        let hit = (1..=longest).rev().find_map(|len| {
            if (i..i + len).any(in_bookmark) {
                return None;
            }
            let phrase = lemmas[i..i + len].join(" ");
            vocabulary.get(&phrase).map(|cat| (len, phrase, cat))
        });
        match hit {
            Some((len, normalized, category)) => {
                out.push(AttributeMention {
                    span: Span::new(i, i + len),
                    normalized,
                    category,
                });
                i += len;
            }
            None => i += 1,
        }
    }
    out
}

/// Every target bookmark crossed with every attribute mention, ordered by
/// bookmark index then mention start. Gold labels are copied from the
/// sentence's pair annotations when present.
pub fn generate_candidates(sentence: &Sentence) -> Vec<CandidatePair> {
    let mut mention_order: Vec<usize> = (0..sentence.attribute_mentions.len()).collect();
    mention_order.sort_by_key(|&m| sentence.attribute_mentions[m].span.start);
    sentence
        .bookmarks
        .iter()
        .enumerate()
        .filter(|(_, b)| b.role == BookmarkRole::TargetCandidate)
        .flat_map(|(bi, _)| {
            mention_order.iter().map(move |&mi| CandidatePair {
                sentence_id: sentence.id.clone(),
                bookmark: bi,
                attribute: mi,
                gold: sentence.gold_for(bi, mi),
                predicted: None,
            })
        })
        .collect()
}

/// Train/dev/test fractions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.6,
            dev: 0.2,
            test: 0.2,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let r = [self.train, self.dev, self.test];
        if r.iter().any(|&x| !(x > 0.0)) || ((r.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split ratios must be positive and sum to 1, got {r:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorpusSplit {
    pub train: Vec<Sentence>,
    pub dev: Vec<Sentence>,
    pub test: Vec<Sentence>,
}

/// Sentence-level seeded split. Dev and test sizes are floored; the
/// remainder goes to training. Each split keeps the input order.
pub fn split_corpus(sentences: &[Sentence], ratios: SplitRatios, seed: u64) -> Result<CorpusSplit> {
    ratios.validate()?;
    let n = sentences.len();
    if n < 3 {
        warn!("only {n} sentences; assigning all to training");
        return Ok(CorpusSplit {
            train: sentences.to_vec(),
            ..Default::default()
        });
    }
    let floor = |r: f64| ((n as f64) * r + 1e-9).floor() as usize;
    let (n_dev, n_test) = (floor(ratios.dev), floor(ratios.test));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut init::seeded(seed));
    let mut dev_idx = order[..n_dev].to_vec();
    let mut test_idx = order[n_dev..n_dev + n_test].to_vec();
    let mut train_idx = order[n_dev + n_test..].to_vec();
    let pick = |idx: &mut Vec<usize>| {
        idx.sort_unstable();
        idx.iter().map(|&i| sentences[i].clone()).collect::<Vec<_>>()
    };
    Ok(CorpusSplit {
        train: pick(&mut train_idx),
        dev: pick(&mut dev_idx),
        test: pick(&mut test_idx),
    })
}
