use std::collections::BTreeSet;

use crate::corpus::{generate_candidates, CandidatePair, Label, Sentence};
use crate::error::{Error, Result};
use crate::features::{build_pair_input, EmbeddingTable, FeatureConfig, PairInput, BOOKMARK_TOKEN, OTHER_BOOKMARK_TOKEN};
use crate::model::ModelShape;

use super::config::RunConfig;

/// Word vectors plus feature settings: everything needed to turn a pair
/// into model input.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    pub table: EmbeddingTable,
    pub features: FeatureConfig,
}

impl Encoder {
    pub fn new(table: EmbeddingTable, features: FeatureConfig) -> Result<Self> {
        features.validate()?;
        Ok(Encoder { table, features })
    }

    /// Random vectors or a word2vec file per `run.embeddings`; tagsets
    /// optionally narrowed to those of `train`.
    pub fn for_run(run: &RunConfig, train: &[Sentence]) -> Result<Self> {
        let table = match &run.embeddings.path {
            Some(path) => EmbeddingTable::load_word2vec(path)?,
            None => EmbeddingTable::random(
                corpus_words(train).iter().map(String::as_str),
                run.embeddings.dim,
                run.embeddings.seed,
            )?,
        };
        let features = if run.tags_from_corpus {
            run.features.clone().with_observed_tags(train)
        } else {
            run.features.clone()
        };
        Self::new(table, features)
    }

    pub fn encode(&self, sentence: &Sentence, pair: &CandidatePair) -> Result<PairInput> {
        build_pair_input(sentence, pair, &self.table, &self.features)
    }

    pub fn model_shape(&self) -> ModelShape {
        ModelShape {
            feature_width: self.features.token_width(self.table.dim()),
            word_dim: self.table.dim(),
            sentence_dim: self.features.sentence_embedding_dim,
            use_path: self.features.use_shortest_path,
        }
    }
}

/// Sorted lowercase surfaces of `sentences` plus the blinding placeholders.
pub fn corpus_words(sentences: &[Sentence]) -> Vec<String> {
    let mut words: BTreeSet<String> = sentences
        .iter()
        .flat_map(|s| s.surfaces().map(str::to_lowercase))
        .collect();
    words.insert(BOOKMARK_TOKEN.into());
    words.insert(OTHER_BOOKMARK_TOKEN.into());
    words.into_iter().collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    /// Index into [`Dataset::sentences`].
    pub sentence: usize,
    pub pair: CandidatePair,
}

/// Sentences and the candidate pairs drawn from them.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub sentences: Vec<Sentence>,
    pub examples: Vec<Example>,
}

impl Dataset {
    /// Every candidate pair, labelled or not.
    pub fn all_pairs(sentences: Vec<Sentence>) -> Self {
        let examples = sentences
            .iter()
            .enumerate()
            .flat_map(|(i, s)| {
                generate_candidates(s)
                    .into_iter()
                    .map(move |pair| Example { sentence: i, pair })
            })
            .collect();
        Dataset { sentences, examples }
    }

    /// Candidate pairs that carry a gold label.
    pub fn labeled(sentences: Vec<Sentence>) -> Self {
        let mut d = Self::all_pairs(sentences);
        d.examples.retain(|e| e.pair.gold.is_some());
        d
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn sentence(&self, i: usize) -> &Sentence {
        &self.sentences[self.examples[i].sentence]
    }

    pub fn gold(&self, i: usize) -> Result<Label> {
        let p = &self.examples[i].pair;
        p.gold.ok_or_else(|| Error::InvalidSentence {
            id: p.sentence_id.clone(),
            message: format!("pair ({}, {}) has no gold label", p.bookmark, p.attribute),
        })
    }

    pub fn encode(&self, encoder: &Encoder, i: usize) -> Result<PairInput> {
        encoder.encode(self.sentence(i), &self.examples[i].pair)
    }
}
