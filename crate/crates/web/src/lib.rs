//! Browser demo over a synthetic corpus. [`Demo`] holds the corpus and a
//! small model; every query returns JSON for the static page in `www/`.
//!
//! The query logic lives in plain methods ([`Demo::sentence_view`],
//! [`Demo::attention_view`], [`Demo::position_view`], [`analyze_text`]) so
//! it runs and is tested natively; the `wasm_bindgen` exports only
//! serialize.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use lesion_attr::corpus::{generate_candidates, match_attributes, CandidatePair, Sentence, Span, Vocabulary};
use lesion_attr::features::encode_position;
use lesion_attr::harness::{fit, Checkpoint, Dataset, Encoder, RunConfig, TrainHistory};
use lesion_attr::model::{Model, ModelConfig};
use lesion_attr::rules::RuleSet;
use lesion_attr::synth::{generate_corpus, SynthConfig};

const CORPUS_SIZE: usize = 240;

#[derive(Debug, Serialize)]
pub struct MentionView {
    pub start: usize,
    pub end: usize,
    pub text: String,
    pub category: String,
    pub rule_label: Option<String>,
    pub cue: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct PairView {
    pub bookmark: usize,
    pub attribute: usize,
    pub gold: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct SentenceView {
    pub id: String,
    pub tokens: Vec<String>,
    pub heads: Vec<Option<usize>>,
    pub bookmarks: Vec<(usize, usize, bool)>,
    pub mentions: Vec<MentionView>,
    pub pairs: Vec<PairView>,
}

#[derive(Debug, Serialize)]
pub struct HeadMap {
    pub branch: String,
    pub head: usize,
    pub weights: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize)]
pub struct AttentionView {
    /// Blinded tokens of the word branch.
    pub tokens: Vec<String>,
    /// Original token indices along the dependency path.
    pub path: Vec<usize>,
    pub maps: Vec<HeadMap>,
    pub probabilities: [f64; 3],
    pub predicted: String,
    pub with_rules: String,
    pub trained: bool,
}

#[derive(Debug, Serialize)]
pub struct PositionRow {
    pub token: String,
    pub d1: i64,
    pub d2: i64,
    pub bits1: String,
    pub bits2: String,
    pub on_path: bool,
}

#[derive(Debug, Serialize)]
pub struct PositionView {
    pub rows: Vec<PositionRow>,
    pub path: Vec<usize>,
    pub exact: bool,
}

fn bits(d: i64) -> String {
    encode_position(d).iter().map(|b| char::from(b'0' + b)).collect()
}

fn mention_views(s: &Sentence, rules: &RuleSet) -> Vec<MentionView> {
    let surfaces: Vec<&str> = s.surfaces().collect();
    s.attribute_mentions
        .iter()
        .map(|m| {
            let hit = rules.find_match(&surfaces, m.span);
            MentionView {
                start: m.span.start,
                end: m.span.end,
                text: surfaces[m.span.start..m.span.end].join(" "),
                category: m.category.as_str().to_string(),
                rule_label: hit.as_ref().map(|h| h.label.to_string()),
                cue: hit.map(|h| h.cue),
            }
        })
        .collect()
}

/// Splits `text` on whitespace and detaches trailing `,.;:` marks.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for w in text.split_whitespace() {
        let trimmed = w.trim_end_matches([',', '.', ';', ':']);
        if !trimmed.is_empty() {
            out.push(trimmed.to_string());
        }
        out.extend(w[trimmed.len()..].chars().map(String::from));
    }
    out
}

/// Matches vocabulary attributes in free text and reports which cue rule,
/// if any, fires on each.
pub fn analyze_text(text: &str) -> Vec<MentionView> {
    use lesion_attr::corpus::{NeTag, Token};
    let tokens: Vec<Token> = tokenize(text)
        .into_iter()
        .enumerate()
        .map(|(index, surface)| Token {
            surface,
            lemma: String::new(),
            pos: String::new(),
            chunk: String::new(),
            ne: NeTag::None,
            dep_head: None,
            index,
        })
        .collect();
    let mut s = Sentence {
        id: "input".into(),
        tokens,
        bookmarks: Vec::new(),
        attribute_mentions: Vec::new(),
        sentence_embedding: None,
        pairs: Vec::new(),
    };
    s.attribute_mentions = match_attributes(&s, &Vocabulary::default_radiology());
    mention_views(&s, &RuleSet::default_rules())
}

fn demo_run(seed: u64) -> RunConfig {
    let mut run = RunConfig::default();
    run.train.seed = seed;
    run.train.lr = 0.003;
    run.train.batch_size = 32;
    run.train.patience_epochs = 3;
    run.model = ModelConfig {
        heads: 2,
        head_dim: 8,
        fc_sizes: vec![16, 3],
        ..ModelConfig::default()
    };
    run.features.max_len = 64;
    run.embeddings.dim = 8;
    run.tags_from_corpus = true;
    run
}

#[wasm_bindgen]
pub struct Demo {
    sentences: Vec<Sentence>,
    checkpoint: Checkpoint,
    trained: bool,
    rules: RuleSet,
    seed: u64,
}

impl Demo {
    pub fn create(seed: u64) -> lesion_attr::Result<Demo> {
        let sentences = generate_corpus(&SynthConfig::new(CORPUS_SIZE, seed))?;
        let run = demo_run(seed);
        let encoder = Encoder::for_run(&run, &sentences)?;
        let model = Model::new(run.model.clone(), encoder.model_shape(), None, seed)?;
        Ok(Demo {
            sentences,
            checkpoint: Checkpoint { model, encoder },
            trained: false,
            rules: RuleSet::default_rules(),
            seed,
        })
    }

    pub fn fit(&mut self, epochs: usize) -> lesion_attr::Result<TrainHistory> {
        let mut run = demo_run(self.seed);
        run.train.max_epochs = epochs.max(1);
        let cut = self.sentences.len() * 4 / 5;
        let (ck, history) = fit(&run, self.sentences[..cut].to_vec(), self.sentences[cut..].to_vec())?;
        self.checkpoint = ck;
        self.trained = true;
        Ok(history)
    }

    fn pair(&self, sentence: usize, pair: usize) -> Option<(&Sentence, CandidatePair)> {
        let s = self.sentences.get(sentence)?;
        let p = generate_candidates(s).into_iter().nth(pair)?;
        Some((s, p))
    }

    pub fn sentence_view(&self, i: usize) -> Option<SentenceView> {
        let s = self.sentences.get(i)?;
        Some(SentenceView {
            id: s.id.clone(),
            tokens: s.surfaces().map(String::from).collect(),
            heads: s.tokens.iter().map(|t| t.dep_head).collect(),
            bookmarks: s
                .bookmarks
                .iter()
                .map(|b| (b.span.start, b.span.end, b.role == lesion_attr::corpus::BookmarkRole::TargetCandidate))
                .collect(),
            mentions: mention_views(s, &self.rules),
            pairs: generate_candidates(s)
                .into_iter()
                .map(|p| PairView {
                    bookmark: p.bookmark,
                    attribute: p.attribute,
                    gold: p.gold.map(|g| g.to_string()),
                })
                .collect(),
        })
    }

    pub fn attention_view(&self, sentence: usize, pair: usize) -> lesion_attr::Result<Option<AttentionView>> {
        let Some((s, p)) = self.pair(sentence, pair) else {
            return Ok(None);
        };
        let ck = &self.checkpoint;
        let input = ck.encoder.encode(s, &p)?;
        let maps = ck.model.attention_maps(&input)?;
        let probabilities = ck.model.predict(&input)?;
        let data = Dataset::all_pairs(vec![s.clone()]);
        let k = data.examples.iter().position(|e| e.pair == p).expect("same candidates");
        let scored = &lesion_attr::harness::score_dataset(&ck.model, &ck.encoder, &data, Some(&self.rules))?[k];
        Ok(Some(AttentionView {
            tokens: input.word_tokens.clone(),
            path: input.path_indices.clone(),
            maps: maps
                .into_iter()
                .map(|m| HeadMap {
                    branch: m.branch.to_string(),
                    head: m.head,
                    weights: (0..m.weights.rows()).map(|r| m.weights.row(r).to_vec()).collect(),
                })
                .collect(),
            probabilities,
            predicted: scored.model_label.to_string(),
            with_rules: scored.predicted.to_string(),
            trained: self.trained,
        }))
    }

    pub fn position_view(&self, sentence: usize, pair: usize) -> Option<PositionView> {
        let (s, p) = self.pair(sentence, pair)?;
        let anchor = s.attribute_mentions[p.attribute].span.last();
        let bookmark: Span = s.bookmarks[p.bookmark].span;
        let (path, exact) = lesion_attr::features::shortest_dependency_path(s, anchor, bookmark.last());
        let rows = s
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let (d1, d2) = (i as i64 - anchor as i64, i as i64 - bookmark.last() as i64);
                PositionRow {
                    token: t.surface.clone(),
                    d1,
                    d2,
                    bits1: bits(d1),
                    bits2: bits(d2),
                    on_path: path.contains(&i),
                }
            })
            .collect();
        Some(PositionView { rows, path, exact })
    }
}

fn to_js<T: Serialize>(v: &T) -> Result<String, JsError> {
    serde_json::to_string(v).map_err(|e| JsError::new(&e.to_string()))
}

fn js_err(e: lesion_attr::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32) -> Result<Demo, JsError> {
        Demo::create(u64::from(seed)).map_err(js_err)
    }

    #[wasm_bindgen(js_name = sentenceCount)]
    pub fn sentence_count(&self) -> usize {
        self.sentences.len()
    }

    /// Tokens, dependency heads, bookmarks, mentions with rule hits, pairs.
    pub fn sentence(&self, i: usize) -> Result<String, JsError> {
        to_js(&self.sentence_view(i))
    }

    /// Trains on 80% of the corpus; returns the per-epoch history.
    pub fn train(&mut self, epochs: usize) -> Result<String, JsError> {
        let h = self.fit(epochs).map_err(js_err)?;
        to_js(&h)
    }

    pub fn attention(&self, sentence: usize, pair: usize) -> Result<String, JsError> {
        to_js(&self.attention_view(sentence, pair).map_err(js_err)?)
    }

    pub fn positions(&self, sentence: usize, pair: usize) -> Result<String, JsError> {
        to_js(&self.position_view(sentence, pair))
    }
}

#[wasm_bindgen(js_name = analyzeText)]
pub fn analyze_text_js(text: &str) -> Result<String, JsError> {
    to_js(&analyze_text(text))
}
