//! Turns a candidate pair into model inputs: the blinded word sequence, the
//! shortest dependency path between the attribute and the bookmark, and a
//! sentence vector.
//!
//! Each token row is the concatenation
//! `[word vector | POS one-hot | chunk one-hot | NE one-hot (4) | pos(d1) (10) | pos(d2) (10)]`
//! where `d1`, `d2` are signed distances to the attribute anchor and to the
//! bookmark.

mod embedding;

use std::collections::{BTreeSet, VecDeque};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use embedding::EmbeddingTable;

use crate::autodiff::Tensor;
use crate::corpus::{CandidatePair, NeTag, Sentence, Span};
use crate::error::{Error, Result};

pub const BOOKMARK_TOKEN: &str = "BOOKMARK";
pub const OTHER_BOOKMARK_TOKEN: &str = "OTHER_BOOKMARK";
pub const POSITION_BITS: usize = 10;
/// Largest distance magnitude representable in the nine magnitude bits.
pub const MAX_DISTANCE: u32 = (1 << (POSITION_BITS - 1)) - 1;

pub const DEFAULT_POS_TAGS: &str = include_str!("../../data/pos_tags.txt");
pub const DEFAULT_CHUNK_TAGS: &str = include_str!("../../data/chunk_tags.txt");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub max_len: usize,
    pub pos_tagset: Vec<String>,
    pub chunk_tagset: Vec<String>,
    pub position_bits: usize,
    pub use_shortest_path: bool,
    pub sentence_embedding_dim: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            max_len: 128,
            pos_tagset: parse_tagset(DEFAULT_POS_TAGS),
            chunk_tagset: parse_tagset(DEFAULT_CHUNK_TAGS),
            position_bits: POSITION_BITS,
            use_shortest_path: true,
            sentence_embedding_dim: 0,
        }
    }
}

/// One tag per line; blank lines are ignored.
pub fn parse_tagset(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect()
}

pub fn load_tagset(path: &Path) -> Result<Vec<String>> {
    Ok(parse_tagset(
        &fs::read_to_string(path).map_err(|e| Error::io(path, e))?,
    ))
}

impl FeatureConfig {
    /// Tagsets restricted to the tags observed in `sentences` (sorted).
    pub fn with_observed_tags(mut self, sentences: &[Sentence]) -> Self {
        let pos: BTreeSet<&str> = sentences
            .iter()
            .flat_map(|s| s.tokens.iter().map(|t| t.pos.as_str()))
            .collect();
        let chunk: BTreeSet<&str> = sentences
            .iter()
            .flat_map(|s| s.tokens.iter().map(|t| t.chunk.as_str()))
            .collect();
        self.pos_tagset = pos.into_iter().map(String::from).collect();
        self.chunk_tagset = chunk.into_iter().map(String::from).collect();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_len < 2 {
            return Err(Error::Config("max_len must be at least 2".into()));
        }
        if self.position_bits != POSITION_BITS {
            return Err(Error::Config(format!(
                "position_bits is fixed at {POSITION_BITS}"
            )));
        }
        Ok(())
    }

    /// Per-token feature width for a given word-vector width.
    pub fn token_width(&self, word_dim: usize) -> usize {
        word_dim + self.pos_tagset.len() + self.chunk_tagset.len() + NeTag::ALL.len() + 2 * POSITION_BITS
    }
}

/// Sign bit followed by the 9-bit big-endian magnitude, clamped to 511.
pub fn encode_position(distance: i64) -> [u8; POSITION_BITS] {
    let mut bits = [0u8; POSITION_BITS];
    bits[0] = u8::from(distance < 0);
    let mag = distance.unsigned_abs().min(u64::from(MAX_DISTANCE));
    for b in 1..POSITION_BITS {
        let shift = POSITION_BITS - 1 - b;
        bits[b] = ((mag >> shift) & 1) as u8;
    }
    bits
}

/// Where a blinded token came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Origin {
    Word(usize),
    /// A collapsed bookmark span; `target` marks the pair's bookmark.
    Bookmark { span: Span, target: bool },
}

/// Sentence with bookmark spans collapsed to placeholder tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct Blinded {
    pub tokens: Vec<String>,
    pub origins: Vec<Origin>,
    /// Blinded position of every original token.
    pub position_of: Vec<usize>,
    pub bookmark_pos: usize,
    /// Blinded position of the attribute's anchor (last) token.
    pub attribute_pos: usize,
}

/// Replaces the pair's bookmark span with `BOOKMARK` and every other
/// bookmark span with `OTHER_BOOKMARK`, one token per span.
pub fn blind_entities(sentence: &Sentence, pair: &CandidatePair) -> Result<Blinded> {
    let bookmark = sentence
        .bookmarks
        .get(pair.bookmark)
        .ok_or_else(|| Error::InvalidSentence {
            id: sentence.id.clone(),
            message: format!("no bookmark {}", pair.bookmark),
        })?;
    let mention = sentence
        .attribute_mentions
        .get(pair.attribute)
        .ok_or_else(|| Error::InvalidSentence {
            id: sentence.id.clone(),
            message: format!("no mention {}", pair.attribute),
        })?;
    if sentence
        .bookmarks
        .iter()
        .any(|b| b.span.overlaps(mention.span))
    {
        return Err(Error::Overlap {
            id: sentence.id.clone(),
        });
    }

    let n = sentence.tokens.len();
    let mut tokens = Vec::with_capacity(n);
    let mut origins = Vec::with_capacity(n);
    let mut position_of = vec![0; n];
    let mut i = 0;
    while i < n {
        match sentence.bookmarks.iter().find(|b| b.span.start == i) {
            Some(b) => {
                let target = b.span == bookmark.span;
                tokens.push(if target { BOOKMARK_TOKEN } else { OTHER_BOOKMARK_TOKEN }.to_string());
                origins.push(Origin::Bookmark {
                    span: b.span,
                    target,
                });
                for j in b.span.start..b.span.end {
                    position_of[j] = tokens.len() - 1;
                }
                i = b.span.end;
            }
            None => {
                tokens.push(sentence.tokens[i].surface.clone());
                origins.push(Origin::Word(i));
                position_of[i] = tokens.len() - 1;
                i += 1;
            }
        }
    }
    Ok(Blinded {
        bookmark_pos: position_of[bookmark.span.start],
        attribute_pos: position_of[mention.span.last()],
        tokens,
        origins,
        position_of,
    })
}

/// Breadth-first search over dependency arcs taken as undirected edges.
/// Neighbors are visited in ascending index order, so ties resolve toward
/// smaller indices. When the endpoints are disconnected, the linear run of
/// tokens between them is returned with `false`.
pub fn shortest_dependency_path(sentence: &Sentence, from: usize, to: usize) -> (Vec<usize>, bool) {
    let n = sentence.tokens.len();
    let mut adj = vec![Vec::new(); n];
    for t in &sentence.tokens {
        if let Some(h) = t.dep_head {
            if h < n && h != t.index {
                adj[t.index].push(h);
                adj[h].push(t.index);
            }
        }
    }
    for a in &mut adj {
        a.sort_unstable();
        a.dedup();
    }
    let mut parent = vec![usize::MAX; n];
    parent[from] = from;
    let mut queue = VecDeque::from([from]);
    while let Some(u) = queue.pop_front() {
        if u == to {
            break;
        }
        for &v in &adj[u] {
            if parent[v] == usize::MAX {
                parent[v] = u;
                queue.push_back(v);
            }
        }
    }
    if parent[to] == usize::MAX {
        let path = if from <= to {
            (from..=to).collect()
        } else {
            (to..=from).rev().collect()
        };
        return (path, false);
    }
    let mut path = vec![to];
    let mut cur = to;
    while cur != from {
        cur = parent[cur];
        path.push(cur);
    }
    path.reverse();
    (path, true)
}

fn one_hot_into(out: &mut Vec<f64>, tagset: &[String], tag: &str) {
    let start = out.len();
    out.resize(start + tagset.len(), 0.0);
    if let Some(i) = tagset.iter().position(|t| t == tag) {
        out[start + i] = 1.0;
    }
}

/// Feature row of one token; unknown tags leave their one-hot block empty.
#[allow(clippy::too_many_arguments)]
pub fn encode_token(
    surface: &str,
    ne: NeTag,
    pos: &str,
    chunk: &str,
    d1: i64,
    d2: i64,
    table: &EmbeddingTable,
    config: &FeatureConfig,
) -> Vec<f64> {
    let mut v = Vec::with_capacity(config.token_width(table.dim()));
    v.extend_from_slice(table.vector(surface));
    one_hot_into(&mut v, &config.pos_tagset, pos);
    one_hot_into(&mut v, &config.chunk_tagset, chunk);
    let mut ne_block = [0.0; 4];
    ne_block[ne.index()] = 1.0;
    v.extend_from_slice(&ne_block);
    v.extend(encode_position(d1).iter().map(|&b| f64::from(b)));
    v.extend(encode_position(d2).iter().map(|&b| f64::from(b)));
    v
}

/// Encoded inputs of one candidate pair.
#[derive(Clone, Debug, PartialEq)]
pub struct PairInput {
    /// `[max_len, d]`; rows with `word_mask` false are zero.
    pub word_matrix: Tensor,
    /// `[max_len, d]`; rows with `path_mask` false are zero.
    pub path_matrix: Tensor,
    pub word_mask: Vec<bool>,
    pub path_mask: Vec<bool>,
    /// Embedding row ids (UNK included) for the valid rows, `None` on padding.
    pub word_ids: Vec<Option<usize>>,
    pub path_ids: Vec<Option<usize>>,
    pub sentence_vec: Vec<f64>,
    pub d: usize,
    /// Blinded surfaces of the valid word rows.
    pub word_tokens: Vec<String>,
    /// Original token indices along the dependency path.
    pub path_indices: Vec<usize>,
    pub path_exact: bool,
}

impl PairInput {
    pub fn word_len(&self) -> usize {
        self.word_mask.iter().filter(|&&m| m).count()
    }

    pub fn path_len(&self) -> usize {
        self.path_mask.iter().filter(|&&m| m).count()
    }
}

/// Start of the `max_len` window over `len` tokens that keeps the attribute
/// and bookmark positions: centered on their midpoint, then shifted into
/// bounds. If the two are further apart than the window, the window keeps
/// the bookmark and extends toward the attribute.
pub fn truncation_window(len: usize, max_len: usize, attribute: usize, bookmark: usize) -> usize {
    if len <= max_len {
        return 0;
    }
    let (lo, hi) = (attribute.min(bookmark), attribute.max(bookmark));
    if hi - lo >= max_len {
        return if attribute < bookmark {
            bookmark + 1 - max_len
        } else {
            bookmark.min(len - max_len)
        };
    }
    let mid = (lo + hi) / 2;
    let start = mid.saturating_sub(max_len / 2).min(len - max_len);
    // Shift to include both ends.
    let start = start.min(lo);
    start.max((hi + 1).saturating_sub(max_len))
}

fn tags_for(sentence: &Sentence, origin: Origin) -> (NeTag, &str, &str) {
    let t = match origin {
        Origin::Word(i) => &sentence.tokens[i],
        Origin::Bookmark { span, .. } => &sentence.tokens[span.last()],
    };
    (t.ne, t.pos.as_str(), t.chunk.as_str())
}

/// Mean of the in-table word vectors of the sentence, or zeros.
pub fn fallback_sentence_vec(sentence: &Sentence, table: &EmbeddingTable) -> Vec<f64> {
    let mut sum = vec![0.0; table.dim()];
    let mut count = 0usize;
    for t in &sentence.tokens {
        if let Some(id) = table.lookup(&t.surface) {
            for (s, v) in sum.iter_mut().zip(table.row(id)) {
                *s += v;
            }
            count += 1;
        }
    }
    if count > 0 {
        sum.iter_mut().for_each(|s| *s /= count as f64);
    }
    sum
}

pub fn build_pair_input(
    sentence: &Sentence,
    pair: &CandidatePair,
    table: &EmbeddingTable,
    config: &FeatureConfig,
) -> Result<PairInput> {
    config.validate()?;
    let blinded = blind_entities(sentence, pair)?;
    let d = config.token_width(table.dim());
    let max_len = config.max_len;

    let start = truncation_window(
        blinded.tokens.len(),
        max_len,
        blinded.attribute_pos,
        blinded.bookmark_pos,
    );
    let end = (start + max_len).min(blinded.tokens.len());
    let mut word = vec![0.0; max_len * d];
    let mut word_mask = vec![false; max_len];
    let mut word_ids = vec![None; max_len];
    for (row, p) in (start..end).enumerate() {
        let (ne, pos, chunk) = tags_for(sentence, blinded.origins[p]);
        let d1 = p as i64 - blinded.attribute_pos as i64;
        let d2 = p as i64 - blinded.bookmark_pos as i64;
        let surface = &blinded.tokens[p];
        let v = encode_token(surface, ne, pos, chunk, d1, d2, table, config);
        word[row * d..(row + 1) * d].copy_from_slice(&v);
        word_mask[row] = true;
        word_ids[row] = Some(table.id_or_unk(surface));
    }

    let mention = &sentence.attribute_mentions[pair.attribute];
    let bookmark = &sentence.bookmarks[pair.bookmark];
    let (path_indices, path_exact) =
        shortest_dependency_path(sentence, mention.span.last(), bookmark.span.last());
    let mut path = vec![0.0; max_len * d];
    let mut path_mask = vec![false; max_len];
    let mut path_ids = vec![None; max_len];
    let plen = path_indices.len();
    for (row, &ti) in path_indices.iter().take(max_len).enumerate() {
        let origin = blinded.origins[blinded.position_of[ti]];
        let surface = &blinded.tokens[blinded.position_of[ti]];
        let (ne, pos, chunk) = tags_for(sentence, origin);
        let d1 = row as i64;
        let d2 = row as i64 - (plen as i64 - 1);
        let v = encode_token(surface, ne, pos, chunk, d1, d2, table, config);
        path[row * d..(row + 1) * d].copy_from_slice(&v);
        path_mask[row] = true;
        path_ids[row] = Some(table.id_or_unk(surface));
    }

    let sentence_vec = match &sentence.sentence_embedding {
        _ if config.sentence_embedding_dim == 0 => Vec::new(),
        Some(v) => v.clone(),
        None => fallback_sentence_vec(sentence, table),
    };
    if sentence_vec.len() != config.sentence_embedding_dim {
        return Err(Error::shape(format!(
            "sentence {}: sentence vector has {} entries, config expects {}",
            sentence.id,
            sentence_vec.len(),
            config.sentence_embedding_dim
        )));
    }

    Ok(PairInput {
        word_matrix: Tensor::matrix(max_len, d, word)?,
        path_matrix: Tensor::matrix(max_len, d, path)?,
        word_mask,
        path_mask,
        word_ids,
        path_ids,
        sentence_vec,
        d,
        word_tokens: blinded.tokens[start..end].to_vec(),
        path_indices,
        path_exact,
    })
}
