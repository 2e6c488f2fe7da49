//! JSON Lines corpus files.
//!
//! One sentence per line:
//!
//! ```json
//! {"id": "s1",
//!  "tokens": [{"surface": "Nodule", "lemma": "nodule", "pos": "NN",
//!              "chunk": "B-NP", "ne": "TYPE", "dep_head": null}, ...],
//!  "bookmarks": [{"start": 4, "end": 5, "role": "TARGET_CANDIDATE"}],
//!  "mentions": [{"start": 0, "end": 1, "normalized": "nodule", "category": "TYPE"}],
//!  "sentence_embedding": [0.1, ...],
//!  "pairs": [{"bookmark_index": 0, "mention_index": 0, "gold": "relevant"}]}
//! ```
//!
//! `mentions`, `sentence_embedding` and `pairs` are optional. Spans are
//! half-open token ranges and `dep_head` is a 0-based index or null for the
//! root.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use super::types::{AttributeMention, Bookmark, GoldPair, NeTag, Sentence, Token};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct TokenRecord {
    surface: String,
    #[serde(default)]
    lemma: String,
    #[serde(default)]
    pos: String,
    #[serde(default)]
    chunk: String,
    #[serde(default)]
    ne: String,
    dep_head: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct SentenceRecord {
    id: String,
    tokens: Vec<TokenRecord>,
    #[serde(default)]
    bookmarks: Vec<Bookmark>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    mentions: Vec<AttributeMention>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sentence_embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pairs: Vec<GoldPair>,
}

/// Result of reading a corpus file.
#[derive(Debug, Default)]
pub struct LoadedCorpus {
    pub sentences: Vec<Sentence>,
    /// Tokens whose NE tag was not recognized and was mapped to `NONE`.
    pub unknown_ne_tags: usize,
}

fn from_record(rec: SentenceRecord, unknown_ne: &mut usize) -> Result<Sentence> {
    let tokens = rec
        .tokens
        .into_iter()
        .enumerate()
        .map(|(index, t)| {
            let (ne, known) = NeTag::parse_lenient(&t.ne);
            if !known {
                *unknown_ne += 1;
            }
            Token {
                surface: t.surface,
                lemma: t.lemma,
                pos: t.pos,
                chunk: t.chunk,
                ne,
                dep_head: t.dep_head,
                index,
            }
        })
        .collect();
    let s = Sentence {
        id: rec.id,
        tokens,
        bookmarks: rec.bookmarks,
        attribute_mentions: rec.mentions,
        sentence_embedding: rec.sentence_embedding,
        pairs: rec.pairs,
    };
    s.validate()?;
    Ok(s)
}

fn to_record(s: &Sentence) -> SentenceRecord {
    SentenceRecord {
        id: s.id.clone(),
        tokens: s
            .tokens
            .iter()
            .map(|t| TokenRecord {
                surface: t.surface.clone(),
                lemma: t.lemma.clone(),
                pos: t.pos.clone(),
                chunk: t.chunk.clone(),
                ne: t.ne.as_str().to_string(),
                dep_head: t.dep_head,
            })
            .collect(),
        bookmarks: s.bookmarks.clone(),
        mentions: s.attribute_mentions.clone(),
        sentence_embedding: s.sentence_embedding.clone(),
        pairs: s.pairs.clone(),
    }
}

/// Parses corpus text. Blank lines are skipped; line numbers are 1-based.
pub fn parse_corpus(reader: impl BufRead) -> Result<LoadedCorpus> {
    let mut out = LoadedCorpus::default();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SentenceRecord = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        out.sentences
            .push(from_record(rec, &mut out.unknown_ne_tags)?);
    }
    if out.unknown_ne_tags > 0 {
        warn!("{} unknown NE tags mapped to NONE", out.unknown_ne_tags);
    }
    Ok(out)
}

pub fn load_corpus(path: &Path) -> Result<LoadedCorpus> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(BufReader::new(f))
}

pub fn sentence_to_json(s: &Sentence) -> Result<String> {
    Ok(serde_json::to_string(&to_record(s))?)
}

pub fn write_corpus(mut w: impl Write, sentences: &[Sentence]) -> Result<()> {
    for s in sentences {
        let line = sentence_to_json(s)?;
        writeln!(w, "{line}").map_err(|e| Error::io("<corpus>", e))?;
    }
    Ok(())
}

pub fn save_corpus(path: &Path, sentences: &[Sentence]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_corpus(&mut w, sentences)?;
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE: &str = r#"{"id":"a","tokens":[{"surface":"Large","lemma":"large","pos":"JJ","chunk":"B-NP","ne":"SIZE","dep_head":1},{"surface":"nodule","lemma":"nodule","pos":"NN","chunk":"I-NP","ne":"TYPE","dep_head":null},{"surface":"in","lemma":"in","pos":"IN","chunk":"B-PP","ne":"NONE","dep_head":1},{"surface":"liver","lemma":"liver","pos":"NN","chunk":"B-NP","ne":"BODYPART","dep_head":2},{"surface":"BOOKMARK","lemma":"bookmark","pos":"NN","chunk":"I-NP","ne":"NONE","dep_head":1}],"bookmarks":[{"start":4,"end":5,"role":"TARGET_CANDIDATE"}]}"#;

    #[test]
    fn loads_single_sentence() {
        let c = parse_corpus(ONE.as_bytes()).unwrap();
        assert_eq!(c.sentences.len(), 1);
        let s = &c.sentences[0];
        assert_eq!(s.tokens.len(), 5);
        assert_eq!(s.bookmarks.len(), 1);
        assert_eq!(s.tokens[3].index, 3);
        assert_eq!(c.unknown_ne_tags, 0);
    }

    #[test]
    fn empty_input() {
        assert!(parse_corpus("".as_bytes()).unwrap().sentences.is_empty());
    }

    #[test]
    fn out_of_range_bookmark_names_sentence() {
        let bad = ONE.replace(r#""start":4,"end":5"#, r#""start":4,"end":9"#);
        match parse_corpus(bad.as_bytes()) {
            Err(Error::SpanOutOfRange { id }) => assert_eq!(id, "a"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_line_names_line_number() {
        let text = format!("{ONE}\n{{not json\n");
        match parse_corpus(text.as_bytes()) {
            Err(Error::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_ne_counted() {
        let text = ONE.replace(r#""ne":"SIZE""#, r#""ne":"DRUG""#);
        let c = parse_corpus(text.as_bytes()).unwrap();
        assert_eq!(c.unknown_ne_tags, 1);
        assert_eq!(c.sentences[0].tokens[0].ne, NeTag::None);
    }
}
