use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use super::types::Category;
use crate::error::{Error, Result};

/// Shipped attribute vocabulary (`phrase<TAB>category`).
pub const DEFAULT_VOCABULARY: &str = include_str!("../../data/vocabulary.tsv");
/// Shipped lemma table (`surface<TAB>lemma`).
pub const DEFAULT_LEMMAS: &str = include_str!("../../data/lemmas.tsv");

/// Lowercases and collapses runs of whitespace to single spaces.
pub fn canonical_phrase(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Attribute vocabulary plus the lemma table used to match it.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Vocabulary {
    entries: BTreeMap<String, Category>,
    lemma_table: HashMap<String, String>,
    max_words: usize,
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
}

fn split_tab(line_no: usize, line: &str) -> Result<(&str, &str)> {
    line.split_once('\t').ok_or_else(|| Error::Malformed {
        line: line_no,
        message: "expected two tab-separated fields".into(),
    })
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// The shipped 171-entry vocabulary with the shipped lemma table.
    pub fn default_radiology() -> Self {
        let mut v = Self::parse(DEFAULT_VOCABULARY).expect("shipped vocabulary parses");
        v.lemma_table = parse_lemma_table(DEFAULT_LEMMAS).expect("shipped lemmas parse");
        v
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut v = Vocabulary::new();
        for (line_no, line) in data_lines(text) {
            let (phrase, cat) = split_tab(line_no, line)?;
            let cat: Category = cat.parse().map_err(|_| Error::Malformed {
                line: line_no,
                message: format!("unknown category {cat:?}"),
            })?;
            let phrase = canonical_phrase(phrase);
            if phrase.is_empty() {
                return Err(Error::Malformed {
                    line: line_no,
                    message: "empty phrase".into(),
                });
            }
            if v.entries.contains_key(&phrase) {
                return Err(Error::Malformed {
                    line: line_no,
                    message: format!("duplicate phrase {phrase:?}"),
                });
            }
            v.insert(&phrase, cat);
        }
        Ok(v)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn insert(&mut self, phrase: &str, category: Category) {
        let phrase = canonical_phrase(phrase);
        self.max_words = self.max_words.max(phrase.split(' ').count());
        self.entries.insert(phrase, category);
    }

    pub fn with_lemma_table(mut self, table: HashMap<String, String>) -> Self {
        self.lemma_table = table;
        self
    }

    pub fn lemma_table(&self) -> &HashMap<String, String> {
        &self.lemma_table
    }

    pub fn get(&self, phrase: &str) -> Option<Category> {
        self.entries.get(phrase).copied()
    }

    pub fn contains(&self, phrase: &str) -> bool {
        self.entries.contains_key(phrase)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Longest entry length in words.
    pub fn max_words(&self) -> usize {
        self.max_words
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Category)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn by_category(&self, cat: Category) -> Vec<&str> {
        self.iter()
            .filter(|(_, c)| *c == cat)
            .map(|(p, _)| p)
            .collect()
    }
}

pub fn parse_lemma_table(text: &str) -> Result<HashMap<String, String>> {
    let mut table = HashMap::new();
    for (line_no, line) in data_lines(text) {
        let (surface, lemma) = split_tab(line_no, line)?;
        table.insert(surface.trim().to_string(), lemma.trim().to_string());
    }
    Ok(table)
}

pub fn load_lemma_table(path: &Path) -> Result<HashMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_lemma_table(&text)
}

/// Table entry for `surface` (exact, then lowercased), else the lowercased surface.
pub fn lemmatize(surface: &str, table: &HashMap<String, String>) -> String {
    if let Some(l) = table.get(surface) {
        return l.clone();
    }
    let lower = surface.to_lowercase();
    table.get(&lower).cloned().unwrap_or(lower)
}
