//! Template inventory for the synthetic generator.
//!
//! Templates are JSON. A piece is a list of tokens
//! `[surface, pos, chunk, head]`; `head` indexes another token of the same
//! piece, or is `-1` for the head noun of the enclosing clause. The surface
//! `{X}` is the attribute slot, filled with a vocabulary phrase of one of
//! the piece's `categories`; `{N}` is a random number. Multi-word slot
//! fillers attach their leading words to the last one.
//!
//! Sections:
//! - `generic_heads`: non-attribute head nouns.
//! - `prefixes`: optional sentence openers attached to the first clause.
//! - `bookmark`: the bookmark token sequence.
//! - `locations`: body-part phrases describing the clause's own lesion.
//! - `uncertain` / `irrelevant`: cue constructions whose cue immediately
//!   precedes the slot.
//! - `uncertain_hard` / `irrelevant_hard`: the same meaning with the cue
//!   further away, so a window-based matcher misses it.
//! - `other_openers`: joins a clause about another bookmark; its head noun
//!   attaches to the opener's last token.
//! - `other_determiners`: words before another clause's modifiers.
//! - `closer`: sentence-final tokens.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Category;
use crate::error::{Error, Result};

pub const DEFAULT_TEMPLATES: &str = include_str!("../../data/templates.json");

pub const SLOT: &str = "{X}";
pub const NUMBER: &str = "{N}";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplateToken(pub String, pub String, pub String, pub i64);

impl TemplateToken {
    pub fn surface(&self) -> &str {
        &self.0
    }

    pub fn pos(&self) -> &str {
        &self.1
    }

    pub fn chunk(&self) -> &str {
        &self.2
    }

    /// Index of the head within the piece, `None` for the clause head.
    pub fn head(&self) -> Option<usize> {
        usize::try_from(self.3).ok()
    }
}

pub type Piece = Vec<TemplateToken>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotPiece {
    #[serde(default)]
    pub categories: Vec<Category>,
    pub tokens: Piece,
}

impl SlotPiece {
    pub fn slot_index(&self) -> Option<usize> {
        self.tokens.iter().position(|t| t.surface() == SLOT)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Templates {
    pub generic_heads: Vec<String>,
    pub prefixes: Vec<Piece>,
    pub bookmark: Piece,
    pub locations: Vec<SlotPiece>,
    pub uncertain: Vec<SlotPiece>,
    #[serde(default)]
    pub uncertain_hard: Vec<SlotPiece>,
    pub irrelevant: Vec<SlotPiece>,
    #[serde(default)]
    pub irrelevant_hard: Vec<SlotPiece>,
    pub other_openers: Vec<Piece>,
    pub other_determiners: Vec<Piece>,
    pub closer: Piece,
}

fn check_piece(p: &[TemplateToken], what: &str, needs_slot: bool) -> Result<()> {
    let bad = |m: String| Error::Config(format!("template {what}: {m}"));
    for (i, t) in p.iter().enumerate() {
        if let Some(h) = t.head() {
            if h >= p.len() || h == i {
                return Err(bad(format!("token {i} has head {h}")));
            }
        }
    }
    // Heads inside a piece must not form a cycle.
    for start in 0..p.len() {
        let mut cur = start;
        for _ in 0..=p.len() {
            match p[cur].head() {
                Some(h) => cur = h,
                None => break,
            }
        }
        if p[cur].head().is_some() {
            return Err(bad("head cycle".into()));
        }
    }
    let slots = p.iter().filter(|t| t.surface() == SLOT).count();
    if needs_slot && slots != 1 {
        return Err(bad(format!("expected one {SLOT} slot, found {slots}")));
    }
    if !needs_slot && slots > 0 {
        return Err(bad(format!("unexpected {SLOT} slot")));
    }
    Ok(())
}

impl Templates {
    pub fn parse(text: &str) -> Result<Self> {
        let t: Templates = serde_json::from_str(text)?;
        t.validate()?;
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn default_radiology() -> Self {
        Self::parse(DEFAULT_TEMPLATES).expect("shipped templates are valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.generic_heads.is_empty() {
            return Err(Error::Config("templates need at least one generic head".into()));
        }
        if self.bookmark.is_empty() {
            return Err(Error::Config("empty bookmark template".into()));
        }
        for p in &self.prefixes {
            check_piece(p, "prefix", false)?;
        }
        for p in &self.other_openers {
            check_piece(p, "opener", false)?;
        }
        for p in &self.other_determiners {
            check_piece(p, "determiner", false)?;
        }
        check_piece(&self.bookmark, "bookmark", false)?;
        check_piece(&self.closer, "closer", false)?;
        let groups = [
            ("location", &self.locations),
            ("uncertain", &self.uncertain),
            ("uncertain_hard", &self.uncertain_hard),
            ("irrelevant", &self.irrelevant),
            ("irrelevant_hard", &self.irrelevant_hard),
        ];
        for (what, group) in groups {
            for p in group.iter() {
                check_piece(&p.tokens, what, true)?;
            }
        }
        Ok(())
    }
}
