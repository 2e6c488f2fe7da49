use std::fmt;
use std::str::FromStr;

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Relation between a bookmark and an attribute mention.
///
/// The integer encoding (`Relevant = 0`, `Uncertain = 1`, `Irrelevant = 2`)
/// is also the class index of the model's output vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Relevant = 0,
    Uncertain = 1,
    Irrelevant = 2,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Relevant, Label::Uncertain, Label::Irrelevant];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Relevant => "relevant",
            Label::Uncertain => "uncertain",
            Label::Irrelevant => "irrelevant",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = self.name();
        let mut c = s.chars();
        let first = c.next().unwrap().to_ascii_uppercase();
        write!(f, "{first}{}", c.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "relevant" | "0" => Ok(Label::Relevant),
            "uncertain" | "uncertainty" | "1" => Ok(Label::Uncertain),
            "irrelevant" | "2" => Ok(Label::Irrelevant),
            other => Err(Error::Config(format!("unknown label {other:?}"))),
        }
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(i) => Label::from_index(i as usize)
                .ok_or_else(|| de::Error::custom(format!("label index {i} out of range"))),
            Raw::Str(s) => s.parse().map_err(de::Error::custom),
        }
    }
}

/// Named-entity slot of a token. Only three attribute classes are tagged.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NeTag {
    #[serde(rename = "SIZE")]
    Size,
    #[serde(rename = "TYPE")]
    Type,
    #[serde(rename = "BODYPART")]
    BodyPart,
    #[serde(rename = "NONE")]
    None,
}

impl NeTag {
    pub const ALL: [NeTag; 4] = [NeTag::Size, NeTag::Type, NeTag::BodyPart, NeTag::None];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Parses a tag; anything unrecognized is `None`.
    pub fn parse_lenient(s: &str) -> (NeTag, bool) {
        match s.trim().to_ascii_uppercase().as_str() {
            "SIZE" => (NeTag::Size, true),
            "TYPE" => (NeTag::Type, true),
            "BODYPART" => (NeTag::BodyPart, true),
            "NONE" | "O" | "" => (NeTag::None, true),
            _ => (NeTag::None, false),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NeTag::Size => "SIZE",
            NeTag::Type => "TYPE",
            NeTag::BodyPart => "BODYPART",
            NeTag::None => "NONE",
        }
    }
}

/// Vocabulary category of an attribute.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    #[serde(rename = "SIZE")]
    Size,
    #[serde(rename = "TYPE")]
    Type,
    #[serde(rename = "BODYPART")]
    BodyPart,
    #[serde(rename = "SHAPE")]
    Shape,
    #[serde(rename = "INTENSITY")]
    Intensity,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Size,
        Category::Type,
        Category::BodyPart,
        Category::Shape,
        Category::Intensity,
    ];

    pub fn ne_tag(self) -> NeTag {
        match self {
            Category::Size => NeTag::Size,
            Category::Type => NeTag::Type,
            Category::BodyPart => NeTag::BodyPart,
            Category::Shape | Category::Intensity => NeTag::None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Size => "SIZE",
            Category::Type => "TYPE",
            Category::BodyPart => "BODYPART",
            Category::Shape => "SHAPE",
            Category::Intensity => "INTENSITY",
        }
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown category {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    pub surface: String,
    pub lemma: String,
    pub pos: String,
    pub chunk: String,
    pub ne: NeTag,
    /// Head token index; `None` for the root.
    pub dep_head: Option<usize>,
    pub index: usize,
}

/// Half-open token range `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(self) -> bool {
        self.end <= self.start
    }

    pub fn contains(self, i: usize) -> bool {
        self.start <= i && i < self.end
    }

    pub fn overlaps(self, other: Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    /// Last token of the span, used as its distance anchor.
    pub fn last(self) -> usize {
        self.end - 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BookmarkRole {
    #[serde(rename = "TARGET_CANDIDATE")]
    TargetCandidate,
    #[serde(rename = "OTHER")]
    Other,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bookmark {
    #[serde(flatten)]
    pub span: Span,
    pub role: BookmarkRole,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeMention {
    #[serde(flatten)]
    pub span: Span,
    pub normalized: String,
    pub category: Category,
}

/// Gold annotation of one (bookmark, mention) pair of a sentence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldPair {
    pub bookmark_index: usize,
    pub mention_index: usize,
    pub gold: Label,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sentence {
    pub id: String,
    pub tokens: Vec<Token>,
    pub bookmarks: Vec<Bookmark>,
    pub attribute_mentions: Vec<AttributeMention>,
    pub sentence_embedding: Option<Vec<f64>>,
    pub pairs: Vec<GoldPair>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn surfaces(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.surface.as_str())
    }

    pub fn gold_for(&self, bookmark: usize, mention: usize) -> Option<Label> {
        self.pairs
            .iter()
            .find(|p| p.bookmark_index == bookmark && p.mention_index == mention)
            .map(|p| p.gold)
    }

    /// Checks every structural invariant of the sentence.
    pub fn validate(&self) -> Result<()> {
        let n = self.tokens.len();
        let bad = |message: String| Error::InvalidSentence {
            id: self.id.clone(),
            message,
        };
        for (i, t) in self.tokens.iter().enumerate() {
            if t.index != i {
                return Err(bad(format!("token {i} carries index {}", t.index)));
            }
            match t.dep_head {
                Some(h) if h >= n => {
                    return Err(Error::SpanOutOfRange {
                        id: self.id.clone(),
                    })
                }
                Some(h) if h == i => return Err(bad(format!("token {i} heads itself"))),
                _ => {}
            }
        }
        let spans_ok = |spans: &mut dyn Iterator<Item = Span>| -> Result<()> {
            let mut seen: Vec<Span> = Vec::new();
            for s in spans {
                if s.is_empty() || s.end > n {
                    return Err(Error::SpanOutOfRange {
                        id: self.id.clone(),
                    });
                }
                if seen.iter().any(|o| o.overlaps(s)) {
                    return Err(bad(format!("overlapping spans at {}..{}", s.start, s.end)));
                }
                seen.push(s);
            }
            Ok(())
        };
        spans_ok(&mut self.bookmarks.iter().map(|b| b.span))?;
        spans_ok(&mut self.attribute_mentions.iter().map(|m| m.span))?;
        for p in &self.pairs {
            if p.bookmark_index >= self.bookmarks.len()
                || p.mention_index >= self.attribute_mentions.len()
            {
                return Err(bad(format!(
                    "pair ({}, {}) refers to a missing bookmark or mention",
                    p.bookmark_index, p.mention_index
                )));
            }
        }
        Ok(())
    }
}

/// One (bookmark, attribute mention) candidate of a sentence. Both indices
/// point into the owning sentence's lists.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidatePair {
    pub sentence_id: String,
    pub bookmark: usize,
    pub attribute: usize,
    pub gold: Option<Label>,
    pub predicted: Option<Label>,
}
