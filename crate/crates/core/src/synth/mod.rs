//! Synthetic bookmarked sentences with gold labels.
//!
//! Each sentence has one clause about the target bookmark and up to two
//! clauses about other bookmarks, joined by openers such as "and". Gold
//! labels follow from construction: attributes of the target clause are
//! relevant, attributes of other clauses are irrelevant, and attributes
//! introduced by an uncertainty or negation/location cue take the cue's
//! label. A fraction of the cued attributes use "hard" variants whose cue
//! does not immediately precede the attribute.
//!
//! Every generated sentence is checked before it is kept: the vocabulary
//! matcher must find exactly the planted mentions and the default rules
//! must fire exactly on the planted immediate cues.

mod stats;
mod templates;

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rayon::prelude::*;

pub use stats::{corpus_stats, CorpusStats, SplitCounts};
pub use templates::{Piece, SlotPiece, TemplateToken, Templates, DEFAULT_TEMPLATES, NUMBER, SLOT};

use crate::autodiff::init;
use crate::corpus::{
    match_attributes, AttributeMention, Bookmark, BookmarkRole, Category, GoldPair, Label, NeTag,
    Sentence, Span, Token, Vocabulary,
};
use crate::error::{Error, Result};
use crate::rules::RuleSet;

/// Label proportions of the reference corpus (relevant, uncertain, irrelevant).
pub const DEFAULT_MIX: [f64; 3] = [0.79, 0.05, 0.16];

const MAX_ATTEMPTS: u64 = 200;

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub n_sentences: usize,
    pub seed: u64,
    /// Target label proportions, indexed by [`Label::index`].
    pub class_mix: [f64; 3],
    /// Share of cued attributes realized with a distant cue.
    pub hard_fraction: f64,
    /// Share of irrelevant attributes placed in another bookmark's clause
    /// rather than behind a negation or location cue.
    pub other_clause_fraction: f64,
    pub max_attributes: usize,
    pub templates: Templates,
    pub vocabulary: Vocabulary,
}

impl SynthConfig {
    pub fn new(n_sentences: usize, seed: u64) -> Self {
        SynthConfig {
            n_sentences,
            seed,
            class_mix: DEFAULT_MIX,
            hard_fraction: 0.1,
            other_clause_fraction: 0.72,
            max_attributes: 5,
            templates: Templates::default_radiology(),
            vocabulary: Vocabulary::default_radiology(),
        }
    }

    fn usable<'a>(&self, pieces: &'a [SlotPiece]) -> Vec<&'a SlotPiece> {
        pieces
            .iter()
            .filter(|p| self.categories_of(p).next().is_some())
            .collect()
    }

    fn categories_of<'a>(&'a self, p: &'a SlotPiece) -> impl Iterator<Item = Category> + 'a {
        p.categories
            .iter()
            .copied()
            .filter(|&c| !self.vocabulary.by_category(c).is_empty())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sentences == 0 {
            return Err(Error::Config("n_sentences must be at least 1".into()));
        }
        if self.max_attributes == 0 {
            return Err(Error::Config("max_attributes must be at least 1".into()));
        }
        let mix = self.class_mix;
        if mix.iter().any(|&m| !(m >= 0.0) || !m.is_finite()) || (mix.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
            return Err(Error::Config(format!("class mix must be non-negative and sum to 1, got {mix:?}")));
        }
        for (name, v) in [
            ("hard_fraction", self.hard_fraction),
            ("other_clause_fraction", self.other_clause_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        self.templates.validate()?;
        let u = mix[Label::Uncertain.index()];
        if u > 0.0
            && self.usable(&self.templates.uncertain).is_empty()
            && self.usable(&self.templates.uncertain_hard).is_empty()
        {
            return Err(Error::Infeasible(
                "uncertain attributes requested but no uncertainty template is usable".into(),
            ));
        }
        let i = mix[Label::Irrelevant.index()];
        if i > 0.0
            && self.other_clause_fraction == 0.0
            && self.usable(&self.templates.irrelevant).is_empty()
            && self.usable(&self.templates.irrelevant_hard).is_empty()
        {
            return Err(Error::Infeasible(
                "irrelevant attributes requested but no negation or location template is usable".into(),
            ));
        }
        let plain = [Category::Size, Category::Shape, Category::Intensity, Category::Type, Category::BodyPart];
        let r = mix[Label::Relevant.index()];
        if (r > 0.0 || (i > 0.0 && self.other_clause_fraction > 0.0))
            && plain.iter().all(|&c| self.vocabulary.by_category(c).is_empty())
        {
            return Err(Error::Infeasible("vocabulary has no attributes to place".into()));
        }
        Ok(())
    }
}

/// Generates `n_sentences` sentences. Sentence `i` depends only on the
/// seed and `i`, so generation runs in parallel.
pub fn generate_corpus(config: &SynthConfig) -> Result<Vec<Sentence>> {
    config.validate()?;
    let rules = RuleSet::default_rules();
    let mix = WeightedIndex::new(config.class_mix).map_err(|e| Error::Config(e.to_string()))?;
    (0..config.n_sentences)
        .into_par_iter()
        .map(|i| generate_sentence(config, &rules, &mix, i))
        .collect()
}

fn generate_sentence(config: &SynthConfig, rules: &RuleSet, mix: &WeightedIndex<f64>, i: usize) -> Result<Sentence> {
    let base = init::derive_seed(config.seed, i as u64);
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = init::seeded(init::derive_seed(base, attempt));
        let plan = plan_sentence(config, mix, &mut rng);
        let built = realize(config, &plan, &mut rng, format!("synth-{i:05}"));
        if built.check(config, rules) {
            return Ok(built.sentence);
        }
    }
    Err(Error::Infeasible(format!(
        "sentence {i}: no valid realization in {MAX_ATTEMPTS} attempts"
    )))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Cue {
    /// No cue before the attribute.
    None,
    /// A table cue immediately before the attribute.
    Immediate,
    /// The cue is present but not adjacent.
    Distant,
}

#[derive(Clone, Debug)]
struct Attr {
    category: Category,
    phrase: String,
    label: Label,
    cue: Cue,
}

struct Tail<'a> {
    piece: &'a SlotPiece,
    attr: Attr,
    before_bookmark: bool,
}

struct Clause<'a> {
    target: bool,
    determiner: Option<&'a Piece>,
    mods: Vec<Attr>,
    head: Option<Attr>,
    generic_head: String,
    location: Option<(&'a SlotPiece, Attr)>,
    location_before_bookmark: bool,
    tails: Vec<Tail<'a>>,
}

impl<'a> Clause<'a> {
    fn new(target: bool, config: &'a SynthConfig, rng: &mut impl Rng) -> Self {
        let t = &config.templates;
        Clause {
            target,
            determiner: if target { None } else { t.other_determiners.choose(rng) },
            mods: Vec::new(),
            head: None,
            generic_head: t.generic_heads.choose(rng).expect("validated").clone(),
            location: None,
            location_before_bookmark: rng.random_bool(0.7),
            tails: Vec::new(),
        }
    }

    /// Categories still free for a plain (cue-less) attribute.
    fn free(&self, config: &SynthConfig) -> Vec<Category> {
        let mut out: Vec<Category> = [Category::Size, Category::Shape, Category::Intensity]
            .into_iter()
            .filter(|c| !self.mods.iter().any(|m| m.category == *c))
            .collect();
        if self.head.is_none() {
            out.push(Category::Type);
        }
        if self.location.is_none() && !config.templates.locations.is_empty() {
            out.push(Category::BodyPart);
        }
        out.retain(|&c| !config.vocabulary.by_category(c).is_empty());
        out
    }

    fn add_plain(&mut self, category: Category, label: Label, config: &'a SynthConfig, rng: &mut impl Rng) {
        let attr = Attr {
            category,
            phrase: pick_phrase(config, category, rng),
            label,
            cue: Cue::None,
        };
        match category {
            Category::Type => self.head = Some(attr),
            Category::BodyPart => {
                let piece = config.templates.locations.choose(rng).expect("checked by free()");
                self.location = Some((piece, attr));
            }
            _ => self.mods.push(attr),
        }
    }
}

struct Plan<'a> {
    clauses: Vec<Clause<'a>>,
    /// Index of the target clause in `clauses`.
    target: usize,
}

fn pick_phrase(config: &SynthConfig, category: Category, rng: &mut impl Rng) -> String {
    config
        .vocabulary
        .by_category(category)
        .choose(rng)
        .expect("category checked non-empty")
        .to_string()
}

/// A cued tail for `label`, or `None` when no template fits.
fn cued_tail<'a>(config: &'a SynthConfig, label: Label, rng: &mut impl Rng) -> Option<Tail<'a>> {
    let t = &config.templates;
    let (easy, hard) = match label {
        Label::Uncertain => (&t.uncertain, &t.uncertain_hard),
        _ => (&t.irrelevant, &t.irrelevant_hard),
    };
    let (easy, hard) = (config.usable(easy), config.usable(hard));
    let use_hard = !hard.is_empty() && (easy.is_empty() || rng.random_bool(config.hard_fraction));
    let piece = *if use_hard { hard.choose(rng) } else { easy.choose(rng) }?;
    let cats: Vec<Category> = config.categories_of(piece).collect();
    let category = *cats.choose(rng)?;
    Some(Tail {
        piece,
        attr: Attr {
            category,
            phrase: pick_phrase(config, category, rng),
            label,
            cue: if use_hard { Cue::Distant } else { Cue::Immediate },
        },
        before_bookmark: rng.random_bool(0.5),
    })
}

fn plan_sentence<'a>(config: &'a SynthConfig, mix: &WeightedIndex<f64>, rng: &mut impl Rng) -> Plan<'a> {
    let k = rng.random_range(1..=config.max_attributes);
    let mut target = Clause::new(true, config, rng);
    let mut others: Vec<Clause> = Vec::new();
    for _ in 0..k {
        let label = Label::from_index(mix.sample(rng)).expect("three classes");
        match label {
            Label::Relevant => {
                if let Some(&c) = target.free(config).choose(rng) {
                    target.add_plain(c, label, config, rng);
                }
            }
            Label::Uncertain => {
                if let Some(t) = cued_tail(config, label, rng) {
                    target.tails.push(t);
                }
            }
            Label::Irrelevant => {
                let to_other = rng.random_bool(config.other_clause_fraction);
                let placed = to_other && {
                    let mut open: Vec<usize> = (0..others.len())
                        .filter(|&o| !others[o].free(config).is_empty())
                        .collect();
                    if others.len() < 2 && (open.is_empty() || rng.random_bool(0.3)) {
                        others.push(Clause::new(false, config, rng));
                        open = vec![others.len() - 1];
                    }
                    match open.choose(rng) {
                        Some(&o) => {
                            let cats = others[o].free(config);
                            let &c = cats.choose(rng).expect("open clause");
                            others[o].add_plain(c, label, config, rng);
                            true
                        }
                        None => false,
                    }
                };
                if !placed {
                    if let Some(t) = cued_tail(config, label, rng) {
                        target.tails.push(t);
                    }
                }
            }
        }
    }
    if others.len() < 2 && rng.random_bool(0.25) {
        others.push(Clause::new(false, config, rng));
    }
    target.mods.shuffle(rng);
    let mut clauses = vec![target];
    let mut target_idx = 0;
    if !others.is_empty() && rng.random_bool(0.3) {
        clauses.insert(0, others.remove(0));
        target_idx = 1;
    }
    clauses.extend(others);
    Plan {
        clauses,
        target: target_idx,
    }
}

#[derive(Clone, Copy, Debug)]
enum Link {
    Abs(usize),
    ClauseHead(usize),
    Root,
}

struct Mention {
    span: Span,
    attr: Attr,
    target_clause: bool,
}

struct Builder {
    tokens: Vec<(String, String, String, NeTag)>,
    links: Vec<Link>,
    mentions: Vec<Mention>,
    bookmarks: Vec<Bookmark>,
}

fn continue_chunk(chunk: &str) -> String {
    match chunk.strip_prefix("B-") {
        Some(rest) => format!("I-{rest}"),
        None => chunk.to_string(),
    }
}

impl Builder {
    fn push(&mut self, surface: &str, pos: &str, chunk: &str, ne: NeTag, link: Link) -> usize {
        self.tokens.push((surface.to_string(), pos.to_string(), chunk.to_string(), ne));
        self.links.push(link);
        self.tokens.len() - 1
    }

    fn last_chunk_is_np(&self) -> bool {
        self.tokens.last().is_some_and(|t| t.2.ends_with("-NP"))
    }

    /// Emits a multi-word phrase; leading words attach to the last one,
    /// which gets `link`. Returns the span.
    fn phrase(&mut self, words: &str, pos: &str, chunk: &str, ne: NeTag, link: Link) -> Span {
        let words: Vec<&str> = words.split(' ').collect();
        let start = self.tokens.len();
        let last = start + words.len() - 1;
        for (j, w) in words.iter().enumerate() {
            let is_last = j + 1 == words.len();
            let p = if is_last || pos != "NN" { pos } else { "JJ" };
            let c = if j == 0 { chunk.to_string() } else { continue_chunk(chunk) };
            self.push(w, p, &c, ne, if is_last { link } else { Link::Abs(last) });
        }
        Span::new(start, last + 1)
    }

    /// Emits a template piece. `-1` heads become `outer`. Returns the
    /// anchor token of every piece token and the slot span, if any.
    fn piece(&mut self, piece: &[TemplateToken], outer: Link, slot: Option<&Attr>, rng: &mut impl Rng) -> (Vec<usize>, Option<Span>) {
        let mut anchors = Vec::with_capacity(piece.len());
        let mut slot_span = None;
        for t in piece {
            let span = if t.surface() == SLOT {
                let a = slot.expect("slot piece needs an attribute");
                let s = self.phrase(&a.phrase, t.pos(), t.chunk(), a.category.ne_tag(), Link::Root);
                slot_span = Some(s);
                s
            } else if t.surface() == NUMBER {
                let n = rng.random_range(1..400).to_string();
                let i = self.push(&n, t.pos(), t.chunk(), NeTag::None, Link::Root);
                Span::new(i, i + 1)
            } else {
                let i = self.push(t.surface(), t.pos(), t.chunk(), NeTag::None, Link::Root);
                Span::new(i, i + 1)
            };
            anchors.push(span.last());
        }
        for (t, &a) in piece.iter().zip(&anchors) {
            self.links[a] = match t.head() {
                Some(h) => Link::Abs(anchors[h]),
                None => outer,
            };
        }
        (anchors, slot_span)
    }

    fn noun_phrase_chunk(&self) -> &'static str {
        if self.last_chunk_is_np() {
            "I-NP"
        } else {
            "B-NP"
        }
    }

    /// Emits clause `ci` and returns the index of its head noun.
    fn clause(&mut self, config: &SynthConfig, plan: &Plan, ci: usize, head_link: Link, rng: &mut impl Rng) -> usize {
        let c = &plan.clauses[ci];
        let me = Link::ClauseHead(ci);
        if ci == 0 {
            if let Some(p) = config.templates.prefixes.choose(rng) {
                self.piece(p, me, None, rng);
            }
        }
        if let Some(d) = c.determiner {
            self.piece(d, me, None, rng);
        }
        for m in &c.mods {
            let chunk = self.noun_phrase_chunk();
            let span = self.phrase(&m.phrase, "JJ", chunk, m.category.ne_tag(), me);
            self.mentions.push(Mention {
                span,
                attr: m.clone(),
                target_clause: c.target,
            });
        }
        let chunk = self.noun_phrase_chunk();
        let head = match &c.head {
            Some(h) => {
                let span = self.phrase(&h.phrase, "NN", chunk, NeTag::Type, head_link);
                self.mentions.push(Mention {
                    span,
                    attr: h.clone(),
                    target_clause: c.target,
                });
                span.last()
            }
            None => self.phrase(&c.generic_head, "NN", chunk, NeTag::None, head_link).last(),
        };
        let emit_slot = |b: &mut Builder, piece: &[TemplateToken], attr: &Attr, rng: &mut _| {
            let (_, span) = b.piece(piece, me, Some(attr), rng);
            b.mentions.push(Mention {
                span: span.expect("slot piece"),
                attr: attr.clone(),
                target_clause: c.target,
            });
        };
        let mut items: Vec<(bool, &[TemplateToken], &Attr)> = Vec::new();
        if let Some((p, a)) = &c.location {
            items.push((c.location_before_bookmark, &p.tokens, a));
        }
        for t in &c.tails {
            items.push((t.before_bookmark, &t.piece.tokens, &t.attr));
        }
        for &(_, p, a) in items.iter().filter(|i| i.0) {
            emit_slot(self, p, a, rng);
        }
        let (anchors, _) = self.piece(&config.templates.bookmark, me, None, rng);
        let start = *anchors.iter().min().expect("non-empty bookmark");
        let end = anchors.iter().max().expect("non-empty bookmark") + 1;
        self.bookmarks.push(Bookmark {
            span: Span::new(start, end),
            role: if c.target {
                BookmarkRole::TargetCandidate
            } else {
                BookmarkRole::Other
            },
        });
        for &(_, p, a) in items.iter().filter(|i| !i.0) {
            emit_slot(self, p, a, rng);
        }
        head
    }
}

struct Built {
    sentence: Sentence,
    /// Parallel to `sentence.attribute_mentions`.
    cues: Vec<(Cue, bool)>,
}

fn realize(config: &SynthConfig, plan: &Plan, rng: &mut impl Rng, id: String) -> Built {
    let mut b = Builder {
        tokens: Vec::new(),
        links: Vec::new(),
        mentions: Vec::new(),
        bookmarks: Vec::new(),
    };
    let target = plan.target;
    let mut heads = vec![0usize; plan.clauses.len()];
    // (clause, opener token) links applied once all heads are known.
    let mut pending: Vec<(usize, usize)> = Vec::new();
    for ci in 0..plan.clauses.len() {
        if ci > 0 {
            if let Some(opener) = config.templates.other_openers.choose(rng) {
                let (anchors, _) = b.piece(opener, Link::ClauseHead(target), None, rng);
                // The clause about another bookmark hangs off the opener.
                let other = if ci == target { ci - 1 } else { ci };
                pending.push((other, *anchors.last().expect("non-empty opener")));
            }
        }
        let link = if ci == target { Link::Root } else { Link::ClauseHead(target) };
        heads[ci] = b.clause(config, plan, ci, link, rng);
    }
    b.piece(&config.templates.closer, Link::ClauseHead(target), None, rng);
    for (ci, o) in pending {
        b.links[heads[ci]] = Link::Abs(o);
    }
    let dep: Vec<Option<usize>> = b
        .links
        .iter()
        .map(|l| match *l {
            Link::Abs(i) => Some(i),
            Link::ClauseHead(c) => Some(heads[c]),
            Link::Root => None,
        })
        .collect();

    let tokens: Vec<Token> = b
        .tokens
        .iter()
        .zip(dep)
        .enumerate()
        .map(|(i, ((surface, pos, chunk, ne), dep_head))| Token {
            surface: if i == 0 { capitalize(surface) } else { surface.clone() },
            lemma: surface.to_lowercase(),
            pos: pos.clone(),
            chunk: chunk.clone(),
            ne: *ne,
            dep_head,
            index: i,
        })
        .collect();
    b.mentions.sort_by_key(|m| m.span.start);
    let target_bm = b
        .bookmarks
        .iter()
        .position(|bm| bm.role == BookmarkRole::TargetCandidate)
        .expect("one target clause");
    let pairs = b
        .mentions
        .iter()
        .enumerate()
        .map(|(mi, m)| GoldPair {
            bookmark_index: target_bm,
            mention_index: mi,
            gold: if m.target_clause { m.attr.label } else { Label::Irrelevant },
        })
        .collect();
    let cues = b.mentions.iter().map(|m| (m.attr.cue, m.target_clause)).collect();
    let sentence = Sentence {
        id,
        tokens,
        bookmarks: b.bookmarks,
        attribute_mentions: b
            .mentions
            .iter()
            .map(|m| AttributeMention {
                span: m.span,
                normalized: m.attr.phrase.clone(),
                category: m.attr.category,
            })
            .collect(),
        sentence_embedding: None,
        pairs,
    };
    Built { sentence, cues }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

impl Built {
    fn check(&self, config: &SynthConfig, rules: &RuleSet) -> bool {
        let s = &self.sentence;
        if s.validate().is_err() {
            return false;
        }
        if match_attributes(s, &config.vocabulary) != s.attribute_mentions {
            return false;
        }
        let surfaces: Vec<&str> = s.surfaces().collect();
        s.attribute_mentions.iter().zip(&self.cues).zip(&s.pairs).all(|((m, &(cue, in_target)), pair)| {
            let fired = rules.find_match(&surfaces, m.span).map(|r| r.label);
            match (in_target, cue) {
                (true, Cue::Immediate) => fired == Some(pair.gold),
                (true, _) => fired.is_none(),
                // Another bookmark's clause may start with "other".
                (false, _) => fired.is_none() || fired == Some(Label::Irrelevant),
            }
        })
    }
}

#[cfg(test)]
mod tests;
