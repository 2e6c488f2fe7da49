use std::collections::HashSet;

use super::*;
use crate::corpus::{generate_candidates, parse_corpus, write_corpus};

const UNCERTAIN_MARKERS: &[&str] = &["or", "/", "possibly", "likely", "dome", "portion", "tail", "represent"];
const NEGATION_MARKERS: &[&str] = &[
    "without", "evidence", "not", "poorly", "seen", "adjacent", "arising", "above", "anterior",
    "abutting", "beneath", "close", "encasing", "left", "near", "posterior", "right", "no",
];

/// Reads the label back from the dependency tree: walk up from the
/// mention to the first head noun that owns a bookmark, then look at the
/// words passed on the way.
fn tree_oracle(s: &Sentence) -> Vec<Label> {
    let owner = |b: &Bookmark| s.tokens[b.span.start].dep_head.expect("bookmark attaches");
    let target = owner(s.bookmarks.iter().find(|b| b.role == BookmarkRole::TargetCandidate).unwrap());
    let heads: HashSet<usize> = s.bookmarks.iter().map(owner).collect();
    s.attribute_mentions
        .iter()
        .map(|m| {
            let mut cur = m.span.last();
            let mut passed = Vec::new();
            while !heads.contains(&cur) {
                if !m.span.contains(cur) {
                    passed.push(s.tokens[cur].surface.to_lowercase());
                }
                cur = s.tokens[cur].dep_head.expect("reaches a clause head");
            }
            let has = |set: &[&str]| passed.iter().any(|w| set.contains(&w.as_str()));
            if cur != target {
                Label::Irrelevant
            } else if has(UNCERTAIN_MARKERS) {
                Label::Uncertain
            } else if has(NEGATION_MARKERS) {
                Label::Irrelevant
            } else {
                Label::Relevant
            }
        })
        .collect()
}

fn golds(s: &Sentence) -> Vec<Label> {
    generate_candidates(s).iter().map(|p| p.gold.unwrap()).collect()
}

#[test]
fn deterministic_for_a_seed() {
    let a = generate_corpus(&SynthConfig::new(100, 7)).unwrap();
    let b = generate_corpus(&SynthConfig::new(100, 7)).unwrap();
    assert_eq!(a, b);
    let c = generate_corpus(&SynthConfig::new(100, 8)).unwrap();
    assert_ne!(a, c);
}

#[test]
fn all_relevant_mix() {
    let mut cfg = SynthConfig::new(200, 3);
    cfg.class_mix = [1.0, 0.0, 0.0];
    let corpus = generate_corpus(&cfg).unwrap();
    assert!(corpus.iter().flat_map(golds).all(|l| l == Label::Relevant));
}

#[test]
fn default_mix_proportions() {
    let corpus = generate_corpus(&SynthConfig::new(2000, 1)).unwrap();
    let mut counts = [0usize; 3];
    for l in corpus.iter().flat_map(golds) {
        counts[l.index()] += 1;
    }
    let total: usize = counts.iter().sum();
    for (c, target) in counts.iter().zip(DEFAULT_MIX) {
        let share = *c as f64 / total as f64;
        assert!((share - target).abs() <= 0.03, "{counts:?}");
    }
}

#[test]
fn shapes_are_in_range() {
    for s in generate_corpus(&SynthConfig::new(500, 11)).unwrap() {
        assert!((1..=3).contains(&s.bookmarks.len()), "{}", s.id);
        assert!((1..=5).contains(&s.attribute_mentions.len()), "{}", s.id);
        assert_eq!(
            s.bookmarks.iter().filter(|b| b.role == BookmarkRole::TargetCandidate).count(),
            1
        );
        s.validate().unwrap();
        assert_eq!(s.tokens.iter().filter(|t| t.dep_head.is_none()).count(), 1);
    }
}

#[test]
fn tree_oracle_agrees_with_gold() {
    for s in generate_corpus(&SynthConfig::new(1000, 5)).unwrap() {
        assert_eq!(tree_oracle(&s), golds(&s), "{}", s.id);
    }
}

#[test]
fn roundtrips_through_corpus_file() {
    let corpus = generate_corpus(&SynthConfig::new(200, 9)).unwrap();
    let mut buf = Vec::new();
    write_corpus(&mut buf, &corpus).unwrap();
    let back = parse_corpus(buf.as_slice()).unwrap();
    assert_eq!(back.sentences, corpus);
    assert_eq!(back.unknown_ne_tags, 0);
}

#[test]
fn matcher_recovers_planted_mentions() {
    let cfg = SynthConfig::new(300, 4);
    for s in generate_corpus(&cfg).unwrap() {
        assert_eq!(match_attributes(&s, &cfg.vocabulary), s.attribute_mentions);
    }
}

#[test]
fn uncertainty_cues_fire_on_intended_mentions() {
    let rules = RuleSet::default_rules();
    let mut cfg = SynthConfig::new(1000, 6);
    cfg.hard_fraction = 0.0;
    let mut fired = 0;
    for s in generate_corpus(&cfg).unwrap() {
        let surfaces: Vec<&str> = s.surfaces().collect();
        for (m, gold) in s.attribute_mentions.iter().zip(golds(&s)) {
            let r = crate::rules::apply_rules(&surfaces, m.span, &rules);
            assert_eq!(r == Some(Label::Uncertain), gold == Label::Uncertain, "{}", s.id);
            if let Some(l) = r {
                assert_eq!(l, gold);
                fired += 1;
            }
        }
    }
    assert!(fired > 0);
}

#[test]
fn hard_cases_escape_the_rules() {
    let rules = RuleSet::default_rules();
    let mut cfg = SynthConfig::new(1000, 6);
    cfg.hard_fraction = 1.0;
    for s in generate_corpus(&cfg).unwrap() {
        let surfaces: Vec<&str> = s.surfaces().collect();
        for (m, gold) in s.attribute_mentions.iter().zip(golds(&s)) {
            let r = crate::rules::apply_rules(&surfaces, m.span, &rules);
            assert_ne!(r, Some(Label::Uncertain));
            if gold == Label::Relevant {
                assert_eq!(r, None);
            }
        }
    }
}

#[test]
fn infeasible_mix_is_an_error() {
    let mut cfg = SynthConfig::new(10, 0);
    cfg.templates.uncertain.clear();
    cfg.templates.uncertain_hard.clear();
    assert!(matches!(generate_corpus(&cfg), Err(Error::Infeasible(_))));
    cfg.class_mix = [0.8, 0.0, 0.2];
    assert!(generate_corpus(&cfg).is_ok());
    cfg.class_mix = [0.8, 0.1, 0.2];
    assert!(matches!(generate_corpus(&cfg), Err(Error::Config(_))));
}

#[test]
fn shipped_templates_parse() {
    let t = Templates::default_radiology();
    assert!(!t.uncertain.is_empty() && !t.irrelevant_hard.is_empty());
    let bad = DEFAULT_TEMPLATES.replacen("\"{X}\", \"NN\", \"B-NP\", 0", "\"{X}\", \"NN\", \"B-NP\", 9", 1);
    assert!(Templates::parse(&bad).is_err());
}
