//! Cue rules that label an attribute from the words right before it.
//!
//! A rule file has one `label<TAB>cue` line per cue alternative; `#` starts
//! a comment. Consecutive lines with the same label form one rule, and a
//! blank line or comment closes it. Cues are matched token by token against
//! the lowercased surfaces immediately preceding the mention, with `/` split
//! out as its own token. Rules are tried in file order; the first rule with
//! a matching alternative decides.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::corpus::{CandidatePair, Label, Sentence, Span};
use crate::error::{Error, Result};

pub const DEFAULT_RULES: &str = include_str!("../data/rules.tsv");

#[derive(Clone, Debug, PartialEq)]
pub struct Rule {
    pub label: Label,
    /// Cue alternatives, each a non-empty lowercase token sequence.
    pub cues: Vec<Vec<String>>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RuleSet {
    rules: Vec<Rule>,
}

/// Which rule fired and on which cue.
#[derive(Clone, Debug, PartialEq)]
pub struct RuleMatch {
    pub rule: usize,
    pub label: Label,
    pub cue: String,
}

/// Lowercases and splits `/` out of each surface.
fn normalize<S: AsRef<str>>(surfaces: &[S]) -> Vec<String> {
    let mut out = Vec::with_capacity(surfaces.len());
    for s in surfaces {
        let lower = s.as_ref().to_lowercase();
        let mut rest = lower.as_str();
        while let Some(i) = rest.find('/') {
            if i > 0 {
                out.push(rest[..i].to_string());
            }
            out.push("/".to_string());
            rest = &rest[i + 1..];
        }
        if !rest.is_empty() {
            out.push(rest.to_string());
        }
    }
    out
}

fn cue_tokens(cue: &str) -> Vec<String> {
    normalize(&cue.split_whitespace().collect::<Vec<_>>())
}

impl RuleSet {
    pub fn new(rules: Vec<Rule>) -> Result<Self> {
        let mut seen: HashMap<Vec<String>, Label> = HashMap::new();
        for r in &rules {
            if r.label == Label::Relevant {
                return Err(Error::Config("rules may only assign uncertain or irrelevant".into()));
            }
            if r.cues.is_empty() || r.cues.iter().any(Vec::is_empty) {
                return Err(Error::Config("rule with an empty cue".into()));
            }
            for c in &r.cues {
                if let Some(&prev) = seen.get(c) {
                    if prev != r.label {
                        return Err(Error::RuleConflict {
                            cue: c.join(" "),
                            first: prev.name().into(),
                            second: r.label.name().into(),
                        });
                    }
                }
                seen.insert(c.clone(), r.label);
            }
        }
        Ok(RuleSet { rules })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut rules: Vec<Rule> = Vec::new();
        let mut open = false;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end();
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                open = false;
                continue;
            }
            let malformed = |message: String| Error::Malformed {
                line: i + 1,
                message,
            };
            let (label, cue) = line
                .split_once('\t')
                .ok_or_else(|| malformed("expected `label<TAB>cue`".into()))?;
            let label = match label.trim().to_ascii_lowercase().as_str() {
                "irrelevant" => Label::Irrelevant,
                "uncertain" => Label::Uncertain,
                other => return Err(malformed(format!("unknown rule label {other:?}"))),
            };
            let tokens = cue_tokens(cue);
            if tokens.is_empty() {
                return Err(malformed("empty cue".into()));
            }
            match rules.last_mut() {
                Some(r) if open && r.label == label => r.cues.push(tokens),
                _ => rules.push(Rule {
                    label,
                    cues: vec![tokens],
                }),
            }
            open = true;
        }
        Self::new(rules)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// The shipped cue table.
    pub fn default_rules() -> Self {
        Self::parse(DEFAULT_RULES).expect("shipped rule file parses")
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// First rule with a cue ending right before `mention`.
    pub fn find_match<S: AsRef<str>>(&self, surfaces: &[S], mention: Span) -> Option<RuleMatch> {
        let before = normalize(&surfaces[..mention.start.min(surfaces.len())]);
        self.rules.iter().enumerate().find_map(|(ri, r)| {
            r.cues
                .iter()
                .find(|c| before.ends_with(c))
                .map(|c| RuleMatch {
                    rule: ri,
                    label: r.label,
                    cue: c.join(" "),
                })
        })
    }
}

pub fn compile_rules(path: &Path) -> Result<RuleSet> {
    RuleSet::load(path)
}

/// Label of the first firing rule, if any.
pub fn apply_rules<S: AsRef<str>>(surfaces: &[S], mention: Span, rules: &RuleSet) -> Option<Label> {
    rules.find_match(surfaces, mention).map(|m| m.label)
}

/// Rule-only classifier: the firing rule's label, else Relevant.
pub fn rule_classify(sentence: &Sentence, pair: &CandidatePair, rules: &RuleSet) -> Label {
    let mention = sentence.attribute_mentions[pair.attribute].span;
    let surfaces: Vec<&str> = sentence.surfaces().collect();
    apply_rules(&surfaces, mention, rules).unwrap_or(Label::Relevant)
}

/// A fired rule overrides the model.
pub fn postprocess(model: Label, rule: Option<Label>) -> Label {
    rule.unwrap_or(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    fn last_word(s: &str) -> Span {
        let n = toks(s).len();
        Span::new(n - 1, n)
    }

    fn classify(s: &str) -> Option<Label> {
        apply_rules(&toks(s), last_word(s), &RuleSet::default_rules())
    }

    #[test]
    fn default_file_groups() {
        let r = RuleSet::default_rules();
        let shape: Vec<(Label, usize)> = r.rules().iter().map(|r| (r.label, r.cues.len())).collect();
        assert_eq!(
            shape,
            [
                (Label::Irrelevant, 8),
                (Label::Irrelevant, 13),
                (Label::Irrelevant, 1),
                (Label::Uncertain, 5),
                (Label::Uncertain, 3),
            ]
        );
        assert_eq!(r.rules()[3].cues[1], ["and", "/", "or"]);
    }

    #[test]
    fn documented_examples() {
        assert_eq!(classify("no evidence of nodule"), Some(Label::Irrelevant));
        assert_eq!(classify("adenopathy or mass"), Some(Label::Uncertain));
        assert_eq!(classify("unchanged large nodule"), None);
        assert_eq!(classify("without nodule"), Some(Label::Irrelevant));
        assert_eq!(classify("likely mass"), Some(Label::Uncertain));
        assert_eq!(classify("cyst and/or mass"), Some(Label::Uncertain));
    }

    #[test]
    fn multi_word_mention_uses_its_start() {
        let s = toks("mass near right lower lobe");
        assert_eq!(
            apply_rules(&s, Span::new(2, 5), &RuleSet::default_rules()),
            Some(Label::Irrelevant)
        );
        assert_eq!(apply_rules(&s, Span::new(0, 1), &RuleSet::default_rules()), None);
    }

    #[test]
    fn rule_classify_and_override() {
        assert_eq!(postprocess(Label::Relevant, Some(Label::Irrelevant)), Label::Irrelevant);
        assert_eq!(postprocess(Label::Uncertain, None), Label::Uncertain);
        assert_eq!(postprocess(Label::Irrelevant, Some(Label::Uncertain)), Label::Uncertain);
    }

    #[test]
    fn empty_file_is_a_no_op() {
        let r = RuleSet::parse("# nothing\n\n").unwrap();
        assert!(r.is_empty());
        assert_eq!(apply_rules(&toks("no evidence of nodule"), last_word("a b c d"), &r), None);
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        let e = RuleSet::parse("irrelevant\twithout\nirrelevant without\n").unwrap_err();
        assert!(matches!(e, Error::Malformed { line: 2, .. }));
        let e = RuleSet::parse("# c\nrelevant\tfoo\n").unwrap_err();
        assert!(matches!(e, Error::Malformed { line: 2, .. }));
        let e = RuleSet::parse("uncertain\t  \n").unwrap_err();
        assert!(matches!(e, Error::Malformed { line: 1, .. }));
    }

    #[test]
    fn conflicting_duplicate_cue_is_an_error() {
        let e = RuleSet::parse("irrelevant\tnear\n\nuncertain\tnear\n").unwrap_err();
        assert!(matches!(e, Error::RuleConflict { .. }));
        // Same label twice is allowed.
        assert!(RuleSet::parse("irrelevant\tnear\n\nirrelevant\tnear\n").is_ok());
    }

    #[test]
    fn first_match_wins() {
        let r = RuleSet::parse("uncertain\tof\n\nirrelevant\tno evidence of\n").unwrap();
        assert_eq!(
            apply_rules(&toks("no evidence of mass"), Span::new(3, 4), &r),
            Some(Label::Uncertain)
        );
    }
}
