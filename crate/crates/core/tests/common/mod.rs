#![allow(dead_code)]

use lesion_attr::autodiff::{Graph, Tensor, Var};
use lesion_attr::corpus::{
    AttributeMention, Bookmark, BookmarkRole, Category, Label, NeTag, Sentence, Span, Token,
};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn random_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Largest central-difference discrepancy over every entry of every leaf.
/// `build` records a scalar loss from the leaves. Errors are relative to
/// the numeric derivative, or absolute when it is below 1 in magnitude.
pub fn max_grad_error(leaves: &[Tensor], build: impl Fn(&mut Graph, &[Var]) -> Var) -> f64 {
    let eval = |ts: &[Tensor]| {
        let mut g = Graph::new();
        let vars: Vec<Var> = ts.iter().map(|t| g.param(t.clone())).collect();
        let out = build(&mut g, &vars);
        g.value(out).item()
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = leaves.iter().map(|t| g.param(t.clone())).collect();
    let out = build(&mut g, &vars);
    let grads = g.backward(out).unwrap();
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut ts = leaves.to_vec();
    for (li, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v).cloned().unwrap_or_else(|| Tensor::zeros(leaves[li].shape()));
        for k in 0..leaves[li].len() {
            let orig = leaves[li].data()[k];
            ts[li].data_mut()[k] = orig + h;
            let up = eval(&ts);
            ts[li].data_mut()[k] = orig - h;
            let down = eval(&ts);
            ts[li].data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let err = (analytic.data()[k] - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    worst
}

/// Contracts `x` with fixed random weights so every output entry matters.
pub fn weighted_sum(g: &mut Graph, x: Var, weights: &Tensor) -> Var {
    let w = g.constant(weights.clone());
    let p = g.mul(x, w).unwrap();
    g.sum(p)
}

/// A sentence `Image 1 <words>` whose bookmark is the first two tokens and
/// whose single attribute is the bracketed word. Dependency heads form a
/// right-branching chain.
pub fn bracketed_sentence(id: &str, text: &str) -> Sentence {
    let mut words = vec!["Image".to_string(), "1".to_string()];
    let mut attr = None;
    for w in text.split_whitespace() {
        if let Some(inner) = w.strip_prefix('[').and_then(|w| w.strip_suffix(']')) {
            attr = Some(words.len());
            words.push(inner.to_string());
        } else {
            words.push(w.to_string());
        }
    }
    let attr = attr.expect("one bracketed attribute");
    let n = words.len();
    let tokens = words
        .iter()
        .enumerate()
        .map(|(i, w)| Token {
            surface: w.clone(),
            lemma: w.to_lowercase(),
            pos: "NN".into(),
            chunk: "O".into(),
            ne: if i == attr { NeTag::Type } else { NeTag::None },
            dep_head: (i + 1 < n).then_some(i + 1),
            index: i,
        })
        .collect();
    Sentence {
        id: id.into(),
        tokens,
        bookmarks: vec![Bookmark {
            span: Span::new(0, 2),
            role: BookmarkRole::TargetCandidate,
        }],
        attribute_mentions: vec![AttributeMention {
            span: Span::new(attr, attr + 1),
            normalized: words[attr].to_lowercase(),
            category: Category::Type,
        }],
        sentence_embedding: None,
        pairs: Vec::new(),
    }
}

/// `(expected, sentence)` rows of the rule fixture; `None` means no rule
/// should fire.
pub fn rule_cases() -> Vec<(Option<Label>, String)> {
    include_str!("../fixtures/rule_cases.tsv")
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let (label, text) = l.split_once('\t').expect("tab-separated");
            let label = (label != "-").then(|| label.parse().expect("label"));
            (label, text.to_string())
        })
        .collect()
}
