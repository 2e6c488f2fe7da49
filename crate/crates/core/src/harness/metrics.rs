use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::Label;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Scores from a 3×3 confusion matrix indexed `[gold][predicted]`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub confusion: [[usize; 3]; 3],
    /// Indexed by [`Label::index`].
    pub per_class: [ClassScores; 3],
    pub macro_avg: ClassScores,
}

/// Unweighted mean.
pub fn macro_average(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// F1 from precision and recall; 0 when both are 0.
pub fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Per-class precision, recall and F1 (0 on empty denominators) and their
/// unweighted means. Macro F1 is the mean of the per-class F1 values.
pub fn compute_prf(confusion: [[usize; 3]; 3]) -> Metrics {
    let mut per_class = [ClassScores::default(); 3];
    for (c, s) in per_class.iter_mut().enumerate() {
        let tp = confusion[c][c];
        let predicted: usize = (0..3).map(|g| confusion[g][c]).sum();
        let gold: usize = confusion[c].iter().sum();
        s.precision = ratio(tp, predicted);
        s.recall = ratio(tp, gold);
        s.f1 = f1(s.precision, s.recall);
    }
    let mean = |f: fn(&ClassScores) -> f64| macro_average(&per_class.iter().map(f).collect::<Vec<_>>());
    Metrics {
        confusion,
        per_class,
        macro_avg: ClassScores {
            precision: mean(|s| s.precision),
            recall: mean(|s| s.recall),
            f1: mean(|s| s.f1),
        },
    }
}

impl Metrics {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Label, Label)>) -> Self {
        let mut confusion = [[0usize; 3]; 3];
        for (gold, pred) in pairs {
            confusion[gold.index()][pred.index()] += 1;
        }
        compute_prf(confusion)
    }

    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        ratio((0..3).map(|c| self.confusion[c][c]).sum(), self.total())
    }

    pub fn class(&self, label: Label) -> &ClassScores {
        &self.per_class[label.index()]
    }
}

/// Aligned text table with one row per named result: P/R/F for each class
/// and the macro average.
pub fn format_table(rows: &[(&str, &Metrics)]) -> String {
    let name_w = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max(4);
    let groups = ["Relevant", "Uncertain", "Irrelevant", "Macro"];
    let group_w = 3 * 5 + 2 * 1;
    let mut out = String::new();
    let _ = write!(out, "{:name_w$}", "");
    for g in groups {
        let _ = write!(out, " | {g:^group_w$}");
    }
    out.push('\n');
    let _ = write!(out, "{:name_w$}", "");
    for _ in groups {
        let _ = write!(out, " | {:>5} {:>5} {:>5}", "P", "R", "F");
    }
    out.push('\n');
    out.push_str(&"-".repeat(name_w + groups.len() * (group_w + 3)));
    out.push('\n');
    for (name, m) in rows {
        let _ = write!(out, "{name:name_w$}");
        for s in m.per_class.iter().chain([&m.macro_avg]) {
            let _ = write!(out, " | {:>5.3} {:>5.3} {:>5.3}", s.precision, s.recall, s.f1);
        }
        out.push('\n');
    }
    out
}

/// Counts of misclassifications by kind.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub total_errors: usize,
    /// Gold irrelevant predicted relevant, or the reverse: the attribute was
    /// linked to the wrong bookmark.
    pub wrong_bookmark: usize,
    /// Gold uncertain predicted as anything else.
    pub missed_uncertain: usize,
    pub other: usize,
}

impl ErrorReport {
    pub fn percentages(&self) -> [f64; 3] {
        let t = self.total_errors;
        [
            100.0 * ratio(self.wrong_bookmark, t),
            100.0 * ratio(self.missed_uncertain, t),
            100.0 * ratio(self.other, t),
        ]
    }
}

impl std::fmt::Display for ErrorReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let [a, b, c] = self.percentages();
        writeln!(f, "errors            {:>6}", self.total_errors)?;
        writeln!(f, "wrong bookmark    {:>6}  {a:>5.1}%", self.wrong_bookmark)?;
        writeln!(f, "missed uncertain  {:>6}  {b:>5.1}%", self.missed_uncertain)?;
        writeln!(f, "other             {:>6}  {c:>5.1}%", self.other)
    }
}

/// Buckets every `(gold, predicted)` disagreement.
pub fn error_report(pairs: impl IntoIterator<Item = (Label, Label)>) -> ErrorReport {
    let mut r = ErrorReport::default();
    for (gold, pred) in pairs {
        if gold == pred {
            continue;
        }
        r.total_errors += 1;
        match (gold, pred) {
            (Label::Irrelevant, Label::Relevant) | (Label::Relevant, Label::Irrelevant) => r.wrong_bookmark += 1,
            (Label::Uncertain, _) => r.missed_uncertain += 1,
            _ => r.other += 1,
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reproduces_reported_macro_f() {
        assert!((macro_average(&[0.954, 0.681, 0.811]) - 0.815).abs() <= 0.0005);
        assert!((macro_average(&[0.898, 0.541, 0.197]) - 0.545).abs() <= 0.0005);
    }

    #[test]
    fn perfect_confusion() {
        let m = compute_prf([[5, 0, 0], [0, 2, 0], [0, 0, 7]]);
        for s in m.per_class.iter().chain([&m.macro_avg]) {
            assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
        }
        assert_eq!(m.accuracy(), 1.0);
    }

    #[test]
    fn never_predicted_class_has_zero_precision() {
        let m = compute_prf([[5, 0, 1], [2, 0, 0], [0, 0, 3]]);
        assert_eq!(m.class(Label::Uncertain), &ClassScores::default());
        assert_eq!(m.class(Label::Relevant).precision, 5.0 / 7.0);
        assert_eq!(m.class(Label::Relevant).recall, 5.0 / 6.0);
    }

    #[test]
    fn table_layout() {
        let m = compute_prf([[5, 0, 1], [2, 1, 0], [0, 0, 3]]);
        let t = format_table(&[("Multi-head CNN", &m)]);
        let lines: Vec<&str> = t.lines().collect();
        assert!(lines[0].contains("Relevant") && lines[0].contains("Macro"));
        assert_eq!(lines[1].matches(" P ").count() + lines[1].matches("| ").count(), 8);
        assert!(lines[3].starts_with("Multi-head CNN"));
        assert_eq!(lines[3].split('|').count(), 5);
    }

    #[test]
    fn error_buckets() {
        assert_eq!(error_report([(Label::Relevant, Label::Relevant)]), ErrorReport::default());
        let r = error_report([
            (Label::Irrelevant, Label::Relevant),
            (Label::Relevant, Label::Irrelevant),
        ]);
        assert_eq!(r.percentages(), [100.0, 0.0, 0.0]);
        let r = error_report([
            (Label::Uncertain, Label::Relevant),
            (Label::Relevant, Label::Uncertain),
            (Label::Irrelevant, Label::Uncertain),
        ]);
        assert_eq!((r.missed_uncertain, r.other, r.total_errors), (1, 2, 3));
    }

    proptest! {
        #[test]
        fn macro_f_is_mean_of_class_f(c in proptest::array::uniform3(proptest::array::uniform3(0usize..50))) {
            let m = compute_prf(c);
            let mean = (m.per_class[0].f1 + m.per_class[1].f1 + m.per_class[2].f1) / 3.0;
            prop_assert_eq!(m.macro_avg.f1, mean);
            prop_assert_eq!(m.total(), c.iter().flatten().sum::<usize>());
            for s in &m.per_class {
                prop_assert!((0.0..=1.0).contains(&s.f1));
                prop_assert!(s.f1 <= s.precision.max(s.recall) + 1e-12);
            }
        }
    }
}
