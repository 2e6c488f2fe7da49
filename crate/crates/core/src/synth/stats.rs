use std::fmt;

use serde::Serialize;

use crate::corpus::{Label, Sentence};

/// Sentence and per-class instance counts of one split.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SplitCounts {
    pub name: String,
    pub sentences: usize,
    /// Indexed by [`Label::index`].
    pub instances: [usize; 3],
}

impl SplitCounts {
    pub fn total_instances(&self) -> usize {
        self.instances.iter().sum()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub splits: Vec<SplitCounts>,
}

/// Counts gold-labelled pairs per split. Pairs without a gold label are
/// not instances.
pub fn corpus_stats(splits: &[(&str, &[Sentence])]) -> CorpusStats {
    CorpusStats {
        splits: splits
            .iter()
            .map(|(name, sents)| {
                let mut instances = [0; 3];
                for p in sents.iter().flat_map(|s| &s.pairs) {
                    instances[p.gold.index()] += 1;
                }
                SplitCounts {
                    name: name.to_string(),
                    sentences: sents.len(),
                    instances,
                }
            })
            .collect(),
    }
}

impl CorpusStats {
    pub fn from_counts(rows: &[(&str, usize, [usize; 3])]) -> Self {
        CorpusStats {
            splits: rows
                .iter()
                .map(|&(name, sentences, instances)| SplitCounts {
                    name: name.into(),
                    sentences,
                    instances,
                })
                .collect(),
        }
    }

    pub fn total(&self) -> SplitCounts {
        let mut t = SplitCounts {
            name: "Total".into(),
            ..Default::default()
        };
        for s in &self.splits {
            t.sentences += s.sentences;
            for (a, b) in t.instances.iter_mut().zip(s.instances) {
                *a += b;
            }
        }
        t
    }
}

fn thousands(n: usize) -> String {
    let s = n.to_string();
    let mut out = String::new();
    for (i, c) in s.chars().enumerate() {
        if i > 0 && (s.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}

/// Rows are sentences and per-class instances; one column per split plus
/// a total.
impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut cols: Vec<SplitCounts> = self.splits.clone();
        cols.push(self.total());
        let mut rows: Vec<(String, Vec<String>)> = vec![
            ("Sentences".into(), cols.iter().map(|c| thousands(c.sentences)).collect()),
            ("Instances".into(), vec![String::new(); cols.len()]),
        ];
        for label in Label::ALL {
            rows.push((
                format!("  {label}"),
                cols.iter().map(|c| thousands(c.instances[label.index()])).collect(),
            ));
        }
        let first = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        let widths: Vec<usize> = cols
            .iter()
            .enumerate()
            .map(|(i, c)| rows.iter().map(|r| r.1[i].len()).chain([c.name.len()]).max().unwrap_or(0))
            .collect();
        write!(f, "{:first$}", "")?;
        for (c, w) in cols.iter().zip(&widths) {
            write!(f, "  {:>w$}", c.name)?;
        }
        writeln!(f)?;
        for (name, vals) in rows {
            write!(f, "{name:first$}")?;
            for (v, w) in vals.iter().zip(&widths) {
                write!(f, "  {v:>w$}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
