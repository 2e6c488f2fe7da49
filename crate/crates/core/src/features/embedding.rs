use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand_distr::{Distribution, Normal};

use crate::autodiff::{init, Tensor};
use crate::error::{Error, Result};

/// Word vectors with an out-of-vocabulary vector. Padding is the zero vector.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    index: HashMap<String, usize>,
    words: Vec<String>,
    vectors: Vec<Vec<f64>>,
    unk: Vec<f64>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        Ok(EmbeddingTable {
            dim,
            index: HashMap::new(),
            words: Vec::new(),
            vectors: Vec::new(),
            unk: vec![0.0; dim],
        })
    }

    /// Seeded N(0, 1/dim) vectors for `words` plus a random UNK vector.
    pub fn random<'a>(words: impl IntoIterator<Item = &'a str>, dim: usize, seed: u64) -> Result<Self> {
        let mut t = Self::new(dim)?;
        let mut rng = init::seeded(seed);
        let normal = Normal::new(0.0, 1.0 / (dim as f64).sqrt()).expect("finite");
        t.unk = (0..dim).map(|_| normal.sample(&mut rng)).collect();
        for w in words {
            if t.index.contains_key(w) {
                continue;
            }
            let v = (0..dim).map(|_| normal.sample(&mut rng)).collect();
            t.insert(w, v)?;
        }
        Ok(t)
    }

    /// Adds seeded random vectors for any of `words` not already present.
    pub fn ensure_words(&mut self, words: &[&str], seed: u64) {
        let mut rng = init::seeded(seed);
        let normal = Normal::new(0.0, 1.0 / (self.dim as f64).sqrt()).expect("finite");
        for w in words {
            let v: Vec<f64> = (0..self.dim).map(|_| normal.sample(&mut rng)).collect();
            if !self.index.contains_key(*w) {
                self.insert(w, v).expect("dimension matches");
            }
        }
    }

    pub fn insert(&mut self, word: &str, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::shape(format!(
                "vector for {word:?} has {} entries, expected {}",
                vector.len(),
                self.dim
            )));
        }
        match self.index.get(word) {
            Some(&i) => self.vectors[i] = vector,
            None => {
                self.index.insert(word.to_string(), self.words.len());
                self.words.push(word.to_string());
                self.vectors.push(vector);
            }
        }
        Ok(())
    }

    pub fn set_unk(&mut self, v: Vec<f64>) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::shape("unk vector width"));
        }
        self.unk = v;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn unk_vector(&self) -> &[f64] {
        &self.unk
    }

    /// Row id of the UNK vector in [`EmbeddingTable::to_tensor`].
    pub fn unk_id(&self) -> usize {
        self.words.len()
    }

    /// Row id for a surface: exact match, then lowercased.
    pub fn lookup(&self, surface: &str) -> Option<usize> {
        self.index
            .get(surface)
            .or_else(|| self.index.get(&surface.to_lowercase()))
            .copied()
    }

    pub fn id_or_unk(&self, surface: &str) -> usize {
        self.lookup(surface).unwrap_or(self.unk_id())
    }

    pub fn vector(&self, surface: &str) -> &[f64] {
        match self.lookup(surface) {
            Some(i) => &self.vectors[i],
            None => &self.unk,
        }
    }

    pub fn row(&self, id: usize) -> &[f64] {
        if id == self.unk_id() {
            &self.unk
        } else {
            &self.vectors[id]
        }
    }

    /// All vectors as a `[len + 1, dim]` matrix; the last row is UNK.
    pub fn to_tensor(&self) -> Tensor {
        let data = self
            .vectors
            .iter()
            .chain(std::iter::once(&self.unk))
            .flat_map(|v| v.iter().copied())
            .collect();
        Tensor::matrix(self.words.len() + 1, self.dim, data).expect("sized")
    }

    /// Reads word2vec text format: a `count dim` header, then
    /// `token v1 ... v_dim` per line. An `<unk>` entry, when present, becomes
    /// the UNK vector; otherwise UNK is the mean of all vectors.
    pub fn parse_word2vec(reader: impl BufRead) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Malformed {
            line: 1,
            message: "missing header".into(),
        })?;
        let header = header.map_err(|e| Error::Malformed {
            line: 1,
            message: e.to_string(),
        })?;
        let mut parts = header.split_whitespace().map(str::parse::<usize>);
        let (count, dim) = match (parts.next(), parts.next(), parts.next()) {
            (Some(Ok(c)), Some(Ok(d)), None) => (c, d),
            _ => {
                return Err(Error::Malformed {
                    line: 1,
                    message: "header must be `count dim`".into(),
                })
            }
        };
        let mut t = Self::new(dim)?;
        let mut unk = None;
        for (i, line) in lines {
            let line_no = i + 1;
            let line = line.map_err(|e| Error::Malformed {
                line: line_no,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(' ').filter(|f| !f.is_empty());
            let word = fields.next().expect("non-empty line");
            let v: std::result::Result<Vec<f64>, _> = fields.map(str::parse::<f64>).collect();
            let v = v.map_err(|e| Error::Malformed {
                line: line_no,
                message: e.to_string(),
            })?;
            if v.len() != dim {
                return Err(Error::Malformed {
                    line: line_no,
                    message: format!("expected {dim} values, found {}", v.len()),
                });
            }
            if word == "<unk>" {
                unk = Some(v);
            } else {
                t.insert(word, v)?;
            }
        }
        if t.len() + usize::from(unk.is_some()) != count {
            log::warn!(
                "word2vec header announces {count} vectors, read {}",
                t.len() + usize::from(unk.is_some())
            );
        }
        t.unk = match unk {
            Some(u) => u,
            None if !t.is_empty() => {
                let mut mean = vec![0.0; dim];
                for v in &t.vectors {
                    for (m, x) in mean.iter_mut().zip(v) {
                        *m += x;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= t.len() as f64);
                mean
            }
            None => vec![0.0; dim],
        };
        Ok(t)
    }

    pub fn load_word2vec(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse_word2vec(BufReader::new(f))
    }

    pub fn write_word2vec(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{} {}", self.len() + 1, self.dim)?;
        let fmt = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:?}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        for (word, v) in self.words.iter().zip(&self.vectors) {
            writeln!(w, "{word} {}", fmt(v))?;
        }
        writeln!(w, "<unk> {}", fmt(&self.unk))
    }

    pub fn save_word2vec(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write_word2vec(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }
}
