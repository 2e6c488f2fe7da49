//! The plain CNN baseline and the multi-head self-attention CNN.
//!
//! Both variants read the same [`PairInput`]: the word branch and the path
//! branch are encoded separately, average-pooled over valid rows, joined
//! with the sentence vector and passed through three dense layers.
//!
//! In the multi-head variant each branch splits its (zero-padded) feature
//! width into `heads` equal slices. Every head convolves its slice (window
//! `conv_window`, `head_dim` filters), projects it with `W_q` and `b_q`,
//! applies ELU and then scaled dot-product self-attention over the sequence.
//! Head outputs are concatenated and layer-normalized.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{init, softmax, Graph, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::features::{EmbeddingTable, PairInput};

pub const NUM_CLASSES: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "CNN_BASELINE")]
    CnnBaseline,
    #[serde(rename = "MULTI_HEAD")]
    MultiHead,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Average,
    Max,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Number of attention heads (`h`).
    pub heads: usize,
    /// Convolution filters per head (`d_i`).
    pub head_dim: usize,
    pub conv_window: usize,
    pub fc_sizes: Vec<usize>,
    pub dropout_p: f64,
    pub variant: Variant,
    pub pooling: Pooling,
    pub layer_norm_eps: f64,
    /// Train the word vectors along with the network.
    pub fine_tune_embeddings: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            heads: 4,
            head_dim: 64,
            conv_window: 3,
            fc_sizes: vec![256, 64, NUM_CLASSES],
            dropout_p: 0.5,
            variant: Variant::MultiHead,
            pooling: Pooling::Average,
            layer_norm_eps: 1e-5,
            fine_tune_embeddings: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.head_dim == 0 {
            return Err(Error::Config("heads and head_dim must be positive".into()));
        }
        if self.conv_window % 2 == 0 {
            return Err(Error::Config("conv_window must be odd".into()));
        }
        if self.fc_sizes.last() != Some(&NUM_CLASSES) || self.fc_sizes.contains(&0) {
            return Err(Error::Config(format!(
                "fc_sizes must be positive and end with {NUM_CLASSES}"
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config("dropout_p must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Width of one branch's encoded sequence (`h * d_i`).
    pub fn branch_width(&self) -> usize {
        self.heads * self.head_dim
    }
}

/// Input widths a model is built for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelShape {
    /// Per-token feature width `d`.
    pub feature_width: usize,
    /// Leading columns of each token row that hold the word vector.
    pub word_dim: usize,
    pub sentence_dim: usize,
    pub use_path: bool,
}

/// Config, shapes and parameters of a model; the checkpoint sidecar holds
/// `config` and `shape`.
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    shape: ModelShape,
    params: ParamStore,
}

#[derive(Clone, Copy)]
struct HeadParams {
    conv: usize,
    wq: usize,
    bq: usize,
}

enum BranchParams {
    Attention {
        heads: Vec<HeadParams>,
        gain: usize,
        shift: usize,
    },
    Conv {
        w: usize,
        b: usize,
    },
}

/// Indices of every parameter in the store, derived from names.
struct Layout {
    embedding: Option<usize>,
    word: BranchParams,
    path: Option<BranchParams>,
    fc: Vec<(usize, usize)>,
}

/// Attention weights of one head.
#[derive(Clone, Debug)]
pub struct AttentionMap {
    pub branch: &'static str,
    pub head: usize,
    /// `[n, n]` over the valid prefix of the branch.
    pub weights: Tensor,
}

/// Parameter leaves of one graph plus the forward result.
pub struct ForwardPass {
    pub logits: Var,
    pub param_vars: Vec<Var>,
    pub attention: Vec<(&'static str, usize, Var)>,
}

fn valid_prefix(mask: &[bool]) -> Result<usize> {
    mask.iter()
        .rposition(|&m| m)
        .map(|i| i + 1)
        .ok_or(Error::EmptyMask)
}

impl Model {
    /// Builds a freshly initialized model. Weights are Xavier-normal and
    /// biases 0.01; layer-norm gains start at 1 and shifts at 0. The
    /// embedding table is required only when fine-tuning.
    pub fn new(
        config: ModelConfig,
        shape: ModelShape,
        embedding: Option<&EmbeddingTable>,
        seed: u64,
    ) -> Result<Self> {
        let emb = match (config.fine_tune_embeddings, embedding) {
            (false, _) => None,
            (true, Some(table)) => Some(table.to_tensor()),
            (true, None) => {
                return Err(Error::Config("fine-tuning needs an embedding table".into()))
            }
        };
        Self::build(config, shape, emb, seed)
    }

    fn build(config: ModelConfig, shape: ModelShape, embedding: Option<Tensor>, seed: u64) -> Result<Self> {
        config.validate()?;
        if shape.word_dim > shape.feature_width {
            return Err(Error::Config("word_dim exceeds feature width".into()));
        }
        let mut rng = init::seeded(seed);
        let mut params = ParamStore::new();
        if let Some(table) = embedding {
            if table.cols() != shape.word_dim {
                return Err(Error::Config("embedding width differs from word_dim".into()));
            }
            params.insert("embedding", table);
        }
        let padded = Self::padded_width_for(&config, shape.feature_width);
        let slice = padded / config.heads;
        let branches: &[&str] = if shape.use_path { &["word", "path"] } else { &["word"] };
        for branch in branches {
            match config.variant {
                Variant::MultiHead => {
                    for h in 0..config.heads {
                        let k = config.conv_window;
                        params.insert(
                            format!("{branch}.head{h}.conv"),
                            init::xavier_normal(&[k, slice, config.head_dim], &mut rng),
                        );
                        params.insert(
                            format!("{branch}.head{h}.wq"),
                            init::xavier_normal(&[config.head_dim, config.head_dim], &mut rng),
                        );
                        params.insert(format!("{branch}.head{h}.bq"), init::bias(config.head_dim));
                    }
                    let w = config.branch_width();
                    params.insert(format!("{branch}.ln.gain"), Tensor::filled(&[w], 1.0));
                    params.insert(format!("{branch}.ln.shift"), Tensor::zeros(&[w]));
                }
                Variant::CnnBaseline => {
                    params.insert(
                        format!("{branch}.conv.w"),
                        init::xavier_normal(
                            &[config.conv_window, padded, config.branch_width()],
                            &mut rng,
                        ),
                    );
                    params.insert(format!("{branch}.conv.b"), init::bias(config.branch_width()));
                }
            }
        }
        let mut fan_in = branches.len() * config.branch_width() + shape.sentence_dim;
        for (k, &out) in config.fc_sizes.iter().enumerate() {
            params.insert(format!("fc{k}.w"), init::xavier_normal(&[fan_in, out], &mut rng));
            params.insert(format!("fc{k}.b"), init::bias(out));
            fan_in = out;
        }
        Ok(Model {
            config,
            shape,
            params,
        })
    }

    /// Wraps loaded parameters, checking names and shapes against a fresh
    /// model of the same config.
    pub fn from_params(config: ModelConfig, shape: ModelShape, params: ParamStore) -> Result<Self> {
        let emb = if config.fine_tune_embeddings {
            let i = params
                .index_of("embedding")
                .ok_or_else(|| Error::Config("checkpoint lacks the embedding tensor".into()))?;
            Some(params.get(i).clone())
        } else {
            None
        };
        let reference = Self::build(config, shape, emb, 0)?;
        reference.params.check_layout(&params)?;
        Ok(Model { params, ..reference })
    }

    fn padded_width_for(config: &ModelConfig, width: usize) -> usize {
        width.div_ceil(config.heads) * config.heads
    }

    pub fn padded_width(&self) -> usize {
        Self::padded_width_for(&self.config, self.shape.feature_width)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn shape(&self) -> &ModelShape {
        &self.shape
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn set_dropout_p(&mut self, p: f64) -> Result<()> {
        let mut config = self.config.clone();
        config.dropout_p = p;
        config.validate()?;
        self.config = config;
        Ok(())
    }

    fn layout(&self) -> Layout {
        let p = &self.params;
        let idx = |name: String| p.index_of(&name).expect("parameter registered at construction");
        let branch = |b: &str| match self.config.variant {
            Variant::MultiHead => BranchParams::Attention {
                heads: (0..self.config.heads)
                    .map(|h| HeadParams {
                        conv: idx(format!("{b}.head{h}.conv")),
                        wq: idx(format!("{b}.head{h}.wq")),
                        bq: idx(format!("{b}.head{h}.bq")),
                    })
                    .collect(),
                gain: idx(format!("{b}.ln.gain")),
                shift: idx(format!("{b}.ln.shift")),
            },
            Variant::CnnBaseline => BranchParams::Conv {
                w: idx(format!("{b}.conv.w")),
                b: idx(format!("{b}.conv.b")),
            },
        };
        Layout {
            embedding: p.index_of("embedding"),
            word: branch("word"),
            path: self.shape.use_path.then(|| branch("path")),
            fc: (0..self.config.fc_sizes.len())
                .map(|k| (idx(format!("fc{k}.w")), idx(format!("fc{k}.b"))))
                .collect(),
        }
    }

    fn check_input(&self, input: &PairInput) -> Result<()> {
        if input.d != self.shape.feature_width || input.word_matrix.cols() != self.shape.feature_width {
            return Err(Error::shape(format!(
                "input width {} but model expects {}",
                input.d, self.shape.feature_width
            )));
        }
        if input.sentence_vec.len() != self.shape.sentence_dim {
            return Err(Error::shape(format!(
                "sentence vector of {} for model expecting {}",
                input.sentence_vec.len(),
                self.shape.sentence_dim
            )));
        }
        Ok(())
    }

    /// Valid prefix of a branch as a graph node, with masked rows zeroed and
    /// the feature width padded to a multiple of `heads`.
    fn branch_input(
        &self,
        g: &mut Graph,
        matrix: &Tensor,
        mask: &[bool],
        ids: &[Option<usize>],
        embedding: Option<Var>,
    ) -> Result<(Var, Vec<bool>)> {
        let n = valid_prefix(mask)?;
        let mask = mask[..n].to_vec();
        let d = self.shape.feature_width;
        let padded = self.padded_width();
        let skip = if embedding.is_some() { self.shape.word_dim } else { 0 };
        let width = padded - skip;
        let mut data = vec![0.0; n * width];
        for r in (0..n).filter(|&r| mask[r]) {
            data[r * width..r * width + d - skip].copy_from_slice(&matrix.row(r)[skip..]);
        }
        let rest = g.constant(Tensor::matrix(n, width, data)?);
        let x = match embedding {
            Some(table) => {
                let ids: Vec<Option<usize>> = (0..n)
                    .map(|r| if mask[r] { ids.get(r).copied().flatten() } else { None })
                    .collect();
                let vectors = g.gather_rows(table, &ids)?;
                g.concat(&[vectors, rest], 1)?
            }
            None => rest,
        };
        Ok((x, mask))
    }

    fn encode_branch(
        &self,
        g: &mut Graph,
        pv: &[Var],
        params: &BranchParams,
        x: Var,
        mask: &[bool],
        name: &'static str,
        attention: &mut Vec<(&'static str, usize, Var)>,
    ) -> Result<Var> {
        let seq = match params {
            BranchParams::Attention { heads, gain, shift } => {
                let hp: Vec<(Var, Var, Var)> = heads.iter().map(|h| (pv[h.conv], pv[h.wq], pv[h.bq])).collect();
                let (out, weights) = multi_head_self_attention(
                    g,
                    x,
                    &hp,
                    pv[*gain],
                    pv[*shift],
                    mask,
                    self.config.layer_norm_eps,
                )?;
                attention.extend(weights.into_iter().enumerate().map(|(h, w)| (name, h, w)));
                out
            }
            BranchParams::Conv { w, b } => {
                let c = g.conv1d_same(x, pv[*w], Some(pv[*b]))?;
                let c = g.elu(c);
                g.mask_rows(c, mask)?
            }
        };
        match self.config.pooling {
            Pooling::Average => g.masked_avg_pool(seq, mask),
            Pooling::Max => g.masked_max_pool(seq, mask),
        }
    }

    /// Records the forward computation on `g` and returns the logits node.
    pub fn forward_graph<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        input: &PairInput,
        train: bool,
        rng: &mut R,
    ) -> Result<ForwardPass> {
        self.check_input(input)?;
        let layout = self.layout();
        let param_vars: Vec<Var> = self
            .params
            .tensors()
            .iter()
            .map(|t| g.param(t.clone()))
            .collect();
        let emb = layout.embedding.map(|i| param_vars[i]);
        let mut attention = Vec::new();

        let (x, mask) = self.branch_input(g, &input.word_matrix, &input.word_mask, &input.word_ids, emb)?;
        let mut pooled = vec![self.encode_branch(g, &param_vars, &layout.word, x, &mask, "word", &mut attention)?];
        if let Some(path) = &layout.path {
            let (x, mask) =
                self.branch_input(g, &input.path_matrix, &input.path_mask, &input.path_ids, emb)?;
            pooled.push(self.encode_branch(g, &param_vars, path, x, &mask, "path", &mut attention)?);
        }
        if self.shape.sentence_dim > 0 {
            pooled.push(g.constant(Tensor::vector(input.sentence_vec.clone())));
        }
        let mut h = g.concat(&pooled, 0)?;
        let last = layout.fc.len() - 1;
        for (k, &(w, b)) in layout.fc.iter().enumerate() {
            h = g.dropout(h, self.config.dropout_p, rng, train);
            h = g.matmul(h, param_vars[w])?;
            h = g.add_bias(h, param_vars[b])?;
            if k < last {
                h = g.elu(h);
            }
        }
        Ok(ForwardPass {
            logits: h,
            param_vars,
            attention,
        })
    }

    /// Class probabilities (Relevant, Uncertain, Irrelevant).
    pub fn forward<R: Rng + ?Sized>(&self, input: &PairInput, train: bool, rng: &mut R) -> Result<[f64; NUM_CLASSES]> {
        let mut g = Graph::new();
        let pass = self.forward_graph(&mut g, input, train, rng)?;
        let p = softmax(g.value(pass.logits).data());
        Ok([p[0], p[1], p[2]])
    }

    /// Evaluation-mode probabilities.
    pub fn predict(&self, input: &PairInput) -> Result<[f64; NUM_CLASSES]> {
        self.forward(input, false, &mut init::seeded(0))
    }

    /// Attention weights of every head (empty for the CNN baseline).
    pub fn attention_maps(&self, input: &PairInput) -> Result<Vec<AttentionMap>> {
        let mut g = Graph::new();
        let pass = self.forward_graph(&mut g, input, false, &mut init::seeded(0))?;
        Ok(pass
            .attention
            .into_iter()
            .map(|(branch, head, v)| AttentionMap {
                branch,
                head,
                weights: g.value(v).clone(),
            })
            .collect())
    }

    /// Cross-entropy loss node for one example.
    pub fn loss(g: &mut Graph, logits: Var, gold: usize) -> Result<Var> {
        g.softmax_cross_entropy(logits, gold)
    }
}

/// `ELU(conv1d_same(E_slice) · W_q + b_q)` with masked rows zeroed.
pub fn head_transform(g: &mut Graph, e: Var, conv: Var, wq: Var, bq: Var, mask: &[bool]) -> Result<Var> {
    let c = g.conv1d_same(e, conv, None)?;
    let q = g.matmul(c, wq)?;
    let q = g.add_bias(q, bq)?;
    let q = g.elu(q);
    g.mask_rows(q, mask)
}

/// Splits `x` into one column slice per head, runs [`head_transform`] and
/// [`scaled_dot_attention`] on each, concatenates and layer-normalizes.
/// `heads` holds `(conv, W_q, b_q)` per head; the width of `x` must be a
/// multiple of the head count. Returns the output and each head's weights.
pub fn multi_head_self_attention(
    g: &mut Graph,
    x: Var,
    heads: &[(Var, Var, Var)],
    gain: Var,
    shift: Var,
    mask: &[bool],
    eps: f64,
) -> Result<(Var, Vec<Var>)> {
    let width = g.value(x).cols();
    if heads.is_empty() || width % heads.len() != 0 {
        return Err(Error::shape(format!(
            "width {width} does not split into {} heads",
            heads.len()
        )));
    }
    let slice = width / heads.len();
    let mut outs = Vec::with_capacity(heads.len());
    let mut weights = Vec::with_capacity(heads.len());
    for (h, &(conv, wq, bq)) in heads.iter().enumerate() {
        let e = g.slice(x, 1, h * slice, (h + 1) * slice)?;
        let e = head_transform(g, e, conv, wq, bq, mask)?;
        let d_i = g.value(e).cols();
        let (out, w) = scaled_dot_attention(g, e, mask, 1.0 / (d_i as f64).sqrt())?;
        outs.push(out);
        weights.push(w);
    }
    let cat = if outs.len() == 1 { outs[0] } else { g.concat(&outs, 1)? };
    Ok((g.layer_norm(cat, gain, shift, eps)?, weights))
}

/// `softmax(E Eᵀ / √d_i) E` over valid rows; returns the output and the
/// attention-weight node.
pub fn scaled_dot_attention(g: &mut Graph, e: Var, mask: &[bool], scale: f64) -> Result<(Var, Var)> {
    let et = g.transpose(e)?;
    let scores = g.matmul(e, et)?;
    let scores = g.scale(scores, scale);
    let weights = g.masked_softmax(scores, mask)?;
    let out = g.matmul(weights, e)?;
    Ok((out, weights))
}

#[cfg(test)]
mod tests;
