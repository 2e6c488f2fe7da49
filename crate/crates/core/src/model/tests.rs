use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::autodiff::init;

fn shape(d: usize, word_dim: usize, sentence_dim: usize) -> ModelShape {
    ModelShape {
        feature_width: d,
        word_dim,
        sentence_dim,
        use_path: true,
    }
}

fn small_config(variant: Variant) -> ModelConfig {
    ModelConfig {
        heads: 2,
        head_dim: 3,
        conv_window: 3,
        fc_sizes: vec![5, 4, 3],
        dropout_p: 0.5,
        variant,
        ..ModelConfig::default()
    }
}

/// Random input with `valid_word` and `valid_path` leading valid rows.
fn random_input(d: usize, max_len: usize, valid_word: usize, valid_path: usize, sdim: usize, vocab: usize, seed: u64) -> PairInput {
    let mut rng = init::seeded(seed);
    let mut mat = |valid: usize| {
        let mut m = Tensor::zeros(&[max_len, d]);
        for r in 0..valid {
            for c in 0..d {
                m.data_mut()[r * d + c] = rng.random_range(-1.0..1.0);
            }
        }
        m
    };
    let word_matrix = mat(valid_word);
    let path_matrix = mat(valid_path);
    let mask = |valid: usize| (0..max_len).map(|r| r < valid).collect::<Vec<_>>();
    let ids = |valid: usize, off: usize| {
        (0..max_len)
            .map(|r| (r < valid).then_some((r + off) % vocab))
            .collect::<Vec<_>>()
    };
    PairInput {
        word_matrix,
        path_matrix,
        word_mask: mask(valid_word),
        path_mask: mask(valid_path),
        word_ids: ids(valid_word, 0),
        path_ids: ids(valid_path, 2),
        sentence_vec: (0..sdim).map(|i| (i as f64 * 0.37).sin()).collect(),
        d,
        word_tokens: vec![],
        path_indices: vec![],
        path_exact: true,
    }
}

// ---- naive oracle ------------------------------------------------------

type Mat = Vec<Vec<f64>>;

fn p<'a>(m: &'a Model, name: &str) -> &'a Tensor {
    m.params().get(m.params().index_of(name).unwrap())
}

fn elu_ref(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

fn conv_ref(x: &Mat, w: &Tensor, b: Option<&Tensor>) -> Mat {
    let (k, cin, cout) = (w.shape()[0], w.shape()[1], w.shape()[2]);
    let l = x.len();
    let half = (k / 2) as i64;
    (0..l)
        .map(|t| {
            (0..cout)
                .map(|o| {
                    let mut acc = b.map_or(0.0, |b| b.data()[o]);
                    for j in 0..k {
                        let s = t as i64 + j as i64 - half;
                        if s < 0 || s >= l as i64 {
                            continue;
                        }
                        for c in 0..cin {
                            acc += x[s as usize][c] * w.data()[(j * cin + c) * cout + o];
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

fn matmul_ref(a: &Mat, w: &Tensor) -> Mat {
    let (n, m) = (w.shape()[0], w.shape()[1]);
    a.iter()
        .map(|row| (0..m).map(|j| (0..n).map(|i| row[i] * w.data()[i * m + j]).sum()).collect())
        .collect()
}

fn pool_ref(x: &Mat, mask: &[bool], pooling: Pooling) -> Vec<f64> {
    let cols = x[0].len();
    let valid: Vec<&Vec<f64>> = x.iter().zip(mask).filter(|(_, &m)| m).map(|(r, _)| r).collect();
    (0..cols)
        .map(|c| match pooling {
            Pooling::Average => valid.iter().map(|r| r[c]).sum::<f64>() / valid.len() as f64,
            Pooling::Max => valid.iter().map(|r| r[c]).fold(f64::NEG_INFINITY, f64::max),
        })
        .collect()
}

fn branch_ref(m: &Model, name: &str, mat: &Tensor, mask: &[bool], ids: &[Option<usize>]) -> Vec<f64> {
    let cfg = m.config();
    let n = mask.iter().rposition(|&b| b).unwrap() + 1;
    let padded = m.padded_width();
    let emb = m.params().index_of("embedding").map(|i| m.params().get(i));
    let x: Mat = (0..n)
        .map(|r| {
            let mut row = vec![0.0; padded];
            if mask[r] {
                row[..m.shape().feature_width].copy_from_slice(mat.row(r));
                if let Some(e) = emb {
                    let wd = m.shape().word_dim;
                    row[..wd].copy_from_slice(e.row(ids[r].unwrap()));
                }
            }
            row
        })
        .collect();
    let mask = &mask[..n];
    let seq: Mat = match cfg.variant {
        Variant::CnnBaseline => {
            let c = conv_ref(&x, p(m, &format!("{name}.conv.w")), Some(p(m, &format!("{name}.conv.b"))));
            c.into_iter()
                .zip(mask)
                .map(|(r, &k)| r.into_iter().map(|v| if k { elu_ref(v) } else { 0.0 }).collect())
                .collect()
        }
        Variant::MultiHead => {
            let s = padded / cfg.heads;
            let mut cat: Mat = vec![vec![]; n];
            for h in 0..cfg.heads {
                let xs: Mat = x.iter().map(|r| r[h * s..(h + 1) * s].to_vec()).collect();
                let c = conv_ref(&xs, p(m, &format!("{name}.head{h}.conv")), None);
                let q = matmul_ref(&c, p(m, &format!("{name}.head{h}.wq")));
                let bq = p(m, &format!("{name}.head{h}.bq"));
                let e: Mat = q
                    .into_iter()
                    .zip(mask)
                    .map(|(r, &k)| {
                        r.iter()
                            .zip(bq.data())
                            .map(|(v, b)| if k { elu_ref(v + b) } else { 0.0 })
                            .collect()
                    })
                    .collect();
                let scale = 1.0 / (cfg.head_dim as f64).sqrt();
                for i in 0..n {
                    let mut out = vec![0.0; cfg.head_dim];
                    if mask[i] {
                        let scores: Vec<f64> = (0..n)
                            .map(|j| e[i].iter().zip(&e[j]).map(|(a, b)| a * b).sum::<f64>() * scale)
                            .collect();
                        let mx = (0..n).filter(|&j| mask[j]).map(|j| scores[j]).fold(f64::NEG_INFINITY, f64::max);
                        let z: f64 = (0..n).filter(|&j| mask[j]).map(|j| (scores[j] - mx).exp()).sum();
                        for j in (0..n).filter(|&j| mask[j]) {
                            let a = (scores[j] - mx).exp() / z;
                            for (o, v) in out.iter_mut().zip(&e[j]) {
                                *o += a * v;
                            }
                        }
                    }
                    cat[i].extend(out);
                }
            }
            let (g, sh) = (p(m, &format!("{name}.ln.gain")), p(m, &format!("{name}.ln.shift")));
            cat.into_iter()
                .map(|r| {
                    let c = r.len() as f64;
                    let mean = r.iter().sum::<f64>() / c;
                    let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c;
                    r.iter()
                        .enumerate()
                        .map(|(j, v)| (v - mean) / (var + cfg.layer_norm_eps).sqrt() * g.data()[j] + sh.data()[j])
                        .collect()
                })
                .collect()
        }
    };
    pool_ref(&seq, mask, cfg.pooling)
}

fn logits_ref(m: &Model, input: &PairInput) -> Vec<f64> {
    let mut h = branch_ref(m, "word", &input.word_matrix, &input.word_mask, &input.word_ids);
    if m.shape().use_path {
        h.extend(branch_ref(m, "path", &input.path_matrix, &input.path_mask, &input.path_ids));
    }
    h.extend(&input.sentence_vec);
    let layers = m.config().fc_sizes.len();
    for k in 0..layers {
        let z = matmul_ref(&vec![h], p(m, &format!("fc{k}.w"))).remove(0);
        let b = p(m, &format!("fc{k}.b"));
        h = z.iter().zip(b.data()).map(|(a, b)| a + b).collect();
        if k + 1 < layers {
            h = h.into_iter().map(elu_ref).collect();
        }
    }
    h
}

fn logits(m: &Model, input: &PairInput) -> Vec<f64> {
    let mut g = Graph::new();
    let pass = m.forward_graph(&mut g, input, false, &mut init::seeded(0)).unwrap();
    g.value(pass.logits).data().to_vec()
}

fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
    }
}

#[test]
fn multi_head_matches_naive_oracle() {
    for (d, heads) in [(7, 2), (9, 3), (6, 1)] {
        let cfg = ModelConfig {
            heads,
            ..small_config(Variant::MultiHead)
        };
        let m = Model::new(cfg, shape(d, 3, 4), None, 11).unwrap();
        let input = random_input(d, 8, 5, 3, 4, 10, 3);
        assert_close(&logits(&m, &input), &logits_ref(&m, &input), 1e-10);
    }
}

#[test]
fn baseline_matches_naive_oracle() {
    for pooling in [Pooling::Average, Pooling::Max] {
        let cfg = ModelConfig {
            pooling,
            ..small_config(Variant::CnnBaseline)
        };
        let m = Model::new(cfg, shape(5, 2, 0), None, 2).unwrap();
        let input = random_input(5, 6, 6, 2, 0, 10, 8);
        assert_close(&logits(&m, &input), &logits_ref(&m, &input), 1e-10);
    }
}

#[test]
fn fine_tuned_embeddings_match_oracle() {
    let table = EmbeddingTable::random(["a", "b", "c", "d"], 3, 5).unwrap();
    let cfg = ModelConfig {
        fine_tune_embeddings: true,
        ..small_config(Variant::MultiHead)
    };
    let m = Model::new(cfg, shape(7, 3, 2), Some(&table), 4).unwrap();
    let input = random_input(7, 6, 4, 3, 2, table.len() + 1, 1);
    assert_close(&logits(&m, &input), &logits_ref(&m, &input), 1e-10);
}

#[test]
fn attention_rows_are_distributions() {
    let m = Model::new(small_config(Variant::MultiHead), shape(8, 3, 0), None, 1).unwrap();
    let mut input = random_input(8, 10, 6, 4, 0, 10, 2);
    // A gap inside the valid prefix.
    input.word_mask[2] = false;
    input.word_matrix.data_mut()[16..24].fill(0.0);
    let maps = m.attention_maps(&input).unwrap();
    assert_eq!(maps.len(), 4);
    for map in &maps {
        let n = map.weights.rows();
        let mask = if map.branch == "word" { &input.word_mask } else { &input.path_mask };
        for i in 0..n {
            let row = map.weights.row(i);
            let total: f64 = row.iter().sum();
            if mask[i] {
                assert!((total - 1.0).abs() < 1e-12);
                for j in 0..n {
                    if !mask[j] {
                        assert_eq!(row[j], 0.0);
                    }
                }
            } else {
                assert_eq!(total, 0.0);
            }
        }
    }
    let baseline = Model::new(small_config(Variant::CnnBaseline), shape(8, 3, 0), None, 1).unwrap();
    assert!(baseline.attention_maps(&input).unwrap().is_empty());
}

#[test]
fn padding_rows_do_not_matter() {
    let m = Model::new(small_config(Variant::MultiHead), shape(6, 2, 0), None, 9).unwrap();
    let input = random_input(6, 12, 5, 3, 0, 10, 4);
    let base = m.predict(&input).unwrap();
    let mut noisy = input.clone();
    let mut rng = init::seeded(77);
    for r in 5..12 {
        for c in 0..6 {
            noisy.word_matrix.data_mut()[r * 6 + c] = rng.random_range(-5.0..5.0);
        }
    }
    assert_eq!(m.predict(&noisy).unwrap(), base);
    // Longer padding gives the same result.
    let mut short = random_input(6, 5, 5, 3, 0, 10, 4);
    short.word_matrix = Tensor::new(vec![5, 6], input.word_matrix.data()[..30].to_vec()).unwrap();
    short.path_matrix = Tensor::new(vec![5, 6], input.path_matrix.data()[..30].to_vec()).unwrap();
    assert_eq!(m.predict(&short).unwrap(), base);
}

#[test]
fn empty_and_misshaped_inputs_are_errors() {
    let m = Model::new(small_config(Variant::MultiHead), shape(6, 2, 0), None, 9).unwrap();
    let mut input = random_input(6, 4, 0, 2, 0, 10, 4);
    assert!(matches!(m.predict(&input), Err(Error::EmptyMask)));
    input = random_input(7, 4, 2, 2, 0, 10, 4);
    assert!(matches!(m.predict(&input), Err(Error::Shape(_))));
    input = random_input(6, 4, 2, 2, 3, 10, 4);
    assert!(matches!(m.predict(&input), Err(Error::Shape(_))));
}

#[test]
fn config_validation() {
    let bad = [
        ModelConfig {
            heads: 0,
            ..ModelConfig::default()
        },
        ModelConfig {
            conv_window: 4,
            ..ModelConfig::default()
        },
        ModelConfig {
            fc_sizes: vec![8, 2],
            ..ModelConfig::default()
        },
        ModelConfig {
            dropout_p: 1.0,
            ..ModelConfig::default()
        },
    ];
    for cfg in bad {
        assert!(matches!(Model::new(cfg, shape(8, 2, 0), None, 0), Err(Error::Config(_))));
    }
    let ft = ModelConfig {
        fine_tune_embeddings: true,
        ..ModelConfig::default()
    };
    assert!(Model::new(ft, shape(8, 2, 0), None, 0).is_err());
}

#[test]
fn default_config_is_the_published_one() {
    let c = ModelConfig::default();
    assert_eq!((c.heads, c.head_dim, c.conv_window), (4, 64, 3));
    assert_eq!(c.fc_sizes, [256, 64, 3]);
    assert_eq!(c.dropout_p, 0.5);
    assert_eq!(c.branch_width(), 256);
}

#[test]
fn params_roundtrip_through_checkpoint() {
    let m = Model::new(small_config(Variant::MultiHead), shape(7, 3, 2), None, 5).unwrap();
    let json = m.params().to_json().unwrap();
    let back = Model::from_params(
        m.config().clone(),
        m.shape().clone(),
        ParamStore::from_json(&json).unwrap(),
    )
    .unwrap();
    let input = random_input(7, 6, 4, 3, 2, 10, 1);
    assert_eq!(m.predict(&input).unwrap(), back.predict(&input).unwrap());
    // A different head count does not fit the stored tensors.
    let other = ModelConfig {
        heads: 1,
        ..small_config(Variant::MultiHead)
    };
    assert!(Model::from_params(other, m.shape().clone(), m.params().clone()).is_err());
}

#[test]
fn init_is_seeded_and_biases_are_constant() {
    let a = Model::new(small_config(Variant::MultiHead), shape(7, 3, 0), None, 5).unwrap();
    let b = Model::new(small_config(Variant::MultiHead), shape(7, 3, 0), None, 5).unwrap();
    let c = Model::new(small_config(Variant::MultiHead), shape(7, 3, 0), None, 6).unwrap();
    assert_eq!(a.params(), b.params());
    assert_ne!(a.params(), c.params());
    for (name, t) in a.params().iter() {
        if name.ends_with(".bq") || name.ends_with(".b") {
            assert!(t.data().iter().all(|&v| v == 0.01), "{name}");
        }
    }
}

#[test]
fn dropout_only_in_training() {
    let m = Model::new(small_config(Variant::MultiHead), shape(7, 3, 0), None, 5).unwrap();
    let input = random_input(7, 6, 4, 3, 0, 10, 1);
    let eval = m.predict(&input).unwrap();
    assert_eq!(m.forward(&input, false, &mut init::seeded(9)).unwrap(), eval);
    let t1 = m.forward(&input, true, &mut init::seeded(9)).unwrap();
    let t2 = m.forward(&input, true, &mut init::seeded(9)).unwrap();
    assert_eq!(t1, t2);
    assert_ne!(t1, eval);
    assert!((eval.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

/// Central differences on every parameter scalar of the loss.
fn grad_check(m: &mut Model, input: &PairInput, gold: usize) {
    let loss_of = |m: &Model| {
        let mut g = Graph::new();
        let pass = m.forward_graph(&mut g, input, false, &mut init::seeded(0)).unwrap();
        let l = Model::loss(&mut g, pass.logits, gold).unwrap();
        g.value(l).item()
    };
    let mut g = Graph::new();
    let pass = m.forward_graph(&mut g, input, false, &mut init::seeded(0)).unwrap();
    let l = Model::loss(&mut g, pass.logits, gold).unwrap();
    let grads = g.backward(l).unwrap();
    let analytic: Vec<Tensor> = pass
        .param_vars
        .iter()
        .zip(m.params().tensors())
        .map(|(&v, t)| grads.get(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();
    let h = 1e-5;
    let mut worst = 0.0f64;
    for pi in 0..m.params().len() {
        for k in 0..m.params().get(pi).len() {
            let orig = m.params().get(pi).data()[k];
            m.params_mut().get_mut(pi).data_mut()[k] = orig + h;
            let up = loss_of(m);
            m.params_mut().get_mut(pi).data_mut()[k] = orig - h;
            let down = loss_of(m);
            m.params_mut().get_mut(pi).data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[pi].data()[k];
            let rel = (a - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(rel);
            assert!(rel < 1e-4, "{} [{k}]: analytic {a} numeric {numeric}", m.params().name(pi));
        }
    }
    assert!(worst < 1e-4);
}

#[test]
fn multi_head_gradients_match_finite_differences() {
    let mut m = Model::new(small_config(Variant::MultiHead), shape(7, 3, 2), None, 21).unwrap();
    let input = random_input(7, 6, 5, 3, 2, 10, 6);
    for gold in 0..3 {
        grad_check(&mut m, &input, gold);
    }
}

#[test]
fn baseline_gradients_match_finite_differences() {
    let mut m = Model::new(small_config(Variant::CnnBaseline), shape(5, 2, 0), None, 3).unwrap();
    let input = random_input(5, 5, 4, 2, 0, 10, 2);
    grad_check(&mut m, &input, 1);
}

#[test]
fn fine_tuned_gradients_match_finite_differences() {
    let table = EmbeddingTable::random(["a", "b", "c"], 2, 5).unwrap();
    let cfg = ModelConfig {
        fine_tune_embeddings: true,
        ..small_config(Variant::MultiHead)
    };
    let mut m = Model::new(cfg, shape(6, 2, 0), Some(&table), 8).unwrap();
    let input = random_input(6, 5, 4, 3, 0, table.len() + 1, 3);
    grad_check(&mut m, &input, 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn output_is_a_distribution_and_oracle_agrees(
        d in 3usize..10,
        heads in 1usize..4,
        valid in 1usize..7,
        pvalid in 1usize..7,
        seed in 0u64..1000,
    ) {
        let cfg = ModelConfig { heads, ..small_config(Variant::MultiHead) };
        let m = Model::new(cfg, shape(d, 2.min(d), 1), None, seed).unwrap();
        let input = random_input(d, 7, valid, pvalid, 1, 10, seed);
        let p = m.predict(&input).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| x > 0.0));
        let a = logits(&m, &input);
        let b = logits_ref(&m, &input);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }
}

fn rand_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = init::seeded(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn head_transform_zero_input_gives_bias() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros(&[4, 3]));
    let conv = g.param(rand_tensor(&[3, 3, 2], 1));
    let wq = g.param(rand_tensor(&[2, 2], 2));
    let bq = g.param(Tensor::vector(vec![0.3, 0.7]));
    let out = head_transform(&mut g, x, conv, wq, bq, &[true, true, true, false]).unwrap();
    let v = g.value(out);
    for r in 0..3 {
        assert_eq!(v.row(r), &[0.3, 0.7]);
    }
    assert_eq!(v.row(3), &[0.0, 0.0]);
}

#[test]
fn head_transform_single_row_is_center_tap() {
    let mut g = Graph::new();
    let row = rand_tensor(&[1, 4], 3);
    let w = rand_tensor(&[3, 4, 2], 4);
    let wq_t = rand_tensor(&[2, 2], 5);
    let x = g.constant(row.clone());
    let conv = g.param(w.clone());
    let wq = g.param(wq_t.clone());
    let bq = g.param(Tensor::vector(vec![0.01, 0.01]));
    let out = head_transform(&mut g, x, conv, wq, bq, &[true]).unwrap();
    let center: Vec<f64> = (0..2)
        .map(|o| (0..4).map(|c| row.data()[c] * w.data()[(4 + c) * 2 + o]).sum())
        .collect();
    let expect: Vec<f64> = (0..2)
        .map(|j| elu_ref((0..2).map(|i| center[i] * wq_t.data()[i * 2 + j]).sum::<f64>() + 0.01))
        .collect();
    assert_close(g.value(out).data(), &expect, 1e-12);
}

#[test]
fn head_transform_matches_naive_loops() {
    let x = rand_tensor(&[6, 8], 6);
    let w = rand_tensor(&[3, 8, 5], 7);
    let wq_t = rand_tensor(&[5, 5], 8);
    let b = rand_tensor(&[5], 9);
    let mask = [true, true, false, true, true, true];
    let mut g = Graph::new();
    let (xv, cv, qv, bv) = (g.constant(x.clone()), g.param(w.clone()), g.param(wq_t.clone()), g.param(b.clone()));
    let out = head_transform(&mut g, xv, cv, qv, bv, &mask).unwrap();
    let rows: Mat = (0..6).map(|r| x.row(r).to_vec()).collect();
    let c = conv_ref(&rows, &w, None);
    let q = matmul_ref(&c, &wq_t);
    let expect: Vec<f64> = q
        .iter()
        .zip(mask)
        .flat_map(|(r, m)| {
            r.iter()
                .zip(b.data())
                .map(move |(v, bb)| if m { elu_ref(v + bb) } else { 0.0 })
                .collect::<Vec<_>>()
        })
        .collect();
    assert_close(g.value(out).data(), &expect, 1e-12);
}

#[test]
fn attention_examples() {
    // One row attends only to itself.
    let mut g = Graph::new();
    let e = g.constant(rand_tensor(&[1, 4], 1));
    let (out, _) = scaled_dot_attention(&mut g, e, &[true], 0.5).unwrap();
    assert_close(g.value(out).data(), g.value(e).data(), 1e-15);
    // Identical rows average to themselves.
    let row = rand_tensor(&[1, 3], 2);
    let two = Tensor::from_rows(&[row.data().to_vec(), row.data().to_vec()]).unwrap();
    let e = g.constant(two);
    let (out, _) = scaled_dot_attention(&mut g, e, &[true, true], 0.5).unwrap();
    for r in 0..2 {
        assert_close(g.value(out).row(r), row.data(), 1e-12);
    }
    // Dense 5x4 computation.
    let m = rand_tensor(&[5, 4], 3);
    let e = g.constant(m.clone());
    let (out, _) = scaled_dot_attention(&mut g, e, &[true; 5], 0.5).unwrap();
    for i in 0..5 {
        let s: Vec<f64> = (0..5).map(|j| (0..4).map(|k| m.at(i, k) * m.at(j, k)).sum::<f64>() * 0.5).collect();
        let p = softmax(&s);
        let expect: Vec<f64> = (0..4).map(|k| (0..5).map(|j| p[j] * m.at(j, k)).sum()).collect();
        assert_close(g.value(out).row(i), &expect, 1e-12);
    }
    let e = g.constant(m);
    assert!(matches!(scaled_dot_attention(&mut g, e, &[false; 5], 0.5), Err(Error::EmptyMask)));
}

fn mhsa_setup(g: &mut Graph, l: usize, d: usize, h: usize, d_i: usize, seed: u64) -> (Var, Vec<(Var, Var, Var)>, Var, Var) {
    let x = g.constant(rand_tensor(&[l, d], seed));
    let heads = (0..h as u64)
        .map(|i| {
            (
                g.param(rand_tensor(&[3, d / h, d_i], seed + 10 * i + 1)),
                g.param(rand_tensor(&[d_i, d_i], seed + 10 * i + 2)),
                g.param(Tensor::filled(&[d_i], 0.01)),
            )
        })
        .collect();
    let gain = g.param(Tensor::filled(&[h * d_i], 1.0));
    let shift = g.param(Tensor::zeros(&[h * d_i]));
    (x, heads, gain, shift)
}

#[test]
fn multi_head_output_shape() {
    let mut g = Graph::new();
    let (x, heads, gain, shift) = mhsa_setup(&mut g, 128, 256, 4, 64, 1);
    let (out, w) = multi_head_self_attention(&mut g, x, &heads, gain, shift, &[true; 128], 1e-5).unwrap();
    assert_eq!(g.shape(out), &[128, 256]);
    assert_eq!(w.len(), 4);
    let mut g = Graph::new();
    let (x, heads, gain, shift) = mhsa_setup(&mut g, 7, 9, 3, 2, 2);
    let (out, _) = multi_head_self_attention(&mut g, x, &heads, gain, shift, &[true; 7], 1e-5).unwrap();
    assert_eq!(g.shape(out), &[7, 6]);
    let (x, heads, gain, shift) = mhsa_setup(&mut g, 7, 9, 3, 2, 2);
    assert!(multi_head_self_attention(&mut g, x, &heads[..2], gain, shift, &[true; 7], 1e-5).is_err());
}

#[test]
fn single_head_is_one_attention_over_full_width() {
    let mut g = Graph::new();
    let (x, heads, gain, shift) = mhsa_setup(&mut g, 5, 6, 1, 4, 3);
    let mask = [true, true, true, true, false];
    let (out, _) = multi_head_self_attention(&mut g, x, &heads, gain, shift, &mask, 1e-5).unwrap();
    let (conv, wq, bq) = heads[0];
    let e = head_transform(&mut g, x, conv, wq, bq, &mask).unwrap();
    let (att, _) = scaled_dot_attention(&mut g, e, &mask, 0.5).unwrap();
    let direct = g.layer_norm(att, gain, shift, 1e-5).unwrap();
    assert_eq!(g.value(out), g.value(direct));
}

#[test]
fn every_parameter_receives_gradient() {
    for variant in [Variant::MultiHead, Variant::CnnBaseline] {
        let table = EmbeddingTable::random(["a", "b", "c"], 2, 5).unwrap();
        let cfg = ModelConfig {
            fine_tune_embeddings: true,
            ..small_config(variant)
        };
        let m = Model::new(cfg, shape(7, 2, 2), Some(&table), 12).unwrap();
        let input = random_input(7, 6, 5, 3, 2, table.len() + 1, 13);
        let mut g = Graph::new();
        let pass = m.forward_graph(&mut g, &input, false, &mut init::seeded(0)).unwrap();
        let l = Model::loss(&mut g, pass.logits, 0).unwrap();
        let grads = g.backward(l).unwrap();
        for (i, &v) in pass.param_vars.iter().enumerate() {
            let gt = grads.get(v).expect("gradient present");
            assert!(gt.data().iter().any(|&x| x != 0.0), "{}", m.params().name(i));
        }
    }
}

proptest! {
    #[test]
    fn softmax_preserves_argmax(z in proptest::collection::vec(-50.0f64..50.0, 3)) {
        let p = softmax(&z);
        let arg = |v: &[f64]| (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
        prop_assume!(z.iter().filter(|&&x| x == z[arg(&z)]).count() == 1);
        prop_assert_eq!(arg(&p), arg(&z));
    }
}
