use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use lesion_attr::corpus::{load_corpus, match_attributes, save_corpus, split_corpus, Sentence, SplitRatios, Vocabulary};
use lesion_attr::harness::{
    error_report, evaluate, evaluate_rules, fit, format_table, predict_to_file, read_predictions, Checkpoint,
    Dataset, Metrics, RunConfig,
};
use lesion_attr::rules::RuleSet;
use lesion_attr::synth::{corpus_stats, generate_corpus, SynthConfig};

#[derive(Parser)]
#[command(name = "lesion-attr", version, about = "Classify bookmark-attribute pairs in radiology report sentences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Match vocabulary attributes in sentences that have none yet.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
        /// Tab-separated `phrase<TAB>category` file; the bundled list by default.
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sentence-level seeded train/dev/test split.
    Split {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0.6)]
        train: f64,
        #[arg(long, default_value_t = 0.2)]
        dev: f64,
        #[arg(long, default_value_t = 0.2)]
        test: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    Train {
        /// TOML or JSON run config; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: PathBuf,
        /// Checkpoint directory.
        #[arg(long)]
        out: PathBuf,
        /// Overrides `train.seed` of the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a labelled corpus and print the metrics table.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[command(flatten)]
        rules: RuleArgs,
        /// Also write the metrics as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Write one JSON line per candidate pair.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        rules: RuleArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a labelled synthetic corpus.
    Synth {
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Relevant,Uncertain,Irrelevant proportions.
        #[arg(long, value_delimiter = ',', num_args = 3)]
        mix: Option<Vec<f64>>,
        #[arg(long)]
        hard_fraction: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Corpus statistics per split, or an error breakdown of predictions.
    Report {
        /// `name=path` corpus files, one column each.
        #[arg(long = "split", value_name = "NAME=PATH")]
        splits: Vec<String>,
        /// Predictions file with gold labels.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RuleArgs {
    /// Post-process with cue rules.
    #[arg(long)]
    rules: bool,
    /// Rule file; the bundled rules by default. Implies `--rules`.
    #[arg(long)]
    rules_file: Option<PathBuf>,
}

impl RuleArgs {
    fn load(&self) -> Result<Option<RuleSet>> {
        Ok(match &self.rules_file {
            Some(path) => Some(RuleSet::load(path)?),
            None if self.rules => Some(RuleSet::default_rules()),
            None => None,
        })
    }
}

fn read(path: &Path) -> Result<Vec<Sentence>> {
    let loaded = load_corpus(path).with_context(|| format!("loading {}", path.display()))?;
    if loaded.unknown_ne_tags > 0 {
        warn!("{}: {} unknown NE tags read as NONE", path.display(), loaded.unknown_ne_tags);
    }
    Ok(loaded.sentences)
}

fn ingest(corpus: &Path, vocab: Option<&Path>, out: &Path) -> Result<()> {
    let vocab = match vocab {
        Some(p) => Vocabulary::load(p)?.with_lemma_table(Vocabulary::default_radiology().lemma_table().clone()),
        None => Vocabulary::default_radiology(),
    };
    let mut sentences = read(corpus)?;
    let mut matched = 0;
    for s in sentences.iter_mut().filter(|s| s.attribute_mentions.is_empty()) {
        s.attribute_mentions = match_attributes(s, &vocab);
        matched += s.attribute_mentions.len();
    }
    save_corpus(out, &sentences)?;
    println!("{} sentences, {matched} new attribute mentions", sentences.len());
    Ok(())
}

fn split(corpus: &Path, out_dir: &Path, ratios: SplitRatios, seed: u64) -> Result<()> {
    let split = split_corpus(&read(corpus)?, ratios, seed)?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    for (name, part) in [("train", &split.train), ("dev", &split.dev), ("test", &split.test)] {
        save_corpus(&out_dir.join(format!("{name}.jsonl")), part)?;
        println!("{name}: {} sentences", part.len());
    }
    Ok(())
}

fn train(config: Option<&Path>, train: &Path, dev: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut run = match config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = seed {
        run.train.seed = seed;
    }
    let (ck, history) = fit(&run, read(train)?, read(dev)?)?;
    ck.save(out)?;
    fs::write(out.join("history.json"), serde_json::to_string_pretty(&history)?)?;
    fs::write(out.join("run.toml"), run.to_toml())?;
    let best = &history.epochs[history.chosen_epoch - 1];
    println!(
        "{} epochs; kept epoch {} (dev loss {:.5}, dev macro-F1 {:.4}); saved to {}",
        history.epochs.len(),
        history.chosen_epoch,
        best.dev_loss,
        best.dev_macro_f1,
        out.display()
    );
    Ok(())
}

fn eval(checkpoint: &Path, test: &Path, rules: Option<RuleSet>, json: Option<&Path>) -> Result<()> {
    let ck = Checkpoint::load(checkpoint)?;
    let data = Dataset::labeled(read(test)?);
    let model = evaluate(&ck.model, &ck.encoder, &data, None)?;
    let mut rows: Vec<(String, Metrics)> = Vec::new();
    let name = match ck.model.config().variant {
        lesion_attr::model::Variant::MultiHead => "Multi-head CNN",
        lesion_attr::model::Variant::CnnBaseline => "CNN",
    };
    if let Some(r) = &rules {
        rows.push(("Rule-based".into(), evaluate_rules(&data, r)?));
    }
    rows.push((name.into(), model));
    if let Some(r) = &rules {
        rows.push((format!("{name} + rules"), evaluate(&ck.model, &ck.encoder, &data, Some(r))?));
    }
    let table: Vec<(&str, &Metrics)> = rows.iter().map(|(n, m)| (n.as_str(), m)).collect();
    print!("{}", format_table(&table));
    if let Some(path) = json {
        let obj: serde_json::Map<String, serde_json::Value> = rows
            .iter()
            .map(|(n, m)| Ok((n.clone(), serde_json::to_value(m)?)))
            .collect::<Result<_>>()?;
        fs::write(path, serde_json::to_string_pretty(&obj)?)?;
    }
    Ok(())
}

fn report(splits: &[String], predictions: Option<&Path>) -> Result<()> {
    if splits.is_empty() && predictions.is_none() {
        bail!("nothing to report: pass --split NAME=PATH or --predictions PATH");
    }
    if !splits.is_empty() {
        let mut loaded = Vec::new();
        for s in splits {
            let (name, path) = s.split_once('=').with_context(|| format!("expected NAME=PATH, got {s:?}"))?;
            loaded.push((name.to_string(), read(Path::new(path))?));
        }
        let refs: Vec<(&str, &[Sentence])> = loaded.iter().map(|(n, s)| (n.as_str(), s.as_slice())).collect();
        print!("{}", corpus_stats(&refs));
    }
    if let Some(path) = predictions {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let records = read_predictions(&text)?;
        let pairs: Vec<_> = records
            .iter()
            .filter_map(|r| Some((r.pair.gold?, r.pair.predicted?)))
            .collect();
        if pairs.len() < records.len() {
            warn!("{} predictions lack a gold label and were skipped", records.len() - pairs.len());
        }
        print!("{}", error_report(pairs));
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Ingest { corpus, vocab, out } => ingest(&corpus, vocab.as_deref(), &out),
        Command::Split {
            corpus,
            out_dir,
            train,
            dev,
            test,
            seed,
        } => split(&corpus, &out_dir, SplitRatios { train, dev, test }, seed),
        Command::Train {
            config,
            train: tr,
            dev,
            out,
            seed,
        } => train(config.as_deref(), &tr, &dev, &out, seed),
        Command::Eval {
            checkpoint,
            test,
            rules,
            json,
        } => eval(&checkpoint, &test, rules.load()?, json.as_deref()),
        Command::Predict {
            checkpoint,
            corpus,
            rules,
            out,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let data = Dataset::all_pairs(read(&corpus)?);
            let n = predict_to_file(&ck.model, &ck.encoder, &data, rules.load()?.as_ref(), &out)?;
            info!("wrote {n} predictions to {}", out.display());
            Ok(())
        }
        Command::Synth {
            n,
            seed,
            mix,
            hard_fraction,
            out,
        } => {
            let mut cfg = SynthConfig::new(n, seed);
            if let Some(m) = mix {
                cfg.class_mix = [m[0], m[1], m[2]];
            }
            if let Some(h) = hard_fraction {
                cfg.hard_fraction = h;
            }
            let sentences = generate_corpus(&cfg)?;
            save_corpus(&out, &sentences)?;
            print!("{}", corpus_stats(&[("Synthetic", &sentences)]));
            Ok(())
        }
        Command::Report { splits, predictions } => report(&splits, predictions.as_deref()),
    }
}
