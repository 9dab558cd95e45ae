//! End-to-end commands over artifact directories: turn raw corpora into
//! instance caches, train and evaluate models, score instances, and
//! compare prediction files. Every command writes its resolved
//! configuration into the output directory, so a run is reproducible
//! from the directory contents alone.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::baseline::{
    self, featurize_instance, train_linear, FeatureSpec, LinearModel, PretrainedEmbeddings,
};
use crate::data::instance::{load_instances, sample_target, save_instances};
use crate::data::split::{split_chronological, split_random, SplitSpec};
use crate::data::thread_build::build_threads;
use crate::data::tokenize::tokenize;
use crate::data::{movie, reddit, Instance, Thread, Vocabulary};
use crate::features::lexicon::SentimentLexicon;
use crate::features::{AuthorEndTable, BackgroundVocab, FeatureMask, Featurizer};
use crate::metrics::{accuracy, auc, average_precision, permutation_test, MetricKind, PredictionSet};
use crate::nn::model::{AttentionKind, ConverNet};
use crate::nn::params::ParamStore;
use crate::train::{
    history_csv, load_checkpoint, restore_model, save_checkpoint, score_instances, train,
    ModelConfig,
};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Corpus {
    Reddit,
    Movie,
}

impl FromStr for Corpus {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reddit" => Ok(Corpus::Reddit),
            "movie" => Ok(Corpus::Movie),
            other => Err(Error::Config(format!("unknown corpus {other:?} (reddit|movie)"))),
        }
    }
}

impl std::fmt::Display for Corpus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Corpus::Reddit => "reddit",
            Corpus::Movie => "movie",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    ConverNet,
    Linear,
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "convernet" => Ok(ModelKind::ConverNet),
            "linear" => Ok(ModelKind::Linear),
            other => Err(Error::Config(format!("unknown model {other:?} (convernet|linear)"))),
        }
    }
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------- prepare

/// Corpus-to-cache settings. `lexicon` is optional; without one every
/// token scores neutral.
#[derive(Clone, Debug)]
pub struct PrepareConfig {
    pub corpus: Corpus,
    pub min_freq: usize,
    pub l_max: usize,
    pub val_frac: f64,
    pub test_frac: f64,
    pub lexicon: Option<PathBuf>,
    pub seed: u64,
}

impl PrepareConfig {
    pub fn new(corpus: Corpus) -> Self {
        PrepareConfig {
            corpus,
            min_freq: 5,
            l_max: 20,
            val_frac: 0.1,
            test_frac: 0.1,
            lexicon: None,
            seed: 42,
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |k: &str, v: &str| Error::Config(format!("bad value {v:?} for {k}"));
        match key {
            "min_freq" => self.min_freq = value.parse().map_err(|_| bad(key, value))?,
            "l_max" => self.l_max = value.parse().map_err(|_| bad(key, value))?,
            "val_frac" => self.val_frac = value.parse().map_err(|_| bad(key, value))?,
            "test_frac" => self.test_frac = value.parse().map_err(|_| bad(key, value))?,
            "lexicon" => self.lexicon = Some(PathBuf::from(value)),
            "seed" => self.seed = value.parse().map_err(|_| bad(key, value))?,
            other => return Err(Error::Config(format!("unknown prepare key {other:?}"))),
        }
        Ok(())
    }

    pub fn apply_lines(&mut self, text: &str) -> Result<()> {
        for line in config_lines(text) {
            let (k, v) = line?;
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn to_lines(&self) -> String {
        let mut out = format!(
            "corpus={}\nmin_freq={}\nl_max={}\nval_frac={}\ntest_frac={}\nseed={}\n",
            self.corpus, self.min_freq, self.l_max, self.val_frac, self.test_frac, self.seed
        );
        if let Some(p) = &self.lexicon {
            out.push_str(&format!("lexicon={}\n", p.display()));
        }
        out
    }
}

/// key=value lines; '#' starts a comment.
fn config_lines(text: &str) -> impl Iterator<Item = Result<(String, String)>> + '_ {
    text.lines().filter_map(|line| {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            return None;
        }
        Some(match line.split_once('=') {
            Some((k, v)) => Ok((k.trim().to_string(), v.trim().to_string())),
            None => Err(Error::Config(format!("expected key=value, got {line:?}"))),
        })
    })
}

/// Corpus-level counts in the style of a dataset summary table.
#[derive(Clone, Debug, PartialEq)]
pub struct PrepareStats {
    pub threads: usize,
    pub posts: usize,
    pub vocabulary: usize,
    pub max_post_len: usize,
    pub avg_post_len: f64,
    /// (train, val, test) thread counts.
    pub split_sizes: (usize, usize, usize),
    /// (train, val, test) positive-instance counts.
    pub positives: (usize, usize, usize),
}

impl PrepareStats {
    pub fn to_lines(&self) -> String {
        format!(
            "threads {}\nposts {}\nvocabulary {}\nmax_post_len {}\navg_post_len {:.2}\n\
             train_threads {}\nval_threads {}\ntest_threads {}\n\
             train_positives {}\nval_positives {}\ntest_positives {}\n",
            self.threads,
            self.posts,
            self.vocabulary,
            self.max_post_len,
            self.avg_post_len,
            self.split_sizes.0,
            self.split_sizes.1,
            self.split_sizes.2,
            self.positives.0,
            self.positives.1,
            self.positives.2,
        )
    }
}

fn load_threads(inputs: &[PathBuf], corpus: Corpus) -> Result<Vec<Thread>> {
    match corpus {
        Corpus::Reddit => {
            if inputs.is_empty() {
                return Err(Error::Config("reddit corpus needs at least one posts file".into()));
            }
            let mut posts = Vec::new();
            for path in inputs {
                let (mut p, _) = reddit::parse_posts_jsonl(path)?;
                posts.append(&mut p);
            }
            let (threads, report) = build_threads(posts);
            log::info!(
                "built {} threads ({} too small, {} orphans, {} cycle posts dropped)",
                threads.len(),
                report.discarded_small,
                report.orphans_dropped,
                report.rejected_cycles
            );
            Ok(threads)
        }
        Corpus::Movie => {
            if inputs.len() != 2 {
                return Err(Error::Config(
                    "movie corpus needs exactly two inputs: lines file, conversations file".into(),
                ));
            }
            let (threads, report) = movie::parse_movie_corpus(&inputs[0], &inputs[1])?;
            log::info!("parsed {} dialog threads ({} dropped)", threads.len(), report.dropped);
            Ok(threads)
        }
    }
}

/// Parse raw files, rebuild threads, split, build the vocabulary and
/// feature tables from the training split only, and cache one sampled
/// instance per thread for each split.
pub fn cmd_prepare(inputs: &[PathBuf], out: &Path, cfg: &PrepareConfig) -> Result<PrepareStats> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let threads = load_threads(inputs, cfg.corpus)?;
    if threads.is_empty() {
        return Err(Error::EmptyInput("no usable threads in the corpus".into()));
    }

    let n_threads = threads.len();
    let mut posts = 0usize;
    let mut tokens_total = 0usize;
    let mut max_post_len = 0usize;
    for t in &threads {
        for p in &t.posts {
            let words = tokenize(&p.body).len();
            posts += 1;
            tokens_total += words;
            max_post_len = max_post_len.max(words);
        }
    }

    let spec = SplitSpec::Fractions { val: cfg.val_frac, test: cfg.test_frac };
    let (train_t, val_t, test_t) = match cfg.corpus {
        Corpus::Reddit => split_chronological(threads, &spec),
        Corpus::Movie => split_random(threads, &spec, cfg.seed),
    };
    if train_t.is_empty() || val_t.is_empty() || test_t.is_empty() {
        return Err(Error::Data(format!(
            "split left an empty partition ({}/{}/{} threads); need more data or smaller fractions",
            train_t.len(),
            val_t.len(),
            test_t.len()
        )));
    }

    let lexicon = match &cfg.lexicon {
        Some(path) => SentimentLexicon::load(path)?,
        None => {
            log::warn!("no sentiment lexicon configured; all tokens score neutral");
            SentimentLexicon::parse("").map_err(Error::Data)?
        }
    };
    let authors = AuthorEndTable::build(&train_t);
    let backgrounds = match cfg.corpus {
        Corpus::Movie => Some(BackgroundVocab::build(&train_t)),
        Corpus::Reddit => None,
    };

    // vocabulary from the training instances' visible windows only
    let mut train_docs: Vec<Vec<String>> = Vec::new();
    for t in &train_t {
        let sample = sample_target(t, cfg.seed, cfg.l_max);
        for idx in sample.start..=sample.target {
            train_docs.push(tokenize(&t.posts[idx].body));
        }
    }
    let vocab = Vocabulary::build(train_docs.iter().map(|d| d.as_slice()), cfg.min_freq);

    let featurizer = Featurizer {
        vocab: &vocab,
        lexicon: &lexicon,
        authors: &authors,
        backgrounds: backgrounds.as_ref(),
        mask: match cfg.corpus {
            Corpus::Reddit => FeatureMask::reddit(),
            Corpus::Movie => FeatureMask::movie(),
        },
        l_max: cfg.l_max,
        seed: cfg.seed,
    };
    let build_split = |threads: &[Thread]| -> Result<Vec<Instance>> {
        threads.par_iter().map(|t| featurizer.instance(t)).collect()
    };
    let train_i = build_split(&train_t)?;
    let val_i = build_split(&val_t)?;
    let test_i = build_split(&test_t)?;

    save_instances(&out.join("train.instances"), &train_i)?;
    save_instances(&out.join("val.instances"), &val_i)?;
    save_instances(&out.join("test.instances"), &test_i)?;
    write_file(&out.join("vocab.txt"), &vocab.to_lines())?;
    write_file(&out.join("authors.tsv"), &authors.to_lines())?;
    if let Some(bv) = &backgrounds {
        write_file(&out.join("backgrounds.txt"), &bv.to_lines())?;
    }
    let mut manifest = String::new();
    for (threads, name) in [(&train_t, "train"), (&val_t, "val"), (&test_t, "test")] {
        for t in threads.iter() {
            manifest.push_str(&format!("{}\t{name}\n", t.thread_id));
        }
    }
    write_file(&out.join("split.txt"), &manifest)?;

    let count_pos = |set: &[Instance]| set.iter().filter(|i| i.label == 1).count();
    let stats = PrepareStats {
        threads: n_threads,
        posts,
        vocabulary: vocab.len(),
        max_post_len,
        avg_post_len: tokens_total as f64 / posts.max(1) as f64,
        split_sizes: (train_t.len(), val_t.len(), test_t.len()),
        positives: (count_pos(&train_i), count_pos(&val_i), count_pos(&test_i)),
    };
    write_file(&out.join("stats.txt"), &stats.to_lines())?;
    write_file(&out.join("config.txt"), &format!("command=prepare\n{}", cfg.to_lines()))?;
    Ok(stats)
}

// ---------------------------------------------------------------- ablation

/// Zero out feature families in already-built instances. Family names
/// follow the context layout (`post_length`, `thread_length`, `lengths`,
/// `sentiment`, `post_time`, `reply_structure`, `author`, `background`);
/// `context` wipes everything hand-crafted, leaving content only.
pub fn ablate_instances(instances: &mut [Instance], families: &[String]) -> Result<()> {
    let mut ranges: Vec<std::ops::Range<usize>> = Vec::new();
    let mut drop_background = false;
    for family in families {
        match family.as_str() {
            "post_length" => ranges.push(0..1),
            "thread_length" => ranges.push(1..2),
            "lengths" => ranges.push(0..2),
            "sentiment" => ranges.push(2..5),
            "post_time" => ranges.push(5..9),
            "reply" | "reply_structure" => ranges.push(9..11),
            "author" => ranges.push(11..12),
            "background" => drop_background = true,
            "context" => {
                ranges.push(0..12);
                drop_background = true;
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown feature family {other:?} for ablation"
                )))
            }
        }
    }
    for inst in instances.iter_mut() {
        for ctx in &mut inst.contexts {
            for r in &ranges {
                for k in r.clone() {
                    ctx[k] = 0.0;
                }
            }
        }
        if drop_background {
            inst.background = None;
        }
    }
    Ok(())
}

// ------------------------------------------------------------------ train

/// Settings for the hashed linear baseline.
#[derive(Clone, Debug)]
pub struct LinearConfig {
    pub hash_dim: usize,
    pub orders: Vec<usize>,
    /// SVM-style relaxation constant; the regularizer is 1/(c·n).
    pub c: f64,
    pub epochs: usize,
    pub l_max: usize,
    pub seed: u64,
    pub embeddings: Option<PathBuf>,
}

impl Default for LinearConfig {
    fn default() -> Self {
        LinearConfig {
            hash_dim: 1 << 18,
            orders: vec![1, 2, 3],
            c: 1.0,
            epochs: 5,
            l_max: 20,
            seed: 42,
            embeddings: None,
        }
    }
}

impl LinearConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |k: &str, v: &str| Error::Config(format!("bad value {v:?} for {k}"));
        match key {
            "hash_dim" => self.hash_dim = value.parse().map_err(|_| bad(key, value))?,
            "orders" => {
                self.orders = value
                    .split(',')
                    .map(|v| v.trim().parse().map_err(|_| bad(key, value)))
                    .collect::<Result<_>>()?
            }
            "c" => self.c = value.parse().map_err(|_| bad(key, value))?,
            "epochs" => self.epochs = value.parse().map_err(|_| bad(key, value))?,
            "l_max" => self.l_max = value.parse().map_err(|_| bad(key, value))?,
            "seed" => self.seed = value.parse().map_err(|_| bad(key, value))?,
            "embeddings" => self.embeddings = Some(PathBuf::from(value)),
            other => return Err(Error::Config(format!("unknown baseline key {other:?}"))),
        }
        Ok(())
    }

    pub fn apply_lines(&mut self, text: &str) -> Result<()> {
        for line in config_lines(text) {
            let (k, v) = line?;
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn to_lines(&self) -> String {
        let orders: Vec<String> = self.orders.iter().map(|o| o.to_string()).collect();
        let mut out = format!(
            "hash_dim={}\norders={}\nc={}\nepochs={}\nl_max={}\nseed={}\n",
            self.hash_dim,
            orders.join(","),
            self.c,
            self.epochs,
            self.l_max,
            self.seed
        );
        if let Some(p) = &self.embeddings {
            out.push_str(&format!("embeddings={}\n", p.display()));
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct TrainArgs {
    /// Directory written by [`cmd_prepare`].
    pub prepared: PathBuf,
    pub out: PathBuf,
    pub model: ModelKind,
    /// Overrides the config file's attention choice when set.
    pub attention: Option<AttentionKind>,
    pub ablate: Vec<String>,
    pub config: Option<PathBuf>,
    /// Overrides the config file's seed when set.
    pub seed: Option<u64>,
}

/// Accuracy/AUC/MAP plus the counts they were computed over.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub auc: f64,
    pub map: f64,
    pub instances: usize,
    pub positives: usize,
}

impl EvalReport {
    pub fn from_predictions(p: &PredictionSet) -> Result<Self> {
        Ok(EvalReport {
            accuracy: accuracy(p, 0.5),
            auc: auc(p)?,
            map: average_precision(p)?,
            instances: p.len(),
            positives: p.positives(),
        })
    }

    pub fn to_lines(&self) -> String {
        format!(
            "accuracy {}\nauc {}\nmap {}\ninstances {}\npositives {}\nnegatives {}\n",
            self.accuracy,
            self.auc,
            self.map,
            self.instances,
            self.positives,
            self.instances - self.positives
        )
    }
}

fn load_split(dir: &Path, name: &str) -> Result<Vec<Instance>> {
    load_instances(&dir.join(format!("{name}.instances")))
}

fn max_posts(instances: &[Instance]) -> usize {
    instances.iter().map(|i| i.s()).max().unwrap_or(0)
}

/// Train a model on a prepared directory; writes the trained artifact,
/// the resolved config, and validation metrics (for the network, also the
/// per-epoch history) into `out`. Returns the validation report.
pub fn cmd_train(args: &TrainArgs) -> Result<EvalReport> {
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let mut train_i = load_split(&args.prepared, "train")?;
    let mut val_i = load_split(&args.prepared, "val")?;
    ablate_instances(&mut train_i, &args.ablate)?;
    ablate_instances(&mut val_i, &args.ablate)?;

    let provenance = |cfg_lines: &str| {
        format!(
            "command=train\nmodel={}\nprepared={}\nablate={}\n{}",
            match args.model {
                ModelKind::ConverNet => "convernet",
                ModelKind::Linear => "linear",
            },
            args.prepared.display(),
            args.ablate.join(","),
            cfg_lines
        )
    };

    match args.model {
        ModelKind::ConverNet => {
            let mut cfg = ModelConfig::default();
            if let Some(path) = &args.config {
                cfg.apply_lines(&read_file(path)?)?;
            }
            if let Some(att) = args.attention {
                cfg.attention = att;
            }
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            let longest = max_posts(&train_i).max(max_posts(&val_i));
            if longest > cfg.l_max {
                return Err(Error::Config(format!(
                    "cached instances hold up to {longest} posts but l_max is {}",
                    cfg.l_max
                )));
            }
            let vocab = Vocabulary::from_lines(&read_file(&args.prepared.join("vocab.txt"))?);
            let backgrounds = if train_i.iter().chain(&val_i).any(|i| i.background.is_some()) {
                let bv = BackgroundVocab::from_lines(
                    &read_file(&args.prepared.join("backgrounds.txt"))?,
                );
                Some(bv.len())
            } else {
                None
            };
            let context_dim = train_i[0].contexts[0].len();
            let mut store = ParamStore::new();
            let model = ConverNet::build(&mut store, &cfg, vocab.len(), context_dim, backgrounds)?;
            let report = train(&mut store, &model, &train_i, &val_i, &cfg)?;

            save_checkpoint(&args.out.join("model"), &report.best_store, &cfg, &report.history)?;
            write_file(&args.out.join("history.csv"), &history_csv(&report.history))?;
            let predictions = score_instances(&model, &report.best_store, &val_i)?;
            let eval = EvalReport::from_predictions(&predictions)?;
            write_file(&args.out.join("val_metrics.txt"), &eval.to_lines())?;
            write_file(&args.out.join("config.txt"), &provenance(&cfg.to_lines()))?;
            Ok(eval)
        }
        ModelKind::Linear => {
            let mut cfg = LinearConfig::default();
            if let Some(path) = &args.config {
                cfg.apply_lines(&read_file(path)?)?;
            }
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            let longest = max_posts(&train_i).max(max_posts(&val_i));
            if longest > cfg.l_max {
                return Err(Error::Config(format!(
                    "cached instances hold up to {longest} posts but l_max is {}",
                    cfg.l_max
                )));
            }
            let emb = match &cfg.embeddings {
                Some(path) => {
                    let vocab =
                        Vocabulary::from_lines(&read_file(&args.prepared.join("vocab.txt"))?);
                    Some(PretrainedEmbeddings::load(path, &vocab)?)
                }
                None => None,
            };
            let mut spec = FeatureSpec::all(cfg.hash_dim, cfg.l_max);
            spec.ngram_orders = cfg.orders.clone();
            spec.background = train_i.iter().chain(&val_i).any(|i| i.background.is_some());
            if let Some(e) = &emb {
                spec.embeddings = true;
                spec.emb_dim = e.dim();
            }
            for family in &args.ablate {
                // context-layout aliases map onto the baseline family names
                match family.as_str() {
                    "lengths" | "post_length" | "thread_length" => spec.disable("lengths")?,
                    "reply" => spec.disable("reply_structure")?,
                    "context" => {
                        for f in
                            ["lengths", "sentiment", "post_time", "reply_structure", "author", "background"]
                        {
                            spec.disable(f)?;
                        }
                    }
                    other => spec.disable(other)?,
                }
            }
            let lambda = baseline::lambda_from_c(cfg.c, train_i.len());
            let featurize = |set: &[Instance]| -> Result<Vec<(crate::baseline::SparseVec, u8)>> {
                set.par_iter()
                    .map(|i| Ok((featurize_instance(i, &spec, emb.as_ref())?, i.label)))
                    .collect()
            };
            let train_x = featurize(&train_i)?;
            let model = train_linear(&train_x, &spec, lambda, cfg.epochs, cfg.seed)?;
            model.save(&args.out.join("baseline.model"))?;

            let predictions = linear_predictions(&model, &val_i, emb.as_ref())?;
            let eval = EvalReport::from_predictions(&predictions)?;
            write_file(&args.out.join("val_metrics.txt"), &eval.to_lines())?;
            write_file(&args.out.join("config.txt"), &provenance(&cfg.to_lines()))?;
            Ok(eval)
        }
    }
}

/// Margins squashed through the logistic so baseline prediction files are
/// threshold-compatible with the network's probabilities; ranking metrics
/// are unaffected by the monotone map.
fn linear_predictions(
    model: &LinearModel,
    instances: &[Instance],
    emb: Option<&PretrainedEmbeddings>,
) -> Result<PredictionSet> {
    let rows: Vec<(String, f64, u8)> = instances
        .par_iter()
        .map(|inst| {
            let x = featurize_instance(inst, &model.spec, emb)?;
            let margin = baseline::sgd::score_linear(model, &x)?;
            Ok((inst.thread_id.clone(), baseline::sgd::squash(margin), inst.label))
        })
        .collect::<Result<_>>()?;
    PredictionSet::new(rows)
}

// --------------------------------------------------------------- evaluate

#[derive(Clone, Debug)]
pub struct EvalArgs {
    /// Directory written by [`cmd_train`].
    pub model_dir: PathBuf,
    /// Instance cache file to score.
    pub instances: PathBuf,
    pub out: PathBuf,
    /// Needed only when the model directory holds both artifact kinds.
    pub model: Option<ModelKind>,
    /// Pretrained embedding file, when the baseline spec requires one.
    pub embeddings: Option<PathBuf>,
    /// Vocabulary for aligning the embedding file (defaults to the
    /// cache's sibling vocab.txt).
    pub vocab: Option<PathBuf>,
}

fn detect_model(args: &EvalArgs) -> Result<ModelKind> {
    if let Some(kind) = args.model {
        return Ok(kind);
    }
    let has_net = args.model_dir.join("model.manifest").exists();
    let has_linear = args.model_dir.join("baseline.model").exists();
    match (has_net, has_linear) {
        (true, false) => Ok(ModelKind::ConverNet),
        (false, true) => Ok(ModelKind::Linear),
        (true, true) => Err(Error::Config(
            "directory holds both model kinds; pass the model explicitly".into(),
        )),
        (false, false) => Err(Error::Data(format!(
            "no trained model found in {}",
            args.model_dir.display()
        ))),
    }
}

fn scored_predictions(args: &EvalArgs) -> Result<PredictionSet> {
    let instances = load_instances(&args.instances)?;
    match detect_model(args)? {
        ModelKind::ConverNet => {
            let ckpt = load_checkpoint(&args.model_dir.join("model"))?;
            let (store, model) = restore_model(&ckpt)?;
            score_instances(&model, &store, &instances)
        }
        ModelKind::Linear => {
            let model = LinearModel::load(&args.model_dir.join("baseline.model"))?;
            let emb = if model.spec.embeddings {
                let path = args.embeddings.as_ref().ok_or_else(|| {
                    Error::Config("model uses pretrained embeddings; pass the embedding file".into())
                })?;
                let vocab_path = args
                    .vocab
                    .clone()
                    .unwrap_or_else(|| args.instances.with_file_name("vocab.txt"));
                let vocab = Vocabulary::from_lines(&read_file(&vocab_path)?);
                Some(PretrainedEmbeddings::load(path, &vocab)?)
            } else {
                None
            };
            linear_predictions(&model, &instances, emb.as_ref())
        }
    }
}

fn eval_provenance(args: &EvalArgs, command: &str) -> String {
    format!(
        "command={command}\nmodel_dir={}\ninstances={}\n",
        args.model_dir.display(),
        args.instances.display()
    )
}

/// Score a cache with a trained model and report accuracy, AUC and MAP.
/// Writes `predictions.csv`, `metrics.txt` and the resolved config.
pub fn cmd_evaluate(args: &EvalArgs) -> Result<EvalReport> {
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let predictions = scored_predictions(args)?;
    let report = EvalReport::from_predictions(&predictions)?;
    predictions.save(&args.out.join("predictions.csv"))?;
    write_file(&args.out.join("metrics.txt"), &report.to_lines())?;
    write_file(&args.out.join("config.txt"), &eval_provenance(args, "evaluate"))?;
    Ok(report)
}

/// Score a cache with a trained model without computing metrics (works on
/// single-class sets). Writes `predictions.csv`; returns the row count.
pub fn cmd_predict(args: &EvalArgs) -> Result<usize> {
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let predictions = scored_predictions(args)?;
    predictions.save(&args.out.join("predictions.csv"))?;
    write_file(&args.out.join("config.txt"), &eval_provenance(args, "predict"))?;
    Ok(predictions.len())
}

// ---------------------------------------------------------------- compare

#[derive(Clone, Debug)]
pub struct CompareArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    pub metric: MetricKind,
    pub rounds: usize,
    pub seed: u64,
    pub out: PathBuf,
}

#[derive(Clone, Debug)]
pub struct CompareReport {
    pub metric: MetricKind,
    pub score_a: f64,
    pub score_b: f64,
    pub delta: f64,
    pub p_value: f64,
    pub rounds: usize,
}

impl CompareReport {
    /// Significance stars at the 0.05 / 0.01 / 0.001 levels.
    pub fn stars(&self) -> &'static str {
        if self.p_value < 0.001 {
            "***"
        } else if self.p_value < 0.01 {
            "**"
        } else if self.p_value < 0.05 {
            "*"
        } else {
            "none"
        }
    }

    pub fn to_lines(&self, a: &Path, b: &Path) -> String {
        format!(
            "metric {}\na {} {}\nb {} {}\ndelta {}\npvalue {}\nstars {}\nrounds {}\n",
            self.metric,
            a.display(),
            self.score_a,
            b.display(),
            self.score_b,
            self.delta,
            self.p_value,
            self.stars(),
            self.rounds
        )
    }
}

/// Paired permutation test between two prediction files over the same
/// instances. Delta is `a - b`.
pub fn cmd_compare(args: &CompareArgs) -> Result<CompareReport> {
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let a = PredictionSet::load(&args.a)?;
    let b = PredictionSet::load(&args.b)?;
    let score_a = args.metric.compute(&a)?;
    let score_b = args.metric.compute(&b)?;
    let p_value = permutation_test(&a, &b, args.metric, args.rounds, args.seed)?;
    let report = CompareReport {
        metric: args.metric,
        score_a,
        score_b,
        delta: score_a - score_b,
        p_value,
        rounds: args.rounds,
    };
    write_file(&args.out.join("report.txt"), &report.to_lines(&args.a, &args.b))?;
    write_file(
        &args.out.join("config.txt"),
        &format!(
            "command=compare\na={}\nb={}\nmetric={}\nrounds={}\nseed={}\n",
            args.a.display(),
            args.b.display(),
            args.metric,
            args.rounds,
            args.seed
        ),
    )?;
    Ok(report)
}
