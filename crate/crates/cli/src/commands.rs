use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use anyhow::{Context, Result};
use brushgan::data::{
    build_samples, render_source_glyph, split_dataset, Corpus, DatasetSplit, DirectoryGlyphProvider,
    GlyphProvider, MissingPolicy, Partition,
};
use brushgan::eval::{evaluate as score, generate as run_generator};
use brushgan::nn::StyleMode;
use brushgan::train::{
    load_generator, run_ablation, AblationConfig, Checkpoint, RunOutput, TrainConfig, Trainer,
    EVAL_BATCH,
};
use brushgan::{CharacterCode, ComponentDictionary, StyleLabel, TrainingSample};

use crate::{
    AblateArgs, ConfigArgs, EvaluateArgs, GenerateArgs, PrepareArgs, TrainArgs, EXIT_DATA,
    EXIT_DIVERGENCE, EXIT_USAGE,
};

/// Invalid option values detected by the command layer.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

/// Corpus or dictionary problems that are not a single library error.
#[derive(Debug)]
struct DataProblem(String);

impl fmt::Display for DataProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for DataProblem {}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return EXIT_USAGE;
        }
        if cause.is::<DataProblem>() || cause.is::<std::io::Error>() {
            return EXIT_DATA;
        }
        if let Some(e) = cause.downcast_ref::<brushgan::Error>() {
            use brushgan::Error as E;
            return match e {
                E::Divergence { .. } => EXIT_DIVERGENCE,
                E::Config(_) | E::Range { .. } => EXIT_USAGE,
                E::Tensor(_) | E::Shape(_) => 1,
                _ => EXIT_DATA,
            };
        }
    }
    1
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn data(msg: impl Into<String>) -> anyhow::Error {
    DataProblem(msg.into()).into()
}

fn char_list(chars: &BTreeSet<CharacterCode>) -> String {
    chars
        .iter()
        .map(|c| format!("{} (U+{})", c.as_char(), c.hex()))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Config file (or defaults), then `--set` pairs, then the dedicated flags.
pub fn build_config(args: &ConfigArgs) -> Result<TrainConfig> {
    let mut cfg = match &args.config {
        Some(path) => TrainConfig::load(path)
            .with_context(|| format!("reading config {}", path.display()))?,
        None => TrainConfig::default(),
    };
    for kv in &args.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(n) = args.styles_count {
        cfg.styles_count = n;
    }
    if let Some(mode) = &args.mode {
        cfg.style_mode = mode.parse()?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn open_corpus(root: &Path, cache: Option<&Path>) -> Result<Corpus> {
    let corpus =
        Corpus::open(root).with_context(|| format!("opening corpus {}", root.display()))?;
    Ok(match cache {
        Some(dir) => corpus.with_cache(dir),
        None => corpus,
    })
}

fn load_dictionary(path: &Path, vocab_size: u16) -> Result<ComponentDictionary> {
    ComponentDictionary::load_with_vocab(path, vocab_size)
        .with_context(|| format!("loading dictionary {}", path.display()))
}

fn policy(skip: bool) -> MissingPolicy {
    if skip {
        MissingPolicy::Skip
    } else {
        MissingPolicy::Abort
    }
}

/// Every sample's style must be representable by the model.
fn check_styles(samples: &[TrainingSample], cfg: &TrainConfig) -> Result<()> {
    if cfg.style_mode == StyleMode::Disabled {
        return Ok(());
    }
    if let Some(s) = samples.iter().find(|s| s.style.get() as usize > cfg.styles_count) {
        return Err(usage(format!(
            "corpus contains style {} but styles_count is {}",
            s.style.get(),
            cfg.styles_count
        )));
    }
    Ok(())
}

pub fn prepare(args: &PrepareArgs) -> Result<()> {
    let dict = load_dictionary(&args.dictionary, args.vocab_size)?;
    let corpus = open_corpus(&args.corpus, None)?;
    let chars = corpus.characters();
    let provider = corpus.source_provider();
    let mut missing = dict.coverage_report(&chars);
    let no_source: BTreeSet<CharacterCode> = chars
        .iter()
        .filter(|c| !provider.path_for(**c).is_file())
        .copied()
        .collect();
    if !args.skip_missing {
        if !missing.is_empty() {
            return Err(data(format!(
                "{} characters have no decomposition: {}",
                missing.len(),
                char_list(&missing)
            )));
        }
        if !no_source.is_empty() {
            return Err(data(format!(
                "{} characters have no source glyph: {}",
                no_source.len(),
                char_list(&no_source)
            )));
        }
    }
    missing.extend(no_source);
    let by_style: BTreeMap<StyleLabel, BTreeSet<CharacterCode>> = corpus
        .chars_by_style()
        .into_iter()
        .map(|(s, set)| (s, set.difference(&missing).copied().collect()))
        .collect();
    let split = split_dataset(&by_style, args.test_count, args.seed)?;
    let stats = corpus.statistics(&split);

    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("split.tsv"), split.to_manifest())?;
    std::fs::write(args.out.join("statistics.txt"), stats.format_table())?;
    if !missing.is_empty() {
        log::warn!("left out {} characters: {}", missing.len(), char_list(&missing));
    }
    if !args.no_cache {
        let n = corpus.write_cache(&args.out.join("cache"))?;
        log::info!("cached {n} normalized images");
    }
    print!("{}", stats.format_table());
    println!(
        "{} training and {} test characters, manifest {}",
        split.train_chars.len(),
        split.test_chars.len(),
        args.out.join("split.tsv").display()
    );
    Ok(())
}

fn load_partition(
    split: &DatasetSplit,
    partition: Partition,
    corpus: &Corpus,
    dict: &ComponentDictionary,
    skip: bool,
) -> Result<Vec<TrainingSample>> {
    let built = build_samples(split, partition, corpus, dict, policy(skip))?;
    Ok(built.samples)
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let mut cfg = build_config(&args.config)?;
    let resume = match &args.checkpoint {
        Some(p) => Some(Checkpoint::load(p).with_context(|| format!("loading {}", p.display()))?),
        None => None,
    };
    if let Some(ckpt) = &resume {
        // the architecture comes from the checkpoint; only the schedule may change
        ckpt.require_network(&cfg.network())?;
        cfg = TrainConfig {
            epochs: cfg.epochs,
            ..ckpt.train_config.clone()
        };
    }
    let dict = load_dictionary(&args.dictionary, cfg.vocab_size)?;
    let split = DatasetSplit::load(&args.split)
        .with_context(|| format!("reading split {}", args.split.display()))?;
    let corpus = open_corpus(&args.corpus, args.cache.as_deref())?;
    let mut samples = load_partition(&split, Partition::Train, &corpus, &dict, args.skip_missing)?;
    if let Some(style) = args.style {
        let label = StyleLabel::new(style, cfg.styles_count.max(1).max(style as usize))?;
        samples.retain(|s| s.style == label);
    }
    if samples.is_empty() {
        return Err(data("no training samples"));
    }
    check_styles(&samples, &cfg)?;
    let validation = if args.validate {
        let mut v = load_partition(&split, Partition::Test, &corpus, &dict, true)?;
        if let Some(style) = args.style {
            v.retain(|s| s.style.get() == style);
        }
        Some(v)
    } else {
        None
    };
    let mut trainer = match &resume {
        Some(ckpt) => Trainer::from_checkpoint(ckpt, Some(&cfg))?,
        None => Trainer::new(cfg.clone())?,
    };

    let out = RunOutput::new(&args.out)?;
    std::fs::write(args.out.join("config.toml"), cfg.to_toml())?;
    log::info!(
        "training on {} samples, {} epochs of batch {}",
        samples.len(),
        cfg.epochs,
        cfg.batch_size
    );
    let finished = trainer.train_for(&samples, Some(&out), validation.as_deref(), args.max_steps)?;
    let p = trainer.progress();
    if finished {
        println!("finished {} epochs ({} steps)", cfg.epochs, p.step);
    } else {
        println!(
            "stopped at step {} (epoch {}, batch {}); resume with --checkpoint {}",
            p.step,
            p.epoch,
            p.batch_index,
            out.last_checkpoint().display()
        );
    }
    Ok(())
}

pub fn generate(args: &GenerateArgs) -> Result<()> {
    let generator = load_generator(&args.checkpoint, None)
        .with_context(|| format!("loading {}", args.checkpoint.display()))?;
    let net = generator.config().clone();
    let style = StyleLabel::new(args.style, net.styles.max(1))?;
    let dict = load_dictionary(&args.dictionary, net.vocab_size)?;
    let provider = DirectoryGlyphProvider::new(args.corpus.join("source"));

    let mut wanted: Vec<CharacterCode> = Vec::new();
    for c in args.chars.chars().filter(|c| !c.is_whitespace()) {
        let c = CharacterCode::new(c);
        if !wanted.contains(&c) {
            wanted.push(c);
        }
    }
    if wanted.is_empty() {
        return Err(usage("--chars is empty"));
    }
    let mut ready = Vec::new();
    let mut problems = Vec::new();
    for &c in &wanted {
        let item = dict
            .decompose(c)
            .map_err(anyhow::Error::from)
            .and_then(|seq| Ok((c, render_source_glyph(c, &provider as &dyn GlyphProvider)?, seq)));
        match item {
            Ok(v) => ready.push(v),
            Err(e) => problems.push(format!("{} (U+{}): {e}", c.as_char(), c.hex())),
        }
    }
    if !problems.is_empty() {
        if !args.skip_missing || ready.is_empty() {
            return Err(data(format!("cannot generate:\n  {}", problems.join("\n  "))));
        }
        for p in &problems {
            log::warn!("skipping {p}");
        }
    }

    let items: Vec<_> = ready.iter().map(|(_, src, seq)| (src, style, *seq)).collect();
    let images = run_generator(&generator, &items, EVAL_BATCH)?;
    std::fs::create_dir_all(&args.out)?;
    for ((c, _, _), img) in ready.iter().zip(&images) {
        let path = args.out.join(format!("{}_{}.png", c.hex(), style.get()));
        img.save_png(&path)?;
        println!("{}", path.display());
    }
    Ok(())
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let generator = load_generator(&args.checkpoint, None)
        .with_context(|| format!("loading {}", args.checkpoint.display()))?;
    let net = generator.config().clone();
    let split = DatasetSplit::load(&args.test_manifest)
        .with_context(|| format!("reading {}", args.test_manifest.display()))?;
    let dict = load_dictionary(&args.dictionary, net.vocab_size)?;
    let missing = dict.coverage_report(&split.test_chars);
    if !missing.is_empty() {
        return Err(data(format!(
            "test characters without a decomposition: {}",
            char_list(&missing)
        )));
    }
    let corpus = open_corpus(&args.corpus, args.cache.as_deref())?;
    let built = build_samples(&split, Partition::Test, &corpus, &dict, MissingPolicy::Skip)?;
    for s in &built.skipped {
        log::warn!("excluded {}: {}", s.path.display(), s.reason);
    }
    // test characters were drawn from those present in every style
    let mut absent = 0;
    for (style, chars) in corpus.chars_by_style() {
        for c in split.test_chars.difference(&chars) {
            log::warn!("excluded {} (U+{}) in style {}: no image", c.as_char(), c.hex(), style.get());
            absent += 1;
        }
    }
    if built.samples.is_empty() {
        return Err(data("no test samples could be loaded"));
    }
    if net.style_mode != StyleMode::Disabled {
        if let Some(s) = built.samples.iter().find(|s| s.style.get() as usize > net.styles) {
            return Err(usage(format!(
                "test set contains style {} but the model has {} styles",
                s.style.get(),
                net.styles
            )));
        }
    }
    let mut report = score(&generator, &built.samples, EVAL_BATCH)?;
    report.excluded = built.skipped.len() + absent;
    print!("{}", report.format_table());
    println!("excluded {}", report.excluded);
    if let Some(out) = &args.out {
        std::fs::write(out, report.to_tsv())?;
    }
    Ok(())
}

pub fn ablate(args: &AblateArgs) -> Result<()> {
    let cfg = build_config(&args.config)?;
    let matrix = match &args.matrix {
        Some(p) => AblationConfig::parse_matrix(
            &std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        )?,
        None => AblationConfig::standard_matrix(),
    };
    for row in &matrix {
        TrainConfig {
            style_mode: row.style_mode,
            components_enabled: row.components_enabled,
            ..cfg.clone()
        }
        .validate()?;
    }
    let dict = load_dictionary(&args.dictionary, cfg.vocab_size)?;
    let split = DatasetSplit::load(&args.split)
        .with_context(|| format!("reading split {}", args.split.display()))?;
    let corpus = open_corpus(&args.corpus, args.cache.as_deref())?;
    let train = load_partition(&split, Partition::Train, &corpus, &dict, args.skip_missing)?;
    let test = load_partition(&split, Partition::Test, &corpus, &dict, args.skip_missing)?;
    if train.is_empty() || test.is_empty() {
        return Err(data("ablation needs both training and test samples"));
    }
    check_styles(&train, &cfg)?;
    check_styles(&test, &cfg)?;

    let report = run_ablation(&matrix, &cfg, &train, &test)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(&args.out, report.to_tsv())?;
    print!("{}", report.format_table());
    Ok(())
}
