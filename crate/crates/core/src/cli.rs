//! Command-line front end: one subcommand per pipeline stage.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::audio::{peak_normalize, read_wav, trim_silence, write_wav};
use crate::corpus::{load_manifest, save_manifest, speaker_disjoint_split, Manifest, Split, SplitFractions, UtteranceRecord};
use crate::dataset::{feature_path, load_clip, FeatureStore};
use crate::embeddings::{export_scatter, extract_embeddings, pca_fit, pca_project, EmbeddingSet, ScatterFormat};
use crate::error::{Error, Result};
use crate::eval::{base_model, evaluate, load_inputs, evaluate_loaded, EvalCrop, EvalReport};
use crate::features::{decode_sft1, write_sft1, FeatureKind, MelConfig, MelExtractor};
use crate::model::{Checkpoint, Dims};
use crate::par;
use crate::synthgen::{generate, generate_features, FeatureCorpusSpec, SynthSpec};
use crate::training::{train, TrainConfig, CHECKPOINT_FILE};

pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.toml";

#[derive(Debug, Parser)]
#[command(name = "accent", version, about = "Accent classification and embedding toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Peak-normalize and trim raw recordings into a cleaned copy.
    Ingest(IngestArgs),
    /// Assign speaker-disjoint train/dev/test splits.
    Split(SplitArgs),
    /// Write one SFT1 feature file per manifest record.
    Featurize(FeaturizeArgs),
    /// Train the GRU classifier on the train split, selecting on dev.
    Train(TrainArgs),
    /// Score a checkpoint (or a random base model) on one split.
    Eval(EvalArgs),
    /// Export per-utterance embeddings for one split.
    Embed(EmbedArgs),
    /// Fit a 2-D PCA on exported embeddings and write the projection.
    Pca(PcaArgs),
    /// Generate a synthetic labelled corpus.
    Synthgen(SynthgenArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Directory of raw WAV files (searched recursively).
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output directory for cleaned copies; mirrors the input layout.
    #[arg(long)]
    pub out: PathBuf,
    /// Labelled manifest for the raw files. Without it a skeleton listing
    /// only paths is written for the labels to be filled in.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value_t = -0.1, allow_hyphen_values = true)]
    pub target_dbfs: f64,
    #[arg(long, default_value_t = -40.0, allow_hyphen_values = true)]
    pub threshold_dbfs: f64,
    #[arg(long, default_value_t = 10.0)]
    pub frame_ms: f64,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.8)]
    pub train: f64,
    #[arg(long, default_value_t = 0.1)]
    pub dev: f64,
    #[arg(long, default_value_t = 0.1)]
    pub test: f64,
    /// Where to write the split manifest (default: overwrite the input).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    #[arg(long, default_value = "mel")]
    pub frontend: FeatureKind,
    #[arg(long)]
    pub in_manifest: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Source of precomputed SFT1 files for the external frontend.
    #[arg(long)]
    pub in_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// SFT1 features written by `featurize`; without it mel features are
    /// computed from the audio next to the manifest.
    #[arg(long)]
    pub features_dir: Option<PathBuf>,
    /// Flat TOML file with training options (and optionally manifest and
    /// features_dir). Command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub adam_epsilon: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub chunk_seconds: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, overrides_with = "no_batchnorm")]
    pub batchnorm: bool,
    #[arg(long, overrides_with = "batchnorm")]
    pub no_batchnorm: bool,
    #[arg(long)]
    pub frontend: Option<FeatureKind>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub clip_grad_norm: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, required_unless_present = "base_seed")]
    pub checkpoint: Option<PathBuf>,
    /// Score an untrained model drawn from this seed instead of a checkpoint.
    #[arg(long, conflicts_with = "checkpoint")]
    pub base_seed: Option<u64>,
    /// Base-model options.
    #[arg(long, default_value_t = crate::model::params::DEFAULT_HIDDEN)]
    pub hidden: usize,
    #[arg(long)]
    pub batchnorm: bool,
    #[arg(long, default_value = "mel")]
    pub frontend: FeatureKind,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: Split,
    #[arg(long)]
    pub features_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Score one random chunk per utterance instead of the full sequence.
    #[arg(long)]
    pub chunked_eval: bool,
    #[arg(long, default_value_t = 3.0)]
    pub chunk_seconds: f64,
    #[arg(long, default_value_t = 42)]
    pub chunk_seed: u64,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: Split,
    #[arg(long)]
    pub features_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PcaArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Also save the fitted mean, components and variances as JSON.
    #[arg(long)]
    pub model_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthgenArgs {
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, default_value_t = 10)]
    pub speakers: usize,
    #[arg(long, default_value_t = 10)]
    pub utts: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Emit precomputed feature files with imbalanced channel scales
    /// instead of audio.
    #[arg(long)]
    pub features: bool,
    #[arg(long, default_value_t = 16)]
    pub channels: usize,
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit status: 0 success, 1 bad input, 2 failure while running.
pub fn dispatch<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(status) => status,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

pub fn run(command: Command) -> Result<i32> {
    match command {
        Command::Ingest(a) => ingest(&a),
        Command::Split(a) => split(&a),
        Command::Featurize(a) => featurize(&a),
        Command::Train(a) => train_cmd(&a),
        Command::Eval(a) => eval_cmd(&a),
        Command::Embed(a) => embed_cmd(&a),
        Command::Pca(a) => pca_cmd(&a),
        Command::Synthgen(a) => synthgen_cmd(&a),
    }
}

fn manifest_root(manifest: &Path) -> PathBuf {
    manifest.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => std::fs::create_dir_all(p).map_err(|e| Error::io(p, e)),
        _ => Ok(()),
    }
}

fn wav_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).map_err(|e| Error::io(&d, e))? {
            let path = entry.map_err(|e| Error::io(&d, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")) {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

#[derive(Serialize)]
struct SkeletonRow<'a> {
    path: &'a str,
}

fn ingest(a: &IngestArgs) -> Result<i32> {
    let (paths, manifest): (Vec<String>, _) = match &a.manifest {
        Some(m) => {
            let manifest = load_manifest(m)?;
            let paths = manifest.records.iter().map(|r| r.path.clone()).collect();
            (paths, Some(manifest))
        }
        None => {
            let files = wav_files(&a.input)?;
            let rel = files
                .iter()
                .map(|f| f.strip_prefix(&a.input).expect("under input dir").to_string_lossy().replace('\\', "/"))
                .collect();
            (rel, None)
        }
    };
    let results = par::map(&paths, |rel| -> Result<()> {
        let clip = read_wav(&a.input.join(rel))?;
        let clean = trim_silence(&peak_normalize(&clip, a.target_dbfs)?, a.threshold_dbfs, a.frame_ms)?;
        let dst = a.out.join(rel);
        create_parent(&dst)?;
        write_wav(&dst, &clean)
    });
    let mut failed = 0;
    for (rel, r) in paths.iter().zip(results) {
        if let Err(e) = r {
            eprintln!("{rel}: {e}");
            failed += 1;
        }
    }
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    match manifest {
        Some(m) => save_manifest(&m, &a.out.join("manifest.jsonl"))?,
        None => {
            let mut text = String::new();
            for p in &paths {
                text.push_str(&serde_json::to_string(&SkeletonRow { path: p }).expect("serializes"));
                text.push('\n');
            }
            let dst = a.out.join("manifest.skeleton.jsonl");
            std::fs::write(&dst, text).map_err(|e| Error::io(&dst, e))?;
        }
    }
    println!("cleaned {} of {} files into {}", paths.len() - failed, paths.len(), a.out.display());
    Ok(if failed > 0 { 2 } else { 0 })
}

fn split(a: &SplitArgs) -> Result<i32> {
    let manifest = load_manifest(&a.manifest)?;
    let fractions = SplitFractions {
        train: a.train,
        dev: a.dev,
        test: a.test,
    };
    let out = speaker_disjoint_split(&manifest, fractions, a.seed)?;
    let dst = a.out.as_ref().unwrap_or(&a.manifest);
    save_manifest(&out, dst)?;
    for s in Split::ALL {
        println!("{}: {} utterances", s.as_str(), out.split_records(s).len());
    }
    Ok(0)
}

fn featurize(a: &FeaturizeArgs) -> Result<i32> {
    let manifest = load_manifest(&a.in_manifest)?;
    let root = manifest_root(&a.in_manifest);
    let records: Vec<&UtteranceRecord> = manifest.records.iter().collect();
    let results = match a.frontend {
        FeatureKind::Mel => {
            let mel = MelExtractor::new(MelConfig::default())?;
            par::map(&records, |r| -> Result<()> {
                let seq = mel.compute(&load_clip(&root.join(&r.path))?)?;
                let dst = feature_path(&a.out_dir, &r.path);
                create_parent(&dst)?;
                write_sft1(&dst, &seq)
            })
        }
        FeatureKind::External => {
            let src = a
                .in_dir
                .as_ref()
                .ok_or_else(|| Error::Argument("--in-dir is required for the external frontend".into()))?;
            par::map(&records, |r| -> Result<()> {
                let from = feature_path(src, &r.path);
                let bytes = std::fs::read(&from).map_err(|e| Error::io(&from, e))?;
                let seq = decode_sft1(&bytes, FeatureKind::External)?;
                let dst = feature_path(&a.out_dir, &r.path);
                create_parent(&dst)?;
                write_sft1(&dst, &seq)
            })
        }
    };
    let mut failed = 0;
    for (r, res) in records.iter().zip(results) {
        if let Err(e) = res {
            eprintln!("{}: {e}", r.path);
            failed += 1;
        }
    }
    println!("featurized {} of {} records", records.len() - failed, records.len());
    Ok(if failed > 0 { 2 } else { 0 })
}

/// Everything a training run needs, after merging flags, file and defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub features_dir: Option<PathBuf>,
    pub train: TrainConfig,
}

impl RunConfig {
    /// Flat TOML: the toolkit version, the data paths, then every training option.
    pub fn to_toml(&self) -> String {
        let mut table = toml::Table::new();
        table.insert("toolkit_version".into(), crate::VERSION.into());
        table.insert("manifest".into(), self.manifest.display().to_string().into());
        if let Some(d) = &self.features_dir {
            table.insert("features_dir".into(), d.display().to_string().into());
        }
        let train = toml::Table::try_from(&self.train).expect("config serializes");
        table.extend(train);
        toml::to_string(&table).expect("table serializes")
    }
}

fn resolve_run_config(a: &TrainArgs) -> Result<RunConfig> {
    let mut table = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            text.parse::<toml::Table>()
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    table.remove("toolkit_version");
    let path_key = |table: &mut toml::Table, key: &str| -> Result<Option<PathBuf>> {
        match table.remove(key) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(PathBuf::from(s))),
            Some(_) => Err(Error::Config(format!("{key} must be a string"))),
        }
    };
    let file_manifest = path_key(&mut table, "manifest")?;
    let file_features = path_key(&mut table, "features_dir")?;
    let mut train: TrainConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e| Error::Config(format!("training config: {e}")))?;

    macro_rules! flag {
        ($($field:ident),*) => {
            $(if let Some(v) = a.$field { train.$field = v; })*
        };
    }
    flag!(batch_size, lr, beta1, beta2, adam_epsilon, epochs, chunk_seconds, seed, frontend, hidden);
    if a.clip_grad_norm.is_some() {
        train.clip_grad_norm = a.clip_grad_norm;
    }
    if a.batchnorm {
        train.use_batchnorm = true;
    }
    if a.no_batchnorm {
        train.use_batchnorm = false;
    }
    train.validate()?;
    let manifest = a
        .manifest
        .clone()
        .or(file_manifest)
        .ok_or_else(|| Error::Argument("no manifest given (flag or config file)".into()))?;
    Ok(RunConfig {
        manifest,
        features_dir: a.features_dir.clone().or(file_features),
        train,
    })
}

fn store_for(manifest: &Path, features_dir: Option<&Path>, frontend: FeatureKind) -> Result<FeatureStore> {
    match (features_dir, frontend) {
        (Some(d), kind) => Ok(FeatureStore::sft1(d, kind)),
        (None, FeatureKind::Mel) => FeatureStore::audio(manifest_root(manifest)),
        (None, FeatureKind::External) => Err(Error::Argument(
            "--features-dir is required for the external frontend".into(),
        )),
    }
}

fn train_cmd(a: &TrainArgs) -> Result<i32> {
    let run = resolve_run_config(a)?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    let cfg_path = a.out_dir.join(RESOLVED_CONFIG_FILE);
    std::fs::write(&cfg_path, run.to_toml()).map_err(|e| Error::io(&cfg_path, e))?;

    let manifest = load_manifest(&run.manifest)?;
    manifest.check_speaker_disjoint()?;
    let store = store_for(&run.manifest, run.features_dir.as_deref(), run.train.frontend)?;
    let tr = store.examples(&manifest.split_records(Split::Train), &manifest.class_set)?;
    let dev = store.examples(&manifest.split_records(Split::Dev), &manifest.class_set)?;
    if tr.is_empty() || dev.is_empty() {
        return Err(Error::Argument(
            "manifest has no train or dev records; run `split` first".into(),
        ));
    }
    let outcome = train(&tr, &dev, &manifest.class_set, &run.train, Some(&a.out_dir))?;
    for e in &outcome.log {
        println!(
            "epoch {:>3}  train_loss {:.6}  dev_loss {:.6}  dev_acc {:.4}",
            e.epoch, e.train_loss, e.dev_loss, e.dev_accuracy
        );
    }
    println!(
        "best epoch {} saved to {}",
        outcome.best_epoch,
        a.out_dir.join(CHECKPOINT_FILE).display()
    );
    Ok(0)
}

fn split_of(manifest: &Manifest, split: Split) -> Result<Vec<&UtteranceRecord>> {
    let records = manifest.split_records(split);
    if records.is_empty() {
        return Err(Error::Argument(format!("no records in split {}", split.as_str())));
    }
    Ok(records)
}

fn eval_cmd(a: &EvalArgs) -> Result<i32> {
    let manifest = load_manifest(&a.manifest)?;
    let records = split_of(&manifest, a.split)?;
    let crop = if a.chunked_eval {
        EvalCrop::Chunked {
            seconds: a.chunk_seconds,
            seed: a.chunk_seed,
        }
    } else {
        EvalCrop::Full
    };
    let report = match (&a.checkpoint, a.base_seed) {
        (Some(path), _) => {
            let ckpt = Checkpoint::load(path)?;
            let store = store_for(&a.manifest, a.features_dir.as_deref(), ckpt.meta.frontend)?;
            evaluate(&ckpt, &records, &manifest.class_set, &store, crop)?
        }
        (None, Some(seed)) => {
            let store = store_for(&a.manifest, a.features_dir.as_deref(), a.frontend)?;
            let inputs = load_inputs(&records, &manifest.class_set, &store, crop)?;
            let n_channels = inputs
                .iter()
                .find_map(|r| r.as_ref().ok().map(|(_, s)| s.n_channels))
                .ok_or_else(|| Error::Argument("no record could be loaded".into()))?;
            let dims = Dims {
                n_channels,
                hidden: a.hidden,
                n_classes: manifest.class_set.len(),
            };
            let ckpt = base_model(seed, dims, a.batchnorm, &manifest.class_set, a.frontend)?;
            evaluate_loaded(&ckpt, &records, &manifest.class_set, &inputs)?
        }
        (None, None) => return Err(Error::Argument("--checkpoint or --base-seed is required".into())),
    };
    create_parent(&a.out)?;
    report.save(&a.out)?;
    print_report(&report);
    Ok(if report.failures.is_empty() { 0 } else { 2 })
}

fn print_report(r: &EvalReport) {
    println!("accuracy {:.4}  f1_macro {:.4}  n = {}", r.accuracy, r.f1_macro, r.n_samples);
    for (accent, f1) in &r.per_class_f1 {
        println!("  {:<12} f1 {:.4}", accent.as_str(), f1);
    }
    for f in &r.failures {
        eprintln!("failed: {}: {}", f.path, f.error);
    }
}

fn embed_cmd(a: &EmbedArgs) -> Result<i32> {
    let manifest = load_manifest(&a.manifest)?;
    let records = split_of(&manifest, a.split)?;
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    if ckpt.meta.class_set != manifest.class_set {
        return Err(Error::Argument("checkpoint classes differ from manifest classes".into()));
    }
    let store = store_for(&a.manifest, a.features_dir.as_deref(), ckpt.meta.frontend)?;
    let (set, failures) = extract_embeddings(&ckpt, &records, &manifest.class_set, &store)?;
    create_parent(&a.out)?;
    set.save(&a.out)?;
    for f in &failures {
        eprintln!("failed: {}: {}", f.path, f.error);
    }
    println!("{} embeddings of width {} written to {}", set.rows.len(), set.m, a.out.display());
    Ok(if failures.is_empty() { 0 } else { 2 })
}

fn pca_cmd(a: &PcaArgs) -> Result<i32> {
    let set = EmbeddingSet::load(&a.input)?;
    let model = pca_fit(&set, 2)?;
    if model.rank_deficient {
        eprintln!("warning: embeddings span fewer than 2 dimensions; padding with zero-variance axes");
    }
    let rows = pca_project(&model, &set)?;
    create_parent(&a.out)?;
    export_scatter(&rows, &a.out, ScatterFormat::Csv)?;
    if let Some(svg) = &a.svg {
        create_parent(svg)?;
        export_scatter(&rows, svg, ScatterFormat::Svg)?;
    }
    if let Some(path) = &a.model_out {
        create_parent(path)?;
        let json = serde_json::to_string_pretty(&model).expect("model serializes");
        std::fs::write(path, json).map_err(|e| Error::io(path, e))?;
    }
    println!(
        "explained variance {:.6} / {:.6}",
        model.explained_variance[0], model.explained_variance[1]
    );
    Ok(0)
}

fn synthgen_cmd(a: &SynthgenArgs) -> Result<i32> {
    let manifest = if a.features {
        let spec = FeatureCorpusSpec {
            n_classes: a.classes,
            speakers_per_class: a.speakers,
            utterances_per_speaker: a.utts,
            n_channels: a.channels,
            seed: a.seed,
            ..FeatureCorpusSpec::default()
        };
        generate_features(&spec, &a.out)?
    } else {
        if a.classes > crate::synthgen::default_signatures().len() {
            return Err(Error::Argument(format!("at most {} classes", crate::synthgen::default_signatures().len())));
        }
        generate(&SynthSpec::new(a.classes, a.speakers, a.utts, a.seed), &a.out)?
    };
    println!("{} utterances written to {}", manifest.len(), a.out.display());
    Ok(0)
}
