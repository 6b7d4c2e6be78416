use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context as _, Result};
use rawcnn::corpus::{self, CorpusSpec, Dataset};
use rawcnn::decoder::{decode_posteriors, estimate_priors};
use rawcnn::eval::{corpus_edit_counts, frame_accuracy, EditCounts};
use rawcnn::features::cepstral_features;
use rawcnn::net::{grid_search as run_grid, output_shape, param_count, sgd_train_with, CountConvention, Grid};
use rawcnn::tensor::TensorArchive;
use rawcnn::{CepstralConfig, ClassPriors, HmmTopology, InputSpec, Network, NetworkConfig, PhoneSequence, ScoreReport};

pub const SPLITS: [&str; 3] = ["train", "valid", "test"];
pub const CHECKPOINT: &str = "model.ckpt";
pub const TRAIN_LOG: &str = "train.log";
pub const PRIORS: &str = "priors.txt";
pub const POSTERIORS: &str = "posteriors.bin";
pub const DECODED: &str = "decoded.txt";

pub struct Context {
    pub seed: Option<u64>,
    pub quiet: bool,
}

impl Context {
    fn progress(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureMode {
    Raw,
    Cepstral,
}

/// What one training run consumes and produces.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub data: PathBuf,
    pub mode: FeatureMode,
    pub config: NetworkConfig,
    pub out: PathBuf,
}

impl ExperimentSpec {
    /// Raw input needs at least one filter stage; cepstral input feeds the
    /// classifier directly.
    pub fn new(data: &Path, config: NetworkConfig, out: &Path) -> Result<Self> {
        let mode = match config.input {
            InputSpec::Raw { .. } => FeatureMode::Raw,
            InputSpec::Cepstral { .. } => FeatureMode::Cepstral,
        };
        match mode {
            FeatureMode::Raw => ensure!(!config.stages.is_empty(), "raw input needs at least one filter stage"),
            FeatureMode::Cepstral => ensure!(config.stages.is_empty(), "cepstral input takes no filter stages"),
        }
        Ok(Self { data: data.to_path_buf(), mode, config, out: out.to_path_buf() })
    }
}

pub struct GenDataArgs {
    pub classes: usize,
    pub utts: usize,
    pub noise: f64,
    pub min_frames: usize,
    pub max_frames: usize,
    pub rate: u32,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn load_split(data: &Path, split: &str) -> Result<Dataset> {
    let path = data.join(format!("{split}.bin"));
    Dataset::load(&path).with_context(|| format!("reading {}", path.display()))
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<NetworkConfig> {
    let mut cfg = NetworkConfig::load(path).with_context(|| format!("reading {}", path.display()))?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

pub fn gen_data(ctx: &Context, args: &GenDataArgs, out: &Path) -> Result<()> {
    ensure!(args.classes >= 2, "a corpus needs at least 2 classes");
    let models = corpus::default_phone_models(args.classes, args.noise);
    let spec = CorpusSpec {
        num_utts: args.utts,
        min_frames: args.min_frames,
        max_frames: args.max_frames,
        rate: args.rate,
        seed: ctx.seed.unwrap_or(0),
    };
    let corpus = corpus::generate_corpus(&models, &spec)?;
    create_dir(out)?;
    for (split, data) in SPLITS.iter().zip([corpus.train(), corpus.valid(), corpus.test()]) {
        data.save(out.join(format!("{split}.bin")))?;
        ctx.progress(format!("{split}: {} utterances, {} frames", data.utterances.len(), data.num_frames()));
    }
    fs::write(out.join("manifest.txt"), corpus.manifest.to_text())?;
    let mut meta = format!(
        "classes = {}\nutts = {}\nnoise = {:?}\nmin_frames = {}\nmax_frames = {}\nrate = {}\nseed = {}\n",
        args.classes, args.utts, args.noise, args.min_frames, args.max_frames, args.rate, spec.seed
    );
    for (c, m) in models.iter().enumerate() {
        let partials: Vec<String> = m.partials.iter().map(|(f, a)| format!("{f:?}:{a:?}")).collect();
        let _ = writeln!(meta, "class{c} = {} frames {}..={}", partials.join(" "), m.min_frames, m.max_frames);
    }
    fs::write(out.join("corpus.txt"), meta)?;
    Ok(())
}

pub fn extract_features(ctx: &Context, data: &Path, context: usize, out: &Path) -> Result<()> {
    let cfg = CepstralConfig { stack_context: context, ..CepstralConfig::default() };
    create_dir(out)?;
    for split in SPLITS {
        let dataset = load_split(data, split)?;
        let mut archive = TensorArchive::new();
        for u in &dataset.utterances {
            let feats = cepstral_features(&u.stream, &cfg).with_context(|| format!("utterance {}", u.id))?;
            archive.push(u.id.clone(), feats.frames);
        }
        archive.save(out.join(format!("{split}.feat")))?;
        ctx.progress(format!("{split}: {} utterances, dim {}", dataset.utterances.len(), cfg.output_dim()));
    }
    Ok(())
}

pub fn train(ctx: &Context, config: &Path, data: &Path, out: &Path) -> Result<()> {
    let spec = ExperimentSpec::new(data, load_config(config, ctx.seed)?, out)?;
    let cfg = &spec.config;
    cfg.validate()?;
    let train_set = load_split(&spec.data, "train")?;
    let valid_set = load_split(&spec.data, "valid")?;
    ensure!(
        train_set.num_classes == cfg.classifier.num_classes,
        "corpus has {} classes, config has {}",
        train_set.num_classes,
        cfg.classifier.num_classes
    );
    let train_ex = corpus::dataset_examples(cfg, &train_set)?;
    let valid_ex = corpus::dataset_examples(cfg, &valid_set)?;
    ctx.progress(format!(
        "{:?} input: training on {} frames, validating on {}",
        spec.mode,
        train_ex.len(),
        valid_ex.len()
    ));
    let (net, log) = sgd_train_with(cfg, &train_ex, &valid_ex, |e| {
        ctx.progress(format!("epoch {} loglik {:.6} valid {:.4}", e.epoch, e.mean_loglik, e.valid_accuracy))
    })?;
    ctx.progress(format!("best epoch {} valid {:.4}", log.best_epoch, log.best_accuracy));
    let priors = estimate_priors(train_set.labelings(), cfg.classifier.num_classes)?;
    create_dir(&spec.out)?;
    net.save(spec.out.join(CHECKPOINT))?;
    fs::write(spec.out.join(TRAIN_LOG), log.to_string())?;
    fs::write(spec.out.join(PRIORS), priors.to_text())?;
    cfg.save(spec.out.join("config.cfg"))?;
    Ok(())
}

pub fn decode(ctx: &Context, model: &Path, data: &Path, split: &str, uniform: bool, out: &Path) -> Result<()> {
    let net = Network::load(model.join(CHECKPOINT))?;
    let k = net.num_classes();
    let priors =
        if uniform { ClassPriors::uniform(k) } else { ClassPriors::parse(&fs::read_to_string(model.join(PRIORS))?)? };
    let dataset = load_split(data, split)?;
    let topo = HmmTopology::new(k);
    let mut archive = TensorArchive::new();
    let mut lines = String::new();
    for u in &dataset.utterances {
        let inputs = corpus::utterance_inputs(&net.config, u)?;
        let post = net.posteriors(&inputs)?;
        let decoding = decode_posteriors(&post, &priors, &topo).with_context(|| format!("utterance {}", u.id))?;
        let _ = writeln!(lines, "{} {}", u.id, decoding.sequence);
        archive.push(u.id.clone(), post.probs);
    }
    create_dir(out)?;
    archive.save(out.join(POSTERIORS))?;
    fs::write(out.join(DECODED), lines)?;
    ctx.progress(format!("decoded {} utterances", dataset.utterances.len()));
    Ok(())
}

/// `id -> sequence` lines as written by `decode`.
pub fn read_decoded(path: &Path) -> Result<Vec<(String, PhoneSequence)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            let (id, rest) = line.split_once(' ').with_context(|| format!("{}:{}: no id", path.display(), i + 1))?;
            let seq = PhoneSequence::parse(rest).with_context(|| format!("{}:{}", path.display(), i + 1))?;
            Ok((id.to_string(), seq))
        })
        .collect()
}

pub fn evaluate(model: &Path, data: &Path, decoded: &Path, split: &str, out: &Path) -> Result<()> {
    let net = Network::load(model.join(CHECKPOINT))?;
    let cfg = &net.config;
    let dataset = load_split(data, split)?;
    let posteriors = TensorArchive::load(decoded.join(POSTERIORS))?;
    let hyps = read_decoded(&decoded.join(DECODED))?;

    let (mut predicted, mut reference) = (Vec::new(), Vec::new());
    let mut pairs = Vec::new();
    for u in &dataset.utterances {
        let post = posteriors.get(&u.id).with_context(|| format!("no posteriors for {}", u.id))?;
        ensure!(
            post.frames() == u.num_frames(),
            "{}: {} posterior frames, {} labels",
            u.id,
            post.frames(),
            u.num_frames()
        );
        predicted.extend(post.argmax_rows());
        reference.extend_from_slice(&u.labeling.labels);
        let Some((_, hyp)) = hyps.iter().find(|(id, _)| id == &u.id) else { bail!("no decoding for {}", u.id) };
        pairs.push((hyp.phones.as_slice(), u.reference.phones.as_slice()));
    }
    let edits: EditCounts = corpus_edit_counts(pairs)?;
    let report = ScoreReport {
        features: match cfg.input {
            InputSpec::Raw { .. } => "raw".into(),
            InputSpec::Cepstral { .. } => "MFCC".into(),
        },
        conv_layers: cfg.stages.len(),
        classifier: cfg.classifier.kind.as_str().to_uppercase(),
        params: param_count(cfg)?,
        frame_accuracy: frame_accuracy(&predicted, &reference)?,
        edits,
    };
    create_dir(out)?;
    fs::write(out.join("report.txt"), format!("{report}\n"))?;
    fs::write(out.join("report.kv"), report.to_key_values())?;
    println!("{report}");
    Ok(())
}

pub fn grid_search(ctx: &Context, config: &Path, data: &Path, out: &Path) -> Result<()> {
    let text = fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let mut grid = Grid::parse(&text)?;
    if let Some(seed) = ctx.seed {
        grid.base.seed = seed;
    }
    for note in grid.out_of_range() {
        ctx.progress(format!("note: {note}"));
    }
    let train_set = load_split(data, "train")?;
    let valid_set = load_split(data, "valid")?;
    let candidates = grid.expand();
    ctx.progress(format!("{} candidates", candidates.len()));
    let report = run_grid(&candidates, |cfg| {
        ctx.progress(format!("training {} stages", cfg.stages.len()));
        Ok((corpus::dataset_examples(cfg, &train_set)?, corpus::dataset_examples(cfg, &valid_set)?))
    })?;
    create_dir(out)?;
    fs::write(out.join("grid.txt"), report.to_string())?;
    report.best_config().save(out.join("best.cfg"))?;
    print!("{report}");
    Ok(())
}

pub fn count_params(config: &Path) -> Result<()> {
    let cfg = load_config(config, None)?;
    let p = param_count(&cfg)?;
    use CountConvention::{WeightsOnly, WithBiases};
    println!("conv_layers = {}", cfg.stages.len());
    println!("conv_weights = {}", p.conv(WeightsOnly));
    println!("conv_with_biases = {}", p.conv(WithBiases));
    println!("classifier = {}", cfg.classifier.kind.as_str());
    println!("classifier_weights = {}", p.classifier(WeightsOnly));
    println!("classifier_with_biases = {}", p.classifier(WithBiases));
    println!("total_weights = {}", p.total(WeightsOnly));
    println!("total_with_biases = {}", p.total(WithBiases));
    Ok(())
}

pub fn shape(config: &Path) -> Result<()> {
    let cfg = load_config(config, None)?;
    println!("{}", output_shape(&cfg)?);
    Ok(())
}
