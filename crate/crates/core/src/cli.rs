//! The `moral-lens` command line.
//!
//! Data goes to stdout (or `--out`); diagnostics go to stderr as
//! `error[<category>]: <message>`. Exit status is 0 on success, 1 for runtime
//! failures and 2 for usage or input errors.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::embedding::{
    load_dataset, read_embedding_file, read_manifest, DatasetManifest, EmbeddingHeader, Label, Split,
    EMBEDDING_HEADER_LEN, EMBEDDING_MAGIC,
};
use crate::error::{Error, Result};
use crate::head::{decode_checkpoint, read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC};
use crate::metrics::{render_f_table, EvaluationReport, TableRow, DEFAULT_ALPHA};
use crate::scorer::{
    aggregate_by_category_with, score, AggregateOptions, CategoryStatistic, ScoredRecord, SuperAggregation,
    Taxonomy, DEFAULT_THRESHOLD, FILTER_THRESHOLD,
};
use crate::trainer::{train, EncoderProfile, TrainConfig};
use crate::video::{score_timeline, TieRule, TimelineOptions, VideoTimeline, DEFAULT_VIDEO_THRESHOLD};

pub const SEED_ENV: &str = "MORAL_LENS_SEED";

#[derive(Debug, Parser)]
#[command(name = "moral-lens", version, about = "Train and apply a commonsense-immorality head on joint embeddings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a head on the train split and write a checkpoint.
    Train(TrainArgs),
    /// Score every row of an embedding file.
    Score(ScoreArgs),
    /// Evaluate a split and print metrics.
    Eval(EvalArgs),
    /// Score video frames and decide per clip.
    Video(VideoArgs),
    /// Summarize scored records by category keyword.
    Aggregate(AggregateArgs),
    /// Print the header of an embedding file or checkpoint.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// JSON-Lines manifest, one row per embedding row.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Embedding file (CLEM).
    #[arg(long)]
    pub embeddings: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    /// Threshold 0.5.
    Default,
    /// Threshold 0.9.
    Filter,
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    /// Decision threshold; `p >= threshold` is immoral.
    #[arg(long, conflicts_with = "preset")]
    pub threshold: Option<f64>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
}

impl ThresholdArgs {
    fn value(&self) -> f64 {
        match (self.threshold, self.preset) {
            (Some(t), _) => t,
            (None, Some(Preset::Filter)) => FILTER_THRESHOLD,
            _ => DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Encoder profile: vitb32, vitb16, vitl14 or custom.
    #[arg(long, default_value = "vitb32")]
    pub profile: String,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    /// Training report path; defaults to `<out>.report.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value_t = crate::trainer::DEFAULT_EPOCHS)]
    pub epochs: usize,
    #[arg(long, default_value_t = crate::trainer::DEFAULT_BATCH_SIZE)]
    pub batch_size: usize,
    /// Hidden width; defaults to the input width.
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long, default_value_t = crate::head::DEFAULT_DROPOUT)]
    pub dropout: f64,
    #[arg(long, default_value_t = crate::optim::DEFAULT_WEIGHT_DECAY)]
    pub weight_decay: f64,
    /// Learning rate (custom profile only).
    #[arg(long)]
    pub lr: Option<f64>,
    /// AdamW epsilon (custom profile only).
    #[arg(long)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub threshold: ThresholdArgs,
    /// Only score rows of this split.
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ReportFormat {
    Json,
    Table,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Checkpoint to score with (requires --embeddings).
    #[arg(long, requires = "embeddings", conflicts_with = "scores")]
    pub model: Option<PathBuf>,
    #[arg(long, requires = "model")]
    pub embeddings: Option<PathBuf>,
    /// Probabilities from an earlier `score` run, instead of a model.
    #[arg(long, required_unless_present = "model")]
    pub scores: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[command(flatten)]
    pub threshold: ThresholdArgs,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Dataset tag in the report; defaults to the manifest file stem.
    #[arg(long)]
    pub dataset: Option<String>,
    /// Contents column for table output.
    #[arg(long, default_value = "")]
    pub contents: String,
    #[arg(long, value_enum, default_value = "json")]
    pub format: ReportFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VideoArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = DEFAULT_VIDEO_THRESHOLD)]
    pub threshold: f64,
    /// Require mean > threshold instead of mean >= threshold.
    #[arg(long)]
    pub strict: bool,
    #[arg(long, default_value_t = crate::video::DEFAULT_WINDOW)]
    pub window: usize,
    #[arg(long, default_value_t = crate::video::DEFAULT_POLY_ORDER)]
    pub order: usize,
    /// JSON-Lines timelines, one clip per line.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write `clip_id,t,p_raw,p_smooth` rows for plotting.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StatisticArg {
    Mean,
    PositiveRate,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    /// Scored JSON-Lines from `score`.
    #[arg(long)]
    pub scores: PathBuf,
    /// JSON object mapping keyword to super-category; defaults to the
    /// built-in benchmark taxonomy.
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "mean")]
    pub statistic: StatisticArg,
    /// Pool records across keywords instead of averaging keyword means.
    #[arg(long)]
    pub pooled: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    pub path: PathBuf,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Train(args) => cmd_train(args),
        Command::Score(args) => cmd_score(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Video(args) => cmd_video(args),
        Command::Aggregate(args) => cmd_aggregate(args),
        Command::Inspect(args) => cmd_inspect(args),
    }
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => fs::write(path, bytes).map_err(|e| Error::write(path, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(bytes)
                .and_then(|_| stdout.flush())
                .map_err(|e| Error::write("<stdout>", e))
        }
    }
}

fn to_pretty_json<T: serde::Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn to_json_lines<T: serde::Serialize>(items: &[T]) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    for item in items {
        serde_json::to_writer(&mut bytes, item)?;
        bytes.push(b'\n');
    }
    Ok(bytes)
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let profile: EncoderProfile = args.profile.parse()?;
    if profile != EncoderProfile::Custom && (args.lr.is_some() || args.epsilon.is_some()) {
        return Err(Error::InvalidArgument(format!(
            "profile {profile} fixes lr and epsilon; use --profile custom to set them"
        )));
    }
    let manifest = read_manifest(&args.data.manifest)?;
    let dataset = load_dataset(&args.data.embeddings, &manifest)?;
    let records: Vec<_> = dataset
        .records
        .into_iter()
        .filter(|r| r.split == Split::Train)
        .collect();
    let data_dim = records
        .first()
        .map(|r| r.dim())
        .ok_or_else(|| Error::Empty("no records with split=train".into()))?;
    if let Some(d) = profile.dim() {
        if d != data_dim {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: data_dim,
            });
        }
    }

    let mut config = TrainConfig::for_profile(profile, Some(data_dim), args.seed)?;
    config.epochs = args.epochs;
    config.batch_size = args.batch_size;
    config.head.d_hidden = args.hidden.unwrap_or(config.head.d_in);
    config.head.dropout_p = args.dropout;
    config.optim.weight_decay = args.weight_decay;
    if let Some(lr) = args.lr {
        config.optim.lr = lr;
    }
    if let Some(eps) = args.epsilon {
        config.optim.epsilon = eps;
    }
    config.validate()?;

    let (head, report) = train(&records, &config)?;
    let checkpoint = Checkpoint::new(head, &config.checkpoint_metadata(records.len()))?;
    write_checkpoint(&checkpoint, &args.out)?;
    let report_path = args.report.unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".report.json");
        PathBuf::from(p)
    });
    emit(Some(&report_path), &to_pretty_json(&report)?)?;
    log::info!(
        "trained {} steps, final train accuracy {:.4}",
        report.steps,
        report.final_train_accuracy
    );
    Ok(())
}

fn cmd_score(args: ScoreArgs) -> Result<()> {
    let checkpoint = read_checkpoint(&args.model)?;
    let manifest = read_manifest(&args.data.manifest)?;
    let mut records = read_embedding_file(&args.data.embeddings, &manifest)?;
    if let Some(split) = &args.split {
        let split: Split = split.parse()?;
        records.retain(|r| r.split == split);
    }
    let scored = score(&checkpoint.head, &records, args.threshold.value())?;
    emit(args.out.as_deref(), &to_json_lines(&scored)?)
}

fn read_scores(path: &Path) -> Result<Vec<ScoredRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| Error::Manifest {
                line: i + 1,
                message: format!("{}: {e}", path.display()),
            })
        })
        .collect()
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}

fn labeled_split(manifest: &DatasetManifest, split: Split) -> Result<Vec<(String, Label)>> {
    use crate::embedding::LabelResolution;
    let mut out = Vec::new();
    for row in manifest.rows.iter().filter(|r| r.split == split) {
        match row.resolve_label()? {
            LabelResolution::Labeled(label) => out.push((row.id.clone(), label)),
            LabelResolution::Excluded => {}
            LabelResolution::Unlabeled => {
                return Err(Error::InvalidLabel(format!(
                    "record {:?} in split {split} has no label",
                    row.id
                )))
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Empty(format!("split {split}")));
    }
    Ok(out)
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let split: Split = args.split.parse()?;
    let threshold = args.threshold.value();
    let manifest = read_manifest(&args.manifest)?;
    let dataset_tag = args.dataset.clone().unwrap_or_else(|| file_stem(&args.manifest));

    let (probabilities, labels, profile) = if let (Some(model), Some(embeddings)) = (&args.model, &args.embeddings) {
        let checkpoint = read_checkpoint(model)?;
        let dataset = load_dataset(embeddings, &manifest)?;
        let mut probabilities = Vec::new();
        let mut labels = Vec::new();
        for r in dataset.records.iter().filter(|r| r.split == split) {
            let label = r.label.ok_or_else(|| {
                Error::InvalidLabel(format!("record {:?} in split {split} has no label", r.id))
            })?;
            probabilities.push(checkpoint.head.predict_proba(&r.vector)?);
            labels.push(label);
        }
        if labels.is_empty() {
            return Err(Error::Empty(format!("split {split}")));
        }
        let profile = checkpoint
            .metadata_json()?
            .get("profile")
            .and_then(|p| p.as_str())
            .unwrap_or("model")
            .to_string();
        (probabilities, labels, profile)
    } else {
        let scores_path = args.scores.as_ref().expect("clap requires --scores or --model");
        let scores: HashMap<String, f64> = read_scores(scores_path)?
            .into_iter()
            .map(|s| (s.id, s.probability))
            .collect();
        let mut probabilities = Vec::new();
        let mut labels = Vec::new();
        for (id, label) in labeled_split(&manifest, split)? {
            let p = scores
                .get(&id)
                .ok_or_else(|| Error::InvalidArgument(format!("no score for record {id:?}")))?;
            probabilities.push(*p);
            labels.push(label);
        }
        (probabilities, labels, "scores".to_string())
    };

    let report = EvaluationReport::compute(
        &dataset_tag,
        split.as_str(),
        &probabilities,
        &labels,
        threshold,
        args.alpha,
    )?;
    let bytes = match args.format {
        ReportFormat::Json => to_pretty_json(&report)?,
        ReportFormat::Table => render_f_table(
            &[TableRow {
                dataset: report.dataset.clone(),
                contents: args.contents.clone(),
                immoral_examples: report.positives,
                f_by_profile: vec![(profile, report.f_alpha)],
            }],
            report.alpha,
        )
        .into_bytes(),
    };
    emit(args.out.as_deref(), &bytes)
}

fn cmd_video(args: VideoArgs) -> Result<()> {
    let checkpoint = read_checkpoint(&args.model)?;
    let manifest = read_manifest(&args.data.manifest)?;
    let records = read_embedding_file(&args.data.embeddings, &manifest)?;
    let default_clip = file_stem(&args.data.embeddings);

    // Clips in order of first appearance.
    let mut clip_order: Vec<String> = Vec::new();
    let mut clips: HashMap<String, Vec<(Option<f64>, crate::embedding::EmbeddingRecord)>> = HashMap::new();
    for (row, record) in manifest.rows.iter().zip(records) {
        let clip = row.clip_id.clone().unwrap_or_else(|| default_clip.clone());
        if !clips.contains_key(&clip) {
            clip_order.push(clip.clone());
        }
        clips.entry(clip).or_default().push((row.timestamp, record));
    }

    let options = TimelineOptions {
        threshold: args.threshold,
        tie_rule: if args.strict { TieRule::Strict } else { TieRule::Inclusive },
        window: args.window,
        poly_order: args.order,
    };
    let mut timelines: Vec<VideoTimeline> = Vec::with_capacity(clip_order.len());
    for clip in &clip_order {
        let rows = clips.remove(clip).unwrap_or_default();
        let with_time = rows.iter().filter(|(t, _)| t.is_some()).count();
        if with_time != 0 && with_time != rows.len() {
            return Err(Error::InvalidArgument(format!(
                "clip {clip:?}: timestamps given for {with_time} of {} frames",
                rows.len()
            )));
        }
        // Without timestamps, frames are taken as sampled at 1 Hz from t=0.
        let frames: Vec<(f64, _)> = rows
            .into_iter()
            .enumerate()
            .map(|(i, (t, r))| (t.unwrap_or(i as f64), r))
            .collect();
        timelines.push(score_timeline(&checkpoint.head, clip, &frames, &options)?);
    }

    if let Some(csv_path) = &args.csv {
        let mut csv = String::from("clip_id,t,p_raw,p_smooth\n");
        for tl in &timelines {
            for s in &tl.samples {
                csv.push_str(&format!("{},{},{},{}\n", tl.clip_id, s.t, s.p_raw, s.p_smooth));
            }
        }
        emit(Some(csv_path), csv.as_bytes())?;
    }
    emit(args.out.as_deref(), &to_json_lines(&timelines)?)
}

fn cmd_aggregate(args: AggregateArgs) -> Result<()> {
    let scored = read_scores(&args.scores)?;
    let taxonomy = match &args.taxonomy {
        Some(path) => Taxonomy::from_json(&fs::read_to_string(path).map_err(|e| Error::read(path, e))?)?,
        None => Taxonomy::benchmark(),
    };
    let options = AggregateOptions {
        statistic: match args.statistic {
            StatisticArg::Mean => CategoryStatistic::MeanProbability,
            StatisticArg::PositiveRate => CategoryStatistic::PositiveRate,
        },
        aggregation: if args.pooled {
            SuperAggregation::Pooled
        } else {
            SuperAggregation::MeanOfKeywords
        },
    };
    let report = aggregate_by_category_with(&scored, &taxonomy, options)?;
    emit(args.out.as_deref(), &to_pretty_json(&report)?)
}

fn cmd_inspect(args: InspectArgs) -> Result<()> {
    let path = &args.path;
    let bytes = fs::read(path).map_err(|e| Error::read(path, e))?;
    let info = if bytes.starts_with(&EMBEDDING_MAGIC) {
        let header = EmbeddingHeader::parse(&bytes)?;
        let payload = header.payload_len().unwrap_or(u64::MAX);
        serde_json::json!({
            "format": "CLEM",
            "version": header.version,
            "dim": header.dim,
            "count": header.count,
            "payload_bytes": payload,
            "file_bytes": bytes.len(),
            "payload_complete": (bytes.len() - EMBEDDING_HEADER_LEN) as u64 == payload,
        })
    } else if bytes.starts_with(&CHECKPOINT_MAGIC) {
        let checkpoint = decode_checkpoint(&bytes)?;
        let config = checkpoint.head.config();
        serde_json::json!({
            "format": "CLMH",
            "version": bytes[4],
            "d_in": config.d_in,
            "d_hidden": config.d_hidden,
            "parameters": config.parameter_count(),
            "file_bytes": bytes.len(),
            "metadata": checkpoint.metadata_json()?,
        })
    } else {
        return Err(Error::BadMagic {
            expected: "CLEM or CLMH".into(),
            found: String::from_utf8_lossy(&bytes[..bytes.len().min(4)]).into_owned(),
        });
    };
    emit(None, &to_pretty_json(&info)?)
}
