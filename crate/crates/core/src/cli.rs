//! `tubekit` subcommands. Every stage reads its inputs from the corpus root
//! and the work directory, writes its outputs atomically, and records a
//! `<stage>.manifest.json` that `tubekit replay` can re-run.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::classifier::{train_all, TrainConfig};
use crate::corpus::{self, write_atomic, MODELS_FILE, TUBES_FILE};
use crate::error::Error;
use crate::linker::LinkConfig;
use crate::pipeline::{self, EvalConfig};
use crate::synth::{self, SynthConfig};

pub const RETAINED_FILE: &str = "retained.tsv";
pub const SALIENCY_REPORT_FILE: &str = "saliency_report.tsv";
pub const TRAIN_REPORT_FILE: &str = "train_report.tsv";
pub const SCORES_FILE: &str = "scores.tsv";
pub const LABELS_FILE: &str = "labels.tsv";
pub const METRICS_FILE: &str = "metrics.tsv";
pub const CONFUSION_FILE: &str = "confusion.tsv";
pub const PR_POINTS_FILE: &str = "pr_points.tsv";
pub const ROC_POINTS_FILE: &str = "roc_points.tsv";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "tubekit", version, about = "Action tube detection toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus.
    Synth(SynthArgs),
    /// Drop proposals with low motion saliency.
    Filter(FilterArgs),
    /// Train one linear SVM per action.
    Train(TrainArgs),
    /// Score every proposal under every action model.
    Score(StageArgs),
    /// Link retained proposals into action tubes.
    Link(LinkArgs),
    /// Label each video with the action of its best tube.
    Classify(StageArgs),
    /// Compute frame-AP, video-AP, AUC and classification accuracy.
    Eval(EvalArgs),
    /// Re-run a stage from its manifest.
    Replay {
        manifest: PathBuf,
    },
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct StageArgs {
    /// Corpus root directory.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Directory for stage artifacts (defaults to the corpus root).
    #[arg(long)]
    pub work: Option<PathBuf>,
}

impl StageArgs {
    fn work_dir(&self) -> &Path {
        self.work.as_deref().unwrap_or(&self.corpus)
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 40)]
    pub num_videos: usize,
    #[arg(long, default_value_t = 20)]
    pub frames: usize,
    #[arg(long, default_value_t = 4)]
    pub num_actions: usize,
    #[arg(long, default_value_t = 12)]
    pub proposals_per_frame: usize,
    #[arg(long, default_value_t = 8)]
    pub feature_dim_s: usize,
    #[arg(long, default_value_t = 8)]
    pub feature_dim_m: usize,
    #[arg(long, default_value_t = 8.0)]
    pub class_separation: f64,
    #[arg(long, default_value_t = 1.0)]
    pub actor_flow: f64,
    #[arg(long, default_value_t = 0.05)]
    pub background_flow: f64,
    #[arg(long, default_value_t = 0.25)]
    pub jitter: f64,
    #[arg(long, default_value_t = 96)]
    pub width: u32,
    #[arg(long, default_value_t = 72)]
    pub height: u32,
}

impl SynthArgs {
    pub fn config(&self) -> SynthConfig {
        SynthConfig {
            num_videos: self.num_videos,
            frames_per_video: self.frames,
            num_actions: self.num_actions,
            proposals_per_frame: self.proposals_per_frame,
            feature_dim_s: self.feature_dim_s,
            feature_dim_m: self.feature_dim_m,
            class_separation: self.class_separation,
            actor_flow: self.actor_flow,
            background_flow: self.background_flow,
            jitter: self.jitter,
            frame_width: self.width,
            frame_height: self.height,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct FilterArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub stage: StageArgs,
    #[arg(long, default_value_t = 0.3)]
    pub alpha: f64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub stage: StageArgs,
    #[arg(long, default_value_t = 0.3)]
    pub neg_overlap: f64,
    #[arg(long = "c", default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, default_value_t = 5)]
    pub hnm_rounds: usize,
    #[arg(long, default_value_t = 10)]
    pub initial_neg_per_pos: usize,
    #[arg(long, default_value_t = 10_000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl TrainArgs {
    pub fn config(&self) -> TrainConfig {
        TrainConfig {
            neg_overlap: self.neg_overlap,
            c: self.c,
            hnm_rounds: self.hnm_rounds,
            initial_neg_per_pos: self.initial_neg_per_pos,
            seed: self.seed,
            max_iter: self.max_iter,
            tol: self.tol,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct LinkArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub stage: StageArgs,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 3)]
    pub max_tubes: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub stage: StageArgs,
    /// Overlap threshold; repeat for several.
    #[arg(long, default_values_t = vec![0.5])]
    pub sigma: Vec<f64>,
    #[arg(long, default_value_t = 3)]
    pub topk: usize,
    #[arg(long, default_value_t = 0.6)]
    pub fpr_max: f64,
    /// Also dump PR and ROC points for plotting.
    #[arg(long)]
    pub dump_curves: bool,
}

/// A failed stage, rendered as one tab-separated line.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub file: Option<PathBuf>,
    pub reason: String,
    pub exit_code: i32,
}

impl StageError {
    fn data(stage: &'static str, err: Error) -> Self {
        Self {
            stage,
            file: err.path().map(Path::to_path_buf),
            reason: err.to_string(),
            exit_code: EXIT_DATA,
        }
    }

    fn missing(stage: &'static str, file: PathBuf, producer: &str) -> Self {
        Self {
            stage,
            reason: format!("{} not found; run `{producer}` first", file.display()),
            file: Some(file),
            exit_code: EXIT_DATA,
        }
    }

    pub fn render(&self) -> String {
        let clean = |s: &str| s.replace(['\t', '\n', '\r'], " ");
        let file = self.file.as_ref().map_or("-".to_string(), |p| clean(&p.display().to_string()));
        format!("error\tstage={}\tfile={}\treason={}", self.stage, file, clean(&self.reason))
    }
}

type StageResult<T = ()> = std::result::Result<T, StageError>;

trait Context<T> {
    fn stage(self, stage: &'static str) -> StageResult<T>;
}

impl<T> Context<T> for crate::Result<T> {
    fn stage(self, stage: &'static str) -> StageResult<T> {
        self.map_err(|e| StageError::data(stage, e))
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    /// Command line after the program name, enough to replay the run.
    pub args: Vec<String>,
    pub corpus: PathBuf,
    pub seed: Option<u64>,
    pub flags: serde_json::Value,
}

fn write_manifest(
    dir: &Path,
    subcommand: &'static str,
    args: &[String],
    corpus: &Path,
    seed: Option<u64>,
    flags: serde_json::Value,
) -> StageResult {
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        subcommand: subcommand.to_string(),
        args: args.to_vec(),
        corpus: corpus.to_path_buf(),
        seed,
        flags,
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    write_atomic(&dir.join(format!("{subcommand}.manifest.json")), text.as_bytes()).stage(subcommand)
}

fn flags_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("flags serialize")
}

fn require(stage: &'static str, path: PathBuf, producer: &str) -> StageResult<PathBuf> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(StageError::missing(stage, path, producer))
    }
}

fn write(stage: &'static str, path: &Path, text: &str) -> StageResult {
    write_atomic(path, text.as_bytes()).stage(stage)
}

fn run_synth(a: &SynthArgs, argv: &[String]) -> StageResult {
    synth::generate(&a.config(), &a.out).stage("synth")?;
    write_manifest(&a.out, "synth", argv, &a.out, Some(a.seed), flags_json(a))
}

fn run_filter(a: &FilterArgs, argv: &[String]) -> StageResult {
    const S: &str = "filter";
    let corpus = corpus::load_corpus(&a.stage.corpus).stage(S)?;
    let (retained, report) = pipeline::filter_corpus(&corpus, a.alpha).stage(S)?;
    let work = a.stage.work_dir();
    corpus::write_proposals(&retained, &work.join(RETAINED_FILE)).stage(S)?;
    write(S, &work.join(SALIENCY_REPORT_FILE), &pipeline::format_saliency_report(&report))?;
    write_manifest(work, S, argv, &a.stage.corpus, None, flags_json(a))
}

fn run_train(a: &TrainArgs, argv: &[String]) -> StageResult {
    const S: &str = "train";
    let corpus = corpus::load_corpus(&a.stage.corpus).stage(S)?;
    let trained = train_all(&corpus, &a.config()).stage(S)?;
    let models: Vec<_> = trained.iter().map(|(m, _)| m.clone()).collect();
    let work = a.stage.work_dir();
    corpus::write_models(&models, &work.join(MODELS_FILE)).stage(S)?;
    write(S, &work.join(TRAIN_REPORT_FILE), &pipeline::format_train_report(&trained))?;
    write_manifest(work, S, argv, &a.stage.corpus, Some(a.seed), flags_json(a))
}

fn run_score(a: &StageArgs, argv: &[String]) -> StageResult {
    const S: &str = "score";
    let work = a.work_dir();
    let models_path = require(S, work.join(MODELS_FILE), "train")?;
    let corpus = corpus::load_corpus(&a.corpus).stage(S)?;
    let models = corpus::read_models(&models_path).stage(S)?;
    let rows = pipeline::score_corpus(&corpus, &models).stage(S)?;
    write(S, &work.join(SCORES_FILE), &pipeline::format_scores(&rows))?;
    write_manifest(work, S, argv, &a.corpus, None, flags_json(a))
}

fn run_link(a: &LinkArgs, argv: &[String]) -> StageResult {
    const S: &str = "link";
    let work = a.stage.work_dir();
    let models_path = require(S, work.join(MODELS_FILE), "train")?;
    let retained_path = require(S, work.join(RETAINED_FILE), "filter")?;
    let corpus = corpus::load_corpus(&a.stage.corpus).stage(S)?;
    let models = corpus::read_models(&models_path).stage(S)?;
    let retained = corpus::read_proposals(&retained_path).stage(S)?;
    let config = LinkConfig {
        lambda: a.lambda,
        max_tubes: a.max_tubes,
    };
    let tubes = pipeline::link_corpus(&corpus, &models, &retained, &config).stage(S)?;
    corpus::write_tubes(&tubes, &work.join(TUBES_FILE)).stage(S)?;
    write_manifest(work, S, argv, &a.stage.corpus, None, flags_json(a))
}

fn read_actions(stage: &'static str, corpus_root: &Path) -> StageResult<Vec<String>> {
    let path = corpus_root.join(corpus::ACTIONS_FILE);
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::Io { path: path.clone(), source: e })
        .stage(stage)?;
    corpus::parse_actions(&path, &text).stage(stage)
}

fn run_classify(a: &StageArgs, argv: &[String]) -> StageResult {
    const S: &str = "classify";
    let work = a.work_dir();
    let tubes_path = require(S, work.join(TUBES_FILE), "link")?;
    let actions = read_actions(S, &a.corpus)?;
    let tubes = corpus::read_tubes(&tubes_path).stage(S)?;
    let labels = pipeline::classify_tubes(&tubes, &actions).stage(S)?;
    write(S, &work.join(LABELS_FILE), &pipeline::format_labels(&labels))?;
    write_manifest(work, S, argv, &a.corpus, None, flags_json(a))
}

fn run_eval(a: &EvalArgs, argv: &[String]) -> StageResult {
    const S: &str = "eval";
    let work = a.stage.work_dir();
    let tubes_path = require(S, work.join(TUBES_FILE), "link")?;
    let labels_path = require(S, work.join(LABELS_FILE), "classify")?;
    let corpus = corpus::load_corpus(&a.stage.corpus).stage(S)?;
    let tubes = corpus::read_tubes(&tubes_path).stage(S)?;
    let labels_text = fs::read_to_string(&labels_path)
        .map_err(|e| Error::Io { path: labels_path.clone(), source: e })
        .stage(S)?;
    let labels = pipeline::parse_labels(&labels_path, &labels_text).stage(S)?;
    let config = EvalConfig {
        sigmas: a.sigma.clone(),
        topk: a.topk,
        fpr_max: a.fpr_max,
    };
    let report = pipeline::evaluate(&corpus, &tubes, &labels, &config).stage(S)?;
    write(S, &work.join(METRICS_FILE), &pipeline::format_metrics(&report))?;
    write(S, &work.join(CONFUSION_FILE), &pipeline::format_confusion(&report.confusion))?;
    if a.dump_curves {
        write(S, &work.join(PR_POINTS_FILE), &pipeline::format_pr_points(&report))?;
        write(S, &work.join(ROC_POINTS_FILE), &pipeline::format_roc_points(&report))?;
    }
    write_manifest(work, S, argv, &a.stage.corpus, None, flags_json(a))
}

fn run_replay(manifest: &Path) -> StageResult {
    const S: &str = "replay";
    let text = fs::read_to_string(manifest)
        .map_err(|e| Error::Io { path: manifest.to_path_buf(), source: e })
        .stage(S)?;
    let m: RunManifest = serde_json::from_str(&text).map_err(|e| StageError {
        stage: S,
        file: Some(manifest.to_path_buf()),
        reason: format!("bad manifest: {e}"),
        exit_code: EXIT_DATA,
    })?;
    let mut argv = vec![m.tool.clone()];
    argv.extend(m.args.iter().cloned());
    let cli = Cli::try_parse_from(&argv).map_err(|e| StageError {
        stage: S,
        file: Some(manifest.to_path_buf()),
        reason: format!("manifest arguments no longer parse: {}", e.to_string().lines().next().unwrap_or("")),
        exit_code: EXIT_USAGE,
    })?;
    if matches!(cli.command, Command::Replay { .. }) {
        return Err(StageError {
            stage: S,
            file: Some(manifest.to_path_buf()),
            reason: "a manifest cannot replay another manifest".into(),
            exit_code: EXIT_USAGE,
        });
    }
    dispatch(&cli, &m.args)
}

fn dispatch(cli: &Cli, argv: &[String]) -> StageResult {
    match &cli.command {
        Command::Synth(a) => run_synth(a, argv),
        Command::Filter(a) => run_filter(a, argv),
        Command::Train(a) => run_train(a, argv),
        Command::Score(a) => run_score(a, argv),
        Command::Link(a) => run_link(a, argv),
        Command::Classify(a) => run_classify(a, argv),
        Command::Eval(a) => run_eval(a, argv),
        Command::Replay { manifest } => run_replay(manifest),
    }
}

/// Size the global rayon pool from `TUBEKIT_THREADS`, if set.
pub fn configure_threads() -> Result<(), String> {
    match std::env::var("TUBEKIT_THREADS") {
        Ok(v) => {
            let n: usize = v
                .parse()
                .ok()
                .filter(|n| *n > 0)
                .ok_or_else(|| format!("TUBEKIT_THREADS must be a positive integer, got '{v}'"))?;
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| e.to_string())
        }
        Err(_) => Ok(()),
    }
}

/// Run the CLI on `args` (including the program name) and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args: Vec<std::ffi::OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let argv: Vec<String> = args
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    match std::panic::catch_unwind(|| dispatch(&cli, &argv)) {
        Ok(Ok(())) => EXIT_OK,
        Ok(Err(e)) => {
            eprintln!("{}", e.render());
            e.exit_code
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".to_string());
            let e = StageError {
                stage: "internal",
                file: None,
                reason: msg,
                exit_code: EXIT_INTERNAL,
            };
            eprintln!("{}", e.render());
            EXIT_INTERNAL
        }
    }
}
