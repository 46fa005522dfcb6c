use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "lombardctl", version, about = "Lombard-style speech style control: PCA, presets, toy synthesis and evaluation")]
pub struct Cli {
    /// Run configuration file (`key = value` lines with `[section]` headers).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Seed; overrides LOMBARDCTL_SEED and the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit PCA models and correlate components with attributes.
    #[command(subcommand)]
    Pca(PcaCommand),
    /// Manipulate style embeddings.
    #[command(subcommand)]
    Style(StyleCommand),
    /// Syllable count and target duration of a text.
    Duration(DurationArgs),
    /// Train the toy synthesizer, synthesize, or encode reference mels.
    #[command(subcommand)]
    Tts(TtsCommand),
    /// Mix noise into a clean WAV at a target SNR.
    MixNoise(MixArgs),
    /// Word error rate and manifest-driven evaluation.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Build the report grid from a records CSV.
    Report(ReportArgs),
    /// Generate synthetic embedding corpora with attribute tables.
    #[command(subcommand)]
    Corpus(CorpusCommand),
    /// Deterministic stand-in transcriber for toy renders (prints a hypothesis).
    ToyAsr(ToyAsrArgs),
    /// Deterministic stand-in speaker embedder for WAV files (prints a vector).
    ToyEmbed(ToyEmbedArgs),
    /// Run the full pipeline end to end into a fresh output directory.
    Demo(DemoArgs),
}

#[derive(Debug, Subcommand)]
pub enum PcaCommand {
    Fit(PcaFitArgs),
    Correlate(PcaCorrelateArgs),
}

#[derive(Debug, Args)]
pub struct PcaFitArgs {
    /// Embedding corpus (`.csv` or binary SEMB).
    #[arg(long)]
    pub corpus: PathBuf,
    /// Number of components, or `max` for min(N-1, D). Falls back to the
    /// config's `[pca] components`, then `max`.
    #[arg(long)]
    pub k: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PcaCorrelateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Attribute table CSV (`id,<attribute>...`).
    #[arg(long)]
    pub attributes: PathBuf,
    /// Attribute column to correlate against.
    #[arg(long)]
    pub attribute: String,
    /// Output CSV `component,pearson_r,n`.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional per-utterance scatter CSV `score,attribute`.
    #[arg(long)]
    pub scatter: Option<PathBuf>,
    /// Component plotted in the scatter CSV.
    #[arg(long, default_value_t = 0)]
    pub scatter_component: usize,
}

#[derive(Debug, Subcommand)]
pub enum StyleCommand {
    Apply(StyleApplyArgs),
}

#[derive(Debug, Args)]
pub struct StyleApplyArgs {
    /// Input embeddings (`.csv` or SEMB).
    #[arg(long)]
    pub input: PathBuf,
    /// Output embeddings (format chosen by extension).
    #[arg(long)]
    pub out: PathBuf,
    /// Lombardness preset name.
    #[arg(long, conflicts_with = "shift")]
    pub preset: Option<String>,
    /// Explicit shift `model:component:coefficient`; repeatable.
    #[arg(long)]
    pub shift: Vec<String>,
    /// PCA model binding `name=path`; repeatable. Adds to the config's [models].
    #[arg(long = "model")]
    pub models: Vec<String>,
    /// Preset and binding file; defaults to the built-in presets.
    #[arg(long)]
    pub presets: Option<PathBuf>,
    /// Speed reported with explicit shifts.
    #[arg(long, default_value_t = 1.0)]
    pub speed: f64,
}

#[derive(Debug, Args)]
pub struct DurationArgs {
    #[arg(long)]
    pub text: String,
    #[arg(long, default_value_t = 1.0)]
    pub speed: f64,
    #[arg(long)]
    pub frame_rate: Option<f64>,
    /// Base rate in syllables per second.
    #[arg(long, default_value_t = lombard_core::DEFAULT_SYLLABLE_RATE)]
    pub rate: f64,
}

#[derive(Debug, Subcommand)]
pub enum TtsCommand {
    Train(TtsTrainArgs),
    Synth(TtsSynthArgs),
    /// Encode reference mels (CSV files) into a style-embedding corpus.
    Embed(TtsEmbedArgs),
}

#[derive(Debug, Args)]
pub struct TtsTrainArgs {
    /// `pretrain` or `finetune`.
    #[arg(long, default_value = "pretrain")]
    pub stage: String,
    /// Starting checkpoint (required for finetune).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub steps_per_epoch: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Blocks below this index are frozen in fine-tuning (new models only).
    #[arg(long)]
    pub freeze_boundary: Option<usize>,
    /// Per-step loss CSV `step,loss`.
    #[arg(long)]
    pub losses: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TtsSynthArgs {
    /// Checkpoint; defaults to `[paths] checkpoint` from the config.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub text: String,
    /// Style embedding corpus; the embedding is chosen with --id (default: first).
    #[arg(long, required_unless_present = "reference_mel")]
    pub style: Option<PathBuf>,
    #[arg(long)]
    pub id: Option<String>,
    /// Reference mel CSV encoded by the model's own style encoder instead of --style.
    #[arg(long, conflicts_with = "style")]
    pub reference_mel: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub speed: f64,
    #[arg(long)]
    pub frame_rate: Option<f64>,
    #[arg(long, default_value_t = 32)]
    pub euler_steps: usize,
    /// Output mel CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Also render the mel to a 16 kHz WAV.
    #[arg(long)]
    pub wav: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TtsEmbedArgs {
    /// Checkpoint; defaults to `[paths] checkpoint` from the config.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Mel CSV files; the file stem becomes the embedding id.
    #[arg(required = true)]
    pub mels: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MixArgs {
    #[arg(long)]
    pub clean: PathBuf,
    #[arg(long)]
    pub noise: PathBuf,
    /// Target SNR in dB, or `clean` for passthrough.
    #[arg(long)]
    pub snr: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    Wer(WerArgs),
    Run(EvalRunArgs),
}

#[derive(Debug, Args)]
pub struct WerArgs {
    #[arg(long, required_unless_present = "reference_file")]
    pub reference: Option<String>,
    #[arg(long, conflicts_with = "reference")]
    pub reference_file: Option<PathBuf>,
    #[arg(long, required_unless_present = "hypothesis_file")]
    pub hypothesis: Option<String>,
    #[arg(long, conflicts_with = "hypothesis")]
    pub hypothesis_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalRunArgs {
    /// Manifest CSV `id,level,wav,transcript[,noise][,reference_wav][,wer]`.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory (created; must not exist).
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Transcriber command template with `{wav}` and optionally `{transcript}`.
    #[arg(long)]
    pub transcriber: Option<String>,
    /// Embedder command template with `{wav}`; prints a vector.
    #[arg(long)]
    pub embedder: Option<String>,
    /// Noise WAV mixed in for noisy conditions.
    #[arg(long)]
    pub noise: Option<PathBuf>,
    /// Comma-separated noise conditions, e.g. `clean,10,5,1`.
    #[arg(long)]
    pub noise_levels: Option<String>,
    /// Comma-separated level order of the report rows.
    #[arg(long)]
    pub levels: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Records CSV `id,level,noise,wer,ssim,delta_ssim,error` (percentages).
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
    #[arg(long)]
    pub out_table: Option<PathBuf>,
    #[arg(long)]
    pub levels: Option<String>,
    #[arg(long)]
    pub noise_levels: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum CorpusCommand {
    /// Corpus whose loudness attribute is affine in the first principal direction.
    Synth(CorpusSynthArgs),
}

#[derive(Debug, Args)]
pub struct CorpusSynthArgs {
    #[arg(long, default_value_t = 200)]
    pub count: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    /// Attribute noise as a fraction of the attribute's signal standard deviation.
    #[arg(long, default_value_t = 0.01)]
    pub noise_fraction: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub attributes: PathBuf,
}

#[derive(Debug, Args)]
pub struct ToyAsrArgs {
    #[arg(long)]
    pub wav: PathBuf,
    /// Reference transcript file the stand-in corrupts.
    #[arg(long)]
    pub transcript: PathBuf,
}

#[derive(Debug, Args)]
pub struct ToyEmbedArgs {
    #[arg(long)]
    pub wav: PathBuf,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    /// Output directory (created; must not exist).
    #[arg(long)]
    pub out: PathBuf,
    /// Short training run for smoke tests.
    #[arg(long)]
    pub quick: bool,
}
