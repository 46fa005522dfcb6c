//! Command implementations behind the `lombardctl` binary.
//!
//! Every subcommand is a function over a [`Context`] (configuration plus seed
//! sources) so that tests and the end-to-end demo can drive the same code the
//! binary runs.

pub mod args;
pub mod commands;
pub mod config;
pub mod demo;
pub mod evaluate;
pub mod external;
pub mod fsutil;
pub mod synthetic;
pub mod toy_audio;

use anyhow::Result;
use thiserror::Error;

use args::{Cli, Command};
use config::{RunConfig, SEED_ENV};

/// Exit status for success.
pub const EXIT_OK: i32 = 0;
/// Exit status for usage, validation and input errors.
pub const EXIT_USAGE: i32 = 2;
/// Exit status when an external command failed for every row that needed it.
pub const EXIT_EXTERNAL: i32 = 3;

/// Raised when every external-command invocation of a run failed.
#[derive(Debug, Error)]
#[error("external command failed for all {rows} rows that needed it: {first}")]
pub struct ExternalFailure {
    pub rows: usize,
    pub first: String,
}

/// Maps an error chain to the process exit status.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.chain().any(|e| e.is::<ExternalFailure>()) {
        EXIT_EXTERNAL
    } else {
        EXIT_USAGE
    }
}

/// Configuration and seed sources shared by all subcommands.
#[derive(Debug, Clone, Default)]
pub struct Context {
    pub config: RunConfig,
    pub seed_flag: Option<u64>,
    pub seed_env: Option<String>,
}

impl Context {
    pub fn from_cli(cli: &Cli) -> Result<Self> {
        let config = match &cli.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        Ok(Context {
            config,
            seed_flag: cli.seed,
            seed_env: std::env::var(SEED_ENV).ok(),
        })
    }

    /// The effective seed (flag, then environment, then config); required.
    pub fn seed(&self) -> Result<u64> {
        self.config.resolve_seed(self.seed_flag, self.seed_env.as_deref())
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let ctx = Context::from_cli(&cli)?;
    match cli.command {
        Command::Pca(args::PcaCommand::Fit(a)) => commands::pca_fit(&ctx, &a),
        Command::Pca(args::PcaCommand::Correlate(a)) => commands::pca_correlate(&ctx, &a),
        Command::Style(args::StyleCommand::Apply(a)) => commands::style_apply(&ctx, &a),
        Command::Duration(a) => commands::duration(&ctx, &a),
        Command::Tts(args::TtsCommand::Train(a)) => commands::tts_train(&ctx, &a),
        Command::Tts(args::TtsCommand::Synth(a)) => commands::tts_synth(&ctx, &a),
        Command::Tts(args::TtsCommand::Embed(a)) => commands::tts_embed(&ctx, &a),
        Command::MixNoise(a) => commands::mix_noise(&ctx, &a),
        Command::Eval(args::EvalCommand::Wer(a)) => commands::eval_wer(&a),
        Command::Eval(args::EvalCommand::Run(a)) => evaluate::eval_run(&ctx, &a),
        Command::Report(a) => commands::report(&ctx, &a),
        Command::Corpus(args::CorpusCommand::Synth(a)) => commands::corpus_synth(&ctx, &a),
        Command::ToyAsr(a) => commands::toy_asr(&a),
        Command::ToyEmbed(a) => commands::toy_embed(&a),
        Command::Demo(a) => {
            let exe = std::env::current_exe()?;
            let summary = demo::run_demo(&demo::DemoOptions {
                out: a.out.clone(),
                seed: ctx.seed()?,
                quick: a.quick,
                exe,
                frame_rate: ctx.config.frame_rate,
            })?;
            print!("{summary}");
            Ok(())
        }
    }
}
