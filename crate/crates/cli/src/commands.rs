use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context as _, Result};
use lombard_core::embedding_store::join_attributes;
use lombard_core::eval::{
    build_report, mix_at_snr, read_wav, word_error_rate_text, write_wav, NoiseCondition, ReportLayout, SnrSpec,
    SnrTarget,
};
use lombard_core::style::{apply_directives, ShiftDirective};
use lombard_core::{
    apply_preset, count_syllables, target_duration, AttributeTable, ComponentCount, EmbeddingCorpus, ModelRegistryF64,
    PcaModelF64, PresetFile, StyleEmbedding,
};
use lombard_tts::{checkpoint, synthesize, train, ModelDims, Stage, SynthOptions, ToyMel, TrainConfig, TtsModelF32};

use crate::args::*;
use crate::config::{parse_list, parse_noise_levels};
use crate::evaluate::read_records;
use crate::fsutil::{ensure_parent, write_file};
use crate::synthetic::loudness_corpus;
use crate::toy_audio::{render_mel, toy_embedding, toy_transcribe};
use crate::Context;

fn join(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(",")
}

fn load_corpus(path: &Path) -> Result<EmbeddingCorpus> {
    EmbeddingCorpus::load(path).with_context(|| format!("loading embeddings from {}", path.display()))
}

pub fn pca_fit(ctx: &Context, a: &PcaFitArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let k_text = a.k.clone().or_else(|| ctx.config.components.clone()).unwrap_or_else(|| "max".into());
    let k: ComponentCount = k_text.parse().map_err(|e| anyhow!("--k: {e}"))?;
    let model = PcaModelF64::fit(&corpus, k)?;
    ensure_parent(&a.out)?;
    model.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    println!("components={}", model.n_components());
    println!("dimension={}", model.dimension());
    println!("samples={}", corpus.len());
    println!("sigma={}", join(model.sigma().iter().copied()));
    println!("explained_variance_ratio={}", join(model.explained_variance_ratio().iter().copied()));
    Ok(())
}

pub fn pca_correlate(_ctx: &Context, a: &PcaCorrelateArgs) -> Result<()> {
    let model = PcaModelF64::load(&a.model).with_context(|| format!("loading model {}", a.model.display()))?;
    let corpus = load_corpus(&a.corpus)?;
    let table = AttributeTable::load_csv(&a.attributes)
        .with_context(|| format!("loading attributes {}", a.attributes.display()))?;
    let pairs = join_attributes(&corpus, &table, &a.attribute)?;
    let corr = model.correlate_components(&pairs)?;

    let mut csv = String::from("component,pearson_r,n\n");
    for c in &corr {
        let r = c.pearson_r.map_or_else(|| "NA".to_string(), |r| format!("{r:.6}"));
        writeln!(csv, "{},{},{}", c.component_index, r, c.sample_count)?;
    }
    write_file(&a.out, &csv)?;
    print!("{csv}");

    if let Some(path) = &a.scatter {
        if a.scatter_component >= model.n_components() {
            bail!(
                "--scatter-component {} out of range (model has {} components)",
                a.scatter_component,
                model.n_components()
            );
        }
        let mut out = String::from("score,attribute\n");
        for (e, value) in &pairs {
            let score = model.project(&e.values_as::<f64>())?[a.scatter_component];
            writeln!(out, "{score:.6},{value}")?;
        }
        write_file(path, out)?;
    }
    Ok(())
}

fn load_models(ctx: &Context, extra: &[String], needed: &[String]) -> Result<ModelRegistryF64> {
    let mut paths: BTreeMap<String, std::path::PathBuf> = ctx.config.models.clone();
    for spec in extra {
        let (name, path) = spec
            .split_once('=')
            .ok_or_else(|| anyhow!("--model expects name=path, got '{spec}'"))?;
        paths.insert(name.trim().to_string(), path.trim().into());
    }
    let mut registry = ModelRegistryF64::new();
    for name in needed {
        let path = paths
            .get(name)
            .ok_or_else(|| anyhow!("no PCA model bound to '{name}' (use --model {name}=path or [models])"))?;
        let model = PcaModelF64::load(path).with_context(|| format!("loading model '{name}' from {}", path.display()))?;
        registry.insert(name.clone(), model);
    }
    Ok(registry)
}

pub fn style_apply(ctx: &Context, a: &StyleApplyArgs) -> Result<()> {
    let presets = match a.presets.as_ref().or(ctx.config.presets.as_ref()) {
        Some(path) => PresetFile::load(path).with_context(|| format!("loading presets {}", path.display()))?,
        None => PresetFile::default(),
    };
    let (directives, speed) = match &a.preset {
        Some(name) => {
            let preset = presets.preset(name)?;
            (lombard_core::style::resolve_directives(preset, &presets.bindings)?, preset.speed)
        }
        None => {
            if a.shift.is_empty() {
                bail!("pass --preset NAME or at least one --shift model:component:coefficient");
            }
            let ds = a
                .shift
                .iter()
                .map(|s| s.parse::<ShiftDirective>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| anyhow!(e))?;
            if !(a.speed > 0.0 && a.speed <= lombard_core::style::MAX_SPEED) {
                bail!("--speed must lie in (0, {}]", lombard_core::style::MAX_SPEED);
            }
            (ds, a.speed)
        }
    };
    let mut needed: Vec<String> = directives.iter().map(|d| d.model_ref.clone()).collect();
    needed.dedup();
    needed.sort();
    needed.dedup();
    let models = load_models(ctx, &a.models, &needed)?;

    let corpus = load_corpus(&a.input)?;
    let mut out = Vec::with_capacity(corpus.len());
    for e in corpus.embeddings() {
        let values = e.values_as::<f64>();
        let shifted = match &a.preset {
            Some(name) => apply_preset(&values, presets.preset(name)?, &presets.bindings, &models)?.0,
            None => apply_directives(&values, &directives, &models)?,
        };
        out.push(StyleEmbedding::from_scalars(e.id.clone(), &shifted));
    }
    ensure_parent(&a.out)?;
    EmbeddingCorpus::new(out)?
        .save(&a.out)
        .with_context(|| format!("writing {}", a.out.display()))?;
    println!("embeddings={}", corpus.len());
    println!("speed={speed}");
    Ok(())
}

pub fn duration(ctx: &Context, a: &DurationArgs) -> Result<()> {
    let syllables = count_syllables(&a.text);
    let frame_rate = a.frame_rate.unwrap_or(ctx.config.frame_rate);
    let d = target_duration(syllables, a.speed, a.rate, frame_rate)?;
    println!("syllables={}", d.syllables);
    println!("seconds={:.6}", d.seconds);
    println!("frames={}", d.frames);
    Ok(())
}

pub fn tts_train(ctx: &Context, a: &TtsTrainArgs) -> Result<()> {
    let stage: Stage = a.stage.parse()?;
    let mut cfg = TrainConfig::shipped(stage);
    cfg.seed = ctx.seed()?;
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.steps_per_epoch {
        cfg.steps_per_epoch = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.learning_rate {
        cfg.learning_rate = v;
    }
    let start = match &a.checkpoint {
        Some(path) => Some(
            checkpoint::load::<f32>(path).with_context(|| format!("loading checkpoint {}", path.display()))?,
        ),
        None => None,
    };
    let dims = ModelDims {
        freeze_boundary: a.freeze_boundary.unwrap_or(ctx.config.freeze_boundary),
        ..ModelDims::default()
    };
    let (model, report): (TtsModelF32, _) = train(&cfg, dims, start.as_ref())?;
    ensure_parent(&a.out)?;
    checkpoint::save(&model, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    if let Some(path) = &a.losses {
        let mut csv = String::from("step,loss\n");
        for (i, l) in report.losses.iter().enumerate() {
            writeln!(csv, "{i},{l:.8}")?;
        }
        write_file(path, csv)?;
    }
    let (first, last) = report.smoothed_first_and_final().unwrap_or((f64::NAN, f64::NAN));
    println!("steps={}", report.losses.len());
    println!("smoothed_loss_first_epoch={first:.6}");
    println!("smoothed_loss_final={last:.6}");
    println!("parameters={}", model.parameter_count());
    Ok(())
}

fn load_checkpoint(ctx: &Context, flag: Option<&Path>) -> Result<TtsModelF32> {
    let path = flag
        .or(ctx.config.checkpoint.as_deref())
        .ok_or_else(|| anyhow!("pass --checkpoint or set [paths] checkpoint in the config"))?;
    checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

pub fn tts_synth(ctx: &Context, a: &TtsSynthArgs) -> Result<()> {
    let model = load_checkpoint(ctx, a.checkpoint.as_deref())?;
    let style = match (&a.style, &a.reference_mel) {
        (_, Some(mel_path)) => {
            let mel = ToyMel::<f32>::load_csv(mel_path)?;
            model.encode_style(&mel)?
        }
        (Some(path), None) => {
            let corpus = load_corpus(path)?;
            let e = match &a.id {
                Some(id) => corpus.get(id).ok_or_else(|| anyhow!("no embedding '{id}' in {}", path.display()))?,
                None => &corpus.embeddings()[0],
            };
            e.values.clone()
        }
        (None, None) => bail!("pass --style or --reference-mel"),
    };
    if style.len() != model.dims.style_dim {
        bail!(
            "style embedding has {} values but the checkpoint expects {}",
            style.len(),
            model.dims.style_dim
        );
    }
    let frame_rate = a.frame_rate.unwrap_or(ctx.config.frame_rate);
    let opts = SynthOptions {
        frame_rate,
        euler_steps: a.euler_steps,
        ..SynthOptions::default()
    };
    let mel = synthesize(&model, &a.text, &style, a.speed, ctx.seed()?, &opts)?;
    ensure_parent(&a.out)?;
    mel.save_csv(&a.out)?;
    if let Some(wav) = &a.wav {
        ensure_parent(wav)?;
        write_wav(wav, &render_mel(&mel, frame_rate))?;
    }
    println!("frames={}", mel.frames());
    println!("seconds={:.6}", mel.frames() as f64 / frame_rate);
    println!("mean={:.6}", mel.mean());
    Ok(())
}

pub fn tts_embed(ctx: &Context, a: &TtsEmbedArgs) -> Result<()> {
    let model = load_checkpoint(ctx, a.checkpoint.as_deref())?;
    let mut out = Vec::with_capacity(a.mels.len());
    for path in &a.mels {
        let mel = ToyMel::<f32>::load_csv(path).with_context(|| format!("reading mel {}", path.display()))?;
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .ok_or_else(|| anyhow!("{} has no file name", path.display()))?;
        out.push(StyleEmbedding::new(id, model.encode_style(&mel)?));
    }
    ensure_parent(&a.out)?;
    EmbeddingCorpus::new(out)?.save(&a.out)?;
    println!("embeddings={}", a.mels.len());
    Ok(())
}

pub fn parse_snr(text: &str) -> Result<SnrTarget> {
    match text.parse::<NoiseCondition>().map_err(|e| anyhow!(e))? {
        NoiseCondition::Clean => Ok(SnrTarget::Clean),
        NoiseCondition::Snr(db) => Ok(SnrTarget::Db(db)),
    }
}

pub fn mix_noise(ctx: &Context, a: &MixArgs) -> Result<()> {
    let target = parse_snr(&a.snr)?;
    let clean = read_wav(&a.clean)?;
    let noise = read_wav(&a.noise)?;
    let seed = match target {
        SnrTarget::Clean => ctx.seed().unwrap_or(0),
        SnrTarget::Db(_) => ctx.seed()?,
    };
    let out = mix_at_snr(&clean, &noise, &SnrSpec { target, seed })?;
    ensure_parent(&a.out)?;
    write_wav(&a.out, &out.audio)?;
    if out.clipped > 0 {
        eprintln!("warning: {} samples clipped to [-1, 1]", out.clipped);
    }
    println!("gain={:.6}", out.gain);
    println!("offset={}", out.offset);
    match out.achieved_snr_db {
        Some(db) => println!("achieved_snr_db={db:.4}"),
        None => println!("achieved_snr_db=NA"),
    }
    println!("clipped={}", out.clipped);
    Ok(())
}

fn text_arg(inline: &Option<String>, file: &Option<std::path::PathBuf>) -> Result<String> {
    match (inline, file) {
        (Some(t), _) => Ok(t.clone()),
        (None, Some(p)) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display())),
        (None, None) => bail!("missing text"),
    }
}

pub fn eval_wer(a: &WerArgs) -> Result<()> {
    let reference = text_arg(&a.reference, &a.reference_file)?;
    let hypothesis = text_arg(&a.hypothesis, &a.hypothesis_file)?;
    let r = word_error_rate_text(&reference, &hypothesis)?;
    println!("substitutions={}", r.substitutions);
    println!("deletions={}", r.deletions);
    println!("insertions={}", r.insertions);
    println!("reference_words={}", r.reference_words);
    println!("wer={:.4}", 100.0 * r.wer);
    Ok(())
}

pub fn layout_from(ctx: &Context, levels: Option<&str>, noise_levels: Option<&str>) -> Result<ReportLayout> {
    let mut layout = ReportLayout {
        noises: ctx.config.noise_levels.clone(),
        ..ReportLayout::default()
    };
    if let Some(l) = levels {
        layout.levels = parse_list(l);
        if layout.levels.is_empty() {
            bail!("level list is empty");
        }
    }
    if let Some(n) = noise_levels {
        layout.noises = parse_noise_levels(n)?;
    }
    Ok(layout)
}

pub fn report(ctx: &Context, a: &ReportArgs) -> Result<()> {
    let records = read_records(&a.records)?;
    let layout = layout_from(ctx, a.levels.as_deref(), a.noise_levels.as_deref())?;
    let report = build_report(&records, &layout);
    if report.unplaced > 0 {
        eprintln!("warning: {} records fall outside the report layout", report.unplaced);
    }
    match &a.out_csv {
        Some(p) => write_file(p, report.to_csv())?,
        None => print!("{}", report.to_csv()),
    }
    match &a.out_table {
        Some(p) => write_file(p, report.to_table())?,
        None => print!("\n{}", report.to_table()),
    }
    Ok(())
}

pub fn corpus_synth(ctx: &Context, a: &CorpusSynthArgs) -> Result<()> {
    if a.count < 3 || a.dim < 2 {
        bail!("need --count >= 3 and --dim >= 2");
    }
    if !(a.noise_fraction >= 0.0 && a.noise_fraction.is_finite()) {
        bail!("--noise-fraction must be >= 0");
    }
    let s = loudness_corpus(a.count, a.dim, a.noise_fraction, ctx.seed()?);
    ensure_parent(&a.out)?;
    s.corpus.save(&a.out)?;
    ensure_parent(&a.attributes)?;
    s.attributes.save_csv(&a.attributes)?;
    println!("embeddings={}", s.corpus.len());
    println!("dimension={}", s.corpus.dimension());
    Ok(())
}

pub fn toy_asr(a: &ToyAsrArgs) -> Result<()> {
    let audio = read_wav(&a.wav)?;
    let transcript = std::fs::read_to_string(&a.transcript)
        .with_context(|| format!("reading transcript {}", a.transcript.display()))?;
    println!("{}", toy_transcribe(&audio, &transcript));
    Ok(())
}

pub fn toy_embed(a: &ToyEmbedArgs) -> Result<()> {
    let audio = read_wav(&a.wav)?;
    println!("{}", join(toy_embedding(&audio)).replace(',', " "));
    Ok(())
}
