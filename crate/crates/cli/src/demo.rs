//! End-to-end demonstration on synthetic data: train the toy TTS model, build
//! an embedding corpus, fit PCA models, derive presets, synthesize every
//! Lombardness level and evaluate the renditions with the toy tools.

use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use lombard_core::embedding_store::join_attributes;
use lombard_core::eval::{write_wav, ReportLayout};
use lombard_core::{
    apply_preset, AttributeTable, ComponentCount, EmbeddingCorpus, ModelRegistryF64, PcaModelF64, PresetFile,
    StyleEmbedding,
};
use lombard_tts::{checkpoint, synthesize, train, ModelDims, Stage, SynthOptions, SyntheticTask, ToyMel, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::evaluate::{check_failures, evaluate, Tools};
use crate::fsutil::{create_dir_atomically, write_file};
use crate::toy_audio::{noise, render_mel};
use crate::Context;

pub const UTTERANCES: [&str; 4] = [
    "please speak clearly in the noisy room now",
    "the train to the city leaves at noon",
    "turn the music down so we can talk",
    "can you hear me over all this noise",
];

const REFERENCES: usize = 96;

#[derive(Debug, Clone)]
pub struct DemoOptions {
    pub out: PathBuf,
    pub seed: u64,
    /// Smaller training budget for smoke tests.
    pub quick: bool,
    /// Binary invoked as the toy transcriber and embedder.
    pub exe: PathBuf,
    pub frame_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoSummary {
    pub text: String,
}

impl fmt::Display for DemoSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

fn train_config(stage: Stage, seed: u64, quick: bool) -> TrainConfig {
    let mut cfg = TrainConfig::shipped(stage);
    cfg.seed = seed;
    if quick {
        cfg.epochs = 2;
        cfg.steps_per_epoch = 20;
        cfg.batch_size = 8;
    }
    cfg
}

fn losses_csv(losses: &[f64]) -> String {
    let mut out = String::from("step,loss\n");
    for (i, l) in losses.iter().enumerate() {
        let _ = writeln!(out, "{i},{l:.8}");
    }
    out
}

/// Reference with style scalar `s`; clarity `c` scales deviations from `s` by `1 + 0.4c`.
fn clarity_reference(task: &SyntheticTask, s: f64, c: f64, rng: &mut ChaCha8Rng) -> ToyMel<f32> {
    let mel: ToyMel<f32> = task.reference_mel(s, rng);
    let scale = 1.0 + 0.4 * c;
    let values = mel
        .values()
        .iter()
        .map(|&v| (s + (f64::from(v) - s) * scale) as f32)
        .collect();
    ToyMel::new(mel.frames(), mel.channels(), values).expect("same shape")
}

fn correlations(model: &PcaModelF64, corpus: &EmbeddingCorpus, table: &AttributeTable, attr: &str) -> Result<Vec<Option<f64>>> {
    let pairs = join_attributes(corpus, table, attr)?;
    Ok(model
        .correlate_components(&pairs)?
        .into_iter()
        .map(|c| c.pearson_r)
        .collect())
}

fn correlation_csv(rs: &[Option<f64>], n: usize) -> String {
    let mut out = String::from("component,pearson_r,n\n");
    for (k, r) in rs.iter().enumerate() {
        let r = r.map_or_else(|| "NA".to_string(), |r| format!("{r:.6}"));
        let _ = writeln!(out, "{k},{r},{n}");
    }
    out
}

fn sign(r: Option<f64>) -> f64 {
    if r.unwrap_or(0.0) < 0.0 {
        -1.0
    } else {
        1.0
    }
}

fn presets_ini(loudness_r: &[Option<f64>], clarity_r: &[Option<f64>]) -> String {
    let mut out = String::new();
    for p in &PresetFile::default().presets {
        let _ = writeln!(
            out,
            "[preset.{}]\nloudness = {}\nclarity = {}\nspeed = {}\n",
            p.name, p.loudness, p.clarity, p.speed
        );
    }
    let at = |rs: &[Option<f64>], k: usize| rs.get(k).copied().flatten();
    let _ = writeln!(
        out,
        "[binding.loudness]\nmodel = loudness\ncomponents = 0,1\nweights = {},{}\n",
        sign(at(loudness_r, 0)),
        sign(at(loudness_r, 1))
    );
    let _ = writeln!(
        out,
        "[binding.clarity]\nmodel = clarity\ncomponents = 1\nweights = {}",
        sign(at(clarity_r, 1))
    );
    out
}

fn fmt_r(r: Option<f64>) -> String {
    r.map_or_else(|| "NA".into(), |r| format!("{r:.3}"))
}

pub fn run_demo(opts: &DemoOptions) -> Result<DemoSummary> {
    create_dir_atomically(&opts.out, |dir| build(dir, opts))
}

fn build(dir: &Path, opts: &DemoOptions) -> Result<DemoSummary> {
    let mut summary = String::new();
    let dims = ModelDims::default();
    for sub in ["tts", "corpus", "pca", "synth", "transcripts"] {
        std::fs::create_dir_all(dir.join(sub))?;
    }

    let (pretrained, pre_report) = train::<f32>(&train_config(Stage::Pretrain, opts.seed, opts.quick), dims, None)?;
    let (model, fine_report) = train::<f32>(
        &train_config(Stage::Finetune, opts.seed.wrapping_add(1), opts.quick),
        dims,
        Some(&pretrained),
    )?;
    checkpoint::save(&pretrained, &dir.join("tts/pretrained.ttts"))?;
    checkpoint::save(&model, &dir.join("tts/finetuned.ttts"))?;
    write_file(&dir.join("tts/pretrain_losses.csv"), losses_csv(&pre_report.losses))?;
    write_file(&dir.join("tts/finetune_losses.csv"), losses_csv(&fine_report.losses))?;
    for (name, report) in [("pretrain", &pre_report), ("finetune", &fine_report)] {
        if let Some((first, last)) = report.smoothed_first_and_final() {
            writeln!(summary, "{name}: smoothed loss {first:.4} -> {last:.4}")?;
        }
    }

    let task = SyntheticTask::shipped(dims.channels);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xC0_4F05);
    let mut embeddings = Vec::with_capacity(REFERENCES);
    let mut attributes = AttributeTable::new();
    let mut styles = Vec::with_capacity(REFERENCES);
    for i in 0..REFERENCES {
        let s = rng.random_range(-1.0..=1.0);
        let c = f64::from(rng.random_range(-1i32..=1));
        let mel = clarity_reference(&task, s, c, &mut rng);
        let id = format!("ref{i:03}");
        embeddings.push(StyleEmbedding::new(id.clone(), model.encode_style(&mel)?));
        attributes.insert(&id, "loudness", 65.0 + 6.0 * s);
        attributes.insert(&id, "clarity", c);
        styles.push((s, mel));
    }
    let corpus = EmbeddingCorpus::new(embeddings)?;
    corpus.save(&dir.join("corpus/embeddings.semb"))?;
    write_file(&dir.join("corpus/attributes.csv"), attributes.to_csv_string())?;

    let loudness = PcaModelF64::fit(&corpus, ComponentCount::Max)?;
    let clarity = PcaModelF64::fit(&corpus, ComponentCount::Max)?;
    loudness.save(&dir.join("pca/loudness.pcam"))?;
    clarity.save(&dir.join("pca/clarity.pcam"))?;
    let loud_r = correlations(&loudness, &corpus, &attributes, "loudness")?;
    let clar_r = correlations(&clarity, &corpus, &attributes, "clarity")?;
    write_file(&dir.join("pca/loudness_correlation.csv"), correlation_csv(&loud_r, corpus.len()))?;
    write_file(&dir.join("pca/clarity_correlation.csv"), correlation_csv(&clar_r, corpus.len()))?;
    writeln!(
        summary,
        "loudness r(PC1)={} r(PC2)={}; clarity r(PC2)={}",
        fmt_r(loud_r.first().copied().flatten()),
        fmt_r(loud_r.get(1).copied().flatten()),
        fmt_r(clar_r.get(1).copied().flatten())
    )?;

    let ini = presets_ini(&loud_r, &clar_r);
    write_file(&dir.join("presets.ini"), &ini)?;
    let presets = PresetFile::parse(&ini)?;
    let mut models = ModelRegistryF64::new();
    models.insert("loudness".into(), loudness);
    models.insert("clarity".into(), clarity);

    let synth_opts = SynthOptions {
        frame_rate: opts.frame_rate,
        ..SynthOptions::default()
    };
    let mut manifest = String::from("id,level,wav,transcript,reference_wav\n");
    let mut level_means = String::new();
    for (u, text) in UTTERANCES.iter().enumerate() {
        let id = format!("utt{u}");
        let source = &corpus.embeddings()[u];
        write_file(&dir.join(format!("transcripts/{id}.txt")), format!("{text}\n"))?;
        write_wav(
            &dir.join(format!("synth/{id}_reference.wav")),
            &render_mel(&styles[u].1, opts.frame_rate),
        )?;
        for preset in &presets.presets {
            let (shifted, speed) = apply_preset(&source.values_as::<f64>(), preset, &presets.bindings, &models)?;
            let style: Vec<f32> = shifted.iter().map(|&v| v as f32).collect();
            let mel = synthesize(&model, text, &style, speed, opts.seed.wrapping_add(u as u64), &synth_opts)?;
            let stem = format!("{id}_{}", preset.name);
            mel.save_csv(&dir.join(format!("synth/{stem}.csv")))?;
            write_wav(&dir.join(format!("synth/{stem}.wav")), &render_mel(&mel, opts.frame_rate))?;
            writeln!(manifest, "{id},{},synth/{stem}.wav,transcripts/{id}.txt,synth/{id}_reference.wav", preset.name)?;
            writeln!(level_means, "{stem}: frames={} mean={:.3}", mel.frames(), mel.mean())?;
        }
    }
    write_file(&dir.join("manifest.csv"), &manifest)?;
    write_wav(&dir.join("noise.wav"), &noise(6.0, opts.seed.wrapping_add(99)))?;
    summary.push_str(&level_means);

    let exe = opts.exe.to_string_lossy();
    let transcriber = format!("{exe} toy-asr --wav {{wav}} --transcript {{transcript}}");
    let embedder = format!("{exe} toy-embed --wav {{wav}}");
    let noise_path = dir.join("noise.wav");
    let ctx = Context {
        config: RunConfig::default(),
        seed_flag: Some(opts.seed),
        seed_env: None,
    };
    let eval = evaluate(
        &ctx,
        &dir.join("manifest.csv"),
        &dir.join("eval"),
        Tools {
            transcriber: Some(&transcriber),
            embedder: Some(&embedder),
            noise: Some(&noise_path),
        },
        ReportLayout::default(),
        false,
    )
    .context("evaluating the synthesized renditions")?;
    check_failures(&eval)?;
    summary.push('\n');
    summary.push_str(&eval.table);
    write_file(&dir.join("summary.txt"), &summary)?;
    Ok(DemoSummary { text: summary })
}
