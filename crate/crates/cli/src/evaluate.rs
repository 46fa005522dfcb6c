//! Manifest-driven evaluation: noise mixing, external transcription and
//! embedding, per-record metrics and the aggregated report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context as _, Result};
use lombard_core::eval::{
    build_report, cosine_similarity, mix_at_snr, read_wav, relative_ssim, word_error_rate_text, write_wav,
    NoiseCondition, ReportLayout, SnrSpec, SnrTarget, UtteranceRecord,
};
use serde::Deserialize;

use crate::args::EvalRunArgs;
use crate::commands::layout_from;
use crate::external;
use crate::fsutil::{create_dir_atomically, write_file};
use crate::{Context, ExternalFailure};

/// Level whose renditions serve as the reference for relative similarity.
pub const NORMAL_LEVEL: &str = "normal";

#[derive(Debug, Clone, Deserialize)]
pub struct ManifestRow {
    pub id: String,
    pub level: String,
    pub wav: PathBuf,
    pub transcript: PathBuf,
    #[serde(default)]
    pub noise: Option<String>,
    #[serde(default)]
    pub reference_wav: Option<PathBuf>,
    /// Precomputed WER in percent; skips transcription for this row.
    #[serde(default)]
    pub wer: Option<f64>,
}

/// Reads a manifest and resolves relative paths against its directory.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening manifest {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, row) in reader.deserialize::<ManifestRow>().enumerate() {
        let mut row = row.with_context(|| format!("manifest {} row {}", path.display(), i + 2))?;
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        row.wav = resolve(&row.wav);
        row.transcript = resolve(&row.transcript);
        row.reference_wav = row.reference_wav.as_deref().map(resolve);
        if row.noise.as_deref().is_some_and(|n| n.is_empty()) {
            row.noise = None;
        }
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("manifest {} has no rows", path.display());
    }
    Ok(rows)
}

fn opt_percent(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| format!("{:.4}", 100.0 * x))
}

/// Serialises records as `id,level,noise,wer,ssim,delta_ssim,error` (percent).
pub fn records_to_csv(records: &[UtteranceRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "level", "noise", "wer", "ssim", "delta_ssim", "error"])?;
    for r in records {
        w.write_record([
            r.utterance.clone(),
            r.level.clone(),
            r.noise.map_or_else(|| "NA".into(), |n| n.to_string()),
            opt_percent(r.wer),
            opt_percent(r.ssim),
            opt_percent(r.delta_ssim),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn parse_percent(field: &str, what: &str) -> Result<Option<f64>> {
    let f = field.trim();
    if f.is_empty() || f.eq_ignore_ascii_case("na") {
        return Ok(None);
    }
    let v: f64 = f.parse().with_context(|| format!("bad {what} value '{f}'"))?;
    if !v.is_finite() {
        bail!("non-finite {what} value '{f}'");
    }
    Ok(Some(v / 100.0))
}

/// Reads a records CSV as written by [`records_to_csv`].
pub fn read_records(path: &Path) -> Result<Vec<UtteranceRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .with_context(|| format!("opening records {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(id), Some(level), Some(wer)) = (col("id"), col("level"), col("wer")) else {
        bail!("{} needs columns id, level and wer", path.display());
    };
    let (noise, ssim, dssim, error) = (col("noise"), col("ssim"), col("delta_ssim"), col("error"));
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let get = |c: Option<usize>| c.and_then(|c| row.get(c)).unwrap_or("");
        let ctx = || format!("{} row {}", path.display(), i + 2);
        let noise = match get(noise) {
            "" => NoiseCondition::Clean,
            n => n.parse().map_err(|e: String| anyhow!(e)).with_context(ctx)?,
        };
        let err = get(error);
        out.push(UtteranceRecord {
            utterance: get(Some(id)).to_string(),
            level: get(Some(level)).to_string(),
            noise: Some(noise),
            wer: parse_percent(get(Some(wer)), "wer").with_context(ctx)?,
            ssim: parse_percent(get(ssim), "ssim").with_context(ctx)?,
            delta_ssim: parse_percent(get(dssim), "delta_ssim").with_context(ctx)?,
            error: (!err.is_empty()).then(|| err.to_string()),
        });
    }
    Ok(out)
}

/// FNV-1a over the parts; used to give every mixed file its own noise offset.
fn derive_seed(seed: u64, parts: &[&str]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for p in parts {
        for b in p.bytes().chain(std::iter::once(0xff)) {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

struct Job<'m> {
    row: &'m ManifestRow,
    noise: NoiseCondition,
}

#[derive(Debug, Default)]
pub struct RunSummary {
    pub records: Vec<UtteranceRecord>,
    pub external_rows: usize,
    pub failed_rows: usize,
    pub first_failure: Option<String>,
    pub table: String,
}

fn levels_for(rows: &[ManifestRow], mut layout: ReportLayout, explicit: bool) -> ReportLayout {
    if !explicit {
        for r in rows {
            if !layout.levels.contains(&r.level) {
                layout.levels.push(r.level.clone());
            }
        }
    }
    layout
}

/// External tools and the noise recording used by an evaluation run.
#[derive(Debug, Clone, Copy, Default)]
pub struct Tools<'a> {
    pub transcriber: Option<&'a str>,
    pub embedder: Option<&'a str>,
    pub noise: Option<&'a Path>,
}

/// Runs the evaluation described by `manifest` into a fresh `out_dir`.
///
/// Levels found in the manifest are appended to the layout unless
/// `explicit_levels` is set.
pub fn evaluate(
    ctx: &Context,
    manifest: &Path,
    out_dir: &Path,
    tools: Tools<'_>,
    layout: ReportLayout,
    explicit_levels: bool,
) -> Result<RunSummary> {
    let Tools {
        transcriber,
        embedder,
        noise: noise_path,
    } = tools;
    let rows = read_manifest(manifest)?;
    let layout = levels_for(&rows, layout, explicit_levels);

    let mut jobs = Vec::new();
    for row in &rows {
        if row.wer.is_some() {
            let noise = match &row.noise {
                Some(n) => n.parse().map_err(|e: String| anyhow!(e))?,
                None => NoiseCondition::Clean,
            };
            jobs.push(Job { row, noise });
            continue;
        }
        match &row.noise {
            Some(n) => jobs.push(Job {
                row,
                noise: n.parse().map_err(|e: String| anyhow!(e))?,
            }),
            None => jobs.extend(layout.noises.iter().map(|&noise| Job { row, noise })),
        }
    }
    let needs_transcriber = jobs.iter().any(|j| j.row.wer.is_none());
    let transcriber = match (needs_transcriber, transcriber) {
        (true, None) => bail!("manifest rows without a wer column need a transcriber (--transcriber or [external])"),
        (_, t) => t,
    };
    let needs_noise = jobs
        .iter()
        .any(|j| j.row.wer.is_none() && j.noise != NoiseCondition::Clean);
    let noise = match (needs_noise, noise_path) {
        (true, None) => bail!("noisy conditions need a noise file (--noise or [eval] noise)"),
        (true, Some(p)) => Some(read_wav(p).with_context(|| format!("reading noise {}", p.display()))?),
        (false, _) => None,
    };
    let seed = if needs_noise { ctx.seed()? } else { 0 };

    create_dir_atomically(out_dir, |dir| {
        let mixed_dir = dir.join("mixed");
        let mut summary = RunSummary::default();
        let mut embeddings: BTreeMap<(String, String), Result<Vec<f64>, String>> = BTreeMap::new();
        let mut embed = |path: &Path, key: (String, String), template: &str| {
            embeddings
                .entry(key)
                .or_insert_with(|| external::run_vector(template, path).map_err(|e| e.to_string()))
                .clone()
        };

        for job in &jobs {
            let row = job.row;
            let mut record = UtteranceRecord::new(&row.id, &row.level, job.noise);
            let mut failure: Option<String> = None;
            let mut used_external = false;

            match row.wer {
                Some(w) => record.wer = Some(w / 100.0),
                None => {
                    let template = transcriber.expect("checked above");
                    let wav = match (job.noise, &noise) {
                        (NoiseCondition::Snr(db), Some(n)) => {
                            let clean = read_wav(&row.wav).with_context(|| format!("reading {}", row.wav.display()))?;
                            let label = job.noise.to_string();
                            let mixed = mix_at_snr(
                                &clean,
                                n,
                                &SnrSpec {
                                    target: SnrTarget::Db(db),
                                    seed: derive_seed(seed, &[&row.id, &row.level, &label]),
                                },
                            )?;
                            let path = mixed_dir.join(format!(
                                "{}_{}_{}.wav",
                                sanitize(&row.id),
                                sanitize(&row.level),
                                sanitize(&label)
                            ));
                            std::fs::create_dir_all(&mixed_dir)?;
                            write_wav(&path, &mixed.audio)?;
                            path
                        }
                        _ => row.wav.clone(),
                    };
                    let reference = std::fs::read_to_string(&row.transcript)
                        .with_context(|| format!("reading transcript {}", row.transcript.display()))?;
                    used_external = true;
                    match external::run(template, &wav, Some(&row.transcript)) {
                        Ok(hyp) => record.wer = Some(word_error_rate_text(&reference, &hyp)?.wer),
                        Err(e) => failure = Some(format!("transcriber: {e}")),
                    }
                }
            }

            if let (Some(template), NoiseCondition::Clean) = (embedder, job.noise) {
                used_external = true;
                let own = embed(&row.wav, (row.id.clone(), row.level.clone()), template);
                let result = (|| -> Result<(), String> {
                    let own = own?;
                    if let Some(reference) = &row.reference_wav {
                        let other = embed(reference, (row.id.clone(), format!("\0ref:{}", reference.display())), template)?;
                        record.ssim = Some(cosine_similarity(&own, &other).map_err(|e| e.to_string())?.cosine);
                    }
                    if row.level != NORMAL_LEVEL {
                        if let Some(normal) = rows.iter().find(|r| r.id == row.id && r.level == NORMAL_LEVEL) {
                            let other = embed(&normal.wav, (normal.id.clone(), normal.level.clone()), template)?;
                            record.delta_ssim = Some(relative_ssim(&own, &other).map_err(|e| e.to_string())?.cosine);
                        }
                    }
                    Ok(())
                })();
                if let Err(e) = result {
                    let msg = format!("embedder: {e}");
                    failure = Some(match failure {
                        Some(f) => format!("{f}; {msg}"),
                        None => msg,
                    });
                }
            }

            if used_external {
                summary.external_rows += 1;
            }
            if let Some(f) = failure {
                summary.failed_rows += 1;
                summary.first_failure.get_or_insert_with(|| format!("{} ({}): {f}", row.id, row.level));
                record.error = Some(f.replace(['\n', '\r'], " "));
            }
            summary.records.push(record);
        }

        let report = build_report(&summary.records, &layout);
        write_file(&dir.join("records.csv"), records_to_csv(&summary.records)?)?;
        write_file(&dir.join("report.csv"), report.to_csv())?;
        summary.table = report.to_table();
        write_file(&dir.join("report.txt"), &summary.table)?;
        Ok(summary)
    })
}

pub fn eval_run(ctx: &Context, a: &EvalRunArgs) -> Result<()> {
    let layout = layout_from(ctx, a.levels.as_deref(), a.noise_levels.as_deref())?;
    let tools = Tools {
        transcriber: a.transcriber.as_deref().or(ctx.config.transcriber.as_deref()),
        embedder: a.embedder.as_deref().or(ctx.config.embedder.as_deref()),
        noise: a.noise.as_deref().or(ctx.config.noise.as_deref()),
    };
    let summary = evaluate(ctx, &a.manifest, &a.out_dir, tools, layout, a.levels.is_some())?;
    print!("{}", summary.table);
    let mut status = String::new();
    writeln!(
        status,
        "records={} external_rows={} failed_rows={}",
        summary.records.len(),
        summary.external_rows,
        summary.failed_rows
    )?;
    eprint!("{status}");
    check_failures(&summary)
}

/// Fails with [`ExternalFailure`] when every row that needed an external tool failed.
pub fn check_failures(summary: &RunSummary) -> Result<()> {
    if summary.external_rows > 0 && summary.failed_rows == summary.external_rows {
        return Err(ExternalFailure {
            rows: summary.failed_rows,
            first: summary.first_failure.clone().unwrap_or_default(),
        }
        .into());
    }
    if summary.failed_rows > 0 {
        eprintln!("warning: {} rows flagged with errors", summary.failed_rows);
    }
    Ok(())
}
