//! Command implementations.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use surgen::data::{
    build_manifest, materialize, parse_phase_annotations, write_tensor, ClipSource, DatasetManifest, FrameDirSource,
    PhaseSegment, Profile, Split, SyntheticCorpus,
};
use surgen::denoiser::{denoiser_config, init_denoiser};
use surgen::diffusion::NoiseSchedule;
use surgen::eval::{run_evaluation, EvalData};
use surgen::text::{parse_phase, TokenizerTable, DEFAULT_VOCAB, TABLE_SEED};
use surgen::train::{load_component, save_checkpoint, train_denoiser, train_vae, ClipSet, LogRecord, Pipeline, TrainRun};
use surgen::vae::init_vae;
use surgen::{Component, ParameterStore};

use crate::config::RunConfig;
use crate::exit::CliError;

pub const TRAIN_MANIFEST: &str = "train.json";
pub const CLASSIFIER_MANIFEST: &str = "eval_classifier.json";
pub const REAL_MANIFEST: &str = "eval_real.json";
pub const REPORT_FILE: &str = "eval.json";

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::internal(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn counts_line(name: &str, m: &DatasetManifest) -> String {
    let parts: Vec<String> = m.per_phase_counts().iter().map(|(p, n)| format!("{}={n}", p.slug())).collect();
    format!("{name}: {}", parts.join(" "))
}

fn split_manifest(mut m: DatasetManifest, split: Split, profile: Profile) -> DatasetManifest {
    m.split = split;
    m.profile = profile;
    m
}

/// Eval videos are split in two halves: the first feeds the classifier and
/// frame extractor, the second is the real reference pool.
fn halves(segments: Vec<PhaseSegment>) -> (Vec<PhaseSegment>, Vec<PhaseSegment>) {
    let ids: BTreeSet<String> = segments.iter().map(|s| s.video_id.clone()).collect();
    let first: BTreeSet<String> = ids.iter().take(ids.len() / 2).cloned().collect();
    segments.into_iter().partition(|s| first.contains(&s.video_id))
}

struct Prepared {
    train: DatasetManifest,
    classifier: DatasetManifest,
    real: DatasetManifest,
}

fn plan(cfg: &RunConfig, train: &[PhaseSegment], eval: Vec<PhaseSegment>) -> Result<Prepared, CliError> {
    let d = &cfg.data;
    let (cls, real) = halves(eval);
    let mk = |segs: &[PhaseSegment], n: usize, salt: u64, split: Split| -> Result<DatasetManifest, CliError> {
        Ok(split_manifest(
            build_manifest(segs, n, d.length, d.stride, cfg.seed.wrapping_add(salt))?,
            split,
            cfg.profile,
        ))
    };
    Ok(Prepared {
        train: mk(train, d.train_per_phase, 0, Split::Train)?,
        classifier: mk(&cls, d.classifier_per_phase, 1, Split::Eval)?,
        real: mk(&real, d.real_per_phase, 2, Split::Eval)?,
    })
}

fn synthetic(cfg: &RunConfig, split: Split, videos: usize) -> SyntheticCorpus {
    SyntheticCorpus {
        split,
        videos,
        segment_frames: cfg.data.segment_frames,
        height: cfg.data.height,
        width: cfg.data.width,
        seed: cfg.seed,
    }
}

/// Annotated videos under `<root>/phase_annotations/<id>-phase.txt`.
fn annotated_segments(root: &Path) -> Result<Vec<(String, Vec<PhaseSegment>)>, CliError> {
    let dir = root.join("phase_annotations");
    let entries = fs::read_dir(&dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    files.sort();
    let mut out = Vec::new();
    for f in files {
        let Some(id) = f
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_suffix("-phase.txt"))
        else {
            continue;
        };
        let text = fs::read_to_string(&f).map_err(|e| CliError::data(format!("{}: {e}", f.display())))?;
        out.push((id.to_string(), parse_phase_annotations(id, &text)?));
    }
    if out.is_empty() {
        return Err(CliError::data(format!("no *-phase.txt annotations under {}", dir.display())));
    }
    Ok(out)
}

pub fn build_data(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let root = &cfg.paths.data_root;
    if !root.is_dir() {
        return Err(CliError::data(format!("data root {} does not exist", root.display())));
    }
    let prep = cfg.prepared_dir();
    let (prepared, source): (Prepared, Box<dyn Fn(Split) -> Box<dyn ClipSource>>) = match cfg.profile {
        Profile::Toy => {
            let train = synthetic(cfg, Split::Train, cfg.data.train_videos);
            let eval = synthetic(cfg, Split::Eval, cfg.data.eval_videos);
            let p = plan(cfg, &train.segments(), eval.segments())?;
            let c = cfg.clone();
            (
                p,
                Box::new(move |split| {
                    let n = match split {
                        Split::Train => c.data.train_videos,
                        Split::Eval => c.data.eval_videos,
                    };
                    Box::new(synthetic(&c, split, n)) as Box<dyn ClipSource>
                }),
            )
        }
        Profile::Full => {
            let all = annotated_segments(root)?;
            let train_ids: BTreeSet<&String> = cfg.data.train_video_ids.iter().collect();
            let (mut train, mut eval) = (Vec::new(), Vec::new());
            for (id, segs) in all {
                if train_ids.contains(&id) {
                    train.extend(segs);
                } else {
                    eval.extend(segs);
                }
            }
            let p = plan(cfg, &train, eval)?;
            let src = FrameDirSource {
                root: root.join("frames"),
                crop_width: cfg.data.crop_width,
            };
            (p, Box::new(move |_| Box::new(src.clone()) as Box<dyn ClipSource>))
        }
    };
    for (name, m) in [
        (TRAIN_MANIFEST, &prepared.train),
        (CLASSIFIER_MANIFEST, &prepared.classifier),
        (REAL_MANIFEST, &prepared.real),
    ] {
        materialize(m, source(m.split).as_ref(), &prep)?;
        m.save(&prep.join(name))?;
        writeln!(out, "{}", counts_line(name.trim_end_matches(".json"), m)).map_err(CliError::internal)?;
    }
    write_file(&prep.join("run_config.json"), cfg.to_json()?.as_bytes())?;
    Ok(())
}

fn load_manifest(cfg: &RunConfig, name: &str) -> Result<DatasetManifest, CliError> {
    let path = cfg.prepared_dir().join(name);
    if !path.is_file() {
        return Err(CliError::missing(format!(
            "manifest {} not found; run build-data first",
            path.display()
        )));
    }
    Ok(DatasetManifest::load(&path)?)
}

fn load_clips(cfg: &RunConfig, m: &DatasetManifest) -> Result<ClipSet, CliError> {
    Ok(ClipSet::from_manifest(m, &cfg.prepared_dir())?)
}

fn with_run_config(mut params: ParameterStore, cfg: &RunConfig) -> ParameterStore {
    let mut meta = params.meta().clone();
    meta["run_config"] = cfg.to_value();
    params.set_meta(meta);
    params
}

fn write_log(cfg: &RunConfig, name: &str, log: &[LogRecord]) -> Result<(), CliError> {
    let mut text = String::new();
    for r in log {
        text.push_str(&serde_json::to_string(r).map_err(CliError::internal)?);
        text.push('\n');
    }
    write_file(&cfg.paths.log_dir.join(format!("{name}.jsonl")), text.as_bytes())
}

fn finish(cfg: &RunConfig, name: &str, run: TrainRun, out: &mut dyn Write) -> Result<(), CliError> {
    let dir = cfg.checkpoint(name);
    save_checkpoint(&with_run_config(run.params, cfg), &dir)?;
    write_log(cfg, name, &run.log)?;
    writeln!(out, "saved {name} checkpoint to {}", dir.display()).map_err(CliError::internal)?;
    Ok(())
}

pub fn train_vae_cmd(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let m = load_manifest(cfg, TRAIN_MANIFEST)?;
    let data = load_clips(cfg, &m)?;
    let tcfg = surgen::train::TrainConfig {
        seed: cfg.seed,
        ..cfg.vae_train.clone()
    };
    let run = train_vae(&tcfg, init_vae(&cfg.vae, cfg.seed)?, &data, Some(&mut *out))?;
    finish(cfg, "vae", run, out)
}

pub fn text_table(cfg: &RunConfig) -> TokenizerTable {
    TokenizerTable::new(DEFAULT_VOCAB, cfg.denoiser.d_text, cfg.denoiser.max_text_len, TABLE_SEED)
}

fn load_vae(cfg: &RunConfig) -> Result<ParameterStore, CliError> {
    let mut vae = load_component(&cfg.checkpoint("vae"), Component::Vae)?;
    vae.freeze();
    Ok(vae)
}

pub fn train_denoiser_cmd(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let vae = load_vae(cfg)?;
    let m = load_manifest(cfg, TRAIN_MANIFEST)?;
    let data = load_clips(cfg, &m)?;
    let text = text_table(cfg);
    let tcfg = surgen::train::TrainConfig {
        seed: cfg.seed,
        ..cfg.denoiser_train.clone()
    };
    let init = init_denoiser(&cfg.denoiser, cfg.seed)?;
    let (run, check) = train_denoiser(&tcfg, init, &data, &vae, &text, &NoiseSchedule::default(), Some(&mut *out))?;
    if !check.unchanged() {
        return Err(CliError::internal("frozen components changed during denoiser training"));
    }
    save_checkpoint(&with_run_config(text.to_store(), cfg), &cfg.checkpoint("text"))?;
    finish(cfg, "denoiser", run, out)
}

fn load_pipeline(cfg: &RunConfig) -> Result<Pipeline, CliError> {
    let vae = load_vae(cfg)?;
    let mut denoiser = load_component(&cfg.checkpoint("denoiser"), Component::Denoiser)?;
    denoiser.freeze();
    let text = TokenizerTable::from_store(&load_component(&cfg.checkpoint("text"), Component::Text)?)?;
    Ok(Pipeline::new(vae, denoiser, text, NoiseSchedule::default())?)
}

/// File name of the `index`-th sample of a phase and base seed.
pub fn sample_name(slug: &str, seed: u64, index: usize) -> String {
    format!("{slug}_seed{seed}_{index:03}.svt")
}

pub fn sample_cmd(
    cfg: &RunConfig,
    prompt: &str,
    n: usize,
    out_dir: Option<&Path>,
    out: &mut dyn Write,
) -> Result<Vec<PathBuf>, CliError> {
    let phase = parse_phase(prompt)?;
    if n == 0 {
        return Err(CliError::input("--n must be at least 1"));
    }
    let pipeline = load_pipeline(cfg)?;
    let dir = out_dir.map_or_else(|| cfg.paths.sample_dir.clone(), Path::to_path_buf);
    let items: Vec<_> = (0..n).map(|i| (phase, cfg.seed.wrapping_add(i as u64))).collect();
    let mut paths = Vec::with_capacity(n);
    for (chunk_idx, chunk) in items.chunks(cfg.eval.sample_batch.max(1)).enumerate() {
        let videos = pipeline.sample_batch(chunk, cfg.sample.steps, cfg.sample.guidance)?;
        for (j, v) in videos.iter().enumerate() {
            let i = chunk_idx * cfg.eval.sample_batch.max(1) + j;
            let path = dir.join(sample_name(&phase.slug(), cfg.seed, i));
            write_tensor(&path, v.as_tensor())?;
            writeln!(out, "{}", path.display()).map_err(CliError::internal)?;
            paths.push(path);
        }
    }
    Ok(paths)
}

pub fn evaluate_cmd(cfg: &RunConfig, out: &mut dyn Write) -> Result<PathBuf, CliError> {
    let pipeline = load_pipeline(cfg)?;
    let train = load_manifest(cfg, TRAIN_MANIFEST)?;
    let cls_manifest = load_manifest(cfg, CLASSIFIER_MANIFEST)?;
    let real_manifest = load_manifest(cfg, REAL_MANIFEST)?;
    let cls_clips = load_clips(cfg, &cls_manifest)?;
    let real = load_clips(cfg, &real_manifest)?;
    let train_videos: BTreeSet<String> = train.records.iter().map(|r| r.video_id.clone()).collect();

    let baseline = if cfg.eval_baseline {
        let dcfg = denoiser_config(&pipeline.denoiser)?;
        let mut untrained = init_denoiser(&dcfg, cfg.seed)?;
        untrained.set_meta(pipeline.denoiser.meta().clone());
        untrained.freeze();
        Some(Pipeline::new(
            pipeline.vae.clone(),
            untrained,
            pipeline.text.clone(),
            pipeline.sched.clone(),
        )?)
    } else {
        None
    };
    let mut proto = cfg.eval.clone();
    proto.profile = cfg.profile;
    proto.seed = cfg.seed;
    proto.classifier.seed = cfg.seed;
    proto.frame_extractor.seed = cfg.seed;
    let report = run_evaluation(
        &proto,
        &pipeline,
        baseline.as_ref(),
        &EvalData {
            classifier_manifest: &cls_manifest,
            classifier_clips: &cls_clips,
            train_videos: &train_videos,
            real: &real,
            config_fingerprint: cfg.fingerprint(),
        },
    )?;
    let path = cfg.paths.report_dir.join(REPORT_FILE);
    write_file(&path, report.to_json()?.as_bytes())?;
    writeln!(
        out,
        "fid={:.4} fvd={:.4} top1={:.4} auroc={:.4} n_generated={} n_real={}",
        report.fid, report.fvd, report.top1, report.auroc, report.n_generated, report.n_real
    )
    .map_err(CliError::internal)?;
    if let Some(b) = &report.baseline {
        writeln!(
            out,
            "baseline fid={:.4} fvd={:.4} top1={:.4} auroc={:.4}",
            b.fid, b.fvd, b.top1, b.auroc
        )
        .map_err(CliError::internal)?;
    }
    writeln!(out, "report: {}", path.display()).map_err(CliError::internal)?;
    Ok(path)
}
