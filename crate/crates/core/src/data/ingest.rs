//! Clip sources, clip storage and ingestion of per-frame image directories.

use std::fs;
use std::path::{Path, PathBuf};

use super::frames::center_crop_width;
use super::manifest::{DatasetManifest, SequenceRecord};
use super::sequences::PhaseSegment;
use super::svt::{read_svt, write_svt, SvtTensor};
use super::synth::SyntheticCorpus;
use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::text::SurgicalPhase;
use crate::video::VideoTensor;

pub trait ClipSource {
    fn clip(&self, record: &SequenceRecord) -> Result<VideoTensor>;
}

impl ClipSource for SyntheticCorpus {
    fn clip(&self, record: &SequenceRecord) -> Result<VideoTensor> {
        SyntheticCorpus::clip(self, record)
    }
}

/// Source videos stored as `<root>/<video_id>/<frame images>`, frames ordered by file name.
#[derive(Clone, Debug)]
pub struct FrameDirSource {
    pub root: PathBuf,
    /// Center-crop every frame to this width when set.
    pub crop_width: Option<usize>,
}

fn is_image(p: &Path) -> bool {
    matches!(
        p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(),
        Some("png" | "jpg" | "jpeg")
    )
}

/// Sorted image files of one video directory.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut frames: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| is_image(p))
        .collect();
    frames.sort();
    Ok(frames)
}

/// Decodes an image into an `[H, W, 3]` tensor in `[-1, 1]`.
pub fn read_frame(path: &Path) -> Result<Tensor<f32>> {
    let img = image::open(path)?.to_rgb8();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(|b| b as f32 / 127.5 - 1.0).collect();
    Tensor::new(vec![h as usize, w as usize, 3], data)
}

impl ClipSource for FrameDirSource {
    fn clip(&self, record: &SequenceRecord) -> Result<VideoTensor> {
        let dir = self.root.join(&record.video_id);
        let files = list_frames(&dir)?;
        let frames = record
            .source_frames()
            .map(|i| {
                let path = files.get(i).ok_or_else(|| {
                    Error::Input(format!("{} has {} frames, record needs frame {i}", dir.display(), files.len()))
                })?;
                let f = read_frame(path)?;
                match self.crop_width {
                    Some(w) => center_crop_width(&f, w),
                    None => Ok(f),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&Tensor<f32>> = frames.iter().collect();
        VideoTensor::clamped(Tensor::stack(&refs)?)
    }
}

fn annotation_phase(name: &str) -> Option<SurgicalPhase> {
    match name {
        "Preparation" => Some(SurgicalPhase::Preparation),
        "CalotTriangleDissection" => Some(SurgicalPhase::CalotTriangleDissection),
        "ClippingCutting" => Some(SurgicalPhase::ClippingAndCutting),
        "GallbladderDissection" => Some(SurgicalPhase::GallbladderDissection),
        _ => None,
    }
}

/// Parses a tab-separated `Frame<TAB>Phase` annotation into contiguous
/// segments. Phases outside the four modelled ones are skipped.
pub fn parse_phase_annotations(video_id: &str, text: &str) -> Result<Vec<PhaseSegment>> {
    let mut segments: Vec<PhaseSegment> = Vec::new();
    let mut prev: Option<usize> = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with("Frame") {
            continue;
        }
        let mut cols = line.split_whitespace();
        let (Some(frame), Some(name)) = (cols.next(), cols.next()) else {
            return Err(Error::Input(format!("annotation line {}: expected frame and phase", lineno + 1)));
        };
        let frame: usize = frame
            .parse()
            .map_err(|_| Error::Input(format!("annotation line {}: bad frame index {frame:?}", lineno + 1)))?;
        if prev.is_some_and(|p| frame <= p) {
            return Err(Error::Input(format!("annotation line {}: frames not increasing", lineno + 1)));
        }
        let contiguous = prev == Some(frame.wrapping_sub(1));
        prev = Some(frame);
        let Some(phase) = annotation_phase(name) else {
            continue;
        };
        match segments.last_mut() {
            Some(s) if contiguous && s.phase == phase && s.last_frame + 1 == frame => s.last_frame = frame,
            _ => segments.push(PhaseSegment::new(video_id, phase, frame, frame)?),
        }
    }
    Ok(segments)
}

/// Writes every record's clip under `root` as an 8-bit container.
pub fn materialize(manifest: &DatasetManifest, source: &dyn ClipSource, root: &Path) -> Result<()> {
    for record in &manifest.records {
        let clip = source.clip(record)?;
        write_clip(&root.join(&record.path), &clip)?;
    }
    Ok(())
}

pub fn write_clip(path: &Path, clip: &VideoTensor) -> Result<()> {
    write_svt(
        path,
        &SvtTensor::U8 {
            shape: clip.shape().to_vec(),
            data: clip.to_u8(),
        },
    )
}

/// Reads a clip stored as either u8 or f32.
pub fn read_clip(path: &Path) -> Result<VideoTensor> {
    match read_svt(path)? {
        SvtTensor::U8 { shape, data } => VideoTensor::from_u8(&shape, &data),
        SvtTensor::F32(t) => VideoTensor::new(t),
    }
}

/// Loads the clip of `record`, resolving its path against `root`.
pub fn load_clip(root: &Path, record: &SequenceRecord) -> Result<VideoTensor> {
    let path = root.join(&record.path);
    if !path.exists() {
        return Err(Error::MissingPrerequisite(path));
    }
    let clip = read_clip(&path)?;
    if clip.frames() != record.length {
        return Err(Error::Input(format!(
            "{} holds {} frames, manifest says {}",
            path.display(),
            clip.frames(),
            record.length
        )));
    }
    Ok(clip)
}
