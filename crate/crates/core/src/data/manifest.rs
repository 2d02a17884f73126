//! Balanced sequence manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sequences::{check_disjoint, enumerate_sequences, PhaseSegment};
use crate::error::{Error, Result};
use crate::text::SurgicalPhase;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Eval,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Eval => "eval",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    #[default]
    Toy,
    Full,
}

impl Profile {
    pub fn as_str(self) -> &'static str {
        match self {
            Profile::Toy => "toy",
            Profile::Full => "full",
        }
    }
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toy" => Ok(Profile::Toy),
            "full" => Ok(Profile::Full),
            other => Err(Error::InvalidConfig(format!("unknown profile {other:?}; expected toy or full"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SequenceRecord {
    pub video_id: String,
    pub start_frame: usize,
    pub length: usize,
    pub stride: usize,
    pub phase: SurgicalPhase,
    /// Container file, relative to the manifest's directory.
    pub path: String,
}

impl SequenceRecord {
    /// Source frame indices covered by the sequence.
    pub fn source_frames(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.length).map(|i| self.start_frame + i * self.stride)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub split: Split,
    pub profile: Profile,
    pub length: usize,
    pub stride: usize,
    pub records: Vec<SequenceRecord>,
}

#[derive(Serialize, Deserialize)]
struct RecordJson {
    video_id: String,
    start_frame: usize,
    phase: SurgicalPhase,
    path: String,
}

#[derive(Serialize, Deserialize)]
struct ManifestJson {
    split: Split,
    profile: Profile,
    length: usize,
    stride: usize,
    records: Vec<RecordJson>,
    #[serde(default)]
    per_phase: BTreeMap<String, usize>,
}

/// Default container path of a record.
pub fn clip_path(video_id: &str, start_frame: usize) -> String {
    format!("clips/{video_id}_f{start_frame:06}.svt")
}

impl DatasetManifest {
    pub fn per_phase_counts(&self) -> BTreeMap<SurgicalPhase, usize> {
        let mut counts: BTreeMap<SurgicalPhase, usize> = SurgicalPhase::ALL.iter().map(|&p| (p, 0)).collect();
        for r in &self.records {
            *counts.entry(r.phase).or_default() += 1;
        }
        counts
    }

    pub fn is_balanced(&self) -> bool {
        let counts = self.per_phase_counts();
        counts.values().all(|&c| c == counts[&SurgicalPhase::Preparation])
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ManifestJson {
            split: self.split,
            profile: self.profile,
            length: self.length,
            stride: self.stride,
            records: self
                .records
                .iter()
                .map(|r| RecordJson {
                    video_id: r.video_id.clone(),
                    start_frame: r.start_frame,
                    phase: r.phase,
                    path: r.path.clone(),
                })
                .collect(),
            per_phase: self
                .per_phase_counts()
                .into_iter()
                .map(|(p, c)| (p.display().to_string(), c))
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ManifestJson = serde_json::from_str(text)?;
        if doc.length == 0 || doc.stride == 0 {
            return Err(Error::Input("manifest length and stride must be positive".into()));
        }
        let records = doc
            .records
            .into_iter()
            .map(|r| SequenceRecord {
                video_id: r.video_id,
                start_frame: r.start_frame,
                length: doc.length,
                stride: doc.stride,
                phase: r.phase,
                path: r.path,
            })
            .collect();
        Ok(DatasetManifest {
            split: doc.split,
            profile: doc.profile,
            length: doc.length,
            stride: doc.stride,
            records,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Samples `per_phase` distinct sequence starts for every phase, uniformly
/// without replacement from all windows that fit inside a single segment.
pub fn build_manifest(
    segments: &[PhaseSegment],
    per_phase: usize,
    length: usize,
    stride: usize,
    seed: u64,
) -> Result<DatasetManifest> {
    check_disjoint(segments)?;
    let mut candidates: BTreeMap<SurgicalPhase, Vec<(String, usize)>> =
        SurgicalPhase::ALL.iter().map(|&p| (p, Vec::new())).collect();
    for seg in segments {
        let starts = enumerate_sequences(seg, length, stride)?;
        let list = candidates.entry(seg.phase).or_default();
        list.extend(starts.into_iter().map(|s| (seg.video_id.clone(), s)));
    }
    for list in candidates.values_mut() {
        list.sort();
    }
    let short: Vec<String> = candidates
        .iter()
        .filter(|(_, c)| c.len() < per_phase)
        .map(|(p, c)| format!("{p}: {} available", c.len()))
        .collect();
    if !short.is_empty() {
        let all: Vec<String> = candidates.iter().map(|(p, c)| format!("{p}={}", c.len())).collect();
        return Err(Error::Capacity(format!(
            "need {per_phase} starts per phase; short: {}; availability: {}",
            short.join(", "),
            all.join(", ")
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(4 * per_phase);
    for (phase, list) in &candidates {
        let mut picked = rand::seq::index::sample(&mut rng, list.len(), per_phase).into_vec();
        picked.sort_unstable();
        records.extend(picked.into_iter().map(|i| {
            let (video_id, start_frame) = &list[i];
            SequenceRecord {
                video_id: video_id.clone(),
                start_frame: *start_frame,
                length,
                stride,
                phase: *phase,
                path: clip_path(video_id, *start_frame),
            }
        }));
    }
    Ok(DatasetManifest {
        split: Split::Train,
        profile: Profile::Toy,
        length,
        stride,
        records,
    })
}
