//! Dataset tooling: tensor container, frame preprocessing, sequence
//! enumeration, manifests, synthetic clips and frame-directory ingestion.

pub mod frames;
pub mod ingest;
pub mod manifest;
pub mod sequences;
pub mod svt;
pub mod synth;

pub use frames::{center_crop_width, crop_frame};
pub use ingest::{load_clip, materialize, parse_phase_annotations, read_clip, write_clip, ClipSource, FrameDirSource};
pub use manifest::{build_manifest, DatasetManifest, Profile, SequenceRecord, Split};
pub use sequences::{enumerate_sequences, PhaseSegment};
pub use svt::{read_svt, read_tensor, write_svt, write_tensor, SvtTensor};
pub use synth::{synth_phase_video, SyntheticCorpus};
