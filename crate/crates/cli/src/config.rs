//! Run configuration: profile defaults, overlaid by a JSON file, overlaid by flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use surgen::data::Profile;
use surgen::denoiser::DenoiserConfig;
use surgen::eval::EvalProtocol;
use surgen::train::{TrainConfig, DEFAULT_SAMPLE_STEPS};
use surgen::vae::VaeConfig;

use crate::exit::CliError;

/// Denoiser learning rate for the 2000-step toy run.
pub const TOY_DENOISER_LR: f64 = 1e-3;

/// Where source data comes from and how sequences are drawn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub length: usize,
    pub stride: usize,
    /// Frame size of the synthetic corpus (toy profile).
    pub height: usize,
    pub width: usize,
    /// Synthetic frames per phase segment (toy profile).
    pub segment_frames: usize,
    pub train_videos: usize,
    pub eval_videos: usize,
    /// Diffusion-training sequences per phase.
    pub train_per_phase: usize,
    /// Eval-split sequences per phase for the classifier and frame extractor.
    pub classifier_per_phase: usize,
    /// Eval-split sequences per phase in the real reference pool.
    pub real_per_phase: usize,
    /// Center-crop width for ingested frames (full profile).
    pub crop_width: Option<usize>,
    /// Video ids used for diffusion training (full profile); every other
    /// annotated video is evaluation data.
    pub train_video_ids: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    pub steps: usize,
    pub guidance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub data_root: PathBuf,
    pub checkpoint_dir: PathBuf,
    pub report_dir: PathBuf,
    pub sample_dir: PathBuf,
    pub log_dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub profile: Profile,
    pub seed: u64,
    pub paths: Paths,
    pub data: DataConfig,
    pub vae: VaeConfig,
    pub vae_train: TrainConfig,
    pub denoiser: DenoiserConfig,
    pub denoiser_train: TrainConfig,
    pub sample: SampleConfig,
    pub eval: EvalProtocol,
    /// Also score an untrained denoiser with the same protocol.
    pub eval_baseline: bool,
}

impl RunConfig {
    pub fn defaults(profile: Profile, out: &Path, data_root: &Path) -> Self {
        let data = match profile {
            Profile::Toy => DataConfig {
                length: 17,
                stride: 2,
                height: 32,
                width: 48,
                segment_frames: 65,
                train_videos: 8,
                eval_videos: 16,
                train_per_phase: 25,
                classifier_per_phase: 100,
                real_per_phase: 100,
                crop_width: None,
                train_video_ids: Vec::new(),
            },
            Profile::Full => DataConfig {
                length: 49,
                stride: 2,
                height: 480,
                width: 720,
                segment_frames: 0,
                train_videos: 40,
                eval_videos: 40,
                train_per_phase: 500,
                classifier_per_phase: 500,
                real_per_phase: 512,
                crop_width: Some(720),
                train_video_ids: (1..=40).map(|i| format!("video{i:02}")).collect(),
            },
        };
        let (vae, denoiser, denoiser_train) = match profile {
            Profile::Toy => (
                VaeConfig::toy(),
                DenoiserConfig::toy(),
                TrainConfig {
                    lr: TOY_DENOISER_LR,
                    ..TrainConfig::toy()
                },
            ),
            Profile::Full => (VaeConfig::full(), DenoiserConfig::full(), TrainConfig::full()),
        };
        let vae_train = match profile {
            Profile::Toy => TrainConfig {
                lr: 2e-3,
                steps: 500,
                ..TrainConfig::toy()
            },
            Profile::Full => TrainConfig {
                lr: 1e-4,
                steps: 20_000,
                ..TrainConfig::full()
            },
        };
        let mut eval = EvalProtocol::for_profile(profile);
        eval.sample_steps = DEFAULT_SAMPLE_STEPS;
        RunConfig {
            profile,
            seed: 0,
            paths: Paths {
                data_root: data_root.to_path_buf(),
                checkpoint_dir: out.join("checkpoints"),
                report_dir: out.join("reports"),
                sample_dir: out.join("samples"),
                log_dir: out.join("logs"),
            },
            data,
            vae,
            vae_train,
            denoiser,
            denoiser_train,
            sample: SampleConfig {
                steps: DEFAULT_SAMPLE_STEPS,
                guidance: 1.0,
            },
            eval,
            eval_baseline: true,
        }
    }

    /// Directory holding prepared clips and manifests.
    pub fn prepared_dir(&self) -> PathBuf {
        self.paths.data_root.join("prepared").join(self.profile.as_str())
    }

    pub fn checkpoint(&self, name: &str) -> PathBuf {
        self.paths.checkpoint_dir.join(name)
    }

    pub fn to_json(&self) -> Result<String, CliError> {
        Ok(serde_json::to_string_pretty(self).map_err(CliError::internal)? + "\n")
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_value().to_string().as_bytes()))
    }
}

/// Values given on the command line; `None` leaves the lower layers alone.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub profile: Option<Profile>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub data_root: Option<PathBuf>,
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Resolves the effective configuration.
pub fn resolve(file: Option<&Path>, flags: &Overrides) -> Result<RunConfig, CliError> {
    let file_value: Option<Value> = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
            let v: Value = serde_json::from_str(&text)
                .map_err(|e| CliError::input(format!("config {} is not valid JSON: {e}", path.display())))?;
            if !v.is_object() {
                return Err(CliError::input(format!("config {} must be a JSON object", path.display())));
            }
            Some(v)
        }
        None => None,
    };
    let file_profile = file_value
        .as_ref()
        .and_then(|v| v.get("profile"))
        .map(|p| serde_json::from_value::<Profile>(p.clone()))
        .transpose()
        .map_err(|e| CliError::input(format!("bad profile in config: {e}")))?;
    let profile = flags.profile.or(file_profile).unwrap_or_default();
    let out = flags.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(profile.as_str()));
    let data_root = flags.data_root.clone().unwrap_or_else(|| PathBuf::from("data"));

    let mut value = RunConfig::defaults(profile, &out, &data_root).to_value();
    if let Some(v) = file_value {
        merge(&mut value, v);
    }
    let mut cfg: RunConfig =
        serde_json::from_value(value).map_err(|e| CliError::input(format!("invalid config: {e}")))?;
    cfg.profile = profile;
    if let Some(seed) = flags.seed {
        cfg.seed = seed;
    }
    if flags.out.is_some() {
        let d = RunConfig::defaults(profile, &out, &cfg.paths.data_root).paths;
        cfg.paths.checkpoint_dir = d.checkpoint_dir;
        cfg.paths.report_dir = d.report_dir;
        cfg.paths.sample_dir = d.sample_dir;
        cfg.paths.log_dir = d.log_dir;
    }
    if let Some(root) = &flags.data_root {
        cfg.paths.data_root = root.clone();
    }
    cfg.vae.validate().map_err(CliError::from)?;
    cfg.denoiser.validate().map_err(CliError::from)?;
    cfg.vae_train.validate().map_err(CliError::from)?;
    cfg.denoiser_train.validate().map_err(CliError::from)?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layers_apply_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.json");
        std::fs::write(&file, r#"{"seed": 4, "denoiser_train": {"steps": 7}, "paths": {"data_root": "/x"}}"#).unwrap();
        let cfg = resolve(Some(&file), &Overrides::default()).unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.denoiser_train.steps, 7);
        assert_eq!(cfg.denoiser_train.lr, TOY_DENOISER_LR);
        assert_eq!(cfg.paths.data_root, PathBuf::from("/x"));
        let flags = Overrides {
            seed: Some(9),
            data_root: Some("/y".into()),
            ..Overrides::default()
        };
        let cfg = resolve(Some(&file), &flags).unwrap();
        assert_eq!((cfg.seed, cfg.paths.data_root.clone()), (9, PathBuf::from("/y")));
    }

    #[test]
    fn unknown_fields_are_input_errors() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.json");
        std::fs::write(&file, r#"{"denoiser_train": {"stepz": 7}}"#).unwrap();
        assert_eq!(resolve(Some(&file), &Overrides::default()).unwrap_err().code, 4);
    }

    #[test]
    fn profile_selects_defaults() {
        let flags = Overrides {
            profile: Some(Profile::Full),
            ..Overrides::default()
        };
        let cfg = resolve(None, &flags).unwrap();
        assert_eq!(cfg.data.length, 49);
        assert_eq!(cfg.denoiser_train.effective_batch(), 4);
        assert_eq!(cfg.fingerprint(), resolve(None, &flags).unwrap().fingerprint());
    }
}
