use surgen::data::{build_manifest, Split, SyntheticCorpus};
use surgen::denoiser::{init_denoiser, DenoiserConfig};
use surgen::diffusion::NoiseSchedule;
use surgen::text::TokenizerTable;
use surgen::train::{train_denoiser, train_vae, ClipSet, TrainConfig};
use surgen::vae::{init_vae, VaeConfig};
use surgen::ParameterStore;

fn clips() -> ClipSet {
    let corpus = SyntheticCorpus {
        split: Split::Train,
        videos: 2,
        segment_frames: 9,
        height: 16,
        width: 16,
        seed: 5,
    };
    let m = build_manifest(&corpus.segments(), 1, 5, 2, 0).unwrap();
    ClipSet::new(
        m.records.iter().map(|r| corpus.clip(r).unwrap()).collect(),
        m.records.iter().map(|r| r.phase).collect(),
    )
    .unwrap()
}

fn tiny_vae() -> VaeConfig {
    VaeConfig {
        channels: [4, 8, 8],
        latent_channels: 4,
        blocks: 1,
        kl_weight: 1e-6,
    }
}

fn tiny_denoiser() -> DenoiserConfig {
    DenoiserConfig {
        d_model: 16,
        n_heads: 2,
        n_blocks: 1,
        latent_channels: 4,
        max_grid: [2, 1, 1],
        mlp_ratio: 2,
        ..DenoiserConfig::toy()
    }
}

fn cfg(steps: usize, micro_batch: usize, accum: usize) -> TrainConfig {
    TrainConfig {
        steps,
        micro_batch,
        accum,
        lr: 1e-3,
        seed: 11,
        ..TrainConfig::toy()
    }
}

fn trained_vae(data: &ClipSet) -> ParameterStore {
    let mut vae = train_vae(&cfg(2, 2, 2), init_vae(&tiny_vae(), 0).unwrap(), data, None)
        .unwrap()
        .params;
    vae.freeze();
    vae
}

#[test]
fn vae_training_is_finite_and_deterministic() {
    let data = clips();
    let run = |seed| {
        train_vae(&TrainConfig { seed, ..cfg(3, 2, 2) }, init_vae(&tiny_vae(), 0).unwrap(), &data, None).unwrap()
    };
    let a = run(1);
    let b = run(1);
    assert_eq!(a.log.len(), 3);
    assert!(a.log.iter().all(|r| r.loss.is_finite()));
    assert_eq!(a.params.fingerprint(), b.params.fingerprint());
    assert_eq!(
        a.log.iter().map(|r| r.loss).collect::<Vec<_>>(),
        b.log.iter().map(|r| r.loss).collect::<Vec<_>>()
    );
    assert_ne!(a.params.fingerprint(), run(2).params.fingerprint());
    assert!(a.params.buffers().contains_key("latent.std"));
}

#[test]
fn denoiser_training_leaves_frozen_parts_untouched() {
    let data = clips();
    let vae = trained_vae(&data);
    let text = TokenizerTable::default();
    let (vae_hash, text_hash) = (vae.fingerprint(), text.fingerprint());
    let (run, check) = train_denoiser(
        &cfg(3, 2, 2),
        init_denoiser(&tiny_denoiser(), 0).unwrap(),
        &data,
        &vae,
        &text,
        &NoiseSchedule::default(),
        None,
    )
    .unwrap();
    assert!(check.unchanged());
    assert_eq!(check.vae_after, vae_hash);
    assert_eq!(check.text_after, text_hash);
    assert_eq!(run.params.step(), 3);
    assert!(vae.is_frozen());
}

#[test]
fn accumulation_matches_a_single_large_batch() {
    let data = clips();
    let vae = trained_vae(&data);
    let text = TokenizerTable::default();
    let init = init_denoiser(&tiny_denoiser(), 3).unwrap().cast::<f64>();
    let run = |micro, accum| {
        train_denoiser(&cfg(2, micro, accum), init.clone(), &data, &vae, &text, &NoiseSchedule::default(), None)
            .unwrap()
            .0
            .params
    };
    let a = run(1, 4);
    let b = run(4, 1);
    let (mut diff, mut norm) = (0.0f64, 0.0f64);
    for (name, p0) in init.params() {
        for ((x0, xa), xb) in p0.data().iter().zip(a.params()[name].data()).zip(b.params()[name].data()) {
            let (da, db) = (xa - x0, xb - x0);
            diff += (da - db).powi(2);
            norm += da.powi(2);
        }
    }
    let rel = (diff / norm).sqrt();
    assert!(norm > 0.0);
    assert!(rel < 1e-5, "relative delta difference {rel}");
}

#[test]
fn mismatched_components_are_rejected_before_training() {
    let data = clips();
    let vae = trained_vae(&data);
    let wrong = DenoiserConfig {
        latent_channels: 8,
        ..tiny_denoiser()
    };
    let err = train_denoiser(
        &cfg(1, 1, 1),
        init_denoiser(&wrong, 0).unwrap(),
        &data,
        &vae,
        &TokenizerTable::default(),
        &NoiseSchedule::default(),
        None,
    );
    assert!(err.is_err());
    let denoiser = init_denoiser(&tiny_denoiser(), 0).unwrap();
    assert!(train_denoiser(
        &cfg(1, 1, 1),
        denoiser.clone(),
        &data,
        &denoiser,
        &TokenizerTable::default(),
        &NoiseSchedule::default(),
        None
    )
    .is_err());
}
