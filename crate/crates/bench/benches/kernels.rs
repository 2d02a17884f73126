use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use surgen::denoiser::{denoise, init_denoiser, DenoiserConfig};
use surgen::eval::{auroc_binary, frechet_distance, gaussian_stats};
use surgen::vae::{encode, init_vae, VaeConfig};
use surgen::{LatentVideo, Tensor, VideoTensor};

fn denoiser_forward(c: &mut Criterion) {
    let cfg = DenoiserConfig::toy();
    let params = init_denoiser(&cfg, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let latent = LatentVideo::new(Tensor::randn(&[5, 4, 6, cfg.latent_channels], 1.0, &mut rng)).unwrap();
    let text = Tensor::randn(&[cfg.max_text_len, cfg.d_text], 1.0, &mut rng);
    c.bench_function("denoiser_toy_forward", |b| {
        b.iter(|| denoise(black_box(&latent), 500, &text, &params).unwrap())
    });
}

fn vae_encode(c: &mut Criterion) {
    let params = init_vae(&VaeConfig::toy(), 0).unwrap();
    let video = VideoTensor::new(Tensor::from_fn(&[17, 32, 48, 3], |i| (i as f32 * 0.01).sin())).unwrap();
    c.bench_function("vae_toy_encode", |b| b.iter(|| encode(black_box(&video), &params).unwrap()));
}

fn frechet(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut feats = || gaussian_stats(&DMatrix::from_fn(400, 64, |_, _| rng.random::<f64>())).unwrap();
    let (a, b) = (feats(), feats());
    c.bench_function("frechet_d64", |bn| bn.iter(|| frechet_distance(black_box(&a), &b).unwrap()));
}

fn auroc(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let scores: Vec<f64> = (0..1000).map(|_| (rng.random::<f64>() * 50.0).round()).collect();
    let pos: Vec<bool> = (0..1000).map(|_| rng.random()).collect();
    c.bench_function("auroc_n1000_ties", |b| b.iter(|| auroc_binary(black_box(&scores), &pos).unwrap()));
}

criterion_group! {
    name = kernels;
    config = Criterion::default().sample_size(10);
    targets = denoiser_forward, vae_encode, frechet, auroc
}
criterion_main!(kernels);
