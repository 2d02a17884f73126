//! 3D VAE: 8x spatial and 4x temporal compression with the `1 + 4k` frame rule.
//!
//! The encoder replicates the first frame three times so a `1 + 4k` clip
//! becomes `4(k + 1)` frames, then alternates space-to-depth folds, channel
//! projections and residual convolutions. The decoder mirrors it and drops the
//! three padding frames.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layers::{init_linear, init_norm, init_res_block, linear, norm, res_block};
use crate::nn::{Graph, Scalar, Tensor, Var};
use crate::params::{Bound, Component, ParameterStore};
use crate::video::{LatentVideo, VideoTensor};

pub const LOGVAR_MIN: f64 = -30.0;
pub const LOGVAR_MAX: f64 = 20.0;
const PAD_FRAMES: usize = 3;

const SPATIAL: [usize; 3] = [1, 3, 3];
const SPATIOTEMPORAL: [usize; 3] = [3, 3, 3];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VaeConfig {
    /// Widths after the first, second and third downsampling stage.
    pub channels: [usize; 3],
    pub latent_channels: usize,
    /// Residual blocks per stage.
    pub blocks: usize,
    pub kl_weight: f64,
}

impl VaeConfig {
    pub fn toy() -> Self {
        VaeConfig {
            channels: [24, 48, 96],
            latent_channels: 8,
            blocks: 1,
            kl_weight: 1e-6,
        }
    }

    pub fn full() -> Self {
        VaeConfig {
            channels: [64, 128, 256],
            latent_channels: 16,
            blocks: 2,
            kl_weight: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.contains(&0) || self.latent_channels == 0 || self.blocks == 0 {
            return Err(Error::InvalidConfig(format!("VAE widths must be positive: {self:?}")));
        }
        if !(self.kl_weight >= 0.0) {
            return Err(Error::InvalidConfig(format!("kl_weight {} must be >= 0", self.kl_weight)));
        }
        Ok(())
    }
}

/// Latent dims `[1 + (T-1)/4, H/8, W/8, C_lat]` of a `[T, H, W, 3]` video.
pub fn latent_shape(video: &[usize], latent_channels: usize) -> Result<[usize; 4]> {
    match video {
        &[t, h, w, 3] if t % 4 == 1 && h % 8 == 0 && w % 8 == 0 && h > 0 && w > 0 => {
            Ok([1 + (t - 1) / 4, h / 8, w / 8, latent_channels])
        }
        _ => Err(Error::shape(format!(
            "VAE input must be [1+4k, 8m, 8n, 3], got {video:?}"
        ))),
    }
}

/// Pixel dims `[1 + 4(T'-1), 8H', 8W', 3]` decoded from a latent.
pub fn video_shape(latent: &[usize]) -> Result<[usize; 4]> {
    match latent {
        &[t, h, w, _] if t > 0 && h > 0 && w > 0 => Ok([1 + 4 * (t - 1), 8 * h, 8 * w, 3]),
        _ => Err(Error::shape(format!("latent must be [T', H', W', C], got {latent:?}"))),
    }
}

/// Diagonal Gaussian posterior over the latent.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentDistribution {
    pub mean: Tensor<f32>,
    pub log_variance: Tensor<f32>,
}

impl LatentDistribution {
    pub fn new(mean: Tensor<f32>, log_variance: Tensor<f32>) -> Result<Self> {
        mean.expect_shape(log_variance.shape())?;
        let log_variance = log_variance.map(|v| v.clamp(LOGVAR_MIN as f32, LOGVAR_MAX as f32));
        Ok(LatentDistribution { mean, log_variance })
    }
}

pub fn init_vae(cfg: &VaeConfig, seed: u64) -> Result<ParameterStore> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ParameterStore::new(Component::Vae);
    let [c0, c1, c2] = cfg.channels;
    let cl = cfg.latent_channels;

    init_linear(&mut s, "enc.in", 12, c0, 1.0, &mut rng);
    init_linear(&mut s, "enc.down1", 4 * c0, c1, 1.0, &mut rng);
    init_linear(&mut s, "enc.down2", 16 * c1, c2, 1.0, &mut rng);
    for i in 0..cfg.blocks {
        init_res_block(&mut s, &format!("enc.s0.{i}"), SPATIAL, c0, &mut rng);
        init_res_block(&mut s, &format!("enc.s1.{i}"), SPATIAL, c1, &mut rng);
        init_res_block(&mut s, &format!("enc.s2.{i}"), SPATIOTEMPORAL, c2, &mut rng);
    }
    init_norm(&mut s, "enc.norm", c2);
    init_linear(&mut s, "enc.out", c2, 2 * cl, 1.0, &mut rng);

    init_linear(&mut s, "dec.in", cl, c2, 1.0, &mut rng);
    init_linear(&mut s, "dec.up2", c2, 16 * c1, 1.0, &mut rng);
    init_linear(&mut s, "dec.up1", c1, 4 * c0, 1.0, &mut rng);
    for i in 0..cfg.blocks {
        init_res_block(&mut s, &format!("dec.s2.{i}"), SPATIOTEMPORAL, c2, &mut rng);
        init_res_block(&mut s, &format!("dec.s1.{i}"), SPATIAL, c1, &mut rng);
        init_res_block(&mut s, &format!("dec.s0.{i}"), SPATIAL, c0, &mut rng);
    }
    init_norm(&mut s, "dec.norm", c0);
    init_linear(&mut s, "dec.out", c0, 12, 1.0, &mut rng);

    s.set_meta(serde_json::json!({ "config": cfg }));
    Ok(s)
}

/// Reads the architecture recorded in a VAE store.
pub fn vae_config<S: Scalar>(store: &ParameterStore<S>) -> Result<VaeConfig> {
    if store.component() != Component::Vae {
        return Err(Error::ComponentTag {
            expected: Component::Vae.to_string(),
            found: store.component().to_string(),
        });
    }
    let cfg: VaeConfig = serde_json::from_value(store.meta()["config"].clone())
        .map_err(|e| Error::Checkpoint(format!("VAE config missing from store metadata: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

/// `x: [B, T, H, W, 3]` -> `(mean, clamped log-variance)`, each `[B, T', H', W', C_lat]`.
pub fn encoder_graph<'g, S: Scalar>(
    p: &Bound<'g, S>,
    cfg: &VaeConfig,
    x: Var<'g, S>,
) -> Result<(Var<'g, S>, Var<'g, S>)> {
    let s = x.shape();
    if s.len() != 5 {
        return Err(Error::shape(format!("VAE batch must be [B, T, H, W, 3], got {s:?}")));
    }
    latent_shape(&s[1..], cfg.latent_channels)?;
    let first = x.narrow(1, 0, 1)?;
    let mut h = Var::concat(&[first, first, first, x], 1)?;

    h = linear(p, "enc.in", h.space_to_depth([1, 2, 2])?)?;
    for i in 0..cfg.blocks {
        h = res_block(p, &format!("enc.s0.{i}"), h, SPATIAL)?;
    }
    h = linear(p, "enc.down1", h.space_to_depth([1, 2, 2])?)?;
    for i in 0..cfg.blocks {
        h = res_block(p, &format!("enc.s1.{i}"), h, SPATIAL)?;
    }
    h = linear(p, "enc.down2", h.space_to_depth([4, 2, 2])?)?;
    for i in 0..cfg.blocks {
        h = res_block(p, &format!("enc.s2.{i}"), h, SPATIOTEMPORAL)?;
    }
    let out = linear(p, "enc.out", norm(p, "enc.norm", h)?.silu())?;
    let cl = cfg.latent_channels;
    let mean = out.narrow(4, 0, cl)?;
    let logvar = out.narrow(4, cl, cl)?.clamp(LOGVAR_MIN, LOGVAR_MAX);
    Ok((mean, logvar))
}

/// `z: [B, T', H', W', C_lat]` -> unclamped pixels `[B, 1+4(T'-1), 8H', 8W', 3]`.
pub fn decoder_graph<'g, S: Scalar>(p: &Bound<'g, S>, cfg: &VaeConfig, z: Var<'g, S>) -> Result<Var<'g, S>> {
    let s = z.shape();
    if s.len() != 5 || s[4] != cfg.latent_channels {
        return Err(Error::shape(format!(
            "latent batch must be [B, T', H', W', {}], got {s:?}",
            cfg.latent_channels
        )));
    }
    let mut h = linear(p, "dec.in", z)?;
    for i in 0..cfg.blocks {
        h = res_block(p, &format!("dec.s2.{i}"), h, SPATIOTEMPORAL)?;
    }
    h = linear(p, "dec.up2", h)?.depth_to_space([4, 2, 2])?;
    for i in 0..cfg.blocks {
        h = res_block(p, &format!("dec.s1.{i}"), h, SPATIAL)?;
    }
    h = linear(p, "dec.up1", h)?.depth_to_space([1, 2, 2])?;
    for i in 0..cfg.blocks {
        h = res_block(p, &format!("dec.s0.{i}"), h, SPATIAL)?;
    }
    let out = linear(p, "dec.out", norm(p, "dec.norm", h)?.silu())?.depth_to_space([1, 2, 2])?;
    let frames = out.shape()[1];
    out.narrow(1, PAD_FRAMES, frames - PAD_FRAMES)
}

/// Scalar training objective on a batch; `noise` drives the reparameterized sample.
pub fn vae_loss_graph<'g, S: Scalar>(
    p: &Bound<'g, S>,
    cfg: &VaeConfig,
    x: Var<'g, S>,
    noise: Var<'g, S>,
) -> Result<Var<'g, S>> {
    let (mean, logvar) = encoder_graph(p, cfg, x)?;
    let z = mean.add(logvar.scale(0.5).exp().mul(noise)?)?;
    let recon = decoder_graph(p, cfg, z)?;
    let rec = recon.mse(x)?;
    if cfg.kl_weight == 0.0 {
        return Ok(rec);
    }
    // 0.5 * (mu^2 + sigma^2 - log sigma^2 - 1)
    let kl = mean
        .square()
        .add(logvar.exp())?
        .sub(logvar)?
        .add_scalar(-1.0)
        .scale(0.5)
        .mean_all();
    rec.add(kl.scale(cfg.kl_weight))
}

fn stack_videos(videos: &[&VideoTensor]) -> Result<Tensor<f32>> {
    let refs: Vec<&Tensor<f32>> = videos.iter().map(|v| v.as_tensor()).collect();
    Tensor::stack(&refs)
}

/// Encodes a batch of equally shaped clips.
pub fn encode_batch(videos: &[&VideoTensor], params: &ParameterStore) -> Result<Vec<LatentDistribution>> {
    let cfg = vae_config(params)?;
    for v in videos {
        latent_shape(v.shape(), cfg.latent_channels)?;
    }
    let g = Graph::new();
    let p = params.bind(&g, false);
    let x = g.constant(stack_videos(videos)?);
    let (mean, logvar) = encoder_graph(&p, &cfg, x)?;
    let means = mean.to_tensor().unstack();
    let logvars = logvar.to_tensor().unstack();
    means
        .into_iter()
        .zip(logvars)
        .map(|(m, l)| LatentDistribution::new(m, l))
        .collect()
}

pub fn encode(video: &VideoTensor, params: &ParameterStore) -> Result<LatentDistribution> {
    Ok(encode_batch(&[video], params)?.remove(0))
}

/// Reparameterized draw `mean + exp(0.5 * log_variance) * noise`.
pub fn sample_latent(dist: &LatentDistribution, noise: &Tensor<f32>) -> Result<LatentVideo> {
    noise.expect_shape(dist.mean.shape())?;
    let data = dist
        .mean
        .data()
        .iter()
        .zip(dist.log_variance.data())
        .zip(noise.data())
        .map(|((&m, &lv), &n)| m + (0.5 * lv).exp() * n)
        .collect();
    LatentVideo::new(Tensor::new(dist.mean.shape().to_vec(), data)?)
}

/// Decodes a batch of equally shaped latents into clamped clips.
pub fn decode_batch(latents: &[&LatentVideo], params: &ParameterStore) -> Result<Vec<VideoTensor>> {
    let cfg = vae_config(params)?;
    for l in latents {
        if !l.as_tensor().is_finite() {
            return Err(Error::Numeric("non-finite latent".into()));
        }
        video_shape(l.shape())?;
    }
    let refs: Vec<&Tensor<f32>> = latents.iter().map(|l| l.as_tensor()).collect();
    let g = Graph::new();
    let p = params.bind(&g, false);
    let out = decoder_graph(&p, &cfg, g.constant(Tensor::stack(&refs)?))?.to_tensor();
    out.unstack().into_iter().map(VideoTensor::clamped).collect()
}

pub fn decode(latent: &LatentVideo, params: &ParameterStore) -> Result<VideoTensor> {
    Ok(decode_batch(&[latent], params)?.remove(0))
}

/// Reconstruction MSE plus `kl_weight` times the mean per-element KL to `N(0, 1)`.
pub fn vae_loss(video: &VideoTensor, recon: &VideoTensor, dist: &LatentDistribution, kl_weight: f64) -> Result<f64> {
    video.as_tensor().expect_shape(recon.shape())?;
    dist.mean.expect_shape(dist.log_variance.shape())?;
    let n = video.as_tensor().numel() as f64;
    let mse = video
        .as_tensor()
        .data()
        .iter()
        .zip(recon.as_tensor().data())
        .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
        .sum::<f64>()
        / n;
    if kl_weight == 0.0 {
        return Ok(mse);
    }
    let kl = dist
        .mean
        .data()
        .iter()
        .zip(dist.log_variance.data())
        .map(|(&m, &lv)| {
            let (m, lv) = (m as f64, lv as f64);
            0.5 * (m * m + lv.exp() - lv - 1.0)
        })
        .sum::<f64>()
        / dist.mean.numel().max(1) as f64;
    Ok(mse + kl_weight * kl)
}

/// Fits per-channel latent statistics and stores them as buffers.
pub fn fit_latent_stats(params: &mut ParameterStore, dists: &[LatentDistribution]) -> Result<()> {
    let cfg = vae_config(params)?;
    let c = cfg.latent_channels;
    let mut sum = vec![0f64; c];
    let mut sq = vec![0f64; c];
    let mut count = 0usize;
    for d in dists {
        for row in d.mean.data().chunks_exact(c) {
            for k in 0..c {
                sum[k] += row[k] as f64;
                sq[k] += (row[k] as f64).powi(2);
            }
            count += 1;
        }
    }
    if count < 2 {
        return Err(Error::SampleSize { needed: 2, got: count });
    }
    let mean: Vec<f32> = sum.iter().map(|s| (s / count as f64) as f32).collect();
    let std: Vec<f32> = sum
        .iter()
        .zip(&sq)
        .map(|(s, q)| {
            let m = s / count as f64;
            ((q / count as f64 - m * m).max(0.0).sqrt().max(1e-4)) as f32
        })
        .collect();
    params.set_buffer("latent.mean", Tensor::new(vec![c], mean)?);
    params.set_buffer("latent.std", Tensor::new(vec![c], std)?);
    Ok(())
}

fn latent_stats(params: &ParameterStore) -> Option<(&Tensor<f32>, &Tensor<f32>)> {
    Some((params.buffer("latent.mean").ok()?, params.buffer("latent.std").ok()?))
}

/// Maps a raw latent into the standardized space diffusion runs in.
pub fn standardize(latent: &LatentVideo, params: &ParameterStore) -> Result<LatentVideo> {
    let Some((mean, std)) = latent_stats(params) else {
        return Ok(latent.clone());
    };
    let c = mean.numel();
    let data = latent
        .as_tensor()
        .data()
        .chunks_exact(c)
        .flat_map(|row| (0..c).map(move |k| (row[k] - mean.data()[k]) / std.data()[k]))
        .collect();
    LatentVideo::new(Tensor::new(latent.shape().to_vec(), data)?)
}

/// Inverse of [`standardize`].
pub fn destandardize(latent: &LatentVideo, params: &ParameterStore) -> Result<LatentVideo> {
    let Some((mean, std)) = latent_stats(params) else {
        return Ok(latent.clone());
    };
    let c = mean.numel();
    let data = latent
        .as_tensor()
        .data()
        .chunks_exact(c)
        .flat_map(|row| (0..c).map(move |k| row[k] * std.data()[k] + mean.data()[k]))
        .collect();
    LatentVideo::new(Tensor::new(latent.shape().to_vec(), data)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tiny() -> VaeConfig {
        VaeConfig {
            channels: [4, 6, 8],
            latent_channels: 3,
            blocks: 1,
            kl_weight: 1e-6,
        }
    }

    fn video(shape: [usize; 4]) -> VideoTensor {
        VideoTensor::new(Tensor::from_fn(&shape, |i| ((i % 17) as f32 / 8.0 - 1.0) * 0.9)).unwrap()
    }

    #[test]
    fn shape_contract_examples() {
        assert_eq!(latent_shape(&[49, 480, 720, 3], 16).unwrap(), [13, 60, 90, 16]);
        assert_eq!(latent_shape(&[17, 32, 48, 3], 8).unwrap(), [5, 4, 6, 8]);
        assert_eq!(latent_shape(&[1, 8, 8, 3], 8).unwrap(), [1, 1, 1, 8]);
        assert_eq!(video_shape(&[13, 60, 90, 16]).unwrap(), [49, 480, 720, 3]);
        assert_eq!(video_shape(&[5, 4, 6, 8]).unwrap(), [17, 32, 48, 3]);
        assert!(latent_shape(&[16, 32, 48, 3], 8).is_err());
        assert!(latent_shape(&[17, 30, 48, 3], 8).is_err());
    }

    #[test]
    fn encode_decode_toy_dims() {
        let params = init_vae(&VaeConfig::toy(), 0).unwrap();
        let v = video([17, 32, 48, 3]);
        let d = encode(&v, &params).unwrap();
        assert_eq!(d.mean.shape(), &[5, 4, 6, 8]);
        let z = sample_latent(&d, &Tensor::zeros(d.mean.shape())).unwrap();
        let out = decode(&z, &params).unwrap();
        assert_eq!(out.shape(), &[17, 32, 48, 3]);
        assert!(out.as_tensor().data().iter().all(|x| (-1.0..=1.0).contains(x)));

        let single = encode(&video([1, 8, 8, 3]), &params).unwrap();
        assert_eq!(single.mean.shape(), &[1, 1, 1, 8]);
    }

    #[test]
    fn encode_rejects_indivisible_and_decode_rejects_non_finite() {
        let params = init_vae(&tiny(), 0).unwrap();
        assert!(matches!(encode(&video([4, 8, 8, 3]), &params), Err(Error::Shape(_))));
        assert!(matches!(encode(&video([5, 12, 8, 3]), &params), Err(Error::Shape(_))));
        let mut t = Tensor::zeros(&[1, 1, 1, 3]);
        t.data_mut()[0] = f32::NAN;
        assert!(LatentVideo::new(t).is_err());
    }

    #[test]
    fn deterministic_encode() {
        let params = init_vae(&tiny(), 3).unwrap();
        let v = video([5, 16, 8, 3]);
        assert_eq!(encode(&v, &params).unwrap(), encode(&v, &params).unwrap());
    }

    #[test]
    fn sample_latent_examples() {
        let mean = Tensor::new(vec![1, 1, 1, 2], vec![0.5, -1.0]).unwrap();
        let d = LatentDistribution::new(mean.clone(), Tensor::zeros(&[1, 1, 1, 2])).unwrap();
        assert_eq!(sample_latent(&d, &Tensor::zeros(&[1, 1, 1, 2])).unwrap().as_tensor(), &mean);
        let n = Tensor::new(vec![1, 1, 1, 2], vec![0.25, 2.0]).unwrap();
        assert_eq!(sample_latent(&d, &n).unwrap().as_tensor().data(), &[0.75, 1.0]);
        let d = LatentDistribution::new(Tensor::zeros(&[1, 1, 1, 1]), Tensor::full(&[1, 1, 1, 1], 4f32.ln())).unwrap();
        let z = sample_latent(&d, &Tensor::full(&[1, 1, 1, 1], 1.0)).unwrap();
        assert!((z.as_tensor().data()[0] - 2.0).abs() < 1e-6);
        assert!(sample_latent(&d, &Tensor::zeros(&[1, 1, 1, 2])).is_err());
    }

    #[test]
    fn log_variance_is_clamped() {
        let d = LatentDistribution::new(Tensor::zeros(&[2]), Tensor::new(vec![2], vec![-100.0, 100.0]).unwrap()).unwrap();
        assert_eq!(d.log_variance.data(), &[-30.0, 20.0]);
    }

    #[test]
    fn loss_examples() {
        let v = video([1, 8, 8, 3]);
        let zero = LatentDistribution::new(Tensor::zeros(&[1, 1, 1, 1]), Tensor::zeros(&[1, 1, 1, 1])).unwrap();
        assert_eq!(vae_loss(&v, &v, &zero, 1.0).unwrap(), 0.0);
        let one = LatentDistribution::new(Tensor::full(&[1, 1, 1, 1], 1.0), Tensor::zeros(&[1, 1, 1, 1])).unwrap();
        assert!((vae_loss(&v, &v, &one, 1.0).unwrap() - 0.5).abs() < 1e-12);
        let a = VideoTensor::new(Tensor::full(&[1, 8, 8, 3], 0.2)).unwrap();
        let b = VideoTensor::new(Tensor::full(&[1, 8, 8, 3], 0.3)).unwrap();
        assert!((vae_loss(&a, &b, &zero, 1.0).unwrap() - 0.01).abs() < 1e-7);
        assert_eq!(vae_loss(&a, &b, &one, 0.0).unwrap(), vae_loss(&a, &b, &zero, 0.0).unwrap());
        assert!(vae_loss(&a, &video([5, 8, 8, 3]), &zero, 1.0).is_err());
    }

    #[test]
    fn graph_loss_matches_plain_loss() {
        let params = init_vae(&tiny(), 1).unwrap();
        let cfg = tiny();
        let v = video([5, 8, 16, 3]);
        let d = encode(&v, &params).unwrap();
        let z = sample_latent(&d, &Tensor::zeros(d.mean.shape())).unwrap();
        let g = Graph::new();
        let p = params.bind(&g, false);
        let x = g.constant(Tensor::stack(&[v.as_tensor()]).unwrap());
        let noise = g.constant(Tensor::zeros(&[1, 2, 1, 2, 3]));
        let loss = vae_loss_graph(&p, &cfg, x, noise).unwrap().to_tensor().item() as f64;
        let recon = decoder_graph(&p, &cfg, g.constant(Tensor::stack(&[z.as_tensor()]).unwrap()))
            .unwrap()
            .to_tensor()
            .unstack()
            .remove(0);
        let mse = recon
            .data()
            .iter()
            .zip(v.as_tensor().data())
            .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
            .sum::<f64>()
            / recon.numel() as f64;
        let plain = mse + vae_loss(&v, &v, &d, cfg.kl_weight).unwrap();
        assert!((loss - plain).abs() < 1e-3 * plain.max(1e-3), "{loss} vs {plain}");
    }

    #[test]
    fn standardization_roundtrip() {
        let mut params = init_vae(&tiny(), 0).unwrap();
        let dists: Vec<_> = [video([5, 8, 8, 3]), video([5, 16, 8, 3])]
            .iter()
            .map(|v| encode(v, &params).unwrap())
            .collect();
        fit_latent_stats(&mut params, &dists).unwrap();
        let z = sample_latent(&dists[1], &Tensor::zeros(dists[1].mean.shape())).unwrap();
        let s = standardize(&z, &params).unwrap();
        let back = destandardize(&s, &params).unwrap();
        for (a, b) in back.as_tensor().data().iter().zip(z.as_tensor().data()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn shape_roundtrip(k in 0usize..3, hm in 1usize..3, wm in 1usize..3) {
            let params = init_vae(&tiny(), 0).unwrap();
            let shape = [1 + 4 * k, 8 * hm, 8 * wm, 3];
            let v = video(shape);
            let d = encode(&v, &params).unwrap();
            prop_assert_eq!(d.mean.shape(), &latent_shape(&shape, 3).unwrap()[..]);
            let z = sample_latent(&d, &Tensor::zeros(d.mean.shape())).unwrap();
            let out = decode(&z, &params).unwrap();
            prop_assert_eq!(out.shape(), &shape[..]);
        }
    }
}
