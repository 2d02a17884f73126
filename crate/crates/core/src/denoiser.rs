//! Text-conditioned transformer predicting the noise in a latent video.
//!
//! Latent frames are cut into `p x p` patches, projected to `d_model`, and
//! concatenated after the projected text tokens into one sequence that every
//! block attends over jointly. The timestep drives adaptive layer-norm
//! shift/scale/gate vectors in each block.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layers::{init_linear, linear};
use crate::nn::{Graph, Scalar, Tensor, Var};
use crate::params::{Bound, Component, ParameterStore};
use crate::video::LatentVideo;

const POS_STD: f64 = 0.5;
const ADA_GAIN: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiserConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_blocks: usize,
    pub patch: usize,
    pub latent_channels: usize,
    pub d_text: usize,
    pub max_text_len: usize,
    /// Largest `(T', H'/p, W'/p)` token grid the positional tables cover.
    pub max_grid: [usize; 3],
    pub timesteps: usize,
    pub mlp_ratio: usize,
}

impl DenoiserConfig {
    pub fn toy() -> Self {
        DenoiserConfig {
            d_model: 128,
            n_heads: 4,
            n_blocks: 6,
            patch: 2,
            latent_channels: 8,
            d_text: 64,
            max_text_len: 8,
            max_grid: [5, 2, 3],
            timesteps: 1000,
            mlp_ratio: 4,
        }
    }

    pub fn full() -> Self {
        DenoiserConfig {
            d_model: 1024,
            n_heads: 16,
            n_blocks: 24,
            patch: 2,
            latent_channels: 16,
            d_text: 64,
            max_text_len: 8,
            max_grid: [13, 30, 45],
            timesteps: 1000,
            mlp_ratio: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.d_model,
            self.n_heads,
            self.n_blocks,
            self.patch,
            self.latent_channels,
            self.d_text,
            self.max_text_len,
            self.timesteps,
            self.mlp_ratio,
        ];
        if positive.contains(&0) || self.max_grid.contains(&0) {
            return Err(Error::InvalidConfig(format!("denoiser sizes must be positive: {self:?}")));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::InvalidConfig(format!(
                "d_model {} is not divisible by {} heads",
                self.d_model, self.n_heads
            )));
        }
        if !self.d_model.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!("d_model {} must be even", self.d_model)));
        }
        Ok(())
    }

    fn patch_dim(&self) -> usize {
        self.patch * self.patch * self.latent_channels
    }
}

/// Flattened patches with their `(T', H'/p, W'/p)` provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenGrid {
    /// `[N_tokens, width]`, row-major over `(t, h, w)`.
    pub tokens: Tensor<f32>,
    pub grid: [usize; 3],
    pub patch: usize,
}

/// Cuts every latent frame into `p x p x C` patches (identity projection).
pub fn patchify(latent: &LatentVideo, p: usize) -> Result<TokenGrid> {
    let s = latent.shape();
    let (t, h, w, c) = (s[0], s[1], s[2], s[3]);
    if p == 0 || h % p != 0 || w % p != 0 {
        return Err(Error::shape(format!("patch size {p} does not divide latent {s:?}")));
    }
    let (hp, wp) = (h / p, w / p);
    let tokens = latent
        .as_tensor()
        .clone()
        .reshape(&[t, hp, p, wp, p, c])?
        .permute(&[0, 1, 3, 2, 4, 5])?
        .reshape(&[t * hp * wp, p * p * c])?;
    Ok(TokenGrid {
        tokens,
        grid: [t, hp, wp],
        patch: p,
    })
}

/// Exact positional inverse of [`patchify`].
pub fn unpatchify(grid: &TokenGrid) -> Result<LatentVideo> {
    let [t, hp, wp] = grid.grid;
    let p = grid.patch;
    let s = grid.tokens.shape();
    if p == 0 || s.len() != 2 || s[0] != t * hp * wp || !s[1].is_multiple_of(p * p) {
        return Err(Error::shape(format!(
            "tokens {s:?} inconsistent with grid {:?} and patch {p}",
            grid.grid
        )));
    }
    let c = s[1] / (p * p);
    let x = grid
        .tokens
        .clone()
        .reshape(&[t, hp, wp, p, p, c])?
        .permute(&[0, 1, 3, 2, 4, 5])?
        .reshape(&[t, hp * p, wp * p, c])?;
    LatentVideo::new(x)
}

/// Sinusoidal embedding: `sin(t w_k)` then `cos(t w_k)`, `w_k = 10000^(-2k/dim)`.
pub fn timestep_embedding(t: usize, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 || !dim.is_multiple_of(2) {
        return Err(Error::InvalidConfig(format!("timestep embedding dim {dim} must be even")));
    }
    let half = dim / 2;
    let omegas: Vec<f64> = (0..half).map(|k| 10000f64.powf(-2.0 * k as f64 / dim as f64)).collect();
    let mut out: Vec<f64> = omegas.iter().map(|w| (t as f64 * w).sin()).collect();
    out.extend(omegas.iter().map(|w| (t as f64 * w).cos()));
    Ok(out)
}

pub fn init_denoiser(cfg: &DenoiserConfig, seed: u64) -> Result<ParameterStore> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ParameterStore::new(Component::Denoiser);
    let d = cfg.d_model;
    init_linear(&mut s, "patch", cfg.patch_dim(), d, 1.0, &mut rng);
    init_linear(&mut s, "text", cfg.d_text, d, 1.0, &mut rng);
    let [gt, gh, gw] = cfg.max_grid;
    s.insert("pos.t", Tensor::randn(&[gt, d], POS_STD, &mut rng));
    s.insert("pos.h", Tensor::randn(&[gh, d], POS_STD, &mut rng));
    s.insert("pos.w", Tensor::randn(&[gw, d], POS_STD, &mut rng));
    s.insert("pos.text", Tensor::randn(&[cfg.max_text_len, d], POS_STD, &mut rng));
    init_linear(&mut s, "time.fc1", d, d, 1.0, &mut rng);
    init_linear(&mut s, "time.fc2", d, d, 1.0, &mut rng);
    init_linear(&mut s, "pool", cfg.d_text, d, 1.0, &mut rng);
    for i in 0..cfg.n_blocks {
        let b = format!("blocks.{i}");
        init_linear(&mut s, &format!("{b}.ada"), d, 6 * d, ADA_GAIN, &mut rng);
        init_linear(&mut s, &format!("{b}.qkv"), d, 3 * d, 1.0, &mut rng);
        init_linear(&mut s, &format!("{b}.proj"), d, d, 1.0, &mut rng);
        init_linear(&mut s, &format!("{b}.fc1"), d, cfg.mlp_ratio * d, 1.0, &mut rng);
        init_linear(&mut s, &format!("{b}.fc2"), cfg.mlp_ratio * d, d, 1.0, &mut rng);
    }
    init_linear(&mut s, "final.ada", d, 2 * d, ADA_GAIN, &mut rng);
    init_linear(&mut s, "final.out", d, cfg.patch_dim(), 0.1, &mut rng);
    init_linear(&mut s, "skip", cfg.patch_dim(), cfg.patch_dim(), 1.0, &mut rng);
    init_linear(&mut s, "skip.ada", d, cfg.patch_dim(), ADA_GAIN, &mut rng);
    s.set_meta(serde_json::json!({ "config": cfg }));
    Ok(s)
}

pub fn denoiser_config<S: Scalar>(store: &ParameterStore<S>) -> Result<DenoiserConfig> {
    if store.component() != Component::Denoiser {
        return Err(Error::ComponentTag {
            expected: Component::Denoiser.to_string(),
            found: store.component().to_string(),
        });
    }
    let cfg: DenoiserConfig = serde_json::from_value(store.meta()["config"].clone())
        .map_err(|e| Error::Checkpoint(format!("denoiser config missing from store metadata: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

/// `[N, D]` positional embeddings for a `(t, h, w)` grid, row-major.
pub fn grid_positions<'g, S: Scalar>(p: &Bound<'g, S>, cfg: &DenoiserConfig, grid: [usize; 3]) -> Result<Var<'g, S>> {
    if (0..3).any(|a| grid[a] > cfg.max_grid[a]) {
        return Err(Error::shape(format!(
            "token grid {grid:?} exceeds the positional table {:?}",
            cfg.max_grid
        )));
    }
    let g = p.get("pos.t")?.graph();
    let n = grid.iter().product::<usize>();
    let one_hot = |axis: usize| {
        let width = cfg.max_grid[axis];
        Tensor::<S>::from_fn(&[n, width], |i| {
            let (row, col) = (i / width, i % width);
            let coord = match axis {
                0 => row / (grid[1] * grid[2]),
                1 => (row / grid[2]) % grid[1],
                _ => row % grid[2],
            };
            if coord == col {
                S::one()
            } else {
                S::zero()
            }
        })
    };
    let pt = g.constant(one_hot(0)).linear(p.get("pos.t")?, None)?;
    let ph = g.constant(one_hot(1)).linear(p.get("pos.h")?, None)?;
    let pw = g.constant(one_hot(2)).linear(p.get("pos.w")?, None)?;
    pt.add(ph)?.add(pw)
}

fn time_features<S: Scalar>(ts: &[usize], dim: usize) -> Result<Tensor<S>> {
    let mut data = Vec::with_capacity(ts.len() * dim);
    for &t in ts {
        data.extend(timestep_embedding(t, dim)?.into_iter().map(S::lit));
    }
    Tensor::new(vec![ts.len(), dim], data)
}

/// Core transformer on pre-cut patches.
///
/// `patches: [B, N, p*p*C]`, `pos: [N, D]`, `text: [B, L, D_text]`; returns
/// `[B, N, p*p*C]` noise predictions for the video tokens only. A
/// timestep-gated linear path from the input patches is added to the head.
pub fn transformer<'g, S: Scalar>(
    p: &Bound<'g, S>,
    cfg: &DenoiserConfig,
    patches: Var<'g, S>,
    pos: Var<'g, S>,
    text: Var<'g, S>,
    ts: &[usize],
) -> Result<Var<'g, S>> {
    let ps = patches.shape();
    let txs = text.shape();
    if ps.len() != 3 || ps[2] != cfg.patch_dim() || ps[0] != ts.len() {
        return Err(Error::shape(format!(
            "patches {ps:?} for {} timesteps, patch width {}",
            ts.len(),
            cfg.patch_dim()
        )));
    }
    if txs.len() != 3 || txs[0] != ps[0] || txs[2] != cfg.d_text || txs[1] > cfg.max_text_len || txs[1] == 0 {
        return Err(Error::shape(format!(
            "text embedding {txs:?}; expected [{}, <= {}, {}]",
            ps[0], cfg.max_text_len, cfg.d_text
        )));
    }
    if let Some(&bad) = ts.iter().find(|&&t| t >= cfg.timesteps) {
        return Err(Error::shape(format!("timestep {bad} outside [0, {})", cfg.timesteps)));
    }
    let (n, l, d) = (ps[1], txs[1], cfg.d_model);
    let g = patches.graph();

    let video = linear(p, "patch", patches)?.add_trailing(pos)?;
    let text_pos = p.get("pos.text")?.narrow(0, 0, l)?;
    let pooled = linear(p, "pool", text.mean_middle()?)?;
    let text = linear(p, "text", text)?.add_trailing(text_pos)?;
    let mut x = Var::concat(&[text, video], 1)?;

    let temb = g.constant(time_features::<S>(ts, d)?);
    let c = linear(p, "time.fc2", linear(p, "time.fc1", temb)?.silu())?
        .add(pooled)?
        .silu();

    for i in 0..cfg.n_blocks {
        let b = format!("blocks.{i}");
        let ada = linear(p, &format!("{b}.ada"), c)?;
        let chunk = |k: usize| ada.narrow(1, k * d, d);
        let h = x.layer_norm(1e-6).modulate(chunk(0)?, chunk(1)?)?;
        let qkv = linear(p, &format!("{b}.qkv"), h)?;
        let (q, k, v) = (qkv.narrow(2, 0, d)?, qkv.narrow(2, d, d)?, qkv.narrow(2, 2 * d, d)?);
        let attn = linear(p, &format!("{b}.proj"), q.attention(k, v, cfg.n_heads)?)?;
        x = x.add(attn.gate(chunk(2)?)?)?;
        let h = x.layer_norm(1e-6).modulate(chunk(3)?, chunk(4)?)?;
        let mlp = linear(p, &format!("{b}.fc2"), linear(p, &format!("{b}.fc1"), h)?.gelu())?;
        x = x.add(mlp.gate(chunk(5)?)?)?;
    }
    let ada = linear(p, "final.ada", c)?;
    let h = x
        .narrow(1, l, n)?
        .layer_norm(1e-6)
        .modulate(ada.narrow(1, 0, d)?, ada.narrow(1, d, d)?)?;
    let skip = linear(p, "skip", patches)?.gate(linear(p, "skip.ada", c)?)?;
    linear(p, "final.out", h)?.add(skip)
}

/// `x: [B, T', H', W', C]` -> predicted noise of the same shape.
pub fn denoiser_graph<'g, S: Scalar>(
    p: &Bound<'g, S>,
    cfg: &DenoiserConfig,
    x: Var<'g, S>,
    ts: &[usize],
    text: Var<'g, S>,
) -> Result<Var<'g, S>> {
    let s = x.shape();
    let pz = cfg.patch;
    if s.len() != 5 || s[4] != cfg.latent_channels || !s[2].is_multiple_of(pz) || !s[3].is_multiple_of(pz) {
        return Err(Error::shape(format!(
            "latent batch {s:?} incompatible with patch {pz} and {} channels",
            cfg.latent_channels
        )));
    }
    let (b, t, hp, wp, c) = (s[0], s[1], s[2] / pz, s[3] / pz, s[4]);
    let patches = x
        .reshape(&[b, t, hp, pz, wp, pz, c])?
        .permute(&[0, 1, 2, 4, 3, 5, 6])?
        .reshape(&[b, t * hp * wp, pz * pz * c])?;
    let pos = grid_positions(p, cfg, [t, hp, wp])?;
    transformer(p, cfg, patches, pos, text, ts)?
        .reshape(&[b, t, hp, wp, pz, pz, c])?
        .permute(&[0, 1, 2, 4, 3, 5, 6])?
        .reshape(&[b, t, hp * pz, wp * pz, c])
}

/// Predicts noise for a batch of equally shaped latents.
pub fn denoise_batch(
    latents: &[&LatentVideo],
    ts: &[usize],
    texts: &[&Tensor<f32>],
    params: &ParameterStore,
) -> Result<Vec<LatentVideo>> {
    let cfg = denoiser_config(params)?;
    if latents.len() != ts.len() || latents.len() != texts.len() || latents.is_empty() {
        return Err(Error::shape(format!(
            "{} latents, {} timesteps, {} text embeddings",
            latents.len(),
            ts.len(),
            texts.len()
        )));
    }
    let g = Graph::new();
    let p = params.bind(&g, false);
    let x = g.constant(Tensor::stack(&latents.iter().map(|l| l.as_tensor()).collect::<Vec<_>>())?);
    let text = g.constant(Tensor::stack(texts)?);
    let out = denoiser_graph(&p, &cfg, x, ts, text)?.to_tensor();
    if !out.is_finite() {
        return Err(Error::Numeric("non-finite denoiser activations".into()));
    }
    out.unstack().into_iter().map(LatentVideo::new).collect()
}

pub fn denoise(latent: &LatentVideo, t: usize, text_emb: &Tensor<f32>, params: &ParameterStore) -> Result<LatentVideo> {
    Ok(denoise_batch(&[latent], &[t], &[text_emb], params)?.remove(0))
}
