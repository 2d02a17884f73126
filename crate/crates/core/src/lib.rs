//! Text-guided latent video diffusion for phase-conditioned surgical video
//! synthesis: a 3D VAE, a joint-attention video transformer trained with
//! the DDPM noise-prediction objective, a frozen prompt encoder, the data
//! tooling that feeds them, and the FID/FVD/phase-alignment evaluation.

pub mod data;
pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod nn;
pub mod params;
pub mod text;
pub mod train;
pub mod vae;
pub mod video;

pub use error::{Error, Result};
pub use nn::{Graph, Scalar, Tensor, Var};
pub use params::{Component, ParameterStore};
pub use video::{LatentVideo, VideoTensor};
