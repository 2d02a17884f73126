//! Initializers and forward helpers keyed by parameter-name prefix.

use rand::Rng;

use super::{Conv3dSpec, Scalar, Tensor, Var};
use crate::error::Result;
use crate::params::{Bound, ParameterStore};

pub fn init_linear<S: Scalar, R: Rng + ?Sized>(
    store: &mut ParameterStore<S>,
    name: &str,
    din: usize,
    dout: usize,
    gain: f64,
    rng: &mut R,
) {
    let std = gain / (din as f64).sqrt();
    store.insert(format!("{name}.w"), Tensor::randn(&[din, dout], std, rng));
    store.insert(format!("{name}.b"), Tensor::zeros(&[dout]));
}

pub fn init_conv<S: Scalar, R: Rng + ?Sized>(
    store: &mut ParameterStore<S>,
    name: &str,
    kernel: [usize; 3],
    cin: usize,
    cout: usize,
    gain: f64,
    rng: &mut R,
) {
    let fan_in = kernel.iter().product::<usize>() * cin;
    let std = gain / (fan_in as f64).sqrt();
    store.insert(
        format!("{name}.w"),
        Tensor::randn(&[kernel[0], kernel[1], kernel[2], cin, cout], std, rng),
    );
    store.insert(format!("{name}.b"), Tensor::zeros(&[cout]));
}

pub fn init_norm<S: Scalar>(store: &mut ParameterStore<S>, name: &str, dim: usize) {
    store.insert(format!("{name}.g"), Tensor::full(&[dim], S::one()));
    store.insert(format!("{name}.b"), Tensor::zeros(&[dim]));
}

pub fn linear<'g, S: Scalar>(p: &Bound<'g, S>, name: &str, x: Var<'g, S>) -> Result<Var<'g, S>> {
    x.linear(p.get(&format!("{name}.w"))?, Some(p.get(&format!("{name}.b"))?))
}

pub fn conv<'g, S: Scalar>(
    p: &Bound<'g, S>,
    name: &str,
    x: Var<'g, S>,
    spec: Conv3dSpec,
) -> Result<Var<'g, S>> {
    x.conv3d(p.get(&format!("{name}.w"))?, p.get(&format!("{name}.b"))?, spec)
}

/// Layer norm over channels with a learned affine part.
pub fn norm<'g, S: Scalar>(p: &Bound<'g, S>, name: &str, x: Var<'g, S>) -> Result<Var<'g, S>> {
    x.layer_norm(1e-5)
        .mul_trailing(p.get(&format!("{name}.g"))?)?
        .add_trailing(p.get(&format!("{name}.b"))?)
}

pub fn init_res_block<S: Scalar, R: Rng + ?Sized>(
    store: &mut ParameterStore<S>,
    name: &str,
    kernel: [usize; 3],
    channels: usize,
    rng: &mut R,
) {
    init_norm(store, &format!("{name}.norm"), channels);
    init_conv(store, &format!("{name}.conv"), kernel, channels, channels, 0.5, rng);
}

/// Pre-norm residual block: `x + conv(silu(norm(x)))`.
pub fn res_block<'g, S: Scalar>(
    p: &Bound<'g, S>,
    name: &str,
    x: Var<'g, S>,
    kernel: [usize; 3],
) -> Result<Var<'g, S>> {
    let h = norm(p, &format!("{name}.norm"), x)?.silu();
    let h = conv(p, &format!("{name}.conv"), h, Conv3dSpec::same(kernel))?;
    x.add(h)
}
