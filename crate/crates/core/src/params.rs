//! Named parameter tensors with optimizer state.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::{Gradients, Graph, Scalar, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Vae,
    Denoiser,
    Text,
    Classifier,
    FrameExtractor,
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Component::Vae => "vae",
            Component::Denoiser => "denoiser",
            Component::Text => "text",
            Component::Classifier => "classifier",
            Component::FrameExtractor => "frame_extractor",
        };
        f.write_str(s)
    }
}

/// First and second AdamW moments for one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments<S: Scalar> {
    pub m: Tensor<S>,
    pub v: Tensor<S>,
}

#[derive(Clone, Debug)]
pub struct ParameterStore<S: Scalar = f32> {
    component: Component,
    step: u64,
    params: BTreeMap<String, Tensor<S>>,
    buffers: BTreeMap<String, Tensor<S>>,
    moments: Option<BTreeMap<String, Moments<S>>>,
    meta: serde_json::Value,
}

impl<S: Scalar> ParameterStore<S> {
    pub fn new(component: Component) -> Self {
        ParameterStore {
            component,
            step: 0,
            params: BTreeMap::new(),
            buffers: BTreeMap::new(),
            moments: Some(BTreeMap::new()),
            meta: serde_json::Value::Null,
        }
    }

    pub fn component(&self) -> Component {
        self.component
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub(crate) fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    pub fn meta(&self) -> &serde_json::Value {
        &self.meta
    }

    pub fn set_meta(&mut self, meta: serde_json::Value) {
        self.meta = meta;
    }

    /// Adds a trainable tensor with zeroed moments (unless frozen).
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<S>) {
        let name = name.into();
        if let Some(m) = self.moments.as_mut() {
            m.insert(
                name.clone(),
                Moments {
                    m: Tensor::zeros(value.shape()),
                    v: Tensor::zeros(value.shape()),
                },
            );
        }
        self.params.insert(name, value);
    }

    /// Non-trainable state stored alongside the parameters.
    pub fn set_buffer(&mut self, name: impl Into<String>, value: Tensor<S>) {
        self.buffers.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<S>> {
        self.params
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("{} store has no parameter {name:?}", self.component)))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<S>> {
        let component = self.component;
        self.params
            .get_mut(name)
            .ok_or_else(|| Error::Checkpoint(format!("{component} store has no parameter {name:?}")))
    }

    pub fn buffer(&self, name: &str) -> Result<&Tensor<S>> {
        self.buffers
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("{} store has no buffer {name:?}", self.component)))
    }

    pub fn params(&self) -> &BTreeMap<String, Tensor<S>> {
        &self.params
    }

    pub fn buffers(&self) -> &BTreeMap<String, Tensor<S>> {
        &self.buffers
    }

    pub fn moments(&self) -> Option<&BTreeMap<String, Moments<S>>> {
        self.moments.as_ref()
    }

    pub(crate) fn parts_mut(
        &mut self,
    ) -> (
        &mut BTreeMap<String, Tensor<S>>,
        Option<&mut BTreeMap<String, Moments<S>>>,
    ) {
        (&mut self.params, self.moments.as_mut())
    }

    pub(crate) fn set_moments(&mut self, moments: Option<BTreeMap<String, Moments<S>>>) {
        self.moments = moments;
    }

    /// Drops optimizer state; the store can no longer be trained.
    pub fn freeze(&mut self) {
        self.moments = None;
    }

    pub fn is_frozen(&self) -> bool {
        self.moments.is_none()
    }

    pub fn num_params(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    /// SHA-256 over names, shapes and little-endian values of parameters
    /// and buffers.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.component.to_string().as_bytes());
        for (section, map) in [("p", &self.params), ("b", &self.buffers)] {
            for (name, t) in map {
                h.update(section.as_bytes());
                h.update(name.as_bytes());
                for &d in t.shape() {
                    h.update((d as u64).to_le_bytes());
                }
                for &x in t.data() {
                    h.update(x.as_f64().to_le_bytes());
                }
            }
        }
        hex::encode(h.finalize())
    }

    pub fn cast<T: Scalar>(&self) -> ParameterStore<T> {
        let conv = |m: &BTreeMap<String, Tensor<S>>| -> BTreeMap<String, Tensor<T>> {
            m.iter().map(|(k, v)| (k.clone(), v.cast())).collect()
        };
        ParameterStore {
            component: self.component,
            step: self.step,
            params: conv(&self.params),
            buffers: conv(&self.buffers),
            moments: self.moments.as_ref().map(|mm| {
                mm.iter()
                    .map(|(k, v)| {
                        (
                            k.clone(),
                            Moments {
                                m: v.m.cast(),
                                v: v.v.cast(),
                            },
                        )
                    })
                    .collect()
            }),
            meta: self.meta.clone(),
        }
    }

    /// Places every parameter on `graph`; trainable leaves when `trainable`,
    /// constants otherwise.
    pub fn bind<'g>(&self, graph: &'g Graph<S>, trainable: bool) -> Bound<'g, S> {
        let vars = self
            .params
            .iter()
            .map(|(k, v)| {
                let var = if trainable {
                    graph.param(v.clone())
                } else {
                    graph.constant(v.clone())
                };
                (k.clone(), var)
            })
            .collect();
        Bound {
            component: self.component,
            vars,
        }
    }
}

impl<S: Scalar> PartialEq for ParameterStore<S> {
    fn eq(&self, other: &Self) -> bool {
        self.component == other.component
            && self.step == other.step
            && self.params == other.params
            && self.buffers == other.buffers
            && self.moments == other.moments
    }
}

/// Parameters of one store placed on a graph.
pub struct Bound<'g, S: Scalar = f32> {
    component: Component,
    vars: BTreeMap<String, Var<'g, S>>,
}

impl<'g, S: Scalar> Bound<'g, S> {
    pub fn get(&self, name: &str) -> Result<Var<'g, S>> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Checkpoint(format!("{} store has no parameter {name:?}", self.component)))
    }

    /// Per-parameter gradients, zero where the loss does not reach.
    pub fn gradients(&self, grads: &Gradients<S>) -> BTreeMap<String, Tensor<S>> {
        self.vars
            .iter()
            .map(|(k, v)| {
                let g = grads
                    .get(*v)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(&v.shape()));
                (k.clone(), g)
            })
            .collect()
    }
}
