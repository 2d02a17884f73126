//! Checkpoint directories: `index.json` plus one SVT file per tensor.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::svt::{read_svt, write_svt, SvtTensor};
use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::params::{Component, Moments, ParameterStore};

pub const INDEX_FILE: &str = "index.json";

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Entry {
    dtype: String,
    dims: Vec<usize>,
    file: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct MomentEntry {
    m: Entry,
    v: Entry,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Index {
    component: Component,
    step: u64,
    tensors: BTreeMap<String, Entry>,
    #[serde(default)]
    buffers: BTreeMap<String, Entry>,
    #[serde(default)]
    moments: Option<BTreeMap<String, MomentEntry>>,
    #[serde(default)]
    meta: serde_json::Value,
}

fn put(dir: &Path, file: String, t: &Tensor<f32>) -> Result<Entry> {
    write_svt(&dir.join(&file), &SvtTensor::F32(t.clone()))?;
    Ok(Entry {
        dtype: "f32".into(),
        dims: t.shape().to_vec(),
        file,
    })
}

fn take(dir: &Path, name: &str, e: &Entry) -> Result<Tensor<f32>> {
    let path = dir.join(&e.file);
    if !path.exists() {
        return Err(Error::Checkpoint(format!("tensor {name} references missing file {}", e.file)));
    }
    if e.dtype != "f32" {
        return Err(Error::Checkpoint(format!("tensor {name} has unsupported dtype {}", e.dtype)));
    }
    let t = read_svt(&path)?
        .into_f32()
        .map_err(|err| Error::Checkpoint(format!("tensor {name}: {err}")))?;
    if t.shape() != e.dims.as_slice() {
        return Err(Error::Checkpoint(format!(
            "tensor {name} has dims {:?}, index says {:?}",
            t.shape(),
            e.dims
        )));
    }
    Ok(t)
}

/// Writes `params` to `dir`, replacing any previous checkpoint there. The
/// directory is assembled next to the target and moved into place.
pub fn save_checkpoint(params: &ParameterStore, dir: &Path) -> Result<()> {
    let staging = dir.with_extension("partial");
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;

    let mut tensors = BTreeMap::new();
    for (i, (name, t)) in params.params().iter().enumerate() {
        tensors.insert(name.clone(), put(&staging, format!("p{i:04}.svt"), t)?);
    }
    let mut buffers = BTreeMap::new();
    for (i, (name, t)) in params.buffers().iter().enumerate() {
        buffers.insert(name.clone(), put(&staging, format!("b{i:04}.svt"), t)?);
    }
    let moments = match params.moments() {
        None => None,
        Some(mm) => {
            let mut out = BTreeMap::new();
            for (i, (name, mo)) in mm.iter().enumerate() {
                out.insert(
                    name.clone(),
                    MomentEntry {
                        m: put(&staging, format!("m{i:04}.svt"), &mo.m)?,
                        v: put(&staging, format!("v{i:04}.svt"), &mo.v)?,
                    },
                );
            }
            Some(out)
        }
    };
    let index = Index {
        component: params.component(),
        step: params.step(),
        tensors,
        buffers,
        moments,
        meta: params.meta().clone(),
    };
    let path = staging.join(INDEX_FILE);
    fs::write(&path, serde_json::to_string_pretty(&index)?).map_err(|e| Error::io(&path, e))?;
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::rename(&staging, dir).map_err(|e| Error::io(dir, e))
}

pub fn load_checkpoint(dir: &Path) -> Result<ParameterStore> {
    let path = dir.join(INDEX_FILE);
    if !path.exists() {
        return Err(Error::MissingPrerequisite(path));
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let index: Index = serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    let mut store = ParameterStore::new(index.component);
    for (name, e) in &index.tensors {
        store.insert(name.clone(), take(dir, name, e)?);
    }
    for (name, e) in &index.buffers {
        store.set_buffer(name.clone(), take(dir, name, e)?);
    }
    let moments = match &index.moments {
        None => None,
        Some(mm) => {
            let mut out = BTreeMap::new();
            for (name, e) in mm {
                let p = store.get(name)?;
                let m = take(dir, name, &e.m)?;
                let v = take(dir, name, &e.v)?;
                if m.shape() != p.shape() || v.shape() != p.shape() {
                    return Err(Error::Checkpoint(format!("moment shapes of {name} differ from the parameter")));
                }
                out.insert(name.clone(), Moments { m, v });
            }
            if out.len() != store.params().len() {
                return Err(Error::Checkpoint("optimizer moments do not cover every parameter".into()));
            }
            Some(out)
        }
    };
    store.set_moments(moments);
    store.set_step(index.step);
    store.set_meta(index.meta);
    Ok(store)
}

/// Loads a checkpoint and checks its component tag.
pub fn load_component(dir: &Path, expected: Component) -> Result<ParameterStore> {
    let store = load_checkpoint(dir)?;
    if store.component() != expected {
        return Err(Error::ComponentTag {
            expected: expected.to_string(),
            found: store.component().to_string(),
        });
    }
    Ok(store)
}
