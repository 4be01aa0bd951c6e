//! Versioned checkpoint files: a header line, one JSON manifest line, then
//! raw little-endian `f64` tensor data.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::model::{param_layout, LabNet, ModelConfig, ParamStore};

pub const CHECKPOINT_HEADER: &str = "labnet-ckpt-v1";

/// Position of a training run, enough to continue it exactly.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    /// Optimizer steps taken so far.
    pub step: usize,
    pub best_val_si_sdr: Option<f64>,
    pub best_step: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    group: String,
    name: String,
    shape: Vec<usize>,
    dtype: String,
    offset: usize,
    len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Manifest {
    model: ModelConfig,
    train: Option<serde_json::Value>,
    state: TrainState,
    tensors: Vec<TensorEntry>,
}

/// Parameters plus optional optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: LabNet,
    /// Training configuration, kept opaque here.
    pub train: Option<serde_json::Value>,
    pub state: TrainState,
    pub adam_m: Option<ParamStore>,
    pub adam_v: Option<ParamStore>,
}

impl Checkpoint {
    pub fn for_model(model: LabNet) -> Self {
        Self {
            model,
            train: None,
            state: TrainState::default(),
            adam_m: None,
            adam_v: None,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut tensors = Vec::new();
        let mut data: Vec<u8> = Vec::new();
        let groups = [
            ("param", Some(&self.model.params)),
            ("adam_m", self.adam_m.as_ref()),
            ("adam_v", self.adam_v.as_ref()),
        ];
        for (group, store) in groups {
            let Some(store) = store else { continue };
            for (name, t) in store.iter() {
                tensors.push(TensorEntry {
                    group: group.into(),
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    dtype: "f64".into(),
                    offset: data.len() / 8,
                    len: t.len(),
                });
                for v in t.data() {
                    data.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        let manifest = Manifest {
            model: self.model.config.clone(),
            train: self.train.clone(),
            state: self.state.clone(),
            tensors,
        };
        let tmp = path.with_extension("tmp");
        let write = || -> std::io::Result<()> {
            let mut f = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
            writeln!(f, "{CHECKPOINT_HEADER}")?;
            writeln!(f, "{}", serde_json::to_string(&manifest).map_err(std::io::Error::other)?)?;
            f.write_all(&data)?;
            f.flush()?;
            drop(f);
            std::fs::rename(&tmp, path)
        };
        write().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bad = |reason: String| Error::Malformed {
            what: "checkpoint",
            path: path.to_path_buf(),
            reason,
        };
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = BufReader::new(file);
        let mut header = String::new();
        reader.read_line(&mut header).map_err(|e| Error::io(path, e))?;
        if header.trim_end() != CHECKPOINT_HEADER {
            return Err(bad(format!("unsupported header {:?}", header.trim_end())));
        }
        let mut line = String::new();
        reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
        let manifest: Manifest = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        let mut bytes = Vec::new();
        reader.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
        if bytes.len() % 8 != 0 {
            return Err(bad("tensor data is not a whole number of f64 values".into()));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();

        let mut stores = [ParamStore::new(), ParamStore::new(), ParamStore::new()];
        for e in &manifest.tensors {
            let slot = match e.group.as_str() {
                "param" => 0,
                "adam_m" => 1,
                "adam_v" => 2,
                other => return Err(bad(format!("unknown tensor group {other:?}"))),
            };
            if e.dtype != "f64" || e.shape.iter().product::<usize>() != e.len || e.offset + e.len > values.len() {
                return Err(bad(format!("inconsistent entry for {}", e.name)));
            }
            stores[slot].insert(e.name.clone(), Tensor::new(&e.shape, values[e.offset..e.offset + e.len].to_vec()));
        }
        let [params, m, v] = stores;
        let model = LabNet {
            config: manifest.model,
            params,
        };
        check_layout(&model).map_err(|e| bad(e.to_string()))?;
        Ok(Self {
            model,
            train: manifest.train,
            state: manifest.state,
            adam_m: (!m.is_empty()).then_some(m),
            adam_v: (!v.is_empty()).then_some(v),
        })
    }
}

/// Parameters must have exactly the names and shapes the config implies.
pub fn check_layout(model: &LabNet) -> Result<()> {
    model.config.validate()?;
    let expected = param_layout(&model.config);
    for spec in &expected {
        match model.params.get(&spec.name) {
            None => return Err(Error::Checkpoint(format!("missing parameter {}", spec.name))),
            Some(p) if p.shape() != spec.shape.as_slice() => {
                return Err(Error::Checkpoint(format!(
                    "parameter {} has shape {:?}, config implies {:?}",
                    spec.name,
                    p.shape(),
                    spec.shape
                )))
            }
            _ => {}
        }
    }
    if let Some(extra) = model.params.names().find(|n| !expected.iter().any(|s| &s.name == *n)) {
        return Err(Error::Checkpoint(format!("unexpected parameter {extra}")));
    }
    Ok(())
}
