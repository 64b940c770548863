//! JSON manifest describing per-layer style Key/Value tensors.
//!
//! ```json
//! {"layers": [{"name": "up.0", "key_path": "up.0.k.csem",
//!              "value_path": "up.0.v.csem", "tokens": 16, "dim": 64}]}
//! ```
//!
//! Relative paths resolve against the manifest's directory. Keys and values
//! are `(dim, tokens)` matrices.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::tensor::{read_tensor, Matrix};

const TOP_FIELDS: &[&str] = &["layers"];
const LAYER_FIELDS: &[&str] = &["name", "key_path", "value_path", "tokens", "dim"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub name: String,
    pub key_path: PathBuf,
    pub value_path: PathBuf,
    pub tokens: usize,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingManifest {
    pub layers: Vec<LayerEntry>,
    #[serde(skip)]
    base_dir: PathBuf,
}

/// Key and value tensors of one layer, loaded and shape-checked.
#[derive(Debug, Clone)]
pub struct LayerTensors {
    pub name: String,
    pub key: Matrix,
    pub value: Matrix,
}

impl EmbeddingManifest {
    pub fn new(layers: Vec<LayerEntry>) -> Self {
        EmbeddingManifest {
            layers,
            base_dir: PathBuf::new(),
        }
    }

    /// Parses manifest JSON, rejecting unknown fields (all of them are listed
    /// in the error) and duplicate or path-unsafe layer names.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| Error::Manifest(format!("invalid JSON: {e}")))?;
        let mut unknown = Vec::new();
        collect_unknown(&value, TOP_FIELDS, "", &mut unknown);
        if let Some(layers) = value.get("layers").and_then(Value::as_array) {
            for (i, layer) in layers.iter().enumerate() {
                collect_unknown(layer, LAYER_FIELDS, &format!("layers[{i}]."), &mut unknown);
            }
        }
        if !unknown.is_empty() {
            return Err(Error::Manifest(format!("unknown fields: {}", unknown.join(", "))));
        }
        let manifest: EmbeddingManifest =
            serde_json::from_value(value).map_err(|e| Error::Manifest(e.to_string()))?;

        let mut seen = HashSet::new();
        for layer in &manifest.layers {
            if layer.name.is_empty()
                || layer.name.contains(['/', '\\'])
                || layer.name == "."
                || layer.name == ".."
            {
                return Err(Error::Manifest(format!(
                    "layer name {:?} cannot be used as a file stem",
                    layer.name
                )));
            }
            if !seen.insert(layer.name.as_str()) {
                return Err(Error::Manifest(format!("duplicate layer name {:?}", layer.name)));
            }
        }
        Ok(manifest)
    }

    /// Reads the manifest file and checks that every referenced tensor exists
    /// with the declared `(dim, tokens)` shape.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest = Self::from_json_str(&text)?;
        manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        manifest.validate_files()?;
        Ok(manifest)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn validate_files(&self) -> Result<()> {
        for layer in &self.layers {
            for (role, p) in [("key", &layer.key_path), ("value", &layer.value_path)] {
                let full = self.resolve(p);
                if !full.is_file() {
                    return Err(Error::Manifest(format!(
                        "layer {:?}: {role} file {} does not exist",
                        layer.name,
                        full.display()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Loads every layer's tensors, checking shapes against the declared dims.
    pub fn load_layers(&self) -> Result<Vec<LayerTensors>> {
        self.layers
            .iter()
            .map(|layer| {
                let key = read_tensor(self.resolve(&layer.key_path))?;
                let value = read_tensor(self.resolve(&layer.value_path))?;
                for (role, m) in [("key", &key), ("value", &value)] {
                    if m.shape() != (layer.dim, layer.tokens) {
                        return Err(Error::Manifest(format!(
                            "layer {:?}: {role} has shape {:?}, manifest declares (dim {}, tokens {})",
                            layer.name,
                            m.shape(),
                            layer.dim,
                            layer.tokens
                        )));
                    }
                }
                Ok(LayerTensors {
                    name: layer.name.clone(),
                    key,
                    value,
                })
            })
            .collect()
    }
}

fn collect_unknown(value: &Value, allowed: &[&str], prefix: &str, out: &mut Vec<String>) {
    if let Some(obj) = value.as_object() {
        for key in obj.keys() {
            if !allowed.contains(&key.as_str()) {
                out.push(format!("{prefix}{key}"));
            }
        }
    }
}
