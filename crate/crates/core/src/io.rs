//! On-disk formats: layer and model JSON, PGM images, content hashes.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha1::{Digest, Sha1};

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::genome::LayerPhenotype;
use crate::network::NetworkStack;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerRecord {
    pub weights: Vec<Vec<f64>>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadRecord {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

/// Evolved layers without a classifier (`layers.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayersFile {
    pub version: u32,
    pub layers: Vec<LayerRecord>,
}

/// A complete network (`model.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub version: u32,
    pub layers: Vec<LayerRecord>,
    pub head: HeadRecord,
}

fn to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn from_rows(rows: &[Vec<f64>], what: &str) -> Result<Array2<f64>> {
    let n = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != n) {
        return Err(Error::mismatch(format!("{what} row length"), n, bad.len()));
    }
    Array2::from_shape_vec((rows.len(), n), rows.concat()).map_err(|e| Error::Numeric(e.to_string()))
}

impl From<&LayerPhenotype> for LayerRecord {
    fn from(l: &LayerPhenotype) -> Self {
        Self {
            weights: to_rows(&l.weights),
            activation: l.activation,
        }
    }
}

impl LayerRecord {
    pub fn to_phenotype(&self) -> Result<LayerPhenotype> {
        Ok(LayerPhenotype::new(from_rows(&self.weights, "layer weights")?, self.activation))
    }
}

fn check_version(v: u32) -> Result<()> {
    if v != FORMAT_VERSION {
        return Err(Error::Config {
            line: None,
            message: format!("unsupported file version {v} (expected {FORMAT_VERSION})"),
        });
    }
    Ok(())
}

impl LayersFile {
    pub fn from_layers(layers: &[LayerPhenotype]) -> Self {
        Self {
            version: FORMAT_VERSION,
            layers: layers.iter().map(LayerRecord::from).collect(),
        }
    }

    pub fn to_layers(&self) -> Result<Vec<LayerPhenotype>> {
        check_version(self.version)?;
        self.layers.iter().map(LayerRecord::to_phenotype).collect()
    }
}

impl ModelFile {
    pub fn from_stack(stack: &NetworkStack) -> Self {
        Self {
            version: FORMAT_VERSION,
            layers: stack.layers.iter().map(LayerRecord::from).collect(),
            head: HeadRecord {
                weights: to_rows(&stack.head_weights),
                bias: stack.head_bias.to_vec(),
            },
        }
    }

    pub fn to_stack(&self) -> Result<NetworkStack> {
        check_version(self.version)?;
        let stack = NetworkStack {
            layers: self.layers.iter().map(LayerRecord::to_phenotype).collect::<Result<_>>()?,
            head_weights: from_rows(&self.head.weights, "head weights")?,
            head_bias: Array1::from(self.head.bias.clone()),
        };
        stack.validate()?;
        Ok(stack)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn save_model(path: &Path, stack: &NetworkStack) -> Result<()> {
    write_json(path, &ModelFile::from_stack(stack))
}

pub fn load_model(path: &Path) -> Result<NetworkStack> {
    read_json::<ModelFile>(path)?.to_stack()
}

pub fn save_layers(path: &Path, layers: &[LayerPhenotype]) -> Result<()> {
    write_json(path, &LayersFile::from_layers(layers))
}

pub fn load_layers(path: &Path) -> Result<Vec<LayerPhenotype>> {
    read_json::<LayersFile>(path)?.to_layers()
}

/// Binary (P5) graymap of `values`, min-max stretched to 0..=255.
pub fn pgm_bytes(width: usize, height: usize, values: &[f64]) -> Result<Vec<u8>> {
    if values.len() != width * height {
        return Err(Error::mismatch("pgm pixels", width * height, values.len()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(values.iter().map(|v| ((v - lo) / span * 255.0).round() as u8));
    Ok(out)
}

/// Git blob object id of `content` (SHA-1 over `blob <len>\0<content>`).
pub fn git_blob_hash(content: &[u8]) -> String {
    let mut h = Sha1::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn blob_hash_matches_git() {
        // `printf 'hello\n' | git hash-object --stdin`
        assert_eq!(git_blob_hash(b"hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
        assert_eq!(git_blob_hash(b""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
    }

    #[test]
    fn pgm_header_and_stretch() {
        let b = pgm_bytes(2, 1, &[-1.0, 3.0]).unwrap();
        assert_eq!(&b[..11], b"P5\n2 1\n255\n");
        assert_eq!(&b[11..], &[0, 255]);
        assert!(pgm_bytes(2, 2, &[0.0]).is_err());
    }

    #[test]
    fn model_file_shape() {
        let stack = NetworkStack {
            layers: vec![LayerPhenotype::new(arr2(&[[1.0, 0.5]]), Activation::Tanh)],
            head_weights: arr2(&[[0.25], [-0.25]]),
            head_bias: Array1::from(vec![0.0, 0.0]),
        };
        let v = serde_json::to_value(ModelFile::from_stack(&stack)).unwrap();
        assert_eq!(v["version"], 1);
        assert_eq!(v["layers"][0]["activation"], "tanh");
        assert_eq!(v["layers"][0]["weights"][0][1], 0.5);
        assert_eq!(v["head"]["bias"][1], 0.0);
        let back: ModelFile = serde_json::from_value(v).unwrap();
        assert_eq!(back.to_stack().unwrap(), stack);
    }

    #[test]
    fn rejects_future_versions() {
        let f = LayersFile {
            version: 2,
            layers: vec![],
        };
        assert!(f.to_layers().is_err());
    }
}
