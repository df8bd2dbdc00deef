//! Model container: a `model.json` manifest plus one raw little-endian
//! float32 blob per convolutional layer (`layer_<id>.bin`).
//!
//! Blobs hold the layer's filters concatenated in index order; each filter is
//! channel-major with every k×k kernel stored row-major.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "model.json";

/// One convolutional layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    /// 1-based layer number.
    pub id: u32,
    /// Kernel side.
    pub k: usize,
    pub in_channels: usize,
    pub num_filters: usize,
    /// Output feature map height, before any pooling that follows the layer.
    pub out_h: usize,
    pub out_w: usize,
}

impl LayerSpec {
    /// Number of weights in one filter, k²·C.
    pub fn filter_len(&self) -> usize {
        self.k * self.k * self.in_channels
    }

    pub fn blob_name(&self) -> String {
        format!("layer_{}.bin", self.id)
    }

    pub fn blob_bytes(&self) -> u64 {
        4 * (self.filter_len() * self.num_filters) as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FcSpec {
    pub in_dim: usize,
    pub out_dim: usize,
}

/// Topology of a sequential CNN.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub name: String,
    pub layers: Vec<LayerSpec>,
    #[serde(default)]
    pub fc: Vec<FcSpec>,
}

impl ModelManifest {
    pub fn layer(&self, id: u32) -> Result<&LayerSpec> {
        self.layers
            .iter()
            .find(|l| l.id == id)
            .ok_or(Error::UnknownLayer(id))
    }

    /// Position of layer `id` in `layers`.
    pub fn position(&self, id: u32) -> Result<usize> {
        self.layers
            .iter()
            .position(|l| l.id == id)
            .ok_or(Error::UnknownLayer(id))
    }

    /// Checks field ranges, the conv channel chain and the fc chain.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidManifest("no convolutional layers".into()));
        }
        for (pos, layer) in self.layers.iter().enumerate() {
            if layer.id as usize != pos + 1 {
                return Err(Error::InvalidManifest(format!(
                    "layer ids must be 1..=L in order; position {} has id {}",
                    pos + 1,
                    layer.id
                )));
            }
            if layer.k == 0
                || layer.in_channels == 0
                || layer.num_filters == 0
                || layer.out_h == 0
                || layer.out_w == 0
            {
                return Err(Error::InvalidManifest(format!(
                    "layer {} has a zero dimension",
                    layer.id
                )));
            }
        }
        for pair in self.layers.windows(2) {
            if pair[0].num_filters != pair[1].in_channels {
                return Err(Error::ChannelChain {
                    layer: pair[1].id,
                    prev: pair[0].id,
                    expected: pair[0].num_filters,
                    found: pair[1].in_channels,
                });
            }
        }
        if let Some(first) = self.fc.first() {
            let last = self.layers.last().expect("non-empty");
            let spatial = first.in_dim / last.num_filters.max(1);
            if first.in_dim % last.num_filters != 0
                || spatial == 0
                || spatial > last.out_h * last.out_w
            {
                return Err(Error::InvalidManifest(format!(
                    "first fc in_dim {} is not {} filters times a final spatial size of at most {}",
                    first.in_dim,
                    last.num_filters,
                    last.out_h * last.out_w
                )));
            }
        }
        for (i, pair) in self.fc.windows(2).enumerate() {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::InvalidManifest(format!(
                    "fc {} outputs {} but fc {} expects {}",
                    i + 1,
                    pair[0].out_dim,
                    i + 2,
                    pair[1].in_dim
                )));
            }
        }
        if self.fc.iter().any(|f| f.in_dim == 0 || f.out_dim == 0) {
            return Err(Error::InvalidManifest("fc layer with zero width".into()));
        }
        Ok(())
    }

    /// Reads and validates `model.json` from a container directory, or a
    /// manifest file given directly.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = if path.is_dir() {
            path.join(MANIFEST_FILE)
        } else {
            path.to_path_buf()
        };
        let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        let manifest: ModelManifest =
            serde_json::from_str(&text).map_err(|source| Error::Manifest {
                path: file.clone(),
                source,
            })?;
        manifest.validate()?;
        Ok(manifest)
    }
}

/// One filter's weights, `k·k·C` values, channel-major then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterTensor {
    pub layer_id: u32,
    /// 1-based index within the layer.
    pub filter_index: u32,
    pub weights: Vec<f32>,
}

/// A loaded container: manifest plus every filter of every layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub manifest: ModelManifest,
    /// `filters[p]` belongs to `manifest.layers[p]`.
    pub filters: Vec<Vec<FilterTensor>>,
}

impl Model {
    pub fn layer_filters(&self, id: u32) -> Result<&[FilterTensor]> {
        let pos = self.manifest.position(id)?;
        Ok(&self.filters[pos])
    }

    /// Model with weights drawn uniformly from [-1, 1), reproducible per seed.
    pub fn random(manifest: ModelManifest, seed: u64) -> Result<Self> {
        manifest.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let filters = manifest
            .layers
            .iter()
            .map(|layer| {
                (1..=layer.num_filters as u32)
                    .map(|index| FilterTensor {
                        layer_id: layer.id,
                        filter_index: index,
                        weights: (0..layer.filter_len())
                            .map(|_| rng.gen_range(-1.0f32..1.0))
                            .collect(),
                    })
                    .collect()
            })
            .collect();
        Ok(Model { manifest, filters })
    }

    /// Writes the container into `dir`, creating it if needed.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest_path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        fs::write(&manifest_path, json + "\n").map_err(|e| Error::io(&manifest_path, e))?;

        for (layer, filters) in self.manifest.layers.iter().zip(&self.filters) {
            if filters.len() != layer.num_filters {
                return Err(Error::InvalidManifest(format!(
                    "layer {} has {} filters, manifest says {}",
                    layer.id,
                    filters.len(),
                    layer.num_filters
                )));
            }
            let mut bytes = Vec::with_capacity(layer.blob_bytes() as usize);
            for filter in filters {
                if filter.weights.len() != layer.filter_len() {
                    return Err(Error::ShapeMismatch(format!(
                        "filter {} of layer {} has {} weights, expected {}",
                        filter.filter_index,
                        layer.id,
                        filter.weights.len(),
                        layer.filter_len()
                    )));
                }
                for w in &filter.weights {
                    bytes.extend_from_slice(&w.to_le_bytes());
                }
            }
            let path = dir.join(layer.blob_name());
            let mut file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            file.write_all(&bytes).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

/// Loads a container directory written by [`Model::save`] or any tool that
/// follows the same layout.
pub fn load_model(dir: impl AsRef<Path>) -> Result<Model> {
    let dir = dir.as_ref();
    let manifest = ModelManifest::load(dir)?;
    let mut filters = Vec::with_capacity(manifest.layers.len());
    for layer in &manifest.layers {
        let path = dir.join(layer.blob_name());
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::MissingBlob {
                    layer: layer.id,
                    path,
                })
            }
            Err(e) => return Err(Error::io(&path, e)),
        };
        let expected = layer.blob_bytes();
        let found = bytes.len() as u64;
        if found < expected {
            return Err(Error::TruncatedBlob {
                layer: layer.id,
                expected,
                found,
            });
        }
        if found != expected {
            return Err(Error::BlobSizeMismatch {
                layer: layer.id,
                expected,
                found,
            });
        }
        let flen = layer.filter_len();
        let layer_filters = bytes
            .chunks_exact(4 * flen)
            .enumerate()
            .map(|(i, chunk)| FilterTensor {
                layer_id: layer.id,
                filter_index: i as u32 + 1,
                weights: chunk
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                    .collect(),
            })
            .collect();
        filters.push(layer_filters);
    }
    Ok(Model { manifest, filters })
}

/// Built-in topologies for CIFAR-10 sized inputs.
pub mod presets {
    use super::{FcSpec, LayerSpec, ModelManifest};

    fn conv(id: u32, k: usize, in_channels: usize, num_filters: usize, side: usize) -> LayerSpec {
        LayerSpec {
            id,
            k,
            in_channels,
            num_filters,
            out_h: side,
            out_w: side,
        }
    }

    /// VGG-16 with 13 conv layers on 32×32 inputs and a 512-512-10 head.
    pub fn vgg16_cifar() -> ModelManifest {
        let shape = [
            (3, 64, 32),
            (64, 64, 32),
            (64, 128, 16),
            (128, 128, 16),
            (128, 256, 8),
            (256, 256, 8),
            (256, 256, 8),
            (256, 512, 4),
            (512, 512, 4),
            (512, 512, 4),
            (512, 512, 2),
            (512, 512, 2),
            (512, 512, 2),
        ];
        ModelManifest {
            name: "vgg16-cifar".into(),
            layers: shape
                .iter()
                .enumerate()
                .map(|(i, &(c, n, side))| conv(i as u32 + 1, 3, c, n, side))
                .collect(),
            fc: vec![
                FcSpec {
                    in_dim: 512,
                    out_dim: 512,
                },
                FcSpec {
                    in_dim: 512,
                    out_dim: 10,
                },
            ],
        }
    }

    /// AlexNet with 5 conv layers on 32×32 inputs and a 4096-4096-10 head.
    pub fn alexnet_cifar() -> ModelManifest {
        ModelManifest {
            name: "alexnet-cifar".into(),
            layers: vec![
                conv(1, 11, 3, 96, 32),
                conv(2, 5, 96, 256, 8),
                conv(3, 3, 256, 384, 4),
                conv(4, 3, 384, 384, 4),
                conv(5, 3, 384, 256, 4),
            ],
            fc: vec![
                FcSpec {
                    in_dim: 1024,
                    out_dim: 4096,
                },
                FcSpec {
                    in_dim: 4096,
                    out_dim: 4096,
                },
                FcSpec {
                    in_dim: 4096,
                    out_dim: 10,
                },
            ],
        }
    }
}
