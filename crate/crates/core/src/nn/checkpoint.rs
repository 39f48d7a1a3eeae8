//! Binary checkpoint format.
//!
//! ```text
//! "GDL1"  u32 layer count
//! per layer:  u8 kind  |  u64 dims (count fixed by kind)  |  f64 weights (row-major)
//! ```
//!
//! All integers and floats are little-endian. The low nibble of the kind byte
//! names the layer type, the high nibble its activation (0 = none).

use std::fs;
use std::path::Path;

use crate::autodiff::PoolKind;
use crate::error::{Error, Result};
use crate::nn::activation::{Activation, DEFAULT_LEAKY_SLOPE};
use crate::nn::conv::{ConvLayout, Conv1dSpec, Conv2dSpec, PoolLayout, PoolSpec};
use crate::nn::layer::{AffineLayer, Conv1dLayer, Conv2dLayer, Layer};
use crate::nn::model::{Model, ModelLayer, Parameterized};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"GDL1";

pub const KIND_AFFINE: u8 = 1;
pub const KIND_CONV1D: u8 = 2;
pub const KIND_CONV2D: u8 = 3;
pub const KIND_POOL: u8 = 4;
pub const KIND_MP_GENERIC: u8 = 5;
pub const KIND_MP_KIPF_WELLING: u8 = 6;
pub const KIND_MP_SAGE: u8 = 7;
pub const KIND_GAT: u8 = 8;

/// Number of `u64` shape entries stored for a layer kind.
pub fn dims_for_kind(kind: u8) -> Option<usize> {
    Some(match kind {
        KIND_AFFINE => 2,
        KIND_CONV1D => 5,
        KIND_CONV2D => 6,
        KIND_POOL => 6,
        KIND_MP_GENERIC | KIND_MP_KIPF_WELLING | KIND_MP_SAGE => 2,
        KIND_GAT => 4,
        _ => return None,
    })
}

/// One serialized layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub kind: u8,
    pub activation: Option<Activation>,
    pub dims: Vec<u64>,
    pub weights: Vec<f64>,
}

impl Record {
    fn kind_byte(&self) -> Result<u8> {
        if let Some(Activation::LeakyRelu(s)) = self.activation {
            if s != DEFAULT_LEAKY_SLOPE {
                return Err(Error::BadCheckpoint(format!("LeakyRELU slope {s} is not storable")));
            }
        }
        let act = self.activation.map_or(0, |a| a.code());
        Ok(self.kind | (act << 4))
    }
}

pub fn encode(records: &[Record]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for r in records {
        if dims_for_kind(r.kind) != Some(r.dims.len()) {
            return Err(Error::BadCheckpoint(format!("kind {} with {} dims", r.kind, r.dims.len())));
        }
        out.push(r.kind_byte()?);
        for d in &r.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for w in &r.weights {
            out.extend_from_slice(&w.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::BadCheckpoint("unexpected end of file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Decodes the records; `weights_len` gives the weight count implied by a
/// record's kind and dims.
pub fn decode(bytes: &[u8], weights_len: impl Fn(u8, &[u64]) -> Result<usize>) -> Result<Vec<Record>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::BadCheckpoint("missing GDL1 magic".into()));
    }
    let count = u32::from_le_bytes(r.take(4)?.try_into().unwrap()) as usize;
    let mut records = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let byte = r.take(1)?[0];
        let kind = byte & 0x0f;
        let activation = match byte >> 4 {
            0 => None,
            c => Some(Activation::from_code(c)?),
        };
        let nd = dims_for_kind(kind).ok_or_else(|| Error::BadCheckpoint(format!("unknown layer kind {kind}")))?;
        let dims = (0..nd).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        let nw = weights_len(kind, &dims)?;
        let raw = r.take(nw.checked_mul(8).ok_or_else(|| Error::BadCheckpoint("weight count overflow".into()))?)?;
        let weights = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        records.push(Record {
            kind,
            activation,
            dims,
            weights,
        });
    }
    if r.pos != bytes.len() {
        return Err(Error::BadCheckpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(records)
}

pub fn write_file(path: &Path, records: &[Record]) -> Result<()> {
    fs::write(path, encode(records)?).map_err(|e| Error::io(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn usize_of(v: u64) -> Result<usize> {
    usize::try_from(v).map_err(|_| Error::BadCheckpoint(format!("dimension {v} too large")))
}

fn dims_usize(dims: &[u64]) -> Result<Vec<usize>> {
    dims.iter().map(|&d| usize_of(d)).collect()
}

fn checked_product(values: &[usize]) -> Result<usize> {
    values
        .iter()
        .try_fold(1usize, |acc, &v| acc.checked_mul(v))
        .ok_or_else(|| Error::BadCheckpoint("dimension product overflows".into()))
}

/// Weight count of a feed-forward layer record.
pub fn layer_weights_len(kind: u8, dims: &[u64]) -> Result<usize> {
    let d = dims_usize(dims)?;
    match kind {
        KIND_AFFINE => Ok(checked_product(&[d[0], d[1]])? + d[1]),
        KIND_CONV1D => {
            let spec = conv1d_template(&d)?;
            Ok(d[4] * (spec.kernel_len() + spec.out_len()))
        }
        KIND_CONV2D => {
            let spec = conv2d_template(&d)?;
            let (r, s) = spec.output_dims();
            Ok(d[5] * (d[2] * d[3] + r * s))
        }
        KIND_POOL => Ok(0),
        other => Err(Error::BadCheckpoint(format!("layer kind {other} is not a feed-forward layer"))),
    }
}

fn conv1d_template(d: &[usize]) -> Result<Conv1dSpec> {
    let (len, r, stride, mode, channels) = (d[0], d[1], d[2], d[3], d[4]);
    if channels == 0 || r == 0 {
        return Err(Error::BadCheckpoint("empty convolution".into()));
    }
    let k = Tensor::zeros(&[r]);
    let spec = match mode {
        0 => Conv1dSpec::valid(k, len, stride),
        1 => Conv1dSpec::same(k, len),
        m => return Err(Error::BadCheckpoint(format!("conv1d mode {m}"))),
    };
    spec.map_err(|e| Error::BadCheckpoint(e.to_string()))
}

fn conv2d_template(d: &[usize]) -> Result<Conv2dSpec> {
    let (n, m, kd, kq, stride, channels) = (d[0], d[1], d[2], d[3], d[4], d[5]);
    if channels == 0 || kd == 0 || kq == 0 {
        return Err(Error::BadCheckpoint("empty convolution".into()));
    }
    Conv2dSpec::valid(Tensor::zeros(&[kd, kq]), n, m, stride).map_err(|e| Error::BadCheckpoint(e.to_string()))
}

fn pool_kind_code(k: PoolKind) -> u64 {
    match k {
        PoolKind::Mean => 0,
        PoolKind::Max => 1,
    }
}

fn not_serializable(what: &str) -> Error {
    Error::BadCheckpoint(format!("{what} built from custom index functions cannot be checkpointed"))
}

impl Layer {
    pub fn to_record(&self, activation: Option<Activation>) -> Result<Record> {
        let (kind, dims) = match self {
            Layer::Affine(l) => (KIND_AFFINE, vec![l.in_dim() as u64, l.out_dim() as u64]),
            Layer::Conv1d(c) => {
                let s = &c.channels[0];
                let (stride, mode) = match s.layout() {
                    Some(ConvLayout::Valid { stride }) => (stride, 0),
                    Some(ConvLayout::Same) => (1, 1),
                    None => return Err(not_serializable("conv1d")),
                };
                if c.channels.iter().any(|o| o.layout() != s.layout() || o.kernel_len() != s.kernel_len()) {
                    return Err(not_serializable("mixed conv1d channels"));
                }
                let dims = [s.in_len(), s.kernel_len(), stride, mode, c.channels.len()];
                (KIND_CONV1D, dims.iter().map(|&v| v as u64).collect())
            }
            Layer::Conv2d(c) => {
                let s = &c.channels[0];
                let stride = s.stride().ok_or_else(|| not_serializable("conv2d"))?;
                if c.channels.iter().any(|o| o.stride() != s.stride() || o.kernel.shape() != s.kernel.shape()) {
                    return Err(not_serializable("mixed conv2d channels"));
                }
                let (n, m) = s.input_dims();
                let dims = [n, m, s.kernel.shape()[0], s.kernel.shape()[1], stride, c.channels.len()];
                (KIND_CONV2D, dims.iter().map(|&v| v as u64).collect())
            }
            Layer::Pool(p) => {
                let k = pool_kind_code(p.kind);
                let dims = match p.layout() {
                    Some(PoolLayout::Windows { size, stride }) => vec![0, p.in_len() as u64, size as u64, stride as u64, 0, k],
                    Some(PoolLayout::Grid { channels, n, m, size }) => {
                        vec![1, channels as u64, n as u64, m as u64, size as u64, k]
                    }
                    None => return Err(not_serializable("pooling")),
                };
                (KIND_POOL, dims)
            }
        };
        let weights = self.params().iter().flat_map(|t| t.data().iter().copied()).collect();
        Ok(Record {
            kind,
            activation,
            dims,
            weights,
        })
    }

    pub fn from_record(rec: &Record) -> Result<Layer> {
        let d = dims_usize(&rec.dims)?;
        let mut layer = match rec.kind {
            KIND_AFFINE => Layer::Affine(AffineLayer::zeros(d[0], d[1])),
            KIND_CONV1D => {
                let t = conv1d_template(&d)?;
                Layer::Conv1d(Conv1dLayer {
                    channels: vec![t; d[4]],
                })
            }
            KIND_CONV2D => {
                let t = conv2d_template(&d)?;
                Layer::Conv2d(Conv2dLayer {
                    channels: vec![t; d[5]],
                })
            }
            KIND_POOL => {
                let kind = match d[5] {
                    0 => PoolKind::Mean,
                    1 => PoolKind::Max,
                    k => return Err(Error::BadCheckpoint(format!("pool kind {k}"))),
                };
                let spec = match d[0] {
                    0 => PoolSpec::windows(d[1], d[2], d[3], kind),
                    1 => PoolSpec::grid(d[1], d[2], d[3], d[4], kind),
                    m => return Err(Error::BadCheckpoint(format!("pool mode {m}"))),
                };
                Layer::Pool(spec.map_err(|e| Error::BadCheckpoint(e.to_string()))?)
            }
            k => return Err(Error::BadCheckpoint(format!("layer kind {k} is not a feed-forward layer"))),
        };
        let mut offset = 0;
        let mut tensors = Vec::new();
        for s in layer.param_specs() {
            let chunk = rec
                .weights
                .get(offset..offset + s.len())
                .ok_or_else(|| Error::BadCheckpoint("too few weights".into()))?;
            tensors.push(Tensor::new(s.shape.clone(), chunk.to_vec())?);
            offset += s.len();
        }
        if offset != rec.weights.len() {
            return Err(Error::BadCheckpoint("weight count does not match dims".into()));
        }
        layer.set_params(&tensors)?;
        Ok(layer)
    }
}

impl Model {
    pub fn to_records(&self) -> Result<Vec<Record>> {
        self.layers().iter().map(|l| l.layer.to_record(l.activation)).collect()
    }

    pub fn from_records(records: &[Record]) -> Result<Model> {
        let layers = records
            .iter()
            .map(|r| {
                Ok(ModelLayer {
                    layer: Layer::from_record(r)?,
                    activation: r.activation,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Model::new(layers).map_err(|e| Error::BadCheckpoint(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_records()?)
    }

    pub fn load(path: &Path) -> Result<Model> {
        let bytes = read_bytes(path)?;
        Model::from_records(&decode(&bytes, layer_weights_len)?)
    }

    /// Serialized form, for comparing checkpoints byte for byte.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        encode(&self.to_records()?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Model> {
        Model::from_records(&decode(bytes, layer_weights_len)?)
    }
}

/// True when both models serialize to identical bytes.
pub fn same_weights(a: &Model, b: &Model) -> bool {
    a.n_params() == b.n_params() && a.weights_flat().data().iter().zip(b.weights_flat().data()).all(|(x, y)| x.to_bits() == y.to_bits())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cnn() -> Model {
        let conv = Conv2dLayer {
            channels: (0..2)
                .map(|_| Conv2dSpec::valid(Tensor::zeros(&[3, 3]), 6, 6, 1).unwrap())
                .collect(),
        };
        let mut m = Model::new(vec![
            ModelLayer {
                layer: Layer::Conv2d(conv),
                activation: Some(Activation::Relu),
            },
            ModelLayer {
                layer: Layer::Pool(PoolSpec::grid(2, 4, 4, 2, PoolKind::Max).unwrap()),
                activation: None,
            },
            ModelLayer {
                layer: Layer::Affine(AffineLayer::zeros(8, 3)),
                activation: None,
            },
        ])
        .unwrap();
        let w = Tensor::vector((0..m.n_params()).map(|i| (i as f64).sin() * 1e-3).collect());
        m.set_weights_flat(&w).unwrap();
        m
    }

    #[test]
    fn header_layout() {
        let m = Model::mlp(&[2, 1], Activation::Relu).unwrap();
        let b = m.to_bytes().unwrap();
        assert_eq!(&b[..4], b"GDL1");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(b[8], KIND_AFFINE);
        assert_eq!(b.len(), 8 + 1 + 16 + 3 * 8);
    }

    #[test]
    fn cnn_roundtrip_is_bit_exact() {
        let m = cnn();
        let bytes = m.to_bytes().unwrap();
        let back = Model::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert!(same_weights(&m, &back));
    }

    #[test]
    fn conv1d_roundtrip() {
        let layer = Layer::Conv1d(Conv1dLayer {
            channels: vec![Conv1dSpec::same(Tensor::vector(vec![1.0, -2.0, 0.5]), 7).unwrap(); 2],
        });
        let m = Model::new(vec![
            ModelLayer {
                layer,
                activation: Some(Activation::LeakyRelu(0.2)),
            },
            ModelLayer {
                layer: Layer::Pool(PoolSpec::windows(14, 2, 2, PoolKind::Mean).unwrap()),
                activation: None,
            },
            ModelLayer {
                layer: Layer::Affine(AffineLayer::zeros(7, 2)),
                activation: None,
            },
        ])
        .unwrap();
        let back = Model::from_bytes(&m.to_bytes().unwrap()).unwrap();
        assert_eq!(back.to_bytes().unwrap(), m.to_bytes().unwrap());
        assert_eq!(back.layers()[0].activation, Some(Activation::LeakyRelu(0.2)));
    }

    #[test]
    fn corrupt_files_rejected() {
        let bytes = cnn().to_bytes().unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Model::from_bytes(&bad), Err(Error::BadCheckpoint(_))));
        assert!(matches!(Model::from_bytes(&bytes[..bytes.len() - 3]), Err(Error::BadCheckpoint(_))));
        let mut extra = bytes;
        extra.push(0);
        assert!(matches!(Model::from_bytes(&extra), Err(Error::BadCheckpoint(_))));
    }
}
