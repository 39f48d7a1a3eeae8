//! MNIST (IDX) and CIFAR-10 (binary batch) image files.

use std::fs;
use std::path::{Path, PathBuf};

use crate::datasets::Samples;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 2051;
pub const IDX_LABELS_MAGIC: u32 = 2049;
pub const CIFAR_RECORD: usize = 3073;
pub const CIFAR_DIM: usize = 3072;

/// How raw bytes become features.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PixelScale {
    /// `b / 255` in `[0, 1]`.
    #[default]
    Unit,
    /// The byte value itself, `0..=255`.
    Raw,
}

impl PixelScale {
    fn apply(self, b: u8) -> f64 {
        match self {
            PixelScale::Unit => b as f64 / 255.0,
            PixelScale::Raw => b as f64,
        }
    }

    fn invert(self, v: f64) -> u8 {
        let b = match self {
            PixelScale::Unit => v * 255.0,
            PixelScale::Raw => v,
        };
        b.round().clamp(0.0, 255.0) as u8
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::TruncatedFile(path.to_path_buf()))
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

fn body<'a>(bytes: &'a [u8], header: usize, len: usize, path: &Path) -> Result<&'a [u8]> {
    match bytes.len().cmp(&(header + len)) {
        std::cmp::Ordering::Less => Err(Error::TruncatedFile(path.to_path_buf())),
        std::cmp::Ordering::Greater => Err(Error::CountMismatch(format!(
            "{}: {} trailing bytes",
            path.display(),
            bytes.len() - header - len
        ))),
        std::cmp::Ordering::Equal => Ok(&bytes[header..]),
    }
}

/// Decodes an IDX image file into `N × (rows·cols)`.
pub fn parse_idx_images(bytes: &[u8], scale: PixelScale, path: &Path) -> Result<Tensor> {
    check_magic(bytes, IDX_IMAGES_MAGIC, path)?;
    let n = be_u32(bytes, 4, path)? as usize;
    let d = be_u32(bytes, 8, path)? as usize * be_u32(bytes, 12, path)? as usize;
    let pixels = body(bytes, 16, n * d, path)?;
    Tensor::new(vec![n, d], pixels.iter().map(|&b| scale.apply(b)).collect())
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<usize>> {
    check_magic(bytes, IDX_LABELS_MAGIC, path)?;
    let n = be_u32(bytes, 4, path)? as usize;
    Ok(body(bytes, 8, n, path)?.iter().map(|&b| b as usize).collect())
}

pub fn load_mnist_with(images: &Path, labels: &Path, scale: PixelScale) -> Result<Samples> {
    let x = parse_idx_images(&read(images)?, scale, images)?;
    let y = parse_idx_labels(&read(labels)?, labels)?;
    if x.rows() != y.len() {
        return Err(Error::CountMismatch(format!(
            "{} images in {} but {} labels in {}",
            x.rows(),
            images.display(),
            y.len(),
            labels.display()
        )));
    }
    Samples::new(x, y, 10)
}

/// One MNIST image/label file pair, pixels scaled to `[0, 1]`.
pub fn load_mnist(images: &Path, labels: &Path) -> Result<Samples> {
    load_mnist_with(images, labels, PixelScale::Unit)
}

/// The shipped training and test sets.
#[derive(Clone, Debug)]
pub struct TrainTest {
    pub train: Samples,
    pub test: Samples,
}

/// Paths of the four standard MNIST files inside `dir`.
pub fn mnist_paths(dir: &Path) -> [PathBuf; 4] {
    [
        "train-images-idx3-ubyte",
        "train-labels-idx1-ubyte",
        "t10k-images-idx3-ubyte",
        "t10k-labels-idx1-ubyte",
    ]
    .map(|f| dir.join(f))
}

pub fn load_mnist_dir(dir: &Path, scale: PixelScale) -> Result<TrainTest> {
    let [tri, trl, tei, tel] = mnist_paths(dir);
    Ok(TrainTest {
        train: load_mnist_with(&tri, &trl, scale)?,
        test: load_mnist_with(&tei, &tel, scale)?,
    })
}

/// IDX image file for `samples`, with the given image side lengths.
pub fn encode_idx_images(x: &Tensor, rows: usize, cols: usize, scale: PixelScale) -> Result<Vec<u8>> {
    let (n, d) = x.dims2()?;
    if d != rows * cols {
        return Err(Error::shape("encode_idx_images", &[rows * cols], &[d]));
    }
    let mut out = Vec::with_capacity(16 + n * d);
    for v in [IDX_IMAGES_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend(x.data().iter().map(|&v| scale.invert(v)));
    Ok(out)
}

pub fn encode_idx_labels(y: &[usize]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + y.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(y.len() as u32).to_be_bytes());
    out.extend(y.iter().map(|&l| l as u8));
    out
}

/// Decodes concatenated 3073-byte CIFAR-10 records.
pub fn parse_cifar10(bytes: &[u8], scale: PixelScale, path: &Path) -> Result<Samples> {
    if !bytes.len().is_multiple_of(CIFAR_RECORD) {
        return Err(Error::TruncatedFile(path.to_path_buf()));
    }
    let n = bytes.len() / CIFAR_RECORD;
    let mut x = Vec::with_capacity(n * CIFAR_DIM);
    let mut y = Vec::with_capacity(n);
    for rec in bytes.chunks_exact(CIFAR_RECORD) {
        y.push(rec[0] as usize);
        x.extend(rec[1..].iter().map(|&b| scale.apply(b)));
    }
    Samples::new(Tensor::new(vec![n, CIFAR_DIM], x)?, y, 10)
}

/// Concatenation of the records of every batch file, in order.
pub fn load_cifar10_with(paths: &[PathBuf], scale: PixelScale) -> Result<Samples> {
    let mut bytes = Vec::new();
    for p in paths {
        let b = read(p)?;
        if b.len() % CIFAR_RECORD != 0 {
            return Err(Error::TruncatedFile(p.clone()));
        }
        bytes.extend(b);
    }
    let label = paths.first().map_or_else(PathBuf::new, Clone::clone);
    parse_cifar10(&bytes, scale, &label)
}

pub fn load_cifar10(paths: &[PathBuf]) -> Result<Samples> {
    load_cifar10_with(paths, PixelScale::Unit)
}

pub fn encode_cifar10(s: &Samples, scale: PixelScale) -> Result<Vec<u8>> {
    let (n, d) = s.x.dims2()?;
    if d != CIFAR_DIM {
        return Err(Error::shape("encode_cifar10", &[CIFAR_DIM], &[d]));
    }
    let mut out = Vec::with_capacity(n * CIFAR_RECORD);
    for i in 0..n {
        out.push(s.y[i] as u8);
        out.extend(s.x.row(i).iter().map(|&v| scale.invert(v)));
    }
    Ok(out)
}
