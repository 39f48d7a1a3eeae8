//! Dataset loaders (MNIST, CIFAR-10, Cora), the embedded karate club graph,
//! and split construction.

mod cora;
mod images;
mod karate;
mod synthetic;

pub use cora::{
    cora_paths, load_cora, parse_cora, planetoid_mask, read_class_names, write_class_names, write_cora, PlanetoidSplit,
    CORA_TEST, CORA_TRAIN_PER_CLASS, CORA_VAL,
};
pub use images::{
    encode_cifar10, encode_idx_images, encode_idx_labels, load_cifar10, load_cifar10_with, load_mnist, load_mnist_dir,
    load_mnist_with, mnist_paths, parse_cifar10, parse_idx_images, parse_idx_labels, PixelScale, TrainTest, CIFAR_DIM,
    CIFAR_RECORD, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC,
};
pub use karate::{
    karate_club, karate_club_with_seed, karate_graph, karate_mask, KARATE_CLASSES, KARATE_EDGES, KARATE_LABELS, KARATE_NODES,
};
pub use synthetic::{planted_partition, PlantedPartition};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::losses::check_labels;
use crate::tensor::Tensor;
use crate::training::{rng_from_seed, LabeledData, NodeMask};

/// `N × d` samples with labels in `0..classes`.
#[derive(Clone, Debug, PartialEq)]
pub struct Samples {
    pub x: Tensor,
    pub y: Vec<usize>,
    pub classes: usize,
}

impl Samples {
    pub fn new(x: Tensor, y: Vec<usize>, classes: usize) -> Result<Self> {
        let (n, _) = x.dims2()?;
        if n != y.len() {
            return Err(Error::CountMismatch(format!("{n} samples but {} labels", y.len())));
        }
        check_labels(&y, classes)?;
        Ok(Samples { x, y, classes })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn view(&self) -> LabeledData<'_> {
        LabeledData { x: &self.x, y: &self.y }
    }

    pub fn subset(&self, idx: &[usize]) -> Result<Samples> {
        Ok(Samples {
            x: self.x.gather_rows(idx)?,
            y: idx.iter().map(|&i| self.y[i]).collect(),
            classes: self.classes,
        })
    }

    /// The first `n` samples.
    pub fn head(&self, n: usize) -> Result<Samples> {
        self.subset(&(0..n.min(self.len())).collect::<Vec<_>>())
    }
}

/// Samples with disjoint train/validation/test index sets.
#[derive(Clone, Debug)]
pub struct SplitDataset {
    pub samples: Samples,
    pub split: NodeMask,
}

impl SplitDataset {
    /// Splits with [`make_splits`].
    pub fn new(samples: Samples, fractions: [f64; 3], seed: u64) -> Result<Self> {
        let split = make_splits(samples.len(), fractions, seed)?;
        Ok(SplitDataset { samples, split })
    }

    pub fn part(&self, name: &str) -> Result<Samples> {
        let idx = self.split.get(name).ok_or_else(|| Error::Config(format!("unknown split '{name}'")))?;
        self.samples.subset(idx)
    }
}

/// A graph with node features, node labels and a node mask.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphDataset {
    pub graph: Graph,
    /// `|V| × d`.
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub mask: NodeMask,
    /// Name of each class index.
    pub class_names: Vec<String>,
    /// Node identifiers as they appear in the source files.
    pub node_ids: Vec<String>,
}

/// Random disjoint, exhaustive train/validation/test sets of `0..n`. The
/// first two sizes are `round(n·f)` and the test set takes the remainder.
pub fn make_splits(n: usize, fractions: [f64; 3], seed: u64) -> Result<NodeMask> {
    let total: f64 = fractions.iter().sum();
    if fractions.iter().any(|f| !(*f >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::BadFractions(fractions.to_vec()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let n_train = ((n as f64 * fractions[0]).round() as usize).min(n);
    let n_val = ((n as f64 * fractions[1]).round() as usize).min(n - n_train);
    let mut train = order[..n_train].to_vec();
    let mut val = order[n_train..n_train + n_val].to_vec();
    let mut test = order[n_train + n_val..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(NodeMask { train, val, test })
}
