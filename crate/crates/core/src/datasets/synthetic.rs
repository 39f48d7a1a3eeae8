//! Seeded planted-partition graphs with bag-of-words style features.

use rand::Rng;

use crate::datasets::{planetoid_mask, GraphDataset, PlanetoidSplit};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::tensor::Tensor;
use crate::training::rng_from_seed;

#[derive(Clone, Debug, PartialEq)]
pub struct PlantedPartition {
    pub nodes: usize,
    pub classes: usize,
    pub features: usize,
    pub mean_degree: f64,
    /// Probability that an edge joins two nodes of the same class.
    pub homophily: f64,
    /// Active features per node.
    pub words: usize,
    /// Probability that an active feature comes from the node's class block.
    pub signal: f64,
    pub split: PlanetoidSplit,
}

impl Default for PlantedPartition {
    /// Citation-network proportions: 2708 nodes, 7 classes, 1433 binary
    /// features.
    fn default() -> Self {
        PlantedPartition {
            nodes: 2708,
            classes: 7,
            features: 1433,
            mean_degree: 3.9,
            homophily: 0.8,
            words: 18,
            signal: 0.3,
            split: PlanetoidSplit::default(),
        }
    }
}

pub fn planted_partition(cfg: &PlantedPartition, seed: u64) -> Result<GraphDataset> {
    let PlantedPartition {
        nodes: n,
        classes: c,
        features: d,
        ..
    } = *cfg;
    if c == 0 || n < c || d < c || !(0.0..=1.0).contains(&cfg.homophily) || !(0.0..=1.0).contains(&cfg.signal) {
        return Err(Error::Config(format!("bad planted partition {cfg:?}")));
    }
    let mut rng = rng_from_seed(seed);
    let labels: Vec<usize> = (0..n).map(|v| v % c).collect();
    let members: Vec<Vec<usize>> = (0..c).map(|k| (k..n).step_by(c).collect()).collect();
    let target = ((n as f64 * cfg.mean_degree / 2.0).round() as usize).min(n * (n - 1) / 2);
    let mut seen = std::collections::HashSet::new();
    let mut edges = Vec::with_capacity(target);
    while edges.len() < target {
        let u = rng.random_range(0..n);
        let v = if rng.random_bool(cfg.homophily) {
            let m = &members[labels[u]];
            m[rng.random_range(0..m.len())]
        } else {
            rng.random_range(0..n)
        };
        if u != v && seen.insert((u.min(v), u.max(v))) {
            edges.push((u, v));
        }
    }
    let block = d / c;
    let mut x = Tensor::zeros(&[n, d]);
    for (v, &y) in labels.iter().enumerate() {
        for _ in 0..cfg.words {
            let f = if rng.random_bool(cfg.signal) {
                y * block + rng.random_range(0..block)
            } else {
                rng.random_range(0..d)
            };
            x.set(v, f, 1.0);
        }
    }
    let mask = planetoid_mask(&labels, c, cfg.split, seed)?;
    Ok(GraphDataset {
        graph: Graph::new(n, &edges)?,
        features: x,
        labels,
        classes: c,
        mask,
        class_names: (0..c).map(|k| format!("class_{k}")).collect(),
        node_ids: (0..n).map(|v| v.to_string()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_and_determinism() {
        let cfg = PlantedPartition {
            nodes: 140,
            features: 70,
            split: PlanetoidSplit {
                per_class: 5,
                n_val: 30,
                n_test: 40,
            },
            ..Default::default()
        };
        let a = planted_partition(&cfg, 3).unwrap();
        let b = planted_partition(&cfg, 3).unwrap();
        assert_eq!(a.graph.edges(), b.graph.edges());
        assert_eq!(a.features, b.features);
        assert_eq!(a.graph.n_edges(), 273);
        assert_eq!(a.features.shape(), &[140, 70]);
        assert_eq!(a.mask.train.len(), 35);
        let same = a.graph.edges().iter().filter(|&&(u, v)| a.labels[u] == a.labels[v]).count();
        assert!(same as f64 > 0.7 * a.graph.n_edges() as f64);
    }
}
