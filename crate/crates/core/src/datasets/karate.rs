//! Zachary's karate club.

use rand::seq::IndexedRandom;

use crate::datasets::GraphDataset;
use crate::graph::Graph;
use crate::tensor::Tensor;
use crate::training::{rng_from_seed, NodeMask};

pub const KARATE_NODES: usize = 34;
pub const KARATE_CLASSES: usize = 4;

/// The 78 friendships, zero-based.
#[rustfmt::skip]
pub const KARATE_EDGES: [(usize, usize); 78] = [
    (0, 1), (0, 2), (0, 3), (0, 4), (0, 5), (0, 6), (0, 7), (0, 8), (0, 10), (0, 11), (0, 12), (0, 13), (0, 17),
    (0, 19), (0, 21), (0, 31), (1, 2), (1, 3), (1, 7), (1, 13), (1, 17), (1, 19), (1, 21), (1, 30), (2, 3), (2, 7),
    (2, 8), (2, 9), (2, 13), (2, 27), (2, 28), (2, 32), (3, 7), (3, 12), (3, 13), (4, 6), (4, 10), (5, 6), (5, 10),
    (5, 16), (6, 16), (8, 30), (8, 32), (8, 33), (9, 33), (13, 33), (14, 32), (14, 33), (15, 32), (15, 33), (18, 32),
    (18, 33), (19, 33), (20, 32), (20, 33), (22, 32), (22, 33), (23, 25), (23, 27), (23, 29), (23, 32), (23, 33),
    (24, 25), (24, 27), (24, 31), (25, 31), (26, 29), (26, 33), (27, 33), (28, 31), (28, 33), (29, 32), (29, 33),
    (30, 32), (30, 33), (31, 32), (31, 33), (32, 33),
];

/// Four-community labelling.
#[rustfmt::skip]
pub const KARATE_LABELS: [usize; KARATE_NODES] = [
    1, 1, 1, 1, 3, 3, 3, 1, 0, 1, 3, 1, 1, 1, 0, 0, 3, 1, 0, 1, 0, 1, 0, 0, 2, 2, 0, 0, 2, 0, 0, 2, 0, 0,
];

pub fn karate_graph() -> Graph {
    Graph::new(KARATE_NODES, &KARATE_EDGES).expect("karate edge table is valid")
}

/// One randomly chosen training node per class; every other node validates.
pub fn karate_mask(seed: u64) -> NodeMask {
    let mut rng = rng_from_seed(seed);
    let train: Vec<usize> = (0..KARATE_CLASSES)
        .map(|c| {
            let members: Vec<usize> = (0..KARATE_NODES).filter(|&v| KARATE_LABELS[v] == c).collect();
            *members.choose(&mut rng).expect("every class is populated")
        })
        .collect();
    let val = (0..KARATE_NODES).filter(|v| !train.contains(v)).collect();
    NodeMask {
        train,
        val,
        test: Vec::new(),
    }
}

/// Graph, identity features and the mask of `karate_mask(seed)`.
pub fn karate_club_with_seed(seed: u64) -> GraphDataset {
    GraphDataset {
        graph: karate_graph(),
        features: Tensor::identity(KARATE_NODES),
        labels: KARATE_LABELS.to_vec(),
        classes: KARATE_CLASSES,
        mask: karate_mask(seed),
        class_names: (0..KARATE_CLASSES).map(|c| c.to_string()).collect(),
        node_ids: (0..KARATE_NODES).map(|v| v.to_string()).collect(),
    }
}

pub fn karate_club() -> GraphDataset {
    karate_club_with_seed(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_of_the_club() {
        let d = karate_club();
        assert_eq!(d.graph.n_nodes(), 34);
        assert_eq!(d.graph.n_edges(), 78);
        assert_eq!(d.features, Tensor::identity(34));
        assert_eq!(d.graph.connected_components().0, 1);
        assert!(d.graph.isolated_node().is_none());
        let m = &d.mask;
        assert_eq!(m.train.len(), 4);
        assert_eq!(m.val.len(), 30);
        let mut classes: Vec<usize> = m.train.iter().map(|&v| d.labels[v]).collect();
        classes.sort();
        assert_eq!(classes, vec![0, 1, 2, 3]);
        m.validate(34).unwrap();
    }

    #[test]
    fn masks_depend_on_seed() {
        assert_eq!(karate_mask(3), karate_mask(3));
        assert!((0..10).any(|s| karate_mask(s) != karate_mask(0)));
    }
}
