//! The Cora citation network in its tab-separated distribution format.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use crate::datasets::GraphDataset;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::tensor::Tensor;
use crate::training::{rng_from_seed, NodeMask};

pub const CORA_TRAIN_PER_CLASS: usize = 20;
pub const CORA_VAL: usize = 500;
pub const CORA_TEST: usize = 1000;

fn malformed(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::MalformedLine {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// `cora.content` and `cora.cites` inside `dir`.
pub fn cora_paths(dir: &Path) -> (PathBuf, PathBuf) {
    (dir.join("cora.content"), dir.join("cora.cites"))
}

/// Sizes of the seeded train/validation/test masks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlanetoidSplit {
    pub per_class: usize,
    pub n_val: usize,
    pub n_test: usize,
}

impl Default for PlanetoidSplit {
    fn default() -> Self {
        PlanetoidSplit {
            per_class: CORA_TRAIN_PER_CLASS,
            n_val: CORA_VAL,
            n_test: CORA_TEST,
        }
    }
}

/// Builds the undirected citation graph. Citations in both directions and
/// self citations collapse into at most one edge per pair.
pub fn parse_cora(
    content: &str,
    cites: &str,
    content_path: &Path,
    cites_path: &Path,
    split: PlanetoidSplit,
    seed: u64,
) -> Result<GraphDataset> {
    let mut node_ids = Vec::new();
    let mut index = HashMap::new();
    let mut class_names: Vec<String> = Vec::new();
    let mut labels = Vec::new();
    let mut features = Vec::new();
    let mut dim = None;
    for (i, line) in content.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() < 3 {
            return Err(malformed(content_path, i + 1, "expected id, features and class"));
        }
        let d = fields.len() - 2;
        if *dim.get_or_insert(d) != d {
            return Err(malformed(content_path, i + 1, format!("{d} features, expected {}", dim.unwrap_or(0))));
        }
        let id = fields[0];
        if index.insert(id.to_string(), node_ids.len()).is_some() {
            return Err(malformed(content_path, i + 1, format!("duplicate node id {id}")));
        }
        node_ids.push(id.to_string());
        for f in &fields[1..=d] {
            features.push(f.parse::<f64>().map_err(|_| malformed(content_path, i + 1, format!("bad feature '{f}'")))?);
        }
        let name = fields[d + 1];
        let label = match class_names.iter().position(|c| c == name) {
            Some(c) => c,
            None => {
                class_names.push(name.to_string());
                class_names.len() - 1
            }
        };
        labels.push(label);
    }
    let n = node_ids.len();
    let mut pairs = BTreeSet::new();
    let mut edges = Vec::new();
    for (i, line) in cites.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 2 {
            return Err(malformed(cites_path, i + 1, format!("expected 2 ids, found {}", fields.len())));
        }
        let lookup = |id: &str| {
            index.get(id).copied().ok_or_else(|| Error::UnknownNodeId {
                path: cites_path.to_path_buf(),
                line: i + 1,
                id: id.to_string(),
            })
        };
        let (a, b) = (lookup(fields[0])?, lookup(fields[1])?);
        if a != b && pairs.insert((a.min(b), a.max(b))) {
            edges.push((a, b));
        }
    }
    let graph = Graph::new(n, &edges)?;
    let classes = class_names.len();
    let mask = planetoid_mask(&labels, classes, split, seed)?;
    Ok(GraphDataset {
        graph,
        features: Tensor::new(vec![n, dim.unwrap_or(0)], features)?,
        labels,
        classes,
        mask,
        class_names,
        node_ids,
    })
}

pub fn load_cora(content_path: &Path, cites_path: &Path, seed: u64) -> Result<GraphDataset> {
    let content = fs::read_to_string(content_path).map_err(|e| Error::io(content_path, e))?;
    let cites = fs::read_to_string(cites_path).map_err(|e| Error::io(cites_path, e))?;
    parse_cora(&content, &cites, content_path, cites_path, PlanetoidSplit::default(), seed)
}

/// Shuffles the nodes with `seed`, then takes the first `per_class` nodes of
/// every class for training, and the next `n_val` and `n_test` of the rest.
pub fn planetoid_mask(labels: &[usize], classes: usize, split: PlanetoidSplit, seed: u64) -> Result<NodeMask> {
    let PlanetoidSplit { per_class, n_val, n_test } = split;
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let mut taken = vec![0usize; classes];
    let mut train = Vec::new();
    let mut rest = Vec::new();
    for v in order {
        if taken[labels[v]] < per_class {
            taken[labels[v]] += 1;
            train.push(v);
        } else {
            rest.push(v);
        }
    }
    if let Some(c) = taken.iter().position(|&t| t < per_class) {
        return Err(Error::Config(format!("class {c} has fewer than {per_class} nodes")));
    }
    if rest.len() < n_val + n_test {
        return Err(Error::Config(format!("{} nodes left for {n_val} validation and {n_test} test", rest.len())));
    }
    train.sort_unstable();
    let mut val = rest[..n_val].to_vec();
    let mut test = rest[n_val..n_val + n_test].to_vec();
    val.sort_unstable();
    test.sort_unstable();
    Ok(NodeMask { train, val, test })
}

/// Content and cites text that [`parse_cora`] reads back to the same dataset.
pub fn write_cora(d: &GraphDataset) -> (String, String) {
    let mut content = String::new();
    for v in 0..d.graph.n_nodes() {
        content.push_str(&d.node_ids[v]);
        for x in d.features.row(v) {
            let _ = write!(content, "\t{x}");
        }
        let _ = writeln!(content, "\t{}", d.class_names[d.labels[v]]);
    }
    let mut cites = String::new();
    for &(a, b) in d.graph.edges() {
        let _ = writeln!(cites, "{}\t{}", d.node_ids[a], d.node_ids[b]);
    }
    (content, cites)
}

/// Class names, one per line in index order.
pub fn write_class_names(path: &Path, names: &[String]) -> Result<()> {
    let mut s = names.join("\n");
    s.push('\n');
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_class_names(path: &Path) -> Result<Vec<String>> {
    let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(s.lines().filter(|l| !l.is_empty()).map(str::to_string).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: PlanetoidSplit = PlanetoidSplit {
        per_class: 1,
        n_val: 1,
        n_test: 1,
    };

    fn parse(content: &str, cites: &str, split: PlanetoidSplit) -> Result<GraphDataset> {
        parse_cora(content, cites, Path::new("c"), Path::new("e"), split, 0)
    }

    #[test]
    fn first_seen_classes_and_symmetric_edges() {
        let content = "31\t0\t1\tTheory\n7\t1\t0\tRule_Learning\n12\t1\t1\tTheory\n5\t0\t0\tRule_Learning\n";
        let d = parse(content, "31\t7\n7\t31\n12\t7\n5\t5\n", SMALL).unwrap();
        assert_eq!(d.class_names, vec!["Theory", "Rule_Learning"]);
        assert_eq!(d.labels, vec![0, 1, 0, 1]);
        assert_eq!(d.features.shape(), &[4, 2]);
        assert_eq!(d.graph.n_edges(), 2);
        assert!(d.graph.has_edge(0, 1) && d.graph.has_edge(1, 0) && d.graph.has_edge(2, 1));
        d.mask.validate(4).unwrap();
        assert_eq!(d.mask.train.len(), 2);
    }

    #[test]
    fn round_trip() {
        let content = "a\t1\t0\tX\nb\t0\t1\tY\nc\t1\t1\tX\nd\t0\t0\tY\n";
        let d = parse(content, "a\tb\nc\tb\nd\ta\n", SMALL).unwrap();
        let (c2, e2) = write_cora(&d);
        let d2 = parse(&c2, &e2, SMALL).unwrap();
        assert_eq!(d.features, d2.features);
        assert_eq!(d.labels, d2.labels);
        assert_eq!(d.graph.edges(), d2.graph.edges());
        assert_eq!(d.node_ids, d2.node_ids);
    }

    #[test]
    fn masks_are_seeded_and_per_class() {
        let labels: Vec<usize> = (0..60).map(|i| i % 3).collect();
        let split = PlanetoidSplit {
            per_class: 5,
            n_val: 10,
            n_test: 20,
        };
        let m = planetoid_mask(&labels, 3, split, 1).unwrap();
        assert_eq!(m, planetoid_mask(&labels, 3, split, 1).unwrap());
        m.validate(60).unwrap();
        for c in 0..3 {
            assert_eq!(m.train.iter().filter(|&&v| labels[v] == c).count(), 5);
        }
        assert_eq!((m.val.len(), m.test.len()), (10, 20));
        assert!(planetoid_mask(&labels, 3, PlanetoidSplit { per_class: 30, ..split }, 1).is_err());
    }

    #[test]
    fn unknown_ids_and_bad_lines() {
        let e = parse("31\t0\tA\n", "31\t99\n", SMALL).unwrap_err();
        assert!(matches!(e, Error::UnknownNodeId { line: 1, ref id, .. } if id == "99"));
        let e = parse("1\t0\tA\n2\t0\t1\tA\n", "", SMALL).unwrap_err();
        assert!(matches!(e, Error::MalformedLine { line: 2, .. }));
    }
}
