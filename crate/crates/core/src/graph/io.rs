//! Plain-text edge lists: one `i j` (or weighted `i j w`) pair of zero-based
//! node indices per line. Blank lines and lines starting with `#` are skipped.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::Graph;

fn malformed(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::MalformedLine {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(i, l)| (i, l.split_whitespace().collect()))
}

/// Parses an edge list. The node count is one past the largest index unless
/// `n_nodes` is given.
pub fn parse_edge_list(text: &str, n_nodes: Option<usize>, path: &Path) -> Result<Graph> {
    let mut edges = Vec::new();
    let mut weights = Vec::new();
    let mut weighted = None;
    for (line, fields) in content_lines(text) {
        let has_w = match fields.len() {
            2 => false,
            3 => true,
            k => return Err(malformed(path, line, format!("expected 2 or 3 fields, found {k}"))),
        };
        if *weighted.get_or_insert(has_w) != has_w {
            return Err(malformed(path, line, "mixed weighted and unweighted edges"));
        }
        let idx = |s: &str| s.parse::<usize>().map_err(|_| malformed(path, line, format!("bad node index '{s}'")));
        edges.push((idx(fields[0])?, idx(fields[1])?));
        if has_w {
            let w = fields[2]
                .parse::<f64>()
                .map_err(|_| malformed(path, line, format!("bad weight '{}'", fields[2])))?;
            weights.push(w);
        }
    }
    let n = n_nodes.unwrap_or_else(|| edges.iter().map(|&(i, j)| i.max(j) + 1).max().unwrap_or(0));
    let g = Graph::new(n, &edges)?;
    if weighted == Some(true) {
        g.with_edge_weights(weights)
    } else {
        Ok(g)
    }
}

pub fn read_edge_list(path: &Path) -> Result<Graph> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_edge_list(&text, None, path)
}

/// Parses `i label` lines; every node in `0..n` needs exactly one label.
pub fn parse_labels(text: &str, n: usize, path: &Path) -> Result<Vec<usize>> {
    let mut labels = vec![None; n];
    for (line, fields) in content_lines(text) {
        if fields.len() != 2 {
            return Err(malformed(path, line, "expected 'node label'"));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| malformed(path, line, format!("bad integer '{s}'")));
        let (v, y) = (parse(fields[0])?, parse(fields[1])?);
        if v >= n {
            return Err(Error::UnknownNodeId {
                path: path.to_path_buf(),
                line,
                id: fields[0].to_string(),
            });
        }
        if labels[v].replace(y).is_some() {
            return Err(malformed(path, line, format!("node {v} labelled twice")));
        }
    }
    labels
        .iter()
        .enumerate()
        .map(|(v, y)| y.ok_or_else(|| Error::CountMismatch(format!("node {v} has no label in {}", path.display()))))
        .collect()
}

pub fn read_labels(path: &Path, n: usize) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text, n, path)
}

/// Serializes in the format accepted by [`parse_edge_list`].
pub fn write_edge_list(g: &Graph) -> String {
    let mut out = String::new();
    for (e, &(i, j)) in g.edges().iter().enumerate() {
        match g.edge_weights() {
            Some(w) => writeln!(out, "{i} {j} {:?}", w[e]).unwrap(),
            None => writeln!(out, "{i} {j}").unwrap(),
        }
    }
    out
}
