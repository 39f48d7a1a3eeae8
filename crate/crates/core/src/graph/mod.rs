//! Undirected graphs and their matrix views.
//!
//! Nodes are `0..n` in load order. Neighbour lists are kept sorted; dense
//! matrices are built on demand, and the sparse propagation operators used by
//! message passing come from [`Graph::mean_operator`] and friends.

mod io;
mod spectrum;

pub use io::{parse_edge_list, parse_labels, read_edge_list, read_labels, write_edge_list};
pub use spectrum::{laplacian_spectrum, symmetric_eigenvalues, zero_eigenvalue_multiplicity};

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::sparse::Csr;
use crate::tensor::Tensor;

/// An undirected simple graph on nodes `0..n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
    edge_index: HashMap<(usize, usize), usize>,
    edge_weights: Option<Vec<f64>>,
    node_weights: Option<Vec<f64>>,
}

fn key(i: usize, j: usize) -> (usize, usize) {
    (i.min(j), i.max(j))
}

impl Graph {
    /// Edges are stored as `(min, max)` in the given order. Self loops,
    /// repeated edges and out-of-range endpoints are rejected.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut neighbors = vec![Vec::new(); n];
        let mut edge_index = HashMap::with_capacity(edges.len());
        let mut stored = Vec::with_capacity(edges.len());
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidGraph(format!("edge ({i}, {j}) outside 0..{n}")));
            }
            if i == j {
                return Err(Error::InvalidGraph(format!("self loop at node {i}")));
            }
            let k = key(i, j);
            if edge_index.insert(k, stored.len()).is_some() {
                return Err(Error::InvalidGraph(format!("duplicate edge {{{i}, {j}}}")));
            }
            stored.push(k);
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Graph {
            n,
            edges: stored,
            neighbors,
            edge_index,
            edge_weights: None,
            node_weights: None,
        })
    }

    /// Complete graph `K_n`.
    pub fn complete(n: usize) -> Self {
        let edges: Vec<_> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        Graph::new(n, &edges).unwrap()
    }

    /// Path `0 − 1 − ⋯ − (n−1)`.
    pub fn path(n: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Graph::new(n, &edges).unwrap()
    }

    /// Erdős–Rényi sample with edge probability `p`.
    pub fn random<R: Rng>(n: usize, p: f64, rng: &mut R) -> Self {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random::<f64>() < p {
                    edges.push((i, j));
                }
            }
        }
        Graph::new(n, &edges).unwrap()
    }

    /// Attaches one nonzero weight per edge, in edge order.
    pub fn with_edge_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.edges.len() {
            return Err(Error::shape("edge weights", &[self.edges.len()], &[weights.len()]));
        }
        if let Some(e) = weights.iter().position(|w| *w == 0.0 || !w.is_finite()) {
            let (i, j) = self.edges[e];
            return Err(Error::WeightPatternMismatch(i, j));
        }
        self.edge_weights = Some(weights);
        Ok(self)
    }

    pub fn with_node_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.n {
            return Err(Error::shape("node weights", &[self.n], &[weights.len()]));
        }
        self.node_weights = Some(weights);
        Ok(self)
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Edges as `(i, j)` with `i < j`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.neighbors[v].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edge_index.contains_key(&key(i, j))
    }

    pub fn edge_id(&self, i: usize, j: usize) -> Option<usize> {
        self.edge_index.get(&key(i, j)).copied()
    }

    pub fn edge_weights(&self) -> Option<&[f64]> {
        self.edge_weights.as_deref()
    }

    pub fn node_weights(&self) -> Option<&[f64]> {
        self.node_weights.as_deref()
    }

    /// First isolated node, if any.
    pub fn isolated_node(&self) -> Option<usize> {
        self.neighbors.iter().position(Vec::is_empty)
    }

    pub fn require_no_isolated(&self) -> Result<()> {
        match self.isolated_node() {
            Some(v) => Err(Error::IsolatedNode(v)),
            None => Ok(()),
        }
    }

    /// `A_ij = 1` iff `{i, j}` is an edge.
    pub fn adjacency(&self) -> Tensor {
        let mut a = Tensor::zeros(&[self.n, self.n]);
        for &(i, j) in &self.edges {
            a.set(i, j, 1.0);
            a.set(j, i, 1.0);
        }
        a
    }

    /// `W_ij = w_e` on edges (1 when no weights are attached).
    pub fn weighted_adjacency(&self) -> Tensor {
        let mut a = Tensor::zeros(&[self.n, self.n]);
        for (e, &(i, j)) in self.edges.iter().enumerate() {
            let w = self.edge_weights.as_ref().map_or(1.0, |ws| ws[e]);
            a.set(i, j, w);
            a.set(j, i, w);
        }
        a
    }

    pub fn degree_matrix(&self) -> Tensor {
        Tensor::diag(&self.degrees().iter().map(|&d| d as f64).collect::<Vec<_>>())
    }

    /// `L = D − A`.
    pub fn laplacian(&self) -> Tensor {
        let mut l = self.adjacency().scale(-1.0);
        for v in 0..self.n {
            l.set(v, v, self.degree(v) as f64);
        }
        l
    }

    /// `L_g = W_v (D − W_a)`, where `W_a` must be nonzero exactly on the edges.
    pub fn generalized_laplacian(&self, wv: &Tensor, wa: &Tensor) -> Result<Tensor> {
        let n = self.n;
        if wv.shape() != [n, n] || wa.shape() != [n, n] {
            return Err(Error::shape("generalized_laplacian", &[n, n], if wv.shape() != [n, n] { wv.shape() } else { wa.shape() }));
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && wv.at(i, j) != 0.0 {
                    return Err(Error::DomainError {
                        op: "generalized_laplacian",
                        msg: "W_v must be diagonal".into(),
                    });
                }
                let on_edge = i != j && self.has_edge(i, j);
                if (wa.at(i, j) != 0.0) != on_edge {
                    return Err(Error::WeightPatternMismatch(i, j));
                }
            }
        }
        let inner = self.degree_matrix().sub(wa)?;
        let mut out = inner;
        for i in 0..n {
            let s = wv.at(i, i);
            for v in out.row_mut(i) {
                *v *= s;
            }
        }
        Ok(out)
    }

    /// `L_d = I − D⁻¹A`.
    pub fn diffusive_laplacian(&self) -> Result<Tensor> {
        self.require_no_isolated()?;
        let inv = Tensor::diag(&self.degrees().iter().map(|&d| 1.0 / d as f64).collect::<Vec<_>>());
        self.generalized_laplacian(&inv, &self.adjacency())
    }

    /// One heat step: each row of `h` becomes the mean of its neighbours' rows.
    pub fn heat_step(&self, h: &Tensor) -> Result<Tensor> {
        let (rows, c) = h.dims2()?;
        if rows != self.n {
            return Err(Error::shape("heat_step", &[self.n, c], h.shape()));
        }
        self.require_no_isolated()?;
        let mut out = Tensor::zeros(&[self.n, c]);
        for v in 0..self.n {
            let inv = 1.0 / self.degree(v) as f64;
            let dst = out.row_mut(v);
            for &u in &self.neighbors[v] {
                for (o, x) in dst.iter_mut().zip(h.row(u)) {
                    *o += x;
                }
            }
            for o in dst.iter_mut() {
                *o *= inv;
            }
        }
        Ok(out)
    }

    /// Sparse `A`.
    pub fn sum_operator(&self) -> Csr {
        let trip: Vec<_> = (0..self.n)
            .flat_map(|v| self.neighbors[v].iter().map(move |&u| (v, u, 1.0)))
            .collect();
        Csr::from_triplets(self.n, self.n, &trip).unwrap()
    }

    /// Sparse `D⁻¹A`.
    pub fn mean_operator(&self) -> Result<Csr> {
        self.require_no_isolated()?;
        let trip: Vec<_> = (0..self.n)
            .flat_map(|v| {
                let w = 1.0 / self.degree(v) as f64;
                self.neighbors[v].iter().map(move |&u| (v, u, w))
            })
            .collect();
        Csr::from_triplets(self.n, self.n, &trip)
    }

    /// Sparse `D̂⁻¹Â` with `Â = A + I` and degrees taken from `Â`.
    pub fn kipf_welling_operator(&self) -> Csr {
        let trip: Vec<_> = (0..self.n)
            .flat_map(|v| {
                let w = 1.0 / (self.degree(v) + 1) as f64;
                std::iter::once((v, v, w)).chain(self.neighbors[v].iter().map(move |&u| (v, u, w)))
            })
            .collect();
        Csr::from_triplets(self.n, self.n, &trip).unwrap()
    }

    /// Component label per node (numbered in order of first node) and the count.
    pub fn connected_components(&self) -> (usize, Vec<usize>) {
        let mut parent: Vec<usize> = (0..self.n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for &(i, j) in &self.edges {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        let mut ids = HashMap::new();
        let labels: Vec<usize> = (0..self.n)
            .map(|v| {
                let r = find(&mut parent, v);
                let next = ids.len();
                *ids.entry(r).or_insert(next)
            })
            .collect();
        (ids.len(), labels)
    }

    /// The graph with node `v` renamed `perm[v]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Graph> {
        check_permutation(perm, self.n)?;
        let edges: Vec<_> = self.edges.iter().map(|&(i, j)| (perm[i], perm[j])).collect();
        let mut g = Graph::new(self.n, &edges)?;
        g.edge_weights = self.edge_weights.clone();
        if let Some(w) = &self.node_weights {
            let mut nw = vec![0.0; self.n];
            for (v, &x) in w.iter().enumerate() {
                nw[perm[v]] = x;
            }
            g.node_weights = Some(nw);
        }
        Ok(g)
    }

    /// Histogram `degree → count`, sorted by degree.
    pub fn degree_histogram(&self) -> Vec<(usize, usize)> {
        let mut h = std::collections::BTreeMap::new();
        for d in self.degrees() {
            *h.entry(d).or_insert(0) += 1;
        }
        h.into_iter().collect()
    }
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
        return Err(Error::InvalidGraph("not a permutation".into()));
    }
    Ok(())
}

/// Rows of `h` moved so that row `v` lands at `perm[v]`.
pub fn permute_rows(h: &Tensor, perm: &[usize]) -> Result<Tensor> {
    let (n, _) = h.dims2()?;
    check_permutation(perm, n)?;
    let mut inv = vec![0; n];
    for (v, &p) in perm.iter().enumerate() {
        inv[p] = v;
    }
    h.gather_rows(&inv)
}

/// A direction `(tail, head)` for every edge.
#[derive(Clone, Debug, PartialEq)]
pub struct Orientation {
    pub directions: Vec<(usize, usize)>,
}

impl Orientation {
    /// Each edge `{i, j}` with `i < j` directed `i → j`.
    pub fn canonical(g: &Graph) -> Self {
        Orientation {
            directions: g.edges.clone(),
        }
    }

    /// Independent fair coin per edge, listed in shuffled order.
    pub fn random<R: Rng>(g: &Graph, rng: &mut R) -> Self {
        let mut directions: Vec<_> = g
            .edges
            .iter()
            .map(|&(i, j)| if rng.random::<bool>() { (i, j) } else { (j, i) })
            .collect();
        directions.shuffle(rng);
        Orientation { directions }
    }
}

/// `X` with one row per edge (in graph edge order): `−1` at the tail, `+1` at
/// the head, so `(Xf)_e = f(head) − f(tail)`. Edgeless graphs have no
/// incidence matrix.
pub fn incidence(g: &Graph, o: &Orientation) -> Result<Tensor> {
    if g.n_edges() == 0 {
        return Err(Error::InvalidGraph("an edgeless graph has an empty incidence matrix".into()));
    }
    let mut dir: Vec<Option<(usize, usize)>> = vec![None; g.n_edges()];
    for &(t, h) in &o.directions {
        let e = g.edge_id(t, h).ok_or_else(|| Error::InvalidGraph(format!("({t}, {h}) is not an edge")))?;
        if dir[e].replace((t, h)).is_some() {
            return Err(Error::InvalidGraph(format!("edge {{{t}, {h}}} oriented twice")));
        }
    }
    let mut x = Tensor::zeros(&[g.n_edges(), g.n_nodes()]);
    for (e, d) in dir.iter().enumerate() {
        let (t, h) = d.ok_or_else(|| {
            let (i, j) = g.edges[e];
            Error::IncompleteOrientation(i, j)
        })?;
        x.set(e, t, -1.0);
        x.set(e, h, 1.0);
    }
    Ok(x)
}

/// `XᵀX` for the incidence matrix of an orientation (zero without edges).
pub fn laplacian_from_incidence(g: &Graph, o: &Orientation) -> Result<Tensor> {
    if g.n_edges() == 0 && o.directions.is_empty() {
        return Ok(Tensor::zeros(&[g.n_nodes(), g.n_nodes()]));
    }
    let x = incidence(g, o)?;
    x.t_matmul(&x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four_node_graph() -> Graph {
        Graph::new(4, &[(0, 1), (0, 2), (1, 2), (2, 3)]).unwrap()
    }

    #[test]
    fn adjacency_and_degree() {
        let g = four_node_graph();
        let a = g.adjacency();
        let rows = [[0.0, 1.0, 1.0, 0.0], [1.0, 0.0, 1.0, 0.0], [1.0, 1.0, 0.0, 1.0], [0.0, 0.0, 1.0, 0.0]];
        assert_eq!(a, Tensor::from_rows(&rows).unwrap());
        assert_eq!(g.degree_matrix(), Tensor::diag(&[2.0, 2.0, 3.0, 1.0]));
        assert_eq!(Graph::new(3, &[]).unwrap().adjacency(), Tensor::zeros(&[3, 3]));
        assert_eq!(Graph::complete(3).degree_matrix(), Tensor::diag(&[2.0; 3]));
    }

    #[test]
    fn incidence_example() {
        let g = four_node_graph();
        let printed = Orientation {
            directions: vec![(0, 1), (0, 2), (2, 1), (3, 2)],
        };
        let x = incidence(&g, &printed).unwrap();
        let rows = [[-1.0, 1.0, 0.0, 0.0], [-1.0, 0.0, 1.0, 0.0], [0.0, 1.0, -1.0, 0.0], [0.0, 0.0, 1.0, -1.0]];
        assert_eq!(x, Tensor::from_rows(&rows).unwrap());
        let f = Tensor::matrix(4, 1, vec![1.0, 10.0, 100.0, 1000.0]).unwrap();
        assert_eq!(x.matmul(&f).unwrap().data(), &[9.0, 99.0, -90.0, -900.0]);
        let constant = Tensor::matrix(4, 1, vec![7.0; 4]).unwrap();
        assert_eq!(x.matmul(&constant).unwrap().max_abs(), 0.0);
        let partial = Orientation {
            directions: vec![(0, 1), (0, 2), (1, 2)],
        };
        assert!(matches!(incidence(&g, &partial), Err(Error::IncompleteOrientation(2, 3))));
    }

    #[test]
    fn path_laplacian() {
        let g = Graph::path(3);
        let expected = Tensor::from_rows(&[[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]]).unwrap();
        assert_eq!(g.laplacian(), expected);
        assert_eq!(laplacian_from_incidence(&g, &Orientation::canonical(&g)).unwrap(), expected);
    }

    #[test]
    fn generalized_and_diffusive() {
        let g = four_node_graph();
        let a = g.adjacency();
        assert_eq!(g.generalized_laplacian(&Tensor::identity(4), &a).unwrap(), g.laplacian());
        let two = g.generalized_laplacian(&Tensor::diag(&[2.0; 4]), &a).unwrap();
        assert_eq!(two, g.laplacian().scale(2.0));
        let mut bad = a.clone();
        bad.set(0, 3, 1.0);
        assert!(matches!(g.generalized_laplacian(&Tensor::identity(4), &bad), Err(Error::WeightPatternMismatch(0, 3))));
        let ld = g.diffusive_laplacian().unwrap();
        assert_eq!(ld.at(2, 2), 1.0);
        assert!((ld.at(2, 3) + 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn heat_step_examples() {
        let g = Graph::complete(3);
        let h = Tensor::matrix(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(g.heat_step(&h).unwrap().data(), &[2.5, 2.0, 1.5]);
        let iso = Graph::new(3, &[(0, 1)]).unwrap();
        assert!(matches!(iso.heat_step(&h), Err(Error::IsolatedNode(2))));
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(Graph::new(3, &[(1, 1)]).is_err());
        assert!(Graph::new(3, &[(0, 1), (1, 0)]).is_err());
        assert!(Graph::new(3, &[(0, 3)]).is_err());
    }

    #[test]
    fn components() {
        let g = Graph::new(5, &[(0, 1), (3, 4)]).unwrap();
        assert_eq!(g.connected_components(), (3, vec![0, 0, 1, 2, 2]));
    }

    #[test]
    fn kipf_welling_rows_sum_to_one() {
        let g = four_node_graph();
        let k = g.kipf_welling_operator().to_dense();
        for i in 0..4 {
            assert!((k.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
