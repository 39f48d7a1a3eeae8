//! Matrix views of a small graph: adjacency, degree, incidence under a
//! random orientation, the Laplacian `L = D − A = XᵀX` and its spectrum.
//!
//! Usage: `cargo run --example laplacian [seed]`

use gdl::graph::{incidence, laplacian_from_incidence, laplacian_spectrum, Graph, Orientation};
use gdl::training::rng_from_seed;
use gdl::Tensor;

fn show(name: &str, m: &Tensor) {
    println!("{name}:");
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{:>3}", v + 0.0)).collect();
        println!("  [{}]", row.join(" "));
    }
}

fn main() -> gdl::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let g = Graph::new(4, &[(0, 1), (0, 2), (1, 2), (2, 3)])?;
    show("A", &g.adjacency());
    show("D", &g.degree_matrix());
    let o = Orientation::random(&g, &mut rng_from_seed(seed));
    println!("orientation {:?}", o.directions);
    show("X", &incidence(&g, &o)?);
    let l = g.laplacian();
    show("L = D - A", &l);
    println!("X^T X == L: {}", laplacian_from_incidence(&g, &o)? == l);
    let ev: Vec<String> = laplacian_spectrum(&g).iter().map(|v| format!("{v:.4}")).collect();
    println!("eigenvalues of L: {}", ev.join(" "));
    Ok(())
}
