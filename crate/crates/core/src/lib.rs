//! Geometric deep learning from first principles.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`] and [`autodiff`]: dense `f64` tensors and a define-by-run
//!   reverse-mode tape.
//! - [`nn`]: affine layers, activations, general 1-D/2-D convolutions given by
//!   index functions, pooling, and MLP/CNN models with a flat weight view.
//! - [`losses`]: softmax, cross-entropy, Shannon entropy, KL divergence and
//!   regression losses.
//! - [`graph`]: undirected graphs, adjacency/degree/incidence matrices, the
//!   Laplacians and the discrete heat step.
//! - [`gnn`]: message passing (generic, Kipf–Welling, GraphSAGE) and graph
//!   attention layers assembled into encoder/decoder node classifiers.
//! - [`training`]: initialization, minibatch SGD, epoch accounting and
//!   semi-supervised node classification.
//! - [`fisher`]: Fisher information matrix diagnostics.
//! - [`datasets`]: MNIST, CIFAR-10, Zachary's karate club and Cora.
//! - [`cli`]: the `gdl` command-line front end.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod cli;
pub mod datasets;
pub mod error;
pub mod fisher;
pub mod gnn;
pub mod graph;
pub mod losses;
pub mod nn;
pub mod sparse;
pub mod tensor;
pub mod training;

pub use autodiff::{Tape, Var};
pub use error::{Error, Result};
pub use tensor::Tensor;
