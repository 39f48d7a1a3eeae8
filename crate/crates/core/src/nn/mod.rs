//! Feed-forward layers, activations, convolutions, pooling and models.

pub mod activation;
pub mod checkpoint;
pub mod conv;
pub mod layer;
pub mod model;

pub use activation::{activate, spike_function, Activation};
pub use conv::{Conv1dSpec, Conv2dSpec, ConvLayout, IndexFn, PoolLayout, PoolSpec};
pub use layer::{affine_forward, AffineLayer, Conv1dLayer, Conv2dLayer, Layer, ParamRole, ParamSpec};
pub use model::{model_forward, Model, ModelLayer, Parameterized};
