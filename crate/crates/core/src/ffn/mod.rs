//! Activations, GEGLU, and the FST forward/backward of one FFN layer.

mod activation;
mod geglu;
mod layer;

pub use activation::{gelu, gelu_grad, relu, relu_grad, Activation};
pub use geglu::{concat_rows, geglu_backward, geglu_forward, geglu_gate, GegluGrads, Traversal};
pub use layer::{
    fst_backward, fst_forward, splitmix64, FfnLayer, ForwardBundle, GradMode, LayerGrads, LayerMasks, WeightMask,
};
