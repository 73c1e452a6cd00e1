//! Dense tensors, reverse-mode differentiation and the layer primitives the
//! rest of the crate is built from.
//!
//! The free functions here ([`linear`], [`softmax`], ...) evaluate a single
//! primitive on plain tensors. Model code uses the corresponding
//! [`Graph`] methods so that gradients are recorded.

pub mod checkpoint;
mod gradcheck;
mod graph;
mod params;
mod tensor;

pub use gradcheck::{grad_check, grad_check_many, DEFAULT_STEP};
pub use graph::{sigmoid, Activation, CustomOp, Graph, Var, LAYER_NORM_EPS};
pub use params::{insert_linear, Bound, Linear, ParamStore};
pub use tensor::Tensor;

pub(crate) use tensor::dot;

use crate::error::Result;

pub fn linear(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let (x, w, b) = (g.constant(x.clone()), g.constant(weight.clone()), g.constant(bias.clone()));
    let y = g.linear(x, w, b)?;
    Ok(g.value(y).clone())
}

pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    let mut g = Graph::new();
    let x = g.constant(x.clone());
    let y = g.softmax(x, axis)?;
    Ok(g.value(y).clone())
}

pub fn activation(x: &Tensor, kind: Activation) -> Tensor {
    let mut g = Graph::new();
    let x = g.constant(x.clone());
    let y = g.activation(x, kind);
    g.value(y).clone()
}

pub fn layer_norm(x: &Tensor, gain: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let (x, gn, b) = (g.constant(x.clone()), g.constant(gain.clone()), g.constant(bias.clone()));
    let y = g.layer_norm(x, gn, b)?;
    Ok(g.value(y).clone())
}

/// Row `index` of `table`; out-of-range indices clamp to the last row.
pub fn embedding_lookup(table: &Tensor, index: usize) -> Tensor {
    let mut g = Graph::new();
    let t = g.constant(table.clone());
    let y = g.gather_rows(t, &[index]);
    Tensor::vector(g.value(y).data().to_vec())
}
