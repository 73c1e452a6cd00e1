use indexmap::IndexMap;
use rand::Rng;

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Named learned tensors in a fixed insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: IndexMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.params.insert(name.into(), value);
    }

    /// Inserts a tensor drawn from `uniform(-0.1, 0.1)`.
    pub fn insert_uniform<R: Rng>(&mut self, name: impl Into<String>, shape: &[usize], rng: &mut R) {
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-0.1..0.1)).collect();
        self.insert(name, Tensor::new(shape, data).expect("shape product"));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.params.values_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    /// Zero-valued tensors matching every parameter, in order.
    pub fn zeros_like(&self) -> Vec<Tensor> {
        self.params.values().map(|t| Tensor::zeros(t.shape())).collect()
    }

    /// Places every parameter on `graph` as a differentiable leaf.
    pub fn bind(&self, graph: &mut Graph) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|(k, v)| (k.clone(), graph.leaf(v.clone())))
            .collect();
        Bound { vars }
    }
}

/// Graph handles for a [`ParamStore`], addressed by parameter name.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: IndexMap<String, Var>,
}

impl Bound {
    pub fn from_vars<'a>(names: impl IntoIterator<Item = &'a str>, vars: &[Var]) -> Self {
        Self {
            vars: names
                .into_iter()
                .zip(vars)
                .map(|(n, v)| (n.to_string(), *v))
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::arg(format!("unknown parameter `{name}`")))
    }

    /// The `{prefix}.weight` / `{prefix}.bias` pair.
    pub fn linear(&self, prefix: &str) -> Result<Linear> {
        Ok(Linear {
            weight: self.get(&format!("{prefix}.weight"))?,
            bias: self.get(&format!("{prefix}.bias"))?,
        })
    }

    /// Points `name` at another graph node, e.g. a probe leaf in a
    /// gradient check.
    pub fn replace(&mut self, name: &str, var: Var) {
        if let Some(slot) = self.vars.get_mut(name) {
            *slot = var;
        }
    }

    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.vars.values().copied()
    }

    /// Accumulated gradients for every bound parameter, zero where a
    /// parameter was not reached.
    pub fn grads(&self, graph: &Graph) -> Vec<Tensor> {
        self.vars
            .values()
            .map(|&v| {
                graph
                    .grad(v)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(graph.shape(v)))
            })
            .collect()
    }
}

/// Affine layer `y = x·Wᵀ + b`, `W: [out × in]`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub weight: Var,
    pub bias: Var,
}

impl Linear {
    pub fn forward(&self, graph: &mut Graph, x: Var) -> Result<Var> {
        graph.linear(x, self.weight, self.bias)
    }
}

/// Registers `{prefix}.weight: [out × in]` and `{prefix}.bias: [out]`.
pub fn insert_linear<R: Rng>(
    store: &mut ParamStore,
    prefix: &str,
    d_in: usize,
    d_out: usize,
    rng: &mut R,
) {
    store.insert_uniform(format!("{prefix}.weight"), &[d_out, d_in], rng);
    store.insert_uniform(format!("{prefix}.bias"), &[d_out], rng);
}
