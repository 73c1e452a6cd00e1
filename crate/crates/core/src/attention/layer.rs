//! Transformer layers over a padded sentence axis.
//!
//! Parameters of layer `l` live under `layers.{l}.`:
//! `attn.{q,k,v,qg,kg,vg,out}`, `ffn.{in,out}`, `ln1.{gain,bias}` and
//! `ln2.{gain,bias}`.

use rand::Rng;

use super::kernel::{dense_forward, window_forward, Geometry, Projections, WindowAttentionOp};
use super::mask::PAD;
use crate::error::{Error, Result};
use crate::numerics::{insert_linear, linear, Bound, Graph, ParamStore, Tensor, Var};

const LOCAL_PROJECTIONS: [&str; 3] = ["q", "k", "v"];
const GLOBAL_PROJECTIONS: [&str; 3] = ["qg", "kg", "vg"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerConfig {
    pub d_model: usize,
    pub d_ff: usize,
    pub heads: usize,
    pub window: usize,
}

impl LayerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return Err(Error::arg(format!(
                "{} heads do not divide d_model {}",
                self.heads, self.d_model
            )));
        }
        if self.window == 0 {
            return Err(Error::arg("attention window must be at least 1"));
        }
        Ok(())
    }
}

/// Registers the parameters of layer `layer`. Layer-norm gains start at 1
/// and biases at 0; everything else is uniform in ±0.1.
pub fn insert_layer_params<R: Rng>(store: &mut ParamStore, layer: usize, cfg: &LayerConfig, rng: &mut R) {
    let d = cfg.d_model;
    let p = format!("layers.{layer}");
    for name in LOCAL_PROJECTIONS.iter().chain(&GLOBAL_PROJECTIONS).chain(&["out"]) {
        insert_linear(store, &format!("{p}.attn.{name}"), d, d, rng);
    }
    insert_linear(store, &format!("{p}.ffn.in"), d, cfg.d_ff, rng);
    insert_linear(store, &format!("{p}.ffn.out"), cfg.d_ff, d, rng);
    for ln in ["ln1", "ln2"] {
        store.insert(format!("{p}.{ln}.gain"), Tensor::full(&[d], 1.0));
        store.insert(format!("{p}.{ln}.bias"), Tensor::zeros(&[d]));
    }
}

fn row_mask(kinds: &[u8]) -> Tensor {
    Tensor::vector(kinds.iter().map(|&k| f64::from(u8::from(k != PAD))).collect())
}

fn check_rows(rows: usize, kinds: &[u8], window: Option<usize>) -> Result<()> {
    if rows != kinds.len() {
        return Err(Error::dim("attention rows", &[rows], &[kinds.len()]));
    }
    if let Some(w) = window {
        if w == 0 || !rows.is_multiple_of(w) {
            return Err(Error::arg(format!("padded length {rows} is not a multiple of window {w}")));
        }
    }
    Ok(())
}

/// Multi-head windowed attention on the graph, followed by the output
/// projection. Pad rows of the result are zero. With `with_global` false the
/// global codes in `kinds` are treated as local.
pub fn attention(
    g: &mut Graph,
    params: &Bound,
    layer: usize,
    h: Var,
    kinds: &[u8],
    cfg: &LayerConfig,
    with_global: bool,
) -> Result<Var> {
    cfg.validate()?;
    let shape = g.shape(h).to_vec();
    if shape.len() != 2 || shape[1] != cfg.d_model {
        return Err(Error::dim("attention input", &shape, &[kinds.len(), cfg.d_model]));
    }
    check_rows(shape[0], kinds, Some(cfg.window))?;
    let p = format!("layers.{layer}.attn");
    let names: &[&str] = if with_global {
        &["q", "k", "v", "qg", "kg", "vg"]
    } else {
        &LOCAL_PROJECTIONS
    };
    let inputs = names
        .iter()
        .map(|n| params.linear(&format!("{p}.{n}"))?.forward(g, h))
        .collect::<Result<Vec<Var>>>()?;

    let geo = Geometry {
        n: shape[0],
        d: cfg.d_model,
        heads: cfg.heads,
    };
    let (out, cache) = {
        let data: Vec<&[f64]> = inputs.iter().map(|&v| g.value(v).data()).collect();
        let proj = Projections {
            q: data[0],
            k: data[1],
            v: data[2],
            global: with_global.then(|| [data[3], data[4], data[5]]),
        };
        window_forward(&proj, kinds, geo, cfg.window)?
    };
    let op = WindowAttentionOp {
        kinds: kinds.to_vec(),
        geo,
        cache,
    };
    let heads = g.custom(&inputs, Tensor::new(&[geo.n, geo.d], out)?, Box::new(op));
    let projected = params.linear(&format!("{p}.out"))?.forward(g, heads)?;
    let mask = g.constant(row_mask(kinds));
    g.scale_rows(projected, mask)
}

/// `h~ = h + LN1(attention(h))`, then `h' = h~ + LN2(FFN(h~))` with a
/// Linear → ReLU → Linear feed-forward block.
pub fn transformer_layer(
    g: &mut Graph,
    params: &Bound,
    layer: usize,
    h: Var,
    kinds: &[u8],
    cfg: &LayerConfig,
) -> Result<Var> {
    let p = format!("layers.{layer}");
    let attn = attention(g, params, layer, h, kinds, cfg, true)?;
    let normed = g.layer_norm(attn, params.get(&format!("{p}.ln1.gain"))?, params.get(&format!("{p}.ln1.bias"))?)?;
    let mid = g.add(h, normed)?;
    let inner = params.linear(&format!("{p}.ffn.in"))?.forward(g, mid)?;
    let inner = g.relu(inner);
    let ff = params.linear(&format!("{p}.ffn.out"))?.forward(g, inner)?;
    let normed = g.layer_norm(ff, params.get(&format!("{p}.ln2.gain"))?, params.get(&format!("{p}.ln2.bias"))?)?;
    g.add(mid, normed)
}

/// Applies layers `0..layers` in order.
pub fn transformer_stack(
    g: &mut Graph,
    params: &Bound,
    layers: usize,
    h: Var,
    kinds: &[u8],
    cfg: &LayerConfig,
) -> Result<Var> {
    (0..layers).try_fold(h, |h, l| transformer_layer(g, params, l, h, kinds, cfg))
}

fn plain_attention(h: &Tensor, kinds: &[u8], params: &ParamStore, layer: usize, cfg: &LayerConfig, with_global: bool) -> Result<Tensor> {
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let x = g.constant(h.clone());
    let y = attention(&mut g, &bound, layer, x, kinds, cfg, with_global)?;
    Ok(g.value(y).clone())
}

/// Local-only windowed attention of layer `layer` on plain tensors.
pub fn sliding_window_attention(
    h: &Tensor,
    kinds: &[u8],
    params: &ParamStore,
    layer: usize,
    cfg: &LayerConfig,
) -> Result<Tensor> {
    plain_attention(h, kinds, params, layer, cfg, false)
}

/// Windowed attention where rows coded global attend to every slot through
/// their own projections and are visible to every row.
pub fn global_attention(h: &Tensor, kinds: &[u8], params: &ParamStore, layer: usize, cfg: &LayerConfig) -> Result<Tensor> {
    plain_attention(h, kinds, params, layer, cfg, true)
}

fn param<'a>(params: &'a ParamStore, name: &str) -> Result<&'a Tensor> {
    params
        .get(name)
        .ok_or_else(|| Error::arg(format!("unknown parameter `{name}`")))
}

fn plain_linear(x: &Tensor, params: &ParamStore, prefix: &str) -> Result<Tensor> {
    linear(
        x,
        param(params, &format!("{prefix}.weight"))?,
        param(params, &format!("{prefix}.bias"))?,
    )
}

/// Dense attention with the same masking rules, materializing every
/// `n × n` score matrix. Global projections are used for global rows.
pub fn full_attention_reference(h: &Tensor, kinds: &[u8], params: &ParamStore, layer: usize, heads: usize) -> Result<Tensor> {
    check_rows(h.rows(), kinds, None)?;
    let p = format!("layers.{layer}.attn");
    let proj = |name: &str| plain_linear(h, params, &format!("{p}.{name}"));
    let (q, k, v) = (proj("q")?, proj("k")?, proj("v")?);
    let (qg, kg, vg) = (proj("qg")?, proj("kg")?, proj("vg")?);
    let geo = Geometry {
        n: h.rows(),
        d: h.cols(),
        heads,
    };
    let out = dense_forward(
        &Projections {
            q: q.data(),
            k: k.data(),
            v: v.data(),
            global: Some([qg.data(), kg.data(), vg.data()]),
        },
        kinds,
        geo,
    )?;
    let mut y = plain_linear(&Tensor::new(&[geo.n, geo.d], out)?, params, &format!("{p}.out"))?;
    for (i, &kind) in kinds.iter().enumerate() {
        if kind == PAD {
            y.row_mut(i).fill(0.0);
        }
    }
    Ok(y)
}
