//! Multi-head attention kernels over already-projected query/key/value
//! matrices (`[n × d]`, row-major, heads are contiguous column blocks).
//!
//! [`window_forward`] walks the padded axis in blocks of `w` queries. The
//! keys a block can reach form one contiguous chunk `[(b-1)w, (b+2)w)`,
//! i.e. two overlapping `2w` chunks with stride `w`, and each query keeps
//! only the keys within `w` of itself. Work and memory are `O(n·w)` per head
//! plus `O(n·g)` for `g` global rows; no `n × n` buffer is ever built.
//!
//! [`dense_forward`] is the quadratic reference: it materializes the full
//! score matrix per head.

use super::mask::{GLOBAL, PAD};
use crate::error::{Error, Result};
use crate::numerics::{dot, CustomOp, Tensor};

/// Additive score for pad targets.
pub const PAD_SCORE: f64 = -1e9;

/// Projected inputs. `global` carries the separate projections used by rows
/// coded [`GLOBAL`]; when `None`, global codes behave like local ones.
#[derive(Clone, Copy)]
pub struct Projections<'a> {
    pub q: &'a [f64],
    pub k: &'a [f64],
    pub v: &'a [f64],
    pub global: Option<[&'a [f64]; 3]>,
}

#[derive(Debug, Clone, Copy)]
pub struct Geometry {
    /// Padded sentence count.
    pub n: usize,
    pub d: usize,
    pub heads: usize,
}

impl Geometry {
    pub fn head_dim(&self) -> usize {
        self.d / self.heads
    }

    fn check(&self, kinds: &[u8], p: &Projections<'_>) -> Result<()> {
        if self.heads == 0 || !self.d.is_multiple_of(self.heads) {
            return Err(Error::arg(format!("{} heads do not divide d_model {}", self.heads, self.d)));
        }
        if kinds.len() != self.n {
            return Err(Error::dim("attention mask", &[kinds.len()], &[self.n]));
        }
        let want = self.n * self.d;
        let mut all = vec![p.q, p.k, p.v];
        if let Some(g) = p.global {
            all.extend(g);
        }
        for m in all {
            if m.len() != want {
                return Err(Error::dim("attention input", &[m.len()], &[self.n, self.d]));
            }
        }
        Ok(())
    }
}

/// Attention targets and probabilities for every `(head, query)` pair,
/// kept for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct AttentionCache {
    offsets: Vec<usize>,
    targets: Vec<u32>,
    probs: Vec<f64>,
}

impl AttentionCache {
    /// `(targets, probabilities)` of query `i` in head `h`.
    pub fn row(&self, geo: &Geometry, h: usize, i: usize) -> (&[u32], &[f64]) {
        let k = h * geo.n + i;
        let (a, b) = (self.offsets[k], self.offsets[k + 1]);
        (&self.targets[a..b], &self.probs[a..b])
    }

    pub fn stored_pairs(&self) -> usize {
        self.targets.len()
    }
}

fn is_global_row(kinds: &[u8], i: usize, p: &Projections<'_>) -> bool {
    p.global.is_some() && kinds[i] == GLOBAL
}

/// Softmax in place over `scores`.
fn softmax_in_place(scores: &mut [f64]) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        total += *s;
    }
    for s in scores.iter_mut() {
        *s /= total;
    }
}

/// Sliding-window attention with optional global rows.
///
/// Local query `i` attends to every slot `j` with `|i - j| <= window`, plus
/// every global row. Global queries attend to every slot using the global
/// projections. Pad targets get [`PAD_SCORE`] added; pad queries produce
/// zero rows.
pub fn window_forward(
    p: &Projections<'_>,
    kinds: &[u8],
    geo: Geometry,
    window: usize,
) -> Result<(Vec<f64>, AttentionCache)> {
    geo.check(kinds, p)?;
    if window == 0 || !geo.n.is_multiple_of(window) {
        return Err(Error::arg(format!(
            "padded length {} is not a multiple of window {window}",
            geo.n
        )));
    }
    let (n, d, dh) = (geo.n, geo.d, geo.head_dim());
    let scale = 1.0 / (dh as f64).sqrt();
    let globals: Vec<usize> = if p.global.is_some() {
        (0..n).filter(|&j| kinds[j] == GLOBAL).collect()
    } else {
        Vec::new()
    };

    let mut out = vec![0.0; n * d];
    let mut cache = AttentionCache {
        offsets: Vec::with_capacity(geo.heads * n + 1),
        targets: Vec::with_capacity(geo.heads * n * (2 * window + 1 + globals.len())),
        probs: Vec::new(),
    };
    cache.offsets.push(0);
    let mut scores: Vec<f64> = Vec::with_capacity(n);

    for h in 0..geo.heads {
        let cols = h * dh..(h + 1) * dh;
        let head = |r: usize| r * d + cols.start..r * d + cols.end;
        for block in 0..n / window {
            let q_lo = block * window;
            let key_lo = q_lo.saturating_sub(window);
            let key_hi = (q_lo + 2 * window).min(n);
            for i in q_lo..q_lo + window {
                let start = cache.targets.len();
                if kinds[i] != PAD {
                    let (qm, km, vm) = if is_global_row(kinds, i, p) {
                        let [qg, kg, vg] = p.global.expect("global row");
                        (qg, kg, vg)
                    } else {
                        (p.q, p.k, p.v)
                    };
                    let qi = &qm[head(i)];
                    scores.clear();
                    let push = |j: usize, cache: &mut AttentionCache, scores: &mut Vec<f64>| {
                        let mut s = dot(qi, &km[head(j)]) * scale;
                        if kinds[j] == PAD {
                            s += PAD_SCORE;
                        }
                        cache.targets.push(j as u32);
                        scores.push(s);
                    };
                    if is_global_row(kinds, i, p) {
                        for j in 0..n {
                            push(j, &mut cache, &mut scores);
                        }
                    } else {
                        let lo = key_lo.max(i.saturating_sub(window));
                        let hi = key_hi.min(i + window + 1);
                        for j in lo..hi {
                            push(j, &mut cache, &mut scores);
                        }
                        for &j in &globals {
                            if j < lo || j >= hi {
                                push(j, &mut cache, &mut scores);
                            }
                        }
                    }
                    softmax_in_place(&mut scores);
                    let oi = &mut out[i * d + cols.start..i * d + cols.end];
                    for (&j, &pj) in cache.targets[start..].iter().zip(scores.iter()) {
                        if pj == 0.0 {
                            continue;
                        }
                        let vj = &vm[head(j as usize)];
                        for (o, v) in oi.iter_mut().zip(vj) {
                            *o += pj * v;
                        }
                    }
                    cache.probs.extend_from_slice(&scores);
                }
                cache.offsets.push(cache.targets.len());
            }
        }
    }
    Ok((out, cache))
}

/// Adjoints of `q, k, v` (and the global triple when present) given the
/// output adjoint.
pub fn window_backward(
    p: &Projections<'_>,
    kinds: &[u8],
    geo: Geometry,
    cache: &AttentionCache,
    grad_out: &[f64],
) -> Vec<Vec<f64>> {
    let (n, d, dh) = (geo.n, geo.d, geo.head_dim());
    let scale = 1.0 / (dh as f64).sqrt();
    let slots = if p.global.is_some() { 6 } else { 3 };
    let mut grads = vec![vec![0.0; n * d]; slots];
    let mut dp = Vec::new();

    for h in 0..geo.heads {
        let c0 = h * dh;
        for i in 0..n {
            let (targets, probs) = cache.row(&geo, h, i);
            if targets.is_empty() {
                continue;
            }
            let global = is_global_row(kinds, i, p);
            let (qm, km, vm) = match (global, p.global) {
                (true, Some([qg, kg, vg])) => (qg, kg, vg),
                _ => (p.q, p.k, p.v),
            };
            let base = if global { 3 } else { 0 };
            let gi = &grad_out[i * d + c0..i * d + c0 + dh];

            dp.clear();
            for &j in targets {
                let j = j as usize;
                dp.push(dot(gi, &vm[j * d + c0..j * d + c0 + dh]));
            }
            let inner: f64 = probs.iter().zip(&dp).map(|(a, b)| a * b).sum();

            let qi_range = i * d + c0..i * d + c0 + dh;
            for ((&j, &pj), &dpj) in targets.iter().zip(probs).zip(&dp) {
                let j = j as usize;
                let kj_range = j * d + c0..j * d + c0 + dh;
                {
                    let dv = &mut grads[base + 2][kj_range.clone()];
                    for (a, g) in dv.iter_mut().zip(gi) {
                        *a += pj * g;
                    }
                }
                let ds = pj * (dpj - inner) * scale;
                if ds == 0.0 {
                    continue;
                }
                {
                    let dq = &mut grads[base][qi_range.clone()];
                    for (a, kv) in dq.iter_mut().zip(&km[kj_range.clone()]) {
                        *a += ds * kv;
                    }
                }
                let dk = &mut grads[base + 1][kj_range];
                for (a, qv) in dk.iter_mut().zip(&qm[qi_range.clone()]) {
                    *a += ds * qv;
                }
            }
        }
    }
    grads
}

/// Dense reference: every non-pad query attends to every slot, using the
/// global projections for rows coded [`GLOBAL`] when present. Allocates an
/// `n × n` score matrix per head.
pub fn dense_forward(p: &Projections<'_>, kinds: &[u8], geo: Geometry) -> Result<Vec<f64>> {
    geo.check(kinds, p)?;
    let (n, d, dh) = (geo.n, geo.d, geo.head_dim());
    let scale = 1.0 / (dh as f64).sqrt();
    let mut out = vec![0.0; n * d];
    for h in 0..geo.heads {
        let c0 = h * dh;
        let mut scores = vec![0.0; n * n];
        for i in 0..n {
            let (qm, km) = if is_global_row(kinds, i, p) {
                let [qg, kg, _] = p.global.expect("global row");
                (qg, kg)
            } else {
                (p.q, p.k)
            };
            let qi = &qm[i * d + c0..i * d + c0 + dh];
            for j in 0..n {
                let mut s = dot(qi, &km[j * d + c0..j * d + c0 + dh]) * scale;
                if kinds[j] == PAD {
                    s += PAD_SCORE;
                }
                scores[i * n + j] = s;
            }
        }
        for i in 0..n {
            if kinds[i] == PAD {
                continue;
            }
            let row = &mut scores[i * n..(i + 1) * n];
            softmax_in_place(row);
            let vm = if is_global_row(kinds, i, p) {
                p.global.expect("global row")[2]
            } else {
                p.v
            };
            for j in 0..n {
                let pj = row[j];
                for t in 0..dh {
                    out[i * d + c0 + t] += pj * vm[j * d + c0 + t];
                }
            }
        }
    }
    Ok(out)
}

/// Graph node wrapper around [`window_backward`].
pub(crate) struct WindowAttentionOp {
    pub kinds: Vec<u8>,
    pub geo: Geometry,
    pub cache: AttentionCache,
}

impl CustomOp for WindowAttentionOp {
    fn name(&self) -> &'static str {
        "window_attention"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad_out: &Tensor) -> Vec<Option<Tensor>> {
        let p = Projections {
            q: inputs[0].data(),
            k: inputs[1].data(),
            v: inputs[2].data(),
            global: (inputs.len() == 6).then(|| [inputs[3].data(), inputs[4].data(), inputs[5].data()]),
        };
        window_backward(&p, &self.kinds, self.geo, &self.cache, grad_out.data())
            .into_iter()
            .map(|g| Some(Tensor::new(&[self.geo.n, self.geo.d], g).expect("shape")))
            .collect()
    }
}
