//! Windowed + global attention against a direct per-row implementation
//! written from the masking rules alone.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sectsum_core::attention::{global_attention, insert_layer_params, LayerConfig, GLOBAL, LOCAL, PAD};
use sectsum_core::numerics::{ParamStore, Tensor};

/// `x · Wᵀ + b` for one row, with `W` stored `[out × in]`.
fn project(store: &ParamStore, name: &str, x: &[f64]) -> Vec<f64> {
    let w = store.get(&format!("layers.0.attn.{name}.weight")).unwrap();
    let b = store.get(&format!("layers.0.attn.{name}.bias")).unwrap();
    (0..w.rows())
        .map(|o| b.data()[o] + w.row(o).iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
        .collect()
}

fn naive(h: &Tensor, kinds: &[u8], store: &ParamStore, heads: usize, window: usize) -> Vec<Vec<f64>> {
    let n = kinds.len();
    let d = h.cols();
    let dh = d / heads;
    let rows: Vec<&[f64]> = (0..n).map(|i| h.row(i)).collect();
    let all = |name: &str| -> Vec<Vec<f64>> { rows.iter().map(|r| project(store, name, r)).collect() };
    let (q, k, v) = (all("q"), all("k"), all("v"));
    let (qg, kg, vg) = (all("qg"), all("kg"), all("vg"));
    (0..n)
        .map(|i| {
            if kinds[i] == PAD {
                return vec![0.0; d];
            }
            let global = kinds[i] == GLOBAL;
            let targets: Vec<usize> = (0..n)
                .filter(|&j| kinds[j] != PAD)
                .filter(|&j| global || kinds[j] == GLOBAL || i.abs_diff(j) <= window)
                .collect();
            let (qs, ks, vs) = if global { (&qg, &kg, &vg) } else { (&q, &k, &v) };
            let mut concat = vec![0.0; d];
            for hd in 0..heads {
                let cols = hd * dh..(hd + 1) * dh;
                let scores: Vec<f64> = targets
                    .iter()
                    .map(|&j| {
                        cols.clone().map(|c| qs[i][c] * ks[j][c]).sum::<f64>() / (dh as f64).sqrt()
                    })
                    .collect();
                let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
                let z: f64 = e.iter().sum();
                for (&j, w) in targets.iter().zip(&e) {
                    for c in cols.clone() {
                        concat[c] += w / z * vs[j][c];
                    }
                }
            }
            project(store, "out", &concat)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn matches_direct_attention(
        seed in any::<u64>(),
        window in 1usize..=4,
        blocks in 1usize..=5,
        heads in prop::sample::select(vec![1usize, 2, 4]),
        per_head in 1usize..=4,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = window * blocks;
        let real = rng.gen_range(1..=n);
        let kinds: Vec<u8> = (0..n)
            .map(|i| if i >= real { PAD } else if rng.gen_bool(0.25) { GLOBAL } else { LOCAL })
            .collect();
        let d = heads * per_head;
        let cfg = LayerConfig { d_model: d, d_ff: d, heads, window };
        let mut store = ParamStore::new();
        insert_layer_params(&mut store, 0, &cfg, &mut rng);
        let h = Tensor::new(&[n, d], (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();

        let got = global_attention(&h, &kinds, &store, 0, &cfg).unwrap();
        let want = naive(&h, &kinds, &store, heads, window);
        for (i, row) in want.iter().enumerate() {
            for (c, w) in row.iter().enumerate() {
                prop_assert!((got.get(i, c) - w).abs() < 1e-10, "row {} col {}", i, c);
            }
        }
    }
}
