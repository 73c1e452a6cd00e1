use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const PAD: u8 = 0;
pub const LOCAL: u8 = 1;
pub const GLOBAL: u8 = 2;

/// Per-document slot codes over a padded sentence axis: 0 pad, 1 local,
/// 2 local + global.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionMask {
    values: Vec<u8>,
    doc_lengths: Vec<usize>,
    window: usize,
    padded_len: usize,
}

impl AttentionMask {
    pub fn row(&self, doc: usize) -> &[u8] {
        &self.values[doc * self.padded_len..(doc + 1) * self.padded_len]
    }

    pub fn batch(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn doc_lengths(&self) -> &[usize] {
        &self.doc_lengths
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn padded_len(&self) -> usize {
        self.padded_len
    }
}

/// Smallest multiple of `window` that holds `len` slots.
pub fn padded_length(len: usize, window: usize) -> usize {
    len.div_ceil(window) * window
}

pub fn build_attention_mask(
    doc_lengths: &[usize],
    window: usize,
    global_positions: &[Vec<usize>],
    max_sentences: usize,
) -> Result<AttentionMask> {
    if window == 0 {
        return Err(Error::arg("attention window must be at least 1"));
    }
    if global_positions.len() != doc_lengths.len() {
        return Err(Error::arg(format!(
            "{} documents but {} global position lists",
            doc_lengths.len(),
            global_positions.len()
        )));
    }
    if let Some(&long) = doc_lengths.iter().find(|&&l| l > max_sentences) {
        return Err(Error::arg(format!(
            "document of {long} sentences exceeds max_sentences {max_sentences}"
        )));
    }
    let longest = doc_lengths.iter().copied().max().unwrap_or(0).min(max_sentences);
    let padded_len = padded_length(longest, window);

    let mut values = vec![PAD; doc_lengths.len() * padded_len];
    for (b, (&len, globals)) in doc_lengths.iter().zip(global_positions).enumerate() {
        let row = &mut values[b * padded_len..(b + 1) * padded_len];
        row[..len].fill(LOCAL);
        for &g in globals {
            if g >= len {
                return Err(Error::arg(format!(
                    "global position {g} out of range for document {b} of length {len}"
                )));
            }
            row[g] = GLOBAL;
        }
    }
    Ok(AttentionMask {
        values,
        doc_lengths: doc_lengths.to_vec(),
        window,
        padded_len,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlobalPolicy {
    /// Centers of `k` equal strides.
    Stride,
    /// Seeded sample without replacement.
    Random,
}

impl std::str::FromStr for GlobalPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stride" => Ok(Self::Stride),
            "random" => Ok(Self::Random),
            other => Err(Error::arg(format!("unknown global policy `{other}`"))),
        }
    }
}

impl std::fmt::Display for GlobalPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Stride => "stride",
            Self::Random => "random",
        })
    }
}

/// `round(n · ratio / 100)` sorted positions that attend globally.
pub fn select_global(n: usize, ratio_percent: f64, policy: GlobalPolicy, seed: u64) -> Result<Vec<usize>> {
    if !(0.0..=100.0).contains(&ratio_percent) {
        return Err(Error::arg(format!("global ratio {ratio_percent} outside [0, 100]")));
    }
    let k = ((n as f64 * ratio_percent / 100.0).round() as usize).min(n);
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut out: Vec<usize> = match policy {
        GlobalPolicy::Stride => {
            let stride = n as f64 / k as f64;
            (0..k).map(|j| ((j as f64 + 0.5) * stride).floor() as usize).collect()
        }
        GlobalPolicy::Random => sample(&mut ChaCha8Rng::seed_from_u64(seed), n, k).into_vec(),
    };
    out.sort_unstable();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_document_batch() {
        // first document attends globally at its 4th sentence
        let m = build_attention_mask(&[6, 2, 6], 4, &[vec![3], vec![], vec![]], 500).unwrap();
        assert_eq!(m.padded_len(), 8);
        assert_eq!(m.row(0), &[1, 1, 1, 2, 1, 1, 0, 0]);
        assert_eq!(m.row(1), &[1, 1, 0, 0, 0, 0, 0, 0]);
        assert_eq!(m.row(2), &[1, 1, 1, 1, 1, 1, 0, 0]);
    }

    #[test]
    fn padded_to_window_multiple() {
        let m = build_attention_mask(&[5], 4, &[vec![]], 500).unwrap();
        assert_eq!(m.padded_len(), 8);
        assert!(m.row(0).iter().all(|&v| v != GLOBAL));
    }

    #[test]
    fn rejects_bad_globals_and_lengths() {
        assert!(build_attention_mask(&[3], 2, &[vec![3]], 500).is_err());
        assert!(build_attention_mask(&[3], 0, &[vec![]], 500).is_err());
        assert!(build_attention_mask(&[600], 50, &[vec![]], 500).is_err());
    }

    #[test]
    fn global_selection() {
        assert!(select_global(10, 0.0, GlobalPolicy::Stride, 0).unwrap().is_empty());
        assert_eq!(select_global(10, 100.0, GlobalPolicy::Stride, 0).unwrap(), (0..10).collect::<Vec<_>>());
        assert_eq!(select_global(10, 20.0, GlobalPolicy::Stride, 0).unwrap(), vec![2, 7]);
        let r = select_global(50, 20.0, GlobalPolicy::Random, 4).unwrap();
        assert_eq!(r.len(), 10);
        assert!(r.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(r, select_global(50, 20.0, GlobalPolicy::Random, 4).unwrap());
        assert!(select_global(5, 120.0, GlobalPolicy::Stride, 0).is_err());
    }

    #[test]
    fn stride_centers_by_enumeration() {
        // each stride [j*n/k, (j+1)*n/k) contains exactly one selected position
        for n in 1..40 {
            for ratio in [10.0, 20.0, 40.0, 50.0] {
                let sel = select_global(n, ratio, GlobalPolicy::Stride, 0).unwrap();
                let k = sel.len();
                for (j, &p) in sel.iter().enumerate() {
                    let lo = j * n / k;
                    let hi = (j + 1) * n / k;
                    assert!(p >= lo && p < hi.max(lo + 1), "n={n} ratio={ratio} j={j} p={p}");
                }
            }
        }
    }
}
