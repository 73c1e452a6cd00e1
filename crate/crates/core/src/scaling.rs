//! Time and peak-memory scaling of the windowed attention kernel against
//! the dense reference.
//!
//! Peak bytes are only meaningful when the running binary installs
//! [`TrackingAllocator`] as its global allocator; otherwise they read 0.

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attention::kernel::{dense_forward, window_forward, Geometry, Projections};
use crate::attention::{select_global, GlobalPolicy, GLOBAL, LOCAL};
use crate::error::{Error, Result};

static CURRENT: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);
static INSTALLED: AtomicBool = AtomicBool::new(false);

/// System allocator that counts live bytes and their high-water mark.
pub struct TrackingAllocator;

unsafe impl GlobalAlloc for TrackingAllocator {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = unsafe { System.alloc(layout) };
        if !p.is_null() {
            record_alloc(layout.size());
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) };
        CURRENT.fetch_sub(layout.size(), Ordering::Relaxed);
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let p = unsafe { System.realloc(ptr, layout, new_size) };
        if !p.is_null() {
            CURRENT.fetch_sub(layout.size(), Ordering::Relaxed);
            record_alloc(new_size);
        }
        p
    }
}

fn record_alloc(size: usize) {
    INSTALLED.store(true, Ordering::Relaxed);
    let now = CURRENT.fetch_add(size, Ordering::Relaxed) + size;
    PEAK.fetch_max(now, Ordering::Relaxed);
}

/// Runs `f` and returns its result with the bytes allocated above the
/// starting level at the peak.
pub fn measure_peak<T>(f: impl FnOnce() -> T) -> (T, usize) {
    let base = CURRENT.load(Ordering::Relaxed);
    PEAK.store(base, Ordering::Relaxed);
    let out = f();
    let peak = PEAK.load(Ordering::Relaxed);
    (out, peak.saturating_sub(base))
}

pub fn tracking_installed() -> bool {
    INSTALLED.load(Ordering::Relaxed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingConfig {
    pub sizes: Vec<usize>,
    pub window: usize,
    /// Percentage of global rows.
    pub global_ratio: f64,
    pub d_model: usize,
    pub heads: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            sizes: vec![100, 200, 400, 800],
            window: 50,
            global_ratio: 0.0,
            d_model: 64,
            heads: 4,
            repeats: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub n: usize,
    pub sparse_ms: f64,
    pub dense_ms: f64,
    pub sparse_peak_bytes: usize,
    pub dense_peak_bytes: usize,
    /// Largest output difference, checked only where the window covers the
    /// whole document.
    pub max_abs_diff: Option<f64>,
}

/// Measurements at `to_n` divided by those at `from_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoublingRatio {
    pub from_n: usize,
    pub to_n: usize,
    pub sparse_time: f64,
    pub dense_time: f64,
    pub sparse_peak: f64,
    pub dense_peak: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

struct Case {
    geo: Geometry,
    m: Vec<Vec<f64>>,
    kinds: Vec<u8>,
    sparse_t: Vec<f64>,
    dense_t: Vec<f64>,
    sparse_peak: usize,
    dense_peak: usize,
    max_abs_diff: Option<f64>,
}

impl Case {
    fn projections(&self) -> Projections<'_> {
        let m = &self.m;
        Projections {
            q: &m[0],
            k: &m[1],
            v: &m[2],
            global: Some([&m[3], &m[4], &m[5]]),
        }
    }

    fn sample(&mut self, window: usize) -> Result<()> {
        let (p, geo) = (self.projections(), self.geo);
        let start = Instant::now();
        let (sparse, sparse_peak) = measure_peak(|| window_forward(&p, &self.kinds, geo, window));
        let sparse_ms = start.elapsed().as_secs_f64() * 1e3;
        let start = Instant::now();
        let (dense, dense_peak) = measure_peak(|| dense_forward(&p, &self.kinds, geo));
        let dense_ms = start.elapsed().as_secs_f64() * 1e3;
        let (sparse, dense) = (sparse?.0, dense?);
        if window >= geo.n {
            self.max_abs_diff = Some(sparse.iter().zip(&dense).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        }
        self.sparse_t.push(sparse_ms);
        self.dense_t.push(dense_ms);
        self.sparse_peak = self.sparse_peak.max(sparse_peak);
        self.dense_peak = self.dense_peak.max(dense_peak);
        Ok(())
    }
}

/// Times both kernels at every size. Repeats are interleaved across sizes
/// so a slow stretch on the host hits every size rather than one.
pub fn scaling_bench(cfg: &ScalingConfig) -> Result<Vec<ScalingRow>> {
    if cfg.repeats == 0 {
        return Err(Error::arg("repeats must be at least 1"));
    }
    let mut cases = Vec::with_capacity(cfg.sizes.len());
    for &n in &cfg.sizes {
        if n < cfg.window || n % cfg.window != 0 {
            return Err(Error::arg(format!(
                "benchmark size {n} must be a multiple of the window {} and at least as large",
                cfg.window
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ n as u64);
        let len = n * cfg.d_model;
        let mut kinds = vec![LOCAL; n];
        for g in select_global(n, cfg.global_ratio, GlobalPolicy::Stride, cfg.seed)? {
            kinds[g] = GLOBAL;
        }
        let case = Case {
            geo: Geometry {
                n,
                d: cfg.d_model,
                heads: cfg.heads,
            },
            m: (0..6).map(|_| random_matrix(&mut rng, len)).collect(),
            kinds,
            sparse_t: Vec::with_capacity(cfg.repeats),
            dense_t: Vec::with_capacity(cfg.repeats),
            sparse_peak: 0,
            dense_peak: 0,
            max_abs_diff: None,
        };
        // untimed warm-up so first-touch page faults don't land in a sample
        let p = case.projections();
        window_forward(&p, &case.kinds, case.geo, cfg.window)?;
        dense_forward(&p, &case.kinds, case.geo)?;
        cases.push(case);
    }
    for _ in 0..cfg.repeats {
        for case in &mut cases {
            case.sample(cfg.window)?;
        }
    }
    Ok(cases
        .into_iter()
        .map(|c| ScalingRow {
            n: c.geo.n,
            sparse_ms: median(c.sparse_t),
            dense_ms: median(c.dense_t),
            sparse_peak_bytes: c.sparse_peak,
            dense_peak_bytes: c.dense_peak,
            max_abs_diff: c.max_abs_diff,
        })
        .collect())
}

pub fn doubling_ratios(rows: &[ScalingRow]) -> Vec<DoublingRatio> {
    rows.windows(2)
        .map(|w| DoublingRatio {
            from_n: w[0].n,
            to_n: w[1].n,
            sparse_time: w[1].sparse_ms / w[0].sparse_ms,
            dense_time: w[1].dense_ms / w[0].dense_ms,
            sparse_peak: w[1].sparse_peak_bytes as f64 / w[0].sparse_peak_bytes as f64,
            dense_peak: w[1].dense_peak_bytes as f64 / w[0].dense_peak_bytes as f64,
        })
        .collect()
}

pub const SCALING_HEADER: &str = "n\tsparse_ms\tdense_ms\tsparse_peak_bytes\tdense_peak_bytes";

pub fn scaling_tsv(rows: &[ScalingRow]) -> String {
    let mut out = format!("{SCALING_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{:.4}\t{:.4}\t{}\t{}\n",
            r.n, r.sparse_ms, r.dense_ms, r.sparse_peak_bytes, r.dense_peak_bytes
        ));
    }
    out
}
