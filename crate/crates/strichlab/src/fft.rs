//! Cached rustfft plans.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

type Plan = Arc<dyn Fft<f64>>;

fn cache() -> &'static Mutex<HashMap<(usize, bool), Plan>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, bool), Plan>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Unnormalized plan: forward uses e^{-2πimk/n}, inverse e^{+2πimk/n}.
pub(crate) fn plan(len: usize, inverse: bool) -> Plan {
    let mut map = cache().lock().expect("fft cache poisoned");
    map.entry((len, inverse))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if inverse {
                planner.plan_fft_inverse(len)
            } else {
                planner.plan_fft_forward(len)
            }
        })
        .clone()
}

pub(crate) fn forward(buf: &mut [Complex64]) {
    plan(buf.len(), false).process(buf);
}

pub(crate) fn inverse(buf: &mut [Complex64]) {
    plan(buf.len(), true).process(buf);
}

/// Apply an unnormalized transform along both axes of a row-major n×n block.
pub(crate) fn transform_2d(buf: &mut [Complex64], n: usize, inverse: bool) {
    let p = plan(n, inverse);
    for row in buf.chunks_mut(n) {
        p.process(row);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); n];
    for j in 0..n {
        for i in 0..n {
            col[i] = buf[i * n + j];
        }
        p.process(&mut col);
        for i in 0..n {
            buf[i * n + j] = col[i];
        }
    }
}
