//! Tensor-product FFT over a `G^d` grid with a process-wide plan cache.

use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use once_cell::sync::Lazy;
use parking_lot::RwLock;
use rustfft::{Fft, FftDirection, FftPlanner};

type PlanKey = (usize, bool);
type PlanCache = HashMap<PlanKey, Arc<dyn Fft<f64>>>;

static PLANS: Lazy<RwLock<PlanCache>> =
    Lazy::new(|| RwLock::new(HashMap::new()));

fn plan(len: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    if let Some(p) = PLANS.read().get(&(len, forward)) {
        return Arc::clone(p);
    }
    let mut cache = PLANS.write();
    Arc::clone(cache.entry((len, forward)).or_insert_with(|| {
        let dir = if forward {
            FftDirection::Forward
        } else {
            FftDirection::Inverse
        };
        FftPlanner::new().plan_fft(len, dir)
    }))
}

/// In-place unnormalized transform along every axis of a row-major `G^d` array.
///
/// `forward` uses the kernel `e^{-2πi jk/G}`, inverse uses `e^{+2πi jk/G}`.
pub fn fft_nd(data: &mut [Complex64], points: usize, dim: usize, forward: bool) {
    debug_assert_eq!(data.len(), points.pow(dim as u32));
    let fft = plan(points, forward);
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut line = vec![Complex64::new(0.0, 0.0); points];
    for axis in 0..dim {
        let stride = points.pow((dim - 1 - axis) as u32);
        if stride == 1 {
            for chunk in data.chunks_exact_mut(points) {
                fft.process_with_scratch(chunk, &mut scratch);
            }
            continue;
        }
        let block = stride * points;
        for outer in (0..data.len()).step_by(block) {
            for inner in 0..stride {
                let base = outer + inner;
                for (j, v) in line.iter_mut().enumerate() {
                    *v = data[base + j * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (j, v) in line.iter().enumerate() {
                    data[base + j * stride] = *v;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_then_inverse_is_scaled_identity() {
        let g = 6;
        let mut data: Vec<Complex64> = (0..g * g)
            .map(|i| Complex64::new(i as f64 * 0.3 - 1.0, (i % 5) as f64))
            .collect();
        let orig = data.clone();
        fft_nd(&mut data, g, 2, true);
        fft_nd(&mut data, g, 2, false);
        for (a, b) in data.iter().zip(&orig) {
            assert!((a / (g * g) as f64 - b).norm() < 1e-12);
        }
    }

    #[test]
    fn single_mode_2d() {
        let g = 4;
        let mut data = vec![Complex64::new(0.0, 0.0); g * g];
        // mode (k0, k1) = (1, 2) → index 1*g + 2
        data[g + 2] = Complex64::new(1.0, 0.0);
        fft_nd(&mut data, g, 2, false);
        for j0 in 0..g {
            for j1 in 0..g {
                let phase = 2.0 * std::f64::consts::PI * (j0 as f64 + 2.0 * j1 as f64) / g as f64;
                let expect = Complex64::from_polar(1.0, phase);
                assert!((data[j0 * g + j1] - expect).norm() < 1e-12);
            }
        }
    }
}
