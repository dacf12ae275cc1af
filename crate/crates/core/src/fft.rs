//! 2-D FFT plumbing with plan caching and the series convention
//! `f(x) = sum_k c_k e^{i k.x}` on nodes `x_m = -pi + 2 pi m / n`.
//!
//! A coefficient array and a physical sample array share the same row-major
//! layout; the offset of the torus origin shows up as the parity phase
//! `(-1)^{i1+i2}` applied on both directions of the transform.

use num_complex::Complex;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use std::any::{Any, TypeId};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::scalar::Real;

type PlanKey = (TypeId, usize, bool);

fn plan_store() -> &'static Mutex<HashMap<PlanKey, Box<dyn Any + Send + Sync>>> {
    static STORE: OnceLock<Mutex<HashMap<PlanKey, Box<dyn Any + Send + Sync>>>> = OnceLock::new();
    STORE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn plan<T: Real>(len: usize, inverse: bool) -> Arc<dyn Fft<T>> {
    let key = (TypeId::of::<T>(), len, inverse);
    let mut store = plan_store().lock().unwrap();
    if let Some(b) = store.get(&key) {
        return b.downcast_ref::<Arc<dyn Fft<T>>>().unwrap().clone();
    }
    let mut planner = FftPlanner::<T>::new();
    let p = if inverse {
        planner.plan_fft_inverse(len)
    } else {
        planner.plan_fft_forward(len)
    };
    store.insert(key, Box::new(p.clone()));
    p
}

/// Sizes of the form `2^a 3^b` keep every transform on a fast path.
pub fn fft_friendly_size(min: usize) -> usize {
    let mut best = usize::MAX;
    let mut p2 = 1usize;
    while p2 < min.saturating_mul(4) {
        let mut v = p2;
        while v < min {
            v *= 3;
        }
        if v < best {
            best = v;
        }
        p2 *= 2;
    }
    best
}

fn transpose<T: Copy + Send + Sync>(src: &[T], dst: &mut [T], rows: usize, cols: usize) {
    const BLK: usize = 32;
    for bi in (0..rows).step_by(BLK) {
        for bj in (0..cols).step_by(BLK) {
            for i in bi..(bi + BLK).min(rows) {
                for j in bj..(bj + BLK).min(cols) {
                    dst[j * rows + i] = src[i * cols + j];
                }
            }
        }
    }
}

fn fft_rows<T: Real>(data: &mut [Complex<T>], len: usize, inverse: bool) {
    let p = plan::<T>(len, inverse);
    data.par_chunks_mut(len).for_each(|row| {
        let mut scratch = vec![Complex::new(T::zero(), T::zero()); p.get_inplace_scratch_len()];
        p.process_with_scratch(row, &mut scratch);
    });
}

/// In-place unnormalized 2-D DFT over an `n x n` row-major array.
pub fn fft2d<T: Real>(data: &mut Vec<Complex<T>>, n: usize, inverse: bool) {
    debug_assert_eq!(data.len(), n * n);
    fft_rows(data, n, inverse);
    let mut tmp = vec![Complex::new(T::zero(), T::zero()); n * n];
    transpose(data, &mut tmp, n, n);
    fft_rows(&mut tmp, n, inverse);
    transpose(&tmp, data, n, n);
}

/// Series coefficients -> complex physical samples on an `m x m` grid.
/// `m > n` zero-pads; `m < n` is allowed when the populated band fits
/// strictly inside the target Nyquist (the caller guarantees this).
pub fn coeffs_to_physical<T: Real>(
    coeffs: &[Complex<T>],
    n: usize,
    m: usize,
) -> Vec<Complex<T>> {
    let mut buf = vec![Complex::new(T::zero(), T::zero()); m * m];
    let half = (n / 2).min(m / 2);
    for i1 in 0..n {
        let k1 = if i1 <= n / 2 { i1 as i64 } else { i1 as i64 - n as i64 };
        if k1.unsigned_abs() as usize >= half {
            continue; // Nyquist rows are zero by convention
        }
        let j1 = ((k1 + m as i64) % m as i64) as usize;
        for i2 in 0..n {
            let k2 = if i2 <= n / 2 { i2 as i64 } else { i2 as i64 - n as i64 };
            if k2.unsigned_abs() as usize >= half {
                continue;
            }
            let j2 = ((k2 + m as i64) % m as i64) as usize;
            let c = coeffs[i1 * n + i2];
            let sign = if (k1 + k2).rem_euclid(2) == 0 { T::one() } else { -T::one() };
            buf[j1 * m + j2] = c * sign;
        }
    }
    fft2d(&mut buf, m, true);
    buf
}

/// Complex physical samples on an `m x m` grid -> series coefficients on an
/// `n x n` storage grid, keeping only modes with `|k|^2 <= keep_sq`.
pub fn physical_to_coeffs<T: Real>(
    vals: &mut Vec<Complex<T>>,
    m: usize,
    n: usize,
    keep_sq: i64,
) -> Vec<Complex<T>> {
    fft2d(vals, m, false);
    let norm = T::one() / T::from_usize(m * m).unwrap();
    let mut out = vec![Complex::new(T::zero(), T::zero()); n * n];
    let half = ((n / 2) as i64).min((m / 2) as i64);
    for k1 in -(half - 1)..half {
        let j1 = ((k1 + m as i64) % m as i64) as usize;
        let i1 = ((k1 + n as i64) % n as i64) as usize;
        for k2 in -(half - 1)..half {
            if k1 * k1 + k2 * k2 > keep_sq {
                continue;
            }
            let j2 = ((k2 + m as i64) % m as i64) as usize;
            let i2 = ((k2 + n as i64) % n as i64) as usize;
            let sign = if (k1 + k2).rem_euclid(2) == 0 { T::one() } else { -T::one() };
            out[i1 * n + i2] = vals[j1 * m + j2] * sign * norm;
        }
    }
    out
}

/// Real physical samples of a field known to be real-valued.
pub fn coeffs_to_real<T: Real>(coeffs: &[Complex<T>], n: usize, m: usize) -> Vec<T> {
    coeffs_to_physical(coeffs, n, m).iter().map(|c| c.re).collect()
}

/// Real samples -> coefficients (Hermitian by construction of the input).
pub fn real_to_coeffs<T: Real>(vals: &[T], m: usize, n: usize, keep_sq: i64) -> Vec<Complex<T>> {
    let mut buf: Vec<Complex<T>> = vals.iter().map(|&v| Complex::new(v, T::zero())).collect();
    physical_to_coeffs(&mut buf, m, n, keep_sq)
}
