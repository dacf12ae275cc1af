//! Norm estimators.
//!
//! Conventions, fixed once and used everywhere:
//! * `l2_norm` is the honest integral norm `(int |f|^2 dx)^{1/2}`, equal by
//!   Parseval to `2 pi (sum_k |c_k|^2)^{1/2}` in series coefficients; so
//!   `||sin x_2||_{L^2}^2 = 2 pi^2`.
//! * `hs_norm` uses the integral-transform Parseval sum
//!   `(2 pi)^2 sum_k |k|^{2s} |f^(k)|^2` with `f^(k) = int f e^{-ik.x} dx
//!   = (2 pi)^2 c_k`. This is the normalization under which the stage-0
//!   seed has `||Lambda^{1/2} y_0(0)||^2 = 8 pi^4 L^4`.
//! * Hoelder seminorms are sampled difference quotients over dyadic grid
//!   offsets in 8 directions - a lower bound for the true seminorm.

use crate::error::{CoreError, Result};
use crate::field::{SpectralField, TimeSampledField};
use crate::scalar::{r, Real};
use serde::Serialize;

/// Sup norm over the collocation nodes of the dealiased (3/2-padded) grid.
pub fn sup_norm<T: Real>(f: &SpectralField<T>) -> T {
    let m = f.grid.padded_n();
    let mut worst = T::zero();
    for c in 0..f.ncomp() {
        let phys = f.physical(c, Some(m));
        worst = phys.iter().fold(worst, |acc, v| acc.max(v.abs()));
    }
    worst
}

/// Nodal Euclidean sup for vectors, max entry sup for scalars.
pub fn sup_norm_vector<T: Real>(f: &SpectralField<T>) -> T {
    if !f.is_vector() {
        return sup_norm(f);
    }
    let m = f.grid.padded_n();
    let p0 = f.physical(0, Some(m));
    let p1 = f.physical(1, Some(m));
    p0.iter()
        .zip(p1.iter())
        .fold(T::zero(), |acc, (a, b)| acc.max((*a * *a + *b * *b).sqrt()))
}

/// `(int |f|^2 dx)^{1/2}` via the coefficient sum.
pub fn l2_norm<T: Real>(f: &SpectralField<T>) -> T {
    let two_pi = T::PI() + T::PI();
    let mut acc = T::zero();
    for c in &f.comps {
        for v in c.iter() {
            acc += v.norm_sqr();
        }
    }
    two_pi * acc.sqrt()
}

/// Same integral computed by quadrature on the collocation grid
/// (used by the Parseval consistency check).
pub fn l2_norm_quadrature<T: Real>(f: &SpectralField<T>) -> T {
    let n = f.grid.n();
    let two_pi = T::PI() + T::PI();
    let cell = (two_pi / T::from_usize(n).unwrap()).powi(2);
    let mut acc = T::zero();
    for c in 0..f.ncomp() {
        let phys = f.physical(c, None);
        for v in phys {
            acc += v * v * cell;
        }
    }
    acc.sqrt()
}

/// Homogeneous Sobolev norm in the paper-matching normalization.
pub fn hs_norm<T: Real>(f: &SpectralField<T>, s: T) -> Result<T> {
    if s < T::zero() {
        for c in &f.comps {
            if c[0].norm() > r::<T>(1e-13) {
                return Err(CoreError::Domain {
                    op: "hs_norm",
                    msg: "negative-order H^s requires mean-zero".into(),
                });
            }
        }
    }
    let mut acc = T::zero();
    for c in &f.comps {
        for (flat, k1, k2) in f.grid.iter_k() {
            let ksq = T::from_i64(k1 * k1 + k2 * k2).unwrap();
            if ksq == T::zero() {
                continue;
            }
            acc += ksq.powf(s) * c[flat].norm_sqr();
        }
    }
    let two_pi = T::PI() + T::PI();
    // (2 pi)^2 sum |k|^{2s} |(2 pi)^2 c_k|^2 = (2 pi)^6 sum |k|^{2s} |c_k|^2
    Ok(two_pi.powi(3) * acc.sqrt())
}

/// Inhomogeneous counterpart with weight `(1 + |k|^2)^s` (zero mode included).
pub fn hs_norm_inhom<T: Real>(f: &SpectralField<T>, s: T) -> T {
    let mut acc = T::zero();
    for c in &f.comps {
        for (flat, k1, k2) in f.grid.iter_k() {
            let w = (T::one() + T::from_i64(k1 * k1 + k2 * k2).unwrap()).powf(s);
            acc += w * c[flat].norm_sqr();
        }
    }
    let two_pi = T::PI() + T::PI();
    two_pi.powi(3) * acc.sqrt()
}

/// Sampled Hoelder seminorm: max difference quotient over offsets
/// `h = grid step * 2^p` in 8 directions. A lower bound for the true value.
pub fn holder_seminorm<T: Real>(f: &SpectralField<T>, beta: T) -> T {
    let n = f.grid.n();
    let two_pi = T::PI() + T::PI();
    let step = two_pi / T::from_usize(n).unwrap();
    let dirs: [(i64, i64); 8] = [
        (1, 0),
        (0, 1),
        (1, 1),
        (1, -1),
        (-1, 0),
        (0, -1),
        (-1, -1),
        (-1, 1),
    ];
    let mut worst = T::zero();
    for comp in 0..f.ncomp() {
        let phys = f.physical(comp, None);
        let mut p = 0u32;
        while (1usize << p) <= n / 4 {
            let m = 1i64 << p;
            for &(d1, d2) in &dirs {
                let (o1, o2) = (d1 * m, d2 * m);
                let hlen = step
                    * T::from_i64(m).unwrap()
                    * T::from_i64(d1 * d1 + d2 * d2).unwrap().sqrt();
                let denom = hlen.powf(beta);
                for i in 0..n {
                    let i2 = ((i as i64 + o1).rem_euclid(n as i64)) as usize;
                    for j in 0..n {
                        let j2 = ((j as i64 + o2).rem_euclid(n as i64)) as usize;
                        let q = (phys[i2 * n + j2] - phys[i * n + j]).abs() / denom;
                        worst = worst.max(q);
                    }
                }
            }
            p += 1;
        }
    }
    worst
}

/// Sampled `W^{k,infinity}` seminorm: max sup over derivatives of order `k`.
pub fn wk_inf_seminorm<T: Real>(f: &SpectralField<T>, k: u32) -> T {
    if k == 0 {
        return sup_norm(f);
    }
    let mut worst = T::zero();
    for a in 0..=k {
        let b = k - a;
        let mut df = f.clone();
        for c in &mut df.comps {
            for (flat, k1, k2) in f.grid.iter_k() {
                let i = num_complex::Complex::new(T::zero(), T::one());
                let mut factor = num_complex::Complex::new(T::one(), T::zero());
                for _ in 0..a {
                    factor = factor * i * T::from_i64(k1).unwrap();
                }
                for _ in 0..b {
                    factor = factor * i * T::from_i64(k2).unwrap();
                }
                c[flat] = c[flat] * factor;
            }
        }
        worst = worst.max(sup_norm(&df));
    }
    worst
}

#[derive(Debug, Clone, Serialize)]
pub struct NormReport {
    pub sup: f64,
    pub hs: Vec<(f64, f64)>,
    pub holder: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy)]
pub enum NormRequest {
    Sup,
    Hs(f64),
    Holder(f64),
}

/// One-stop evaluation of the requested norms of a snapshot.
pub fn norms<T: Real>(f: &SpectralField<T>, requests: &[NormRequest]) -> Result<NormReport> {
    let mut rep = NormReport { sup: 0.0, hs: vec![], holder: vec![] };
    for req in requests {
        match *req {
            NormRequest::Sup => rep.sup = sup_norm(f).to_f64_lossy(),
            NormRequest::Hs(s) => {
                let v = hs_norm(f, r::<T>(s))?;
                rep.hs.push((s, v.to_f64_lossy()));
            }
            NormRequest::Holder(b) => {
                let v = holder_seminorm(f, r::<T>(b));
                rep.holder.push((b, v.to_f64_lossy()));
            }
        }
    }
    Ok(rep)
}

/// `C_t`-composite over samples plus a sampled time-Hoelder seminorm of the
/// given order measured in the supplied spatial norm.
pub fn time_composite<T: Real>(
    f: &TimeSampledField<T>,
    eta: T,
    spatial: impl Fn(&SpectralField<T>) -> T + Sync,
) -> (T, T) {
    use rayon::prelude::*;
    let vals: Vec<T> = f.samples.par_iter().map(|s| spatial(s)).collect();
    let sup = vals.iter().fold(T::zero(), |a, v| a.max(*v));
    let mut hold = T::zero();
    // dyadic separations keep this O(len log len)
    let len = f.samples.len();
    let mut sep = 1usize;
    while sep < len {
        let quotients: Vec<T> = (0..len - sep)
            .into_par_iter()
            .map(|i| {
                let d = f.samples[i + sep].sub(&f.samples[i]).unwrap();
                let dt = f.tg.dt * T::from_usize(sep).unwrap();
                spatial(&d) / dt.powf(eta)
            })
            .collect();
        hold = quotients.iter().fold(hold, |a, v| a.max(*v));
        sep *= 2;
    }
    (sup, hold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use num_complex::Complex;

    fn sin_x2(g: Grid, amp: f64) -> SpectralField<f64> {
        SpectralField::from_modes(
            g,
            1,
            &[
                (0, 1, 0, Complex::new(0.0, -amp / 2.0)),
                (0, -1, 0, Complex::new(0.0, amp / 2.0)),
            ],
        )
    }

    #[test]
    fn l2_of_sine_is_sqrt_two_pi_sq() {
        let g = Grid::new(32).unwrap();
        let f = sin_x2(g, 1.0);
        let v = l2_norm(&f);
        assert!((v * v - 2.0 * std::f64::consts::PI.powi(2)).abs() < 1e-12);
        let q = l2_norm_quadrature(&f);
        assert!((v - q).abs() / v < 1e-10);
    }

    #[test]
    fn zero_field_all_norms_zero() {
        let g = Grid::new(16).unwrap();
        let f = SpectralField::<f64>::scalar(g);
        assert_eq!(sup_norm(&f), 0.0);
        assert_eq!(l2_norm(&f), 0.0);
        assert_eq!(hs_norm(&f, 0.5).unwrap(), 0.0);
        assert_eq!(holder_seminorm(&f, 0.5), 0.0);
    }

    #[test]
    fn stage0_h_half_value() {
        // ||Lambda^{1/2} y_0(0)||^2 = 8 pi^4 L^4 with y_0 = L^2/(2 pi) (sin x2, 0)
        let g = Grid::new(32).unwrap();
        let big_l: f64 = 2.0;
        let amp = big_l.powi(2) / (2.0 * std::f64::consts::PI);
        let mut f = SpectralField::<f64>::vector(g);
        let s = sin_x2(g, amp);
        f.comps[0] = s.comps[0].clone();
        let v = hs_norm(&f, 0.5).unwrap();
        let expect = 8.0 * std::f64::consts::PI.powi(4) * big_l.powi(4);
        assert!(
            (v * v - expect).abs() / expect < 1e-12,
            "got {} expected {}",
            v * v,
            expect
        );
    }

    #[test]
    fn parseval_random_field() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = Grid::new(32).unwrap();
        let mut f = SpectralField::<f64>::scalar(g);
        for _ in 0..40 {
            let k1 = rng.gen_range(-10i64..=10);
            let k2 = rng.gen_range(-10i64..=10);
            if k1 == 0 && k2 == 0 {
                continue;
            }
            let c = Complex::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
            let i = g.coeff_index(k1, k2);
            let j = g.coeff_index(-k1, -k2);
            f.comps[0][i] += c;
            f.comps[0][j] += c.conj();
        }
        let a = l2_norm(&f);
        let b = l2_norm_quadrature(&f);
        assert!((a - b).abs() / a < 1e-10);
    }
}
