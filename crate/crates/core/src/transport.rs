//! Inverse flow maps along the mollified convection, transported stresses,
//! and the material derivative `D_{t,q} = d_t + (Lambda^{2-gamma2}(y_l + z_l)) . grad`.
//!
//! Characteristics are integrated per collocation node with RK4; the velocity
//! is evaluated at particle positions by direct summation over the (small)
//! set of populated convection modes, which is spectrally exact.

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{CoreError, Result};
use crate::field::{SpectralField, TimeGrid, TimeSampledField};
use crate::grid::Grid;
use crate::ops;
use crate::scalar::{r, Real};

/// Sparse view of a band-limited vector field: the mean plus one entry per
/// populated half-lattice mode (the Hermitian partner is implied).
#[derive(Debug, Clone)]
pub struct SparseModes<T: Real> {
    pub mean: [T; 2],
    pub ks: Vec<[i64; 2]>,
    /// Per mode, per component coefficient.
    pub coeffs: Vec<[Complex<T>; 2]>,
}

impl<T: Real> SparseModes<T> {
    pub fn from_field(f: &SpectralField<T>, tol: T) -> SparseModes<T> {
        let mut ks = Vec::new();
        let mut coeffs = Vec::new();
        let scale = f
            .comps
            .iter()
            .flat_map(|c| c.iter())
            .fold(T::zero(), |a, v| a.max(v.norm()));
        let thresh = scale * tol;
        let mean = [
            f.comps[0][0].re,
            if f.is_vector() { f.comps[1][0].re } else { T::zero() },
        ];
        for (flat, k1, k2) in f.grid.iter_k() {
            // half lattice: k1 > 0, or k1 == 0 and k2 > 0
            if !(k1 > 0 || (k1 == 0 && k2 > 0)) {
                continue;
            }
            let c0 = f.comps[0][flat];
            let c1 = if f.is_vector() { f.comps[1][flat] } else { Complex::new(T::zero(), T::zero()) };
            if c0.norm() > thresh || c1.norm() > thresh {
                ks.push([k1, k2]);
                coeffs.push([c0, c1]);
            }
        }
        SparseModes { mean, ks, coeffs }
    }

    /// Evaluate the real vector field at an arbitrary point.
    #[inline]
    pub fn eval(&self, x: [T; 2]) -> [T; 2] {
        let mut v = self.mean;
        for (k, c) in self.ks.iter().zip(self.coeffs.iter()) {
            let phase = T::from_i64(k[0]).unwrap() * x[0] + T::from_i64(k[1]).unwrap() * x[1];
            let (s, co) = phase.sin_cos();
            // 2 Re(c e^{i phase}) for the +/- pair
            let two = T::of(2.0);
            v[0] += two * (c[0].re * co - c[0].im * s);
            v[1] += two * (c[1].re * co - c[1].im * s);
        }
        v
    }

    pub fn sup_bound(&self) -> T {
        let two = T::of(2.0);
        let base = self.mean[0].abs() + self.mean[1].abs();
        self.ks
            .iter()
            .zip(self.coeffs.iter())
            .fold(base, |a, (_, c)| a + two * (c[0].norm() + c[1].norm()))
    }
}

/// Convection `Lambda^{2-gamma2} y_l + Lambda^{2-gamma2} z_l`, with the
/// frequency-support invariant `supp ^ B(0, 2 lambda_q)` enforced.
pub fn convection_field<T: Real>(
    y_l: &TimeSampledField<T>,
    z_l: &TimeSampledField<T>,
    gamma2: f64,
    lambda_q: f64,
) -> Result<TimeSampledField<T>> {
    if y_l.tg.len != z_l.tg.len {
        return Err(CoreError::Shape("convection inputs on different time grids".into()));
    }
    let order = r::<T>(2.0 - gamma2);
    let samples: Vec<SpectralField<T>> = y_l
        .samples
        .par_iter()
        .zip(z_l.samples.par_iter())
        .map(|(y, z)| {
            let a = ops::fractional_laplacian(y, order)?;
            let b = ops::fractional_laplacian(z, order)?;
            a.add(&b)
        })
        .collect::<Result<_>>()?;
    let conv = TimeSampledField { tg: y_l.tg, samples };
    for s in &conv.samples {
        let mass = s.mass_outside(r(2.0 * lambda_q));
        if mass > r(1e-12) {
            return Err(CoreError::Invariant(format!(
                "convection carries {:.3e} relative spectral mass outside B(0, 2 lambda_q = {}); \
                 was the noise truncation skipped?",
                mass.to_f64_lossy(),
                2.0 * lambda_q
            )));
        }
    }
    Ok(conv)
}

/// Inverse flow map on one cutoff window: `Phi_j(t, x) - x`, sampled at the
/// collocation nodes, stored componentwise in physical space.
#[derive(Debug, Clone)]
pub struct FlowMap<T: Real> {
    pub j: u32,
    pub anchor: T,
    pub grid: Grid,
    /// Sample index range `[start, end)` into the owning time grid.
    pub start: usize,
    pub tg: TimeGrid<T>,
    /// Displacement per sample: two physical arrays.
    pub disp: Vec<[Vec<T>; 2]>,
}

impl<T: Real> FlowMap<T> {
    /// `Phi_j(t_i, x_node)`, wrapped to the fundamental domain.
    pub fn position(&self, sample: usize, node: usize) -> [T; 2] {
        let n = self.grid.n();
        let (i, j) = (node / n, node % n);
        let x = [self.grid.node::<T>(i), self.grid.node::<T>(j)];
        [x[0] + self.disp[sample][0][node], x[1] + self.disp[sample][1][node]]
    }
}

/// Time interpolation of the sparse convection coefficients (cubic Lagrange,
/// matching the integrator order).
struct ConvInterp<T: Real> {
    tg: TimeGrid<T>,
    sparse: Vec<SparseModes<T>>,
}

impl<T: Real> ConvInterp<T> {
    fn build(conv: &TimeSampledField<T>) -> ConvInterp<T> {
        let sparse = conv
            .samples
            .iter()
            .map(|s| SparseModes::from_field(s, T::zero()))
            .collect();
        ConvInterp { tg: conv.tg, sparse }
    }

    /// Union mode set with cubically interpolated coefficients at time `t`.
    fn at(&self, t: T) -> SparseModes<T> {
        let x = ((t - self.tg.t0) / self.tg.dt).to_f64_lossy();
        let len = self.tg.len as i64;
        let i1 = (x.floor() as i64).clamp(0, len - 1);
        let i0 = (i1 - 1).clamp(0, len - 1);
        let i2 = (i1 + 1).clamp(0, len - 1);
        let i3 = (i1 + 2).clamp(0, len - 1);
        let f = r::<T>(x - i1 as f64);
        let one = T::one();
        let two = T::of(2.0);
        let six = T::of(6.0);
        let w0 = -f * (f - one) * (f - two) / six;
        let w1 = (f + one) * (f - one) * (f - two) / two;
        let w2 = -(f + one) * f * (f - two) / two;
        let w3 = (f + one) * f * (f - one) / six;
        // union of the four stencils' mode sets
        let mut map: std::collections::BTreeMap<[i64; 2], [Complex<T>; 2]> =
            std::collections::BTreeMap::new();
        let mut mean = [T::zero(); 2];
        for (idx, w) in [(i0, w0), (i1, w1), (i2, w2), (i3, w3)] {
            let s = &self.sparse[idx as usize];
            mean[0] += s.mean[0] * w;
            mean[1] += s.mean[1] * w;
            for (k, c) in s.ks.iter().zip(s.coeffs.iter()) {
                let e = map.entry(*k).or_insert([Complex::new(T::zero(), T::zero()); 2]);
                e[0] = e[0] + c[0] * w;
                e[1] = e[1] + c[1] * w;
            }
        }
        let mut ks = Vec::with_capacity(map.len());
        let mut coeffs = Vec::with_capacity(map.len());
        for (k, c) in map {
            ks.push(k);
            coeffs.push(c);
        }
        SparseModes { mean, ks, coeffs }
    }
}

fn wrap_to_torus<T: Real>(v: T) -> T {
    let two_pi = T::PI() + T::PI();
    let mut w = v;
    while w < -T::PI() {
        w += two_pi;
    }
    while w >= T::PI() {
        w -= two_pi;
    }
    w
}

/// Integrate backward/forward characteristics of the convection field for
/// every collocation node of every window sample.
///
/// `window` is the sample index range (into `conv.tg`) covering
/// `supp chi_j` intersected with the run horizon; `anchor` must be the
/// on-grid time `tau j`.
pub fn solve_flow<T: Real>(
    conv: &TimeSampledField<T>,
    j: u32,
    anchor: T,
    window: (usize, usize),
    grid: Grid,
    substep: T,
) -> Result<FlowMap<T>> {
    let interp = ConvInterp::build(conv);
    let anchor_idx = conv.tg.index_of(anchor)?;
    if anchor_idx < window.0 || anchor_idx >= window.1 {
        return Err(CoreError::Integration(format!(
            "anchor sample {anchor_idx} outside window {window:?}"
        )));
    }
    // CFL cap: substep small enough that a particle crosses a fraction of the
    // smallest convection wavelength per step.
    let sup = conv
        .samples
        .iter()
        .map(|s| SparseModes::from_field(s, T::zero()).sup_bound())
        .fold(T::zero(), |a, v| a.max(v));
    let ds = if sup > T::zero() {
        substep.min(r::<T>(0.1) / sup)
    } else {
        substep
    };
    if !(ds > T::zero()) {
        return Err(CoreError::Integration(format!(
            "flow substep underflow: sup |conv| = {:e}",
            sup.to_f64_lossy()
        )));
    }

    let n = grid.n();
    let nodes = n * n;
    let tg = TimeGrid {
        t0: conv.tg.time(window.0),
        dt: conv.tg.dt,
        len: window.1 - window.0,
    };
    let disp: Vec<[Vec<T>; 2]> = (window.0..window.1)
        .into_par_iter()
        .map(|si| {
            let t_start = conv.tg.time(si);
            let span = anchor - t_start;
            let nsub = (span.abs() / ds).ceil().to_usize().unwrap_or(0).max(if span == T::zero() { 0 } else { 1 });
            let mut d0 = vec![T::zero(); nodes];
            let mut d1 = vec![T::zero(); nodes];
            if nsub > 0 {
                let h = span / T::from_usize(nsub).unwrap();
                // shared interpolated coefficient tables per substage
                let mut stages: Vec<(SparseModes<T>, SparseModes<T>, SparseModes<T>)> =
                    Vec::with_capacity(nsub);
                for m in 0..nsub {
                    let s0 = t_start + h * T::from_usize(m).unwrap();
                    stages.push((
                        interp.at(s0),
                        interp.at(s0 + h * T::of(0.5)),
                        interp.at(s0 + h),
                    ));
                }
                let chunks: Vec<(usize, [T; 2])> = (0..nodes)
                    .into_par_iter()
                    .map(|node| {
                        let (i, jn) = (node / n, node % n);
                        let mut x = [grid.node::<T>(i), grid.node::<T>(jn)];
                        for (c0, ch, c1) in &stages {
                            let k1 = c0.eval(x);
                            let k2 = ch.eval([x[0] + k1[0] * h * T::of(0.5), x[1] + k1[1] * h * T::of(0.5)]);
                            let k3 = ch.eval([x[0] + k2[0] * h * T::of(0.5), x[1] + k2[1] * h * T::of(0.5)]);
                            let k4 = c1.eval([x[0] + k3[0] * h, x[1] + k3[1] * h]);
                            let sixth = h / T::of(6.0);
                            x[0] += sixth * (k1[0] + T::of(2.0) * (k2[0] + k3[0]) + k4[0]);
                            x[1] += sixth * (k1[1] + T::of(2.0) * (k2[1] + k3[1]) + k4[1]);
                        }
                        (node, x)
                    })
                    .collect();
                for (node, x) in chunks {
                    let (i, jn) = (node / n, node % n);
                    d0[node] = wrap_to_torus(x[0] - grid.node::<T>(i));
                    d1[node] = wrap_to_torus(x[1] - grid.node::<T>(jn));
                }
            }
            [d0, d1]
        })
        .collect();

    Ok(FlowMap { j, anchor, grid, start: window.0, tg, disp })
}

/// Evaluate a band-limited scalar (given by its sparse modes) at the flowed
/// positions: `f(Phi_j(t, x))` for every node, by direct mode summation.
pub fn pullback_scalar<T: Real>(
    coeffs: &SparseModes<T>,
    flow: &FlowMap<T>,
    sample: usize,
) -> Vec<T> {
    let n = flow.grid.n();
    let nodes = n * n;
    (0..nodes)
        .into_par_iter()
        .map(|node| {
            let x = flow.position(sample, node);
            coeffs.eval_scalar(x)
        })
        .collect()
}

impl<T: Real> SparseModes<T> {
    /// Scalar evaluation (component 0 only).
    #[inline]
    pub fn eval_scalar(&self, x: [T; 2]) -> T {
        let mut v = self.mean[0];
        for (k, c) in self.ks.iter().zip(self.coeffs.iter()) {
            let phase = T::from_i64(k[0]).unwrap() * x[0] + T::from_i64(k[1]).unwrap() * x[1];
            let (s, co) = phase.sin_cos();
            v += T::of(2.0) * (c[0].re * co - c[0].im * s);
        }
        v
    }
}

/// `D_{t,q} f`: 4th-order finite difference in time plus dealiased advection.
pub fn material_derivative<T: Real>(
    conv: &TimeSampledField<T>,
    f: &TimeSampledField<T>,
    out_grid: Grid,
) -> Result<TimeSampledField<T>> {
    if conv.tg.len != f.tg.len {
        return Err(CoreError::Shape("material_derivative needs a shared time grid".into()));
    }
    let dfdt = time_derivative(f)?;
    let samples: Vec<SpectralField<T>> = (0..f.tg.len)
        .into_par_iter()
        .map(|i| {
            let adv = ops::advect(&conv.samples[i], &f.samples[i], out_grid, None)?;
            dfdt.samples[i].regrid(out_grid)?.add(&adv)
        })
        .collect::<Result<_>>()?;
    Ok(TimeSampledField { tg: f.tg, samples })
}

/// 4th-order finite-difference time derivative (one-sided at the ends).
pub fn time_derivative<T: Real>(f: &TimeSampledField<T>) -> Result<TimeSampledField<T>> {
    let len = f.tg.len;
    if len < 5 {
        return Err(CoreError::Resolution("need at least 5 samples for 4th-order d/dt".into()));
    }
    let dt = f.tg.dt;
    let inv12 = T::one() / (T::of(12.0) * dt);
    let samples: Vec<SpectralField<T>> = (0..len)
        .into_par_iter()
        .map(|i| {
            let lin = |terms: &[(usize, f64)]| -> SpectralField<T> {
                let mut acc = SpectralField::zeros(f.samples[0].grid, f.samples[0].ncomp());
                for &(idx, w) in terms {
                    acc = acc.axpy(r::<T>(w) * inv12, &f.samples[idx]).unwrap();
                }
                acc
            };
            if i >= 2 && i + 2 < len {
                lin(&[(i - 2, 1.0), (i - 1, -8.0), (i + 1, 8.0), (i + 2, -1.0)])
            } else if i < 2 {
                // forward 5-point at offset 0 and 1
                if i == 0 {
                    lin(&[(0, -25.0), (1, 48.0), (2, -36.0), (3, 16.0), (4, -3.0)])
                } else {
                    lin(&[(0, -3.0), (1, -10.0), (2, 18.0), (3, -6.0), (4, 1.0)])
                }
            } else {
                // mirrored one-sided stencils at the top end
                if i == len - 1 {
                    lin(&[
                        (len - 1, 25.0),
                        (len - 2, -48.0),
                        (len - 3, 36.0),
                        (len - 4, -16.0),
                        (len - 5, 3.0),
                    ])
                } else {
                    lin(&[
                        (len - 1, 3.0),
                        (len - 2, 10.0),
                        (len - 3, -18.0),
                        (len - 4, 6.0),
                        (len - 5, -1.0),
                    ])
                }
            }
        })
        .collect();
    Ok(TimeSampledField { tg: f.tg, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::TimeGrid;

    fn const_conv(grid: Grid, tg: TimeGrid<f64>, c: [f64; 2]) -> TimeSampledField<f64> {
        let mut f = TimeSampledField::zeros(tg, grid, 2);
        for s in &mut f.samples {
            // constant field: mean mode only
            s.comps[0][0] = Complex::new(c[0], 0.0);
            s.comps[1][0] = Complex::new(c[1], 0.0);
            s.mean_zero = false;
        }
        f
    }

    #[test]
    fn zero_convection_identity_flow() {
        let g = Grid::new(16).unwrap();
        let tg = TimeGrid { t0: 0.0, dt: 0.01, len: 9 };
        let conv = TimeSampledField::zeros(tg, g, 2);
        let flow = solve_flow(&conv, 0, 0.04, (0, 9), g, 0.01).unwrap();
        for s in &flow.disp {
            assert!(s[0].iter().all(|v| f64::abs(*v) < 1e-15));
            assert!(s[1].iter().all(|v| f64::abs(*v) < 1e-15));
        }
    }

    #[test]
    fn constant_convection_translates() {
        let g = Grid::new(16).unwrap();
        let tg = TimeGrid { t0: 0.0, dt: 0.01, len: 9 };
        let c = [0.3, -0.2];
        let conv = const_conv(g, tg, c);
        let anchor = 0.0;
        let flow = solve_flow(&conv, 0, anchor, (0, 9), g, 0.0025).unwrap();
        // Phi(t, x) = x - c (t - anchor): displacement = -c * (t - anchor)
        let si = 8;
        let t = tg.time(si);
        for node in 0..4 {
            let d = [flow.disp[si][0][node], flow.disp[si][1][node]];
            assert!((d[0] + c[0] * (t - anchor)).abs() < 1e-12, "{d:?}");
            assert!((d[1] + c[1] * (t - anchor)).abs() < 1e-12);
        }
    }

    #[test]
    fn material_derivative_of_linear_ramp() {
        // f = t sin(x1), conv = 0 -> D_t f = sin(x1)
        let g = Grid::new(16).unwrap();
        let tg = TimeGrid { t0: 0.0, dt: 0.01, len: 9 };
        let mut f = TimeSampledField::zeros(tg, g, 1);
        for (i, s) in f.samples.iter_mut().enumerate() {
            let t = tg.time(i);
            s.comps[0][g.coeff_index(1, 0)] = Complex::new(0.0, -0.5 * t);
            s.comps[0][g.coeff_index(-1, 0)] = Complex::new(0.0, 0.5 * t);
        }
        let conv = TimeSampledField::zeros(tg, g, 2);
        let d = material_derivative(&conv, &f, g).unwrap();
        for s in &d.samples {
            let idx = g.coeff_index(1, 0);
            assert!((s.comps[0][idx] - Complex::new(0.0, -0.5)).norm() < 1e-10);
        }
    }
}
