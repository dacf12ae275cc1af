//! Band-limited fields stored as Fourier series coefficients.
//!
//! A field may live on any grid large enough for its band; operations lift
//! operands to a common grid transparently, so low-frequency fields (the
//! noise truncations, the mollified stage fields) stay small in memory.

use num_complex::Complex;
use crate::error::{CoreError, Result};
use crate::fft;
use crate::grid::Grid;
use crate::scalar::{r, Real};

/// Real scalar or vector field on the torus, stored spectrally.
#[derive(Debug, Clone)]
pub struct SpectralField<T: Real> {
    pub grid: Grid,
    /// One coefficient array per component (1 = scalar, 2 = vector).
    pub comps: Vec<Vec<Complex<T>>>,
    pub mean_zero: bool,
}

impl<T: Real> SpectralField<T> {
    pub fn zeros(grid: Grid, ncomp: usize) -> Self {
        // 1 = scalar, 2 = vector; 3 appears internally for tensor entries
        assert!((1..=3).contains(&ncomp));
        SpectralField {
            grid,
            comps: vec![vec![Complex::new(T::zero(), T::zero()); grid.len()]; ncomp],
            mean_zero: true,
        }
    }

    pub fn scalar(grid: Grid) -> Self {
        Self::zeros(grid, 1)
    }

    pub fn vector(grid: Grid) -> Self {
        Self::zeros(grid, 2)
    }

    #[inline]
    pub fn ncomp(&self) -> usize {
        self.comps.len()
    }

    pub fn is_vector(&self) -> bool {
        self.ncomp() == 2
    }

    /// Build a scalar field from an explicit list of modes `(k, c)`.
    /// Hermitian partners must be supplied by the caller.
    pub fn from_modes(grid: Grid, ncomp: usize, modes: &[(i64, i64, usize, Complex<T>)]) -> Self {
        let mut f = Self::zeros(grid, ncomp);
        for &(k1, k2, comp, c) in modes {
            let idx = grid.coeff_index(k1, k2);
            f.comps[comp][idx] = f.comps[comp][idx] + c;
        }
        f.mean_zero = f.comps.iter().all(|c| c[0].norm_sqr() == T::zero());
        f
    }

    /// Sample a closure on the collocation nodes and transform.
    pub fn from_physical_fn(grid: Grid, ncomp: usize, f: impl Fn(T, T, usize) -> T) -> Self {
        let n = grid.n();
        let mut comps = Vec::with_capacity(ncomp);
        for c in 0..ncomp {
            let mut vals = vec![T::zero(); n * n];
            for i in 0..n {
                let x1 = grid.node::<T>(i);
                for j in 0..n {
                    vals[i * n + j] = f(x1, grid.node::<T>(j), c);
                }
            }
            comps.push(fft::real_to_coeffs(&vals, n, n, i64::MAX));
        }
        let mean_zero = comps
            .iter()
            .all(|c| c[0].norm() <= r::<T>(1e-13));
        SpectralField { grid, comps, mean_zero }
    }

    pub fn mean(&self, comp: usize) -> Complex<T> {
        self.comps[comp][0]
    }

    pub fn subtract_mean(&mut self) {
        for c in &mut self.comps {
            c[0] = Complex::new(T::zero(), T::zero());
        }
        self.mean_zero = true;
    }

    /// Largest `|k|^2` carrying a nonzero coefficient.
    pub fn band_radius_sq(&self) -> i64 {
        let mut best = 0i64;
        for c in &self.comps {
            for (flat, k1, k2) in self.grid.iter_k() {
                if c[flat].norm_sqr() != T::zero() {
                    best = best.max(k1 * k1 + k2 * k2);
                }
            }
        }
        best
    }

    /// Re-store the same function on a different grid. Growing is exact;
    /// shrinking requires the band to fit and errors otherwise.
    pub fn regrid(&self, grid: Grid) -> Result<Self> {
        if grid == self.grid {
            return Ok(self.clone());
        }
        let nyq_sq = (grid.nyquist() - 1) * (grid.nyquist() - 1);
        let mut out = Self::zeros(grid, self.ncomp());
        for (ci, c) in self.comps.iter().enumerate() {
            for (flat, k1, k2) in self.grid.iter_k() {
                let v = c[flat];
                if v.norm_sqr() == T::zero() {
                    continue;
                }
                if k1 * k1 + k2 * k2 > nyq_sq {
                    return Err(CoreError::Resolution(format!(
                        "regrid to n={} drops populated mode ({k1},{k2})",
                        grid.n()
                    )));
                }
                out.comps[ci][grid.coeff_index(k1, k2)] = v;
            }
        }
        out.mean_zero = self.mean_zero;
        Ok(out)
    }

    /// Real samples of one component on an `m x m` grid (default: own grid).
    pub fn physical(&self, comp: usize, m: Option<usize>) -> Vec<T> {
        let m = m.unwrap_or(self.grid.n());
        fft::coeffs_to_real(&self.comps[comp], self.grid.n(), m)
    }

    /// Max deviation from Hermitian symmetry, relative to the max modulus.
    pub fn hermitian_defect(&self) -> T {
        let mut worst = T::zero();
        let mut scale = T::zero();
        for c in &self.comps {
            for (flat, k1, k2) in self.grid.iter_k() {
                let v = c[flat];
                scale = scale.max(v.norm());
                if k1.abs() >= self.grid.nyquist() || k2.abs() >= self.grid.nyquist() {
                    continue;
                }
                let w = c[self.grid.coeff_index(-k1, -k2)];
                let d = (v - w.conj()).norm();
                worst = worst.max(d);
            }
        }
        if scale > T::zero() {
            worst / scale
        } else {
            T::zero()
        }
    }

    /// Spectral mass fraction outside `|k| > radius`.
    pub fn mass_outside(&self, radius: T) -> T {
        let r_sq = radius * radius;
        let mut inside = T::zero();
        let mut outside = T::zero();
        for c in &self.comps {
            for (flat, k1, k2) in self.grid.iter_k() {
                let ksq = T::from_i64(k1 * k1 + k2 * k2).unwrap();
                let m = c[flat].norm_sqr();
                if ksq > r_sq {
                    outside += m;
                } else {
                    inside += m;
                }
            }
        }
        let total = inside + outside;
        if total > T::zero() {
            outside / total
        } else {
            T::zero()
        }
    }

    /// Spectral mass fraction outside an annulus `lo <= |k| <= hi`.
    pub fn mass_outside_annulus(&self, lo: T, hi: T) -> T {
        let (lo_sq, hi_sq) = (lo * lo, hi * hi);
        let mut inside = T::zero();
        let mut outside = T::zero();
        for c in &self.comps {
            for (flat, k1, k2) in self.grid.iter_k() {
                let ksq = T::from_i64(k1 * k1 + k2 * k2).unwrap();
                let m = c[flat].norm_sqr();
                if ksq < lo_sq || ksq > hi_sq {
                    outside += m;
                } else {
                    inside += m;
                }
            }
        }
        let total = inside + outside;
        if total > T::zero() {
            outside / total
        } else {
            T::zero()
        }
    }

    pub fn scale(&mut self, s: T) {
        for c in &mut self.comps {
            for v in c.iter_mut() {
                *v = *v * s;
            }
        }
    }

    /// `self + s * other`, lifting grids as needed.
    pub fn axpy(&self, s: T, other: &SpectralField<T>) -> Result<SpectralField<T>> {
        if self.ncomp() != other.ncomp() {
            return Err(CoreError::Shape(format!(
                "axpy with {} vs {} components",
                self.ncomp(),
                other.ncomp()
            )));
        }
        let grid = if self.grid.n() >= other.grid.n() { self.grid } else { other.grid };
        let mut out = self.regrid(grid)?;
        let o = other.regrid(grid)?;
        for (ci, c) in out.comps.iter_mut().enumerate() {
            for (v, w) in c.iter_mut().zip(o.comps[ci].iter()) {
                *v = *v + *w * s;
            }
        }
        out.mean_zero = self.mean_zero && other.mean_zero;
        Ok(out)
    }

    pub fn add(&self, other: &SpectralField<T>) -> Result<SpectralField<T>> {
        self.axpy(T::one(), other)
    }

    pub fn sub(&self, other: &SpectralField<T>) -> Result<SpectralField<T>> {
        self.axpy(-T::one(), other)
    }

    /// Pointwise swap `(a, b) -> (-b, a)`.
    pub fn perp(&self) -> Result<SpectralField<T>> {
        if !self.is_vector() {
            return Err(CoreError::Shape("perp needs a 2-component field".into()));
        }
        let mut out = self.clone();
        out.comps[0] = self.comps[1].iter().map(|c| -*c).collect();
        out.comps[1] = self.comps[0].clone();
        Ok(out)
    }
}

/// Symmetric 2x2 tensor field; entry `21` is implied.
#[derive(Debug, Clone)]
pub struct SymTensorField<T: Real> {
    pub grid: Grid,
    pub e11: Vec<Complex<T>>,
    pub e12: Vec<Complex<T>>,
    pub e22: Vec<Complex<T>>,
    pub trace_free: bool,
}

impl<T: Real> SymTensorField<T> {
    pub fn zeros(grid: Grid) -> Self {
        let z = vec![Complex::new(T::zero(), T::zero()); grid.len()];
        SymTensorField { grid, e11: z.clone(), e12: z.clone(), e22: z, trace_free: true }
    }

    pub fn entries(&self) -> [&Vec<Complex<T>>; 3] {
        [&self.e11, &self.e12, &self.e22]
    }

    pub fn entries_mut(&mut self) -> [&mut Vec<Complex<T>>; 3] {
        [&mut self.e11, &mut self.e12, &mut self.e22]
    }

    /// Max nodal |trace| relative to max nodal entry magnitude.
    pub fn trace_defect(&self) -> T {
        let n = self.grid.n();
        let tr: Vec<Complex<T>> = self
            .e11
            .iter()
            .zip(self.e22.iter())
            .map(|(a, b)| *a + *b)
            .collect();
        let tr_phys = fft::coeffs_to_real(&tr, n, n);
        let scale = self
            .sup_entry_norm()
            .max(T::min_positive_value());
        let worst = tr_phys.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
        worst / scale
    }

    pub fn sup_entry_norm(&self) -> T {
        let n = self.grid.n();
        let mut worst = T::zero();
        for e in self.entries() {
            let phys = fft::coeffs_to_real(e, n, n);
            worst = phys.iter().fold(worst, |acc, v| acc.max(v.abs()));
        }
        worst
    }

    pub fn regrid(&self, grid: Grid) -> Result<Self> {
        let lift = |c: &Vec<Complex<T>>| -> Result<Vec<Complex<T>>> {
            let f = SpectralField { grid: self.grid, comps: vec![c.clone()], mean_zero: false };
            Ok(f.regrid(grid)?.comps.pop().unwrap())
        };
        Ok(SymTensorField {
            grid,
            e11: lift(&self.e11)?,
            e12: lift(&self.e12)?,
            e22: lift(&self.e22)?,
            trace_free: self.trace_free,
        })
    }

    pub fn axpy(&self, s: T, other: &SymTensorField<T>) -> Result<SymTensorField<T>> {
        let grid = if self.grid.n() >= other.grid.n() { self.grid } else { other.grid };
        let mut out = self.regrid(grid)?;
        let o = other.regrid(grid)?;
        for (a, b) in out
            .entries_mut()
            .into_iter()
            .zip(o.entries().into_iter())
        {
            for (v, w) in a.iter_mut().zip(b.iter()) {
                *v = *v + *w * s;
            }
        }
        out.trace_free = self.trace_free && other.trace_free;
        Ok(out)
    }

    pub fn add(&self, other: &SymTensorField<T>) -> Result<SymTensorField<T>> {
        self.axpy(T::one(), other)
    }

    /// Row divergence `(div M)_i = d_j M_ij` as a vector field.
    pub fn divergence(&self) -> SpectralField<T> {
        let grid = self.grid;
        let mut out = SpectralField::vector(grid);
        for (flat, k1, k2) in grid.iter_k() {
            let ik1 = Complex::new(T::zero(), T::from_i64(k1).unwrap());
            let ik2 = Complex::new(T::zero(), T::from_i64(k2).unwrap());
            out.comps[0][flat] = ik1 * self.e11[flat] + ik2 * self.e12[flat];
            out.comps[1][flat] = ik1 * self.e12[flat] + ik2 * self.e22[flat];
        }
        out
    }
}

/// Uniform time grid `t_i = t0 + i dt`.
#[derive(Debug, Clone, Copy)]
pub struct TimeGrid<T: Real> {
    pub t0: T,
    pub dt: T,
    pub len: usize,
}

impl<T: Real> TimeGrid<T> {
    pub fn time(&self, i: usize) -> T {
        self.t0 + self.dt * T::from_usize(i).unwrap()
    }

    /// Nearest sample index for an on-grid time; errors if off-grid.
    pub fn index_of(&self, t: T) -> Result<usize> {
        let x = ((t - self.t0) / self.dt).round();
        let i = x.to_usize().ok_or_else(|| {
            CoreError::Domain {
                op: "time_grid",
                msg: format!("time {t} below grid start {}", self.t0),
            }
        })?;
        let err = (self.time(i) - t).abs();
        if err > self.dt * r(1e-6) {
            return Err(CoreError::Domain {
                op: "time_grid",
                msg: format!("time {t} is not a grid sample"),
            });
        }
        if i >= self.len {
            return Err(CoreError::Domain {
                op: "time_grid",
                msg: format!("time {t} beyond grid end"),
            });
        }
        Ok(i)
    }
}

/// Uniformly time-sampled sequence of fields.
#[derive(Debug, Clone)]
pub struct TimeSampledField<T: Real> {
    pub tg: TimeGrid<T>,
    pub samples: Vec<SpectralField<T>>,
}

impl<T: Real> TimeSampledField<T> {
    pub fn new(tg: TimeGrid<T>, samples: Vec<SpectralField<T>>) -> Self {
        assert_eq!(tg.len, samples.len());
        TimeSampledField { tg, samples }
    }

    pub fn zeros(tg: TimeGrid<T>, grid: Grid, ncomp: usize) -> Self {
        let samples = (0..tg.len).map(|_| SpectralField::zeros(grid, ncomp)).collect();
        TimeSampledField { tg, samples }
    }

    pub fn map(&self, f: impl Fn(&SpectralField<T>) -> SpectralField<T> + Sync) -> Self {
        use rayon::prelude::*;
        let samples: Vec<_> = self.samples.par_iter().map(|s| f(s)).collect();
        TimeSampledField { tg: self.tg, samples }
    }

    /// Every `stride`-th sample (exact OU transitions make the subsampled
    /// path an exact-transition path on the coarser grid).
    pub fn subsample(&self, stride: usize) -> TimeSampledField<T> {
        let samples: Vec<SpectralField<T>> =
            self.samples.iter().step_by(stride).cloned().collect();
        let tg = TimeGrid {
            t0: self.tg.t0,
            dt: self.tg.dt * T::from_usize(stride).unwrap(),
            len: samples.len(),
        };
        TimeSampledField { tg, samples }
    }

    /// Sample at an on-grid time, clamping below the grid start
    /// (the value-at-zero extension convention).
    pub fn at_clamped(&self, t: T) -> Result<&SpectralField<T>> {
        let x = ((t - self.tg.t0) / self.tg.dt).round();
        let i = if x < T::zero() { 0usize } else { x.to_usize().unwrap_or(0) };
        if x >= T::zero() {
            let err = (self.tg.time(i) - t).abs();
            if err > self.tg.dt * r(1e-6) {
                return Err(CoreError::Domain {
                    op: "time_sampled_field",
                    msg: format!("time {t} is not a grid sample"),
                });
            }
        }
        Ok(&self.samples[i.min(self.tg.len - 1)])
    }
}

/// Uniformly time-sampled tensor sequence.
#[derive(Debug, Clone)]
pub struct TimeSampledTensor<T: Real> {
    pub tg: TimeGrid<T>,
    pub samples: Vec<SymTensorField<T>>,
}

impl<T: Real> TimeSampledTensor<T> {
    pub fn new(tg: TimeGrid<T>, samples: Vec<SymTensorField<T>>) -> Self {
        assert_eq!(tg.len, samples.len());
        TimeSampledTensor { tg, samples }
    }

    pub fn at_clamped(&self, t: T) -> Result<&SymTensorField<T>> {
        let x = ((t - self.tg.t0) / self.tg.dt).round();
        let i = if x < T::zero() { 0usize } else { x.to_usize().unwrap_or(0) };
        Ok(&self.samples[i.min(self.tg.len - 1)])
    }
}
