//! Stage-indexed parameters, the squared partition of unity in time, and
//! causal space-time mollification.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::field::{SpectralField, TimeSampledField, TimeSampledTensor};
use crate::scalar::{r, Real};
use crate::smooth;

/// Inputs of the construction. `lambda_q = a^(b^q)`, `delta_q = lambda_q^{-2 beta}`,
/// `l = lambda_{q+1}^{-alpha}`, `tau_{q+1}^{-1} = l^{-1/2} lambda_{q+1}^{(3-gamma2)/2} delta_{q+1}^{1/4}`,
/// `M0(t) = L^4 e^{4 L t}`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StageParams {
    pub a: u64,
    pub b: u32,
    pub beta: f64,
    pub alpha: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub big_l: f64,
    pub c0: f64,
    pub cbar: f64,
    /// Horizon of the run.
    pub t_end: f64,
    /// Time samples per cutoff window: `dt_q = tau_{q+1} / dt_factor`.
    pub dt_factor: u32,
    /// Flow substep: `ds <= tau_{q+1} / substep_factor` (also CFL-capped).
    pub substep_factor: u32,
}

impl Default for StageParams {
    fn default() -> Self {
        StageParams {
            a: 5,
            b: 2,
            beta: 0.52,
            alpha: 1.2,
            gamma1: 1.0,
            gamma2: 1.0,
            big_l: 2.0,
            c0: 1.0,
            cbar: 16.0,
            t_end: 0.03,
            dt_factor: 16,
            substep_factor: 32,
        }
    }
}

impl StageParams {
    pub fn validate(&self) -> Result<()> {
        if self.a % 5 != 0 || self.a == 0 {
            return Err(CoreError::Config(format!("a must be a positive multiple of 5, got {}", self.a)));
        }
        if self.b == 0 {
            return Err(CoreError::Config("b must be positive".into()));
        }
        if self.big_l <= 1.0 {
            return Err(CoreError::Config("L must exceed 1".into()));
        }
        if self.t_end <= 0.0 {
            return Err(CoreError::Config("T must be positive".into()));
        }
        Ok(())
    }

    /// `M0(t) = L^4 e^{4 L t}`.
    pub fn m0<T: Real>(&self, t: T) -> T {
        let l = r::<T>(self.big_l);
        l.powi(4) * (r::<T>(4.0) * l * t).exp()
    }
}

/// Evaluated stage quantities; direct values may overflow, logs never do.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StageScales {
    pub q: u32,
    pub lambda_q: f64,
    pub delta_q: f64,
    /// `l = lambda_{q+1}^{-alpha}` (the mollification length of the q -> q+1 step).
    pub ell: f64,
    /// `tau_{q+1}`.
    pub tau: f64,
    pub ln_lambda_q: f64,
    pub ln_delta_q: f64,
    pub ln_ell: f64,
    pub ln_tau: f64,
    /// Set when any direct value overflowed and only logs are meaningful.
    pub overflowed: bool,
}

/// Direct and logarithmic evaluation of the stage-q scales.
pub fn eval_params(p: &StageParams, q: u32) -> StageScales {
    let ln_a = (p.a as f64).ln();
    let bq = (p.b as f64).powi(q as i32);
    let bq1 = (p.b as f64).powi(q as i32 + 1);
    let ln_lambda_q = bq * ln_a;
    let ln_lambda_q1 = bq1 * ln_a;
    let ln_delta_q = -2.0 * p.beta * ln_lambda_q;
    let ln_delta_q1 = -2.0 * p.beta * ln_lambda_q1;
    let ln_ell = -p.alpha * ln_lambda_q1;
    // tau^{-1} = l^{-1/2} lambda_{q+1}^{(3-gamma2)/2} delta_{q+1}^{1/4}
    let ln_tau = -(-0.5 * ln_ell + 0.5 * (3.0 - p.gamma2) * ln_lambda_q1 + 0.25 * ln_delta_q1);
    let lambda_q = ln_lambda_q.exp();
    let overflowed = !lambda_q.is_finite();
    StageScales {
        q,
        lambda_q,
        delta_q: ln_delta_q.exp(),
        ell: ln_ell.exp(),
        tau: ln_tau.exp(),
        ln_lambda_q,
        ln_delta_q,
        ln_ell,
        ln_tau,
        overflowed,
    }
}

/// The cutoffs `chi_j(t) = chi(tau^{-1} t - j)`, `j = 0..ceil(T/tau)`,
/// squaring to one on `[0, T]`.
#[derive(Debug, Clone)]
pub struct CutoffFamily {
    pub tau: f64,
    pub j_max: u32,
}

impl CutoffFamily {
    pub fn build(p: &StageParams, q: u32) -> Result<CutoffFamily> {
        let sc = eval_params(p, q);
        if !sc.tau.is_finite() || sc.tau <= 0.0 {
            return Err(CoreError::Config("tau not representable".into()));
        }
        if p.t_end < sc.tau {
            return Err(CoreError::Config(format!(
                "horizon T={} holds less than one cutoff window tau={:.6e}",
                p.t_end, sc.tau
            )));
        }
        Ok(CutoffFamily { tau: sc.tau, j_max: (p.t_end / sc.tau).ceil() as u32 })
    }

    pub fn chi(&self, j: u32, t: f64) -> f64 {
        smooth::chi_profile(t / self.tau - j as f64)
    }

    pub fn chi_deriv(&self, j: u32, t: f64) -> f64 {
        smooth::chi_profile_deriv(t / self.tau - j as f64) / self.tau
    }

    /// Anchor time `tau * j` of window `j`.
    pub fn anchor(&self, j: u32) -> f64 {
        self.tau * j as f64
    }

    /// Indices with `chi_j(t) != 0` (at most two).
    pub fn active(&self, t: f64) -> Vec<u32> {
        (0..=self.j_max)
            .filter(|&j| (t / self.tau - j as f64).abs() < 0.75)
            .collect()
    }

    pub fn sum_of_squares(&self, t: f64) -> f64 {
        (0..=self.j_max).map(|j| self.chi(j, t).powi(2)).sum()
    }
}

/// Discrete temporal mollifier: the bump affinely mapped onto `(tau, 2 tau]`,
/// restricted to time-grid nodes and renormalized to unit mass. Output at
/// time `t` depends only on inputs at `t - s` with `s >= tau + dt`.
#[derive(Debug, Clone)]
pub struct TemporalKernel<T: Real> {
    /// Offsets in whole grid steps, all `>= dt_factor + 1`.
    pub offsets: Vec<usize>,
    pub weights: Vec<T>,
}

impl<T: Real> TemporalKernel<T> {
    pub fn build(tau: T, dt: T) -> Result<TemporalKernel<T>> {
        if dt > tau / r(8.0) * (T::one() + r(1e-9)) {
            return Err(CoreError::Resolution(format!(
                "time grid dt={:e} coarser than tau/8={:e}",
                dt.to_f64_lossy(),
                (tau / r::<T>(8.0)).to_f64_lossy()
            )));
        }
        let mut offsets = Vec::new();
        let mut weights = Vec::new();
        let mut total = T::zero();
        let mut m = 1usize;
        loop {
            let s = dt * T::from_usize(m).unwrap();
            if s > tau * r(2.0) + dt * r(0.5) {
                break;
            }
            if s > tau {
                // bump profile on (tau, 2 tau], u in (0, 1]
                let u = ((s - tau) / tau).to_f64_lossy();
                let w = r::<T>(smooth::edge_bump(u));
                if w > T::zero() {
                    offsets.push(m);
                    weights.push(w);
                    total += w;
                }
            }
            m += 1;
        }
        if offsets.is_empty() || total <= T::zero() {
            return Err(CoreError::Resolution("temporal kernel has no interior nodes".into()));
        }
        for w in &mut weights {
            *w = *w / total;
        }
        Ok(TemporalKernel { offsets, weights })
    }
}

/// Transform of the spatial mollifier: radial, depends on `s = |k| l` only.
/// `F(s) = 2 pi int_0^1 g(r) J_0(s r) r dr` with the unit-mass bump `g`.
pub struct SpatialKernelHat {
    table: Vec<f64>,
    ds: f64,
}

impl SpatialKernelHat {
    /// Tabulate on `[0, s_max]`; evaluation interpolates cubically.
    pub fn build(s_max: f64) -> SpatialKernelHat {
        const NS: usize = 2048;
        const NR: usize = 64;
        const NTH: usize = 64;
        // Composite Simpson in r, midpoint trapezoid in theta; the integrand
        // is smooth and periodic in theta, so both converge fast.
        let mut mass = 0.0;
        let hr = 1.0 / NR as f64;
        let g = smooth::radial_bump; // profile exp(-1/(1-r^2)) on the unit disc
        for i in 0..NR {
            let a = i as f64 * hr;
            let f = |rr: f64| g(rr) * rr;
            mass += hr / 6.0 * (f(a) + 4.0 * f(a + hr / 2.0) + f(a + hr));
        }
        mass *= 2.0 * std::f64::consts::PI;
        let ds = s_max.max(1.0) / (NS - 1) as f64;
        let table: Vec<f64> = (0..NS)
            .map(|is| {
                let s = is as f64 * ds;
                let mut acc = 0.0;
                for i in 0..NR {
                    let a = i as f64 * hr;
                    let f = |rr: f64| {
                        // J_0(s r) by trapezoid in theta (spectrally accurate)
                        let mut j0 = 0.0;
                        for t in 0..NTH {
                            let th = std::f64::consts::PI * (t as f64 + 0.5) / NTH as f64;
                            j0 += (s * rr * th.sin()).cos();
                        }
                        j0 /= NTH as f64;
                        g(rr) * rr * j0
                    };
                    acc += hr / 6.0 * (f(a) + 4.0 * f(a + hr / 2.0) + f(a + hr));
                }
                2.0 * std::f64::consts::PI * acc / mass
            })
            .collect();
        SpatialKernelHat { table, ds }
    }

    pub fn eval(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 1.0;
        }
        let x = s / self.ds;
        let i = (x as usize).min(self.table.len() - 2);
        let f = x - i as f64;
        // 4-point Lagrange where possible
        if i >= 1 && i + 2 < self.table.len() {
            let (y0, y1, y2, y3) =
                (self.table[i - 1], self.table[i], self.table[i + 1], self.table[i + 2]);
            let a = f;
            return y0 * (-a * (a - 1.0) * (a - 2.0) / 6.0)
                + y1 * ((a + 1.0) * (a - 1.0) * (a - 2.0) / 2.0)
                + y2 * (-(a + 1.0) * a * (a - 2.0) / 2.0)
                + y3 * ((a + 1.0) * a * (a - 1.0) / 6.0);
        }
        self.table[i] * (1.0 - f) + self.table[i + 1] * f
    }
}

/// Spatial mollification at length `l`: multiply coefficients by the kernel
/// transform `F(|k| l)`.
pub fn mollify_space<T: Real>(f: &SpectralField<T>, hat: &SpatialKernelHat, ell: T) -> SpectralField<T> {
    let mut out = f.clone();
    for c in &mut out.comps {
        for (flat, k1, k2) in f.grid.iter_k() {
            let s = (T::from_i64(k1 * k1 + k2 * k2).unwrap().sqrt() * ell).to_f64_lossy();
            let v = r::<T>(hat.eval(s));
            c[flat] = c[flat] * v;
        }
    }
    out
}

/// Space-time mollification of a time-sampled field on its own grid.
/// Inputs earlier than the grid start use the value-at-start extension.
pub fn mollify_spacetime<T: Real>(
    f: &TimeSampledField<T>,
    hat: &SpatialKernelHat,
    ell: T,
    kernel: &TemporalKernel<T>,
    out_range: (usize, usize),
) -> Result<TimeSampledField<T>> {
    use rayon::prelude::*;
    let (start, end) = out_range;
    let tg = crate::field::TimeGrid { t0: f.tg.time(start), dt: f.tg.dt, len: end - start };
    let samples: Vec<SpectralField<T>> = (start..end)
        .into_par_iter()
        .map(|i| {
            let mut acc: Option<SpectralField<T>> = None;
            for (off, w) in kernel.offsets.iter().zip(kernel.weights.iter()) {
                let src = &f.samples[i.saturating_sub(*off)];
                acc = Some(match acc {
                    None => {
                        let mut s = src.clone();
                        s.scale(*w);
                        s
                    }
                    Some(a) => a.axpy(*w, src).unwrap(),
                });
            }
            mollify_space(&acc.unwrap(), hat, ell)
        })
        .collect();
    Ok(TimeSampledField { tg, samples })
}

/// Tensor variant (entrywise).
pub fn mollify_spacetime_tensor<T: Real>(
    f: &TimeSampledTensor<T>,
    hat: &SpatialKernelHat,
    ell: T,
    kernel: &TemporalKernel<T>,
    out_range: (usize, usize),
) -> Result<TimeSampledTensor<T>> {
    use rayon::prelude::*;
    let (start, end) = out_range;
    let tg = crate::field::TimeGrid { t0: f.tg.time(start), dt: f.tg.dt, len: end - start };
    let samples: Vec<_> = (start..end)
        .into_par_iter()
        .map(|i| {
            let mut out = crate::field::SymTensorField::zeros(f.samples[0].grid);
            for (off, w) in kernel.offsets.iter().zip(kernel.weights.iter()) {
                let src = &f.samples[i.saturating_sub(*off)];
                out = out.axpy(*w, src).unwrap();
            }
            // scale back: axpy accumulated w * src onto zeros, already correct
            let wrap = SpectralField { grid: out.grid, comps: vec![out.e11, out.e12, out.e22], mean_zero: false };
            let sm = mollify_space(&wrap, hat, ell);
            let mut comps = sm.comps.into_iter();
            crate::field::SymTensorField {
                grid: out.grid,
                e11: comps.next().unwrap(),
                e12: comps.next().unwrap(),
                e22: comps.next().unwrap(),
                trace_free: f.samples[0].trace_free,
            }
        })
        .collect();
    Ok(TimeSampledTensor { tg, samples })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direct_values_match_formulas() {
        let p = StageParams { a: 5, b: 2, ..Default::default() };
        let s2 = eval_params(&p, 2);
        assert_eq!(s2.lambda_q.round() as u64, 625);
        assert!((s2.delta_q - 625f64.powf(-2.0 * p.beta)).abs() < 1e-12);
        assert!((s2.ln_lambda_q - 4.0 * (5f64).ln()).abs() < 1e-12);
        // M0(0) = L^4 = 16 for L = 2
        assert!((p.m0(0.0f64) - 16.0).abs() < 1e-12);
    }

    #[test]
    fn tau_formula() {
        let p = StageParams::default();
        let s0 = eval_params(&p, 0);
        let lam1 = 25.0f64;
        let ell = lam1.powf(-p.alpha);
        let del1 = lam1.powf(-2.0 * p.beta);
        let tau_inv = ell.powf(-0.5) * lam1.powf((3.0 - p.gamma2) / 2.0) * del1.powf(0.25);
        assert!((s0.tau - 1.0 / tau_inv).abs() / s0.tau < 1e-12);
    }

    #[test]
    fn log_only_regime_flagged() {
        let p = StageParams { a: 10, b: 10, ..Default::default() };
        let s = eval_params(&p, 9);
        assert!(s.overflowed);
        assert!(s.ln_lambda_q.is_finite());
    }

    #[test]
    fn partition_of_unity() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let p = StageParams::default();
        let fam = CutoffFamily::build(&p, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            let t = rng.gen::<f64>() * p.t_end;
            assert!((fam.sum_of_squares(t) - 1.0).abs() < 1e-12, "t={t}");
            assert!(fam.active(t).len() <= 2);
        }
        // window centers: the active cutoff is exactly 1
        for j in 0..=fam.j_max {
            let t = fam.anchor(j);
            if t <= p.t_end {
                assert!((fam.chi(j, t) - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn too_short_horizon_rejected() {
        let p = StageParams { t_end: 1e-6, ..Default::default() };
        assert!(CutoffFamily::build(&p, 0).is_err());
    }

    #[test]
    fn temporal_kernel_mass_and_support() {
        let tau = 0.0134f64;
        let dt = tau / 16.0;
        let k = TemporalKernel::build(tau, dt).unwrap();
        let total: f64 = k.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        for off in &k.offsets {
            let s = dt * *off as f64;
            assert!(s > tau && s <= 2.0 * tau + 1e-12);
        }
        assert!(TemporalKernel::build(tau, tau / 4.0).is_err());
    }

    #[test]
    fn spatial_kernel_hat_near_origin() {
        let hat = SpatialKernelHat::build(8.0);
        assert!((hat.eval(0.0) - 1.0).abs() < 1e-14);
        // small-s expansion: F(s) = 1 - c s^2 + O(s^4), so F < 1 and close
        let v = hat.eval(0.1);
        assert!(v < 1.0 && v > 0.99);
        // decays for larger s
        assert!(hat.eval(6.0) < hat.eval(1.0));
    }
}
