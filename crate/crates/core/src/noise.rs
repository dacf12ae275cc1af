//! Ornstein-Uhlenbeck forcing: the stochastic convolution solving
//! `dz + [grad p1 + Lambda^{gamma1} z] dt = dB`, `z(0) = 0`, sampled with
//! exact per-mode transitions on the divergence-free Fourier basis.

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CoreError, Result};
use crate::field::{SpectralField, TimeGrid, TimeSampledField};
use crate::grid::Grid;
use crate::norms;
use crate::scalar::{r, Real};

/// Diagonal noise spectrum on the divergence-free basis: mode `k` carries the
/// one-dimensional direction `k^perp/|k|` with amplitude `g(k) = c |k|^{-p}`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct NoiseSpectrum {
    pub c: f64,
    /// Spectral decay exponent; must exceed `(10 - gamma1 + 4 sigma)/2`.
    pub p: f64,
    pub gamma1: f64,
    pub sigma: f64,
    /// Modes `0 < |k| <= kmax` carry noise.
    pub kmax: u32,
}

impl NoiseSpectrum {
    /// Default decay: one unit above the convergence threshold.
    pub fn default_for(gamma1: f64, sigma: f64, c: f64, kmax: u32) -> NoiseSpectrum {
        NoiseSpectrum { c, p: (12.0 - gamma1 + 4.0 * sigma) / 2.0, gamma1, sigma, kmax }
    }

    pub fn g(&self, k1: i64, k2: i64) -> f64 {
        let ksq = (k1 * k1 + k2 * k2) as f64;
        if ksq == 0.0 {
            0.0
        } else {
            self.c * ksq.powf(-self.p / 2.0)
        }
    }

    /// Threshold `p > (10 - gamma1 + 4 sigma)/2` making the trace finite.
    pub fn threshold(&self) -> f64 {
        (10.0 - self.gamma1 + 4.0 * self.sigma) / 2.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.p <= self.threshold() {
            return Err(CoreError::Config(format!(
                "spectrum decay p={} fails the trace condition threshold {}",
                self.p,
                self.threshold()
            )));
        }
        Ok(())
    }

    /// Partial trace `sum_{0<|k|<=kmax} |k|^{2s} g(k)^2` over the carried modes.
    pub fn partial_trace(&self, s: f64) -> f64 {
        let mut acc = 0.0;
        let km = self.kmax as i64;
        for k1 in -km..=km {
            for k2 in -km..=km {
                let ksq = k1 * k1 + k2 * k2;
                if ksq == 0 || ksq > km * km {
                    continue;
                }
                acc += (ksq as f64).powf(s) * self.g(k1, k2).powi(2);
            }
        }
        acc
    }

    /// The regularity trace of the hypothesis: `s = 4 - gamma1/2 + 2 sigma`.
    pub fn hypothesis_trace(&self) -> f64 {
        self.partial_trace(4.0 - self.gamma1 / 2.0 + 2.0 * self.sigma)
    }

    /// Stationary-transition variance of the complex mode amplitude:
    /// `g^2 (1 - e^{-2 |k|^{gamma1} dt}) / (2 |k|^{gamma1})`.
    pub fn transition_variance(&self, k1: i64, k2: i64, dt: f64) -> f64 {
        let lam = ((k1 * k1 + k2 * k2) as f64).powf(self.gamma1 / 2.0);
        self.g(k1, k2).powi(2) * (1.0 - (-2.0 * lam * dt).exp()) / (2.0 * lam)
    }
}

/// Half-lattice representatives `0 < |k| <= kmax` (one of each +/- pair).
pub fn half_lattice(kmax: u32) -> Vec<[i64; 2]> {
    let km = kmax as i64;
    let mut out = Vec::new();
    for k1 in 0..=km {
        for k2 in -km..=km {
            if k1 == 0 && k2 <= 0 {
                continue;
            }
            if k1 * k1 + k2 * k2 > km * km {
                continue;
            }
            out.push([k1, k2]);
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct NoisePath<T: Real> {
    pub z: TimeSampledField<T>,
    pub seed: u64,
    pub spectrum: NoiseSpectrum,
}

/// Counter-style generator keyed by `(seed, path, mode)`: statistics are
/// independent of thread count and iteration order.
pub fn mode_rng(seed: u64, path: u64, k1: i64, k2: i64) -> ChaCha8Rng {
    // splitmix-style mixing of the key into a 64-bit stream seed
    let mut h = seed
        ^ path.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ (k1 as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9)
        ^ (k2 as u64).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^= h >> 31;
    ChaCha8Rng::seed_from_u64(h)
}

fn complex_normal<T: Real>(rng: &mut ChaCha8Rng, variance: T) -> Complex<T>
where
    StandardNormal: Distribution<T>,
{
    let s = (variance * T::of(0.5)).sqrt();
    let re: T = StandardNormal.sample(rng);
    let im: T = StandardNormal.sample(rng);
    Complex::new(re * s, im * s)
}

/// Evolve the per-mode complex amplitudes with the exact OU transition and
/// assemble real divergence-free snapshots. `path_id` distinguishes ensemble
/// members under one seed.
pub fn sample_ou_path<T: Real>(
    spec: &NoiseSpectrum,
    grid: Grid,
    t_end: T,
    dt: T,
    seed: u64,
    path_id: u64,
) -> Result<NoisePath<T>>
where
    StandardNormal: Distribution<T>,
{
    spec.validate()?;
    if dt <= T::zero() || t_end < dt {
        return Err(CoreError::Config("need dt > 0 and T >= dt".into()));
    }
    if spec.kmax as i64 >= grid.nyquist() {
        return Err(CoreError::Resolution(format!(
            "kmax {} does not fit grid Nyquist {}",
            spec.kmax,
            grid.nyquist()
        )));
    }
    let steps = (t_end / dt).round().to_usize().unwrap();
    let tg = TimeGrid { t0: T::zero(), dt, len: steps + 1 };
    let modes = half_lattice(spec.kmax);

    // per-mode amplitude trajectories, parallel over modes
    let trajs: Vec<Vec<Complex<T>>> = modes
        .par_iter()
        .map(|&[k1, k2]| {
            let mut rng = mode_rng(seed, path_id, k1, k2);
            let lam = r::<T>(((k1 * k1 + k2 * k2) as f64).powf(spec.gamma1 / 2.0));
            let decay = (-lam * dt).exp();
            let var = r::<T>(spec.transition_variance(k1, k2, dt.to_f64_lossy()));
            let mut a = Complex::new(T::zero(), T::zero());
            let mut path = Vec::with_capacity(steps + 1);
            path.push(a);
            for _ in 0..steps {
                let eta = complex_normal(&mut rng, var);
                a = a * decay + eta;
                path.push(a);
            }
            path
        })
        .collect();

    let samples: Vec<SpectralField<T>> = (0..=steps)
        .into_par_iter()
        .map(|si| {
            let mut f = SpectralField::vector(grid);
            for (mi, &[k1, k2]) in modes.iter().enumerate() {
                let a = trajs[mi][si];
                if a.norm_sqr() == T::zero() {
                    continue;
                }
                let nrm = r::<T>(((k1 * k1 + k2 * k2) as f64).sqrt());
                let dir = [
                    -T::from_i64(k2).unwrap() / nrm,
                    T::from_i64(k1).unwrap() / nrm,
                ];
                let idx = grid.coeff_index(k1, k2);
                let jdx = grid.coeff_index(-k1, -k2);
                for c in 0..2 {
                    let v = a * dir[c];
                    f.comps[c][idx] = v;
                    f.comps[c][jdx] = v.conj();
                }
            }
            f.mean_zero = true;
            f
        })
        .collect();

    Ok(NoisePath { z: TimeSampledField::new(tg, samples), seed, spectrum: *spec })
}

/// Littlewood-Paley truncation `z_q`: keep modes strictly inside
/// `B(0, lambda_q/4)`, decided exactly in integers (`16 |k|^2 < lambda_q^2`).
pub fn truncate_z_q<T: Real>(f: &SpectralField<T>, lambda_q: u64) -> SpectralField<T> {
    let mut out = f.clone();
    let lam_sq = (lambda_q as i64).pow(2);
    for c in &mut out.comps {
        for (flat, k1, k2) in f.grid.iter_k() {
            if 16 * (k1 * k1 + k2 * k2) >= lam_sq {
                c[flat] = Complex::new(T::zero(), T::zero());
            }
        }
    }
    out
}

pub fn truncate_path<T: Real>(path: &TimeSampledField<T>, lambda_q: u64) -> TimeSampledField<T> {
    path.map(|s| truncate_z_q(s, lambda_q))
}

/// Regularity diagnostics of a sampled path: the two norms of the moment
/// bound and the low-order sup-norms of the a.s. window.
#[derive(Debug, Clone, Serialize)]
pub struct RegularityReport {
    /// `sup_t ||z(t)||_{H^{4 + sigma/2}}`.
    pub sup_h_high: f64,
    /// sampled time-Hoelder seminorm of order `1/2 - 2 delta` in `H^{4 - gamma1/2 + sigma/2}`.
    pub time_holder: f64,
    /// `sup_t ||z(t)||_{W^{k,inf}}` for `k = 0..=3`.
    pub wk_sup: [f64; 4],
}

pub fn regularity_diagnostics<T: Real>(
    path: &NoisePath<T>,
    delta: f64,
) -> Result<RegularityReport> {
    if !(0.0 < delta && delta < 0.25) {
        return Err(CoreError::Config("delta must lie in (0, 1/4)".into()));
    }
    let spec = path.spectrum;
    let s_high = r::<T>(4.0 + spec.sigma / 2.0);
    let s_mid = 4.0 - spec.gamma1 / 2.0 + spec.sigma / 2.0;
    let eta = r::<T>(0.5 - 2.0 * delta);
    let (sup_high, _) = norms::time_composite(&path.z, eta, |f| norms::hs_norm(f, s_high).unwrap());
    let (_, hold) = norms::time_composite(&path.z, eta, |f| norms::hs_norm(f, r(s_mid)).unwrap());
    let mut wk = [0.0f64; 4];
    for (k, slot) in wk.iter_mut().enumerate() {
        let v = path
            .z
            .samples
            .par_iter()
            .map(|f| norms::wk_inf_seminorm(f, k as u32).to_f64_lossy())
            .reduce(|| 0.0, f64::max);
        *slot = v;
    }
    Ok(RegularityReport {
        sup_h_high: sup_high.to_f64_lossy(),
        time_holder: hold.to_f64_lossy(),
        wk_sup: wk,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_starts_at_zero_and_is_divergence_free() {
        let spec = NoiseSpectrum::default_for(1.0, 0.5, 1.0, 4);
        let g = Grid::new(16).unwrap();
        let p = sample_ou_path::<f64>(&spec, g, 0.1, 0.01, 9, 0).unwrap();
        let z0 = &p.z.samples[0];
        for c in &z0.comps {
            assert!(c.iter().all(|v| v.norm() == 0.0));
        }
        for s in &p.z.samples {
            let d = crate::ops::divergence(s).unwrap();
            let sup = d.comps[0].iter().fold(0.0f64, |a, v| a.max(v.norm()));
            let scale = s.comps[0].iter().fold(0.0f64, |a, v| a.max(v.norm())).max(1e-300);
            assert!(sup / scale < 1e-13);
            assert!(s.hermitian_defect() < 1e-12);
        }
    }

    #[test]
    fn seed_determinism() {
        let spec = NoiseSpectrum::default_for(1.0, 0.5, 1.0, 4);
        let g = Grid::new(16).unwrap();
        let a = sample_ou_path::<f64>(&spec, g, 0.05, 0.005, 42, 3).unwrap();
        let b = sample_ou_path::<f64>(&spec, g, 0.05, 0.005, 42, 3).unwrap();
        for (x, y) in a.z.samples.iter().zip(b.z.samples.iter()) {
            for c in 0..2 {
                assert_eq!(x.comps[c], y.comps[c]);
            }
        }
    }

    #[test]
    fn truncation_support_and_idempotence() {
        let spec = NoiseSpectrum::default_for(1.0, 0.5, 1.0, 6);
        let g = Grid::new(32).unwrap();
        let p = sample_ou_path::<f64>(&spec, g, 0.02, 0.01, 1, 0).unwrap();
        let s = &p.z.samples[2];
        // lambda_q = 2: no modes survive strictly inside B(0, 1/2)
        let t2 = truncate_z_q(s, 2);
        assert!(t2.comps.iter().all(|c| c.iter().all(|v| v.norm() == 0.0)));
        // idempotence
        let t8 = truncate_z_q(s, 8);
        let t8b = truncate_z_q(&t8, 8);
        for c in 0..2 {
            assert_eq!(t8.comps[c], t8b.comps[c]);
        }
        // symbol oracle: modes with 16|k|^2 < 64 pass through, others vanish
        for (flat, k1, k2) in g.iter_k() {
            for c in 0..2 {
                let expect = if 16 * (k1 * k1 + k2 * k2) < 64 {
                    s.comps[c][flat]
                } else {
                    Complex::new(0.0, 0.0)
                };
                assert_eq!(t8.comps[c][flat], expect);
            }
        }
    }

    #[test]
    fn exact_transition_is_dt_independent_in_law() {
        // One mode, same horizon under dt and dt/4: variances agree within MC error.
        let spec = NoiseSpectrum { c: 1.0, p: 0.0, gamma1: 1.0, sigma: 0.5, kmax: 1 };
        let t = 0.7f64;
        let paths = 4000;
        let var_at = |dt: f64, salt: u64| -> f64 {
            let mut acc = 0.0;
            let steps = (t / dt).round() as usize;
            for p in 0..paths {
                let mut rng = mode_rng(123 + salt, p, 0, 1);
                let lam: f64 = 1.0;
                let decay = (-lam * dt).exp();
                let var = spec.transition_variance(0, 1, dt);
                let mut a = Complex::new(0.0, 0.0);
                for _ in 0..steps {
                    let eta = complex_normal::<f64>(&mut rng, var);
                    a = a * decay + eta;
                }
                acc += a.norm_sqr();
            }
            acc / paths as f64
        };
        let exact = (1.0 - (-2.0 * t).exp()) / 2.0;
        let v1 = var_at(t / 8.0, 0);
        let v2 = var_at(t / 32.0, 1);
        let se = exact * (2.0 / paths as f64).sqrt() * 3.0;
        assert!((v1 - exact).abs() < se, "{v1} vs {exact}");
        assert!((v2 - exact).abs() < se, "{v2} vs {exact}");
    }

    #[test]
    fn spectrum_threshold_enforced() {
        let bad = NoiseSpectrum { c: 1.0, p: 4.0, gamma1: 1.0, sigma: 0.5, kmax: 4 };
        assert!(bad.validate().is_err());
        let good = NoiseSpectrum::default_for(1.0, 0.5, 1.0, 4);
        assert!(good.validate().is_ok());
        assert!(good.hypothesis_trace().is_finite());
    }
}
