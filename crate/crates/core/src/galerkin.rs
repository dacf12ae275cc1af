//! Spectral Galerkin integrator for the stochastic momentum equation and the
//! Monte-Carlo check of the energy inequality
//! `E ||v(t)||^2_{H^{1-gamma2/2}} <= ||v_in||^2 + t Tr_N`.
//!
//! Strang-ordered step: exact half-steps of the `Lambda^{gamma1}` semigroup
//! around an explicit RK4 substep for the projected nonlinearity, with the
//! additive noise injected through the exact one-step OU variance. The
//! truncated nonlinearity is orthogonal to `Lambda^{2-gamma2} v`, which is
//! what makes the inequality exact for the truncated system.

use num_complex::Complex;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CoreError, Result};
use crate::field::SpectralField;
use crate::grid::Grid;
use crate::noise::{half_lattice, mode_rng, NoiseSpectrum};
use crate::ops;
use crate::scalar::{r, Real};

#[derive(Debug, Clone)]
pub struct GalerkinConfig<T: Real> {
    pub grid: Grid,
    /// Mode cutoff; `n_g <= grid Nyquist / 1.5` keeps quadratic products exact.
    pub n_g: u32,
    pub gamma1: f64,
    pub gamma2: f64,
    pub spectrum: NoiseSpectrum,
    pub dt: T,
    pub t_end: T,
    pub paths: usize,
    pub seed: u64,
    pub v_in: SpectralField<T>,
    pub noise_on: bool,
    pub dissipation_on: bool,
    pub nonlinearity_on: bool,
    pub checkpoints: Vec<T>,
}

impl<T: Real> GalerkinConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let nyq = self.grid.nyquist() as f64;
        if self.n_g as f64 > nyq / 1.5 {
            return Err(CoreError::Config(format!(
                "n_g = {} exceeds grid Nyquist/1.5 = {}",
                self.n_g,
                nyq / 1.5
            )));
        }
        if self.spectrum.kmax > self.n_g {
            return Err(CoreError::Config("noise modes beyond the Galerkin cutoff".into()));
        }
        let d = ops::divergence(&self.v_in)?;
        let sup = d.comps[0].iter().fold(T::zero(), |a, v| a.max(v.norm()));
        if sup > r(1e-10) {
            return Err(CoreError::Config("initial data is not divergence-free".into()));
        }
        Ok(())
    }
}

/// `P_N P [ (Lambda^{2-gamma2} v . grad) v - (grad v)^T Lambda^{2-gamma2} v ]`,
/// evaluated through the pointwise-equal vorticity form `u^perp (grad^perp . v)`.
pub fn galerkin_nonlinearity<T: Real>(
    v: &SpectralField<T>,
    gamma2: f64,
    n_g: u32,
) -> Result<SpectralField<T>> {
    let u = ops::fractional_laplacian(v, r(2.0 - gamma2))?;
    let nl = ops::perp_vorticity_form(&u, v, v.grid, Some(r(n_g as f64)))?;
    let nl = ops::band_project(&nl, ops::BandKind::Ball { radius: r(n_g as f64) });
    let mut nl = ops::leray_project(&nl)?;
    nl.subtract_mean();
    // flip sign: the equation moves the nonlinearity to the right-hand side
    nl.scale(-T::one());
    Ok(nl)
}

/// The truncated divergence-free space has one complex amplitude per
/// half-lattice mode: `v^(k) = a_k k^perp/|k|`. The engine integrates on
/// that compact representation with a fixed dealiased product grid.
pub struct GalerkinEngine<T: Real> {
    pub modes: Vec<[i64; 2]>,
    knorm: Vec<T>,
    /// scatter indices on the product grid for +k and -k
    idx: Vec<(usize, usize)>,
    /// dissipation rate |k|^{gamma1} and the energy weight |k|^{2-gamma2}
    lam: Vec<T>,
    pub energy_w: Vec<T>,
    /// Fourier multiplier |k|^{2-gamma2} for u = Lambda^{2-gamma2} v
    u_mul: Vec<T>,
    m: usize,
}

impl<T: Real> GalerkinEngine<T> {
    pub fn new(n_g: u32, gamma1: f64, gamma2: f64) -> GalerkinEngine<T> {
        let m = crate::fft::fft_friendly_size(3 * n_g as usize + 1);
        let modes = half_lattice(n_g);
        let mut knorm = Vec::new();
        let mut idx = Vec::new();
        let mut lam = Vec::new();
        let mut energy_w = Vec::new();
        let mut u_mul = Vec::new();
        let pos = |k: i64| ((k + m as i64) % m as i64) as usize;
        for &[k1, k2] in &modes {
            let ksq = (k1 * k1 + k2 * k2) as f64;
            knorm.push(r::<T>(ksq.sqrt()));
            idx.push((pos(k1) * m + pos(k2), pos(-k1) * m + pos(-k2)));
            lam.push(r::<T>(ksq.powf(gamma1 / 2.0)));
            energy_w.push(r::<T>(ksq.powf(1.0 - gamma2 / 2.0)));
            u_mul.push(r::<T>(ksq.powf((2.0 - gamma2) / 2.0)));
        }
        GalerkinEngine { modes, knorm, idx, lam, energy_w, u_mul, m }
    }

    /// Divergence-free projection of the nonlinearity, on amplitudes:
    /// `a_N(k) = -<(u^perp omega)^(k), k^perp>/|k|`.
    pub fn nonlinearity(&self, amps: &[Complex<T>], out: &mut [Complex<T>]) {
        let m = self.m;
        let zero = Complex::new(T::zero(), T::zero());
        let mut u1 = vec![zero; m * m];
        let mut u2 = vec![zero; m * m];
        let mut om = vec![zero; m * m];
        for (mi, &[k1, k2]) in self.modes.iter().enumerate() {
            let a = amps[mi];
            if a == zero {
                continue;
            }
            let (ip, ineg) = self.idx[mi];
            let nrm = self.knorm[mi];
            let dir = [
                -T::from_i64(k2).unwrap() / nrm,
                T::from_i64(k1).unwrap() / nrm,
            ];
            let uu = a * self.u_mul[mi];
            u1[ip] = uu * dir[0];
            u2[ip] = uu * dir[1];
            u1[ineg] = u1[ip].conj();
            u2[ineg] = u2[ip].conj();
            // omega^(k) = i |k| a_k
            let o = Complex::new(T::zero(), nrm) * a;
            om[ip] = o;
            om[ineg] = o.conj();
        }
        crate::fft::fft2d(&mut u1, m, true);
        crate::fft::fft2d(&mut u2, m, true);
        crate::fft::fft2d(&mut om, m, true);
        // N = u^perp omega = (-u2 w, u1 w), pointwise real
        for i in 0..m * m {
            let w = om[i].re;
            let (a, b) = (u1[i].re, u2[i].re);
            u1[i] = Complex::new(-b * w, T::zero());
            u2[i] = Complex::new(a * w, T::zero());
        }
        crate::fft::fft2d(&mut u1, m, false);
        crate::fft::fft2d(&mut u2, m, false);
        let norm = T::one() / T::from_usize(m * m).unwrap();
        for (mi, &[k1, k2]) in self.modes.iter().enumerate() {
            let (ip, _) = self.idx[mi];
            let nrm = self.knorm[mi];
            let perp = [
                -T::from_i64(k2).unwrap() / nrm,
                T::from_i64(k1).unwrap() / nrm,
            ];
            // project onto the divergence-free direction and flip sign
            out[mi] = -(u1[ip] * perp[0] + u2[ip] * perp[1]) * norm;
        }
    }

    pub fn rk4(&self, amps: &mut Vec<Complex<T>>, dt: T) {
        let n = amps.len();
        let zero = Complex::new(T::zero(), T::zero());
        let mut k1 = vec![zero; n];
        let mut k2 = vec![zero; n];
        let mut k3 = vec![zero; n];
        let mut k4 = vec![zero; n];
        let mut tmp = vec![zero; n];
        let half = T::of(0.5);
        self.nonlinearity(amps, &mut k1);
        for i in 0..n {
            tmp[i] = amps[i] + k1[i] * (dt * half);
        }
        self.nonlinearity(&tmp, &mut k2);
        for i in 0..n {
            tmp[i] = amps[i] + k2[i] * (dt * half);
        }
        self.nonlinearity(&tmp, &mut k3);
        for i in 0..n {
            tmp[i] = amps[i] + k3[i] * dt;
        }
        self.nonlinearity(&tmp, &mut k4);
        let sixth = dt / T::of(6.0);
        let two = T::of(2.0);
        for i in 0..n {
            amps[i] = amps[i] + (k1[i] + (k2[i] + k3[i]) * two + k4[i]) * sixth;
        }
    }

    pub fn dissipate(&self, amps: &mut [Complex<T>], dt_half: T) {
        for (mi, a) in amps.iter_mut().enumerate() {
            *a = *a * (-self.lam[mi] * dt_half).exp();
        }
    }

    pub fn energy_sq(&self, amps: &[Complex<T>], _gamma2: f64) -> T {
        // || v ||^2_{H^{1-g2/2}} = (2 pi)^6 sum_k |k|^{2-g2} |v^(k)|^2 over the
        // full lattice = (2 pi)^6 * 2 * sum over the half lattice
        let two_pi = T::PI() + T::PI();
        let mut acc = T::zero();
        for (mi, a) in amps.iter().enumerate() {
            acc += self.energy_w[mi] * a.norm_sqr();
        }
        two_pi.powi(6) * T::of(2.0) * acc
    }

    pub fn amplitudes_from_field(&self, v: &SpectralField<T>) -> Vec<Complex<T>> {
        let grid = v.grid;
        self.modes
            .iter()
            .enumerate()
            .map(|(mi, &[k1, k2])| {
                let flat = grid.coeff_index(k1, k2);
                let nrm = self.knorm[mi];
                let dir = [
                    -T::from_i64(k2).unwrap() / nrm,
                    T::from_i64(k1).unwrap() / nrm,
                ];
                v.comps[0][flat] * dir[0] + v.comps[1][flat] * dir[1]
            })
            .collect()
    }

    pub fn field_from_amplitudes(&self, amps: &[Complex<T>], grid: crate::grid::Grid) -> SpectralField<T> {
        let mut f = SpectralField::vector(grid);
        for (mi, &[k1, k2]) in self.modes.iter().enumerate() {
            let nrm = self.knorm[mi];
            let dir = [
                -T::from_i64(k2).unwrap() / nrm,
                T::from_i64(k1).unwrap() / nrm,
            ];
            let i = grid.coeff_index(k1, k2);
            let j = grid.coeff_index(-k1, -k2);
            for c in 0..2 {
                f.comps[c][i] = amps[mi] * dir[c];
                f.comps[c][j] = (amps[mi] * dir[c]).conj();
            }
        }
        f.mean_zero = true;
        f
    }

    /// One Strang step on amplitudes.
    pub fn step(
        &self,
        amps: &mut Vec<Complex<T>>,
        cfg: &GalerkinConfig<T>,
        path: u64,
        step: u64,
    ) where
        StandardNormal: Distribution<T>,
    {
        let half = cfg.dt * T::of(0.5);
        if cfg.dissipation_on {
            self.dissipate(amps, half);
        }
        if cfg.nonlinearity_on {
            self.rk4(amps, cfg.dt);
        }
        if cfg.dissipation_on {
            self.dissipate(amps, half);
        }
        if cfg.noise_on {
            for (mi, &[k1, k2]) in self.modes.iter().enumerate() {
                if (k1 * k1 + k2 * k2) as f64 > (cfg.spectrum.kmax as f64).powi(2) {
                    continue;
                }
                let mut rng = mode_rng(cfg.seed ^ 0x6a1e_7b2d, path ^ (step << 20), k1, k2);
                let var = r::<T>(cfg.spectrum.transition_variance(k1, k2, cfg.dt.to_f64_lossy()));
                if var > T::zero() {
                    let s = (var * T::of(0.5)).sqrt();
                    let re: T = StandardNormal.sample(&mut rng);
                    let im: T = StandardNormal.sample(&mut rng);
                    amps[mi] = amps[mi] + Complex::new(re * s, im * s);
                }
            }
        }
    }
}

/// One Strang step. Noise is injected with the exact transition variance so
/// the linear marginal is sampled without time-stepping bias.
pub fn step_galerkin<T: Real>(
    v: &SpectralField<T>,
    cfg: &GalerkinConfig<T>,
    path: u64,
    step: u64,
) -> Result<SpectralField<T>>
where
    StandardNormal: Distribution<T>,
{
    let engine = GalerkinEngine::new(cfg.n_g, cfg.gamma1, cfg.gamma2);
    let mut amps = engine.amplitudes_from_field(v);
    engine.step(&mut amps, cfg, path, step);
    Ok(engine.field_from_amplitudes(&amps, v.grid))
}

/// Energy in the invariant norm of the momentum form.
pub fn energy_norm_sq<T: Real>(v: &SpectralField<T>, gamma2: f64) -> T {
    crate::norms::hs_norm(v, r::<T>(1.0 - gamma2 / 2.0))
        .map(|x| x * x)
        .unwrap_or(T::zero())
}

/// Trace in the bound, truncated to the injected modes and expressed in the
/// same normalization as `energy_norm_sq`.
pub fn truncated_trace<T: Real>(cfg: &GalerkinConfig<T>) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    two_pi.powi(6) * cfg.spectrum.partial_trace(1.0 - cfg.gamma2 / 2.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyRow {
    pub t: f64,
    pub mean: f64,
    pub std_err: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyReport {
    pub rows: Vec<EnergyRow>,
    pub blown_paths: usize,
    pub paths: usize,
    /// Worst `mean - bound` over checkpoints (negative = inequality holds).
    pub worst_margin: f64,
}

/// Run the ensemble and tabulate mean energy against the Ito bound.
pub fn run_ensemble<T: Real>(cfg: &GalerkinConfig<T>) -> Result<EnergyReport>
where
    StandardNormal: Distribution<T>,
{
    cfg.validate()?;
    let steps = (cfg.t_end / cfg.dt).round().to_usize().unwrap();
    let check_idx: Vec<usize> = cfg
        .checkpoints
        .iter()
        .map(|t| (*t / cfg.dt).round().to_usize().unwrap().min(steps))
        .collect();
    let e0 = energy_norm_sq(&cfg.v_in, cfg.gamma2).to_f64_lossy();
    let blow_cap = r::<T>(1e6) * (energy_norm_sq(&cfg.v_in, cfg.gamma2) + T::one());
    let engine = GalerkinEngine::<T>::new(cfg.n_g, cfg.gamma1, cfg.gamma2);
    let amps0 = engine.amplitudes_from_field(&cfg.v_in);

    // per path: energies at checkpoints, or None when the path blew up
    let results: Vec<Option<Vec<f64>>> = (0..cfg.paths as u64)
        .into_par_iter()
        .map(|path| {
            let mut amps = amps0.clone();
            let mut out = Vec::with_capacity(check_idx.len());
            if check_idx.contains(&0) {
                out.push(engine.energy_sq(&amps, cfg.gamma2).to_f64_lossy());
            }
            for step in 1..=steps {
                engine.step(&mut amps, cfg, path, step as u64);
                let e = engine.energy_sq(&amps, cfg.gamma2);
                if !(e < blow_cap) {
                    return None;
                }
                for (ci, &si) in check_idx.iter().enumerate() {
                    if si == step {
                        debug_assert_eq!(out.len(), ci);
                        out.push(e.to_f64_lossy());
                    }
                }
            }
            Some(out)
        })
        .collect();

    let ok: Vec<&Vec<f64>> = results.iter().flatten().collect();
    let blown = cfg.paths - ok.len();
    if blown * 10 > cfg.paths {
        return Err(CoreError::Invariant(format!(
            "{blown}/{} Galerkin paths blew up",
            cfg.paths
        )));
    }
    let trace = truncated_trace(cfg);
    let m = ok.len().max(1) as f64;
    let mut rows = Vec::new();
    let mut worst: f64 = f64::NEG_INFINITY;
    for (ci, &si) in check_idx.iter().enumerate() {
        let t = si as f64 * cfg.dt.to_f64_lossy();
        let mean = ok.iter().map(|v| v[ci]).sum::<f64>() / m;
        let var = ok.iter().map(|v| (v[ci] - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
        let std_err = (var / m).sqrt();
        let bound = e0 + t * trace;
        worst = worst.max(mean - bound);
        rows.push(EnergyRow { t, mean, std_err, bound });
    }
    Ok(EnergyReport { rows, blown_paths: blown, paths: cfg.paths, worst_margin: worst })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms;

    fn base_cfg(n: usize, n_g: u32) -> GalerkinConfig<f64> {
        let grid = Grid::new(n).unwrap();
        let spectrum = NoiseSpectrum::default_for(1.0, 0.5, 1.0, 4);
        let mut v_in = SpectralField::<f64>::vector(grid);
        // modest divergence-free data: shear + a diagonal mode pair
        v_in.comps[0][grid.coeff_index(0, 1)] = Complex::new(0.0, -0.25);
        v_in.comps[0][grid.coeff_index(0, -1)] = Complex::new(0.0, 0.25);
        let k = [2i64, 1i64];
        let nrm = ((k[0] * k[0] + k[1] * k[1]) as f64).sqrt();
        let dir = [-k[1] as f64 / nrm, k[0] as f64 / nrm];
        let c = Complex::new(0.1, -0.05);
        for comp in 0..2 {
            v_in.comps[comp][grid.coeff_index(k[0], k[1])] = c * dir[comp];
            v_in.comps[comp][grid.coeff_index(-k[0], -k[1])] = (c * dir[comp]).conj();
        }
        GalerkinConfig {
            grid,
            n_g,
            gamma1: 1.0,
            gamma2: 1.0,
            spectrum,
            dt: 1e-2,
            t_end: 0.1,
            paths: 4,
            seed: 11,
            v_in,
            noise_on: true,
            dissipation_on: true,
            nonlinearity_on: true,
            checkpoints: vec![0.05, 0.1],
        }
    }

    #[test]
    fn zero_stays_zero_without_noise() {
        let mut cfg = base_cfg(64, 16);
        cfg.noise_on = false;
        cfg.v_in = SpectralField::vector(cfg.grid);
        let v = step_galerkin(&cfg.v_in, &cfg, 0, 1).unwrap();
        assert!(v.comps.iter().all(|c| c.iter().all(|x| x.norm() == 0.0)));
    }

    #[test]
    fn shear_is_steady_in_euler_limit() {
        // gamma2 = 2: u = v, and a unidirectional shear is a steady state
        let mut cfg = base_cfg(64, 16);
        cfg.gamma2 = 2.0;
        cfg.noise_on = false;
        cfg.dissipation_on = false;
        let mut v = SpectralField::<f64>::vector(cfg.grid);
        v.comps[0][cfg.grid.coeff_index(0, 1)] = Complex::new(0.0, -0.5);
        v.comps[0][cfg.grid.coeff_index(0, -1)] = Complex::new(0.0, 0.5);
        cfg.v_in = v.clone();
        let w = step_galerkin(&v, &cfg, 0, 1).unwrap();
        let d = w.sub(&v).unwrap();
        let sup = d.comps.iter().flat_map(|c| c.iter()).fold(0.0f64, |a, x| a.max(x.norm()));
        assert!(sup < 1e-13, "shear moved by {sup}");
    }

    #[test]
    fn nonlinearity_orthogonal_to_invariant_direction() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let cfg = base_cfg(64, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let mut v = SpectralField::<f64>::vector(cfg.grid);
            for _ in 0..10 {
                let k1 = rng.gen_range(-12i64..=12);
                let k2 = rng.gen_range(-12i64..=12);
                // random v must lie in the truncated (radial) Galerkin space
                if (k1 == 0 && k2 == 0) || k1 * k1 + k2 * k2 > (cfg.n_g as i64).pow(2) {
                    continue;
                }
                let nrm = ((k1 * k1 + k2 * k2) as f64).sqrt();
                let dir = [-k2 as f64 / nrm, k1 as f64 / nrm];
                let c = Complex::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
                for comp in 0..2 {
                    let idx = cfg.grid.coeff_index(k1, k2);
                    let jdx = cfg.grid.coeff_index(-k1, -k2);
                    v.comps[comp][idx] += c * dir[comp];
                    v.comps[comp][jdx] += (c * dir[comp]).conj();
                }
            }
            let nl = galerkin_nonlinearity(&v, cfg.gamma2, cfg.n_g).unwrap();
            let u = ops::fractional_laplacian(&v, 2.0 - cfg.gamma2).unwrap();
            // L^2 pairing via Parseval
            let mut acc = 0.0;
            for comp in 0..2 {
                for (flat, _, _) in cfg.grid.iter_k() {
                    let a = nl.comps[comp][flat];
                    let b = u.comps[comp][flat];
                    acc += a.re * b.re + a.im * b.im;
                }
            }
            let na = norms::l2_norm(&nl);
            let nb = norms::l2_norm(&u);
            let tol = 1e-10 * (na * nb).max(1e-30);
            assert!(
                (acc * (2.0 * std::f64::consts::PI).powi(2)).abs() <= tol,
                "pairing {acc:e} vs tol {tol:e}"
            );
        }
    }

    #[test]
    fn engine_matches_generic_nonlinearity() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let cfg = base_cfg(64, 16);
        let engine = GalerkinEngine::<f64>::new(cfg.n_g, cfg.gamma1, cfg.gamma2);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..5 {
            let mut v = SpectralField::<f64>::vector(cfg.grid);
            for _ in 0..12 {
                let k1 = rng.gen_range(-16i64..=16);
                let k2 = rng.gen_range(-16i64..=16);
                if (k1 == 0 && k2 == 0) || k1 * k1 + k2 * k2 > 256 {
                    continue;
                }
                let nrm = ((k1 * k1 + k2 * k2) as f64).sqrt();
                let dir = [-k2 as f64 / nrm, k1 as f64 / nrm];
                let c = Complex::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
                for comp in 0..2 {
                    v.comps[comp][cfg.grid.coeff_index(k1, k2)] += c * dir[comp];
                    v.comps[comp][cfg.grid.coeff_index(-k1, -k2)] += (c * dir[comp]).conj();
                }
            }
            let amps = engine.amplitudes_from_field(&v);
            let mut out = vec![Complex::new(0.0, 0.0); amps.len()];
            engine.nonlinearity(&amps, &mut out);
            let fast = engine.field_from_amplitudes(&out, cfg.grid);
            let slow = galerkin_nonlinearity(&v, cfg.gamma2, cfg.n_g).unwrap();
            let d = fast.sub(&slow).unwrap();
            let sup = d.comps.iter().flat_map(|c| c.iter()).fold(0.0f64, |a, x| a.max(x.norm()));
            let sc = slow.comps.iter().flat_map(|c| c.iter()).fold(0.0f64, |a, x| a.max(x.norm()));
            assert!(sup / sc.max(1e-300) < 1e-12, "engine defect {:.3e}", sup / sc);
        }
    }

    #[test]
    fn linear_only_matches_ito_isometry() {
        let mut cfg = base_cfg(64, 16);
        cfg.nonlinearity_on = false;
        cfg.v_in = SpectralField::vector(cfg.grid);
        cfg.paths = 600;
        cfg.dt = 2e-2;
        cfg.t_end = 0.5;
        cfg.checkpoints = vec![0.25, 0.5];
        let rep = run_ensemble(&cfg).unwrap();
        let two_pi = 2.0 * std::f64::consts::PI;
        for row in &rep.rows {
            // E ||v||^2 = (2 pi)^6 sum |k|^{2(1-g2/2)} Var(t)
            let mut expect = 0.0;
            for [k1, k2] in half_lattice(cfg.spectrum.kmax) {
                let w = ((k1 * k1 + k2 * k2) as f64).powf(1.0 - cfg.gamma2 / 2.0);
                expect += 2.0 * w * cfg.spectrum.transition_variance(k1, k2, row.t);
            }
            expect *= two_pi.powi(6);
            assert!(
                (row.mean - expect).abs() <= 3.0 * row.std_err.max(1e-12),
                "t={} mean={} expect={} se={}",
                row.t,
                row.mean,
                expect,
                row.std_err
            );
        }
    }
}
