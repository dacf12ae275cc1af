//! One full convex-integration stage: stage-0 data, transported stresses,
//! amplitudes, the wave perturbation, and the Reynolds-stress assembly.

use num_complex::Complex;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CoreError, Result};
use crate::fft;
use crate::field::{SpectralField, SymTensorField, TimeGrid, TimeSampledField, TimeSampledTensor};
use crate::grid::Grid;
use crate::norms;
use crate::ops;
use crate::params::{
    eval_params, mollify_spacetime, mollify_spacetime_tensor, CutoffFamily, SpatialKernelHat,
    StageParams, TemporalKernel,
};
use crate::scalar::{r, Real};
use crate::transport::{self, FlowMap, SparseModes};
use crate::wave::{Sym2, WaveSystem};

/// The unit of iteration: `(q, parameters, y_q, R_q, p_q, z_q)` plus
/// provenance. Fields are sampled on a grid with `n_pre` samples of
/// pre-history before `t = 0` (stage 0 extends analytically; later stages
/// carry none and fall back to the value-at-zero extension).
#[derive(Debug, Clone)]
pub struct StageState<T: Real> {
    pub q: u32,
    pub params: StageParams,
    pub y: TimeSampledField<T>,
    pub r: TimeSampledTensor<T>,
    pub p: TimeSampledField<T>,
    /// Truncated noise `z_q` on the same time grid.
    pub z: TimeSampledField<T>,
    pub n_pre: usize,
    pub manifest: serde_json::Value,
}

impl<T: Real> StageState<T> {
    /// Index of the `t = 0` sample.
    pub fn main_start(&self) -> usize {
        self.n_pre
    }

    pub fn main_len(&self) -> usize {
        self.y.tg.len - self.n_pre
    }

    pub fn main_time(&self, rel: usize) -> T {
        self.y.tg.time(self.n_pre + rel)
    }
}

/// Integer `lambda_q = a^(b^q)`; errors when it leaves `u64`.
pub fn lambda_int(p: &StageParams, q: u32) -> Result<u64> {
    let exp = (p.b as u64).checked_pow(q).ok_or_else(|| {
        CoreError::Resolution(format!("b^{q} overflows"))
    })?;
    let exp: u32 = exp
        .try_into()
        .map_err(|_| CoreError::Resolution(format!("b^{q} too large")))?;
    p.a
        .checked_pow(exp)
        .ok_or_else(|| CoreError::Resolution(format!("lambda_{q} overflows u64; use the log forms")))
}

/// Time grid of the `q -> q+1` stage: `dt = tau_{q+1}/dt_factor`, with
/// `2 dt_factor` pre-history samples covering the temporal kernel.
pub fn stage_time_grid<T: Real>(p: &StageParams, q: u32) -> Result<(TimeGrid<T>, usize)> {
    let sc = eval_params(p, q);
    if !sc.tau.is_finite() {
        return Err(CoreError::Resolution("tau not representable".into()));
    }
    let dt = sc.tau / p.dt_factor as f64;
    let n_pre = 2 * p.dt_factor as usize;
    let n_main = (p.t_end / dt).ceil() as usize + 1;
    let tg = TimeGrid {
        t0: r::<T>(-(n_pre as f64) * dt),
        dt: r(dt),
        len: n_pre + n_main,
    };
    Ok((tg, n_pre))
}

/// Stage-0 velocity amplitude `L^2 e^{2 L t} / (2 pi)`.
fn y0_amp<T: Real>(p: &StageParams, t: T) -> T {
    let l = r::<T>(p.big_l);
    l * l * (r::<T>(2.0 * p.big_l) * t).exp() / (T::PI() + T::PI())
}

fn y0_snapshot<T: Real>(p: &StageParams, grid: Grid, t: T) -> SpectralField<T> {
    let amp = y0_amp(p, t);
    let half = T::of(0.5);
    SpectralField::from_modes(
        grid,
        2,
        &[
            (0, 1, 0, Complex::new(T::zero(), -amp * half)),
            (0, -1, 0, Complex::new(T::zero(), amp * half)),
        ],
    )
}

/// `R_0` of the stage-0 pair: the explicit shear tensor absorbing `d_t y_0`
/// plus inverse divergences of the dissipation and the vorticity-form
/// nonlinear terms.
fn r0_snapshot<T: Real>(
    p: &StageParams,
    grid: Grid,
    t: T,
    y0: &SpectralField<T>,
    z0: &SpectralField<T>,
) -> Result<SymTensorField<T>> {
    // (L^3 e^{2Lt} / pi) [[0, -cos x2], [-cos x2, 0]]
    let l = r::<T>(p.big_l);
    let coef = l * l * l * (r::<T>(2.0 * p.big_l) * t).exp() / T::PI();
    let half = T::of(0.5);
    let mut explicit = SymTensorField::zeros(grid);
    let idx_p = grid.coeff_index(0, 1);
    let idx_m = grid.coeff_index(0, -1);
    explicit.e12[idx_p] = Complex::new(-coef * half, T::zero());
    explicit.e12[idx_m] = Complex::new(-coef * half, T::zero());
    explicit.trace_free = true;

    let order = r::<T>(2.0 - p.gamma2);
    let lam_y0 = ops::fractional_laplacian(y0, order)?;
    let lam_z0 = ops::fractional_laplacian(z0, order)?;
    let keep = None;

    // -(grad y0)^T . Lambda^{2-gamma2} y0
    let mut arg = ops::grad_transpose_dot(y0, &lam_y0, grid, keep)?;
    arg.scale(-T::one());
    // + (Lambda^{2-gamma2} y0)^perp (grad^perp . z0)
    let t2 = ops::scalar_times_vector(&ops::perp_divergence(z0)?, &lam_y0.perp()?, grid, keep)?;
    // + (Lambda^{2-gamma2} z0)^perp (grad^perp . y0)
    let t3 = ops::scalar_times_vector(&ops::perp_divergence(y0)?, &lam_z0.perp()?, grid, keep)?;
    // + (Lambda^{2-gamma2} z0)^perp (grad^perp . z0)
    let t4 = ops::scalar_times_vector(&ops::perp_divergence(z0)?, &lam_z0.perp()?, grid, keep)?;
    let arg = arg.add(&t2)?.add(&t3)?.add(&t4)?;

    let diss = ops::fractional_laplacian(y0, r::<T>(p.gamma1))?;
    let out = explicit
        .add(&ops::inverse_divergence(&diss)?)?
        .add(&ops::inverse_divergence(&arg)?)?;
    Ok(out)
}

/// Build the stage-0 state. `z_main`, when given, must be sampled on the
/// stage time grid starting at `t = 0`; pre-history samples are zero
/// (`z(0) = 0`), while `y_0` and `R_0` extend analytically backward.
pub fn init_stage0<T: Real>(
    params: &StageParams,
    z_main: Option<&TimeSampledField<T>>,
) -> Result<StageState<T>> {
    params.validate()?;
    let (tg, n_pre) = stage_time_grid::<T>(params, 0)?;
    let lambda0 = lambda_int(params, 0)?;

    let z_grid = z_main.map(|z| z.samples[0].grid).unwrap_or(Grid::new(8)?);
    if let Some(z) = z_main {
        let dt_err = (z.tg.dt - tg.dt).abs() / tg.dt;
        if z.tg.t0 != T::zero() || dt_err > r(1e-9) || z.tg.len < tg.len - n_pre {
            return Err(CoreError::Config(
                "noise path must be sampled on the stage grid from t = 0".into(),
            ));
        }
    }
    // products of |k|<=1 and |k|<=1 fields need Nyquist >= 2
    let work_grid = Grid::new(z_grid.n().max(8))?;

    let zeros_z = SpectralField::vector(z_grid);
    let z_full: Vec<SpectralField<T>> = (0..tg.len)
        .map(|i| {
            if i < n_pre {
                zeros_z.clone()
            } else {
                match z_main {
                    Some(z) => crate::noise::truncate_z_q(&z.samples[i - n_pre], lambda0),
                    None => zeros_z.clone(),
                }
            }
        })
        .collect();

    let y_samples: Vec<SpectralField<T>> =
        (0..tg.len).map(|i| y0_snapshot(params, Grid::new(8).unwrap(), tg.time(i))).collect();
    let r_samples: Vec<SymTensorField<T>> = (0..tg.len)
        .into_par_iter()
        .map(|i| r0_snapshot(params, work_grid, tg.time(i), &y_samples[i].regrid(work_grid)?, &z_full[i]))
        .collect::<Result<_>>()?;
    let p_samples: Vec<SpectralField<T>> =
        (0..tg.len).map(|_| SpectralField::scalar(Grid::new(8).unwrap())).collect();

    let manifest = serde_json::json!({
        "q": 0,
        "params": serde_json::to_value(params).unwrap(),
        "noise": z_main.is_some(),
    });
    Ok(StageState {
        q: 0,
        params: *params,
        y: TimeSampledField::new(tg, y_samples),
        r: TimeSampledTensor::new(tg, r_samples),
        p: TimeSampledField::new(tg, p_samples),
        z: TimeSampledField::new(tg, z_full),
        n_pre,
        manifest,
    })
}

/// Analytic `d_t y_0` on the stage grid (used by the exactness criterion).
pub fn stage0_dy_dt<T: Real>(state: &StageState<T>) -> TimeSampledField<T> {
    let p = state.params;
    let samples = (0..state.y.tg.len)
        .map(|i| {
            let mut s = state.y.samples[i].clone();
            s.scale(r::<T>(2.0 * p.big_l));
            s
        })
        .collect();
    TimeSampledField::new(state.y.tg, samples)
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct O1Report {
    /// sup (over main samples and nodes) of the off-diagonal entry, relative.
    pub off_diag_rel: f64,
    /// sup of `|O1_11 - O1_22|`, relative.
    pub diag_diff_rel: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct TransportReport {
    /// Relative residual of `D_{t,q} R_{q,j}` per window (max over windows).
    pub dtq_residual_rel: f64,
    /// Max deviation of `det(grad Phi_j)` from 1.
    pub jacobian_dev: f64,
    /// Max relative drift of `sup |R_{q,j}|` from its anchor value.
    pub sup_transport_drift: f64,
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct StepReport {
    pub lambda_next: f64,
    pub tau: f64,
    pub ell: f64,
    /// Per-part `C_{t,x}` norms, keyed by part name.
    pub part_norms: Vec<(String, f64)>,
    pub w_sup: f64,
    pub w_outside_annulus_mass: f64,
    pub w_hermitian_defect: f64,
    pub w_divergence_rel: f64,
    /// Max over samples of `||y_{q+1} - y_q||_C / (C0 L^{1/2} M0(t)^{1/2} delta_{q+1}^{1/2})`.
    pub increment_ratio: f64,
    pub increment_pass: bool,
    /// Max excursion of the amplitude matrix argument, relative to eps_gamma.
    pub ball_excursion: f64,
    pub o1: O1Report,
    pub transport: TransportReport,
    pub y_next_outside_mass: f64,
    pub r_next_outside_mass: f64,
    /// sup |FD(w) - analytic d_t w| / sup |d_t w| (4th-order in dt).
    pub dtw_fd_gap_rel: f64,
}

#[derive(Debug, Clone)]
pub struct StepOptions {
    /// Working grid for the perturbation and the assembled stress.
    pub grid: Grid,
    /// Assemble the Reynolds parts (the expensive half of the step).
    pub parts: bool,
    pub transport_diagnostics: bool,
    /// Multiply the amplitude of family representative `idx` by `factor`
    /// (diagnostic knob for the cancellation sensitivity check).
    pub amp_perturbation: Option<(usize, f64)>,
}

impl StepOptions {
    pub fn new(grid: Grid) -> StepOptions {
        StepOptions { grid, parts: true, transport_diagnostics: true, amp_perturbation: None }
    }
}

/// Per-window data produced while sweeping the cutoffs.
struct WindowAccum<T: Real> {
    flow: FlowMap<T>,
    /// physical R_{q,j} entries per window sample (for diagnostics).
    rqj: Vec<[Vec<T>; 3]>,
}

fn tensor_sparse<T: Real>(t: &SymTensorField<T>) -> [SparseModes<T>; 3] {
    let wrap = |c: &Vec<Complex<T>>| {
        let f = SpectralField { grid: t.grid, comps: vec![c.clone()], mean_zero: false };
        SparseModes::from_field(&f, T::zero())
    };
    [wrap(&t.e11), wrap(&t.e12), wrap(&t.e22)]
}

/// Shift-and-filter accumulation of one wave component into a spectral
/// sample: coefficients of `weight * P_{q+1,k}( s(x) i k^perp e^{i lam k.x} )`
/// plus the Hermitian mirror (the `-k` member of the pair).
#[allow(clippy::too_many_arguments)]
fn add_wave<T: Real>(
    target: &mut SpectralField<T>,
    s_hat: &[Complex<T>],
    s_grid: Grid,
    five_k: [i64; 2],
    lambda: u64,
    weight: T,
) {
    if weight == T::zero() {
        return;
    }
    let grid = target.grid;
    let lam5 = (lambda / 5) as i64;
    let center = [five_k[0] * lam5, five_k[1] * lam5];
    let kdir = [
        T::from_i64(five_k[0]).unwrap() / T::of(5.0),
        T::from_i64(five_k[1]).unwrap() / T::of(5.0),
    ];
    let perp = [-kdir[1], kdir[0]];
    let radius = (lambda as f64 / 8.0).floor() as i64;
    let i_unit = Complex::new(T::zero(), T::one());
    for e1 in -radius..=radius {
        for e2 in -radius..=radius {
            if e1 * e1 + e2 * e2 > radius * radius {
                continue;
            }
            let eta_norm = ((e1 * e1 + e2 * e2) as f64).sqrt() / lambda as f64;
            let bump = crate::smooth::radial_plateau(eta_norm, 1.0 / 16.0, 1.0 / 8.0);
            if bump == 0.0 {
                continue;
            }
            let xi = [center[0] + e1, center[1] + e2];
            if xi[0].abs() >= grid.nyquist() || xi[1].abs() >= grid.nyquist() {
                continue;
            }
            // s has arbitrary spectrum; read the (e1, e2) coefficient
            if e1.abs() >= s_grid.nyquist() || e2.abs() >= s_grid.nyquist() {
                continue;
            }
            let sc = s_hat[s_grid.coeff_index(e1, e2)];
            let v = i_unit * sc * (weight * r::<T>(bump));
            let vec = [v * perp[0], v * perp[1]];
            // Leray projection at xi
            let ksq = T::from_i64(xi[0] * xi[0] + xi[1] * xi[1]).unwrap();
            let kk = [T::from_i64(xi[0]).unwrap(), T::from_i64(xi[1]).unwrap()];
            let dot = (vec[0] * kk[0] + vec[1] * kk[1]) / ksq;
            let proj = [vec[0] - dot * kk[0], vec[1] - dot * kk[1]];
            let idx = grid.coeff_index(xi[0], xi[1]);
            let jdx = grid.coeff_index(-xi[0], -xi[1]);
            for c in 0..2 {
                target.comps[c][idx] = target.comps[c][idx] + proj[c];
                target.comps[c][jdx] = target.comps[c][jdx] + proj[c].conj();
            }
        }
    }
}

/// What a step returns: the next state, the measurement report, and the
/// analytic `d_t y_{q+1}` (finite differences of the slow mollified field
/// plus the cutoff-derivative and transport terms of `d_t w`).
pub struct StepOutput<T: Real> {
    pub state: StageState<T>,
    pub report: StepReport,
    pub dy_dt: TimeSampledField<T>,
}

/// Full convex-integration step `q -> q+1`.
pub fn stage_step<T: Real>(
    state: &StageState<T>,
    z_raw: Option<&TimeSampledField<T>>,
    ws: &WaveSystem<T>,
    opts: &StepOptions,
) -> Result<StepOutput<T>> {
    let p = state.params;
    let q = state.q;
    let sc = eval_params(&p, q);
    let sc_next = eval_params(&p, q + 1);
    let lambda_next = lambda_int(&p, q + 1)?;
    let grid = opts.grid;
    if ((grid.nyquist() - 1) as f64) < 9.0 * sc_next.lambda_q / 8.0 + lambda_next as f64 / 8.0 {
        return Err(CoreError::Resolution(format!(
            "grid n={} cannot hold the stage-{} wave band",
            grid.n(),
            q + 1
        )));
    }

    let tg = state.y.tg;
    let n_main = state.main_len();
    let main0 = state.main_start();
    let dt = tg.dt;

    // --- mollification ---------------------------------------------------
    let tau = r::<T>(sc.tau);
    let ell = r::<T>(sc.ell);
    let kernel = TemporalKernel::build(tau, dt)?;
    let max_klk = {
        // largest |k| * ell over any populated mode of the inputs
        let nyq = state.r.samples[0].grid.nyquist().max(state.z.samples[0].grid.nyquist());
        (nyq as f64) * 1.5 * sc.ell + 2.0
    };
    let hat = SpatialKernelHat::build(max_klk.max(8.0));
    let out_range = (main0, tg.len);
    let y_l = mollify_spacetime(&state.y, &hat, ell, &kernel, out_range)?;
    let z_l = mollify_spacetime(&state.z, &hat, ell, &kernel, out_range)?;
    let r_l = mollify_spacetime_tensor(&state.r, &hat, ell, &kernel, out_range)?;
    let p_l = mollify_spacetime(&state.p, &hat, ell, &kernel, out_range)?;

    // z_{q+1} on the main range
    let zeros_like_z = SpectralField::vector(state.z.samples[0].grid);
    let z_next = TimeSampledField::new(
        y_l.tg,
        (0..n_main)
            .map(|i| match z_raw {
                Some(z) => {
                    let src = z.at_clamped(y_l.tg.time(i)).unwrap_or(&zeros_like_z);
                    crate::noise::truncate_z_q(src, lambda_next)
                }
                None => zeros_like_z.clone(),
            })
            .collect(),
    );
    let z_q_main = TimeSampledField::new(
        y_l.tg,
        (0..n_main).map(|i| state.z.samples[main0 + i].clone()).collect(),
    );
    let y_q_main = TimeSampledField::new(
        y_l.tg,
        (0..n_main).map(|i| state.y.samples[main0 + i].clone()).collect(),
    );

    // --- convection and cutoffs ------------------------------------------
    let conv = transport::convection_field(&y_l, &z_l, p.gamma2, sc.lambda_q)?;
    let cutoffs = CutoffFamily::build(&p, q)?;

    // --- amplitude scaling constants --------------------------------------
    let eps = ws.eps_gamma;
    let lam_pow = r::<T>(((2.0 - p.gamma2) * sc_next.ln_lambda_q + sc_next.ln_delta_q).exp());
    let amp_const = |m0_anchor: T| -> T {
        (r::<T>(p.cbar).sqrt() * r::<T>(p.big_l).sqrt() * m0_anchor.sqrt()
            / (eps.sqrt() * r::<T>(p.gamma2).sqrt()))
            * r::<T>((0.5 * sc_next.ln_delta_q).exp())
    };
    // argument denominator: Cbar lambda^{2-g2} delta_{q+1} L M0(anchor)
    let arg_denom = |m0_anchor: T| -> T { r::<T>(p.cbar) * lam_pow * r::<T>(p.big_l) * m0_anchor };

    let n = grid.n();
    let nodes = n * n;
    let substep = tau / r::<T>(p.substep_factor as f64);

    let mut w = TimeSampledField::zeros(y_l.tg, grid, 2);
    let mut dtw = TimeSampledField::zeros(y_l.tg, grid, 2);
    // O1 accumulators in physical space, entries (11, 12, 22)
    let mut o1: Vec<[Vec<T>; 3]> =
        (0..n_main).map(|_| [vec![T::zero(); nodes], vec![T::zero(); nodes], vec![T::zero(); nodes]]).collect();
    let mut ball_excursion = T::zero();
    let mut transport_rep = TransportReport::default();

    // --- sweep the cutoff windows -----------------------------------------
    for j in 0..=cutoffs.j_max {
        let anchor_t = r::<T>(cutoffs.anchor(j));
        let lo_t = cutoffs.anchor(j) - 0.75 * sc.tau;
        let hi_t = cutoffs.anchor(j) + 0.75 * sc.tau;
        let lo = ((lo_t / sc.tau * p.dt_factor as f64).floor().max(0.0)) as usize;
        let hi = (((hi_t / sc.tau * p.dt_factor as f64).ceil()) as usize + 1).min(n_main);
        if lo >= hi {
            continue;
        }
        // The top window's nominal anchor tau*j can exceed the horizon; the
        // flow and the stress are anchored at the last available sample while
        // the amplitude scaling keeps the nominal M0(tau j) (M0 is
        // nondecreasing, so the certified-ball argument only gains margin).
        let anchor_idx = (cutoffs.anchor(j) / sc.tau * p.dt_factor as f64).round() as usize;
        let anchor_clamped = anchor_idx.min(n_main - 1);
        let anchor_used_t = y_l.tg.time(anchor_clamped);
        let flow = transport::solve_flow(&conv, j, anchor_used_t, (lo, hi), grid, substep)?;
        let r_anchor = &r_l.samples[anchor_clamped];
        let sparse_anchor = tensor_sparse(r_anchor);
        let m0_anchor = p.m0(anchor_t);
        let c_amp = amp_const(m0_anchor);
        let denom = arg_denom(m0_anchor);
        let fam_idx = if j % 2 == 1 { 0 } else { 1 };
        let family = &ws.families[fam_idx];

        let mut acc = WindowAccum { flow, rqj: Vec::new() };

        for (wi, si) in (lo..hi).enumerate() {
            let t = y_l.tg.time(si);
            let chi = r::<T>(cutoffs.chi(j, t.to_f64_lossy()));
            let chi_d = r::<T>(cutoffs.chi_deriv(j, t.to_f64_lossy()));
            if chi == T::zero() && chi_d == T::zero() && !opts.transport_diagnostics {
                acc.rqj.push([vec![], vec![], vec![]]);
                continue;
            }

            // R_{q,j}(t, x) by pullback, physical
            let rqj: [Vec<T>; 3] = [
                transport::pullback_scalar(&sparse_anchor[0], &acc.flow, wi),
                transport::pullback_scalar(&sparse_anchor[1], &acc.flow, wi),
                transport::pullback_scalar(&sparse_anchor[2], &acc.flow, wi),
            ];

            // amplitudes per representative
            let mut amps: [Vec<T>; 3] = [
                vec![T::zero(); nodes],
                vec![T::zero(); nodes],
                vec![T::zero(); nodes],
            ];
            let mut worst_dev = T::zero();
            for node in 0..nodes {
                let m = Sym2 {
                    m11: T::one() - eps * rqj[0][node] / denom,
                    m12: -eps * rqj[1][node] / denom,
                    m22: T::one() - eps * rqj[2][node] / denom,
                };
                let dev = m.sub_identity().op_norm();
                worst_dev = worst_dev.max(dev);
                let squares = family.solve_squares(m);
                for rep in 0..3 {
                    if squares[rep] <= T::zero() {
                        return Err(CoreError::Domain {
                            op: "build_amplitudes",
                            msg: format!(
                                "gamma^2 <= 0 at window {j}; matrix argument left the certified ball"
                            ),
                        });
                    }
                    amps[rep][node] = c_amp * squares[rep].sqrt();
                }
            }
            ball_excursion = ball_excursion.max(worst_dev / eps);
            if worst_dev > eps * (T::one() + r(1e-9)) {
                return Err(CoreError::Domain {
                    op: "build_amplitudes",
                    msg: format!(
                        "matrix argument excursion {:e} exceeds eps_gamma {:e} (window {j}); \
                         Hypothesis (b) failed upstream",
                        worst_dev.to_f64_lossy(),
                        eps.to_f64_lossy()
                    ),
                });
            }
            if let Some((rep, factor)) = opts.amp_perturbation {
                for v in amps[rep % 3].iter_mut() {
                    *v = *v * r::<T>(factor);
                }
            }

            // O1 accumulation
            let chi_sq = chi * chi;
            if chi_sq != T::zero() {
                let gfac = r::<T>(p.gamma2) * lam_pow
                    / r::<T>((sc_next.ln_delta_q).exp())
                    * T::of(0.5);
                // lam_pow = lambda^{2-g2} delta_{q+1}; O1 needs gamma2 lambda^{2-g2} / 2
                for rep in 0..3 {
                    let d = family.dir(rep);
                    let perp = [-d[1], d[0]];
                    // (k^perp x k^perp - Id), doubled for the +/- pair
                    let c11 = perp[0] * perp[0] - T::one();
                    let c12 = perp[0] * perp[1];
                    let c22 = perp[1] * perp[1] - T::one();
                    let two = T::of(2.0);
                    let o = &mut o1[si];
                    for node in 0..nodes {
                        let asq = amps[rep][node] * amps[rep][node] * chi_sq * two * gfac;
                        o[0][node] += asq * c11;
                        o[1][node] += asq * c12;
                        o[2][node] += asq * c22;
                    }
                }
                let o = &mut o1[si];
                for e in 0..3 {
                    for node in 0..nodes {
                        o[e][node] += chi_sq * rqj[e][node];
                    }
                }
            }

            // wave contributions
            let kdirs: Vec<[i64; 2]> = (0..3).map(|rp| family.five_k[rp]).collect();
            for (rep, five_k) in kdirs.iter().enumerate() {
                if chi == T::zero() && chi_d == T::zero() {
                    continue;
                }
                let kdir = family.dir(rep);
                let lam_t = T::from_u64(lambda_next).unwrap();
                // s = a * psi with psi = e^{i lambda (Phi - x) . k}
                let mut s_vals = vec![Complex::new(T::zero(), T::zero()); nodes];
                let disp = &acc.flow.disp[wi];
                s_vals
                    .par_iter_mut()
                    .enumerate()
                    .for_each(|(node, out)| {
                        let phase = lam_t * (disp[0][node] * kdir[0] + disp[1][node] * kdir[1]);
                        let (sn, cs) = phase.sin_cos();
                        let a = amps[rep][node];
                        *out = Complex::new(a * cs, a * sn);
                    });
                let mut s_hat = s_vals.clone();
                let s_hat = {
                    fft::fft2d(&mut s_hat, n, false);
                    let norm = T::one() / T::from_usize(nodes).unwrap();
                    // undo the node-offset phase: multiply by (-1)^{k1+k2}
                    let mut out = vec![Complex::new(T::zero(), T::zero()); nodes];
                    for (flat, k1, k2) in grid.iter_k() {
                        let sign = if (k1 + k2).rem_euclid(2) == 0 { T::one() } else { -T::one() };
                        out[flat] = s_hat[flat] * sign * norm;
                    }
                    out
                };
                if chi != T::zero() {
                    add_wave(&mut w.samples[si], &s_hat, grid, *five_k, lambda_next, chi);
                }
                if chi_d != T::zero() {
                    add_wave(&mut dtw.samples[si], &s_hat, grid, *five_k, lambda_next, chi_d);
                }
                if chi != T::zero() {
                    // transport part of d_t w: -(conv . grad)(s) - i lam (conv . k) s,
                    // modulated like s itself
                    let conv_p0 = conv.samples[si].physical(0, Some(n));
                    let conv_p1 = conv.samples[si].physical(1, Some(n));
                    // spectral gradient of s
                    let mut ds1 = vec![Complex::new(T::zero(), T::zero()); nodes];
                    let mut ds2 = vec![Complex::new(T::zero(), T::zero()); nodes];
                    for (flat, k1, k2) in grid.iter_k() {
                        let iu = Complex::new(T::zero(), T::one());
                        ds1[flat] = iu * T::from_i64(k1).unwrap() * s_hat[flat];
                        ds2[flat] = iu * T::from_i64(k2).unwrap() * s_hat[flat];
                    }
                    let d1_phys = fft::coeffs_to_physical(&ds1, n, n);
                    let d2_phys = fft::coeffs_to_physical(&ds2, n, n);
                    let s_phys = s_vals;
                    let mut g_vals = vec![Complex::new(T::zero(), T::zero()); nodes];
                    let iu = Complex::new(T::zero(), T::one());
                    g_vals
                        .par_iter_mut()
                        .enumerate()
                        .for_each(|(node, out)| {
                            let cdotk = conv_p0[node] * kdir[0] + conv_p1[node] * kdir[1];
                            let adv = d1_phys[node] * conv_p0[node] + d2_phys[node] * conv_p1[node];
                            *out = -(adv + iu * lam_t * cdotk * s_phys[node]);
                        });
                    let g_hat = fft::physical_to_coeffs(&mut g_vals, n, n, i64::MAX);
                    add_wave(&mut dtw.samples[si], &g_hat, grid, *five_k, lambda_next, chi);
                }
            }

            if opts.transport_diagnostics {
                acc.rqj.push(rqj);
            } else {
                acc.rqj.push([vec![], vec![], vec![]]);
            }
        }

        if opts.transport_diagnostics {
            window_transport_diagnostics(
                &mut transport_rep,
                &acc,
                &conv,
                grid,
                (lo, hi),
                r_anchor,
                tau,
            )?;
        }
    }

    // --- update fields -----------------------------------------------------
    let y_next = TimeSampledField::new(
        y_l.tg,
        (0..n_main)
            .into_par_iter()
            .map(|i| y_l.samples[i].add(&w.samples[i]))
            .collect::<Result<_>>()?,
    );
    let order = r::<T>(2.0 - p.gamma2);
    let p_next = TimeSampledField::new(
        y_l.tg,
        (0..n_main)
            .into_par_iter()
            .map(|i| {
                let lam_sum = ops::fractional_laplacian(
                    &y_l.samples[i].add(&z_next.samples[i])?,
                    order,
                )?;
                let prod = ops::dot(&w.samples[i], &lam_sum, grid, None)?;
                p_l.samples[i].regrid(grid)?.add(&prod)
            })
            .collect::<Result<_>>()?,
    );

    // --- measurements -------------------------------------------------------
    let mut report = StepReport {
        lambda_next: sc_next.lambda_q,
        tau: sc.tau,
        ell: sc.ell,
        ..Default::default()
    };
    report.transport = transport_rep;
    report.ball_excursion = ball_excursion.to_f64_lossy();

    let half_band = r::<T>(sc_next.lambda_q / 2.0);
    let two_band = r::<T>(2.0 * sc_next.lambda_q);
    let mut w_sup = T::zero();
    let mut out_mass = T::zero();
    let mut herm = T::zero();
    let mut div_rel = T::zero();
    for s in &w.samples {
        w_sup = w_sup.max(norms::sup_norm_vector(s));
        out_mass = out_mass.max(s.mass_outside_annulus(half_band, two_band));
        herm = herm.max(s.hermitian_defect());
        let d = ops::divergence(s).unwrap();
        let dsup = d.comps[0].iter().fold(T::zero(), |a, v| a.max(v.norm()));
        let wsc = s
            .comps
            .iter()
            .flat_map(|c| c.iter())
            .fold(T::zero(), |a, v| a.max(v.norm()));
        if wsc > T::zero() {
            div_rel = div_rel.max(dsup / (wsc * r(sc_next.lambda_q)));
        }
    }
    report.w_sup = w_sup.to_f64_lossy();
    report.w_outside_annulus_mass = out_mass.to_f64_lossy();
    report.w_hermitian_defect = herm.to_f64_lossy();
    report.w_divergence_rel = div_rel.to_f64_lossy();

    // increment bound (eq. 162-style check with the configured C0)
    let mut worst_ratio = T::zero();
    for i in 0..n_main {
        let t = y_l.tg.time(i);
        let diff = y_next.samples[i].sub(&y_q_main.samples[i])?;
        let sup = norms::sup_norm_vector(&diff);
        let bound = r::<T>(p.c0)
            * r::<T>(p.big_l).sqrt()
            * p.m0(t).sqrt()
            * r::<T>((0.5 * sc_next.ln_delta_q).exp());
        worst_ratio = worst_ratio.max(sup / bound);
    }
    report.increment_ratio = worst_ratio.to_f64_lossy();
    report.increment_pass = worst_ratio <= T::one();

    // O1 cancellation
    let mut o1_off = T::zero();
    let mut o1_diag = T::zero();
    let mut o1_scale = T::zero();
    for sample in &o1 {
        for node in 0..nodes {
            let (a, b, c) = (sample[0][node], sample[1][node], sample[2][node]);
            o1_scale = o1_scale.max(a.abs().max(b.abs()).max(c.abs()));
            o1_off = o1_off.max(b.abs());
            o1_diag = o1_diag.max((a - c).abs());
        }
    }
    report.o1 = O1Report {
        off_diag_rel: (o1_off / o1_scale.max(T::min_positive_value())).to_f64_lossy(),
        diag_diff_rel: (o1_diag / o1_scale.max(T::min_positive_value())).to_f64_lossy(),
        scale: o1_scale.to_f64_lossy(),
    };

    // --- Reynolds assembly ---------------------------------------------------
    let mut parts_sum = TimeSampledTensor::new(
        y_l.tg,
        (0..n_main).map(|_| SymTensorField::zeros(grid)).collect(),
    );
    if opts.parts {
        let keep_band = r::<T>((grid.nyquist() - 1) as f64);
        // inner commutator field N(y_q, z_q) on the full grid range
        let n_q_full: Vec<SpectralField<T>> = (0..tg.len)
            .into_par_iter()
            .map(|i| {
                let sum = state.y.samples[i].add(&state.z.samples[i])?;
                let lam = ops::fractional_laplacian(&sum, order)?;
                let og = sum.grid;
                ops::scalar_times_vector(&ops::perp_divergence(&sum)?, &lam.perp()?, og, None)
            })
            .collect::<Result<_>>()?;
        let n_q = TimeSampledField::new(tg, n_q_full);
        let n_q_l = mollify_spacetime(&n_q, &hat, ell, &kernel, out_range)?;

        let names = ["transport", "nash", "linear", "oscillation", "commutator1", "commutator2"];
        let mut norms_acc = vec![T::zero(); 6];
        let results: Vec<(usize, [SymTensorField<T>; 6])> = (0..n_main)
            .into_par_iter()
            .map(|i| -> Result<(usize, [SymTensorField<T>; 6])> {
                let wv = &w.samples[i];
                let ylv = &y_l.samples[i];
                let zlv = &z_l.samples[i];
                let zqv = &z_q_main.samples[i];
                let zq1 = &z_next.samples[i];
                let convv = &conv.samples[i];
                let y1 = &y_next.samples[i];
                let lam_w = ops::fractional_laplacian(wv, order)?;
                let kb = Some(keep_band);

                // transport
                let rt = dtw.samples[i].add(&ops::advect(convv, wv, grid, kb)?)?;
                // nash
                let a_field = ops::fractional_laplacian(&ylv.add(zqv)?, order)?;
                let rn = ops::grad_transpose_dot(&a_field, wv, grid, kb)?
                    .add(&ops::advect(&lam_w, ylv, grid, kb)?)?
                    .sub(&ops::grad_transpose_dot(ylv, &lam_w, grid, kb)?)?;
                // linear
                let rl = ops::fractional_laplacian(wv, r::<T>(p.gamma1))?
                    .add(&ops::scalar_times_vector(
                        &ops::perp_divergence(zlv)?,
                        &lam_w.perp()?,
                        grid,
                        kb,
                    )?)?;
                // oscillation
                let ro = r_l.samples[i]
                    .divergence()
                    .regrid(grid)?
                    .add(&ops::advect(&lam_w, wv, grid, kb)?)?
                    .sub(&ops::grad_transpose_dot(wv, &lam_w, grid, kb)?)?;
                // commutator 1
                let sum_l = ylv.add(zlv)?;
                let lam_sum_l = ops::fractional_laplacian(&sum_l, order)?;
                let n_l = ops::scalar_times_vector(
                    &ops::perp_divergence(&sum_l)?,
                    &lam_sum_l.perp()?,
                    sum_l.grid,
                    None,
                )?;
                let rc1 = n_l.sub(&n_q_l.samples[i])?;
                // commutator 2: the fourteen z-difference terms
                let d1 = zq1.sub(zqv)?; // z_{q+1} - z_q
                let d2 = zqv.sub(zq1)?; // z_q - z_{q+1}
                let d3 = zqv.sub(zlv)?; // z_q - z_l
                let d4 = zlv.sub(zqv)?; // z_l - z_q
                let lam_d1 = ops::fractional_laplacian(&d1, order)?;
                let lam_d3 = ops::fractional_laplacian(&d3, order)?;
                let lam_yl = ops::fractional_laplacian(ylv, order)?;
                let lam_zl = ops::fractional_laplacian(zlv, order)?;
                let lam_y1 = ops::fractional_laplacian(y1, order)?;
                let sg = |sc_f: &SpectralField<T>, vc: &SpectralField<T>| -> Result<SpectralField<T>> {
                    ops::scalar_times_vector(sc_f, vc, grid, kb)
                };
                let mut rc2 = ops::advect(&lam_y1, &d1, grid, kb)?;
                rc2 = rc2.add(&ops::advect(&lam_d1, y1, grid, kb)?)?;
                rc2 = rc2.add(&ops::grad_transpose_dot(ylv, &ops::fractional_laplacian(&d2, order)?, grid, kb)?)?;
                rc2 = rc2.add(&ops::grad_transpose_dot(&d2, &lam_yl, grid, kb)?)?;
                rc2 = rc2.add(&ops::grad_transpose_dot(&lam_d1, wv, grid, kb)?)?;
                rc2 = rc2.sub(&sg(&ops::perp_divergence(&d4)?, &lam_w.perp()?)?)?;
                rc2 = rc2.add(&ops::grad_transpose_dot(&d2, &lam_w, grid, kb)?)?;
                rc2 = rc2.add(&sg(&ops::perp_divergence(&d3)?, &lam_yl.perp()?)?)?;
                rc2 = rc2.add(&ops::advect(&lam_d3, wv, grid, kb)?)?;
                rc2 = rc2.add(&sg(&ops::perp_divergence(ylv)?, &lam_d3.perp()?)?)?;
                rc2 = rc2.add(&sg(&ops::perp_divergence(zq1)?, &lam_d1.perp()?)?)?;
                rc2 = rc2.add(&sg(&ops::perp_divergence(zq1)?, &lam_d3.perp()?)?)?;
                rc2 = rc2.add(&sg(&ops::perp_divergence(&d1)?, &lam_zl.perp()?)?)?;
                rc2 = rc2.add(&sg(&ops::perp_divergence(&d3)?, &lam_zl.perp()?)?)?;

                let parts = [
                    ops::inverse_divergence(&rt)?,
                    ops::inverse_divergence(&rn)?,
                    ops::inverse_divergence(&rl)?,
                    ops::inverse_divergence(&ro)?,
                    ops::inverse_divergence(&rc1)?,
                    ops::inverse_divergence(&rc2)?,
                ];
                Ok((i, parts))
            })
            .collect::<Result<_>>()?;
        for (i, parts) in results {
            for (pi, part) in parts.into_iter().enumerate() {
                norms_acc[pi] = norms_acc[pi].max(r::<T>(tensor_sup(&part)));
                parts_sum.samples[i] = parts_sum.samples[i].add(&part)?;
            }
        }
        report.part_norms = names
            .iter()
            .zip(norms_acc.iter())
            .map(|(n, v)| (n.to_string(), v.to_f64_lossy()))
            .collect();
    }

    // support masses of the updated pair
    let mut y_out = T::zero();
    for s in &y_next.samples {
        y_out = y_out.max(s.mass_outside(two_band));
    }
    report.y_next_outside_mass = y_out.to_f64_lossy();
    let four_band = r::<T>(4.0 * sc_next.lambda_q);
    let mut r_out = T::zero();
    for s in &parts_sum.samples {
        let wrap = SpectralField {
            grid: s.grid,
            comps: vec![s.e11.clone(), s.e12.clone(), s.e22.clone()],
            mean_zero: false,
        };
        r_out = r_out.max(wrap.mass_outside(four_band));
    }
    report.r_next_outside_mass = r_out.to_f64_lossy();

    // analytic d_t y_{q+1}: finite differences of the slow mollified field
    // plus the assembled d_t w; cross-check d_t w against finite differences
    let dyl = transport::time_derivative(&y_l)?;
    let dy_dt = TimeSampledField::new(
        y_l.tg,
        (0..n_main)
            .map(|i| dyl.samples[i].add(&dtw.samples[i]))
            .collect::<Result<_>>()?,
    );
    let fd_w = transport::time_derivative(&w)?;
    let mut gap = T::zero();
    let mut dtw_scale = T::zero();
    for i in 0..n_main {
        let d = fd_w.samples[i].sub(&dtw.samples[i])?;
        gap = gap.max(norms::sup_norm_vector(&d));
        dtw_scale = dtw_scale.max(norms::sup_norm_vector(&dtw.samples[i]));
    }
    report.dtw_fd_gap_rel = (gap / dtw_scale.max(T::min_positive_value())).to_f64_lossy();

    let manifest = serde_json::json!({
        "q": q + 1,
        "params": serde_json::to_value(&p).unwrap(),
        "report": serde_json::to_value(&report).unwrap(),
    });
    let next = StageState {
        q: q + 1,
        params: p,
        y: y_next,
        r: parts_sum,
        p: p_next,
        z: z_next,
        n_pre: 0,
        manifest,
    };
    Ok(StepOutput { state: next, report, dy_dt })
}

/// Sup over the dealiased nodes of the entry magnitudes of a tensor.
pub fn tensor_sup<T: Real>(t: &SymTensorField<T>) -> f64 {
    let m = t.grid.padded_n();
    let n = t.grid.n();
    let mut worst = 0.0f64;
    for e in t.entries() {
        let phys = fft::coeffs_to_real(e, n, m);
        worst = phys
            .iter()
            .fold(worst, |a, v| a.max(v.abs().to_f64_lossy()));
    }
    worst
}

/// Window diagnostics: `D_{t,q} R_{q,j}` residual, Jacobian of the flow,
/// and sup-norm transport invariance.
fn window_transport_diagnostics<T: Real>(
    rep: &mut TransportReport,
    acc: &WindowAccum<T>,
    conv: &TimeSampledField<T>,
    grid: Grid,
    window: (usize, usize),
    r_anchor: &SymTensorField<T>,
    tau_window: T,
) -> Result<()> {
    let (lo, hi) = window;
    let len = hi - lo;
    if len < 5 {
        return Ok(());
    }
    let n = grid.n();
    // Rebuild spectral samples of R_{q,j} from the physical pullbacks.
    let mut fields: Vec<SpectralField<T>> = Vec::with_capacity(len);
    for wi in 0..len {
        if acc.rqj[wi][0].is_empty() {
            // window sample skipped; bail on diagnostics for this window
            return Ok(());
        }
        let comps = vec![
            fft::real_to_coeffs(&acc.rqj[wi][0], n, n, i64::MAX),
            fft::real_to_coeffs(&acc.rqj[wi][1], n, n, i64::MAX),
            fft::real_to_coeffs(&acc.rqj[wi][2], n, n, i64::MAX),
        ];
        fields.push(SpectralField { grid, comps, mean_zero: false });
    }
    let tg = TimeGrid { t0: conv.tg.time(lo), dt: conv.tg.dt, len };
    // entrywise material derivative; treat the three entries as components
    let anchor_sup = r::<T>(tensor_sup(r_anchor)).max(T::min_positive_value());
    let dfdt = transport::time_derivative(&TimeSampledField::new(tg, fields.clone()))?;
    let mut worst_rel = T::zero();
    let mut worst_drift = T::zero();
    // the natural scale of D_t on the stage: the cutoff rate times the field
    let rate_scale = anchor_sup / tau_window;
    for wi in 0..len {
        let si = lo + wi;
        let mut res_sup = T::zero();
        for e in 0..3 {
            let entry = SpectralField {
                grid,
                comps: vec![fields[wi].comps[e].clone()],
                mean_zero: false,
            };
            let adv = ops::advect(&conv.samples[si], &entry, grid, None)?;
            let ddt = SpectralField {
                grid,
                comps: vec![dfdt.samples[wi].comps[e].clone()],
                mean_zero: false,
            };
            let resid = ddt.add(&adv)?;
            res_sup = res_sup.max(norms::sup_norm(&resid));
        }
        worst_rel = worst_rel.max(res_sup / rate_scale);
        // sup-norm invariance of the transported tensor
        let sup_here: T = r::<T>(tensor_sup(&SymTensorField {
            grid,
            e11: fields[wi].comps[0].clone(),
            e12: fields[wi].comps[1].clone(),
            e22: fields[wi].comps[2].clone(),
            trace_free: false,
        }));
        worst_drift = worst_drift.max((sup_here - anchor_sup).abs() / anchor_sup);
    }
    rep.dtq_residual_rel = rep.dtq_residual_rel.max(worst_rel.to_f64_lossy());
    rep.sup_transport_drift = rep.sup_transport_drift.max(worst_drift.to_f64_lossy());

    // Jacobian deviation at a few window samples
    for wi in [0usize, len / 2, len - 1] {
        let d0 = fft::real_to_coeffs(&acc.flow.disp[wi][0], n, n, i64::MAX);
        let d1 = fft::real_to_coeffs(&acc.flow.disp[wi][1], n, n, i64::MAX);
        let f0 = SpectralField { grid, comps: vec![d0], mean_zero: false };
        let f1 = SpectralField { grid, comps: vec![d1], mean_zero: false };
        let g0 = ops::grad(&f0, 0);
        let g1 = ops::grad(&f1, 0);
        let a11 = fft::coeffs_to_real(&g0.comps[0], n, n);
        let a12 = fft::coeffs_to_real(&g0.comps[1], n, n);
        let a21 = fft::coeffs_to_real(&g1.comps[0], n, n);
        let a22 = fft::coeffs_to_real(&g1.comps[1], n, n);
        let mut dev = T::zero();
        for node in 0..n * n {
            let det = (T::one() + a11[node]) * (T::one() + a22[node]) - a12[node] * a21[node];
            dev = dev.max((det - T::one()).abs());
        }
        rep.jacobian_dev = rep.jacobian_dev.max(dev.to_f64_lossy());
    }
    Ok(())
}
