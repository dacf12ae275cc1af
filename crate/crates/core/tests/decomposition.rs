//! The Reynolds regrouping is an algebraic identity in the participating
//! fields: for arbitrary divergence-free inputs, the Leray-projected residual
//! difference of the updated and mollified pairs equals the projected sum of
//! the assembled divergence forms. This pins the transcription of every term
//! before the dynamic pipeline enters the picture.

use num_complex::Complex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use sqg_spectral::field::SpectralField;
use sqg_spectral::ops;
use sqg_spectral::Grid;

fn random_divfree(grid: Grid, band: i64, rng: &mut ChaCha8Rng) -> SpectralField<f64> {
    let mut f = SpectralField::<f64>::vector(grid);
    for _ in 0..14 {
        let k1 = rng.gen_range(-band..=band);
        let k2 = rng.gen_range(-band..=band);
        if (k1 == 0 && k2 == 0) || k1 * k1 + k2 * k2 > band * band {
            continue;
        }
        let nrm = ((k1 * k1 + k2 * k2) as f64).sqrt();
        let dir = [-k2 as f64 / nrm, k1 as f64 / nrm];
        let c = Complex::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
        for comp in 0..2 {
            let i = grid.coeff_index(k1, k2);
            let j = grid.coeff_index(-k1, -k2);
            f.comps[comp][i] += c * dir[comp];
            f.comps[comp][j] += (c * dir[comp]).conj();
        }
    }
    f.mean_zero = true;
    f
}

/// `(Lambda^{2-g2} v . grad) v - (grad v)^T Lambda^{2-g2} v`, direct form.
fn momentum_nonlinearity(
    v: &SpectralField<f64>,
    gamma2: f64,
    grid: Grid,
) -> SpectralField<f64> {
    let u = ops::fractional_laplacian(v, 2.0 - gamma2).unwrap();
    ops::advect(&u, v, grid, None)
        .unwrap()
        .sub(&ops::grad_transpose_dot(v, &u, grid, None).unwrap())
        .unwrap()
}

#[test]
fn reynolds_regrouping_closes_on_random_fields() {
    let grid = Grid::new(64).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..4 {
        let gamma1 = [1.0, 1.4][trial % 2];
        let gamma2 = [1.0, 1.25][trial / 2];
        let order = 2.0 - gamma2;

        let yl = random_divfree(grid, 6, &mut rng);
        let w = random_divfree(grid, 9, &mut rng);
        let zq = random_divfree(grid, 4, &mut rng);
        let zq1 = random_divfree(grid, 5, &mut rng);
        let zl = random_divfree(grid, 4, &mut rng);
        let g = random_divfree(grid, 7, &mut rng); // stands in for d_t w
        let y1 = yl.add(&w).unwrap();

        // left side: residual difference plus the new linear terms
        let v_new = y1.add(&zq1).unwrap();
        let v_old = yl.add(&zl).unwrap();
        let lhs_raw = g
            .add(&momentum_nonlinearity(&v_new, gamma2, grid))
            .unwrap()
            .sub(&momentum_nonlinearity(&v_old, gamma2, grid))
            .unwrap()
            .add(&ops::fractional_laplacian(&w, gamma1).unwrap())
            .unwrap();
        let mut lhs = ops::leray_project(&lhs_raw).unwrap();
        lhs.subtract_mean();

        // right side: the divergence forms of the assembled parts
        let conv = ops::fractional_laplacian(&v_old, order).unwrap();
        let lam_w = ops::fractional_laplacian(&w, order).unwrap();
        let lam_yl = ops::fractional_laplacian(&yl, order).unwrap();
        let lam_zl = ops::fractional_laplacian(&zl, order).unwrap();
        let lam_y1 = ops::fractional_laplacian(&y1, order).unwrap();
        let kb: Option<f64> = None;
        let sg = |s: &SpectralField<f64>, v: &SpectralField<f64>| {
            ops::scalar_times_vector(s, v, grid, kb).unwrap()
        };

        // transport (with g in place of d_t w)
        let rt = g.add(&ops::advect(&conv, &w, grid, kb).unwrap()).unwrap();
        // nash
        let a_field = ops::fractional_laplacian(&yl.add(&zq).unwrap(), order).unwrap();
        let rn = ops::grad_transpose_dot(&a_field, &w, grid, kb)
            .unwrap()
            .add(&ops::advect(&lam_w, &yl, grid, kb).unwrap())
            .unwrap()
            .sub(&ops::grad_transpose_dot(&yl, &lam_w, grid, kb).unwrap())
            .unwrap();
        // linear
        let rl = ops::fractional_laplacian(&w, gamma1)
            .unwrap()
            .add(&sg(
                &ops::perp_divergence(&zl).unwrap(),
                &lam_w.perp().unwrap(),
            ))
            .unwrap();
        // oscillation without the div R_l part (cancels against the mollified eq.)
        let ro = ops::advect(&lam_w, &w, grid, kb)
            .unwrap()
            .sub(&ops::grad_transpose_dot(&w, &lam_w, grid, kb).unwrap())
            .unwrap();
        // commutator 2: fourteen z-difference terms
        let d1 = zq1.sub(&zq).unwrap();
        let d2 = zq.sub(&zq1).unwrap();
        let d3 = zq.sub(&zl).unwrap();
        let d4 = zl.sub(&zq).unwrap();
        let lam_d1 = ops::fractional_laplacian(&d1, order).unwrap();
        let lam_d3 = ops::fractional_laplacian(&d3, order).unwrap();
        let mut rc2 = ops::advect(&lam_y1, &d1, grid, kb).unwrap();
        rc2 = rc2.add(&ops::advect(&lam_d1, &y1, grid, kb).unwrap()).unwrap();
        rc2 = rc2
            .add(&ops::grad_transpose_dot(&yl, &ops::fractional_laplacian(&d2, order).unwrap(), grid, kb).unwrap())
            .unwrap();
        rc2 = rc2.add(&ops::grad_transpose_dot(&d2, &lam_yl, grid, kb).unwrap()).unwrap();
        rc2 = rc2.add(&ops::grad_transpose_dot(&lam_d1, &w, grid, kb).unwrap()).unwrap();
        rc2 = rc2
            .sub(&sg(&ops::perp_divergence(&d4).unwrap(), &lam_w.perp().unwrap()))
            .unwrap();
        rc2 = rc2.add(&ops::grad_transpose_dot(&d2, &lam_w, grid, kb).unwrap()).unwrap();
        rc2 = rc2
            .add(&sg(&ops::perp_divergence(&d3).unwrap(), &lam_yl.perp().unwrap()))
            .unwrap();
        rc2 = rc2.add(&ops::advect(&lam_d3, &w, grid, kb).unwrap()).unwrap();
        rc2 = rc2
            .add(&sg(&ops::perp_divergence(&yl).unwrap(), &lam_d3.perp().unwrap()))
            .unwrap();
        rc2 = rc2
            .add(&sg(&ops::perp_divergence(&zq1).unwrap(), &lam_d1.perp().unwrap()))
            .unwrap();
        rc2 = rc2
            .add(&sg(&ops::perp_divergence(&zq1).unwrap(), &lam_d3.perp().unwrap()))
            .unwrap();
        rc2 = rc2
            .add(&sg(&ops::perp_divergence(&d1).unwrap(), &lam_zl.perp().unwrap()))
            .unwrap();
        rc2 = rc2
            .add(&sg(&ops::perp_divergence(&d3).unwrap(), &lam_zl.perp().unwrap()))
            .unwrap();

        let rhs_raw = rt.add(&rn).unwrap().add(&rl).unwrap().add(&ro).unwrap().add(&rc2).unwrap();
        let mut rhs = ops::leray_project(&rhs_raw).unwrap();
        rhs.subtract_mean();

        let d = lhs.sub(&rhs).unwrap();
        let sup_d = d
            .comps
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0f64, |a, v| a.max(v.norm()));
        let scale = lhs
            .comps
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0f64, |a, v| a.max(v.norm()));
        assert!(
            sup_d / scale < 1e-12,
            "trial {trial} (g1={gamma1}, g2={gamma2}): relative defect {:.3e}",
            sup_d / scale
        );
    }
}
