//! Exact spectral calculus: fractional Laplacian, Riesz/Leray/perp operators,
//! inverse divergence, frequency projectors, and dealiased products.

use num_complex::Complex;

use crate::error::{CoreError, Result};
use crate::fft;
use crate::field::{SpectralField, SymTensorField};
use crate::grid::Grid;
use crate::scalar::{r, Real};
use crate::smooth;

fn require_mean_zero<T: Real>(f: &SpectralField<T>, op: &'static str) -> Result<()> {
    for c in &f.comps {
        if c[0].norm() > r::<T>(1e-13) {
            return Err(CoreError::Domain {
                op,
                msg: format!("operator undefined on nonzero-mean input (mean {:e})", c[0].norm()),
            });
        }
    }
    Ok(())
}

/// `Lambda^r`: Fourier multiplier `|k|^r`; the zero mode maps to zero.
pub fn fractional_laplacian<T: Real>(f: &SpectralField<T>, order: T) -> Result<SpectralField<T>> {
    if order < T::zero() {
        require_mean_zero(f, "fractional_laplacian")?;
    }
    let mut out = f.clone();
    let half = T::of(0.5);
    for c in &mut out.comps {
        for (flat, k1, k2) in f.grid.iter_k() {
            let ksq = T::from_i64(k1 * k1 + k2 * k2).unwrap();
            if ksq == T::zero() {
                c[flat] = Complex::new(T::zero(), T::zero());
            } else {
                c[flat] = c[flat] * ksq.powf(order * half);
            }
        }
    }
    out.mean_zero = true;
    Ok(out)
}

/// Leray projection onto divergence-free fields: per mode `Id - k k^T/|k|^2`.
pub fn leray_project<T: Real>(f: &SpectralField<T>) -> Result<SpectralField<T>> {
    if !f.is_vector() {
        return Err(CoreError::Shape("leray_project needs a 2-component field".into()));
    }
    let mut out = f.clone();
    for (flat, k1, k2) in f.grid.iter_k() {
        let ksq = T::from_i64(k1 * k1 + k2 * k2).unwrap();
        if ksq == T::zero() {
            continue;
        }
        let (a, b) = (f.comps[0][flat], f.comps[1][flat]);
        let kk1 = T::from_i64(k1).unwrap();
        let kk2 = T::from_i64(k2).unwrap();
        let dot = (a * kk1 + b * kk2) / ksq;
        out.comps[0][flat] = a - dot * kk1;
        out.comps[1][flat] = b - dot * kk2;
    }
    Ok(out)
}

/// Inverse divergence `B`: `(Bf)^{ij} = -d_j Lambda^{-2} f_i - d_i Lambda^{-2} f_j`
/// after mean subtraction and Leray projection of the input. The output is
/// symmetric by storage and trace-free mode by mode.
pub fn inverse_divergence<T: Real>(f: &SpectralField<T>) -> Result<SymTensorField<T>> {
    if !f.is_vector() {
        return Err(CoreError::Shape("inverse_divergence needs a 2-component field".into()));
    }
    let mut g = f.clone();
    g.subtract_mean();
    let g = leray_project(&g)?;
    let grid = g.grid;
    let mut out = SymTensorField::zeros(grid);
    for (flat, k1, k2) in grid.iter_k() {
        let ksq = T::from_i64(k1 * k1 + k2 * k2).unwrap();
        if ksq == T::zero() {
            continue;
        }
        let inv = T::one() / ksq;
        let i = Complex::new(T::zero(), T::one());
        let kk1 = T::from_i64(k1).unwrap();
        let kk2 = T::from_i64(k2).unwrap();
        let (f1, f2) = (g.comps[0][flat], g.comps[1][flat]);
        // -i (k_j f_i + k_i f_j) / |k|^2
        out.e11[flat] = -i * (f1 * kk1 + f1 * kk1) * inv;
        out.e12[flat] = -i * (f1 * kk2 + f2 * kk1) * inv;
        out.e22[flat] = -i * (f2 * kk2 + f2 * kk2) * inv;
    }
    out.trace_free = true;
    Ok(out)
}

/// Gradient of a scalar: `(ik_1 f, ik_2 f)`.
pub fn grad<T: Real>(f: &SpectralField<T>, comp: usize) -> SpectralField<T> {
    let grid = f.grid;
    let mut out = SpectralField::vector(grid);
    for (flat, k1, k2) in grid.iter_k() {
        let i = Complex::new(T::zero(), T::one());
        let v = f.comps[comp][flat];
        out.comps[0][flat] = v * (i * T::from_i64(k1).unwrap());
        out.comps[1][flat] = v * (i * T::from_i64(k2).unwrap());
    }
    out
}

/// Divergence of a vector: `ik . f`.
pub fn divergence<T: Real>(f: &SpectralField<T>) -> Result<SpectralField<T>> {
    if !f.is_vector() {
        return Err(CoreError::Shape("divergence needs a 2-component field".into()));
    }
    let grid = f.grid;
    let mut out = SpectralField::scalar(grid);
    for (flat, k1, k2) in grid.iter_k() {
        let i = Complex::new(T::zero(), T::one());
        out.comps[0][flat] =
            i * (f.comps[0][flat] * T::from_i64(k1).unwrap() + f.comps[1][flat] * T::from_i64(k2).unwrap());
    }
    out.mean_zero = true;
    Ok(out)
}

/// Perp divergence `grad^perp . f = -d_2 f_1 + d_1 f_2` (the potential vorticity).
pub fn perp_divergence<T: Real>(f: &SpectralField<T>) -> Result<SpectralField<T>> {
    if !f.is_vector() {
        return Err(CoreError::Shape("perp_divergence needs a 2-component field".into()));
    }
    let grid = f.grid;
    let mut out = SpectralField::scalar(grid);
    for (flat, k1, k2) in grid.iter_k() {
        let i = Complex::new(T::zero(), T::one());
        out.comps[0][flat] =
            i * (f.comps[1][flat] * T::from_i64(k1).unwrap() - f.comps[0][flat] * T::from_i64(k2).unwrap());
    }
    out.mean_zero = true;
    Ok(out)
}

/// Riesz transform component `R_j`: classical symbol `-i k_j / |k|`
/// (the sign drops out of `R x R`, so the Leray identity is unaffected);
/// needs mean-zero input.
pub fn riesz<T: Real>(f: &SpectralField<T>, comp: usize, j: usize) -> Result<SpectralField<T>> {
    require_mean_zero(f, "riesz")?;
    let grid = f.grid;
    let mut out = SpectralField::scalar(grid);
    for (flat, k1, k2) in grid.iter_k() {
        let ksq = T::from_i64(k1 * k1 + k2 * k2).unwrap();
        if ksq == T::zero() {
            continue;
        }
        let kj = T::from_i64(if j == 0 { k1 } else { k2 }).unwrap();
        let i = Complex::new(T::zero(), T::one());
        out.comps[0][flat] = f.comps[comp][flat] * (-i * (kj / ksq.sqrt()));
    }
    out.mean_zero = true;
    Ok(out)
}

/// Frequency projector kinds.
#[derive(Debug, Clone, Copy)]
pub enum BandKind<T: Real> {
    /// Hard truncation: keep modes with `|k| <= radius`.
    Ball { radius: T },
    /// Smooth bump centered at `lambda * kdir`, plateau `|xi/lambda - k| <= 1/16`,
    /// support `<= 1/8`.
    ShiftedBump { kdir: [T; 2], lambda: T },
    /// Smooth annulus: 1 on `[3 lambda/8, 3 lambda]`, supported in `[lambda/4, 4 lambda]`.
    AnnulusTilde { lambda: T },
}

/// Scalar symbol of a band projector at wavenumber `k`.
pub fn band_symbol<T: Real>(kind: &BandKind<T>, k1: i64, k2: i64) -> T {
    match *kind {
        BandKind::Ball { radius } => {
            let ksq = T::from_i64(k1 * k1 + k2 * k2).unwrap();
            if ksq <= radius * radius {
                T::one()
            } else {
                T::zero()
            }
        }
        BandKind::ShiftedBump { kdir, lambda } => {
            let x1 = T::from_i64(k1).unwrap() / lambda - kdir[0];
            let x2 = T::from_i64(k2).unwrap() / lambda - kdir[1];
            let rad = (x1 * x1 + x2 * x2).sqrt().to_f64_lossy();
            r(smooth::radial_plateau(rad, 1.0 / 16.0, 1.0 / 8.0))
        }
        BandKind::AnnulusTilde { lambda } => {
            let rad = T::from_i64(k1 * k1 + k2 * k2).unwrap().sqrt().to_f64_lossy();
            let lam = lambda.to_f64_lossy();
            if rad < lam / 4.0 || rad > 4.0 * lam {
                T::zero()
            } else if rad < 3.0 * lam / 8.0 {
                r(smooth::smooth_step((rad - lam / 4.0) / (lam / 8.0)))
            } else if rad <= 3.0 * lam {
                T::one()
            } else {
                r(1.0 - smooth::smooth_step((rad - 3.0 * lam) / lam))
            }
        }
    }
}

/// Apply a band projector to every component.
pub fn band_project<T: Real>(f: &SpectralField<T>, kind: BandKind<T>) -> SpectralField<T> {
    let mut out = f.clone();
    for c in &mut out.comps {
        for (flat, k1, k2) in f.grid.iter_k() {
            let s = band_symbol(&kind, k1, k2);
            if s != T::one() {
                c[flat] = c[flat] * s;
            }
        }
    }
    out
}

/// Pick the product evaluation grid so every retained mode is alias-free
/// (images of source modes up to `band_a + band_b` land beyond `keep`) and
/// representable (`m/2 - 1 >= keep`).
pub fn product_grid_size(band_a: f64, band_b: f64, keep: f64) -> usize {
    let alias_free = (band_a + band_b + keep).ceil() as usize + 1;
    let representable = (2.0 * keep).ceil() as usize + 2;
    fft::fft_friendly_size(alias_free.max(representable).max(8))
}

/// Dealiased pointwise product of two scalar components.
///
/// `keep` limits the retained output band (defaults to everything the output
/// grid can hold). The evaluation grid is grown until no alias image of the
/// true product band can reach a retained mode, which reduces to the
/// classical 3/2 rule for full-band operands.
pub fn multiply<T: Real>(
    a: &SpectralField<T>,
    ca: usize,
    b: &SpectralField<T>,
    cb: usize,
    out_grid: Grid,
    keep: Option<T>,
) -> SpectralField<T> {
    let band_a = (a.band_radius_sq() as f64).sqrt();
    let band_b = (b.band_radius_sq() as f64).sqrt();
    let nyq_keep = (out_grid.nyquist() - 1) as f64;
    let keep = keep
        .map(|k| k.to_f64_lossy())
        .unwrap_or(nyq_keep)
        .min(nyq_keep)
        .min(band_a + band_b);
    let m = product_grid_size(band_a, band_b, keep);
    let pa = fft::coeffs_to_physical(&a.comps[ca], a.grid.n(), m);
    let pb = fft::coeffs_to_physical(&b.comps[cb], b.grid.n(), m);
    let mut prod: Vec<Complex<T>> = pa
        .iter()
        .zip(pb.iter())
        .map(|(x, y)| Complex::new(x.re * y.re - x.im * y.im, x.re * y.im + x.im * y.re))
        .collect();
    let keep_sq = (keep * keep).floor() as i64;
    let coeffs = fft::physical_to_coeffs(&mut prod, m, out_grid.n(), keep_sq);
    SpectralField {
        grid: out_grid,
        comps: vec![coeffs],
        mean_zero: false,
    }
}

/// Advection `(u . grad) f` of every component of `f`, dealiased.
pub fn advect<T: Real>(
    u: &SpectralField<T>,
    f: &SpectralField<T>,
    out_grid: Grid,
    keep: Option<T>,
) -> Result<SpectralField<T>> {
    if !u.is_vector() {
        return Err(CoreError::Shape("advect needs a vector velocity".into()));
    }
    let mut out = SpectralField::zeros(out_grid, f.ncomp());
    for ci in 0..f.ncomp() {
        let df = grad(f, ci);
        let t1 = multiply(u, 0, &df, 0, out_grid, keep);
        let t2 = multiply(u, 1, &df, 1, out_grid, keep);
        for (o, (x, y)) in out.comps[ci]
            .iter_mut()
            .zip(t1.comps[0].iter().zip(t2.comps[0].iter()))
        {
            *o = *x + *y;
        }
    }
    out.mean_zero = false;
    Ok(out)
}

/// `u^perp (grad^perp . v)`: the compact form of
/// `(u·grad)v - (grad v)^T·u`, exact pointwise for any fields.
pub fn perp_vorticity_form<T: Real>(
    u: &SpectralField<T>,
    v: &SpectralField<T>,
    out_grid: Grid,
    keep: Option<T>,
) -> Result<SpectralField<T>> {
    let omega = perp_divergence(v)?;
    let mut out = SpectralField::vector(out_grid);
    let t0 = multiply(u, 1, &omega, 0, out_grid, keep); // -u_2 * omega
    let t1 = multiply(u, 0, &omega, 0, out_grid, keep); //  u_1 * omega
    out.comps[0] = t0.comps[0].iter().map(|c| -*c).collect();
    out.comps[1] = t1.comps[0].clone();
    out.mean_zero = false;
    Ok(out)
}

/// `(grad v)^T . u` with entries `(d_i v_j) u_j`, dealiased.
pub fn grad_transpose_dot<T: Real>(
    v: &SpectralField<T>,
    u: &SpectralField<T>,
    out_grid: Grid,
    keep: Option<T>,
) -> Result<SpectralField<T>> {
    if !u.is_vector() || !v.is_vector() {
        return Err(CoreError::Shape("grad_transpose_dot needs vector fields".into()));
    }
    let mut out = SpectralField::vector(out_grid);
    for i in 0..2 {
        let mut acc = vec![Complex::new(T::zero(), T::zero()); out_grid.len()];
        for j in 0..2 {
            let dv = grad(v, j); // (d_1 v_j, d_2 v_j)
            let t = multiply(&dv, i, u, j, out_grid, keep);
            for (a, b) in acc.iter_mut().zip(t.comps[0].iter()) {
                *a = *a + *b;
            }
        }
        out.comps[i] = acc;
    }
    out.mean_zero = false;
    Ok(out)
}

/// Dot product of two vector fields, dealiased.
pub fn dot<T: Real>(
    a: &SpectralField<T>,
    b: &SpectralField<T>,
    out_grid: Grid,
    keep: Option<T>,
) -> Result<SpectralField<T>> {
    if !a.is_vector() || !b.is_vector() {
        return Err(CoreError::Shape("dot needs vector fields".into()));
    }
    let t0 = multiply(a, 0, b, 0, out_grid, keep);
    let t1 = multiply(a, 1, b, 1, out_grid, keep);
    let mut out = SpectralField::scalar(out_grid);
    out.comps[0] = t0.comps[0].iter().zip(t1.comps[0].iter()).map(|(x, y)| *x + *y).collect();
    out.mean_zero = false;
    Ok(out)
}

/// Scalar-times-vector product, dealiased.
pub fn scalar_times_vector<T: Real>(
    s: &SpectralField<T>,
    v: &SpectralField<T>,
    out_grid: Grid,
    keep: Option<T>,
) -> Result<SpectralField<T>> {
    if !v.is_vector() {
        return Err(CoreError::Shape("scalar_times_vector needs a vector".into()));
    }
    let mut out = SpectralField::vector(out_grid);
    for i in 0..2 {
        out.comps[i] = multiply(s, 0, v, i, out_grid, keep).comps[0].clone();
    }
    out.mean_zero = false;
    Ok(out)
}
