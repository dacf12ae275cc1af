//! Direction families on the unit circle and the 2-D geometric decomposition
//! `R = 1/2 sum_k gamma_k(R)^2 (k^perp x k^perp)` for symmetric matrices near
//! the identity, together with the wave profiles `b_k`, `c_k`.

use num_complex::Complex;
use num_rational::Ratio;
use serde::Serialize;

use crate::error::{CoreError, Result};
use crate::scalar::{r, Real};

/// Symmetric 2x2 matrix as `(m11, m12, m22)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sym2<T> {
    pub m11: T,
    pub m12: T,
    pub m22: T,
}

impl<T: Real> Sym2<T> {
    pub fn identity() -> Self {
        Sym2 { m11: T::one(), m12: T::zero(), m22: T::one() }
    }

    /// Operator (spectral) norm.
    pub fn op_norm(&self) -> T {
        let half = T::of(0.5);
        let tr = (self.m11 + self.m22) * half;
        let dev = (self.m11 - self.m22) * half;
        let disc = (dev * dev + self.m12 * self.m12).sqrt();
        (tr + disc).abs().max((tr - disc).abs())
    }

    pub fn sub_identity(&self) -> Self {
        Sym2 { m11: self.m11 - T::one(), m12: self.m12, m22: self.m22 - T::one() }
    }
}

/// One direction family: three plus/minus representative pairs with
/// `5k` integral, plus the exact linear solve sending a symmetric matrix to
/// the three squared coefficients.
#[derive(Debug, Clone)]
pub struct Family<T: Real> {
    /// Representatives as integer vectors `5k`.
    pub five_k: [[i64; 2]; 3],
    /// Row `i` of the solver maps `(r11, r12, r22)` to `gamma_{k_i}^2`.
    pub solver: [[T; 3]; 3],
}

impl<T: Real> Family<T> {
    /// Unit direction of representative `i`.
    pub fn dir(&self, i: usize) -> [T; 2] {
        let five = T::of(5.0);
        [
            T::from_i64(self.five_k[i][0]).unwrap() / five,
            T::from_i64(self.five_k[i][1]).unwrap() / five,
        ]
    }

    /// Squared coefficients for a matrix (no domain check here).
    pub fn solve_squares(&self, m: Sym2<T>) -> [T; 3] {
        let rhs = [m.m11, m.m12, m.m22];
        let mut out = [T::zero(); 3];
        for (i, row) in self.solver.iter().enumerate() {
            out[i] = row[0] * rhs[0] + row[1] * rhs[1] + row[2] * rhs[2];
        }
        out
    }

    /// Reconstruct `sum_reps x_i (k_i^perp x k_i^perp)` (equals
    /// `1/2 sum over the full +/- family`).
    pub fn reconstruct(&self, squares: [T; 3]) -> Sym2<T> {
        let mut m = Sym2 { m11: T::zero(), m12: T::zero(), m22: T::zero() };
        for i in 0..3 {
            let d = self.dir(i);
            let perp = [-d[1], d[0]];
            m.m11 += squares[i] * perp[0] * perp[0];
            m.m12 += squares[i] * perp[0] * perp[1];
            m.m22 += squares[i] * perp[1] * perp[1];
        }
        m
    }
}

#[derive(Debug, Clone)]
pub struct WaveSystem<T: Real> {
    pub families: [Family<T>; 2],
    pub eps_gamma: T,
}

fn ratio_to<T: Real>(q: Ratio<i64>) -> T {
    T::from_i64(*q.numer()).unwrap() / T::from_i64(*q.denom()).unwrap()
}

fn family_solver<T: Real>(five_k: [[i64; 2]; 3]) -> Result<[[T; 3]; 3]> {
    // Invert the exact rational 3x3 system mapping squares to matrix entries.
    type Q = Ratio<i64>;
    let mut cols = [[Q::from_integer(0); 3]; 3];
    for (i, fk) in five_k.iter().enumerate() {
        let kx = Q::new(fk[0], 5);
        let ky = Q::new(fk[1], 5);
        let (px, py) = (-ky, kx);
        cols[i] = [px * px, px * py, py * py];
    }
    // Matrix M with M[r][c] = entry r of k_c^perp x k_c^perp; solve M x = rhs.
    let m = |rr: usize, cc: usize| cols[cc][rr];
    let det = m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1))
        - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0))
        + m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
    if det == Q::from_integer(0) {
        return Err(CoreError::Invariant(
            "direction family does not span the symmetric matrices".into(),
        ));
    }
    let cof = |rr: usize, cc: usize| -> Q {
        let idx = |skip: usize| (0..3).filter(|&x| x != skip).collect::<Vec<_>>();
        let rs = idx(rr);
        let cs = idx(cc);
        let minor = m(rs[0], cs[0]) * m(rs[1], cs[1]) - m(rs[0], cs[1]) * m(rs[1], cs[0]);
        let sign = if (rr + cc) % 2 == 0 { Q::from_integer(1) } else { Q::from_integer(-1) };
        sign * minor
    };
    let mut inv = [[T::zero(); 3]; 3];
    for rr in 0..3 {
        for cc in 0..3 {
            inv[rr][cc] = ratio_to::<T>(cof(cc, rr) / det);
        }
    }
    Ok(inv)
}

/// The Pythagorean-quintuple families: the smallest integral realization of
/// two disjoint six-direction families with `5 Gamma_j` integral.
pub fn build_wave_system<T: Real>() -> Result<WaveSystem<T>> {
    let fam1_fk = [[5, 0], [3, 4], [3, -4]];
    let fam2_fk = [[0, 5], [4, 3], [4, -3]];
    let fam1 = Family { five_k: fam1_fk, solver: family_solver(fam1_fk)? };
    let fam2 = Family { five_k: fam2_fk, solver: family_solver(fam2_fk)? };
    let mut ws = WaveSystem { families: [fam1, fam2], eps_gamma: T::zero() };
    verify_structure(&ws)?;
    ws.eps_gamma = certify_eps_gamma(&ws);
    if ws.eps_gamma <= T::zero() {
        return Err(CoreError::Invariant("empty certified ball".into()));
    }
    Ok(ws)
}

/// Brute-force structural checks: unit length, integrality, disjointness,
/// minimum pair distance, rank.
fn verify_structure<T: Real>(ws: &WaveSystem<T>) -> Result<()> {
    let full = |fam: &Family<T>| -> Vec<[i64; 2]> {
        let mut v = Vec::new();
        for fk in fam.five_k {
            v.push(fk);
            v.push([-fk[0], -fk[1]]);
        }
        v
    };
    let f1 = full(&ws.families[0]);
    let f2 = full(&ws.families[1]);
    for k in f1.iter().chain(f2.iter()) {
        if k[0] * k[0] + k[1] * k[1] != 25 {
            return Err(CoreError::Invariant(format!("direction {k:?}/5 is not unit")));
        }
    }
    for a in &f1 {
        if f2.contains(a) {
            return Err(CoreError::Invariant("families are not disjoint".into()));
        }
    }
    for fam in [&f1, &f2] {
        for a in fam.iter() {
            for b in fam.iter() {
                let s = [a[0] + b[0], a[1] + b[1]];
                if s == [0, 0] {
                    continue;
                }
                // |k + k'| >= 1/2 <=> 4 |5k + 5k'|^2 >= 25, exactly in integers
                if 4 * (s[0] * s[0] + s[1] * s[1]) < 25 {
                    return Err(CoreError::Invariant(format!(
                        "pair sum {s:?}/5 shorter than 1/2"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Coefficient map `k -> gamma_k(R)` over a full family (six directions,
/// shared across each +/- pair). Errors outside the certified ball.
pub fn gamma_coefficients<T: Real>(
    ws: &WaveSystem<T>,
    family: usize,
    m: Sym2<T>,
) -> Result<[T; 3]> {
    let dev = m.sub_identity().op_norm();
    if dev > ws.eps_gamma * (T::one() + r(1e-12)) {
        return Err(CoreError::Domain {
            op: "gamma_coefficients",
            msg: format!(
                "matrix at distance {:e} from Id exceeds certified radius {:e}",
                dev.to_f64_lossy(),
                ws.eps_gamma.to_f64_lossy()
            ),
        });
    }
    let squares = ws.families[family].solve_squares(m);
    for (i, s) in squares.iter().enumerate() {
        if *s <= T::zero() {
            return Err(CoreError::Domain {
                op: "gamma_coefficients",
                msg: format!("nonpositive squared coefficient {i} inside certified ball"),
            });
        }
    }
    Ok([squares[0].sqrt(), squares[1].sqrt(), squares[2].sqrt()])
}

/// Deterministic sample of the unit sphere in (s11, s12, s22) coordinates,
/// rescaled so the symmetric matrix has unit operator norm.
fn boundary_samples<T: Real>(count: usize) -> Vec<Sym2<T>> {
    // Fibonacci sphere
    let golden = (1.0 + 5.0f64.sqrt()) / 2.0;
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
        let theta = 2.0 * std::f64::consts::PI * (i as f64 / golden).fract();
        let rad = (1.0 - z * z).sqrt();
        let (x, y) = (rad * theta.cos(), rad * theta.sin());
        let mut s = Sym2 { m11: r::<T>(x), m12: r::<T>(y), m22: r::<T>(z) };
        let nrm = s.op_norm();
        if nrm > T::zero() {
            s.m11 = s.m11 / nrm;
            s.m12 = s.m12 / nrm;
            s.m22 = s.m22 / nrm;
        }
        out.push(s);
    }
    out
}

const BOUNDARY_SAMPLES: usize = 10_000;
const SQUARE_FLOOR: f64 = 1e-8;

/// Largest radius (bisection to 1e-6) keeping every squared coefficient
/// above `1e-8` over a deterministic boundary sample of the ball. The
/// squared coefficients are affine in R, so boundary positivity is enough.
pub fn certify_eps_gamma<T: Real>(ws: &WaveSystem<T>) -> T {
    let samples = boundary_samples::<T>(BOUNDARY_SAMPLES);
    let ok = |radius: T| -> bool {
        for s in &samples {
            let m = Sym2 {
                m11: T::one() + s.m11 * radius,
                m12: s.m12 * radius,
                m22: T::one() + s.m22 * radius,
            };
            for fam in &ws.families {
                for x in fam.solve_squares(m) {
                    if x < r(SQUARE_FLOOR) {
                        return false;
                    }
                }
            }
        }
        true
    };
    let mut lo = T::zero();
    let mut hi = T::one();
    if ok(hi) {
        return hi;
    }
    while hi - lo > r(1e-6) {
        let mid = (lo + hi) * T::of(0.5);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Wave profile `b_k(xi) = i k^perp e^{i k . xi}` at a point.
pub fn b_k<T: Real>(dir: [T; 2], xi: [T; 2]) -> [Complex<T>; 2] {
    let phase = dir[0] * xi[0] + dir[1] * xi[1];
    let e = Complex::new(phase.cos(), phase.sin());
    let i = Complex::new(T::zero(), T::one());
    [i * e * -dir[1], i * e * dir[0]]
}

/// Wave profile `c_k(xi) = e^{i k . xi}`.
pub fn c_k<T: Real>(dir: [T; 2], xi: [T; 2]) -> Complex<T> {
    let phase = dir[0] * xi[0] + dir[1] * xi[1];
    Complex::new(phase.cos(), phase.sin())
}

#[derive(Serialize)]
struct FamilyDump {
    five_k: Vec<[i64; 2]>,
    solver: Vec<[f64; 3]>,
}

/// JSON description: directions as integer pairs over 5, the certified
/// radius, and the solver matrices.
pub fn wave_system_json<T: Real>(ws: &WaveSystem<T>) -> serde_json::Value {
    let fam = |f: &Family<T>| FamilyDump {
        five_k: f.five_k.to_vec(),
        solver: f
            .solver
            .iter()
            .map(|row| [row[0].to_f64_lossy(), row[1].to_f64_lossy(), row[2].to_f64_lossy()])
            .collect(),
    };
    serde_json::json!({
        "eps_gamma": ws.eps_gamma.to_f64_lossy(),
        "gamma1_family": fam(&ws.families[0]),
        "gamma2_family": fam(&ws.families[1]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_squares_match_hand_solution() {
        let ws = build_wave_system::<f64>().unwrap();
        for fam in 0..2 {
            let sq = ws.families[fam].solve_squares(Sym2::identity());
            // one direction on the axis with 7/16, two diagonal with 25/32
            let mut vals = sq.to_vec();
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert!((vals[0] - 7.0 / 16.0).abs() < 1e-14);
            assert!((vals[1] - 25.0 / 32.0).abs() < 1e-14);
            assert!((vals[2] - 25.0 / 32.0).abs() < 1e-14);
        }
    }

    #[test]
    fn reconstruction_identity_on_random_ball() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let ws = build_wave_system::<f64>().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for fam in 0..2 {
            for _ in 0..1000 {
                let mut s = Sym2 {
                    m11: rng.gen::<f64>() - 0.5,
                    m12: rng.gen::<f64>() - 0.5,
                    m22: rng.gen::<f64>() - 0.5,
                };
                let nrm = s.op_norm().max(1e-12);
                let scale = rng.gen::<f64>() * ws.eps_gamma / nrm;
                s.m11 *= scale;
                s.m12 *= scale;
                s.m22 *= scale;
                let m = Sym2 { m11: 1.0 + s.m11, m12: s.m12, m22: 1.0 + s.m22 };
                let g = gamma_coefficients(&ws, fam, m).unwrap();
                let rec = ws.families[fam].reconstruct([g[0] * g[0], g[1] * g[1], g[2] * g[2]]);
                assert!((rec.m11 - m.m11).abs() < 1e-12);
                assert!((rec.m12 - m.m12).abs() < 1e-12);
                assert!((rec.m22 - m.m22).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn certified_radius_reasonable() {
        let ws = build_wave_system::<f64>().unwrap();
        assert!(ws.eps_gamma >= 0.1, "eps_gamma = {}", ws.eps_gamma);
        assert!(ws.eps_gamma < 1.0);
        // outside the ball: domain error naming the radius
        let m = Sym2 { m11: 1.0 + 2.0 * ws.eps_gamma, m12: 0.0, m22: 1.0 };
        assert!(gamma_coefficients(&ws, 0, m).is_err());
    }

    #[test]
    fn family_sizes_and_integrality() {
        let ws = build_wave_system::<f64>().unwrap();
        for fam in &ws.families {
            assert_eq!(fam.five_k.len(), 3); // six with the +/- closure
            for fk in fam.five_k {
                assert_eq!(fk[0] * fk[0] + fk[1] * fk[1], 25);
            }
        }
        // 5*(3/5, 4/5) = (3,4)
        assert_eq!(ws.families[0].five_k[1], [3, 4]);
    }

    #[test]
    fn wave_profiles() {
        let dir = [3.0f64 / 5.0, 4.0 / 5.0];
        let xi = [0.3, -1.2];
        let b = b_k(dir, xi);
        let c = c_k(dir, xi);
        // b_k = grad_xi^perp c_k: components (-d2 c, d1 c) with d_j c = i k_j c
        let i = Complex::new(0.0, 1.0);
        assert!((b[0] - -(i * dir[1] * c)).norm() < 1e-15);
        assert!((b[1] - i * dir[0] * c).norm() < 1e-15);
        // conjugation symmetry
        let bm = b_k([-dir[0], -dir[1]], xi);
        assert!((bm[0] - b[0].conj()).norm() < 1e-15);
        assert!((bm[1] - b[1].conj()).norm() < 1e-15);
        // real combination over a +/- pair
        let a = 0.7;
        let sum0 = b[0] * a + bm[0] * a;
        assert!(sum0.im.abs() < 1e-15);
    }
}
