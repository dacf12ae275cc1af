//! The one smooth profile everything is built from: the compactly supported
//! bump `exp(-1/(1-t^2))` and its normalized cumulative integral.
//!
//! The cumulative is tabulated once at high resolution and interpolated with
//! cubic Hermite segments (the derivative is known in closed form), which
//! keeps evaluation cheap and smooth to ~1e-14.

use std::sync::OnceLock;

const TABLE_LEN: usize = 8192;

/// `exp(-1/(u(1-u)))` on (0,1), zero outside. Vanishes to all orders at both ends.
#[inline]
pub fn edge_bump(u: f64) -> f64 {
    if u <= 0.0 || u >= 1.0 {
        0.0
    } else {
        (-1.0 / (u * (1.0 - u))).exp()
    }
}

/// The standard bump `exp(-1/(1-t^2))` on (-1,1), zero outside.
#[inline]
pub fn radial_bump(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - t * t)).exp()
    }
}

struct StepTable {
    values: Vec<f64>,
    /// Normalization constant: total integral of `edge_bump` over (0,1).
    total: f64,
}

fn step_table() -> &'static StepTable {
    static TABLE: OnceLock<StepTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        // Composite Simpson on a uniform grid; the integrand is C^infinity
        // with all derivatives vanishing at the endpoints.
        let n = TABLE_LEN;
        let h = 1.0 / n as f64;
        let mut values = Vec::with_capacity(n + 1);
        values.push(0.0);
        let mut acc = 0.0;
        for i in 0..n {
            let a = i as f64 * h;
            acc += h / 6.0 * (edge_bump(a) + 4.0 * edge_bump(a + 0.5 * h) + edge_bump(a + h));
            values.push(acc);
        }
        let total = acc;
        StepTable { values, total }
    })
}

/// Smooth monotone step: 0 for `u <= 0`, 1 for `u >= 1`, C^infinity, and
/// symmetric in the sense `smooth_step(u) + smooth_step(1-u) = 1`.
pub fn smooth_step(u: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    if u >= 1.0 {
        return 1.0;
    }
    let t = step_table();
    let x = u * TABLE_LEN as f64;
    let i = (x as usize).min(TABLE_LEN - 1);
    let frac = x - i as f64;
    let h = 1.0 / TABLE_LEN as f64;
    let (y0, y1) = (t.values[i], t.values[i + 1]);
    let (d0, d1) = (edge_bump(i as f64 * h) * h, edge_bump((i + 1) as f64 * h) * h);
    // Cubic Hermite on the segment.
    let f2 = frac * frac;
    let f3 = f2 * frac;
    let v = (2.0 * f3 - 3.0 * f2 + 1.0) * y0
        + (f3 - 2.0 * f2 + frac) * d0
        + (-2.0 * f3 + 3.0 * f2) * y1
        + (f3 - f2) * d1;
    v / t.total
}

/// Derivative of `smooth_step`, exact up to the normalization constant.
pub fn smooth_step_deriv(u: f64) -> f64 {
    edge_bump(u) / step_table().total
}

/// Radial plateau symbol: 1 on `[0, plateau]`, 0 on `[support, inf)`,
/// smooth monotone in between.
pub fn radial_plateau(rad: f64, plateau: f64, support: f64) -> f64 {
    debug_assert!(plateau < support);
    if rad <= plateau {
        1.0
    } else if rad >= support {
        0.0
    } else {
        1.0 - smooth_step((rad - plateau) / (support - plateau))
    }
}

/// Squared-partition cutoff profile chi: supp in (-3/4, 3/4) (a subset of the
/// required (-1,1)), identically 1 on [-1/4, 1/4], with
/// `chi(s)^2 + chi(1-s)^2 = 1` on the overlap.
pub fn chi_profile(s: f64) -> f64 {
    let a = s.abs();
    if a <= 0.25 {
        1.0
    } else if a >= 0.75 {
        0.0
    } else {
        let u = (a - 0.25) * 2.0;
        (std::f64::consts::FRAC_PI_2 * smooth_step(u)).cos()
    }
}

/// Derivative of `chi_profile`.
pub fn chi_profile_deriv(s: f64) -> f64 {
    let a = s.abs();
    if a <= 0.25 || a >= 0.75 {
        0.0
    }
    else {
        let u = (a - 0.25) * 2.0;
        let d = -(std::f64::consts::FRAC_PI_2 * smooth_step(u)).sin()
            * std::f64::consts::FRAC_PI_2
            * smooth_step_deriv(u)
            * 2.0;
        if s < 0.0 {
            -d
        } else {
            d
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_endpoints_and_symmetry() {
        assert_eq!(smooth_step(-1.0), 0.0);
        assert_eq!(smooth_step(2.0), 1.0);
        for i in 0..=100 {
            let u = i as f64 / 100.0;
            let s = smooth_step(u) + smooth_step(1.0 - u);
            assert!((s - 1.0).abs() < 1e-12, "u={u}: {s}");
        }
    }

    #[test]
    fn chi_squared_partition() {
        for i in 0..=1000 {
            let s = i as f64 / 1000.0;
            let v = chi_profile(s).powi(2) + chi_profile(1.0 - s).powi(2);
            assert!((v - 1.0).abs() < 1e-12, "s={s}: {v}");
        }
    }

    #[test]
    fn chi_derivative_consistent() {
        let h = 1e-6;
        for &s in &[0.3, 0.5, -0.4, 0.7] {
            let fd = (chi_profile(s + h) - chi_profile(s - h)) / (2.0 * h);
            assert!((fd - chi_profile_deriv(s)).abs() < 1e-6, "s={s}");
        }
    }
}
