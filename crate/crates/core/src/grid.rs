//! Collocation grid on the torus `T^2 = (R/[-pi,pi])^2`.

use crate::error::{CoreError, Result};
use crate::scalar::Real;
use serde::{Deserialize, Serialize};

/// Uniform `n x n` grid. Physical nodes are `x_m = -pi + 2 pi m / n`;
/// representable wavenumbers are integer vectors with `|k_i| <= n/2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
    /// Rational padding factor for dealiased products, numerator/denominator.
    pad: (u32, u32),
}

impl Grid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 8 || !n.is_power_of_two() {
            return Err(CoreError::Config(format!(
                "grid size must be a power of two >= 8, got {n}"
            )));
        }
        Ok(Grid { n, pad: (3, 2) })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of samples on the dealiased (padded) evaluation grid.
    #[inline]
    pub fn padded_n(&self) -> usize {
        self.n * self.pad.0 as usize / self.pad.1 as usize
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Nyquist index: coefficients at `|k_i| = n/2` are kept identically zero
    /// so every stored field has an unambiguous Hermitian pairing.
    #[inline]
    pub fn nyquist(&self) -> i64 {
        (self.n / 2) as i64
    }

    /// Signed wavenumber of a storage index along one axis.
    #[inline]
    pub fn wavenumber(&self, idx: usize) -> i64 {
        let n = self.n as i64;
        let i = idx as i64;
        if i <= n / 2 {
            i
        } else {
            i - n
        }
    }

    /// Storage index of a signed wavenumber along one axis.
    #[inline]
    pub fn index_of(&self, k: i64) -> usize {
        let n = self.n as i64;
        debug_assert!(k > -n / 2 && k <= n / 2);
        ((k + n) % n) as usize
    }

    /// Flat index of the coefficient at `k = (k1, k2)`.
    #[inline]
    pub fn coeff_index(&self, k1: i64, k2: i64) -> usize {
        self.index_of(k1) * self.n + self.index_of(k2)
    }

    /// Physical node coordinate along one axis.
    #[inline]
    pub fn node<T: Real>(&self, m: usize) -> T {
        let two_pi = T::PI() + T::PI();
        -T::PI() + two_pi * T::from_usize(m).unwrap() / T::from_usize(self.n).unwrap()
    }

    /// Iterate `(flat, k1, k2)` over every stored coefficient.
    pub fn iter_k(&self) -> impl Iterator<Item = (usize, i64, i64)> + '_ {
        let n = self.n;
        (0..n * n).map(move |flat| (flat, self.wavenumber(flat / n), self.wavenumber(flat % n)))
    }
}
