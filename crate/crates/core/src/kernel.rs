//! Process parameters and covariance kernel of `Z_t = W_{k+t}`, `t ∈ [0, T]`.

use crate::error::{Error, Result};

/// The pair `(k, T)`: variance of the Gaussian starting point and horizon.
///
/// Validated once at construction; every other module takes a
/// `ProcessParams` as proof that `k ≥ 0` and `T > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessParams {
    k: f64,
    horizon: f64,
}

impl ProcessParams {
    pub fn new(k: f64, horizon: f64) -> Result<Self> {
        if !(k.is_finite() && k >= 0.0) {
            return Err(Error::Domain {
                what: "k",
                value: k,
                expected: "finite and k >= 0",
            });
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Domain {
                what: "T",
                value: horizon,
                expected: "finite and T > 0",
            });
        }
        Ok(Self { k, horizon })
    }

    /// The classical Wiener process on `[0, T]`.
    pub fn wiener(horizon: f64) -> Result<Self> {
        Self::new(0.0, horizon)
    }

    #[inline]
    pub fn k(&self) -> f64 {
        self.k
    }

    #[inline]
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Slope `k/T` of the line in `cot(x) = (k/T) x`.
    #[inline]
    pub fn slope(&self) -> f64 {
        self.k / self.horizon
    }

    /// `cov(Z_t, Z_s) = (k+t) ∧ (k+s)`.
    pub fn covariance(&self, t: f64, s: f64) -> Result<f64> {
        self.check_time("t", t)?;
        self.check_time("s", s)?;
        Ok(self.covariance_unchecked(t, s))
    }

    /// Kernel evaluation without the domain check, for quadrature loops
    /// whose nodes are in `[0, T]` by construction.
    #[inline]
    pub fn covariance_unchecked(&self, t: f64, s: f64) -> f64 {
        self.k + t.min(s)
    }

    /// `∫₀ᵀ K(t,t) dt = kT + T²/2`, which equals the sum of all eigenvalues.
    pub fn trace(&self) -> f64 {
        self.k * self.horizon + 0.5 * self.horizon * self.horizon
    }

    fn check_time(&self, what: &'static str, t: f64) -> Result<()> {
        if t.is_finite() && (0.0..=self.horizon).contains(&t) {
            Ok(())
        } else {
            Err(Error::Domain {
                what,
                value: t,
                expected: "time in [0, T]",
            })
        }
    }
}
