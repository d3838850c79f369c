//! Asymptotic rate constants and empirical rate fitting.
//!
//! For eigenvalues regularly varying as `φ(x) = c x^{-b} (ln x)^{-a}`, the
//! quadratic quantization error satisfies
//!
//! ```text
//! e_n ∼ (c (b/2)^{b−1} b/(b−1))^{1/2} (ln n)^{−(b−1)/2} (ln ln n)^{−a/2}
//! ```
//!
//! Fits here work on distortion `e_n²`, so an error exponent of `−1/2`
//! shows up as `−1`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::kernel::ProcessParams;
use crate::spectrum::CSeqEntry;

/// `φ(x) = c x^{-b} (ln x)^{-a}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegVarying {
    c: f64,
    b: f64,
    a: f64,
}

impl RegVarying {
    pub fn new(c: f64, b: f64, a: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Domain {
                what: "c",
                value: c,
                expected: "c > 0",
            });
        }
        if !(b > 1.0 && b.is_finite()) {
            return Err(Error::Domain {
                what: "b",
                value: b,
                expected: "b > 1",
            });
        }
        if !a.is_finite() {
            return Err(Error::Domain {
                what: "a",
                value: a,
                expected: "finite",
            });
        }
        Ok(Self { c, b, a })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn phi(&self, x: f64) -> f64 {
        self.c * x.powf(-self.b) * x.ln().powf(-self.a)
    }

    /// `ψ(x) = 1/(x φ(x))`.
    pub fn psi(&self, x: f64) -> f64 {
        1.0 / (x * self.phi(x))
    }
}

/// `e_n ∼ coefficient · (ln n)^{−log_exponent} · (ln ln n)^{−loglog_exponent}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SharpRate {
    pub coefficient: f64,
    pub log_exponent: f64,
    pub loglog_exponent: f64,
}

pub fn sharp_constant(phi: &RegVarying) -> SharpRate {
    let b = phi.b;
    SharpRate {
        coefficient: (phi.c * (b / 2.0).powf(b - 1.0) * b / (b - 1.0)).sqrt(),
        log_exponent: (b - 1.0) / 2.0,
        loglog_exponent: phi.a / 2.0,
    }
}

/// `(√2 T/π, √3 T/π) · (ln n)^{−1/2}` for a codebook size `n ≥ 2`.
pub fn theta_bounds(params: &ProcessParams, n: u64) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(Error::Domain {
            what: "n",
            value: n as f64,
            expected: "n >= 2",
        });
    }
    theta_bounds_ln(params, (n as f64).ln())
}

/// [`theta_bounds`] with `ln n` supplied directly.
pub fn theta_bounds_ln(params: &ProcessParams, ln_n: f64) -> Result<(f64, f64)> {
    if !(ln_n > 0.0 && ln_n.is_finite()) {
        return Err(Error::Domain {
            what: "ln n",
            value: ln_n,
            expected: "ln n > 0",
        });
    }
    let base = params.horizon() / (PI * ln_n.sqrt());
    Ok((2f64.sqrt() * base, 3f64.sqrt() * base))
}

/// `√(2 c∞) T/π`.
pub fn remark_constant(c_inf: f64, horizon: f64) -> Result<f64> {
    if !(c_inf >= 1.0 && c_inf.is_finite()) {
        return Err(Error::Domain {
            what: "c_inf",
            value: c_inf,
            expected: "c_inf >= 1",
        });
    }
    Ok((2.0 * c_inf).sqrt() * horizon / PI)
}

/// Limit of a c-sequence extrapolated from `c_ℓ ≈ estimate + slope/ℓ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CInfEstimate {
    pub estimate: f64,
    /// Largest absolute fit residual over the window.
    pub halfwidth: f64,
    pub slope: f64,
}

pub const MIN_CSEQ_LEN: usize = 100;

/// Least-squares fit of `c_ℓ = estimate + slope/ℓ` over the last `window`
/// fraction of `cseq`.
pub fn estimate_c_inf(cseq: &[CSeqEntry], window: f64) -> Result<CInfEstimate> {
    if cseq.len() < MIN_CSEQ_LEN {
        return Err(Error::InvalidInput(format!(
            "c-sequence needs at least {MIN_CSEQ_LEN} entries, got {}",
            cseq.len()
        )));
    }
    if !(window > 0.0 && window <= 1.0) {
        return Err(Error::Domain {
            what: "window",
            value: window,
            expected: "0 < window <= 1",
        });
    }
    let take = ((cseq.len() as f64 * window).ceil() as usize).clamp(2, cseq.len());
    let tail = &cseq[cseq.len() - take..];
    let xs: Vec<f64> = tail.iter().map(|e| 1.0 / e.ell as f64).collect();
    let ys: Vec<f64> = tail.iter().map(|e| e.c).collect();
    let (intercept, slope) = least_squares(&xs, &ys)
        .ok_or_else(|| Error::InvalidInput("c-sequence window has a single distinct index".into()))?;
    let halfwidth = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).abs())
        .fold(0.0, f64::max);
    Ok(CInfEstimate {
        estimate: intercept,
        halfwidth,
        slope,
    })
}

/// `distortion ≈ coefficient · (ln n)^exponent`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub coefficient: f64,
    pub exponent: f64,
    pub r2: f64,
}

/// Least squares of `ln(distortion)` on `ln(ln n)` over `(n, distortion)`
/// points.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 4 {
        return Err(Error::InvalidInput(format!(
            "rate fit needs at least 4 points, got {}",
            points.len()
        )));
    }
    for &(n, d) in points {
        if !(n >= 2.0 && n.is_finite()) || !(d > 0.0 && d.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "rate fit needs n >= 2 and distortion > 0, got ({n}, {d})"
            )));
        }
    }
    let mut ns: Vec<f64> = points.iter().map(|p| p.0).collect();
    ns.sort_by(f64::total_cmp);
    ns.dedup();
    if ns.len() != points.len() {
        return Err(Error::InvalidInput("rate fit needs distinct n".into()));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln().ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let (intercept, slope) =
        least_squares(&xs, &ys).ok_or_else(|| Error::InvalidInput("degenerate rate-fit design".into()))?;
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let ss_tot: f64 = ys.iter().map(|y| (y - mean).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r2 = if ss_tot == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(RateFit {
        coefficient: intercept.exp(),
        exponent: slope,
        r2,
    })
}

/// Returns `(intercept, slope)`, or `None` when all `xs` coincide.
fn least_squares(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= f64::EPSILON * mx.abs().max(1.0) * n {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some((my - slope * mx, slope))
}
