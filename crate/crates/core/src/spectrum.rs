//! Karhunen–Loève spectrum of the covariance operator with kernel
//! `(k+t) ∧ (k+s)` on `L²([0, T])`.
//!
//! The Fredholm equation `∫₀ᵀ K(t,s) φ(s) ds = λ φ(t)` reduces to
//! `λ φ'' = −φ` with boundary conditions `φ(0) = k φ'(0)` and `φ'(T) = 0`.
//! Writing `ω = 1/√λ`, the eigenfunctions are
//!
//! ```text
//! φ(t) ∝ sin(ω t) + k ω cos(ω t)
//! ```
//!
//! and `x = ω T` solves `cot(x) = (k/T) x`. The `ℓ`-th root lies in
//! `((ℓ−1)π, (2ℓ−1)π/2]`, with equality at the right end iff `k = 0`, and
//! `λ_ℓ = T²/x_ℓ²`.
//!
//! The eigenfunction argument is `t/√λ`. Writing it as `T/√λ` (a constant)
//! would not satisfy the differential equation in `t`.
//!
//! Roots are solved on the offset `u = x − (ℓ−1)π ∈ (0, π/2]`, where
//! `cot(x) = cot(u)`. Evaluating `cot` at `x` itself near `(ℓ−1)π` loses
//! all the digits of `u` that lie below the ulp of `x`.

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::ProcessParams;
use crate::quadrature::GaussLegendre;
use crate::special::{compensated_sum, multiple_of_pi, trigamma};

/// Default relative tolerance of the bracketed solver.
pub const DEFAULT_TOL: f64 = 1e-12;
/// Iteration budget of both solvers.
pub const MAX_ITER: usize = 200;

/// One eigenpair of the covariance operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenPair {
    /// Index `ℓ ≥ 1`.
    pub ell: usize,
    /// `u = x − (ℓ−1)π`, in `(0, π/2]`.
    pub offset: f64,
    /// Root of `cot(x) = (k/T) x`.
    pub x: f64,
    /// `T²/x²`.
    pub lambda: f64,
    /// Factor making `∫₀ᵀ φ² = 1`.
    pub norm: f64,
}

impl EigenPair {
    /// `|cot(x) − (k/T) x|`, with `cot(x)` evaluated through the offset.
    pub fn residual(&self, params: &ProcessParams) -> f64 {
        let (s, c) = self.offset.sin_cos();
        (c / s - params.slope() * self.x).abs()
    }

    /// Residual scaled by `1 + (k/T) x`, the quantity bounded by the solver
    /// tolerance.
    pub fn scaled_residual(&self, params: &ProcessParams) -> f64 {
        self.residual(params) / (1.0 + params.slope() * self.x)
    }

    /// `(ℓ−1)π < x ≤ (2ℓ−1)π/2`, checked on the offset.
    pub fn in_bracket(&self) -> bool {
        self.offset > 0.0 && self.offset <= FRAC_PI_2 && self.x > multiple_of_pi(self.ell - 1)
    }

    /// `c_ℓ = λ_ℓ ((2ℓ−1)π/2)² / T²`, the ratio to the Wiener eigenvalue.
    pub fn c(&self) -> f64 {
        let r = wiener_root(self.ell) / self.x;
        r * r
    }

    /// `ω = 1/√λ = x/T`.
    pub fn frequency(&self, params: &ProcessParams) -> f64 {
        self.x / params.horizon()
    }

    /// Normalized eigenfunction at `t ∈ [0, T]`.
    pub fn eigenfunction(&self, params: &ProcessParams, t: f64) -> Result<f64> {
        if !(t.is_finite() && (0.0..=params.horizon()).contains(&t)) {
            return Err(Error::Domain {
                what: "t",
                value: t,
                expected: "time in [0, T]",
            });
        }
        Ok(self.eval(params, t))
    }

    /// Eigenfunction without the domain check.
    #[inline]
    pub fn eval(&self, params: &ProcessParams, t: f64) -> f64 {
        let omega = self.frequency(params);
        let (s, c) = (omega * t).sin_cos();
        self.norm * (s + params.k() * omega * c)
    }
}

/// `(2ℓ−1)π/2`, the Wiener root.
#[inline]
pub fn wiener_root(ell: usize) -> f64 {
    (2 * ell - 1) as f64 * FRAC_PI_2
}

/// Solves `cot(u) = (k/T)((ℓ−1)π + u)` for the offset `u ∈ (0, π/2]`.
///
/// Newton steps on `h(u) = cos(u) − (k/T) x sin(u)`, which is smooth and
/// strictly decreasing on the bracket, with a bisection fallback whenever
/// a step leaves the current bracket. Terminates once the step is below
/// `tol · u`; the returned offset is then accurate to a few ulps.
pub fn solve_offset(params: &ProcessParams, ell: usize, tol: f64) -> Result<f64> {
    check_ell(ell)?;
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::Domain {
            what: "tol",
            value: tol,
            expected: "tol > 0",
        });
    }
    let slope = params.slope();
    if slope == 0.0 {
        return Ok(FRAC_PI_2);
    }
    let base = multiple_of_pi(ell - 1);
    let h = |u: f64| {
        let (s, c) = u.sin_cos();
        let x = base + u;
        (c - slope * x * s, -s * (1.0 + slope) - slope * x * c)
    };

    let mut lo = 4.0 * f64::EPSILON * ell as f64 * PI;
    let mut hi = FRAC_PI_2;
    if h(lo).0 <= 0.0 {
        // Only possible for slopes beyond double precision's reach.
        return Err(Error::NoConvergence {
            ell,
            iterations: 0,
            lo,
            hi,
        });
    }

    // For large (k/T)(ℓ−1)π this is ≈ T / (k (ℓ−1) π); for ℓ = 1 it
    // tracks u ≈ 1/√(k/T) for steep lines and π/2 for flat ones.
    let mut u = if ell == 1 {
        1.0f64.atan2(slope.sqrt())
    } else {
        1.0f64.atan2(slope * base)
    };
    if !(u > lo && u < hi) {
        u = 0.5 * (lo + hi);
    }

    // Best evaluated point so far, by |h|.
    let mut best = (u, f64::INFINITY);
    for _ in 0..MAX_ITER {
        let (value, derivative) = h(u);
        if value == 0.0 {
            return Ok(u);
        }
        if value.abs() < best.1 {
            best = (u, value.abs());
        }
        if value > 0.0 {
            lo = u;
        } else {
            hi = u;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok(best.0);
        }
        let mut next = u - value / derivative;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - u).abs();
        u = next;
        if step <= tol * u {
            // A converged Newton iterate is one step away from the
            // double-precision root.
            let (value, derivative) = h(u);
            if value.abs() < best.1 {
                best = (u, value.abs());
            }
            let polished = u - value / derivative;
            if polished >= lo && polished <= hi && h(polished).0.abs() < best.1 {
                best.0 = polished;
            }
            return Ok(best.0);
        }
    }
    Err(Error::NoConvergence {
        ell,
        iterations: MAX_ITER,
        lo,
        hi,
    })
}

/// The unique root `x ∈ ((ℓ−1)π, (2ℓ−1)π/2]` of `cot(x) = (k/T) x`.
/// For `k = 0` this is `(2ℓ−1)π/2` exactly.
pub fn solve_root(params: &ProcessParams, ell: usize, tol: f64) -> Result<f64> {
    Ok(eigen_pair(params, ell, tol)?.x)
}

/// Full eigenpair for index `ell`.
pub fn eigen_pair(params: &ProcessParams, ell: usize, tol: f64) -> Result<EigenPair> {
    let offset = solve_offset(params, ell, tol)?;
    let x = if params.k() == 0.0 {
        wiener_root(ell)
    } else {
        multiple_of_pi(ell - 1) + offset
    };
    let horizon = params.horizon();
    let lambda = (horizon / x) * (horizon / x);
    let norm = normalization(params, x, offset);
    let pair = EigenPair {
        ell,
        offset,
        x,
        lambda,
        norm,
    };
    if pair.scaled_residual(params) > tol.max(8.0 * f64::EPSILON) {
        return Err(Error::NoConvergence {
            ell,
            iterations: MAX_ITER,
            lo: offset,
            hi: offset,
        });
    }
    Ok(pair)
}

/// `λ_ℓ = T² / x_ℓ²` at the default tolerance.
pub fn eigenvalue(params: &ProcessParams, ell: usize) -> Result<f64> {
    Ok(eigen_pair(params, ell, DEFAULT_TOL)?.lambda)
}

/// Normalized eigenfunction `φ_ℓ(t)`.
pub fn eigenfunction(pair: &EigenPair, params: &ProcessParams, t: f64) -> Result<f64> {
    pair.eigenfunction(params, t)
}

/// `1/‖sin(ωt) + β cos(ωt)‖` with `β = kω`, from the antiderivative
///
/// ```text
/// ∫₀ᵀ (sin ωt + β cos ωt)² dt
///   = (1+β²) T/2 + (β²−1) sin(2x)/(4ω) + β sin²(x)/ω,   x = ωT.
/// ```
///
/// `sin(2x)` and `sin²(x)` are taken from the offset.
fn normalization(params: &ProcessParams, x: f64, offset: f64) -> f64 {
    let horizon = params.horizon();
    let omega = x / horizon;
    let beta = params.k() * omega;
    let s = offset.sin();
    let sin_2x = (2.0 * offset).sin();
    let sq = (1.0 + beta * beta) * horizon / 2.0
        + (beta * beta - 1.0) * sin_2x / (4.0 * omega)
        + beta * s * s / omega;
    1.0 / sq.sqrt()
}

fn check_ell(ell: usize) -> Result<()> {
    if ell == 0 {
        Err(Error::Domain {
            what: "ell",
            value: 0.0,
            expected: "ell >= 1",
        })
    } else {
        Ok(())
    }
}

/// The first `L` eigenpairs for one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    params: ProcessParams,
    pairs: Vec<EigenPair>,
}

impl Spectrum {
    pub fn params(&self) -> &ProcessParams {
        &self.params
    }

    pub fn pairs(&self) -> &[EigenPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Pair for index `ell` (1-based), if computed.
    pub fn pair(&self, ell: usize) -> Option<&EigenPair> {
        ell.checked_sub(1).and_then(|i| self.pairs.get(i))
    }

    pub fn lambdas(&self) -> impl Iterator<Item = f64> + '_ {
        self.pairs.iter().map(|p| p.lambda)
    }

    /// Compensated sum of the stored eigenvalues together with a bound on
    /// its floating-point error (eigenvalue rounding plus summation).
    pub fn partial_sum(&self) -> (f64, f64) {
        let sum = compensated_sum(self.lambdas());
        (sum, 8.0 * f64::EPSILON * sum)
    }

    /// Sum of `λ_j` for `j` in `(from, len]`.
    pub fn partial_sum_after(&self, from: usize) -> f64 {
        compensated_sum(self.pairs.iter().skip(from).map(|p| p.lambda))
    }

    /// Brackets for `Σ_{ℓ>len} λ_ℓ`.
    pub fn tail_bounds(&self) -> TailBounds {
        tail_bounds(&self.params, self.len())
    }

    pub fn c_sequence(&self) -> Vec<CSeqEntry> {
        self.pairs
            .iter()
            .map(|p| CSeqEntry {
                ell: p.ell,
                c: p.c(),
            })
            .collect()
    }

    /// Truncates to the first `count` pairs.
    pub fn truncated(&self, count: usize) -> Spectrum {
        Spectrum {
            params: self.params,
            pairs: self.pairs[..count.min(self.len())].to_vec(),
        }
    }
}

/// First `count` eigenpairs, solved in parallel and assembled in index
/// order. Each solve is isolated, so the result is bit-identical for every
/// thread schedule; on failure the lowest failing index is reported.
pub fn spectrum_batch(params: &ProcessParams, count: usize, tol: f64) -> Result<Spectrum> {
    if count == 0 {
        return Err(Error::Domain {
            what: "count",
            value: 0.0,
            expected: "count >= 1",
        });
    }
    let solved: Vec<Result<EigenPair>> = (1..=count)
        .into_par_iter()
        .map(|ell| eigen_pair(params, ell, tol))
        .collect();
    let pairs = solved.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(Spectrum {
        params: *params,
        pairs,
    })
}

/// `c_ℓ = λ_ℓ ((2ℓ−1)π/2)² / T²`. Equals `λ^(k)_ℓ / λ^(0)_ℓ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CSeqEntry {
    pub ell: usize,
    pub c: f64,
}

pub fn c_sequence(params: &ProcessParams, count: usize) -> Result<Vec<CSeqEntry>> {
    Ok(spectrum_batch(params, count, DEFAULT_TOL)?.c_sequence())
}

/// Enclosure of a spectral tail sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailBounds {
    pub lower: f64,
    pub upper: f64,
}

impl TailBounds {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.upper - self.lower)
    }
}

/// Brackets `Σ_{ℓ>after} λ_ℓ` using `T²/((2ℓ−1)π/2)² ≤ λ_ℓ < T²/((ℓ−1)π)²`:
///
/// ```text
/// lower = (T/π)² ψ₁(after + ½),   upper = (T/π)² ψ₁(after)
/// ```
///
/// with `ψ₁` the trigamma function. `upper` is infinite for `after = 0`
/// because `λ_1` has no finite upper enclosure. Both ends are widened by
/// 1e-14 relative to absorb rounding.
pub fn tail_bounds(params: &ProcessParams, after: usize) -> TailBounds {
    let scale = (params.horizon() / PI).powi(2);
    let lower = scale * trigamma(after as f64 + 0.5) * (1.0 - 1e-14);
    let upper = if after == 0 {
        f64::INFINITY
    } else {
        scale * trigamma(after as f64) * (1.0 + 1e-14)
    };
    TailBounds { lower, upper }
}

/// Outcome of the undamped Newton iteration from the fixed start
/// `10⁻⁵ + (ℓ−1)π`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaperNewton {
    pub ell: usize,
    /// Last iterate (the root when `converged`).
    pub x: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Whether `x` landed in `((ℓ−1)π, (2ℓ−1)π/2]`.
    pub in_bracket: bool,
}

impl PaperNewton {
    /// `|cot(x) − (k/T) x|` evaluated directly at `x`.
    pub fn residual(&self, params: &ProcessParams) -> f64 {
        let (s, c) = self.x.sin_cos();
        (c / s - params.slope() * self.x).abs()
    }
}

/// Undamped Newton on `g(x) = cot(x) − (k/T) x` working directly in `x`.
///
/// Escapes from the bracket and divergence are reported through the
/// returned flags, never as errors.
pub fn newton_paper_mode(params: &ProcessParams, ell: usize) -> Result<PaperNewton> {
    check_ell(ell)?;
    let slope = params.slope();
    let left = multiple_of_pi(ell - 1);
    let mut x = 1e-5 + left;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        iterations += 1;
        let (s, c) = x.sin_cos();
        let cot = c / s;
        let g = cot - slope * x;
        let dg = -(1.0 + cot * cot) - slope;
        let next = x - g / dg;
        if !next.is_finite() {
            x = next;
            break;
        }
        let step = (next - x).abs();
        x = next;
        if g == 0.0 || step <= 1e-15 * x.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    let in_bracket = converged && x > left && x <= wiener_root(ell) * (1.0 + f64::EPSILON);
    Ok(PaperNewton {
        ell,
        x,
        iterations,
        converged,
        in_bracket,
    })
}

/// Gram matrix `∫₀ᵀ φ_i φ_j dt` of the first `count` eigenfunctions under
/// composite Gauss–Legendre quadrature.
pub fn gram_matrix(spectrum: &Spectrum, count: usize, panels: usize, rule: &GaussLegendre) -> Vec<Vec<f64>> {
    let params = *spectrum.params();
    let pairs = &spectrum.pairs()[..count.min(spectrum.len())];
    let horizon = params.horizon();
    let h = horizon / panels as f64;
    let nodes: Vec<(f64, f64)> = (0..panels)
        .flat_map(|p| {
            let lo = p as f64 * h;
            let hi = if p + 1 == panels { horizon } else { lo + h };
            rule.mapped(lo, hi).collect::<Vec<_>>()
        })
        .collect();
    let values: Vec<Vec<f64>> = pairs
        .iter()
        .map(|pair| nodes.iter().map(|&(t, _)| pair.eval(&params, t)).collect())
        .collect();
    (0..pairs.len())
        .map(|i| {
            (0..pairs.len())
                .map(|j| {
                    compensated_sum(
                        nodes
                            .iter()
                            .enumerate()
                            .map(|(n, &(_, w))| w * values[i][n] * values[j][n]),
                    )
                })
                .collect()
        })
        .collect()
}

/// `max_t |∫₀ᵀ K(t,s) φ(s) ds − λ φ(t)|` over `grid_points` equally spaced
/// `t ∈ [0, T]`. The integral is split at `s = t`, where the kernel has its
/// kink, and each piece uses composite Gauss–Legendre quadrature.
pub fn fredholm_residual(
    params: &ProcessParams,
    pair: &EigenPair,
    grid_points: usize,
    panels: usize,
    rule: &GaussLegendre,
) -> f64 {
    let horizon = params.horizon();
    let steps = grid_points.max(2) - 1;
    (0..=steps)
        .map(|i| {
            let t = horizon * i as f64 / steps as f64;
            let integrand = |s: f64| params.covariance_unchecked(t, s) * pair.eval(params, s);
            let mut integral = 0.0;
            if t > 0.0 {
                integral += rule.integrate_composite(0.0, t, panels, integrand);
            }
            if t < horizon {
                integral += rule.integrate_composite(t, horizon, panels, integrand);
            }
            (integral - pair.lambda * pair.eval(params, t)).abs()
        })
        .fold(0.0, f64::max)
}
