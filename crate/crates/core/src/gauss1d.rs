//! Optimal quadratic quantizers of the standard normal distribution.
//!
//! A quantizer with points `a_1 < … < a_n` assigns each `z` to its nearest
//! point; on the line the cells are delimited by the midpoints of adjacent
//! points. The optimum is the unique stationary point of the Lloyd map
//! `a_i ↦ E[Z | Z ∈ cell_i]`, and all cell integrals are closed forms in the
//! normal pdf/cdf:
//!
//! ```text
//! P(cell)          = Φ(r) − Φ(l)
//! ∫ z φ(z) dz      = φ(l) − φ(r)
//! ∫ z² φ(z) dz     = P(cell) + l φ(l) − r φ(r)
//! ```
//!
//! Plain Lloyd iteration contracts at a rate approaching one as `n` grows,
//! so each iteration first tries a Newton step on `a − centroid(a) = 0`
//! (tridiagonal Jacobian) and falls back to the Lloyd step whenever Newton
//! would break the ordering or raise the distortion.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::special::{normal_mass, normal_pdf, normal_quantile};

pub const DEFAULT_TOL: f64 = 1e-11;
pub const DEFAULT_MAX_ITER: usize = 10_000;
/// Largest level count tabulated by default.
pub const DEFAULT_TABLE_CAP: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarQuantizer {
    points: Vec<f64>,
    boundaries: Vec<f64>,
    distortion: f64,
    iterations: usize,
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    lo: f64,
    hi: f64,
    mass: f64,
    /// `∫ z φ`.
    first: f64,
    /// `l φ(l) − r φ(r)`.
    edge: f64,
}

impl Cell {
    fn new(lo: f64, hi: f64) -> Self {
        let (pl, ph) = (normal_pdf(lo), normal_pdf(hi));
        let xpdf = |x: f64, p: f64| if x.is_infinite() { 0.0 } else { x * p };
        Cell {
            lo,
            hi,
            mass: normal_mass(lo, hi),
            first: pl - ph,
            edge: xpdf(lo, pl) - xpdf(hi, ph),
        }
    }

    fn centroid(&self) -> f64 {
        self.first / self.mass
    }

    /// `∫_cell (z − a)² φ(z) dz`.
    fn distortion(&self, a: f64) -> f64 {
        self.mass * (1.0 + a * a) + self.edge - 2.0 * a * self.first
    }
}

fn midpoints(points: &[f64]) -> Vec<f64> {
    points.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
}

fn cells(points: &[f64]) -> Vec<Cell> {
    let b = midpoints(points);
    (0..points.len())
        .map(|i| {
            let lo = if i == 0 { f64::NEG_INFINITY } else { b[i - 1] };
            let hi = if i + 1 == points.len() { f64::INFINITY } else { b[i] };
            Cell::new(lo, hi)
        })
        .collect()
}

fn total_distortion(points: &[f64], cells: &[Cell]) -> f64 {
    points.iter().zip(cells).map(|(&a, c)| c.distortion(a)).sum()
}

fn symmetrize(points: &mut [f64]) {
    let n = points.len();
    for i in 0..n / 2 {
        let v = 0.5 * (points[n - 1 - i] - points[i]);
        points[i] = -v;
        points[n - 1 - i] = v;
    }
    if n % 2 == 1 {
        points[n / 2] = 0.0;
    }
}

fn strictly_increasing(points: &[f64]) -> bool {
    points.iter().all(|p| p.is_finite()) && points.windows(2).all(|w| w[0] < w[1])
}

/// Newton direction for `F(a) = a − centroid(a)`.
fn newton_direction(points: &[f64], cells: &[Cell]) -> Option<Vec<f64>> {
    let n = points.len();
    let mut sub = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut sup = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    for i in 0..n {
        let c = &cells[i];
        let m = c.centroid();
        let dl = if c.lo.is_finite() {
            normal_pdf(c.lo) * (m - c.lo) / c.mass
        } else {
            0.0
        };
        let dr = if c.hi.is_finite() {
            normal_pdf(c.hi) * (c.hi - m) / c.mass
        } else {
            0.0
        };
        sub[i] = -0.5 * dl;
        diag[i] = 1.0 - 0.5 * (dl + dr);
        sup[i] = -0.5 * dr;
        rhs[i] = m - points[i];
    }
    // Thomas algorithm.
    for i in 1..n {
        if diag[i - 1] == 0.0 {
            return None;
        }
        let w = sub[i] / diag[i - 1];
        diag[i] -= w * sup[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let tail = if i + 1 < n { sup[i] * x[i + 1] } else { 0.0 };
        x[i] = (rhs[i] - tail) / diag[i];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Optimal `n`-level quantizer of `N(0, 1)`.
///
/// Starts from the quantiles `Φ⁻¹((2i−1)/(2n))` and stops when
/// `max_i |a_i − E[Z | cell_i]| ≤ tol`.
pub fn optimize(n: usize, tol: f64, max_iter: usize) -> Result<ScalarQuantizer> {
    if n == 0 {
        return Err(Error::Domain {
            what: "n",
            value: 0.0,
            expected: "n >= 1",
        });
    }
    let mut points: Vec<f64> = (1..=n)
        .map(|i| normal_quantile((2 * i - 1) as f64 / (2 * n) as f64))
        .collect();
    symmetrize(&mut points);
    let mut current = cells(&points);
    let mut distortion = total_distortion(&points, &current);
    let mut last_step = f64::INFINITY;

    for iteration in 0..=max_iter {
        let lloyd: Vec<f64> = current.iter().map(Cell::centroid).collect();
        last_step = points
            .iter()
            .zip(&lloyd)
            .map(|(a, m)| (a - m).abs())
            .fold(0.0, f64::max);
        if last_step <= tol {
            return Ok(ScalarQuantizer {
                boundaries: midpoints(&points),
                points,
                distortion,
                iterations: iteration,
            });
        }
        if iteration == max_iter {
            break;
        }

        let mut accepted = None;
        if let Some(dir) = newton_direction(&points, &current) {
            let mut scale = 1.0;
            for _ in 0..4 {
                let mut trial: Vec<f64> = points.iter().zip(&dir).map(|(a, d)| a + scale * d).collect();
                symmetrize(&mut trial);
                if strictly_increasing(&trial) {
                    let trial_cells = cells(&trial);
                    let d = total_distortion(&trial, &trial_cells);
                    if d <= distortion * (1.0 + 1e-13) {
                        accepted = Some((trial, trial_cells, d));
                        break;
                    }
                }
                scale *= 0.5;
            }
        }
        let (next, next_cells, d) = accepted.unwrap_or_else(|| {
            let mut next = lloyd;
            symmetrize(&mut next);
            let c = cells(&next);
            let d = total_distortion(&next, &c);
            (next, c, d)
        });
        points = next;
        current = next_cells;
        distortion = d;
    }
    Err(Error::QuantizerNoConvergence {
        levels: n,
        iterations: max_iter,
        last_step,
        last_points: points,
    })
}

impl ScalarQuantizer {
    pub fn levels(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// The `n − 1` cell boundaries (midpoints of adjacent points).
    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    /// `E min_i (Z − a_i)²`, from the closed-form cell integrals.
    pub fn distortion(&self) -> f64 {
        self.distortion
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Cell probabilities `p_i`.
    pub fn probabilities(&self) -> Vec<f64> {
        cells(&self.points).iter().map(|c| c.mass).collect()
    }

    /// `E[Z | cell_i]`.
    pub fn centroids(&self) -> Vec<f64> {
        cells(&self.points).iter().map(Cell::centroid).collect()
    }

    /// `max_i |a_i − E[Z | cell_i]|`.
    pub fn stationarity_error(&self) -> f64 {
        self.points
            .iter()
            .zip(self.centroids())
            .map(|(a, m)| (a - m).abs())
            .fold(0.0, f64::max)
    }

    /// `max_i |a_i + a_{n+1−i}|`.
    pub fn symmetry_error(&self) -> f64 {
        let n = self.points.len();
        (0..n)
            .map(|i| (self.points[i] + self.points[n - 1 - i]).abs())
            .fold(0.0, f64::max)
    }

    /// `1 − Σ p_i a_i²`, equal to the distortion at a stationary quantizer.
    pub fn distortion_identity(&self) -> f64 {
        1.0 - self
            .points
            .iter()
            .zip(self.probabilities())
            .map(|(a, p)| p * a * a)
            .sum::<f64>()
    }

    /// Index of the nearest point; a value exactly on a boundary goes to
    /// the lower cell.
    pub fn nearest_index(&self, z: f64) -> usize {
        self.boundaries.partition_point(|&b| b < z)
    }
}

/// Optimal quantizers for every level count `1..=max_n`, computed once
/// and shared read-only.
#[derive(Debug, Clone)]
pub struct DistortionTable {
    quantizers: Vec<ScalarQuantizer>,
}

impl DistortionTable {
    pub fn build(max_n: usize) -> Result<Self> {
        if max_n == 0 {
            return Err(Error::Domain {
                what: "max_n",
                value: 0.0,
                expected: "max_n >= 1",
            });
        }
        let solved: Vec<Result<ScalarQuantizer>> = (1..=max_n)
            .into_par_iter()
            .map(|n| optimize(n, DEFAULT_TOL, DEFAULT_MAX_ITER))
            .collect();
        Ok(Self {
            quantizers: solved.into_iter().collect::<Result<_>>()?,
        })
    }

    pub fn max_levels(&self) -> usize {
        self.quantizers.len()
    }

    pub fn get(&self, n: usize) -> Option<&ScalarQuantizer> {
        n.checked_sub(1).and_then(|i| self.quantizers.get(i))
    }

    /// `d_n`; `d_1 = 1`.
    pub fn distortion(&self, n: usize) -> Option<f64> {
        self.get(n).map(ScalarQuantizer::distortion)
    }

    /// `(n, d_n)` for every tabulated `n`.
    pub fn entries(&self) -> Vec<(usize, f64)> {
        self.quantizers
            .iter()
            .map(|q| (q.levels(), q.distortion()))
            .collect()
    }
}

/// `distortion_table(max_n)` as `(n, d_n)` pairs.
pub fn distortion_table(max_n: usize) -> Result<Vec<(usize, f64)>> {
    Ok(DistortionTable::build(max_n)?.entries())
}

/// Limit of `n^{r/d} e_{n,r}^r` for the standard normal:
/// `J_{r,d} ‖f‖_{d/(d+r)}`. Only `r = 2, d = 1` is supported, where
/// `J_{r,1} = 1/(2^r (r+1))` and `‖f‖_{1/3} = (∫ f^{1/3})³ = 6√3 π`,
/// giving `π√3/2`.
pub fn zador_limit(r: u32, d: u32) -> Result<f64> {
    if r != 2 || d != 1 {
        return Err(Error::Unsupported(format!(
            "Zador constant for r = {r}, d = {d}; only r = 2, d = 1 is implemented"
        )));
    }
    let j = 1.0 / (2f64.powi(r as i32) * (r as f64 + 1.0));
    // ∫ (2π)^{-1/6} e^{-x²/6} dx = (2π)^{-1/6} √(6π).
    let integral = (2.0 * PI).powf(-1.0 / 6.0) * (6.0 * PI).sqrt();
    Ok(j * integral.powi(3))
}
