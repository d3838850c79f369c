//! Monte Carlo estimates of product-quantizer distortion.
//!
//! Paths are drawn in KL coordinates, `X = Σ_{j≤m'} √λ_j ξ_j φ_j`. Sample
//! `i` under seed `s` reads its normals from ChaCha8 stream `i` keyed by
//! `s`, so every sample is reproducible on its own and estimates do not
//! depend on how rayon schedules the work.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::funcquant::{codebook_paths, ProductQuantizer};
use crate::quadrature::simpson_uniform;
use crate::special::{normal_quantile, pairwise_sum};
use crate::spectrum::Spectrum;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McConfig {
    pub samples: usize,
    pub seed: u64,
    /// Number of simulated KL coordinates `m'`.
    pub truncation: usize,
    /// Simpson subintervals on `[0, T]` for path-space checks.
    pub grid: usize,
}

impl McConfig {
    fn validate(&self, pq: &ProductQuantizer) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::InvalidInput("samples must be at least 1".into()));
        }
        let m = pq.allocation().len();
        if self.truncation < m {
            return Err(Error::InvalidInput(format!(
                "truncation {} is below the allocation length {m}",
                self.truncation
            )));
        }
        if self.truncation > pq.spectrum().len() {
            return Err(Error::SpectrumTooShort {
                required: self.truncation,
                available: pq.spectrum().len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
    /// Half-width of the analytic tail bracket beyond the truncation, not
    /// included in `stderr`.
    pub tail_halfwidth: f64,
}

/// Uniform on the open interval `(0, 1)` from the top 53 bits.
#[inline]
fn open_uniform(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal draws `ξ_1..ξ_truncation` of sample `index`.
pub fn sample_coefficients(spectrum: &Spectrum, truncation: usize, seed: u64, index: u64) -> Result<Vec<f64>> {
    if truncation > spectrum.len() {
        return Err(Error::SpectrumTooShort {
            required: truncation,
            available: spectrum.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    Ok((0..truncation).map(|_| normal_quantile(open_uniform(&mut rng))).collect())
}

/// Squared distance in coefficient space from `ξ` to the nearest codeword,
/// over the first `ξ.len()` coordinates.
fn coefficient_distance(pq: &ProductQuantizer, xi: &[f64]) -> f64 {
    let lambdas = pq.spectrum().pairs();
    let mut acc = 0.0;
    for (j, &z) in xi.iter().enumerate() {
        let lambda = lambdas[j].lambda;
        acc += match pq.quantizers().get(j) {
            Some(q) => {
                let a = q.points()[q.nearest_index(z)];
                lambda * (z - a) * (z - a)
            }
            None => lambda * z * z,
        };
    }
    acc
}

/// Mean of the per-sample distortion plus the analytic tail beyond the
/// truncation (midpoint of its bracket).
pub fn estimate_distortion(pq: &ProductQuantizer, cfg: &McConfig) -> Result<McEstimate> {
    cfg.validate(pq)?;
    let spectrum = pq.spectrum();
    let values = (0..cfg.samples as u64)
        .into_par_iter()
        .map(|i| {
            sample_coefficients(spectrum, cfg.truncation, cfg.seed, i).map(|xi| coefficient_distance(pq, &xi))
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = values.len() as f64;
    let mean = pairwise_sum(&values) / n;
    let squares: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let stderr = if values.len() > 1 {
        (pairwise_sum(&squares) / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    let rest = spectrum.partial_sum_after(cfg.truncation);
    let far = spectrum.tail_bounds();
    Ok(McEstimate {
        mean: mean + rest + far.midpoint(),
        stderr,
        samples: cfg.samples,
        tail_halfwidth: far.half_width(),
    })
}

/// Largest gap, over `cfg.samples` paths, between the coefficient-space
/// minimum squared distance and the same minimum evaluated by Simpson's
/// rule on `cfg.grid` subintervals of the rendered paths. Both sides use
/// the first `cfg.truncation` coordinates only.
pub fn path_space_check(pq: &ProductQuantizer, cfg: &McConfig) -> Result<f64> {
    cfg.validate(pq)?;
    if cfg.grid < 64 || cfg.grid % 2 != 0 {
        return Err(Error::InvalidInput(format!(
            "path-space grid must be even and at least 64, got {}",
            cfg.grid
        )));
    }
    let spectrum = pq.spectrum();
    let params = *spectrum.params();
    let horizon = params.horizon();
    let grid: Vec<f64> = (0..=cfg.grid)
        .map(|i| horizon * i as f64 / cfg.grid as f64)
        .collect();
    let codebook = codebook_paths(pq, &grid)?;
    let basis: Vec<Vec<f64>> = spectrum.pairs()[..cfg.truncation]
        .iter()
        .map(|p| {
            let s = p.lambda.sqrt();
            grid.iter().map(|&t| s * p.eval(&params, t)).collect()
        })
        .collect();
    let gaps = (0..cfg.samples as u64)
        .into_par_iter()
        .map(|i| {
            let xi = sample_coefficients(spectrum, cfg.truncation, cfg.seed, i)?;
            let path: Vec<f64> = (0..grid.len())
                .map(|g| xi.iter().zip(&basis).map(|(z, b)| z * b[g]).sum())
                .collect();
            let mut best = f64::INFINITY;
            for code in &codebook {
                let sq: Vec<f64> = path.iter().zip(&code.values).map(|(x, a)| (x - a) * (x - a)).collect();
                best = best.min(simpson_uniform(&sq, horizon)?);
            }
            Ok((coefficient_distance(pq, &xi) - best).abs())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(gaps.into_iter().fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcquant::{build, exact_distortion, Allocation};
    use crate::gauss1d::DistortionTable;
    use crate::kernel::ProcessParams;
    use crate::spectrum::{spectrum_batch, DEFAULT_TOL};
    use std::f64::consts::PI;

    fn spectrum(k: f64, len: usize) -> Spectrum {
        spectrum_batch(&ProcessParams::new(k, 1.0).unwrap(), len, DEFAULT_TOL).unwrap()
    }

    fn quantizer(s: &Spectrum, levels: Vec<usize>) -> ProductQuantizer {
        let budget = levels.iter().product::<usize>();
        build(s, &Allocation::new(levels, budget).unwrap(), &DistortionTable::build(16).unwrap()).unwrap()
    }

    #[test]
    fn coefficients_are_reproducible() {
        let s = spectrum(0.5, 10);
        let a = sample_coefficients(&s, 10, 7, 3).unwrap();
        assert_eq!(a, sample_coefficients(&s, 10, 7, 3).unwrap());
        assert_ne!(a, sample_coefficients(&s, 10, 7, 4).unwrap());
        assert_ne!(a, sample_coefficients(&s, 10, 8, 3).unwrap());
        assert!(sample_coefficients(&s, 11, 7, 3).is_err());
    }

    #[test]
    fn coefficients_obey_law_of_large_numbers() {
        let s = spectrum(0.5, 2);
        let n = 100_000;
        let draws: Vec<Vec<f64>> = (0..n as u64).map(|i| sample_coefficients(&s, 2, 11, i).unwrap()).collect();
        let m0 = draws.iter().map(|d| d[0]).sum::<f64>() / n as f64;
        let m1 = draws.iter().map(|d| d[1]).sum::<f64>() / n as f64;
        let v0 = draws.iter().map(|d| (d[0] - m0).powi(2)).sum::<f64>() / (n - 1) as f64;
        let v1 = draws.iter().map(|d| (d[1] - m1).powi(2)).sum::<f64>() / (n - 1) as f64;
        let cov = draws.iter().map(|d| (d[0] - m0) * (d[1] - m1)).sum::<f64>() / (n - 1) as f64;
        assert!(m0.abs() < 4.0 / (n as f64).sqrt());
        assert!((v0 - 1.0).abs() < 0.05);
        assert!((cov / (v0 * v1).sqrt()).abs() < 0.02);
    }

    #[test]
    fn zero_codeword_recovers_trace() {
        let s = spectrum(0.0, 200);
        let pq = quantizer(&s, vec![]);
        let est = estimate_distortion(
            &pq,
            &McConfig {
                samples: 100_000,
                seed: 1,
                truncation: 20,
                grid: 64,
            },
        )
        .unwrap();
        assert!((est.mean - 0.5).abs() < 3.0 * est.stderr + est.tail_halfwidth, "{est:?}");
    }

    #[test]
    fn two_level_closed_form() {
        let s = spectrum(0.0, 200);
        let pq = quantizer(&s, vec![2]);
        let l1 = 4.0 / (PI * PI);
        let want = l1 * (1.0 - 2.0 / PI) + (0.5 - l1);
        let est = estimate_distortion(
            &pq,
            &McConfig {
                samples: 100_000,
                seed: 2,
                truncation: 32,
                grid: 64,
            },
        )
        .unwrap();
        assert!((est.mean - want).abs() < 3.0 * est.stderr + est.tail_halfwidth, "{est:?} vs {want}");
        let b = exact_distortion(&pq);
        assert!(est.mean > b.lower - 3.0 * est.stderr && est.mean < b.upper + 3.0 * est.stderr);
    }

    #[test]
    fn estimates_are_deterministic_and_scale() {
        let s = spectrum(0.5, 100);
        let pq = quantizer(&s, vec![4, 2]);
        let cfg = McConfig {
            samples: 20_000,
            seed: 9,
            truncation: 16,
            grid: 64,
        };
        let a = estimate_distortion(&pq, &cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| estimate_distortion(&pq, &cfg)).unwrap();
        assert_eq!(a, b);
        let big = estimate_distortion(&pq, &McConfig { samples: 80_000, ..cfg }).unwrap();
        assert!((big.stderr / a.stderr - 0.5).abs() < 0.1, "{} vs {}", a.stderr, big.stderr);
    }

    #[test]
    fn config_is_validated() {
        let s = spectrum(0.5, 10);
        let pq = quantizer(&s, vec![2, 2]);
        let cfg = McConfig {
            samples: 10,
            seed: 0,
            truncation: 1,
            grid: 64,
        };
        assert!(estimate_distortion(&pq, &cfg).is_err());
        assert!(estimate_distortion(&pq, &McConfig { truncation: 11, ..cfg }).is_err());
        assert!(estimate_distortion(&pq, &McConfig { samples: 0, truncation: 4, ..cfg }).is_err());
        assert!(path_space_check(&pq, &McConfig { truncation: 4, grid: 63, ..cfg }).is_err());
    }

    #[test]
    fn path_space_agrees_with_coefficients() {
        let s = spectrum(0.5, 40);
        let pq = quantizer(&s, vec![4, 2]);
        let cfg = McConfig {
            samples: 100,
            seed: 5,
            truncation: 20,
            grid: 512,
        };
        let fine = path_space_check(&pq, &cfg).unwrap();
        assert!(fine <= 1e-6, "{fine}");
        let coarse = path_space_check(&pq, &McConfig { grid: 64, ..cfg }).unwrap();
        let mid = path_space_check(&pq, &McConfig { grid: 128, ..cfg }).unwrap();
        assert!(mid <= coarse && fine <= mid, "{coarse} {mid} {fine}");

        let single = quantizer(&s, vec![2]);
        let one = path_space_check(&single, &McConfig { truncation: 1, ..cfg }).unwrap();
        assert!(one <= 1e-12, "{one}");
    }
}
