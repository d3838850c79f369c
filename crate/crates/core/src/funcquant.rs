//! Product quantizers of `Z^(k)` over its Karhunen–Loève coordinates.
//!
//! With `X = Σ_j √λ_j ξ_j φ_j`, a product codebook quantizes the first `m`
//! coordinates independently with the optimal `n_j`-level normal quantizer
//! scaled by `√λ_j` and maps every coordinate beyond `m` to zero. Because
//! the `φ_j` are orthonormal the expected squared `L²` error splits as
//!
//! ```text
//! E min ‖X − a‖² = Σ_{j≤m} λ_j d_{n_j} + Σ_{j>m} λ_j
//! ```
//!
//! The tail is bracketed from the computed spectrum plus
//! [`spectrum::tail_bounds`], so every reported distortion is an interval.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gauss1d::{optimize, DistortionTable, ScalarQuantizer, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::spectrum::Spectrum;

/// Largest codebook [`codebook_paths`] will render.
pub const RENDER_CAP: usize = 4096;
/// Largest budget the exhaustive allocation search accepts.
pub const EXHAUSTIVE_CAP: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AllocMethod {
    Exhaustive,
    Greedy,
}

/// Levels per KL coordinate, `n_1 ≥ n_2 ≥ … ≥ n_m ≥ 2`, with
/// `Π n_j ≤ budget`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Allocation {
    levels: Vec<usize>,
    budget: usize,
}

impl Allocation {
    pub fn new(levels: Vec<usize>, budget: usize) -> Result<Self> {
        if budget == 0 {
            return Err(Error::InvalidInput("budget must be at least 1".into()));
        }
        if levels.iter().any(|&n| n < 2) {
            return Err(Error::InvalidInput(format!(
                "allocation levels must be >= 2, got {levels:?}"
            )));
        }
        if levels.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidInput(format!(
                "allocation levels must be non-increasing, got {levels:?}"
            )));
        }
        let size = codebook_size(&levels);
        if size.is_none_or(|s| s > budget) {
            return Err(Error::InvalidInput(format!(
                "allocation {levels:?} exceeds budget {budget}"
            )));
        }
        Ok(Self { levels, budget })
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    /// Number of quantized coordinates `m`.
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn codebook_size(&self) -> usize {
        codebook_size(&self.levels).unwrap_or(usize::MAX)
    }
}

fn codebook_size(levels: &[usize]) -> Option<usize> {
    levels.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n))
}

/// `floor(log2(budget))`: the most coordinates a budget can quantize.
fn max_coordinates(budget: usize) -> usize {
    (usize::BITS - 1 - budget.leading_zeros()) as usize
}

/// `Σ_{j>m} λ_j ≤ suffix[m] + tail_upper(L)` for every `m ≤ L`.
fn tail_upper_table(spectrum: &Spectrum) -> Vec<f64> {
    let far = spectrum.tail_bounds().upper;
    let lambdas: Vec<f64> = spectrum.lambdas().collect();
    let mut out = vec![far; lambdas.len() + 1];
    for m in (0..lambdas.len()).rev() {
        out[m] = out[m + 1] + lambdas[m];
    }
    out
}

/// Chooses levels minimizing `Σ_{j≤m} λ_j d_{n_j} + tail_upper(m)` over
/// non-increasing vectors with product at most `budget`.
///
/// Levels are drawn from `table` (so at most `table.max_levels()`).
/// Exhaustive search visits every such vector and breaks ties towards the
/// lexicographically smaller one; greedy starts at all ones and repeatedly
/// raises by one the level with the largest distortion decrease that keeps
/// the shape non-increasing and the product within budget.
pub fn allocate(
    spectrum: &Spectrum,
    table: &DistortionTable,
    budget: usize,
    method: AllocMethod,
) -> Result<Allocation> {
    if budget == 0 {
        return Err(Error::InvalidInput("budget must be at least 1".into()));
    }
    let required = max_coordinates(budget);
    if spectrum.len() < required {
        return Err(Error::SpectrumTooShort {
            required,
            available: spectrum.len(),
        });
    }
    if budget == 1 {
        return Allocation::new(Vec::new(), 1);
    }
    let levels = match method {
        AllocMethod::Exhaustive => {
            if budget > EXHAUSTIVE_CAP {
                return Err(Error::Unsupported(format!(
                    "exhaustive allocation above budget {EXHAUSTIVE_CAP}; use greedy"
                )));
            }
            exhaustive(spectrum, table, budget)
        }
        AllocMethod::Greedy => greedy(spectrum, table, budget),
    };
    Allocation::new(levels, budget)
}

struct Search<'a> {
    lambdas: Vec<f64>,
    tail: Vec<f64>,
    table: &'a DistortionTable,
    max_level: usize,
}

#[derive(Clone)]
struct Candidate {
    objective: f64,
    levels: Vec<usize>,
}

impl Candidate {
    fn better(self, other: Candidate) -> Candidate {
        match self.objective.total_cmp(&other.objective) {
            std::cmp::Ordering::Less => self,
            std::cmp::Ordering::Greater => other,
            std::cmp::Ordering::Equal => {
                if self.levels <= other.levels {
                    self
                } else {
                    other
                }
            }
        }
    }
}

impl Search<'_> {
    fn d(&self, n: usize) -> f64 {
        self.table.distortion(n).expect("level within table")
    }

    /// Depth-first over non-increasing continuations of `prefix`.
    fn visit(&self, prefix: &mut Vec<usize>, core: f64, remaining: usize, best: &mut Candidate) {
        let m = prefix.len();
        let here = Candidate {
            objective: core + self.tail[m],
            levels: prefix.clone(),
        };
        *best = std::mem::replace(best, here.clone()).better(here);
        if m == self.lambdas.len() {
            return;
        }
        let cap = prefix.last().copied().unwrap_or(self.max_level).min(remaining);
        for n in 2..=cap {
            prefix.push(n);
            self.visit(prefix, core + self.lambdas[m] * self.d(n), remaining / n, best);
            prefix.pop();
        }
    }
}

fn exhaustive(spectrum: &Spectrum, table: &DistortionTable, budget: usize) -> Vec<usize> {
    let m = max_coordinates(budget).min(spectrum.len());
    let search = Search {
        lambdas: spectrum.lambdas().take(m).collect(),
        tail: tail_upper_table(spectrum),
        table,
        max_level: table.max_levels(),
    };
    let empty = Candidate {
        objective: search.tail[0],
        levels: Vec::new(),
    };
    let first_max = budget.min(search.max_level);
    (2..=first_max)
        .into_par_iter()
        .map(|n1| {
            let mut prefix = vec![n1];
            let mut best = Candidate {
                objective: f64::INFINITY,
                levels: Vec::new(),
            };
            search.visit(&mut prefix, search.lambdas[0] * search.d(n1), budget / n1, &mut best);
            best
        })
        .reduce(|| empty.clone(), Candidate::better)
        .levels
}

fn greedy(spectrum: &Spectrum, table: &DistortionTable, budget: usize) -> Vec<usize> {
    let m = max_coordinates(budget).min(spectrum.len());
    let lambdas: Vec<f64> = spectrum.lambdas().take(m).collect();
    let d = |n: usize| table.distortion(n).expect("level within table");
    let mut levels = vec![1usize; m];
    let mut size = 1usize;
    loop {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..m {
            let next = levels[j] + 1;
            if next > table.max_levels() || (j > 0 && levels[j - 1] < next) {
                continue;
            }
            let new_size = size / levels[j] * next;
            if new_size > budget {
                continue;
            }
            let gain = lambdas[j] * (d(levels[j]) - d(next));
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((j, gain));
            }
        }
        match best {
            Some((j, _)) => {
                size = size / levels[j] * (levels[j] + 1);
                levels[j] += 1;
            }
            None => break,
        }
    }
    levels.retain(|&n| n >= 2);
    levels
}

/// Interval `[lower, upper]` enclosing an expected squared error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortionBracket {
    pub lower: f64,
    pub upper: f64,
}

impl DistortionBracket {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

/// Product codebook over the first `m` KL coordinates.
#[derive(Debug, Clone)]
pub struct ProductQuantizer {
    spectrum: Spectrum,
    allocation: Allocation,
    quantizers: Vec<ScalarQuantizer>,
    scales: Vec<f64>,
    distortion_core: f64,
    tail: DistortionBracket,
}

/// Assembles the product quantizer for `allocation`. Scalar quantizers come
/// from `table` when tabulated and are optimized on demand otherwise.
pub fn build(spectrum: &Spectrum, allocation: &Allocation, table: &DistortionTable) -> Result<ProductQuantizer> {
    let m = allocation.len();
    if m > spectrum.len() {
        return Err(Error::SpectrumTooShort {
            required: m,
            available: spectrum.len(),
        });
    }
    let quantizers = allocation
        .levels()
        .iter()
        .map(|&n| match table.get(n) {
            Some(q) => Ok(q.clone()),
            None => optimize(n, DEFAULT_TOL, DEFAULT_MAX_ITER),
        })
        .collect::<Result<Vec<_>>>()?;
    let pairs = &spectrum.pairs()[..m];
    let scales = pairs.iter().map(|p| p.lambda.sqrt()).collect();
    let distortion_core = pairs
        .iter()
        .zip(&quantizers)
        .map(|(p, q)| p.lambda * q.distortion())
        .sum();
    let tail = if m == 0 {
        let trace = spectrum.params().trace();
        DistortionBracket {
            lower: trace,
            upper: trace,
        }
    } else {
        let rest = spectrum.partial_sum_after(m);
        let far = spectrum.tail_bounds();
        DistortionBracket {
            lower: rest + far.lower,
            upper: rest + far.upper,
        }
    };
    Ok(ProductQuantizer {
        spectrum: spectrum.clone(),
        allocation: allocation.clone(),
        quantizers,
        scales,
        distortion_core,
        tail,
    })
}

/// Rendering of one codeword on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedPath {
    /// Per-coordinate codepoint indices.
    pub index: Vec<usize>,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl ProductQuantizer {
    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn allocation(&self) -> &Allocation {
        &self.allocation
    }

    /// Unscaled `N(0,1)` quantizers, one per coordinate.
    pub fn quantizers(&self) -> &[ScalarQuantizer] {
        &self.quantizers
    }

    /// `√λ_j`.
    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    /// Codepoints of coordinate `j` (0-based) in `L²` units.
    pub fn codepoints(&self, j: usize) -> Vec<f64> {
        self.quantizers[j].points().iter().map(|a| self.scales[j] * a).collect()
    }

    /// `Σ_{j≤m} λ_j d_{n_j}`.
    pub fn distortion_core(&self) -> f64 {
        self.distortion_core
    }

    /// Bracket for `Σ_{j>m} λ_j`.
    pub fn tail(&self) -> DistortionBracket {
        self.tail
    }

    pub fn codebook_size(&self) -> usize {
        self.allocation.codebook_size()
    }

    /// Lexicographic position of a codeword index tuple, coordinate 1
    /// most significant.
    pub fn flat_index(&self, index: &[usize]) -> usize {
        index
            .iter()
            .zip(self.allocation.levels())
            .fold(0, |acc, (&i, &n)| acc * n + i)
    }

    /// Inverse of [`flat_index`](Self::flat_index).
    pub fn index_tuple(&self, mut flat: usize) -> Vec<usize> {
        let levels = self.allocation.levels();
        let mut out = vec![0; levels.len()];
        for (slot, &n) in out.iter_mut().zip(levels).rev() {
            *slot = flat % n;
            flat /= n;
        }
        out
    }
}

/// `[core + tail_lower, core + tail_upper]`; the expected minimum squared
/// distance of the process to the codebook lies inside.
pub fn exact_distortion(pq: &ProductQuantizer) -> DistortionBracket {
    DistortionBracket {
        lower: pq.distortion_core + pq.tail.lower,
        upper: pq.distortion_core + pq.tail.upper,
    }
}

/// Renders every codeword `Σ_j √λ_j a_{j,i_j} φ_j(t)` on `grid`, in
/// lexicographic order of the index tuples.
pub fn codebook_paths(pq: &ProductQuantizer, grid: &[f64]) -> Result<Vec<QuantizedPath>> {
    let size = pq.codebook_size();
    if size > RENDER_CAP {
        return Err(Error::InvalidInput(format!(
            "codebook of {size} paths exceeds the rendering cap {RENDER_CAP}"
        )));
    }
    let params = *pq.spectrum.params();
    let horizon = params.horizon();
    if grid.iter().any(|t| !(t.is_finite() && (0.0..=horizon).contains(t)))
        || grid.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(Error::InvalidInput(
            "grid must be strictly increasing within [0, T]".into(),
        ));
    }
    let m = pq.allocation.len();
    let basis: Vec<Vec<f64>> = pq.spectrum.pairs()[..m]
        .iter()
        .map(|pair| grid.iter().map(|&t| pair.eval(&params, t)).collect())
        .collect();
    let codepoints: Vec<Vec<f64>> = (0..m).map(|j| pq.codepoints(j)).collect();
    Ok((0..size)
        .map(|flat| {
            let index = pq.index_tuple(flat);
            let values = (0..grid.len())
                .map(|g| {
                    index
                        .iter()
                        .enumerate()
                        .map(|(j, &i)| codepoints[j][i] * basis[j][g])
                        .sum()
                })
                .collect();
            QuantizedPath {
                index,
                grid: grid.to_vec(),
                values,
            }
        })
        .collect())
}

/// Nearest codeword for a path with KL coordinates `coefficients`
/// (`⟨X, φ_j⟩`, in `L²` units). Decomposes coordinatewise; ties go to the
/// lower index.
pub fn nearest(pq: &ProductQuantizer, coefficients: &[f64]) -> Result<Vec<usize>> {
    let m = pq.allocation.len();
    if coefficients.len() < m {
        return Err(Error::InvalidInput(format!(
            "need {m} coefficients, got {}",
            coefficients.len()
        )));
    }
    Ok(pq
        .quantizers
        .iter()
        .zip(&pq.scales)
        .zip(coefficients)
        .map(|((q, &s), &c)| q.nearest_index(c / s))
        .collect())
}
