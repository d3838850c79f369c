use std::fs;
use std::path::Path;

use gspq::funcquant::{self, allocate, codebook_paths, exact_distortion};
use gspq::mc::{estimate_distortion, McConfig};
use gspq::rate::{estimate_c_inf, fit_rate, remark_constant, theta_bounds};
use gspq::spectrum::{newton_paper_mode, spectrum_batch, wiener_root, DEFAULT_TOL};
use gspq::{CSeqEntry, DistortionTable, ProcessParams, Spectrum};
use serde::Serialize;
use serde_json::json;

use crate::output::{csv_bytes, deliver, emit, json_bytes, sig17, sig_vec, RunManifest, Sig17};
use crate::{CliError, CseqArgs, DistortionArgs, EigenArgs, FiguresArgs, QuantizerArgs, RateArgs, RootMethod};

const EIGEN_HEADER: [&str; 8] = ["k", "T", "ell", "x", "lambda", "c", "residual", "in_bracket"];
const CSEQ_HEADER: [&str; 4] = ["k", "T", "ell", "c"];
const DISTORTION_HEADER: [&str; 7] = [
    "n",
    "distortion_lower",
    "distortion_upper",
    "mc_mean",
    "mc_stderr",
    "theta_lower",
    "theta_upper",
];

const FIG1_K: [f64; 4] = [0.0, 0.3, 0.5, 0.7];
const FIG1_COUNT: usize = 10;
const FIG2_K: [f64; 3] = [0.3, 0.5, 0.7];
const FIG2_COUNT: usize = 1000;

fn params(k: f64, horizon: f64) -> Result<ProcessParams, CliError> {
    ProcessParams::new(k, horizon).map_err(|e| CliError::Usage(e.to_string()))
}

fn sorted_ks(ks: &[f64]) -> Vec<f64> {
    let mut ks = ks.to_vec();
    ks.sort_by(f64::total_cmp);
    ks.dedup();
    ks
}

fn require_count(count: usize) -> Result<(), CliError> {
    if count == 0 {
        return Err(CliError::Usage("--count must be at least 1".into()));
    }
    Ok(())
}

fn spectrum_for(p: &ProcessParams, count: usize, tol: f64) -> Result<Spectrum, CliError> {
    spectrum_batch(p, count, tol).map_err(CliError::numeric(format!("k = {}", p.k())))
}

fn eigen_rows(ks: &[f64], horizon: f64, count: usize, method: RootMethod, tol: f64) -> Result<Vec<Vec<String>>, CliError> {
    let mut rows = Vec::with_capacity(ks.len() * count);
    for &k in ks {
        let p = params(k, horizon)?;
        match method {
            RootMethod::Bracketed => {
                for pair in spectrum_for(&p, count, tol)?.pairs() {
                    rows.push(vec![
                        sig17(k),
                        sig17(horizon),
                        pair.ell.to_string(),
                        sig17(pair.x),
                        sig17(pair.lambda),
                        sig17(pair.c()),
                        sig17(pair.residual(&p)),
                        pair.in_bracket().to_string(),
                    ]);
                }
            }
            RootMethod::PaperNewton => {
                for ell in 1..=count {
                    let r = newton_paper_mode(&p, ell).map_err(CliError::numeric(format!("k = {k}, ell = {ell}")))?;
                    let ratio = wiener_root(ell) / r.x;
                    rows.push(vec![
                        sig17(k),
                        sig17(horizon),
                        ell.to_string(),
                        sig17(r.x),
                        sig17((horizon / r.x).powi(2)),
                        sig17(ratio * ratio),
                        sig17(r.residual(&p)),
                        r.in_bracket.to_string(),
                    ]);
                }
            }
        }
    }
    Ok(rows)
}

pub fn cmd_eigen(args: &EigenArgs) -> Result<(), CliError> {
    require_count(args.count)?;
    if !(args.tol > 0.0) {
        return Err(CliError::Usage("--tol must be positive".into()));
    }
    let ks = sorted_ks(&args.k);
    let rows = eigen_rows(&ks, args.horizon, args.count, args.method, args.tol)?;
    let bytes = csv_bytes(&EIGEN_HEADER, &rows)?;
    let method = match args.method {
        RootMethod::Bracketed => "bracketed",
        RootMethod::PaperNewton => "paper-newton",
    };
    let manifest = RunManifest::new(
        "eigen",
        json!({"k": sig_vec(&ks), "T": Sig17(args.horizon), "count": args.count, "method": method, "tol": Sig17(args.tol)}),
        None,
    );
    deliver(args.out.as_deref(), &bytes, manifest)
}

/// Largest `c_ℓ` over `ℓ ≥ 2` compared with 3/2 and with the provable
/// enclosure `c_ℓ < ((2ℓ−1)/(2ℓ−2))²`.
#[derive(Debug, Clone, Serialize)]
pub struct CseqDiagnostic {
    pub k: Sig17,
    pub max_c: Sig17,
    pub argmax_ell: usize,
    pub exceeds_three_halves: bool,
    pub within_provable_enclosure: bool,
}

fn cseq_diagnostic(k: f64, cseq: &[CSeqEntry]) -> Option<CseqDiagnostic> {
    let best = cseq.iter().skip(1).max_by(|a, b| a.c.total_cmp(&b.c))?;
    let enclosed = cseq.iter().skip(1).all(|e| {
        let r = (2 * e.ell - 1) as f64 / (2 * e.ell - 2) as f64;
        e.c < r * r
    });
    Some(CseqDiagnostic {
        k: Sig17(k),
        max_c: Sig17(best.c),
        argmax_ell: best.ell,
        exceeds_three_halves: best.c >= 1.5,
        within_provable_enclosure: enclosed,
    })
}

fn report_diagnostics(diags: &[CseqDiagnostic]) {
    for d in diags {
        eprintln!(
            "k = {}: max c_ell over ell >= 2 is {} at ell = {} ({} 3/2; provable enclosure {})",
            d.k.0,
            sig17(d.max_c.0),
            d.argmax_ell,
            if d.exceeds_three_halves { "not below" } else { "below" },
            if d.within_provable_enclosure { "holds" } else { "VIOLATED" },
        );
    }
}

fn cseq_rows(ks: &[f64], horizon: f64, count: usize) -> Result<(Vec<Vec<String>>, Vec<CseqDiagnostic>), CliError> {
    let mut rows = Vec::with_capacity(ks.len() * count);
    let mut diags = Vec::new();
    for &k in ks {
        let p = params(k, horizon)?;
        let cseq = spectrum_for(&p, count, DEFAULT_TOL)?.c_sequence();
        rows.extend(
            cseq.iter()
                .map(|e| vec![sig17(k), sig17(horizon), e.ell.to_string(), sig17(e.c)]),
        );
        diags.extend(cseq_diagnostic(k, &cseq));
    }
    Ok((rows, diags))
}

pub fn cmd_cseq(args: &CseqArgs) -> Result<(), CliError> {
    require_count(args.count)?;
    let ks = sorted_ks(&args.k);
    let (rows, diags) = cseq_rows(&ks, args.horizon, args.count)?;
    report_diagnostics(&diags);
    let bytes = csv_bytes(&CSEQ_HEADER, &rows)?;
    let mut manifest = RunManifest::new(
        "cseq",
        json!({"k": sig_vec(&ks), "T": Sig17(args.horizon), "count": args.count}),
        None,
    );
    manifest.diagnostics = Some(json!({ "c_versus_three_halves": diags }));
    deliver(args.out.as_deref(), &bytes, manifest)
}

/// Distortion table just large enough for `budget` (levels never exceed
/// the budget), capped at the default table size.
fn table_for(budget: usize) -> Result<DistortionTable, CliError> {
    let n = budget.clamp(1, gspq::gauss1d::DEFAULT_TABLE_CAP);
    DistortionTable::build(n).map_err(CliError::numeric("scalar quantizer table"))
}

fn require_spectrum_len(len: usize) -> Result<(), CliError> {
    if len == 0 {
        return Err(CliError::Usage("--spectrum-len must be at least 1".into()));
    }
    Ok(())
}

#[derive(Serialize)]
struct ParamsDoc {
    k: Sig17,
    #[serde(rename = "T")]
    horizon: Sig17,
}

#[derive(Serialize)]
struct AllocationDoc {
    method: &'static str,
    budget: usize,
    levels: Vec<usize>,
    codebook_size: usize,
}

#[derive(Serialize)]
struct CoordinateDoc {
    ell: usize,
    lambda: Sig17,
    /// Codepoints in `L²` units, `√λ_ℓ a_i`.
    points: Vec<Sig17>,
}

#[derive(Serialize)]
struct BracketDoc {
    lower: Sig17,
    upper: Sig17,
}

#[derive(Serialize)]
struct PathDoc {
    index: Vec<usize>,
    values: Vec<Sig17>,
}

#[derive(Serialize)]
struct CodebookDoc {
    params: ParamsDoc,
    allocation: AllocationDoc,
    coordinates: Vec<CoordinateDoc>,
    distortion: BracketDoc,
    spectrum_length: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid: Option<Vec<Sig17>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    paths: Option<Vec<PathDoc>>,
}

fn alloc_name(a: crate::AllocArg) -> &'static str {
    match a {
        crate::AllocArg::Exhaustive => "exhaustive",
        crate::AllocArg::Greedy => "greedy",
    }
}

pub fn cmd_quantizer(args: &QuantizerArgs) -> Result<(), CliError> {
    let p = params(args.k, args.horizon)?;
    if args.budget == 0 {
        return Err(CliError::Usage("--budget must be at least 1".into()));
    }
    require_spectrum_len(args.spectrum_len)?;
    let grid = match args.grid {
        Some(n) if n < 2 => return Err(CliError::Usage("--grid needs at least 2 points".into())),
        Some(n) => Some(
            (0..n)
                .map(|i| args.horizon * i as f64 / (n - 1) as f64)
                .collect::<Vec<f64>>(),
        ),
        None => None,
    };
    let render = grid.is_some() && !args.no_paths;
    let spectrum = spectrum_for(&p, args.spectrum_len, DEFAULT_TOL)?;
    let table = table_for(args.budget)?;
    let context = format!("k = {}, budget = {}", args.k, args.budget);
    let allocation = allocate(&spectrum, &table, args.budget, args.alloc.into()).map_err(|e| match e {
        gspq::Error::Unsupported(_) | gspq::Error::SpectrumTooShort { .. } => CliError::Usage(e.to_string()),
        e => CliError::numeric(context.clone())(e),
    })?;
    if render && allocation.codebook_size() > funcquant::RENDER_CAP {
        return Err(CliError::Usage(format!(
            "codebook of {} paths exceeds the rendering cap {}; pass --no-paths",
            allocation.codebook_size(),
            funcquant::RENDER_CAP
        )));
    }
    let pq = funcquant::build(&spectrum, &allocation, &table).map_err(CliError::numeric(context.clone()))?;
    let bracket = exact_distortion(&pq);
    let paths = if render {
        let rendered = codebook_paths(&pq, grid.as_deref().unwrap_or_default()).map_err(CliError::numeric(context))?;
        Some(
            rendered
                .into_iter()
                .map(|path| PathDoc {
                    index: path.index,
                    values: sig_vec(&path.values),
                })
                .collect(),
        )
    } else {
        None
    };
    let doc = CodebookDoc {
        params: ParamsDoc {
            k: Sig17(args.k),
            horizon: Sig17(args.horizon),
        },
        allocation: AllocationDoc {
            method: alloc_name(args.alloc),
            budget: args.budget,
            levels: allocation.levels().to_vec(),
            codebook_size: allocation.codebook_size(),
        },
        coordinates: spectrum.pairs()[..allocation.len()]
            .iter()
            .enumerate()
            .map(|(j, pair)| CoordinateDoc {
                ell: pair.ell,
                lambda: Sig17(pair.lambda),
                points: sig_vec(&pq.codepoints(j)),
            })
            .collect(),
        distortion: BracketDoc {
            lower: Sig17(bracket.lower),
            upper: Sig17(bracket.upper),
        },
        spectrum_length: spectrum.len(),
        grid: grid.as_deref().map(sig_vec),
        paths,
    };
    let bytes = json_bytes(&doc)?;
    let manifest = RunManifest::new(
        "quantizer",
        json!({
            "k": Sig17(args.k),
            "T": Sig17(args.horizon),
            "budget": args.budget,
            "grid": args.grid,
            "no_paths": args.no_paths,
            "alloc": alloc_name(args.alloc),
            "spectrum_len": args.spectrum_len,
        }),
        None,
    );
    deliver(args.out.as_deref(), &bytes, manifest)
}

pub fn cmd_distortion(args: &DistortionArgs) -> Result<(), CliError> {
    let p = params(args.k, args.horizon)?;
    require_spectrum_len(args.spectrum_len)?;
    let mut budgets = args.budgets.clone();
    budgets.sort_unstable();
    budgets.dedup();
    if budgets.first().is_some_and(|&n| n < 2) {
        return Err(CliError::Usage("--budgets entries must be at least 2".into()));
    }
    let max_budget = budgets.last().copied().unwrap_or(2);
    let spectrum = spectrum_for(&p, args.spectrum_len, DEFAULT_TOL)?;
    let table = table_for(max_budget)?;
    let mut rows = Vec::with_capacity(budgets.len());
    let mut sandwich = Vec::with_capacity(budgets.len());
    for &n in &budgets {
        let context = format!("k = {}, budget = {n}", args.k);
        let allocation = allocate(&spectrum, &table, n, args.alloc.into()).map_err(|e| match e {
            gspq::Error::Unsupported(_) | gspq::Error::SpectrumTooShort { .. } => CliError::Usage(e.to_string()),
            e => CliError::numeric(context.clone())(e),
        })?;
        let pq = funcquant::build(&spectrum, &allocation, &table).map_err(CliError::numeric(context.clone()))?;
        let bracket = exact_distortion(&pq);
        let (mc_mean, mc_stderr) = if args.mc_samples > 0 {
            let cfg = McConfig {
                samples: args.mc_samples,
                seed: args.seed,
                truncation: args.truncation.max(allocation.len()),
                grid: 64,
            };
            let est = estimate_distortion(&pq, &cfg).map_err(|e| match e {
                gspq::Error::SpectrumTooShort { .. } => CliError::Usage(e.to_string()),
                e => CliError::numeric(context.clone())(e),
            })?;
            (sig17(est.mean), sig17(est.stderr))
        } else {
            (String::new(), String::new())
        };
        let (lo, hi) = theta_bounds(&p, n as u64).map_err(CliError::numeric(context))?;
        let (theta_lower, theta_upper) = (lo * lo, hi * hi);
        sandwich.push(json!({
            "n": n,
            "upper_inside_theta": theta_lower <= bracket.upper && bracket.upper <= theta_upper,
        }));
        rows.push(vec![
            n.to_string(),
            sig17(bracket.lower),
            sig17(bracket.upper),
            mc_mean,
            mc_stderr,
            sig17(theta_lower),
            sig17(theta_upper),
        ]);
    }
    let bytes = csv_bytes(&DISTORTION_HEADER, &rows)?;
    let mut manifest = RunManifest::new(
        "distortion",
        json!({
            "k": Sig17(args.k),
            "T": Sig17(args.horizon),
            "budgets": budgets,
            "mc_samples": args.mc_samples,
            "truncation": args.truncation,
            "alloc": alloc_name(args.alloc),
            "spectrum_len": args.spectrum_len,
        }),
        Some(args.seed),
    );
    manifest.diagnostics = Some(json!({ "theta_sandwich": sandwich }));
    deliver(args.out.as_deref(), &bytes, manifest)
}

/// Reads a headed CSV and returns the requested columns, reporting the
/// offending line on any parse failure.
fn read_columns(path: &Path, wanted: &[&str]) -> Result<Vec<Vec<f64>>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .from_path(path)
        .map_err(|e| CliError::io_at(path, e))?;
    let headers = reader.headers().map_err(|e| CliError::io_at(path, e))?.clone();
    let idx = wanted
        .iter()
        .map(|w| {
            headers
                .iter()
                .position(|h| h.trim() == *w)
                .ok_or_else(|| CliError::Usage(format!("{}: missing column {w:?}", path.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| CliError::Usage(format!("{}: row {row}: {e}", path.display())))?;
        let values = idx
            .iter()
            .zip(wanted)
            .map(|(&j, name)| {
                record
                    .get(j)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .ok_or_else(|| {
                        CliError::Usage(format!("{}: row {row}: column {name:?} is not a number", path.display()))
                    })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        out.push(values);
    }
    Ok(out)
}

#[derive(Serialize)]
struct FitDoc {
    coefficient: Sig17,
    /// Exponent of `ln n` in the distortion.
    exponent: Sig17,
    /// Exponent of `ln n` in the error, half the distortion exponent.
    error_exponent: Sig17,
    r2: Sig17,
    points: usize,
}

#[derive(Serialize)]
struct CInfDoc {
    k: Sig17,
    #[serde(rename = "T")]
    horizon: Sig17,
    c_inf: Sig17,
    halfwidth: Sig17,
    slope: Sig17,
    window: Sig17,
    /// `√(2 c∞) T/π`.
    remark_coefficient: Sig17,
}

#[derive(Serialize)]
struct RateDoc {
    #[serde(skip_serializing_if = "Option::is_none")]
    fit: Option<FitDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cseq: Option<Vec<CInfDoc>>,
}

pub fn cmd_rate(args: &RateArgs) -> Result<(), CliError> {
    let fit = match &args.input {
        Some(path) => {
            let rows = read_columns(path, &["n", "distortion_upper"])?;
            let points: Vec<(f64, f64)> = rows.iter().map(|r| (r[0], r[1])).collect();
            let f = fit_rate(&points).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            Some(FitDoc {
                coefficient: Sig17(f.coefficient),
                exponent: Sig17(f.exponent),
                error_exponent: Sig17(f.exponent / 2.0),
                r2: Sig17(f.r2),
                points: points.len(),
            })
        }
        None => None,
    };
    let cseq = match &args.cseq {
        Some(path) => {
            let rows = read_columns(path, &["k", "T", "ell", "c"])?;
            let mut groups: Vec<((f64, f64), Vec<CSeqEntry>)> = Vec::new();
            for (i, r) in rows.iter().enumerate() {
                let ell = r[2];
                if !(ell >= 1.0 && ell.fract() == 0.0) {
                    return Err(CliError::Usage(format!("{}: row {}: ell must be a positive integer", path.display(), i + 1)));
                }
                let entry = CSeqEntry {
                    ell: ell as usize,
                    c: r[3],
                };
                match groups.iter_mut().find(|(key, _)| *key == (r[0], r[1])) {
                    Some((_, v)) => v.push(entry),
                    None => groups.push(((r[0], r[1]), vec![entry])),
                }
            }
            let mut docs = Vec::with_capacity(groups.len());
            for ((k, horizon), entries) in groups {
                let est = estimate_c_inf(&entries, args.window)
                    .map_err(|e| CliError::Usage(format!("{}: k = {k}: {e}", path.display())))?;
                // Every c_ℓ is at least 1, hence so is the limit.
                let coefficient = remark_constant(est.estimate.max(1.0), horizon)
                    .map_err(CliError::numeric(format!("k = {k}")))?;
                docs.push(CInfDoc {
                    k: Sig17(k),
                    horizon: Sig17(horizon),
                    c_inf: Sig17(est.estimate),
                    halfwidth: Sig17(est.halfwidth),
                    slope: Sig17(est.slope),
                    window: Sig17(args.window),
                    remark_coefficient: Sig17(coefficient),
                });
            }
            Some(docs)
        }
        None => None,
    };
    let bytes = json_bytes(&RateDoc { fit, cseq })?;
    let manifest = RunManifest::new(
        "rate",
        json!({
            "input": args.input.as_ref().map(|p| p.display().to_string()),
            "cseq": args.cseq.as_ref().map(|p| p.display().to_string()),
            "window": Sig17(args.window),
        }),
        None,
    );
    deliver(args.out.as_deref(), &bytes, manifest)
}

/// Writes `fig1.csv` (eigen rows, `k ∈ {0, 0.3, 0.5, 0.7}`, `ℓ ≤ 10`),
/// `fig2.csv` (c-sequence, `k ∈ {0.3, 0.5, 0.7}`, `ℓ ≤ 1000`) and
/// `manifest.json` into `outdir`, all at `T = 1`.
pub fn cmd_figures(args: &FiguresArgs) -> Result<RunManifest, CliError> {
    let dir = &args.outdir;
    fs::create_dir_all(dir).map_err(|e| CliError::io_at(dir, e))?;
    let mut manifest = RunManifest::new(
        "figures",
        json!({
            "fig1": {"k": sig_vec(&FIG1_K), "T": Sig17(1.0), "count": FIG1_COUNT, "method": "bracketed"},
            "fig2": {"k": sig_vec(&FIG2_K), "T": Sig17(1.0), "count": FIG2_COUNT},
        }),
        None,
    );
    let fig1 = eigen_rows(&FIG1_K, 1.0, FIG1_COUNT, RootMethod::Bracketed, DEFAULT_TOL)?;
    emit(&dir.join("fig1.csv"), &csv_bytes(&EIGEN_HEADER, &fig1)?, &mut manifest)?;
    let (fig2, diags) = cseq_rows(&FIG2_K, 1.0, FIG2_COUNT)?;
    emit(&dir.join("fig2.csv"), &csv_bytes(&CSEQ_HEADER, &fig2)?, &mut manifest)?;
    report_diagnostics(&diags);
    manifest.diagnostics = Some(json!({ "c_versus_three_halves": diags }));
    let path = dir.join("manifest.json");
    fs::write(&path, json_bytes(&manifest)?).map_err(|e| CliError::io_at(&path, e))?;
    Ok(manifest)
}
