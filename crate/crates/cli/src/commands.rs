//! Subcommand implementations and their machine-readable report shapes.

use crate::io;
use crate::{
    BenchScenarioArg, BenchmarkArgs, CliError, EnrichArgs, EvaluateArgs, FilterArg, FitArgs,
    NoiseArg, ScenarioArg, SigmaEstimatorArg, SimulateArgs, SvdArg,
};
use gsppca::evidence::NoiseEstimator;
use gsppca::linalg::{assume_centered, center};
use gsppca::metrics::{f_score, pei, GeneSetCollection};
use gsppca::selection::{select_support, PathPoint, SelectConfig};
use gsppca::simulate::{generate, NoiseKind, Scenario, ScenarioSpec};
use gsppca::vem::{FreeEnergyTrace, InitStrategy};
use rayon::prelude::*;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::time::Instant;

impl SigmaEstimatorArg {
    fn to_lib(self) -> NoiseEstimator {
        match self {
            SigmaEstimatorArg::Ml => NoiseEstimator::Ml,
            SigmaEstimatorArg::Median => NoiseEstimator::Median,
            SigmaEstimatorArg::Unbiased => NoiseEstimator::Unbiased,
        }
    }

    fn name(self) -> &'static str {
        match self {
            SigmaEstimatorArg::Ml => "ml",
            SigmaEstimatorArg::Median => "median",
            SigmaEstimatorArg::Unbiased => "unbiased",
        }
    }
}

impl SvdArg {
    fn to_strategy(self) -> InitStrategy {
        match self {
            SvdArg::Exact => InitStrategy::Svd,
            SvdArg::Randomized => InitStrategy::SvdRandomized,
            SvdArg::None => InitStrategy::Random,
        }
    }

    fn name(self) -> &'static str {
        match self {
            SvdArg::Exact => "exact",
            SvdArg::Randomized => "randomized",
            SvdArg::None => "none",
        }
    }
}

impl NoiseArg {
    fn to_lib(self) -> NoiseKind {
        match self {
            NoiseArg::Gaussian => NoiseKind::Gaussian,
            NoiseArg::Laplace => NoiseKind::Laplace,
        }
    }
}

#[derive(Serialize)]
struct FitConfigEcho {
    input: String,
    latent_dim: usize,
    sigma_estimator: &'static str,
    alpha_grid: Vec<f64>,
    max_iter: usize,
    rel_tol: f64,
    seed: u64,
    no_center: bool,
    header: bool,
    speedup_threshold: f64,
    filter: &'static str,
    svd: &'static str,
}

#[derive(Serialize)]
struct FitReport {
    version: &'static str,
    config: FitConfigEcho,
    n: usize,
    p: usize,
    support: Vec<u8>,
    q_hat: usize,
    alpha_hat: Option<f64>,
    sigma1_hat: f64,
    ranking: Vec<usize>,
    u: Vec<f64>,
    path: Vec<PathPoint>,
    free_energy: FreeEnergyTrace,
    #[serde(skip_serializing_if = "Option::is_none")]
    timing_seconds: Option<f64>,
}

pub fn fit(args: FitArgs) -> Result<(), CliError> {
    let raw = io::read_matrix_csv(&args.input, args.header)?;
    let x = if args.no_center { assume_centered(raw)? } else { center(raw)? };

    let mut config = SelectConfig::new(args.latent_dim);
    config.sigma_estimator = args.sigma_estimator.to_lib();
    config.speedup_threshold = args.speedup_threshold;
    config.filter = match args.filter {
        FilterArg::Auto => None,
        FilterArg::On => Some(true),
        FilterArg::Off => Some(false),
    };
    config.vem.max_iter = args.max_iter;
    config.vem.rel_tol = args.rel_tol;
    config.vem.alpha_grid = args.alpha_grid.clone();
    config.vem.seed = args.seed;
    config.vem.strategy = args.svd.to_strategy();

    let start = Instant::now();
    let result = select_support(&x, args.latent_dim, &config)?;
    let elapsed = start.elapsed().as_secs_f64();
    eprintln!(
        "fit: n={} p={} q_hat={} iterations={} converged={} elapsed={elapsed:.3}s",
        x.n(),
        x.p(),
        result.q_hat,
        result.trace.iterations,
        result.trace.converged
    );

    let report = FitReport {
        version: gsppca::VERSION,
        config: FitConfigEcho {
            input: args.input.display().to_string(),
            latent_dim: args.latent_dim,
            sigma_estimator: args.sigma_estimator.name(),
            alpha_grid: args.alpha_grid,
            max_iter: args.max_iter,
            rel_tol: args.rel_tol,
            seed: args.seed,
            no_center: args.no_center,
            header: args.header,
            speedup_threshold: args.speedup_threshold,
            filter: match args.filter {
                FilterArg::Auto => "auto",
                FilterArg::On => "on",
                FilterArg::Off => "off",
            },
            svd: args.svd.name(),
        },
        n: x.n(),
        p: x.p(),
        support: result.support.mask().iter().map(|&b| b as u8).collect(),
        q_hat: result.q_hat,
        alpha_hat: result.alpha_hat,
        sigma1_hat: result.sigma1_hat,
        ranking: result.ranking.clone(),
        u: result.u.clone(),
        path: result.path.clone(),
        free_energy: result.trace.clone(),
        timing_seconds: args.timing.then_some(elapsed),
    };
    emit_json(args.output.as_deref(), &report)?;
    if let Some(path) = &args.loadings {
        io::write_matrix_csv(path, &result.loadings)?;
    }
    if let Some(path) = &args.scores {
        io::write_matrix_csv(path, &result.scores)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct TruthSidecar {
    version: &'static str,
    mask: Vec<u8>,
    q: usize,
    spec: ScenarioSpec,
}

fn build_spec(args: &SimulateArgs) -> Result<ScenarioSpec, CliError> {
    let mut spec = match args.scenario {
        ScenarioArg::Intro => ScenarioSpec::intro(args.seed),
        ScenarioArg::Snr => {
            let snr = args.snr.ok_or_else(|| CliError::usage("snr scenario requires --snr"))?;
            if !(snr > 0.0) {
                return Err(CliError::usage(format!("--snr must be positive, got {snr}")));
            }
            ScenarioSpec::snr(args.n.unwrap_or(40), snr, args.seed)
        }
        ScenarioArg::Blocks => {
            ScenarioSpec::blocks(args.n.unwrap_or(66), args.noise.to_lib(), args.seed)
        }
    };
    if let Some(n) = args.n {
        spec.n = n;
    }
    if let Some(p) = args.p {
        spec.p = p;
    }
    if let Some(d) = args.latent_dim {
        spec.d = d;
    }
    if let Some(q) = args.q {
        spec.q = q;
    }
    if let Some(sigma) = args.sigma {
        if args.scenario == ScenarioArg::Snr {
            return Err(CliError::usage("use --snr, not --sigma, for the snr scenario"));
        }
        spec.sigma = sigma;
    }
    if let Some(rho) = args.rho {
        spec.rho = rho;
    }
    if let Some(diag) = args.block_diag {
        spec.block_diag = diag;
    }
    if args.scenario == ScenarioArg::Snr {
        // re-derive sigma in case n/p/d/q overrides changed the design
        spec.sigma = gsppca::simulate::sigma_for_snr(
            spec.d,
            spec.q,
            spec.p,
            spec.snr.expect("snr scenario carries snr"),
        );
    }
    spec.noise_kind = args.noise.to_lib();
    spec.validate()?;
    Ok(spec)
}

pub fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let spec = build_spec(&args)?;
    let (x, truth, _) = generate(&spec)?;
    io::write_matrix_csv(&args.output, &x)?;
    let truth_path = args
        .truth
        .clone()
        .unwrap_or_else(|| sidecar_path(&args.output));
    let sidecar = TruthSidecar {
        version: gsppca::VERSION,
        mask: truth.mask().iter().map(|&b| b as u8).collect(),
        q: truth.q(),
        spec,
    };
    io::write_json(&truth_path, &sidecar)?;
    eprintln!(
        "simulate: wrote {} and {}",
        args.output.display(),
        truth_path.display()
    );
    Ok(())
}

fn sidecar_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_os_string();
    name.push(".truth.json");
    PathBuf::from(name)
}

/// Deterministic replicate seeds: a splitmix-style hash of the base seed
/// and the two grid coordinates.
fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut z = base
        ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ b.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct BenchRow {
    grid_index: usize,
    grid_value: f64,
    spec: ScenarioSpec,
    replicate: usize,
    q_hat: usize,
    f_score: f64,
}

fn percentile(sorted: &[f64], frac: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = frac * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

pub fn benchmark(args: BenchmarkArgs) -> Result<(), CliError> {
    if args.replicates == 0 {
        return Err(CliError::usage("--replicates must be at least 1"));
    }
    // grid of fully-resolved specs
    let specs: Vec<(f64, ScenarioSpec)> = match args.scenario {
        BenchScenarioArg::Snr => {
            if args.snr_steps < 2 || args.snr_max <= args.snr_min || !(args.snr_min > 0.0) {
                return Err(CliError::usage("need 0 < snr-min < snr-max and snr-steps >= 2"));
            }
            (0..args.snr_steps)
                .map(|i| {
                    let snr = args.snr_min
                        + (args.snr_max - args.snr_min) * i as f64
                            / (args.snr_steps - 1) as f64;
                    (snr, ScenarioSpec::snr(args.n, snr, args.seed))
                })
                .collect()
        }
        BenchScenarioArg::Blocks => {
            let p = 200usize;
            let grid = args
                .n_grid
                .clone()
                .unwrap_or_else(|| vec![p / 5, p / 4, p / 3, p / 2, p]);
            grid.into_iter()
                .map(|n| {
                    let mut spec = ScenarioSpec::blocks(n, args.noise.to_lib(), args.seed);
                    if let Some(rho) = args.rho {
                        spec.rho = rho;
                    }
                    if let Some(diag) = args.block_diag {
                        spec.block_diag = diag;
                    }
                    (n as f64, spec)
                })
                .collect()
        }
    };
    for (_, spec) in &specs {
        spec.validate()?;
    }

    let jobs: Vec<(usize, usize)> = (0..specs.len())
        .flat_map(|g| (0..args.replicates).map(move |r| (g, r)))
        .collect();
    let rows: Vec<BenchRow> = jobs
        .par_iter()
        .map(|&(g, r)| -> Result<BenchRow, CliError> {
            let (grid_value, base_spec) = &specs[g];
            let mut spec = base_spec.clone();
            spec.seed = derive_seed(args.seed, g as u64, r as u64);
            let (data, truth, _) = generate(&spec)?;
            let x = center(data)?;
            let result = select_support(&x, spec.d, &SelectConfig::new(spec.d))?;
            let score = f_score(&result.support, &truth)?;
            Ok(BenchRow {
                grid_index: g,
                grid_value: *grid_value,
                spec,
                replicate: r,
                q_hat: result.q_hat,
                f_score: score,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    // per-replicate records
    let mut writer = csv::Writer::from_path(&args.output)
        .map_err(|e| CliError::usage(format!("cannot write {}: {e}", args.output.display())))?;
    let grid_name = match args.scenario {
        BenchScenarioArg::Snr => "snr",
        BenchScenarioArg::Blocks => "n",
    };
    writer
        .write_record([
            "scenario", grid_name, "n", "p", "d", "q", "sigma", "rho", "block_diag", "noise",
            "replicate", "seed", "q_hat", "f_score",
        ])
        .map_err(|e| CliError::usage(e.to_string()))?;
    for row in &rows {
        let noise = match row.spec.noise_kind {
            NoiseKind::Gaussian => "gaussian",
            NoiseKind::Laplace => "laplace",
        };
        let scen = match row.spec.scenario {
            Scenario::Intro => "intro",
            Scenario::Snr => "snr",
            Scenario::Blocks => "blocks",
        };
        writer
            .write_record([
                scen.to_string(),
                format!("{}", row.grid_value),
                row.spec.n.to_string(),
                row.spec.p.to_string(),
                row.spec.d.to_string(),
                row.spec.q.to_string(),
                format!("{}", row.spec.sigma),
                format!("{}", row.spec.rho),
                format!("{}", row.spec.block_diag),
                noise.to_string(),
                row.replicate.to_string(),
                row.spec.seed.to_string(),
                row.q_hat.to_string(),
                format!("{}", row.f_score),
            ])
            .map_err(|e| CliError::usage(e.to_string()))?;
    }
    writer.flush().map_err(|e| CliError::usage(e.to_string()))?;

    // per-grid-point summary
    if let Some(summary_path) = &args.summary {
        let mut writer = csv::Writer::from_path(summary_path).map_err(|e| {
            CliError::usage(format!("cannot write {}: {e}", summary_path.display()))
        })?;
        writer
            .write_record([grid_name, "replicates", "mean", "sd", "median", "q1", "q3"])
            .map_err(|e| CliError::usage(e.to_string()))?;
        for (g, (grid_value, _)) in specs.iter().enumerate() {
            let mut scores: Vec<f64> = rows
                .iter()
                .filter(|row| row.grid_index == g)
                .map(|row| row.f_score)
                .collect();
            scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let m = scores.len() as f64;
            let mean = scores.iter().sum::<f64>() / m;
            let sd = (scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / m).sqrt();
            writer
                .write_record([
                    format!("{grid_value}"),
                    scores.len().to_string(),
                    format!("{mean}"),
                    format!("{sd}"),
                    format!("{}", percentile(&scores, 0.5)),
                    format!("{}", percentile(&scores, 0.25)),
                    format!("{}", percentile(&scores, 0.75)),
                ])
                .map_err(|e| CliError::usage(e.to_string()))?;
        }
        writer.flush().map_err(|e| CliError::usage(e.to_string()))?;
    }
    eprintln!(
        "benchmark: {} grid points x {} replicates -> {}",
        specs.len(),
        args.replicates,
        args.output.display()
    );
    Ok(())
}

pub fn evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let predicted = io::read_mask_json(&args.predicted)?;
    let truth = io::read_mask_json(&args.truth)?;
    let score = f_score(&predicted, &truth)?;
    println!("{score}");
    Ok(())
}

#[derive(Serialize)]
struct SetRecord {
    name: String,
    size: usize,
    overlap: usize,
    p_value: f64,
    adjusted_p_value: f64,
}

#[derive(Serialize)]
struct EnrichReport {
    version: &'static str,
    selection_path: String,
    gmt_path: String,
    names_path: String,
    threshold: f64,
    universe_size: usize,
    n_sets: usize,
    selected: usize,
    pei: f64,
    enriched: Vec<String>,
    sets: Vec<SetRecord>,
    dropped_sets: Vec<String>,
}

pub fn enrich(args: EnrichArgs) -> Result<(), CliError> {
    let mask = io::read_mask_json(&args.selection)?;
    let names = io::read_names(&args.names)?;
    if mask.p() != names.len() {
        return Err(CliError::usage(format!(
            "selection has {} variables but {} names were given",
            mask.p(),
            names.len()
        )));
    }
    let gmt_content = std::fs::read_to_string(&args.gmt)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", args.gmt.display())))?;
    let (collection, dropped) = GeneSetCollection::from_gmt(&gmt_content, &names)?;
    if !dropped.is_empty() {
        eprintln!(
            "enrich: {} set(s) had no member in the variable list and were dropped",
            dropped.len()
        );
    }
    let selection = mask.active_indices();
    let result = pei(&selection, &collection, args.threshold)?;

    let is_selected = mask.mask();
    let sets: Vec<SetRecord> = collection
        .sets()
        .iter()
        .zip(result.raw_pvalues.iter().zip(&result.adjusted_pvalues))
        .map(|((name, members), (&p, &adj))| SetRecord {
            name: name.clone(),
            size: members.len(),
            overlap: members.iter().filter(|&&j| is_selected[j]).count(),
            p_value: p,
            adjusted_p_value: adj,
        })
        .collect();
    let report = EnrichReport {
        version: gsppca::VERSION,
        selection_path: args.selection.display().to_string(),
        gmt_path: args.gmt.display().to_string(),
        names_path: args.names.display().to_string(),
        threshold: args.threshold,
        universe_size: collection.universe_size(),
        n_sets: collection.len(),
        selected: selection.len(),
        pei: result.pei,
        enriched: result.enriched,
        sets,
        dropped_sets: dropped,
    };
    emit_json(args.output.as_deref(), &report)?;
    Ok(())
}

fn emit_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<(), CliError> {
    match path {
        Some(path) => io::write_json(path, value),
        None => {
            let content = serde_json::to_string_pretty(value)
                .map_err(|e| CliError::usage(format!("serialization failed: {e}")))?;
            println!("{content}");
            Ok(())
        }
    }
}
