//! Model selection over the nested family induced by the relaxed solution:
//! rank the variables by u, sweep the exact evidence over the supports
//! v^(0) .. v^(p), pick the maximizer, and renormalize the retained
//! components by PCA on the active columns.

use crate::error::{Error, Result};
use crate::evidence::{
    estimate_noise_sd, optimize_alpha_terms, AlphaOptions, EvidenceTerms, NoiseEstimator,
    SupportVector,
};
use crate::linalg::{pca, DataMatrix};
use crate::vem::{fit_relaxed, FitConfig, FreeEnergyTrace};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// One evaluated support size along the path. The null model (k = 0) has
/// no slab precision to optimize.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PathPoint {
    pub k: usize,
    pub alpha: Option<f64>,
    pub log_evidence: f64,
    pub boundary: bool,
}

/// Everything the selection produces.
#[derive(Debug, Clone)]
pub struct SelectionResult {
    pub support: SupportVector,
    pub q_hat: usize,
    pub alpha_hat: Option<f64>,
    pub sigma1_hat: f64,
    pub path: Vec<PathPoint>,
    /// Variables ordered by decreasing relevance.
    pub ranking: Vec<usize>,
    /// Relaxed coefficients after the VEM run.
    pub u: Vec<f64>,
    /// p x d loadings, exactly zero off-support.
    pub loadings: DMatrix<f64>,
    /// n x d scores of the renormalized components.
    pub scores: DMatrix<f64>,
    pub trace: FreeEnergyTrace,
    pub config: SelectConfig,
}

/// Configuration of the full selection pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectConfig {
    pub latent_dim: usize,
    pub vem: FitConfig,
    pub sigma_estimator: NoiseEstimator,
    pub alpha: AlphaOptions,
    /// Variables with u below this are dropped before the path is built
    /// (when filtering is on).
    pub speedup_threshold: f64,
    /// None: filter only when p > 2000.
    pub filter: Option<bool>,
    /// Evaluate the per-k alpha optimizations in parallel (output is
    /// gathered in k order either way).
    pub parallel_path: bool,
}

impl SelectConfig {
    pub fn new(latent_dim: usize) -> Self {
        SelectConfig {
            latent_dim,
            vem: FitConfig::default(),
            sigma_estimator: NoiseEstimator::Median,
            alpha: AlphaOptions::default(),
            speedup_threshold: 1e-8,
            filter: None,
            parallel_path: true,
        }
    }
}

/// Indices sorted by u descending; ties broken by sample variance
/// descending, then by index ascending.
pub fn rank_variables(u: &[f64], variances: &[f64]) -> Vec<usize> {
    assert_eq!(u.len(), variances.len(), "u and variances must have equal length");
    let mut order: Vec<usize> = (0..u.len()).collect();
    order.sort_by(|&a, &b| {
        u[b].partial_cmp(&u[a])
            .unwrap()
            .then(variances[b].partial_cmp(&variances[a]).unwrap())
            .then(a.cmp(&b))
    });
    order
}

/// The nested family v^(k_min) .. v^(k_max): v^(k) activates the top-k
/// ranked variables.
pub fn nested_models(ranking: &[usize], k_min: usize, k_max: usize) -> Result<Vec<SupportVector>> {
    let p = ranking.len();
    if k_min < 1 || k_min > k_max || k_max > p {
        return Err(Error::Argument(format!(
            "need 1 <= k_min <= k_max <= p, got {k_min}..{k_max} with p = {p}"
        )));
    }
    let mut out = Vec::with_capacity(k_max - k_min + 1);
    let mut mask = vec![false; p];
    for (i, &j) in ranking.iter().take(k_max).enumerate() {
        mask[j] = true;
        if i + 1 >= k_min {
            out.push(SupportVector::from_mask(mask.clone()));
        }
    }
    Ok(out)
}

/// Runs the whole pipeline: VEM fit, noise estimation, evidence sweep over
/// the nested path (k = 0 is the Gaussian null model), argmax with
/// sparsest-wins tie-breaking, then renormalization.
pub fn select_support(x: &DataMatrix, d: usize, config: &SelectConfig) -> Result<SelectionResult> {
    if !x.is_centered() {
        return Err(Error::Argument("select_support requires a centered matrix".into()));
    }
    let (n, p) = (x.n(), x.p());
    if d == 0 || d > n.min(p) {
        return Err(Error::Argument(format!(
            "d = {d} out of range for a {n} x {p} matrix"
        )));
    }

    let (params, _, trace) = fit_relaxed(x, d, &config.vem)?;
    let sigma1 = estimate_noise_sd(x, d, config.sigma_estimator)?;
    let variances = x.column_variances();
    let u: Vec<f64> = params.u.iter().cloned().collect();
    let ranking = rank_variables(&u, &variances);

    let filter_on = config.filter.unwrap_or(p > 2000);
    let k_max = if filter_on {
        ranking
            .iter()
            .take_while(|&&j| u[j] >= config.speedup_threshold)
            .count()
    } else {
        p
    };

    // prefix snapshots of the per-row active squared norms along the ranking
    let total_sq = x.row_squared_norms();
    let mut prefixes: Vec<Vec<f64>> = Vec::with_capacity(k_max + 1);
    prefixes.push(vec![0.0; n]);
    let mut acc = vec![0.0; n];
    for &j in ranking.iter().take(k_max) {
        for (i, a) in acc.iter_mut().enumerate() {
            let v = x.values()[(i, j)];
            *a += v * v;
        }
        prefixes.push(acc.clone());
    }

    let eval_k = |k: usize| -> Result<Option<PathPoint>> {
        if k == 0 {
            let terms = EvidenceTerms::from_norms(&prefixes[0], &total_sq, 0, p, d, sigma1)?;
            let log_evidence = terms.log_evidence(1.0)?;
            return Ok(Some(PathPoint { k: 0, alpha: None, log_evidence, boundary: false }));
        }
        match EvidenceTerms::from_norms(&prefixes[k], &total_sq, k, p, d, sigma1) {
            Ok(terms) => {
                let opt = optimize_alpha_terms(&terms, &config.alpha)?;
                Ok(Some(PathPoint {
                    k,
                    alpha: Some(opt.alpha),
                    log_evidence: opt.log_evidence,
                    boundary: opt.boundary,
                }))
            }
            // a support whose active block vanishes on some row is skipped,
            // not fatal for the rest of the path
            Err(Error::DegenerateRow { .. }) => Ok(None),
            Err(other) => Err(other),
        }
    };

    let evaluated: Vec<Option<PathPoint>> = if config.parallel_path {
        (0..=k_max)
            .into_par_iter()
            .map(eval_k)
            .collect::<Result<Vec<_>>>()?
    } else {
        (0..=k_max).map(eval_k).collect::<Result<Vec<_>>>()?
    };
    let path: Vec<PathPoint> = evaluated.into_iter().flatten().collect();
    if path.is_empty() {
        return Err(Error::SelectionFailure("no model could be evaluated".into()));
    }
    if k_max > 0 && path.iter().all(|pt| pt.k == 0) {
        return Err(Error::SelectionFailure(
            "every candidate support hit a degenerate-row error".into(),
        ));
    }

    // argmax, sparsest model wins ties (path is in increasing k order)
    let mut best = &path[0];
    for pt in &path[1..] {
        if pt.log_evidence > best.log_evidence {
            best = pt;
        }
    }
    let q_hat = best.k;
    let alpha_hat = best.alpha;
    let support = if q_hat == 0 {
        SupportVector::empty(p)
    } else {
        SupportVector::from_indices(p, &ranking[..q_hat])?
    };

    let (loadings, scores) = if q_hat == 0 {
        (DMatrix::zeros(p, d), DMatrix::zeros(n, d))
    } else {
        renormalize(x, &support, d)?
    };

    Ok(SelectionResult {
        support,
        q_hat,
        alpha_hat,
        sigma1_hat: sigma1,
        path,
        ranking,
        u,
        loadings,
        scores,
        trace,
        config: config.clone(),
    })
}

/// PCA on the active columns (min(d, q, n) components); active rows of the
/// returned p x d loadings are filled from it, the rest stay exactly zero.
pub fn renormalize(
    x: &DataMatrix,
    support: &SupportVector,
    d: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if support.q() == 0 {
        return Err(Error::EmptySupport);
    }
    if support.p() != x.p() {
        return Err(Error::Argument("support length does not match p".into()));
    }
    let active = support.active_indices();
    let (n, p) = (x.n(), x.p());
    let d_eff = d.min(active.len()).min(n);
    let mut sub = DMatrix::zeros(n, active.len());
    for (out_j, &j) in active.iter().enumerate() {
        sub.set_column(out_j, &x.values().column(j));
    }
    let sub = DataMatrix::new(sub)?;
    let result = pca(&sub, d_eff, 0.0)?;
    let mut loadings = DMatrix::zeros(p, d);
    for (row_in_sub, &j) in active.iter().enumerate() {
        for c in 0..d_eff {
            loadings[(j, c)] = result.loadings[(row_in_sub, c)];
        }
    }
    let mut scores = DMatrix::zeros(n, d);
    scores.view_mut((0, 0), (n, d_eff)).copy_from(&result.scores);
    Ok((loadings, scores))
}
