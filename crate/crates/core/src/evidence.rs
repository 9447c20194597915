//! Exact noiseless marginal log-likelihood of the globally sparse model,
//! its concave maximization over the slab precision alpha, and noise
//! estimation.
//!
//! For a support v with q active variables, each centered observation
//! contributes a spherical Gaussian factor over the inactive block and a
//! symmetric multivariate Bessel factor (beta = 1/alpha, nu = (d-q)/2)
//! over the active block. Everything stays in log scale.

use crate::error::{Error, Result};
use crate::linalg::{covariance_spectrum, DataMatrix};
use crate::special::{log_bessel_k_ratio, log_mv_bessel_pdf_radial, BesselParams};
use serde::{Deserialize, Serialize};

/// Binary mask over the p variables; q = number of active ones.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportVector {
    mask: Vec<bool>,
    q: usize,
}

impl SupportVector {
    pub fn from_mask(mask: Vec<bool>) -> Self {
        let q = mask.iter().filter(|&&b| b).count();
        SupportVector { mask, q }
    }

    pub fn from_indices(p: usize, indices: &[usize]) -> Result<Self> {
        let mut mask = vec![false; p];
        for &j in indices {
            if j >= p {
                return Err(Error::Argument(format!("index {j} out of range for p = {p}")));
            }
            mask[j] = true;
        }
        Ok(SupportVector::from_mask(mask))
    }

    pub fn all_active(p: usize) -> Self {
        SupportVector { mask: vec![true; p], q: p }
    }

    pub fn empty(p: usize) -> Self {
        SupportVector { mask: vec![false; p], q: 0 }
    }

    pub fn p(&self) -> usize {
        self.mask.len()
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn is_active(&self, j: usize) -> bool {
        self.mask[j]
    }

    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.p()).filter(|&j| self.mask[j]).collect()
    }

    /// Complement mask: v_j + vbar_j = 1 for all j.
    pub fn complement(&self) -> SupportVector {
        SupportVector {
            mask: self.mask.iter().map(|&b| !b).collect(),
            q: self.p() - self.q,
        }
    }

    pub fn is_nested_in(&self, other: &SupportVector) -> bool {
        self.p() == other.p() && self.mask.iter().zip(&other.mask).all(|(&a, &b)| !a || b)
    }
}

/// Model under which the exact evidence is evaluated.
#[derive(Debug, Clone)]
pub struct EvidenceModel {
    pub support: SupportVector,
    pub alpha: f64,
    pub sigma1: f64,
    pub latent_dim: usize,
}

impl EvidenceModel {
    pub fn new(support: SupportVector, alpha: f64, sigma1: f64, latent_dim: usize) -> Result<Self> {
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(Error::Argument(format!("alpha must be positive, got {alpha}")));
        }
        if !sigma1.is_finite() || sigma1 <= 0.0 {
            return Err(Error::Argument(format!("sigma1 must be positive, got {sigma1}")));
        }
        if latent_dim == 0 {
            return Err(Error::Argument("latent_dim must be at least 1".into()));
        }
        Ok(EvidenceModel { support, alpha, sigma1, latent_dim })
    }
}

/// Per-observation sufficient statistics of the evidence: active-block
/// norms and inactive-block squared norms. Row sums use a canonical
/// (sorted) order so the evidence is bit-stable under column permutations.
#[derive(Debug, Clone)]
pub(crate) struct EvidenceTerms {
    pub active_norms: Vec<f64>,
    pub inactive_sq_norms: Vec<f64>,
    pub q: usize,
    pub p: usize,
    pub d: usize,
    pub sigma1: f64,
}

impl EvidenceTerms {
    pub fn new(x: &DataMatrix, support: &SupportVector, sigma1: f64, d: usize) -> Result<Self> {
        if support.p() != x.p() {
            return Err(Error::Argument(format!(
                "support length {} does not match p = {}",
                support.p(),
                x.p()
            )));
        }
        if !x.is_centered() {
            return Err(Error::Argument("evidence requires a centered matrix".into()));
        }
        if !sigma1.is_finite() || sigma1 <= 0.0 {
            return Err(Error::Argument(format!("sigma1 must be positive, got {sigma1}")));
        }
        if d == 0 || d > x.n().min(x.p()) {
            return Err(Error::Argument(format!(
                "latent_dim = {d} out of range for a {} x {} matrix",
                x.n(),
                x.p()
            )));
        }
        let q = support.q();
        let n = x.n();
        let mut active_norms = Vec::with_capacity(n);
        let mut inactive_sq_norms = Vec::with_capacity(n);
        let mut act = Vec::with_capacity(q);
        let mut inact = Vec::with_capacity(x.p() - q);
        for i in 0..n {
            act.clear();
            inact.clear();
            for j in 0..x.p() {
                let v = x.values()[(i, j)];
                if support.is_active(j) {
                    act.push(v * v);
                } else {
                    inact.push(v * v);
                }
            }
            act.sort_by(|a, b| a.partial_cmp(b).unwrap());
            inact.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let a_sq: f64 = act.iter().sum();
            if q >= 1 && a_sq == 0.0 {
                return Err(Error::DegenerateRow { row: i });
            }
            active_norms.push(a_sq.sqrt());
            inactive_sq_norms.push(inact.iter().sum());
        }
        Ok(EvidenceTerms { active_norms, inactive_sq_norms, q, p: x.p(), d, sigma1 })
    }

    /// Build directly from per-row active squared norms and total squared
    /// norms (the nested-path scan updates these incrementally).
    pub fn from_norms(
        active_sq: &[f64],
        total_sq: &[f64],
        q: usize,
        p: usize,
        d: usize,
        sigma1: f64,
    ) -> Result<Self> {
        let mut active_norms = Vec::with_capacity(active_sq.len());
        let mut inactive_sq_norms = Vec::with_capacity(active_sq.len());
        for (i, (&a, &t)) in active_sq.iter().zip(total_sq).enumerate() {
            if q >= 1 && a == 0.0 {
                return Err(Error::DegenerateRow { row: i });
            }
            active_norms.push(a.sqrt());
            inactive_sq_norms.push((t - a).max(0.0));
        }
        Ok(EvidenceTerms { active_norms, inactive_sq_norms, q, p, d, sigma1 })
    }

    /// L(X, v, alpha, sigma1): Gaussian factor over the inactive block
    /// (omitted when q = p) plus the Bessel factor over the active block
    /// (omitted when q = 0).
    pub fn log_evidence(&self, alpha: f64) -> Result<f64> {
        let n = self.active_norms.len();
        let mut total = 0.0;
        if self.q < self.p {
            let m = (self.p - self.q) as f64;
            let ln_norm = -0.5 * m * (2.0 * std::f64::consts::PI * self.sigma1 * self.sigma1).ln();
            let inv = 0.5 / (self.sigma1 * self.sigma1);
            total += n as f64 * ln_norm;
            total -= inv * self.inactive_sq_norms.iter().sum::<f64>();
        }
        if self.q >= 1 {
            let nu = (self.d as f64 - self.q as f64) / 2.0;
            let params = BesselParams::new(1.0 / alpha, nu, self.q)?;
            for (i, &r) in self.active_norms.iter().enumerate() {
                total += log_mv_bessel_pdf_radial(r, &params).map_err(|e| match e {
                    Error::SingularPoint(_) => Error::DegenerateRow { row: i },
                    other => other,
                })?;
            }
        }
        Ok(total)
    }

    /// dL/dalpha = sum_i [ d/alpha - ||x_{i,v}|| K_{nu-1}/K_nu(||x_{i,v}|| alpha) ],
    /// ratio order nu = (q - d)/2.
    pub fn grad_alpha(&self, alpha: f64) -> Result<f64> {
        if self.q == 0 {
            return Err(Error::Argument("gradient requires q >= 1".into()));
        }
        let nu = (self.q as f64 - self.d as f64) / 2.0;
        let mut total = 0.0;
        for &r in &self.active_norms {
            let ratio = log_bessel_k_ratio(nu, r * alpha)?.exp();
            total += self.d as f64 / alpha - r * ratio;
        }
        Ok(total)
    }
}

/// Exact noiseless marginal log-likelihood of the support model.
pub fn noiseless_log_evidence(x: &DataMatrix, model: &EvidenceModel) -> Result<f64> {
    let terms = EvidenceTerms::new(x, &model.support, model.sigma1, model.latent_dim)?;
    terms.log_evidence(model.alpha)
}

/// Analytic derivative of the evidence with respect to alpha.
pub fn evidence_grad_alpha(x: &DataMatrix, model: &EvidenceModel) -> Result<f64> {
    let terms = EvidenceTerms::new(x, &model.support, model.sigma1, model.latent_dim)?;
    terms.grad_alpha(model.alpha)
}

/// Which univariate maximizer to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphaSearch {
    /// Gradient bisection when q >= d (strict concavity), golden section
    /// otherwise.
    Auto,
    Bisection,
    GoldenSection,
}

/// Tolerances and search bounds for the univariate alpha maximization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlphaOptions {
    /// Terminate when the bracket has relative width below this.
    pub rel_width: f64,
    /// Bracketing bounds for the gradient sign change (q >= d path).
    pub bracket_lo: f64,
    pub bracket_hi: f64,
    /// Golden-section log-grid bounds (q < d path).
    pub golden_lo: f64,
    pub golden_hi: f64,
    pub search: AlphaSearch,
}

impl Default for AlphaOptions {
    fn default() -> Self {
        AlphaOptions {
            rel_width: 1e-8,
            bracket_lo: 1e-12,
            bracket_hi: 1e12,
            golden_lo: 1e-6,
            golden_hi: 1e6,
            search: AlphaSearch::Auto,
        }
    }
}

/// Result of the alpha maximization.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AlphaOptimum {
    pub alpha: f64,
    pub log_evidence: f64,
    /// True when no interior stationary point was bracketed and the better
    /// bound was returned instead.
    pub boundary: bool,
}

/// Maximizes alpha -> L(X, v, alpha, sigma1).
///
/// For q >= d the evidence gradient is strictly decreasing in alpha, so a
/// sign change is bracketed by geometric expansion from alpha = 1 and then
/// bisected. For q < d (concavity unproven) a golden-section search on
/// log-alpha is used instead.
pub fn optimize_alpha(
    x: &DataMatrix,
    support: &SupportVector,
    sigma1: f64,
    d: usize,
    opts: &AlphaOptions,
) -> Result<AlphaOptimum> {
    if support.q() == 0 {
        return Err(Error::Argument("optimize_alpha requires q >= 1".into()));
    }
    let terms = EvidenceTerms::new(x, support, sigma1, d)?;
    optimize_alpha_terms(&terms, opts)
}

pub(crate) fn optimize_alpha_terms(
    terms: &EvidenceTerms,
    opts: &AlphaOptions,
) -> Result<AlphaOptimum> {
    match opts.search {
        AlphaSearch::Bisection => bisect_gradient(terms, opts),
        AlphaSearch::GoldenSection => golden_section(terms, opts),
        AlphaSearch::Auto => {
            if terms.q >= terms.d {
                bisect_gradient(terms, opts)
            } else {
                golden_section(terms, opts)
            }
        }
    }
}

fn bisect_gradient(terms: &EvidenceTerms, opts: &AlphaOptions) -> Result<AlphaOptimum> {
    let mut a = 1.0;
    let mut ga = terms.grad_alpha(a)?;
    if ga == 0.0 {
        return Ok(AlphaOptimum { alpha: a, log_evidence: terms.log_evidence(a)?, boundary: false });
    }
    // expand geometrically in the uphill direction until the sign flips
    let factor: f64 = if ga > 0.0 { 10.0 } else { 0.1 };
    let limit = if ga > 0.0 { opts.bracket_hi } else { opts.bracket_lo };
    let mut b = a;
    loop {
        b *= factor;
        if (factor > 1.0 && b > limit) || (factor < 1.0 && b < limit) {
            // no sign change within bounds: boundary solution
            let lo = terms.log_evidence(opts.bracket_lo)?;
            let hi = terms.log_evidence(opts.bracket_hi)?;
            let (alpha, log_evidence) =
                if lo >= hi { (opts.bracket_lo, lo) } else { (opts.bracket_hi, hi) };
            return Ok(AlphaOptimum { alpha, log_evidence, boundary: true });
        }
        let gb = terms.grad_alpha(b)?;
        if gb == 0.0 || ga.signum() != gb.signum() {
            break;
        }
        a = b;
        ga = gb;
    }
    let (mut lo, mut hi) = if a < b { (a, b) } else { (b, a) };
    while hi - lo > opts.rel_width * lo {
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        let gm = terms.grad_alpha(mid)?;
        // gradient decreases in alpha: positive gradient means the
        // maximum lies to the right
        if gm > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let alpha = (lo * hi).sqrt();
    Ok(AlphaOptimum { alpha, log_evidence: terms.log_evidence(alpha)?, boundary: false })
}

fn golden_section(terms: &EvidenceTerms, opts: &AlphaOptions) -> Result<AlphaOptimum> {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut lo = opts.golden_lo.ln();
    let mut hi = opts.golden_hi.ln();
    let f = |t: f64| terms.log_evidence(t.exp());
    let mut t1 = hi - INV_PHI * (hi - lo);
    let mut t2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(t1)?;
    let mut f2 = f(t2)?;
    let tol = opts.rel_width.max(1e-12);
    while hi - lo > tol {
        if f1 >= f2 {
            hi = t2;
            t2 = t1;
            f2 = f1;
            t1 = hi - INV_PHI * (hi - lo);
            f1 = f(t1)?;
        } else {
            lo = t1;
            t1 = t2;
            f1 = f2;
            t2 = lo + INV_PHI * (hi - lo);
            f2 = f(t2)?;
        }
    }
    let alpha = (0.5 * (lo + hi)).exp();
    Ok(AlphaOptimum { alpha, log_evidence: terms.log_evidence(alpha)?, boundary: false })
}

/// Noise-variance estimators for the inactive block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseEstimator {
    /// Mean of the trailing min(n,p) - d eigenvalues of X^T X / n.
    Ml,
    /// Median of the per-variable sample variances (SVD-free).
    Median,
    /// Ml with a leading-order high-dimensional bias correction (optional).
    Unbiased,
}

/// Estimate of the inactive-noise standard deviation.
pub fn estimate_noise_sd(x: &DataMatrix, d: usize, method: NoiseEstimator) -> Result<f64> {
    match method {
        NoiseEstimator::Median => {
            let mut vars = x.column_variances();
            vars.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let m = vars.len();
            let median = if m % 2 == 1 {
                vars[m / 2]
            } else {
                0.5 * (vars[m / 2 - 1] + vars[m / 2])
            };
            if median <= 0.0 {
                return Err(Error::DegenerateNoise("median variance is zero".into()));
            }
            Ok(median.sqrt())
        }
        NoiseEstimator::Ml | NoiseEstimator::Unbiased => {
            let m = x.n().min(x.p());
            if d >= m {
                return Err(Error::Argument(format!(
                    "d = {d} leaves no trailing eigenvalues (min(n,p) = {m})"
                )));
            }
            let spectrum = covariance_spectrum(x);
            let tail: f64 = spectrum.iter().skip(d).sum();
            let estimate = match method {
                NoiseEstimator::Ml => tail / (m - d) as f64,
                NoiseEstimator::Unbiased => {
                    // first-order spike-bias correction:
                    // E[tail sum] ~ sigma^2 (p - d - d p / n)
                    let denom =
                        x.p() as f64 - d as f64 - d as f64 * x.p() as f64 / x.n() as f64;
                    if denom <= 0.0 {
                        return Err(Error::DegenerateNoise(
                            "bias-corrected denominator non-positive".into(),
                        ));
                    }
                    tail / denom
                }
                NoiseEstimator::Median => unreachable!(),
            };
            if estimate <= 0.0 {
                return Err(Error::DegenerateNoise("trailing eigenvalues are all zero".into()));
            }
            Ok(estimate.sqrt())
        }
    }
}
