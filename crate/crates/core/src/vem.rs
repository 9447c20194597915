//! Variational EM for the relaxed model x = U W y + eps, U = diag(u),
//! u in [0,1]^p.
//!
//! The E-step updates the Gaussian mean-field posteriors q(Y) then q(W);
//! each block is the exact minimizer of the free energy given the other,
//! so one (e_step, m_step) sweep never decreases the negative free energy.
//! The M-step coordinates are exact maximizers too: alpha from the prior
//! term, each u_k from its clipped quadratic, sigma from stationarity with
//! the just-updated u.

use crate::error::{Error, Result};
use crate::evidence::{estimate_noise_sd, NoiseEstimator};
use crate::linalg::{truncated_svd, DataMatrix, SvdMethod};
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Parameters theta = (u, alpha, sigma) of the relaxed model.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedParams {
    pub u: DVector<f64>,
    pub alpha: f64,
    pub sigma: f64,
}

impl RelaxedParams {
    pub fn new(u: DVector<f64>, alpha: f64, sigma: f64) -> Result<Self> {
        if u.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::Argument("u must lie in [0, 1]^p".into()));
        }
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(Error::Argument(format!("alpha must be positive, got {alpha}")));
        }
        if !sigma.is_finite() || sigma <= 0.0 {
            return Err(Error::Argument(format!("sigma must be positive, got {sigma}")));
        }
        Ok(RelaxedParams { u, alpha, sigma })
    }
}

/// Gaussian mean-field posterior moments.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalState {
    /// n x d matrix of score means (row i = mu_i).
    pub score_means: DMatrix<f64>,
    /// Shared d x d score covariance.
    pub score_cov: DMatrix<f64>,
    /// p x d matrix of loading means (row k = m_k).
    pub loading_means: DMatrix<f64>,
    /// Per-variable d x d loading covariances S_k.
    pub loading_covs: Vec<DMatrix<f64>>,
}

impl VariationalState {
    pub fn latent_dim(&self) -> usize {
        self.score_cov.nrows()
    }
}

/// Negative-free-energy trajectory of one fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FreeEnergyTrace {
    pub values: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

fn check_shapes(x: &DataMatrix, params: &RelaxedParams, state: &VariationalState) -> Result<()> {
    let (n, p) = (x.n(), x.p());
    let d = state.latent_dim();
    if params.u.len() != p
        || state.score_means.shape() != (n, d)
        || state.score_cov.shape() != (d, d)
        || state.loading_means.shape() != (p, d)
        || state.loading_covs.len() != p
        || state.loading_covs.iter().any(|s| s.shape() != (d, d))
    {
        return Err(Error::Argument("inconsistent shapes between data, params and state".into()));
    }
    Ok(())
}

fn spd_inverse(m: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    Cholesky::new(m.clone())
        .map(|c| c.inverse())
        .ok_or_else(|| Error::NumericalInstability(format!("Cholesky failed on {context}")))
}

fn spd_log_det(m: &DMatrix<f64>, context: &str) -> Result<f64> {
    let chol = Cholesky::new(m.clone())
        .ok_or_else(|| Error::NumericalInstability(format!("Cholesky failed on {context}")))?;
    Ok(2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

fn scale_rows(m: &DMatrix<f64>, u: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for k in 0..m.nrows() {
        let row = out.row(k) * u[k];
        out.set_row(k, &row);
    }
    out
}

/// Frobenius inner product <a, b>.
fn frob_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// One mean-field sweep: q(Y) block first (Sigma, then all mu_i), then the
/// q(W) block (all S_k, then all m_k), each using the newest quantities.
pub fn e_step(
    x: &DataMatrix,
    params: &RelaxedParams,
    state: &VariationalState,
) -> Result<VariationalState> {
    check_shapes(x, params, state)?;
    let (n, p) = (x.n(), x.p());
    let d = state.latent_dim();
    let sigma2 = params.sigma * params.sigma;
    let u = &params.u;

    // Sigma^-1 = I + (1/s^2) M^T U^2 M + (1/s^2) sum_k u_k^2 S_k
    let um = scale_rows(&state.loading_means, u);
    let mut s_sum = DMatrix::zeros(d, d);
    for (k, s_k) in state.loading_covs.iter().enumerate() {
        s_sum += s_k * (u[k] * u[k]);
    }
    let sigma_inv = DMatrix::identity(d, d) + (um.transpose() * &um + s_sum) / sigma2;
    let score_cov = spd_inverse(&sigma_inv, "score covariance")?;

    // mu_i = (1/s^2) Sigma M^T U x_i for all i at once
    let score_means = x.values() * &um * &score_cov / sigma2;

    // S_k^-1 = a^2 I + (u_k^2/s^2)(n Sigma + Mcal^T Mcal)
    let g = &score_cov * n as f64 + score_means.transpose() * &score_means;
    let t = x.values().transpose() * &score_means; // p x d
    let alpha2 = params.alpha * params.alpha;
    let eye = DMatrix::<f64>::identity(d, d);
    let mut loading_covs = Vec::with_capacity(p);
    let mut loading_means = DMatrix::zeros(p, d);
    for k in 0..p {
        let uk2 = u[k] * u[k];
        let s_inv = &eye * alpha2 + &g * (uk2 / sigma2);
        let s_k = spd_inverse(&s_inv, &format!("loading covariance S_{k}"))?;
        // m_k = (u_k/s^2) S_k sum_i x_ik mu_i
        let m_k = &s_k * t.row(k).transpose() * (u[k] / sigma2);
        loading_means.set_row(k, &m_k.transpose());
        loading_covs.push(s_k);
    }
    Ok(VariationalState { score_means, score_cov, loading_means, loading_covs })
}

/// Negative free energy -F up to additive constants independent of the
/// parameters and the variational state; comparable across iterations of
/// one run.
pub fn free_energy(
    x: &DataMatrix,
    params: &RelaxedParams,
    state: &VariationalState,
) -> Result<f64> {
    check_shapes(x, params, state)?;
    let (n, p) = (x.n(), x.p());
    let d = state.latent_dim();
    let sigma2 = params.sigma * params.sigma;
    let alpha2 = params.alpha * params.alpha;
    let u = &params.u;

    let g = &state.score_cov * n as f64 + state.score_means.transpose() * &state.score_means;
    let mut quad = 0.0; // sum_k u_k^2 Tr[G (S_k + m_k m_k^T)]
    let mut tr_smm = 0.0; // sum_k Tr(S_k + m_k m_k^T)
    let mut logdet_s = 0.0;
    for k in 0..p {
        let s_k = &state.loading_covs[k];
        let m_k = state.loading_means.row(k);
        let a_k = frob_inner(&g, s_k) + (m_k * &g * m_k.transpose())[(0, 0)];
        quad += u[k] * u[k] * a_k;
        tr_smm += s_k.trace() + m_k.norm_squared();
        logdet_s += spd_log_det(s_k, &format!("S_{k} log-determinant"))?;
    }
    let um = scale_rows(&state.loading_means, u);
    let t = x.values().transpose() * &state.score_means;
    let cross = frob_inner(&um, &t); // sum_i x_i^T U M mu_i
    let logdet_sigma = spd_log_det(&state.score_cov, "Sigma log-determinant")?;

    Ok(-((n * p) as f64) * params.sigma.ln()
        + (d * p) as f64 * params.alpha.ln()
        - x.trace_gram() / (2.0 * sigma2)
        - quad / (2.0 * sigma2)
        + cross / sigma2
        - 0.5 * alpha2 * tr_smm
        - 0.5 * (n as f64 * state.score_cov.trace() + state.score_means.norm_squared())
        + 0.5 * n as f64 * logdet_sigma
        + 0.5 * logdet_s)
}

/// M-step: alpha from the prior moment, each u_k as the clipped vertex of
/// its free-energy quadratic, then sigma from stationarity with the
/// just-updated u. Each coordinate is an exact maximizer, preserving the
/// ascent property.
pub fn m_step(
    x: &DataMatrix,
    params: &RelaxedParams,
    state: &VariationalState,
) -> Result<RelaxedParams> {
    check_shapes(x, params, state)?;
    let (n, p) = (x.n(), x.p());
    let d = state.latent_dim();

    let g = &state.score_cov * n as f64 + state.score_means.transpose() * &state.score_means;
    let t = x.values().transpose() * &state.score_means;

    let mut tr_smm = 0.0;
    let mut a = vec![0.0; p]; // A_k = Tr[G (S_k + m_k m_k^T)]
    let mut b = vec![0.0; p]; // B_k = sum_i x_ik m_k^T mu_i
    for k in 0..p {
        let s_k = &state.loading_covs[k];
        let m_k = state.loading_means.row(k);
        a[k] = frob_inner(&g, s_k) + (m_k * &g * m_k.transpose())[(0, 0)];
        b[k] = t.row(k).dot(&m_k);
        tr_smm += s_k.trace() + m_k.norm_squared();
    }

    if tr_smm <= 0.0 {
        return Err(Error::DegenerateUpdate("loading second moment vanished".into()));
    }
    let alpha = (tr_smm / (d * p) as f64).powf(-0.5);

    let mut u = DVector::zeros(p);
    for k in 0..p {
        if a[k] <= 0.0 {
            if b[k] > 0.0 {
                return Err(Error::DegenerateUpdate(format!(
                    "u_{k} update has zero curvature with positive slope"
                )));
            }
            u[k] = 0.0;
        } else {
            u[k] = (b[k] / a[k]).clamp(0.0, 1.0);
        }
    }

    let um = scale_rows(&state.loading_means, &u);
    let cross = frob_inner(&um, &t);
    let quad: f64 = (0..p).map(|k| u[k] * u[k] * a[k]).sum();
    let sigma2 = (x.trace_gram() - 2.0 * cross + quad) / ((n * p) as f64);
    if !(sigma2 > 0.0) {
        return Err(Error::DegenerateUpdate(format!("sigma^2 update non-positive: {sigma2}")));
    }

    RelaxedParams::new(u, alpha, sigma2.sqrt())
}

/// Initialization strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitStrategy {
    /// Posterior means from the exact truncated SVD; sigma from the ml
    /// estimator.
    Svd,
    /// Posterior means from the randomized truncated SVD; sigma from ml.
    SvdRandomized,
    /// Standard Gaussian posterior means; sigma from the median estimator
    /// (fully SVD-free).
    Random,
}

/// Starting point: u = 1, Sigma = I, S_k = alpha0^-2 I, and posterior
/// means from the SVD factors or random Gaussians.
pub fn init_state(
    x: &DataMatrix,
    d: usize,
    strategy: InitStrategy,
    seed: u64,
    alpha0: f64,
) -> Result<(RelaxedParams, VariationalState)> {
    let (n, p) = (x.n(), x.p());
    if d == 0 || d > n.min(p) {
        return Err(Error::Argument(format!(
            "d = {d} out of range for a {n} x {p} matrix"
        )));
    }
    if !alpha0.is_finite() || alpha0 <= 0.0 {
        return Err(Error::Argument(format!("alpha0 must be positive, got {alpha0}")));
    }
    let (loading_means, score_means, sigma) = match strategy {
        InitStrategy::Svd | InitStrategy::SvdRandomized => {
            let method = match strategy {
                InitStrategy::Svd => SvdMethod::Exact,
                _ => SvdMethod::Randomized { seed },
            };
            let svd = truncated_svd(x, d, method)?;
            // X ~ (sqrt(n) U)(V S / sqrt(n))^T matches the latent scale
            // E[y y^T] = I
            let sqrt_n = (n as f64).sqrt();
            let loading = &svd.right_vectors * DMatrix::from_diagonal(&(&svd.singular_values / sqrt_n));
            let scores = &svd.left_vectors * sqrt_n;
            let sigma = if d < n.min(p) {
                estimate_noise_sd(x, d, NoiseEstimator::Ml)
                    .or_else(|_| estimate_noise_sd(x, d, NoiseEstimator::Median))?
            } else {
                estimate_noise_sd(x, d, NoiseEstimator::Median)?
            };
            (loading, scores, sigma)
        }
        InitStrategy::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let loading = DMatrix::from_fn(p, d, |_, _| StandardNormal.sample(&mut rng));
            let scores = DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng));
            let sigma = estimate_noise_sd(x, d, NoiseEstimator::Median)?;
            (loading, scores, sigma)
        }
    };
    let params = RelaxedParams::new(DVector::from_element(p, 1.0), alpha0, sigma)?;
    let state = VariationalState {
        score_means,
        score_cov: DMatrix::identity(d, d),
        loading_means,
        loading_covs: vec![DMatrix::identity(d, d) / (alpha0 * alpha0); p],
    };
    Ok((params, state))
}

/// Configuration of one relaxed-model fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConfig {
    pub max_iter: usize,
    pub rel_tol: f64,
    pub alpha_grid: Vec<f64>,
    pub strategy: InitStrategy,
    pub seed: u64,
    /// Warm-up iterations per alpha-grid point before the best start is
    /// kept.
    pub short_run_iters: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iter: 300,
            rel_tol: 1e-7,
            alpha_grid: vec![0.1, 1.0, 10.0],
            strategy: InitStrategy::Svd,
            seed: 0,
            short_run_iters: 5,
        }
    }
}

/// Fits the relaxed model: short VEM runs over the alpha grid, keep the
/// start with the highest negative free energy, then iterate to
/// convergence of -F (not of the parameters).
pub fn fit_relaxed(
    x: &DataMatrix,
    d: usize,
    config: &FitConfig,
) -> Result<(RelaxedParams, VariationalState, FreeEnergyTrace)> {
    if config.alpha_grid.is_empty() {
        return Err(Error::Argument("alpha_grid must not be empty".into()));
    }
    // numerical failures are annotated with where in the run they struck
    let with_context = |e: Error, phase: &str, trace: &[f64]| -> Error {
        match e {
            Error::NumericalInstability(msg) | Error::DegenerateUpdate(msg) => {
                Error::NumericalInstability(format!(
                    "{msg} ({phase}, {} iterations recorded, last -F = {:?})",
                    trace.len(),
                    trace.last()
                ))
            }
            other => other,
        }
    };

    let mut best: Option<(RelaxedParams, VariationalState, Vec<f64>)> = None;
    for &alpha0 in &config.alpha_grid {
        let (mut params, mut state) = init_state(x, d, config.strategy, config.seed, alpha0)?;
        let mut trace = Vec::with_capacity(config.short_run_iters);
        for _ in 0..config.short_run_iters {
            state = e_step(x, &params, &state)
                .map_err(|e| with_context(e, &format!("warm start alpha0 = {alpha0}"), &trace))?;
            params = m_step(x, &params, &state)
                .map_err(|e| with_context(e, &format!("warm start alpha0 = {alpha0}"), &trace))?;
            trace.push(free_energy(x, &params, &state)?);
        }
        let current = trace.last().copied().unwrap_or(f64::NEG_INFINITY);
        let is_better = best
            .as_ref()
            .map(|(_, _, t)| current > t.last().copied().unwrap_or(f64::NEG_INFINITY))
            .unwrap_or(true);
        if is_better {
            best = Some((params, state, trace));
        }
    }
    let (mut params, mut state, mut trace) = best.expect("alpha grid checked non-empty");

    let mut converged = false;
    for iter in 0..config.max_iter {
        state = e_step(x, &params, &state).map_err(|e| with_context(e, "main loop", &trace))?;
        params = m_step(x, &params, &state).map_err(|e| with_context(e, "main loop", &trace))?;
        let value = free_energy(x, &params, &state)?;
        let prev = trace.last().copied();
        trace.push(value);
        #[cfg(debug_assertions)]
        if iter % 10 == 9 {
            audit_spd(&state)?;
        }
        #[cfg(not(debug_assertions))]
        let _ = iter;
        if let Some(prev) = prev {
            if (value - prev).abs() / (1.0 + value.abs()) < config.rel_tol {
                converged = true;
                break;
            }
        }
    }
    let iterations = trace.len();
    Ok((params, state, FreeEnergyTrace { values: trace, converged, iterations }))
}

#[cfg(debug_assertions)]
fn audit_spd(state: &VariationalState) -> Result<()> {
    if Cholesky::new(state.score_cov.clone()).is_none() {
        return Err(Error::NumericalInstability("Sigma lost positive definiteness".into()));
    }
    for (k, s_k) in state.loading_covs.iter().enumerate() {
        if Cholesky::new(s_k.clone()).is_none() {
            return Err(Error::NumericalInstability(format!(
                "S_{k} lost positive definiteness"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::center;

    fn randn(rng: &mut ChaCha8Rng) -> f64 {
        StandardNormal.sample(rng)
    }

    fn seeded_centered(n: usize, p: usize, seed: u64) -> DataMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        center(DMatrix::from_fn(n, p, |_, _| randn(&mut rng))).unwrap()
    }

    fn random_state(n: usize, p: usize, d: usize, seed: u64) -> (RelaxedParams, VariationalState) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut unit = || -> f64 {
            let v: f64 = StandardNormal.sample(&mut rng);
            1.0 / (1.0 + (-v).exp())
        };
        let u = DVector::from_fn(p, |_, _| unit());
        let mut rng2 = ChaCha8Rng::seed_from_u64(seed ^ 0x5a5a);
        fn spd(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
            let a = DMatrix::from_fn(d, d, |_, _| randn(rng));
            &a * a.transpose() + DMatrix::identity(d, d) * 0.5
        }
        let score_means = DMatrix::from_fn(n, d, |_, _| randn(&mut rng2));
        let score_cov = spd(d, &mut rng2);
        let loading_means = DMatrix::from_fn(p, d, |_, _| randn(&mut rng2));
        let loading_covs = (0..p).map(|_| spd(d, &mut rng2)).collect();
        let state = VariationalState { score_means, score_cov, loading_means, loading_covs };
        let params = RelaxedParams::new(u, 0.9, 0.8).unwrap();
        (params, state)
    }

    #[test]
    fn e_step_zero_coupling() {
        let x = seeded_centered(6, 4, 1);
        let (mut params, state) = random_state(6, 4, 2, 2);
        params.u = DVector::zeros(4);
        params.alpha = 1.7;
        let out = e_step(&x, &params, &state).unwrap();
        assert!((out.score_cov.clone() - DMatrix::identity(2, 2)).amax() < 1e-12);
        assert!(out.score_means.amax() < 1e-12);
        for s_k in &out.loading_covs {
            let expected = DMatrix::identity(2, 2) / (1.7f64 * 1.7);
            assert!((s_k - expected).amax() < 1e-12);
        }
        assert!(out.loading_means.amax() < 1e-12);
    }

    #[test]
    fn e_step_s_k_depends_only_on_u_k() {
        let x = seeded_centered(6, 4, 3);
        let (mut params, state) = random_state(6, 4, 2, 4);
        params.u = DVector::from_vec(vec![0.4, 0.9, 0.4, 0.9]);
        let out = e_step(&x, &params, &state).unwrap();
        assert!((out.loading_covs[0].clone() - out.loading_covs[2].clone()).amax() < 1e-14);
        assert!((out.loading_covs[1].clone() - out.loading_covs[3].clone()).amax() < 1e-14);
    }

    #[test]
    fn free_energy_direct_substitution() {
        // X = 0 (n=2, p=1), u = 0, sigma = alpha = 1, mu = 0, Sigma = 1,
        // m = 0, S = 1: -F = -(p/2) Tr(S) - (n/2) Tr(Sigma) = -3/2
        let x = center(DMatrix::zeros(2, 1)).unwrap();
        let params = RelaxedParams::new(DVector::zeros(1), 1.0, 1.0).unwrap();
        let state = VariationalState {
            score_means: DMatrix::zeros(2, 1),
            score_cov: DMatrix::identity(1, 1),
            loading_means: DMatrix::zeros(1, 1),
            loading_covs: vec![DMatrix::identity(1, 1)],
        };
        let f = free_energy(&x, &params, &state).unwrap();
        assert!((f + 1.5).abs() < 1e-14, "free energy {f}");
    }

    #[test]
    fn free_energy_duplicate_row_scales_sum_terms() {
        let x = seeded_centered(5, 3, 7);
        let (params, state) = random_state(5, 3, 2, 8);
        let f1 = free_energy(&x, &params, &state).unwrap();

        // duplicate the data rows and the score means accordingly
        let mut values = DMatrix::zeros(10, 3);
        values.view_mut((0, 0), (5, 3)).copy_from(x.values());
        values.view_mut((5, 0), (5, 3)).copy_from(x.values());
        let x2 = center(values).unwrap();
        let mut mcal = DMatrix::zeros(10, 2);
        mcal.view_mut((0, 0), (5, 2)).copy_from(&state.score_means);
        mcal.view_mut((5, 0), (5, 2)).copy_from(&state.score_means);
        let state2 = VariationalState { score_means: mcal, ..state.clone() };
        let f2 = free_energy(&x2, &params, &state2).unwrap();

        // compare against a naive recomputation on the duplicated instance
        let naive = naive_free_energy(&x2, &params, &state2);
        assert!((f2 - naive).abs() < 1e-9 * naive.abs().max(1.0), "{f2} vs {naive}");
        assert!(f2 < f1, "doubling data lowers -F here: {f2} vs {f1}");
    }

    #[test]
    fn free_energy_permutation_invariant() {
        let x = seeded_centered(6, 5, 9);
        let (params, state) = random_state(6, 5, 2, 10);
        let f = free_energy(&x, &params, &state).unwrap();

        let perm = [4usize, 2, 0, 1, 3];
        let mut values = DMatrix::zeros(6, 5);
        let mut loading_means = DMatrix::zeros(5, 2);
        let mut loading_covs = Vec::new();
        let mut u = DVector::zeros(5);
        for (new_j, &old_j) in perm.iter().enumerate() {
            values.set_column(new_j, &x.values().column(old_j));
            loading_means.set_row(new_j, &state.loading_means.row(old_j));
            loading_covs.push(state.loading_covs[old_j].clone());
            u[new_j] = params.u[old_j];
        }
        let xp = center(values).unwrap();
        let pp = RelaxedParams::new(u, params.alpha, params.sigma).unwrap();
        let sp = VariationalState { loading_means, loading_covs, ..state.clone() };
        let fp = free_energy(&xp, &pp, &sp).unwrap();
        assert!((f - fp).abs() < 1e-12 * f.abs().max(1.0));
    }

    // literal dense-loop recomputation used as a cross-check
    fn naive_free_energy(x: &DataMatrix, params: &RelaxedParams, st: &VariationalState) -> f64 {
        let (n, p) = (x.n(), x.p());
        let d = st.latent_dim();
        let s2 = params.sigma * params.sigma;
        let mut out = -((n * p) as f64) * params.sigma.ln() + (d * p) as f64 * params.alpha.ln();
        out -= x.trace_gram() / (2.0 * s2);
        for i in 0..n {
            for k in 0..p {
                let mut second = 0.0;
                for r in 0..d {
                    for c in 0..d {
                        let sig_mu = st.score_cov[(r, c)]
                            + st.score_means[(i, r)] * st.score_means[(i, c)];
                        let s_mm = st.loading_covs[k][(r, c)]
                            + st.loading_means[(k, r)] * st.loading_means[(k, c)];
                        second += sig_mu * s_mm;
                    }
                }
                out -= params.u[k] * params.u[k] * second / (2.0 * s2);
            }
        }
        for i in 0..n {
            let mut cross = 0.0;
            for k in 0..p {
                let mut dot = 0.0;
                for r in 0..d {
                    dot += st.loading_means[(k, r)] * st.score_means[(i, r)];
                }
                cross += x.values()[(i, k)] * params.u[k] * dot;
            }
            out += cross / s2;
        }
        let a2 = params.alpha * params.alpha;
        for k in 0..p {
            let mut tr = 0.0;
            for r in 0..d {
                tr += st.loading_covs[k][(r, r)]
                    + st.loading_means[(k, r)] * st.loading_means[(k, r)];
            }
            out -= 0.5 * a2 * tr;
        }
        for i in 0..n {
            let mut tr = 0.0;
            for r in 0..d {
                tr += st.score_cov[(r, r)] + st.score_means[(i, r)] * st.score_means[(i, r)];
            }
            out -= 0.5 * tr;
        }
        out += 0.5 * n as f64 * st.score_cov.clone().determinant().ln();
        for k in 0..p {
            out += 0.5 * st.loading_covs[k].clone().determinant().ln();
        }
        out
    }

    #[test]
    fn m_step_alpha_direct_substitution() {
        // d=2, p=3, Tr(S_k + m_k m_k^T) = 2 for all k -> alpha* = 1
        let x = seeded_centered(4, 3, 11);
        let params = RelaxedParams::new(DVector::from_element(3, 0.5), 2.0, 1.0).unwrap();
        let state = VariationalState {
            score_means: DMatrix::zeros(4, 2),
            score_cov: DMatrix::identity(2, 2),
            loading_means: DMatrix::zeros(3, 2),
            loading_covs: vec![DMatrix::identity(2, 2); 3],
        };
        let out = m_step(&x, &params, &state).unwrap();
        assert!((out.alpha - 1.0).abs() < 1e-14);
    }

    #[test]
    fn m_step_u_clipping_edges() {
        // negative B_k drives u_k to 0; large B_k/A_k clips at 1
        let d = 1;
        let mut values = DMatrix::zeros(4, 2);
        // column 0 strongly aligned with the scores, column 1 anti-aligned
        let scores = DMatrix::from_column_slice(4, 1, &[1.0, -1.0, 2.0, -2.0]);
        for i in 0..4 {
            values[(i, 0)] = 10.0 * scores[(i, 0)];
            values[(i, 1)] = -10.0 * scores[(i, 0)];
        }
        let x = center(values).unwrap();
        let params = RelaxedParams::new(DVector::from_element(2, 0.5), 1.0, 1.0).unwrap();
        let state = VariationalState {
            score_means: scores,
            score_cov: DMatrix::identity(d, d) * 1e-6,
            loading_means: DMatrix::from_column_slice(2, 1, &[1.0, 1.0]),
            loading_covs: vec![DMatrix::identity(d, d) * 1e-6; 2],
        };
        let out = m_step(&x, &params, &state).unwrap();
        assert_eq!(out.u[0], 1.0, "aligned variable clips to 1, got {}", out.u[0]);
        assert_eq!(out.u[1], 0.0, "anti-aligned variable clips to 0, got {}", out.u[1]);
    }

    #[test]
    fn m_step_never_decreases_free_energy() {
        for seed in 0..10u64 {
            let (n, p, d) = (7, 5, 2);
            let x = seeded_centered(n, p, 400 + seed);
            let (params, state) = random_state(n, p, d, 500 + seed);
            // free energy is compared on the same state
            let state = e_step(&x, &params, &state).unwrap();
            let before = free_energy(&x, &params, &state).unwrap();
            let new_params = m_step(&x, &params, &state).unwrap();
            let after = free_energy(&x, &new_params, &state).unwrap();
            assert!(
                after >= before - 1e-10 * before.abs().max(1.0),
                "seed {seed}: {after} < {before}"
            );
        }
    }

    #[test]
    fn init_state_contract() {
        let x = seeded_centered(12, 8, 21);
        let (params, state) = init_state(&x, 3, InitStrategy::Svd, 0, 1.0).unwrap();
        assert!(params.u.iter().all(|&v| v == 1.0));
        assert_eq!(state.score_cov, DMatrix::identity(3, 3));
        for s_k in &state.loading_covs {
            assert_eq!(s_k, &DMatrix::identity(3, 3));
        }

        // svd init spans the principal subspace on rank-d data
        let a = DMatrix::from_fn(12, 2, |i, j| ((i * 3 + j) as f64 * 0.37).sin());
        let b = DMatrix::from_fn(2, 8, |i, j| ((i + 2 * j) as f64 * 0.53).cos());
        let low_rank = center(&a * &b).unwrap();
        let (_, st) = init_state(&low_rank, 2, InitStrategy::Svd, 0, 1.0).unwrap();
        // principal angles: projection of loading_means onto the true right
        // subspace should preserve norms
        let svd = truncated_svd(&low_rank, 2, SvdMethod::Exact).unwrap();
        let proj = svd.right_vectors.transpose() * &st.loading_means;
        let back = &svd.right_vectors * proj;
        assert!((back - &st.loading_means).amax() < 1e-8);

        // random strategy is seed-deterministic
        let (p1, s1) = init_state(&x, 3, InitStrategy::Random, 42, 0.5).unwrap();
        let (p2, s2) = init_state(&x, 3, InitStrategy::Random, 42, 0.5).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(s1.loading_means, s2.loading_means);
        assert_eq!(s1.score_means, s2.score_means);
    }

    #[test]
    fn fit_relaxed_trace_monotone_and_deterministic() {
        for seed in 0..5u64 {
            let x = seeded_centered(12, 9, 600 + seed);
            let config = FitConfig { max_iter: 40, seed, ..FitConfig::default() };
            let (_, _, trace) = fit_relaxed(&x, 3, &config).unwrap();
            for w in trace.values.windows(2) {
                assert!(
                    w[1] >= w[0] - 1e-8 * (1.0 + w[0].abs()),
                    "seed {seed}: trace decreased {} -> {}",
                    w[0],
                    w[1]
                );
            }
            let (_, _, trace2) = fit_relaxed(&x, 3, &config).unwrap();
            assert_eq!(trace.values, trace2.values);
        }
    }

    #[test]
    fn fit_relaxed_pure_noise_shrinks_u() {
        let x = seeded_centered(40, 30, 77);
        let config = FitConfig { max_iter: 150, ..FitConfig::default() };
        let (params, _, _) = fit_relaxed(&x, 3, &config).unwrap();
        let mut u: Vec<f64> = params.u.iter().cloned().collect();
        u.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = u[u.len() / 2];
        assert!(median < 0.5, "median u = {median}");
    }

    #[test]
    fn fit_relaxed_recovers_intro_ranking() {
        // n=50, p=30, d=5, q=10, sigma^2 = 0.1: the 10 largest u must be
        // exactly the true actives
        let (n, p, d, q) = (50, 30, 5, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(20260810);
        let w = DMatrix::from_fn(p, d, |k, _| if k < q { randn(&mut rng) } else { 0.0 });
        let y = DMatrix::from_fn(n, d, |_, _| randn(&mut rng));
        let noise = DMatrix::from_fn(n, p, |_, _| randn(&mut rng) * 0.1f64.sqrt());
        let x = center(&y * w.transpose() + noise).unwrap();
        let (params, _, trace) = fit_relaxed(&x, d, &FitConfig::default()).unwrap();
        // ARD parameters converge slowly; only the ordering of u matters
        // and the trace must have run its course without error
        assert_eq!(trace.iterations, trace.values.len());
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| params.u[b].partial_cmp(&params.u[a]).unwrap());
        let mut top: Vec<usize> = order[..q].to_vec();
        top.sort_unstable();
        assert_eq!(top, (0..q).collect::<Vec<_>>(), "u ranking missed the support");
    }
}
