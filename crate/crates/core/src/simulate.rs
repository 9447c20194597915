//! Seeded synthetic-data generators for the three benchmark scenarios and
//! the Gaussian-matrix-times-Gaussian-vector sampler used as a
//! distributional oracle.
//!
//! All draws come from ChaCha8 streams: one generator keyed by the run
//! seed, with a fixed stream id per component (loadings, scores, noise),
//! so outputs are bit-identical across runs and platforms.

use crate::error::{Error, Result};
use crate::evidence::SupportVector;
use crate::linalg::{covariance_spectrum, pca, DataMatrix};
use nalgebra::{Cholesky, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Experimental design family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Intro,
    Snr,
    Blocks,
}

/// Noise families for the block design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Gaussian,
    Laplace,
}

/// Default off-diagonal covariance entry of the block design. Together
/// with the default diagonal this gives within-block correlation 1/3 at a
/// scale where the selection difficulty profile over n matches the
/// published benchmark tables; both entries are configurable.
pub const DEFAULT_BLOCK_RHO: f64 = 1.0;
/// Default diagonal of the block covariance.
pub const DEFAULT_BLOCK_DIAG: f64 = 3.0;

/// Full description of one synthetic dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub n: usize,
    pub p: usize,
    pub d: usize,
    pub q: usize,
    /// Noise standard deviation (intro; derived from snr for the snr
    /// scenario; the blocks noise is always unit-variance).
    pub sigma: f64,
    /// Signal-to-noise ratio (snr scenario only).
    pub snr: Option<f64>,
    /// Off-diagonal entry of each covariance block (blocks scenario).
    pub rho: f64,
    /// Diagonal entry of each covariance block (blocks scenario).
    pub block_diag: f64,
    pub noise_kind: NoiseKind,
    pub seed: u64,
}

impl ScenarioSpec {
    /// The introductory design: n=50, p=30, d=5, q=10, sigma^2 = 0.1.
    pub fn intro(seed: u64) -> Self {
        ScenarioSpec {
            scenario: Scenario::Intro,
            n: 50,
            p: 30,
            d: 5,
            q: 10,
            sigma: 0.1f64.sqrt(),
            snr: None,
            rho: DEFAULT_BLOCK_RHO,
            block_diag: DEFAULT_BLOCK_DIAG,
            noise_kind: NoiseKind::Gaussian,
            seed,
        }
    }

    /// The SNR design: p=200, d=10, q=20, noise derived from the requested
    /// signal-to-noise ratio.
    pub fn snr(n: usize, snr: f64, seed: u64) -> Self {
        ScenarioSpec {
            scenario: Scenario::Snr,
            n,
            p: 200,
            d: 10,
            q: 20,
            sigma: sigma_for_snr(10, 20, 200, snr),
            snr: Some(snr),
            rho: DEFAULT_BLOCK_RHO,
            block_diag: DEFAULT_BLOCK_DIAG,
            noise_kind: NoiseKind::Gaussian,
            seed,
        }
    }

    /// The block-covariance design: p=200, d=10, q=20, unit-variance noise
    /// of the requested family.
    pub fn blocks(n: usize, noise_kind: NoiseKind, seed: u64) -> Self {
        ScenarioSpec {
            scenario: Scenario::Blocks,
            n,
            p: 200,
            d: 10,
            q: 20,
            sigma: 1.0,
            snr: None,
            rho: DEFAULT_BLOCK_RHO,
            block_diag: DEFAULT_BLOCK_DIAG,
            noise_kind,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Argument("need n >= 2".into()));
        }
        if self.q > self.p {
            return Err(Error::Argument(format!("q = {} exceeds p = {}", self.q, self.p)));
        }
        if self.d == 0 || self.d > self.n.min(self.p) {
            return Err(Error::Argument(format!("d = {} out of range", self.d)));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::Argument(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.scenario == Scenario::Blocks {
            if self.p % 4 != 0 {
                return Err(Error::Argument(format!(
                    "blocks scenario needs p divisible by 4, got {}",
                    self.p
                )));
            }
            // rho is a covariance entry; positive definiteness is what
            // bounds it, checked by the Cholesky in the generator
            if !self.rho.is_finite() || !self.block_diag.is_finite() || self.block_diag <= 0.0 {
                return Err(Error::Argument(format!(
                    "block covariance entries must be finite with positive diagonal, got diag {} rho {}",
                    self.block_diag, self.rho
                )));
            }
        }
        Ok(())
    }
}

/// Signal-to-noise ratio d q / (p sigma^2) of the SNR design.
pub fn snr_value(d: usize, q: usize, p: usize, sigma: f64) -> f64 {
    (d * q) as f64 / (p as f64 * sigma * sigma)
}

/// Inverts the SNR formula: the sigma producing the requested ratio.
pub fn sigma_for_snr(d: usize, q: usize, p: usize, snr: f64) -> f64 {
    ((d * q) as f64 / (p as f64 * snr)).sqrt()
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn randn(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn laplace(rng: &mut ChaCha8Rng, scale: f64) -> f64 {
    let r: f64 = rng.random::<f64>();
    let r = r.max(f64::MIN_POSITIVE).min(1.0 - f64::EPSILON / 2.0);
    if r < 0.5 {
        scale * (2.0 * r).ln()
    } else {
        -scale * (2.0 * (1.0 - r)).ln()
    }
}

/// Draws X = V W Y^T-style data: v active on the first q coordinates, W
/// i.i.d. standard Gaussian, standard Gaussian latent scores, isotropic
/// Gaussian noise of sd sigma. Returns the uncentered data, the ground
/// truth and the effective (globally sparse) loading matrix V W.
pub fn gen_gsppca_data(spec: &ScenarioSpec) -> Result<(DMatrix<f64>, SupportVector, DMatrix<f64>)> {
    spec.validate()?;
    let (n, p, d, q) = (spec.n, spec.p, spec.d, spec.q);
    let mut rng_w = stream_rng(spec.seed, 0);
    let mut rng_y = stream_rng(spec.seed, 1);
    let mut rng_e = stream_rng(spec.seed, 2);
    let w = DMatrix::from_fn(p, d, |k, _| if k < q { randn(&mut rng_w) } else { 0.0 });
    let y = DMatrix::from_fn(n, d, |_, _| randn(&mut rng_y));
    let mut x = &y * w.transpose();
    for v in x.iter_mut() {
        *v += spec.sigma * randn(&mut rng_e);
    }
    let truth = SupportVector::from_indices(p, &(0..q).collect::<Vec<_>>())?;
    Ok((x, truth, w))
}

/// Block-covariance design: latent sample z ~ N(0, R) with R built from 4
/// equicorrelated blocks, PPCA maximum-likelihood loadings fitted on it,
/// globally sparsified, then fresh scores and unit-variance noise of the
/// requested family.
pub fn gen_block_data(spec: &ScenarioSpec) -> Result<(DMatrix<f64>, SupportVector, DMatrix<f64>)> {
    spec.validate()?;
    let (n, p, d, q) = (spec.n, spec.p, spec.d, spec.q);
    let block = p / 4;

    // R = diag(R_1..R_4), r_ii = block_diag, r_ij = rho
    let mut r = DMatrix::zeros(p, p);
    for b in 0..4 {
        for i in 0..block {
            for j in 0..block {
                r[(b * block + i, b * block + j)] =
                    if i == j { spec.block_diag } else { spec.rho };
            }
        }
    }
    let chol = Cholesky::new(r).ok_or_else(|| {
        Error::Argument(format!(
            "block covariance (diag {}, rho {}) is not positive definite",
            spec.block_diag, spec.rho
        ))
    })?;

    let mut rng_z = stream_rng(spec.seed, 0);
    let mut rng_y = stream_rng(spec.seed, 1);
    let mut rng_e = stream_rng(spec.seed, 2);

    let g = DMatrix::from_fn(n, p, |_, _| randn(&mut rng_z));
    let z = g * chol.l().transpose();
    let zc = DataMatrix::new(z)?;

    // PPCA ML loadings W = A (Lambda - sigma_hat^2 I)^{1/2}; trailing
    // components whose eigenvalue falls below the noise floor vanish
    let spectrum = covariance_spectrum(&zc);
    let m = n.min(p);
    let sigma2_hat = if d < m {
        spectrum.iter().skip(d).sum::<f64>() / (m - d) as f64
    } else {
        0.0
    };
    let base = pca(&zc, d, 0.0)?;
    let mut w_ml = DMatrix::zeros(p, d);
    for j in 0..d {
        let lambda = base.eigenvalues[j];
        if lambda > 0.0 {
            let scale = ((lambda - sigma2_hat).max(0.0) / lambda).sqrt();
            let col = base.loadings.column(j) * scale;
            w_ml.set_column(j, &col);
        }
    }
    // globally sparsify: zero the rows outside the support
    for k in q..p {
        for j in 0..d {
            w_ml[(k, j)] = 0.0;
        }
    }

    let y = DMatrix::from_fn(n, d, |_, _| randn(&mut rng_y));
    let mut x = &y * w_ml.transpose();
    match spec.noise_kind {
        NoiseKind::Gaussian => {
            for v in x.iter_mut() {
                *v += randn(&mut rng_e);
            }
        }
        NoiseKind::Laplace => {
            // scale 1/sqrt(2) gives unit variance
            let b = 1.0 / 2.0f64.sqrt();
            for v in x.iter_mut() {
                *v += laplace(&mut rng_e, b);
            }
        }
    }
    let truth = SupportVector::from_indices(p, &(0..q).collect::<Vec<_>>())?;
    Ok((x, truth, w_ml))
}

/// Dispatches on the scenario family.
pub fn generate(spec: &ScenarioSpec) -> Result<(DMatrix<f64>, SupportVector, DMatrix<f64>)> {
    match spec.scenario {
        Scenario::Intro | Scenario::Snr => gen_gsppca_data(spec),
        Scenario::Blocks => gen_block_data(spec),
    }
}

/// count draws of A b with A a q x d matrix of i.i.d. N(0, s^2) entries and
/// b ~ N(0, I_d), one draw per row. Monte-Carlo oracle for the
/// multivariate Bessel distribution.
pub fn sample_gaussian_matrix_vector(
    q: usize,
    d: usize,
    s: f64,
    count: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    if q == 0 || d == 0 || count == 0 || !(s > 0.0) {
        return Err(Error::Argument("need positive q, d, count and s".into()));
    }
    let mut rng_a = stream_rng(seed, 0);
    let mut rng_b = stream_rng(seed, 1);
    let mut out = DMatrix::zeros(count, q);
    let mut a = vec![0.0; q * d];
    let mut b = vec![0.0; d];
    for row in 0..count {
        for v in a.iter_mut() {
            *v = s * randn(&mut rng_a);
        }
        for v in b.iter_mut() {
            *v = randn(&mut rng_b);
        }
        for i in 0..q {
            let mut acc = 0.0;
            for j in 0..d {
                acc += a[i * d + j] * b[j];
            }
            out[(row, i)] = acc;
        }
    }
    Ok(out)
}
