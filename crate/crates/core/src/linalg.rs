//! Dense linear-algebra support: centering, exact and randomized truncated
//! SVD, and probabilistic PCA used for initialization, noise estimation and
//! renormalization.
//!
//! Eigen-problems are solved on the smaller Gram matrix (X X^T when n < p),
//! since the target regime is p >> n.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// An n x p observation matrix with centering metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    centered: bool,
    column_means: DVector<f64>,
}

impl DataMatrix {
    /// Wraps a raw matrix without centering it. Requires n >= 2, p >= 1 and
    /// finite entries.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        validate_shape(&values)?;
        let p = values.ncols();
        Ok(DataMatrix {
            values,
            centered: false,
            column_means: DVector::zeros(p),
        })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    /// Column means recorded when the matrix was centered (zeros otherwise).
    pub fn column_means(&self) -> &DVector<f64> {
        &self.column_means
    }

    /// Per-variable sample variances (1/n convention, consistent with the
    /// spectrum of X^T X / n on centered data).
    pub fn column_variances(&self) -> Vec<f64> {
        let n = self.n() as f64;
        (0..self.p())
            .map(|j| {
                let col = self.values.column(j);
                let mean = col.sum() / n;
                col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
            })
            .collect()
    }

    /// Tr(X^T X) = sum of squared entries.
    pub fn trace_gram(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// Squared Euclidean norm of every row.
    pub fn row_squared_norms(&self) -> Vec<f64> {
        (0..self.n())
            .map(|i| self.values.row(i).iter().map(|v| v * v).sum())
            .collect()
    }
}

fn validate_shape(values: &DMatrix<f64>) -> Result<()> {
    if values.nrows() < 2 {
        return Err(Error::Data(format!(
            "need at least 2 observations, got {}",
            values.nrows()
        )));
    }
    if values.ncols() == 0 {
        return Err(Error::Data("need at least 1 variable".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("matrix contains non-finite entries".into()));
    }
    Ok(())
}

/// Wraps data the caller asserts is already column-centered, verifying
/// that each column mean vanishes within 1e-10 (1 + column sd).
pub fn assume_centered(values: DMatrix<f64>) -> Result<DataMatrix> {
    validate_shape(&values)?;
    let n = values.nrows() as f64;
    for j in 0..values.ncols() {
        let col = values.column(j);
        let mean = col.sum() / n;
        let sd = (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        if mean.abs() > 1e-10 * (sd + 1.0) {
            return Err(Error::Data(format!(
                "column {j} is not centered: mean {mean}"
            )));
        }
    }
    let p = values.ncols();
    Ok(DataMatrix {
        values,
        centered: true,
        column_means: DVector::zeros(p),
    })
}

/// Subtracts column means and records them; no scaling is applied.
pub fn center(values: DMatrix<f64>) -> Result<DataMatrix> {
    validate_shape(&values)?;
    let n = values.nrows() as f64;
    let mut values = values;
    let mut means = DVector::zeros(values.ncols());
    for j in 0..values.ncols() {
        let mean = values.column(j).sum() / n;
        means[j] = mean;
        for i in 0..values.nrows() {
            values[(i, j)] -= mean;
        }
    }
    Ok(DataMatrix {
        values,
        centered: true,
        column_means: means,
    })
}

/// How to compute a truncated SVD.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvdMethod {
    /// Full decomposition, truncated.
    Exact,
    /// Range finder with oversampling 10 and 2 power iterations; the seed
    /// flows from the global run seed.
    Randomized { seed: u64 },
}

/// Top-k singular triplets, singular values non-increasing.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub left_vectors: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub right_vectors: DMatrix<f64>,
}

pub fn truncated_svd(x: &DataMatrix, k: usize, method: SvdMethod) -> Result<SvdResult> {
    let (n, p) = (x.n(), x.p());
    if k == 0 || k > n.min(p) {
        return Err(Error::Argument(format!(
            "k = {k} out of range for a {n} x {p} matrix"
        )));
    }
    match method {
        SvdMethod::Exact => exact_svd(x.values(), k),
        SvdMethod::Randomized { seed } => randomized_svd(x.values(), k, seed),
    }
}

fn exact_svd(m: &DMatrix<f64>, k: usize) -> Result<SvdResult> {
    let svd = m.clone().svd(true, true);
    let u = svd
        .u
        .ok_or_else(|| Error::NumericalInstability("SVD failed to produce U".into()))?;
    let vt = svd
        .v_t
        .ok_or_else(|| Error::NumericalInstability("SVD failed to produce V^T".into()))?;
    let s = svd.singular_values;
    // sort defensively (nalgebra orders, but the contract matters here)
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap());
    let mut left = DMatrix::zeros(m.nrows(), k);
    let mut right = DMatrix::zeros(m.ncols(), k);
    let mut vals = DVector::zeros(k);
    for (out, &idx) in order.iter().take(k).enumerate() {
        left.set_column(out, &u.column(idx));
        right.set_column(out, &vt.row(idx).transpose());
        vals[out] = s[idx];
    }
    Ok(SvdResult {
        left_vectors: left,
        singular_values: vals,
        right_vectors: right,
    })
}

fn randomized_svd(m: &DMatrix<f64>, k: usize, seed: u64) -> Result<SvdResult> {
    const OVERSAMPLING: usize = 10;
    const POWER_ITERATIONS: usize = 2;
    let (n, p) = (m.nrows(), m.ncols());
    let l = (k + OVERSAMPLING).min(n.min(p));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = DMatrix::from_fn(p, l, |_, _| StandardNormal.sample(&mut rng));
    let mut q = thin_q(m * &omega);
    for _ in 0..POWER_ITERATIONS {
        let z = thin_q(m.transpose() * &q);
        q = thin_q(m * &z);
    }
    let b = q.transpose() * m; // l x p
    let inner = exact_svd(&b, k)?;
    Ok(SvdResult {
        left_vectors: &q * inner.left_vectors,
        singular_values: inner.singular_values,
        right_vectors: inner.right_vectors,
    })
}

fn thin_q(m: DMatrix<f64>) -> DMatrix<f64> {
    m.qr().q()
}

/// Classical / probabilistic PCA output.
#[derive(Debug, Clone)]
pub struct PcaResult {
    /// p x d matrix A (Lambda_d - sigma^2 I)^{1/2}.
    pub loadings: DMatrix<f64>,
    /// n x d projections of the rows of X onto A.
    pub scores: DMatrix<f64>,
    /// Full spectrum of X^T X / n (length min(n, p), non-increasing),
    /// kept for noise estimation.
    pub eigenvalues: Vec<f64>,
}

/// PCA through the spectrum of X^T X / n. With sigma > 0 the loadings are
/// the PPCA maximum-likelihood ones, A (Lambda - sigma^2 I)^{1/2} (rotation
/// fixed to the identity).
pub fn pca(x: &DataMatrix, d: usize, sigma: f64) -> Result<PcaResult> {
    let (n, p) = (x.n(), x.p());
    let m = n.min(p);
    if d == 0 || d > m {
        return Err(Error::Argument(format!(
            "d = {d} out of range for a {n} x {p} matrix"
        )));
    }
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::Argument(format!(
            "sigma must be finite and >= 0, got {sigma}"
        )));
    }
    let (eigenvalues, right) = gram_spectrum(x.values(), d)?;
    let sigma2 = sigma * sigma;
    if sigma > 0.0 && eigenvalues[d - 1] <= sigma2 {
        return Err(Error::DegenerateNoise(format!(
            "sigma^2 = {} is not below the d-th eigenvalue {}",
            sigma2,
            eigenvalues[d - 1]
        )));
    }
    let mut loadings = DMatrix::zeros(p, d);
    for j in 0..d {
        let scale = (eigenvalues[j] - sigma2).max(0.0).sqrt();
        let col = right.column(j) * scale;
        loadings.set_column(j, &col);
    }
    let scores = x.values() * &right;
    Ok(PcaResult {
        loadings,
        scores,
        eigenvalues,
    })
}

/// Spectrum of X^T X / n (length min(n, p), non-increasing, clamped at 0),
/// computed on the smaller Gram side.
pub fn covariance_spectrum(x: &DataMatrix) -> Vec<f64> {
    let xv = x.values();
    let nf = x.n() as f64;
    let gram = if x.p() <= x.n() {
        xv.transpose() * xv / nf
    } else {
        xv * xv.transpose() / nf
    };
    let eig = gram.symmetric_eigen();
    let mut values: Vec<f64> = eig.eigenvalues.iter().map(|&v| v.max(0.0)).collect();
    values.sort_by(|a, b| b.partial_cmp(a).unwrap());
    values
}

/// Full spectrum of X^T X / n plus the top-d right eigenvectors, computed
/// on the smaller Gram side.
fn gram_spectrum(xv: &DMatrix<f64>, d: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let (n, p) = (xv.nrows(), xv.ncols());
    let nf = n as f64;
    if p <= n {
        let gram = xv.transpose() * xv / nf;
        let eig = gram.symmetric_eigen();
        let order = descending(&eig.eigenvalues);
        let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
        let mut vecs = DMatrix::zeros(p, d);
        for (out, &idx) in order.iter().take(d).enumerate() {
            vecs.set_column(out, &eig.eigenvectors.column(idx));
        }
        Ok((eigenvalues, vecs))
    } else {
        let gram = xv * xv.transpose() / nf;
        let eig = gram.symmetric_eigen();
        let order = descending(&eig.eigenvalues);
        let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
        let mut vecs = DMatrix::zeros(p, d);
        for (out, &idx) in order.iter().take(d).enumerate() {
            let lambda = eigenvalues[out];
            if lambda > 0.0 {
                // right eigenvector a = X^T u / sqrt(n lambda)
                let a = xv.transpose() * eig.eigenvectors.column(idx) / (nf * lambda).sqrt();
                vecs.set_column(out, &a);
            }
            // lambda == 0: the loading scale vanishes anyway; leave zeros.
        }
        Ok((eigenvalues, vecs))
    }
}

fn descending(values: &DVector<f64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap());
    order
}
