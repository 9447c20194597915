//! Independent oracles shared by the integration suites: quadrature for
//! the Bessel function, elementary closed forms, dense-loop
//! transcriptions of the variational updates, and exact rational
//! hypergeometric enumeration. None of these reuse the library's
//! evaluation paths.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num::bigint::BigInt;
use num::rational::BigRational;
use num::traits::{One, ToPrimitive};
use num::BigUint;

/// Adaptive Simpson quadrature with error control.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 60)
}

fn ln_cosh(t: f64) -> f64 {
    let a = t.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// ln K_nu(x) through the integral representation
/// K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt, integrated in shifted
/// log scale so large orders cannot overflow.
pub fn log_bessel_k_quadrature(nu: f64, x: f64) -> f64 {
    let nu = nu.abs();
    let g = |t: f64| -x * t.cosh() + ln_cosh(nu * t);
    // peak of g: at 0 when nu^2 <= x, else where x sinh t = nu tanh(nu t)
    let t_peak = if nu * nu <= x {
        0.0
    } else {
        let gp = |t: f64| nu * (nu * t).tanh() - x * t.sinh();
        let mut lo = 1e-12;
        let mut hi = (nu / x).asinh() + 5.0;
        debug_assert!(gp(lo) > 0.0 && gp(hi) < 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if gp(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let g_max = g(t_peak);
    // find T with g(T) - g_max < -750
    let mut t_end = (t_peak + 1.0).max(1.0);
    while g(t_end) - g_max > -750.0 {
        t_end *= 1.5;
    }
    let integrand = |t: f64| (g(t) - g_max).exp();
    let value = if t_peak > 0.0 {
        adaptive_simpson(&integrand, 0.0, t_peak, 1e-14)
            + adaptive_simpson(&integrand, t_peak, t_end, 1e-14)
    } else {
        adaptive_simpson(&integrand, 0.0, t_end, 1e-14)
    };
    g_max + value.ln()
}

/// ln K_{m+1/2}(x) from the elementary finite sum, with log factorials
/// accumulated directly (independent of any gamma implementation).
pub fn log_bessel_k_half_integer(m: usize, x: f64) -> f64 {
    let ln_fact = |n: usize| -> f64 { (1..=n).map(|k| (k as f64).ln()).sum() };
    let base = 0.5 * (std::f64::consts::PI / (2.0 * x)).ln() - x;
    let ln_2x = (2.0 * x).ln();
    let terms: Vec<f64> = (0..=m)
        .map(|j| ln_fact(m + j) - ln_fact(j) - ln_fact(m - j) - j as f64 * ln_2x)
        .collect();
    let hi = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    base + hi + terms.iter().map(|t| (t - hi).exp()).sum::<f64>().ln()
}

/// Stable log-scale three-term recurrence ln K_{a+1} from ln K_{a-1},
/// ln K_a.
pub fn log_k_recurrence_step(ln_km1: f64, ln_k: f64, a: f64, x: f64) -> f64 {
    let lhs = (2.0 * a / x).ln() + ln_k;
    let (hi, lo) = if lhs >= ln_km1 { (lhs, ln_km1) } else { (ln_km1, lhs) };
    hi + (lo - hi).exp().ln_1p()
}

/// Plain-loop state mirror used by the transcription oracle.
#[derive(Clone)]
pub struct NaiveState {
    pub mu: Vec<Vec<f64>>,      // n x d
    pub sigma: Vec<Vec<f64>>,   // d x d
    pub m: Vec<Vec<f64>>,       // p x d
    pub s: Vec<Vec<Vec<f64>>>,  // p x d x d
}

fn inv_small(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = a.len();
    let m = DMatrix::from_fn(d, d, |i, j| a[i][j]);
    let inv = m.try_inverse().expect("naive inverse failed");
    (0..d).map(|i| (0..d).map(|j| inv[(i, j)]).collect()).collect()
}

/// Literal transcription of the posterior updates: Sigma first, then all
/// mu_i, then every S_k, then every m_k, each loop written out in full.
pub fn naive_e_step(
    x: &DMatrix<f64>,
    u: &[f64],
    alpha: f64,
    sigma_noise: f64,
    state: &NaiveState,
) -> NaiveState {
    let n = x.nrows();
    let p = x.ncols();
    let d = state.sigma.len();
    let s2 = sigma_noise * sigma_noise;

    // Sigma^-1 = I + (1/s2) M^T U^2 M + (1/s2) sum_k u_k^2 S_k
    let mut sigma_inv = vec![vec![0.0; d]; d];
    for r in 0..d {
        sigma_inv[r][r] = 1.0;
    }
    for r in 0..d {
        for c in 0..d {
            let mut acc = 0.0;
            for k in 0..p {
                acc += u[k] * u[k] * state.m[k][r] * state.m[k][c];
                acc += u[k] * u[k] * state.s[k][r][c];
            }
            sigma_inv[r][c] += acc / s2;
        }
    }
    let sigma = inv_small(&sigma_inv);

    // mu_i = (1/s2) Sigma M^T U x_i
    let mut mu = vec![vec![0.0; d]; n];
    for i in 0..n {
        let mut mtux = vec![0.0; d];
        for r in 0..d {
            for k in 0..p {
                mtux[r] += state.m[k][r] * u[k] * x[(i, k)];
            }
        }
        for r in 0..d {
            let mut acc = 0.0;
            for c in 0..d {
                acc += sigma[r][c] * mtux[c];
            }
            mu[i][r] = acc / s2;
        }
    }

    // S_k^-1 = alpha^2 I + (n u_k^2 / s2) Sigma + (u_k^2 / s2) Mcal^T Mcal
    let mut mtm = vec![vec![0.0; d]; d];
    for r in 0..d {
        for c in 0..d {
            for mu_i in mu.iter() {
                mtm[r][c] += mu_i[r] * mu_i[c];
            }
        }
    }
    let mut s_new = Vec::with_capacity(p);
    for k in 0..p {
        let mut s_inv = vec![vec![0.0; d]; d];
        for r in 0..d {
            for c in 0..d {
                s_inv[r][c] = u[k] * u[k] * (n as f64 * sigma[r][c] + mtm[r][c]) / s2;
            }
            s_inv[r][r] += alpha * alpha;
        }
        s_new.push(inv_small(&s_inv));
    }

    // m_k = (u_k / s2) S_k sum_i x_ik mu_i
    let mut m_new = vec![vec![0.0; d]; p];
    for k in 0..p {
        let mut rhs = vec![0.0; d];
        for (i, mu_i) in mu.iter().enumerate() {
            for r in 0..d {
                rhs[r] += x[(i, k)] * mu_i[r];
            }
        }
        for r in 0..d {
            let mut acc = 0.0;
            for c in 0..d {
                acc += s_new[k][r][c] * rhs[c];
            }
            m_new[k][r] = u[k] * acc / s2;
        }
    }

    NaiveState { mu, sigma, m: m_new, s: s_new }
}

/// Literal transcription of the negative free energy.
pub fn naive_free_energy(
    x: &DMatrix<f64>,
    u: &[f64],
    alpha: f64,
    sigma_noise: f64,
    st: &NaiveState,
) -> f64 {
    let n = x.nrows();
    let p = x.ncols();
    let d = st.sigma.len();
    let s2 = sigma_noise * sigma_noise;
    let mut out = -((n * p) as f64) * sigma_noise.ln() + (d * p) as f64 * alpha.ln();
    let mut tr_xtx = 0.0;
    for i in 0..n {
        for k in 0..p {
            tr_xtx += x[(i, k)] * x[(i, k)];
        }
    }
    out -= tr_xtx / (2.0 * s2);
    for i in 0..n {
        for k in 0..p {
            let mut quad = 0.0;
            for r in 0..d {
                for c in 0..d {
                    let second_y = st.sigma[r][c] + st.mu[i][r] * st.mu[i][c];
                    let second_w = st.s[k][r][c] + st.m[k][r] * st.m[k][c];
                    quad += second_y * second_w;
                }
            }
            out -= u[k] * u[k] * quad / (2.0 * s2);
        }
    }
    for i in 0..n {
        for k in 0..p {
            let mut dot = 0.0;
            for r in 0..d {
                dot += st.m[k][r] * st.mu[i][r];
            }
            out += x[(i, k)] * u[k] * dot / s2;
        }
    }
    for k in 0..p {
        let mut tr = 0.0;
        for r in 0..d {
            tr += st.s[k][r][r] + st.m[k][r] * st.m[k][r];
        }
        out -= 0.5 * alpha * alpha * tr;
    }
    for i in 0..n {
        let mut tr = 0.0;
        for r in 0..d {
            tr += st.sigma[r][r] + st.mu[i][r] * st.mu[i][r];
        }
        out -= 0.5 * tr;
    }
    let det = |a: &Vec<Vec<f64>>| DMatrix::from_fn(a.len(), a.len(), |i, j| a[i][j]).determinant();
    out += 0.5 * n as f64 * det(&st.sigma).ln();
    for k in 0..p {
        out += 0.5 * det(&st.s[k]).ln();
    }
    out
}

/// Transcription of the alpha update:
/// alpha* = ((1/dp) sum_k Tr(S_k + m_k m_k^T))^(-1/2).
pub fn naive_m_alpha(st: &NaiveState) -> f64 {
    let p = st.m.len();
    let d = st.sigma.len();
    let mut acc = 0.0;
    for k in 0..p {
        for r in 0..d {
            acc += st.s[k][r][r] + st.m[k][r] * st.m[k][r];
        }
    }
    (acc / (d * p) as f64).powf(-0.5)
}

/// Transcription of the u update as the clipped vertex of the
/// free-energy quadratic (k-indexed second moment):
/// u_k = clip(B_k / A_k, 0, 1) with
/// A_k = sum_i Tr[(Sigma + mu_i mu_i^T)(S_k + m_k m_k^T)],
/// B_k = sum_i x_ik m_k^T mu_i.
pub fn naive_m_u(x: &DMatrix<f64>, st: &NaiveState) -> Vec<f64> {
    let n = x.nrows();
    let p = x.ncols();
    let d = st.sigma.len();
    let mut u = vec![0.0; p];
    for k in 0..p {
        let mut a = 0.0;
        for i in 0..n {
            for r in 0..d {
                for c in 0..d {
                    a += (st.sigma[r][c] + st.mu[i][r] * st.mu[i][c])
                        * (st.s[k][r][c] + st.m[k][r] * st.m[k][c]);
                }
            }
        }
        let mut b = 0.0;
        for (i, mu_i) in st.mu.iter().enumerate() {
            for r in 0..d {
                b += x[(i, k)] * st.m[k][r] * mu_i[r];
            }
        }
        u[k] = (b / a).clamp(0.0, 1.0);
    }
    u
}

pub fn state_from_lib(state: &gsppca::vem::VariationalState) -> NaiveState {
    let n = state.score_means.nrows();
    let p = state.loading_means.nrows();
    let d = state.score_cov.nrows();
    NaiveState {
        mu: (0..n)
            .map(|i| (0..d).map(|r| state.score_means[(i, r)]).collect())
            .collect(),
        sigma: (0..d)
            .map(|r| (0..d).map(|c| state.score_cov[(r, c)]).collect())
            .collect(),
        m: (0..p)
            .map(|k| (0..d).map(|r| state.loading_means[(k, r)]).collect())
            .collect(),
        s: (0..p)
            .map(|k| {
                (0..d)
                    .map(|r| (0..d).map(|c| state.loading_covs[k][(r, c)]).collect())
                    .collect()
            })
            .collect(),
    }
}

fn binomial_big(n: u64, k: u64) -> BigUint {
    let k = k.min(n - k);
    let mut num = BigUint::one();
    let mut den = BigUint::one();
    for i in 0..k {
        num *= BigUint::from(n - i);
        den *= BigUint::from(i + 1);
    }
    num / den
}

/// Exact upper-tail hypergeometric probability as a big rational, rounded
/// to f64 only at the end.
pub fn hypergeom_sf_exact(overlap: u64, pop: u64, pathway: u64, selected: u64) -> f64 {
    let lower = (pathway + selected).saturating_sub(pop);
    if overlap <= lower {
        return 1.0;
    }
    let upper = pathway.min(selected);
    let mut num = BigUint::from(0u32);
    for j in overlap..=upper {
        num += binomial_big(pathway, j) * binomial_big(pop - pathway, selected - j);
    }
    let den = binomial_big(pop, selected);
    let ratio = BigRational::new(BigInt::from(num), BigInt::from(den));
    ratio.to_f64().expect("rational fits in f64")
}

/// Independent step-up adjustment straight from the definition:
/// adj_(i) = min over j >= i of min(1, m p_(j) / j), in input order.
pub fn bh_adjust_definition(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap());
    let mut adjusted = vec![0.0; m];
    for (rank, &idx) in order.iter().enumerate() {
        let mut best = 1.0f64;
        for (later_rank, &later_idx) in order.iter().enumerate().skip(rank) {
            best = best.min((m as f64 * p[later_idx] / (later_rank + 1) as f64).min(1.0));
        }
        adjusted[idx] = best;
    }
    adjusted
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = values.len();
    if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}

/// Deterministic per-job seeds for replicated benchmarks.
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut z = base
        ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ b.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn dvector_from(u: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(u)
}
