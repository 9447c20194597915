//! Log-scale evaluation of the modified Bessel function of the second kind
//! K_nu and of the ratio K_{nu-1}/K_nu.
//!
//! Regimes (after reduction to nu >= 0 via K_{-nu} = K_nu):
//!   * half-integer orders: finite closed form, log-sum-exp;
//!   * nu >= 50 or x >= 30: uniform asymptotic (Debye) expansion, written in
//!     w = sqrt(nu^2 + x^2) so it degrades gracefully to the large-argument
//!     expansion as nu -> 0;
//!   * x < max(2, sqrt(nu+1)): Temme's small-x series at fractional order,
//!     then forward recurrence in log scale;
//!   * otherwise: Steed/Thompson-Barnett continued fraction (CF2) seeds,
//!     then the same forward recurrence.
//!
//! Everything is kept in log scale; no K value is ever materialized outside
//! it, so orders and arguments up to 1e5 cannot overflow.

use super::debye::factored_coefficients;
use super::gamma::log_gamma_unchecked;
use crate::error::{Error, Result};

const DEBYE_NU_MIN: f64 = 50.0;
const DEBYE_X_MIN: f64 = 30.0;
// Closed form caps out where the Debye expansion is already ~1e-15 accurate.
const HALF_INT_NU_MAX: f64 = 60.5;

/// ln K_nu(x) for any finite real order and x > 0.
pub fn log_bessel_k(nu: f64, x: f64) -> Result<f64> {
    validate(nu, x)?;
    Ok(log_k(nu.abs(), x))
}

/// ln( K_{nu-1}(x) / K_nu(x) ) in a single stable pass.
pub fn log_bessel_k_ratio(nu: f64, x: f64) -> Result<f64> {
    validate(nu, x)?;
    Ok(log_k_ratio(nu, x))
}

fn validate(nu: f64, x: f64) -> Result<()> {
    if !nu.is_finite() {
        return Err(Error::Domain(format!("Bessel order must be finite, got {nu}")));
    }
    if !x.is_finite() || x <= 0.0 {
        return Err(Error::Domain(format!(
            "Bessel argument must be finite and positive, got {x}"
        )));
    }
    Ok(())
}

fn log_k(nu: f64, x: f64) -> f64 {
    debug_assert!(nu >= 0.0);
    if nu <= HALF_INT_NU_MAX {
        if let Some(m) = half_integer_index(nu) {
            return log_k_half_integer(m, x);
        }
    }
    if nu >= DEBYE_NU_MIN || x >= DEBYE_X_MIN {
        return log_k_debye(nu, x);
    }
    let seed = if x < 2.0_f64.max((nu + 1.0).sqrt()) {
        SeedMethod::Temme
    } else {
        SeedMethod::Cf2
    };
    log_k_seeded(nu, x, seed)
}

/// nu = m + 1/2 exactly, for integer m >= 0.
fn half_integer_index(nu: f64) -> Option<usize> {
    let two = 2.0 * nu;
    if two == two.round() && (two as i64).rem_euclid(2) == 1 {
        Some(((two as i64 - 1) / 2) as usize)
    } else {
        None
    }
}

/// K_{m+1/2}(x) = sqrt(pi/(2x)) e^{-x} sum_{j=0}^m (m+j)! / (j! (m-j)! (2x)^j).
fn log_k_half_integer(m: usize, x: f64) -> f64 {
    let base = 0.5 * (std::f64::consts::PI / (2.0 * x)).ln() - x;
    if m == 0 {
        return base;
    }
    let ln_2x = (2.0 * x).ln();
    let mut terms = Vec::with_capacity(m + 1);
    for j in 0..=m {
        let t = log_gamma_unchecked((m + j) as f64 + 1.0)
            - log_gamma_unchecked(j as f64 + 1.0)
            - log_gamma_unchecked((m - j) as f64 + 1.0)
            - j as f64 * ln_2x;
        terms.push(t);
    }
    base + log_sum_exp(&terms)
}

/// Uniform asymptotic expansion, parameterized by w = sqrt(nu^2 + x^2):
///   ln K_nu(x) ~ 0.5 ln(pi/(2w)) - [w - nu asinh(nu/x)]
///                + ln sum_k (-1)^k q_k(t^2) / w^k,   t = nu/w.
fn log_k_debye(nu: f64, x: f64) -> f64 {
    let w = nu.hypot(x);
    let t = nu / w;
    let t2 = t * t;
    let phi = w - nu * (nu / x).asinh();
    let table = factored_coefficients();
    let mut series = 0.0;
    let mut sign = 1.0;
    let mut wk = 1.0;
    for q in table.iter() {
        let mut qv = 0.0;
        for &c in q.iter().rev() {
            qv = qv * t2 + c;
        }
        series += sign * qv / wk;
        sign = -sign;
        wk *= w;
    }
    0.5 * (std::f64::consts::PI / (2.0 * w)).ln() - phi + series.ln()
}

enum SeedMethod {
    Temme,
    Cf2,
}

/// Seeds at fractional order mu in [-1/2, 1/2), forward recurrence in logs.
fn log_k_seeded(nu: f64, x: f64, method: SeedMethod) -> f64 {
    let steps = (nu + 0.5).floor() as usize;
    let mu = nu - steps as f64;
    let (k_mu, k_mu1) = match method {
        SeedMethod::Temme => temme_k_scaled(mu, x),
        SeedMethod::Cf2 => cf2_k_scaled(mu, x),
    };
    let mut ln_prev = k_mu.ln() - x;
    if steps == 0 {
        return ln_prev;
    }
    let mut ln_cur = k_mu1.ln() - x;
    // K_{a+1} = (2a/x) K_a + K_{a-1}
    for i in 1..steps {
        let a = mu + i as f64;
        let ln_next = log_add_exp((2.0 * a / x).ln() + ln_cur, ln_prev);
        ln_prev = ln_cur;
        ln_cur = ln_next;
    }
    ln_cur
}

/// e^x K_mu(x) and e^x K_{mu+1}(x) by Temme's series; |mu| <= 1/2, x <= ~7.2.
fn temme_k_scaled(mu: f64, x: f64) -> (f64, f64) {
    const MAX_ITER: usize = 1000;
    let eps = f64::EPSILON;

    let half_x = 0.5 * x;
    let ln_half_x = half_x.ln();
    let half_x_mu = (mu * ln_half_x).exp();
    let pi_mu = std::f64::consts::PI * mu;
    let sigma = -mu * ln_half_x;
    let sinrat = if pi_mu.abs() < eps { 1.0 } else { pi_mu / pi_mu.sin() };
    let sinhrat = if sigma.abs() < eps { 1.0 } else { sigma.sinh() / sigma };

    let (gamma_1pmu, gamma_1mmu, g1, g2) = temme_gamma(mu);

    let mut fk = sinrat * (sigma.cosh() * g1 - sinhrat * ln_half_x * g2);
    let mut pk = 0.5 / half_x_mu * gamma_1pmu;
    let mut qk = 0.5 * half_x_mu * gamma_1mmu;
    let mut hk = pk;
    let mut ck = 1.0;
    let mut sum0 = fk;
    let mut sum1 = hk;
    for k in 1..=MAX_ITER {
        let kf = k as f64;
        fk = (kf * fk + pk + qk) / (kf * kf - mu * mu);
        ck *= half_x * half_x / kf;
        pk /= kf - mu;
        qk /= kf + mu;
        hk = -kf * fk + pk;
        let del0 = ck * fk;
        let del1 = ck * hk;
        sum0 += del0;
        sum1 += del1;
        if del0.abs() < 0.5 * sum0.abs() * eps && del1.abs() < 0.5 * sum1.abs() * eps {
            break;
        }
    }
    let ex = x.exp();
    (sum0 * ex, sum1 * 2.0 / x * ex)
}

/// Temme's gamma combinations via Chebyshev fits on 4|mu| - 1 in [-1, 1]:
/// returns (Gamma(1+mu), Gamma(1-mu), g1, g2) with
/// g1 = [1/Gamma(1-mu) - 1/Gamma(1+mu)]/(2 mu), g2 = [1/Gamma(1-mu) + 1/Gamma(1+mu)]/2.
fn temme_gamma(mu: f64) -> (f64, f64, f64, f64) {
    const G1_DAT: [f64; 14] = [
        -1.14516408366268311786898152867,
        0.00636085311347084238122955495,
        0.00186245193007206848934643657,
        0.000152833085873453507081227824,
        0.000017017464011802038795324732,
        -6.4597502923347254354668326451e-07,
        -5.1819848432519380894104312968e-08,
        4.5189092894858183051123180797e-10,
        3.2433227371020873043666259180e-11,
        6.8309434024947522875432400828e-13,
        2.8353502755172101513119628130e-14,
        -7.9883905769323592875638087541e-16,
        -3.3726677300771949833341213457e-17,
        -3.6586334809210520744054437104e-20,
    ];
    const G2_DAT: [f64; 15] = [
        1.882645524949671835019616975350,
        -0.077490658396167518329547945212,
        -0.018256714847324929419579340950,
        0.0006338030209074895795923971731,
        0.0000762290543508729021194461175,
        -9.5501647561720443519853993526e-07,
        -8.8927268107886351912431512955e-08,
        -1.9521334772319613740511880132e-09,
        -9.4003052735885162111769579771e-11,
        4.6875133849532393179290879101e-12,
        2.2658535746925759582447545145e-13,
        -1.1725509698488015111878735251e-15,
        -7.0441338200245222530843155877e-17,
        -2.4377878310107693650659740228e-18,
        -7.5225243218253901727164675011e-20,
    ];
    let y = 4.0 * mu.abs() - 1.0;
    let g1 = cheb_eval(&G1_DAT, y);
    let g2 = cheb_eval(&G2_DAT, y);
    let gamma_1mmu = 1.0 / (g2 + mu * g1);
    let gamma_1pmu = 1.0 / (g2 - mu * g1);
    (gamma_1pmu, gamma_1mmu, g1, g2)
}

fn cheb_eval(coef: &[f64], y: f64) -> f64 {
    let y2 = 2.0 * y;
    let mut d = 0.0;
    let mut dd = 0.0;
    for &c in coef.iter().skip(1).rev() {
        let tmp = d;
        d = y2 * d - dd + c;
        dd = tmp;
    }
    y * d - dd + 0.5 * coef[0]
}

/// e^x K_mu(x) and e^x K_{mu+1}(x) by the Steed/Thompson-Barnett CF2;
/// |mu| <= 1/2, x >= 2.
fn cf2_k_scaled(mu: f64, x: f64) -> (f64, f64) {
    const MAX_ITER: usize = 10_000;
    let eps = f64::EPSILON;

    let a1 = 0.25 - mu * mu;
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut delh = d;
    let mut h = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 2..=MAX_ITER {
        let fi = i as f64;
        a -= 2.0 * (fi - 1.0);
        c = -a * c / fi;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < eps {
            break;
        }
    }
    h *= a1;
    let k_mu = (std::f64::consts::PI / (2.0 * x)).sqrt() / s;
    let k_mu1 = k_mu * (mu + x + 0.5 - h) / x;
    (k_mu, k_mu1)
}

fn log_k_ratio(nu: f64, x: f64) -> f64 {
    if nu == 0.5 {
        // K_{-1/2} = K_{1/2} exactly.
        return 0.0;
    }
    let a = (nu - 1.0).abs();
    let b = nu.abs();
    if a.max(b) >= DEBYE_NU_MIN || x >= DEBYE_X_MIN {
        return paired_debye_ratio(a, b, x);
    }
    if nu >= 1.0 {
        -log_forward_ratio(nu, x)
    } else if nu > 0.5 {
        // K_{nu-1}/K_nu = K_{1-nu}/K_{-nu}, i.e. r(nu) = 1/r(1-nu).
        -log_k_ratio(1.0 - nu, x)
    } else if nu >= 0.0 {
        // r = K_{1-nu}/K_nu; one recurrence step applied to the seed ratio:
        // K_{1-nu} = K_{nu+1} - (2 nu / x) K_nu.
        let rho = seed_ratio_up(nu, x);
        (rho - 2.0 * nu / x).ln()
    } else {
        // nu < 0: K_{nu-1}/K_nu = K_{|nu|+1}/K_{|nu|}.
        log_forward_ratio(-nu + 1.0, x)
    }
}

/// ln( K_target(x) / K_{target-1}(x) ) for target >= 1 by the ratio
/// recurrence R_{a+1} = 2a/x + 1/R_a from a fractional-order seed.
/// Forward ratio recurrence contracts relative errors, so the seed
/// accuracy carries through.
fn log_forward_ratio(target: f64, x: f64) -> f64 {
    let steps = (target + 0.5).floor() as usize;
    let mu = target - steps as f64;
    debug_assert!(steps >= 1);
    let mut ln_r = seed_ratio_up(mu, x).ln();
    for i in 1..steps {
        let a = mu + i as f64;
        ln_r = log_add_exp((2.0 * a).ln() - x.ln(), -ln_r);
    }
    ln_r
}

/// K_{mu+1}(x)/K_mu(x) for |mu| <= 1/2 from a single seed evaluation.
fn seed_ratio_up(mu: f64, x: f64) -> f64 {
    let (k_mu, k_mu1) = if x < 2.0 {
        temme_k_scaled(mu, x)
    } else {
        cf2_k_scaled(mu, x)
    };
    k_mu1 / k_mu
}

/// ln K_a(x) - ln K_b(x) with both expansions paired so the shared
/// exponential bulk cancels analytically instead of in floating point.
fn paired_debye_ratio(a: f64, b: f64, x: f64) -> f64 {
    let wa = a.hypot(x);
    let wb = b.hypot(x);
    // 0.5 ln(wb/wa), stable for wa ~ wb
    let half_log_w = 0.5 * ((wb - wa) / wa).ln_1p();
    // phi(s) = w_s - s asinh(s/x); phi(a) - phi(b) without forming w_a - w_b
    let dw = (a * a - b * b) / (wa + wb);
    let dphi = dw - (a * (a / x).asinh() - b * (b / x).asinh());
    let ln_sa = debye_series_ln(a, x);
    let ln_sb = debye_series_ln(b, x);
    half_log_w - dphi + (ln_sa - ln_sb)
}

fn debye_series_ln(nu: f64, x: f64) -> f64 {
    let w = nu.hypot(x);
    let t2 = (nu / w) * (nu / w);
    let table = factored_coefficients();
    let mut series = 0.0;
    let mut sign = 1.0;
    let mut wk = 1.0;
    for q in table.iter() {
        let mut qv = 0.0;
        for &c in q.iter().rev() {
            qv = qv * t2 + c;
        }
        series += sign * qv / wk;
        sign = -sign;
        wk *= w;
    }
    series.ln()
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + values.iter().map(|v| (v - hi).exp()).sum::<f64>().ln()
}
