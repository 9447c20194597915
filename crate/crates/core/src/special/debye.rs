//! Debye polynomials u_k(t) for the uniform asymptotic expansion of K_nu.
//!
//! Generated once from the recurrence
//!   u_{k+1}(t) = t^2 (1 - t^2) u_k'(t) / 2 + (1/8) \int_0^t (1 - 5 s^2) u_k(s) ds
//! in exact i128 rational arithmetic. u_k has only the powers
//! t^k, t^{k+2}, ..., t^{3k}, so it is stored factored as
//! u_k(t) = t^k * q_k(t^2) with q_k given by its coefficient vector.

use std::sync::OnceLock;

pub(crate) const DEBYE_ORDER: usize = 8;

#[derive(Clone, Copy)]
struct Frac {
    num: i128,
    den: i128,
}

impl Frac {
    const ZERO: Frac = Frac { num: 0, den: 1 };

    fn new(num: i128, den: i128) -> Frac {
        debug_assert!(den != 0);
        let sign = if den < 0 { -1 } else { 1 };
        let g = gcd(num.unsigned_abs(), den.unsigned_abs()).max(1) as i128;
        Frac {
            num: sign * num / g,
            den: sign * den / g,
        }
    }

    fn add(self, other: Frac) -> Frac {
        Frac::new(self.num * other.den + other.num * self.den, self.den * other.den)
    }

    fn mul_int(self, k: i128) -> Frac {
        Frac::new(self.num * k, self.den)
    }

    fn div_int(self, k: i128) -> Frac {
        Frac::new(self.num, self.den * k)
    }

    fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Dense coefficient vector indexed by power of t.
type Poly = Vec<Frac>;

fn derivative(p: &Poly) -> Poly {
    let mut out = vec![Frac::ZERO; p.len().saturating_sub(1)];
    for (j, &c) in p.iter().enumerate().skip(1) {
        out[j - 1] = c.mul_int(j as i128);
    }
    out
}

fn next_debye(p: &Poly) -> Poly {
    let dp = derivative(p);
    let deg = p.len() - 1;
    let mut out = vec![Frac::ZERO; deg + 4];
    // t^2 (1 - t^2) p'(t) / 2
    for (j, &c) in dp.iter().enumerate() {
        out[j + 2] = out[j + 2].add(c.div_int(2));
        out[j + 4] = out[j + 4].add(c.div_int(-2));
    }
    // (1/8) int_0^t (1 - 5 s^2) p(s) ds
    for (j, &c) in p.iter().enumerate() {
        let j = j as i128;
        out[(j + 1) as usize] = out[(j + 1) as usize].add(c.div_int(8 * (j + 1)));
        out[(j + 3) as usize] = out[(j + 3) as usize].add(c.mul_int(-5).div_int(8 * (j + 3)));
    }
    while out.len() > 1 && out.last().map(|c| c.num == 0).unwrap_or(false) {
        out.pop();
    }
    out
}

/// Coefficients of q_k(s): u_k(t) = t^k * sum_j QK[k][j] * (t^2)^j.
pub(crate) fn factored_coefficients() -> &'static Vec<Vec<f64>> {
    static TABLE: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut polys: Vec<Poly> = vec![vec![Frac::new(1, 1)]];
        for _ in 0..DEBYE_ORDER {
            let next = next_debye(polys.last().unwrap());
            polys.push(next);
        }
        polys
            .iter()
            .enumerate()
            .map(|(k, p)| {
                // powers k, k+2, ..., 3k only
                (0..=k)
                    .map(|j| {
                        p.get(k + 2 * j).copied().unwrap_or(Frac::ZERO).to_f64()
                    })
                    .collect()
            })
            .collect()
    })
}

/// u_k(t) evaluated from the factored table (test hook).
#[cfg(test)]
fn eval_u(k: usize, t: f64) -> f64 {
    let q = &factored_coefficients()[k];
    let s = t * t;
    let mut acc = 0.0;
    for &c in q.iter().rev() {
        acc = acc * s + c;
    }
    acc * t.powi(k as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_orders_match_printed_forms() {
        // u_1 = (3t - 5t^3)/24, u_2 = (81t^2 - 462t^4 + 385t^6)/1152
        let t: f64 = 0.37;
        let u1 = (3.0 * t - 5.0 * t.powi(3)) / 24.0;
        let u2 = (81.0 * t * t - 462.0 * t.powi(4) + 385.0 * t.powi(6)) / 1152.0;
        assert!((eval_u(1, t) - u1).abs() < 1e-16);
        assert!((eval_u(2, t) - u2).abs() < 1e-16);
    }

    #[test]
    fn matches_frozen_exact_evaluations() {
        // Exact rational evaluations of the recurrence, frozen from a
        // one-off symbolic run.
        let cases = [
            (3, 0.3, 0.0001955268017578125),
            (4, 0.7, 0.0035337128674292475696),
            (5, 1.0, -0.00078403922172006662747),
            (6, 0.7, 0.012529036118620682993),
            (7, 0.3, -0.00031761421957821844963),
            (8, 1.0, -0.000051717909082605921934),
            (8, 0.7, -0.09594660379753765993),
        ];
        for &(k, t, expected) in &cases {
            let got = eval_u(k, t);
            // f64 coefficient rounding cancels hard near t = 1 where the
            // exact value is tiny; 1e-10 absolute still catches any wrong
            // coefficient, which would err at >= 1e-3.
            assert!(
                (got - expected).abs() <= 1e-10,
                "u_{k}({t}) = {got}, expected {expected}"
            );
        }
    }
}
