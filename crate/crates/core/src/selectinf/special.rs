//! Log-space tail probabilities for the standard normal and chi laws.

use libm::erfc;
use libm::lgamma as ln_gamma;
use std::f64::consts::{LN_2, SQRT_2};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `ln(exp(a) + exp(b))`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(sum exp(x_i))`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `ln(1 - exp(a))` for `a <= 0`.
pub fn log1m_exp(a: f64) -> f64 {
    if a > -LN_2 {
        (-a.exp_m1()).ln()
    } else {
        (-a.exp()).ln_1p()
    }
}

pub fn normal_log_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// `ln P(N(0,1) > x)`.
pub fn normal_log_sf(x: f64) -> f64 {
    if x == f64::INFINITY {
        return f64::NEG_INFINITY;
    }
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    if x < 0.0 {
        return (-0.5 * erfc(-x / SQRT_2)).ln_1p();
    }
    let e = erfc(x / SQRT_2);
    if e > 1e-300 {
        return (0.5 * e).ln();
    }
    // Mills ratio continued fraction, x > 37 here so 60 terms is plenty.
    let mut cf = x;
    for k in (1..=60).rev() {
        cf = x + k as f64 / cf;
    }
    normal_log_pdf(x) - cf.ln()
}

/// `ln P(N(0,1) <= x)`.
pub fn normal_log_cdf(x: f64) -> f64 {
    normal_log_sf(-x)
}

/// `(ln P(a, x), ln Q(a, x))`, the regularized lower and upper incomplete gamma functions.
pub fn log_gamma_pq(a: f64, x: f64) -> (f64, f64) {
    debug_assert!(a > 0.0);
    if x <= 0.0 {
        return (f64::NEG_INFINITY, 0.0);
    }
    if x == f64::INFINITY {
        return (0.0, f64::NEG_INFINITY);
    }
    let log_prefactor = -x + a * x.ln() - ln_gamma(a);
    if x < a + 1.0 {
        // series for P
        let mut ap = a;
        let mut del = 1.0 / a;
        let mut sum = del;
        for _ in 0..100_000 {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        let log_p = log_prefactor + sum.ln();
        (log_p, log1m_exp(log_p))
    } else {
        // modified Lentz continued fraction for Q
        const TINY: f64 = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..100_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        let log_q = log_prefactor + h.ln();
        (log1m_exp(log_q), log_q)
    }
}

/// `ln` of the chi(df) density at `t`.
pub fn chi_log_pdf(t: f64, df: u32) -> f64 {
    if t < 0.0 {
        return f64::NEG_INFINITY;
    }
    let k = df as f64;
    if t == 0.0 {
        return match df {
            1 => 0.5 * LN_2 - 0.5 * std::f64::consts::PI.ln(),
            _ => f64::NEG_INFINITY,
        };
    }
    (k - 1.0) * t.ln() - 0.5 * t * t - (0.5 * k - 1.0) * LN_2 - ln_gamma(0.5 * k)
}

/// `ln P(chi(df) <= t)`.
pub fn chi_log_cdf(t: f64, df: u32) -> f64 {
    log_gamma_pq(0.5 * df as f64, 0.5 * t.max(0.0) * t.max(0.0)).0
}

/// `ln P(chi(df) > t)`.
pub fn chi_log_sf(t: f64, df: u32) -> f64 {
    if t == f64::INFINITY {
        return f64::NEG_INFINITY;
    }
    log_gamma_pq(0.5 * df as f64, 0.5 * t.max(0.0) * t.max(0.0)).1
}
