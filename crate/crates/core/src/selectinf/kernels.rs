//! Truncated normal and truncated chi tail probabilities over interval unions.
//!
//! Interval masses are accumulated in log space. A mass is taken as a
//! difference of tail probabilities unless that difference cancels badly
//! (the interval holds a small share of the tail beyond it), in which case the
//! density is integrated directly with composite Gauss-Legendre relative to
//! its largest value on the interval.

use std::sync::OnceLock;

use super::special::{
    chi_log_cdf, chi_log_pdf, chi_log_sf, log1m_exp, log_sum_exp, normal_log_cdf, normal_log_pdf,
    normal_log_sf,
};
use crate::error::{Error, Result};
use crate::tensor::{Interval, IntervalUnion};

/// Null law of the line parameter z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NullDistribution {
    Normal { sd: f64 },
    Chi { df: u32 },
}

/// Share of the tail below which a tail difference is replaced by quadrature.
const CANCELLATION_LIMIT: f64 = 1e-2;
const GL_PANELS: usize = 4;
const GL_ORDER: usize = 20;

trait Law {
    fn log_pdf(&self, t: f64) -> f64;
    fn log_sf(&self, t: f64) -> f64;
    fn log_cdf(&self, t: f64) -> f64;
    fn mode(&self) -> f64;
    fn support_lo(&self) -> f64;
}

struct StdNormal;

impl Law for StdNormal {
    fn log_pdf(&self, t: f64) -> f64 {
        normal_log_pdf(t)
    }
    fn log_sf(&self, t: f64) -> f64 {
        normal_log_sf(t)
    }
    fn log_cdf(&self, t: f64) -> f64 {
        normal_log_cdf(t)
    }
    fn mode(&self) -> f64 {
        0.0
    }
    fn support_lo(&self) -> f64 {
        f64::NEG_INFINITY
    }
}

struct Chi(u32);

impl Law for Chi {
    fn log_pdf(&self, t: f64) -> f64 {
        chi_log_pdf(t, self.0)
    }
    fn log_sf(&self, t: f64) -> f64 {
        chi_log_sf(t, self.0)
    }
    fn log_cdf(&self, t: f64) -> f64 {
        chi_log_cdf(t, self.0)
    }
    fn mode(&self) -> f64 {
        ((self.0 as f64) - 1.0).max(0.0).sqrt()
    }
    fn support_lo(&self) -> f64 {
        0.0
    }
}

fn gauss_legendre() -> &'static (Vec<f64>, Vec<f64>) {
    static NODES: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    NODES.get_or_init(|| {
        let n = GL_ORDER;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        (nodes, weights)
    })
}

/// `ln` of the integral of the density over a finite `[lo, hi]`, by quadrature.
fn log_mass_quadrature(law: &dyn Law, lo: f64, hi: f64) -> f64 {
    let peak = law.log_pdf(law.mode().clamp(lo, hi));
    let (nodes, weights) = gauss_legendre();
    let width = (hi - lo) / GL_PANELS as f64;
    let mut sum = 0.0;
    for panel in 0..GL_PANELS {
        let a = lo + panel as f64 * width;
        let half = 0.5 * width;
        let mid = a + half;
        for (x, w) in nodes.iter().zip(weights) {
            sum += w * half * (law.log_pdf(mid + half * x) - peak).exp();
        }
    }
    peak + sum.ln()
}

fn log_interval_mass(law: &dyn Law, iv: Interval) -> f64 {
    let lo = iv.lo().max(law.support_lo());
    let hi = iv.hi();
    if !(lo < hi) {
        return f64::NEG_INFINITY;
    }
    if hi == f64::INFINITY {
        return law.log_sf(lo);
    }
    if lo == f64::NEG_INFINITY {
        return law.log_cdf(hi);
    }
    let mode = law.mode();
    let (outer, inner) = if lo >= mode {
        (law.log_sf(lo), law.log_sf(hi))
    } else if hi <= mode {
        (law.log_cdf(hi), law.log_cdf(lo))
    } else {
        // straddles the mode: one minus both outside tails
        let outside = law.log_cdf(lo).exp() + law.log_sf(hi).exp();
        if outside < 0.5 {
            return (-outside).ln_1p();
        }
        return log_mass_quadrature(law, lo, hi);
    };
    if outer == f64::NEG_INFINITY {
        return outer;
    }
    let share = log1m_exp(inner - outer);
    if share.exp() >= CANCELLATION_LIMIT {
        outer + share
    } else {
        log_mass_quadrature(law, lo, hi)
    }
}

fn log_union_mass(law: &dyn Law, region: &IntervalUnion) -> f64 {
    let masses: Vec<f64> = region.intervals().iter().map(|&iv| log_interval_mass(law, iv)).collect();
    log_sum_exp(&masses)
}

fn tail_ratio(law: &dyn Law, region: &IntervalUnion, extreme: &IntervalUnion) -> Result<f64> {
    let log_den = log_union_mass(law, region);
    if !log_den.is_finite() {
        return Err(Error::ZeroMass);
    }
    let log_num = log_union_mass(law, extreme);
    Ok((log_num - log_den).exp().clamp(0.0, 1.0))
}

/// `P(|Z| >= |z_obs| | Z in region)` for `Z ~ N(0, sd^2)`.
pub fn trunc_normal_p(z_obs: f64, sd: f64, region: &IntervalUnion) -> Result<f64> {
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::InvalidConfig(format!("standard deviation {sd} must be positive")));
    }
    if !region.contains(z_obs) {
        return Err(Error::InvalidConfig(format!("z_obs = {z_obs} lies outside the truncation region")));
    }
    let scaled = crate::tensor::union_normalize(
        region
            .intervals()
            .iter()
            .map(|iv| Interval::new(iv.lo() / sd, iv.hi() / sd))
            .collect(),
    );
    let t = (z_obs / sd).abs();
    let mut extreme: Vec<Interval> = scaled.intersect_interval(&Interval::at_most(-t)).intervals().to_vec();
    extreme.extend_from_slice(scaled.intersect_interval(&Interval::at_least(t)).intervals());
    tail_ratio(&StdNormal, &scaled, &crate::tensor::union_normalize(extreme))
}

/// `P(Z >= z_obs | Z in region)` for `Z ~ chi(df)`.
pub fn trunc_chi_p(z_obs: f64, df: u32, region: &IntervalUnion) -> Result<f64> {
    if df == 0 {
        return Err(Error::InvalidConfig("chi degrees of freedom must be positive".into()));
    }
    if !region.contains(z_obs) {
        return Err(Error::InvalidConfig(format!("z_obs = {z_obs} lies outside the truncation region")));
    }
    if region.intervals().first().is_some_and(|iv| iv.lo() < 0.0) {
        return Err(Error::InvalidConfig("chi truncation region extends below zero".into()));
    }
    let extreme = region.intersect_interval(&Interval::at_least(z_obs));
    tail_ratio(&Chi(df), region, &extreme)
}

/// Truncated tail probability under `dist`.
pub fn trunc_p(dist: NullDistribution, z_obs: f64, region: &IntervalUnion) -> Result<f64> {
    match dist {
        NullDistribution::Normal { sd } => trunc_normal_p(z_obs, sd, region),
        NullDistribution::Chi { df } => trunc_chi_p(z_obs, df, region),
    }
}

/// Untruncated tail probability: two-sided normal, or chi upper tail.
pub fn untruncated_p(dist: NullDistribution, statistic: f64) -> f64 {
    match dist {
        NullDistribution::Normal { sd } => {
            (std::f64::consts::LN_2 + normal_log_sf((statistic / sd).abs())).exp().min(1.0)
        }
        NullDistribution::Chi { df } => chi_log_sf(statistic, df).exp(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::union_normalize;

    fn union(ivs: &[(f64, f64)]) -> IntervalUnion {
        union_normalize(ivs.iter().map(|&(a, b)| Interval::new(a, b)).collect())
    }

    #[test]
    fn normal_examples() {
        let full = IntervalUnion::single(Interval::REAL_LINE);
        let p = trunc_normal_p(1.96 * 2.0, 2.0, &full).unwrap();
        assert!((p - 0.05).abs() < 1e-4);
        assert_eq!(trunc_normal_p(1.5, 1.0, &union(&[(1.5, f64::INFINITY)])).unwrap(), 1.0);
        let p = trunc_normal_p(0.0, 1.0, &full).unwrap();
        assert!((p - 1.0).abs() < 1e-15);
    }

    #[test]
    fn chi_examples() {
        let half = IntervalUnion::single(Interval::at_least(0.0));
        let p = trunc_chi_p(1.959964, 1, &half).unwrap();
        assert!((p - 0.05).abs() < 1e-4);
        let p = trunc_chi_p(3.0, 7, &union(&[(3.0, f64::INFINITY)])).unwrap();
        assert!((p - 1.0).abs() < 1e-14);
    }

    #[test]
    fn full_support_matches_untruncated() {
        let full = IntervalUnion::single(Interval::REAL_LINE);
        for z in [-3.1, -0.2, 0.7, 2.5, 6.0] {
            let a = trunc_normal_p(z, 1.3, &full).unwrap();
            let b = untruncated_p(NullDistribution::Normal { sd: 1.3 }, z);
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        let half = IntervalUnion::single(Interval::at_least(0.0));
        for (z, df) in [(0.3, 1), (2.0, 4), (8.0, 30), (1.0, 64)] {
            let a = trunc_chi_p(z, df, &half).unwrap();
            let b = untruncated_p(NullDistribution::Chi { df }, z);
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn deep_tail_regions() {
        // two narrow intervals far in the tail: ratio of nearly equal densities
        let r = union(&[(30.0, 30.0 + 1e-9), (30.5, 30.5 + 1e-9)]);
        let p = trunc_normal_p(30.5, 1.0, &r).unwrap();
        let w = (-(30.5f64 * 30.5 - 900.0) / 2.0).exp();
        assert!((p - w / (1.0 + w)).abs() < 1e-9);
        // a single interval at the far tail truncates to a tail ratio
        let r = union(&[(40.0, f64::INFINITY)]);
        let p = trunc_normal_p(41.0, 1.0, &r).unwrap();
        let expected = (normal_log_sf(41.0) - normal_log_sf(40.0)).exp();
        assert!((p - expected).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let r = union(&[(0.0, 1.0)]);
        assert!(matches!(trunc_normal_p(2.0, 1.0, &r), Err(Error::InvalidConfig(_))));
        assert!(matches!(trunc_normal_p(0.5, 0.0, &r), Err(Error::InvalidConfig(_))));
        // far tails stay finite in log space; only a measure-zero region has no mass
        let far = union(&[(1e4, 1e4 + 1.0)]);
        assert!(trunc_normal_p(1e4, 1.0, &far).is_ok());
        let point = union(&[(0.5, 0.5)]);
        assert!(matches!(trunc_normal_p(0.5, 1.0, &point), Err(Error::ZeroMass)));
        assert!(trunc_chi_p(0.5, 0, &r).is_err());
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre();
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        let quartic: f64 = x.iter().zip(w).map(|(x, w)| w * x.powi(4)).sum();
        assert!((quartic - 0.4).abs() < 1e-14);
    }
}
