//! Test statistics and the one-dimensional line through the stacked data.
//!
//! The stacked observation is `v = (x; x_ref)` in R^{2n}. Conditioning on the
//! part of `v` orthogonal to the test direction leaves a line `a + b z`; the
//! selection event then only has to be tracked along `z`. Nothing here forms a
//! 2n x 2n matrix: both projections act only on region members.

use super::{TestConfig, TestKind};
use crate::error::{Error, Result};
use crate::saliency::SalientRegion;
use crate::tensor::Tensor;

/// `a + b z` through the stacked data, with the observed `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinePath {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub z_obs: f64,
    pub n: usize,
    /// Set when the global statistic is exactly zero and `b` was chosen arbitrarily.
    pub degenerate: bool,
}

impl LinePath {
    /// Query-image half of the line.
    pub fn query(&self) -> (&[f64], &[f64]) {
        (&self.a[..self.n], &self.b[..self.n])
    }

    pub fn point(&self, z: f64) -> Vec<f64> {
        self.a.iter().zip(&self.b).map(|(a, b)| a + b * z).collect()
    }
}

fn require_members(region: &SalientRegion) -> Result<f64> {
    if region.is_empty() {
        Err(Error::EmptyRegion)
    } else {
        Ok(region.len() as f64)
    }
}

fn check_pair(x: &Tensor, xref: &Tensor, region: &SalientRegion) -> Result<()> {
    if x.len() != xref.len() || x.len() != region.n() {
        return Err(Error::ShapeMismatch(format!(
            "query has {} values, reference {}, region covers {}",
            x.len(),
            xref.len(),
            region.n()
        )));
    }
    Ok(())
}

/// `(1_M; -1_M) / |M|`.
pub fn eta_for(region: &SalientRegion) -> Result<Vec<f64>> {
    let m = require_members(region)?;
    let n = region.n();
    let mut eta = vec![0.0; 2 * n];
    for &i in region.members() {
        eta[i] = 1.0 / m;
        eta[n + i] = -1.0 / m;
    }
    Ok(eta)
}

/// Mean of the query over the region minus mean of the reference over the region.
pub fn mean_statistic(x: &Tensor, xref: &Tensor, region: &SalientRegion) -> Result<f64> {
    let m = require_members(region)?;
    check_pair(x, xref, region)?;
    let (xv, rv) = (x.values(), xref.values());
    let diff: f64 = region.members().iter().map(|&i| xv[i] - rv[i]).sum();
    Ok(diff / m)
}

/// `sqrt(sum_{i in M} ((x_i - xref_i) / (sqrt(2) sigma))^2)`.
pub fn global_statistic(x: &Tensor, xref: &Tensor, region: &SalientRegion, sigma: f64) -> Result<f64> {
    require_members(region)?;
    check_pair(x, xref, region)?;
    let (xv, rv) = (x.values(), xref.values());
    let scale = std::f64::consts::SQRT_2 * sigma;
    let ss: f64 = region
        .members()
        .iter()
        .map(|&i| {
            let d = (xv[i] - rv[i]) / scale;
            d * d
        })
        .sum();
    Ok(ss.sqrt())
}

/// `P v` for the block projection that averages each member pair `(v_i, v_{n+i})`
/// difference: `(P v)_i = (v_i - v_{n+i}) / 2`, `(P v)_{n+i} = -(P v)_i`, zero off the region.
pub fn project(region: &SalientRegion, v: &[f64]) -> Vec<f64> {
    let n = region.n();
    let mut out = vec![0.0; 2 * n];
    for &i in region.members() {
        let half = 0.5 * (v[i] - v[n + i]);
        out[i] = half;
        out[n + i] = -half;
    }
    out
}

/// The conditioning line for the configured test.
pub fn line_for(x_obs: &Tensor, xref_obs: &Tensor, region: &SalientRegion, cfg: &TestConfig) -> Result<LinePath> {
    require_members(region)?;
    check_pair(x_obs, xref_obs, region)?;
    let n = region.n();
    let v: Vec<f64> = x_obs.values().iter().chain(xref_obs.values()).copied().collect();
    match cfg.kind {
        TestKind::MeanNull => {
            // b = eta / |eta|^2 is +-1/2 on the members; a removes the eta component of v
            let z_obs = mean_statistic(x_obs, xref_obs, region)?;
            let mut b = vec![0.0; 2 * n];
            for &i in region.members() {
                b[i] = 0.5;
                b[n + i] = -0.5;
            }
            let a = v.iter().zip(&b).map(|(vi, bi)| vi - bi * z_obs).collect();
            Ok(LinePath {
                a,
                b,
                z_obs,
                n,
                degenerate: false,
            })
        }
        TestKind::GlobalNull => {
            let pv = project(region, &v);
            let norm = pv.iter().map(|p| p * p).sum::<f64>().sqrt();
            let a = v.iter().zip(&pv).map(|(vi, pi)| vi - pi).collect();
            if norm == 0.0 {
                let first = region.members()[0];
                let mut b = vec![0.0; 2 * n];
                b[first] = cfg.sigma / std::f64::consts::SQRT_2;
                b[n + first] = -cfg.sigma / std::f64::consts::SQRT_2;
                return Ok(LinePath {
                    a,
                    b,
                    z_obs: 0.0,
                    n,
                    degenerate: true,
                });
            }
            let b = pv.iter().map(|p| cfg.sigma * p / norm).collect();
            Ok(LinePath {
                a,
                b,
                z_obs: norm / cfg.sigma,
                n,
                degenerate: false,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64]) -> Tensor {
        Tensor::new(vec![v.len()], v.to_vec()).unwrap()
    }

    fn region(m: &[usize], n: usize) -> SalientRegion {
        SalientRegion::new(m.to_vec(), 0.0, n).unwrap()
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn eta_examples() {
        assert_eq!(eta_for(&region(&[0, 2], 3)).unwrap(), vec![0.5, 0.0, 0.5, -0.5, 0.0, -0.5]);
        let e = eta_for(&region(&[0], 1)).unwrap();
        assert_eq!(e, vec![1.0, -1.0]);
        for m in 1..9 {
            let r = region(&(0..m).collect::<Vec<_>>(), 10);
            let e = eta_for(&r).unwrap();
            assert!((dot(&e, &e) - 2.0 / m as f64).abs() < 1e-15);
        }
        assert!(matches!(eta_for(&region(&[], 3)), Err(Error::EmptyRegion)));
    }

    #[test]
    fn statistic_examples() {
        let r = region(&[0, 2], 3);
        let (x, xr) = (t(&[1.0, 0.0, 3.0]), t(&[0.0, 0.0, 1.0]));
        assert_eq!(mean_statistic(&x, &xr, &r).unwrap(), 1.5);
        assert_eq!(mean_statistic(&x, &x, &r).unwrap(), 0.0);
        let all = region(&[0, 1, 2], 3);
        let shifted = t(&[2.0, 1.0, 4.0]);
        assert_eq!(mean_statistic(&shifted, &t(&[1.0, 0.0, 3.0]), &all).unwrap(), 1.0);

        let g = global_statistic(&x, &xr, &r, 1.0).unwrap();
        assert!((g - 2.5f64.sqrt()).abs() < 1e-12);
        assert!((g - 1.58113883).abs() < 1e-8);
        assert_eq!(global_statistic(&x, &x, &r, 1.0).unwrap(), 0.0);
        let single = global_statistic(&t(&[3.0]), &t(&[0.5]), &region(&[0], 1), 2.0).unwrap();
        assert!((single - 2.5 / (2.0f64.sqrt() * 2.0)).abs() < 1e-15);
        assert!(matches!(mean_statistic(&x, &xr, &region(&[], 3)), Err(Error::EmptyRegion)));
    }

    #[test]
    fn degenerate_global_line() {
        let x = t(&[1.0, 2.0]);
        let cfg = TestConfig::global_null(1.5, 0.0);
        let line = line_for(&x, &x, &region(&[1], 2), &cfg).unwrap();
        assert!(line.degenerate);
        assert_eq!(line.z_obs, 0.0);
        let norm = line.b.iter().map(|b| b * b).sum::<f64>().sqrt();
        assert!((norm - 1.5).abs() < 1e-15);
        // b lies in the range of the projection
        assert_eq!(project(&region(&[1], 2), &line.b), line.b);
    }
}
