//! Brute-force checks that share no code with the sweep or the kernels.
//!
//! The region oracle evaluates the plain forward pass on a grid along the
//! line and bisects each verdict change down to rounding level. The
//! quadrature oracle integrates the unnormalized null density with adaptive
//! Gauss-Kronrod.

use sisal_core::pwlnet::{forward_with_signature, predicted_class, PieceSignature};
use sisal_core::saliency::{cam, threshold_region};
use sisal_core::selectinf::{line_for, sweep_bounds, LinePath, NullDistribution};
use sisal_core::{forward, ClassMode, GraphSpec, Interval, IntervalUnion, Result, SalientRegion, Tensor, TestConfig};

/// What the plain pipeline selects at one point of the line.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub members: Vec<usize>,
    pub class: usize,
    pub signature: PieceSignature,
}

/// Runs the plain pipeline on the query image at `z`.
pub fn select_at(graph: &GraphSpec, line: &LinePath, cfg: &TestConfig, z: f64) -> Result<Selection> {
    let (a, b) = line.query();
    let x: Vec<f64> = a.iter().zip(b).map(|(a, b)| a + b * z).collect();
    let x = Tensor::new(graph.input_shape().to_vec(), x)?;
    let (acts, signature) = forward_with_signature(graph, &x)?;
    let class = match cfg.class_mode {
        ClassMode::Fixed(c) => c,
        ClassMode::Predicted => predicted_class(acts.last().expect("non-empty graph")),
    };
    let map = cam(graph, &acts, class)?;
    Ok(Selection {
        members: threshold_region(&map, cfg.tau).members().to_vec(),
        class,
        signature,
    })
}

/// `lo, lo + step, ...` up to and including `hi`.
pub fn grid_points(bounds: Interval, step: f64) -> Vec<f64> {
    let count = ((bounds.hi() - bounds.lo()) / step).floor() as usize;
    let mut pts: Vec<f64> = (0..=count).map(|k| bounds.lo() + k as f64 * step).collect();
    if *pts.last().expect("at least one point") < bounds.hi() {
        pts.push(bounds.hi());
    }
    pts
}

fn bounds_for(line: &LinePath, observed: &SalientRegion, cfg: &TestConfig) -> Result<Interval> {
    let dist = cfg.null_distribution(observed)?;
    Ok(sweep_bounds(dist, line.z_obs, &cfg.sweep))
}

/// Region-match verdict at each grid point.
pub fn oracle_verdicts(
    graph: &GraphSpec,
    line: &LinePath,
    observed: &SalientRegion,
    cfg: &TestConfig,
    grid: &[f64],
) -> Result<Vec<bool>> {
    grid.iter()
        .map(|&z| Ok(select_at(graph, line, cfg, z)?.members == observed.members()))
        .collect()
}

/// Bisects between `good` (predicate true) and `bad` (false) to rounding level.
fn bisect(mut good: f64, mut bad: f64, pred: &mut impl FnMut(f64) -> Result<bool>) -> Result<f64> {
    for _ in 0..200 {
        let mid = 0.5 * (good + bad);
        if mid == good || mid == bad {
            break;
        }
        if pred(mid)? {
            good = mid;
        } else {
            bad = mid;
        }
    }
    Ok(good)
}

/// Maximal runs of `true` verdicts, with each end bisected towards its neighbour.
fn refined_runs(
    grid: &[f64],
    verdicts: &[bool],
    pred: &mut impl FnMut(f64) -> Result<bool>,
) -> Result<Vec<Interval>> {
    let mut out = Vec::new();
    let mut k = 0;
    while k < grid.len() {
        if !verdicts[k] {
            k += 1;
            continue;
        }
        let start = k;
        while k + 1 < grid.len() && verdicts[k + 1] {
            k += 1;
        }
        let lo = if start == 0 { grid[0] } else { bisect(grid[start], grid[start - 1], pred)? };
        let hi = if k + 1 == grid.len() { grid[k] } else { bisect(grid[k], grid[k + 1], pred)? };
        out.push(Interval::new(lo, hi));
        k += 1;
    }
    Ok(out)
}

/// Grid estimate of the truncation region: runs of matching grid points in the
/// sweep bounds, endpoints refined by bisection.
pub fn oracle_region(
    graph: &GraphSpec,
    line: &LinePath,
    observed: &SalientRegion,
    cfg: &TestConfig,
    grid_step: f64,
) -> Result<IntervalUnion> {
    let grid = grid_points(bounds_for(line, observed, cfg)?, grid_step);
    let verdicts = oracle_verdicts(graph, line, observed, cfg, &grid)?;
    let mut pred = |z: f64| Ok(select_at(graph, line, cfg, z)?.members == observed.members());
    Ok(sisal_core::union_normalize(refined_runs(&grid, &verdicts, &mut pred)?))
}

/// Grid estimate of the over-conditioned interval: the run around `z_obs`
/// on which the activation pattern, the class and the region all stay as observed.
pub fn oracle_oc_interval(
    graph: &GraphSpec,
    line: &LinePath,
    observed: &SalientRegion,
    cfg: &TestConfig,
    grid_step: f64,
) -> Result<Interval> {
    let bounds = bounds_for(line, observed, cfg)?;
    let at_obs = select_at(graph, line, cfg, line.z_obs)?;
    let mut pred = |z: f64| {
        let s = select_at(graph, line, cfg, z)?;
        Ok(s.members == observed.members() && s.class == at_obs.class && s.signature == at_obs.signature)
    };
    let mut lo = line.z_obs;
    loop {
        let next = (lo - grid_step).max(bounds.lo());
        if next == lo {
            break;
        }
        if !pred(next)? {
            lo = bisect(lo, next, &mut pred)?;
            break;
        }
        lo = next;
    }
    let mut hi = line.z_obs;
    loop {
        let next = (hi + grid_step).min(bounds.hi());
        if next == hi {
            break;
        }
        if !pred(next)? {
            hi = bisect(hi, next, &mut pred)?;
            break;
        }
        hi = next;
    }
    Ok(Interval::new(lo, hi))
}

// ---------------------------------------------------------------------------
// Quadrature

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let (f1, f2) = (f(c - h * XGK[j]), f(c + h * XGK[j]));
        k += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            g += WG[j / 2] * (f1 + f2);
        }
    }
    (k * h, ((k - g) * h).abs())
}

fn adaptive(f: &impl Fn(f64) -> f64, a: f64, b: f64, depth: u32) -> f64 {
    let (k, err) = gk15(f, a, b);
    if depth >= 60 || err <= 1e-14 * k.abs() || err < 1e-300 {
        return k;
    }
    let m = 0.5 * (a + b);
    adaptive(f, a, m, depth + 1) + adaptive(f, m, b, depth + 1)
}

/// Unnormalized log density of the standardized law and its mode.
fn law(dist: NullDistribution) -> (Box<dyn Fn(f64) -> f64>, f64) {
    match dist {
        NullDistribution::Normal { .. } => (Box::new(|t: f64| -0.5 * t * t), 0.0),
        NullDistribution::Chi { df } => {
            let k = df as f64;
            let f = move |t: f64| {
                if t < 0.0 {
                    f64::NEG_INFINITY
                } else if df == 1 {
                    -0.5 * t * t
                } else {
                    (k - 1.0) * t.ln() - 0.5 * t * t
                }
            };
            (Box::new(f), (k - 1.0).sqrt())
        }
    }
}

/// `ln` of the unnormalized mass of `[lo, hi]`. Both laws are log-concave
/// with curvature at most -1, so 40 units from the interval's peak the density
/// has dropped by more than e^-800 and infinite ends can be cut there.
fn log_mass(log_f: &dyn Fn(f64) -> f64, mode: f64, lo: f64, hi: f64) -> f64 {
    if !(hi > lo) {
        return f64::NEG_INFINITY;
    }
    let peak_at = mode.clamp(lo, hi);
    let (lo, hi) = (lo.max(peak_at - 40.0), hi.min(peak_at + 40.0));
    let peak = log_f(peak_at);
    let scaled = |t: f64| (log_f(t) - peak).exp();
    // split at the peak so each half is monotone
    let mut total = 0.0;
    if peak_at > lo {
        total += adaptive(&scaled, lo, peak_at, 0);
    }
    if hi > peak_at {
        total += adaptive(&scaled, peak_at, hi, 0);
    }
    peak + total.ln()
}

fn log_union_mass(log_f: &dyn Fn(f64) -> f64, mode: f64, ivs: &[(f64, f64)]) -> f64 {
    let logs: Vec<f64> = ivs.iter().map(|&(lo, hi)| log_mass(log_f, mode, lo, hi)).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

/// Truncated p-value by quadrature: two-sided for the normal law, upper tail for chi.
pub fn quadrature_p(dist: NullDistribution, z_obs: f64, region: &IntervalUnion) -> f64 {
    let (log_f, mode) = law(dist);
    let (scale, t_obs) = match dist {
        NullDistribution::Normal { sd } => (sd, (z_obs / sd).abs()),
        NullDistribution::Chi { .. } => (1.0, z_obs),
    };
    let den: Vec<(f64, f64)> = region
        .intervals()
        .iter()
        .map(|iv| (iv.lo() / scale, iv.hi() / scale))
        .collect();
    let mut num = Vec::new();
    for &(lo, hi) in &den {
        if hi >= t_obs {
            num.push((lo.max(t_obs), hi));
        }
        if matches!(dist, NullDistribution::Normal { .. }) && lo <= -t_obs {
            num.push((lo, hi.min(-t_obs)));
        }
    }
    let ld = log_union_mass(&*log_f, mode, &den);
    let ln = log_union_mass(&*log_f, mode, &num);
    (ln - ld).exp().clamp(0.0, 1.0)
}

/// Selective and naive p-values from the grid region and quadrature alone.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleP {
    pub region: SalientRegion,
    pub truncation: IntervalUnion,
    pub p_selective: f64,
    pub p_naive: f64,
}

/// Oracle p-values for one image pair; `None` when nothing is salient.
pub fn oracle_p(
    graph: &GraphSpec,
    x: &Tensor,
    xref: &Tensor,
    cfg: &TestConfig,
    grid_step: f64,
) -> Result<Option<OracleP>> {
    let shape = graph.input_shape().to_vec();
    let x = x.clone().reshape(shape.clone())?;
    let xref = xref.clone().reshape(shape)?;
    let acts = forward(graph, &x)?;
    let class = match cfg.class_mode {
        ClassMode::Fixed(c) => c,
        ClassMode::Predicted => predicted_class(acts.last().expect("non-empty graph")),
    };
    let region = threshold_region(&cam(graph, &acts, class)?, cfg.tau);
    if region.is_empty() {
        return Ok(None);
    }
    let line = line_for(&x, &xref, &region, cfg)?;
    let dist = cfg.null_distribution(&region)?;
    let truncation = oracle_region(graph, &line, &region, cfg, grid_step)?;
    Ok(Some(OracleP {
        p_selective: quadrature_p(dist, line.z_obs, &truncation),
        p_naive: quadrature_p(dist, line.z_obs, &IntervalUnion::single(Interval::REAL_LINE)),
        region,
        truncation,
    }))
}

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample KS test of `samples` against Uniform(0, 1), with the
/// asymptotic Kolmogorov distribution and Stephens' small-sample correction.
pub fn ks_uniform(samples: &[f64]) -> KsResult {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let p = p.clamp(0.0, 1.0);
            ((i as f64 + 1.0) / n - p).max(p - i as f64 / n)
        })
        .fold(0.0, f64::max);
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    KsResult {
        statistic: d,
        p_value: kolmogorov_sf(lambda),
    }
}

/// `P(K > lambda)` for the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let j = j as f64;
        let term = (-2.0 * j * j * lambda * lambda).exp();
        sum += if j as u32 % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
