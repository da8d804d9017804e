//! Selective p-values for a CAM salient region.
//!
//! The observed region fixes the test direction. The data are restricted to
//! the line `a + b z` through the observation, the line is swept piece by piece
//! to find every `z` whose query image selects the same region, and the null
//! law of `z` is truncated to that set.

pub mod kernels;
pub mod line;
pub mod special;

use std::time::Instant;

use crate::error::{Error, Result};
use crate::pwlnet::{argmax_class, forward, forward_parametric, predicted_class, GraphSpec};
use crate::saliency::{cam, cam_parametric, pixel_lines, region_match_masked, threshold_region, SalientRegion};
use crate::tensor::{union_normalize, Interval, IntervalUnion, ParametricTensor, Tensor};

pub use kernels::{trunc_chi_p, trunc_normal_p, trunc_p, untruncated_p, NullDistribution};
pub use line::{eta_for, global_statistic, line_for, mean_statistic, LinePath};

const MAX_PIECES: usize = 10_000_000;
const MAX_DEGENERATE_STEPS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestKind {
    MeanNull,
    GlobalNull,
}

/// Which class the CAM explains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassMode {
    /// The argmax class, re-evaluated along the line and conditioned on.
    Predicted,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    /// Width of the sweep range in null standard deviations (normal) or the
    /// multiplier on `sqrt(2 df)` (chi).
    pub z_margin: f64,
    /// Relative step past a piece boundary; never below 1e-12 absolute.
    pub probe_delta: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            z_margin: 20.0,
            probe_delta: 1e-9,
        }
    }
}

impl SweepConfig {
    fn step(&self, boundary: f64) -> f64 {
        (self.probe_delta * boundary.abs()).max(1e-12)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestConfig {
    pub kind: TestKind,
    pub sigma: f64,
    pub tau: f64,
    pub alpha: f64,
    pub class_mode: ClassMode,
    pub sweep: SweepConfig,
}

impl TestConfig {
    pub fn mean_null(sigma: f64, tau: f64) -> Self {
        Self::with_kind(TestKind::MeanNull, sigma, tau)
    }

    pub fn global_null(sigma: f64, tau: f64) -> Self {
        Self::with_kind(TestKind::GlobalNull, sigma, tau)
    }

    pub fn with_kind(kind: TestKind, sigma: f64, tau: f64) -> Self {
        Self {
            kind,
            sigma,
            tau,
            alpha: 0.05,
            class_mode: ClassMode::Predicted,
            sweep: SweepConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!("sigma must be positive and finite, got {}", self.sigma)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.tau.is_nan() {
            return Err(Error::InvalidConfig("tau is NaN".into()));
        }
        if !(self.sweep.z_margin > 0.0 && self.sweep.z_margin.is_finite()) {
            return Err(Error::InvalidConfig(format!("z_margin must be positive, got {}", self.sweep.z_margin)));
        }
        if !(self.sweep.probe_delta > 0.0 && self.sweep.probe_delta < 1e-3) {
            return Err(Error::InvalidConfig(format!(
                "probe_delta must lie in (0, 1e-3), got {}",
                self.sweep.probe_delta
            )));
        }
        Ok(())
    }

    /// Null law of z given the observed region.
    pub fn null_distribution(&self, region: &SalientRegion) -> Result<NullDistribution> {
        if region.is_empty() {
            return Err(Error::EmptyRegion);
        }
        Ok(match self.kind {
            TestKind::MeanNull => NullDistribution::Normal {
                sd: self.sigma * (2.0 / region.len() as f64).sqrt(),
            },
            TestKind::GlobalNull => NullDistribution::Chi {
                df: u32::try_from(region.len())
                    .map_err(|_| Error::InvalidConfig("region too large for a chi law".into()))?,
            },
        })
    }
}

/// The set of z that reselects the observed region, with the null law of z.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationRegion {
    pub region: IntervalUnion,
    pub dist: NullDistribution,
    pub z_obs: f64,
    pub sweep_bounds: Interval,
    /// Linear pieces visited by the sweep.
    pub piece_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceResult {
    pub p_selective: f64,
    pub p_naive: f64,
    pub p_bonferroni: f64,
    pub p_oc: f64,
    pub region: SalientRegion,
    pub target_class: usize,
    pub truncation: TruncationRegion,
    pub oc_interval: Interval,
    pub statistic: f64,
    pub interval_count: usize,
    pub runtime_ms: u64,
}

impl InferenceResult {
    pub fn reject(&self, p: f64, alpha: f64) -> bool {
        p <= alpha
    }
}

/// Sweep range for z.
pub fn sweep_bounds(dist: NullDistribution, z_obs: f64, sweep: &SweepConfig) -> Interval {
    let m = sweep.z_margin;
    match dist {
        NullDistribution::Normal { sd } => Interval::new((-m * sd).min(z_obs - sd), (m * sd).max(z_obs + sd)),
        NullDistribution::Chi { df } => {
            let k = df as f64;
            Interval::new(0.0, z_obs.max(k + m * (2.0 * k).sqrt()) + m)
        }
    }
}

/// The query half of the line as an input-shaped path.
pub fn query_path(graph: &GraphSpec, line: &LinePath) -> Result<ParametricTensor> {
    let shape = graph.input_shape().to_vec();
    let (a, b) = line.query();
    ParametricTensor::new(Tensor::new(shape.clone(), a.to_vec())?, Tensor::new(shape, b.to_vec())?)
}

/// One linear piece around `z`: its interval (class interval folded in) and
/// the saliency lines valid on it.
struct Piece {
    interval: Interval,
    lines: Vec<crate::saliency::PixelLine>,
}

fn piece_at(graph: &GraphSpec, path: &ParametricTensor, z: f64, mode: ClassMode) -> Result<Piece> {
    let (acts, ctx) = forward_parametric(graph, path, z)?;
    let (class, interval) = match mode {
        ClassMode::Fixed(c) => (c, ctx.interval),
        ClassMode::Predicted => {
            let logits = acts.last().expect("graphs have at least one layer");
            let (c, civ) = argmax_class(logits, z)?;
            (c, ctx.interval.intersect(&civ))
        }
    };
    let map = cam_parametric(graph, &acts, class)?;
    Ok(Piece {
        interval,
        lines: pixel_lines(&map),
    })
}

fn check_class_mode(graph: &GraphSpec, mode: ClassMode) -> Result<()> {
    if let ClassMode::Fixed(c) = mode {
        if c >= graph.class_count() {
            return Err(Error::ClassOutOfRange {
                index: c,
                classes: graph.class_count(),
            });
        }
    }
    Ok(())
}

/// Walks the line from the lower to the upper sweep bound, one linear piece at
/// a time, and collects the z on which the thresholded CAM equals `observed`.
pub fn sweep_truncation(
    graph: &GraphSpec,
    line: &LinePath,
    observed: &SalientRegion,
    cfg: &TestConfig,
) -> Result<TruncationRegion> {
    cfg.validate()?;
    check_class_mode(graph, cfg.class_mode)?;
    let dist = cfg.null_distribution(observed)?;
    let bounds = sweep_bounds(dist, line.z_obs, &cfg.sweep);
    let path = query_path(graph, line)?;
    let mask = observed.mask();
    if mask.len() != graph.pixel_count() {
        return Err(Error::ShapeMismatch(format!(
            "region covers {} pixels, saliency map has {}",
            mask.len(),
            graph.pixel_count()
        )));
    }

    let mut matches = Vec::new();
    let mut seg_lo = bounds.lo();
    let mut z = bounds.lo();
    let mut pieces = 0usize;
    let mut degenerate_run = 0usize;
    while z <= bounds.hi() {
        pieces += 1;
        if pieces > MAX_PIECES {
            return Err(Error::Inconsistent(format!("sweep exceeded {MAX_PIECES} pieces")));
        }
        let piece = piece_at(graph, &path, z, cfg.class_mode)?;
        let seg_hi = piece.interval.hi().min(bounds.hi());
        if seg_hi <= z && seg_hi < bounds.hi() {
            degenerate_run += 1;
            log::warn!("zero-length piece at z = {z}; stepping past it");
            if degenerate_run >= MAX_DEGENERATE_STEPS {
                return Err(Error::Inconsistent(format!(
                    "{MAX_DEGENERATE_STEPS} consecutive zero-length pieces near z = {z}"
                )));
            }
        } else {
            degenerate_run = 0;
        }
        // segments tile the range, so the step past each boundary is covered by
        // the piece that follows it
        let segment = Interval::new(seg_lo, seg_hi.max(z));
        matches.extend_from_slice(region_match_masked(&piece.lines, segment, cfg.tau, &mask).intervals());
        seg_lo = segment.hi();
        z = segment.hi() + cfg.sweep.step(segment.hi());
    }

    let region = union_normalize(matches);
    if !region.contains(line.z_obs) {
        return Err(Error::Inconsistent(format!(
            "observed z = {} is not in its own truncation region",
            line.z_obs
        )));
    }
    Ok(TruncationRegion {
        region,
        dist,
        z_obs: line.z_obs,
        sweep_bounds: bounds,
        piece_count: pieces,
    })
}

/// The over-conditioned interval: the piece at `z_obs` (class interval
/// included) intersected with the sweep bounds and the region match there.
pub fn oc_interval(graph: &GraphSpec, line: &LinePath, observed: &SalientRegion, cfg: &TestConfig) -> Result<Interval> {
    cfg.validate()?;
    check_class_mode(graph, cfg.class_mode)?;
    let dist = cfg.null_distribution(observed)?;
    let bounds = sweep_bounds(dist, line.z_obs, &cfg.sweep);
    let path = query_path(graph, line)?;
    let piece = piece_at(graph, &path, line.z_obs, cfg.class_mode)?;
    let local = region_match_masked(&piece.lines, piece.interval.intersect(&bounds), cfg.tau, &observed.mask());
    local.component_containing(line.z_obs).ok_or_else(|| {
        Error::Inconsistent(format!("observed z = {} does not reselect the observed region", line.z_obs))
    })
}

pub fn oc_p(graph: &GraphSpec, line: &LinePath, observed: &SalientRegion, cfg: &TestConfig) -> Result<f64> {
    let interval = oc_interval(graph, line, observed, cfg)?;
    trunc_p(cfg.null_distribution(observed)?, line.z_obs, &IntervalUnion::single(interval))
}

/// Untruncated p-value of the statistic.
pub fn naive_p(statistic: f64, cfg: &TestConfig, region: &SalientRegion) -> Result<f64> {
    Ok(untruncated_p(cfg.null_distribution(region)?, statistic))
}

/// `min(1, p 2^n)`, in log space.
pub fn bonferroni_p(p_naive: f64, n: usize) -> f64 {
    if p_naive <= 0.0 {
        return 0.0;
    }
    (p_naive.ln() + n as f64 * std::f64::consts::LN_2).exp().min(1.0)
}

/// Query and reference as input-shaped tensors; `(H, W)` images are accepted
/// for single-channel graphs.
fn as_input(graph: &GraphSpec, x: &Tensor, what: &str) -> Result<Tensor> {
    let shape = graph.input_shape();
    if x.shape() == shape {
        return Ok(x.clone());
    }
    if shape[2] == 1 && x.shape() == &shape[..2] {
        return x.clone().reshape(shape.to_vec());
    }
    Err(Error::ShapeMismatch(format!(
        "{what} has shape {:?}, model input is {:?}",
        x.shape(),
        shape
    )))
}

/// Full pipeline: select the region on the query, then test it.
pub fn infer(graph: &GraphSpec, x_obs: &Tensor, xref_obs: &Tensor, cfg: &TestConfig) -> Result<InferenceResult> {
    let started = Instant::now();
    cfg.validate()?;
    check_class_mode(graph, cfg.class_mode)?;
    let [h, w, c] = graph.input_shape();
    if c != 1 || graph.pixel_count() != h * w {
        return Err(Error::InvalidConfig(
            "testing needs a single-channel model whose saliency map has input resolution".into(),
        ));
    }
    let x = as_input(graph, x_obs, "query")?;
    let xref = as_input(graph, xref_obs, "reference")?;

    let acts = forward(graph, &x)?;
    let target_class = match cfg.class_mode {
        ClassMode::Fixed(c) => c,
        ClassMode::Predicted => predicted_class(acts.last().expect("graphs have at least one layer")),
    };
    let map = cam(graph, &acts, target_class)?;
    let region = threshold_region(&map, cfg.tau);
    if region.is_empty() {
        return Err(Error::EmptyRegion);
    }

    let line = line_for(&x, &xref, &region, cfg)?;
    if line.degenerate {
        return Err(Error::DegenerateStatistic);
    }
    let truncation = sweep_truncation(graph, &line, &region, cfg)?;
    let p_selective = trunc_p(truncation.dist, line.z_obs, &truncation.region)?;
    let p_naive = untruncated_p(truncation.dist, line.z_obs);
    let oc = oc_interval(graph, &line, &region, cfg)?;
    let p_oc = trunc_p(truncation.dist, line.z_obs, &IntervalUnion::single(oc))?;

    Ok(InferenceResult {
        p_selective,
        p_naive,
        p_bonferroni: bonferroni_p(p_naive, region.n()),
        p_oc,
        target_class,
        oc_interval: oc,
        statistic: line.z_obs,
        interval_count: truncation.region.len(),
        truncation,
        region,
        runtime_ms: started.elapsed().as_millis() as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pwlnet::{CamHead, Conv2d, Dense, LayerSpec, Padding};

    /// `H x W x 1` input, a 1x1 conv with weight `w`, then GAP and a dense head
    /// with the given per-class weights. CAM for class c is `head[c] * w * x`.
    fn linear_graph(h: usize, wd: usize, w: f64, head: &[f64]) -> GraphSpec {
        let layers = vec![
            LayerSpec::Conv2d(Conv2d {
                filters: 1,
                kernel_size: 1,
                stride: 1,
                padding: Padding::Same,
                weights: vec![w],
                bias: vec![0.0],
            }),
            LayerSpec::GlobalAvgPool,
            LayerSpec::Dense(Dense {
                units: head.len(),
                weights: head.to_vec(),
                bias: vec![0.0; head.len()],
            }),
        ];
        GraphSpec::new(
            [h, wd, 1],
            layers,
            CamHead {
                feature_layer_index: 0,
                dense_layer_index: 2,
                upsample_to_input: true,
            },
        )
        .unwrap()
    }

    fn img(h: usize, w: usize, v: &[f64]) -> Tensor {
        Tensor::new(vec![h, w], v.to_vec()).unwrap()
    }

    #[test]
    fn bonferroni_examples() {
        assert!((bonferroni_p(1e-6, 8) - 2.56e-4).abs() < 1e-15);
        assert_eq!(bonferroni_p(0.5, 64), 1.0);
        let p = bonferroni_p(1e-300, 64);
        assert!((p / 1.8446744073709552e-281 - 1.0).abs() < 1e-9);
        assert_eq!(bonferroni_p(0.0, 3), 0.0);
    }

    #[test]
    fn naive_examples() {
        let r = SalientRegion::new(vec![0, 1], 0.0, 4).unwrap();
        let cfg = TestConfig::mean_null(1.0, 0.0);
        assert_eq!(naive_p(0.0, &cfg, &r).unwrap(), 1.0);
        // sd = sigma |eta| = 1 for |M| = 2
        assert!((naive_p(1.959963984540054, &cfg, &r).unwrap() - 0.05).abs() < 1e-12);
        let empty = SalientRegion::new(vec![], 0.0, 4).unwrap();
        assert!(matches!(naive_p(1.0, &cfg, &empty), Err(Error::EmptyRegion)));
    }

    #[test]
    fn config_validation() {
        let mut cfg = TestConfig::mean_null(1.0, 0.0);
        assert!(cfg.validate().is_ok());
        cfg.sigma = 0.0;
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
        cfg.sigma = 1.0;
        cfg.alpha = 1.0;
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn single_pixel_identity_region() {
        // CAM equals the input; observed member, so the region is z with a1 + b1 z >= 0
        let g = linear_graph(1, 1, 1.0, &[1.0]);
        let (x, xr) = (img(1, 1, &[0.7]), img(1, 1, &[-0.4]));
        let cfg = TestConfig::mean_null(1.0, 0.0);
        let region = SalientRegion::new(vec![0], 0.0, 1).unwrap();
        let line = line_for(&x, &xr, &region, &cfg).unwrap();
        let tr = sweep_truncation(&g, &line, &region, &cfg).unwrap();
        let (a1, b1) = (line.a[0], line.b[0]);
        assert!(b1 > 0.0);
        let lo = (-a1 / b1).max(tr.sweep_bounds.lo());
        assert_eq!(tr.region.len(), 1);
        let got = tr.region.intervals()[0];
        assert!((got.lo() - lo).abs() < 1e-12);
        assert_eq!(got.hi(), tr.sweep_bounds.hi());
    }

    #[test]
    fn linear_all_member_region_is_one_interval() {
        // 2x2, all pixels selected at tau = -10; the constraints are four half-lines
        let g = linear_graph(2, 2, 1.0, &[1.0]);
        let x = img(2, 2, &[0.3, -1.2, 2.0, 0.1]);
        let xr = img(2, 2, &[0.5, 0.2, -0.3, 1.0]);
        let cfg = TestConfig::mean_null(1.0, -10.0);
        let r = infer(&g, &x, &xr, &cfg).unwrap();
        assert_eq!(r.region.len(), 4);
        assert_eq!(r.interval_count, 1);
        let line = line_for(
            &x.clone().reshape(vec![2, 2, 1]).unwrap(),
            &xr.clone().reshape(vec![2, 2, 1]).unwrap(),
            &r.region,
            &cfg,
        )
        .unwrap();
        // closed form: max over pixels of (tau - a_i) / b_i, b_i = 1/2
        let lo = (0..4).map(|i| (-10.0 - line.a[i]) / line.b[i]).fold(f64::NEG_INFINITY, f64::max);
        let got = r.truncation.region.intervals()[0];
        assert!((got.lo() - lo.max(r.truncation.sweep_bounds.lo())).abs() < 1e-12);
        assert!(got.contains(line.z_obs));
        // the linear graph has a single piece, so OC conditions on the same set
        assert_eq!(r.oc_interval, got);
        assert_eq!(r.p_oc, r.p_selective);
    }

    #[test]
    fn predicted_class_switch_splits_the_line() {
        // class 0 has head weight +1, class 1 has -1. The logits are +-mean(x),
        // so the predicted class flips sign with the mean of the query.
        let g = linear_graph(1, 2, 1.0, &[1.0, -1.0]);
        let x = img(1, 2, &[1.0, 0.5]);
        let xr = img(1, 2, &[0.0, 0.0]);
        let cfg = TestConfig::mean_null(1.0, 0.25);
        let r = infer(&g, &x, &xr, &cfg).unwrap();
        assert_eq!(r.target_class, 0);
        assert_eq!(r.region.members(), &[0, 1]);
        // The query along the line is (0.625 + z/2, 0.125 + z/2). Class 0 needs
        // z >= -0.75 and selects both pixels for z >= 0.25; class 1 maps the
        // CAM to -x and selects both again once z <= -1.75.
        let ivs = r.truncation.region.intervals();
        assert_eq!(ivs.len(), 2);
        assert_eq!(ivs[0].lo(), r.truncation.sweep_bounds.lo());
        assert!((ivs[0].hi() + 1.75).abs() < 1e-12);
        assert!((ivs[1].lo() - 0.25).abs() < 1e-12);
        assert_eq!(ivs[1].hi(), r.truncation.sweep_bounds.hi());
        // OC stays on the class-0 piece
        assert!((r.oc_interval.lo() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn empty_region_is_an_error() {
        let g = linear_graph(1, 2, 1.0, &[1.0]);
        let cfg = TestConfig::mean_null(1.0, 100.0);
        let e = infer(&g, &img(1, 2, &[0.0, 1.0]), &img(1, 2, &[0.0, 0.0]), &cfg).unwrap_err();
        assert!(matches!(e, Error::EmptyRegion));
    }

    #[test]
    fn fixed_class_out_of_range() {
        let g = linear_graph(1, 2, 1.0, &[1.0]);
        let mut cfg = TestConfig::mean_null(1.0, 0.0);
        cfg.class_mode = ClassMode::Fixed(3);
        let e = infer(&g, &img(1, 2, &[0.0, 1.0]), &img(1, 2, &[0.0, 0.0]), &cfg).unwrap_err();
        assert!(matches!(e, Error::ClassOutOfRange { index: 3, classes: 1 }));
    }

    #[test]
    fn sweep_bounds_rules() {
        let s = SweepConfig::default();
        let b = sweep_bounds(NullDistribution::Normal { sd: 0.5 }, 0.1, &s);
        assert_eq!((b.lo(), b.hi()), (-10.0, 10.0));
        let b = sweep_bounds(NullDistribution::Normal { sd: 0.5 }, 30.0, &s);
        assert_eq!((b.lo(), b.hi()), (-10.0, 30.5));
        let b = sweep_bounds(NullDistribution::Chi { df: 8 }, 1.0, &s);
        assert_eq!((b.lo(), b.hi()), (0.0, 8.0 + 20.0 * 4.0 + 20.0));
    }
}
