//! Class activation maps and threshold-defined salient regions.

use crate::error::{Error, Result};
use crate::pwlnet::{upsample_apply, GraphSpec, LayerSpec};
use crate::tensor::{Interval, IntervalUnion, ParametricTensor, Tensor, union_normalize};

/// Per-pixel saliency over the input grid, flattened row-major to `H * W` values.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    pub values: Tensor,
    pub target_class: usize,
}

/// Pixels whose saliency is at least `tau`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SalientRegion {
    members: Vec<usize>,
    tau_bits: u64,
    n: usize,
}

impl SalientRegion {
    pub fn new(mut members: Vec<usize>, tau: f64, n: usize) -> Result<Self> {
        members.sort_unstable();
        members.dedup();
        if members.last().is_some_and(|&m| m >= n) {
            return Err(Error::InvalidConfig(format!("region member out of range for {n} pixels")));
        }
        Ok(Self {
            members,
            tau_bits: tau.to_bits(),
            n,
        })
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn tau(&self) -> f64 {
        f64::from_bits(self.tau_bits)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n];
        for &m in &self.members {
            mask[m] = true;
        }
        mask
    }
}

/// Saliency of one pixel on the current piece: `kappa * z + rho`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelLine {
    pub kappa: f64,
    pub rho: f64,
}

pub fn pixel_lines(map: &ParametricTensor) -> Vec<PixelLine> {
    map.beta()
        .values()
        .iter()
        .zip(map.gamma().values())
        .map(|(&rho, &kappa)| PixelLine { kappa, rho })
        .collect()
}

struct CamParts<'a> {
    weights: &'a [f64],
    units: usize,
    feature_shape: [usize; 3],
    factors: (usize, usize),
    input_hw: [usize; 2],
}

fn cam_parts(graph: &GraphSpec, class_index: usize) -> Result<CamParts<'_>> {
    let head = graph.cam_head();
    let LayerSpec::Dense(dense) = &graph.layers()[head.dense_layer_index] else {
        unreachable!("validated at graph construction")
    };
    if class_index >= dense.units {
        return Err(Error::ClassOutOfRange {
            index: class_index,
            classes: dense.units,
        });
    }
    let fs = graph.output_shape(head.feature_layer_index);
    let [in_h, in_w, _] = graph.input_shape();
    Ok(CamParts {
        weights: &dense.weights,
        units: dense.units,
        feature_shape: [fs[0], fs[1], fs[2]],
        factors: (in_h / fs[0], in_w / fs[1]),
        input_hw: [in_h, in_w],
    })
}

/// `sum_k w[k][c] * F_k`, replicated up to input resolution.
fn combine(parts: &CamParts<'_>, class_index: usize, features: &[f64]) -> Vec<f64> {
    let [h, w, c] = parts.feature_shape;
    let small: Vec<f64> = (0..h * w)
        .map(|p| {
            let mut acc = 0.0;
            for k in 0..c {
                acc += parts.weights[k * parts.units + class_index] * features[p * c + k];
            }
            acc
        })
        .collect();
    let (fy, fx) = parts.factors;
    if (fy, fx) == (1, 1) {
        small
    } else {
        upsample_apply(&[h, w, 1], fy, fx, &small)
    }
}

/// CAM for `class_index` from the per-layer activations of a forward pass.
pub fn cam(graph: &GraphSpec, activations: &[Tensor], class_index: usize) -> Result<SaliencyMap> {
    let parts = cam_parts(graph, class_index)?;
    let features = activations
        .get(graph.cam_head().feature_layer_index)
        .ok_or_else(|| Error::ShapeMismatch("activation list shorter than the graph".into()))?;
    let values = combine(&parts, class_index, features.values());
    Ok(SaliencyMap {
        values: Tensor::new(parts.input_hw.to_vec(), values)?,
        target_class: class_index,
    })
}

/// CAM as an affine path in z: `beta` holds the per-pixel intercepts and `gamma` the slopes.
pub fn cam_parametric(
    graph: &GraphSpec,
    activations: &[ParametricTensor],
    class_index: usize,
) -> Result<ParametricTensor> {
    let parts = cam_parts(graph, class_index)?;
    let features = activations
        .get(graph.cam_head().feature_layer_index)
        .ok_or_else(|| Error::ShapeMismatch("activation list shorter than the graph".into()))?;
    let beta = combine(&parts, class_index, features.beta().values());
    let gamma = combine(&parts, class_index, features.gamma().values());
    ParametricTensor::new(
        Tensor::new(parts.input_hw.to_vec(), beta)?,
        Tensor::new(parts.input_hw.to_vec(), gamma)?,
    )
}

pub fn threshold_region(map: &SaliencyMap, tau: f64) -> SalientRegion {
    let members = map
        .values
        .values()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v >= tau)
        .map(|(i, _)| i)
        .collect();
    SalientRegion {
        members,
        tau_bits: tau.to_bits(),
        n: map.values.len(),
    }
}

/// Part of `piece` on which thresholding the lines at `tau` reproduces `observed`.
///
/// Members need `kappa z + rho >= tau`; non-members get the closed complement
/// `kappa z + rho <= tau`. A flat line (`kappa == 0`) either holds on the whole
/// piece or nowhere, and a flat non-member needs `rho < tau` strictly since it
/// would otherwise be selected everywhere.
pub fn region_match_intervals(
    lines: &[PixelLine],
    piece: Interval,
    tau: f64,
    observed: &SalientRegion,
) -> IntervalUnion {
    let mask = observed.mask();
    region_match_masked(lines, piece, tau, &mask)
}

pub(crate) fn region_match_masked(lines: &[PixelLine], piece: Interval, tau: f64, mask: &[bool]) -> IntervalUnion {
    debug_assert_eq!(lines.len(), mask.len());
    let (mut lo, mut hi) = (piece.lo(), piece.hi());
    for (line, &member) in lines.iter().zip(mask) {
        if lo > hi {
            break;
        }
        let PixelLine { kappa, rho } = *line;
        if kappa == 0.0 {
            let holds = if member { rho >= tau } else { rho < tau };
            if !holds {
                return IntervalUnion::empty();
            }
            continue;
        }
        let crossing = (tau - rho) / kappa;
        // member: kappa z >= tau - rho; non-member flips the direction
        if (kappa > 0.0) == member {
            lo = lo.max(crossing);
        } else {
            hi = hi.min(crossing);
        }
    }
    union_normalize(vec![Interval::new(lo, hi)])
}
