//! Sequential piecewise-linear networks.
//!
//! Every layer is affine on each of its linear pieces. [`forward`] evaluates a
//! graph on a concrete input. [`forward_parametric`] pushes an affine path
//! `beta + gamma * z` through the graph: at a probe value of `z` each layer's
//! active piece is read off the evaluated input, the path is mapped through
//! that piece, and the piece's polytope is projected onto the z-line. The
//! intersection of those projections is the range of `z` over which the whole
//! graph stays on the same piece, so the output path is exact there.
//!
//! Tensors are laid out height-major, then width, then channel.

use crate::error::{Error, Result};
use crate::tensor::{Interval, ParametricTensor, Tensor};

/// Coefficients of z below this magnitude are treated as z-independent.
pub const COEFF_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Same,
    Valid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub filters: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub padding: Padding,
    /// `[kernel_h][kernel_w][in_ch][out_ch]`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub units: usize,
    /// `[in][out]`, row-major. The input dimension is implied by the previous layer.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Conv2d(Conv2d),
    Relu,
    MaxPool2d { pool_size: usize, stride: usize },
    GlobalAvgPool,
    Dense(Dense),
    Upsample2d { factor: usize },
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d(_) => "conv2d",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool2d { .. } => "maxpool2d",
            LayerSpec::GlobalAvgPool => "global_avg_pool",
            LayerSpec::Dense(_) => "dense",
            LayerSpec::Upsample2d { .. } => "upsample2d",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CamHead {
    pub feature_layer_index: usize,
    pub dense_layer_index: usize,
    pub upsample_to_input: bool,
}

/// A validated sequential graph. Output shapes are computed once at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSpec {
    input_shape: [usize; 3],
    layers: Vec<LayerSpec>,
    cam_head: CamHead,
    shapes: Vec<Vec<usize>>,
}

fn spatial(shape: &[usize], layer: usize, kind: &str) -> Result<(usize, usize, usize)> {
    match *shape {
        [h, w, c] => Ok((h, w, c)),
        _ => Err(Error::ShapeMismatch(format!(
            "layer {layer} ({kind}) needs an (H, W, C) input, got {shape:?}"
        ))),
    }
}

fn conv_geometry(conv: &Conv2d, h: usize, w: usize) -> Option<(usize, usize, usize, usize)> {
    let (k, s) = (conv.kernel_size, conv.stride);
    match conv.padding {
        Padding::Valid => {
            if h < k || w < k {
                return None;
            }
            Some(((h - k) / s + 1, (w - k) / s + 1, 0, 0))
        }
        Padding::Same => {
            let oh = h.div_ceil(s);
            let ow = w.div_ceil(s);
            let pad_h = ((oh - 1) * s + k).saturating_sub(h);
            let pad_w = ((ow - 1) * s + k).saturating_sub(w);
            Some((oh, ow, pad_h / 2, pad_w / 2))
        }
    }
}

fn layer_output_shape(layer: &LayerSpec, index: usize, input: &[usize]) -> Result<Vec<usize>> {
    let bad = |msg: String| Err(Error::ShapeMismatch(format!("layer {index} ({}): {msg}", layer.kind())));
    match layer {
        LayerSpec::Conv2d(conv) => {
            let (h, w, c) = spatial(input, index, layer.kind())?;
            if conv.filters == 0 || conv.kernel_size == 0 || conv.stride == 0 {
                return bad("filters, kernel size and stride must be positive".into());
            }
            let expected = conv.kernel_size * conv.kernel_size * c * conv.filters;
            if conv.weights.len() != expected {
                return bad(format!("expected {expected} weights, got {}", conv.weights.len()));
            }
            if conv.bias.len() != conv.filters {
                return bad(format!("expected {} biases, got {}", conv.filters, conv.bias.len()));
            }
            match conv_geometry(conv, h, w) {
                Some((oh, ow, _, _)) => Ok(vec![oh, ow, conv.filters]),
                None => bad(format!("kernel {} larger than input {h}x{w}", conv.kernel_size)),
            }
        }
        LayerSpec::Relu => Ok(input.to_vec()),
        LayerSpec::MaxPool2d { pool_size, stride } => {
            let (h, w, c) = spatial(input, index, layer.kind())?;
            if *pool_size == 0 || *stride == 0 {
                return bad("pool size and stride must be positive".into());
            }
            if h < *pool_size || w < *pool_size {
                return bad(format!("pool {pool_size} larger than input {h}x{w}"));
            }
            Ok(vec![(h - pool_size) / stride + 1, (w - pool_size) / stride + 1, c])
        }
        LayerSpec::GlobalAvgPool => {
            let (_, _, c) = spatial(input, index, layer.kind())?;
            Ok(vec![c])
        }
        LayerSpec::Dense(dense) => {
            let inputs: usize = input.iter().product();
            if dense.units == 0 {
                return bad("unit count must be positive".into());
            }
            if dense.weights.len() != inputs * dense.units {
                return bad(format!(
                    "expected {} weights ({inputs} x {}), got {}",
                    inputs * dense.units,
                    dense.units,
                    dense.weights.len()
                ));
            }
            if dense.bias.len() != dense.units {
                return bad(format!("expected {} biases, got {}", dense.units, dense.bias.len()));
            }
            Ok(vec![dense.units])
        }
        LayerSpec::Upsample2d { factor } => {
            let (h, w, c) = spatial(input, index, layer.kind())?;
            if *factor == 0 {
                return bad("factor must be positive".into());
            }
            Ok(vec![h * factor, w * factor, c])
        }
    }
}

impl GraphSpec {
    pub fn new(input_shape: [usize; 3], layers: Vec<LayerSpec>, cam_head: CamHead) -> Result<Self> {
        if input_shape.contains(&0) {
            return Err(Error::ShapeMismatch(format!("input shape {input_shape:?} has a zero dimension")));
        }
        if layers.is_empty() {
            return Err(Error::ShapeMismatch("graph has no layers".into()));
        }
        let mut shapes = Vec::with_capacity(layers.len());
        let mut current = input_shape.to_vec();
        for (i, layer) in layers.iter().enumerate() {
            if let LayerSpec::Conv2d(Conv2d { weights, bias, .. }) | LayerSpec::Dense(Dense { weights, bias, .. }) = layer {
                if weights.iter().chain(bias).any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("layer {i} has a non-finite parameter")));
                }
            }
            current = layer_output_shape(layer, i, &current)?;
            shapes.push(current.clone());
        }
        let graph = Self {
            input_shape,
            layers,
            cam_head,
            shapes,
        };
        graph.validate_cam_head()?;
        Ok(graph)
    }

    fn validate_cam_head(&self) -> Result<()> {
        let head = self.cam_head;
        let n = self.layers.len();
        if head.feature_layer_index >= n || head.dense_layer_index >= n {
            return Err(Error::ShapeMismatch(format!("cam head indices {head:?} out of range for {n} layers")));
        }
        let [in_h, in_w, _] = self.input_shape;
        let (h, w, c) = match *self.shapes[head.feature_layer_index] {
            [h, w, c] => (h, w, c),
            ref s => {
                return Err(Error::ShapeMismatch(format!("cam feature layer output {s:?} is not (H, W, C)")))
            }
        };
        let dense = match &self.layers[head.dense_layer_index] {
            LayerSpec::Dense(d) => d,
            other => {
                return Err(Error::ShapeMismatch(format!(
                    "cam dense layer index points at a {} layer",
                    other.kind()
                )))
            }
        };
        if dense.weights.len() != c * dense.units {
            return Err(Error::ShapeMismatch(format!(
                "cam dense layer input dimension {} != feature channels {c}",
                dense.weights.len() / dense.units
            )));
        }
        let logits = self.shapes.last().expect("non-empty");
        if logits.len() != 1 || logits[0] != dense.units {
            return Err(Error::ShapeMismatch(format!(
                "graph output {logits:?} must be a vector of {} class logits",
                dense.units
            )));
        }
        let fits = if head.upsample_to_input {
            in_h % h == 0 && in_w % w == 0
        } else {
            in_h == h && in_w == w
        };
        if !fits {
            return Err(Error::ShapeMismatch(format!(
                "cam feature map {h}x{w} cannot be mapped onto input {in_h}x{in_w}"
            )));
        }
        Ok(())
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn cam_head(&self) -> CamHead {
        self.cam_head
    }

    /// Output shape of layer `index`.
    pub fn output_shape(&self, index: usize) -> &[usize] {
        &self.shapes[index]
    }

    /// Pixel count `H * W` of the input.
    pub fn pixel_count(&self) -> usize {
        self.input_shape[0] * self.input_shape[1]
    }

    pub fn class_count(&self) -> usize {
        self.shapes.last().expect("non-empty")[0]
    }

    fn input_of(&self, index: usize) -> &[usize] {
        if index == 0 {
            &self.input_shape
        } else {
            &self.shapes[index - 1]
        }
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        if shape == self.input_shape {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "input shape {shape:?} != graph input {:?}",
                self.input_shape
            )))
        }
    }
}

// ---------------------------------------------------------------------------
// Affine layers. `with_bias = false` applies only the linear part, which is
// how the gamma half of a path is mapped.

fn conv_apply(conv: &Conv2d, in_shape: &[usize], x: &[f64], with_bias: bool) -> Vec<f64> {
    let (h, w, cin) = (in_shape[0], in_shape[1], in_shape[2]);
    let (oh, ow, pad_top, pad_left) = conv_geometry(conv, h, w).expect("validated");
    let (k, s, f) = (conv.kernel_size, conv.stride, conv.filters);
    let mut out = vec![0.0; oh * ow * f];
    for oy in 0..oh {
        for ox in 0..ow {
            for filter in 0..f {
                let mut acc = if with_bias { conv.bias[filter] } else { 0.0 };
                for ky in 0..k {
                    let iy = (oy * s + ky) as isize - pad_top as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = (ox * s + kx) as isize - pad_left as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let base = (iy as usize * w + ix as usize) * cin;
                        let wbase = (ky * k + kx) * cin;
                        for ci in 0..cin {
                            acc += conv.weights[(wbase + ci) * f + filter] * x[base + ci];
                        }
                    }
                }
                out[(oy * ow + ox) * f + filter] = acc;
            }
        }
    }
    out
}

fn dense_apply(dense: &Dense, x: &[f64], with_bias: bool) -> Vec<f64> {
    let units = dense.units;
    (0..units)
        .map(|u| {
            let mut acc = if with_bias { dense.bias[u] } else { 0.0 };
            for (i, xi) in x.iter().enumerate() {
                acc += dense.weights[i * units + u] * xi;
            }
            acc
        })
        .collect()
}

fn gap_apply(in_shape: &[usize], x: &[f64]) -> Vec<f64> {
    let (h, w, c) = (in_shape[0], in_shape[1], in_shape[2]);
    let count = (h * w) as f64;
    (0..c)
        .map(|ch| {
            let mut acc = 0.0;
            for p in 0..h * w {
                acc += x[p * c + ch];
            }
            acc / count
        })
        .collect()
}

pub(crate) fn upsample_apply(in_shape: &[usize], fy: usize, fx: usize, x: &[f64]) -> Vec<f64> {
    let (h, w, c) = (in_shape[0], in_shape[1], in_shape[2]);
    let (oh, ow) = (h * fy, w * fx);
    let mut out = Vec::with_capacity(oh * ow * c);
    for oy in 0..oh {
        for ox in 0..ow {
            let src = ((oy / fy) * w + ox / fx) * c;
            out.extend_from_slice(&x[src..src + c]);
        }
    }
    out
}

/// Maxpool windows as lists of flat input indices in row-major window order,
/// one list per output element.
fn pool_windows(in_shape: &[usize], pool: usize, stride: usize) -> impl Iterator<Item = Vec<usize>> + '_ {
    let (h, w, c) = (in_shape[0], in_shape[1], in_shape[2]);
    let oh = (h - pool) / stride + 1;
    let ow = (w - pool) / stride + 1;
    (0..oh * ow * c).map(move |o| {
        let ch = o % c;
        let ox = (o / c) % ow;
        let oy = o / (c * ow);
        let mut idx = Vec::with_capacity(pool * pool);
        for py in 0..pool {
            for px in 0..pool {
                idx.push(((oy * stride + py) * w + ox * stride + px) * c + ch);
            }
        }
        idx
    })
}

/// Which linear piece each nonlinear layer is on: for relu one flag per unit
/// (1 = active), for maxpool the winning position inside each window. Affine
/// layers contribute an empty entry.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PieceSignature(pub Vec<Vec<u32>>);

fn run_plain(graph: &GraphSpec, x: &Tensor, mut signature: Option<&mut PieceSignature>) -> Result<Vec<Tensor>> {
    graph.check_input(x.shape())?;
    let mut acts: Vec<Tensor> = Vec::with_capacity(graph.layers.len());
    for (i, layer) in graph.layers.iter().enumerate() {
        let in_shape = graph.input_of(i);
        let input = if i == 0 { x.values() } else { acts[i - 1].values() };
        let mut sig = Vec::new();
        let out = match layer {
            LayerSpec::Conv2d(conv) => conv_apply(conv, in_shape, input, true),
            LayerSpec::Dense(dense) => dense_apply(dense, input, true),
            LayerSpec::GlobalAvgPool => gap_apply(in_shape, input),
            LayerSpec::Upsample2d { factor } => upsample_apply(in_shape, *factor, *factor, input),
            LayerSpec::Relu => input
                .iter()
                .map(|&v| {
                    let active = v >= 0.0;
                    sig.push(active as u32);
                    if active {
                        v
                    } else {
                        0.0
                    }
                })
                .collect(),
            LayerSpec::MaxPool2d { pool_size, stride } => pool_windows(in_shape, *pool_size, *stride)
                .map(|window| {
                    let best = argmax_first(window.iter().map(|&j| input[j]));
                    sig.push(best as u32);
                    input[window[best]]
                })
                .collect(),
        };
        if let Some(s) = signature.as_deref_mut() {
            s.0.push(sig);
        }
        acts.push(Tensor::from_parts(graph.shapes[i].clone(), out));
    }
    Ok(acts)
}

/// Position of the first maximal value; ties resolve to the lowest index.
fn argmax_first(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (j, v) in values.enumerate() {
        if j == 0 || v > best_value {
            best = j;
            best_value = v;
        }
    }
    best
}

/// Per-layer activations of `graph` on `x`.
pub fn forward(graph: &GraphSpec, x: &Tensor) -> Result<Vec<Tensor>> {
    run_plain(graph, x, None)
}

/// Like [`forward`], also reporting the active piece of every nonlinear layer.
pub fn forward_with_signature(graph: &GraphSpec, x: &Tensor) -> Result<(Vec<Tensor>, PieceSignature)> {
    let mut sig = PieceSignature::default();
    let acts = run_plain(graph, x, Some(&mut sig))?;
    Ok((acts, sig))
}

/// The z-range on which every layer stays on the piece selected at the probe.
#[derive(Debug, Clone, PartialEq)]
pub struct PieceContext {
    pub interval: Interval,
    pub signature: PieceSignature,
}

/// Running intersection of half-lines `{z : c + d z >= 0}` that all hold at `probe`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct HalfLines {
    probe: f64,
    lo: f64,
    hi: f64,
}

impl HalfLines {
    pub(crate) fn new(probe: f64) -> Self {
        Self {
            probe,
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    /// Adds `c + d z >= 0`. Bounds are widened to keep the probe inside when
    /// rounding puts the computed crossing a hair on the wrong side of it.
    pub(crate) fn add(&mut self, c: f64, d: f64) -> Result<()> {
        if d.abs() < COEFF_EPS {
            let at_probe = c + d * self.probe;
            if at_probe < -1e-9 * (1.0 + c.abs()) {
                return Err(Error::Inconsistent(format!(
                    "z-independent constraint {c} + {d} z >= 0 violated at probe z = {}",
                    self.probe
                )));
            }
            return Ok(());
        }
        let crossing = -c / d;
        if d > 0.0 {
            self.lo = self.lo.max(crossing.min(self.probe));
        } else {
            self.hi = self.hi.min(crossing.max(self.probe));
        }
        Ok(())
    }

    pub(crate) fn interval(&self) -> Interval {
        Interval::new(self.lo, self.hi)
    }
}

/// Pushes the affine path `pt` through `graph`, choosing each layer's piece at `z`.
///
/// Returns one path per layer plus the z-interval over which all chosen
/// pieces stay active. Inside that interval, evaluating the returned paths
/// agrees with [`forward`] on `pt.eval_at(z)` up to floating-point
/// reassociation (exactly, when the arithmetic is exact).
pub fn forward_parametric(
    graph: &GraphSpec,
    pt: &ParametricTensor,
    z: f64,
) -> Result<(Vec<ParametricTensor>, PieceContext)> {
    if !z.is_finite() {
        return Err(Error::NonFinite(format!("probe z = {z}")));
    }
    graph.check_input(pt.shape())?;
    let mut bounds = HalfLines::new(z);
    let mut signature = PieceSignature::default();
    let mut acts: Vec<ParametricTensor> = Vec::with_capacity(graph.layers.len());
    for (i, layer) in graph.layers.iter().enumerate() {
        let in_shape = graph.input_of(i);
        let (beta, gamma) = if i == 0 {
            (pt.beta().values(), pt.gamma().values())
        } else {
            (acts[i - 1].beta().values(), acts[i - 1].gamma().values())
        };
        let mut sig = Vec::new();
        let (nb, ng) = match layer {
            LayerSpec::Conv2d(conv) => (
                conv_apply(conv, in_shape, beta, true),
                conv_apply(conv, in_shape, gamma, false),
            ),
            LayerSpec::Dense(dense) => (dense_apply(dense, beta, true), dense_apply(dense, gamma, false)),
            LayerSpec::GlobalAvgPool => (gap_apply(in_shape, beta), gap_apply(in_shape, gamma)),
            LayerSpec::Upsample2d { factor } => (
                upsample_apply(in_shape, *factor, *factor, beta),
                upsample_apply(in_shape, *factor, *factor, gamma),
            ),
            LayerSpec::Relu => {
                let mut nb = Vec::with_capacity(beta.len());
                let mut ng = Vec::with_capacity(beta.len());
                for (&b, &g) in beta.iter().zip(gamma) {
                    if b + g * z >= 0.0 {
                        bounds.add(b, g)?;
                        sig.push(1);
                        nb.push(b);
                        ng.push(g);
                    } else {
                        bounds.add(-b, -g)?;
                        sig.push(0);
                        nb.push(0.0);
                        ng.push(0.0);
                    }
                }
                (nb, ng)
            }
            LayerSpec::MaxPool2d { pool_size, stride } => {
                let mut nb = Vec::new();
                let mut ng = Vec::new();
                for window in pool_windows(in_shape, *pool_size, *stride) {
                    let best = argmax_first(window.iter().map(|&j| beta[j] + gamma[j] * z));
                    let k = window[best];
                    for &j in window.iter().filter(|&&j| j != k) {
                        bounds.add(beta[k] - beta[j], gamma[k] - gamma[j])?;
                    }
                    sig.push(best as u32);
                    nb.push(beta[k]);
                    ng.push(gamma[k]);
                }
                (nb, ng)
            }
        };
        signature.0.push(sig);
        acts.push(ParametricTensor::from_parts(graph.shapes[i].clone(), nb, ng));
    }
    Ok((
        acts,
        PieceContext {
            interval: bounds.interval(),
            signature,
        },
    ))
}

/// Predicted class at `z` (lowest index among ties) and the z-interval over
/// which it stays the argmax.
pub fn argmax_class(logits: &ParametricTensor, z: f64) -> Result<(usize, Interval)> {
    if logits.is_empty() {
        return Err(Error::ShapeMismatch("empty logits".into()));
    }
    let beta = logits.beta().values();
    let gamma = logits.gamma().values();
    let class = argmax_first(beta.iter().zip(gamma).map(|(&b, &g)| b + g * z));
    let mut bounds = HalfLines::new(z);
    for j in (0..beta.len()).filter(|&j| j != class) {
        bounds.add(beta[class] - beta[j], gamma[class] - gamma[j])?;
    }
    Ok((class, bounds.interval()))
}

/// Index of the largest value, lowest index among ties.
pub fn predicted_class(logits: &Tensor) -> usize {
    argmax_first(logits.values().iter().copied())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec_tensor(v: &[f64]) -> Tensor {
        Tensor::new(vec![v.len()], v.to_vec()).unwrap()
    }

    fn path(beta: &[f64], gamma: &[f64], shape: Vec<usize>) -> ParametricTensor {
        ParametricTensor::new(
            Tensor::new(shape.clone(), beta.to_vec()).unwrap(),
            Tensor::new(shape, gamma.to_vec()).unwrap(),
        )
        .unwrap()
    }

    /// 1x`w`x1 input, the given middle layers, then GAP + dense(1) so the graph validates.
    fn row_graph(w: usize, middle: Vec<LayerSpec>, channels: usize) -> GraphSpec {
        let mut layers = middle;
        let feature = layers.len() - 1;
        layers.push(LayerSpec::GlobalAvgPool);
        layers.push(LayerSpec::Dense(Dense {
            units: 1,
            weights: vec![1.0; channels],
            bias: vec![0.0],
        }));
        let dense = layers.len() - 1;
        GraphSpec::new(
            [1, w, 1],
            layers,
            CamHead {
                feature_layer_index: feature,
                dense_layer_index: dense,
                upsample_to_input: true,
            },
        )
        .unwrap()
    }

    #[test]
    fn identity_conv() {
        let conv = LayerSpec::Conv2d(Conv2d {
            filters: 1,
            kernel_size: 1,
            stride: 1,
            padding: Padding::Same,
            weights: vec![1.0],
            bias: vec![0.0],
        });
        let g = row_graph(3, vec![conv], 1);
        let x = Tensor::new(vec![1, 3, 1], vec![0.5, -2.0, 7.25]).unwrap();
        let acts = forward(&g, &x).unwrap();
        assert_eq!(acts[0].values(), x.values());
    }

    #[test]
    fn relu_and_gap_values() {
        let g = row_graph(2, vec![LayerSpec::Relu], 1);
        let x = Tensor::new(vec![1, 2, 1], vec![-1.0, 2.0]).unwrap();
        let acts = forward(&g, &x).unwrap();
        assert_eq!(acts[0].values(), &[0.0, 2.0]);

        let g = GraphSpec::new(
            [2, 2, 1],
            vec![
                LayerSpec::Relu,
                LayerSpec::GlobalAvgPool,
                LayerSpec::Dense(Dense { units: 1, weights: vec![1.0], bias: vec![0.0] }),
            ],
            CamHead { feature_layer_index: 0, dense_layer_index: 2, upsample_to_input: true },
        )
        .unwrap();
        let x = Tensor::new(vec![2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(forward(&g, &x).unwrap()[1].values(), &[2.5]);
    }

    #[test]
    fn conv_same_padding_and_stride() {
        // 3x3 box filter over a 3x3 input of ones, same padding: corner sees 4, edge 6, centre 9.
        let conv = Conv2d {
            filters: 1,
            kernel_size: 3,
            stride: 1,
            padding: Padding::Same,
            weights: vec![1.0; 9],
            bias: vec![0.0],
        };
        let out = conv_apply(&conv, &[3, 3, 1], &[1.0; 9], true);
        assert_eq!(out, vec![4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
        let strided = Conv2d { stride: 2, ..conv.clone() };
        assert_eq!(conv_apply(&strided, &[3, 3, 1], &[1.0; 9], true), vec![4.0, 4.0, 4.0, 4.0]);
        let valid = Conv2d { padding: Padding::Valid, ..conv };
        assert_eq!(conv_apply(&valid, &[3, 3, 1], &[1.0; 9], true), vec![9.0]);
    }

    #[test]
    fn maxpool_and_upsample() {
        let x = [1.0, 5.0, 3.0, 2.0];
        let windows: Vec<_> = pool_windows(&[2, 2, 1], 2, 2).collect();
        assert_eq!(windows, vec![vec![0, 1, 2, 3]]);
        assert_eq!(argmax_first(x.iter().copied()), 1);
        assert_eq!(argmax_first([2.0, 2.0].into_iter()), 0);
        let up = upsample_apply(&[1, 2, 1], 2, 2, &[1.0, 2.0]);
        assert_eq!(up, vec![1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0]);
    }

    #[test]
    fn relu_parametric_example() {
        let g = row_graph(2, vec![LayerSpec::Relu], 1);
        let pt = path(&[-1.0, 2.0], &[1.0, 0.0], vec![1, 2, 1]);
        let (acts, ctx) = forward_parametric(&g, &pt, 0.0).unwrap();
        assert_eq!(acts[0].beta().values(), &[0.0, 2.0]);
        assert_eq!(acts[0].gamma().values(), &[0.0, 0.0]);
        assert_eq!(ctx.interval, Interval::at_most(1.0));
    }

    #[test]
    fn two_unit_maxpool_window() {
        // square pools cannot form a 1x2 window, so pad a 2x2 window with two units far below
        let g = GraphSpec::new(
            [2, 2, 1],
            vec![
                LayerSpec::MaxPool2d { pool_size: 2, stride: 2 },
                LayerSpec::GlobalAvgPool,
                LayerSpec::Dense(Dense { units: 1, weights: vec![1.0], bias: vec![0.0] }),
            ],
            CamHead { feature_layer_index: 0, dense_layer_index: 2, upsample_to_input: true },
        )
        .unwrap();
        let pt = path(&[1.0, 0.0, -5.0, -5.0], &[0.0, 1.0, 0.0, 0.0], vec![2, 2, 1]);
        let (acts, ctx) = forward_parametric(&g, &pt, 0.0).unwrap();
        assert_eq!(acts[0].beta().values(), &[1.0]);
        assert_eq!(acts[0].gamma().values(), &[0.0]);
        // the -5 units stay below 1 for all z, so only the z <= 1 constraint binds
        assert_eq!(ctx.interval, Interval::at_most(1.0));
        assert_eq!(ctx.signature.0[0], vec![0]);
    }

    #[test]
    fn scale_then_relu_composition() {
        let g = GraphSpec::new(
            [1, 1, 1],
            vec![
                LayerSpec::Conv2d(Conv2d {
                    filters: 1,
                    kernel_size: 1,
                    stride: 1,
                    padding: Padding::Valid,
                    weights: vec![2.0],
                    bias: vec![0.0],
                }),
                LayerSpec::Relu,
                LayerSpec::GlobalAvgPool,
                LayerSpec::Dense(Dense { units: 1, weights: vec![1.0], bias: vec![0.0] }),
            ],
            CamHead { feature_layer_index: 1, dense_layer_index: 3, upsample_to_input: true },
        )
        .unwrap();
        let pt = path(&[-2.0], &[1.0], vec![1, 1, 1]);
        let (acts, ctx) = forward_parametric(&g, &pt, 0.0).unwrap();
        assert_eq!(acts[0].beta().values(), &[-4.0]);
        assert_eq!(acts[0].gamma().values(), &[2.0]);
        assert_eq!(ctx.signature.0[1], vec![0]);
        assert_eq!(ctx.interval, Interval::at_most(2.0));
    }

    #[test]
    fn argmax_examples() {
        let (c, iv) = argmax_class(&path(&[2.0, 1.0], &[0.0, 1.0], vec![2]), 0.0).unwrap();
        assert_eq!((c, iv), (0, Interval::at_most(1.0)));
        let (c, iv) = argmax_class(&path(&[0.0, 0.0], &[1.0, -1.0], vec![2]), 1.0).unwrap();
        assert_eq!((c, iv), (0, Interval::at_least(0.0)));
        let (c, iv) = argmax_class(&ParametricTensor::constant(vec_tensor(&[0.3, 0.9, 0.1])), 4.0).unwrap();
        assert_eq!((c, iv), (1, Interval::REAL_LINE));
        let empty = ParametricTensor::from_parts(vec![0], vec![], vec![]);
        assert!(argmax_class(&empty, 0.0).is_err());
    }

    #[test]
    fn rejects_bad_graphs_and_inputs() {
        let bad_dense = GraphSpec::new(
            [2, 2, 1],
            vec![
                LayerSpec::GlobalAvgPool,
                LayerSpec::Dense(Dense { units: 2, weights: vec![1.0; 3], bias: vec![0.0; 2] }),
            ],
            CamHead { feature_layer_index: 0, dense_layer_index: 1, upsample_to_input: true },
        );
        assert!(matches!(bad_dense, Err(Error::ShapeMismatch(_))));
        assert!(GraphSpec::new([2, 2, 1], vec![], CamHead { feature_layer_index: 0, dense_layer_index: 0, upsample_to_input: true }).is_err());

        let g = row_graph(2, vec![LayerSpec::Relu], 1);
        let wrong = Tensor::zeros(vec![1, 3, 1]);
        assert!(matches!(forward(&g, &wrong), Err(Error::ShapeMismatch(_))));
        let pt = ParametricTensor::constant(Tensor::zeros(vec![1, 2, 1]));
        assert!(matches!(forward_parametric(&g, &pt, f64::INFINITY), Err(Error::NonFinite(_))));
    }

    #[test]
    fn half_lines_keep_probe_inside() {
        let mut h = HalfLines::new(0.0);
        h.add(1.0, 1.0).unwrap(); // z >= -1
        h.add(2.0, -1.0).unwrap(); // z <= 2
        h.add(3.0, 0.0).unwrap(); // always
        assert_eq!(h.interval(), Interval::new(-1.0, 2.0));
        assert!(h.add(-1.0, 1e-13).is_err());
    }
}
