//! Model builders: the representative CAM architecture with random weights,
//! and random small graphs for property tests.

use rand::Rng;
use rand_distr::StandardNormal;
use sisal_core::pwlnet::{CamHead, Conv2d, Dense, Padding};
use sisal_core::{GraphSpec, LayerSpec, ParametricTensor, Tensor};

/// conv(4, 3x3, same) -> relu -> maxpool 2 -> conv(4, 3x3, same) -> relu ->
/// global average pool -> dense(2), with the CAM read off the second relu and
/// upsampled to the input. `side` must be even.
pub fn representative_model(side: usize, w: RepresentativeWeights) -> sisal_core::Result<GraphSpec> {
    let conv = |weights, bias| {
        LayerSpec::Conv2d(Conv2d {
            filters: 4,
            kernel_size: 3,
            stride: 1,
            padding: Padding::Same,
            weights,
            bias,
        })
    };
    GraphSpec::new(
        [side, side, 1],
        vec![
            conv(w.conv1, w.bias1),
            LayerSpec::Relu,
            LayerSpec::MaxPool2d { pool_size: 2, stride: 2 },
            conv(w.conv2, w.bias2),
            LayerSpec::Relu,
            LayerSpec::GlobalAvgPool,
            LayerSpec::Dense(Dense {
                units: 2,
                weights: w.dense,
                bias: w.dense_bias,
            }),
        ],
        CamHead {
            feature_layer_index: 4,
            dense_layer_index: 6,
            upsample_to_input: true,
        },
    )
}

/// Parameters of [`representative_model`] in file order.
#[derive(Debug, Clone)]
pub struct RepresentativeWeights {
    pub conv1: Vec<f64>,
    pub bias1: Vec<f64>,
    pub conv2: Vec<f64>,
    pub bias2: Vec<f64>,
    pub dense: Vec<f64>,
    pub dense_bias: Vec<f64>,
}

/// The representative architecture with random weights under a fixed sign
/// pattern: channels 0 and 1 respond to bright neighbourhoods, channels 2 and
/// 3 to dark ones, and class 0 weighs bright minus dark while class 1 weighs
/// the reverse. The CAM of either class then tracks local contrast, as a
/// trained blob detector's would. `cam_scale` sets the size of the dense
/// weights and so the magnitude of the CAM relative to the threshold.
pub fn random_representative(rng: &mut impl Rng, side: usize, cam_scale: f64) -> GraphSpec {
    let sign = |ch: usize| if ch < 2 { 1.0 } else { -1.0 };
    let mut magnitude = |mean: f64, sd: f64| (mean + sd * rng.sample::<f64, StandardNormal>(StandardNormal)).abs();
    // [kh][kw][in][out]
    // centre taps dominate so the CAM stays local
    let tap = |i: usize, per_tap: usize| if i / per_tap == 4 { 1.0 } else { 0.2 };
    let conv1: Vec<f64> = (0..9 * 4)
        .map(|i| sign(i % 4) * tap(i, 4) * magnitude(1.0, 0.3))
        .collect();
    let bias1: Vec<f64> = (0..4).map(|_| 0.1 * (magnitude(0.0, 1.0) - 0.8)).collect();
    let conv2: Vec<f64> = (0..9 * 4 * 4)
        .map(|i| {
            let (cin, cout) = ((i / 4) % 4, i % 4);
            if (cin < 2) == (cout < 2) {
                tap(i, 16) * magnitude(0.5, 0.15)
            } else {
                0.05 * (magnitude(0.0, 1.0) - 0.8)
            }
        })
        .collect();
    let bias2: Vec<f64> = (0..4).map(|_| 0.1 * (magnitude(0.0, 1.0) - 0.8)).collect();
    let dense: Vec<f64> = (0..4 * 2)
        .map(|i| {
            let (ch, class) = (i / 2, i % 2);
            let s = if class == 0 { sign(ch) } else { -sign(ch) };
            s * cam_scale * magnitude(1.0, 0.25)
        })
        .collect();
    let weights = RepresentativeWeights {
        conv1,
        bias1,
        conv2,
        bias2,
        dense,
        dense_bias: vec![0.0, 0.0],
    };
    representative_model(side, weights).expect("representative model is well formed")
}

/// Options for [`random_graph`].
#[derive(Debug, Clone, Copy)]
pub struct RandomGraphOptions {
    pub max_side: usize,
    pub max_channels: usize,
    pub max_hidden: usize,
    /// Weights on a 2^-4 grid, and global pooling only over power-of-two
    /// pixel counts, so every affine step is exact in binary64 for moderately
    /// sized inputs on a dyadic grid.
    pub dyadic: bool,
}

impl Default for RandomGraphOptions {
    fn default() -> Self {
        Self {
            max_side: 6,
            max_channels: 3,
            max_hidden: 4,
            dyadic: false,
        }
    }
}

fn weights(rng: &mut impl Rng, len: usize, dyadic: bool) -> Vec<f64> {
    if dyadic {
        (0..len).map(|_| rng.random_range(-16i32..=16) as f64 / 16.0).collect()
    } else {
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }
}

fn random_hidden(rng: &mut impl Rng, shape: [usize; 3], opts: &RandomGraphOptions) -> Option<(LayerSpec, [usize; 3])> {
    let [h, w, c] = shape;
    match rng.random_range(0..10) {
        0..=3 => {
            let k = rng.random_range(1..=3usize);
            let stride = if rng.random_bool(0.8) { 1 } else { 2 };
            let padding = if rng.random_bool(0.7) { Padding::Same } else { Padding::Valid };
            let filters = rng.random_range(1..=opts.max_channels);
            let (oh, ow) = match padding {
                Padding::Same => (h.div_ceil(stride), w.div_ceil(stride)),
                Padding::Valid if h >= k && w >= k => ((h - k) / stride + 1, (w - k) / stride + 1),
                Padding::Valid => return None,
            };
            let layer = LayerSpec::Conv2d(Conv2d {
                filters,
                kernel_size: k,
                stride,
                padding,
                weights: weights(rng, k * k * c * filters, opts.dyadic),
                bias: weights(rng, filters, opts.dyadic),
            });
            Some((layer, [oh, ow, filters]))
        }
        4..=6 => Some((LayerSpec::Relu, shape)),
        7 | 8 => {
            let pool = rng.random_range(1..=2usize);
            let stride = rng.random_range(1..=2usize);
            if h < pool || w < pool {
                return None;
            }
            let out = [(h - pool) / stride + 1, (w - pool) / stride + 1, c];
            Some((LayerSpec::MaxPool2d { pool_size: pool, stride }, out))
        }
        _ => {
            if h * w > 16 {
                return None;
            }
            Some((LayerSpec::Upsample2d { factor: 2 }, [2 * h, 2 * w, c]))
        }
    }
}

/// A random sequential graph: 1 to `max_hidden` spatial layers, then global
/// average pooling and a dense classifier.
/// The CAM head reads the last spatial layer. Rejection-samples until the
/// graph validates.
pub fn random_graph(rng: &mut impl Rng, opts: &RandomGraphOptions) -> GraphSpec {
    loop {
        let h = rng.random_range(1..=opts.max_side);
        let w = rng.random_range(1..=opts.max_side);
        let c = rng.random_range(1..=opts.max_channels.min(2));
        let mut shape = [h, w, c];
        let mut layers = Vec::new();
        let hidden = rng.random_range(1..=opts.max_hidden);
        while layers.len() < hidden {
            if let Some((layer, next)) = random_hidden(rng, shape, opts) {
                layers.push(layer);
                shape = next;
            }
        }
        let feature = layers.len() - 1;
        let [fh, fw, fc] = shape;
        if opts.dyadic && !(fh * fw).is_power_of_two() {
            continue;
        }
        layers.push(LayerSpec::GlobalAvgPool);
        let classes = rng.random_range(1..=3usize);
        layers.push(LayerSpec::Dense(Dense {
            units: classes,
            weights: weights(rng, fc * classes, opts.dyadic),
            bias: weights(rng, classes, opts.dyadic),
        }));
        let dense = layers.len() - 1;
        let head = CamHead {
            feature_layer_index: feature,
            dense_layer_index: dense,
            upsample_to_input: true,
        };
        if let Ok(g) = GraphSpec::new([h, w, c], layers, head) {
            return g;
        }
    }
}

/// Random affine path matching the graph input. Dyadic paths have beta and
/// gamma on a 2^-6 grid.
pub fn random_path(rng: &mut impl Rng, graph: &GraphSpec, dyadic: bool) -> ParametricTensor {
    let shape = graph.input_shape().to_vec();
    let n: usize = shape.iter().product();
    let draw = |rng: &mut dyn FnMut() -> f64| (0..n).map(|_| rng()).collect::<Vec<f64>>();
    let (beta, gamma) = if dyadic {
        let mut f = || rng.random_range(-128i32..=128) as f64 / 64.0;
        let b = draw(&mut f);
        let g = draw(&mut f);
        (b, g)
    } else {
        let mut f = || rng.sample::<f64, _>(StandardNormal);
        let b = draw(&mut f);
        let g = draw(&mut f);
        (b, g)
    };
    ParametricTensor::new(
        Tensor::new(shape.clone(), beta).expect("finite"),
        Tensor::new(shape, gamma).expect("finite"),
    )
    .expect("same shapes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::trial_rng;

    #[test]
    fn random_graphs_validate_and_run() {
        let mut rng = trial_rng(3, 0);
        for dyadic in [false, true] {
            let opts = RandomGraphOptions {
                dyadic,
                ..Default::default()
            };
            for _ in 0..200 {
                let g = random_graph(&mut rng, &opts);
                let x = random_path(&mut rng, &g, dyadic).eval_at(0.5);
                let acts = sisal_core::forward(&g, &x).unwrap();
                assert_eq!(acts.len(), g.layers().len());
            }
        }
    }

    #[test]
    fn representative_shapes() {
        let g = random_representative(&mut trial_rng(1, 0), 8, 1.0);
        assert_eq!(g.output_shape(4), &[4, 4, 4]);
        assert_eq!(g.class_count(), 2);
        assert_eq!(g.pixel_count(), 64);
    }
}
