//! Model and image files.
//!
//! Models are JSON objects with sorted keys:
//!
//! ```text
//! {
//!   "cam_head": {"dense_layer_index": 6, "feature_layer_index": 4, "upsample_to_input": true},
//!   "format_version": 1,
//!   "input_shape": [8, 8, 1],
//!   "layers": [
//!     {"bias": [..], "filters": 4, "kernel_size": 3, "kind": "conv2d", "padding": "same", "stride": 1, "weights": [..]},
//!     {"kind": "relu"},
//!     {"kind": "maxpool2d", "pool_size": 2, "stride": 2},
//!     ...
//!   ]
//! }
//! ```
//!
//! Conv weights are flattened `[kernel_h][kernel_w][in_ch][out_ch]`, dense
//! weights `[in][out]`. Floats are written with 17 significant digits so they
//! parse back to the same binary64 value.
//!
//! Images are plain text: a `H W` line, then `H` lines of `W` numbers
//! separated by single spaces.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::{Map, Value};

use crate::pwlnet::{CamHead, Conv2d, Dense, GraphSpec, LayerSpec, Padding};
use crate::tensor::Tensor;

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unknown layer kind {kind:?} at layer {index}")]
    UnknownKind { index: usize, kind: String },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("unsupported format_version {0} (expected {FORMAT_VERSION})")]
    BadVersion(u64),
    #[error("image dimensions: {0}")]
    Dimension(String),
}

impl ModelError {
    /// Stable identifier for each failure class.
    pub fn code(&self) -> &'static str {
        match self {
            ModelError::Io { .. } => "io",
            ModelError::Parse(_) => "parse",
            ModelError::UnknownKind { .. } => "unknown_kind",
            ModelError::ShapeMismatch(_) => "shape_mismatch",
            ModelError::BadVersion(_) => "bad_version",
            ModelError::Dimension(_) => "dimension",
        }
    }
}

type Result<T> = std::result::Result<T, ModelError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ModelError + '_ {
    move |source| ModelError::Io {
        path: path.display().to_string(),
        source,
    }
}

// ---------------------------------------------------------------------------
// Reading

fn field<'a>(obj: &'a Map<String, Value>, key: &str, ctx: &str) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| ModelError::Parse(format!("{ctx}: missing field {key:?}")))
}

fn as_usize(v: &Value, what: &str) -> Result<usize> {
    v.as_u64()
        .and_then(|u| usize::try_from(u).ok())
        .ok_or_else(|| ModelError::Parse(format!("{what} must be a non-negative integer, got {v}")))
}

fn as_floats(v: &Value, what: &str) -> Result<Vec<f64>> {
    let arr = v
        .as_array()
        .ok_or_else(|| ModelError::Parse(format!("{what} must be an array of numbers")))?;
    arr.iter()
        .map(|x| {
            x.as_f64()
                .ok_or_else(|| ModelError::Parse(format!("{what} contains a non-number {x}")))
        })
        .collect()
}

fn parse_layer(index: usize, v: &Value) -> Result<LayerSpec> {
    let ctx = format!("layer {index}");
    let obj = v
        .as_object()
        .ok_or_else(|| ModelError::Parse(format!("{ctx} is not an object")))?;
    let kind = field(obj, "kind", &ctx)?
        .as_str()
        .ok_or_else(|| ModelError::Parse(format!("{ctx}: kind must be a string")))?;
    let int = |key: &str| as_usize(field(obj, key, &ctx)?, &format!("{ctx}.{key}"));
    let floats = |key: &str| as_floats(field(obj, key, &ctx)?, &format!("{ctx}.{key}"));
    Ok(match kind {
        "conv2d" => {
            let padding = match field(obj, "padding", &ctx)?.as_str() {
                Some("same") => Padding::Same,
                Some("valid") => Padding::Valid,
                _ => return Err(ModelError::Parse(format!("{ctx}: padding must be \"same\" or \"valid\""))),
            };
            LayerSpec::Conv2d(Conv2d {
                filters: int("filters")?,
                kernel_size: int("kernel_size")?,
                stride: int("stride")?,
                padding,
                weights: floats("weights")?,
                bias: floats("bias")?,
            })
        }
        "relu" => LayerSpec::Relu,
        "maxpool2d" => LayerSpec::MaxPool2d {
            pool_size: int("pool_size")?,
            stride: int("stride")?,
        },
        "global_avg_pool" => LayerSpec::GlobalAvgPool,
        "dense" => LayerSpec::Dense(Dense {
            units: int("units")?,
            weights: floats("weights")?,
            bias: floats("bias")?,
        }),
        "upsample2d" => LayerSpec::Upsample2d { factor: int("factor")? },
        other => {
            return Err(ModelError::UnknownKind {
                index,
                kind: other.to_string(),
            })
        }
    })
}

/// Parses and validates a model from JSON text.
pub fn parse_model(text: &str) -> Result<GraphSpec> {
    let root: Value = serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
    let obj = root
        .as_object()
        .ok_or_else(|| ModelError::Parse("model file must hold a JSON object".into()))?;
    let version = field(obj, "format_version", "model")?
        .as_u64()
        .ok_or_else(|| ModelError::Parse("format_version must be an integer".into()))?;
    if version != FORMAT_VERSION {
        return Err(ModelError::BadVersion(version));
    }
    let shape_v = field(obj, "input_shape", "model")?
        .as_array()
        .ok_or_else(|| ModelError::Parse("input_shape must be an array".into()))?;
    if shape_v.len() != 3 {
        return Err(ModelError::ShapeMismatch(format!(
            "input_shape must have 3 entries (H, W, C), got {}",
            shape_v.len()
        )));
    }
    let mut input_shape = [0usize; 3];
    for (slot, v) in input_shape.iter_mut().zip(shape_v) {
        *slot = as_usize(v, "input_shape entry")?;
    }
    let layers = field(obj, "layers", "model")?
        .as_array()
        .ok_or_else(|| ModelError::Parse("layers must be an array".into()))?
        .iter()
        .enumerate()
        .map(|(i, v)| parse_layer(i, v))
        .collect::<Result<Vec<_>>>()?;
    let head = field(obj, "cam_head", "model")?
        .as_object()
        .ok_or_else(|| ModelError::Parse("cam_head must be an object".into()))?;
    let cam_head = CamHead {
        feature_layer_index: as_usize(field(head, "feature_layer_index", "cam_head")?, "feature_layer_index")?,
        dense_layer_index: as_usize(field(head, "dense_layer_index", "cam_head")?, "dense_layer_index")?,
        upsample_to_input: field(head, "upsample_to_input", "cam_head")?
            .as_bool()
            .ok_or_else(|| ModelError::Parse("upsample_to_input must be a boolean".into()))?,
    };
    GraphSpec::new(input_shape, layers, cam_head).map_err(|e| ModelError::ShapeMismatch(e.to_string()))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<GraphSpec> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_model(&text)
}

// ---------------------------------------------------------------------------
// Writing

/// 17 significant digits, which round-trips every finite binary64.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_floats(out: &mut String, values: &[f64]) {
    out.push('[');
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(&format_float(*v));
    }
    out.push(']');
}

fn write_layer(out: &mut String, layer: &LayerSpec) {
    // keys in sorted order
    match layer {
        LayerSpec::Conv2d(c) => {
            out.push_str("{\"bias\": ");
            write_floats(out, &c.bias);
            let padding = match c.padding {
                Padding::Same => "same",
                Padding::Valid => "valid",
            };
            let _ = write!(
                out,
                ", \"filters\": {}, \"kernel_size\": {}, \"kind\": \"conv2d\", \"padding\": \"{padding}\", \"stride\": {}, \"weights\": ",
                c.filters, c.kernel_size, c.stride
            );
            write_floats(out, &c.weights);
            out.push('}');
        }
        LayerSpec::Dense(d) => {
            out.push_str("{\"bias\": ");
            write_floats(out, &d.bias);
            let _ = write!(out, ", \"kind\": \"dense\", \"units\": {}, \"weights\": ", d.units);
            write_floats(out, &d.weights);
            out.push('}');
        }
        LayerSpec::MaxPool2d { pool_size, stride } => {
            let _ = write!(
                out,
                "{{\"kind\": \"maxpool2d\", \"pool_size\": {pool_size}, \"stride\": {stride}}}"
            );
        }
        LayerSpec::Upsample2d { factor } => {
            let _ = write!(out, "{{\"factor\": {factor}, \"kind\": \"upsample2d\"}}");
        }
        LayerSpec::Relu | LayerSpec::GlobalAvgPool => {
            let _ = write!(out, "{{\"kind\": \"{}\"}}", layer.kind());
        }
    }
}

/// Canonical text of a model file.
pub fn model_to_string(graph: &GraphSpec) -> String {
    let head = graph.cam_head();
    let [h, w, c] = graph.input_shape();
    let mut out = String::new();
    let _ = writeln!(out, "{{");
    let _ = writeln!(
        out,
        "  \"cam_head\": {{\"dense_layer_index\": {}, \"feature_layer_index\": {}, \"upsample_to_input\": {}}},",
        head.dense_layer_index, head.feature_layer_index, head.upsample_to_input
    );
    let _ = writeln!(out, "  \"format_version\": {FORMAT_VERSION},");
    let _ = writeln!(out, "  \"input_shape\": [{h}, {w}, {c}],");
    out.push_str("  \"layers\": [\n");
    let n = graph.layers().len();
    for (i, layer) in graph.layers().iter().enumerate() {
        out.push_str("    ");
        write_layer(&mut out, layer);
        out.push_str(if i + 1 < n { ",\n" } else { "\n" });
    }
    out.push_str("  ]\n}\n");
    out
}

pub fn save_model(graph: &GraphSpec, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_to_string(graph)).map_err(io_err(path))
}

// ---------------------------------------------------------------------------
// Images

/// Parses the grid format into an `[H, W]` tensor.
pub fn parse_image(text: &str) -> Result<Tensor> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| ModelError::Parse("image file is empty".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| ModelError::Parse(format!("bad image header {header:?}")))?;
    let [h, w] = dims[..] else {
        return Err(ModelError::Parse(format!("image header must be \"H W\", got {header:?}")));
    };
    if h == 0 || w == 0 {
        return Err(ModelError::Dimension(format!("image header {h} x {w} has a zero dimension")));
    }
    let mut values = Vec::with_capacity(h * w);
    let mut rows = 0;
    for (r, line) in lines.enumerate() {
        rows += 1;
        if rows > h {
            continue;
        }
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<_>>()
            .ok_or_else(|| ModelError::Parse(format!("row {r}: expected finite numbers")))?;
        if row.len() != w {
            return Err(ModelError::Dimension(format!("row {r} has {} values, header says {w}", row.len())));
        }
        values.extend(row);
    }
    if rows != h {
        return Err(ModelError::Dimension(format!("image has {rows} rows, header says {h}")));
    }
    Tensor::new(vec![h, w], values).map_err(|e| ModelError::Dimension(e.to_string()))
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_image(&text)
}

/// Writes a tensor whose shape is `[H, W]` or `[H, W, 1]`.
pub fn image_to_string(t: &Tensor) -> Result<String> {
    let (h, w) = match *t.shape() {
        [h, w] | [h, w, 1] => (h, w),
        ref s => return Err(ModelError::Dimension(format!("cannot write shape {s:?} as an image"))),
    };
    let mut out = format!("{h} {w}\n");
    for row in t.values().chunks(w) {
        let cells: Vec<String> = row.iter().map(|v| format_float(*v)).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    Ok(out)
}

pub fn save_image(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, image_to_string(t)?).map_err(io_err(path))
}
