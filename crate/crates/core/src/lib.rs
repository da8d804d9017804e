//! Selective p-values for salient regions of CAM saliency maps computed by
//! piecewise-linear convolutional networks.
//!
//! ```no_run
//! use sisal_core::{infer, modelio, TestConfig};
//!
//! let graph = modelio::load_model("fixtures/toy_model.json")?;
//! let x = modelio::load_image("fixtures/toy_signal_1_query.txt")?;
//! let xref = modelio::load_image("fixtures/toy_signal_1_reference.txt")?;
//! let result = infer(&graph, &x, &xref, &TestConfig::mean_null(1.0, 0.0))?;
//! println!("selective p = {:.4}", result.p_selective);
//! # Ok::<(), sisal_core::Error>(())
//! ```

pub mod error;
pub mod modelio;
pub mod pwlnet;
pub mod saliency;
pub mod selectinf;
pub mod tensor;

pub use error::{Error, Result};
pub use pwlnet::{forward, forward_parametric, GraphSpec, LayerSpec, PieceContext};
pub use saliency::{cam, cam_parametric, threshold_region, SaliencyMap, SalientRegion};
pub use selectinf::{infer, ClassMode, InferenceResult, TestConfig, TestKind, TruncationRegion};
pub use tensor::{intersect, union_normalize, Interval, IntervalUnion, ParametricTensor, Tensor};
