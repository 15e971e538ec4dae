//! JSON model files.
//!
//! ```json
//! { "input_shape": [2],
//!   "input_range": [0.0, 1.0],          // optional
//!   "layers": [
//!     { "kind": "dense", "weights": [[..], ..], "bias": [..], "activation": "sigmoid" },
//!     { "kind": "conv2d", "weights": [kh][kw][cin][cout], "bias": [cout],
//!       "activation": "tanh", "stride": [1, 1], "padding": "valid",
//!       "kernel_shape": [kh, kw, cin, cout] } ] }
//! ```
//!
//! Dense weights are `[out][in]`. Convolutions are channels-last and flatten
//! as `(row, col, channel)`.

use std::path::Path;

use ndarray::{Array1, Array2, Array4};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{LayerOp, Network, NetworkBuilder, Padding};
use crate::activation::Activation;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub input_shape: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_range: Option<[f64; 2]>,
    pub layers: Vec<LayerFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerFile {
    pub kind: String,
    pub weights: Value,
    pub bias: Vec<f64>,
    pub activation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub padding: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_shape: Option<[usize; 4]>,
}

/// Reference inputs and the logits they should produce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenVectors {
    pub inputs: Vec<Vec<f64>>,
    pub logits: Vec<Vec<f64>>,
}

impl GoldenVectors {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Flattens a nested JSON array of numbers, checking it has exactly `shape`.
fn flatten(value: &Value, shape: &[usize], layer: usize, out: &mut Vec<f64>) -> Result<()> {
    match (value, shape) {
        (Value::Number(n), []) => {
            out.push(n.as_f64().ok_or_else(|| Error::Parse(format!("bad number in layer {layer}")))?);
            Ok(())
        }
        (Value::Array(items), [len, rest @ ..]) => {
            if items.len() != *len {
                return Err(Error::ShapeMismatch {
                    layer,
                    detail: format!("expected {len} entries, found {}", items.len()),
                });
            }
            items.iter().try_for_each(|v| flatten(v, rest, layer, out))
        }
        _ => Err(Error::ShapeMismatch {
            layer,
            detail: "weights nesting does not match the expected shape".into(),
        }),
    }
}

fn dense_dims(value: &Value, layer: usize) -> Result<(usize, usize)> {
    let rows = value
        .as_array()
        .ok_or_else(|| Error::Parse(format!("layer {layer}: dense weights must be an array")))?;
    let cols = rows.first().and_then(Value::as_array).map_or(0, Vec::len);
    Ok((rows.len(), cols))
}

impl ModelFile {
    pub fn into_network(self) -> Result<Network> {
        let range = self.input_range.map(|[lo, hi]| (lo, hi));
        let mut builder = NetworkBuilder::new(self.input_shape).input_range(range);
        for (index, layer) in self.layers.into_iter().enumerate() {
            let act: Activation = layer.activation.parse()?;
            let bias = Array1::from(layer.bias);
            builder = match layer.kind.as_str() {
                "dense" => {
                    let (rows, cols) = dense_dims(&layer.weights, index)?;
                    let mut flat = Vec::with_capacity(rows * cols);
                    flatten(&layer.weights, &[rows, cols], index, &mut flat)?;
                    let w = Array2::from_shape_vec((rows, cols), flat)
                        .map_err(|e| Error::Parse(e.to_string()))?;
                    builder.dense(w, bias, act)?
                }
                "conv2d" => {
                    let shape = layer.kernel_shape.ok_or_else(|| {
                        Error::Parse(format!("layer {index}: conv2d requires kernel_shape"))
                    })?;
                    let mut flat = Vec::with_capacity(shape.iter().product());
                    flatten(&layer.weights, &shape, index, &mut flat)?;
                    let kernel = Array4::from_shape_vec((shape[0], shape[1], shape[2], shape[3]), flat)
                        .map_err(|e| Error::Parse(e.to_string()))?;
                    let padding = match layer.padding.as_deref().unwrap_or("valid") {
                        "valid" => Padding::Valid,
                        "same" => Padding::Same,
                        other => {
                            return Err(Error::Parse(format!("layer {index}: unknown padding `{other}`")))
                        }
                    };
                    builder.conv2d(kernel, bias, layer.stride.unwrap_or([1, 1]), padding, act)?
                }
                other => return Err(Error::Parse(format!("layer {index}: unknown kind `{other}`"))),
            };
        }
        builder.build()
    }

    pub fn from_network(net: &Network) -> Self {
        let layers = net
            .layers()
            .iter()
            .map(|layer| match layer.op() {
                LayerOp::Dense(a) => LayerFile {
                    kind: "dense".into(),
                    weights: Value::from(
                        a.weights.rows().into_iter().map(|r| r.to_vec()).collect::<Vec<_>>(),
                    ),
                    bias: a.bias.to_vec(),
                    activation: layer.activation().name().into(),
                    stride: None,
                    padding: None,
                    kernel_shape: None,
                },
                LayerOp::Conv2d(c) => {
                    let (kh, kw, ci, co) = c.kernel.dim();
                    let nested: Vec<Vec<Vec<Vec<f64>>>> = (0..kh)
                        .map(|i| {
                            (0..kw)
                                .map(|j| {
                                    (0..ci)
                                        .map(|k| (0..co).map(|o| c.kernel[[i, j, k, o]]).collect())
                                        .collect()
                                })
                                .collect()
                        })
                        .collect();
                    LayerFile {
                        kind: "conv2d".into(),
                        weights: Value::from(nested.into_iter().map(Value::from).collect::<Vec<_>>()),
                        bias: c.bias.to_vec(),
                        activation: layer.activation().name().into(),
                        stride: Some(c.stride),
                        padding: Some(
                            match c.padding {
                                Padding::Valid => "valid",
                                Padding::Same => "same",
                            }
                            .into(),
                        ),
                        kernel_shape: Some([kh, kw, ci, co]),
                    }
                }
            })
            .collect();
        ModelFile {
            input_shape: net.input_shape().to_vec(),
            input_range: net.input_range().map(|(lo, hi)| [lo, hi]),
            layers,
        }
    }
}

impl Network {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        file.into_network()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&ModelFile::from_network(self)).expect("model serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }
}
