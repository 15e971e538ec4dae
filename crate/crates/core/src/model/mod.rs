//! Feed-forward networks: dense and convolutional layers with elementwise
//! activations, evaluated in `f64`.
//!
//! Layers are indexed from 0. Every layer except the last is a hidden layer
//! whose pre-activations the verifier bounds; the last layer produces logits
//! and always uses the identity activation.

mod conv;
mod format;

use std::sync::OnceLock;

use ndarray::{Array1, Array2, ArrayView1};

pub use conv::{Conv2d, Padding};
pub use format::{GoldenVectors, LayerFile, ModelFile};

use crate::activation::Activation;
use crate::error::{Error, Result};

/// Dense affine map `W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone)]
pub enum LayerOp {
    Dense(Affine),
    Conv2d(Conv2d),
}

#[derive(Debug)]
pub struct Layer {
    op: LayerOp,
    activation: Activation,
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    lowered: OnceLock<Affine>,
}

impl Clone for Layer {
    fn clone(&self) -> Self {
        Self {
            op: self.op.clone(),
            activation: self.activation,
            input_shape: self.input_shape.clone(),
            output_shape: self.output_shape.clone(),
            lowered: OnceLock::new(),
        }
    }
}

impl Layer {
    pub fn op(&self) -> &LayerOp {
        &self.op
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.output_shape
    }

    pub fn width(&self) -> usize {
        self.output_shape.iter().product()
    }

    pub fn input_width(&self) -> usize {
        self.input_shape.iter().product()
    }

    /// Dense form of the layer's affine part. Convolutions are lowered on
    /// first use and cached.
    pub fn affine(&self) -> &Affine {
        match &self.op {
            LayerOp::Dense(a) => a,
            LayerOp::Conv2d(c) => self.lowered.get_or_init(|| c.lower()),
        }
    }

    pub fn pre_activation(&self, input: ArrayView1<'_, f64>) -> Array1<f64> {
        match &self.op {
            LayerOp::Dense(a) => a.weights.dot(&input) + &a.bias,
            LayerOp::Conv2d(c) => c.apply(input),
        }
    }
}

/// Pre- and post-activation values of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerValues {
    pub pre: Array1<f64>,
    pub post: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub logits: Array1<f64>,
    pub trace: Vec<LayerValues>,
}

#[derive(Debug, Clone)]
pub struct Network {
    input_shape: Vec<usize>,
    input_range: Option<(f64, f64)>,
    layers: Vec<Layer>,
}

impl Network {
    /// Builds a network of dense layers from `(weights, bias, activation)`
    /// triples, validating shapes.
    pub fn dense(
        input_dim: usize,
        layers: Vec<(Array2<f64>, Array1<f64>, Activation)>,
    ) -> Result<Self> {
        let mut builder = NetworkBuilder::new(vec![input_dim]);
        for (w, b, act) in layers {
            builder = builder.dense(w, b, act)?;
        }
        builder.build()
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_dim(&self) -> usize {
        self.input_shape.iter().product()
    }

    /// Declared valid input range (e.g. `[0, 1]` for normalized pixels).
    pub fn input_range(&self) -> Option<(f64, f64)> {
        self.input_range
    }

    pub fn with_input_range(mut self, range: Option<(f64, f64)>) -> Self {
        self.input_range = range;
        self
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn num_hidden(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().map_or(0, Layer::width)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn check_neuron(&self, layer: usize, neuron: usize) -> Result<()> {
        if layer >= self.layers.len() || neuron >= self.layers[layer].width() {
            return Err(Error::OutOfRange { layer, neuron });
        }
        Ok(())
    }

    /// Evaluates layers `0..=last` and returns their values.
    fn run(&self, x: &[f64], last: usize) -> Vec<LayerValues> {
        let mut trace = Vec::with_capacity(last + 1);
        let mut current = Array1::from(x.to_vec());
        for layer in &self.layers[..=last] {
            let pre = layer.pre_activation(current.view());
            let act = layer.activation;
            let post = pre.mapv(|v| act.value(v));
            current = post.clone();
            trace.push(LayerValues { pre, post });
        }
        trace
    }

    pub fn forward(&self, x: &[f64]) -> Result<Forward> {
        self.check_input(x)?;
        let trace = self.run(x, self.layers.len() - 1);
        let logits = trace.last().expect("network has layers").post.clone();
        Ok(Forward { logits, trace })
    }

    pub fn logits(&self, x: &[f64]) -> Result<Array1<f64>> {
        Ok(self.forward(x)?.logits)
    }

    pub fn predicted_label(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(self.logits(x)?.view()))
    }

    /// Pre-activations of one layer at `x` (evaluates only up to that layer).
    pub fn layer_pre_activations(&self, layer: usize, x: &[f64]) -> Result<Array1<f64>> {
        self.check_input(x)?;
        if layer >= self.layers.len() {
            return Err(Error::OutOfRange { layer, neuron: 0 });
        }
        Ok(self.run(x, layer).pop().expect("non-empty").pre)
    }

    /// The pre-activation of neuron `(layer, neuron)` as a function of the
    /// network input.
    pub fn neuron_fn(&self, layer: usize, neuron: usize) -> Result<NeuronFn<'_>> {
        self.check_neuron(layer, neuron)?;
        Ok(NeuronFn {
            net: self,
            layer,
            neuron,
        })
    }

    /// Reverse-mode gradient of the pre-activation of `(layer, neuron)` with
    /// respect to the input, evaluated at `x`.
    pub fn neuron_gradient(&self, layer: usize, neuron: usize, x: &[f64]) -> Result<Array1<f64>> {
        self.check_neuron(layer, neuron)?;
        self.check_input(x)?;
        let trace = self.run(x, layer);
        let mut delta = Array1::zeros(self.layers[layer].width());
        delta[neuron] = 1.0;
        for j in (0..=layer).rev() {
            // delta is d(target)/d(pre_j); push through W_j
            let back = self.layers[j].affine().weights.t().dot(&delta);
            if j == 0 {
                return Ok(back);
            }
            let act = self.layers[j - 1].activation;
            delta = back * trace[j - 1].pre.mapv(|v| act.derivative(v));
        }
        unreachable!("loop returns at layer 0")
    }
}

/// Callable view of a single neuron's pre-activation.
#[derive(Debug, Clone, Copy)]
pub struct NeuronFn<'a> {
    net: &'a Network,
    layer: usize,
    neuron: usize,
}

impl NeuronFn<'_> {
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        Ok(self.net.layer_pre_activations(self.layer, x)?[self.neuron])
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Array1<f64>> {
        self.net.neuron_gradient(self.layer, self.neuron, x)
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Incremental, shape-checked network construction.
#[derive(Debug)]
pub struct NetworkBuilder {
    input_shape: Vec<usize>,
    input_range: Option<(f64, f64)>,
    current: Vec<usize>,
    layers: Vec<Layer>,
}

impl NetworkBuilder {
    pub fn new(input_shape: Vec<usize>) -> Self {
        Self {
            current: input_shape.clone(),
            input_shape,
            input_range: None,
            layers: Vec::new(),
        }
    }

    pub fn input_range(mut self, range: Option<(f64, f64)>) -> Self {
        self.input_range = range;
        self
    }

    fn check_finite<'a>(&self, values: impl IntoIterator<Item = &'a f64>) -> Result<()> {
        if values.into_iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(format!("parameters of layer {}", self.layers.len())))
        }
    }

    pub fn dense(mut self, weights: Array2<f64>, bias: Array1<f64>, act: Activation) -> Result<Self> {
        let index = self.layers.len();
        let in_width: usize = self.current.iter().product();
        if weights.ncols() != in_width {
            return Err(Error::ShapeMismatch {
                layer: index,
                detail: format!(
                    "dense weights have {} columns but the previous layer has width {in_width}",
                    weights.ncols()
                ),
            });
        }
        if bias.len() != weights.nrows() {
            return Err(Error::ShapeMismatch {
                layer: index,
                detail: format!("bias length {} != {} rows", bias.len(), weights.nrows()),
            });
        }
        self.check_finite(weights.iter().chain(bias.iter()))?;
        let out = weights.nrows();
        self.layers.push(Layer {
            op: LayerOp::Dense(Affine { weights, bias }),
            activation: act,
            input_shape: std::mem::replace(&mut self.current, vec![out]),
            output_shape: vec![out],
            lowered: OnceLock::new(),
        });
        Ok(self)
    }

    pub fn conv2d(
        mut self,
        kernel: ndarray::Array4<f64>,
        bias: Array1<f64>,
        stride: [usize; 2],
        padding: Padding,
        act: Activation,
    ) -> Result<Self> {
        let index = self.layers.len();
        let [h, w, c] = match self.current[..] {
            [h, w, c] => [h, w, c],
            _ => {
                return Err(Error::ShapeMismatch {
                    layer: index,
                    detail: format!("conv2d needs a [h, w, c] input, got {:?}", self.current),
                })
            }
        };
        let (_, _, cin, cout) = kernel.dim();
        if cin != c {
            return Err(Error::ShapeMismatch {
                layer: index,
                detail: format!("kernel has {cin} input channels but the input has {c}"),
            });
        }
        if bias.len() != cout {
            return Err(Error::ShapeMismatch {
                layer: index,
                detail: format!("bias length {} != {cout} output channels", bias.len()),
            });
        }
        self.check_finite(kernel.iter().chain(bias.iter()))?;
        let conv = Conv2d::new(kernel, bias, stride, padding, [h, w, c]).ok_or_else(|| {
            Error::ShapeMismatch {
                layer: index,
                detail: "convolution geometry yields an empty output".into(),
            }
        })?;
        let out = conv.output_shape().to_vec();
        self.layers.push(Layer {
            op: LayerOp::Conv2d(conv),
            activation: act,
            input_shape: std::mem::replace(&mut self.current, out.clone()),
            output_shape: out,
            lowered: OnceLock::new(),
        });
        Ok(self)
    }

    pub fn build(self) -> Result<Network> {
        let Some(last) = self.layers.last() else {
            return Err(Error::Parse("network has no layers".into()));
        };
        if last.activation != Activation::Identity {
            return Err(Error::Parse(format!(
                "final layer must use the identity activation, found {}",
                last.activation
            )));
        }
        if let Some((lo, hi)) = self.input_range {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Parse(format!("invalid input range [{lo}, {hi}]")));
            }
        }
        Ok(Network {
            input_shape: self.input_shape,
            input_range: self.input_range,
            layers: self.layers,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn single_dense() -> Network {
        Network::dense(
            2,
            vec![(array![[1.0, 2.0], [3.0, 4.0]], array![0.0, 0.0], Activation::Identity)],
        )
        .unwrap()
    }

    #[test]
    fn dense_identity_forward() {
        let net = single_dense();
        assert_eq!(net.logits(&[1.0, 1.0]).unwrap(), array![3.0, 7.0]);
        assert_eq!(net.predicted_label(&[1.0, 1.0]).unwrap(), 1);
    }

    #[test]
    fn argmax_ties_to_lowest() {
        assert_eq!(argmax(array![5.0, 5.0].view()), 0);
        assert_eq!(argmax(array![1.0, 5.0, 5.0].view()), 1);
    }

    #[test]
    fn zero_sigmoid_net_is_half_everywhere() {
        let net = Network::dense(
            3,
            vec![
                (Array2::zeros((4, 3)), Array1::zeros(4), Activation::Sigmoid),
                (Array2::zeros((2, 4)), Array1::zeros(2), Activation::Identity),
            ],
        )
        .unwrap();
        let fwd = net.forward(&[0.3, -2.0, 7.0]).unwrap();
        assert!(fwd.trace[0].pre.iter().all(|&v| v == 0.0));
        assert!(fwd.trace[0].post.iter().all(|&v| v == 0.5));
        let g = net.neuron_gradient(1, 0, &[0.3, -2.0, 7.0]).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_layer_gradient_is_weight_row() {
        let net = single_dense();
        for x in [[0.0, 0.0], [5.0, -3.0]] {
            assert_eq!(net.neuron_gradient(0, 1, &x).unwrap(), array![3.0, 4.0]);
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        let err = Network::dense(
            3,
            vec![(Array2::zeros((2, 2)), Array1::zeros(2), Activation::Identity)],
        )
        .unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { layer: 0, .. }));

        let err = Network::dense(
            2,
            vec![(Array2::zeros((2, 2)), Array1::zeros(2), Activation::Sigmoid)],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Parse(_)));

        let err = Network::dense(
            2,
            vec![(array![[f64::NAN, 0.0]], array![0.0], Activation::Identity)],
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn neuron_coordinates_are_checked() {
        let net = single_dense();
        assert!(matches!(net.neuron_fn(1, 0), Err(Error::OutOfRange { .. })));
        assert!(matches!(net.neuron_fn(0, 2), Err(Error::OutOfRange { .. })));
        assert!(matches!(
            net.forward(&[1.0]),
            Err(Error::Dimension { expected: 2, got: 1 })
        ));
    }
}
