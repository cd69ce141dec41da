use rand::Rng;

use super::matrix::Matrix;
use super::{sigmoid_scalar, softmax_in_place};
use crate::error::{Error, Result};
use crate::exec::Execution;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Softmax,
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Softmax => "softmax",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sigmoid" => Some(Activation::Sigmoid),
            "softmax" => Some(Activation::Softmax),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }

    fn apply(self, pre: &Matrix) -> Matrix {
        let mut out = pre.clone();
        match self {
            Activation::Identity => {}
            Activation::Sigmoid => out.as_mut_slice().iter_mut().for_each(|v| *v = sigmoid_scalar(*v)),
            Activation::Softmax => {
                for r in 0..out.rows() {
                    softmax_in_place(out.row_mut(r));
                }
            }
        }
        out
    }
}

/// Fully connected layer: `activation(A * W^T + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `(out_dim, in_dim)`, row-major.
    pub weights: Matrix,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl AsRef<DenseLayer> for DenseLayer {
    fn as_ref(&self) -> &DenseLayer {
        self
    }
}

impl DenseLayer {
    pub fn new(weights: Matrix, biases: Vec<f64>, activation: Activation) -> Result<Self> {
        if weights.rows() != biases.len() {
            return Err(Error::invalid(format!(
                "{} weight rows but {} biases",
                weights.rows(),
                biases.len()
            )));
        }
        if weights.rows() == 0 || weights.cols() == 0 {
            return Err(Error::invalid("layer dimensions must be positive"));
        }
        Ok(DenseLayer {
            weights,
            biases,
            activation,
        })
    }

    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Result<Self> {
        DenseLayer::new(Matrix::zeros(out_dim, in_dim), vec![0.0; out_dim], activation)
    }

    /// Glorot-uniform weights in `±sqrt(6 / (in_dim + out_dim))`, zero biases.
    pub fn glorot<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::invalid(format!(
                "layer dimensions must be positive, got {in_dim} -> {out_dim}"
            )));
        }
        let limit = glorot_limit(in_dim, out_dim);
        let data = (0..in_dim * out_dim)
            .map(|_| rng.gen_range(-limit..=limit))
            .collect();
        DenseLayer::new(Matrix::from_vec(out_dim, in_dim, data)?, vec![0.0; out_dim], activation)
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.rows() * self.weights.cols() + self.biases.len()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.is_finite() && self.biases.iter().all(|b| b.is_finite())
    }

    /// Pre-activation `A * W^T + b`.
    pub(crate) fn affine(&self, input: &Matrix, exec: Execution) -> Matrix {
        let mut z = input.matmul_nt(&self.weights, exec);
        for r in 0..z.rows() {
            for (v, b) in z.row_mut(r).iter_mut().zip(&self.biases) {
                *v += b;
            }
        }
        z
    }

    pub fn apply(&self, input: &Matrix, exec: Execution) -> Matrix {
        self.activation.apply(&self.affine(input, exec))
    }
}

pub fn glorot_limit(in_dim: usize, out_dim: usize) -> f64 {
    (6.0 / (in_dim + out_dim) as f64).sqrt()
}

/// Glorot-uniform layer; see [`DenseLayer::glorot`].
pub fn glorot_init<R: Rng + ?Sized>(
    in_dim: usize,
    out_dim: usize,
    activation: Activation,
    rng: &mut R,
) -> Result<DenseLayer> {
    DenseLayer::glorot(in_dim, out_dim, activation, rng)
}

/// Per-layer values retained by [`forward`] for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub input: Matrix,
    pub pre_activations: Vec<Matrix>,
    pub activations: Vec<Matrix>,
}

impl ForwardTrace {
    pub fn len(&self) -> usize {
        self.activations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.activations.is_empty()
    }

    /// Activation of the last layer.
    pub fn output(&self) -> &Matrix {
        self.activations.last().unwrap_or(&self.input)
    }
}

pub fn forward<L: AsRef<DenseLayer>>(layers: &[L], input: &Matrix) -> Result<ForwardTrace> {
    forward_with(layers, input, Execution::default())
}

pub fn forward_with<L: AsRef<DenseLayer>>(
    layers: &[L],
    input: &Matrix,
    exec: Execution,
) -> Result<ForwardTrace> {
    let mut pre_activations = Vec::with_capacity(layers.len());
    let mut activations: Vec<Matrix> = Vec::with_capacity(layers.len());
    for (i, layer) in layers.iter().enumerate() {
        let layer = layer.as_ref();
        let a = activations.last().unwrap_or(input);
        if a.cols() != layer.in_dim() {
            return Err(Error::invalid(format!(
                "layer {i} expects {} inputs but receives {}",
                layer.in_dim(),
                a.cols()
            )));
        }
        let z = layer.affine(a, exec);
        let out = layer.activation.apply(&z);
        pre_activations.push(z);
        activations.push(out);
    }
    Ok(ForwardTrace {
        input: input.clone(),
        pre_activations,
        activations,
    })
}

/// Gradient of the mean batch loss with respect to one layer's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Matrix,
    pub biases: Vec<f64>,
}

/// Backpropagates mean softmax cross-entropy through `layers`.
///
/// The last layer must use softmax; hidden layers may use sigmoid or identity.
pub fn backward<L: AsRef<DenseLayer>>(
    layers: &[L],
    trace: &ForwardTrace,
    gold: &[usize],
) -> Result<Vec<LayerGrad>> {
    backward_with(layers, trace, gold, Execution::default())
}

pub fn backward_with<L: AsRef<DenseLayer>>(
    layers: &[L],
    trace: &ForwardTrace,
    gold: &[usize],
    exec: Execution,
) -> Result<Vec<LayerGrad>> {
    let n_layers = layers.len();
    if n_layers == 0 || trace.len() != n_layers || trace.pre_activations.len() != n_layers {
        return Err(Error::invalid(format!(
            "trace has {} layers but network has {n_layers}",
            trace.len()
        )));
    }
    let last = layers[n_layers - 1].as_ref();
    if last.activation != Activation::Softmax {
        return Err(Error::invalid("output layer must use softmax"));
    }
    let probs = trace.output();
    let batch = probs.rows();
    if batch == 0 || gold.len() != batch {
        return Err(Error::invalid(format!(
            "{} gold labels for a batch of {batch}",
            gold.len()
        )));
    }
    for (i, layer) in layers.iter().enumerate() {
        let layer = layer.as_ref();
        let act = &trace.activations[i];
        if act.cols() != layer.out_dim() || act.rows() != batch {
            return Err(Error::invalid(format!("trace shape mismatch at layer {i}")));
        }
        if i + 1 < n_layers && layer.activation == Activation::Softmax {
            return Err(Error::invalid(format!(
                "hidden layer {i} uses softmax, which backward does not support"
            )));
        }
    }

    // Softmax + cross-entropy: dL/dz = (p - onehot) / batch.
    let scale = 1.0 / batch as f64;
    let mut delta = probs.clone();
    for (r, &g) in gold.iter().enumerate() {
        if g >= delta.cols() {
            return Err(Error::invalid(format!(
                "gold class {g} out of range for {} classes",
                delta.cols()
            )));
        }
        let row = delta.row_mut(r);
        row[g] -= 1.0;
        row.iter_mut().for_each(|v| *v *= scale);
    }

    let mut grads = Vec::with_capacity(n_layers);
    for l in (0..n_layers).rev() {
        let layer = layers[l].as_ref();
        let a_prev = if l == 0 { &trace.input } else { &trace.activations[l - 1] };
        let gw = delta.matmul_tn(a_prev, exec);
        let mut gb = vec![0.0; layer.out_dim()];
        for row in delta.iter_rows() {
            for (b, d) in gb.iter_mut().zip(row) {
                *b += d;
            }
        }
        grads.push(LayerGrad {
            weights: gw,
            biases: gb,
        });
        if l > 0 {
            let mut prev = delta.matmul(&layer.weights, exec);
            let below = layers[l - 1].as_ref();
            let act = &trace.activations[l - 1];
            match below.activation {
                Activation::Sigmoid => {
                    for (d, a) in prev.as_mut_slice().iter_mut().zip(act.as_slice()) {
                        *d *= a * (1.0 - a);
                    }
                }
                Activation::Identity => {}
                Activation::Softmax => unreachable!("checked above"),
            }
            delta = prev;
        }
    }
    grads.reverse();
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    #[test]
    fn glorot_bounds_and_determinism() {
        let mut rng = rng_from_seed(3);
        let layer = DenseLayer::glorot(300, 300, Activation::Sigmoid, &mut rng).unwrap();
        assert!(layer.weights.as_slice().iter().all(|w| w.abs() <= 0.1 + 1e-15));
        assert!(layer.biases.iter().all(|&b| b == 0.0));

        for seed in 0..20 {
            let l = DenseLayer::glorot(1, 1, Activation::Identity, &mut rng_from_seed(seed)).unwrap();
            assert!(l.weights.get(0, 0).abs() <= 3f64.sqrt());
            assert_eq!(l.biases, vec![0.0]);
        }

        let a = DenseLayer::glorot(7, 5, Activation::Sigmoid, &mut rng_from_seed(11)).unwrap();
        let b = DenseLayer::glorot(7, 5, Activation::Sigmoid, &mut rng_from_seed(11)).unwrap();
        assert_eq!(a, b);
        assert!(DenseLayer::glorot(0, 5, Activation::Sigmoid, &mut rng).is_err());
        assert!(DenseLayer::glorot(5, 0, Activation::Sigmoid, &mut rng).is_err());
    }

    #[test]
    fn identity_network_passes_input_through() {
        let layer = DenseLayer::new(Matrix::identity(3), vec![0.0; 3], Activation::Identity).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, -2.0, 3.5], vec![0.0, 4.0, -1.0]]).unwrap();
        let trace = forward(&[layer], &x).unwrap();
        assert_eq!(trace.output(), &x);
        assert_eq!(trace.len(), 1);
    }

    #[test]
    fn zero_sigmoid_layer_outputs_half() {
        let layer = DenseLayer::zeros(4, 3, Activation::Sigmoid).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 2.0, 3.0, 4.0]]).unwrap();
        let trace = forward(&[layer], &x).unwrap();
        assert!(trace.output().as_slice().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn two_layer_net_matches_hand_computation() {
        // h = sigmoid(W1 x + b1), p = softmax(W2 h + b2), hand-expanded for a 2x2 case.
        let w1 = Matrix::from_rows(&[vec![0.5, -1.0], vec![2.0, 0.25]]).unwrap();
        let w2 = Matrix::from_rows(&[vec![1.0, -1.0], vec![-0.5, 0.75]]).unwrap();
        let l1 = DenseLayer::new(w1, vec![0.1, -0.2], Activation::Sigmoid).unwrap();
        let l2 = DenseLayer::new(w2, vec![0.0, 0.3], Activation::Softmax).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let trace = forward(&[l1, l2], &x).unwrap();

        let s = |v: f64| 1.0 / (1.0 + (-v).exp());
        let h0 = s(0.5 * 1.0 - 1.0 * 2.0 + 0.1);
        let h1 = s(2.0 * 1.0 + 0.25 * 2.0 - 0.2);
        let z0 = h0 - h1;
        let z1 = -0.5 * h0 + 0.75 * h1 + 0.3;
        let p0 = z0.exp() / (z0.exp() + z1.exp());
        let out = trace.output();
        assert!((out.get(0, 0) - p0).abs() < 1e-12);
        assert!((out.get(0, 1) - (1.0 - p0)).abs() < 1e-12);
    }

    #[test]
    fn forward_names_offending_layer() {
        let l1 = DenseLayer::zeros(3, 4, Activation::Sigmoid).unwrap();
        let l2 = DenseLayer::zeros(5, 2, Activation::Softmax).unwrap();
        let x = Matrix::zeros(2, 3);
        let err = forward(&[l1, l2], &x).unwrap_err().to_string();
        assert!(err.contains("layer 1"), "{err}");
    }

    #[test]
    fn saturated_correct_prediction_has_zero_output_delta() {
        let w = Matrix::from_rows(&[vec![100.0], vec![-100.0]]).unwrap();
        let layer = DenseLayer::new(w, vec![0.0, 0.0], Activation::Softmax).unwrap();
        let x = Matrix::from_rows(&[vec![1.0]]).unwrap();
        let trace = forward(&[&layer], &x).unwrap();
        let grads = backward(&[&layer], &trace, &[0]).unwrap();
        assert!(grads[0].biases.iter().all(|g| g.abs() < 1e-6));
        assert!(grads[0].weights.as_slice().iter().all(|g| g.abs() < 1e-6));
    }

    #[test]
    fn duplicated_batch_gives_single_example_gradient() {
        let mut rng = rng_from_seed(5);
        let l1 = DenseLayer::glorot(4, 3, Activation::Sigmoid, &mut rng).unwrap();
        let l2 = DenseLayer::glorot(3, 2, Activation::Softmax, &mut rng).unwrap();
        let layers = [l1, l2];
        let one = Matrix::from_rows(&[vec![0.3, -0.7, 1.1, 0.2]]).unwrap();
        let two = Matrix::from_rows(&[one.row(0).to_vec(), one.row(0).to_vec()]).unwrap();
        let g1 = backward(&layers, &forward(&layers, &one).unwrap(), &[1]).unwrap();
        let g2 = backward(&layers, &forward(&layers, &two).unwrap(), &[1, 1]).unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            for (x, y) in a.weights.as_slice().iter().zip(b.weights.as_slice()) {
                assert!((x - y).abs() < 1e-15);
            }
            for (x, y) in a.biases.iter().zip(&b.biases) {
                assert!((x - y).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn backward_rejects_mismatched_trace() {
        let l1 = DenseLayer::zeros(2, 2, Activation::Softmax).unwrap();
        let l2 = DenseLayer::zeros(2, 2, Activation::Softmax).unwrap();
        let x = Matrix::zeros(1, 2);
        let trace = forward(&[&l1], &x).unwrap();
        assert!(backward(&[&l1, &l2], &trace, &[0]).is_err());
        assert!(backward(&[&l1], &trace, &[0, 1]).is_err());
        let sig = DenseLayer::zeros(2, 2, Activation::Sigmoid).unwrap();
        let trace = forward(&[&sig], &x).unwrap();
        assert!(backward(&[&sig], &trace, &[0]).is_err());
    }
}
