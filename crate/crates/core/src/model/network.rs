use crate::error::{Error, Result};
use crate::numerics::{Mat, Rng};
use crate::scalar::Scalar;

pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Linear,
    Relu,
    /// Leaky ReLU with negative slope 0.2.
    LeakyRelu,
    Tanh,
    /// Column-wise softmax; only valid as the last layer.
    Softmax,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::Relu => "relu",
            Activation::LeakyRelu => "leaky_relu",
            Activation::Tanh => "tanh",
            Activation::Softmax => "softmax",
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        Some(match code {
            0 => Activation::Linear,
            1 => Activation::Relu,
            2 => Activation::LeakyRelu,
            3 => Activation::Tanh,
            4 => Activation::Softmax,
            _ => return None,
        })
    }

    pub fn code(self) -> u32 {
        match self {
            Activation::Linear => 0,
            Activation::Relu => 1,
            Activation::LeakyRelu => 2,
            Activation::Tanh => 3,
            Activation::Softmax => 4,
        }
    }

    fn apply<T: Scalar>(self, m: &mut Mat<T>) {
        match self {
            Activation::Linear => {}
            Activation::Relu => m.as_mut_slice().iter_mut().for_each(|v| *v = v.max(T::zero())),
            Activation::LeakyRelu => {
                let slope = T::lit(LEAKY_SLOPE);
                m.as_mut_slice().iter_mut().for_each(|v| {
                    if *v < T::zero() {
                        *v *= slope
                    }
                })
            }
            Activation::Tanh => m.as_mut_slice().iter_mut().for_each(|v| *v = v.tanh()),
            Activation::Softmax => {
                for j in 0..m.cols() {
                    let mut mx = T::neg_infinity();
                    for i in 0..m.rows() {
                        mx = mx.max(m[(i, j)]);
                    }
                    let mut s = T::zero();
                    for i in 0..m.rows() {
                        let e = (m[(i, j)] - mx).exp();
                        m[(i, j)] = e;
                        s += e;
                    }
                    for i in 0..m.rows() {
                        m[(i, j)] /= s;
                    }
                }
            }
        }
    }

    /// Gradient with respect to the pre-activation, given the activation output.
    fn backward<T: Scalar>(self, out: &Mat<T>, grad: &Mat<T>) -> Mat<T> {
        match self {
            Activation::Linear => grad.clone(),
            Activation::Relu => out
                .zip_with(grad, "relu", |y, g| if y > T::zero() { g } else { T::zero() })
                .expect("same shape"),
            Activation::LeakyRelu => {
                let slope = T::lit(LEAKY_SLOPE);
                out.zip_with(grad, "leaky_relu", |y, g| if y > T::zero() { g } else { g * slope })
                    .expect("same shape")
            }
            Activation::Tanh => out
                .zip_with(grad, "tanh", |y, g| g * (T::one() - y * y))
                .expect("same shape"),
            Activation::Softmax => {
                let mut dx = Mat::zeros(out.rows(), out.cols());
                for j in 0..out.cols() {
                    let inner: T = (0..out.rows()).map(|i| out[(i, j)] * grad[(i, j)]).sum();
                    for i in 0..out.rows() {
                        dx[(i, j)] = out[(i, j)] * (grad[(i, j)] - inner);
                    }
                }
                dx
            }
        }
    }
}

/// Fully-connected layer `y = act(W x + b)`; `W` is `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T> {
    pub weight: Mat<T>,
    pub bias: Vec<T>,
    pub activation: Activation,
}

impl<T: Scalar> Layer<T> {
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }
}

/// Multi-layer perceptron with reverse-mode gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    layers: Vec<Layer<T>>,
}

/// Activations recorded by [`Network::forward`], consumed by
/// [`Network::backward`].
#[derive(Debug)]
pub struct GradTape<T> {
    inputs: Vec<Mat<T>>,
    outputs: Vec<Mat<T>>,
}

impl<T> GradTape<T> {
    pub fn output(&self) -> &Mat<T> {
        self.outputs.last().expect("non-empty tape")
    }
}

/// Parameter gradients, layer by layer.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkGrads<T> {
    pub layers: Vec<(Mat<T>, Vec<T>)>,
}

impl<T: Scalar> NetworkGrads<T> {
    pub fn zeros_like(net: &Network<T>) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| {
                    (
                        Mat::zeros(l.weight.rows(), l.weight.cols()),
                        vec![T::zero(); l.bias.len()],
                    )
                })
                .collect(),
        }
    }

    pub fn accumulate(&mut self, other: &Self) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            w.add_assign(ow);
            for (x, &y) in b.iter_mut().zip(ob) {
                *x += y;
            }
        }
    }

    /// Slices in the same order as [`Network::params`].
    pub fn slices(&self) -> Vec<&[T]> {
        self.layers
            .iter()
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }

    pub fn max_abs(&self) -> T {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

impl<T: Scalar> Network<T> {
    /// Validates the layer chain: dimensions compose and softmax only closes
    /// the network.
    pub fn new(layers: Vec<Layer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig("network needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() {
                return Err(Error::ShapeMismatch(format!(
                    "layer {i}: bias {} vs weight rows {}",
                    l.bias.len(),
                    l.out_dim()
                )));
            }
            if l.activation == Activation::Softmax && i + 1 != layers.len() {
                return Err(Error::InvalidConfig(format!(
                    "softmax at layer {i} is not the final activation"
                )));
            }
            if i > 0 && layers[i - 1].out_dim() != l.in_dim() {
                return Err(Error::ShapeMismatch(format!(
                    "layer {i} expects {} inputs, previous layer emits {}",
                    l.in_dim(),
                    layers[i - 1].out_dim()
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Glorot-uniform weights, zero biases. `widths` lists every layer
    /// boundary, input first.
    pub fn init(widths: &[usize], activations: &[Activation], rng: &mut Rng) -> Result<Self> {
        if widths.len() != activations.len() + 1 {
            return Err(Error::InvalidConfig(format!(
                "{} widths for {} activations",
                widths.len(),
                activations.len()
            )));
        }
        let layers = widths
            .windows(2)
            .zip(activations)
            .map(|(w, &activation)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weight =
                    Mat::from_fn(fan_out, fan_in, |_, _| T::lit(rng.uniform_range(-limit, limit)));
                Layer {
                    weight,
                    bias: vec![T::zero(); fan_out],
                    activation,
                }
            })
            .collect();
        Self::new(layers)
    }

    /// `D → h → h → d`, leaky ReLU hidden layers, linear output (projected to
    /// the sphere by [`encode`](crate::model::encode)).
    pub fn encoder(input: usize, hidden: usize, feature: usize, rng: &mut Rng) -> Result<Self> {
        Self::init(
            &[input, hidden, hidden, feature],
            &[Activation::LeakyRelu, Activation::LeakyRelu, Activation::Linear],
            rng,
        )
    }

    /// `d → h → h → D`, ReLU hidden layers, tanh output.
    pub fn decoder(feature: usize, hidden: usize, output: usize, rng: &mut Rng) -> Result<Self> {
        Self::init(
            &[feature, hidden, hidden, output],
            &[Activation::Relu, Activation::Relu, Activation::Tanh],
            rng,
        )
    }

    /// `d → d → k`, ReLU then softmax.
    pub fn cluster_head(feature: usize, clusters: usize, rng: &mut Rng) -> Result<Self> {
        Self::init(
            &[feature, feature, clusters],
            &[Activation::Relu, Activation::Softmax],
            rng,
        )
    }

    /// Single linear layer with zero weights.
    pub fn linear_zeros(input: usize, output: usize) -> Result<Self> {
        Self::new(vec![Layer {
            weight: Mat::zeros(output, input),
            bias: vec![T::zero(); output],
            activation: Activation::Linear,
        }])
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim()
    }

    pub fn final_activation(&self) -> Activation {
        self.layers.last().expect("non-empty").activation
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.rows() * l.weight.cols() + l.bias.len())
            .sum()
    }

    /// Weight then bias for every layer.
    pub fn params(&self) -> Vec<&[T]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    /// Batched forward pass over the columns of `x`.
    pub fn forward(&self, x: &Mat<T>) -> Result<(Mat<T>, GradTape<T>)> {
        if x.rows() != self.input_dim() {
            return Err(Error::dims("Network::forward input", self.input_dim(), x.rows()));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for l in &self.layers {
            let mut pre = l.weight.matmul(&cur)?;
            for (i, &b) in l.bias.iter().enumerate() {
                pre.row_mut(i).iter_mut().for_each(|v| *v += b);
            }
            l.activation.apply(&mut pre);
            inputs.push(cur);
            cur = pre;
            outputs.push(cur.clone());
        }
        Ok((cur, GradTape { inputs, outputs }))
    }

    /// Forward pass without recording a tape.
    pub fn predict(&self, x: &Mat<T>) -> Result<Mat<T>> {
        Ok(self.forward(x)?.0)
    }

    /// Reverse pass: parameter gradients and the gradient with respect to the
    /// forward input.
    pub fn backward(&self, tape: GradTape<T>, out_grad: &Mat<T>) -> Result<(NetworkGrads<T>, Mat<T>)> {
        if tape.inputs.len() != self.layers.len() {
            return Err(Error::TapeMismatch(format!(
                "tape has {} layers, network has {}",
                tape.inputs.len(),
                self.layers.len()
            )));
        }
        for (i, (l, inp)) in self.layers.iter().zip(&tape.inputs).enumerate() {
            if inp.rows() != l.in_dim() {
                return Err(Error::TapeMismatch(format!(
                    "layer {i}: recorded input width {} vs {}",
                    inp.rows(),
                    l.in_dim()
                )));
            }
        }
        let out = tape.output();
        if out.shape() != out_grad.shape() {
            return Err(Error::TapeMismatch(format!(
                "output gradient {:?} vs recorded output {:?}",
                out_grad.shape(),
                out.shape()
            )));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = out_grad.clone();
        for (idx, l) in self.layers.iter().enumerate().rev() {
            let gpre = l.activation.backward(&tape.outputs[idx], &g);
            let gw = gpre.matmul_tr(&tape.inputs[idx])?;
            let gb = (0..gpre.rows()).map(|i| gpre.row(i).iter().copied().sum()).collect();
            g = l.weight.tr_matmul(&gpre)?;
            grads.push((gw, gb));
        }
        grads.reverse();
        Ok((NetworkGrads { layers: grads }, g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(weight: Mat<f64>, bias: Vec<f64>, activation: Activation) -> Network<f64> {
        Network::new(vec![Layer {
            weight,
            bias,
            activation,
        }])
        .unwrap()
    }

    #[test]
    fn identity_network() {
        let net = single(Mat::identity(3), vec![0.0; 3], Activation::Linear);
        let x = Mat::from_fn(3, 4, |i, j| (i as f64) - (j as f64) * 0.5);
        assert_eq!(net.predict(&x).unwrap(), x);
    }

    #[test]
    fn relu_clips_negative() {
        let net = single(Mat::identity(1), vec![0.0], Activation::Relu);
        let x = Mat::from_vec(1, 1, vec![-1.0]).unwrap();
        assert_eq!(net.predict(&x).unwrap()[(0, 0)], 0.0);
    }

    #[test]
    fn hand_computed_two_layer() {
        // W1 = [[1, -1], [2, 0.5]], b1 = [0, -1], leaky; W2 = [[1, 3]], b2 = [0.5], tanh.
        // x = (1, 2): pre1 = (-1, 2), h = (-0.2, 2), pre2 = -0.2 + 6 + 0.5 = 6.3.
        let net = Network::new(vec![
            Layer {
                weight: Mat::from_vec(2, 2, vec![1.0, -1.0, 2.0, 0.5]).unwrap(),
                bias: vec![0.0, -1.0],
                activation: Activation::LeakyRelu,
            },
            Layer {
                weight: Mat::from_vec(1, 2, vec![1.0, 3.0]).unwrap(),
                bias: vec![0.5],
                activation: Activation::Tanh,
            },
        ])
        .unwrap();
        let y = net.predict(&Mat::from_vec(2, 1, vec![1.0, 2.0]).unwrap()).unwrap();
        assert!((y[(0, 0)] - 6.3f64.tanh()).abs() < 1e-15);
    }

    #[test]
    fn linear_backward_is_transpose() {
        let w = Mat::from_vec(2, 3, vec![1.0, 2.0, 3.0, -1.0, 0.5, 4.0]).unwrap();
        let net = single(w.clone(), vec![0.1, 0.2], Activation::Linear);
        let x = Mat::from_fn(3, 2, |i, j| (i + j) as f64);
        let (_, tape) = net.forward(&x).unwrap();
        let g = Mat::from_fn(2, 2, |i, j| 1.0 + i as f64 - j as f64);
        let (_, gx) = net.backward(tape, &g).unwrap();
        assert_eq!(gx, w.tr_matmul(&g).unwrap());
    }

    #[test]
    fn zero_out_grad_gives_zero_grads() {
        let mut rng = Rng::new(1);
        let net = Network::<f64>::encoder(5, 7, 3, &mut rng).unwrap();
        let x = Mat::from_fn(5, 4, |_, _| rng.normal());
        let (y, tape) = net.forward(&x).unwrap();
        let (g, gx) = net.backward(tape, &Mat::zeros(y.rows(), y.cols())).unwrap();
        assert_eq!(g.max_abs(), 0.0);
        assert_eq!(gx.max_abs(), 0.0);
    }

    #[test]
    fn validation() {
        let bad_softmax = Network::<f64>::new(vec![
            Layer {
                weight: Mat::identity(2),
                bias: vec![0.0; 2],
                activation: Activation::Softmax,
            },
            Layer {
                weight: Mat::identity(2),
                bias: vec![0.0; 2],
                activation: Activation::Linear,
            },
        ]);
        assert!(bad_softmax.is_err());
        let bad_chain = Network::<f64>::new(vec![
            Layer {
                weight: Mat::zeros(3, 2),
                bias: vec![0.0; 3],
                activation: Activation::Relu,
            },
            Layer {
                weight: Mat::zeros(1, 2),
                bias: vec![0.0],
                activation: Activation::Linear,
            },
        ]);
        assert!(matches!(bad_chain, Err(Error::ShapeMismatch(_))));
        let net = single(Mat::identity(2), vec![0.0; 2], Activation::Linear);
        assert!(net.forward(&Mat::zeros(3, 1)).is_err());
    }

    #[test]
    fn tape_mismatch_detected() {
        let mut rng = Rng::new(2);
        let a = Network::<f64>::encoder(4, 5, 2, &mut rng).unwrap();
        let b = Network::<f64>::decoder(2, 5, 4, &mut rng).unwrap();
        let (y, tape) = a.forward(&Mat::zeros(4, 3)).unwrap();
        assert!(matches!(b.backward(tape, &y), Err(Error::TapeMismatch(_))));
    }

    #[test]
    fn softmax_rows_on_simplex() {
        let mut rng = Rng::new(3);
        let head = Network::<f64>::cluster_head(4, 3, &mut rng).unwrap();
        let z = Mat::from_fn(4, 10, |_, _| 5.0 * rng.normal());
        let p = head.predict(&z).unwrap();
        for j in 0..10 {
            let s: f64 = p.col(j).iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
            assert!(p.col(j).iter().all(|&v| v >= 0.0));
        }
    }
}
