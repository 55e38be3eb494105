//! ReLU networks: representation, evaluation, composition and the local
//! affine maps of shallow networks.

use crate::arrangement::Region;
use crate::error::{Error, Result};

/// Scalar affine function `x ↦ a·x + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Functional {
    pub coeffs: Vec<f64>,
    pub constant: f64,
}

impl Functional {
    pub fn new(coeffs: Vec<f64>, constant: f64) -> Self {
        Self { coeffs, constant }
    }

    pub fn constant(dim: usize, value: f64) -> Self {
        Self::new(vec![0.0; dim], value)
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        dot(&self.coeffs, x) + self.constant
    }

    pub fn negated(&self) -> Self {
        Self::new(self.coeffs.iter().map(|v| -v).collect(), -self.constant)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::new(self.coeffs.iter().map(|v| v * s).collect(), self.constant * s)
    }

    /// Euclidean norm of the gradient.
    pub fn grad_norm(&self) -> f64 {
        self.coeffs.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dense affine map `x ↦ W x + b` with row-major `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    weights: Vec<f64>,
    bias: Vec<f64>,
    d_in: usize,
}

impl AffineMap {
    pub fn new(rows: Vec<Vec<f64>>, bias: Vec<f64>) -> Result<Self> {
        if rows.len() != bias.len() {
            return Err(Error::Dimension(format!(
                "W has {} rows but b has {} entries",
                rows.len(),
                bias.len()
            )));
        }
        let d_in = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d_in) {
            return Err(Error::Dimension("W rows have unequal lengths".into()));
        }
        if d_in == 0 && !rows.is_empty() {
            return Err(Error::Dimension("W has zero columns".into()));
        }
        if rows.iter().flatten().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::InvalidNetwork("non-finite parameter".into()));
        }
        Ok(Self {
            weights: rows.into_iter().flatten().collect(),
            bias,
            d_in,
        })
    }

    pub fn from_flat(weights: Vec<f64>, bias: Vec<f64>, d_in: usize) -> Self {
        assert_eq!(weights.len(), bias.len() * d_in);
        Self { weights, bias, d_in }
    }

    pub fn identity(n: usize) -> Self {
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            w[i * n + i] = 1.0;
        }
        Self::from_flat(w, vec![0.0; n], n)
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.bias.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.d_in..(i + 1) * self.d_in]
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.d_in + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.d_out()).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn functional(&self, i: usize) -> Functional {
        Functional::new(self.row(i).to_vec(), self.bias[i])
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.d_in);
        (0..self.d_out())
            .map(|i| dot(self.row(i), x) + self.bias[i])
            .collect()
    }

    /// `self ∘ inner`.
    pub fn after(&self, inner: &AffineMap) -> Result<AffineMap> {
        if inner.d_out() != self.d_in {
            return Err(Error::Dimension(format!(
                "cannot compose {}→{} after {}→{}",
                self.d_in,
                self.d_out(),
                inner.d_in,
                inner.d_out()
            )));
        }
        let n = inner.d_in;
        let mut w = vec![0.0; self.d_out() * n];
        let mut b = self.bias.clone();
        for i in 0..self.d_out() {
            for k in 0..self.d_in {
                let wik = self.weight(i, k);
                if wik == 0.0 {
                    continue;
                }
                for j in 0..n {
                    w[i * n + j] += wik * inner.weight(k, j);
                }
                b[i] += wik * inner.bias[k];
            }
        }
        Ok(AffineMap::from_flat(w, b, n))
    }

    /// Induced ∞-norm: max absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        (0..self.d_out())
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub map: AffineMap,
    pub kind: Activation,
}

impl Layer {
    pub fn new(map: AffineMap, kind: Activation) -> Self {
        Self { map, kind }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.map.apply(x);
        if self.kind == Activation::Relu {
            z.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        z
    }
}

/// Feed-forward network of affine layers, each optionally followed by ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralNetwork {
    layers: Vec<Layer>,
}

impl NeuralNetwork {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidNetwork("network has no layers".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[1].map.d_in() != pair[0].map.d_out() {
                return Err(Error::Dimension(format!(
                    "layer {} expects {} inputs but layer {} produces {}",
                    i + 1,
                    pair[1].map.d_in(),
                    i,
                    pair[0].map.d_out()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            layers: vec![Layer::new(AffineMap::identity(n), Activation::Linear)],
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].map.d_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().map.d_out()
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "input has {} entries, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> Vec<f64> {
        self.layers
            .iter()
            .fold(x.to_vec(), |z, layer| layer.apply(&z))
    }

    /// Network computing `outer(inner(x))`. The final (linear) layer of
    /// `inner` is merged into the first layer of `outer`.
    pub fn compose(outer: &NeuralNetwork, inner: &NeuralNetwork) -> Result<NeuralNetwork> {
        if inner.output_dim() != outer.input_dim() {
            return Err(Error::Dimension(format!(
                "inner network outputs {} values, outer expects {}",
                inner.output_dim(),
                outer.input_dim()
            )));
        }
        let (last, head) = inner.layers.split_last().unwrap();
        if last.kind != Activation::Linear {
            return Err(Error::InvalidNetwork(
                "inner network must end with a linear layer".into(),
            ));
        }
        let first = &outer.layers[0];
        let merged = Layer::new(first.map.after(&last.map)?, first.kind);
        let layers = head
            .iter()
            .cloned()
            .chain(std::iter::once(merged))
            .chain(outer.layers[1..].iter().cloned())
            .collect();
        NeuralNetwork::new(layers)
    }

    /// Product of the ∞-norms of every layer's weight matrix; a global
    /// max-norm Lipschitz bound since ReLU is 1-Lipschitz coordinate-wise.
    pub fn lipschitz_estimate(&self) -> f64 {
        self.layers.iter().map(|l| l.map.inf_norm()).product()
    }

    pub fn is_shallow(&self) -> bool {
        self.layers.len() == 2
            && self.layers[0].kind == Activation::Relu
            && self.layers[1].kind == Activation::Linear
            && self.output_dim() == 1
    }
}

/// Two-layer network: one hidden ReLU layer and a scalar linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct ShallowNN {
    net: NeuralNetwork,
}

impl ShallowNN {
    pub fn new(hidden: AffineMap, output: AffineMap) -> Result<Self> {
        let net = NeuralNetwork::new(vec![
            Layer::new(hidden, Activation::Relu),
            Layer::new(output, Activation::Linear),
        ])?;
        Self::try_from(net)
    }

    pub fn network(&self) -> &NeuralNetwork {
        &self.net
    }

    pub fn hidden(&self) -> &AffineMap {
        &self.net.layers[0].map
    }

    pub fn output(&self) -> &AffineMap {
        &self.net.layers[1].map
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn num_neurons(&self) -> usize {
        self.hidden().d_out()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.net.eval_unchecked(x)[0]
    }

    /// `-self`, obtained by negating the output layer.
    pub fn negated(&self) -> ShallowNN {
        let out = self.output();
        let w = out.row(0).iter().map(|v| -v).collect();
        let b = vec![-out.bias()[0]];
        ShallowNN {
            net: NeuralNetwork {
                layers: vec![
                    self.net.layers[0].clone(),
                    Layer::new(AffineMap::from_flat(w, b, out.d_in()), Activation::Linear),
                ],
            },
        }
    }

    /// Activation boundaries: row `i` of the hidden affine map, in neuron order.
    pub fn activation_hyperplanes(&self) -> Vec<Functional> {
        (0..self.num_neurons())
            .map(|i| self.hidden().functional(i))
            .collect()
    }

    /// The affine function the network equals on `region`: neurons outside
    /// the region's flip set are nulled.
    pub fn local_affine(&self, region: &Region) -> Functional {
        let n = self.input_dim();
        let out = self.output();
        let hidden = self.hidden();
        let mut coeffs = vec![0.0; n];
        let mut constant = out.bias()[0];
        for i in region.flips().iter() {
            let w2 = out.weight(0, i);
            for (c, w) in coeffs.iter_mut().zip(hidden.row(i)) {
                *c += w2 * w;
            }
            constant += w2 * hidden.bias()[i];
        }
        Functional::new(coeffs, constant)
    }

    /// Indices of neurons with positive pre-activation at `x`.
    pub fn active_set(&self, x: &[f64]) -> Vec<usize> {
        let z = self.hidden().apply(x);
        (0..z.len()).filter(|&i| z[i] > 0.0).collect()
    }
}

impl TryFrom<NeuralNetwork> for ShallowNN {
    type Error = Error;

    fn try_from(net: NeuralNetwork) -> Result<Self> {
        if !net.is_shallow() {
            return Err(Error::InvalidNetwork(
                "expected two layers (relu, linear) with scalar output".into(),
            ));
        }
        Ok(Self { net })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arrangement::FlipSet;

    fn shallow_1d() -> ShallowNN {
        ShallowNN::new(
            AffineMap::new(vec![vec![1.0], vec![-1.0]], vec![0.0, 0.0]).unwrap(),
            AffineMap::new(vec![vec![1.0, 1.0]], vec![-1.0]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn identity_and_relu_layers() {
        let id = NeuralNetwork::identity(2);
        assert_eq!(id.evaluate(&[1.0, -2.0]).unwrap(), vec![1.0, -2.0]);
        let relu = NeuralNetwork::new(vec![Layer::new(AffineMap::identity(2), Activation::Relu)])
            .unwrap();
        assert_eq!(relu.evaluate(&[1.0, -2.0]).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn shallow_hand_evaluation() {
        assert_eq!(shallow_1d().network().evaluate(&[0.5]).unwrap(), vec![-0.5]);
    }

    #[test]
    fn dimension_errors() {
        assert!(NeuralNetwork::identity(2).evaluate(&[1.0]).is_err());
        assert!(AffineMap::new(vec![vec![1.0, 2.0]], vec![0.0, 1.0]).is_err());
        let a = Layer::new(AffineMap::identity(2), Activation::Relu);
        let b = Layer::new(AffineMap::identity(3), Activation::Linear);
        assert!(NeuralNetwork::new(vec![a, b]).is_err());
    }

    #[test]
    fn compose_identity() {
        let id = NeuralNetwork::identity(2);
        let c = NeuralNetwork::compose(&id, &id).unwrap();
        assert_eq!(c.layers().len(), 1);
        assert_eq!(c.evaluate(&[0.3, -7.0]).unwrap(), vec![0.3, -7.0]);
    }

    #[test]
    fn compose_rejects_relu_tail() {
        let relu = NeuralNetwork::new(vec![Layer::new(AffineMap::identity(1), Activation::Relu)])
            .unwrap();
        assert!(NeuralNetwork::compose(&relu, &relu).is_err());
    }

    #[test]
    fn hyperplanes_read_off_rows() {
        let net = ShallowNN::new(
            AffineMap::identity(2),
            AffineMap::new(vec![vec![1.0, 1.0]], vec![0.0]).unwrap(),
        )
        .unwrap();
        let h = net.activation_hyperplanes();
        assert_eq!(h.len(), 2);
        assert_eq!(h[0], Functional::new(vec![1.0, 0.0], 0.0));
        assert_eq!(h[1], Functional::new(vec![0.0, 1.0], 0.0));
    }

    #[test]
    fn local_affine_extremes() {
        let net = shallow_1d();
        let none = Region::new(FlipSet::new(2));
        assert_eq!(net.local_affine(&none), Functional::new(vec![0.0], -1.0));
        let all = Region::new(FlipSet::from_indices(2, [0, 1]));
        // W2 (W1 x + b1) + b2 = x - x - 1
        assert_eq!(net.local_affine(&all), Functional::new(vec![0.0], -1.0));
        let right = Region::new(FlipSet::from_indices(2, [0]));
        assert_eq!(right.flips().count(), 1);
        assert_eq!(net.local_affine(&right).eval(&[2.0]), net.eval(&[2.0]));
    }

    #[test]
    fn lipschitz_of_diagonal() {
        let net = NeuralNetwork::new(vec![Layer::new(
            AffineMap::new(vec![vec![2.0, 0.0], vec![0.0, 3.0]], vec![0.0, 0.0]).unwrap(),
            Activation::Linear,
        )])
        .unwrap();
        assert_eq!(net.lipschitz_estimate(), 3.0);
        assert_eq!(NeuralNetwork::identity(4).lipschitz_estimate(), 1.0);
    }
}
