use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::GmvaeError;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Exact GELU: `x * Phi(x)`.
#[inline]
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

#[inline]
pub fn gelu_derivative(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2));
    cdf + x * FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `out x in`.
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { w: DMatrix::zeros(outputs, inputs), b: DVector::zeros(outputs) }
    }

    pub fn inputs(&self) -> usize {
        self.w.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.w.nrows()
    }
}

/// Fully connected network with GELU between hidden layers and a linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Activations kept from a forward pass for backpropagation.
pub struct ForwardCache {
    /// Input to every layer (`in x batch`).
    inputs: Vec<DMatrix<f64>>,
    /// Pre-activations of every layer.
    pre: Vec<DMatrix<f64>>,
}

#[derive(Debug, Serialize, Deserialize, Clone, Copy, PartialEq, Eq)]
pub enum InitScheme {
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` for weights and biases.
    UniformFanIn,
}

impl Mlp {
    pub fn zeros(widths: &[usize]) -> Result<Self, GmvaeError> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(GmvaeError::Shape(format!("invalid layer widths {widths:?}")));
        }
        Ok(Self { layers: widths.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect() })
    }

    pub fn random<R: Rng>(widths: &[usize], rng: &mut R) -> Result<Self, GmvaeError> {
        let mut m = Self::zeros(widths)?;
        for layer in &mut m.layers {
            let bound = 1.0 / (layer.inputs() as f64).sqrt();
            let u = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            for v in layer.w.iter_mut() {
                *v = u.sample(rng);
            }
            for v in layer.b.iter_mut() {
                *v = u.sample(rng);
            }
        }
        Ok(m)
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].inputs()];
        w.extend(self.layers.iter().map(Dense::outputs));
        w
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").outputs()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Parameters in layer order, each weight matrix column-major then its bias.
    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.w.iter().chain(l.b.iter()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.w.iter_mut().chain(l.b.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|v| v.is_finite())
    }

    fn check_input(&self, x: &DMatrix<f64>) -> Result<(), GmvaeError> {
        if x.nrows() != self.input_dim() {
            return Err(GmvaeError::Shape(format!("input has {} rows, network expects {}", x.nrows(), self.input_dim())));
        }
        Ok(())
    }

    /// Forward pass over a batch stored column-wise (`in x batch`).
    pub fn forward(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, GmvaeError> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut a = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = &layer.w * &a;
            for mut col in z.column_iter_mut() {
                col += &layer.b;
            }
            if i < last {
                z.apply(|v| *v = gelu(*v));
            }
            a = z;
        }
        Ok(a)
    }

    pub fn forward_cached(&self, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, ForwardCache), GmvaeError> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = &layer.w * &a;
            for mut col in z.column_iter_mut() {
                col += &layer.b;
            }
            let out = if i < last { z.map(gelu) } else { z.clone() };
            inputs.push(a);
            pre.push(z);
            a = out;
        }
        Ok((a, ForwardCache { inputs, pre }))
    }

    /// Backpropagates `d_out` (`out x batch`); returns parameter gradients
    /// shaped like `self` and the gradient with respect to the input.
    pub fn backward(&self, cache: &ForwardCache, d_out: DMatrix<f64>) -> (Mlp, DMatrix<f64>) {
        let last = self.layers.len() - 1;
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = d_out;
        for i in (0..self.layers.len()).rev() {
            if i < last {
                delta.zip_apply(&cache.pre[i], |d, z| *d *= gelu_derivative(z));
            }
            let gw = &delta * cache.inputs[i].transpose();
            let gb = DVector::from_iterator(delta.nrows(), delta.row_iter().map(|r| r.sum()));
            let d_in = self.layers[i].w.transpose() * &delta;
            grads.push(Dense { w: gw, b: gb });
            delta = d_in;
        }
        grads.reverse();
        (Mlp { layers: grads }, delta)
    }
}
