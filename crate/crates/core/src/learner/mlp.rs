use nalgebra::{DMatrix, DMatrixView};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::rng::{stream, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
    Logistic,
}

impl Activation {
    fn apply(self, z: &mut DMatrix<f64>) {
        match self {
            Activation::Relu => z.apply(|v| *v = v.max(0.0)),
            Activation::Identity => {}
            Activation::Logistic => z.apply(|v| *v = 1.0 / (1.0 + (-*v).exp())),
        }
    }

    /// Multiplies `delta` by the derivative, expressed through the
    /// activation's output `h`.
    fn backprop(self, h: &DMatrix<f64>, delta: &mut DMatrix<f64>) {
        match self {
            Activation::Relu => delta.zip_apply(h, |d, h| {
                if h <= 0.0 {
                    *d = 0.0
                }
            }),
            Activation::Identity => {}
            Activation::Logistic => delta.zip_apply(h, |d, p| *d *= p * (1.0 - p)),
        }
    }
}

/// Fully connected network with ReLU hidden layers.
///
/// All parameters live in one flat vector. Layer `l` stores its
/// `dims[l] × dims[l+1]` weight matrix column-major, followed by its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    output: Activation,
    params: Vec<f64>,
}

/// Layer outputs retained by [`Mlp::forward_tape`]; entry 0 is the input.
#[derive(Debug, Clone)]
pub struct Tape {
    layers: Vec<DMatrix<f64>>,
}

impl Tape {
    pub fn output(&self) -> &DMatrix<f64> {
        self.layers.last().expect("tape holds at least the input")
    }
}

pub struct Gradients {
    pub params: Vec<f64>,
    pub input: DMatrix<f64>,
}

impl Mlp {
    pub fn zeros(dims: &[usize], output: Activation) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return config(format!("invalid layer dims {dims:?}"));
        }
        if output == Activation::Relu {
            return config("output activation must be identity or logistic");
        }
        let count = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Ok(Mlp {
            dims: dims.to_vec(),
            output,
            params: vec![0.0; count],
        })
    }

    /// Uniform fan-in initialization: weights in `±sqrt(6 / fan_in)` for
    /// ReLU-fed layers, `±sqrt(3 / fan_in)` for the head; biases zero. Layer
    /// `l` draws from its own stream.
    pub fn init(dims: &[usize], output: Activation, seed: u64) -> Result<Self> {
        let mut m = Mlp::zeros(dims, output)?;
        let layers = m.layers();
        for l in 0..layers {
            let (fan_in, fan_out) = (m.dims[l], m.dims[l + 1]);
            let gain = if l + 1 == layers { 3.0 } else { 6.0 };
            let bound = (gain / fan_in as f64).sqrt();
            let mut rng = stream(seed, Domain::Init, l as u32);
            let off = m.offset(l);
            for p in &mut m.params[off..off + fan_in * fan_out] {
                *p = rng.gen_range(-bound..bound);
            }
        }
        Ok(m)
    }

    /// Builds a network from per-layer weights (`in × out`) and biases.
    pub fn from_layers(output: Activation, layers: &[(DMatrix<f64>, Vec<f64>)]) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::Config("network needs a layer".into()))?;
        let mut dims = vec![first.0.nrows()];
        for (w, b) in layers {
            if w.nrows() != *dims.last().unwrap() || b.len() != w.ncols() {
                return Err(Error::Dimension("inconsistent layer shapes".into()));
            }
            dims.push(w.ncols());
        }
        let mut m = Mlp::zeros(&dims, output)?;
        for (l, (w, b)) in layers.iter().enumerate() {
            let off = m.offset(l);
            let nw = w.len();
            m.params[off..off + nw].copy_from_slice(w.as_slice());
            m.params[off + nw..off + nw + b.len()].copy_from_slice(b);
        }
        m.check_finite()?;
        Ok(m)
    }

    /// Folds `out·scale + shift` (per output column) into the last layer.
    /// Only defined for an identity head.
    pub fn rescale_output(&mut self, scale: &[f64], shift: &[f64]) -> Result<()> {
        if self.output != Activation::Identity {
            return Err(Error::Config(
                "output rescaling needs an identity head".into(),
            ));
        }
        let last = self.layers() - 1;
        let (r, c) = (self.dims[last], self.dims[last + 1]);
        if scale.len() != c || shift.len() != c {
            return Err(Error::Dimension(format!(
                "network has {c} outputs, got {} scales",
                scale.len()
            )));
        }
        let off = self.offset(last);
        for j in 0..c {
            for w in &mut self.params[off + j * r..off + (j + 1) * r] {
                *w *= scale[j];
            }
            let b = &mut self.params[off + r * c + j];
            *b = *b * scale[j] + shift[j];
        }
        Ok(())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers() {
            self.output
        } else {
            Activation::Relu
        }
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.params.iter().all(|p| p.is_finite()) {
            Ok(())
        } else {
            Err(Error::Numerical("network has non-finite parameters".into()))
        }
    }

    fn offset(&self, layer: usize) -> usize {
        self.dims
            .windows(2)
            .take(layer)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    pub fn weight(&self, layer: usize) -> DMatrixView<'_, f64> {
        let (r, c) = (self.dims[layer], self.dims[layer + 1]);
        let off = self.offset(layer);
        DMatrixView::from_slice(&self.params[off..off + r * c], r, c)
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        let (r, c) = (self.dims[layer], self.dims[layer + 1]);
        let off = self.offset(layer) + r * c;
        &self.params[off..off + c]
    }

    fn check_input(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "network expects {} input columns, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        Ok(())
    }

    fn layer_forward(&self, l: usize, h: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = h * self.weight(l);
        let b = self.bias(l);
        for (j, mut col) in z.column_iter_mut().enumerate() {
            col.add_scalar_mut(b[j]);
        }
        self.activation(l).apply(&mut z);
        z
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_input(x)?;
        let mut h = self.layer_forward(0, x);
        for l in 1..self.layers() {
            h = self.layer_forward(l, &h);
        }
        Ok(h)
    }

    pub fn forward_tape(&self, x: &DMatrix<f64>) -> Result<Tape> {
        self.check_input(x)?;
        let mut layers = Vec::with_capacity(self.dims.len());
        layers.push(x.clone());
        for l in 0..self.layers() {
            let next = self.layer_forward(l, layers.last().unwrap());
            layers.push(next);
        }
        Ok(Tape { layers })
    }

    /// Reverse pass: `upstream` is `∂L/∂output`. Returns the gradient with
    /// respect to every parameter (same layout as [`Mlp::params`]) and to the
    /// input.
    pub fn backward(&self, tape: &Tape, upstream: &DMatrix<f64>) -> Result<Gradients> {
        let out = tape.output();
        if upstream.shape() != out.shape() || tape.layers.len() != self.dims.len() {
            return Err(Error::Dimension(format!(
                "upstream gradient {:?} does not match output {:?}",
                upstream.shape(),
                out.shape()
            )));
        }
        let mut grads = vec![0.0; self.params.len()];
        let mut delta = upstream.clone();
        for l in (0..self.layers()).rev() {
            self.activation(l).backprop(&tape.layers[l + 1], &mut delta);
            let h = &tape.layers[l];
            let (r, c) = (self.dims[l], self.dims[l + 1]);
            let off = self.offset(l);
            let gw = h.transpose() * &delta;
            grads[off..off + r * c].copy_from_slice(gw.as_slice());
            for (j, col) in delta.column_iter().enumerate() {
                grads[off + r * c + j] = col.sum();
            }
            delta = &delta * self.weight(l).transpose();
        }
        Ok(Gradients {
            params: grads,
            input: delta,
        })
    }

    pub fn mlp_backward(&self, x: &DMatrix<f64>, upstream: &DMatrix<f64>) -> Result<Gradients> {
        let tape = self.forward_tape(x)?;
        self.backward(&tape, upstream)
    }
}

pub fn mlp_forward(m: &Mlp, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.forward(x)
}

pub fn mlp_backward(m: &Mlp, x: &DMatrix<f64>, upstream: &DMatrix<f64>) -> Result<Gradients> {
    m.mlp_backward(x, upstream)
}
