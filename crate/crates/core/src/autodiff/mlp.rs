use serde::{Deserialize, Serialize};

use super::graph::{Graph, ParamId, ParamStore, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Fully connected network: tanh on hidden layers, identity on the output.
///
/// The weights live in a [`ParamStore`]; the `Mlp` only records which entries
/// belong to it. Weight matrices are `[fan_in, fan_out]` so a layer computes
/// `x W + b` on row-batched input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    layers: Vec<(ParamId, ParamId)>,
}

impl Mlp {
    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn new(store: &mut ParamStore, name: &str, sizes: &[usize], rng: &mut Rng) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Config(format!(
                "network `{name}` needs at least input and output sizes, got {sizes:?}"
            )));
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(Error::Config(format!(
                "network `{name}` has a zero-width layer: {sizes:?}"
            )));
        }
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for (l, pair) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.uniform_in(-bound, bound))
                .collect();
            let wid = store.add(format!("{name}.{l}.weight"), Tensor::matrix(fan_in, fan_out, w)?);
            let bid = store.add(format!("{name}.{l}.bias"), Tensor::zeros(&[fan_out]));
            layers.push((wid, bid));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            layers,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    /// `(weight, bias)` ids per layer.
    pub fn layers(&self) -> &[(ParamId, ParamId)] {
        &self.layers
    }

    pub fn num_params(&self) -> usize {
        self.sizes.windows(2).map(|p| p[0] * p[1] + p[1]).sum()
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let width = g.value(x).cols();
        if width != self.input_dim() {
            return Err(Error::Shape(format!(
                "network expects input width {}, got {width}",
                self.input_dim()
            )));
        }
        let mut h = x;
        let last = self.layers.len() - 1;
        for (l, &(w, b)) in self.layers.iter().enumerate() {
            let wv = g.param(store, w);
            let bv = g.param(store, b);
            h = g.linear(h, wv, bv)?;
            if l < last {
                h = g.tanh(h);
            }
        }
        Ok(h)
    }

    /// Forward pass without keeping the tape.
    pub fn apply(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let y = self.forward(&mut g, store, xv)?;
        Ok(g.value(y).clone())
    }
}
