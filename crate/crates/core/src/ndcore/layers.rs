use alloc::format;
use alloc::vec::Vec;
use num_traits::Float;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::{Bound, Graph, ParamStore, Real, Tensor, Var};
use crate::Result;

/// Affine layer `x W + b`, weights Xavier-uniform, bias zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dense {
    pub weight: usize,
    pub bias: usize,
    pub inputs: usize,
    pub outputs: usize,
}

impl Dense {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        inputs: usize,
        outputs: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let w = xavier_uniform(inputs, outputs, rng);
        let weight = store.push(format!("{name}.weight"), w);
        let bias = store.push(format!("{name}.bias"), Tensor::zeros(1, outputs));
        Self {
            weight,
            bias,
            inputs,
            outputs,
        }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, bound: &Bound, x: Var) -> Result<Var> {
        let h = g.matmul(x, bound.var(self.weight))?;
        g.add(h, bound.var(self.bias))
    }
}

/// Stack of dense layers with ReLU between them. The last layer is linear
/// unless `relu_last` is set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub relu_last: bool,
}

impl Mlp {
    /// `sizes = [in, h1, ..., out]`.
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        sizes: &[usize],
        relu_last: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::new(store, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect();
        Self { layers, relu_last }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, bound: &Bound, x: Var) -> Result<Var> {
        let mut h = x;
        let last = self.layers.len().saturating_sub(1);
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(g, bound, h)?;
            if i < last || self.relu_last {
                h = g.relu(h);
            }
        }
        Ok(h)
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }
}

pub fn xavier_uniform<T: Real>(
    inputs: usize,
    outputs: usize,
    rng: &mut ChaCha8Rng,
) -> Tensor<T> {
    let a = Float::sqrt(6.0 / (inputs + outputs) as f64);
    let dist = Uniform::new_inclusive(-a, a).expect("finite bounds");
    let data = (0..inputs * outputs)
        .map(|_| T::lit(dist.sample(rng)))
        .collect();
    Tensor::matrix(inputs, outputs, data).expect("dims >= 1")
}

/// `N(0, std^2)` table, the initialization used for embedding rows.
pub fn normal_table<T: Real>(
    rows: usize,
    cols: usize,
    std: f64,
    rng: &mut ChaCha8Rng,
) -> Tensor<T> {
    let dist = Normal::new(0.0, std).expect("std > 0");
    let data = (0..rows * cols)
        .map(|_| T::lit(rng.sample(dist)))
        .collect();
    Tensor::matrix(rows, cols, data).expect("dims >= 1")
}
