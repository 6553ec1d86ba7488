//! Minimal dense-tensor numeric core: row-major 2-D tensors, a reverse-mode
//! autodiff tape, Adam, parameter containers and a counter-keyed noise
//! source.
//!
//! Everything is generic over [`Real`] so that training runs in `f32` while
//! gradient checks run the very same graphs in `f64`.

mod adam;
mod graph;
mod layers;
mod noise;
mod params;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use graph::{Bags, Gradients, Graph, Var, PROB_EPS};
pub use layers::{normal_table, xavier_uniform, Dense, Mlp};
pub use noise::{gaussian_noise, NoiseKey};
pub use params::{Bound, ParamStore};
pub use tensor::Tensor;

use core::fmt::Debug;
use core::iter::Sum;
use num_traits::Float;

/// Floating point element type of tensors.
pub trait Real: Float + Debug + Default + Sum + Send + Sync + 'static {
    /// Converts an `f64` literal, rounding to the nearest representable value.
    fn lit(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn lit(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn lit(x: f64) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// Logistic function, evaluated without overflow for large `|x|`.
#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^x)`, stable on both tails.
#[inline]
pub fn softplus<T: Real>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
