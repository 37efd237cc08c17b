//! Scalar and vector primitives shared by the model code.

use super::{Rng, Tensor};
use crate::error::{Error, Result};

/// Slope used for every LeakyReLU in the attention scorer.
pub const LEAKY_SLOPE: f64 = 0.2;

/// Numerically stable softmax (max-subtracted).
pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::EmptySoftmax);
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("softmax input".into()));
    }
    Ok(softmax_unchecked(v))
}

pub(crate) fn softmax_unchecked(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn l1_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Xavier/Glorot uniform initialization, bound `sqrt(6 / (rows + cols))`.
pub fn xavier_init(rng: &mut Rng, rows: usize, cols: usize) -> Tensor {
    assert!(rows >= 1 && cols >= 1, "xavier_init needs positive dims");
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.uniform(-bound, bound)).collect();
    Tensor::matrix(rows, cols, data)
}

/// Uniform initialization in `[-scale, scale)`, used for embedding tables.
pub fn uniform_init(rng: &mut Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.uniform(-scale, scale)).collect();
    Tensor::matrix(rows, cols, data)
}
