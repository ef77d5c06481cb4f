//! SiLU activation. Smooth everywhere, which keeps finite-difference
//! gradient checks clean (no kinks anywhere in the network body).

use ndarray::Array3;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn silu(x: &Array3<f64>) -> Array3<f64> {
    x.mapv(|v| v * sigmoid(v))
}

/// d/dx silu = sigmoid(x) * (1 + x * (1 - sigmoid(x)))
pub fn silu_backward(x: &Array3<f64>, dy: &Array3<f64>) -> Array3<f64> {
    let mut dx = dy.clone();
    dx.zip_mut_with(x, |d, &v| {
        let s = sigmoid(v);
        *d *= s * (1.0 + v * (1.0 - s));
    });
    dx
}

/// Scalar variants for 1-d embeddings.
pub fn silu_scalar(v: f64) -> f64 {
    v * sigmoid(v)
}

pub fn silu_scalar_grad(v: f64) -> f64 {
    let s = sigmoid(v);
    s * (1.0 + v * (1.0 - s))
}
