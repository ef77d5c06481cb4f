//! Dense layer for timestep-embedding vectors.

use ndarray::{Array1, Array2, ArrayD};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{join, Grads, HasParams, Init};

#[derive(Debug, Clone)]
pub struct Linear {
    /// `[out, in]`
    pub w: ArrayD<f64>,
    /// `[out]`
    pub b: ArrayD<f64>,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new(d_in: usize, d_out: usize, init: Init, rng: &mut impl Rng) -> Self {
        let w = match init {
            Init::Kaiming => {
                let std = (2.0 / d_in as f64).sqrt();
                ArrayD::from_shape_simple_fn(vec![d_out, d_in], || {
                    let z: f64 = rng.sample(StandardNormal);
                    z * std
                })
            }
            Init::Zero => ArrayD::zeros(vec![d_out, d_in]),
        };
        Self {
            w,
            b: ArrayD::zeros(vec![d_out]),
            d_in,
            d_out,
        }
    }

    fn w2(&self) -> Array2<f64> {
        self.w
            .view()
            .into_shape_with_order((self.d_out, self.d_in))
            .unwrap()
            .to_owned()
    }

    pub fn forward(&self, x: &Array1<f64>) -> Array1<f64> {
        let b = self
            .b
            .view()
            .into_shape_with_order(self.d_out)
            .unwrap()
            .to_owned();
        self.w2().dot(x) + b
    }

    /// Returns `dx`; accumulates `dW = dy x^T`, `db = dy`.
    pub fn backward(
        &self,
        x: &Array1<f64>,
        dy: &Array1<f64>,
        path: &str,
        grads: &mut Grads,
    ) -> Array1<f64> {
        let mut dw = Array2::<f64>::zeros((self.d_out, self.d_in));
        for o in 0..self.d_out {
            for i in 0..self.d_in {
                dw[(o, i)] = dy[o] * x[i];
            }
        }
        grads.add(join(path, "w"), dw.into_dyn());
        grads.add(join(path, "b"), dy.to_owned().into_dyn());
        self.w2().t().dot(dy)
    }
}

impl HasParams for Linear {
    fn collect_refs<'a>(&'a self, path: &str, out: &mut Vec<(String, &'a ArrayD<f64>)>) {
        out.push((join(path, "w"), &self.w));
        out.push((join(path, "b"), &self.b));
    }

    fn collect_muts<'a>(&'a mut self, path: &str, out: &mut Vec<(String, &'a mut ArrayD<f64>)>) {
        out.push((join(path, "w"), &mut self.w));
        out.push((join(path, "b"), &mut self.b));
    }
}
