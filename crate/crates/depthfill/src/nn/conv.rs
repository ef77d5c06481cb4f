//! 2D convolution via im2col + matrix multiply.
//!
//! The backward pass recomputes the im2col matrix from the cached input
//! instead of holding it, trading a little arithmetic for a much smaller
//! activation cache.

use ndarray::{Array2, Array3, ArrayD, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{join, Grads, HasParams};

/// Weight initialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// Kaiming-style normal, `std = sqrt(2 / fan_in)`.
    Kaiming,
    /// All zeros (zero convolutions, final output layers).
    Zero,
}

/// Convolution with square kernel, symmetric zero padding.
#[derive(Debug, Clone)]
pub struct Conv2d {
    /// `[c_out, c_in, k, k]`, stored dynamic for uniform param access.
    pub w: ArrayD<f64>,
    /// `[c_out]`
    pub b: ArrayD<f64>,
    pub stride: usize,
    pub pad: usize,
    pub k: usize,
    pub c_in: usize,
    pub c_out: usize,
}

impl Conv2d {
    pub fn new(
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        pad: usize,
        init: Init,
        rng: &mut impl Rng,
    ) -> Self {
        let w = match init {
            Init::Kaiming => {
                let std = (2.0 / (c_in * k * k) as f64).sqrt();
                ArrayD::from_shape_simple_fn(vec![c_out, c_in, k, k], || {
                    let z: f64 = rng.sample(StandardNormal);
                    z * std
                })
            }
            Init::Zero => ArrayD::zeros(vec![c_out, c_in, k, k]),
        };
        Self {
            w,
            b: ArrayD::zeros(vec![c_out]),
            stride,
            pad,
            k,
            c_in,
            c_out,
        }
    }

    /// 1x1 convolution, the common fusion/projection case.
    pub fn new_1x1(c_in: usize, c_out: usize, init: Init, rng: &mut impl Rng) -> Self {
        Self::new(c_in, c_out, 1, 1, 0, init, rng)
    }

    /// True when every weight and bias is exactly zero.
    pub fn is_all_zero(&self) -> bool {
        self.w.iter().all(|v| *v == 0.0) && self.b.iter().all(|v| *v == 0.0)
    }

    pub fn out_spatial(&self, h: usize, w: usize) -> (usize, usize) {
        let oh = (h + 2 * self.pad - self.k) / self.stride + 1;
        let ow = (w + 2 * self.pad - self.k) / self.stride + 1;
        (oh, ow)
    }

    fn w_mat(&self) -> Array2<f64> {
        self.w
            .view()
            .into_shape_with_order((self.c_out, self.c_in * self.k * self.k))
            .expect("contiguous weight")
            .to_owned()
    }

    pub fn forward(&self, x: &Array3<f64>) -> Array3<f64> {
        let (c, h, w) = x.dim();
        assert_eq!(c, self.c_in, "conv input channels");
        let (oh, ow) = self.out_spatial(h, w);
        let col = im2col(x, self.k, self.stride, self.pad, oh, ow);
        let mut y = self.w_mat().dot(&col);
        let b = self
            .b
            .view()
            .into_shape_with_order((self.c_out, 1))
            .unwrap()
            .to_owned();
        y += &b;
        y.into_shape_with_order((self.c_out, oh, ow)).unwrap()
    }

    /// Backward from cached input; returns `dx` and accumulates `dW`, `db`.
    pub fn backward(
        &self,
        x: &Array3<f64>,
        dy: &Array3<f64>,
        path: &str,
        grads: &mut Grads,
    ) -> Array3<f64> {
        let (_, h, w) = x.dim();
        let (dc, oh, ow) = dy.dim();
        debug_assert_eq!(dc, self.c_out);
        let dy_mat = dy
            .view()
            .into_shape_with_order((self.c_out, oh * ow))
            .unwrap()
            .to_owned();
        let col = im2col(x, self.k, self.stride, self.pad, oh, ow);
        let dw = dy_mat.dot(&col.t());
        let db = dy_mat.sum_axis(Axis(1));
        grads.add(
            join(path, "w"),
            dw.into_shape_with_order(vec![self.c_out, self.c_in, self.k, self.k])
                .unwrap()
                .into_dyn(),
        );
        grads.add(join(path, "b"), db.into_dyn());
        let dx_col = self.w_mat().t().dot(&dy_mat);
        col2im(
            &dx_col, self.c_in, h, w, self.k, self.stride, self.pad, oh, ow,
        )
    }
}

impl HasParams for Conv2d {
    fn collect_refs<'a>(&'a self, path: &str, out: &mut Vec<(String, &'a ArrayD<f64>)>) {
        out.push((join(path, "w"), &self.w));
        out.push((join(path, "b"), &self.b));
    }

    fn collect_muts<'a>(&'a mut self, path: &str, out: &mut Vec<(String, &'a mut ArrayD<f64>)>) {
        out.push((join(path, "w"), &mut self.w));
        out.push((join(path, "b"), &mut self.b));
    }
}

/// Unfold `x` into `[c*k*k, oh*ow]` patches.
fn im2col(
    x: &Array3<f64>,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) -> Array2<f64> {
    let (c, h, w) = x.dim();
    let xs = x.as_slice().expect("standard layout");
    let mut col = Array2::<f64>::zeros((c * k * k, oh * ow));
    let cs = col.as_slice_mut().unwrap();
    let ncols = oh * ow;
    for ci in 0..c {
        let xoff = ci * h * w;
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let roff = row * ncols;
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let yoff = xoff + iy as usize * w;
                    let ooff = roff + oy * ow;
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        cs[ooff + ox] = xs[yoff + ix as usize];
                    }
                }
            }
        }
    }
    col
}

/// Fold patch gradients back onto the input grid (scatter-add of im2col).
#[allow(clippy::too_many_arguments)]
fn col2im(
    col: &Array2<f64>,
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) -> Array3<f64> {
    let mut x = Array3::<f64>::zeros((c, h, w));
    let xs = x.as_slice_mut().unwrap();
    let cs = col.as_slice().expect("standard layout");
    let ncols = oh * ow;
    for ci in 0..c {
        let xoff = ci * h * w;
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let roff = row * ncols;
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let yoff = xoff + iy as usize * w;
                    let ooff = roff + oy * ow;
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        xs[yoff + ix as usize] += cs[ooff + ox];
                    }
                }
            }
        }
    }
    x
}
