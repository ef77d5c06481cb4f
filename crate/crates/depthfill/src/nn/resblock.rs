//! ResNet-style blocks and the spatial resamplers.
//!
//! A block is `GN -> SiLU -> Conv -> (+ timestep bias) -> GN -> SiLU -> Conv`
//! with an identity or 1x1 shortcut. Timestep conditioning, when present,
//! adds a per-channel bias projected from the shared embedding vector.

use ndarray::{Array1, Array3, ArrayD};
use rand::Rng;

use super::{join, silu, silu_backward, Conv2d, GroupNorm, Grads, HasParams, Init, Linear};
use crate::nn::act::{silu_scalar, silu_scalar_grad};

#[derive(Debug, Clone)]
pub struct ResBlock {
    pub gn1: GroupNorm,
    pub conv1: Conv2d,
    pub temb_proj: Option<Linear>,
    pub gn2: GroupNorm,
    pub conv2: Conv2d,
    pub skip: Option<Conv2d>,
    pub c_in: usize,
    pub c_out: usize,
}

/// Intermediates needed by the backward pass.
#[derive(Debug)]
pub struct ResBlockCache {
    x: Array3<f64>,
    a1: Array3<f64>,
    h: Array3<f64>,
    a2: Array3<f64>,
    temb: Option<Array1<f64>>,
}

impl ResBlock {
    pub fn new(
        c_in: usize,
        c_out: usize,
        temb_dim: Option<usize>,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            gn1: GroupNorm::new(c_in, 8),
            conv1: Conv2d::new(c_in, c_out, 3, 1, 1, Init::Kaiming, rng),
            temb_proj: temb_dim.map(|d| Linear::new(d, c_out, Init::Kaiming, rng)),
            gn2: GroupNorm::new(c_out, 8),
            conv2: Conv2d::new(c_out, c_out, 3, 1, 1, Init::Kaiming, rng),
            skip: (c_in != c_out).then(|| Conv2d::new_1x1(c_in, c_out, Init::Kaiming, rng)),
            c_in,
            c_out,
        }
    }

    pub fn forward(&self, x: &Array3<f64>, temb: Option<&Array1<f64>>) -> (Array3<f64>, ResBlockCache) {
        debug_assert_eq!(self.temb_proj.is_some(), temb.is_some());
        let a1 = self.gn1.forward(x);
        let mut h = self.conv1.forward(&silu(&a1));
        if let (Some(proj), Some(t)) = (&self.temb_proj, temb) {
            let bias = proj.forward(&t.mapv(silu_scalar));
            for (ch, b) in bias.iter().enumerate() {
                h.index_axis_mut(ndarray::Axis(0), ch).mapv_inplace(|v| v + b);
            }
        }
        let a2 = self.gn2.forward(&h);
        let out = self.conv2.forward(&silu(&a2));
        let base = match &self.skip {
            Some(s) => s.forward(x),
            None => x.clone(),
        };
        (
            base + &out,
            ResBlockCache {
                x: x.clone(),
                a1,
                h,
                a2,
                temb: temb.cloned(),
            },
        )
    }

    /// Returns `(dx, d_temb)`.
    pub fn backward(
        &self,
        cache: &ResBlockCache,
        dy: &Array3<f64>,
        path: &str,
        grads: &mut Grads,
    ) -> (Array3<f64>, Option<Array1<f64>>) {
        // residual branch
        let s2 = silu(&cache.a2);
        let da2_pre = self.conv2.backward(&s2, dy, &join(path, "conv2"), grads);
        let da2 = silu_backward(&cache.a2, &da2_pre);
        let dh = self.gn2.backward(&cache.h, &da2, &join(path, "gn2"), grads);

        // timestep bias: gradient is the per-channel sum
        let mut d_temb = None;
        if let (Some(proj), Some(t)) = (&self.temb_proj, &cache.temb) {
            let dbias = Array1::from_iter(
                (0..self.c_out).map(|ch| dh.index_axis(ndarray::Axis(0), ch).sum()),
            );
            let ts = t.mapv(silu_scalar);
            let dts = proj.backward(&ts, &dbias, &join(path, "temb_proj"), grads);
            let mut dt = dts;
            for (d, v) in dt.iter_mut().zip(t.iter()) {
                *d *= silu_scalar_grad(*v);
            }
            d_temb = Some(dt);
        }

        let s1 = silu(&cache.a1);
        let da1_pre = self.conv1.backward(&s1, &dh, &join(path, "conv1"), grads);
        let da1 = silu_backward(&cache.a1, &da1_pre);
        let mut dx = self.gn1.backward(&cache.x, &da1, &join(path, "gn1"), grads);

        // shortcut
        match &self.skip {
            Some(s) => {
                dx += &s.backward(&cache.x, dy, &join(path, "skip"), grads);
            }
            None => {
                dx += dy;
            }
        }
        (dx, d_temb)
    }
}

impl HasParams for ResBlock {
    fn collect_refs<'a>(&'a self, path: &str, out: &mut Vec<(String, &'a ArrayD<f64>)>) {
        self.gn1.collect_refs(&join(path, "gn1"), out);
        self.conv1.collect_refs(&join(path, "conv1"), out);
        if let Some(p) = &self.temb_proj {
            p.collect_refs(&join(path, "temb_proj"), out);
        }
        self.gn2.collect_refs(&join(path, "gn2"), out);
        self.conv2.collect_refs(&join(path, "conv2"), out);
        if let Some(s) = &self.skip {
            s.collect_refs(&join(path, "skip"), out);
        }
    }

    fn collect_muts<'a>(&'a mut self, path: &str, out: &mut Vec<(String, &'a mut ArrayD<f64>)>) {
        self.gn1.collect_muts(&join(path, "gn1"), out);
        self.conv1.collect_muts(&join(path, "conv1"), out);
        if let Some(p) = &mut self.temb_proj {
            p.collect_muts(&join(path, "temb_proj"), out);
        }
        self.gn2.collect_muts(&join(path, "gn2"), out);
        self.conv2.collect_muts(&join(path, "conv2"), out);
        if let Some(s) = &mut self.skip {
            s.collect_muts(&join(path, "skip"), out);
        }
    }
}

/// Strided 3x3 convolution; `ceil(n/2)` output for odd inputs.
#[derive(Debug, Clone)]
pub struct Downsample {
    pub conv: Conv2d,
}

impl Downsample {
    pub fn new(c_in: usize, c_out: usize, rng: &mut impl Rng) -> Self {
        Self {
            conv: Conv2d::new(c_in, c_out, 3, 2, 1, Init::Kaiming, rng),
        }
    }

    pub fn forward(&self, x: &Array3<f64>) -> Array3<f64> {
        self.conv.forward(x)
    }

    pub fn backward(
        &self,
        x: &Array3<f64>,
        dy: &Array3<f64>,
        path: &str,
        grads: &mut Grads,
    ) -> Array3<f64> {
        self.conv.backward(x, dy, &join(path, "conv"), grads)
    }
}

impl HasParams for Downsample {
    fn collect_refs<'a>(&'a self, path: &str, out: &mut Vec<(String, &'a ArrayD<f64>)>) {
        self.conv.collect_refs(&join(path, "conv"), out);
    }

    fn collect_muts<'a>(&'a mut self, path: &str, out: &mut Vec<(String, &'a mut ArrayD<f64>)>) {
        self.conv.collect_muts(&join(path, "conv"), out);
    }
}

/// Nearest-neighbor 2x upsampling followed by a 3x3 convolution. The target
/// size may be smaller than `2n` (crop), which pairs odd skip sizes in the
/// UNet with their upsampled counterparts.
#[derive(Debug, Clone)]
pub struct Upsample2x {
    pub conv: Conv2d,
}

impl Upsample2x {
    pub fn new(c_in: usize, c_out: usize, rng: &mut impl Rng) -> Self {
        Self {
            conv: Conv2d::new(c_in, c_out, 3, 1, 1, Init::Kaiming, rng),
        }
    }

    /// `(upsampled-and-cropped input, conv output)`; the first is the conv's
    /// input, needed for backward.
    pub fn forward(&self, x: &Array3<f64>, th: usize, tw: usize) -> (Array3<f64>, Array3<f64>) {
        let up = upsample_nearest(x, th, tw);
        let y = self.conv.forward(&up);
        (up, y)
    }

    pub fn backward(
        &self,
        up: &Array3<f64>,
        x_dim: (usize, usize, usize),
        dy: &Array3<f64>,
        path: &str,
        grads: &mut Grads,
    ) -> Array3<f64> {
        let dup = self.conv.backward(up, dy, &join(path, "conv"), grads);
        downsample_grad(&dup, x_dim)
    }
}

impl HasParams for Upsample2x {
    fn collect_refs<'a>(&'a self, path: &str, out: &mut Vec<(String, &'a ArrayD<f64>)>) {
        self.conv.collect_refs(&join(path, "conv"), out);
    }

    fn collect_muts<'a>(&'a mut self, path: &str, out: &mut Vec<(String, &'a mut ArrayD<f64>)>) {
        self.conv.collect_muts(&join(path, "conv"), out);
    }
}

/// Nearest-neighbor upsample of `x` to `(th, tw)` with `th <= 2h, tw <= 2w`.
pub fn upsample_nearest(x: &Array3<f64>, th: usize, tw: usize) -> Array3<f64> {
    let (c, h, w) = x.dim();
    debug_assert!(th <= 2 * h && tw <= 2 * w && th > h.max(1) - 1 && tw > 0);
    let mut y = Array3::<f64>::zeros((c, th, tw));
    for ci in 0..c {
        for r in 0..th {
            for col in 0..tw {
                y[(ci, r, col)] = x[(ci, r / 2, col / 2)];
            }
        }
    }
    y
}

/// Adjoint of `upsample_nearest`: sum gradients over each source pixel's
/// replicas.
pub fn downsample_grad(dy: &Array3<f64>, x_dim: (usize, usize, usize)) -> Array3<f64> {
    let (c, th, tw) = dy.dim();
    let mut dx = Array3::<f64>::zeros(x_dim);
    for ci in 0..c {
        for r in 0..th {
            for col in 0..tw {
                dx[(ci, r / 2, col / 2)] += dy[(ci, r, col)];
            }
        }
    }
    dx
}
