//! Group normalization over `[C, H, W]` tensors.

use ndarray::{Array3, ArrayD};

use super::{join, Grads, HasParams};

const EPS: f64 = 1e-5;

/// GroupNorm with affine parameters.
///
/// Group count adapts to the channel width: the largest divisor of `C` not
/// exceeding the requested count whose groups hold at least 4 channels.
/// Groups narrower than that degenerate toward instance norm, whose
/// per-channel mean subtraction exactly cancels the additive timestep bias
/// in the res blocks.
#[derive(Debug, Clone)]
pub struct GroupNorm {
    /// gamma, `[C]`
    pub g: ArrayD<f64>,
    /// beta, `[C]`
    pub b: ArrayD<f64>,
    pub groups: usize,
    pub channels: usize,
}

impl GroupNorm {
    pub fn new(channels: usize, max_groups: usize) -> Self {
        let groups = (1..=max_groups.min(channels))
            .filter(|g| channels % g == 0 && channels / g >= 4)
            .max()
            .unwrap_or(1);
        Self {
            g: ArrayD::from_elem(vec![channels], 1.0),
            b: ArrayD::zeros(vec![channels]),
            groups,
            channels,
        }
    }

    pub fn forward(&self, x: &Array3<f64>) -> Array3<f64> {
        let (c, h, w) = x.dim();
        assert_eq!(c, self.channels);
        let cg = c / self.groups;
        let n = (cg * h * w) as f64;
        let xs = x.as_slice().expect("standard layout");
        let mut y = Array3::<f64>::zeros((c, h, w));
        let ys = y.as_slice_mut().unwrap();
        let gs = self.g.as_slice().unwrap();
        let bs = self.b.as_slice().unwrap();
        let plane = h * w;
        for gi in 0..self.groups {
            let lo = gi * cg * plane;
            let hi = lo + cg * plane;
            let mean: f64 = xs[lo..hi].iter().sum::<f64>() / n;
            let var: f64 = xs[lo..hi].iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let inv = 1.0 / (var + EPS).sqrt();
            for ci in 0..cg {
                let ch = gi * cg + ci;
                let (gam, bet) = (gs[ch], bs[ch]);
                let off = ch * plane;
                for i in 0..plane {
                    ys[off + i] = gam * (xs[off + i] - mean) * inv + bet;
                }
            }
        }
        y
    }

    pub fn backward(
        &self,
        x: &Array3<f64>,
        dy: &Array3<f64>,
        path: &str,
        grads: &mut Grads,
    ) -> Array3<f64> {
        let (c, h, w) = x.dim();
        let cg = c / self.groups;
        let n = (cg * h * w) as f64;
        let plane = h * w;
        let xs = x.as_slice().unwrap();
        let dys = dy.as_slice().unwrap();
        let gs = self.g.as_slice().unwrap();

        let mut dx = Array3::<f64>::zeros((c, h, w));
        let dxs = dx.as_slice_mut().unwrap();
        let mut dg = vec![0.0f64; c];
        let mut db = vec![0.0f64; c];

        for gi in 0..self.groups {
            let lo = gi * cg * plane;
            let hi = lo + cg * plane;
            let mean: f64 = xs[lo..hi].iter().sum::<f64>() / n;
            let var: f64 = xs[lo..hi].iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let inv = 1.0 / (var + EPS).sqrt();

            // accumulate the two reductions the dx formula needs
            let mut sum_dxhat = 0.0;
            let mut sum_dxhat_xhat = 0.0;
            for ci in 0..cg {
                let ch = gi * cg + ci;
                let off = ch * plane;
                let gam = gs[ch];
                for i in 0..plane {
                    let xhat = (xs[off + i] - mean) * inv;
                    let d = dys[off + i];
                    dg[ch] += d * xhat;
                    db[ch] += d;
                    let dxhat = d * gam;
                    sum_dxhat += dxhat;
                    sum_dxhat_xhat += dxhat * xhat;
                }
            }
            for ci in 0..cg {
                let ch = gi * cg + ci;
                let off = ch * plane;
                let gam = gs[ch];
                for i in 0..plane {
                    let xhat = (xs[off + i] - mean) * inv;
                    let dxhat = dys[off + i] * gam;
                    dxs[off + i] =
                        inv * (dxhat - sum_dxhat / n - xhat * sum_dxhat_xhat / n);
                }
            }
        }
        grads.add(join(path, "g"), ArrayD::from_shape_vec(vec![c], dg).unwrap());
        grads.add(join(path, "b"), ArrayD::from_shape_vec(vec![c], db).unwrap());
        dx
    }
}

impl HasParams for GroupNorm {
    fn collect_refs<'a>(&'a self, path: &str, out: &mut Vec<(String, &'a ArrayD<f64>)>) {
        out.push((join(path, "g"), &self.g));
        out.push((join(path, "b"), &self.b));
    }

    fn collect_muts<'a>(&'a mut self, path: &str, out: &mut Vec<(String, &'a mut ArrayD<f64>)>) {
        out.push((join(path, "g"), &mut self.g));
        out.push((join(path, "b"), &mut self.b));
    }
}
