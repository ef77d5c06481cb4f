//! Single-head self-attention over spatial positions, with pre-norm and a
//! residual connection. Used only in the mid blocks, where the spatial grid
//! is small, so the dense `[N, N]` score matrix stays cheap.

use ndarray::{Array1, Array2, Array3, ArrayD};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{join, GroupNorm, Grads, HasParams};

#[derive(Debug, Clone)]
pub struct AttnBlock {
    pub norm: GroupNorm,
    /// `[C, C]` projections plus `[C]` biases.
    pub wq: ArrayD<f64>,
    pub bq: ArrayD<f64>,
    pub wk: ArrayD<f64>,
    pub bk: ArrayD<f64>,
    pub wv: ArrayD<f64>,
    pub bv: ArrayD<f64>,
    pub wo: ArrayD<f64>,
    pub bo: ArrayD<f64>,
    pub channels: usize,
}

/// Cache of the block input (everything else is recomputed in backward).
#[derive(Debug)]
pub struct AttnCache {
    pub x: Array3<f64>,
}

fn proj_mat(c: usize, rng: &mut impl Rng) -> ArrayD<f64> {
    let std = (1.0 / c as f64).sqrt();
    ArrayD::from_shape_simple_fn(vec![c, c], || {
        let z: f64 = rng.sample(StandardNormal);
        z * std
    })
}

impl AttnBlock {
    pub fn new(channels: usize, rng: &mut impl Rng) -> Self {
        Self {
            norm: GroupNorm::new(channels, 8),
            wq: proj_mat(channels, rng),
            bq: ArrayD::zeros(vec![channels]),
            wk: proj_mat(channels, rng),
            bk: ArrayD::zeros(vec![channels]),
            wv: proj_mat(channels, rng),
            bv: ArrayD::zeros(vec![channels]),
            wo: proj_mat(channels, rng),
            bo: ArrayD::zeros(vec![channels]),
            channels,
        }
    }

    fn mat(&self, w: &ArrayD<f64>) -> Array2<f64> {
        w.view()
            .into_shape_with_order((self.channels, self.channels))
            .unwrap()
            .to_owned()
    }

    fn vec(&self, b: &ArrayD<f64>) -> Array1<f64> {
        b.view()
            .into_shape_with_order(self.channels)
            .unwrap()
            .to_owned()
    }

    /// q/k/v/attention pieces from the block input; shared by both passes.
    fn attention_parts(
        &self,
        x: &Array3<f64>,
    ) -> (Array2<f64>, Array2<f64>, Array2<f64>, Array2<f64>, Array2<f64>) {
        let (c, h, w) = x.dim();
        let n = h * w;
        let hin = self.norm.forward(x);
        let hm = hin.into_shape_with_order((c, n)).unwrap();
        let add_bias = |mut m: Array2<f64>, b: &ArrayD<f64>| {
            let bv = self.vec(b);
            for (mut row, bi) in m.rows_mut().into_iter().zip(bv.iter()) {
                row += *bi;
            }
            m
        };
        let q = add_bias(self.mat(&self.wq).dot(&hm), &self.bq);
        let k = add_bias(self.mat(&self.wk).dot(&hm), &self.bk);
        let v = add_bias(self.mat(&self.wv).dot(&hm), &self.bv);
        let scale = 1.0 / (c as f64).sqrt();
        let mut scores = q.t().dot(&k);
        scores *= scale;
        // row-wise softmax
        for mut row in scores.rows_mut() {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|s| (s - m).exp());
            let sum = row.sum();
            row.mapv_inplace(|s| s / sum);
        }
        (hm, q, k, v, scores)
    }

    pub fn forward(&self, x: &Array3<f64>) -> (Array3<f64>, AttnCache) {
        let (c, h, w) = x.dim();
        let n = h * w;
        let (_hm, _q, _k, v, attn) = self.attention_parts(x);
        let o = v.dot(&attn.t());
        let mut out = self.mat(&self.wo).dot(&o);
        let bo = self.vec(&self.bo);
        for (mut row, bi) in out.rows_mut().into_iter().zip(bo.iter()) {
            row += *bi;
        }
        let y = x + &out.into_shape_with_order((c, h, w)).unwrap();
        let _ = n;
        (y, AttnCache { x: x.clone() })
    }

    pub fn backward(
        &self,
        cache: &AttnCache,
        dy: &Array3<f64>,
        path: &str,
        grads: &mut Grads,
    ) -> Array3<f64> {
        let x = &cache.x;
        let (c, h, w) = x.dim();
        let n = h * w;
        let (hm, q, k, v, attn) = self.attention_parts(x);
        let o = v.dot(&attn.t());

        let dym = dy.view().into_shape_with_order((c, n)).unwrap().to_owned();
        // out = Wo o + bo
        let dwo = dym.dot(&o.t());
        let dbo = dym.sum_axis(ndarray::Axis(1));
        grads.add(join(path, "wo"), dwo.into_dyn());
        grads.add(join(path, "bo"), dbo.into_dyn());
        let do_ = self.mat(&self.wo).t().dot(&dym);

        // o = v attn^T
        let dv = do_.dot(&attn);
        let dattn = do_.t().dot(&v); // [N, N]: dattn[i][j] = sum_c do[c,i] v[c,j]

        // softmax rows
        let mut dscores = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            let arow = attn.row(i);
            let drow = dattn.row(i);
            let dot: f64 = arow.iter().zip(drow.iter()).map(|(a, d)| a * d).sum();
            for j in 0..n {
                dscores[(i, j)] = arow[j] * (drow[j] - dot);
            }
        }
        let scale = 1.0 / (c as f64).sqrt();
        dscores *= scale;

        // scores = q^T k
        let dq = k.dot(&dscores.t());
        let dk = q.dot(&dscores);

        // projections back to the normed input
        let mut dh = self.mat(&self.wq).t().dot(&dq);
        dh += &self.mat(&self.wk).t().dot(&dk);
        dh += &self.mat(&self.wv).t().dot(&dv);
        grads.add(join(path, "wq"), dq.dot(&hm.t()).into_dyn());
        grads.add(join(path, "bq"), dq.sum_axis(ndarray::Axis(1)).into_dyn());
        grads.add(join(path, "wk"), dk.dot(&hm.t()).into_dyn());
        grads.add(join(path, "bk"), dk.sum_axis(ndarray::Axis(1)).into_dyn());
        grads.add(join(path, "wv"), dv.dot(&hm.t()).into_dyn());
        grads.add(join(path, "bv"), dv.sum_axis(ndarray::Axis(1)).into_dyn());

        let dh3 = dh.into_shape_with_order((c, h, w)).unwrap();
        let dx_norm = self.norm.backward(x, &dh3, &join(path, "norm"), grads);
        // residual
        dx_norm + dy
    }
}

impl HasParams for AttnBlock {
    fn collect_refs<'a>(&'a self, path: &str, out: &mut Vec<(String, &'a ArrayD<f64>)>) {
        self.norm.collect_refs(&join(path, "norm"), out);
        out.push((join(path, "wq"), &self.wq));
        out.push((join(path, "bq"), &self.bq));
        out.push((join(path, "wk"), &self.wk));
        out.push((join(path, "bk"), &self.bk));
        out.push((join(path, "wv"), &self.wv));
        out.push((join(path, "bv"), &self.bv));
        out.push((join(path, "wo"), &self.wo));
        out.push((join(path, "bo"), &self.bo));
    }

    fn collect_muts<'a>(&'a mut self, path: &str, out: &mut Vec<(String, &'a mut ArrayD<f64>)>) {
        self.norm.collect_muts(&join(path, "norm"), out);
        out.push((join(path, "wq"), &mut self.wq));
        out.push((join(path, "bq"), &mut self.bq));
        out.push((join(path, "wk"), &mut self.wk));
        out.push((join(path, "bk"), &mut self.bk));
        out.push((join(path, "wv"), &mut self.wv));
        out.push((join(path, "bv"), &mut self.bv));
        out.push((join(path, "wo"), &mut self.wo));
        out.push((join(path, "bo"), &mut self.bo));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testutil::rel_err;
    use ndarray::Array3;
    use rand::Rng;

    #[test]
    fn output_keeps_shape_and_residual_base() {
        let mut rng = crate::seeded_rng(8);
        let attn = AttnBlock::new(4, &mut rng);
        let x = Array3::from_shape_simple_fn((4, 2, 3), || rng.gen_range(-1.0..1.0));
        let (y, _) = attn.forward(&x);
        assert_eq!(y.dim(), (4, 2, 3));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = crate::seeded_rng(9);
        let mut attn = AttnBlock::new(4, &mut rng);
        let mut x = Array3::from_shape_simple_fn((4, 2, 2), || rng.gen_range(-1.0..1.0));
        let dy = Array3::from_shape_simple_fn((4, 2, 2), || rng.gen_range(-1.0..1.0));

        let (_, cache) = attn.forward(&x);
        let mut grads = Grads::new();
        let dx = attn.backward(&cache, &dy, "a", &mut grads);
        let h = 1e-6;

        for idx in [(0, 0, 0), (3, 1, 1), (1, 0, 1)] {
            let orig = x[idx];
            x[idx] = orig + h;
            let up = (attn.forward(&x).0 * &dy).sum();
            x[idx] = orig - h;
            let down = (attn.forward(&x).0 * &dy).sum();
            x[idx] = orig;
            let g = (up - down) / (2.0 * h);
            assert!(rel_err(g, dx[idx]) < 1e-5, "dx {idx:?}: {g} vs {}", dx[idx]);
        }

        for (name, flat) in [("a.wq", 3usize), ("a.wk", 5), ("a.wv", 7), ("a.wo", 1)] {
            let analytic = grads.get(name).unwrap().as_slice().unwrap()[flat];
            let arr = match name {
                "a.wq" => &mut attn.wq,
                "a.wk" => &mut attn.wk,
                "a.wv" => &mut attn.wv,
                _ => &mut attn.wo,
            };
            let orig = arr.as_slice().unwrap()[flat];
            arr.as_slice_mut().unwrap()[flat] = orig + h;
            let up = (attn.forward(&x).0 * &dy).sum();
            let arr = match name {
                "a.wq" => &mut attn.wq,
                "a.wk" => &mut attn.wk,
                "a.wv" => &mut attn.wv,
                _ => &mut attn.wo,
            };
            arr.as_slice_mut().unwrap()[flat] = orig - h;
            let down = (attn.forward(&x).0 * &dy).sum();
            let arr = match name {
                "a.wq" => &mut attn.wq,
                "a.wk" => &mut attn.wk,
                "a.wv" => &mut attn.wv,
                _ => &mut attn.wo,
            };
            arr.as_slice_mut().unwrap()[flat] = orig;
            let g = (up - down) / (2.0 * h);
            assert!(rel_err(g, analytic) < 1e-5, "{name}[{flat}]: {g} vs {analytic}");
        }
    }
}
