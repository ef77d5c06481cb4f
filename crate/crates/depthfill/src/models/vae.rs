//! Toy autoencoder: 3 down/up levels (8x spatial), 4-channel latent,
//! ResNet blocks with one attention layer in each mid block.
//!
//! The decoder exposes five feature levels (after conv-in, after the mid
//! block, and after each of the three up stages); the conditional decoder
//! injects the sparse-depth features at exactly these points.

use ndarray::{Array3, ArrayD};
use rand::Rng;

use crate::nn::{
    join, silu, silu_backward, AttnBlock, AttnCache, Conv2d, Downsample, GroupNorm, Grads,
    HasParams, Init, ResBlock, ResBlockCache, Upsample2x,
};

/// Latent channel count; fixed by the architecture.
pub const LATENT_CHANNELS: usize = 4;
/// Spatial compression factor of the autoencoder.
pub const SPATIAL_FACTOR: usize = 8;
/// Number of decoder feature levels exposed for fusion.
pub const FEATURE_LEVELS: usize = 5;

#[derive(Debug, Clone)]
pub struct Encoder {
    pub conv_in: Conv2d,
    pub res0: ResBlock,
    pub down0: Downsample,
    pub res1: ResBlock,
    pub down1: Downsample,
    pub res2: ResBlock,
    pub down2: Downsample,
    pub mid1: ResBlock,
    pub attn: AttnBlock,
    pub mid2: ResBlock,
    pub norm_out: GroupNorm,
    pub conv_out: Conv2d,
}

#[derive(Debug)]
pub struct EncoderCache {
    pub x: Array3<f64>,
    pub c_res0: ResBlockCache,
    pub x_down0: Array3<f64>,
    pub c_res1: ResBlockCache,
    pub x_down1: Array3<f64>,
    pub c_res2: ResBlockCache,
    pub x_down2: Array3<f64>,
    pub c_mid1: ResBlockCache,
    pub c_attn: AttnCache,
    pub c_mid2: ResBlockCache,
    pub x_norm: Array3<f64>,
    pub a_norm: Array3<f64>,
}

impl Encoder {
    pub fn new(in_channels: usize, w: usize, rng: &mut impl Rng) -> Self {
        Self {
            conv_in: Conv2d::new(in_channels, w, 3, 1, 1, Init::Kaiming, rng),
            res0: ResBlock::new(w, w, None, rng),
            down0: Downsample::new(w, 2 * w, rng),
            res1: ResBlock::new(2 * w, 2 * w, None, rng),
            down1: Downsample::new(2 * w, 4 * w, rng),
            res2: ResBlock::new(4 * w, 4 * w, None, rng),
            down2: Downsample::new(4 * w, 4 * w, rng),
            mid1: ResBlock::new(4 * w, 4 * w, None, rng),
            attn: AttnBlock::new(4 * w, rng),
            mid2: ResBlock::new(4 * w, 4 * w, None, rng),
            norm_out: GroupNorm::new(4 * w, 8),
            conv_out: Conv2d::new(4 * w, LATENT_CHANNELS, 3, 1, 1, Init::Kaiming, rng),
        }
    }

    pub fn forward(&self, x: &Array3<f64>) -> (Array3<f64>, EncoderCache) {
        let h0 = self.conv_in.forward(x);
        let (r0, c_res0) = self.res0.forward(&h0, None);
        let d0 = self.down0.forward(&r0);
        let (r1, c_res1) = self.res1.forward(&d0, None);
        let d1 = self.down1.forward(&r1);
        let (r2, c_res2) = self.res2.forward(&d1, None);
        let d2 = self.down2.forward(&r2);
        let (m1, c_mid1) = self.mid1.forward(&d2, None);
        let (at, c_attn) = self.attn.forward(&m1);
        let (m2, c_mid2) = self.mid2.forward(&at, None);
        let a_norm = self.norm_out.forward(&m2);
        let z = self.conv_out.forward(&silu(&a_norm));
        (
            z,
            EncoderCache {
                x: x.clone(),
                c_res0,
                x_down0: r0,
                c_res1,
                x_down1: r1,
                c_res2,
                x_down2: r2,
                c_mid1,
                c_attn,
                c_mid2,
                x_norm: m2,
                a_norm,
            },
        )
    }

    pub fn backward(
        &self,
        cache: &EncoderCache,
        dz: &Array3<f64>,
        path: &str,
        grads: &mut Grads,
    ) -> Array3<f64> {
        let s = silu(&cache.a_norm);
        let da = self.conv_out.backward(&s, dz, &join(path, "conv_out"), grads);
        let da = silu_backward(&cache.a_norm, &da);
        let dm2 = self
            .norm_out
            .backward(&cache.x_norm, &da, &join(path, "norm_out"), grads);
        let (dat, _) = self.mid2.backward(&cache.c_mid2, &dm2, &join(path, "mid2"), grads);
        let dm1 = self.attn.backward(&cache.c_attn, &dat, &join(path, "attn"), grads);
        let (dd2, _) = self.mid1.backward(&cache.c_mid1, &dm1, &join(path, "mid1"), grads);
        let dr2 = self
            .down2
            .backward(&cache.x_down2, &dd2, &join(path, "down2"), grads);
        let (dd1, _) = self.res2.backward(&cache.c_res2, &dr2, &join(path, "res2"), grads);
        let dr1 = self
            .down1
            .backward(&cache.x_down1, &dd1, &join(path, "down1"), grads);
        let (dd0, _) = self.res1.backward(&cache.c_res1, &dr1, &join(path, "res1"), grads);
        let dr0 = self
            .down0
            .backward(&cache.x_down0, &dd0, &join(path, "down0"), grads);
        let (dh0, _) = self.res0.backward(&cache.c_res0, &dr0, &join(path, "res0"), grads);
        self.conv_in
            .backward(&cache.x, &dh0, &join(path, "conv_in"), grads)
    }
}

impl HasParams for Encoder {
    fn collect_refs<'a>(&'a self, path: &str, out: &mut Vec<(String, &'a ArrayD<f64>)>) {
        self.conv_in.collect_refs(&join(path, "conv_in"), out);
        self.res0.collect_refs(&join(path, "res0"), out);
        self.down0.collect_refs(&join(path, "down0"), out);
        self.res1.collect_refs(&join(path, "res1"), out);
        self.down1.collect_refs(&join(path, "down1"), out);
        self.res2.collect_refs(&join(path, "res2"), out);
        self.down2.collect_refs(&join(path, "down2"), out);
        self.mid1.collect_refs(&join(path, "mid1"), out);
        self.attn.collect_refs(&join(path, "attn"), out);
        self.mid2.collect_refs(&join(path, "mid2"), out);
        self.norm_out.collect_refs(&join(path, "norm_out"), out);
        self.conv_out.collect_refs(&join(path, "conv_out"), out);
    }

    fn collect_muts<'a>(&'a mut self, path: &str, out: &mut Vec<(String, &'a mut ArrayD<f64>)>) {
        self.conv_in.collect_muts(&join(path, "conv_in"), out);
        self.res0.collect_muts(&join(path, "res0"), out);
        self.down0.collect_muts(&join(path, "down0"), out);
        self.res1.collect_muts(&join(path, "res1"), out);
        self.down1.collect_muts(&join(path, "down1"), out);
        self.res2.collect_muts(&join(path, "res2"), out);
        self.down2.collect_muts(&join(path, "down2"), out);
        self.mid1.collect_muts(&join(path, "mid1"), out);
        self.attn.collect_muts(&join(path, "attn"), out);
        self.mid2.collect_muts(&join(path, "mid2"), out);
        self.norm_out.collect_muts(&join(path, "norm_out"), out);
        self.conv_out.collect_muts(&join(path, "conv_out"), out);
    }
}

#[derive(Debug, Clone)]
pub struct Decoder {
    pub conv_in: Conv2d,
    pub mid1: ResBlock,
    pub attn: AttnBlock,
    pub mid2: ResBlock,
    pub up0: Upsample2x,
    pub upres0: ResBlock,
    pub up1: Upsample2x,
    pub upres1: ResBlock,
    pub up2: Upsample2x,
    pub upres2: ResBlock,
    pub norm_out: GroupNorm,
    pub conv_out: Conv2d,
    pub base_width: usize,
}

impl Decoder {
    pub fn new(out_channels: usize, w: usize, rng: &mut impl Rng) -> Self {
        Self {
            conv_in: Conv2d::new(LATENT_CHANNELS, 4 * w, 3, 1, 1, Init::Kaiming, rng),
            mid1: ResBlock::new(4 * w, 4 * w, None, rng),
            attn: AttnBlock::new(4 * w, rng),
            mid2: ResBlock::new(4 * w, 4 * w, None, rng),
            up0: Upsample2x::new(4 * w, 4 * w, rng),
            upres0: ResBlock::new(4 * w, 2 * w, None, rng),
            up1: Upsample2x::new(2 * w, 2 * w, rng),
            upres1: ResBlock::new(2 * w, w, None, rng),
            up2: Upsample2x::new(w, w, rng),
            upres2: ResBlock::new(w, w, None, rng),
            norm_out: GroupNorm::new(w, 8),
            conv_out: Conv2d::new(w, out_channels, 3, 1, 1, Init::Kaiming, rng),
            base_width: w,
        }
    }

    /// Channel counts of the five decoder feature levels.
    pub fn feature_channels(&self) -> [usize; FEATURE_LEVELS] {
        let w = self.base_width;
        [4 * w, 4 * w, 2 * w, w, w]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encoder_compresses_by_eight() {
        let mut rng = crate::seeded_rng(30);
        let enc = Encoder::new(3, 8, &mut rng);
        let x = Array3::from_shape_simple_fn((3, 32, 24), || 0.1);
        let (z, _) = enc.forward(&x);
        assert_eq!(z.dim(), (LATENT_CHANNELS, 4, 3));
    }

    #[test]
    fn encoder_gradcheck_spot() {
        let mut rng = crate::seeded_rng(31);
        let mut enc = Encoder::new(3, 4, &mut rng);
        let x = Array3::from_shape_simple_fn((3, 8, 8), || {
            use rand::Rng as _;
            rng.gen_range(-1.0..1.0)
        });
        let dz = Array3::from_shape_simple_fn((LATENT_CHANNELS, 1, 1), |_| 1.0);
        let (_, cache) = enc.forward(&x);
        let mut grads = Grads::new();
        enc.backward(&cache, &dz, "e", &mut grads);
        let analytic = grads.get("e.res1.conv1.w").unwrap().as_slice().unwrap()[3];
        let h = 1e-5;
        let probe = |enc: &Encoder| (enc.forward(&x).0.clone() * &dz).sum();
        let orig = enc.res1.conv1.w.as_slice().unwrap()[3];
        enc.res1.conv1.w.as_slice_mut().unwrap()[3] = orig + h;
        let up = probe(&enc);
        enc.res1.conv1.w.as_slice_mut().unwrap()[3] = orig - h;
        let down = probe(&enc);
        enc.res1.conv1.w.as_slice_mut().unwrap()[3] = orig;
        let g = (up - down) / (2.0 * h);
        let rel = (g - analytic).abs() / g.abs().max(analytic.abs()).max(1e-8);
        assert!(rel < 1e-4, "encoder grad: fd {g} vs analytic {analytic}");
    }
}
