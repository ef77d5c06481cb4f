//! Minimal neural-network layers with hand-written backprop.
//!
//! Everything is `f64` on the CPU and fully deterministic: forward passes
//! are pure functions of weights and inputs, backward passes accumulate
//! named gradients into a [`Grads`] store in a fixed order. Convolutions go
//! through im2col + matrix multiply; the only stateful thing anywhere is
//! the weight arrays themselves.
//!
//! Layers return an explicit cache from `forward` that `backward` consumes,
//! so there is no tape or graph machinery to trust — each layer's gradient
//! is checked against central finite differences in its own unit test.

mod act;
mod attn;
mod conv;
mod linear;
mod norm;
mod resblock;
mod temb;

pub use act::{silu, silu_backward};
pub use attn::{AttnBlock, AttnCache};
pub use conv::{Conv2d, Init};
pub use linear::Linear;
pub use norm::GroupNorm;
pub use resblock::{Downsample, ResBlock, ResBlockCache, Upsample2x};
pub use temb::TimestepEmbedding;

use indexmap::IndexMap;
use ndarray::ArrayD;

/// Named gradient accumulator.
///
/// Keys are parameter paths like `"unet.mid.res1.conv1.w"`. Accumulation
/// order is caller-controlled and deterministic, so summed gradients are
/// bit-reproducible.
#[derive(Debug, Default)]
pub struct Grads {
    map: IndexMap<String, ArrayD<f64>>,
}

impl Grads {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add `g` into the slot for `name`.
    pub fn add(&mut self, name: String, g: ArrayD<f64>) {
        match self.map.get_mut(&name) {
            Some(acc) => *acc += &g,
            None => {
                self.map.insert(name, g);
            }
        }
    }

    pub fn get(&self, name: &str) -> Option<&ArrayD<f64>> {
        self.map.get(name)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ArrayD<f64>)> {
        self.map.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }

    /// Fold another accumulator into this one (entry-wise add).
    pub fn merge(&mut self, other: Grads) {
        for (k, v) in other.map {
            self.add(k, v);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for (_, g) in self.map.iter_mut() {
            *g *= s;
        }
    }

    /// Largest absolute entry across all gradients (NaN-propagating).
    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for (_, g) in self.map.iter() {
            for v in g.iter() {
                if v.is_nan() {
                    return f64::NAN;
                }
                m = m.max(v.abs());
            }
        }
        m
    }
}

/// Uniform access to a module's parameters by path.
///
/// `collect_refs`/`collect_muts` push `(path, array)` pairs in a fixed
/// traversal order; the optimizer, checkpointing, and gradient checks all
/// address weights through these names.
pub trait HasParams {
    fn collect_refs<'a>(&'a self, path: &str, out: &mut Vec<(String, &'a ArrayD<f64>)>);
    fn collect_muts<'a>(&'a mut self, path: &str, out: &mut Vec<(String, &'a mut ArrayD<f64>)>);

    fn named_params(&self) -> Vec<(String, &ArrayD<f64>)> {
        let mut out = Vec::new();
        self.collect_refs("", &mut out);
        out
    }

    /// Total number of scalar parameters.
    fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, a)| a.len()).sum()
    }
}

/// Join a path prefix and a component.
pub fn join(path: &str, name: &str) -> String {
    if path.is_empty() {
        name.to_string()
    } else {
        format!("{path}.{name}")
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    //! Shared check for the per-layer finite-difference gradient tests.

    /// Relative error with an absolute floor for near-zero gradients.
    pub fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }
}
