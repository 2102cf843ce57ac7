//! Fixtures shared by the criterion benchmarks in `benches/`.

use dyglnet::data::{stack, synth_dataset};
use dyglnet::{Result, Tensor};

/// Deterministic values in `[-1, 1)` without an RNG dependency.
pub fn pattern(shape: &[usize], salt: u64) -> Result<Tensor<f32>> {
    Tensor::from_fn(shape, |i| {
        let h = (i as u64 ^ salt).wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 40;
        (h % 2000) as f32 / 1000.0 - 1.0
    })
}

/// A sampling grid `[n, h, w, 2]` inside `[-0.9, 0.9]`.
pub fn grid(n: usize, h: usize, w: usize) -> Result<Tensor<f32>> {
    pattern(&[n, h, w, 2], 7).map(|t| t.map(|v| v * 0.9))
}

/// A batch of synthetic images and masks.
pub fn batch(n: usize, size: usize) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let samples = synth_dataset(n, 1, size)?;
    stack(&samples.iter().collect::<Vec<_>>())
}
