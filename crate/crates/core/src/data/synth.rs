use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::sample::{normalize, SegmentationSample};

/// Allowed range of foreground fraction per mask.
pub const MASK_FRACTION: (f64, f64) = (0.02, 0.6);

#[derive(Debug, Clone, Copy)]
struct Ellipse {
    cy: f64,
    cx: f64,
    ry: f64,
    rx: f64,
    cos: f64,
    sin: f64,
}

impl Ellipse {
    fn contains(&self, y: f64, x: f64) -> bool {
        let (dy, dx) = (y - self.cy, x - self.cx);
        let u = (dx * self.cos + dy * self.sin) / self.rx;
        let v = (-dx * self.sin + dy * self.cos) / self.ry;
        u * u + v * v <= 1.0
    }

    fn random(rng: &mut ChaCha8Rng, size: f64) -> Self {
        let angle: f64 = rng.gen_range(0.0..std::f64::consts::PI);
        Ellipse {
            cy: rng.gen_range(0.15..0.85) * size,
            cx: rng.gen_range(0.15..0.85) * size,
            ry: rng.gen_range(0.08..0.3) * size,
            rx: rng.gen_range(0.08..0.3) * size,
            cos: angle.cos(),
            sin: angle.sin(),
        }
    }
}

/// Mask of pixel centers inside any shape, and 4x4 supersampled coverage.
fn rasterize(shapes: &[Ellipse], size: usize) -> (Vec<f32>, Vec<f32>) {
    let mut mask = vec![0.0; size * size];
    let mut cover = vec![0.0; size * size];
    for y in 0..size {
        for x in 0..size {
            let (cy, cx) = (y as f64 + 0.5, x as f64 + 0.5);
            if shapes.iter().any(|e| e.contains(cy, cx)) {
                mask[y * size + x] = 1.0;
            }
            let mut hits = 0;
            for sy in 0..4 {
                for sx in 0..4 {
                    let py = y as f64 + (sy as f64 + 0.5) / 4.0;
                    let px = x as f64 + (sx as f64 + 0.5) / 4.0;
                    hits += shapes.iter().any(|e| e.contains(py, px)) as u32;
                }
            }
            cover[y * size + x] = hits as f32 / 16.0;
        }
    }
    (mask, cover)
}

fn one_sample(rng: &mut ChaCha8Rng, id: String, size: usize) -> Result<SegmentationSample> {
    let s = size as f64;
    let plane = size * size;
    let (mut mask, mut cover) = (Vec::new(), Vec::new());
    let mut accepted = false;
    for _ in 0..50 {
        let count = rng.gen_range(1..=3);
        let shapes: Vec<Ellipse> = (0..count).map(|_| Ellipse::random(rng, s)).collect();
        (mask, cover) = rasterize(&shapes, size);
        let frac = mask.iter().sum::<f32>() as f64 / plane as f64;
        if (MASK_FRACTION.0..=MASK_FRACTION.1).contains(&frac) {
            accepted = true;
            break;
        }
    }
    if !accepted {
        let centered = Ellipse {
            cy: s / 2.0,
            cx: s / 2.0,
            ry: s / 4.0,
            rx: s / 4.0,
            cos: 1.0,
            sin: 0.0,
        };
        (mask, cover) = rasterize(&[centered], size);
    }

    // background and foreground colors far enough apart to be separable
    let bg: [f32; 3] = std::array::from_fn(|_| rng.gen_range(0.15..0.45));
    let fg: [f32; 3] = std::array::from_fn(|c| (bg[c] + rng.gen_range(0.3..0.5)).min(1.0));
    let noise = 0.08f32;
    let mut raw = vec![0.0f32; 3 * plane];
    for c in 0..3 {
        for i in 0..plane {
            let base = bg[c] + (fg[c] - bg[c]) * cover[i];
            raw[c * plane + i] = (base + rng.gen_range(-noise..noise)).clamp(0.0, 1.0);
        }
    }
    let image = normalize(&Tensor::new(&[3, size, size], raw)?);
    SegmentationSample::new(id, image, Tensor::new(&[1, size, size], mask)?)
}

/// `n` noisy images of one to three ellipses with their masks; sample `i`
/// depends only on `(seed, i, size)`.
pub fn synth_dataset(n: usize, seed: u64, size: usize) -> Result<Vec<SegmentationSample>> {
    if n == 0 {
        return Err(Error::Contract("synthetic dataset needs n >= 1".into()));
    }
    if size < 8 {
        return Err(Error::Contract(format!("synthetic images need size >= 8, got {size}")));
    }
    (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            one_sample(&mut rng, format!("synth_{i:05}"), size)
        })
        .collect()
}
