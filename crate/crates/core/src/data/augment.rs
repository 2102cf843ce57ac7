use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{config_err, Result};
use crate::tensor::{resize_bilinear, Tensor};

use super::sample::{binarize, denormalize, normalize, SegmentationSample};

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    /// Range of the crop's area as a fraction of the image area.
    pub crop_scale: (f64, f64),
    pub p_crop: f64,
    pub p_hflip: f64,
    pub p_vflip: f64,
    pub p_rot: f64,
    pub max_angle_deg: f64,
    pub p_elastic: f64,
    /// Side of the coarse displacement grid.
    pub elastic_grid: usize,
    /// Largest displacement in pixels.
    pub elastic_amplitude: f64,
    pub p_photometric: f64,
    /// Additive brightness range in `[0, 1]` pixel units.
    pub brightness: f64,
    /// Multiplicative contrast range around 1.
    pub contrast: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            crop_scale: (0.5, 1.0),
            p_crop: 1.0,
            p_hflip: 0.5,
            p_vflip: 0.5,
            p_rot: 0.6,
            max_angle_deg: 15.0,
            p_elastic: 0.3,
            elastic_grid: 4,
            elastic_amplitude: 8.0,
            p_photometric: 0.2,
            brightness: 0.2,
            contrast: 0.2,
            seed: 42,
        }
    }
}

impl AugmentConfig {
    /// Every transform disabled.
    pub fn none() -> Self {
        AugmentConfig {
            p_crop: 0.0,
            p_hflip: 0.0,
            p_vflip: 0.0,
            p_rot: 0.0,
            p_elastic: 0.0,
            p_photometric: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p_crop", self.p_crop),
            ("p_hflip", self.p_hflip),
            ("p_vflip", self.p_vflip),
            ("p_rot", self.p_rot),
            ("p_elastic", self.p_elastic),
            ("p_photometric", self.p_photometric),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(config_err!("{name} must lie in [0, 1], got {p}"));
            }
        }
        let (lo, hi) = self.crop_scale;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(config_err!("crop scale must satisfy 0 < lo <= hi <= 1, got ({lo}, {hi})"));
        }
        if self.elastic_grid < 2 {
            return Err(config_err!("elastic grid must be >= 2"));
        }
        for (name, v) in [
            ("max_angle_deg", self.max_angle_deg),
            ("elastic_amplitude", self.elastic_amplitude),
            ("brightness", self.brightness),
            ("contrast", self.contrast),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(config_err!("{name} must be finite and >= 0, got {v}"));
            }
        }
        Ok(())
    }
}

/// Random stream for one sample in one epoch, independent of the order in
/// which samples are processed.
pub fn sample_rng(seed: u64, epoch: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(index as u64);
    rng
}

#[derive(Debug, Clone, Copy)]
enum Interp {
    Bilinear,
    Nearest,
}

/// Resamples a `[C, H, W]` tensor onto an `oh x ow` grid. `map` gives the
/// source `(y, x)` in pixel units for each output pixel; sources more than
/// half a pixel outside the frame take `fill`.
fn warp(t: &Tensor<f32>, oh: usize, ow: usize, interp: Interp, fill: f32, map: impl Fn(usize, usize) -> (f64, f64)) -> Tensor<f32> {
    let s = t.shape();
    let (c, h, w) = (s[0], s[1], s[2]);
    let src = t.data();
    let coords: Vec<(f64, f64)> = (0..oh * ow).map(|i| map(i / ow, i % ow)).collect();
    let mut out = Vec::with_capacity(c * oh * ow);
    for plane in src.chunks_exact(h * w) {
        for &(sy, sx) in &coords {
            let outside = sy < -0.5 || sx < -0.5 || sy > h as f64 - 0.5 || sx > w as f64 - 0.5;
            if outside || !(sy.is_finite() && sx.is_finite()) {
                out.push(fill);
                continue;
            }
            let v = match interp {
                Interp::Nearest => {
                    let y = (sy.round().max(0.0) as usize).min(h - 1);
                    let x = (sx.round().max(0.0) as usize).min(w - 1);
                    plane[y * w + x]
                }
                Interp::Bilinear => {
                    let y = sy.clamp(0.0, (h - 1) as f64);
                    let x = sx.clamp(0.0, (w - 1) as f64);
                    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
                    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
                    let (fy, fx) = ((y - y0 as f64) as f32, (x - x0 as f64) as f32);
                    let top = (1.0 - fx) * plane[y0 * w + x0] + fx * plane[y0 * w + x1];
                    let bot = (1.0 - fx) * plane[y1 * w + x0] + fx * plane[y1 * w + x1];
                    (1.0 - fy) * top + fy * bot
                }
            };
            out.push(v);
        }
    }
    Tensor::new(&[c, oh, ow], out).expect("finite")
}

/// Applies one geometric map to image (bilinear, fill 0 = channel mean after
/// normalization) and mask (nearest, fill 0).
fn warp_sample(s: &SegmentationSample, map: impl Fn(usize, usize) -> (f64, f64)) -> SegmentationSample {
    let (h, w) = (s.height(), s.width());
    SegmentationSample {
        id: s.id.clone(),
        image: warp(&s.image, h, w, Interp::Bilinear, 0.0, &map),
        mask: binarize(&warp(&s.mask, h, w, Interp::Nearest, 0.0, &map)),
    }
}

pub fn hflip(s: &SegmentationSample) -> SegmentationSample {
    let w = s.width();
    warp_sample(s, |y, x| (y as f64, (w - 1 - x) as f64))
}

pub fn vflip(s: &SegmentationSample) -> SegmentationSample {
    let h = s.height();
    warp_sample(s, |y, x| ((h - 1 - y) as f64, x as f64))
}

/// Rotation by `degrees` (counter-clockwise) about the image center.
pub fn rotate(s: &SegmentationSample, degrees: f64) -> SegmentationSample {
    let (cy, cx) = ((s.height() - 1) as f64 / 2.0, (s.width() - 1) as f64 / 2.0);
    let (sin, cos) = degrees.to_radians().sin_cos();
    warp_sample(s, |y, x| {
        let (dy, dx) = (y as f64 - cy, x as f64 - cx);
        (cy - sin * dx + cos * dy, cx + cos * dx + sin * dy)
    })
}

/// Square crop at `(top, left)` with side `side`, resized back to the
/// original extents.
pub fn crop(s: &SegmentationSample, top: usize, left: usize, side: usize) -> SegmentationSample {
    let (h, w) = (s.height(), s.width());
    let (ky, kx) = (side as f64 / h as f64, side as f64 / w as f64);
    warp_sample(s, |y, x| {
        (
            top as f64 + (y as f64 + 0.5) * ky - 0.5,
            left as f64 + (x as f64 + 0.5) * kx - 0.5,
        )
    })
}

/// Displaces every pixel by a field `[2, g, g]` (dy, dx in pixels)
/// upsampled bilinearly to the image size.
pub fn elastic(s: &SegmentationSample, coarse: &Tensor<f32>) -> Result<SegmentationSample> {
    let g = coarse.shape();
    let field = resize_bilinear(&coarse.reshape(&[1, 2, g[1], g[2]])?, s.height(), s.width())?;
    let plane = s.height() * s.width();
    let w = s.width();
    let d = field.data();
    Ok(warp_sample(s, |y, x| {
        let i = y * w + x;
        (y as f64 + d[i] as f64, x as f64 + d[plane + i] as f64)
    }))
}

/// `clamp(contrast * x + brightness)` in `[0, 1]` pixel space; image only.
pub fn photometric(s: &SegmentationSample, brightness: f32, contrast: f32) -> SegmentationSample {
    let raw = denormalize(&s.image).map(|v| (contrast * v + brightness).clamp(0.0, 1.0));
    SegmentationSample {
        id: s.id.clone(),
        image: normalize(&raw),
        mask: s.mask.clone(),
    }
}

/// Random crop, flips, rotation, elastic deformation and photometric
/// jitter, each drawn independently with its probability. Output extents
/// equal the input's.
pub fn augment(sample: &SegmentationSample, cfg: &AugmentConfig, rng: &mut ChaCha8Rng) -> Result<SegmentationSample> {
    cfg.validate()?;
    let mut s = sample.clone();
    let (h, w) = (s.height(), s.width());
    if rng.gen_bool(cfg.p_crop) {
        let short = h.min(w);
        for _ in 0..10 {
            let scale = rng.gen_range(cfg.crop_scale.0..=cfg.crop_scale.1);
            let side = (scale.sqrt() * short as f64).round() as usize;
            if side < 2 || side > short {
                continue;
            }
            let top = rng.gen_range(0..=h - side);
            let left = rng.gen_range(0..=w - side);
            if side != short || h != w {
                s = crop(&s, top, left, side);
            }
            break;
        }
    }
    if rng.gen_bool(cfg.p_hflip) {
        s = hflip(&s);
    }
    if rng.gen_bool(cfg.p_vflip) {
        s = vflip(&s);
    }
    if rng.gen_bool(cfg.p_rot) {
        let a = cfg.max_angle_deg;
        s = rotate(&s, rng.gen_range(-a..=a));
    }
    if rng.gen_bool(cfg.p_elastic) {
        let (g, amp) = (cfg.elastic_grid, cfg.elastic_amplitude as f32);
        let coarse = Tensor::from_fn(&[2, g, g], |_| rng.gen_range(-amp..=amp))?;
        s = elastic(&s, &coarse)?;
    }
    if rng.gen_bool(cfg.p_photometric) {
        let b = cfg.brightness as f32;
        let c = cfg.contrast as f32;
        let brightness = rng.gen_range(-b..=b);
        let contrast = rng.gen_range(1.0 - c..=1.0 + c);
        s = photometric(&s, brightness, contrast);
    }
    Ok(s)
}
