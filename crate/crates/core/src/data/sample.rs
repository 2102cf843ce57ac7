use std::path::Path;

use crate::error::{dim_err, Result};
use crate::tensor::{resize_bilinear, Tensor};

use super::pnm::{Pnm, PnmKind};

/// Per-channel normalization constants (ImageNet statistics).
pub const MEAN: [f32; 3] = [0.485, 0.456, 0.406];
pub const STD: [f32; 3] = [0.229, 0.224, 0.225];

/// Default square side images are resized to.
pub const INPUT_SIZE: usize = 224;

/// A normalized `[3, H, W]` image with its binary `[1, H, W]` mask.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationSample {
    pub id: String,
    pub image: Tensor<f32>,
    pub mask: Tensor<f32>,
}

impl SegmentationSample {
    pub fn new(id: impl Into<String>, image: Tensor<f32>, mask: Tensor<f32>) -> Result<Self> {
        let (is, ms) = (image.shape(), mask.shape());
        if is.len() != 3 || is[0] != 3 || ms.len() != 3 || ms[0] != 1 || is[1..] != ms[1..] {
            return Err(dim_err!("image {is:?} and mask {ms:?} must be [3,H,W] and [1,H,W]"));
        }
        Ok(SegmentationSample {
            id: id.into(),
            image,
            mask,
        })
    }

    pub fn height(&self) -> usize {
        self.image.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.image.shape()[2]
    }
}

/// `[C, H, W]` in `[0, 1]`.
pub fn pnm_to_tensor(img: &Pnm) -> Tensor<f32> {
    let (c, h, w) = (img.kind.channels(), img.height, img.width);
    Tensor::from_fn(&[c, h, w], |i| {
        let (ch, p) = (i / (h * w), i % (h * w));
        img.pixels[p * c + ch] as f32 / 255.0
    })
    .expect("pixel values are finite")
}

/// Single-channel `[1, H, W]` (or `[H, W]`-sized) tensor to a P5 image,
/// values clamped to `[0, 1]` and rounded.
pub fn tensor_to_gray(t: &Tensor<f32>) -> Result<Pnm> {
    let s = t.shape();
    let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
    if t.numel() != h * w {
        return Err(dim_err!("expected a single-channel image, got {s:?}"));
    }
    let pixels = t.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    Pnm::new(PnmKind::Gray, w, h, pixels)
}

/// Normalized `[3, H, W]` image back to a P6 image.
pub fn tensor_to_rgb(t: &Tensor<f32>) -> Result<Pnm> {
    let s = t.shape();
    if s.len() != 3 || s[0] != 3 {
        return Err(dim_err!("expected [3, H, W], got {s:?}"));
    }
    let (h, w) = (s[1], s[2]);
    let raw = denormalize(t);
    let mut pixels = vec![0u8; 3 * h * w];
    for (i, v) in raw.data().iter().enumerate() {
        let (ch, p) = (i / (h * w), i % (h * w));
        pixels[p * 3 + ch] = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    }
    Pnm::new(PnmKind::Rgb, w, h, pixels)
}

/// `(x - mean_c) / std_c` on a `[3, H, W]` image in `[0, 1]`.
pub fn normalize(raw: &Tensor<f32>) -> Tensor<f32> {
    per_channel(raw, |c, v| (v - MEAN[c]) / STD[c])
}

pub fn denormalize(x: &Tensor<f32>) -> Tensor<f32> {
    per_channel(x, |c, v| v * STD[c] + MEAN[c])
}

fn per_channel(x: &Tensor<f32>, f: impl Fn(usize, f32) -> f32) -> Tensor<f32> {
    let plane = x.shape()[1..].iter().product::<usize>();
    let data = x.data();
    Tensor::from_fn(x.shape(), |i| f(i / plane, data[i])).expect("finite")
}

/// Bilinear resize of a `[C, H, W]` tensor.
pub(crate) fn resize_chw(t: &Tensor<f32>, h: usize, w: usize) -> Result<Tensor<f32>> {
    let s = t.shape();
    let batched = t.reshape(&[1, s[0], s[1], s[2]])?;
    resize_bilinear(&batched, h, w)?.reshape(&[s[0], h, w])
}

pub(crate) fn binarize(t: &Tensor<f32>) -> Tensor<f32> {
    t.map(|v| if v >= 0.5 { 1.0 } else { 0.0 })
}

/// Normalized `[3, size, size]` network input from a P6 image.
pub fn image_input(img: &Pnm, size: usize) -> Result<Tensor<f32>> {
    if img.kind != PnmKind::Rgb {
        return Err(crate::Error::UnsupportedFormat("expected an RGB (P6) image".into()));
    }
    Ok(normalize(&resize_chw(&pnm_to_tensor(img), size, size)?))
}

/// Decodes, resizes to `size x size`, thresholds the mask and normalizes.
pub fn load_sample_sized(image_path: &Path, mask_path: &Path, size: usize) -> Result<SegmentationSample> {
    let img = Pnm::read(image_path)?;
    let mask = Pnm::read(mask_path)?;
    if img.kind != PnmKind::Rgb {
        return Err(crate::Error::UnsupportedFormat(format!(
            "{} is not an RGB (P6) image",
            image_path.display()
        )));
    }
    if mask.kind != PnmKind::Gray {
        return Err(crate::Error::UnsupportedFormat(format!(
            "{} is not a grayscale (P5) mask",
            mask_path.display()
        )));
    }
    if (img.width, img.height) != (mask.width, mask.height) {
        return Err(dim_err!(
            "image is {}x{} but mask is {}x{}",
            img.width,
            img.height,
            mask.width,
            mask.height
        ));
    }
    let image = normalize(&resize_chw(&pnm_to_tensor(&img), size, size)?);
    let mask = binarize(&resize_chw(&pnm_to_tensor(&mask), size, size)?);
    let id = image_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    SegmentationSample::new(id, image, mask)
}

pub fn load_sample(image_path: &Path, mask_path: &Path) -> Result<SegmentationSample> {
    load_sample_sized(image_path, mask_path, INPUT_SIZE)
}

/// Stacks samples into `([N, 3, H, W], [N, 1, H, W])`.
pub fn stack(samples: &[&SegmentationSample]) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let first = samples.first().ok_or_else(|| crate::Error::Contract("empty batch".into()))?;
    let (h, w) = (first.height(), first.width());
    let mut images = Vec::with_capacity(samples.len() * 3 * h * w);
    let mut masks = Vec::with_capacity(samples.len() * h * w);
    for s in samples {
        if (s.height(), s.width()) != (h, w) {
            return Err(dim_err!("sample {} is {}x{}, batch is {h}x{w}", s.id, s.height(), s.width()));
        }
        images.extend_from_slice(s.image.data());
        masks.extend_from_slice(s.mask.data());
    }
    let n = samples.len();
    Ok((Tensor::new(&[n, 3, h, w], images)?, Tensor::new(&[n, 1, h, w], masks)?))
}
