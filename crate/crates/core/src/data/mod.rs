//! Image/mask loading, augmentation, manifests and the synthetic dataset.

mod augment;
mod manifest;
mod pnm;
mod sample;
mod synth;

pub use augment::{augment, crop, elastic, hflip, photometric, rotate, sample_rng, vflip, AugmentConfig};
pub use manifest::{split_manifest, split_sizes, DatasetManifest, ManifestEntry, Split, MANIFEST_FILE};
pub use pnm::{Pnm, PnmKind};
pub use sample::{
    denormalize, image_input, load_sample, load_sample_sized, normalize, pnm_to_tensor, stack, tensor_to_gray, tensor_to_rgb,
    SegmentationSample, INPUT_SIZE, MEAN, STD,
};
pub use synth::{synth_dataset, MASK_FRACTION};

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::Result;

/// Writes samples as `images/<id>.ppm` and `masks/<id>.pgm` under `dir`
/// plus a manifest split by `ratios`.
pub fn write_dataset(
    samples: &[SegmentationSample],
    dir: &Path,
    ratios: [usize; 3],
    seed: u64,
) -> Result<DatasetManifest> {
    fs::create_dir_all(dir.join("images"))?;
    fs::create_dir_all(dir.join("masks"))?;
    let mut pairs: Vec<(PathBuf, PathBuf)> = Vec::with_capacity(samples.len());
    for s in samples {
        let image = dir.join("images").join(format!("{}.ppm", s.id));
        let mask = dir.join("masks").join(format!("{}.pgm", s.id));
        tensor_to_rgb(&s.image)?.write(&image)?;
        tensor_to_gray(&s.mask)?.write(&mask)?;
        pairs.push((image, mask));
    }
    let manifest = split_manifest(&pairs, ratios, seed)?;
    manifest.save(dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}
