use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{config_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(config_err!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub image: PathBuf,
    pub mask: PathBuf,
    pub split: Split,
}

/// Image/mask pairs with split tags, stored as `image<TAB>mask<TAB>split`
/// lines. Relative paths are resolved against the manifest's directory.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

/// Conventional manifest name inside a dataset directory.
pub const MANIFEST_FILE: &str = "manifest.tsv";

impl DatasetManifest {
    pub fn split(&self, split: Split) -> Vec<&ManifestEntry> {
        self.entries.iter().filter(|e| e.split == split).collect()
    }

    pub fn counts(&self) -> [usize; 3] {
        Split::ALL.map(|s| self.entries.iter().filter(|e| e.split == s).count())
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [image, mask, split] = fields[..] else {
                return Err(config_err!(
                    "manifest line {}: expected 3 tab-separated fields, got {}",
                    i + 1,
                    fields.len()
                ));
            };
            entries.push(ManifestEntry {
                image: base.join(image),
                mask: base.join(mask),
                split: split.trim().parse()?,
            });
        }
        Ok(DatasetManifest { entries })
    }

    /// Paths are written relative to `base` when they lie under it.
    pub fn to_text(&self, base: &Path) -> String {
        let rel = |p: &Path| p.strip_prefix(base).unwrap_or(p).display().to_string();
        self.entries
            .iter()
            .map(|e| format!("{}\t{}\t{}\n", rel(&e.image), rel(&e.mask), e.split))
            .collect()
    }

    /// Reads a manifest file, or `manifest.tsv` inside a directory, and
    /// checks that every referenced file exists.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut path = path.as_ref().to_path_buf();
        if path.is_dir() {
            path.push(MANIFEST_FILE);
        }
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let m = Self::parse(&fs::read_to_string(&path)?, &base)?;
        for e in &m.entries {
            for p in [&e.image, &e.mask] {
                if !p.is_file() {
                    return Err(Error::Io(std::io::Error::new(
                        std::io::ErrorKind::NotFound,
                        format!("manifest references missing file {}", p.display()),
                    )));
                }
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new(""));
        fs::write(path, self.to_text(base))?;
        Ok(())
    }
}

/// Split sizes `floor(n * r_train / R)`, `floor(n * r_valid / R)`, rest.
pub fn split_sizes(n: usize, ratios: [usize; 3]) -> Result<[usize; 3]> {
    let total: usize = ratios.iter().sum();
    if total == 0 {
        return Err(config_err!("split ratios must not all be zero"));
    }
    let train = n * ratios[0] / total;
    let valid = n * ratios[1] / total;
    Ok([train, valid, n - train - valid])
}

/// Shuffles `(image, mask)` pairs with `seed` and tags them by `ratios`.
pub fn split_manifest(pairs: &[(PathBuf, PathBuf)], ratios: [usize; 3], seed: u64) -> Result<DatasetManifest> {
    if pairs.is_empty() {
        return Err(Error::Contract("cannot split an empty entry list".into()));
    }
    let [train, valid, _] = split_sizes(pairs.len(), ratios)?;
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let entries = order
        .iter()
        .enumerate()
        .map(|(rank, &i)| ManifestEntry {
            image: pairs[i].0.clone(),
            mask: pairs[i].1.clone(),
            split: if rank < train {
                Split::Train
            } else if rank < train + valid {
                Split::Valid
            } else {
                Split::Test
            },
        })
        .collect();
    Ok(DatasetManifest { entries })
}
