//! Datasets on disk, image loading and cross-validation splits.
//!
//! Layout: `root/<class>/<set>/<image files>`. Classes, sets and images are
//! enumerated in lexicographic order so a manifest is deterministic.
//!
//! Splits are drawn with xoshiro256++ seeded through SplitMix64
//! (`rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64`). With state
//! `s0..s3`, each draw returns `rotl(s0 + s3, 23) + s0` and updates
//! `t = s1 << 17; s2 ^= s0; s3 ^= s1; s1 ^= s2; s0 ^= s3; s2 ^= t; s3 = rotl(s3, 45)`.
//! A uniform index below `n` is `(x · n) >> 64` on the 128-bit product, and
//! sets are shuffled with Fisher–Yates from the last position down.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;

use crate::descriptors::ImageSet;
use crate::error::{Error, Result};

/// Default side length images are resized to.
pub const DEFAULT_SIZE: usize = 24;

/// Image file extensions picked up by [`scan_dataset`].
pub const IMAGE_EXTENSIONS: [&str; 3] = ["pgm", "pnm", "png"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SetEntry {
    pub name: String,
    pub images: Vec<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassEntry {
    pub name: String,
    pub sets: Vec<SetEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub classes: Vec<ClassEntry>,
}

/// `<class>/<set>`, the identifier used for a set everywhere else.
pub fn set_id(class: &str, set: &str) -> String {
    format!("{class}/{set}")
}

impl DatasetManifest {
    pub fn class_names(&self) -> Vec<&str> {
        self.classes.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn set_count(&self) -> usize {
        self.classes.iter().map(|c| c.sets.len()).sum()
    }

    pub fn min_sets_per_class(&self) -> usize {
        self.classes.iter().map(|c| c.sets.len()).min().unwrap_or(0)
    }

    /// `(class, set)` pairs in manifest order.
    pub fn iter_sets(&self) -> impl Iterator<Item = (&ClassEntry, &SetEntry)> {
        self.classes
            .iter()
            .flat_map(|c| c.sets.iter().map(move |s| (c, s)))
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<(String, PathBuf, bool)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        let is_dir = path.is_dir();
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.starts_with('.') {
            continue;
        }
        out.push((name, path, is_dir));
    }
    out.sort();
    Ok(out)
}

fn check_name(kind: &str, name: &str, path: &Path) -> Result<()> {
    if name.chars().any(|c| c.is_whitespace() || c == ',' || c == '/') {
        return Err(Error::invalid(format!(
            "{}: {kind} name {name:?} must not contain whitespace, ',' or '/'",
            path.display()
        )));
    }
    Ok(())
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

pub fn scan_dataset(root: &Path) -> Result<DatasetManifest> {
    let mut classes = Vec::new();
    for (class_name, class_path, is_dir) in sorted_entries(root)? {
        if !is_dir {
            continue;
        }
        check_name("class", &class_name, &class_path)?;
        let mut sets = Vec::new();
        for (set_name, set_path, is_dir) in sorted_entries(&class_path)? {
            if !is_dir {
                continue;
            }
            check_name("set", &set_name, &set_path)?;
            let images: Vec<PathBuf> = sorted_entries(&set_path)?
                .into_iter()
                .filter(|(_, p, d)| !d && is_image(p))
                .map(|(_, p, _)| p)
                .collect();
            if images.is_empty() {
                return Err(Error::invalid(format!(
                    "{}: image set contains no images",
                    set_path.display()
                )));
            }
            sets.push(SetEntry {
                name: set_name,
                images,
            });
        }
        if sets.is_empty() {
            return Err(Error::invalid(format!(
                "{}: class contains no image sets",
                class_path.display()
            )));
        }
        classes.push(ClassEntry {
            name: class_name,
            sets,
        });
    }
    if classes.is_empty() {
        return Err(Error::invalid(format!(
            "{}: found 0 classes",
            root.display()
        )));
    }
    Ok(DatasetManifest {
        root: root.to_path_buf(),
        classes,
    })
}

/// A decoded grayscale image with intensities in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f64>,
}

/// Decodes an image file to grayscale `[0, 1]` intensities.
///
/// Color sources are reduced with luma weights 0.299 / 0.587 / 0.114.
pub fn load_image(path: &Path) -> Result<GrayImage> {
    let decode_err = |msg: String| Error::Decode {
        path: path.to_path_buf(),
        msg,
    };
    let img = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| decode_err(e.to_string()))?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    if width == 0 || height == 0 {
        return Err(decode_err("zero-sized image".into()));
    }
    let pixels: Vec<f64> = match img {
        image::DynamicImage::ImageLuma8(b) => b.into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
        image::DynamicImage::ImageLuma16(b) => {
            b.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect()
        }
        image::DynamicImage::ImageLumaA8(b) => b
            .into_raw()
            .chunks_exact(2)
            .map(|p| p[0] as f64 / 255.0)
            .collect(),
        other => other
            .to_rgb32f()
            .into_raw()
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
            .collect(),
    };
    Ok(GrayImage {
        height,
        width,
        pixels,
    })
}

/// Bilinear resize sampling at pixel centres: target pixel `(y, x)` reads the
/// source at `((y + ½)·H/h − ½, (x + ½)·W/w − ½)`, clamped to the image.
pub fn resize_bilinear(src: &[f64], height: usize, width: usize, th: usize, tw: usize) -> Vec<f64> {
    assert_eq!(src.len(), height * width, "source size mismatch");
    if (th, tw) == (height, width) {
        return src.to_vec();
    }
    let axis = |t: usize, target: usize, source: usize| -> (usize, usize, f64) {
        let pos = (t as f64 + 0.5) * source as f64 / target as f64 - 0.5;
        let pos = pos.clamp(0.0, (source - 1) as f64);
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(source - 1);
        (lo, hi, pos - lo as f64)
    };
    let lerp = |a: f64, b: f64, f: f64| a + f * (b - a);
    let mut out = Vec::with_capacity(th * tw);
    for y in 0..th {
        let (y0, y1, fy) = axis(y, th, height);
        for x in 0..tw {
            let (x0, x1, fx) = axis(x, tw, width);
            let top = lerp(src[y0 * width + x0], src[y0 * width + x1], fx);
            let bottom = lerp(src[y1 * width + x0], src[y1 * width + x1], fx);
            out.push(lerp(top, bottom, fy));
        }
    }
    out
}

/// Loads, grayscales, resizes and normalizes the images of one set.
pub fn load_image_set(
    paths: &[PathBuf],
    target: (usize, usize),
    set_id: &str,
    label: Option<String>,
) -> Result<ImageSet> {
    let (th, tw) = target;
    if th == 0 || tw == 0 {
        return Err(Error::invalid("target size must be positive"));
    }
    let images = paths
        .par_iter()
        .map(|p| {
            let img = load_image(p)?;
            Ok(resize_bilinear(&img.pixels, img.height, img.width, th, tw))
        })
        .collect::<Result<Vec<_>>>()?;
    ImageSet::new(set_id, label, th, tw, &images)
}

/// Per-fold, per-class partition of set ids into train and test.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassSplit {
    pub class: String,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitPlan {
    pub seed: u64,
    pub folds: usize,
    pub train_per_class: usize,
    /// `assignments[fold]` lists every class in manifest order.
    pub assignments: Vec<Vec<ClassSplit>>,
}

fn bounded(rng: &mut Xoshiro256PlusPlus, n: usize) -> usize {
    ((rng.next_u64() as u128 * n as u128) >> 64) as usize
}

pub fn make_splits(
    manifest: &DatasetManifest,
    train_per_class: usize,
    folds: usize,
    seed: u64,
) -> Result<SplitPlan> {
    if folds == 0 {
        return Err(Error::invalid("need at least one fold"));
    }
    if train_per_class == 0 {
        return Err(Error::invalid("need at least one training set per class"));
    }
    for c in &manifest.classes {
        if train_per_class >= c.sets.len() {
            return Err(Error::invalid(format!(
                "class {} has {} sets; {} for training leaves none for testing",
                c.name,
                c.sets.len(),
                train_per_class
            )));
        }
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut assignments = Vec::with_capacity(folds);
    for _ in 0..folds {
        let mut fold = Vec::with_capacity(manifest.classes.len());
        for c in &manifest.classes {
            let mut order: Vec<usize> = (0..c.sets.len()).collect();
            for i in (1..order.len()).rev() {
                let j = bounded(&mut rng, i + 1);
                order.swap(i, j);
            }
            let (train, test) = order.split_at(train_per_class);
            let ids = |idx: &[usize]| -> Vec<String> {
                let mut v: Vec<usize> = idx.to_vec();
                v.sort_unstable();
                v.iter().map(|&i| set_id(&c.name, &c.sets[i].name)).collect()
            };
            fold.push(ClassSplit {
                class: c.name.clone(),
                train: ids(train),
                test: ids(test),
            });
        }
        assignments.push(fold);
    }
    Ok(SplitPlan {
        seed,
        folds,
        train_per_class,
        assignments,
    })
}

impl SplitPlan {
    /// `fold,class,set_id,role` lines, folds numbered from 0.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fold,class,set_id,role\n");
        for (f, fold) in self.assignments.iter().enumerate() {
            for cs in fold {
                let mut rows: Vec<(&String, &str)> = cs
                    .train
                    .iter()
                    .map(|s| (s, "train"))
                    .chain(cs.test.iter().map(|s| (s, "test")))
                    .collect();
                rows.sort();
                for (s, role) in rows {
                    let _ = writeln!(out, "{f},{},{s},{role}", cs.class);
                }
            }
        }
        out
    }

    pub fn train_ids(&self, fold: usize) -> Vec<&str> {
        self.assignments[fold]
            .iter()
            .flat_map(|c| c.train.iter().map(String::as_str))
            .collect()
    }

    pub fn test_ids(&self, fold: usize) -> Vec<&str> {
        self.assignments[fold]
            .iter()
            .flat_map(|c| c.test.iter().map(String::as_str))
            .collect()
    }
}
