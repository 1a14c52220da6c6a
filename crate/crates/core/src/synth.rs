//! Synthetic image-set datasets for desk-scale runs.
//!
//! Each class owns a mean intensity and a few smooth sinusoidal patterns.
//! An image is the class mean plus a random combination of the class
//! patterns plus a little pixel noise, so classes differ both in their pixel
//! means and in their covariance structure (which is what the descriptors
//! see). The overall within-class pixel standard deviation is held at an
//! eighth of the gap between neighbouring class means.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub classes: usize,
    pub sets_per_class: usize,
    pub images_per_set: usize,
    pub size: usize,
    pub seed: u64,
    /// Patterns per class.
    pub patterns: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            classes: 3,
            sets_per_class: 5,
            images_per_set: 20,
            size: 24,
            seed: 0,
            patterns: 3,
        }
    }
}

/// Ratio of neighbouring class-mean gap to within-class pixel std.
pub const SEPARATION: f64 = 8.0;
/// Share of within-class variance that is unstructured pixel noise. Kept
/// well under the descriptor regularizer so each set's noise, which spans a
/// different random subspace, does not dominate distances between sets.
const NOISE_SHARE: f64 = 0.002;

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::invalid("synth needs at least 2 classes"));
        }
        if self.sets_per_class == 0 || self.images_per_set < 2 || self.size == 0 || self.patterns == 0 {
            return Err(Error::invalid(
                "synth needs ≥ 1 set per class, ≥ 2 images per set, a positive size and ≥ 1 pattern",
            ));
        }
        Ok(())
    }

    pub fn class_mean(&self, c: usize) -> f64 {
        (c + 1) as f64 / (self.classes + 1) as f64
    }

    /// Target within-class pixel standard deviation.
    pub fn pixel_std(&self) -> f64 {
        1.0 / (self.classes + 1) as f64 / SEPARATION
    }
}

pub fn class_name(c: usize) -> String {
    format!("class{c:02}")
}

pub fn set_name(s: usize) -> String {
    format!("set{s:02}")
}

/// One generated set: 8-bit row-major images.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSet {
    pub class: String,
    pub set: String,
    pub images: Vec<Vec<u8>>,
}

/// Wave-vector pool: frequencies `(fy, fx)` in cycles per image with the
/// horizontal direction flipped or not. Lowest frequencies first.
fn wave_pool(size: usize, needed: usize) -> Vec<(f64, f64)> {
    let max_f = (size / 2).max(1);
    let mut pool = Vec::new();
    for total in 2..=2 * max_f {
        for fy in 1..=max_f {
            let fx = total as isize - fy as isize;
            if fx < 1 || fx as usize > max_f {
                continue;
            }
            pool.push((fy as f64, fx as f64));
            pool.push((fy as f64, -(fx as f64)));
        }
    }
    pool.truncate(needed.max(50).min(pool.len()));
    pool
}

/// Unit-RMS, zero-mean sinusoid with the given wave vector.
fn pattern<R: Rng>(rng: &mut R, size: usize, (fy, fx): (f64, f64)) -> Vec<f64> {
    let phase = rng.random_range(0.0..2.0 * PI);
    let n = size as f64;
    let mut p: Vec<f64> = (0..size * size)
        .map(|i| {
            let (y, x) = ((i / size) as f64, (i % size) as f64);
            (2.0 * PI * (fy * y + fx * x) / n + phase).sin()
        })
        .collect();
    let mean = p.iter().sum::<f64>() / p.len() as f64;
    p.iter_mut().for_each(|v| *v -= mean);
    let rms = (p.iter().map(|v| v * v).sum::<f64>() / p.len() as f64).sqrt();
    if rms > 0.0 {
        p.iter_mut().for_each(|v| *v /= rms);
    }
    p
}

/// Generates the whole dataset in memory. Deterministic in `cfg`.
pub fn generate(cfg: &SynthConfig) -> Result<Vec<SynthSet>> {
    cfg.validate()?;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(cfg.seed);
    let npix = cfg.size * cfg.size;
    let std = cfg.pixel_std();
    let noise_std = std * NOISE_SHARE.sqrt();
    let coeff_std = std * ((1.0 - NOISE_SHARE) / cfg.patterns as f64).sqrt();
    let noise = Normal::new(0.0, noise_std).expect("finite std");

    // Every class gets its own wave vectors, so no two classes share a pattern.
    let needed = cfg.classes * cfg.patterns;
    let mut pool = wave_pool(cfg.size, needed);
    if pool.len() < needed {
        return Err(Error::invalid(format!(
            "{}x{} images offer only {} distinct patterns, {needed} needed",
            cfg.size,
            cfg.size,
            pool.len()
        )));
    }
    pool.shuffle(&mut rng);
    let class_patterns: Vec<Vec<Vec<f64>>> = pool[..needed]
        .chunks(cfg.patterns)
        .map(|waves| waves.iter().map(|&w| pattern(&mut rng, cfg.size, w)).collect())
        .collect();

    let mut out = Vec::with_capacity(cfg.classes * cfg.sets_per_class);
    for (c, patterns) in class_patterns.iter().enumerate() {
        let mean = cfg.class_mean(c);
        for s in 0..cfg.sets_per_class {
            // Sets of one class differ mildly in how strongly each pattern shows.
            let weights: Vec<f64> = (0..cfg.patterns)
                .map(|_| coeff_std * rng.random_range(0.9..1.1))
                .collect();
            let coeffs = standardized_coeffs(&mut rng, cfg.images_per_set, &weights);
            let images = coeffs
                .iter()
                .map(|coeffs| {
                    (0..npix)
                        .map(|i| {
                            let v = mean
                                + coeffs.iter().zip(patterns).map(|(a, p)| a * p[i]).sum::<f64>()
                                + noise.sample(&mut rng);
                            (v.clamp(0.0, 1.0) * 255.0).round() as u8
                        })
                        .collect()
                })
                .collect();
            out.push(SynthSet {
                class: class_name(c),
                set: set_name(s),
                images,
            });
        }
    }
    Ok(out)
}

/// Per-image pattern coefficients. Each column is standardized over the set, so its
/// sample variance is exactly `weight²`. Raw Gaussian draws let the set trace wander
/// by a chi-square factor, which moves the regularized bulk from set to set.
fn standardized_coeffs(rng: &mut Xoshiro256PlusPlus, n: usize, weights: &[f64]) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = (0..n)
        .map(|_| weights.iter().map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    for (k, w) in weights.iter().enumerate() {
        let mean = rows.iter().map(|r| r[k]).sum::<f64>() / n as f64;
        let var = rows.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / n as f64;
        let scale = if var > 0.0 { w / var.sqrt() } else { 0.0 };
        for r in &mut rows {
            r[k] = (r[k] - mean) * scale;
        }
    }
    rows
}

pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    let mut data = format!("P5\n{width} {height}\n255\n").into_bytes();
    data.extend_from_slice(pixels);
    fs::write(path, data).map_err(|e| Error::io(path, e))
}

/// Writes `out/<class>/<set>/imgNNN.pgm`. Returns the number of images.
pub fn write_dataset(cfg: &SynthConfig, out: &Path) -> Result<usize> {
    let sets = generate(cfg)?;
    let mut count = 0;
    for s in &sets {
        let dir = out.join(&s.class).join(&s.set);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (i, img) in s.images.iter().enumerate() {
            write_pgm(&dir.join(format!("img{i:03}.pgm")), cfg.size, cfg.size, img)?;
            count += 1;
        }
    }
    Ok(count)
}
