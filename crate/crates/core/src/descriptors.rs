//! Image-set descriptors.
//!
//! The plain descriptor is the regularized covariance `C + λ·tr(C)·I` of the
//! vectorized images. The component descriptor splits every image into a
//! `d × d` grid of blocks, describes each block's sub-image set by its own
//! covariance `Cᵢ`, and returns the regularized `d² × d²` Gram matrix
//! `[tr(log Cᵢ log Cⱼ)]`.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{gram_from_logs, KernelSpec};
use crate::linalg::{matrix_log, symmetrize_in_place, SpdMatrix, SymMatrix};

pub const DEFAULT_LAMBDA: f64 = 1e-3;
pub const DEFAULT_ABS_FLOOR: f64 = 1e-6;

/// An ordered set of equal-sized grayscale images.
///
/// Images are stored as the columns of a `(h·w) × n` matrix, each image
/// flattened row-major. Ingestion scales pixels to `[0, 1]`; this type only
/// requires them to be finite.
#[derive(Clone, Debug)]
pub struct ImageSet {
    set_id: String,
    label: Option<String>,
    height: usize,
    width: usize,
    samples: DMatrix<f64>,
}

impl ImageSet {
    /// `images[k]` is image `k` in row-major order, `height * width` values.
    pub fn new(
        set_id: impl Into<String>,
        label: Option<String>,
        height: usize,
        width: usize,
        images: &[Vec<f64>],
    ) -> Result<Self> {
        let set_id = set_id.into();
        if height == 0 || width == 0 {
            return Err(Error::invalid(format!("{set_id}: zero-sized images")));
        }
        if images.len() < 2 {
            return Err(Error::invalid(format!(
                "{set_id}: an image set needs at least 2 images, got {}",
                images.len()
            )));
        }
        let dim = height * width;
        for (k, img) in images.iter().enumerate() {
            if img.len() != dim {
                return Err(Error::invalid(format!(
                    "{set_id}: image {k} has {} pixels, expected {height}x{width}",
                    img.len()
                )));
            }
            if img.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite);
            }
        }
        let samples = DMatrix::from_fn(dim, images.len(), |r, c| images[c][r]);
        Ok(ImageSet {
            set_id,
            label,
            height,
            width,
            samples,
        })
    }

    pub fn set_id(&self) -> &str {
        &self.set_id
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.ncols() == 0
    }

    /// Pixel `(y, x)` of image `k`.
    pub fn pixel(&self, k: usize, y: usize, x: usize) -> f64 {
        self.samples[(y * self.width + x, k)]
    }

    /// The `(h·w) × n` sample matrix, one flattened image per column.
    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }
}

/// A `d × d` partition of `height × width` images into equal blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockGrid {
    pub d: usize,
    pub block_h: usize,
    pub block_w: usize,
}

impl BlockGrid {
    pub fn new(d: usize, height: usize, width: usize) -> Result<Self> {
        if d == 0 || !height.is_multiple_of(d) || !width.is_multiple_of(d) {
            return Err(Error::invalid(format!(
                "a {d}x{d} grid does not divide {height}x{width} images"
            )));
        }
        Ok(BlockGrid {
            d,
            block_h: height / d,
            block_w: width / d,
        })
    }

    pub fn blocks(&self) -> usize {
        self.d * self.d
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DescriptorConfig {
    pub lambda: f64,
    pub abs_floor: f64,
    /// Blocks per side for the component descriptor; `None` for the plain covariance.
    pub grid: Option<usize>,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        DescriptorConfig {
            lambda: DEFAULT_LAMBDA,
            abs_floor: DEFAULT_ABS_FLOOR,
            grid: None,
        }
    }
}

impl DescriptorConfig {
    pub fn with_grid(d: usize) -> Self {
        DescriptorConfig {
            grid: Some(d),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.abs_floor > 0.0) || !self.abs_floor.is_finite() {
            return Err(Error::invalid(format!(
                "abs_floor must be positive, got {}",
                self.abs_floor
            )));
        }
        Ok(())
    }
}

/// `M + λ·tr(M)·I`, or `abs_floor·I` when `tr(M) = 0`.
pub fn perturb(m: &SymMatrix, cfg: &DescriptorConfig) -> Result<SpdMatrix> {
    cfg.validate()?;
    let tr = m.trace();
    let dim = m.dim();
    let out = if tr > 0.0 {
        let mut out = m.as_matrix().clone();
        let shift = cfg.lambda * tr;
        for i in 0..dim {
            out[(i, i)] += shift;
        }
        out
    } else {
        DMatrix::identity(dim, dim) * cfg.abs_floor
    };
    SpdMatrix::new(SymMatrix::from_matrix(out)?)
}

/// Biased sample covariance `(1/n) Σ (sᵢ − s̄)(sᵢ − s̄)ᵀ`.
pub fn sample_covariance(s: &ImageSet) -> SymMatrix {
    let n = s.len() as f64;
    let mut centred = s.samples.clone();
    for mut row in centred.row_iter_mut() {
        let mean = row.sum() / n;
        row.add_scalar_mut(-mean);
    }
    let mut c = &centred * centred.transpose() / n;
    symmetrize_in_place(&mut c);
    SymMatrix::from_symmetric(c)
}

/// Regularized covariance descriptor of dimension `h·w`.
pub fn covariance_descriptor(s: &ImageSet, cfg: &DescriptorConfig) -> Result<SpdMatrix> {
    perturb(&sample_covariance(s), cfg)
}

/// Splits every image into the blocks of `grid`; block `b = row·d + col`.
pub fn partition(s: &ImageSet, grid: &BlockGrid) -> Result<Vec<ImageSet>> {
    let check = BlockGrid::new(grid.d, s.height, s.width)?;
    if check != *grid {
        return Err(Error::invalid(format!(
            "grid {grid:?} does not match {}x{} images",
            s.height, s.width
        )));
    }
    let (bh, bw) = (grid.block_h, grid.block_w);
    let n = s.len();
    let mut out = Vec::with_capacity(grid.blocks());
    for row in 0..grid.d {
        for col in 0..grid.d {
            let samples = DMatrix::from_fn(bh * bw, n, |r, k| {
                let y = row * bh + r / bw;
                let x = col * bw + r % bw;
                s.samples[(y * s.width + x, k)]
            });
            out.push(ImageSet {
                set_id: format!("{}#{}", s.set_id, row * grid.d + col),
                label: s.label.clone(),
                height: bh,
                width: bw,
                samples,
            });
        }
    }
    Ok(out)
}

/// Log-Euclidean Gram matrix of the block covariances, before regularization.
pub fn component_gram(blocks: &[ImageSet], cfg: &DescriptorConfig) -> Result<SymMatrix> {
    if blocks.is_empty() {
        return Err(Error::invalid("no blocks"));
    }
    let logs = blocks
        .par_iter()
        .map(|b| matrix_log(&covariance_descriptor(b, cfg)?))
        .collect::<Result<Vec<_>>>()?;
    SymMatrix::from_matrix(gram_from_logs(&KernelSpec::LogeLinear, &logs)?)
}

/// Component (block-kernel) descriptor of dimension `d²`.
pub fn cspd_descriptor(s: &ImageSet, cfg: &DescriptorConfig) -> Result<SpdMatrix> {
    let d = cfg
        .grid
        .ok_or_else(|| Error::invalid("component descriptor needs a block grid"))?;
    let grid = BlockGrid::new(d, s.height, s.width)?;
    let blocks = partition(s, &grid)?;
    perturb(&component_gram(&blocks, cfg)?, cfg)
}

/// Plain or component descriptor depending on `cfg.grid`.
pub fn describe(s: &ImageSet, cfg: &DescriptorConfig) -> Result<SpdMatrix> {
    match cfg.grid {
        None => covariance_descriptor(s, cfg),
        Some(_) => cspd_descriptor(s, cfg),
    }
}

pub fn descriptor_dim(image_h: usize, image_w: usize, grid: Option<usize>) -> usize {
    match grid {
        None => image_h * image_w,
        Some(d) => d * d,
    }
}
