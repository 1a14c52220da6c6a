//! Fixtures shared by the benchmarks in `benches/` and their smoke test.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use spdkit::random::random_spd;
use spdkit::{DescriptorConfig, ImageSet, SpdMatrix};

/// Matrix sizes: a 2x2 block grid, CSPD^{6x6}, and the 12x12 / 24x24 plain covariances.
pub const DIMS: [usize; 4] = [4, 36, 144, 576];
pub const GRIDS: [usize; 7] = [0, 2, 3, 4, 6, 8, 12];
pub const IMAGE_SIDE: usize = 24;

pub fn spd_points(seed: u64, dim: usize, count: usize, max_cond: f64) -> Vec<SpdMatrix> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    (0..count).map(|_| random_spd(&mut rng, dim, max_cond)).collect()
}

pub fn ids(count: usize) -> Vec<String> {
    (0..count).map(|i| format!("p{i}")).collect()
}

/// `n` uniform-noise 24x24 images.
pub fn image_set(n: usize) -> ImageSet {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(7);
    let images: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..IMAGE_SIDE * IMAGE_SIDE).map(|_| rng.random::<f64>()).collect())
        .collect();
    ImageSet::new("bench/set", None, IMAGE_SIDE, IMAGE_SIDE, &images).expect("valid fixture")
}

pub fn grid_config(grid: usize) -> DescriptorConfig {
    DescriptorConfig {
        grid: (grid > 0).then_some(grid),
        ..Default::default()
    }
}
