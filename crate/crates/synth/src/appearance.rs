//! Synthetic appearance oracle.
//!
//! Every world ray owns a canonical descriptor drawn from a generator keyed
//! by the ray's quantized `(pan, tilt)` cell. Observed descriptors add
//! Gaussian noise, and with some probability are replaced by an unrelated
//! vector, the way a player occluding a field feature would be.

use ptzcal_core::forest::Descriptor;
use ptzcal_core::rng;
use ptzcal_core::Ray;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Side of a quantization cell in degrees.
pub const CELL_DEG: f64 = 0.05;

pub const DEFAULT_DIM: usize = 128;

const WORLD_KEY: u64 = 0x005E_ED0F_A99E_A2A0;

/// Quantized cell of a ray.
pub fn ray_cell(ray: &Ray) -> (i64, i64) {
    let r = ray.canonical();
    ((r.pan / CELL_DEG).floor() as i64, (r.tilt / CELL_DEG).floor() as i64)
}

/// Deterministic base vector of the ray's cell.
pub fn canonical_descriptor(ray: &Ray, dim: usize) -> Descriptor {
    let (cp, ct) = ray_cell(ray);
    let mut g = rng::stream(WORLD_KEY, &[cp as u64, ct as u64]);
    Descriptor::new(gaussian_vector(&mut g, dim)).expect("finite gaussian descriptor")
}

fn gaussian_vector<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

/// An observation of `canonical`: Gaussian noise of `noise_sigma` per
/// component, or with probability `outlier_prob` an unrelated random vector.
pub fn observe<R: Rng + ?Sized>(canonical: &Descriptor, noise_sigma: f64, outlier_prob: f64, rng: &mut R) -> Descriptor {
    let dim = canonical.len();
    let values = if outlier_prob > 0.0 && rng.random::<f64>() < outlier_prob {
        gaussian_vector(rng, dim)
    } else {
        canonical
            .values()
            .iter()
            .map(|v| {
                let n: f64 = StandardNormal.sample(rng);
                v + noise_sigma * n
            })
            .collect()
    };
    Descriptor::new(values).expect("finite descriptor")
}

/// Descriptor of `ray` observed under `seed`, with the default dimension.
pub fn appearance_oracle(ray: &Ray, noise_sigma: f64, outlier_prob: f64, seed: u64) -> Descriptor {
    let (cp, ct) = ray_cell(ray);
    let mut g = rng::stream(seed, &[cp as u64, ct as u64]);
    observe(&canonical_descriptor(ray, DEFAULT_DIM), noise_sigma, outlier_prob, &mut g)
}
