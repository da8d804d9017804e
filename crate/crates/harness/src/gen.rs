//! Synthetic query/reference image pairs.
//!
//! Every trial draws from its own ChaCha8 stream: the generator is keyed by the
//! experiment seed and the stream number is the trial index, so trial `t` sees
//! the same numbers no matter how trials are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sisal_core::Tensor;

/// Random stream for trial `trial` of an experiment seeded with `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Side length of a square image with `n` pixels.
pub fn square_side(n: usize) -> Option<usize> {
    let s = (n as f64).sqrt().round() as usize;
    (s * s == n && n > 0).then_some(s)
}

fn noise(rng: &mut impl Rng, side: usize, sigma: f64) -> Tensor {
    let values = (0..side * side)
        .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Tensor::new(vec![side, side], values).expect("finite noise")
}

/// Query and reference images of pure noise.
pub fn null_pair_from(rng: &mut impl Rng, n: usize, sigma: f64) -> (Tensor, Tensor) {
    let side = square_side(n).expect("pixel count must be a perfect square");
    let x = noise(rng, side, sigma);
    let xref = noise(rng, side, sigma);
    (x, xref)
}

pub fn gen_null_pair(n: usize, sigma: f64, seed: u64) -> (Tensor, Tensor) {
    null_pair_from(&mut trial_rng(seed, 0), n, sigma)
}

/// Query with a square patch of `region_size` pixels raised by `delta` at a
/// random position, reference of pure noise, and the patch's pixel indices.
pub fn signal_pair_from(
    rng: &mut impl Rng,
    n: usize,
    delta: f64,
    region_size: usize,
    sigma: f64,
) -> (Tensor, Tensor, Vec<usize>) {
    let side = square_side(n).expect("pixel count must be a perfect square");
    let patch = square_side(region_size).expect("region size must be a perfect square");
    assert!(patch <= side, "region of {region_size} pixels does not fit in {n}");
    let top = rng.random_range(0..=side - patch);
    let left = rng.random_range(0..=side - patch);
    let (x, xref) = null_pair_from(rng, n, sigma);
    let mut region: Vec<usize> = (top..top + patch)
        .flat_map(|r| (left..left + patch).map(move |c| r * side + c))
        .collect();
    region.sort_unstable();
    let mut values = x.into_values();
    for &i in &region {
        values[i] += delta;
    }
    let x = Tensor::new(vec![side, side], values).expect("finite signal");
    (x, xref, region)
}

pub fn gen_signal_pair(n: usize, delta: f64, region_size: usize, sigma: f64, seed: u64) -> (Tensor, Tensor, Vec<usize>) {
    signal_pair_from(&mut trial_rng(seed, 0), n, delta, region_size, sigma)
}
