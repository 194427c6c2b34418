//! Counter-based random streams.
//!
//! Every random quantity is addressed by a key (seed, stream, position), so the
//! value drawn for a matrix entry or a Monte Carlo batch does not depend on how
//! work is split across threads. ChaCha provides the keyed stream; the normal
//! transform uses `libm` so results are bit-identical across platforms.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Generator behind every keyed stream.
pub type Stream = ChaCha8Rng;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// SplitMix64 finalizer.
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed for item `index` of a run keyed by `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix64(mix64(master) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// ChaCha stream `stream` under key `seed`, positioned at its start.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (k, chunk) in key.chunks_mut(8).enumerate() {
        chunk.copy_from_slice(&mix64(seed.wrapping_add(k as u64)).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

/// Uniform on `(0, 1]` from the top 53 bits.
#[inline]
pub fn open_unit(bits: u64) -> f64 {
    ((bits >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform on `[0, 1)` from the top 53 bits.
#[inline]
pub fn unit(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// One standard normal from two words (Box-Muller, cosine branch).
#[inline]
pub fn normal_from_bits(a: u64, b: u64) -> f64 {
    let r = libm::sqrt(-2.0 * libm::log(open_unit(a)));
    r * libm::cos(TWO_PI * unit(b))
}

/// Draws standard normals from a stream.
pub fn next_normal<R: RngCore>(rng: &mut R) -> f64 {
    let a = rng.next_u64();
    let b = rng.next_u64();
    normal_from_bits(a, b)
}

pub fn next_unit<R: RngCore>(rng: &mut R) -> f64 {
    unit(rng.next_u64())
}

/// Row `i` of an `n`-column Gaussian matrix keyed by `seed`.
///
/// Entry `(i, j)` is read from stream `i` at word offset `4 j`, so it is a
/// function of `(seed, i, j)` alone.
pub fn gaussian_row(seed: u64, i: usize, n: usize, out: &mut [f64]) {
    let mut rng = stream(seed, i as u64);
    for x in out.iter_mut().take(n) {
        *x = next_normal(&mut rng);
    }
}

/// Single entry `(i, j)`; agrees with [`gaussian_row`].
pub fn gaussian_entry(seed: u64, i: usize, j: usize) -> f64 {
    let mut rng = stream(seed, i as u64);
    rng.set_word_pos(4 * j as u128);
    next_normal(&mut rng)
}
