//! Counter-based random numbers.
//!
//! All Gaussian increments are derived from Philox4x32-10 applied to a counter
//! `(replica, particle, step, block)` under a key derived from the seed. A given
//! `(seed, replica, particle, step)` therefore always yields the same increments,
//! independently of which thread evaluates it or in which order.

use core::f64::consts::TAU;

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

/// Particle index reserved for the common Brownian motion.
pub const COMMON_STREAM: u32 = u32::MAX;
/// Step index reserved for initial positions.
pub const INITIAL_POSITION_STEP: u32 = u32::MAX;
/// Step index reserved for initial weights.
pub const INITIAL_WEIGHT_STEP: u32 = u32::MAX - 1;

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = (a as u64) * (b as u64);
    ((p >> 32) as u32, p as u32)
}

#[inline]
fn philox_round(ctr: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let (hi0, lo0) = mulhilo(PHILOX_M0, ctr[0]);
    let (hi1, lo1) = mulhilo(PHILOX_M1, ctr[2]);
    [hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0]
}

/// The Philox4x32 bijection with 10 rounds.
#[inline]
pub fn philox4x32(mut ctr: [u32; 4], mut key: [u32; 2]) -> [u32; 4] {
    for round in 0..10 {
        if round > 0 {
            key[0] = key[0].wrapping_add(PHILOX_W0);
            key[1] = key[1].wrapping_add(PHILOX_W1);
        }
        ctr = philox_round(ctr, key);
    }
    ctr
}

/// Uniform in the open interval (0, 1) with 53 random bits.
#[inline]
fn open_unit(hi: u32, lo: u32) -> f64 {
    let bits = (((hi as u64) << 32) | lo as u64) >> 11;
    (bits as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

#[inline]
fn box_muller(block: [u32; 4]) -> (f64, f64) {
    let u1 = open_unit(block[0], block[1]);
    let u2 = open_unit(block[2], block[3]);
    let radius = libm::sqrt(-2.0 * libm::log(u1));
    let (s, c) = libm::sincos(TAU * u2);
    (radius * c, radius * s)
}

/// Seeded layout of independent Gaussian streams.
///
/// `(replica, particle, step)` addresses the individual increments of one
/// particle at one time step; the common noise of a replica lives at particle
/// index [`COMMON_STREAM`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoisePlan {
    seed: u64,
}

impl NoisePlan {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// A plan whose streams are independent of `self` for a different `tag`.
    pub fn derive(&self, tag: u64) -> Self {
        let mut z = self.seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        // splitmix64 finalizer
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        Self::new(z ^ (z >> 31))
    }

    #[inline]
    fn key(&self) -> [u32; 2] {
        [self.seed as u32, (self.seed >> 32) as u32]
    }

    /// Fills `out` with independent standard normals for the given stream.
    pub fn standard_normals(&self, replica: u32, particle: u32, step: u32, out: &mut [f64]) {
        let key = self.key();
        for (block, chunk) in out.chunks_mut(2).enumerate() {
            let (z0, z1) = box_muller(philox4x32([replica, particle, step, block as u32], key));
            chunk[0] = z0;
            if chunk.len() > 1 {
                chunk[1] = z1;
            }
        }
    }

    /// Fills `out` with Brownian increments of variance `dt` per coordinate.
    pub fn increments(&self, replica: u32, particle: u32, step: u32, dt: f64, out: &mut [f64]) {
        self.standard_normals(replica, particle, step, out);
        let scale = libm::sqrt(dt);
        for z in out.iter_mut() {
            *z *= scale;
        }
    }

    /// A sequential generator over a dedicated stream, for auxiliary sampling.
    pub fn sequence(&self, replica: u32, particle: u32) -> CounterRng {
        CounterRng {
            key: self.key(),
            replica,
            particle,
            position: 0,
            spare: None,
        }
    }
}

/// Sequential generator walking the step/block counters of one stream.
#[derive(Debug, Clone)]
pub struct CounterRng {
    key: [u32; 2],
    replica: u32,
    particle: u32,
    position: u64,
    spare: Option<[u32; 2]>,
}

impl CounterRng {
    fn next_pair(&mut self) -> [u32; 2] {
        if let Some(pair) = self.spare.take() {
            return pair;
        }
        let ctr = [
            self.replica,
            self.particle,
            (self.position >> 32) as u32,
            self.position as u32,
        ];
        self.position += 1;
        let out = philox4x32(ctr, self.key);
        self.spare = Some([out[2], out[3]]);
        [out[0], out[1]]
    }

    pub fn next_u64(&mut self) -> u64 {
        let [hi, lo] = self.next_pair();
        ((hi as u64) << 32) | lo as u64
    }

    /// Uniform in (0, 1).
    pub fn uniform(&mut self) -> f64 {
        let [hi, lo] = self.next_pair();
        open_unit(hi, lo)
    }

    pub fn uniform_in(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(TAU * u2)
    }

    /// +1 or -1 with equal probability.
    pub fn sign(&mut self) -> f64 {
        if self.next_u64() >> 63 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Uniform index in `0..bound`.
    pub fn index(&mut self, bound: usize) -> usize {
        ((self.next_u64() >> 11) as f64 / (1u64 << 53) as f64 * bound as f64) as usize % bound.max(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::vec;
    use std::vec::Vec;

    // Known-answer vectors published with the Random123 library.
    #[test]
    fn philox_known_answers() {
        assert_eq!(
            philox4x32([0, 0, 0, 0], [0, 0]),
            [0x6627_e8d5, 0xe169_c58d, 0xbc57_ac4c, 0x9b00_dbd8]
        );
        assert_eq!(
            philox4x32([u32::MAX; 4], [u32::MAX; 2]),
            [0x408f_276d, 0x41c8_3b0e, 0xa20b_c7c6, 0x6d54_51fd]
        );
        assert_eq!(
            philox4x32(
                [0x243f_6a88, 0x85a3_08d3, 0x1319_8a2e, 0x0370_7344],
                [0xa409_3822, 0x299f_31d0]
            ),
            [0xd16c_fe09, 0x94fd_cceb, 0x5001_e420, 0x2412_6ea1]
        );
    }

    #[test]
    fn streams_are_order_independent() {
        let plan = NoisePlan::new(7);
        let mut forward = Vec::new();
        for step in 0..5 {
            let mut z = [0.0; 3];
            plan.standard_normals(2, 9, step, &mut z);
            forward.push(z);
        }
        for step in (0..5).rev() {
            let mut z = [0.0; 3];
            plan.standard_normals(2, 9, step, &mut z);
            assert_eq!(z, forward[step as usize]);
        }
    }

    #[test]
    fn normals_have_unit_moments() {
        let plan = NoisePlan::new(11);
        let mut sum = 0.0;
        let mut sq = 0.0;
        let mut fourth = 0.0;
        let count = 200_000;
        let mut z = vec![0.0; 4];
        for p in 0..count / 4 {
            plan.standard_normals(0, p as u32, 0, &mut z);
            for &x in &z {
                sum += x;
                sq += x * x;
                fourth += x * x * x * x;
            }
        }
        let n = count as f64;
        assert!((sum / n).abs() < 0.01);
        assert!((sq / n - 1.0).abs() < 0.015);
        assert!((fourth / n - 3.0).abs() < 0.08);
    }

    #[test]
    fn derived_plans_differ() {
        let plan = NoisePlan::new(1);
        assert_ne!(plan.derive(1).seed(), plan.derive(2).seed());
        assert_ne!(plan.derive(1).seed(), plan.seed());
    }

    #[test]
    fn counter_rng_uniforms_in_range() {
        let mut rng = NoisePlan::new(3).sequence(0, 0);
        for _ in 0..10_000 {
            let u = rng.uniform();
            assert!(u > 0.0 && u < 1.0);
            assert!(rng.index(7) < 7);
        }
    }
}
