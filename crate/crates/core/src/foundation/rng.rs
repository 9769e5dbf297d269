//! Seedable, stream-splittable randomness.
//!
//! Every stochastic step in the crate draws from an [`Rng`] identified by a
//! `(seed, stream)` pair. Streams are derived from a purpose tag and an index
//! (usually a sample index), so sample `i` of a dataset depends only on the
//! seed and `i`, never on generation order or thread count.
//!
//! The generator is PCG-XSL-RR 128/64 (`rand_pcg::Pcg64`). Normal variates
//! use the basic Box–Muller transform with `libm` transcendentals so that
//! outputs are bit-identical across platforms; both choices are frozen since
//! stored datasets depend on them.

use rand_core::RngCore;
use rand_pcg::Pcg64;

const SPLITMIX_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(SPLITMIX_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xCBF2_9CE4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Stream id for `purpose` at `index`.
pub fn stream_id(purpose: &str, index: u64) -> u64 {
    splitmix64(fnv1a(purpose.as_bytes()) ^ splitmix64(index))
}

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    stream: u64,
    inner: Pcg64,
    spare_normal: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let state = (u128::from(splitmix64(seed)) << 64) | u128::from(splitmix64(seed ^ SPLITMIX_GAMMA));
        Rng { seed, stream, inner: Pcg64::new(state, u128::from(stream)), spare_normal: None }
    }

    pub fn for_purpose(seed: u64, purpose: &str, index: u64) -> Self {
        Rng::new(seed, stream_id(purpose, index))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n` without modulo bias. `n` must be nonzero.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        // Lemire's multiply-shift with rejection.
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = u128::from(self.next_u64()) * u128::from(n);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    pub fn below_usize(&mut self, n: usize) -> usize {
        self.below(n as u64) as usize
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // u1 in (0, 1] keeps the logarithm finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * libm::log(u1)).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * libm::sin(theta));
        r * libm::cos(theta)
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below_usize(i + 1);
            items.swap(i, j);
        }
    }
}

pub fn draw_standard_normals(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.standard_normal()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_draws_is_empty() {
        assert!(draw_standard_normals(&mut Rng::new(42, 0), 0).is_empty());
    }

    #[test]
    fn same_seed_and_stream_repeat() {
        let a = draw_standard_normals(&mut Rng::new(42, 0), 1000);
        let b = draw_standard_normals(&mut Rng::new(42, 0), 1000);
        assert_eq!(a, b);
    }

    #[test]
    fn normal_moments() {
        let z = draw_standard_normals(&mut Rng::new(42, 0), 100_000);
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() <= 0.02, "mean {mean}");
        assert!((0.98..=1.02).contains(&var), "var {var}");
    }

    #[test]
    fn streams_are_uncorrelated() {
        let n = 20_000;
        let a = draw_standard_normals(&mut Rng::for_purpose(7, "noise", 0), n);
        let b = draw_standard_normals(&mut Rng::for_purpose(7, "noise", 1), n);
        let cross = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / n as f64;
        // 4 sigma for a product of independent unit normals.
        assert!(cross.abs() < 4.0 / (n as f64).sqrt(), "cross {cross}");
        let lag1 = a.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (n - 1) as f64;
        assert!(lag1.abs() < 4.0 / (n as f64).sqrt(), "lag1 {lag1}");

        // Uniform histogram smoke test on 10 bins.
        let mut rng = Rng::new(7, 3);
        let mut bins = [0usize; 10];
        for _ in 0..n {
            bins[(rng.uniform() * 10.0) as usize] += 1;
        }
        let expect = n as f64 / 10.0;
        let chi2: f64 = bins.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
        // chi-square with 9 dof: P(> 27.9) ~ 0.001
        assert!(chi2 < 27.9, "chi2 {chi2}");
    }

    #[test]
    fn below_stays_in_range_and_covers() {
        let mut rng = Rng::new(1, 1);
        let mut seen = [false; 7];
        for _ in 0..1000 {
            let v = rng.below(7) as usize;
            seen[v] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn golden_first_draws() {
        // Frozen: changing generator, seeding or the normal transform breaks
        // every stored dataset.
        let mut rng = Rng::new(42, 0);
        let u = rng.next_u64();
        let mut again = Rng::new(42, 0);
        assert_eq!(u, again.next_u64());
        assert_ne!(Rng::new(42, 1).next_u64(), u);
    }
}
