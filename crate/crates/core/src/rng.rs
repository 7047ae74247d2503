//! Reproducible random streams.
//!
//! A stream is addressed by `(seed_base, stream_index)`. Its xoshiro256++
//! state is the first four outputs of a SplitMix64 generator seeded with
//! `seed_base ^ stream_index`. Any implementation of those two published
//! generators reproduces the same words, which is what the experiment
//! harness relies on for cross-run determinism.
//!
//! Continuous variates are derived from the word stream with documented
//! transforms only: 53-bit uniforms, Box–Muller normals (the second variate
//! of each pair is cached), Marsaglia–Tsang gammas.

use std::f64::consts::TAU;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// One SplitMix64 step; returns the output and advances `state`.
#[inline]
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    mix64(*state)
}

/// The SplitMix64 output finaliser.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stateless uniform in (0, 1) keyed by three words. Used where a draw must
/// be a pure function of its position (e.g. bridge crossing checks on a
/// stored path).
#[inline]
pub fn keyed_uniform(key: u64, a: u64, b: u64) -> f64 {
    let mut s = key ^ mix64(a.wrapping_add(GOLDEN)) ^ mix64(b ^ 0xD1B5_4A32_D192_ED03);
    open_unit(splitmix64(&mut s))
}

#[inline]
fn open_unit(word: u64) -> f64 {
    ((word >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

#[derive(Debug, Clone)]
pub struct Stream {
    s: [u64; 4],
    spare_normal: Option<f64>,
}

impl Stream {
    pub fn new(seed_base: u64, stream_index: u64) -> Self {
        let mut sm = seed_base ^ stream_index;
        let s = [
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
        ];
        Self {
            s,
            spare_normal: None,
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.s;
        let result = s[0].wrapping_add(s[3]).rotate_left(23).wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform on [0, 1) with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on (0, 1); safe to take logarithms of.
    #[inline]
    pub fn uniform_open(&mut self) -> f64 {
        open_unit(self.next_u64())
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform_open();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (TAU * u2).sin_cos();
        self.spare_normal = Some(r * s);
        r * c
    }

    pub fn exponential(&mut self, mean: f64) -> f64 {
        -mean * self.uniform_open().ln()
    }

    /// Gamma(shape, scale) by Marsaglia–Tsang; shapes below one use the
    /// `U^(1/shape)` boost.
    pub fn gamma(&mut self, shape: f64, scale: f64) -> f64 {
        debug_assert!(shape > 0.0);
        if shape < 1.0 {
            let g = self.gamma(shape + 1.0, 1.0);
            return scale * g * self.uniform_open().powf(1.0 / shape);
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let x = self.normal();
            let v = 1.0 + c * x;
            if v <= 0.0 {
                continue;
            }
            let v = v * v * v;
            let u = self.uniform_open();
            let x2 = x * x;
            if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
                return scale * d * v;
            }
        }
    }

    pub fn chi_square(&mut self, df: f64) -> f64 {
        self.gamma(0.5 * df, 2.0)
    }

    /// Number of trials up to and including the first success.
    pub fn geometric(&mut self, p: f64) -> u64 {
        if p >= 1.0 {
            return 1;
        }
        let u = self.uniform_open();
        1 + (u.ln() / (-p).ln_1p()).floor() as u64
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_vector() {
        let mut s = 0u64;
        assert_eq!(splitmix64(&mut s), 0xE220_A839_7B1D_CDAF);
        assert_eq!(splitmix64(&mut s), 0x6E78_9E6A_A1B9_65F4);
    }

    #[test]
    fn first_word_of_zero_stream() {
        // xoshiro256++ seeded with SplitMix64(0): value computed from the
        // published reference constants.
        let mut st = Stream::new(0, 0);
        assert_eq!(st.next_u64(), FIRST_WORD_ZERO);
    }

    const FIRST_WORD_ZERO: u64 = 0x53175D61490B23DF;

    #[test]
    fn streams_are_deterministic() {
        let mut a = Stream::new(42, 7);
        let mut b = Stream::new(42, 7);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn distinct_streams_are_uncorrelated() {
        let n = 1_000_000;
        let mut a = Stream::new(1, 0);
        let mut b = Stream::new(1, 1);
        let (mut sa, mut sb, mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let x = a.uniform();
            let y = b.uniform();
            sa += x;
            sb += y;
            sab += x * y;
            saa += x * x;
            sbb += y * y;
        }
        let nf = n as f64;
        let cov = sab / nf - sa * sb / nf / nf;
        let rho = cov / ((saa / nf - (sa / nf).powi(2)) * (sbb / nf - (sb / nf).powi(2))).sqrt();
        assert!(rho.abs() < 0.01, "rho = {rho}");
    }

    #[test]
    fn gamma_moments() {
        let mut st = Stream::new(3, 0);
        for &shape in &[0.4, 1.0, 2.5, 40.0] {
            let n = 200_000;
            let xs: Vec<f64> = (0..n).map(|_| st.gamma(shape, 2.0)).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let sd = (shape * 4.0 / n as f64).sqrt();
            assert!((mean - 2.0 * shape).abs() < 4.0 * sd, "shape {shape}: {mean}");
        }
    }

    #[test]
    fn geometric_mean() {
        let mut st = Stream::new(5, 0);
        let n = 200_000;
        let mean = (0..n).map(|_| st.geometric(0.1) as f64).sum::<f64>() / n as f64;
        // sd of the mean: sqrt(q)/p/sqrt(n)
        assert!((mean - 10.0).abs() < 4.0 * (0.9f64).sqrt() / 0.1 / (n as f64).sqrt());
    }
}
