//! Deterministic seeded streams and Poisson sampling.
//!
//! Every random quantity in the pipeline is drawn from a ChaCha8 stream whose
//! seed is derived from a master seed plus structural indices (toy number,
//! bin number, chain number). Streams are therefore independent of execution
//! order and thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

/// SplitMix64 step (Vigna); used only for seed derivation.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with structural indices into a stream seed.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut state = base;
    let mut out = splitmix64(&mut state);
    for &p in parts {
        state ^= p;
        out = splitmix64(&mut state) ^ out.rotate_left(23);
    }
    out
}

/// A fresh deterministic generator for the given derived seed.
pub fn stream(base: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, parts))
}

/// Means below this use CDF inversion; above, PTRS rejection.
const INVERSION_CUTOVER: f64 = 30.0;

/// Draws one Poisson(mean) variate.
///
/// Inversion by sequential search below mean 30, Hörmann's PTRS transformed
/// rejection above. Both consume the generator stream deterministically.
pub fn sample_poisson(rng: &mut impl Rng, mean: f64) -> u64 {
    assert!(
        mean.is_finite() && mean >= 0.0,
        "Poisson mean must be finite and >= 0, got {mean}"
    );
    if mean == 0.0 {
        return 0;
    }
    if mean < INVERSION_CUTOVER {
        poisson_inversion(rng, mean)
    } else {
        poisson_ptrs(rng, mean)
    }
}

fn poisson_inversion(rng: &mut impl Rng, mean: f64) -> u64 {
    let u: f64 = rng.gen();
    let mut k = 0u64;
    let mut pmf = (-mean).exp();
    let mut cdf = pmf;
    // The cap only guards against the CDF saturating below u by rounding.
    while u > cdf && k < 2000 {
        k += 1;
        pmf *= mean / k as f64;
        cdf += pmf;
    }
    k
}

/// PTRS (Hörmann 1993): transformed rejection with squeeze, valid for
/// mean >= 10.
fn poisson_ptrs(rng: &mut impl Rng, mean: f64) -> u64 {
    let b = 0.931 + 2.53 * mean.sqrt();
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let v_r = 0.9277 - 3.6224 / (b - 2.0);
    let ln_mean = mean.ln();

    loop {
        let u: f64 = rng.gen::<f64>() - 0.5;
        let v: f64 = rng.gen();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= v_r {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let accept = (v * inv_alpha / (a / (us * us) + b)).ln();
        if accept <= k * ln_mean - mean - ln_gamma(k + 1.0) {
            return k as u64;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(seed: u64, mean: f64, n: usize) -> (f64, f64) {
        let mut rng = stream(seed, &[7]);
        let draws: Vec<f64> = (0..n).map(|_| sample_poisson(&mut rng, mean) as f64).collect();
        let m = draws.iter().sum::<f64>() / n as f64;
        let v = draws.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n as f64 - 1.0);
        (m, v)
    }

    #[test]
    fn derive_seed_sensitive_to_all_parts() {
        assert_ne!(derive_seed(1, &[0]), derive_seed(1, &[1]));
        assert_ne!(derive_seed(1, &[0]), derive_seed(2, &[0]));
        assert_ne!(derive_seed(1, &[0, 1]), derive_seed(1, &[1, 0]));
        assert_eq!(derive_seed(42, &[3, 5]), derive_seed(42, &[3, 5]));
    }

    #[test]
    fn streams_are_reproducible() {
        let a: Vec<u64> = {
            let mut r = stream(99, &[1, 2]);
            (0..32).map(|_| r.gen::<u64>()).collect()
        };
        let b: Vec<u64> = {
            let mut r = stream(99, &[1, 2]);
            (0..32).map(|_| r.gen::<u64>()).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn poisson_zero_mean_is_zero() {
        let mut rng = stream(5, &[]);
        for _ in 0..100 {
            assert_eq!(sample_poisson(&mut rng, 0.0), 0);
        }
    }

    #[test]
    fn poisson_moments_small_mean() {
        let (m, v) = moments(11, 3.0, 200_000);
        let se = (3.0_f64 / 200_000.0).sqrt();
        assert!((m - 3.0).abs() < 4.0 * se, "mean {m}");
        assert!((v / 3.0 - 1.0).abs() < 0.02, "variance {v}");
    }

    #[test]
    fn poisson_moments_large_mean() {
        let (m, v) = moments(13, 250.0, 200_000);
        let se = (250.0_f64 / 200_000.0).sqrt();
        assert!((m - 250.0).abs() < 4.0 * se, "mean {m}");
        assert!((v / 250.0 - 1.0).abs() < 0.02, "variance {v}");
    }

    #[test]
    fn poisson_moments_straddle_cutover() {
        for &mean in &[29.5, 30.5] {
            let (m, v) = moments(17, mean, 200_000);
            let se = (mean / 200_000.0_f64).sqrt();
            assert!((m - mean).abs() < 4.0 * se, "mean {m} at {mean}");
            assert!((v / mean - 1.0).abs() < 0.02, "variance {v} at {mean}");
        }
    }

    #[test]
    fn poisson_distribution_matches_exact_pmf() {
        // Chi-square against the exact pmf at mean 35 (PTRS branch).
        let mean = 35.0;
        let n = 200_000usize;
        let mut rng = stream(23, &[]);
        let mut histogram = vec![0u64; 200];
        for _ in 0..n {
            let k = sample_poisson(&mut rng, mean) as usize;
            histogram[k.min(199)] += 1;
        }
        let mut chi2 = 0.0;
        let mut dof = 0usize;
        let mut ln_pmf = -mean; // ln pmf(0)
        for (k, &observed) in histogram.iter().enumerate() {
            if k > 0 {
                ln_pmf += mean.ln() - (k as f64).ln();
            }
            let expected = n as f64 * ln_pmf.exp();
            if expected >= 5.0 {
                let d = observed as f64 - expected;
                chi2 += d * d / expected;
                dof += 1;
            }
        }
        assert!(dof > 30, "degenerate test setup");
        // 99.99th percentile of chi-square(dof) is roughly dof + 4 sqrt(2 dof)
        let limit = dof as f64 + 5.0 * (2.0 * dof as f64).sqrt();
        assert!(chi2 < limit, "chi2 = {chi2} with dof = {dof}");
    }
}
