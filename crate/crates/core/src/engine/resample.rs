use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

/// `1 / Σ w²` for normalized weights.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s2 > 0.0 {
        s * s / s2
    } else {
        0.0
    }
}

/// Systematic resampling. Returns `n` indices into `weights`; the number of
/// copies of particle `i` is `⌊n w_i⌋` or `⌈n w_i⌉`. Weights need not be
/// normalized.
pub fn systematic_indices<R: Rng + ?Sized>(
    weights: &[f64],
    n: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() || weights.iter().any(|w| *w < 0.0) {
        return Err(Error::DegenerateWeights);
    }
    let step = total / n as f64;
    let mut u = rng.random::<f64>() * step;
    let mut out = Vec::with_capacity(n);
    let mut cum = weights[0];
    let mut i = 0;
    for _ in 0..n {
        while u > cum && i + 1 < weights.len() {
            i += 1;
            cum += weights[i];
        }
        out.push(i);
        u += step;
    }
    Ok(out)
}

/// Resamples `items` in place to equal weights. The survivors are shuffled
/// so that their order carries no information about their ancestry.
pub fn resample<T: Clone, R: Rng + ?Sized>(
    items: &mut Vec<T>,
    weights: &[f64],
    rng: &mut R,
) -> Result<()> {
    if items.len() != weights.len() {
        return Err(Error::LengthMismatch {
            left: items.len(),
            right: weights.len(),
        });
    }
    if items.is_empty() {
        return Ok(());
    }
    let idx = systematic_indices(weights, items.len(), rng)?;
    let mut next: Vec<T> = idx.iter().map(|&i| items[i].clone()).collect();
    next.shuffle(rng);
    *items = next;
    Ok(())
}

/// Shrinkage kernel move for a resampled cloud of static parameters
/// (Liu and West). Each particle is pulled towards the cloud mean by
/// `1 - a`, `a = sqrt(1 - h²)`, and perturbed with covariance `h² Σ`, which
/// keeps the cloud mean and covariance while restoring diversity. `mean`
/// and the Cholesky factor `chol` describe the cloud before resampling.
pub fn shrinkage_move<const D: usize, R: Rng + ?Sized>(
    x: &mut [f64; D],
    mean: &[f64; D],
    chol: &[[f64; D]; D],
    h: f64,
    rng: &mut R,
) {
    let a = (1.0 - h * h).sqrt();
    let mut e = [0.0; D];
    for v in e.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    for i in 0..D {
        let noise: f64 = (0..=i).map(|k| chol[i][k] * e[k]).sum();
        x[i] = a * x[i] + (1.0 - a) * mean[i] + h * noise;
    }
}

/// Weighted mean and Cholesky factor of the weighted covariance. Directions
/// with no spread get a zero factor.
pub fn weighted_moments<const D: usize>(xs: &[[f64; D]], w: &[f64]) -> ([f64; D], [[f64; D]; D]) {
    let total: f64 = w.iter().sum();
    let mut mean = [0.0; D];
    for (x, wi) in xs.iter().zip(w) {
        for i in 0..D {
            mean[i] += wi * x[i] / total;
        }
    }
    let mut cov = [[0.0; D]; D];
    for (x, wi) in xs.iter().zip(w) {
        for i in 0..D {
            for k in 0..=i {
                cov[i][k] += wi * (x[i] - mean[i]) * (x[k] - mean[k]) / total;
            }
        }
    }
    let mut l = [[0.0; D]; D];
    for i in 0..D {
        for k in 0..=i {
            let s = cov[i][k] - (0..k).map(|m| l[i][m] * l[k][m]).sum::<f64>();
            if i == k {
                l[i][i] = if s > 0.0 { s.sqrt() } else { 0.0 };
            } else if l[k][k] > 0.0 {
                l[i][k] = s / l[k][k];
            }
        }
    }
    (mean, l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn uniform_weights_keep_every_particle() {
        let w = vec![0.1; 10];
        let mut idx = systematic_indices(&w, 10, &mut stream(1, 0, 0, 0)).unwrap();
        idx.sort();
        assert_eq!(idx, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn point_mass_is_copied() {
        let w = [0.0, 1.0, 0.0];
        let mut items = vec!['a', 'b', 'c'];
        resample(&mut items, &w, &mut stream(2, 0, 0, 0)).unwrap();
        assert_eq!(items, vec!['b'; 3]);
    }

    #[test]
    fn binomial_count_bounds() {
        let n = 10_000;
        let mut w = vec![0.25 / (n as f64 - 1.0); n];
        w[0] = 0.75;
        let idx = systematic_indices(&w, n, &mut stream(3, 0, 0, 0)).unwrap();
        let count = idx.iter().filter(|&&i| i == 0).count() as f64;
        let expected = 0.75 * n as f64;
        let bound = 3.0 * (n as f64 * 0.75 * 0.25).sqrt();
        assert!((count - expected).abs() <= bound, "count {count}");
    }

    #[test]
    fn copies_are_floor_or_ceil() {
        let w = [0.05, 0.3, 0.15, 0.5];
        let n = 37;
        for seed in 0..20 {
            let idx = systematic_indices(&w, n, &mut stream(seed, 0, 0, 0)).unwrap();
            for (i, wi) in w.iter().enumerate() {
                let c = idx.iter().filter(|&&k| k == i).count() as f64;
                let e = wi * n as f64;
                assert!(c >= e.floor() && c <= e.ceil(), "particle {i}: {c} vs {e}");
            }
        }
    }

    #[test]
    fn degenerate_weights_are_rejected() {
        assert_eq!(
            systematic_indices(&[0.0, 0.0], 2, &mut stream(0, 0, 0, 0)),
            Err(Error::DegenerateWeights)
        );
        assert!(systematic_indices(&[f64::NAN, 1.0], 2, &mut stream(0, 0, 0, 0)).is_err());
    }

    #[test]
    fn moments_of_a_known_cloud() {
        let xs = [[0.0, 0.0], [2.0, 0.0], [0.0, 4.0], [2.0, 4.0]];
        let (m, l) = weighted_moments(&xs, &[1.0; 4]);
        assert_eq!(m, [1.0, 2.0]);
        assert!(
            (l[0][0] - 1.0).abs() < 1e-12 && l[1][0].abs() < 1e-12 && (l[1][1] - 2.0).abs() < 1e-12
        );
    }

    #[test]
    fn shrinkage_move_keeps_mean_and_covariance() {
        let mut rng = stream(3, 0, 0, 0);
        let n = 200_000;
        let mut xs: Vec<[f64; 1]> = (0..n)
            .map(|i| [if i % 2 == 0 { -1.0 } else { 1.0 }])
            .collect();
        let (m, l) = weighted_moments(&xs, &vec![1.0; n]);
        for x in xs.iter_mut() {
            shrinkage_move(x, &m, &l, 0.3, &mut rng);
        }
        let (m2, l2) = weighted_moments(&xs, &vec![1.0; n]);
        assert!(m2[0].abs() < 0.01);
        assert!((l2[0][0] - 1.0).abs() < 0.01);
        let mut distinct: Vec<u64> = xs.iter().map(|x| x[0].to_bits()).collect();
        distinct.sort();
        distinct.dedup();
        assert_eq!(distinct.len(), n);
    }

    #[test]
    fn ess_bounds() {
        assert_eq!(effective_sample_size(&[0.25; 4]), 4.0);
        assert_eq!(effective_sample_size(&[1.0, 0.0, 0.0]), 1.0);
    }
}
