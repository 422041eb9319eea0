//! Modified Bessel functions of the first kind and the Marcum Q-function.
//!
//! Everything is computed with exponentially scaled Bessel values
//! `e^{-x} I_k(x)` so that arguments in the thousands (high-SNR amplitudes)
//! neither overflow nor lose precision.

use std::f64::consts::PI;

/// Below this argument `I_0` is summed from its power series, above it the
/// asymptotic expansion is used. Both are accurate to a few ulp there.
const I0_SERIES_LIMIT: f64 = 25.0;

/// `ln(e^{-x} I_0(x))` for `x >= 0`.
pub fn ln_i0_scaled(x: f64) -> f64 {
    let x = x.abs();
    if x < I0_SERIES_LIMIT {
        let q = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        loop {
            term *= q / (k * k);
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
            k += 1.0;
        }
        sum.ln() - x
    } else {
        // Truncated asymptotic series; the first omitted term is a few ulp
        // at the lower end of each interval.
        let n = if x >= 200.0 { 8 } else { I0_ASYMPTOTIC.len() };
        let inv = 1.0 / x;
        let mut sum = 0.0;
        for &a in I0_ASYMPTOTIC[..n].iter().rev() {
            sum = sum * inv + a;
        }
        0.5 * (sum * sum * inv / (2.0 * PI)).ln()
    }
}

/// Coefficients `((2k-1)!!)^2 / (k! 8^k)` of the large-argument expansion of
/// `e^{-x} I_0(x) √(2πx)`.
const I0_ASYMPTOTIC: [f64; 18] = {
    let mut a = [0.0; 18];
    a[0] = 1.0;
    let mut k = 1;
    while k < 18 {
        let odd = (2 * k - 1) as f64;
        a[k] = a[k - 1] * odd * odd / (8.0 * k as f64);
        k += 1;
    }
    a
};

/// `ln I_0(x)`.
pub fn ln_i0(x: f64) -> f64 {
    ln_i0_scaled(x) + x.abs()
}

/// Logarithms of `e^{-x} I_k(x)` for `k = 0..=n`.
///
/// Ratios `I_k / I_{k-1}` come from the backward continued fraction, which is
/// stable for all orders; the sequence is anchored at `I_0`.
pub fn ln_ik_scaled_sequence(x: f64, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    out[0] = ln_i0_scaled(x);
    if n == 0 {
        return out;
    }
    if x == 0.0 {
        for v in out.iter_mut().skip(1) {
            *v = f64::NEG_INFINITY;
        }
        return out;
    }
    // Start the recurrence well beyond `n` with the Amos-type estimate of the
    // ratio, then run it down.
    let start = n + 40 + (x.sqrt() as usize);
    let kk = (start + 1) as f64;
    let mut ratio = x / (kk + (kk * kk + x * x).sqrt());
    let mut ratios = vec![0.0; n + 1];
    for k in (1..=start).rev() {
        ratio = 1.0 / (2.0 * k as f64 / x + ratio);
        if k <= n {
            ratios[k] = ratio;
        }
    }
    for k in 1..=n {
        out[k] = out[k - 1] + ratios[k].ln();
    }
    out
}

/// Sum of `rho^k e^{-(a-b)^2/2} e^{-x} I_k(x)` for `k >= k0`, with `x = ab`,
/// returned as a logarithm.
fn ln_bessel_tail_sum(a: f64, b: f64, rho: f64, k0: usize) -> f64 {
    let x = a * b;
    let ln_rho = rho.ln();
    let mut n = 64 + (12.0 * x.sqrt()) as usize;
    loop {
        let ln_ik = ln_ik_scaled_sequence(x, n);
        let terms: Vec<f64> = (k0..=n).map(|k| k as f64 * ln_rho + ln_ik[k]).collect();
        let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let last = *terms.last().unwrap();
        if last - max < -45.0 || n > 200_000 {
            let s: f64 = terms.iter().map(|t| (t - max).exp()).sum();
            return -0.5 * (a - b) * (a - b) + max + s.ln();
        }
        n *= 2;
    }
}

/// Marcum Q-function of order one, `Q_1(a, b)`, for `a, b >= 0`.
pub fn marcum_q1(a: f64, b: f64) -> f64 {
    if b <= 0.0 {
        return 1.0;
    }
    if a <= 0.0 {
        return (-0.5 * b * b).exp();
    }
    if b > a {
        ln_bessel_tail_sum(a, b, a / b, 0).exp().min(1.0)
    } else {
        (1.0 - ln_bessel_tail_sum(a, b, b / a, 1).exp()).max(0.0)
    }
}

/// `ln Q_1(a, b)`, accurate deep in the tail.
pub fn ln_marcum_q1(a: f64, b: f64) -> f64 {
    if b <= 0.0 {
        return 0.0;
    }
    if a <= 0.0 {
        return -0.5 * b * b;
    }
    if b > a {
        ln_bessel_tail_sum(a, b, a / b, 0).min(0.0)
    } else {
        (-ln_bessel_tail_sum(a, b, b / a, 1).exp()).ln_1p()
    }
}

/// `ln(1 - Q_1(a, b))`, accurate when the complement is tiny.
pub fn ln_marcum_q1_complement(a: f64, b: f64) -> f64 {
    if b <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if a <= 0.0 {
        return (-(-0.5 * b * b).exp()).ln_1p();
    }
    if b > a {
        (-marcum_q1(a, b)).ln_1p()
    } else {
        ln_bessel_tail_sum(a, b, b / a, 1)
    }
}
