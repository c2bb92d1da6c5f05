//! Bessel function of the first kind, order zero.

use std::f64::consts::{FRAC_PI_4, PI};

const SERIES_LIMIT: f64 = 8.0;
const ASYMPTOTIC_LIMIT: f64 = 25.0;

/// `J0(x)` for finite `x`, absolute error below 1e-12 on `|x| <= 50`.
///
/// Power series below 8, Miller backward recurrence on `[8, 25]` and the
/// Hankel asymptotic expansion above.
pub fn bessel_j0(x: f64) -> f64 {
    let ax = x.abs();
    if ax < SERIES_LIMIT {
        series(ax)
    } else if ax <= ASYMPTOTIC_LIMIT {
        miller(ax)
    } else {
        hankel(ax)
    }
}

fn series(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..60 {
        term *= -q / (k * k) as f64;
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1e-3) {
            break;
        }
    }
    sum
}

fn miller(x: f64) -> f64 {
    // Start well above x so that J_start(x) is negligible.
    let mut start = (x as usize) + 40;
    start += start % 2;
    let mut j_next = 0.0;
    let mut j_cur = 1e-30;
    let mut even_sum = 0.0;
    let mut j0 = 0.0;
    for n in (1..=start).rev() {
        let j_prev = 2.0 * n as f64 / x * j_cur - j_next;
        j_next = j_cur;
        j_cur = j_prev;
        // j_cur now holds J_{n-1}.
        if (n - 1) % 2 == 0 && n > 1 {
            even_sum += j_cur;
        }
        if n == 1 {
            j0 = j_cur;
        }
        if j_cur.abs() > 1e250 {
            j_cur *= 1e-250;
            j_next *= 1e-250;
            even_sum *= 1e-250;
        }
    }
    j0 / (j0 + 2.0 * even_sum)
}

fn hankel(x: f64) -> f64 {
    // P ~ sum (-1)^k a_{2k} / x^{2k},  Q ~ sum (-1)^k a_{2k+1} / x^{2k+1},
    // a_k = prod_{j<=k} (-(2j-1)^2) / (k! 8^k).
    let mut p = 0.0;
    let mut q = 0.0;
    let mut a = 1.0;
    let mut last = f64::INFINITY;
    for k in 0..60 {
        if k > 0 {
            let odd = (2 * k - 1) as f64;
            a *= -(odd * odd) / (8.0 * k as f64 * x);
        }
        if a.abs() > last {
            break;
        }
        last = a.abs();
        // a already carries the factor x^{-k}.
        match k % 4 {
            0 => p += a,
            1 => q += a,
            2 => p -= a,
            _ => q -= a,
        }
        if a.abs() < 1e-20 {
            break;
        }
    }
    let chi = x - FRAC_PI_4;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}
