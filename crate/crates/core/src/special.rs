//! Special functions and quadrature rules shared by the window, the
//! spreading kernel and the weight precomputation.

use std::f64::consts::PI;

/// Arguments at or above this value use the large-argument expansion.
const ASYMPTOTIC_SWITCH: f64 = 15.0;

/// Modified Bessel function of the first kind, order zero.
pub fn bessel_i0(x: f64) -> f64 {
    let x = x.abs();
    if x < ASYMPTOTIC_SWITCH {
        let q = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        loop {
            term *= q / (k * k);
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
            k += 1.0;
        }
        sum
    } else {
        asymptotic(x, 0.0)
    }
}

/// Modified Bessel function of the first kind, order one.
pub fn bessel_i1(x: f64) -> f64 {
    if x.abs() < ASYMPTOTIC_SWITCH {
        x * bessel_i1_over_x(x)
    } else {
        x.signum() * asymptotic(x.abs(), 1.0)
    }
}

/// `I1(x)/x`, finite at the origin where it equals 1/2.
pub fn bessel_i1_over_x(x: f64) -> f64 {
    if x.abs() >= ASYMPTOTIC_SWITCH {
        return asymptotic(x.abs(), 1.0) / x.abs();
    }
    let q = 0.25 * x * x;
    let mut term = 0.5;
    let mut sum = 0.5;
    let mut k = 1.0;
    loop {
        term *= q / (k * (k + 1.0));
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
        k += 1.0;
    }
    sum
}

// e^x / sqrt(2 pi x) * sum_k (-1)^k a_k(nu) / x^k, truncated at the smallest term.
fn asymptotic(x: f64, nu: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut term: f64 = 1.0;
    let mut sum: f64 = 1.0;
    let mut k = 1.0;
    loop {
        let odd = 2.0 * k - 1.0;
        let next = -term * (mu - odd * odd) / (k * 8.0 * x);
        if next.abs() >= term.abs() || next.abs() < 1e-17 * sum.abs() {
            if next.abs() < term.abs() {
                sum += next;
            }
            break;
        }
        sum += next;
        term = next;
        k += 1.0;
    }
    x.exp() / (2.0 * PI * x).sqrt() * sum
}

/// `sinc(sqrt(z2))` for real `z2`, continued to `sinh(y)/y` when `z2 = -y^2 < 0`.
pub fn sinc_of_sqrt(z2: f64) -> f64 {
    if z2.abs() < 1e-12 {
        1.0 - z2 / 6.0
    } else if z2 > 0.0 {
        let z = z2.sqrt();
        z.sin() / z
    } else {
        let y = (-z2).sqrt();
        y.sinh() / y
    }
}

/// `sin(kappa * a) / kappa`, with its `kappa -> 0` limit `a`.
#[inline]
pub fn sin_over(kappa: f64, a: f64) -> f64 {
    let x = kappa * a;
    if x.abs() < 1e-4 {
        a * (1.0 - x * x / 6.0)
    } else {
        x.sin() / kappa
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "quadrature order must be positive");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..(n + 1) / 2 {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    (
        x.iter().map(|&xi| mid + half * xi).collect(),
        w.iter().map(|&wi| half * wi).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn i0_series(x: f64) -> f64 {
        // independent: fixed number of terms, each from log-gamma
        use statrs::function::gamma::ln_gamma;
        if x == 0.0 {
            return 1.0;
        }
        (0..200)
            .map(|k| {
                let k = k as f64;
                (2.0 * k * (0.5 * x).ln() - 2.0 * ln_gamma(k + 1.0)).exp()
            })
            .sum()
    }

    #[test]
    fn i0_matches_series_across_switch() {
        for &x in &[0.0, 0.3, 1.0, 5.0, 10.0, 14.9, 15.0, 15.1, 20.0, 30.0, 40.0] {
            let a = bessel_i0(x);
            let b = i0_series(x);
            assert!(((a - b) / b).abs() < 1e-12, "x={x} {a} {b}");
        }
    }

    #[test]
    fn i1_is_derivative_of_i0() {
        for &x in &[0.5f64, 3.0, 9.0, 14.0, 16.0, 25.0] {
            let h = 1e-6 * x.max(1.0);
            let fd = (bessel_i0(x + h) - bessel_i0(x - h)) / (2.0 * h);
            let i1 = bessel_i1(x);
            assert!(((fd - i1) / i1).abs() < 1e-8, "x={x}");
        }
        assert_eq!(bessel_i1_over_x(0.0), 0.5);
    }

    #[test]
    fn kaiser_bessel_normalization_identity() {
        // int_{-1}^{1} I0(b sqrt(1-v^2)) dv = 2 sinh(b)/b
        for &b in &[1.0, 6.9, 13.8155, 20.7] {
            let (x, w) = gauss_legendre(200);
            let s: f64 = x
                .iter()
                .zip(&w)
                .map(|(&v, &wi)| wi * bessel_i0(b * (1.0 - v * v).sqrt()))
                .sum();
            let exact = 2.0 * f64::sinh(b) / b;
            assert!(((s - exact) / exact).abs() < 1e-13, "b={b}");
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(24);
        for deg in 0..48 {
            let s: f64 = x.iter().zip(&w).map(|(&xi, &wi)| wi * xi.powi(deg)).sum();
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!((s - exact).abs() < 1e-14, "deg={deg}");
        }
    }

    #[test]
    fn sinc_branches_agree_near_zero() {
        assert!((sinc_of_sqrt(1e-13) - 1.0).abs() < 1e-13);
        assert!((sinc_of_sqrt(-4.0) - 2f64.sinh() / 2.0).abs() < 1e-15);
        assert!((sinc_of_sqrt(4.0) - 2f64.sin() / 2.0).abs() < 1e-15);
        assert!((sin_over(0.0, 0.3) - 0.3).abs() < 1e-16);
        assert!((sin_over(2.0, 0.3) - (0.6f64).sin() / 2.0).abs() < 1e-16);
    }
}
