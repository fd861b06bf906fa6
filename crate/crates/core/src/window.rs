//! Kaiser–Bessel blending function.
//!
//! `phi` rises smoothly from 0 at `t = 0` to 1 at `t = delta`; its derivative
//! is the normalized bump `b/(delta sinh b) I0(b sqrt(1 - (2t/delta - 1)^2))`
//! with `b = ln(1/epsilon)`. The same `phi` splits the potential into its
//! local and history parts and truncates the wave kernel at the horizon.

use num_complex::Complex64;

use crate::error::{invalid, Result};
use crate::special::{bessel_i0, bessel_i1_over_x, sinc_of_sqrt};

/// Immutable blending window; cheap to clone and safe to share.
#[derive(Clone, Debug)]
pub struct BlendWindow {
    epsilon: f64,
    b: f64,
    delta: f64,
    /// `b / (delta sinh b)`
    scale: f64,
    /// Chebyshev coefficients of `phi` in `v = 2t/delta - 1`.
    cheb: Vec<f64>,
}

impl BlendWindow {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(invalid("epsilon", format!("must lie in (0,1), got {epsilon}")));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(invalid("delta", format!("must be positive, got {delta}")));
        }
        let b = (1.0 / epsilon).ln();
        let scale = b / (delta * b.sinh());
        let cheb = antiderivative_coefficients(b);
        Ok(Self {
            epsilon,
            b,
            delta,
            scale,
            cheb,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Shape parameter `ln(1/epsilon)`.
    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Blending function: 0 for `t <= 0`, 1 for `t >= delta`, monotone between.
    pub fn phi(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if t >= self.delta {
            return 1.0;
        }
        let v = 2.0 * t / self.delta - 1.0;
        clenshaw(&self.cheb, v).clamp(0.0, 1.0)
    }

    pub fn phi_prime(&self, t: f64) -> f64 {
        if !(0.0..=self.delta).contains(&t) {
            return 0.0;
        }
        let v = 2.0 * t / self.delta - 1.0;
        let w = (1.0 - v * v).max(0.0).sqrt();
        self.scale * bessel_i0(self.b * w)
    }

    /// Second derivative on the open support; zero outside.
    pub fn phi_dprime(&self, t: f64) -> f64 {
        if t <= 0.0 || t >= self.delta {
            return 0.0;
        }
        let v = 2.0 * t / self.delta - 1.0;
        let w = (1.0 - v * v).max(0.0).sqrt();
        // I1(bw)/w = b * (I1(bw)/(bw)); the series form covers w -> 0
        let i1_over_w = self.b * bessel_i1_over_x(self.b * w);
        self.scale * self.b * i1_over_w * (-2.0 * v / self.delta)
    }

    /// Fourier transform `int phi'(t) e^{i omega t} dt`, in closed form.
    pub fn phi_prime_ft(&self, omega: f64) -> Complex64 {
        let half = 0.5 * self.delta * omega;
        let magnitude = self.b / self.b.sinh() * sinc_of_sqrt(half * half - self.b * self.b);
        Complex64::from_polar(1.0, half) * magnitude
    }

    /// Decay bound of `|phi_prime_ft|` beyond its bandlimit, for slack `theta > 1`.
    pub fn tail_bound(&self, theta: f64) -> Result<TailBound> {
        if !(theta > 1.0) || !theta.is_finite() {
            return Err(invalid("theta", format!("must exceed 1, got {theta}")));
        }
        let omega_min = 2.0 * self.b / (self.delta * (1.0 - 1.0 / (theta * theta)).sqrt());
        Ok(TailBound {
            omega_min,
            coefficient: 4.0 * self.b * theta * self.epsilon / self.delta,
        })
    }
}

/// `|phi_prime_ft(omega)| < coefficient / |omega|` for `|omega| >= omega_min`.
#[derive(Clone, Copy, Debug)]
pub struct TailBound {
    pub omega_min: f64,
    pub coefficient: f64,
}

impl TailBound {
    pub fn bound(&self, omega: f64) -> f64 {
        self.coefficient / omega.abs()
    }

    pub fn applies(&self, omega: f64) -> bool {
        omega.abs() >= self.omega_min
    }
}

// Chebyshev series of phi(v) = (b / (2 sinh b)) int_{-1}^{v} I0(b sqrt(1-s^2)) ds.
fn antiderivative_coefficients(b: f64) -> Vec<f64> {
    let integrand = |v: f64| b / (2.0 * b.sinh()) * bessel_i0(b * (1.0 - v * v).max(0.0).sqrt());
    let mut n = 32;
    let coeffs = loop {
        let c = chebyshev_coefficients(&integrand, n);
        let peak = c.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let tail = c[n - 4..].iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if tail < 1e-17 * peak || n >= 1024 {
            break c;
        }
        n *= 2;
    };
    let mut anti = integrate_chebyshev(&coeffs);
    let at_left = clenshaw(&anti, -1.0);
    anti[0] -= at_left;
    anti
}

// Coefficients c_k with f(v) ~ sum c_k T_k(v), from values at the n+1 Chebyshev extrema.
fn chebyshev_coefficients(f: &impl Fn(f64) -> f64, n: usize) -> Vec<f64> {
    let pi = std::f64::consts::PI;
    let vals: Vec<f64> = (0..=n).map(|j| f((pi * j as f64 / n as f64).cos())).collect();
    let mut c = vec![0.0; n + 1];
    for (k, ck) in c.iter_mut().enumerate() {
        let mut s = 0.0;
        for (j, &fj) in vals.iter().enumerate() {
            let w = if j == 0 || j == n { 0.5 } else { 1.0 };
            s += w * fj * (pi * (j * k) as f64 / n as f64).cos();
        }
        *ck = 2.0 * s / n as f64;
    }
    c[0] *= 0.5;
    c[n] *= 0.5;
    c
}

fn integrate_chebyshev(c: &[f64]) -> Vec<f64> {
    let n = c.len();
    let mut out = vec![0.0; n + 1];
    for k in 1..=n {
        let prev = c[k - 1];
        let next = if k + 1 < n { c[k + 1] } else { 0.0 };
        let lead = if k == 1 { 2.0 * prev } else { prev };
        out[k] = (lead - next) / (2.0 * k as f64);
    }
    out
}

fn clenshaw(c: &[f64], x: f64) -> f64 {
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for &ck in c.iter().skip(1).rev() {
        let b0 = 2.0 * x * b1 - b2 + ck;
        b2 = b1;
        b1 = b0;
    }
    x * b1 - b2 + c[0]
}
