//! Scheme parameters and the Fourier mode grid.
//!
//! All derived quantities (blending width, history horizon, mode spacing,
//! cutoff and grid size) come from the tolerance, the Nyquist fraction, the
//! time step and the signal bandlimit. Modes are stored compactly: only the
//! Hermitian half of the ball `|n dk| <= cutoff` is kept, as contiguous
//! `n3` runs ("lines") indexed by `(n1, n2)`.

use std::f64::consts::PI;

use log::warn;
use num_complex::Complex64;

use crate::error::{invalid, Result};
use crate::scenarios::Signal;

/// Diameter of the domain `[-1,1]^3`.
pub const DOMAIN_DIAMETER: f64 = 2.0 * 1.732_050_807_568_877_2;

/// User-facing inputs from which every scheme parameter is derived.
#[derive(Clone, Debug, PartialEq)]
pub struct SchemeInputs {
    pub epsilon: f64,
    pub gamma: f64,
    pub dt: f64,
    pub k0: f64,
    pub t_final: f64,
    /// Use this blending width instead of `W * dt`.
    pub fixed_delta: Option<f64>,
    /// Use this cutoff instead of `ceil(K0 + pi gamma / dt)`.
    pub cutoff_override: Option<f64>,
    /// Evolve modes out to `mode_extension * K` (diagnostics only; 1 = none).
    pub mode_extension: f64,
}

impl SchemeInputs {
    pub fn new(epsilon: f64, gamma: f64, dt: f64, k0: f64, t_final: f64) -> Self {
        Self {
            epsilon,
            gamma,
            dt,
            k0,
            t_final,
            fixed_delta: None,
            cutoff_override: None,
            mode_extension: 1.0,
        }
    }
}

/// Derived method parameters. Construct with [`select_params`].
#[derive(Clone, Debug, PartialEq)]
pub struct SchemeParams {
    pub epsilon: f64,
    pub gamma: f64,
    pub dt: f64,
    pub k0: f64,
    /// `ln(1/epsilon)`
    pub b: f64,
    /// Blending width in steps.
    pub w: usize,
    pub delta: f64,
    /// History support (kernel truncation radius), a multiple of `dt`.
    pub a: f64,
    pub dk: f64,
    /// Wavenumber cutoff `K`.
    pub k_cut: f64,
    /// Radius of the evolved mode ball (`>= k_cut`).
    pub mode_cutoff: f64,
    /// Modes per dimension (odd).
    pub n: usize,
    pub n_steps: usize,
    pub t_final: f64,
    pub inputs: SchemeInputs,
}

impl SchemeParams {
    /// `A - delta`, the delay at which the annihilation window samples the source.
    pub fn annihilation_lag(&self) -> f64 {
        self.a - self.delta
    }

    /// True when `K0 dt > pi (1 - gamma)`: the step under-resolves the signal band.
    pub fn under_resolved(&self) -> bool {
        self.k0 * self.dt > PI * (1.0 - self.gamma)
    }

    pub fn time_of_step(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }
}

/// Derive all scheme parameters; see [`SchemeInputs`].
pub fn select_params(inputs: &SchemeInputs) -> Result<SchemeParams> {
    let SchemeInputs {
        epsilon,
        gamma,
        dt,
        k0,
        t_final,
        ..
    } = *inputs;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(invalid("epsilon", format!("must lie in (0,1), got {epsilon}")));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(invalid("gamma", format!("must lie in (0,1), got {gamma}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("dt", format!("must be positive, got {dt}")));
    }
    if !(k0 >= 0.0 && k0.is_finite()) {
        return Err(invalid("k0", format!("must be non-negative, got {k0}")));
    }
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(invalid("t_final", format!("must be positive, got {t_final}")));
    }
    if !(inputs.mode_extension >= 1.0 && inputs.mode_extension.is_finite()) {
        return Err(invalid("mode_extension", "must be at least 1"));
    }

    let b = (1.0 / epsilon).ln();
    let w_min = (2.0 * b / (PI * gamma)).ceil() as usize;
    let (w, delta) = match inputs.fixed_delta {
        Some(d) => {
            if !(d > 0.0 && d.is_finite()) {
                return Err(invalid("fixed_delta", format!("must be positive, got {d}")));
            }
            ((d / dt - 1e-9).ceil().max(1.0) as usize, d)
        }
        None => (w_min, w_min as f64 * dt),
    };
    let a = ((DOMAIN_DIAMETER + delta) / dt - 1e-9).ceil() * dt;
    let dk = 2.0 * PI / (a + 2.0);
    let k_cut = match inputs.cutoff_override {
        Some(k) => {
            if !(k > 0.0 && k.is_finite()) {
                return Err(invalid("cutoff_override", format!("must be positive, got {k}")));
            }
            k
        }
        None => (k0 + PI * gamma / dt - 1e-9).ceil(),
    };
    let mode_cutoff = k_cut * inputs.mode_extension;
    let mut n = (2.0 * mode_cutoff / dk - 1e-9).ceil() as usize;
    if n % 2 == 0 {
        n += 1;
    }
    let n_steps = (t_final / dt).round().max(1.0) as usize;

    let params = SchemeParams {
        epsilon,
        gamma,
        dt,
        k0,
        b,
        w,
        delta,
        a,
        dk,
        k_cut,
        mode_cutoff,
        n,
        n_steps,
        t_final,
        inputs: inputs.clone(),
    };
    if params.under_resolved() {
        warn!(
            "time step under-resolves signal band: K0*dt = {:.4} > pi(1-gamma) = {:.4}",
            k0 * dt,
            PI * (1.0 - gamma)
        );
    }
    Ok(params)
}

/// Closed-form epsilon-bandlimit of a built-in signal family.
pub fn estimate_bandlimit(signal: &Signal, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(invalid("epsilon", format!("must lie in (0,1), got {epsilon}")));
    }
    match signal {
        Signal::ErfSine { slope, omega, .. } => {
            Ok(omega.abs() + 2.0 * slope.abs() * (1.0 / epsilon).ln().sqrt())
        }
        Signal::Gaussian { mu, amplitude, .. } => {
            let ratio = (amplitude.abs() / epsilon).max(1.0);
            Ok(2.0 * (mu * ratio.ln()).sqrt())
        }
        Signal::Custom { bandlimit, .. } => bandlimit.ok_or_else(|| {
            crate::Error::Unsupported("custom signal without a declared bandlimit".into())
        }),
    }
}

/// One contiguous run of modes `(n1, n2, n3_lo..=n3_hi)` in compact storage.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Line {
    pub n1: i32,
    pub n2: i32,
    pub n3_lo: i32,
    pub n3_hi: i32,
    pub offset: usize,
}

impl Line {
    pub fn len(&self) -> usize {
        (self.n3_hi - self.n3_lo + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.n3_hi < self.n3_lo
    }

    /// `n1^2 + n2^2`
    pub fn radial2(&self) -> u32 {
        (self.n1 * self.n1 + self.n2 * self.n2) as u32
    }
}

/// Fourier mode grid `k = n dk`, `n in {-(N-1)/2..(N-1)/2}^3`, with the ball mask.
#[derive(Clone, Debug)]
pub struct ModeGrid {
    dk: f64,
    n: usize,
    cutoff: f64,
    /// Largest admissible `|n|^2`.
    s_max: u32,
    lines: Vec<Line>,
    len: usize,
}

impl ModeGrid {
    pub fn new(dk: f64, n: usize, cutoff: f64) -> Result<Self> {
        if !(dk > 0.0) {
            return Err(invalid("dk", "must be positive"));
        }
        if n % 2 == 0 {
            return Err(invalid("n", format!("must be odd, got {n}")));
        }
        let half = ((n - 1) / 2) as i64;
        let r = cutoff / dk;
        let mut s_max = (r * r).floor() as i64;
        while ((s_max + 1) as f64) * dk * dk <= cutoff * cutoff {
            s_max += 1;
        }
        while s_max >= 0 && (s_max as f64) * dk * dk > cutoff * cutoff {
            s_max -= 1;
        }
        let s_max = s_max.clamp(0, 3 * half * half) as u32;
        let mut lines = Vec::new();
        let mut offset = 0;
        for n1 in 0..=half {
            for n2 in -half..=half {
                if n1 == 0 && n2 < 0 {
                    continue;
                }
                let r12 = n1 * n1 + n2 * n2;
                if r12 > s_max as i64 {
                    continue;
                }
                let chord = (((s_max as i64 - r12) as f64).sqrt().floor() as i64).min(half);
                let lo = if n1 == 0 && n2 == 0 { 0 } else { -chord };
                let line = Line {
                    n1: n1 as i32,
                    n2: n2 as i32,
                    n3_lo: lo as i32,
                    n3_hi: chord as i32,
                    offset,
                };
                offset += line.len();
                lines.push(line);
            }
        }
        Ok(Self {
            dk,
            n,
            cutoff,
            s_max,
            lines,
            len: offset,
        })
    }

    pub fn dk(&self) -> f64 {
        self.dk
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `(N - 1) / 2`
    pub fn half_width(&self) -> i32 {
        ((self.n - 1) / 2) as i32
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn s_max(&self) -> u32 {
        self.s_max
    }

    /// Compact Hermitian-half lines, in storage order.
    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    /// Number of stored (half-ball) modes.
    pub fn half_len(&self) -> usize {
        self.len
    }

    /// Number of unmasked modes in the full ball.
    pub fn unmasked_count(&self) -> usize {
        2 * self.len - 1
    }

    pub fn is_unmasked(&self, n1: i32, n2: i32, n3: i32) -> bool {
        let h = self.half_width();
        if n1.abs() > h || n2.abs() > h || n3.abs() > h {
            return false;
        }
        let s = (n1 as i64).pow(2) + (n2 as i64).pow(2) + (n3 as i64).pow(2);
        s <= self.s_max as i64
    }

    pub fn kappa_of_shell(&self, s: u32) -> f64 {
        self.dk * (s as f64).sqrt()
    }

    /// Storage index and conjugation flag of an unmasked mode.
    pub fn half_index(&self, n1: i32, n2: i32, n3: i32) -> Option<(usize, bool)> {
        if !self.is_unmasked(n1, n2, n3) {
            return None;
        }
        let flip = n1 < 0 || (n1 == 0 && (n2 < 0 || (n2 == 0 && n3 < 0)));
        let (m1, m2, m3) = if flip { (-n1, -n2, -n3) } else { (n1, n2, n3) };
        let line = self.line_index(m1, m2)?;
        let l = &self.lines[line];
        Some((l.offset + (m3 - l.n3_lo) as usize, flip))
    }

    fn line_index(&self, n1: i32, n2: i32) -> Option<usize> {
        // lines are sorted by (n1, n2)
        self.lines
            .binary_search_by(|l| (l.n1, l.n2).cmp(&(n1, n2)))
            .ok()
    }

    /// Shell index `|n|^2` of every stored mode, in storage order.
    pub fn shells(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.len);
        for l in &self.lines {
            let r12 = l.radial2();
            for n3 in l.n3_lo..=l.n3_hi {
                out.push(r12 + (n3 * n3) as u32);
            }
        }
        out
    }

    /// Expand compact Hermitian-half storage into a full `N^3` cube.
    pub fn expand(&self, half: &[Complex64]) -> ModeCube {
        assert_eq!(half.len(), self.len, "half-storage length mismatch");
        let mut cube = ModeCube::zeros(self.n);
        for l in &self.lines {
            for n3 in l.n3_lo..=l.n3_hi {
                let v = half[l.offset + (n3 - l.n3_lo) as usize];
                cube.set(l.n1, l.n2, n3, v);
                cube.set(-l.n1, -l.n2, -n3, v.conj());
            }
        }
        cube
    }

    /// Pack a Hermitian cube into compact storage (the mirrored half is ignored).
    pub fn compress(&self, cube: &ModeCube) -> Vec<Complex64> {
        assert_eq!(cube.n(), self.n, "cube size mismatch");
        let mut out = Vec::with_capacity(self.len);
        for l in &self.lines {
            for n3 in l.n3_lo..=l.n3_hi {
                out.push(cube.get(l.n1, l.n2, n3));
            }
        }
        out
    }

    /// Zero every masked-out entry of a full cube.
    pub fn apply_mask(&self, cube: &mut ModeCube) {
        let h = self.half_width();
        for n1 in -h..=h {
            for n2 in -h..=h {
                for n3 in -h..=h {
                    if !self.is_unmasked(n1, n2, n3) {
                        cube.set(n1, n2, n3, Complex64::new(0.0, 0.0));
                    }
                }
            }
        }
    }
}

/// Build the mode grid for a parameter set.
pub fn build_grid(p: &SchemeParams) -> Result<ModeGrid> {
    ModeGrid::new(p.dk, p.n, p.mode_cutoff)
}

/// Dense `N^3` complex cube indexed by signed mode numbers.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeCube {
    n: usize,
    data: Vec<Complex64>,
}

impl ModeCube {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![Complex64::new(0.0, 0.0); n * n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn index(&self, n1: i32, n2: i32, n3: i32) -> usize {
        let h = ((self.n - 1) / 2) as i32;
        let (a, b, c) = ((n1 + h) as usize, (n2 + h) as usize, (n3 + h) as usize);
        (a * self.n + b) * self.n + c
    }

    pub fn get(&self, n1: i32, n2: i32, n3: i32) -> Complex64 {
        self.data[self.index(n1, n2, n3)]
    }

    pub fn set(&mut self, n1: i32, n2: i32, n3: i32, v: Complex64) {
        let i = self.index(n1, n2, n3);
        self.data[i] = v;
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(eps: f64, gamma: f64, dt: f64, k0: f64) -> SchemeParams {
        select_params(&SchemeInputs::new(eps, gamma, dt, k0, 6.0)).unwrap()
    }

    #[test]
    fn blending_steps_match_reported_values() {
        assert_eq!(params(1e-6, 0.5, 0.01, 10.0).w, 18);
        assert_eq!(params(1e-6, 2.0 / 3.0, 0.0184, 57.0).w, 14);
    }

    #[test]
    fn surface_experiment_parameters() {
        let p = params(1e-6, 2.0 / 3.0, 0.0184, 57.0);
        assert!((p.delta - 0.2576).abs() < 1e-3);
        assert!((p.k_cut - 171.0).abs() <= 1.0);
        assert!((p.n as i64 - 313).abs() <= 2);
        assert!((p.dk / 1.0962 - 1.0).abs() < 0.01);
    }

    #[test]
    fn random_experiment_parameters() {
        let p = params(1e-6, 0.5, 0.012, 131.0);
        assert!((p.k_cut - 263.0).abs() <= 1.0);
        assert!((p.n as i64 - 477).abs() <= 2);
        assert!((p.dk / 1.105 - 1.0).abs() < 0.01);
    }

    #[test]
    fn invariants_hold() {
        for &(eps, gamma, dt, k0) in &[
            (1e-3, 0.3, 0.05, 5.0),
            (1e-6, 0.5, 0.0102, 131.0),
            (1e-9, 0.9, 0.02, 0.0),
            (1e-6, 2.0 / 3.0, 0.0184, 57.0),
        ] {
            let p = params(eps, gamma, dt, k0);
            assert_eq!(p.w, (2.0 * p.b / (PI * gamma)).ceil() as usize);
            assert!((p.delta - p.w as f64 * dt).abs() < 1e-12);
            assert!(p.a >= DOMAIN_DIAMETER + p.delta - 1e-12);
            let steps = p.a / dt;
            assert!((steps - steps.round()).abs() < 1e-9);
            assert!(p.dk * (p.a + 2.0) <= 2.0 * PI * (1.0 + 1e-14));
            assert!(p.k_cut >= k0 + PI * gamma / dt - 1.0);
            assert_eq!(p.n % 2, 1);
            assert!(p.n as f64 * p.dk >= 2.0 * p.k_cut);
        }
    }

    #[test]
    fn rejects_out_of_range_inputs() {
        let ok = SchemeInputs::new(1e-6, 0.5, 0.01, 10.0, 1.0);
        for bad in [
            SchemeInputs { epsilon: 1.5, ..ok.clone() },
            SchemeInputs { gamma: 1.0, ..ok.clone() },
            SchemeInputs { dt: 0.0, ..ok.clone() },
            SchemeInputs { k0: -1.0, ..ok.clone() },
            SchemeInputs { t_final: 0.0, ..ok.clone() },
        ] {
            assert!(select_params(&bad).is_err());
        }
    }

    #[test]
    fn under_resolution_flag() {
        assert!(params(1e-6, 0.5, 0.02, 131.0).under_resolved());
        assert!(!params(1e-6, 0.5, 0.0102, 131.0).under_resolved());
    }

    #[test]
    fn bandlimit_estimates() {
        let erf = Signal::ErfSine {
            amplitude: 1.0,
            slope: 5.0,
            t0: 1.5,
            omega: 30.0 * PI,
        };
        let k0 = estimate_bandlimit(&erf, 1e-6).unwrap();
        assert!((k0 - 131.0).abs() < 1.0, "{k0}");
        let g = |mu| Signal::Gaussian {
            amplitude: 10.0,
            mu,
            t0: 2.0,
        };
        let k0 = estimate_bandlimit(&g(50.0), 1e-6).unwrap();
        assert!((k0 - 57.0).abs() < 0.5, "{k0}");
        assert!(estimate_bandlimit(&g(60.0), 1e-6).unwrap() > k0);
        let custom = Signal::custom(|t| t, None);
        assert!(estimate_bandlimit(&custom, 1e-6).is_err());
    }

    #[test]
    fn small_grid_has_seven_modes() {
        let g = ModeGrid::new(1.0, 3, 1.0).unwrap();
        assert_eq!(g.unmasked_count(), 7);
        assert_eq!(g.half_len(), 4);
        assert!(g.is_unmasked(0, 0, 0));
        assert!(!g.is_unmasked(1, 1, 0));
    }

    #[test]
    fn grid_count_close_to_ball_volume() {
        let g = ModeGrid::new(1.0962, 313, 171.0).unwrap();
        let mut exact = 0usize;
        let h = g.half_width();
        let lim = (171.0f64 / 1.0962).powi(2);
        for n1 in -h..=h {
            for n2 in -h..=h {
                let r12 = (n1 * n1 + n2 * n2) as f64;
                if r12 > lim {
                    continue;
                }
                for n3 in -h..=h {
                    if r12 + (n3 * n3) as f64 <= lim {
                        exact += 1;
                    }
                }
            }
        }
        assert_eq!(exact, g.unmasked_count());
        let vol = 4.0 / 3.0 * PI * (171.0f64 / 1.0962).powi(3);
        assert!((exact as f64 / vol - 1.0).abs() < 0.02);
    }

    #[test]
    fn mask_is_invariant_under_cube_symmetries() {
        let g = ModeGrid::new(0.9, 15, 5.3).unwrap();
        let h = g.half_width();
        for n1 in -h..=h {
            for n2 in -h..=h {
                for n3 in -h..=h {
                    let m = g.is_unmasked(n1, n2, n3);
                    let perms = [
                        (n1, n2, n3),
                        (n1, n3, n2),
                        (n2, n1, n3),
                        (n2, n3, n1),
                        (n3, n1, n2),
                        (n3, n2, n1),
                    ];
                    for (a, b, c) in perms {
                        for sa in [-1, 1] {
                            for sb in [-1, 1] {
                                for sc in [-1, 1] {
                                    assert_eq!(g.is_unmasked(sa * a, sb * b, sc * c), m);
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn expand_compress_round_trip_is_hermitian() {
        let g = ModeGrid::new(1.1, 9, 4.0).unwrap();
        let half: Vec<Complex64> = (0..g.half_len())
            .map(|i| Complex64::new(i as f64, if i == 0 { 0.0 } else { -(i as f64) * 0.5 }))
            .collect();
        let cube = g.expand(&half);
        assert_eq!(g.compress(&cube), half);
        let h = g.half_width();
        for n1 in -h..=h {
            for n2 in -h..=h {
                for n3 in -h..=h {
                    assert_eq!(cube.get(n1, n2, n3), cube.get(-n1, -n2, -n3).conj());
                    let (idx, flip) = match g.half_index(n1, n2, n3) {
                        Some(x) => x,
                        None => {
                            assert_eq!(cube.get(n1, n2, n3), Complex64::new(0.0, 0.0));
                            continue;
                        }
                    };
                    let v = if flip { half[idx].conj() } else { half[idx] };
                    assert_eq!(v, cube.get(n1, n2, n3));
                }
            }
        }
    }
}
