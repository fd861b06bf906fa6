//! Source signals and the built-in test scenarios.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use statrs::function::erf::erf;

use crate::error::{invalid, Result};

/// Identifier of the generator used by [`random_sources`].
pub const RNG_ALGORITHM: &str = "ChaCha20 (rand_chacha 0.3, seed_from_u64)";

/// Minimum pairwise separation enforced when sampling random sources.
pub const MIN_SEPARATION: f64 = 1e-6;

/// Real source signal `sigma(t)`. Every built-in family is identically zero for `t <= 0`.
#[derive(Clone)]
pub enum Signal {
    /// `a/2 (erf(slope (t - t0)) + 1) sin(omega (t - t0))`
    ErfSine {
        amplitude: f64,
        slope: f64,
        t0: f64,
        omega: f64,
    },
    /// `a exp(-mu (t - t0)^2)`
    Gaussian { amplitude: f64, mu: f64, t0: f64 },
    Custom {
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        bandlimit: Option<f64>,
    },
}

impl Signal {
    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static, bandlimit: Option<f64>) -> Self {
        Signal::Custom {
            f: Arc::new(f),
            bandlimit,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match *self {
            Signal::ErfSine {
                amplitude,
                slope,
                t0,
                omega,
            } => {
                let s = t - t0;
                amplitude * 0.5 * (erf(slope * s) + 1.0) * (omega * s).sin()
            }
            Signal::Gaussian { amplitude, mu, t0 } => {
                let s = t - t0;
                amplitude * (-mu * s * s).exp()
            }
            Signal::Custom { ref f, .. } => f(t),
        }
    }
}

impl fmt::Debug for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Signal::ErfSine {
                amplitude,
                slope,
                t0,
                omega,
            } => f
                .debug_struct("ErfSine")
                .field("amplitude", amplitude)
                .field("slope", slope)
                .field("t0", t0)
                .field("omega", omega)
                .finish(),
            Signal::Gaussian { amplitude, mu, t0 } => f
                .debug_struct("Gaussian")
                .field("amplitude", amplitude)
                .field("mu", mu)
                .field("t0", t0)
                .finish(),
            Signal::Custom { bandlimit, .. } => f
                .debug_struct("Custom")
                .field("bandlimit", bandlimit)
                .finish_non_exhaustive(),
        }
    }
}

/// A point source at `position` in `[-1,1]^3`.
#[derive(Clone, Debug)]
pub struct Source {
    pub position: [f64; 3],
    pub signal: Signal,
}

/// Sources plus the points at which the field is sampled.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub sources: Vec<Source>,
    pub targets: Vec<[f64; 3]>,
}

impl Scenario {
    pub fn positions(&self) -> Vec<[f64; 3]> {
        self.sources.iter().map(|s| s.position).collect()
    }

    /// Largest per-source bandlimit estimate.
    pub fn bandlimit(&self, epsilon: f64) -> Result<f64> {
        let mut k0 = 0.0f64;
        for s in &self.sources {
            k0 = k0.max(crate::spectrum::estimate_bandlimit(&s.signal, epsilon)?);
        }
        Ok(k0)
    }
}

/// Uniform `n x n x n` grid over `[-1,1]^3` (endpoints included).
pub fn uniform_targets(n: usize) -> Vec<[f64; 3]> {
    let coord = |i: usize| {
        if n == 1 {
            0.0
        } else {
            -1.0 + 2.0 * i as f64 / (n - 1) as f64
        }
    };
    let mut out = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                out.push([coord(i), coord(j), coord(k)]);
            }
        }
    }
    out
}

/// Eight unit-amplitude erf-ramped sines at the cube corners.
pub fn corner_sources() -> Vec<Source> {
    let mut out = Vec::with_capacity(8);
    for &x in &[-1.0, 1.0] {
        for &y in &[-1.0, 1.0] {
            for &z in &[-1.0, 1.0] {
                out.push(Source {
                    position: [x, y, z],
                    signal: Signal::ErfSine {
                        amplitude: 1.0,
                        slope: 5.0,
                        t0: 1.5,
                        omega: 30.0 * PI,
                    },
                });
            }
        }
    }
    out
}

/// Cruller surface on an `n_u x n_v` tensor grid of its two angles.
pub fn cruller_points(n_u: usize, n_v: usize) -> Vec<[f64; 3]> {
    let mut out = Vec::with_capacity(n_u * n_v);
    for i in 0..n_u {
        let theta = 2.0 * PI * i as f64 / n_u as f64;
        for j in 0..n_v {
            let psi = 2.0 * PI * j as f64 / n_v as f64;
            let h = 0.3 + 0.1 * (5.0 * theta + 3.0 * psi).cos();
            let rho = 0.6 + h * psi.cos();
            out.push([rho * theta.cos(), rho * theta.sin(), h * psi.sin()]);
        }
    }
    out
}

/// Gaussian sources on the cruller surface with staggered centres and widths.
pub fn cruller_sources(n_u: usize, n_v: usize) -> Vec<Source> {
    let pts = cruller_points(n_u, n_v);
    let m = pts.len() as f64;
    pts.into_iter()
        .enumerate()
        .map(|(j, position)| Source {
            position,
            signal: Signal::Gaussian {
                amplitude: 10.0,
                t0: 2.0 + 5.0 * j as f64 / m,
                mu: 30.0 + 20.0 * j as f64 / m,
            },
        })
        .collect()
}

/// Options for [`random_sources`].
#[derive(Clone, Debug)]
pub struct RandomSourceOptions {
    pub omega_max: f64,
    pub slope: f64,
    pub t0_range: (f64, f64),
}

impl Default for RandomSourceOptions {
    fn default() -> Self {
        Self {
            omega_max: 30.0 * PI,
            slope: 5.0,
            t0_range: (1.5, 5.0),
        }
    }
}

/// `m` uniformly random sources in `[-1,1]^3` carrying erf-ramped sines.
///
/// Onset times and frequencies are random permutations of equispaced grids.
/// The same seed always yields the same sources.
pub fn random_sources(m: usize, seed: u64, opts: &RandomSourceOptions) -> Result<Vec<Source>> {
    if m == 0 {
        return Err(invalid("m", "need at least one source"));
    }
    if !(opts.omega_max >= 0.0 && opts.slope > 0.0) {
        return Err(invalid("omega_max", "frequency range and slope must be positive"));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut pts: Vec<[f64; 3]> = Vec::with_capacity(m);
    // cells of side MIN_SEPARATION; a rejected point has a neighbour in the 27 around it
    let cell = |p: &[f64; 3]| p.map(|x| (x / MIN_SEPARATION).floor() as i64);
    let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::with_capacity(m);
    while pts.len() < m {
        let p = [
            rng.gen_range(-1.0..=1.0),
            rng.gen_range(-1.0..=1.0),
            rng.gen_range(-1.0..=1.0),
        ];
        let c = cell(&p);
        let mut close = false;
        'search: for d in 0..27i64 {
            let key = [c[0] + d / 9 - 1, c[1] + (d / 3) % 3 - 1, c[2] + d % 3 - 1];
            for &k in cells.get(&key).map(Vec::as_slice).unwrap_or(&[]) {
                let q = pts[k];
                let d2: f64 = (0..3).map(|i| (p[i] - q[i]).powi(2)).sum();
                if d2 < MIN_SEPARATION * MIN_SEPARATION {
                    close = true;
                    break 'search;
                }
            }
        }
        if !close {
            cells.entry(c).or_default().push(pts.len());
            pts.push(p);
        }
    }
    let grid = |lo: f64, hi: f64| -> Vec<f64> {
        if m == 1 {
            vec![lo]
        } else {
            (0..m).map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64).collect()
        }
    };
    let mut t0s = grid(opts.t0_range.0, opts.t0_range.1);
    let mut omegas = grid(0.0, opts.omega_max);
    t0s.shuffle(&mut rng);
    omegas.shuffle(&mut rng);
    Ok(pts
        .into_iter()
        .zip(t0s.into_iter().zip(omegas))
        .map(|(position, (t0, omega))| Source {
            position,
            signal: Signal::ErfSine {
                amplitude: 1.0,
                slope: opts.slope,
                t0,
                omega,
            },
        })
        .collect())
}

/// A single Gaussian pulse at the origin.
pub fn single_pulse(amplitude: f64, mu: f64, t0: f64) -> Vec<Source> {
    vec![Source {
        position: [0.0, 0.0, 0.0],
        signal: Signal::Gaussian { amplitude, mu, t0 },
    }]
}
