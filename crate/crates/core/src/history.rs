//! History part: per-mode oscillator recursion for `alpha(k, t)`.
//!
//! Each mode obeys `alpha'' + kappa^2 alpha = F` with `F` built from the
//! creation and annihilation kernels. One step is an exact rotation plus the
//! forcing pair `(h, g)`, assembled from gridded samples of the source
//! spectrum and weights that depend on `kappa` only. Weights are stored per
//! shell `s = |n|^2`, so every mode with the same `|k|` shares one row.

use std::collections::VecDeque;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::nudft::TransformPlan;
use crate::scenarios::Source;
use crate::special::{gauss_legendre, gauss_legendre_on, sin_over};
use crate::spectrum::{ModeGrid, SchemeParams};
use crate::window::BlendWindow;

/// Gauss–Legendre nodes per step for the weight integrals.
pub const WEIGHT_NODES: usize = 24;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// `Psi(kappa, u) = 2 cos(kappa u) phi'(u) + sin(kappa u)/kappa phi''(u)`, zero off `[0, delta]`.
pub fn creation_kernel(kappa: f64, u: f64, w: &BlendWindow) -> f64 {
    shifted_kernel(kappa, u, 0.0, w)
}

/// Creation kernel with its phase advanced by `A - delta`.
pub fn annihilation_kernel(kappa: f64, u: f64, w: &BlendWindow, a: f64) -> f64 {
    shifted_kernel(kappa, u, a - w.delta(), w)
}

fn shifted_kernel(kappa: f64, u: f64, shift: f64, w: &BlendWindow) -> f64 {
    if u < 0.0 || u > w.delta() {
        return 0.0;
    }
    let v = u + shift;
    2.0 * (kappa * v).cos() * w.phi_prime(u) + sin_over(kappa, v) * w.phi_dprime(u)
}

/// Per-shell forcing weights and rotation entries.
#[derive(Clone, Debug)]
pub struct UpdateWeights {
    w: usize,
    dt: f64,
    dk: f64,
    /// `[shell][m]`
    p: Vec<f64>,
    q: Vec<f64>,
    pa: Vec<f64>,
    qa: Vec<f64>,
    cos: Vec<f64>,
    /// `sin(kappa dt) / kappa`
    sin_over: Vec<f64>,
    /// `kappa sin(kappa dt)`
    ksin: Vec<f64>,
}

/// Weights for every shell of `grid`.
pub fn build_update_weights(grid: &ModeGrid, p: &SchemeParams, w: &BlendWindow) -> UpdateWeights {
    weights_for_shells(grid.dk(), grid.s_max(), p, w)
}

fn weights_for_shells(dk: f64, s_max: u32, p: &SchemeParams, win: &BlendWindow) -> UpdateWeights {
    let nw = p.w;
    let dt = p.dt;
    let lag = p.annihilation_lag();
    let (x, wq) = gauss_legendre(WEIGHT_NODES);
    let x: Vec<f64> = x.iter().map(|&xi| 0.5 * (xi + 1.0)).collect();
    let wq: Vec<f64> = wq.iter().map(|&wi| 0.5 * wi).collect();
    // phi', phi'' at u = dt (x_q + m) do not depend on kappa
    let mut d1 = vec![0.0; nw * WEIGHT_NODES];
    let mut d2 = vec![0.0; nw * WEIGHT_NODES];
    for m in 0..nw {
        for qi in 0..WEIGHT_NODES {
            let u = dt * (x[qi] + m as f64);
            d1[m * WEIGHT_NODES + qi] = win.phi_prime(u);
            d2[m * WEIGHT_NODES + qi] = win.phi_dprime(u);
        }
    }
    let shells = s_max as usize + 1;
    let rows: Vec<[Vec<f64>; 4]> = (0..shells)
        .into_par_iter()
        .map(|s| {
            let kappa = dk * (s as f64).sqrt();
            let mut out = [vec![0.0; nw], vec![0.0; nw], vec![0.0; nw], vec![0.0; nw]];
            for m in 0..nw {
                let (mut pm, mut qm, mut pam, mut qam) = (0.0, 0.0, 0.0, 0.0);
                for qi in 0..WEIGHT_NODES {
                    let rem = dt * (1.0 - x[qi]);
                    let wt = dt * wq[qi];
                    let sv = wt * sin_over(kappa, rem);
                    let cv = wt * (kappa * rem).cos();
                    let u = dt * (x[qi] + m as f64);
                    let f1 = d1[m * WEIGHT_NODES + qi];
                    let f2 = d2[m * WEIGHT_NODES + qi];
                    let psi = 2.0 * (kappa * u).cos() * f1 + sin_over(kappa, u) * f2;
                    let va = u + lag;
                    let psi_a = 2.0 * (kappa * va).cos() * f1 + sin_over(kappa, va) * f2;
                    pm += sv * psi;
                    qm += cv * psi;
                    pam += sv * psi_a;
                    qam += cv * psi_a;
                }
                out[0][m] = pm;
                out[1][m] = qm;
                out[2][m] = pam;
                out[3][m] = qam;
            }
            out
        })
        .collect();
    let mut uw = UpdateWeights {
        w: nw,
        dt,
        dk,
        p: Vec::with_capacity(shells * nw),
        q: Vec::with_capacity(shells * nw),
        pa: Vec::with_capacity(shells * nw),
        qa: Vec::with_capacity(shells * nw),
        cos: Vec::with_capacity(shells),
        sin_over: Vec::with_capacity(shells),
        ksin: Vec::with_capacity(shells),
    };
    for (s, r) in rows.into_iter().enumerate() {
        uw.p.extend_from_slice(&r[0]);
        uw.q.extend_from_slice(&r[1]);
        uw.pa.extend_from_slice(&r[2]);
        uw.qa.extend_from_slice(&r[3]);
        let kappa = dk * (s as f64).sqrt();
        uw.cos.push((kappa * dt).cos());
        uw.sin_over.push(sin_over(kappa, dt));
        uw.ksin.push(kappa * (kappa * dt).sin());
    }
    uw
}

/// Forcing weights of one shell, `(p, q, pA, qA)`, each of length `W`.
pub struct ShellWeights<'a> {
    pub p: &'a [f64],
    pub q: &'a [f64],
    pub pa: &'a [f64],
    pub qa: &'a [f64],
}

impl UpdateWeights {
    pub fn blend_steps(&self) -> usize {
        self.w
    }

    pub fn shells(&self) -> usize {
        self.cos.len()
    }

    pub fn kappa(&self, s: u32) -> f64 {
        self.dk * (s as f64).sqrt()
    }

    pub fn shell(&self, s: u32) -> ShellWeights<'_> {
        let r = s as usize * self.w..(s as usize + 1) * self.w;
        ShellWeights {
            p: &self.p[r.clone()],
            q: &self.q[r.clone()],
            pa: &self.pa[r.clone()],
            qa: &self.qa[r],
        }
    }

    /// `(cos(kappa dt), sin(kappa dt)/kappa, kappa sin(kappa dt))`
    pub fn rotation(&self, s: u32) -> (f64, f64, f64) {
        let s = s as usize;
        (self.cos[s], self.sin_over[s], self.ksin[s])
    }

    #[inline]
    fn rotate(&self, s: usize, a: &mut Complex64, ad: &mut Complex64, h: Complex64, g: Complex64) {
        let a0 = *a;
        *a = a0 * self.cos[s] + *ad * self.sin_over[s] + h;
        *ad = *ad * self.cos[s] - a0 * self.ksin[s] + g;
    }
}

/// Source amplitudes `sigma_j(t)`; zero for every `t <= 0`.
pub fn source_strengths(sources: &[Source], t: f64) -> Vec<f64> {
    sources.iter().map(|s| s.signal.eval(t)).collect()
}

/// Source spectrum `sum_j sigma_j(t) exp(+i k.y_j)` in compact half storage.
pub fn compute_shat(sources: &[Source], t: f64, plan: &TransformPlan) -> Result<Vec<Complex64>> {
    let sigma = source_strengths(sources, t);
    if sigma.iter().all(|&s| s == 0.0) {
        return Ok(vec![ZERO; plan.grid().half_len()]);
    }
    plan.real_points_to_half(&sigma)
}

/// Mode coefficients and the spectrum rings at step `n` (time `n dt`).
#[derive(Clone, Debug)]
pub struct HistoryState {
    alpha: Vec<Complex64>,
    alpha_dot: Vec<Complex64>,
    /// `S(t - m dt)`, newest first.
    creation: VecDeque<Vec<Complex64>>,
    /// `S(t - A + delta - m dt)`, newest first.
    annihilation: VecDeque<Vec<Complex64>>,
    shells: Vec<u32>,
    step: usize,
}

impl HistoryState {
    pub fn new(grid: &ModeGrid) -> Self {
        let n = grid.half_len();
        Self {
            alpha: vec![ZERO; n],
            alpha_dot: vec![ZERO; n],
            creation: VecDeque::new(),
            annihilation: VecDeque::new(),
            shells: grid.shells(),
            step: 0,
        }
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn alpha(&self) -> &[Complex64] {
        &self.alpha
    }

    pub fn alpha_dot(&self) -> &[Complex64] {
        &self.alpha_dot
    }

    pub fn alpha_mut(&mut self) -> &mut [Complex64] {
        &mut self.alpha
    }

    pub fn alpha_dot_mut(&mut self) -> &mut [Complex64] {
        &mut self.alpha_dot
    }

    /// Shell index of every stored mode.
    pub fn shells(&self) -> &[u32] {
        &self.shells
    }

    /// Cubes currently held in the two rings.
    pub fn buffered(&self) -> usize {
        self.creation.len() + self.annihilation.len()
    }

    /// Advance one step, pushing `S(t)` and `S(t - A + delta)` for the current `t`.
    ///
    /// Returns the evicted cubes (if any) so their storage can be reused.
    pub fn step(
        &mut self,
        weights: &UpdateWeights,
        creation: Vec<Complex64>,
        annihilation: Vec<Complex64>,
    ) -> Result<Vec<Vec<Complex64>>> {
        let n = self.alpha.len();
        if creation.len() != n || annihilation.len() != n {
            return Err(Error::State(format!(
                "spectrum cube holds {}/{} modes, state holds {n}",
                creation.len(),
                annihilation.len()
            )));
        }
        if weights.shells() <= self.shells.iter().copied().max().unwrap_or(0) as usize {
            return Err(Error::State("weights do not cover every shell".into()));
        }
        let w = weights.w;
        self.creation.push_front(creation);
        self.annihilation.push_front(annihilation);
        let mut evicted = Vec::new();
        while self.creation.len() > w {
            evicted.push(self.creation.pop_back().expect("non-empty"));
        }
        while self.annihilation.len() > w {
            evicted.push(self.annihilation.pop_back().expect("non-empty"));
        }
        let cre: Vec<&[Complex64]> = self.creation.iter().map(|v| v.as_slice()).collect();
        let ann: Vec<&[Complex64]> = self.annihilation.iter().map(|v| v.as_slice()).collect();
        let dt = weights.dt;
        const CHUNK: usize = 4096;
        self.alpha
            .par_chunks_mut(CHUNK)
            .zip(self.alpha_dot.par_chunks_mut(CHUNK))
            .zip(self.shells.par_chunks(CHUNK))
            .enumerate()
            .for_each(|(c, ((al, ad), sh))| {
                let base = c * CHUNK;
                for i in 0..al.len() {
                    let s = sh[i] as usize;
                    let row = s * w;
                    let mut h = ZERO;
                    let mut g = ZERO;
                    for (m, cube) in cre.iter().enumerate() {
                        let v = cube[base + i];
                        h += v * weights.p[row + m];
                        g += v * weights.q[row + m];
                    }
                    for (m, cube) in ann.iter().enumerate() {
                        let v = cube[base + i];
                        h -= v * weights.pa[row + m];
                        g -= v * weights.qa[row + m];
                    }
                    weights.rotate(s, &mut al[i], &mut ad[i], h * dt, g * dt);
                }
            });
        self.step += 1;
        Ok(evicted)
    }

    /// Advance one step with forcing summed source by source (no spectrum cubes).
    pub fn step_sources(&mut self, weights: &UpdateWeights, forcing: &SourceForcing) -> Result<()> {
        if forcing.step != self.step {
            return Err(Error::State(format!(
                "forcing built for step {}, state at step {}",
                forcing.step, self.step
            )));
        }
        let grid = &forcing.grid;
        if grid.half_len() != self.alpha.len() {
            return Err(Error::State("forcing grid does not match state".into()));
        }
        let m = forcing.lanes;
        let lines = grid.lines();
        let mut al_rest: &mut [Complex64] = &mut self.alpha;
        let mut ad_rest: &mut [Complex64] = &mut self.alpha_dot;
        let mut jobs = Vec::with_capacity(lines.len());
        for l in lines {
            let (a, ar) = al_rest.split_at_mut(l.len());
            let (d, dr) = ad_rest.split_at_mut(l.len());
            jobs.push((l, a, d));
            al_rest = ar;
            ad_rest = dr;
        }
        let dk = grid.dk();
        jobs.into_par_iter().for_each_init(
            || vec![0.0; 2 * m],
            |buf, (l, al, ad)| {
                let (pr, pi) = buf.split_at_mut(m);
                for j in 0..m {
                    let e = match forcing.positions.get(j) {
                        Some(p) => dk * (l.n1 as f64 * p[0] + l.n2 as f64 * p[1] + l.n3_lo as f64 * p[2]),
                        None => 0.0,
                    };
                    (pi[j], pr[j]) = e.sin_cos();
                }
                let r12 = l.radial2();
                for (i, n3) in (l.n3_lo..=l.n3_hi).enumerate() {
                    let s = (r12 + (n3 * n3) as u32) as usize;
                    let (h, g) = forcing.accumulate(s, pr, pi);
                    weights.rotate(s, &mut al[i], &mut ad[i], h, g);
                }
            },
        );
        self.step += 1;
        Ok(())
    }
}

/// Per-source, per-shell forcing coefficients for one step.
///
/// `h(k) = sum_j exp(+i k.y_j) ch[s][j]`, and likewise `g` with `cg`.
pub struct SourceForcing {
    grid: std::sync::Arc<ModeGrid>,
    positions: Vec<[f64; 3]>,
    /// Source count padded to a multiple of [`LANES`]; padding carries zero coefficients.
    lanes: usize,
    /// `exp(+i dk y_j3)`, split into real and imaginary parts
    step_re: Vec<f64>,
    step_im: Vec<f64>,
    /// per shell: `lanes` values of `ch`, then `lanes` of `cg`
    coef: Vec<f64>,
    step: usize,
}

const LANES: usize = 4;

impl SourceForcing {
    pub fn new(grid: std::sync::Arc<ModeGrid>, sources: &[Source]) -> Self {
        let positions: Vec<[f64; 3]> = sources.iter().map(|s| s.position).collect();
        let lanes = positions.len().div_ceil(LANES) * LANES;
        let mut step_re = vec![1.0; lanes];
        let mut step_im = vec![0.0; lanes];
        for (j, p) in positions.iter().enumerate() {
            (step_im[j], step_re[j]) = (grid.dk() * p[2]).sin_cos();
        }
        let shells = grid.s_max() as usize + 1;
        Self {
            grid,
            positions,
            lanes,
            step_re,
            step_im,
            coef: vec![0.0; shells * 2 * lanes],
            step: 0,
        }
    }

    /// `(h, g)` on shell `s` for the phases `pr + i pi`, then advance the phases one step in `n3`.
    #[inline]
    fn accumulate(&self, s: usize, pr: &mut [f64], pi: &mut [f64]) -> (Complex64, Complex64) {
        let m = self.lanes;
        let (ch, cg) = self.coef[2 * s * m..2 * (s + 1) * m].split_at(m);
        let mut acc = [[0.0f64; LANES]; 4];
        let chunks = pr
            .chunks_exact_mut(LANES)
            .zip(pi.chunks_exact_mut(LANES))
            .zip(ch.chunks_exact(LANES).zip(cg.chunks_exact(LANES)))
            .zip(self.step_re.chunks_exact(LANES).zip(self.step_im.chunks_exact(LANES)));
        for (((xr, xi), (a, b)), (sr, si)) in chunks {
            for l in 0..LANES {
                acc[0][l] += xr[l] * a[l];
                acc[1][l] += xi[l] * a[l];
                acc[2][l] += xr[l] * b[l];
                acc[3][l] += xi[l] * b[l];
                let r = xr[l] * sr[l] - xi[l] * si[l];
                xi[l] = xr[l] * si[l] + xi[l] * sr[l];
                xr[l] = r;
            }
        }
        let sum = |v: [f64; LANES]| v.iter().sum::<f64>();
        (
            Complex64::new(sum(acc[0]), sum(acc[1])),
            Complex64::new(sum(acc[2]), sum(acc[3])),
        )
    }

    /// Fill the coefficients for step `n` from the source signals.
    pub fn prepare(
        &mut self,
        n: usize,
        sources: &[Source],
        weights: &UpdateWeights,
        p: &SchemeParams,
    ) {
        let w = weights.w;
        let lag = lag_steps(p);
        let m = sources.len();
        // samples sigma_j(t - m dt) and sigma_j(t - A + delta - m dt)
        let mut cre = vec![0.0; w * m];
        let mut ann = vec![0.0; w * m];
        for k in 0..w {
            let tc = (n as f64 - k as f64) * p.dt;
            let ta = (n as f64 - (lag + k) as f64) * p.dt;
            for (j, src) in sources.iter().enumerate() {
                cre[k * m + j] = src.signal.eval(tc);
                ann[k * m + j] = src.signal.eval(ta);
            }
        }
        let dt = p.dt;
        let lanes = self.lanes;
        self.coef.par_chunks_mut(2 * lanes).enumerate().for_each(|(s, c)| {
            let sw = weights.shell(s as u32);
            c.fill(0.0);
            let (ch, cg) = c.split_at_mut(lanes);
            for k in 0..w {
                for j in 0..m {
                    let c = cre[k * m + j];
                    let a = ann[k * m + j];
                    ch[j] += sw.p[k] * c - sw.pa[k] * a;
                    cg[j] += sw.q[k] * c - sw.qa[k] * a;
                }
            }
            for j in 0..m {
                ch[j] *= dt;
                cg[j] *= dt;
            }
        });
        self.step = n;
    }

    pub fn is_finite(&self) -> bool {
        self.coef.iter().all(|v| v.is_finite())
    }
}

/// `(A - delta) / dt` as an integer.
pub fn lag_steps(p: &SchemeParams) -> usize {
    (p.annihilation_lag() / p.dt).round() as usize
}

/// `u_h` at the plan's points: `(dk/2pi)^3 sum_n alpha(n) exp(-i dk n.x)`.
pub fn eval_history(state: &HistoryState, plan: &TransformPlan) -> Result<Vec<f64>> {
    eval_alpha(&state.alpha, plan)
}

/// [`eval_history`] for a bare half-storage coefficient vector.
pub fn eval_alpha(alpha: &[Complex64], plan: &TransformPlan) -> Result<Vec<f64>> {
    if alpha.len() != plan.grid().half_len() {
        return Err(invalid("plan", "grid does not match state"));
    }
    let pref = (plan.grid().dk() / (2.0 * PI)).powi(3);
    let mut u = plan.half_to_real_points(alpha)?;
    for v in &mut u {
        *v *= pref;
    }
    Ok(u)
}

/// Weights for the folded recursion, which needs no spectrum rings.
///
/// Writing the forcing as `sum_m P_m S(n - m)` and pulling every `P_m` back
/// to the step at which its sample is produced gives `Y(n+1) = R Y(n) +
/// Q S(n) - QA S(n - L)` with `Q = sum_m R^-m P_m`. The true state is then
/// `X(n) = Y(n) - sum_{d=1}^{W-1} (T_d S(n-d) - TA_d S(n-L-d))`, so the
/// rings are only needed at slice times, where they are recomputed.
#[derive(Clone, Debug)]
pub struct FoldedWeights {
    base: UpdateWeights,
    /// `[shell] -> (Q_alpha, Q_alpha_dot)`
    q: Vec<[f64; 2]>,
    qa: Vec<[f64; 2]>,
    /// `[shell][d - 1]`, `d = 1..W`
    t: Vec<[f64; 2]>,
    ta: Vec<[f64; 2]>,
}

impl FoldedWeights {
    pub fn new(base: UpdateWeights) -> Self {
        let w = base.w;
        let shells = base.shells();
        let mut q = Vec::with_capacity(shells);
        let mut qa = Vec::with_capacity(shells);
        let mut t = Vec::with_capacity(shells * w.saturating_sub(1));
        let mut ta = Vec::with_capacity(shells * w.saturating_sub(1));
        for s in 0..shells as u32 {
            let kappa = base.kappa(s);
            let sw = base.shell(s);
            // R^-j applied to dt (p, q)
            let pull = |j: usize, p: f64, qv: f64| -> [f64; 2] {
                let a = j as f64 * base.dt;
                let (c, so) = ((kappa * a).cos(), sin_over(kappa, a));
                let ks = kappa * kappa * so;
                [base.dt * (c * p - so * qv), base.dt * (ks * p + c * qv)]
            };
            let mut full = [0.0; 2];
            let mut full_a = [0.0; 2];
            for m in 0..w {
                let v = pull(m, sw.p[m], sw.q[m]);
                let va = pull(m, sw.pa[m], sw.qa[m]);
                full[0] += v[0];
                full[1] += v[1];
                full_a[0] += va[0];
                full_a[1] += va[1];
            }
            q.push(full);
            qa.push(full_a);
            for d in 1..w {
                let mut acc = [0.0; 2];
                let mut acc_a = [0.0; 2];
                for m in d..w {
                    let v = pull(m + 1 - d, sw.p[m], sw.q[m]);
                    let va = pull(m + 1 - d, sw.pa[m], sw.qa[m]);
                    acc[0] += v[0];
                    acc[1] += v[1];
                    acc_a[0] += va[0];
                    acc_a[1] += va[1];
                }
                t.push(acc);
                ta.push(acc_a);
            }
        }
        Self { base, q, qa, t, ta }
    }

    pub fn base(&self) -> &UpdateWeights {
        &self.base
    }
}

/// Folded state `Y` (see [`FoldedWeights`]); `alpha` is recovered on demand.
#[derive(Clone, Debug)]
pub struct FoldedState {
    y: Vec<Complex64>,
    y_dot: Vec<Complex64>,
    shells: Vec<u32>,
    step: usize,
}

impl FoldedState {
    pub fn new(grid: &ModeGrid) -> Self {
        let n = grid.half_len();
        Self {
            y: vec![ZERO; n],
            y_dot: vec![ZERO; n],
            shells: grid.shells(),
            step: 0,
        }
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn shells(&self) -> &[u32] {
        &self.shells
    }

    /// Advance one step given `S(t)` and `S(t - A + delta)`.
    pub fn step(&mut self, fw: &FoldedWeights, creation: &[Complex64], annihilation: &[Complex64]) -> Result<()> {
        let n = self.y.len();
        if creation.len() != n || annihilation.len() != n {
            return Err(Error::State(format!(
                "spectrum cube holds {}/{} modes, state holds {n}",
                creation.len(),
                annihilation.len()
            )));
        }
        const CHUNK: usize = 4096;
        self.y
            .par_chunks_mut(CHUNK)
            .zip(self.y_dot.par_chunks_mut(CHUNK))
            .zip(self.shells.par_chunks(CHUNK))
            .enumerate()
            .for_each(|(c, ((y, yd), sh))| {
                let base = c * CHUNK;
                for i in 0..y.len() {
                    let s = sh[i] as usize;
                    let (q, qa) = (fw.q[s], fw.qa[s]);
                    let (cv, av) = (creation[base + i], annihilation[base + i]);
                    let h = cv * q[0] - av * qa[0];
                    let g = cv * q[1] - av * qa[1];
                    fw.base.rotate(s, &mut y[i], &mut yd[i], h, g);
                }
            });
        self.step += 1;
        Ok(())
    }

    /// `alpha` at the current step; `recent[d-1] = S(t - d dt)` and
    /// `recent_a[d-1] = S(t - A + delta - d dt)` for `d = 1..W`.
    pub fn alpha(
        &self,
        fw: &FoldedWeights,
        recent: &[Vec<Complex64>],
        recent_a: &[Vec<Complex64>],
    ) -> Result<Vec<Complex64>> {
        let w1 = fw.base.w - 1;
        if recent.len() != w1 || recent_a.len() != w1 {
            return Err(Error::State(format!("need {w1} recent spectra in each window")));
        }
        let mut out = self.y.clone();
        out.par_iter_mut().enumerate().for_each(|(i, a)| {
            let s = self.shells[i] as usize;
            let row = s * w1;
            for d in 0..w1 {
                *a -= recent[d][i] * fw.t[row + d][0] - recent_a[d][i] * fw.ta[row + d][0];
            }
        });
        Ok(out)
    }
}

/// `alpha(k, t)` by adaptive quadrature of its defining integral.
///
/// Only meant for tests and diagnostics; cost grows with the source count.
pub fn alpha_oracle(k: [f64; 3], t: f64, sources: &[Source], w: &BlendWindow, a: f64) -> Complex64 {
    if t <= 0.0 {
        return ZERO;
    }
    let kappa = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt();
    let phases: Vec<Complex64> = sources
        .iter()
        .map(|s| {
            let p = s.position;
            Complex64::from_polar(1.0, k[0] * p[0] + k[1] * p[1] + k[2] * p[2])
        })
        .collect();
    let integrand = |tau: f64| -> Complex64 {
        let v = t - tau;
        let kern = sin_over(kappa, v) * w.phi(v) * w.phi(a - v);
        if kern == 0.0 {
            return ZERO;
        }
        let mut s = ZERO;
        for (src, ph) in sources.iter().zip(&phases) {
            s += ph * src.signal.eval(tau);
        }
        s * kern
    };
    let lo = (t - a).max(0.0);
    let mut breaks = vec![lo, t];
    for b in [t - w.delta(), t - a + w.delta()] {
        if b > lo && b < t {
            breaks.push(b);
        }
    }
    breaks.sort_by(|x, y| x.partial_cmp(y).expect("finite"));
    let mut panels = 1usize;
    let mut prev = composite(&integrand, &breaks, 0.02, panels);
    loop {
        panels *= 2;
        let next = composite(&integrand, &breaks, 0.02, panels);
        if (next - prev).norm() < (1e-12 * next.norm()).clamp(1e-18, 1e-10) || panels >= 64 {
            return next;
        }
        prev = next;
    }
}

// Composite 20-point Gauss–Legendre over each break interval with panels of
// width about `h / refine`.
fn composite(f: &impl Fn(f64) -> Complex64, breaks: &[f64], h: f64, refine: usize) -> Complex64 {
    let mut total = ZERO;
    for win in breaks.windows(2) {
        let (a, b) = (win[0], win[1]);
        if b <= a {
            continue;
        }
        let n = (((b - a) / h).ceil() as usize).max(1) * refine;
        let step = (b - a) / n as f64;
        for i in 0..n {
            let (x, wt) = gauss_legendre_on(20, a + i as f64 * step, a + (i + 1) as f64 * step);
            for (xi, wi) in x.iter().zip(&wt) {
                total += f(*xi) * *wi;
            }
        }
    }
    total
}
