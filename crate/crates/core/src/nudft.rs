//! Transforms between nonuniform points in `[-1,1]^3` and the mode ball.
//!
//! `points -> modes`: `F(n) = sum_j c_j exp(+i dk n.y_j)`.
//! `modes -> points`: `u(x_i) = sum_n F(n) exp(-i dk n.x_i)`.
//!
//! The fast path spreads onto a twice-oversampled grid with a Kaiser–Bessel
//! kernel, runs one pruned 1D FFT pass per axis (only the box touched by the
//! points and only the ball chords are kept), then divides by the kernel
//! transform. The direct path sums exponentials and serves as the reference.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Error, Result};
use crate::special::{bessel_i0, sinc_of_sqrt};
use crate::spectrum::{Line, ModeCube, ModeGrid};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransformMode {
    Fast,
    Direct,
}

impl std::str::FromStr for TransformMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fast" => Ok(Self::Fast),
            "direct" => Ok(Self::Direct),
            other => Err(invalid("transform", format!("expected fast|direct, got `{other}`"))),
        }
    }
}

/// Spreading width in fine-grid points for tolerance `eps`.
///
/// One point wider than `ceil(log10(1/eps)) + 1`: that width lands within a
/// factor of two of `eps` in relative l2, too close for a hard guarantee.
pub fn kernel_width(eps: f64) -> usize {
    (1.0 / eps).log10().ceil().max(1.0) as usize + 2
}

/// Kaiser–Bessel shape parameter for width `w` at oversampling 2.
pub fn kernel_beta(w: usize) -> f64 {
    let w = w as f64;
    PI * (0.5625 * w * w - 0.8).max(0.0).sqrt()
}

/// Smallest `2^a 3^b 5^c` not below `n`.
pub fn next_smooth(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

// Fine-grid data shared by both directions of the fast path.
struct Gridding {
    width: usize,
    nf: usize,
    /// First box index; box covers `lmin .. lmin + nbox`.
    lmin: i64,
    nbox: usize,
    /// Per point and axis: first box-relative index and `width` kernel values.
    starts: Vec<[u32; 3]>,
    weights: Vec<f64>,
    /// `1 / kernel transform` at `n = -half..=half`.
    deconv: Vec<f64>,
    fft_fwd: Arc<dyn Fft<f64>>,
    fft_inv: Arc<dyn Fft<f64>>,
}

/// Immutable transform plan for a fixed point set and mode grid.
pub struct TransformPlan {
    points: Vec<[f64; 3]>,
    grid: Arc<ModeGrid>,
    epsilon: f64,
    mode: TransformMode,
    gridding: Option<Gridding>,
    full_lines: Vec<Line>,
}

impl std::fmt::Debug for TransformPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TransformPlan")
            .field("points", &self.points.len())
            .field("n", &self.grid.n())
            .field("epsilon", &self.epsilon)
            .field("mode", &self.mode)
            .finish()
    }
}

impl TransformPlan {
    pub fn new(
        points: &[[f64; 3]],
        grid: Arc<ModeGrid>,
        epsilon: f64,
        mode: TransformMode,
    ) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(invalid("epsilon", format!("must lie in (0,1), got {epsilon}")));
        }
        check_domain(points)?;
        let gridding = match mode {
            TransformMode::Fast => Some(Gridding::new(points, &grid, epsilon)),
            TransformMode::Direct => None,
        };
        let full_lines = full_ball_lines(&grid);
        Ok(Self {
            points: points.to_vec(),
            grid,
            epsilon,
            mode,
            gridding,
            full_lines,
        })
    }

    pub fn grid(&self) -> &Arc<ModeGrid> {
        &self.grid
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn mode(&self) -> TransformMode {
        self.mode
    }

    /// `cube[n] = sum_j strengths[j] exp(+i dk n.y_j)` on the ball, zero elsewhere.
    pub fn points_to_modes(&self, strengths: &[Complex64]) -> Result<ModeCube> {
        self.check_len(strengths.len())?;
        let vals = self.forward(strengths, &self.full_lines);
        let mut cube = ModeCube::zeros(self.grid.n());
        scatter_lines(&self.full_lines, &vals, &mut cube);
        Ok(cube)
    }

    /// `out[i] = sum_{unmasked n} cube[n] exp(-i dk n.x_i)`.
    pub fn modes_to_points(&self, cube: &ModeCube) -> Result<Vec<Complex64>> {
        if cube.n() != self.grid.n() {
            return Err(invalid("cube", format!("size {} does not match grid {}", cube.n(), self.grid.n())));
        }
        let vals = gather_lines(&self.full_lines, cube);
        Ok(self.backward(&vals, &self.full_lines))
    }

    /// Points to modes for real strengths, returned in compact Hermitian-half storage.
    pub fn real_points_to_half(&self, strengths: &[f64]) -> Result<Vec<Complex64>> {
        self.check_len(strengths.len())?;
        let c: Vec<Complex64> = strengths.iter().map(|&s| Complex64::new(s, 0.0)).collect();
        Ok(self.forward(&c, self.grid.lines()))
    }

    /// Modes to points for a Hermitian coefficient set given by its compact half.
    pub fn half_to_real_points(&self, half: &[Complex64]) -> Result<Vec<f64>> {
        if half.len() != self.grid.half_len() {
            return Err(invalid("half", "length does not match grid"));
        }
        // u = Re sum_{half} d_n e^{-i n.x}, d = 2c off the origin
        let mut d: Vec<Complex64> = half.iter().map(|&c| 2.0 * c).collect();
        d[0] = half[0];
        Ok(self
            .backward(&d, self.grid.lines())
            .into_iter()
            .map(|z| z.re)
            .collect())
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.points.len() {
            return Err(invalid(
                "strengths",
                format!("expected {} values, got {n}", self.points.len()),
            ));
        }
        Ok(())
    }

    fn forward(&self, strengths: &[Complex64], lines: &[Line]) -> Vec<Complex64> {
        match &self.gridding {
            Some(g) => g.forward(strengths, lines, self.grid.half_width()),
            None => direct_forward(&self.points, self.grid.dk(), strengths, lines),
        }
    }

    fn backward(&self, coeffs: &[Complex64], lines: &[Line]) -> Vec<Complex64> {
        match &self.gridding {
            Some(g) => g.backward(coeffs, lines, self.grid.half_width()),
            None => direct_backward(&self.points, self.grid.dk(), coeffs, lines),
        }
    }
}

/// Reject points outside the closed cube `[-1,1]^3`.
pub fn check_domain(points: &[[f64; 3]]) -> Result<()> {
    for (index, p) in points.iter().enumerate() {
        if p.iter().any(|c| !c.is_finite() || c.abs() > 1.0) {
            return Err(Error::Domain {
                index,
                x: p[0],
                y: p[1],
                z: p[2],
            });
        }
    }
    Ok(())
}

/// Lines covering the whole ball (both halves), sorted by `(n1, n2)`.
pub fn full_ball_lines(grid: &ModeGrid) -> Vec<Line> {
    let h = grid.half_width();
    let s_max = grid.s_max() as i64;
    let mut out = Vec::new();
    let mut offset = 0;
    for n1 in -h..=h {
        for n2 in -h..=h {
            let r12 = (n1 * n1 + n2 * n2) as i64;
            if r12 > s_max {
                continue;
            }
            let chord = (((s_max - r12) as f64).sqrt().floor() as i32).min(h);
            let line = Line {
                n1,
                n2,
                n3_lo: -chord,
                n3_hi: chord,
                offset,
            };
            offset += line.len();
            out.push(line);
        }
    }
    out
}

fn lines_len(lines: &[Line]) -> usize {
    lines.last().map_or(0, |l| l.offset + l.len())
}

fn scatter_lines(lines: &[Line], vals: &[Complex64], cube: &mut ModeCube) {
    for l in lines {
        for n3 in l.n3_lo..=l.n3_hi {
            cube.set(l.n1, l.n2, n3, vals[l.offset + (n3 - l.n3_lo) as usize]);
        }
    }
}

fn gather_lines(lines: &[Line], cube: &ModeCube) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(lines_len(lines));
    for l in lines {
        for n3 in l.n3_lo..=l.n3_hi {
            out.push(cube.get(l.n1, l.n2, n3));
        }
    }
    out
}

// Split `data` into consecutive mutable pieces, one per line.
fn split_by_lines<'a, T>(lines: &[Line], mut data: &'a mut [T]) -> Vec<&'a mut [T]> {
    let mut out = Vec::with_capacity(lines.len());
    for l in lines {
        let (head, tail) = data.split_at_mut(l.len());
        out.push(head);
        data = tail;
    }
    out
}

// Runs of lines sharing the same n1: (n1, first line, one past last line).
fn n1_groups(lines: &[Line]) -> Vec<(i32, usize, usize)> {
    let mut out: Vec<(i32, usize, usize)> = Vec::new();
    for (i, l) in lines.iter().enumerate() {
        match out.last_mut() {
            Some(g) if g.0 == l.n1 => g.2 = i + 1,
            _ => out.push((l.n1, i, i + 1)),
        }
    }
    out
}

fn direct_forward(
    points: &[[f64; 3]],
    dk: f64,
    strengths: &[Complex64],
    lines: &[Line],
) -> Vec<Complex64> {
    let mut out = vec![ZERO; lines_len(lines)];
    let step3: Vec<Complex64> = points
        .iter()
        .map(|p| Complex64::from_polar(1.0, dk * p[2]))
        .collect();
    split_by_lines(lines, &mut out)
        .into_par_iter()
        .zip(lines.par_iter())
        .for_each(|(dst, l)| {
            for ((p, &s), &st) in points.iter().zip(strengths).zip(&step3) {
                let ph = dk * (l.n1 as f64 * p[0] + l.n2 as f64 * p[1] + l.n3_lo as f64 * p[2]);
                let mut v = s * Complex64::from_polar(1.0, ph);
                for d in dst.iter_mut() {
                    *d += v;
                    v *= st;
                }
            }
        });
    out
}

fn direct_backward(
    points: &[[f64; 3]],
    dk: f64,
    coeffs: &[Complex64],
    lines: &[Line],
) -> Vec<Complex64> {
    points
        .par_iter()
        .map(|p| {
            let st = Complex64::from_polar(1.0, -dk * p[2]);
            let mut acc = ZERO;
            for l in lines {
                let ph = dk * (l.n1 as f64 * p[0] + l.n2 as f64 * p[1] + l.n3_lo as f64 * p[2]);
                let mut e = Complex64::from_polar(1.0, -ph);
                let mut line_acc = ZERO;
                for &c in &coeffs[l.offset..l.offset + l.len()] {
                    line_acc += c * e;
                    e *= st;
                }
                acc += line_acc;
            }
            acc
        })
        .collect()
}

impl Gridding {
    fn new(points: &[[f64; 3]], grid: &ModeGrid, eps: f64) -> Self {
        let width = kernel_width(eps);
        let beta = kernel_beta(width);
        let half = grid.half_width() as i64;
        let nf = next_smooth((2 * grid.n()).max(2 * width + 2));
        let h = 2.0 * PI / nf as f64;
        let reach = grid.dk() / h;
        let lmin = (-reach - 0.5 * width as f64).floor() as i64 - 1;
        let lmax = (reach + 0.5 * width as f64).ceil() as i64 + 1;
        let nbox = (lmax - lmin + 1) as usize;

        let kernel = |t: f64| {
            let r = 2.0 * t / width as f64;
            bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt())
        };
        let mut starts = Vec::with_capacity(points.len());
        let mut weights = Vec::with_capacity(points.len() * 3 * width);
        for p in points {
            let mut s = [0u32; 3];
            for d in 0..3 {
                let c = grid.dk() * p[d] / h;
                let first = (c - 0.5 * width as f64).ceil() as i64;
                s[d] = (first - lmin) as u32;
                for k in 0..width as i64 {
                    weights.push(kernel(c - (first + k) as f64));
                }
            }
            starts.push(s);
        }

        let deconv = (-half..=half)
            .map(|n| {
                let a = 0.5 * width as f64 * n as f64 * h;
                1.0 / (width as f64 * sinc_of_sqrt(a * a - beta * beta))
            })
            .collect();

        let mut planner = FftPlanner::new();
        Self {
            width,
            nf,
            lmin,
            nbox,
            starts,
            weights,
            deconv,
            fft_fwd: planner.plan_fft_forward(nf),
            fft_inv: planner.plan_fft_inverse(nf),
        }
    }

    #[inline]
    fn fine(&self, l: usize) -> usize {
        (l as i64 + self.lmin).rem_euclid(self.nf as i64) as usize
    }

    #[inline]
    fn mode_slot(&self, n: i32) -> usize {
        (n as i64).rem_euclid(self.nf as i64) as usize
    }

    fn kernel_weights(&self, j: usize) -> [&[f64]; 3] {
        let w = self.width;
        let base = 3 * w * j;
        [
            &self.weights[base..base + w],
            &self.weights[base + w..base + 2 * w],
            &self.weights[base + 2 * w..base + 3 * w],
        ]
    }

    fn scratch(&self) -> (Vec<Complex64>, Vec<Complex64>) {
        let len = self
            .fft_fwd
            .get_inplace_scratch_len()
            .max(self.fft_inv.get_inplace_scratch_len());
        (vec![ZERO; self.nf], vec![ZERO; len])
    }

    fn forward(&self, strengths: &[Complex64], lines: &[Line], half: i32) -> Vec<Complex64> {
        let b = self.nbox;
        let w = self.width;
        // box layout [l2][l3][l1]
        let mut boxed = vec![ZERO; b * b * b];
        for (j, &s) in strengths.iter().enumerate() {
            if s == ZERO {
                continue;
            }
            let st = self.starts[j];
            let [w1, w2, w3] = self.kernel_weights(j);
            for a2 in 0..w {
                let v2 = s * w2[a2];
                for a3 in 0..w {
                    let v23 = v2 * w3[a3];
                    let row = ((st[1] as usize + a2) * b + st[2] as usize + a3) * b + st[0] as usize;
                    for (a1, &k1) in w1.iter().enumerate() {
                        boxed[row + a1] += v23 * k1;
                    }
                }
            }
        }

        let groups = n1_groups(lines);
        let ng = groups.len();

        // x pass: layout [l2][group][l3]
        let mut x1 = vec![ZERO; b * ng * b];
        x1.par_chunks_mut(ng * b)
            .enumerate()
            .for_each_init(
                || self.scratch(),
                |(buf, scratch), (l2, slab)| {
                    for l3 in 0..b {
                        let src = &boxed[(l2 * b + l3) * b..(l2 * b + l3 + 1) * b];
                        if src.iter().all(|z| *z == ZERO) {
                            continue;
                        }
                        buf.fill(ZERO);
                        for (l1, &v) in src.iter().enumerate() {
                            buf[self.fine(l1)] += v;
                        }
                        self.fft_inv.process_with_scratch(buf, scratch);
                        for (g, &(n1, _, _)) in groups.iter().enumerate() {
                            slab[g * b + l3] = buf[self.mode_slot(n1)];
                        }
                    }
                },
            );
        drop(boxed);

        // y pass: rows are lines, layout [line][l3]
        let mut x2 = vec![ZERO; lines.len() * b];
        let mut pieces = Vec::with_capacity(ng);
        let mut rest: &mut [Complex64] = &mut x2;
        for &(_, lo, hi) in &groups {
            let (head, tail) = rest.split_at_mut((hi - lo) * b);
            pieces.push(head);
            rest = tail;
        }
        pieces
            .into_par_iter()
            .enumerate()
            .for_each_init(
                || self.scratch(),
                |(buf, scratch), (g, dst)| {
                    let (_, lo, hi) = groups[g];
                    for l3 in 0..b {
                        buf.fill(ZERO);
                        for l2 in 0..b {
                            buf[self.fine(l2)] += x1[(l2 * ng + g) * b + l3];
                        }
                        self.fft_inv.process_with_scratch(buf, scratch);
                        for (r, line) in lines[lo..hi].iter().enumerate() {
                            dst[r * b + l3] = buf[self.mode_slot(line.n2)];
                        }
                    }
                },
            );
        drop(x1);

        // z pass and deconvolution
        let mut out = vec![ZERO; lines_len(lines)];
        split_by_lines(lines, &mut out)
            .into_par_iter()
            .zip(lines.par_iter().enumerate())
            .for_each_init(
                || self.scratch(),
                |(buf, scratch), (dst, (r, line))| {
                    buf.fill(ZERO);
                    for l3 in 0..b {
                        buf[self.fine(l3)] += x2[r * b + l3];
                    }
                    self.fft_inv.process_with_scratch(buf, scratch);
                    let c12 = self.deconv[(line.n1 + half) as usize]
                        * self.deconv[(line.n2 + half) as usize];
                    for (i, n3) in (line.n3_lo..=line.n3_hi).enumerate() {
                        dst[i] = buf[self.mode_slot(n3)] * (c12 * self.deconv[(n3 + half) as usize]);
                    }
                },
            );
        out
    }

    fn backward(&self, coeffs: &[Complex64], lines: &[Line], half: i32) -> Vec<Complex64> {
        let b = self.nbox;
        let w = self.width;
        let groups = n1_groups(lines);
        let ng = groups.len();

        // z pass: layout [line][l3]
        let mut x2 = vec![ZERO; lines.len() * b];
        x2.par_chunks_mut(b)
            .zip(lines.par_iter())
            .for_each_init(
                || self.scratch(),
                |(buf, scratch), (dst, line)| {
                    buf.fill(ZERO);
                    let c12 = self.deconv[(line.n1 + half) as usize]
                        * self.deconv[(line.n2 + half) as usize];
                    let src = &coeffs[line.offset..line.offset + line.len()];
                    for (i, n3) in (line.n3_lo..=line.n3_hi).enumerate() {
                        buf[self.mode_slot(n3)] = src[i] * (c12 * self.deconv[(n3 + half) as usize]);
                    }
                    self.fft_fwd.process_with_scratch(buf, scratch);
                    for (l3, d) in dst.iter_mut().enumerate() {
                        *d = buf[self.fine(l3)];
                    }
                },
            );

        // y pass: layout [group][l2][l3]
        let mut x1 = vec![ZERO; ng * b * b];
        x1.par_chunks_mut(b * b)
            .enumerate()
            .for_each_init(
                || self.scratch(),
                |(buf, scratch), (g, slab)| {
                    let (_, lo, hi) = groups[g];
                    for l3 in 0..b {
                        buf.fill(ZERO);
                        for (r, line) in lines[lo..hi].iter().enumerate() {
                            buf[self.mode_slot(line.n2)] = x2[(lo + r) * b + l3];
                        }
                        self.fft_fwd.process_with_scratch(buf, scratch);
                        for l2 in 0..b {
                            slab[l2 * b + l3] = buf[self.fine(l2)];
                        }
                    }
                },
            );
        drop(x2);

        // x pass: box layout [l2][l3][l1]
        let mut boxed = vec![ZERO; b * b * b];
        boxed
            .par_chunks_mut(b * b)
            .enumerate()
            .for_each_init(
                || self.scratch(),
                |(buf, scratch), (l2, slab)| {
                    for l3 in 0..b {
                        buf.fill(ZERO);
                        for (g, &(n1, _, _)) in groups.iter().enumerate() {
                            buf[self.mode_slot(n1)] = x1[(g * b + l2) * b + l3];
                        }
                        self.fft_fwd.process_with_scratch(buf, scratch);
                        for l1 in 0..b {
                            slab[l3 * b + l1] = buf[self.fine(l1)];
                        }
                    }
                },
            );
        drop(x1);

        (0..self.starts.len())
            .into_par_iter()
            .map(|j| {
                let st = self.starts[j];
                let [w1, w2, w3] = self.kernel_weights(j);
                let mut acc = ZERO;
                for a2 in 0..w {
                    let mut acc3 = ZERO;
                    for a3 in 0..w {
                        let row = ((st[1] as usize + a2) * b + st[2] as usize + a3) * b + st[0] as usize;
                        let mut acc1 = ZERO;
                        for (a1, &k1) in w1.iter().enumerate() {
                            acc1 += boxed[row + a1] * k1;
                        }
                        acc3 += acc1 * w3[a3];
                    }
                    acc += acc3 * w2[a2];
                }
                acc
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize) -> Arc<ModeGrid> {
        let dk = 1.1;
        Arc::new(ModeGrid::new(dk, n, dk * ((n - 1) / 2) as f64).unwrap())
    }

    fn random_points(rng: &mut ChaCha8Rng, m: usize) -> Vec<[f64; 3]> {
        (0..m)
            .map(|_| {
                [
                    rng.gen_range(-1.0..=1.0),
                    rng.gen_range(-1.0..=1.0),
                    rng.gen_range(-1.0..=1.0),
                ]
            })
            .collect()
    }

    fn rel_l2(a: &[Complex64], b: &[Complex64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
        let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
        (num / den).sqrt()
    }

    // e^{+i dk n.y} summed by brute force over the cube, masked by the grid
    fn oracle_forward(g: &ModeGrid, pts: &[[f64; 3]], s: &[Complex64]) -> ModeCube {
        let mut cube = ModeCube::zeros(g.n());
        let h = g.half_width();
        for n1 in -h..=h {
            for n2 in -h..=h {
                for n3 in -h..=h {
                    if !g.is_unmasked(n1, n2, n3) {
                        continue;
                    }
                    let mut acc = ZERO;
                    for (p, &sj) in pts.iter().zip(s) {
                        let ph = g.dk() * (n1 as f64 * p[0] + n2 as f64 * p[1] + n3 as f64 * p[2]);
                        acc += sj * Complex64::new(ph.cos(), ph.sin());
                    }
                    cube.set(n1, n2, n3, acc);
                }
            }
        }
        cube
    }

    #[test]
    fn smooth_numbers() {
        assert_eq!(next_smooth(626), 640);
        assert_eq!(next_smooth(1030), 1080);
        assert_eq!(next_smooth(1), 1);
        assert_eq!(kernel_width(1e-6), 8);
    }

    #[test]
    fn origin_point_fills_ball() {
        let g = grid(9);
        for mode in [TransformMode::Fast, TransformMode::Direct] {
            let plan = TransformPlan::new(&[[0.0; 3]], g.clone(), 1e-6, mode).unwrap();
            let s = Complex64::new(2.0, -1.0);
            let cube = plan.points_to_modes(&[s]).unwrap();
            let h = g.half_width();
            for n1 in -h..=h {
                for n2 in -h..=h {
                    for n3 in -h..=h {
                        let v = cube.get(n1, n2, n3);
                        if g.is_unmasked(n1, n2, n3) {
                            assert!((v - s).norm() < 1e-6 * s.norm(), "{mode:?} {v} {n1} {n2} {n3}");
                        } else {
                            assert_eq!(v, ZERO);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn both_paths_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = grid(25);
        let pts = random_points(&mut rng, 100);
        let s: Vec<Complex64> = (0..100)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let want = oracle_forward(&g, &pts, &s);
        for mode in [TransformMode::Fast, TransformMode::Direct] {
            let plan = TransformPlan::new(&pts, g.clone(), 1e-6, mode).unwrap();
            let got = plan.points_to_modes(&s).unwrap();
            let err = rel_l2(got.as_slice(), want.as_slice());
            assert!(err < 1e-6, "{mode:?}: {err}");
        }
    }

    #[test]
    fn zero_mode_is_total_strength() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts = random_points(&mut rng, 30);
        let s: Vec<f64> = (0..30).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let plan = TransformPlan::new(&pts, grid(9), 1e-9, TransformMode::Fast).unwrap();
        let half = plan.real_points_to_half(&s).unwrap();
        let total: f64 = s.iter().sum();
        assert!((half[0].re - total).abs() < 1e-8);
    }

    #[test]
    fn backward_matches_direct_and_real_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = grid(25);
        let pts = random_points(&mut rng, 60);
        let half: Vec<Complex64> = (0..g.half_len())
            .map(|i| {
                let im = if i == 0 { 0.0 } else { rng.gen_range(-1.0..1.0) };
                Complex64::new(rng.gen_range(-1.0..1.0), im)
            })
            .collect();
        let cube = g.expand(&half);
        let direct = TransformPlan::new(&pts, g.clone(), 1e-6, TransformMode::Direct).unwrap();
        let fast = TransformPlan::new(&pts, g.clone(), 1e-6, TransformMode::Fast).unwrap();
        let want = direct.modes_to_points(&cube).unwrap();
        let got = fast.modes_to_points(&cube).unwrap();
        assert!(rel_l2(&got, &want) < 1e-6);
        for z in &want {
            assert!(z.im.abs() < 1e-9 * z.norm().max(1.0));
        }
        for plan in [&direct, &fast] {
            let re = plan.half_to_real_points(&half).unwrap();
            let re: Vec<Complex64> = re.into_iter().map(|x| Complex64::new(x, 0.0)).collect();
            assert!(rel_l2(&re, &want) < 1e-6);
        }
    }

    #[test]
    fn constant_mode_reaches_every_point() {
        let g = grid(9);
        let mut cube = ModeCube::zeros(9);
        cube.set(0, 0, 0, Complex64::new(3.0, 0.5));
        let pts = [[0.3, -0.9, 1.0], [-1.0, -1.0, -1.0]];
        let plan = TransformPlan::new(&pts, g, 1e-6, TransformMode::Fast).unwrap();
        for v in plan.modes_to_points(&cube).unwrap() {
            assert!((v - Complex64::new(3.0, 0.5)).norm() < 1e-6, "{v}");
        }
    }

    #[test]
    fn rejects_points_outside_domain() {
        let err = TransformPlan::new(&[[0.0, 1.5, 0.0]], grid(9), 1e-6, TransformMode::Fast);
        assert!(matches!(err, Err(Error::Domain { index: 0, .. })));
        let plan = TransformPlan::new(&[[0.0; 3]], grid(9), 1e-6, TransformMode::Fast).unwrap();
        assert!(plan.points_to_modes(&[]).is_err());
        assert!(plan.modes_to_points(&ModeCube::zeros(3)).is_err());
    }
}
