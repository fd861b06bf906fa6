//! Local part: direct retarded sum over sources closer than `delta`.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::scenarios::Source;
use crate::window::BlendWindow;

/// Most boxes per axis; tiny `delta` gets larger boxes (the 27-box search stays exhaustive).
const MAX_BOXES: usize = 200;

/// Compressed neighbour lists: for target `i`, pairs `offsets[i]..offsets[i+1]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LocalTable {
    offsets: Vec<usize>,
    source: Vec<u32>,
    r: Vec<f64>,
    q: Vec<f64>,
}

impl LocalTable {
    pub fn targets(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn pair_count(&self) -> usize {
        self.source.len()
    }

    /// `(source index, r, Q)` for every stored pair of target `i`.
    pub fn pairs(&self, i: usize) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        let range = self.offsets[i]..self.offsets[i + 1];
        range.map(move |k| (self.source[k] as usize, self.r[k], self.q[k]))
    }
}

// Uniform boxes over [-1 - delta, 1 + delta]^3.
struct Boxes {
    side: f64,
    n: usize,
    /// sources sorted by box; `start[b]..start[b+1]`
    start: Vec<usize>,
    order: Vec<u32>,
}

impl Boxes {
    fn new(points: &[[f64; 3]], delta: f64) -> Self {
        let span = 2.0 + 2.0 * delta;
        let side = delta.max(span / MAX_BOXES as f64);
        let n = (span / side).ceil() as usize;
        let mut count = vec![0usize; n * n * n + 1];
        let ids: Vec<Option<usize>> = points.iter().map(|p| Self::cell(p, side, delta, n)).collect();
        for id in ids.iter().flatten() {
            count[*id + 1] += 1;
        }
        for b in 0..n * n * n {
            count[b + 1] += count[b];
        }
        let mut fill = count.clone();
        let mut order = vec![0u32; count[n * n * n]];
        for (j, id) in ids.iter().enumerate() {
            if let Some(b) = id {
                order[fill[*b]] = j as u32;
                fill[*b] += 1;
            }
        }
        Self {
            side,
            n,
            start: count,
            order,
        }
    }

    fn coords(p: &[f64; 3], side: f64, delta: f64, n: usize) -> Option<[usize; 3]> {
        let mut c = [0usize; 3];
        for d in 0..3 {
            let x = ((p[d] + 1.0 + delta) / side).floor();
            if !(x >= 0.0 && (x as usize) < n) {
                return None;
            }
            c[d] = x as usize;
        }
        Some(c)
    }

    fn cell(p: &[f64; 3], side: f64, delta: f64, n: usize) -> Option<usize> {
        Self::coords(p, side, delta, n).map(|c| (c[0] * n + c[1]) * n + c[2])
    }
}

/// `(1 - phi(r)) / (4 pi r)` for `r > 0`.
///
/// A target sitting on a source (`r = 0`) excludes that source, as the direct sum does;
/// its weight `-phi'(0) / (4 pi)` cancels the source's smooth self-term in the history part.
pub fn local_weight(w: &BlendWindow, r: f64) -> f64 {
    if r > 0.0 {
        (1.0 - w.phi(r)) / (4.0 * PI * r)
    } else {
        -w.phi_prime(0.0) / (4.0 * PI)
    }
}

/// Pairs `(target, source)` with `r < delta` and their weights [`local_weight`].
pub fn build_local_table(
    targets: &[[f64; 3]],
    sources: &[Source],
    w: &BlendWindow,
) -> Result<LocalTable> {
    let delta = w.delta();
    if !(delta > 0.0) {
        return Err(invalid("delta", "must be positive"));
    }
    let pos: Vec<[f64; 3]> = sources.iter().map(|s| s.position).collect();
    let boxes = Boxes::new(&pos, delta);
    let n = boxes.n as i64;
    let lists: Vec<Vec<(u32, f64)>> = targets
        .par_iter()
        .map(|x| {
            let mut out = Vec::new();
            let Some(c) = Boxes::coords(x, boxes.side, delta, boxes.n) else {
                return out;
            };
            for d0 in -1..=1i64 {
                for d1 in -1..=1i64 {
                    for d2 in -1..=1i64 {
                        let b = [c[0] as i64 + d0, c[1] as i64 + d1, c[2] as i64 + d2];
                        if b.iter().any(|&v| v < 0 || v >= n) {
                            continue;
                        }
                        let id = ((b[0] * n + b[1]) * n + b[2]) as usize;
                        for &j in &boxes.order[boxes.start[id]..boxes.start[id + 1]] {
                            let y = pos[j as usize];
                            let r = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (x[2] - y[2]).powi(2))
                                .sqrt();
                            if r < delta {
                                out.push((j, r));
                            }
                        }
                    }
                }
            }
            out.sort_unstable_by_key(|e| e.0);
            out
        })
        .collect();
    let mut table = LocalTable {
        offsets: Vec::with_capacity(targets.len() + 1),
        ..Default::default()
    };
    table.offsets.push(0);
    for list in lists {
        for (j, r) in list {
            table.source.push(j);
            table.r.push(r);
            table.q.push(local_weight(w, r));
        }
        table.offsets.push(table.source.len());
    }
    Ok(table)
}

/// `u_l(x_i, t) = sum_j sigma_j(t - r_ij) Q_ij` over the stored pairs.
pub fn eval_local(table: &LocalTable, sources: &[Source], t: f64) -> Vec<f64> {
    (0..table.targets())
        .into_par_iter()
        .map(|i| {
            table
                .pairs(i)
                .map(|(j, r, q)| sources[j].signal.eval(t - r) * q)
                .sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::Signal;
    use rand::{Rng, SeedableRng};

    fn ramp(p: [f64; 3]) -> Source {
        Source {
            position: p,
            signal: Signal::custom(|t| t, None),
        }
    }

    #[test]
    fn examples() {
        let src = vec![ramp([0.0; 3]), ramp([0.5, 0.0, 0.0])];
        let w = BlendWindow::new(1e-6, 0.2).unwrap();
        let t = build_local_table(&[[0.0; 3]], &src, &w).unwrap();
        // only the coincident source
        assert_eq!(t.pairs(0).map(|p| (p.0, p.1)).collect::<Vec<_>>(), vec![(0, 0.0)]);
        let w = BlendWindow::new(1e-6, 0.6).unwrap();
        let t = build_local_table(&[[0.0; 3]], &src, &w).unwrap();
        let pairs: Vec<_> = t.pairs(0).collect();
        assert_eq!(pairs.len(), 2);
        let (j, r, q) = pairs[1];
        assert_eq!((j, r), (1, 0.5));
        assert!((q - (1.0 - w.phi(0.5)) / (2.0 * PI)).abs() < 1e-18);
        // 1 - phi(0.5) by quadrature of phi' over [0.5, 0.6]
        let (x, wt) = crate::special::gauss_legendre_on(80, 0.5, 0.6);
        let tail: f64 = x.iter().zip(&wt).map(|(&s, &ws)| ws * w.phi_prime(s)).sum();
        assert!((q - tail / (2.0 * PI)).abs() < 1e-12);
        assert!((q - 5.79e-4).abs() < 1e-6, "{q}");
    }

    #[test]
    fn self_pair_cancels_smooth_self_term() {
        let w = BlendWindow::new(1e-6, 0.2).unwrap();
        // phi(r) / (4 pi r) -> phi'(0) / (4 pi) as r -> 0; phi(r) by quadrature of phi'
        let r = 1e-6;
        let (x, wt) = crate::special::gauss_legendre_on(20, 0.0, r);
        let phi_r: f64 = x.iter().zip(&wt).map(|(&s, &ws)| ws * w.phi_prime(s)).sum();
        let limit = phi_r / (4.0 * PI * r);
        assert!((local_weight(&w, 0.0) + limit).abs() < 1e-3 * limit);
        let src = vec![ramp([0.1, 0.2, 0.3])];
        let t = build_local_table(&[[0.1, 0.2, 0.3]], &src, &w).unwrap();
        assert_eq!(t.pairs(0).collect::<Vec<_>>(), vec![(0, 0.0, local_weight(&w, 0.0))]);
    }

    #[test]
    fn single_pair_value() {
        let src = vec![ramp([0.1, 0.0, 0.0])];
        let w = BlendWindow::new(1e-6, 0.6).unwrap();
        let t = build_local_table(&[[0.0; 3]], &src, &w).unwrap();
        let u = eval_local(&t, &src, 1.0);
        let want = 0.9 * (1.0 - w.phi(0.1)) / (0.4 * PI);
        assert!((u[0] - want).abs() < 1e-15);
        assert_eq!(eval_local(&t, &src, 0.05), vec![0.0]);
    }

    #[test]
    fn matches_brute_force_pairs() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let m = rng.gen_range(1..400);
            let nt = rng.gen_range(1..300);
            let mut pt = || [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)];
            let src: Vec<Source> = (0..m).map(|_| ramp(pt())).collect();
            let mut tg: Vec<[f64; 3]> = (0..nt).map(|_| pt()).collect();
            tg.push(src[0].position);
            let w = BlendWindow::new(1e-6, 0.3).unwrap();
            let t = build_local_table(&tg, &src, &w).unwrap();
            for (i, x) in tg.iter().enumerate() {
                let mut want = Vec::new();
                for (j, s) in src.iter().enumerate() {
                    let y = s.position;
                    let r = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (x[2] - y[2]).powi(2)).sqrt();
                    if r < 0.3 {
                        want.push(j);
                    }
                }
                let got: Vec<usize> = t.pairs(i).map(|p| p.0).collect();
                assert_eq!(got, want);
            }
        }
    }

    #[test]
    fn weights_positive_and_shrinking_window_empties_table() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let src: Vec<Source> = (0..200)
            .map(|_| ramp([rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]))
            .collect();
        let tg: Vec<[f64; 3]> = src.iter().map(|s| s.position).collect();
        let w = BlendWindow::new(1e-6, 0.4).unwrap();
        let t = build_local_table(&tg, &src, &w).unwrap();
        assert!(t.pair_count() > 0);
        assert!(t.q.iter().zip(&t.r).all(|(&q, &r)| (r > 0.0) == (q > 0.0)));
        let w = BlendWindow::new(1e-6, 1e-4).unwrap();
        // only the 200 self pairs remain
        let t = build_local_table(&tg, &src, &w).unwrap();
        assert_eq!(t.pair_count(), 200);
        assert!(t.r.iter().all(|&r| r == 0.0));
    }
}
