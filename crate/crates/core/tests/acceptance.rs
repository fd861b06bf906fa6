//! Acceptance checks, one PASS/FAIL line each.
//!
//! Set `TKWFP_ACCEPT=1,4,8` to run a subset. The full set takes about an hour on one core.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tkwfp::engine::{
    assess_convergence, converge, decay_report, simulate, ForcingMode, RunPlan, SweepSpec, DEFAULT_MEMORY_LIMIT,
};
use tkwfp::history::{alpha_oracle, build_update_weights, HistoryState, SourceForcing};
use tkwfp::nudft::{TransformMode, TransformPlan};
use tkwfp::oracle::{compare, evaluate_direct};
use tkwfp::scenarios::{
    corner_sources, cruller_sources, random_sources, uniform_targets, RandomSourceOptions, Signal, Source,
};
use tkwfp::spectrum::{build_grid, estimate_bandlimit, select_params, ModeGrid, SchemeInputs, DOMAIN_DIAMETER};
use tkwfp::window::BlendWindow;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn bandlimit(sources: &[Source], eps: f64) -> f64 {
    sources
        .iter()
        .map(|s| estimate_bandlimit(&s.signal, eps).unwrap())
        .fold(0.0, f64::max)
}

fn corner_inputs(dt: f64) -> SchemeInputs {
    let src = corner_sources();
    SchemeInputs::new(1e-6, 0.5, dt, bandlimit(&src, 1e-6), 6.0)
}

fn c1_corners() -> Outcome {
    let p = select_params(&corner_inputs(6.0 / 588.0)).unwrap();
    let plan = RunPlan::new(p.clone(), corner_sources(), uniform_targets(10));
    let out = simulate(&plan).unwrap();
    let slice = out.slices.last().unwrap();
    let exact = evaluate_direct(&plan.sources, &plan.targets, slice.snapshot.t);
    let m = compare(&slice.snapshot.values, &exact.values);
    outcome(
        m.abs_max <= 5e-6,
        format!(
            "max abs error {:.3e} (limit 5e-6) at t={}, N={}, {} steps, {:.0} s",
            m.abs_max, slice.snapshot.t, p.n, p.n_steps, out.timing.total
        ),
    )
}

fn c2_convergence() -> Outcome {
    let src = corner_sources();
    let spec = SweepSpec {
        inputs: corner_inputs(0.02),
        sources: src,
        targets: uniform_targets(10),
        transform: TransformMode::Fast,
        forcing: ForcingMode::Auto,
        memory_limit: DEFAULT_MEMORY_LIMIT,
    };
    let rows = converge(&spec, &[0.032, 0.024, 0.02, 0.016, 0.013]).unwrap();
    let v = assess_convergence(&rows, 10.0, 1e-5);
    let table: Vec<String> = rows.iter().map(|r| format!("{:.4}:{:.2e}", r.dt, r.abs_err)).collect();
    let rates: Vec<String> = v.rates.iter().map(|r| format!("{:.1e}", r.2)).collect();
    outcome(
        v.floor_ok && v.rates_ok,
        format!(
            "errors [{}], reduction per halving [{}] (>= 10), floor {:.2e} (<= 1e-5)",
            table.join(" "),
            rates.join(" "),
            v.floor
        ),
    )
}

fn c3_parameters() -> Outcome {
    let p1 = select_params(&SchemeInputs::new(1e-6, 0.5, 0.0102, 131.0, 6.0)).unwrap();
    let p2 = select_params(&SchemeInputs::new(1e-6, 2.0 / 3.0, 0.0184, 57.0, 6.0)).unwrap();
    let p3 = select_params(&SchemeInputs::new(1e-6, 0.5, 0.012, 131.0, 6.0)).unwrap();
    let within = |p: &tkwfp::SchemeParams, k: f64, n: usize, dk: f64| {
        (p.k_cut - k).abs() <= 1.0 && (p.n as i64 - n as i64).abs() <= 2 && (p.dk / dk - 1.0).abs() <= 0.01
    };
    let pass = p1.w == 18 && p2.w == 14 && within(&p2, 171.0, 313, 1.0962) && within(&p3, 263.0, 477, 1.105);
    outcome(
        pass,
        format!(
            "W={} and {}; (K,N,dk)=({},{},{:.4}) and ({},{},{:.4})",
            p1.w, p2.w, p2.k_cut, p2.n, p2.dk, p3.k_cut, p3.n, p3.dk
        ),
    )
}

fn c4_alpha_oracle() -> Outcome {
    // eps = 1e-10 keeps the scheme's own O(eps) quadrature error well below the 1e-6 bar
    let eps = 1e-10;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let position = [0.0; 3].map(|_: f64| rng.gen_range(-0.9..0.9));
    let sources = vec![Source {
        position,
        signal: Signal::Gaussian {
            amplitude: 1.0,
            mu: 50.0,
            t0: 0.8,
        },
    }];
    let steps = 50;
    let dt = 0.02;
    let p = select_params(&SchemeInputs::new(eps, 0.5, dt, bandlimit(&sources, eps), steps as f64 * dt)).unwrap();
    let grid = Arc::new(build_grid(&p).unwrap());
    let window = BlendWindow::new(eps, p.delta).unwrap();
    let weights = build_update_weights(&grid, &p, &window);
    let mut state = HistoryState::new(&grid);
    let mut forcing = SourceForcing::new(grid.clone(), &sources);
    let h = grid.half_width();
    let mut modes = Vec::new();
    while modes.len() < 20 {
        let n = [0; 3].map(|_: i32| rng.gen_range(-h..=h));
        if let Some((idx, flip)) = grid.half_index(n[0], n[1], n[2]) {
            if !modes.iter().any(|m: &([i32; 3], usize, bool)| m.0 == n) {
                modes.push((n, idx, flip));
            }
        }
    }
    let (mut err2, mut ref2) = (0.0, 0.0);
    for step in 0..steps {
        forcing.prepare(step, &sources, &weights, &p);
        state.step_sources(&weights, &forcing).unwrap();
        let t = (step + 1) as f64 * dt;
        for (n, idx, flip) in &modes {
            let a = state.alpha()[*idx];
            let a = if *flip { a.conj() } else { a };
            let k = n.map(|v| v as f64 * grid.dk());
            let exact = alpha_oracle(k, t, &sources, &window, p.a);
            err2 += (a - exact).norm_sqr();
            ref2 += exact.norm_sqr();
        }
    }
    let rel = (err2 / ref2).sqrt();
    outcome(
        rel <= 1e-6,
        format!("relative l2 error {rel:.3e} over 20 modes x {steps} steps at eps={eps:e} (limit 1e-6)"),
    )
}

fn c5_poisson() -> Outcome {
    let eps = 1e-6;
    let sources = vec![Source {
        position: [0.1, -0.2, 0.15],
        signal: Signal::Gaussian {
            amplitude: 1.0,
            mu: 20.0,
            t0: 1.0,
        },
    }];
    let p = select_params(&SchemeInputs::new(eps, 0.5, 0.04, bandlimit(&sources, eps), 2.4)).unwrap();
    let mut fine = p.clone();
    fine.dk = p.dk / 2.0;
    fine.n = (2.0 * p.mode_cutoff / fine.dk).ceil() as usize | 1;
    let run = |q: &tkwfp::SchemeParams| {
        let mut plan = RunPlan::new(q.clone(), sources.clone(), uniform_targets(4));
        plan.transform = TransformMode::Direct;
        plan.forcing = ForcingMode::Sources;
        plan.slice_steps = vec![40, 60];
        simulate(&plan).unwrap()
    };
    let (a, b) = (run(&p), run(&fine));
    let mut worst = 0.0f64;
    for (sa, sb) in a.slices.iter().zip(&b.slices) {
        let d: Vec<f64> = sa.history.iter().zip(&sb.history).map(|(x, y)| x - y).collect();
        worst = worst.max(max_abs(&d) / max_abs(&sa.history));
    }
    outcome(
        worst <= 10.0 * eps,
        format!(
            "u_h with dk={:.4} vs dk/2 (N={} vs {}): relative difference {worst:.2e} (limit 1e-5)",
            p.dk, p.n, fine.n
        ),
    )
}

fn c6_tail_bound() -> Outcome {
    let mut violations = 0;
    let mut worst = 0.0f64;
    for eps in [1e-3, 1e-6, 1e-9] {
        let w = BlendWindow::new(eps, 0.2).unwrap();
        for theta in [1.1, 1.5, 4.0] {
            let tail = w.tail_bound(theta).unwrap();
            for i in 0..1000 {
                let omega = tail.omega_min * 1000f64.powf(i as f64 / 999.0);
                let ratio = w.phi_prime_ft(omega).norm() / tail.bound(omega);
                worst = worst.max(ratio);
                if !(ratio < 1.0) {
                    violations += 1;
                }
            }
        }
    }
    outcome(
        violations == 0,
        format!("{violations} violations in 9 x 1000 samples, largest |phi'^|/bound {worst:.3}"),
    )
}

fn c7_decay() -> Outcome {
    let m = 100;
    let opts = RandomSourceOptions {
        omega_max: 5.0 * PI,
        slope: 3.0,
        // slope * t0 >= 4.5 keeps the jump at the t = 0 causality floor below 1e-10
        t0_range: (1.5, 2.5),
    };
    let sources = random_sources(m, 7, &opts).unwrap();
    // the extended shells stay time-resolved only while 1.5 K + K0 is well below 2 pi / dt
    let mut inputs = SchemeInputs::new(1e-6, 0.5, 0.03, bandlimit(&sources, 1e-6), 3.0);
    inputs.mode_extension = 1.5;
    let p = select_params(&inputs).unwrap();
    let mut plan = RunPlan::new(p.clone(), sources, vec![[0.0; 3]]);
    plan.slice_steps.clear();
    plan.keep_alpha = true;
    plan.forcing = ForcingMode::Sources;
    let out = simulate(&plan).unwrap();
    let r = decay_report(out.final_alpha.as_ref().unwrap(), &out.grid, &p, m);
    let outer: Vec<String> = r
        .rows
        .iter()
        .rev()
        .take(3)
        .map(|row| format!("{:.1}:{:.1e}/{:.1e}", row.kappa, row.max_abs, row.bound))
        .collect();
    let at_k = r
        .rows
        .iter()
        .min_by(|a, b| (a.kappa - r.k_cut).abs().total_cmp(&(b.kappa - r.k_cut).abs()))
        .unwrap();
    outcome(
        r.monotone_beyond_cutoff && r.bound_at_outer,
        format!(
            "K={}, monotone beyond K: {}; |alpha| at K {:.1e}; outer shells kappa:max/bound [{}]",
            r.k_cut,
            r.monotone_beyond_cutoff,
            at_k.max_abs,
            outer.join(" ")
        ),
    )
}

fn rel_l2(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}

fn c8_transforms() -> Outcome {
    let eps = 1e-6;
    let dk = 2.0 * PI / (DOMAIN_DIAMETER + 2.2);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for n in [9usize, 25, 49] {
        let grid = Arc::new(ModeGrid::new(dk, n, dk * (n / 2) as f64).unwrap());
        for m in [1usize, 10, 1000] {
            for seed in 0..20u64 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed * 1000 + (n * 10 + m) as u64);
                let pts: Vec<[f64; 3]> = (0..m).map(|_| [0.0; 3].map(|_: f64| rng.gen_range(-1.0..=1.0))).collect();
                let mut c = || Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                let s: Vec<Complex64> = (0..m).map(|_| c()).collect();
                let mut cube = tkwfp::spectrum::ModeCube::zeros(n);
                for z in cube.as_mut_slice() {
                    *z = c();
                }
                grid.apply_mask(&mut cube);
                let fast = TransformPlan::new(&pts, grid.clone(), eps, TransformMode::Fast).unwrap();
                let direct = TransformPlan::new(&pts, grid.clone(), eps, TransformMode::Direct).unwrap();
                let f = fast.points_to_modes(&s).unwrap();
                let d = direct.points_to_modes(&s).unwrap();
                worst = worst.max(rel_l2(f.as_slice(), d.as_slice()));
                let f = fast.modes_to_points(&cube).unwrap();
                let d = direct.modes_to_points(&cube).unwrap();
                worst = worst.max(rel_l2(&f, &d));
                cases += 2;
            }
        }
    }
    outcome(worst <= eps, format!("worst relative l2 {worst:.2e} over {cases} transforms (limit 1e-6)"))
}

fn fit_exponent(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn cruller_inputs(sources: &[Source], t_final: f64) -> SchemeInputs {
    SchemeInputs::new(1e-6, 2.0 / 3.0, 6.0 / 326.0, bandlimit(sources, 1e-6), t_final)
}

fn c9_cruller() -> Outcome {
    let sources = cruller_sources(40, 40);
    let targets: Vec<[f64; 3]> = sources.iter().map(|s| s.position).collect();
    let p = select_params(&cruller_inputs(&sources, 6.0)).unwrap();
    let plan = RunPlan::new(p.clone(), sources, targets);
    let out = simulate(&plan).unwrap();
    let slice = out.slices.last().unwrap();
    let exact = evaluate_direct(&plan.sources, &plan.targets, slice.snapshot.t);
    let rel = compare(&slice.snapshot.values, &exact.values).rel_max.unwrap();

    let mut tk = Vec::new();
    let mut direct = Vec::new();
    let ms = [20usize, 40, 80];
    for &n in &ms {
        let src = cruller_sources(n, n);
        let tg: Vec<[f64; 3]> = src.iter().map(|s| s.position).collect();
        let q = select_params(&cruller_inputs(&src, 5.0 * 6.0 / 326.0)).unwrap();
        let mut plan = RunPlan::new(q, src, tg);
        plan.slice_steps.clear();
        let o = simulate(&plan).unwrap();
        tk.push(o.timing.per_step());
        let clock = Instant::now();
        for t in [3.0, 4.0] {
            std::hint::black_box(evaluate_direct(&plan.sources, &plan.targets, t));
        }
        direct.push(clock.elapsed().as_secs_f64() / 2.0);
    }
    let m: Vec<f64> = ms.iter().map(|n| (n * n) as f64).collect();
    let (e_tk, e_direct) = (fit_exponent(&m, &tk), fit_exponent(&m, &direct));
    outcome(
        rel <= 1e-4 && e_tk < 1.3 && e_direct > 1.8,
        format!(
            "M=1600 rel max error {rel:.2e} (limit 1e-4, {} forcing, {:.0} s); per-step cost exponent {e_tk:.2} (< 1.3) vs direct {e_direct:.2} (> 1.8)",
            out.forcing, out.timing.total
        ),
    )
}

fn c10_free_space() -> Outcome {
    let eps = 1e-6;
    let (mu, t0) = (20.0, 1.0);
    let sources = vec![Source {
        position: [0.0; 3],
        signal: Signal::Gaussian { amplitude: 1.0, mu, t0 },
    }];
    let p = select_params(&SchemeInputs::new(eps, 0.5, 0.04, bandlimit(&sources, eps), 14.0)).unwrap();
    let mut plan = RunPlan::new(p.clone(), sources, uniform_targets(6));
    plan.slice_steps = (1..=p.n_steps).collect();
    let out = simulate(&plan).unwrap();
    // the pulse is below eps outside t0 +- sqrt(ln(1/eps)/mu); the far corner is sqrt(3) away
    let exit = t0 + ((1.0 / eps).ln() / mu).sqrt() + 3f64.sqrt();
    let peak = out.slices.iter().map(|s| max_abs(&s.snapshot.values)).fold(0.0, f64::max);
    let after = out
        .slices
        .iter()
        .filter(|s| s.snapshot.t > exit)
        .map(|s| max_abs(&s.snapshot.values))
        .fold(0.0, f64::max);
    outcome(
        after <= 10.0 * eps * peak,
        format!(
            "peak {peak:.3e}; max |u| for {exit:.2} < t <= {} is {after:.2e} = {:.2} eps x peak (limit 10)",
            p.t_final,
            after / (eps * peak)
        ),
    )
}

fn main() {
    let criteria: [(usize, &str, fn() -> Outcome); 10] = [
        (1, "eight-corner reproduction", c1_corners),
        (2, "spectral convergence", c2_convergence),
        (3, "parameter reproduction", c3_parameters),
        (4, "alpha recursion vs oracle", c4_alpha_oracle),
        (5, "Poisson exactness", c5_poisson),
        (6, "window tail bound sweep", c6_tail_bound),
        (7, "mode decay", c7_decay),
        (8, "transform accuracy", c8_transforms),
        (9, "cruller run and crossover", c9_cruller),
        (10, "free-space pulse", c10_free_space),
    ];
    let only: Option<Vec<usize>> = std::env::var("TKWFP_ACCEPT")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let mut failed = 0;
    for (id, name, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let clock = Instant::now();
        let r = check();
        let status = if r.pass { "PASS" } else { "FAIL" };
        println!(
            "{status} criterion {id:>2} {name}: {} [{:.1} s]",
            r.detail,
            clock.elapsed().as_secs_f64()
        );
        if !r.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
