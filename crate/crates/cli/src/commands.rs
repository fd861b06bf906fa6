//! One function per subcommand. Each writes its files under `out` and returns the
//! diagnostics that failed.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde_json::json;
use tkwfp::engine::{assess_convergence, converge, decay_report, simulate, RunPlan, SimulationOutput, SweepSpec};
use tkwfp::oracle::{compare, evaluate_direct};
use tkwfp::scenarios::{
    corner_sources, cruller_sources, random_sources, uniform_targets, RandomSourceOptions, Signal, Source,
};
use tkwfp::spectrum::{estimate_bandlimit, select_params, SchemeInputs, SchemeParams};
use tkwfp::window::BlendWindow;

use crate::config::{Config, Format, ScenarioKind, TargetKind};
use crate::io;

/// What a command produced.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    /// Failed diagnostics, one line each; empty on success.
    pub failures: Vec<String>,
}

pub fn build_sources(cfg: &Config) -> Result<Vec<Source>> {
    Ok(match cfg.scenario {
        ScenarioKind::Corner => corner_sources(),
        ScenarioKind::Cruller => cruller_sources(cfg.cruller_nu, cfg.cruller_nv),
        ScenarioKind::Random => {
            let opts = RandomSourceOptions {
                omega_max: cfg.omega_max,
                slope: cfg.slope,
                t0_range: (cfg.t0_min, cfg.t0_max),
            };
            random_sources(cfg.random_count, cfg.seed, &opts)?
        }
        ScenarioKind::File => {
            let path = cfg.sources_file.as_deref().context("sources_file is not set")?;
            io::read_sources_csv(Path::new(path))?
        }
        ScenarioKind::Pulse => vec![Source {
            position: cfg.pulse_position,
            signal: Signal::Gaussian {
                amplitude: cfg.pulse_amplitude,
                mu: cfg.pulse_mu,
                t0: cfg.pulse_t0,
            },
        }],
    })
}

pub fn build_targets(cfg: &Config, sources: &[Source]) -> Result<Vec<[f64; 3]>> {
    Ok(match cfg.targets {
        TargetKind::Grid => uniform_targets(cfg.target_grid),
        TargetKind::Sources => sources.iter().map(|s| s.position).collect(),
        TargetKind::File => {
            let path = cfg.targets_file.as_deref().context("targets_file is not set")?;
            io::read_points_csv(Path::new(path))?
        }
    })
}

fn scheme_inputs(cfg: &Config, sources: &[Source], dt: f64) -> Result<SchemeInputs> {
    let k0 = match cfg.k0 {
        Some(k) => k,
        None => {
            let mut k = 0.0f64;
            for s in sources {
                k = k.max(estimate_bandlimit(&s.signal, cfg.epsilon)?);
            }
            k
        }
    };
    let mut inputs = SchemeInputs::new(cfg.epsilon, cfg.gamma, dt, k0, cfg.t_final);
    inputs.fixed_delta = cfg.fixed_delta;
    Ok(inputs)
}

fn plan(cfg: &Config, params: SchemeParams, sources: Vec<Source>, targets: Vec<[f64; 3]>) -> Result<RunPlan> {
    let mut plan = RunPlan::new(params, sources, targets);
    plan.set_slice_times(&cfg.slice_times)?;
    plan.transform = cfg.transform;
    plan.forcing = cfg.forcing;
    plan.memory_limit = cfg.memory_limit as usize;
    Ok(plan)
}

fn params_json(p: &SchemeParams) -> serde_json::Value {
    json!({
        "epsilon": p.epsilon, "gamma": p.gamma, "dt": p.dt, "k0": p.k0, "b": p.b, "w": p.w,
        "delta": p.delta, "a": p.a, "dk": p.dk, "k_cut": p.k_cut, "n": p.n,
        "n_steps": p.n_steps, "t_final": p.t_final,
    })
}

fn summary_json(p: &SchemeParams, out: &SimulationOutput) -> serde_json::Value {
    let t = &out.timing;
    json!({
        "params": params_json(p),
        "forcing": out.forcing.to_string(),
        "half_ball_modes": out.grid.half_len(),
        "counters": {
            "steps": out.counters.steps,
            "spectrum_evaluations": out.counters.spectrum_evaluations,
            "reconstruction_evaluations": out.counters.reconstruction_evaluations,
            "target_transforms": out.counters.target_transforms,
        },
        "timing": {
            "precompute": t.precompute.iter().map(|(k, v)| json!({"stage": k, "seconds": v})).collect::<Vec<_>>(),
            "forcing_seconds": t.forcing,
            "update_seconds": t.update,
            "local_seconds": t.local,
            "history_seconds": t.history,
            "total_seconds": t.total,
        },
    })
}

fn write(out: &mut Outcome, path: PathBuf, contents: String) -> Result<()> {
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    out.files.push(path);
    Ok(())
}

/// Simulate and write every slice plus a timing summary.
pub fn run(cfg: &Config, dir: &Path) -> Result<Outcome> {
    let sources = build_sources(cfg)?;
    let targets = build_targets(cfg, &sources)?;
    let params = select_params(&scheme_inputs(cfg, &sources, cfg.dt)?)?;
    let plan = plan(cfg, params.clone(), sources, targets)?;
    let sim = simulate(&plan)?;
    let mut out = Outcome::default();
    for s in &sim.slices {
        let path = match cfg.format {
            Format::Csv => {
                let p = dir.join(format!("field_{:06}.csv", s.step));
                io::write_field_csv(&p, &s.snapshot)?;
                p
            }
            Format::Bin => {
                let p = dir.join(format!("field_{:06}.bin", s.step));
                io::write_field_bin(&p, &s.snapshot)?;
                p
            }
        };
        out.files.push(path);
    }
    write(&mut out, dir.join("timing.txt"), format!("{}\n", sim.timing))?;
    let summary = serde_json::to_string_pretty(&summary_json(&params, &sim))?;
    write(&mut out, dir.join("summary.json"), summary + "\n")?;
    Ok(out)
}

/// One run per `dts` entry with `K = pi / dt`; passes when the error drops at least 10x
/// per halving of `dt` before saturating at a floor of at most `10 epsilon`.
pub fn converge_cmd(cfg: &Config, dir: &Path) -> Result<Outcome> {
    if cfg.dts.is_empty() {
        bail!("dts: converge needs a list of time steps");
    }
    let sources = build_sources(cfg)?;
    let targets = build_targets(cfg, &sources)?;
    let spec = SweepSpec {
        inputs: scheme_inputs(cfg, &sources, cfg.dts[0])?,
        sources,
        targets,
        transform: cfg.transform,
        forcing: cfg.forcing,
        memory_limit: cfg.memory_limit as usize,
    };
    let mut dts = cfg.dts.clone();
    dts.sort_by(|a, b| b.total_cmp(a));
    let rows = converge(&spec, &dts)?;
    let mut out = Outcome::default();
    let path = dir.join("convergence.csv");
    io::write_error_table(&path, &rows)?;
    out.files.push(path);
    let v = assess_convergence(&rows, 10.0, 10.0 * cfg.epsilon);
    if !v.floor_ok {
        out.failures.push(format!("converge: error floor {:.3e} above 10 eps", v.floor));
    }
    if !v.rates_ok {
        out.failures.push(format!("converge: pre-saturation reductions per halving {:?} below 10", v.rates));
    }
    Ok(out)
}

/// Simulate on a subsample of the targets and compare each slice with the direct sum.
pub fn validate(cfg: &Config, dir: &Path) -> Result<Outcome> {
    let sources = build_sources(cfg)?;
    let all = build_targets(cfg, &sources)?;
    let stride = all.len().div_ceil(cfg.validate_sample).max(1);
    let targets: Vec<[f64; 3]> = all.into_iter().step_by(stride).collect();
    let params = select_params(&scheme_inputs(cfg, &sources, cfg.dt)?)?;
    let plan = plan(cfg, params.clone(), sources, targets)?;
    let clock = Instant::now();
    let sim = simulate(&plan)?;
    let wall = clock.elapsed().as_secs_f64();
    let tol = cfg.validate_tolerance.unwrap_or(10.0 * cfg.epsilon);
    let mut out = Outcome::default();
    let mut rows = Vec::new();
    for s in &sim.slices {
        let exact = evaluate_direct(&plan.sources, &plan.targets, s.snapshot.t);
        let m = compare(&s.snapshot.values, &exact.values);
        rows.push(tkwfp::engine::ConvergenceRow {
            dt: params.dt,
            abs_err: m.abs_max,
            rel_err: m.rel_max,
            wall_seconds: wall,
        });
        // An all-zero reference only passes if the approximation is within eps of zero.
        let ok = match m.rel_max {
            Some(r) => r <= tol,
            None => m.abs_max <= cfg.epsilon,
        };
        if !ok {
            out.failures.push(format!(
                "validate: t={} abs={:.3e} rel={:?} exceeds {tol:.1e}",
                s.snapshot.t, m.abs_max, m.rel_max
            ));
        }
    }
    let path = dir.join("validation.csv");
    io::write_error_table(&path, &rows)?;
    out.files.push(path);
    Ok(out)
}

/// Run with modes evolved past `K` and tabulate shell maxima of `|alpha|` at the end.
pub fn decay(cfg: &Config, dir: &Path) -> Result<Outcome> {
    let sources = build_sources(cfg)?;
    let mut inputs = scheme_inputs(cfg, &sources, cfg.dt)?;
    inputs.mode_extension = cfg.decay_extension;
    let params = select_params(&inputs)?;
    let m = sources.len();
    let mut plan = plan(cfg, params.clone(), sources, vec![[0.0; 3]])?;
    plan.slice_steps.clear();
    plan.keep_alpha = true;
    let sim = simulate(&plan)?;
    let alpha = sim.final_alpha.as_ref().context("final alpha missing")?;
    let report = decay_report(alpha, &sim.grid, &params, m);
    let mut out = Outcome::default();
    let path = dir.join("decay.csv");
    io::write_decay_csv(&path, &report)?;
    out.files.push(path);
    if !report.monotone_beyond_cutoff {
        out.failures.push("decay: shell maxima beyond K are not monotone within 5%".into());
    }
    if !report.bound_at_outer {
        out.failures.push("decay: outer shells exceed 100 M eps / kappa^3".into());
    }
    Ok(out)
}

/// Tail-bound sweep epsilons and slack factors.
pub const TAIL_EPSILONS: [f64; 3] = [1e-3, 1e-6, 1e-9];
pub const TAIL_THETAS: [f64; 3] = [1.1, 1.5, 4.0];

/// Samples of the blending window and its transform, plus the tail-bound check table.
pub fn window_dump(cfg: &Config, dir: &Path) -> Result<Outcome> {
    let delta = match cfg.fixed_delta {
        Some(d) => d,
        None => select_params(&SchemeInputs::new(cfg.epsilon, cfg.gamma, cfg.dt, 0.0, cfg.t_final))?.delta,
    };
    let w = BlendWindow::new(cfg.epsilon, delta)?;
    let mut out = Outcome::default();

    let mut s = String::from("t,phi,phi_prime,phi_dprime\n");
    for i in 0..=240 {
        let t = delta * (-0.1 + 1.2 * i as f64 / 240.0);
        s += &format!("{t:.11e},{:.11e},{:.11e},{:.11e}\n", w.phi(t), w.phi_prime(t), w.phi_dprime(t));
    }
    write(&mut out, dir.join("window.csv"), s)?;

    let mut s = String::from("omega,re,im,abs\n");
    let top = 8.0 * w.b() / delta;
    for i in 0..=400 {
        let omega = top * i as f64 / 400.0;
        let v = w.phi_prime_ft(omega);
        s += &format!("{omega:.11e},{:.11e},{:.11e},{:.11e}\n", v.re, v.im, v.norm());
    }
    write(&mut out, dir.join("window_ft.csv"), s)?;

    let mut s = String::from("epsilon,theta,omega_min,samples,violations,max_ratio\n");
    for eps in TAIL_EPSILONS {
        let w = BlendWindow::new(eps, delta)?;
        for theta in TAIL_THETAS {
            let tail = w.tail_bound(theta)?;
            let (violations, ratio) = tail_sweep(&w, theta, 1000)?;
            s += &format!("{eps:e},{theta},{:.11e},1000,{violations},{ratio:.6e}\n", tail.omega_min);
            if violations > 0 {
                out.failures.push(format!("window: {violations} tail-bound violations at eps={eps:e}, theta={theta}"));
            }
        }
    }
    write(&mut out, dir.join("tail_bound.csv"), s)?;
    Ok(out)
}

/// Check `|phi_prime_ft| < bound` at `samples` log-spaced frequencies in
/// `[omega_min, 1000 omega_min]`; returns the violation count and the largest ratio.
pub fn tail_sweep(w: &BlendWindow, theta: f64, samples: usize) -> Result<(usize, f64)> {
    let tail = w.tail_bound(theta)?;
    let mut violations = 0;
    let mut worst = 0.0f64;
    for i in 0..samples {
        let omega = tail.omega_min * 1000f64.powf(i as f64 / (samples - 1).max(1) as f64);
        let ratio = w.phi_prime_ft(omega).norm() / tail.bound(omega);
        worst = worst.max(ratio);
        if !(ratio < 1.0) {
            violations += 1;
        }
    }
    Ok((violations, worst))
}
