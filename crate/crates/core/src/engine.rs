//! Full runs: precomputation, the time loop, slices, sweeps and diagnostics.

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use log::{debug, info};
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::history::{
    build_update_weights, compute_shat, eval_alpha, lag_steps, FoldedState, FoldedWeights,
    HistoryState, SourceForcing, UpdateWeights,
};
use crate::local::{build_local_table, eval_local, LocalTable};
use crate::nudft::{check_domain, TransformMode, TransformPlan};
use crate::oracle::{compare, evaluate_direct, FieldSnapshot};
use crate::scenarios::Source;
use crate::spectrum::{build_grid, select_params, ModeGrid, SchemeInputs, SchemeParams};
use crate::window::BlendWindow;

/// Sources at or below this count are forced directly by [`ForcingMode::Auto`].
pub const SOURCE_SUM_MAX: usize = 64;

/// Default memory budget for the two spectrum rings.
pub const DEFAULT_MEMORY_LIMIT: usize = 2 << 30;

/// How the per-step forcing `(h, g)` is assembled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForcingMode {
    /// Pick by source count and memory budget.
    Auto,
    /// Two W-deep rings of source-spectrum cubes.
    Spectrum,
    /// Folded recursion: one cube per window per step, rings rebuilt at slices.
    Folded,
    /// Per-source sums without spectrum cubes.
    Sources,
}

impl std::str::FromStr for ForcingMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Self::Auto),
            "spectrum" => Ok(Self::Spectrum),
            "folded" => Ok(Self::Folded),
            "sources" => Ok(Self::Sources),
            other => Err(invalid(
                "forcing",
                format!("expected auto|spectrum|folded|sources, got `{other}`"),
            )),
        }
    }
}

impl fmt::Display for ForcingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Auto => "auto",
            Self::Spectrum => "spectrum",
            Self::Folded => "folded",
            Self::Sources => "sources",
        })
    }
}

/// Everything a run needs.
#[derive(Clone, Debug)]
pub struct RunPlan {
    pub params: SchemeParams,
    pub sources: Vec<Source>,
    pub targets: Vec<[f64; 3]>,
    /// Steps at which to emit slices, strictly increasing, each `<= n_steps`.
    pub slice_steps: Vec<usize>,
    pub transform: TransformMode,
    pub forcing: ForcingMode,
    pub memory_limit: usize,
    /// Return the final `alpha` (for decay diagnostics).
    pub keep_alpha: bool,
}

impl RunPlan {
    /// A plan with one slice at the final step.
    pub fn new(params: SchemeParams, sources: Vec<Source>, targets: Vec<[f64; 3]>) -> Self {
        let last = params.n_steps;
        Self {
            params,
            sources,
            targets,
            slice_steps: vec![last],
            transform: TransformMode::Fast,
            forcing: ForcingMode::Auto,
            memory_limit: DEFAULT_MEMORY_LIMIT,
            keep_alpha: false,
        }
    }

    /// Set slices from times, each an integer multiple of `dt` within `[0, T]`.
    pub fn set_slice_times(&mut self, times: &[f64]) -> Result<()> {
        let dt = self.params.dt;
        let mut steps = Vec::with_capacity(times.len());
        for &t in times {
            let n = (t / dt).round();
            if !(n >= 0.0) || (n * dt - t).abs() > 1e-9 * t.abs().max(1.0) {
                return Err(invalid("slice_times", format!("{t} is not a multiple of dt = {dt}")));
            }
            if n as usize > self.params.n_steps {
                return Err(invalid("slice_times", format!("{t} lies beyond T")));
            }
            steps.push(n as usize);
        }
        steps.sort_unstable();
        steps.dedup();
        self.slice_steps = steps;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        check_domain(&self.targets)?;
        let pos: Vec<[f64; 3]> = self.sources.iter().map(|s| s.position).collect();
        check_domain(&pos)?;
        if self.sources.is_empty() {
            return Err(invalid("sources", "need at least one source"));
        }
        if self.slice_steps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("slice_steps", "must be strictly increasing"));
        }
        if self.slice_steps.last().is_some_and(|&s| s > self.params.n_steps) {
            return Err(invalid("slice_steps", "beyond the final step"));
        }
        Ok(())
    }
}

/// Time-invariant structures of a run.
pub struct Precomputed {
    pub window: BlendWindow,
    pub grid: Arc<ModeGrid>,
    pub weights: UpdateWeights,
    pub local: LocalTable,
    /// Source points; absent when forcing by per-source sums.
    pub source_plan: Option<TransformPlan>,
    pub target_plan: TransformPlan,
    pub forcing: ForcingMode,
    /// Wall seconds per stage.
    pub timings: Vec<(&'static str, f64)>,
}

/// Bytes held by the ring variant: `2W` ring cubes, two fresh cubes, `alpha`, `alpha_dot`.
pub fn ring_memory(grid: &ModeGrid, p: &SchemeParams) -> usize {
    (2 * p.w + 4) * grid.half_len() * std::mem::size_of::<Complex64>()
}

pub fn resolve_forcing(plan: &RunPlan, grid: &ModeGrid) -> ForcingMode {
    match plan.forcing {
        ForcingMode::Auto => {
            if plan.sources.len() <= SOURCE_SUM_MAX {
                ForcingMode::Sources
            } else if ring_memory(grid, &plan.params) <= plan.memory_limit {
                ForcingMode::Spectrum
            } else {
                ForcingMode::Folded
            }
        }
        other => other,
    }
}

pub fn precompute(plan: &RunPlan) -> Result<Precomputed> {
    plan.validate()?;
    let p = &plan.params;
    let mut timings = Vec::new();
    let clock = Instant::now();
    let window = BlendWindow::new(p.epsilon, p.delta)?;
    timings.push(("window", clock.elapsed().as_secs_f64()));

    let clock = Instant::now();
    let grid = Arc::new(build_grid(p)?);
    timings.push(("grid", clock.elapsed().as_secs_f64()));

    let clock = Instant::now();
    let weights = build_update_weights(&grid, p, &window);
    timings.push(("weights", clock.elapsed().as_secs_f64()));

    let clock = Instant::now();
    let local = build_local_table(&plan.targets, &plan.sources, &window)?;
    timings.push(("local table", clock.elapsed().as_secs_f64()));

    let clock = Instant::now();
    let forcing = resolve_forcing(plan, &grid);
    let source_plan = match forcing {
        ForcingMode::Sources => None,
        _ => {
            let pos: Vec<[f64; 3]> = plan.sources.iter().map(|s| s.position).collect();
            Some(TransformPlan::new(&pos, grid.clone(), p.epsilon, plan.transform)?)
        }
    };
    let target_plan = TransformPlan::new(&plan.targets, grid.clone(), p.epsilon, plan.transform)?;
    timings.push(("transform plans", clock.elapsed().as_secs_f64()));
    info!(
        "grid N={} half-ball modes={} W={} forcing={} pairs={}",
        grid.n(),
        grid.half_len(),
        p.w,
        forcing,
        local.pair_count()
    );
    Ok(Precomputed {
        window,
        grid,
        weights,
        local,
        source_plan,
        target_plan,
        forcing,
        timings,
    })
}

/// One solution slice with its two parts.
#[derive(Clone, Debug)]
pub struct Slice {
    pub step: usize,
    pub snapshot: FieldSnapshot,
    pub local: Vec<f64>,
    pub history: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counters {
    pub steps: usize,
    /// Creation plus annihilation spectra, two per step.
    pub spectrum_evaluations: usize,
    /// Extra spectra recomputed to rebuild `alpha` at slices (folded forcing only).
    pub reconstruction_evaluations: usize,
    /// Mode-to-target transforms, one per slice.
    pub target_transforms: usize,
}

/// Wall-clock seconds per stage.
#[derive(Clone, Debug, Default)]
pub struct TimingReport {
    pub precompute: Vec<(&'static str, f64)>,
    /// Spectrum cubes or per-source coefficients, summed over steps.
    pub forcing: f64,
    /// Mode update, summed over steps.
    pub update: f64,
    pub local: f64,
    pub history: f64,
    pub total: f64,
    pub steps: usize,
    pub slices: usize,
}

impl TimingReport {
    pub fn precompute_total(&self) -> f64 {
        self.precompute.iter().map(|p| p.1).sum()
    }

    /// Forcing plus update, per step.
    pub fn per_step(&self) -> f64 {
        (self.forcing + self.update) / self.steps.max(1) as f64
    }
}

impl fmt::Display for TimingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let per = |x: f64, n: usize| x / n.max(1) as f64;
        writeln!(f, "precompute            {:10.3} s", self.precompute_total())?;
        for (name, t) in &self.precompute {
            writeln!(f, "  {name:<20}{t:10.3} s")?;
        }
        writeln!(f, "forcing / step        {:10.3e} s", per(self.forcing, self.steps))?;
        writeln!(f, "alpha update / step   {:10.3e} s", per(self.update, self.steps))?;
        writeln!(f, "u_l / slice           {:10.3e} s", per(self.local, self.slices))?;
        writeln!(f, "u_h / slice           {:10.3e} s", per(self.history, self.slices))?;
        write!(f, "total                 {:10.3} s", self.total)
    }
}

pub struct SimulationOutput {
    pub slices: Vec<Slice>,
    pub timing: TimingReport,
    pub counters: Counters,
    pub forcing: ForcingMode,
    pub grid: Arc<ModeGrid>,
    /// `alpha` at the final step when requested.
    pub final_alpha: Option<Vec<Complex64>>,
}

pub fn simulate(plan: &RunPlan) -> Result<SimulationOutput> {
    let start = Instant::now();
    let pre = precompute(plan)?;
    let mut out = simulate_with(plan, &pre)?;
    out.timing.total = start.elapsed().as_secs_f64();
    Ok(out)
}

enum Stepper {
    Ring(HistoryState),
    Folded(FoldedState, FoldedWeights),
    Sources(HistoryState, SourceForcing),
}

fn finite(v: &[Complex64]) -> bool {
    v.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Run the time loop with precomputed structures.
pub fn simulate_with(plan: &RunPlan, pre: &Precomputed) -> Result<SimulationOutput> {
    let start = Instant::now();
    let p = &plan.params;
    let lag = lag_steps(p);
    let mut timing = TimingReport {
        precompute: pre.timings.clone(),
        ..Default::default()
    };
    let mut counters = Counters::default();
    let mut stepper = match pre.forcing {
        ForcingMode::Spectrum => Stepper::Ring(HistoryState::new(&pre.grid)),
        ForcingMode::Folded => Stepper::Folded(
            FoldedState::new(&pre.grid),
            FoldedWeights::new(pre.weights.clone()),
        ),
        ForcingMode::Sources => Stepper::Sources(
            HistoryState::new(&pre.grid),
            SourceForcing::new(pre.grid.clone(), &plan.sources),
        ),
        ForcingMode::Auto => unreachable!("resolved in precompute"),
    };
    let spectrum = |t: f64| -> Result<Vec<Complex64>> {
        let sp = pre.source_plan.as_ref().expect("spectrum forcing has a source plan");
        compute_shat(&plan.sources, t, sp)
    };
    let time = |n: isize| n as f64 * p.dt;

    let mut slices = Vec::with_capacity(plan.slice_steps.len());
    let mut next_slice = plan.slice_steps.iter().peekable();
    let mut final_alpha = None;
    for n in 0..=p.n_steps {
        let want_slice = next_slice.peek().is_some_and(|&&s| s == n);
        let want_final = plan.keep_alpha && n == p.n_steps;
        if want_slice || want_final {
            let alpha = current_alpha(&stepper, pre, plan, n, &mut counters, &spectrum)?;
            if !finite(&alpha) {
                return Err(Error::NonFinite { stage: "alpha", step: n });
            }
            if want_slice {
                next_slice.next();
                slices.push(make_slice(plan, pre, n, &alpha, &mut timing, &mut counters)?);
            }
            if want_final {
                final_alpha = Some(alpha);
            }
        }
        if n == p.n_steps {
            break;
        }

        let ni = n as isize;
        let clock = Instant::now();
        match &mut stepper {
            Stepper::Ring(st) => {
                let c = spectrum(time(ni))?;
                let a = spectrum(time(ni - lag as isize))?;
                timing.forcing += clock.elapsed().as_secs_f64();
                if !finite(&c) || !finite(&a) {
                    return Err(Error::NonFinite { stage: "source spectrum", step: n });
                }
                let clock = Instant::now();
                st.step(&pre.weights, c, a)?;
                timing.update += clock.elapsed().as_secs_f64();
            }
            Stepper::Folded(st, fw) => {
                let c = spectrum(time(ni))?;
                let a = spectrum(time(ni - lag as isize))?;
                timing.forcing += clock.elapsed().as_secs_f64();
                if !finite(&c) || !finite(&a) {
                    return Err(Error::NonFinite { stage: "source spectrum", step: n });
                }
                let clock = Instant::now();
                st.step(fw, &c, &a)?;
                timing.update += clock.elapsed().as_secs_f64();
            }
            Stepper::Sources(st, f) => {
                f.prepare(n, &plan.sources, &pre.weights, p);
                timing.forcing += clock.elapsed().as_secs_f64();
                if !f.is_finite() {
                    return Err(Error::NonFinite { stage: "source forcing", step: n });
                }
                let clock = Instant::now();
                st.step_sources(&pre.weights, f)?;
                timing.update += clock.elapsed().as_secs_f64();
            }
        }
        counters.steps += 1;
        counters.spectrum_evaluations += 2;
        if n % 50 == 0 {
            debug!("step {n}/{}", p.n_steps);
        }
    }
    timing.steps = counters.steps;
    timing.slices = slices.len();
    timing.total = start.elapsed().as_secs_f64() + timing.precompute_total();
    Ok(SimulationOutput {
        slices,
        timing,
        counters,
        forcing: pre.forcing,
        grid: pre.grid.clone(),
        final_alpha,
    })
}

fn current_alpha(
    stepper: &Stepper,
    pre: &Precomputed,
    plan: &RunPlan,
    n: usize,
    counters: &mut Counters,
    spectrum: &impl Fn(f64) -> Result<Vec<Complex64>>,
) -> Result<Vec<Complex64>> {
    match stepper {
        Stepper::Ring(st) | Stepper::Sources(st, _) => Ok(st.alpha().to_vec()),
        Stepper::Folded(st, fw) => {
            let p = &plan.params;
            let lag = lag_steps(p) as isize;
            let ni = n as isize;
            let mut recent = Vec::with_capacity(p.w - 1);
            let mut recent_a = Vec::with_capacity(p.w - 1);
            for d in 1..p.w as isize {
                recent.push(spectrum((ni - d) as f64 * p.dt)?);
                recent_a.push(spectrum((ni - lag - d) as f64 * p.dt)?);
                counters.reconstruction_evaluations += 2;
            }
            let _ = pre;
            st.alpha(fw, &recent, &recent_a)
        }
    }
}

fn make_slice(
    plan: &RunPlan,
    pre: &Precomputed,
    n: usize,
    alpha: &[Complex64],
    timing: &mut TimingReport,
    counters: &mut Counters,
) -> Result<Slice> {
    let t = n as f64 * plan.params.dt;
    let clock = Instant::now();
    let local = eval_local(&pre.local, &plan.sources, t);
    timing.local += clock.elapsed().as_secs_f64();
    let clock = Instant::now();
    let history = eval_alpha(alpha, &pre.target_plan)?;
    timing.history += clock.elapsed().as_secs_f64();
    counters.target_transforms += 1;
    let values: Vec<f64> = local.iter().zip(&history).map(|(a, b)| a + b).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { stage: "slice", step: n });
    }
    Ok(Slice {
        step: n,
        snapshot: FieldSnapshot {
            t,
            targets: plan.targets.clone(),
            values,
        },
        local,
        history,
    })
}

/// One row of a time-step sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub dt: f64,
    pub abs_err: f64,
    pub rel_err: Option<f64>,
    pub wall_seconds: f64,
}

/// Options shared by every run of a sweep.
#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub inputs: SchemeInputs,
    pub sources: Vec<Source>,
    pub targets: Vec<[f64; 3]>,
    pub transform: TransformMode,
    pub forcing: ForcingMode,
    pub memory_limit: usize,
}

/// Error at the final time for each `dt`, with the cutoff overridden to `pi / dt`.
///
/// Each `dt` is nudged to `T / round(T / dt)` so every run ends exactly at `T`.
pub fn converge(spec: &SweepSpec, dts: &[f64]) -> Result<Vec<ConvergenceRow>> {
    let t_final = spec.inputs.t_final;
    let exact = evaluate_direct(&spec.sources, &spec.targets, t_final);
    let mut rows = Vec::with_capacity(dts.len());
    for &dt in dts {
        if !(dt > 0.0) {
            return Err(invalid("dt", format!("sweep step must be positive, got {dt}")));
        }
        let steps = (t_final / dt).round().max(1.0);
        let dt = t_final / steps;
        let inputs = SchemeInputs {
            dt,
            cutoff_override: Some(std::f64::consts::PI / dt),
            ..spec.inputs.clone()
        };
        let params = select_params(&inputs)?;
        let mut plan = RunPlan::new(params, spec.sources.clone(), spec.targets.clone());
        plan.transform = spec.transform;
        plan.forcing = spec.forcing;
        plan.memory_limit = spec.memory_limit;
        let clock = Instant::now();
        let out = simulate(&plan)?;
        let wall = clock.elapsed().as_secs_f64();
        let slice = out.slices.last().ok_or_else(|| Error::State("no slice produced".into()))?;
        let m = compare(&slice.snapshot.values, &exact.values);
        info!("dt={dt:.5} abs={:.3e} wall={wall:.1}s", m.abs_max);
        rows.push(ConvergenceRow {
            dt,
            abs_err: m.abs_max,
            rel_err: m.rel_max,
            wall_seconds: wall,
        });
    }
    Ok(rows)
}

/// Verdict on a time-step sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceVerdict {
    /// Smallest error in the sweep.
    pub floor: f64,
    /// `(coarse dt, fine dt, error reduction per halving of dt)` for consecutive runs
    /// whose coarser error lies above `SATURATION_MARGIN * floor`.
    pub rates: Vec<(f64, f64, f64)>,
    pub floor_ok: bool,
    pub rates_ok: bool,
}

/// Errors within this factor of the floor count as saturated.
pub const SATURATION_MARGIN: f64 = 100.0;

/// Check a sweep for a per-halving error reduction of at least `min_rate` before
/// saturation and a floor of at most `max_floor`.
pub fn assess_convergence(rows: &[ConvergenceRow], min_rate: f64, max_floor: f64) -> ConvergenceVerdict {
    let mut sorted: Vec<&ConvergenceRow> = rows.iter().collect();
    sorted.sort_by(|a, b| b.dt.total_cmp(&a.dt));
    let floor = sorted.iter().map(|r| r.abs_err).fold(f64::INFINITY, f64::min);
    let rates: Vec<(f64, f64, f64)> = sorted
        .windows(2)
        .filter(|w| w[0].abs_err > SATURATION_MARGIN * floor)
        .map(|w| {
            let halvings = (w[0].dt / w[1].dt).log2();
            (w[0].dt, w[1].dt, (w[0].abs_err / w[1].abs_err).powf(1.0 / halvings))
        })
        .collect();
    ConvergenceVerdict {
        floor,
        rates_ok: !rates.is_empty() && rates.iter().all(|r| r.2 >= min_rate),
        floor_ok: floor <= max_floor,
        rates,
    }
}

/// Shell maximum of `|alpha|` in one radial bin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayRow {
    /// Bin index `round(|n|)`.
    pub bin: u32,
    pub kappa: f64,
    pub max_abs: f64,
    /// `100 M eps / kappa^3`
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecayReport {
    pub rows: Vec<DecayRow>,
    pub k_cut: f64,
    /// Shell maxima beyond `K` never grow by more than 5% from one bin to the next.
    pub monotone_beyond_cutoff: bool,
    /// Bound holds at the bin nearest `K`.
    pub bound_at_cutoff: bool,
    /// Bound holds on the outermost three bins.
    pub bound_at_outer: bool,
}

/// Tolerated growth between consecutive shell maxima beyond `K`.
pub const SHELL_NOISE: f64 = 0.05;

pub fn decay_report(alpha: &[Complex64], grid: &ModeGrid, p: &SchemeParams, n_sources: usize) -> DecayReport {
    let shells = grid.shells();
    let bins = (grid.s_max() as f64).sqrt().round() as usize + 1;
    let mut max_abs = vec![0.0f64; bins];
    for (a, &s) in alpha.iter().zip(&shells) {
        let b = (s as f64).sqrt().round() as usize;
        max_abs[b] = max_abs[b].max(a.norm());
    }
    let rows: Vec<DecayRow> = max_abs
        .iter()
        .enumerate()
        .map(|(b, &m)| {
            let kappa = b as f64 * grid.dk();
            DecayRow {
                bin: b as u32,
                kappa,
                max_abs: m,
                bound: if b == 0 {
                    f64::INFINITY
                } else {
                    100.0 * n_sources as f64 * p.epsilon / kappa.powi(3)
                },
            }
        })
        .collect();
    let beyond: Vec<&DecayRow> = rows.iter().filter(|r| r.kappa > p.k_cut).collect();
    let monotone_beyond_cutoff = beyond
        .windows(2)
        .all(|w| w[1].max_abs <= (1.0 + SHELL_NOISE) * w[0].max_abs);
    let at_cut = rows
        .iter()
        .min_by(|a, b| (a.kappa - p.k_cut).abs().total_cmp(&(b.kappa - p.k_cut).abs()));
    let bound_at_cutoff = at_cut.is_some_and(|r| r.max_abs <= r.bound);
    let bound_at_outer = rows.iter().rev().take(3).all(|r| r.max_abs <= r.bound);
    DecayReport {
        rows,
        k_cut: p.k_cut,
        monotone_beyond_cutoff,
        bound_at_cutoff,
        bound_at_outer,
    }
}
