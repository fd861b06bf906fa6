//! Flat JSON run configuration.
//!
//! Every key is optional except `scenario`, `dt` and `t_final`. Parsing reports all
//! problems at once, and unknown keys are errors. Any key can be overridden from the
//! environment as `TKWFP_<KEY>` (value parsed as JSON, else taken as a string).

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use serde_json::{json, Map, Value};
use tkwfp::engine::{ForcingMode, DEFAULT_MEMORY_LIMIT};
use tkwfp::nudft::TransformMode;

/// Environment prefix for config overrides.
pub const ENV_PREFIX: &str = "TKWFP_";

/// Variables under [`ENV_PREFIX`] that belong to the command line, not the config.
pub const RESERVED_ENV: [&str; 4] = ["CONFIG", "OUT", "THREADS", "LOG"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScenarioKind {
    Corner,
    Cruller,
    Random,
    File,
    Pulse,
}

impl ScenarioKind {
    fn name(self) -> &'static str {
        match self {
            Self::Corner => "corner",
            Self::Cruller => "cruller",
            Self::Random => "random",
            Self::File => "file",
            Self::Pulse => "pulse",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [Self::Corner, Self::Cruller, Self::Random, Self::File, Self::Pulse]
            .into_iter()
            .find(|k| k.name() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TargetKind {
    Grid,
    File,
    Sources,
}

impl TargetKind {
    fn name(self) -> &'static str {
        match self {
            Self::Grid => "grid",
            Self::File => "file",
            Self::Sources => "sources",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [Self::Grid, Self::File, Self::Sources].into_iter().find(|k| k.name() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Bin,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub scenario: ScenarioKind,
    pub cruller_nu: usize,
    pub cruller_nv: usize,
    pub random_count: usize,
    pub omega_max: f64,
    pub slope: f64,
    pub t0_min: f64,
    pub t0_max: f64,
    pub sources_file: Option<String>,
    pub pulse_position: [f64; 3],
    pub pulse_amplitude: f64,
    pub pulse_mu: f64,
    pub pulse_t0: f64,

    pub epsilon: f64,
    pub gamma: f64,
    pub dt: f64,
    /// Time steps for `converge`.
    pub dts: Vec<f64>,
    pub t_final: f64,
    /// Signal bandlimit; estimated from the sources when absent.
    pub k0: Option<f64>,
    pub fixed_delta: Option<f64>,
    /// Defaults to `[t_final]`.
    pub slice_times: Vec<f64>,

    pub targets: TargetKind,
    pub target_grid: usize,
    pub targets_file: Option<String>,

    pub out_dir: String,
    pub format: Format,
    pub seed: u64,
    pub transform: TransformMode,
    pub forcing: ForcingMode,
    pub memory_limit: u64,

    /// Targets compared against the direct sum by `validate`.
    pub validate_sample: usize,
    /// Relative max-norm tolerance for `validate`; defaults to `10 epsilon`.
    pub validate_tolerance: Option<f64>,
    /// Modes evolved out to this multiple of `K` by `decay`.
    pub decay_extension: f64,
}

const KEYS: &[&str] = &[
    "scenario",
    "cruller_nu",
    "cruller_nv",
    "random_count",
    "omega_max",
    "slope",
    "t0_min",
    "t0_max",
    "sources_file",
    "pulse_position",
    "pulse_amplitude",
    "pulse_mu",
    "pulse_t0",
    "epsilon",
    "gamma",
    "dt",
    "dts",
    "t_final",
    "k0",
    "fixed_delta",
    "slice_times",
    "targets",
    "target_grid",
    "targets_file",
    "out_dir",
    "format",
    "seed",
    "transform",
    "forcing",
    "memory_limit",
    "validate_sample",
    "validate_tolerance",
    "decay_extension",
];

/// All problems found in a config document.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join("; "))
    }
}

impl std::error::Error for ConfigErrors {}

struct Reader<'a> {
    map: &'a Map<String, Value>,
    errors: Vec<String>,
}

impl<'a> Reader<'a> {
    fn get(&self, key: &str) -> Option<&'a Value> {
        self.map.get(key).filter(|v| !v.is_null())
    }

    fn fail(&mut self, key: &str, msg: impl fmt::Display) {
        self.errors.push(format!("{key}: {msg}"));
    }

    fn opt_f64(&mut self, key: &str, ok: impl Fn(f64) -> bool, want: &str) -> Option<f64> {
        let v = self.get(key)?;
        match v.as_f64() {
            Some(x) if x.is_finite() && ok(x) => Some(x),
            Some(x) => {
                self.fail(key, format!("{x} out of range, expected {want}"));
                None
            }
            None => {
                self.fail(key, format!("expected a number, got {v}"));
                None
            }
        }
    }

    fn f64(&mut self, key: &str, default: f64, ok: impl Fn(f64) -> bool, want: &str) -> f64 {
        self.opt_f64(key, ok, want).unwrap_or(default)
    }

    fn required_f64(&mut self, key: &str, ok: impl Fn(f64) -> bool, want: &str) -> f64 {
        if self.get(key).is_none() {
            self.fail(key, "missing required key");
            return f64::NAN;
        }
        self.opt_f64(key, ok, want).unwrap_or(f64::NAN)
    }

    fn u64(&mut self, key: &str, default: u64, min: u64) -> u64 {
        let Some(v) = self.get(key) else {
            return default;
        };
        match v.as_u64() {
            Some(x) if x >= min => x,
            _ => {
                self.fail(key, format!("expected an integer >= {min}, got {v}"));
                default
            }
        }
    }

    fn string(&mut self, key: &str) -> Option<String> {
        let v = self.get(key)?;
        match v.as_str() {
            Some(s) => Some(s.to_string()),
            None => {
                self.fail(key, format!("expected a string, got {v}"));
                None
            }
        }
    }

    fn list(&mut self, key: &str, ok: impl Fn(f64) -> bool, want: &str) -> Option<Vec<f64>> {
        let v = self.get(key)?;
        let Some(items) = v.as_array() else {
            self.fail(key, format!("expected a list of numbers, got {v}"));
            return None;
        };
        let mut out = Vec::with_capacity(items.len());
        for item in items {
            match item.as_f64() {
                Some(x) if x.is_finite() && ok(x) => out.push(x),
                _ => {
                    self.fail(key, format!("entry {item} out of range, expected {want}"));
                    return None;
                }
            }
        }
        Some(out)
    }

    fn choice<T>(&mut self, key: &str, default: T, parse: impl Fn(&str) -> Option<T>, names: &str) -> T {
        match self.string(key) {
            Some(s) => parse(&s).unwrap_or_else(|| {
                self.fail(key, format!("unknown value `{s}`, expected one of {names}"));
                default
            }),
            None => default,
        }
    }
}

fn positive(x: f64) -> bool {
    x > 0.0
}

/// Parse a config document.
pub fn parse_config(text: &str) -> Result<Config, ConfigErrors> {
    parse_config_with_env(text, std::iter::empty())
}

/// Parse a config document, then apply `TKWFP_<KEY>` overrides from `env`.
pub fn parse_config_with_env(
    text: &str,
    env: impl IntoIterator<Item = (String, String)>,
) -> Result<Config, ConfigErrors> {
    let value: Value = serde_json::from_str(text)
        .map_err(|e| ConfigErrors(vec![format!("config is not valid JSON: {e}")]))?;
    let Value::Object(mut map) = value else {
        return Err(ConfigErrors(vec!["config must be a JSON object".into()]));
    };
    for (name, raw) in env {
        let Some(key) = name.strip_prefix(ENV_PREFIX) else {
            continue;
        };
        if RESERVED_ENV.contains(&key) {
            continue;
        }
        let parsed = serde_json::from_str(&raw).unwrap_or(Value::String(raw));
        map.insert(key.to_ascii_lowercase(), parsed);
    }
    from_map(&map)
}

fn from_map(map: &Map<String, Value>) -> Result<Config, ConfigErrors> {
    let mut r = Reader {
        map,
        errors: Vec::new(),
    };
    for key in map.keys() {
        if !KEYS.contains(&key.as_str()) {
            r.fail(key, "unknown key");
        }
    }
    let scenario = match r.string("scenario") {
        Some(s) => ScenarioKind::parse(&s).unwrap_or_else(|| {
            r.fail("scenario", format!("unknown scenario `{s}`, expected corner|cruller|random|file|pulse"));
            ScenarioKind::Corner
        }),
        None => {
            if r.get("scenario").is_none() {
                r.fail("scenario", "missing required key");
            }
            ScenarioKind::Corner
        }
    };
    let cruller_nu = r.u64("cruller_nu", 40, 1) as usize;
    let cruller_nv = r.u64("cruller_nv", 40, 1) as usize;
    let random_count = r.u64("random_count", 100, 1) as usize;
    let omega_max = r.f64("omega_max", 30.0 * PI, |x| x >= 0.0, ">= 0");
    let slope = r.f64("slope", 5.0, positive, "> 0");
    let t0_min = r.f64("t0_min", 1.5, |x| x >= 0.0, ">= 0");
    let t0_max = r.f64("t0_max", 5.0, |x| x >= 0.0, ">= 0");
    if t0_max < t0_min {
        r.fail("t0_max", "must not be below t0_min");
    }
    let sources_file = r.string("sources_file");
    if scenario == ScenarioKind::File && sources_file.is_none() {
        r.fail("sources_file", "required by scenario `file`");
    }
    let pulse_position = match r.list("pulse_position", |x| (-1.0..=1.0).contains(&x), "[-1, 1]") {
        Some(v) if v.len() == 3 => [v[0], v[1], v[2]],
        Some(v) => {
            r.fail("pulse_position", format!("expected 3 coordinates, got {}", v.len()));
            [0.0; 3]
        }
        None => [0.0; 3],
    };
    let pulse_amplitude = r.f64("pulse_amplitude", 1.0, |_| true, "a number");
    let pulse_mu = r.f64("pulse_mu", 50.0, positive, "> 0");
    let pulse_t0 = r.f64("pulse_t0", 1.0, |x| x >= 0.0, ">= 0");

    let epsilon = r.f64("epsilon", 1e-6, |x| x > 0.0 && x < 1.0, "in (0, 1)");
    let gamma = r.f64("gamma", 0.5, |x| x > 0.0 && x < 1.0, "in (0, 1)");
    let dt = r.required_f64("dt", positive, "> 0");
    let dts = r.list("dts", positive, "> 0").unwrap_or_default();
    let t_final = r.required_f64("t_final", positive, "> 0");
    let k0 = r.opt_f64("k0", |x| x >= 0.0, ">= 0");
    let fixed_delta = r.opt_f64("fixed_delta", positive, "> 0");
    let slice_times = r
        .list("slice_times", |x| x >= 0.0, ">= 0")
        .unwrap_or_else(|| vec![t_final]);
    if slice_times.iter().any(|&t| t > t_final * (1.0 + 1e-12)) {
        r.fail("slice_times", "entries must not exceed t_final");
    }

    let targets = r.choice("targets", TargetKind::Grid, TargetKind::parse, "grid|file|sources");
    let target_grid = r.u64("target_grid", 10, 1) as usize;
    let targets_file = r.string("targets_file");
    if targets == TargetKind::File && targets_file.is_none() {
        r.fail("targets_file", "required by targets `file`");
    }

    let out_dir = r.string("out_dir").unwrap_or_else(|| "out".into());
    let format = r.choice(
        "format",
        Format::Csv,
        |s| match s {
            "csv" => Some(Format::Csv),
            "bin" => Some(Format::Bin),
            _ => None,
        },
        "csv|bin",
    );
    let seed = r.u64("seed", 0, 0);
    let transform = r.choice("transform", TransformMode::Fast, |s| s.parse().ok(), "fast|direct");
    let forcing = r.choice("forcing", ForcingMode::Auto, |s| s.parse().ok(), "auto|spectrum|folded|sources");
    let memory_limit = r.u64("memory_limit", DEFAULT_MEMORY_LIMIT as u64, 0);
    let validate_sample = r.u64("validate_sample", 200, 1) as usize;
    let validate_tolerance = r.opt_f64("validate_tolerance", positive, "> 0");
    let decay_extension = r.f64("decay_extension", 1.5, |x| x >= 1.0, ">= 1");

    if !r.errors.is_empty() {
        return Err(ConfigErrors(r.errors));
    }
    Ok(Config {
        scenario,
        cruller_nu,
        cruller_nv,
        random_count,
        omega_max,
        slope,
        t0_min,
        t0_max,
        sources_file,
        pulse_position,
        pulse_amplitude,
        pulse_mu,
        pulse_t0,
        epsilon,
        gamma,
        dt,
        dts,
        t_final,
        k0,
        fixed_delta,
        slice_times,
        targets,
        target_grid,
        targets_file,
        out_dir,
        format,
        seed,
        transform,
        forcing,
        memory_limit,
        validate_sample,
        validate_tolerance,
        decay_extension,
    })
}

impl Config {
    /// Every key, defaults included; parses back to an equal `Config`.
    pub fn to_json(&self) -> Value {
        let transform = match self.transform {
            TransformMode::Fast => "fast",
            TransformMode::Direct => "direct",
        };
        let format = match self.format {
            Format::Csv => "csv",
            Format::Bin => "bin",
        };
        let map: BTreeMap<&str, Value> = [
            ("scenario", json!(self.scenario.name())),
            ("cruller_nu", json!(self.cruller_nu)),
            ("cruller_nv", json!(self.cruller_nv)),
            ("random_count", json!(self.random_count)),
            ("omega_max", json!(self.omega_max)),
            ("slope", json!(self.slope)),
            ("t0_min", json!(self.t0_min)),
            ("t0_max", json!(self.t0_max)),
            ("sources_file", json!(self.sources_file)),
            ("pulse_position", json!(self.pulse_position)),
            ("pulse_amplitude", json!(self.pulse_amplitude)),
            ("pulse_mu", json!(self.pulse_mu)),
            ("pulse_t0", json!(self.pulse_t0)),
            ("epsilon", json!(self.epsilon)),
            ("gamma", json!(self.gamma)),
            ("dt", json!(self.dt)),
            ("dts", json!(self.dts)),
            ("t_final", json!(self.t_final)),
            ("k0", json!(self.k0)),
            ("fixed_delta", json!(self.fixed_delta)),
            ("slice_times", json!(self.slice_times)),
            ("targets", json!(self.targets.name())),
            ("target_grid", json!(self.target_grid)),
            ("targets_file", json!(self.targets_file)),
            ("out_dir", json!(self.out_dir)),
            ("format", json!(format)),
            ("seed", json!(self.seed)),
            ("transform", json!(transform)),
            ("forcing", json!(self.forcing.to_string())),
            ("memory_limit", json!(self.memory_limit)),
            ("validate_sample", json!(self.validate_sample)),
            ("validate_tolerance", json!(self.validate_tolerance)),
            ("decay_extension", json!(self.decay_extension)),
        ]
        .into_iter()
        .collect();
        json!(map)
    }
}
