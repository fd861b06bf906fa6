use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use serde_json::json;
use tkwfp::nudft::TransformMode;
use tkwfp_cli::commands::{self, Outcome};
use tkwfp_cli::config::{parse_config_with_env, Config};

/// Free-space wave potentials of many point sources.
///
/// Config keys can be overridden from the environment as TKWFP_<KEY>, for example
/// TKWFP_EPSILON=1e-8 or TKWFP_FORCING=folded.
#[derive(Parser)]
#[command(name = "tkwfp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat JSON config file.
    #[arg(long, global = true, env = "TKWFP_CONFIG")]
    config: Option<PathBuf>,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true, env = "TKWFP_OUT")]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true, env = "TKWFP_THREADS")]
    threads: Option<usize>,
    /// Transform implementation (overrides `transform`).
    #[arg(long, global = true, value_parser = ["fast", "direct"])]
    transform: Option<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Simulate and write the field at every slice time.
    Run,
    /// Error at `t_final` over the `dts` sweep, with K = pi/dt.
    Converge,
    /// Simulate on a target subsample and compare with the direct sum.
    Validate,
    /// Shell maxima of the mode coefficients at the final time.
    Decay,
    /// Blending-window samples and the tail-bound table.
    WindowDump,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Self::Run => "run",
            Self::Converge => "converge",
            Self::Validate => "validate",
            Self::Decay => "decay",
            Self::WindowDump => "window-dump",
        }
    }
}

fn load(cli: &Cli) -> Result<Config, Vec<String>> {
    let path = cli.config.as_ref().ok_or_else(|| vec!["--config <path> is required".to_string()])?;
    let text = std::fs::read_to_string(path).map_err(|e| vec![format!("reading {}: {e}", path.display())])?;
    let mut cfg = parse_config_with_env(&text, std::env::vars()).map_err(|e| e.0)?;
    if let Some(t) = &cli.transform {
        cfg.transform = t.parse::<TransformMode>().map_err(|e| vec![e.to_string()])?;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.to_string_lossy().into_owned();
    }
    Ok(cfg)
}

fn execute(cmd: Command, cfg: &Config) -> anyhow::Result<Outcome> {
    let dir = PathBuf::from(&cfg.out_dir);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    match cmd {
        Command::Run => commands::run(cfg, &dir),
        Command::Converge => commands::converge_cmd(cfg, &dir),
        Command::Validate => commands::validate(cfg, &dir),
        Command::Decay => commands::decay(cfg, &dir),
        Command::WindowDump => commands::window_dump(cfg, &dir),
    }
}

fn fail(command: &str, status: &str, messages: Vec<String>) -> ExitCode {
    let summary = json!({"command": command, "status": status, "failures": messages});
    eprintln!("{summary}");
    ExitCode::from(if status == "error" { 2 } else { 1 })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("TKWFP_LOG", "warn")).init();
    let cli = Cli::parse();
    let name = cli.command.name();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail(name, "error", vec![format!("threads: {e}")]);
        }
    }
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(errors) => return fail(name, "error", errors),
    };
    match execute(cli.command, &cfg) {
        Ok(out) if out.failures.is_empty() => {
            for f in &out.files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Ok(out) => fail(name, "fail", out.failures),
        Err(e) => fail(name, "error", vec![format!("{e:#}")]),
    }
}
