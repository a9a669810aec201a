//! Command-line front end: `train`, `eval`, `rollout`, `plot`, `scenario`
//! and `selftest`.

use crate::config;
use crate::env::{generate_scenario, EnvParams, Family, SolitaryMode};
use crate::eval::{evaluate, EvalConfig};
use crate::io::{load_scenario, load_trace, scenario_to_text, trace_to_text, write_file, Trace};
use crate::learn::run_pipeline;
use crate::ncf2::{run_episode, PolicyKind, ProtocolConfig};
use crate::nets::{BundleConfig, PolicyBundle};
use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};

/// Environment variable that supplies the seed when none is given.
pub const SEED_ENV: &str = "FAIRNAV_SEED";

#[derive(Debug, Parser)]
#[command(name = "fairnav", version, about = "Fair-delay multi-robot navigation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a policy bundle through all three phases.
    Train {
        /// Configuration file of `section.key = value` lines.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Checkpoint to resume from.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Print the effective configuration and exit.
        #[arg(long)]
        dump_config: bool,
    },
    /// Evaluate a policy on fresh episodes and write a JSON report.
    Eval {
        /// Policy bundle or training checkpoint.
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long, default_value = "Uniform")]
        family: Family,
        #[arg(long, default_value_t = 8)]
        agents: usize,
        #[arg(long, default_value_t = 25)]
        obstacles: usize,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "ncf2")]
        policy: PolicyKind,
        /// How other agents appear in the solitary baseline runs.
        #[arg(long, default_value = "removed")]
        delay_mode: SolitaryMode,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Report path; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one episode on a scenario file and write its trace.
    Rollout {
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value = "ncf2")]
        policy: PolicyKind,
        #[arg(long)]
        seed: Option<u64>,
        /// Sample actions and decisions instead of taking the modes.
        #[arg(long)]
        stochastic: bool,
    },
    /// Render a trace as SVG.
    Plot {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a scenario file.
    Scenario {
        #[arg(long, default_value = "Uniform")]
        family: Family,
        #[arg(long, default_value_t = 8)]
        agents: usize,
        #[arg(long, default_value_t = 25)]
        obstacles: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in oracle and property checks.
    Selftest,
}

type CliResult = Result<(), Box<dyn std::error::Error>>;

fn default_seed(seed: Option<u64>) -> Result<u64, String> {
    if let Some(s) = seed {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| format!("{SEED_ENV}={v:?} is not an unsigned integer")),
        Err(_) => Ok(0),
    }
}

/// Loads a policy bundle from a bundle file or a training checkpoint. The
/// DWA policy needs no networks and gets a tiny placeholder bundle.
fn load_models(
    ckpt: Option<&Path>,
    policy: PolicyKind,
) -> Result<PolicyBundle, Box<dyn std::error::Error>> {
    match ckpt {
        Some(p) => Ok(PolicyBundle::load(p)?),
        None if policy == PolicyKind::Dwa => Ok(PolicyBundle::new(
            BundleConfig {
                hidden: 1,
                key_dim: 1,
                ..BundleConfig::default()
            },
            0,
        )),
        None => Err(format!("--ckpt is required for the {} policy", policy.as_str()).into()),
    }
}

fn train(config_path: Option<&Path>, resume: Option<&Path>, dump: bool) -> CliResult {
    let text = match config_path {
        Some(p) => crate::io::read_file(p)?,
        None => String::new(),
    };
    let mut cfg = config::parse(&text)?;
    if !config::has_key(&text, "train.seed") {
        cfg.seed = default_seed(None)?;
    }
    if dump {
        print!("{}", config::dump(&cfg));
        return Ok(());
    }
    let out = run_pipeline(&cfg, resume)?;
    eprintln!(
        "finished {} iterations, {} episodes, {} worker restarts",
        out.iterations, out.episodes, out.restarts
    );
    if cfg.out_path.is_none() {
        eprintln!("note: train.out is not set, the trained bundle was not saved");
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Train {
            config,
            resume,
            dump_config,
        } => train(config.as_deref(), resume.as_deref(), dump_config),
        Command::Eval {
            ckpt,
            family,
            agents,
            obstacles,
            episodes,
            seed,
            policy,
            delay_mode,
            workers,
            out,
        } => {
            let models = load_models(ckpt.as_deref(), policy)?;
            let cfg = EvalConfig {
                policy,
                family,
                agents,
                obstacles,
                episodes,
                seed: default_seed(seed)?,
                delay_mode,
                env: EnvParams::default(),
                workers,
            };
            let report = evaluate(&models, &cfg)?;
            let json = report.to_json();
            match out {
                Some(p) => write_file(&p, &json)?,
                None => print!("{json}"),
            }
            eprintln!(
                "{} on {family}-{agents}-{obstacles}: SR {:.1} over {} episodes",
                policy.as_str(),
                report.sr,
                report.n_episodes
            );
            Ok(())
        }
        Command::Rollout {
            ckpt,
            scenario,
            trace,
            policy,
            seed,
            stochastic,
        } => {
            let models = load_models(ckpt.as_deref(), policy)?;
            let s = load_scenario(&scenario)?;
            s.validate()
                .map_err(|e| format!("{}: {e}", scenario.display()))?;
            let pcfg = ProtocolConfig::new(policy, stochastic, default_seed(seed)?, 0);
            let out = run_episode(&s, &models, &pcfg, &EnvParams::default(), false);
            let success = out.result.success;
            let steps = out.result.steps;
            write_file(
                &trace,
                &trace_to_text(&Trace {
                    scenario: s,
                    rows: out.trace,
                }),
            )?;
            eprintln!(
                "{} after {steps} steps",
                if success {
                    "all agents reached their goals"
                } else {
                    "episode failed"
                }
            );
            Ok(())
        }
        Command::Plot { trace, out } => {
            let t = load_trace(&trace)?;
            write_file(&out, &crate::plot::render_svg(&t))?;
            Ok(())
        }
        Command::Scenario {
            family,
            agents,
            obstacles,
            seed,
            out,
        } => {
            let s = generate_scenario(family, agents, obstacles, default_seed(seed)?)?;
            write_file(&out, &scenario_to_text(&s))?;
            Ok(())
        }
        Command::Selftest => {
            let results = crate::selftest::run_all();
            let mut failed = 0;
            for r in &results {
                println!(
                    "{} {:<28} {}",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.detail
                );
                failed += usize::from(!r.passed);
            }
            if failed > 0 {
                Err(format!("{failed} of {} checks failed", results.len()).into())
            } else {
                Ok(())
            }
        }
    }
}

/// Parses `argv` (including the program name) and runs the command.
/// Returns the process exit code: 0 on success, 1 on runtime errors and 2
/// on usage errors.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
