//! Flat `section.key = value` configuration files for training.
//!
//! A file may pick a base profile with `train.profile = full` (the
//! default) or `train.profile = desk`; every other key overrides one field
//! of that profile. Blank lines and `#` comments are ignored.

use crate::learn::TrainConfig;
use std::path::PathBuf;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: invalid value {value:?} for {key}: {message}")]
    Value {
        line: usize,
        key: String,
        value: String,
        message: String,
    },
}

/// Base profile by name.
pub fn profile(name: &str) -> Option<TrainConfig> {
    match name {
        "full" => Some(TrainConfig::default()),
        "desk" => Some(TrainConfig::desk()),
        _ => None,
    }
}

fn opt_path(p: &Option<PathBuf>) -> String {
    p.as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_default()
}

/// Every key with its current value, in file order.
pub fn entries(c: &TrainConfig) -> Vec<(&'static str, String)> {
    vec![
        ("train.seed", c.seed.to_string()),
        ("train.family", c.family.to_string()),
        ("train.agents", c.n_agents.to_string()),
        ("train.obstacles", c.n_obstacles.to_string()),
        ("train.workers", c.workers.to_string()),
        (
            "train.episodes_per_worker",
            c.episodes_per_worker.to_string(),
        ),
        ("train.updates_per_round", c.updates_per_round.to_string()),
        ("train.phase0_iterations", c.phase_iterations[0].to_string()),
        ("train.phase1_iterations", c.phase_iterations[1].to_string()),
        ("train.phase2_iterations", c.phase_iterations[2].to_string()),
        ("train.sr_window", c.sr_window.to_string()),
        ("train.checkpoint_every", c.checkpoint_every.to_string()),
        ("train.checkpoint", opt_path(&c.checkpoint_path)),
        ("train.log", opt_path(&c.log_path)),
        ("train.out", opt_path(&c.out_path)),
        ("train.verbose", c.verbose.to_string()),
        ("sac.gamma", c.sac.gamma.to_string()),
        ("sac.init_temperature", c.sac.init_temperature.to_string()),
        ("sac.tau", c.sac.tau.to_string()),
        ("sac.target_interval", c.sac.target_interval.to_string()),
        ("sac.lr", c.sac.lr.to_string()),
        ("sac.batch_size", c.sac.batch_size.to_string()),
        ("sac.critic_warmup", c.sac.critic_warmup.to_string()),
        ("sac.buffer_capacity", c.sac.buffer_capacity.to_string()),
        ("sac.auto_temperature", c.sac.auto_temperature.to_string()),
        ("sac.target_entropy", c.sac.target_entropy.to_string()),
        (
            "sac.target_entropy_discrete",
            c.sac.target_entropy_discrete.to_string(),
        ),
        ("net.hidden", c.bundle.hidden.to_string()),
        ("net.key_dim", c.bundle.key_dim.to_string()),
        (
            "net.residual_scale_v",
            c.bundle.residual_scale[0].to_string(),
        ),
        (
            "net.residual_scale_w",
            c.bundle.residual_scale[1].to_string(),
        ),
        (
            "net.duplicate_patience",
            c.bundle.duplicate_patience.to_string(),
        ),
        ("net.init_log_std", c.bundle.init_log_std.to_string()),
        ("env.t_max", c.env.t_max.to_string()),
        ("env.r_goal", c.env.r_goal.to_string()),
        ("env.r_crash", c.env.r_crash.to_string()),
        ("env.r_time", c.env.r_time.to_string()),
        ("dwa.v_samples", c.env.dwa.v_samples.to_string()),
        ("dwa.w_samples", c.env.dwa.w_samples.to_string()),
        ("dwa.horizon", c.env.dwa.horizon.to_string()),
        ("dwa.w_heading", c.env.dwa.w_heading.to_string()),
        ("dwa.w_clearance", c.env.dwa.w_clearance.to_string()),
        ("dwa.w_velocity", c.env.dwa.w_velocity.to_string()),
        ("dwa.safety_margin", c.env.dwa.safety_margin.to_string()),
        ("ncf2.alpha", c.constants.alpha.to_string()),
        ("ncf2.beta", c.constants.beta.to_string()),
        (
            "ncf2.no_improvement",
            c.ablations.no_improvement.to_string(),
        ),
        ("ncf2.full_comm", c.ablations.full_comm.to_string()),
        (
            "ncf2.fixed_priority",
            c.ablations.fixed_priority.to_string(),
        ),
        ("ncf2.force_move", c.ablations.force_move.to_string()),
    ]
}

/// Text form of `c`; parsing it gives back `c`.
pub fn dump(c: &TrainConfig) -> String {
    let mut s = String::from("# fairnav training configuration\n");
    for (k, v) in entries(c) {
        s.push_str(k);
        s.push_str(" = ");
        s.push_str(&v);
        s.push('\n');
    }
    s
}

fn parse_val<T: std::str::FromStr>(v: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| e.to_string())
}

fn path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

/// Sets one key. Returns `Ok(false)` for unknown keys.
pub fn set(c: &mut TrainConfig, key: &str, v: &str) -> Result<bool, String> {
    match key {
        "train.seed" => c.seed = parse_val(v)?,
        "train.family" => c.family = v.parse()?,
        "train.agents" => c.n_agents = parse_val(v)?,
        "train.obstacles" => c.n_obstacles = parse_val(v)?,
        "train.workers" => c.workers = parse_val(v)?,
        "train.episodes_per_worker" => c.episodes_per_worker = parse_val(v)?,
        "train.updates_per_round" => c.updates_per_round = parse_val(v)?,
        "train.phase0_iterations" => c.phase_iterations[0] = parse_val(v)?,
        "train.phase1_iterations" => c.phase_iterations[1] = parse_val(v)?,
        "train.phase2_iterations" => c.phase_iterations[2] = parse_val(v)?,
        "train.sr_window" => c.sr_window = parse_val(v)?,
        "train.checkpoint_every" => c.checkpoint_every = parse_val(v)?,
        "train.checkpoint" => c.checkpoint_path = path(v),
        "train.log" => c.log_path = path(v),
        "train.out" => c.out_path = path(v),
        "train.verbose" => c.verbose = parse_val(v)?,
        "sac.gamma" => c.sac.gamma = parse_val(v)?,
        "sac.init_temperature" => c.sac.init_temperature = parse_val(v)?,
        "sac.tau" => c.sac.tau = parse_val(v)?,
        "sac.target_interval" => c.sac.target_interval = parse_val(v)?,
        "sac.lr" => c.sac.lr = parse_val(v)?,
        "sac.batch_size" => c.sac.batch_size = parse_val(v)?,
        "sac.critic_warmup" => c.sac.critic_warmup = parse_val(v)?,
        "sac.buffer_capacity" => c.sac.buffer_capacity = parse_val(v)?,
        "sac.auto_temperature" => c.sac.auto_temperature = parse_val(v)?,
        "sac.target_entropy" => c.sac.target_entropy = parse_val(v)?,
        "sac.target_entropy_discrete" => c.sac.target_entropy_discrete = parse_val(v)?,
        "net.hidden" => c.bundle.hidden = parse_val(v)?,
        "net.key_dim" => c.bundle.key_dim = parse_val(v)?,
        "net.residual_scale_v" => c.bundle.residual_scale[0] = parse_val(v)?,
        "net.residual_scale_w" => c.bundle.residual_scale[1] = parse_val(v)?,
        "net.duplicate_patience" => c.bundle.duplicate_patience = parse_val(v)?,
        "net.init_log_std" => c.bundle.init_log_std = parse_val(v)?,
        "env.t_max" => c.env.t_max = parse_val(v)?,
        "env.r_goal" => c.env.r_goal = parse_val(v)?,
        "env.r_crash" => c.env.r_crash = parse_val(v)?,
        "env.r_time" => c.env.r_time = parse_val(v)?,
        "dwa.v_samples" => c.env.dwa.v_samples = parse_val(v)?,
        "dwa.w_samples" => c.env.dwa.w_samples = parse_val(v)?,
        "dwa.horizon" => c.env.dwa.horizon = parse_val(v)?,
        "dwa.w_heading" => c.env.dwa.w_heading = parse_val(v)?,
        "dwa.w_clearance" => c.env.dwa.w_clearance = parse_val(v)?,
        "dwa.w_velocity" => c.env.dwa.w_velocity = parse_val(v)?,
        "dwa.safety_margin" => c.env.dwa.safety_margin = parse_val(v)?,
        "ncf2.alpha" => c.constants.alpha = parse_val(v)?,
        "ncf2.beta" => c.constants.beta = parse_val(v)?,
        "ncf2.no_improvement" => c.ablations.no_improvement = parse_val(v)?,
        "ncf2.full_comm" => c.ablations.full_comm = parse_val(v)?,
        "ncf2.fixed_priority" => c.ablations.fixed_priority = parse_val(v)?,
        "ncf2.force_move" => c.ablations.force_move = parse_val(v)?,
        _ => return Ok(false),
    }
    Ok(true)
}

fn lines(text: &str) -> Result<Vec<(usize, String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let l = raw.split('#').next().unwrap().trim();
        if l.is_empty() {
            continue;
        }
        let Some((key, value)) = l.split_once('=') else {
            return Err(ConfigError::Syntax {
                line,
                message: format!("expected `key = value`, found {l:?}"),
            });
        };
        out.push((line, key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}

/// Whether `text` sets `key`.
pub fn has_key(text: &str, key: &str) -> bool {
    lines(text).is_ok_and(|kv| kv.iter().any(|(_, k, _)| k == key))
}

/// Parses a configuration file on top of its profile.
pub fn parse(text: &str) -> Result<TrainConfig, ConfigError> {
    let kv = lines(text)?;
    let mut c = TrainConfig::default();
    for (line, k, v) in kv.iter().filter(|(_, k, _)| k == "train.profile") {
        c = profile(v).ok_or_else(|| ConfigError::Value {
            line: *line,
            key: k.clone(),
            value: v.clone(),
            message: "expected full or desk".into(),
        })?;
    }
    for (line, k, v) in kv.iter().filter(|(_, k, _)| k != "train.profile") {
        match set(&mut c, k, v) {
            Ok(true) => {}
            Ok(false) => {
                return Err(ConfigError::UnknownKey {
                    line: *line,
                    key: k.clone(),
                })
            }
            Err(message) => {
                return Err(ConfigError::Value {
                    line: *line,
                    key: k.clone(),
                    value: v.clone(),
                    message,
                })
            }
        }
    }
    c.sac.iterations = c.phase_iterations.iter().copied().max().unwrap_or(0);
    Ok(c)
}
