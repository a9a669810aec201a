//! Round-based actor/learner pipeline.
//!
//! Each round publishes an immutable parameter snapshot. Rollout workers
//! run episodes with that snapshot while the learner, in parallel, performs
//! a fixed number of gradient steps on the replay contents as of the round
//! start. At the barrier the new transitions are appended in worker order.
//! Every random draw is keyed by counters, so a run is reproducible for any
//! worker count.

use super::replay::ReplayBuffer;
use super::sac::{sac_update_continuous, sac_update_discrete, Batch, SacConfig, StreamLearner};
use super::transition::Stream;
use super::LearnError;
use crate::env::{generate_scenario, EnvParams, Family};
use crate::ncf2::{
    run_episode, Ablations, EpisodeOutput, FairnessConstants, PolicyKind, ProtocolConfig,
};
use crate::nets::{Archive, BundleConfig, NetError, ParamSet, PolicyBundle, Tensor};
use crate::rng::{keyed_rng, mix, Purpose};
use std::collections::VecDeque;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

/// First lines of every training log.
pub const LOG_HEADER: &str =
    "# iteration counts gradient steps; one iteration updates every stream of the phase once\n\
iteration,stream,critic_loss,actor_loss,temperature,episodes_done,sr_window\n";

/// Training schedule phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Phase {
    /// Solitary policy and its critics, one agent per episode.
    Solitary = 0,
    /// Navigation module alone; every agent always moves.
    NavWarmup = 1,
    /// Navigation module and filter together.
    Joint = 2,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Solitary, Phase::NavWarmup, Phase::Joint];

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    fn streams(self) -> &'static [Stream] {
        match self {
            Phase::Solitary => &[Stream::Solitary],
            Phase::NavWarmup => &[Stream::Nav],
            Phase::Joint => &[Stream::Nav, Stream::Filter],
        }
    }

    fn policy(self) -> PolicyKind {
        match self {
            Phase::Solitary => PolicyKind::Solitary,
            Phase::NavWarmup => PolicyKind::NavOnly,
            Phase::Joint => PolicyKind::Ncf2,
        }
    }
}

/// Makes worker `worker` panic once in round `round`; used to exercise
/// worker restarts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaultInjection {
    pub round: u64,
    pub worker: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub family: Family,
    pub n_agents: usize,
    pub n_obstacles: usize,
    pub workers: usize,
    pub episodes_per_worker: usize,
    /// Gradient steps the learner takes per round.
    pub updates_per_round: u64,
    /// Gradient steps of each phase.
    pub phase_iterations: [u64; 3],
    pub sac: SacConfig,
    pub bundle: BundleConfig,
    pub env: EnvParams,
    pub ablations: Ablations,
    pub constants: FairnessConstants,
    /// Episodes in the moving success-rate window of the log.
    pub sr_window: usize,
    /// Save a checkpoint whenever this many iterations have passed since
    /// the last one; 0 disables periodic checkpoints.
    pub checkpoint_every: u64,
    pub checkpoint_path: Option<PathBuf>,
    pub log_path: Option<PathBuf>,
    /// Where the final policy bundle is written.
    pub out_path: Option<PathBuf>,
    pub verbose: bool,
    pub fault: Option<FaultInjection>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            family: Family::Uniform,
            n_agents: 8,
            n_obstacles: 25,
            workers: 1,
            episodes_per_worker: 1,
            updates_per_round: 50,
            phase_iterations: [1_000_000; 3],
            sac: SacConfig::default(),
            bundle: BundleConfig::default(),
            env: EnvParams::default(),
            ablations: Ablations::default(),
            constants: FairnessConstants::default(),
            sr_window: 100,
            checkpoint_every: 50_000,
            checkpoint_path: None,
            log_path: None,
            out_path: None,
            verbose: false,
            fault: None,
        }
    }
}

impl TrainConfig {
    /// Scaled-down schedule for a single desktop CPU: 20k iterations per
    /// phase, a 50k replay buffer, smaller batches and a proportionally
    /// shorter critic warm-up, on two agents and five obstacles.
    pub fn desk() -> Self {
        Self {
            n_agents: 2,
            n_obstacles: 5,
            phase_iterations: [20_000; 3],
            sac: SacConfig {
                iterations: 20_000,
                critic_warmup: 200,
                buffer_capacity: 50_000,
                batch_size: 64,
                ..SacConfig::default()
            },
            sr_window: 50,
            checkpoint_every: 5_000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        self.sac.validate().map_err(LearnError::Config)?;
        if self.workers == 0 || self.episodes_per_worker == 0 || self.updates_per_round == 0 {
            return Err(LearnError::Config(
                "train.workers, train.episodes_per_worker and train.updates_per_round must be positive".into(),
            ));
        }
        if !(1..=32).contains(&self.n_agents) {
            return Err(LearnError::Config(format!(
                "train.agents must be in 1..=32, got {}",
                self.n_agents
            )));
        }
        if self.sr_window == 0 {
            return Err(LearnError::Config(
                "train.sr_window must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Full learner state: networks, per-stream optimizer and target state and
/// schedule counters. The replay buffer is not part of it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub bundle: PolicyBundle,
    pub learners: [Option<StreamLearner>; 3],
    /// Index of the current phase; 3 once training is complete.
    pub phase: usize,
    pub phase_iteration: u64,
    pub iteration: u64,
    pub episodes_done: u64,
    pub round: u64,
}

impl Checkpoint {
    pub fn fresh(cfg: &TrainConfig) -> Self {
        Self {
            bundle: PolicyBundle::new(cfg.bundle, mix(&[cfg.seed, Purpose::Init as u64])),
            learners: [None, None, None],
            phase: 0,
            phase_iteration: 0,
            iteration: 0,
            episodes_done: 0,
            round: 0,
        }
    }

    fn ensure_learner(&mut self, stream: Stream, sac: &SacConfig) {
        let b = &self.bundle;
        self.learners[stream.index()].get_or_insert_with(|| match stream {
            Stream::Solitary => StreamLearner::new(&b.solitary_actor, &b.solitary_critics, sac),
            Stream::Nav => StreamLearner::new(&b.nav_actor, &b.nav_critics, sac),
            Stream::Filter => StreamLearner::new(&b.cf2_actor, &b.cf2_critics, sac),
        });
    }

    pub fn to_archive(&self) -> Archive {
        let mut a = self.bundle.to_archive();
        a.push_meta("train.phase", self.phase.to_string());
        a.push_meta("train.phase_iteration", self.phase_iteration.to_string());
        a.push_meta("train.iteration", self.iteration.to_string());
        a.push_meta("train.episodes_done", self.episodes_done.to_string());
        a.push_meta("train.round", self.round.to_string());
        for s in Stream::ALL {
            let Some(l) = &self.learners[s.index()] else {
                continue;
            };
            let p = format!("learner.{}", s.as_str());
            a.push_meta(format!("{p}.updates"), l.updates.to_string());
            a.push_meta(format!("{p}.log_alpha"), l.log_alpha.to_string());
            a.push_meta(
                format!("{p}.alpha_opt"),
                format!("{} {} {}", l.alpha_opt.step, l.alpha_opt.m, l.alpha_opt.v),
            );
            a.push_meta(format!("{p}.actor_opt.step"), l.actor_opt.step.to_string());
            for k in 0..2 {
                push_set(&mut a, &format!("{p}.target{k}"), &l.targets[k]);
                a.push_meta(
                    format!("{p}.critic_opt{k}.step"),
                    l.critic_opts[k].step.to_string(),
                );
                push_moments(&mut a, &format!("{p}.critic_opt{k}"), &l.critic_opts[k]);
            }
            push_moments(&mut a, &format!("{p}.actor_opt"), &l.actor_opt);
        }
        a
    }

    pub fn from_archive(a: &Archive, sac: &SacConfig) -> Result<Self, NetError> {
        fn meta<T: std::str::FromStr>(a: &Archive, k: &str) -> Result<T, NetError> {
            a.meta(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| NetError::Checkpoint(format!("missing or invalid metadata {k}")))
        }
        let bundle = PolicyBundle::from_archive(a)?;
        let mut ck = Self {
            bundle,
            learners: [None, None, None],
            phase: meta(a, "train.phase")?,
            phase_iteration: meta(a, "train.phase_iteration")?,
            iteration: meta(a, "train.iteration")?,
            episodes_done: meta(a, "train.episodes_done")?,
            round: meta(a, "train.round")?,
        };
        for s in Stream::ALL {
            let p = format!("learner.{}", s.as_str());
            if a.meta(&format!("{p}.updates")).is_none() {
                continue;
            }
            ck.ensure_learner(s, sac);
            let l = ck.learners[s.index()].as_mut().unwrap();
            l.updates = meta(a, &format!("{p}.updates"))?;
            l.log_alpha = meta(a, &format!("{p}.log_alpha"))?;
            let ao: String = meta(a, &format!("{p}.alpha_opt"))?;
            let parts: Vec<&str> = ao.split(' ').collect();
            let bad = || NetError::Checkpoint(format!("invalid metadata {p}.alpha_opt"));
            if parts.len() != 3 {
                return Err(bad());
            }
            l.alpha_opt.step = parts[0].parse().map_err(|_| bad())?;
            l.alpha_opt.m = parts[1].parse().map_err(|_| bad())?;
            l.alpha_opt.v = parts[2].parse().map_err(|_| bad())?;
            l.actor_opt.step = meta(a, &format!("{p}.actor_opt.step"))?;
            load_moments(a, &format!("{p}.actor_opt"), &mut l.actor_opt)?;
            for k in 0..2 {
                load_set(a, &format!("{p}.target{k}"), &mut l.targets[k])?;
                l.critic_opts[k].step = meta(a, &format!("{p}.critic_opt{k}.step"))?;
                load_moments(a, &format!("{p}.critic_opt{k}"), &mut l.critic_opts[k])?;
            }
        }
        Ok(ck)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), NetError> {
        self.to_archive().save(path)
    }

    pub fn load(path: &std::path::Path, sac: &SacConfig) -> Result<Self, NetError> {
        Self::from_archive(&Archive::load(path)?, sac)
    }
}

fn push_set(a: &mut Archive, prefix: &str, ps: &ParamSet<f32>) {
    for (n, t) in ps.names().iter().zip(ps.tensors()) {
        a.push(format!("{prefix}/{n}"), t.clone());
    }
}

fn load_tensor(a: &Archive, key: &str, slot: &mut Tensor<f32>) -> Result<(), NetError> {
    let t = a
        .tensor(key)
        .ok_or_else(|| NetError::Checkpoint(format!("missing tensor {key}")))?;
    if t.shape() != slot.shape() {
        return Err(NetError::Checkpoint(format!(
            "tensor {key} has the wrong shape"
        )));
    }
    *slot = t.clone();
    Ok(())
}

fn load_set(a: &Archive, prefix: &str, ps: &mut ParamSet<f32>) -> Result<(), NetError> {
    let names = ps.names().to_vec();
    for (n, slot) in names.iter().zip(ps.tensors_mut()) {
        load_tensor(a, &format!("{prefix}/{n}"), slot)?;
    }
    Ok(())
}

fn push_moments(a: &mut Archive, prefix: &str, opt: &crate::nets::Adam) {
    for (i, (m, v)) in opt.m.iter().zip(&opt.v).enumerate() {
        a.push(format!("{prefix}.m/{i}"), m.clone());
        a.push(format!("{prefix}.v/{i}"), v.clone());
    }
}

fn load_moments(a: &Archive, prefix: &str, opt: &mut crate::nets::Adam) -> Result<(), NetError> {
    for i in 0..opt.m.len() {
        load_tensor(a, &format!("{prefix}.m/{i}"), &mut opt.m[i])?;
        load_tensor(a, &format!("{prefix}.v/{i}"), &mut opt.v[i])?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub bundle: PolicyBundle,
    pub iterations: u64,
    pub episodes: u64,
    pub rounds: u64,
    /// Worker restarts after panics.
    pub restarts: usize,
}

/// Rounds in a row without a single gradient step before training gives
/// up; the phase cannot produce data for its streams.
const MAX_IDLE_ROUNDS: u64 = 10_000;
const MAX_WORKER_ATTEMPTS: usize = 3;

fn episode_config(cfg: &TrainConfig, phase: Phase, episode: u64) -> ProtocolConfig {
    let mut p = ProtocolConfig::new(
        phase.policy(),
        true,
        cfg.seed,
        mix(&[phase as u64, episode]),
    );
    p.constants = cfg.constants;
    if phase == Phase::Joint {
        p.ablations = cfg.ablations;
    }
    p
}

fn run_worker(
    cfg: &TrainConfig,
    snapshot: &PolicyBundle,
    phase: Phase,
    first_episode: u64,
    inject: bool,
) -> Result<Vec<EpisodeOutput>, LearnError> {
    if inject {
        panic!("injected rollout worker fault");
    }
    let n = if phase == Phase::Solitary {
        1
    } else {
        cfg.n_agents
    };
    let mut out = Vec::with_capacity(cfg.episodes_per_worker);
    for e in 0..cfg.episodes_per_worker as u64 {
        let episode = first_episode + e;
        let scen_seed = mix(&[cfg.seed, phase as u64, episode, Purpose::Scenario as u64]);
        let scenario = generate_scenario(cfg.family, n, cfg.n_obstacles, scen_seed)?;
        let mut o = run_episode(
            &scenario,
            snapshot,
            &episode_config(cfg, phase, episode),
            &cfg.env,
            true,
        );
        o.trace.clear();
        out.push(o);
    }
    Ok(out)
}

fn worker_with_restarts(
    cfg: &TrainConfig,
    snapshot: &PolicyBundle,
    phase: Phase,
    w: usize,
    first_episode: u64,
    round: u64,
    restarts: &Mutex<usize>,
) -> Result<Vec<EpisodeOutput>, LearnError> {
    let fault = cfg.fault.is_some_and(|f| f.round == round && f.worker == w);
    let mut last = String::new();
    for attempt in 0..MAX_WORKER_ATTEMPTS {
        match catch_unwind(AssertUnwindSafe(|| {
            run_worker(cfg, snapshot, phase, first_episode, fault && attempt == 0)
        })) {
            Ok(r) => return r,
            Err(p) => {
                last = p
                    .downcast_ref::<&str>()
                    .map(|s| s.to_string())
                    .or_else(|| p.downcast_ref::<String>().cloned())
                    .unwrap_or_else(|| "unknown panic".into());
                eprintln!("rollout worker {w} panicked in round {round} ({last}); restarting");
                *restarts.lock().unwrap() += 1;
            }
        }
    }
    Err(LearnError::WorkerFailed {
        worker: w,
        message: last,
    })
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| format!("{v:.6}"))
}

/// Learner side of one round.
fn learner_round(
    st: &mut Checkpoint,
    buffer: &ReplayBuffer,
    phase: Phase,
    cfg: &TrainConfig,
    sr: f64,
    log: &mut dyn Write,
) -> Result<u64, LearnError> {
    let limit = cfg.phase_iterations[phase as usize];
    let scale = st.bundle.config.residual_scale;
    let mut steps = 0;
    for _ in 0..cfg.updates_per_round {
        if st.phase_iteration >= limit {
            break;
        }
        let mut any = false;
        for &stream in phase.streams() {
            let learner = st.learners[stream.index()]
                .as_mut()
                .expect("learner created at phase start");
            let mut rng = keyed_rng(
                cfg.seed,
                stream.index() as u64,
                learner.updates,
                0,
                Purpose::Replay,
            );
            let Some(ts) = buffer.sample(stream, cfg.sac.batch_size, &mut rng) else {
                continue;
            };
            let batch = Batch::from_transitions(&ts);
            let b = &mut st.bundle;
            let losses = match stream {
                Stream::Solitary => sac_update_continuous(
                    &mut b.solitary_actor,
                    &mut b.solitary_critics,
                    learner,
                    &batch,
                    scale,
                    &cfg.sac,
                    &mut rng,
                ),
                Stream::Nav => sac_update_continuous(
                    &mut b.nav_actor,
                    &mut b.nav_critics,
                    learner,
                    &batch,
                    scale,
                    &cfg.sac,
                    &mut rng,
                ),
                Stream::Filter => sac_update_discrete(
                    &mut b.cf2_actor,
                    &mut b.cf2_critics,
                    learner,
                    &batch,
                    &cfg.sac,
                ),
            }
            .map_err(|e| match e {
                LearnError::NonFinite(m) => LearnError::NonFinite(format!(
                    "{m} (phase {}, stream {}, iteration {}, batch rewards {:?})",
                    phase as usize,
                    stream.as_str(),
                    st.iteration + 1,
                    &batch.rewards[..batch.rewards.len().min(8)]
                )),
                other => other,
            })?;
            any = true;
            writeln!(
                log,
                "{},{},{:.6},{},{:.6},{},{:.3}",
                st.iteration + 1,
                stream.as_str(),
                losses.critic,
                fmt_opt(losses.actor),
                losses.temperature,
                st.episodes_done,
                sr
            )?;
        }
        if !any {
            break;
        }
        st.phase_iteration += 1;
        st.iteration += 1;
        steps += 1;
    }
    Ok(steps)
}

/// Runs (or resumes) training, writing log lines to `log`. A fresh run
/// writes [`LOG_HEADER`] first.
pub fn run_pipeline_with_log(
    cfg: &TrainConfig,
    resume: Option<Checkpoint>,
    log: &mut dyn Write,
) -> Result<TrainOutcome, LearnError> {
    cfg.validate()?;
    let mut st = match resume {
        Some(c) => c,
        None => {
            log.write_all(LOG_HEADER.as_bytes())?;
            Checkpoint::fresh(cfg)
        }
    };
    let mut buffer = ReplayBuffer::new(cfg.sac.buffer_capacity);
    let restarts = Mutex::new(0usize);
    let mut last_checkpoint = st.iteration;

    while let Some(phase) = Phase::from_index(st.phase) {
        for &s in phase.streams() {
            st.ensure_learner(s, &cfg.sac);
        }
        if cfg.verbose {
            eprintln!("phase {} started at iteration {}", st.phase, st.iteration);
        }
        let mut window: VecDeque<bool> = VecDeque::with_capacity(cfg.sr_window);
        let mut idle = 0;
        while st.phase_iteration < cfg.phase_iterations[st.phase] {
            let snapshot = Arc::new(st.bundle.clone());
            let sr = if window.is_empty() {
                0.0
            } else {
                window.iter().filter(|&&s| s).count() as f64 / window.len() as f64
            };
            let first = st.episodes_done;
            let round = st.round;
            let per = cfg.episodes_per_worker as u64;
            let (steps, results) = std::thread::scope(|s| -> Result<_, LearnError> {
                let handles: Vec<_> = (0..cfg.workers)
                    .map(|w| {
                        let snap = Arc::clone(&snapshot);
                        let restarts = &restarts;
                        s.spawn(move || {
                            worker_with_restarts(
                                cfg,
                                &snap,
                                phase,
                                w,
                                first + w as u64 * per,
                                round,
                                restarts,
                            )
                        })
                    })
                    .collect();
                let steps = learner_round(&mut st, &buffer, phase, cfg, sr, log);
                let results: Vec<_> = handles
                    .into_iter()
                    .enumerate()
                    .map(|(w, h)| {
                        h.join().unwrap_or_else(|_| {
                            Err(LearnError::WorkerFailed {
                                worker: w,
                                message: "worker thread aborted".into(),
                            })
                        })
                    })
                    .collect();
                Ok((steps?, results))
            })?;
            for r in results {
                for ep in r? {
                    if window.len() == cfg.sr_window {
                        window.pop_front();
                    }
                    window.push_back(ep.result.success);
                    buffer.extend(ep.transitions);
                    st.episodes_done += 1;
                }
            }
            st.round += 1;
            idle = if steps == 0 { idle + 1 } else { 0 };
            if idle > MAX_IDLE_ROUNDS {
                return Err(LearnError::Config(format!(
                    "phase {} produced no trainable batches in {MAX_IDLE_ROUNDS} rounds",
                    st.phase
                )));
            }
            if let Some(path) = &cfg.checkpoint_path {
                if cfg.checkpoint_every > 0
                    && st.iteration - last_checkpoint >= cfg.checkpoint_every
                {
                    st.save(path)?;
                    last_checkpoint = st.iteration;
                }
            }
        }
        st.phase += 1;
        st.phase_iteration = 0;
        if let Some(path) = &cfg.checkpoint_path {
            st.save(path)?;
            last_checkpoint = st.iteration;
        }
    }
    log.flush()?;
    if let Some(out) = &cfg.out_path {
        st.bundle.save(out)?;
    }
    let restarts = *restarts.lock().unwrap();
    Ok(TrainOutcome {
        bundle: st.bundle,
        iterations: st.iteration,
        episodes: st.episodes_done,
        rounds: st.round,
        restarts,
    })
}

/// Runs training with the log file from `cfg.log_path` (appended to when
/// resuming) and an optional checkpoint to resume from.
pub fn run_pipeline(
    cfg: &TrainConfig,
    resume: Option<&std::path::Path>,
) -> Result<TrainOutcome, LearnError> {
    let ck = resume.map(|p| Checkpoint::load(p, &cfg.sac)).transpose()?;
    match &cfg.log_path {
        Some(p) => {
            let f = std::fs::OpenOptions::new()
                .create(true)
                .write(true)
                .append(ck.is_some())
                .truncate(ck.is_none())
                .open(p)?;
            let mut w = std::io::BufWriter::new(f);
            run_pipeline_with_log(cfg, ck, &mut w)
        }
        None => run_pipeline_with_log(cfg, ck, &mut std::io::sink()),
    }
}
