//! Saving a checkpoint after solitary training and continuing from it into
//! the navigation and filter phases. The replay buffer is not saved, so a
//! resumed run refills it before training again.

use fairnav::learn::{run_pipeline, run_pipeline_with_log, Checkpoint, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let ckpt = dir.path().join("solitary.ckpt");
    let mut cfg = TrainConfig::desk();
    cfg.phase_iterations = [150, 0, 0];
    cfg.sac.iterations = 150;
    cfg.sac.critic_warmup = 50;
    cfg.bundle.hidden = 16;
    cfg.bundle.key_dim = 8;
    cfg.checkpoint_path = Some(ckpt.clone());
    let solitary = run_pipeline(&cfg, None)?;

    let mut saved = Checkpoint::load(&ckpt, &cfg.sac)?;
    println!(
        "checkpoint: iteration {}, {} episodes, networks identical to the run: {}",
        saved.iteration,
        saved.episodes_done,
        saved.bundle == solitary.bundle
    );

    // continue with the second phase
    saved.phase = 1;
    saved.phase_iteration = 0;
    cfg.phase_iterations = [150, 150, 150];
    cfg.checkpoint_path = None;
    let mut log = Vec::new();
    let out = run_pipeline_with_log(&cfg, Some(saved), &mut log)?;
    let log = String::from_utf8(log)?;
    println!(
        "resumed run finished at iteration {} after {} episodes",
        out.iterations, out.episodes
    );
    println!(
        "first resumed log line: {}",
        log.lines().next().unwrap_or("")
    );
    Ok(())
}
