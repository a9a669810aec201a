//! Evaluation metrics: success rate, makespan and delay statistics
//! against solitary baselines.

use crate::env::{
    generate_scenario, solitary_rollout, Controller, EnvError, EnvParams, Family, Observation,
    Scenario, SolitaryMode,
};
use crate::geom2d::Action;
use crate::ncf2::{head_action, run_episode, Models, PolicyKind, ProtocolConfig};
use crate::rng::mix;
use serde::{Deserialize, Serialize};

/// Tag mixed into evaluation scenario seeds so they never coincide with
/// training scenarios.
const EVAL_STREAM: u64 = 0x6576_616c;

/// The solitary policy of a model set, acting deterministically.
pub struct SolitaryPolicy<'a>(pub &'a dyn Models);

impl Controller for SolitaryPolicy<'_> {
    fn act(&self, obs: &Observation) -> Action {
        let h = self.0.solitary_heads(&[obs])[0];
        head_action(h, obs, self.0.residual_scale(), None).0
    }
}

/// Delay statistics of one successful episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayStats {
    pub variance: f64,
    pub max: f64,
    pub mean: f64,
}

/// Population variance, maximum and mean of per-agent delays.
pub fn delay_stats(delays: &[f64]) -> DelayStats {
    assert!(
        !delays.is_empty(),
        "delay statistics need at least one agent"
    );
    let n = delays.len() as f64;
    let mean = delays.iter().sum::<f64>() / n;
    DelayStats {
        variance: delays.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n,
        max: delays.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean,
    }
}

/// Outcome of one evaluation episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeMetrics {
    pub success: bool,
    pub makespan: Option<u32>,
    /// Present for successful episodes whose solitary baselines all reached
    /// their goals.
    pub delays: Option<DelayStats>,
    pub solitary_timeouts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub policy: String,
    pub family: Family,
    pub agents: usize,
    pub obstacles: usize,
    pub seed: u64,
    pub delay_mode: SolitaryMode,
    #[serde(rename = "SR")]
    pub sr: f64,
    #[serde(rename = "MS")]
    pub ms: Option<f64>,
    #[serde(rename = "VD")]
    pub vd: Option<f64>,
    #[serde(rename = "MAXD")]
    pub maxd: Option<f64>,
    #[serde(rename = "MEAND")]
    pub meand: Option<f64>,
    pub n_episodes: usize,
    pub n_successes: usize,
    /// Successful episodes that entered the delay averages.
    pub n_delay_episodes: usize,
    /// Solitary baselines that missed their goal; their episodes are left
    /// out of the delay averages.
    pub solitary_timeouts: usize,
}

impl MetricsReport {
    /// Averages per-episode metrics. Efficiency fields are `None` without
    /// successes.
    pub fn from_episodes(header: ReportHeader, eps: &[EpisodeMetrics]) -> Self {
        let mean = |xs: &[f64]| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
        let ms: Vec<f64> = eps
            .iter()
            .filter_map(|e| e.makespan.map(f64::from))
            .collect();
        let d: Vec<DelayStats> = eps.iter().filter_map(|e| e.delays).collect();
        let n_successes = eps.iter().filter(|e| e.success).count();
        Self {
            policy: header.policy,
            family: header.family,
            agents: header.agents,
            obstacles: header.obstacles,
            seed: header.seed,
            delay_mode: header.delay_mode,
            sr: if eps.is_empty() {
                0.0
            } else {
                100.0 * n_successes as f64 / eps.len() as f64
            },
            ms: mean(&ms),
            vd: mean(&d.iter().map(|s| s.variance).collect::<Vec<_>>()),
            maxd: mean(&d.iter().map(|s| s.max).collect::<Vec<_>>()),
            meand: mean(&d.iter().map(|s| s.mean).collect::<Vec<_>>()),
            n_episodes: eps.len(),
            n_successes,
            n_delay_episodes: d.len(),
            solitary_timeouts: eps.iter().map(|e| e.solitary_timeouts).sum(),
        }
    }

    /// Pretty JSON with a fixed key order and a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Descriptive fields copied into a report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportHeader {
    pub policy: String,
    pub family: Family,
    pub agents: usize,
    pub obstacles: usize,
    pub seed: u64,
    pub delay_mode: SolitaryMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub policy: PolicyKind,
    pub family: Family,
    pub agents: usize,
    pub obstacles: usize,
    pub episodes: usize,
    pub seed: u64,
    pub delay_mode: SolitaryMode,
    pub env: EnvParams,
    pub workers: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            policy: PolicyKind::Ncf2,
            family: Family::Uniform,
            agents: 8,
            obstacles: 25,
            episodes: 100,
            seed: 0,
            delay_mode: SolitaryMode::Removed,
            env: EnvParams::default(),
            workers: 1,
        }
    }
}

/// Scenario of evaluation episode `k`.
pub fn eval_scenario(cfg: &EvalConfig, k: usize) -> Result<Scenario, EnvError> {
    generate_scenario(
        cfg.family,
        cfg.agents,
        cfg.obstacles,
        mix(&[cfg.seed, EVAL_STREAM, k as u64]),
    )
}

/// Runs evaluation episode `k` in deterministic action mode and measures
/// delays against the solitary policy.
pub fn evaluate_episode(
    models: &dyn Models,
    cfg: &EvalConfig,
    k: usize,
) -> Result<EpisodeMetrics, EnvError> {
    let scenario = eval_scenario(cfg, k)?;
    let pcfg = ProtocolConfig::new(cfg.policy, false, cfg.seed, k as u64);
    let out = run_episode(&scenario, models, &pcfg, &cfg.env, false);
    let mut m = EpisodeMetrics {
        success: out.result.success,
        makespan: None,
        delays: None,
        solitary_timeouts: 0,
    };
    if !m.success {
        return Ok(m);
    }
    m.makespan = out.result.makespan();
    let mu = SolitaryPolicy(models);
    let mut delays = Vec::with_capacity(scenario.n_agents());
    for (i, g) in out.result.goal_times.iter().enumerate() {
        match solitary_rollout(&scenario, i, &mu, cfg.delay_mode, &cfg.env) {
            Ok(l_mu) => {
                delays.push(g.expect("successful episode has goal times") as f64 - l_mu as f64)
            }
            Err(EnvError::SolitaryTimeout { .. }) => m.solitary_timeouts += 1,
            Err(e) => return Err(e),
        }
    }
    if m.solitary_timeouts == 0 {
        m.delays = Some(delay_stats(&delays));
    }
    Ok(m)
}

/// Evaluates `cfg.episodes` fresh episodes, spread over `cfg.workers`
/// threads. The report does not depend on the worker count.
pub fn evaluate<M: Models + Sync>(models: &M, cfg: &EvalConfig) -> Result<MetricsReport, EnvError> {
    let workers = cfg.workers.max(1).min(cfg.episodes.max(1));
    let mut slots: Vec<Option<Result<EpisodeMetrics, EnvError>>> =
        (0..cfg.episodes).map(|_| None).collect();
    std::thread::scope(|s| {
        for (w, chunk) in slots
            .chunks_mut(cfg.episodes.div_ceil(workers).max(1))
            .enumerate()
        {
            let base = w * cfg.episodes.div_ceil(workers).max(1);
            s.spawn(move || {
                for (j, slot) in chunk.iter_mut().enumerate() {
                    *slot = Some(evaluate_episode(models, cfg, base + j));
                }
            });
        }
    });
    let eps = slots
        .into_iter()
        .map(|s| s.expect("every episode evaluated"))
        .collect::<Result<Vec<_>, _>>()?;
    for (k, e) in eps.iter().enumerate() {
        if e.solitary_timeouts > 0 {
            eprintln!(
                "episode {k}: {} solitary baseline(s) missed the goal; excluded from delay metrics",
                e.solitary_timeouts
            );
        }
    }
    Ok(MetricsReport::from_episodes(
        ReportHeader {
            policy: cfg.policy.as_str().into(),
            family: cfg.family,
            agents: cfg.agents,
            obstacles: cfg.obstacles,
            seed: cfg.seed,
            delay_mode: cfg.delay_mode,
        },
        &eps,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::{BundleConfig, PolicyBundle};
    use proptest::prelude::*;

    fn header() -> ReportHeader {
        ReportHeader {
            policy: "dwa".into(),
            family: Family::Uniform,
            agents: 3,
            obstacles: 0,
            seed: 0,
            delay_mode: SolitaryMode::Removed,
        }
    }

    #[test]
    fn delay_fixture() {
        let s = delay_stats(&[2.0, 4.0, 6.0]);
        assert!((s.variance - 8.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.max, 6.0);
        assert_eq!(s.mean, 4.0);
    }

    #[test]
    fn report_averages_successes_only() {
        let ok = |ms, d: &[f64]| EpisodeMetrics {
            success: true,
            makespan: Some(ms),
            delays: Some(delay_stats(d)),
            solitary_timeouts: 0,
        };
        let fail = EpisodeMetrics {
            success: false,
            makespan: None,
            delays: None,
            solitary_timeouts: 0,
        };
        let r = MetricsReport::from_episodes(
            header(),
            &[
                ok(20, &[2.0, 4.0, 6.0]),
                fail.clone(),
                ok(10, &[1.0, 1.0, 1.0]),
                fail,
            ],
        );
        assert_eq!(r.sr, 50.0);
        assert_eq!(r.ms, Some(15.0));
        assert!((r.vd.unwrap() - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.maxd, Some(3.5));
        assert_eq!(r.meand, Some(2.5));
    }

    #[test]
    fn makespan_is_latest_goal_time() {
        let r = crate::env::EpisodeResult {
            success: true,
            goal_times: vec![Some(10), Some(20), Some(15)],
            failure: None,
            steps: 20,
        };
        assert_eq!(r.makespan(), Some(20));
    }

    #[test]
    fn success_rate_percentage() {
        let e = |success| EpisodeMetrics {
            success,
            makespan: success.then_some(5),
            delays: None,
            solitary_timeouts: 0,
        };
        let eps: Vec<_> = (0..100).map(|k| e(k < 87)).collect();
        assert_eq!(MetricsReport::from_episodes(header(), &eps).sr, 87.0);
    }

    #[test]
    fn no_successes_gives_null_fields() {
        let r = MetricsReport::from_episodes(header(), &[]);
        assert_eq!(r.sr, 0.0);
        let j = r.to_json();
        for k in ["MS", "VD", "MAXD", "MEAND"] {
            assert!(j.contains(&format!("\"{k}\": null")), "{j}");
        }
        let keys: Vec<usize> = ["\"policy\"", "\"SR\"", "\"MS\"", "\"n_episodes\""]
            .iter()
            .map(|k| j.find(k).unwrap())
            .collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]), "fixed key order");
    }

    proptest! {
        #[test]
        fn variance_matches_two_pass(d in prop::collection::vec(-50.0f64..150.0, 1..16)) {
            // textbook two-pass variance with compensated second pass
            let n = d.len() as f64;
            let m = d.iter().sum::<f64>() / n;
            let ss: f64 = d.iter().map(|x| (x - m) * (x - m)).sum();
            let comp: f64 = d.iter().map(|x| x - m).sum();
            let oracle = (ss - comp * comp / n) / n;
            prop_assert!((delay_stats(&d).variance - oracle).abs() < 1e-12 * (1.0 + oracle.abs()));
        }
    }

    #[test]
    fn dwa_eval_is_order_and_worker_invariant() {
        let b = PolicyBundle::new(
            BundleConfig {
                hidden: 16,
                key_dim: 8,
                ..BundleConfig::default()
            },
            0,
        );
        let mut cfg = EvalConfig {
            policy: PolicyKind::Dwa,
            agents: 2,
            obstacles: 3,
            episodes: 6,
            seed: 4,
            ..EvalConfig::default()
        };
        let one = evaluate(&b, &cfg).unwrap();
        cfg.workers = 3;
        let three = evaluate(&b, &cfg).unwrap();
        assert_eq!(one.to_json(), three.to_json());
        let rev: Vec<EpisodeMetrics> = (0..6)
            .rev()
            .map(|k| evaluate_episode(&b, &cfg, k).unwrap())
            .collect();
        let fwd = MetricsReport::from_episodes(
            ReportHeader {
                policy: "dwa".into(),
                family: cfg.family,
                agents: 2,
                obstacles: 3,
                seed: 4,
                delay_mode: cfg.delay_mode,
            },
            &rev,
        );
        assert_eq!(fwd.sr, one.sr);
        assert_eq!(fwd.ms, one.ms);
    }
}
