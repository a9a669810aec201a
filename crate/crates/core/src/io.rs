//! Text formats for scenarios and trajectory traces.
//!
//! A scenario file is a header of `key value` lines followed by one
//! `obstacle cx cy r` line per obstacle and one `agent x y theta gx gy`
//! line per agent. A trace file is a scenario followed by a `trace` line,
//! a CSV header and one row per agent and step. Numbers are written in
//! shortest round-trip form, so parsing a written file gives back the
//! exact values.

use crate::env::{AgentStatus, Family, Scenario};
use crate::geom2d::{Circle, Pose, WorldMap};
use crate::ncf2::TraceRow;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn perr(line: usize, message: impl Into<String>) -> IoError {
    IoError::Parse {
        line,
        message: message.into(),
    }
}

pub fn read_file(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_file(path: &Path, text: &str) -> Result<(), IoError> {
    std::fs::write(path, text).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

const SCENARIO_MAGIC: &str = "# fairnav scenario v1";
const TRACE_HEADER: &str = "t,agent,x,y,theta,f,v,w,r_hat,r_tilde,status";

pub fn scenario_to_text(s: &Scenario) -> String {
    let mut o = String::new();
    writeln!(o, "{SCENARIO_MAGIC}").unwrap();
    writeln!(o, "family {}", s.family).unwrap();
    writeln!(o, "agents {}", s.n_agents()).unwrap();
    writeln!(o, "obstacles {}", s.n_obstacles).unwrap();
    writeln!(o, "seed {}", s.seed).unwrap();
    writeln!(o, "map_size {}", s.world.map_size).unwrap();
    for c in &s.world.obstacles {
        writeln!(o, "obstacle {} {} {}", c.cx, c.cy, c.radius).unwrap();
    }
    for (p, g) in s.starts.iter().zip(&s.goals) {
        writeln!(o, "agent {} {} {} {} {}", p.x, p.y, p.theta, g[0], g[1]).unwrap();
    }
    o
}

fn num<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T, IoError> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| perr(line, format!("expected {what}")))
}

/// Parses scenario lines up to a line equal to `stop`.
fn parse_scenario_lines<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    stop: Option<&str>,
) -> Result<Scenario, IoError> {
    let mut family = None;
    let mut agents: Option<usize> = None;
    let mut n_obstacles: Option<usize> = None;
    let mut seed = None;
    let mut map_size = None;
    let mut obstacles = Vec::new();
    let mut starts = Vec::new();
    let mut goals = Vec::new();
    let mut last = 0;
    let mut seen_magic = false;
    for (k, raw) in lines.by_ref() {
        let line = k + 1;
        last = line;
        let l = raw.trim();
        if !seen_magic {
            if l != SCENARIO_MAGIC {
                return Err(perr(line, format!("expected {SCENARIO_MAGIC:?}")));
            }
            seen_magic = true;
            continue;
        }
        if Some(l) == stop {
            break;
        }
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let mut tok = l.split_whitespace();
        let key = tok.next().unwrap();
        match key {
            "family" => {
                family = Some(
                    tok.next()
                        .unwrap_or("")
                        .parse::<Family>()
                        .map_err(|e| perr(line, e))?,
                )
            }
            "agents" => agents = Some(num(tok.next(), line, "agent count")?),
            "obstacles" => n_obstacles = Some(num(tok.next(), line, "obstacle count")?),
            "seed" => seed = Some(num(tok.next(), line, "seed")?),
            "map_size" => {
                let m: f64 = num(tok.next(), line, "map size")?;
                if !(m > 0.0 && m.is_finite()) {
                    return Err(perr(line, "map size must be positive"));
                }
                map_size = Some(m)
            }
            "obstacle" => {
                let cx = num(tok.next(), line, "obstacle x")?;
                let cy = num(tok.next(), line, "obstacle y")?;
                let r: f64 = num(tok.next(), line, "obstacle radius")?;
                if !(r > 0.0) {
                    return Err(perr(line, "obstacle radius must be positive"));
                }
                obstacles.push(Circle::new(cx, cy, r));
            }
            "agent" => {
                let x = num(tok.next(), line, "start x")?;
                let y = num(tok.next(), line, "start y")?;
                let th = num(tok.next(), line, "start heading")?;
                let gx = num(tok.next(), line, "goal x")?;
                let gy = num(tok.next(), line, "goal y")?;
                starts.push(Pose { x, y, theta: th });
                goals.push([gx, gy]);
            }
            other => return Err(perr(line, format!("unknown record {other:?}"))),
        }
        if tok.next().is_some() {
            return Err(perr(line, "trailing fields"));
        }
    }
    let missing = |what: &str| perr(last, format!("missing {what} header"));
    let agents = agents.ok_or_else(|| missing("agents"))?;
    if starts.len() != agents {
        return Err(perr(
            last,
            format!("header says {agents} agents, found {}", starts.len()),
        ));
    }
    if agents == 0 {
        return Err(perr(last, "a scenario needs at least one agent"));
    }
    let mut world = WorldMap::empty(map_size.ok_or_else(|| missing("map_size"))?);
    world.obstacles = obstacles;
    Ok(Scenario {
        family: family.ok_or_else(|| missing("family"))?,
        n_obstacles: n_obstacles.ok_or_else(|| missing("obstacles"))?,
        seed: seed.ok_or_else(|| missing("seed"))?,
        world,
        starts,
        goals,
    })
}

pub fn parse_scenario(text: &str) -> Result<Scenario, IoError> {
    parse_scenario_lines(&mut text.lines().enumerate(), None)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, IoError> {
    parse_scenario(&read_file(path)?)
}

/// A recorded episode: the scenario and one row per agent and step.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub scenario: Scenario,
    pub rows: Vec<TraceRow>,
}

impl Trace {
    /// Rows of one agent in time order.
    pub fn agent_rows(&self, agent: usize) -> impl Iterator<Item = &TraceRow> {
        self.rows.iter().filter(move |r| r.agent == agent)
    }
}

pub fn trace_to_text(t: &Trace) -> String {
    let mut o = scenario_to_text(&t.scenario);
    o.push_str("trace\n");
    o.push_str(TRACE_HEADER);
    o.push('\n');
    for r in &t.rows {
        writeln!(
            o,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.t,
            r.agent,
            r.x,
            r.y,
            r.theta,
            r.f,
            r.v,
            r.w,
            r.r_hat,
            r.r_tilde,
            r.status.as_str()
        )
        .unwrap();
    }
    o
}

pub fn parse_trace(text: &str) -> Result<Trace, IoError> {
    let mut lines = text.lines().enumerate();
    let scenario = parse_scenario_lines(&mut lines, Some("trace"))?;
    match lines.next() {
        Some((_, h)) if h.trim() == TRACE_HEADER => {}
        Some((k, _)) => return Err(perr(k + 1, format!("expected {TRACE_HEADER:?}"))),
        None => return Err(perr(text.lines().count(), "missing trace section")),
    }
    let n = scenario.n_agents();
    let mut rows = Vec::new();
    for (k, raw) in lines {
        let line = k + 1;
        let l = raw.trim();
        if l.is_empty() {
            continue;
        }
        let f: Vec<&str> = l.split(',').collect();
        if f.len() != 11 {
            return Err(perr(line, format!("expected 11 fields, found {}", f.len())));
        }
        let row = TraceRow {
            t: num(Some(f[0]), line, "step")?,
            agent: num(Some(f[1]), line, "agent")?,
            x: num(Some(f[2]), line, "x")?,
            y: num(Some(f[3]), line, "y")?,
            theta: num(Some(f[4]), line, "theta")?,
            f: num(Some(f[5]), line, "decision")?,
            v: num(Some(f[6]), line, "v")?,
            w: num(Some(f[7]), line, "w")?,
            r_hat: num(Some(f[8]), line, "r_hat")?,
            r_tilde: num(Some(f[9]), line, "r_tilde")?,
            status: AgentStatus::parse(f[10])
                .ok_or_else(|| perr(line, format!("unknown status {:?}", f[10])))?,
        };
        if row.agent >= n {
            return Err(perr(line, format!("agent {} out of range", row.agent)));
        }
        if row.f > 1 {
            return Err(perr(line, "decision must be 0 or 1"));
        }
        rows.push(row);
    }
    Ok(Trace { scenario, rows })
}

pub fn load_trace(path: &Path) -> Result<Trace, IoError> {
    parse_trace(&read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{generate_scenario, EnvParams};
    use crate::ncf2::{run_episode, PolicyKind, ProtocolConfig};
    use crate::nets::{BundleConfig, PolicyBundle};

    #[test]
    fn scenario_round_trips_exactly() {
        for seed in 0..5 {
            let s = generate_scenario(Family::Corner, 4, 10, seed).unwrap();
            let text = scenario_to_text(&s);
            let back = parse_scenario(&text).unwrap();
            assert_eq!(back, s);
            assert_eq!(scenario_to_text(&back), text);
        }
    }

    #[test]
    fn trace_round_trips_exactly() {
        let s = generate_scenario(Family::Uniform, 3, 4, 2).unwrap();
        let b = PolicyBundle::new(
            BundleConfig {
                hidden: 16,
                key_dim: 8,
                ..BundleConfig::default()
            },
            1,
        );
        let out = run_episode(
            &s,
            &b,
            &ProtocolConfig::new(PolicyKind::Ncf2, true, 3, 0),
            &EnvParams::default(),
            false,
        );
        let t = Trace {
            scenario: s,
            rows: out.trace,
        };
        assert_eq!(parse_trace(&trace_to_text(&t)).unwrap(), t);
    }

    #[test]
    fn bad_input_reports_the_line() {
        let s = generate_scenario(Family::Uniform, 1, 0, 0).unwrap();
        let text = scenario_to_text(&s).replace("agents 1", "agents 2");
        assert!(parse_scenario(&text).is_err());
        let text = scenario_to_text(&s) + "wall 1 2\n";
        match parse_scenario(&text) {
            Err(IoError::Parse { line, .. }) => assert_eq!(line, 8),
            other => panic!("{other:?}"),
        }
        assert!(parse_scenario("family Uniform\n").is_err());
    }
}
