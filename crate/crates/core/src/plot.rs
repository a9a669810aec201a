//! SVG rendering of a trace: obstacles, start and goal markers,
//! trajectories, stop decisions and terminal events.

use crate::env::AgentStatus;
use crate::io::Trace;
use std::fmt::Write as _;

const SIZE: f64 = 640.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

/// Renders `trace` as a standalone SVG document. The output depends only on
/// the trace.
pub fn render_svg(trace: &Trace) -> String {
    let s = &trace.scenario;
    let l = s.world.map_size;
    let k = SIZE / l;
    let px = |x: f64| x * k;
    let py = |y: f64| SIZE - y * k;
    let r = s.world.robot_radius() * k;
    let mut o = String::new();
    writeln!(
        o,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    )
    .unwrap();
    writeln!(
        o,
        r##"<rect x="0" y="0" width="{SIZE}" height="{SIZE}" fill="white" stroke="black"/>"##
    )
    .unwrap();
    for c in &s.world.obstacles {
        writeln!(
            o,
            r##"<circle class="obstacle" cx="{:.2}" cy="{:.2}" r="{:.2}" fill="#555555"/>"##,
            px(c.cx),
            py(c.cy),
            c.radius * k
        )
        .unwrap();
    }
    for i in 0..s.n_agents() {
        let col = PALETTE[i % PALETTE.len()];
        let g = s.goals[i];
        writeln!(
            o,
            r#"<circle class="goal" cx="{:.2}" cy="{:.2}" r="{:.2}" fill="none" stroke="{col}" stroke-dasharray="4 3"/>"#,
            px(g[0]),
            py(g[1]),
            s.world.goal_radius() * k
        )
        .unwrap();
        let st = s.starts[i];
        writeln!(
            o,
            r#"<rect class="start" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{col}"/>"#,
            px(st.x) - r,
            py(st.y) - r,
            2.0 * r,
            2.0 * r
        )
        .unwrap();

        let rows: Vec<_> = trace.agent_rows(i).collect();
        if rows.is_empty() {
            continue;
        }
        let pts: Vec<String> = rows
            .iter()
            .map(|p| format!("{:.2},{:.2}", px(p.x), py(p.y)))
            .collect();
        writeln!(
            o,
            r#"<polyline class="path" points="{}" fill="none" stroke="{col}" stroke-width="2"/>"#,
            pts.join(" ")
        )
        .unwrap();
        for p in rows.iter().filter(|p| p.t > 0 && p.f == 0) {
            writeln!(
                o,
                r##"<circle class="stop" cx="{:.2}" cy="{:.2}" r="{:.2}" fill="#999999" fill-opacity="0.6"/>"##,
                px(p.x),
                py(p.y),
                r
            )
            .unwrap();
        }
        let last = rows[rows.len() - 1];
        let (x, y) = (px(last.x), py(last.y));
        match last.status {
            AgentStatus::Crashed => {
                let d = r * 1.2;
                writeln!(
                    o,
                    r#"<path class="crash" d="M{:.2},{:.2} L{:.2},{:.2} M{:.2},{:.2} L{:.2},{:.2}" stroke="black" stroke-width="3"/>"#,
                    x - d,
                    y - d,
                    x + d,
                    y + d,
                    x - d,
                    y + d,
                    x + d,
                    y - d
                )
                .unwrap();
            }
            AgentStatus::Active => {
                let d = r * 1.4;
                writeln!(
                    o,
                    r#"<polygon class="timeout" points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="none" stroke="black" stroke-width="2"/>"#,
                    x,
                    y - d,
                    x - d,
                    y + d,
                    x + d,
                    y + d
                )
                .unwrap();
            }
            AgentStatus::AtGoal => {}
        }
    }
    o.push_str("</svg>\n");
    o
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvParams, Family, Scenario};
    use crate::geom2d::{Pose, WorldMap};
    use crate::ncf2::{run_episode, PolicyKind, ProtocolConfig};
    use crate::nets::{BundleConfig, PolicyBundle};

    fn one_agent_trace() -> Trace {
        let s = Scenario {
            family: Family::Uniform,
            n_obstacles: 0,
            seed: 0,
            world: WorldMap::empty(128.0),
            starts: vec![Pose::new(20.0, 20.0, 0.7)],
            goals: vec![[60.0, 55.0]],
        };
        let b = PolicyBundle::new(
            BundleConfig {
                hidden: 8,
                key_dim: 4,
                ..BundleConfig::default()
            },
            0,
        );
        let out = run_episode(
            &s,
            &b,
            &ProtocolConfig::new(PolicyKind::Dwa, false, 0, 0),
            &EnvParams::default(),
            false,
        );
        Trace {
            scenario: s,
            rows: out.trace,
        }
    }

    #[test]
    fn single_agent_plot_has_one_path_from_start_to_goal() {
        let t = one_agent_trace();
        let svg = render_svg(&t);
        assert_eq!(svg.matches("class=\"path\"").count(), 1);
        assert_eq!(svg.matches("class=\"start\"").count(), 1);
        assert_eq!(svg.matches("class=\"goal\"").count(), 1);
        assert!(!svg.contains("class=\"crash\"") && !svg.contains("class=\"timeout\""));
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert_eq!(render_svg(&t), svg);
    }

    #[test]
    fn stops_crashes_and_timeouts_are_marked() {
        let mut t = one_agent_trace();
        let n = t.rows.len();
        t.rows[1].f = 0;
        t.rows[n - 1].status = AgentStatus::Crashed;
        let svg = render_svg(&t);
        assert_eq!(svg.matches("class=\"stop\"").count(), 1);
        assert!(svg.contains("class=\"crash\""));
        t.rows[n - 1].status = AgentStatus::Active;
        assert!(render_svg(&t).contains("class=\"timeout\""));
    }
}
