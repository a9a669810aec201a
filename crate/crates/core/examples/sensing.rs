//! Lidar ranges and unicycle kinematics around a single obstacle.

use fairnav::geom2d::{beam_angle, lidar_scan, step_kinematics, LIDAR_BEAMS};
use fairnav::{Action, Circle, Pose, WorldMap};

fn main() {
    let mut world = WorldMap::empty(128.0);
    world.obstacles.push(Circle::new(70.0, 64.0, 3.0));
    let pose = Pose::new(64.0, 64.0, 0.0);
    let scan = lidar_scan(pose, &world, &[]);
    for k in (0..LIDAR_BEAMS).step_by(4) {
        println!(
            "beam {k:2} at {:6.1} deg: {:5.2}",
            beam_angle(k).to_degrees(),
            scan[k]
        );
    }
    let mut p = Pose::new(10.0, 10.0, 0.0);
    for t in 1..=4 {
        p = step_kinematics(p, Action::new(6.4, std::f64::consts::FRAC_PI_4));
        println!("t={t}: x {:.3} y {:.3} theta {:.3}", p.x, p.y, p.theta);
    }
}
