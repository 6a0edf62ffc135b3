//! Fixtures shared by the benchmarks.

use nsb_avoid::{sample_path, Configuration, ControllerGains, Robot, ScenarioFile, Scene, Target};

const CASE4: &str = include_str!("../../../scenarios/case4.json");

/// One control period's inputs taken from the fly-by scenario at a moment
/// when the projectile is inside the rest length of several arm sensors.
pub struct Fixture {
    pub robot: Robot,
    pub q: Configuration,
    pub scene: Scene,
    pub t: f64,
    pub target: Target,
    pub gains: ControllerGains,
}

pub fn fly_by() -> Fixture {
    let scenario = ScenarioFile::from_json(CASE4)
        .and_then(|f| f.build())
        .expect("bundled scenario is valid");
    let t = 8.0;
    Fixture {
        target: sample_path(&scenario.path, t),
        robot: scenario.robot,
        q: scenario.initial_q,
        scene: scenario.scene,
        t,
        gains: scenario.gains,
    }
}
